use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aosim_cli::config::{
    AnalyzeBlock, AnalyzeMode, Command as Cmd, ContainerSpec, DomainBlock, IntegratorBlock, ModelBlock, ModelKind,
    SamplerBlock, ScheduleBlock,
};
use aosim_cli::{config_hash, parse_config, render, Overrides, RunConfig};
use proptest::prelude::*;
use tempfile::TempDir;

const SIMULATE: &str = r#"
command = "simulate"
seed = 42

[domain]
dim = 2
sphere_radius = 0.5
particle_radius = 0.075
container = "periodic"
sides = [5.0, 5.0]

[model]
sphere_activity = 2.0
particle_activity = 2.0

[integrator]
step = 1e-3
horizon = 0.05
sample_every = 10

[sampler]
burn_in = 5000
"#;

fn aosim(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let path = dir.join("run.toml");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_aosim"))
        .arg("--config")
        .arg(&path)
        .args(extra)
        .output()
        .unwrap()
}

fn out_arg(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn radius_order_violation_exits_one() {
    let tmp = TempDir::new().unwrap();
    let text = SIMULATE
        .replace("particle_radius = 0.075", "particle_radius = 0.6")
        .replace("sphere_activity = 2.0", "sphere_activity = -1.0");
    let o = aosim(tmp.path(), &text, &[]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("0 < particle_radius < sphere_radius"), "{e}");
    assert!(e.contains("model.sphere_activity must be a non-negative number"), "{e}");
}

#[test]
fn seed_is_mandatory_and_can_come_from_the_flag() {
    let tmp = TempDir::new().unwrap();
    let text = SIMULATE.replace("seed = 42\n", "");
    let o = aosim(tmp.path(), &text, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing required key seed"));
    let out = out_arg(tmp.path(), "a");
    let o = aosim(tmp.path(), &text, &["--seed", "42", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("# seed = 42"));
}

#[test]
fn strict_mode_rejects_unknown_keys() {
    let tmp = TempDir::new().unwrap();
    let text = format!("{SIMULATE}\n[sampler2]\nx = 1\n");
    let out = out_arg(tmp.path(), "a");
    let o = aosim(tmp.path(), &text, &["--strict", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown key sampler2"));
    let o = aosim(tmp.path(), &text, &["--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("warning: unknown key sampler2"));
}

#[test]
fn zero_horizon_gives_one_frame() {
    let tmp = TempDir::new().unwrap();
    let out = out_arg(tmp.path(), "a");
    let text = SIMULATE.replace("horizon = 0.05", "horizon = 0.0");
    let o = aosim(tmp.path(), &text, &["--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let traj = fs::read_to_string(out.join("trajectory.txt")).unwrap();
    assert_eq!(traj.lines().filter(|l| l.starts_with("frame ")).count(), 1);
    let file = aosim_core::io::parse_trajectory(&traj).unwrap();
    assert_eq!(file.times, vec![0.0]);
}

#[test]
fn reruns_are_byte_identical_and_headers_carry_hash_and_seed() {
    let tmp = TempDir::new().unwrap();
    let a = out_arg(tmp.path(), "a");
    let b = out_arg(tmp.path(), "b");
    let oa = aosim(tmp.path(), SIMULATE, &["--out", a.to_str().unwrap()]);
    let ob = aosim(tmp.path(), SIMULATE, &["--out", b.to_str().unwrap(), "--workers", "1"]);
    assert_eq!(oa.status.code(), Some(0), "{}", stderr(&oa));
    assert_eq!(ob.status.code(), Some(0), "{}", stderr(&ob));
    let cfg = parse_config(SIMULATE, true, &Overrides::default()).unwrap().config;
    let hash = config_hash(&cfg);
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 5);
    for name in names {
        let x = fs::read(a.join(&name)).unwrap();
        let y = fs::read(b.join(&name)).unwrap();
        assert!(x == y, "{name:?} differs between runs");
        let text = String::from_utf8(x).unwrap();
        assert!(text.contains(&format!("# config_hash = {hash}")), "{name:?}");
        assert!(text.contains("# seed = 42"), "{name:?}");
    }
}

#[test]
fn sample_runs_are_reproducible_across_worker_counts() {
    let tmp = TempDir::new().unwrap();
    let text = SIMULATE
        .replace("\"simulate\"", "\"sample\"")
        .replace("burn_in = 5000", "burn_in = 5000\nthin = 50\ncount = 40\nchains = 3\nbatches = 4");
    let a = out_arg(tmp.path(), "a");
    let b = out_arg(tmp.path(), "b");
    assert_eq!(aosim(tmp.path(), &text, &["--out", a.to_str().unwrap(), "--workers", "1"]).status.code(), Some(0));
    assert_eq!(aosim(tmp.path(), &text, &["--out", b.to_str().unwrap()]).status.code(), Some(0));
    for name in ["report.txt", "draws.txt", "snapshot.txt"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

const BOUNDS: &str = r#"
command = "verify-bounds"
seed = 6

[domain]
dim = 2
sphere_radius = 0.5
particle_radius = 0.075
container = "open"

[model]
sphere_activity = 0.1
particle_activity = 1.0

[schedule]
radius = 2.0
eps = 0.1
replicas = 20000
kappas = [1, 2]
burn_in = 1000
fast_paths = 2000
"#;

#[test]
fn verify_bounds_reports_the_chain_bound_with_an_interval() {
    let tmp = TempDir::new().unwrap();
    let out = out_arg(tmp.path(), "a");
    let o = aosim(tmp.path(), BOUNDS, &["--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    let line = report.lines().find(|l| l.starts_with("summary.kappa_2 = ")).unwrap();
    assert!(line.contains("bound 0.004352"), "{line}");
    assert!(line.contains("interval ["), "{line}");
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("verify-bounds: chain bound")));
    assert!(stdout.lines().any(|l| l.starts_with("verify-bounds: Brownian oscillation bound")));
}

#[test]
fn an_uncertifiable_budget_exits_three() {
    // 200 trials cannot push the 3-sigma upper limit below the kappa = 3 bound
    let tmp = TempDir::new().unwrap();
    let out = out_arg(tmp.path(), "a");
    let text = BOUNDS.replace("replicas = 20000", "replicas = 200").replace("kappas = [1, 2]", "kappas = [3]");
    let o = aosim(tmp.path(), &text, &["--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(fs::read_to_string(out.join("report.txt")).unwrap().contains("pass = false"));
}

#[test]
fn runtime_failures_exit_two() {
    let tmp = TempDir::new().unwrap();
    let out = out_arg(tmp.path(), "a");
    let text = SIMULATE.replace("sample_every = 10", "sample_every = 10\ninitial = \"no/such/file.txt\"");
    let o = aosim(tmp.path(), &text, &["--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no/such/file.txt"));
}

#[test]
fn failed_integration_keeps_the_partial_trajectory() {
    let tmp = TempDir::new().unwrap();
    let out = out_arg(tmp.path(), "a");
    let text = SIMULATE
        .replace("step = 1e-3", "step = 1e-2\nmax_sweeps = 1")
        .replace("horizon = 0.05", "horizon = 2.0")
        .replace("sphere_activity = 2.0", "sphere_activity = 4.0");
    let o = aosim(tmp.path(), &text, &["--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(stderr(&o).contains("did not converge"));
    let traj = fs::read_to_string(out.join("trajectory.txt")).unwrap();
    let file = aosim_core::io::parse_trajectory(&traj).unwrap();
    assert!(!file.times.is_empty() && *file.times.last().unwrap() < 2.0);
    assert!(!out.join("snapshot.txt").exists());
}

#[test]
fn simulation_continues_from_a_snapshot() {
    let tmp = TempDir::new().unwrap();
    let a = out_arg(tmp.path(), "a");
    let b = out_arg(tmp.path(), "b");
    assert_eq!(aosim(tmp.path(), SIMULATE, &["--out", a.to_str().unwrap()]).status.code(), Some(0));
    let snap = a.join("snapshot.txt");
    let text = SIMULATE.replace(
        "sample_every = 10",
        &format!("sample_every = 10\ninitial = {:?}", snap.to_str().unwrap()),
    );
    let o = aosim(tmp.path(), &text, &["--out", b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let first = aosim_core::io::parse_snapshot(&fs::read_to_string(&snap).unwrap()).unwrap();
    let start = aosim_core::io::parse_snapshot(&fs::read_to_string(b.join("initial.txt")).unwrap()).unwrap();
    assert_eq!(first.config, start.config);
}

fn finite(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    lo..hi
}

fn arb_config() -> impl Strategy<Value = RunConfig> {
    let domain = (1usize..4, finite(0.1, 2.0), finite(0.05, 0.95), finite(0.1, 3.0), 0usize..3, finite(1.0, 20.0))
        .prop_map(|(dim, rs, frac, sigma, c, l)| DomainBlock {
            dim,
            sphere_radius: rs,
            particle_radius: rs * frac,
            sigma,
            container: match c {
                0 => ContainerSpec::Open,
                1 => ContainerSpec::Periodic { sides: vec![l; dim] },
                _ => ContainerSpec::Ball { radius: l },
            },
        });
    let model = (finite(0.0, 10.0), finite(0.0, 10.0), 0usize..4).prop_map(|(zs, zp, k)| ModelBlock {
        sphere_activity: zs,
        particle_activity: zp,
        kind: [ModelKind::TwoType, ModelKind::OneType, ModelKind::Penalised, ModelKind::Depletion][k],
    });
    let numbers = (
        1u64..1_000_000,
        1u64..1000,
        1usize..1000,
        1usize..8,
        2usize..20,
        1usize..100,
        0usize..50,
        prop::collection::vec(1usize..6, 1..4),
    );
    let extras = (
        finite(1.0, 30.0),
        finite(0.01, 1.0),
        finite(0.01, 1.0),
        finite(0.1, 10.0),
        finite(0.0, 5.0),
        prop::option::of("[a-z]{1,8}\\.txt"),
        0usize..3,
        any::<u64>(),
    );
    (domain, model, numbers, extras).prop_map(|(domain, model, n, x)| {
        let (burn, thin, count, chains, batches, every, blocks, kappas) = n;
        let (radius, eps, delta, fast_eps, rho, path, mode, seed) = x;
        let step = 1e-4 * domain.sphere_radius * domain.sphere_radius;
        let cmd = match (&domain.container, model.kind) {
            (ContainerSpec::Periodic { .. }, ModelKind::TwoType | ModelKind::OneType) => Cmd::Sample,
            (ContainerSpec::Ball { .. }, ModelKind::Penalised) => Cmd::Sample,
            (ContainerSpec::Periodic { .. }, ModelKind::Depletion) => Cmd::Simulate,
            _ => Cmd::VerifyBounds,
        };
        RunConfig {
            command: cmd,
            seed,
            output: format!("out/{}", seed % 7),
            integrator: IntegratorBlock {
                step,
                max_sweeps: 1000,
                tolerance: 1e-10 * domain.sphere_radius,
                horizon: (blocks * every) as f64 * step,
                sample_every: every,
                initial: path.clone(),
            },
            domain,
            model,
            sampler: SamplerBlock {
                burn_in: burn,
                thin,
                count,
                chains,
                batches,
            },
            schedule: ScheduleBlock {
                radius,
                eps,
                replicas: count,
                kappas,
                burn_in: burn,
                fast_delta: delta,
                fast_eps,
                fast_paths: count,
                fast_substeps: every,
                rho,
            },
            analyze: AnalyzeBlock {
                mode: [AnalyzeMode::Trajectory, AnalyzeMode::Percolation, AnalyzeMode::Packing][mode],
                input: path,
                ladder: vec![1.0, 10.0 + rho, 1e3],
                particle_activities: vec![0.0, fast_eps],
                base_side: radius,
                multiples: vec![1, 2],
                slack: eps,
            },
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn render_then_parse_is_identity(c in arb_config()) {
        let back = parse_config(&render(&c), true, &Overrides::default());
        prop_assert!(back.is_ok(), "{:?}\n{}", back.err(), render(&c));
        let back = back.unwrap();
        prop_assert!(back.warnings.is_empty());
        prop_assert_eq!(back.config, c);
    }
}
