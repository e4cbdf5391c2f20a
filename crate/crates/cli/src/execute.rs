//! Dispatch of a validated configuration to the core library.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use aosim_core::depletion::DepletionParams;
use aosim_core::diagnostics::{
    detect_chain, detect_fast, packing_experiment, percolation_experiment, verify_chain_bound, verify_fast_bound,
    verify_separation, BadPathSchedule, ChainBoundSetup, FastBoundSetup, PackingSetup, PercolationSetup,
};
use aosim_core::dynamics::{self, DynamicsModel, IntegratorSettings, LocalTimeLedger, Scheme, TrajectoryRecord};
use aosim_core::geometry::{Container, SimulationDomain, TwoTypeConfiguration};
use aosim_core::gibbs::{marginal_equivalence_experiment, sample, EnergyBackend, EquivalenceSetup, GibbsModelParams, MoveKind, Window};
use aosim_core::io;
use aosim_core::par::{map_indexed, replica_rng, Execution};
use aosim_core::penalisation::PenalisationField;
use aosim_core::report::{format_f64, Report};
use aosim_core::stats::{batch_means, Estimate};

use crate::config::{config_hash, AnalyzeMode, Command, ContainerSpec, ModelKind, RunConfig};

/// Runtime failure; maps to exit status 2.
#[derive(Debug, Clone, PartialEq)]
pub struct RunError(pub String);

impl Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for RunError {}

fn rt<E: Display>(context: &str) -> impl Fn(E) -> RunError + '_ {
    move |e| RunError(format!("{context}: {e}"))
}

/// Result of a completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    /// False when a verification report failed; maps to exit status 3.
    pub passed: bool,
    pub artifacts: Vec<PathBuf>,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    exec: Execution,
    meta: Vec<(String, String)>,
    out_dir: PathBuf,
    artifacts: Vec<PathBuf>,
    log: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn say(&mut self, line: impl Display) {
        let _ = writeln!(self.log, "{}: {line}", self.cfg.command.name());
    }

    fn write(&mut self, name: &str, text: &str) -> Result<(), RunError> {
        let path = self.out_dir.join(name);
        fs::write(&path, text).map_err(rt(&format!("writing {}", path.display())))?;
        self.artifacts.push(path);
        Ok(())
    }

    fn write_report(&mut self, report: &Report) -> Result<(), RunError> {
        let mut text = String::new();
        for (k, v) in &self.meta {
            text.push_str(&format!("# {k} = {v}\n"));
        }
        text.push_str(&report.to_string());
        self.write("report.txt", &text)
    }
}

/// Artifact header entries: config hash, seed and command.
pub fn artifact_meta(cfg: &RunConfig) -> Vec<(String, String)> {
    vec![
        ("config_hash".into(), config_hash(cfg)),
        ("seed".into(), cfg.seed.to_string()),
        ("command".into(), cfg.command.name().into()),
    ]
}

/// Runs `cfg`, writing artifacts under `cfg.output` and one summary line per
/// stage to `log`.
pub fn execute(cfg: &RunConfig, exec: Execution, log: &mut dyn Write) -> Result<Completion, RunError> {
    let out_dir = PathBuf::from(&cfg.output);
    fs::create_dir_all(&out_dir).map_err(rt(&format!("creating {}", out_dir.display())))?;
    let mut ctx = Ctx {
        cfg,
        exec,
        meta: artifact_meta(cfg),
        out_dir,
        artifacts: Vec::new(),
        log,
    };
    let passed = match cfg.command {
        Command::Simulate => simulate(&mut ctx)?,
        Command::Sample => run_sample(&mut ctx)?,
        Command::Equivalence => equivalence(&mut ctx)?,
        Command::VerifyBounds => verify_bounds(&mut ctx)?,
        Command::Analyze => analyze(&mut ctx)?,
    };
    let n = ctx.artifacts.len();
    let dir = ctx.out_dir.display().to_string();
    ctx.say(format!("wrote {n} artifact(s) to {dir}"));
    Ok(Completion {
        passed,
        artifacts: ctx.artifacts,
    })
}

fn domain(cfg: &RunConfig) -> Result<SimulationDomain, RunError> {
    let d = &cfg.domain;
    let container = match &d.container {
        ContainerSpec::Open => Container::Open,
        ContainerSpec::Periodic { sides } => Container::Periodic { sides: sides.clone() },
        ContainerSpec::Ball { radius } => Container::Ball {
            radius: *radius,
            exterior: TwoTypeConfiguration::empty(d.dim),
        },
    };
    SimulationDomain::new(d.dim, d.sphere_radius, d.particle_radius, d.sigma, container).map_err(rt("domain"))
}

fn periodic_window(cfg: &RunConfig) -> Result<Window, RunError> {
    match &cfg.domain.container {
        ContainerSpec::Periodic { sides } => Ok(Window::Periodic { sides: sides.clone() }),
        _ => Err(RunError("a periodic container is required".into())),
    }
}

fn sampler_params(cfg: &RunConfig, dom: &SimulationDomain, kind: ModelKind) -> Result<GibbsModelParams, RunError> {
    let (zs, zp) = (cfg.model.sphere_activity, cfg.model.particle_activity);
    Ok(match kind {
        ModelKind::Penalised => GibbsModelParams::penalised(dom, zs, zp).map_err(rt("penalised model"))?,
        ModelKind::TwoType => GibbsModelParams::two_type(dom, zs, zp, periodic_window(cfg)?),
        ModelKind::OneType | ModelKind::Depletion => {
            GibbsModelParams::one_type(dom, zs, zp, periodic_window(cfg)?, EnergyBackend::Pairwise)
        }
    })
}

/// Initial state from the snapshot file, or a sampler draw.
fn initial_state(ctx: &mut Ctx, dom: &mut SimulationDomain) -> Result<TwoTypeConfiguration, RunError> {
    let cfg = ctx.cfg;
    if let Some(path) = &cfg.integrator.initial {
        let text = fs::read_to_string(path).map_err(rt(&format!("reading {path}")))?;
        let snap = io::parse_snapshot(&text).map_err(rt(path))?;
        let d = &snap.domain;
        if d.dim() != dom.dim() || d.sphere_radius() != dom.sphere_radius() || d.particle_radius() != dom.particle_radius() {
            return Err(RunError(format!("{path}: dimension or radii differ from the configuration")));
        }
        if let (Container::Ball { radius: a, exterior }, Container::Ball { radius: b, .. }) = (d.container(), dom.container()) {
            if a != b {
                return Err(RunError(format!("{path}: ball radius {a} differs from the configuration ({b})")));
            }
            *dom = dom
                .with_container(Container::Ball {
                    radius: *b,
                    exterior: exterior.clone(),
                })
                .map_err(rt(path))?;
        }
        ctx.say(format!(
            "initial state from {path}: {} spheres, {} particles",
            snap.config.spheres.len(),
            snap.config.particles.len()
        ));
        return Ok(snap.config);
    }
    let kind = match (cfg.model.kind, &cfg.domain.container) {
        (ModelKind::Depletion, _) => ModelKind::Depletion,
        (_, ContainerSpec::Ball { .. }) => ModelKind::Penalised,
        _ => ModelKind::TwoType,
    };
    let params = sampler_params(cfg, dom, kind)?;
    let mut rng = replica_rng(cfg.seed, 0);
    let run = sample(&params, cfg.sampler.burn_in, 1, 1, &mut rng).map_err(rt("initial sampler"))?;
    let state = run.configurations.into_iter().next().expect("one draw");
    ctx.say(format!(
        "initial state drawn after {} sampler moves: {} spheres, {} particles",
        cfg.sampler.burn_in,
        state.spheres.len(),
        state.particles.len()
    ));
    Ok(state)
}

fn simulate(ctx: &mut Ctx) -> Result<bool, RunError> {
    let cfg = ctx.cfg;
    let mut dom = domain(cfg)?;
    let mut initial = initial_state(ctx, &mut dom)?;
    let (model, scheme) = match cfg.model.kind {
        ModelKind::Depletion => {
            initial.particles = aosim_core::geometry::PointSet::new(dom.dim());
            let p = DepletionParams::from_domain(&dom, cfg.model.particle_activity).map_err(rt("depletion"))?;
            (DynamicsModel::Depletion(p), Scheme::DepletionGradient)
        }
        _ => {
            let field = match dom.container() {
                Container::Ball { .. } => Some(PenalisationField::new(&dom).map_err(rt("penalisation"))?),
                _ => None,
            };
            (DynamicsModel::TwoType { field }, Scheme::TwoTypePenalised)
        }
    };
    let i = &cfg.integrator;
    let settings = IntegratorSettings {
        step: i.step,
        max_sweeps: i.max_sweeps,
        tolerance: i.tolerance,
        seed: cfg.seed,
        scheme,
    };
    let mut snap_meta = ctx.meta.clone();
    snap_meta.push(("frame".into(), "initial".into()));
    ctx.write("initial.txt", &io::render_snapshot(&dom, &initial, &snap_meta))?;
    let result = dynamics::run(&initial, &dom, &model, &settings, i.horizon, i.sample_every);
    let (record, failure) = match result {
        Ok(r) => (r, None),
        Err(f) => (f.partial.clone(), Some(f)),
    };
    ctx.write("trajectory.txt", &io::render_trajectory(&record, &ctx.meta))?;
    ctx.write("ledger.txt", &io::render_ledger(&record, &ctx.meta))?;
    if let Some(f) = failure {
        ctx.say(format!("aborted: {f}; partial trajectory with {} frame(s) written", record.len()));
        return Err(RunError(f.to_string()));
    }
    let last = record.frames.last().expect("initial frame");
    let mut snap_meta = ctx.meta.clone();
    snap_meta.push(("frame".into(), format!("t = {}", format_f64(*record.times.last().expect("time")))));
    ctx.write("snapshot.txt", &io::render_snapshot(&dom, last, &snap_meta))?;
    let ledger = record.ledgers.last().cloned().unwrap_or_else(LocalTimeLedger::new);
    ctx.say(format!(
        "integrated to t = {} in {} frame(s), at most {} projection sweeps per step",
        i.horizon,
        record.len(),
        record.max_sweeps_used
    ));
    let mut report = Report::new("simulate");
    report
        .push("model", cfg.model.kind.name())
        .push_f64("horizon", i.horizon)
        .push_f64("step", i.step)
        .push("frames", record.len())
        .push("spheres", last.spheres.len())
        .push("particles", last.particles.len())
        .push("max_sweeps_used", record.max_sweeps_used)
        .push("ledger_entries", ledger.len())
        .push_f64("ledger_total", ledger.total());
    ctx.write_report(&report)?;
    Ok(true)
}

fn run_sample(ctx: &mut Ctx) -> Result<bool, RunError> {
    let cfg = ctx.cfg;
    let dom = domain(cfg)?;
    let params = sampler_params(cfg, &dom, cfg.model.kind)?;
    let s = &cfg.sampler;
    let runs = map_indexed(s.chains, ctx.exec, |c| {
        sample(&params, s.burn_in, s.thin, s.count, &mut replica_rng(cfg.seed, c as u64))
    });
    let runs: Vec<_> = runs.into_iter().collect::<Result<_, _>>().map_err(rt("sampler"))?;
    let batches = s.batches.min(s.count).max(1);
    let pooled = |f: &dyn Fn(&TwoTypeConfiguration) -> f64| -> Estimate {
        let parts: Vec<Estimate> = runs
            .iter()
            .map(|r| batch_means(&r.configurations.iter().map(f).collect::<Vec<_>>(), batches))
            .collect();
        let k = parts.len() as f64;
        let mean = parts.iter().map(|e| e.mean).sum::<f64>() / k;
        let var = parts.iter().map(|e| e.std_error * e.std_error).sum::<f64>() / (k * k);
        Estimate::new(mean, var.sqrt())
    };
    let spheres = pooled(&|c| c.spheres.len() as f64);
    let particles = pooled(&|c| c.particles.len() as f64);
    ctx.say(format!(
        "{} chain(s) x {} draws: mean spheres {:.4} +- {:.4}, mean particles {:.4} +- {:.4}",
        s.chains, s.count, spheres.mean, spheres.std_error, particles.mean, particles.std_error
    ));
    let mut report = Report::new("sample");
    report
        .push("model", cfg.model.kind.name())
        .push_f64("sphere_activity", cfg.model.sphere_activity)
        .push_f64("particle_activity", cfg.model.particle_activity)
        .push("chains", s.chains)
        .push("draws_per_chain", s.count)
        .push_f64("mean_spheres", spheres.mean)
        .push_f64("mean_spheres_se", spheres.std_error)
        .push_f64("mean_particles", particles.mean)
        .push_f64("mean_particles_se", particles.std_error);
    for (name, kind) in [("birth", MoveKind::Birth), ("death", MoveKind::Death), ("translate", MoveKind::Translate)] {
        let rates: Vec<f64> = runs.iter().map(|r| r.stats.acceptance_rate(kind)).collect();
        report.push_f64(format!("acceptance.{name}"), rates.iter().sum::<f64>() / rates.len() as f64);
    }
    let mut draws = String::new();
    for (k, v) in &ctx.meta {
        draws.push_str(&format!("# {k} = {v}\n"));
    }
    draws.push_str("# columns: chain draw spheres particles energy\n");
    for (c, r) in runs.iter().enumerate() {
        for (j, (conf, e)) in r.configurations.iter().zip(&r.energies).enumerate() {
            draws.push_str(&format!(
                "{c} {j} {} {} {}\n",
                conf.spheres.len(),
                conf.particles.len(),
                format_f64(*e)
            ));
        }
    }
    ctx.write("draws.txt", &draws)?;
    let last = runs[0].configurations.last().expect("at least one draw");
    let snap = io::render_snapshot(&dom, last, &ctx.meta);
    ctx.write("snapshot.txt", &snap)?;
    ctx.write_report(&report)?;
    Ok(true)
}

fn equivalence(ctx: &mut Ctx) -> Result<bool, RunError> {
    let cfg = ctx.cfg;
    let dom = domain(cfg)?;
    let params = sampler_params(cfg, &dom, ModelKind::TwoType)?;
    let s = &cfg.sampler;
    let setup = EquivalenceSetup {
        chains: s.chains,
        batches: s.batches,
        burn_in: s.burn_in,
        thin: s.thin,
        samples_per_chain: s.count,
        seed: cfg.seed,
        exec: ctx.exec,
        ..Default::default()
    };
    let report = marginal_equivalence_experiment(&params, &setup).map_err(rt("equivalence"))?;
    ctx.say(format!("two-type vs one-type marginals: {}", verdict(&report)));
    ctx.write_report(&report)?;
    Ok(report.passed())
}

fn verdict(r: &Report) -> &'static str {
    if r.passed() {
        "pass"
    } else {
        "FAIL"
    }
}

fn decimal(x: f64) -> String {
    format!("{x:.6}")
}

fn verify_bounds(ctx: &mut Ctx) -> Result<bool, RunError> {
    let cfg = ctx.cfg;
    let k = &cfg.schedule;
    let base = domain(cfg)?;
    let exterior = TwoTypeConfiguration::empty(base.dim());
    let dom = base
        .with_container(Container::Ball {
            radius: k.radius,
            exterior,
        })
        .map_err(rt("domain"))?;
    let schedule = BadPathSchedule::new(k.radius, k.eps, dom.sphere_radius()).map_err(rt("schedule"))?;
    let chain_setup = ChainBoundSetup {
        kappas: k.kappas.clone(),
        replicas: k.replicas,
        burn_in: k.burn_in,
        seed: cfg.seed,
        exec: ctx.exec,
        ..Default::default()
    };
    let chain = verify_chain_bound(&dom, cfg.model.sphere_activity, cfg.model.particle_activity, &schedule, &chain_setup)
        .map_err(rt("chain bound"))?;
    ctx.say(format!("chain bound over {} replica(s): {}", k.replicas, verdict(&chain)));
    let fast_setup = FastBoundSetup {
        dim: dom.dim(),
        delta: k.fast_delta,
        eps: k.fast_eps,
        paths: k.fast_paths,
        substeps: k.fast_substeps,
        seed: cfg.seed,
        exec: ctx.exec,
    };
    let fast = verify_fast_bound(&fast_setup).map_err(rt("oscillation bound"))?;
    ctx.say(format!("Brownian oscillation bound over {} path(s): {}", k.fast_paths, verdict(&fast)));
    let mut report = Report::new("verify_bounds");
    report.merge("chain", &chain).merge("fast", &fast);
    for &kappa in &k.kappas {
        let get = |key: &str| chain.get(&format!("kappa_{kappa}.{key}")).and_then(|v| v.parse::<f64>().ok());
        if let (Some(b), Some(f), Some(lo), Some(hi)) = (get("bound"), get("frequency"), get("wilson_lower"), get("wilson_upper")) {
            report.push(
                format!("summary.kappa_{kappa}"),
                format!(
                    "bound {} frequency {:.6e} interval [{:.6e}, {:.6e}]",
                    decimal(b),
                    f,
                    lo,
                    hi
                ),
            );
        }
    }
    if let (Some(b), Some(f)) = (fast.get("bound"), fast.get("frequency")) {
        let (b, f): (f64, f64) = (b.parse().unwrap_or(f64::NAN), f.parse().unwrap_or(f64::NAN));
        report.push("summary.fast", format!("bound {} frequency {:.6e}", decimal(b), f));
    }
    ctx.write_report(&report)?;
    Ok(report.passed())
}

fn analyze(ctx: &mut Ctx) -> Result<bool, RunError> {
    match ctx.cfg.analyze.mode {
        AnalyzeMode::Trajectory => analyze_trajectory(ctx),
        AnalyzeMode::Percolation => analyze_percolation(ctx),
        AnalyzeMode::Packing => analyze_packing(ctx),
    }
}

fn analyze_trajectory(ctx: &mut Ctx) -> Result<bool, RunError> {
    let cfg = ctx.cfg;
    let path = cfg.analyze.input.clone().ok_or_else(|| RunError("analyze.input is not set".into()))?;
    let text = fs::read_to_string(&path).map_err(rt(&format!("reading {path}")))?;
    let file = io::parse_trajectory(&text).map_err(rt(&path))?;
    let dom = file.domain.clone();
    let step = file
        .meta
        .iter()
        .find(|(k, _)| k == "step")
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(cfg.integrator.step);
    let mut settings = IntegratorSettings::defaults(&dom, Scheme::TwoTypePenalised, cfg.seed);
    settings.step = step;
    let record = TrajectoryRecord {
        ledgers: vec![LocalTimeLedger::new(); file.frames.len()],
        times: file.times,
        frames: file.frames,
        settings,
        domain: dom.clone(),
        max_sweeps_used: 0,
    };
    ctx.say(format!("read {} frame(s) from {path}", record.len()));
    let k = &cfg.schedule;
    let schedule = BadPathSchedule::new(k.radius, k.eps, dom.sphere_radius()).map_err(rt("schedule"))?;
    let mut report = Report::new("trajectory_analysis");
    report
        .push("frames", record.len())
        .push_f64("alpha", schedule.alpha)
        .push_f64("delta", schedule.delta)
        .push("kappa", schedule.kappa)
        .push_f64("eps", schedule.eps);
    let chain_frames = record
        .frames
        .iter()
        .filter(|f| detect_chain(&f.spheres, dom.sphere_radius(), schedule.alpha, schedule.kappa, schedule.eps).is_some())
        .count();
    report.push("chain_frames", chain_frames);
    match detect_fast(&record, schedule.alpha, schedule.delta, schedule.eps) {
        Ok(w) => {
            report.push("fast_ball", w.is_some());
        }
        Err(e) => {
            report.push("fast_ball", format!("not checked: {e}"));
        }
    }
    if dom.metric().is_periodic() {
        report.push("separation", "not checked: periodic domain");
    } else {
        match verify_separation(&record, &schedule, k.rho) {
            Ok(check) => {
                report.merge("separation", &check.to_report());
            }
            Err(e) => {
                report.push("separation", format!("not checked: {e}"));
            }
        }
    }
    report.pass = None;
    ctx.say(format!("{chain_frames} frame(s) with a chain of {} links", schedule.kappa));
    ctx.write_report(&report)?;
    Ok(true)
}

fn analyze_percolation(ctx: &mut Ctx) -> Result<bool, RunError> {
    let cfg = ctx.cfg;
    let dom = domain(cfg)?;
    let s = &cfg.sampler;
    let setup = PercolationSetup {
        base_side: cfg.analyze.base_side,
        multiples: cfg.analyze.multiples.clone(),
        chains: s.chains,
        burn_in: s.burn_in,
        samples_per_chain: s.count,
        batches: s.batches,
        seed: cfg.seed,
        exec: ctx.exec,
        ..Default::default()
    };
    let report = percolation_experiment(&dom, cfg.model.sphere_activity, cfg.model.particle_activity, &setup)
        .map_err(rt("percolation"))?;
    ctx.say(format!("largest-cluster fractions over {} box size(s): {}", setup.multiples.len(), verdict(&report)));
    ctx.write_report(&report)?;
    Ok(report.passed())
}

/// Box sides for the packing runs: in two dimensions the second side is
/// scaled by `sqrt(3) / 2` so that a hexagonal lattice fits.
pub fn packing_sides(dim: usize, base_side: f64, slack: f64) -> Vec<f64> {
    let mut sides = vec![base_side * (1.0 + slack); dim];
    if dim == 2 {
        sides[1] *= 3f64.sqrt() / 2.0;
    }
    sides
}

fn analyze_packing(ctx: &mut Ctx) -> Result<bool, RunError> {
    let cfg = ctx.cfg;
    let dom = domain(cfg)?;
    let a = &cfg.analyze;
    let s = &cfg.sampler;
    let setup = PackingSetup {
        sides: packing_sides(dom.dim(), a.base_side, a.slack),
        chains: s.chains,
        burn_in: s.burn_in,
        thin: s.thin,
        samples_per_chain: s.count,
        batches: s.batches,
        seed: cfg.seed,
        exec: ctx.exec,
    };
    let (points, report) =
        packing_experiment(&dom, &a.ladder, &a.particle_activities, &setup).map_err(rt("packing"))?;
    ctx.say(format!("{} curve point(s): {}", points.len(), verdict(&report)));
    let curve = io::render_curve(&points, &ctx.meta);
    ctx.write("curve.txt", &curve)?;
    ctx.write_report(&report)?;
    Ok(report.passed())
}
