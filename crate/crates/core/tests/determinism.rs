use aosim_core::diagnostics::{
    packing_experiment, percolation_experiment, verify_chain_bound, verify_fast_bound, BadPathSchedule, ChainBoundSetup,
    FastBoundSetup, PackingSetup, PercolationSetup,
};
use aosim_core::dynamics::{run, DynamicsModel, IntegratorSettings, Scheme};
use aosim_core::geometry::{Container, Metric, MonteCarloUnion, PointSet, SimulationDomain, TwoTypeConfiguration};
use aosim_core::gibbs::{marginal_equivalence_experiment, sample, EquivalenceSetup, GibbsModelParams, Window};
use aosim_core::io::{parse_trajectory, render_ledger, render_trajectory};
use aosim_core::par::{map_indexed, replica_rng, Execution};
use rand::Rng;

const MODES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn ball_domain() -> SimulationDomain {
    SimulationDomain::new(
        2,
        0.5,
        0.075,
        1.0,
        Container::Ball {
            radius: 2.0,
            exterior: TwoTypeConfiguration::empty(2),
        },
    )
    .unwrap()
}

fn periodic_domain(side: f64) -> SimulationDomain {
    SimulationDomain::new(2, 0.5, 0.075, 1.0, Container::Periodic { sides: vec![side, side] }).unwrap()
}

#[test]
fn replica_streams_ignore_scheduling() {
    let [a, b] = MODES.map(|e| map_indexed(64, e, |i| replica_rng(9, i as u64).random::<u64>()));
    assert_eq!(a, b);
}

#[test]
fn bound_reports_match_across_modes() {
    let dom = ball_domain();
    let schedule = BadPathSchedule::new(2.0, 0.1, 0.5).unwrap();
    let [a, b] = MODES.map(|exec| {
        let setup = ChainBoundSetup {
            replicas: 200,
            burn_in: 200,
            seed: 3,
            exec,
            ..Default::default()
        };
        verify_chain_bound(&dom, 0.1, 1.0, &schedule, &setup).unwrap()
    });
    assert_eq!(a, b);
    let [a, b] = MODES.map(|exec| {
        verify_fast_bound(&FastBoundSetup {
            paths: 300,
            seed: 4,
            exec,
            ..Default::default()
        })
        .unwrap()
    });
    assert_eq!(a, b);
}

#[test]
fn experiment_reports_match_across_modes() {
    let dom = periodic_domain(4.0);
    let params = GibbsModelParams::two_type(&dom, 1.0, 3.0, Window::Periodic { sides: vec![4.0, 4.0] });
    let [a, b] = MODES.map(|exec| {
        let setup = EquivalenceSetup {
            chains: 2,
            burn_in: 2_000,
            thin: 20,
            samples_per_chain: 200,
            seed: 5,
            exec,
            ..Default::default()
        };
        marginal_equivalence_experiment(&params, &setup).unwrap()
    });
    assert_eq!(a, b);
    let open = SimulationDomain::new(2, 0.5, 0.075, 1.0, Container::Open).unwrap();
    let [a, b] = MODES.map(|exec| {
        let setup = PercolationSetup {
            base_side: 4.0,
            multiples: vec![1, 2],
            chains: 2,
            burn_in: 2_000,
            samples_per_chain: 20,
            batches: 4,
            seed: 6,
            exec,
            ..Default::default()
        };
        percolation_experiment(&open, 0.4, 1.0, &setup).unwrap()
    });
    assert_eq!(a, b);
    let [a, b] = MODES.map(|exec| {
        let setup = PackingSetup {
            sides: vec![4.2, 4.2 * 3f64.sqrt() / 2.0],
            chains: 2,
            burn_in: 1_000,
            thin: 10,
            samples_per_chain: 40,
            batches: 4,
            seed: 7,
            exec,
        };
        packing_experiment(&open, &[1.0, 100.0], &[0.0, 2.0], &setup).unwrap()
    });
    assert_eq!(a, b);
}

#[test]
fn union_estimate_matches_across_modes() {
    let pts = PointSet::from_points(2, &[[0.0, 0.0], [0.8, 0.1], [1.5, -0.2]]).unwrap();
    let [a, b] = MODES.map(|exec| {
        MonteCarloUnion::bounding(&pts, &Metric::Euclidean, 0.575, 50_000, 8)
            .with_execution(exec)
            .estimate(&pts, &Metric::Euclidean, 0.575)
    });
    assert_eq!(a, b);
}

#[test]
fn seeded_runs_render_identical_files() {
    let dom = periodic_domain(5.0);
    let params = GibbsModelParams::two_type(&dom, 2.0, 2.0, Window::Periodic { sides: vec![5.0, 5.0] });
    let start = sample(&params, 5_000, 1, 1, &mut replica_rng(1, 0)).unwrap().configurations.remove(0);
    let mut settings = IntegratorSettings::defaults(&dom, Scheme::TwoTypePenalised, 11);
    settings.step = 1e-3;
    let model = DynamicsModel::TwoType { field: None };
    let meta = vec![("seed".to_string(), "11".to_string())];
    let render = || {
        let rec = run(&start, &dom, &model, &settings, 0.05, 5).unwrap();
        (render_trajectory(&rec, &meta), render_ledger(&rec, &meta))
    };
    let (t1, l1) = render();
    let (t2, l2) = render();
    assert_eq!(t1, t2);
    assert_eq!(l1, l2);
    let back = parse_trajectory(&t1).unwrap();
    assert_eq!(back.times.len(), 11);
    assert_eq!(back.frames[0], start);
    settings.seed = 12;
    let other = run(&start, &dom, &model, &settings, 0.05, 5).unwrap();
    assert_ne!(render_trajectory(&other, &meta), t1);
}
