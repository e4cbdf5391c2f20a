//! Reflected Euler-Maruyama integrators.
//!
//! A step adds the Brownian increment and the drift, then restores
//! admissibility by projecting overlapping pairs back to contact. The pushes
//! are credited to a [`LocalTimeLedger`].
//!
//! Exterior balls of a ball container never move and do not take part in the
//! reflection; they act only through the penalisation field.

mod ledger;
mod projection;
mod stationarity;

pub use ledger::{LocalTimeLedger, PairKind};
pub use projection::ProjectionReport;
pub use stationarity::{distance_bins, stationarity_experiment, stationary_bin_probabilities, StationaritySetup};

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::depletion::{grad_energy_into, DepletionParams};
use crate::geometry::{
    admissible_with, BallKind, Container, GeometryError, PointSet, SimulationDomain,
    TwoTypeConfiguration,
};
use crate::penalisation::PenalisationField;
use projection::{project, ContactRules};

/// A pair still violating its constraint when the projection gave up.
#[derive(Clone, Debug, PartialEq)]
pub struct OffendingPair {
    pub kind: PairKind,
    pub a: u64,
    pub b: u64,
    /// Distance minus contact distance.
    pub gap: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("overlap projection did not converge after {sweeps} sweeps ({} pairs)", pairs.len())]
    ProjectionFailed {
        sweeps: usize,
        pairs: Vec<OffendingPair>,
    },
    #[error("invalid integrator settings: {0}")]
    InvalidSettings(String),
}

/// Which stochastic equation is discretised.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    TwoTypePenalised,
    DepletionGradient,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorSettings {
    pub step: f64,
    pub max_sweeps: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub scheme: Scheme,
}

impl IntegratorSettings {
    /// Defaults: `h = 1e-4 r_s^2`, 1000 sweeps, tolerance `1e-10 r_s`.
    pub fn defaults(dom: &SimulationDomain, scheme: Scheme, seed: u64) -> Self {
        let rs = dom.sphere_radius();
        IntegratorSettings {
            step: 1e-4 * rs * rs,
            max_sweeps: 1000,
            tolerance: 1e-10 * rs,
            seed,
            scheme,
        }
    }

    pub fn validate(&self, dom: &SimulationDomain) -> Result<(), DynamicsError> {
        let mut problems = Vec::new();
        if !(self.step > 0.0 && self.step.is_finite()) {
            problems.push(format!("step must be positive, got {}", self.step));
        }
        if self.max_sweeps == 0 {
            problems.push("max sweeps must be at least 1".to_string());
        }
        let cap = 1e-6 * dom.sphere_radius();
        if !(self.tolerance > 0.0 && self.tolerance < cap) {
            problems.push(format!(
                "tolerance must lie in (0, {cap}), got {}",
                self.tolerance
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(DynamicsError::InvalidSettings(problems.join("; ")))
        }
    }

    fn rules(&self, dom: &SimulationDomain) -> ContactRules {
        ContactRules {
            sphere_contact: 2.0 * dom.sphere_radius(),
            mixed_contact: dom.depletion_radius(),
            sigma2: dom.sigma() * dom.sigma(),
            max_sweeps: self.max_sweeps,
            tolerance: self.tolerance,
        }
    }
}

/// Supplier of Brownian increments.
pub trait NoiseSource {
    /// Fills `out` with independent increments of standard deviation `std`.
    fn fill(&mut self, out: &mut [f64], std: f64);
}

/// Gaussian increments from a seeded generator.
#[derive(Clone, Debug)]
pub struct GaussianNoise<G: Rng>(pub G);

impl GaussianNoise<ChaCha8Rng> {
    pub fn seeded(seed: u64) -> Self {
        GaussianNoise(ChaCha8Rng::seed_from_u64(seed))
    }
}

impl<G: Rng> NoiseSource for GaussianNoise<G> {
    fn fill(&mut self, out: &mut [f64], std: f64) {
        for v in out.iter_mut() {
            let z: f64 = self.0.sample(StandardNormal);
            *v = std * z;
        }
    }
}

/// No noise: isolates drift and projection.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn fill(&mut self, out: &mut [f64], _std: f64) {
        out.fill(0.0);
    }
}

/// Prescribed increments, consumed one vector per `fill` call (spheres, then
/// particles, each step). The standard deviation is ignored; an exhausted
/// script yields zeros.
#[derive(Clone, Debug, Default)]
pub struct ScriptedNoise {
    queue: VecDeque<Vec<f64>>,
}

impl ScriptedNoise {
    pub fn new<I: IntoIterator<Item = Vec<f64>>>(increments: I) -> Self {
        ScriptedNoise {
            queue: increments.into_iter().collect(),
        }
    }
}

impl NoiseSource for ScriptedNoise {
    fn fill(&mut self, out: &mut [f64], _std: f64) {
        match self.queue.pop_front() {
            Some(v) => {
                assert_eq!(v.len(), out.len(), "scripted increment has the wrong length");
                out.copy_from_slice(&v);
            }
            None => out.fill(0.0),
        }
    }
}

/// Interior admissibility, ignoring any frozen exterior.
pub fn is_interior_admissible(config: &TwoTypeConfiguration, dom: &SimulationDomain, slack: f64) -> bool {
    admissible_with(
        config,
        &dom.metric(),
        (2.0 * dom.sphere_radius() - slack).max(0.0),
        (dom.depletion_radius() - slack).max(0.0),
    )
}

/// Restores admissibility of the interior configuration and credits the ledger.
pub fn resolve_overlaps(
    state: &mut TwoTypeConfiguration,
    dom: &SimulationDomain,
    settings: &IntegratorSettings,
    ledger: &mut LocalTimeLedger,
) -> Result<ProjectionReport, DynamicsError> {
    let metric = dom.metric();
    let report = project(state, &metric, &settings.rules(dom), ledger)?;
    metric_wrap_all(state, dom);
    Ok(report)
}

fn metric_wrap_all(state: &mut TwoTypeConfiguration, dom: &SimulationDomain) {
    let metric = dom.metric();
    if metric.is_periodic() {
        let d = state.dim();
        for set in [&mut state.spheres, &mut state.particles] {
            for p in set.coords_mut().chunks_exact_mut(d) {
                metric.wrap(p);
            }
        }
    }
}

/// One step of the penalised two-type equation.
///
/// Spheres move by `dW - (h/2) grad psi_s`, particles by
/// `sigma dW - (h sigma^2 / 2) grad psi_p`, then overlaps are projected out.
/// Without a field (open or periodic container) the drift is zero.
pub fn step_two_type(
    state: &mut TwoTypeConfiguration,
    dom: &SimulationDomain,
    field: Option<&PenalisationField>,
    settings: &IntegratorSettings,
    noise: &mut dyn NoiseSource,
    ledger: &mut LocalTimeLedger,
) -> Result<ProjectionReport, DynamicsError> {
    let h = settings.step;
    let d = dom.dim();
    let sigma = dom.sigma();
    let mut grad = vec![0.0; d];
    for (kind, std, drift_scale) in [
        (BallKind::Sphere, h.sqrt(), 0.5 * h),
        (BallKind::Particle, sigma * h.sqrt(), 0.5 * h * sigma * sigma),
    ] {
        let set = state.set_mut(kind);
        let mut inc = vec![0.0; set.coords().len()];
        noise.fill(&mut inc, std);
        if let Some(f) = field {
            for (i, chunk) in inc.chunks_exact_mut(d).enumerate() {
                f.value_and_grad(set.get(i), kind, &mut grad);
                for k in 0..d {
                    chunk[k] -= drift_scale * grad[k];
                }
            }
        }
        for (x, dx) in set.coords_mut().iter_mut().zip(&inc) {
            *x += dx;
        }
    }
    resolve_overlaps(state, dom, settings, ledger)
}

/// One step of the depletion gradient dynamics on spheres:
/// `dW - (h z_p / 2) grad E`, then sphere-sphere projection.
pub fn step_depletion(
    spheres: &mut PointSet,
    dom: &SimulationDomain,
    p: &DepletionParams,
    settings: &IntegratorSettings,
    noise: &mut dyn NoiseSource,
    ledger: &mut LocalTimeLedger,
) -> Result<ProjectionReport, DynamicsError> {
    if matches!(dom.container(), Container::Ball { .. }) {
        return Err(DynamicsError::InvalidSettings(
            "depletion dynamics needs an open or periodic container".into(),
        ));
    }
    let h = settings.step;
    let metric = dom.metric();
    let mut inc = vec![0.0; spheres.coords().len()];
    noise.fill(&mut inc, h.sqrt());
    if p.particle_activity != 0.0 && spheres.len() > 1 {
        let mut g = vec![0.0; inc.len()];
        grad_energy_into(spheres, p, &metric, &mut g)?;
        let c = 0.5 * h * p.particle_activity;
        for (v, gi) in inc.iter_mut().zip(&g) {
            *v -= c * gi;
        }
    }
    for (x, dx) in spheres.coords_mut().iter_mut().zip(&inc) {
        *x += dx;
    }
    let mut state = TwoTypeConfiguration {
        spheres: std::mem::take(spheres),
        particles: PointSet::new(dom.dim()),
    };
    let out = resolve_overlaps(&mut state, dom, settings, ledger);
    *spheres = state.spheres;
    out
}

/// The dynamics advanced by [`run`].
#[derive(Clone, Debug)]
pub enum DynamicsModel {
    /// Two-type equation; the field is required for a ball container.
    TwoType { field: Option<PenalisationField> },
    /// Sphere-only gradient dynamics of the effective model.
    Depletion(DepletionParams),
}

impl DynamicsModel {
    pub fn scheme(&self) -> Scheme {
        match self {
            DynamicsModel::TwoType { .. } => Scheme::TwoTypePenalised,
            DynamicsModel::Depletion(_) => Scheme::DepletionGradient,
        }
    }
}

/// Sampled trajectory with cumulative local times at each sample.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub frames: Vec<TwoTypeConfiguration>,
    pub ledgers: Vec<LocalTimeLedger>,
    pub settings: IntegratorSettings,
    pub domain: SimulationDomain,
    /// Largest number of projection sweeps any step needed.
    pub max_sweeps_used: usize,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Path of ball `id` of `kind`, if it is present in every frame.
    pub fn path(&self, kind: BallKind, id: u64) -> Option<Vec<Vec<f64>>> {
        self.frames
            .iter()
            .map(|f| {
                let s = f.set(kind);
                s.index_of(id).map(|i| s.get(i).to_vec())
            })
            .collect()
    }
}

/// Failed run: the record up to the last good sample and the step error.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("run aborted at t = {time}: {error}")]
pub struct RunFailure {
    pub partial: TrajectoryRecord,
    pub time: f64,
    pub error: DynamicsError,
}

/// Number of steps for `horizon`, which must be a multiple of `h * sample_every`.
pub fn step_count(horizon: f64, step: f64, sample_every: usize) -> Result<usize, DynamicsError> {
    if sample_every == 0 {
        return Err(DynamicsError::InvalidSettings("sample_every must be at least 1".into()));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(DynamicsError::InvalidSettings(format!("horizon must be non-negative, got {horizon}")));
    }
    let blocks = horizon / (step * sample_every as f64);
    let rounded = blocks.round();
    if (blocks - rounded).abs() > 1e-9 * rounded.max(1.0) {
        return Err(DynamicsError::InvalidSettings(format!(
            "horizon {horizon} is not a multiple of step * sample_every = {}",
            step * sample_every as f64
        )));
    }
    Ok(rounded as usize * sample_every)
}

/// Integrates from `initial` to `horizon` with Gaussian noise seeded by
/// `settings.seed`, sampling every `sample_every` steps.
pub fn run(
    initial: &TwoTypeConfiguration,
    dom: &SimulationDomain,
    model: &DynamicsModel,
    settings: &IntegratorSettings,
    horizon: f64,
    sample_every: usize,
) -> Result<TrajectoryRecord, Box<RunFailure>> {
    let mut noise = GaussianNoise::seeded(settings.seed);
    run_with_noise(initial, dom, model, settings, horizon, sample_every, &mut noise)
}

pub fn run_with_noise(
    initial: &TwoTypeConfiguration,
    dom: &SimulationDomain,
    model: &DynamicsModel,
    settings: &IntegratorSettings,
    horizon: f64,
    sample_every: usize,
    noise: &mut dyn NoiseSource,
) -> Result<TrajectoryRecord, Box<RunFailure>> {
    let mut record = TrajectoryRecord {
        times: vec![0.0],
        frames: vec![initial.clone()],
        ledgers: vec![LocalTimeLedger::new()],
        settings: settings.clone(),
        domain: dom.clone(),
        max_sweeps_used: 0,
    };
    let fail = |record: TrajectoryRecord, time: f64, error: DynamicsError| {
        Box::new(RunFailure {
            partial: record,
            time,
            error,
        })
    };
    if let Err(e) = settings.validate(dom) {
        return Err(fail(record, 0.0, e));
    }
    if settings.scheme != model.scheme() {
        return Err(fail(
            record,
            0.0,
            DynamicsError::InvalidSettings("settings scheme does not match the model".into()),
        ));
    }
    if let Err(e) = initial.validate() {
        return Err(fail(record, 0.0, e.into()));
    }
    if let DynamicsModel::TwoType { field: None } = model {
        if matches!(dom.container(), Container::Ball { .. }) {
            return Err(fail(
                record,
                0.0,
                DynamicsError::InvalidSettings("ball container needs a penalisation field".into()),
            ));
        }
    }
    let steps = match step_count(horizon, settings.step, sample_every) {
        Ok(n) => n,
        Err(e) => return Err(fail(record, 0.0, e)),
    };
    let mut state = initial.clone();
    let mut ledger = LocalTimeLedger::new();
    for s in 1..=steps {
        let out = match model {
            DynamicsModel::TwoType { field } => {
                step_two_type(&mut state, dom, field.as_ref(), settings, noise, &mut ledger)
            }
            DynamicsModel::Depletion(p) => {
                step_depletion(&mut state.spheres, dom, p, settings, noise, &mut ledger)
            }
        };
        match out {
            Ok(rep) => record.max_sweeps_used = record.max_sweeps_used.max(rep.sweeps),
            Err(e) => return Err(fail(record, s as f64 * settings.step, e)),
        }
        if s % sample_every == 0 {
            record.times.push(s as f64 * settings.step);
            record.frames.push(state.clone());
            record.ledgers.push(ledger.clone());
        }
    }
    Ok(record)
}
