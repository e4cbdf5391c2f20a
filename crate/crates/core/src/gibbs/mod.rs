//! Grand-canonical birth/death/translate samplers.
//!
//! Three targets are supported on a finite window: the two-type hard-core
//! measure with a frozen boundary, the penalised two-type measure whose
//! reference intensities are `e^{-psi}`, and the one-type effective measure
//! with density `z^n e^{-z_p E}` restricted to admissible sphere sets.

mod cells;
mod equivalence;
mod lattice;
mod sampler;
mod tiny;

pub use equivalence::{marginal_equivalence_experiment, EquivalenceSetup};
pub use sampler::{mcmc_step, sample, MoveKind, MoveStats, SampleRun, Sampler};
pub use tiny::{exact_tiny_partition, halton, TinyPartition};

use rand::Rng;
use thiserror::Error;

use crate::depletion::{unit_ball_volume, DepletionParams};
use crate::geometry::{GeometryError, Metric, SimulationDomain, TwoTypeConfiguration};
use crate::penalisation::{random_direction, PenalisationField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GibbsError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid sampler parameters: {0}")]
    Invalid(String),
    #[error("caps exceeded: at most 2 spheres and 2 particles, got ({0}, {1})")]
    CapsExceeded(usize, usize),
}

/// Region in which balls are born and moved.
#[derive(Clone, Debug, PartialEq)]
pub enum Window {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Torus `[0, L_1) x ... x [0, L_d)`.
    Periodic { sides: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Window {
    pub fn cube(dim: usize, side: f64) -> Self {
        Window::Box {
            lo: vec![0.0; dim],
            hi: vec![side; dim],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Window::Box { lo, .. } => lo.len(),
            Window::Periodic { sides } => sides.len(),
            Window::Ball { center, .. } => center.len(),
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Window::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| b - a).product(),
            Window::Periodic { sides } => sides.iter().product(),
            Window::Ball { center, radius } => {
                unit_ball_volume(center.len()) * radius.powi(center.len() as i32)
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Window::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *a <= *v && *v < *b),
            Window::Periodic { sides } => x.iter().zip(sides).all(|(v, l)| 0.0 <= *v && *v < *l),
            Window::Ball { center, radius } => {
                let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                d2 < radius * radius
            }
        }
    }

    /// Bounding box `(lo, hi)`.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Window::Box { lo, hi } => (lo.clone(), hi.clone()),
            Window::Periodic { sides } => (vec![0.0; sides.len()], sides.clone()),
            Window::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    pub fn metric(&self) -> Metric {
        match self {
            Window::Periodic { sides } => Metric::Periodic(sides.clone()),
            _ => Metric::Euclidean,
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Window::Periodic { .. })
    }

    pub fn sample_uniform<G: Rng + ?Sized>(&self, rng: &mut G, out: &mut [f64]) {
        match self {
            Window::Box { lo, hi } => {
                for k in 0..out.len() {
                    out[k] = lo[k] + (hi[k] - lo[k]) * rng.random::<f64>();
                }
            }
            Window::Periodic { sides } => {
                for k in 0..out.len() {
                    out[k] = sides[k] * rng.random::<f64>();
                }
            }
            Window::Ball { center, radius } => {
                let d = out.len();
                random_direction(rng, out);
                let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
                for k in 0..d {
                    out[k] = center[k] + r * out[k];
                }
            }
        }
    }

    /// Wraps `x` into a periodic window, or reports whether it lies inside.
    pub fn admit(&self, x: &mut [f64]) -> bool {
        if let Window::Periodic { .. } = self {
            self.metric().wrap(x);
            true
        } else {
            self.contains(x)
        }
    }

    fn validate(&self) -> Result<(), String> {
        match self {
            Window::Box { lo, hi } => {
                if lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| !(a < b && b.is_finite() && a.is_finite())) {
                    return Err("box window needs lo < hi on every axis".into());
                }
            }
            Window::Periodic { sides } => {
                if sides.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
                    return Err("periodic window needs positive sides".into());
                }
            }
            Window::Ball { radius, center } => {
                if !(*radius > 0.0 && radius.is_finite()) || center.iter().any(|c| !c.is_finite()) {
                    return Err("ball window needs a positive radius".into());
                }
            }
        }
        Ok(())
    }
}

/// How the one-type energy is evaluated.
#[derive(Clone, Debug, PartialEq)]
pub enum EnergyBackend {
    /// Closed-form pair sum; exact in the pairwise regime.
    Pairwise,
    /// Covered volume counted on a randomly shifted lattice shared by all
    /// moves of the chain. Works in every regime.
    SharedLattice { spacing: f64, seed: u64 },
}

#[derive(Clone, Debug)]
pub enum GibbsModel {
    TwoTypeHardcore,
    /// Penalised two-type measure for a ball container; the window is
    /// `B(0, R')` with `R'` the field's support radius.
    TwoTypePenalised(PenalisationField),
    OneTypeDepletion(EnergyBackend),
}

impl GibbsModel {
    pub fn name(&self) -> &'static str {
        match self {
            GibbsModel::TwoTypeHardcore => "two-type-hardcore",
            GibbsModel::TwoTypePenalised(_) => "two-type-penalised",
            GibbsModel::OneTypeDepletion(_) => "one-type-depletion",
        }
    }

    pub fn is_one_type(&self) -> bool {
        matches!(self, GibbsModel::OneTypeDepletion(_))
    }
}

/// Birth/death/translate proposal weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MoveMix {
    pub birth: f64,
    pub death: f64,
    pub translate: f64,
}

impl Default for MoveMix {
    fn default() -> Self {
        MoveMix {
            birth: 0.4,
            death: 0.4,
            translate: 0.2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GibbsModelParams {
    pub dim: usize,
    pub sphere_radius: f64,
    pub particle_radius: f64,
    pub sphere_activity: f64,
    pub particle_activity: f64,
    pub model: GibbsModel,
    pub window: Window,
    /// Frozen balls outside the window; hard-core partners for the
    /// unpenalised models, ignored by the penalised one.
    pub boundary: TwoTypeConfiguration,
    pub moves: MoveMix,
    /// Standard deviation of a translation kick.
    pub kick: f64,
    pub sphere_cap: Option<usize>,
    pub particle_cap: Option<usize>,
    /// Full energy recomputation period (moves); 0 disables it.
    pub energy_check_every: u64,
}

impl GibbsModelParams {
    fn base(dom: &SimulationDomain, z_s: f64, z_p: f64, model: GibbsModel, window: Window) -> Self {
        GibbsModelParams {
            dim: dom.dim(),
            sphere_radius: dom.sphere_radius(),
            particle_radius: dom.particle_radius(),
            sphere_activity: z_s,
            particle_activity: z_p,
            model,
            window,
            boundary: TwoTypeConfiguration::empty(dom.dim()),
            moves: MoveMix::default(),
            kick: 0.3 * dom.sphere_radius(),
            sphere_cap: None,
            particle_cap: None,
            energy_check_every: 10_000,
        }
    }

    pub fn two_type(dom: &SimulationDomain, z_s: f64, z_p: f64, window: Window) -> Self {
        Self::base(dom, z_s, z_p, GibbsModel::TwoTypeHardcore, window)
    }

    /// Penalised measure of a ball container.
    pub fn penalised(dom: &SimulationDomain, z_s: f64, z_p: f64) -> Result<Self, GibbsError> {
        let field = PenalisationField::new(dom)?;
        let window = Window::Ball {
            center: vec![0.0; dom.dim()],
            radius: field.support_radius(),
        };
        Ok(Self::base(dom, z_s, z_p, GibbsModel::TwoTypePenalised(field), window))
    }

    pub fn one_type(dom: &SimulationDomain, z_s: f64, z_p: f64, window: Window, backend: EnergyBackend) -> Self {
        Self::base(dom, z_s, z_p, GibbsModel::OneTypeDepletion(backend), window)
    }

    pub fn with_boundary(mut self, boundary: TwoTypeConfiguration) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_caps(mut self, spheres: Option<usize>, particles: Option<usize>) -> Self {
        self.sphere_cap = spheres;
        self.particle_cap = particles;
        self
    }

    pub fn depletion_radius(&self) -> f64 {
        self.sphere_radius + self.particle_radius
    }

    pub fn depletion_params(&self) -> Result<DepletionParams, GeometryError> {
        DepletionParams::new(self.dim, self.sphere_radius, self.particle_radius, self.particle_activity)
    }

    /// Checks every constraint and reports all violations together.
    pub fn validate(&self) -> Result<(), GibbsError> {
        let mut problems = Vec::new();
        for (name, z) in [("sphere", self.sphere_activity), ("particle", self.particle_activity)] {
            if !(z >= 0.0 && z.is_finite()) {
                problems.push(format!("{name} activity must be finite and non-negative, got {z}"));
            }
        }
        if !(self.particle_radius > 0.0 && self.particle_radius < self.sphere_radius) {
            problems.push(format!(
                "radii must satisfy 0 < particle radius < sphere radius, got {} and {}",
                self.particle_radius, self.sphere_radius
            ));
        }
        if self.window.dim() != self.dim || self.boundary.dim() != self.dim {
            problems.push("window or boundary has the wrong dimension".into());
        }
        if let Err(e) = self.window.validate() {
            problems.push(e);
        }
        if let Err(e) = self.boundary.validate() {
            problems.push(format!("boundary: {e}"));
        }
        let m = self.moves;
        if !(m.birth >= 0.0 && m.death >= 0.0 && m.translate >= 0.0 && m.birth + m.death + m.translate > 0.0) {
            problems.push("move weights must be non-negative with a positive sum".into());
        }
        if (m.birth > 0.0) != (m.death > 0.0) {
            problems.push("birth and death weights must be both positive or both zero".into());
        }
        if !(self.kick > 0.0 && self.kick.is_finite()) {
            problems.push("translation kick must be positive".into());
        }
        if let (GibbsModel::OneTypeDepletion(backend), Window::Periodic { sides }) = (&self.model, &self.window) {
            let min = 4.0 * self.depletion_radius();
            if sides.iter().any(|&l| l < min) {
                problems.push(format!("one-type sampler needs periodic sides of at least {min}"));
            }
            if let EnergyBackend::SharedLattice { spacing, .. } = backend {
                if !(*spacing > 0.0) {
                    problems.push("lattice spacing must be positive".into());
                }
            }
        }
        if let GibbsModel::OneTypeDepletion(EnergyBackend::Pairwise) = &self.model {
            if let Err(e) = self.depletion_params().and_then(|p| {
                if p.is_pairwise_regime() {
                    Ok(())
                } else {
                    Err(GeometryError::TripleOverlapRegime {
                        ratio: p.ratio(),
                        max: crate::geometry::PAIRWISE_RATIO_MAX,
                    })
                }
            }) {
                problems.push(e.to_string());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(GibbsError::Invalid(problems.join("; ")))
        }
    }
}
