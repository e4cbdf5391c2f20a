use rand::Rng;
use rand_distr::StandardNormal;

use super::cells::CellList;
use super::lattice::SharedLattice;
use super::{EnergyBackend, GibbsError, GibbsModel, GibbsModelParams, Window};
use crate::depletion::{conditional_energy, pair_overlap, DepletionParams};
use crate::geometry::{BallKind, CellLayout, Metric, NeighborGrid, PointSet, TwoTypeConfiguration};

const CELL_BUDGET: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MoveKind {
    Birth,
    Death,
    Translate,
}

impl MoveKind {
    fn slot(self) -> usize {
        match self {
            MoveKind::Birth => 0,
            MoveKind::Death => 1,
            MoveKind::Translate => 2,
        }
    }
}

/// Move counters and energy bookkeeping checks.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MoveStats {
    /// Proposals per move kind (birth, death, translate).
    pub proposed: [u64; 3],
    pub accepted: [u64; 3],
    pub energy_checks: u64,
    /// Largest relative gap seen between cached and recomputed energy.
    pub max_relative_drift: f64,
}

impl MoveStats {
    pub fn acceptance_rate(&self, kind: MoveKind) -> f64 {
        let s = kind.slot();
        if self.proposed[s] == 0 {
            0.0
        } else {
            self.accepted[s] as f64 / self.proposed[s] as f64
        }
    }

    pub fn total_moves(&self) -> u64 {
        self.proposed.iter().sum()
    }
}

#[derive(Clone, Debug)]
enum EnergyState {
    None,
    Pairwise { params: DepletionParams, value: f64 },
    Lattice(Box<SharedLattice>),
}

#[derive(Clone, Debug)]
struct Frozen {
    points: PointSet,
    grid: Option<NeighborGrid>,
}

impl Frozen {
    fn new(points: PointSet, metric: &Metric, cutoff: f64) -> Self {
        let grid = (!points.is_empty()).then(|| NeighborGrid::build(&points, metric, cutoff));
        Frozen { points, grid }
    }

    fn for_each_near<F: FnMut(&[f64])>(&self, x: &[f64], mut f: F) {
        if let Some(g) = &self.grid {
            g.for_each_near(x, |j| f(self.points.get(j)));
        }
    }
}

/// Birth/death/translate Metropolis-Hastings chain for one
/// [`GibbsModelParams`] target.
#[derive(Clone, Debug)]
pub struct Sampler {
    params: GibbsModelParams,
    state: TwoTypeConfiguration,
    metric: Metric,
    volume: f64,
    sphere_cells: CellList,
    particle_cells: CellList,
    frozen_spheres: Frozen,
    frozen_particles: Frozen,
    energy: EnergyState,
    next_ids: [u64; 2],
    stats: MoveStats,
    scratch: Vec<f64>,
}

fn slot(kind: BallKind) -> usize {
    match kind {
        BallKind::Sphere => 0,
        BallKind::Particle => 1,
    }
}

impl Sampler {
    /// Chain started from the empty configuration.
    pub fn new(params: GibbsModelParams) -> Result<Self, GibbsError> {
        params.validate()?;
        let dim = params.dim;
        if let GibbsModel::TwoTypePenalised(_) = params.model {
            if !(params.boundary.spheres.is_empty() && params.boundary.particles.is_empty()) {
                return Err(GibbsError::Invalid(
                    "the penalised model takes its exterior from the field, not the boundary".into(),
                ));
            }
        }
        let metric = params.window.metric();
        let rs = params.sphere_radius;
        let ro = params.depletion_radius();
        let cutoff = if params.model.is_one_type() {
            (2.0 * ro).max(2.0 * rs)
        } else {
            2.0 * rs
        };
        if let Window::Periodic { sides } = &params.window {
            if sides.iter().any(|&l| l < 2.0 * cutoff) {
                return Err(GibbsError::Invalid(format!(
                    "periodic sides must be at least {}",
                    2.0 * cutoff
                )));
            }
        }
        let layout = match &params.window {
            Window::Periodic { sides } => CellLayout::periodic(sides, cutoff),
            w => {
                let (lo, hi) = w.bounds();
                CellLayout::euclidean(&lo, &hi, cutoff, CELL_BUDGET)
            }
        };
        let energy = match &params.model {
            GibbsModel::OneTypeDepletion(EnergyBackend::Pairwise) => EnergyState::Pairwise {
                params: params.depletion_params()?,
                value: 0.0,
            },
            GibbsModel::OneTypeDepletion(EnergyBackend::SharedLattice { spacing, seed }) => {
                let mut lat = SharedLattice::new(&params.window, ro, *spacing, *seed)?;
                lat.freeze(&params.boundary.spheres);
                EnergyState::Lattice(Box::new(lat))
            }
            _ => EnergyState::None,
        };
        let frozen_spheres = Frozen::new(params.boundary.spheres.clone(), &metric, cutoff);
        let frozen_particles = if params.model.is_one_type() {
            Frozen::new(PointSet::new(dim), &metric, cutoff)
        } else {
            Frozen::new(params.boundary.particles.clone(), &metric, cutoff)
        };
        Ok(Sampler {
            volume: params.window.volume(),
            state: TwoTypeConfiguration::empty(dim),
            sphere_cells: CellList::new(layout.clone()),
            particle_cells: CellList::new(layout),
            frozen_spheres,
            frozen_particles,
            energy,
            next_ids: [0, 0],
            stats: MoveStats::default(),
            scratch: vec![0.0; dim],
            metric,
            params,
        })
    }

    /// Chain started from `state`, which must lie in the window and have
    /// positive target density.
    pub fn with_state(params: GibbsModelParams, state: TwoTypeConfiguration) -> Result<Self, GibbsError> {
        let mut s = Sampler::new(params)?;
        state.validate()?;
        if state.dim() != s.params.dim {
            return Err(GibbsError::Invalid("state has the wrong dimension".into()));
        }
        if s.params.model.is_one_type() && !state.particles.is_empty() {
            return Err(GibbsError::Invalid("one-type state cannot hold particles".into()));
        }
        for kind in [BallKind::Sphere, BallKind::Particle] {
            for (id, x) in state.set(kind).iter() {
                if !s.params.window.contains(x) {
                    return Err(GibbsError::Invalid(format!("{kind} {id} lies outside the window")));
                }
                if !s.admissible(kind, x, None) {
                    return Err(GibbsError::Invalid(format!("{kind} {id} violates the hard core")));
                }
                s.insert(kind, id, x);
            }
            s.next_ids[slot(kind)] = state.set(kind).next_id();
        }
        Ok(s)
    }

    pub fn params(&self) -> &GibbsModelParams {
        &self.params
    }

    pub fn state(&self) -> &TwoTypeConfiguration {
        &self.state
    }

    pub fn stats(&self) -> &MoveStats {
        &self.stats
    }

    /// Cached energy of the one-type model (0 for two-type models).
    pub fn energy(&self) -> f64 {
        match &self.energy {
            EnergyState::None => 0.0,
            EnergyState::Pairwise { value, .. } => *value,
            EnergyState::Lattice(l) => l.energy(),
        }
    }

    /// Recomputes the energy from scratch, records the relative drift of the
    /// cached value and resets the cache.
    pub fn check_energy(&mut self) -> Result<f64, GibbsError> {
        let (cached, fresh) = match &mut self.energy {
            EnergyState::None => return Ok(0.0),
            EnergyState::Pairwise { params, value } => {
                let fresh = conditional_energy(&self.state.spheres, &self.frozen_spheres.points, params, &self.metric)?.value;
                let cached = *value;
                *value = fresh;
                (cached, fresh)
            }
            EnergyState::Lattice(l) => {
                let fresh = l.recount(&self.state.spheres) as f64 * l.cell_volume();
                (l.energy(), fresh)
            }
        };
        let scale = fresh.abs().max(self.shell_volume());
        let drift = (cached - fresh).abs() / scale;
        self.stats.energy_checks += 1;
        self.stats.max_relative_drift = self.stats.max_relative_drift.max(drift);
        Ok(drift)
    }

    fn shell_volume(&self) -> f64 {
        crate::depletion::unit_ball_volume(self.params.dim) * self.params.depletion_radius().powi(self.params.dim as i32)
    }

    fn activity(&self, kind: BallKind) -> f64 {
        match kind {
            BallKind::Sphere => self.params.sphere_activity,
            BallKind::Particle => self.params.particle_activity,
        }
    }

    fn cap(&self, kind: BallKind) -> Option<usize> {
        match kind {
            BallKind::Sphere => self.params.sphere_cap,
            BallKind::Particle => self.params.particle_cap,
        }
    }

    /// Hard-core test for a ball of `kind` at `x`, ignoring interior index `skip`.
    fn admissible(&self, kind: BallKind, x: &[f64], skip: Option<usize>) -> bool {
        let rs = self.params.sphere_radius;
        let ro = self.params.depletion_radius();
        let ss2 = 4.0 * rs * rs;
        let sp2 = ro * ro;
        let m = &self.metric;
        let mut ok = true;
        let spheres = &self.state.spheres;
        match kind {
            BallKind::Sphere => {
                let skip = skip.unwrap_or(usize::MAX);
                self.sphere_cells.for_each_near(x, |j| {
                    ok &= j == skip || m.dist2(x, spheres.get(j)) >= ss2;
                });
                if !ok {
                    return false;
                }
                let particles = &self.state.particles;
                self.particle_cells
                    .for_each_near(x, |j| ok &= m.dist2(x, particles.get(j)) >= sp2);
                self.frozen_spheres.for_each_near(x, |y| ok &= m.dist2(x, y) >= ss2);
                self.frozen_particles.for_each_near(x, |y| ok &= m.dist2(x, y) >= sp2);
            }
            BallKind::Particle => {
                self.sphere_cells
                    .for_each_near(x, |j| ok &= m.dist2(x, spheres.get(j)) >= sp2);
                self.frozen_spheres.for_each_near(x, |y| ok &= m.dist2(x, y) >= sp2);
            }
        }
        ok
    }

    /// Pairwise uncovered shell volume of a sphere at `x`, ignoring `skip`.
    fn pairwise_gain(&self, p: &DepletionParams, x: &[f64], skip: Option<usize>) -> f64 {
        let skip = skip.unwrap_or(usize::MAX);
        let c2 = 4.0 * p.depletion_radius * p.depletion_radius;
        let m = &self.metric;
        let spheres = &self.state.spheres;
        let mut v = p.shell_volume();
        let mut take = |d2: f64| {
            if d2 < c2 {
                // hard core already checked, so the overlap is in range
                v -= pair_overlap(d2.sqrt(), p).unwrap_or(0.0);
            }
        };
        self.sphere_cells.for_each_near(x, |j| {
            if j != skip {
                take(m.dist2(x, spheres.get(j)));
            }
        });
        self.frozen_spheres.for_each_near(x, |y| take(m.dist2(x, y)));
        v
    }

    /// Log of the density ratio for adding a ball at `x` to the rest, given
    /// the ball is admissible (`-psi(x)` or `-z_p * gain`).
    fn log_weight(&self, kind: BallKind, x: &[f64], skip: Option<usize>) -> f64 {
        match (&self.params.model, &self.energy) {
            (GibbsModel::TwoTypePenalised(field), _) => -field.value(x, kind),
            (_, EnergyState::Pairwise { params, .. }) => {
                -self.params.particle_activity * self.pairwise_gain(params, x, skip)
            }
            (_, EnergyState::Lattice(l)) => {
                let g = match skip {
                    None => l.gain(x),
                    Some(i) => l.gain_moving(self.state.spheres.get(i), x, &self.metric),
                };
                -self.params.particle_activity * g as f64 * l.cell_volume()
            }
            _ => 0.0,
        }
    }

    fn log_weight_present(&self, kind: BallKind, index: usize) -> f64 {
        let x = self.state.set(kind).get(index);
        match &self.energy {
            EnergyState::Lattice(l) => -self.params.particle_activity * l.loss(x) as f64 * l.cell_volume(),
            _ => self.log_weight(kind, x, Some(index)),
        }
    }

    fn mix_ratio(&self) -> f64 {
        self.params.moves.death / self.params.moves.birth
    }

    /// Acceptance probability of adding a ball of `kind` at `x`.
    pub fn birth_acceptance(&self, kind: BallKind, x: &[f64]) -> f64 {
        let n = self.state.set(kind).len();
        if self.cap(kind).is_some_and(|c| n >= c) || !self.params.window.contains(x) || !self.admissible(kind, x, None) {
            return 0.0;
        }
        let zw = self.activity(kind) * self.volume;
        if zw == 0.0 {
            return 0.0;
        }
        let a = self.mix_ratio() * zw / (n as f64 + 1.0) * self.log_weight(kind, x, None).exp();
        a.min(1.0)
    }

    /// Acceptance probability of removing ball `index` of `kind`.
    pub fn death_acceptance(&self, kind: BallKind, index: usize) -> f64 {
        let n = self.state.set(kind).len();
        assert!(index < n, "death of a missing ball");
        let zw = self.activity(kind) * self.volume;
        if zw == 0.0 {
            return 1.0;
        }
        let a = n as f64 / (self.mix_ratio() * zw) * (-self.log_weight_present(kind, index)).exp();
        a.min(1.0)
    }

    /// Acceptance probability of moving ball `index` of `kind` to `to`.
    pub fn translate_acceptance(&self, kind: BallKind, index: usize, to: &[f64]) -> f64 {
        if !self.params.window.contains(to) {
            return 0.0;
        }
        let skip = (kind == BallKind::Sphere).then_some(index);
        if !self.admissible(kind, to, skip) {
            return 0.0;
        }
        let log = match (&self.params.model, &self.energy) {
            (GibbsModel::TwoTypePenalised(field), _) => {
                field.value(self.state.set(kind).get(index), kind) - field.value(to, kind)
            }
            (_, EnergyState::None) => 0.0,
            _ => self.log_weight(kind, to, Some(index)) - self.log_weight_present(kind, index),
        };
        log.exp().min(1.0)
    }

    fn insert(&mut self, kind: BallKind, id: u64, x: &[f64]) {
        if kind == BallKind::Sphere {
            let gain = match &self.energy {
                EnergyState::Pairwise { params, .. } => self.pairwise_gain(params, x, None),
                _ => 0.0,
            };
            match &mut self.energy {
                EnergyState::Pairwise { value, .. } => *value += gain,
                EnergyState::Lattice(l) => l.add(x),
                EnergyState::None => {}
            }
        }
        let set = self.state.set_mut(kind);
        let index = set.len();
        set.push(id, x);
        match kind {
            BallKind::Sphere => self.sphere_cells.insert(index, x),
            BallKind::Particle => self.particle_cells.insert(index, x),
        }
    }

    fn birth(&mut self, kind: BallKind, x: &[f64]) {
        let id = self.next_ids[slot(kind)];
        self.next_ids[slot(kind)] += 1;
        self.insert(kind, id, x);
    }

    fn death(&mut self, kind: BallKind, index: usize) {
        let x = self.state.set(kind).get(index).to_vec();
        if kind == BallKind::Sphere {
            let loss = match &self.energy {
                EnergyState::Pairwise { params, .. } => self.pairwise_gain(params, &x, Some(index)),
                _ => 0.0,
            };
            match &mut self.energy {
                EnergyState::Pairwise { value, .. } => *value -= loss,
                EnergyState::Lattice(l) => l.remove(&x),
                EnergyState::None => {}
            }
        }
        let last = self.state.set(kind).len() - 1;
        let last_pos = self.state.set(kind).get(last).to_vec();
        match kind {
            BallKind::Sphere => self.sphere_cells.swap_remove(index, &x, last, &last_pos),
            BallKind::Particle => self.particle_cells.swap_remove(index, &x, last, &last_pos),
        }
        self.state.set_mut(kind).swap_remove(index);
    }

    fn translate(&mut self, kind: BallKind, index: usize, to: &[f64]) {
        let from = self.state.set(kind).get(index).to_vec();
        if kind == BallKind::Sphere {
            let delta = match &self.energy {
                EnergyState::Pairwise { params, .. } => {
                    self.pairwise_gain(params, to, Some(index)) - self.pairwise_gain(params, &from, Some(index))
                }
                _ => 0.0,
            };
            match &mut self.energy {
                EnergyState::Pairwise { value, .. } => *value += delta,
                EnergyState::Lattice(l) => {
                    l.remove(&from);
                    l.add(to);
                }
                EnergyState::None => {}
            }
        }
        match kind {
            BallKind::Sphere => self.sphere_cells.relocate(index, &from, to),
            BallKind::Particle => self.particle_cells.relocate(index, &from, to),
        }
        self.state.set_mut(kind).get_mut(index).copy_from_slice(to);
    }

    /// One kernel application. Returns the proposed move and whether it was
    /// accepted.
    pub fn step<G: Rng + ?Sized>(&mut self, rng: &mut G) -> (MoveKind, bool) {
        let m = self.params.moves;
        let u = rng.random::<f64>() * (m.birth + m.death + m.translate);
        let mv = if u < m.birth {
            MoveKind::Birth
        } else if u < m.birth + m.death {
            MoveKind::Death
        } else {
            MoveKind::Translate
        };
        let kind = if self.params.model.is_one_type() || rng.random::<bool>() {
            BallKind::Sphere
        } else {
            BallKind::Particle
        };
        let mut x = std::mem::take(&mut self.scratch);
        let accepted = match mv {
            MoveKind::Birth => {
                self.params.window.sample_uniform(rng, &mut x);
                let a = self.birth_acceptance(kind, &x);
                let ok = a > 0.0 && rng.random::<f64>() < a;
                if ok {
                    self.birth(kind, &x);
                }
                ok
            }
            MoveKind::Death => {
                let n = self.state.set(kind).len();
                if n == 0 {
                    false
                } else {
                    let i = rng.random_range(0..n);
                    let a = self.death_acceptance(kind, i);
                    let ok = rng.random::<f64>() < a;
                    if ok {
                        self.death(kind, i);
                    }
                    ok
                }
            }
            MoveKind::Translate => {
                let n = self.state.set(kind).len();
                if n == 0 {
                    false
                } else {
                    let i = rng.random_range(0..n);
                    let from = self.state.set(kind).get(i);
                    for k in 0..x.len() {
                        let g: f64 = rng.sample(StandardNormal);
                        x[k] = from[k] + self.params.kick * g;
                    }
                    if self.params.window.admit(&mut x) {
                        let a = self.translate_acceptance(kind, i, &x);
                        let ok = a > 0.0 && rng.random::<f64>() < a;
                        if ok {
                            self.translate(kind, i, &x);
                        }
                        ok
                    } else {
                        false
                    }
                }
            }
        };
        self.scratch = x;
        self.stats.proposed[mv.slot()] += 1;
        if accepted {
            self.stats.accepted[mv.slot()] += 1;
        }
        let every = self.params.energy_check_every;
        if every > 0 && self.stats.total_moves() % every == 0 {
            // the pairwise backend has been validated, so this cannot fail
            let _ = self.check_energy();
        }
        (mv, accepted)
    }

    pub fn run<G: Rng + ?Sized>(&mut self, steps: u64, rng: &mut G) {
        for _ in 0..steps {
            self.step(rng);
        }
    }

    /// Runs `burn_in` steps, then calls `observe(k, self)` after each of
    /// `count` blocks of `thin` steps.
    pub fn observe<G, F>(&mut self, burn_in: u64, thin: u64, count: usize, rng: &mut G, mut observe: F)
    where
        G: Rng + ?Sized,
        F: FnMut(usize, &Sampler),
    {
        self.run(burn_in, rng);
        for k in 0..count {
            self.run(thin, rng);
            observe(k, self);
        }
    }
}

/// One kernel application on `sampler`.
pub fn mcmc_step<G: Rng + ?Sized>(sampler: &mut Sampler, rng: &mut G) -> (MoveKind, bool) {
    sampler.step(rng)
}

/// Thinned draws of a chain started from the empty configuration.
#[derive(Clone, Debug)]
pub struct SampleRun {
    pub configurations: Vec<TwoTypeConfiguration>,
    /// Cached one-type energy at each draw (0 for two-type models).
    pub energies: Vec<f64>,
    pub stats: MoveStats,
}

pub fn sample<G: Rng + ?Sized>(
    params: &GibbsModelParams,
    burn_in: u64,
    thin: u64,
    count: usize,
    rng: &mut G,
) -> Result<SampleRun, GibbsError> {
    if count == 0 || thin == 0 {
        return Err(GibbsError::Invalid("count and thin must be at least 1".into()));
    }
    let mut s = Sampler::new(params.clone())?;
    let mut configurations = Vec::with_capacity(count);
    let mut energies = Vec::with_capacity(count);
    s.observe(burn_in, thin, count, rng, |_, s| {
        configurations.push(s.state().clone());
        energies.push(s.energy());
    });
    Ok(SampleRun {
        configurations,
        energies,
        stats: *s.stats(),
    })
}
