//! Configurations of spheres and particles, simulation domains, the
//! admissibility predicate, neighbor search and union-of-balls volumes.

mod grid;
mod volume;

pub use grid::{neighbor_pairs, NeighborGrid, NeighborPair};
pub(crate) use grid::CellLayout;
pub use volume::{forbidden_region_volume, MonteCarloUnion, VolumeEstimate, VolumeMethod};

use thiserror::Error;

/// Largest particle/sphere radius ratio for which three depletion shells of
/// admissible spheres can never share a point.
pub const PAIRWISE_RATIO_MAX: f64 = 0.154_700_538_379_251_5; // 2/sqrt(3) - 1

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension must be at least 1, got {0}")]
    BadDimension(usize),
    #[error("point has {got} coordinates, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite coordinate in {kind} {id}")]
    NonFinite { kind: BallKind, id: u64 },
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: BallKind, id: u64 },
    #[error("slack must be non-negative, got {0}")]
    NegativeSlack(f64),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("triple-overlap regime: particle/sphere ratio {ratio} exceeds {max}")]
    TripleOverlapRegime { ratio: f64, max: f64 },
    #[error("hard-core violation: normalised distance {u} below {min}")]
    HardCoreViolation { u: f64, min: f64 },
}

/// The two ball types of the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BallKind {
    Sphere,
    Particle,
}

impl std::fmt::Display for BallKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BallKind::Sphere => f.write_str("sphere"),
            BallKind::Particle => f.write_str("particle"),
        }
    }
}

/// A set of points in R^d with stable integer ids, stored flat.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
    ids: Vec<u64>,
}

impl PointSet {
    pub fn new(dim: usize) -> Self {
        PointSet {
            dim,
            coords: Vec::new(),
            ids: Vec::new(),
        }
    }

    /// Builds a set from points labelled `0..n`.
    pub fn from_points<P: AsRef<[f64]>>(dim: usize, points: &[P]) -> Result<Self, GeometryError> {
        let mut set = PointSet::new(dim);
        for (i, p) in points.iter().enumerate() {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(GeometryError::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            set.push(i as u64, p);
        }
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn id(&self, i: usize) -> u64 {
        self.ids[i]
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    /// Appends a point. Id uniqueness is the caller's responsibility; see [`PointSet::validate`].
    pub fn push(&mut self, id: u64, p: &[f64]) {
        debug_assert_eq!(p.len(), self.dim);
        self.ids.push(id);
        self.coords.extend_from_slice(p);
    }

    /// Removes point `i`, moving the last point into its slot.
    pub fn swap_remove(&mut self, i: usize) -> u64 {
        let last = self.len() - 1;
        if i != last {
            let d = self.dim;
            let (head, tail) = self.coords.split_at_mut(last * d);
            head[i * d..(i + 1) * d].copy_from_slice(&tail[..d]);
        }
        self.coords.truncate(last * self.dim);
        self.ids.swap_remove(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &[f64])> + '_ {
        self.ids.iter().copied().zip(self.coords.chunks_exact(self.dim.max(1)))
    }

    /// Smallest id not yet used (max + 1).
    pub fn next_id(&self) -> u64 {
        self.ids.iter().max().map_or(0, |m| m + 1)
    }

    /// Checks finiteness of coordinates and uniqueness of ids.
    pub fn validate(&self, kind: BallKind) -> Result<(), GeometryError> {
        for (id, p) in self.iter() {
            if p.iter().any(|x| !x.is_finite()) {
                return Err(GeometryError::NonFinite { kind, id });
            }
        }
        let mut ids = self.ids.clone();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(GeometryError::DuplicateId { kind, id: w[0] });
        }
        Ok(())
    }
}

/// Finite two-type configuration: sphere centres and particle centres.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TwoTypeConfiguration {
    pub spheres: PointSet,
    pub particles: PointSet,
}

impl TwoTypeConfiguration {
    pub fn empty(dim: usize) -> Self {
        TwoTypeConfiguration {
            spheres: PointSet::new(dim),
            particles: PointSet::new(dim),
        }
    }

    pub fn new(spheres: PointSet, particles: PointSet) -> Result<Self, GeometryError> {
        if spheres.dim() != particles.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: spheres.dim(),
                got: particles.dim(),
            });
        }
        let c = TwoTypeConfiguration { spheres, particles };
        c.validate()?;
        Ok(c)
    }

    pub fn dim(&self) -> usize {
        self.spheres.dim()
    }

    pub fn set(&self, kind: BallKind) -> &PointSet {
        match kind {
            BallKind::Sphere => &self.spheres,
            BallKind::Particle => &self.particles,
        }
    }

    pub fn set_mut(&mut self, kind: BallKind) -> &mut PointSet {
        match kind {
            BallKind::Sphere => &mut self.spheres,
            BallKind::Particle => &mut self.particles,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        self.spheres.validate(BallKind::Sphere)?;
        self.particles.validate(BallKind::Particle)
    }
}

/// Where the balls live.
#[derive(Clone, Debug, PartialEq)]
pub enum Container {
    /// Unbounded R^d with nothing outside the configuration.
    Open,
    /// The ball B(0, radius); `exterior` holds the frozen balls outside it.
    Ball {
        radius: f64,
        exterior: TwoTypeConfiguration,
    },
    /// Torus [0, L_1) x ... x [0, L_d) with minimum-image distances.
    Periodic { sides: Vec<f64> },
}

/// Distance convention: Euclidean or minimum image on a periodic box.
#[derive(Clone, Debug, PartialEq)]
pub enum Metric {
    Euclidean,
    Periodic(Vec<f64>),
}

impl Metric {
    /// Writes `a - b` (minimum image when periodic) into `out`.
    #[inline]
    pub fn delta(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        match self {
            Metric::Euclidean => {
                for k in 0..a.len() {
                    out[k] = a[k] - b[k];
                }
            }
            Metric::Periodic(sides) => {
                for k in 0..a.len() {
                    let l = sides[k];
                    let mut v = a[k] - b[k];
                    v -= l * (v / l).round();
                    out[k] = v;
                }
            }
        }
    }

    #[inline]
    pub fn dist2(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
            Metric::Periodic(sides) => {
                let mut s = 0.0;
                for k in 0..a.len() {
                    let l = sides[k];
                    let mut v = a[k] - b[k];
                    v -= l * (v / l).round();
                    s += v * v;
                }
                s
            }
        }
    }

    /// Maps a point back into the fundamental box (no-op for Euclidean).
    #[inline]
    pub fn wrap(&self, x: &mut [f64]) {
        if let Metric::Periodic(sides) = self {
            for (v, &l) in x.iter_mut().zip(sides) {
                *v = v.rem_euclid(l);
                if *v >= l {
                    *v = 0.0;
                }
            }
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Metric::Periodic(_))
    }
}

/// Dimension, radii, diffusion coefficient and container.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationDomain {
    dim: usize,
    sphere_radius: f64,
    particle_radius: f64,
    sigma: f64,
    container: Container,
}

impl SimulationDomain {
    pub fn new(
        dim: usize,
        sphere_radius: f64,
        particle_radius: f64,
        sigma: f64,
        container: Container,
    ) -> Result<Self, GeometryError> {
        if dim == 0 {
            return Err(GeometryError::BadDimension(dim));
        }
        let mut problems = Vec::new();
        if !(sphere_radius > 0.0 && sphere_radius.is_finite()) {
            problems.push(format!("sphere radius must be positive, got {sphere_radius}"));
        }
        if !(particle_radius > 0.0 && particle_radius < sphere_radius) {
            problems.push(format!(
                "particle radius must lie in (0, sphere radius), got {particle_radius}"
            ));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            problems.push(format!("diffusion coefficient must be positive, got {sigma}"));
        }
        match &container {
            Container::Open => {}
            Container::Ball { radius, exterior } => {
                if !(*radius > 2.0 * sphere_radius && radius.is_finite()) {
                    problems.push(format!("ball radius must exceed 2 * sphere radius, got {radius}"));
                }
                if exterior.dim() != dim {
                    problems.push("exterior configuration has the wrong dimension".into());
                }
                if let Err(e) = exterior.validate() {
                    problems.push(format!("exterior: {e}"));
                }
                let r2 = radius * radius;
                for kind in [BallKind::Sphere, BallKind::Particle] {
                    for (id, p) in exterior.set(kind).iter() {
                        if norm2(p) < r2 {
                            problems.push(format!("exterior {kind} {id} lies inside the ball"));
                        }
                    }
                }
            }
            Container::Periodic { sides } => {
                if sides.len() != dim {
                    problems.push(format!("periodic box needs {dim} sides, got {}", sides.len()));
                }
                if sides.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
                    problems.push("periodic box sides must be positive".into());
                }
            }
        }
        if problems.is_empty() {
            Ok(SimulationDomain {
                dim,
                sphere_radius,
                particle_radius,
                sigma,
                container,
            })
        } else {
            Err(GeometryError::InvalidDomain(problems.join("; ")))
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn sphere_radius(&self) -> f64 {
        self.sphere_radius
    }
    pub fn particle_radius(&self) -> f64 {
        self.particle_radius
    }
    /// r_s + r_p.
    pub fn depletion_radius(&self) -> f64 {
        self.sphere_radius + self.particle_radius
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn container(&self) -> &Container {
        &self.container
    }

    pub fn metric(&self) -> Metric {
        match &self.container {
            Container::Periodic { sides } => Metric::Periodic(sides.clone()),
            _ => Metric::Euclidean,
        }
    }

    /// Frozen exterior, if the container is a ball.
    pub fn exterior(&self) -> Option<&TwoTypeConfiguration> {
        match &self.container {
            Container::Ball { exterior, .. } => Some(exterior),
            _ => None,
        }
    }

    pub fn is_pairwise_regime(&self) -> bool {
        self.particle_radius / self.sphere_radius <= PAIRWISE_RATIO_MAX
    }

    /// Same radii and diffusion, different container.
    pub fn with_container(&self, container: Container) -> Result<Self, GeometryError> {
        SimulationDomain::new(
            self.dim,
            self.sphere_radius,
            self.particle_radius,
            self.sigma,
            container,
        )
    }
}

#[inline]
pub(crate) fn norm2(p: &[f64]) -> f64 {
    p.iter().map(|x| x * x).sum()
}

/// Whether `config` is an allowed configuration up to `slack`.
///
/// Sphere pairs must be at least `2 r_s - slack` apart and sphere-particle
/// pairs at least `r_s + r_p - slack`. Distances are minimum-image on a
/// periodic container; on a ball container the frozen exterior takes part.
pub fn is_admissible(
    config: &TwoTypeConfiguration,
    dom: &SimulationDomain,
    slack: f64,
) -> Result<bool, GeometryError> {
    if !(slack >= 0.0) {
        return Err(GeometryError::NegativeSlack(slack));
    }
    config.validate()?;
    if config.dim() != dom.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: dom.dim(),
            got: config.dim(),
        });
    }
    let metric = dom.metric();
    let ss = (2.0 * dom.sphere_radius() - slack).max(0.0);
    let sp = (dom.depletion_radius() - slack).max(0.0);
    if !admissible_with(config, &metric, ss, sp) {
        return Ok(false);
    }
    if let Some(ext) = dom.exterior() {
        let ss2 = ss * ss;
        let sp2 = sp * sp;
        for (_, x) in config.spheres.iter() {
            if ext.spheres.iter().any(|(_, y)| metric.dist2(x, y) < ss2)
                || ext.particles.iter().any(|(_, y)| metric.dist2(x, y) < sp2)
            {
                return Ok(false);
            }
        }
        for (_, x) in config.particles.iter() {
            if ext.spheres.iter().any(|(_, y)| metric.dist2(x, y) < sp2) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Interior-only admissibility with explicit contact distances.
pub(crate) fn admissible_with(
    config: &TwoTypeConfiguration,
    metric: &Metric,
    sphere_contact: f64,
    mixed_contact: f64,
) -> bool {
    let spheres = &config.spheres;
    if spheres.is_empty() {
        return true;
    }
    let cutoff = sphere_contact.max(mixed_contact).max(f64::MIN_POSITIVE);
    let grid = NeighborGrid::build(spheres, metric, cutoff);
    let ss2 = sphere_contact * sphere_contact;
    for i in 0..spheres.len() {
        let xi = spheres.get(i);
        let mut ok = true;
        grid.for_each_near(xi, |j| {
            if j > i && metric.dist2(xi, spheres.get(j)) < ss2 {
                ok = false;
            }
        });
        if !ok {
            return false;
        }
    }
    let sp2 = mixed_contact * mixed_contact;
    for (_, p) in config.particles.iter() {
        let mut ok = true;
        grid.for_each_near(p, |j| {
            if metric.dist2(p, spheres.get(j)) < sp2 {
                ok = false;
            }
        });
        if !ok {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dom2(rs: f64, rp: f64) -> SimulationDomain {
        SimulationDomain::new(2, rs, rp, 1.0, Container::Open).unwrap()
    }

    fn config(spheres: &[[f64; 2]], particles: &[[f64; 2]]) -> TwoTypeConfiguration {
        TwoTypeConfiguration::new(
            PointSet::from_points(2, spheres).unwrap(),
            PointSet::from_points(2, particles).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn contact_is_allowed() {
        let d = dom2(0.5, 0.1);
        let c = config(&[[0.0, 0.0], [1.0, 0.0]], &[]);
        assert!(is_admissible(&c, &d, 0.0).unwrap());
    }

    #[test]
    fn particle_inside_shell_rejected() {
        let d = dom2(0.5, 0.1);
        let c = config(&[[0.0, 0.0]], &[[0.99 * 0.6, 0.0]]);
        assert!(!is_admissible(&c, &d, 0.0).unwrap());
    }

    #[test]
    fn particle_between_two_spheres() {
        // |(0.5, 0.62)| = 0.7965 >= 0.6 on both sides
        let d = dom2(0.5, 0.1);
        let c = config(&[[0.0, 0.0], [1.0, 0.0]], &[[0.5, 0.62]]);
        assert!(is_admissible(&c, &d, 0.0).unwrap());
    }

    #[test]
    fn slack_and_finiteness_errors() {
        let d = dom2(0.5, 0.1);
        let c = config(&[[0.0, 0.0]], &[]);
        assert_eq!(
            is_admissible(&c, &d, -1.0),
            Err(GeometryError::NegativeSlack(-1.0))
        );
        let mut bad = c.clone();
        bad.spheres.get_mut(0)[1] = f64::NAN;
        assert!(matches!(
            is_admissible(&bad, &d, 0.0),
            Err(GeometryError::NonFinite { .. })
        ));
    }

    #[test]
    fn periodic_minimum_image() {
        let d = SimulationDomain::new(
            2,
            0.5,
            0.1,
            1.0,
            Container::Periodic {
                sides: vec![4.0, 4.0],
            },
        )
        .unwrap();
        // 0.2 and 3.9 are 0.3 apart through the boundary
        let c = config(&[[0.2, 1.0], [3.9, 1.0]], &[]);
        assert!(!is_admissible(&c, &d, 0.0).unwrap());
        let c = config(&[[0.5, 1.0], [3.5, 1.0]], &[]);
        assert!(is_admissible(&c, &d, 0.0).unwrap());
    }

    #[test]
    fn exterior_participates_in_ball_container() {
        let ext = config(&[[3.2, 0.0]], &[]);
        let d = SimulationDomain::new(
            2,
            0.5,
            0.1,
            1.0,
            Container::Ball {
                radius: 3.0,
                exterior: ext,
            },
        )
        .unwrap();
        let c = config(&[[2.5, 0.0]], &[]);
        assert!(!is_admissible(&c, &d, 0.0).unwrap());
        let c = config(&[[2.0, 0.0]], &[]);
        assert!(is_admissible(&c, &d, 0.0).unwrap());
    }

    #[test]
    fn domain_validation() {
        assert!(SimulationDomain::new(2, 0.5, 0.5, 1.0, Container::Open).is_err());
        assert!(SimulationDomain::new(2, 0.5, 0.1, 0.0, Container::Open).is_err());
        assert!(SimulationDomain::new(
            2,
            0.5,
            0.1,
            1.0,
            Container::Ball {
                radius: 0.9,
                exterior: TwoTypeConfiguration::empty(2)
            }
        )
        .is_err());
        let inside = config(&[[0.0, 0.0]], &[]);
        assert!(SimulationDomain::new(
            2,
            0.5,
            0.1,
            1.0,
            Container::Ball {
                radius: 5.0,
                exterior: inside
            }
        )
        .is_err());
    }

    #[test]
    fn swap_remove_keeps_coordinates_aligned() {
        let mut s = PointSet::from_points(2, &[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).unwrap();
        assert_eq!(s.swap_remove(0), 0);
        assert_eq!(s.id(0), 2);
        assert_eq!(s.get(0), &[2.0, 2.0]);
        assert_eq!(s.get(1), &[1.0, 1.0]);
        assert_eq!(s.next_id(), 3);
    }
}
