//! Pairwise depletion potential between spheres and the derived energies.
//!
//! With `r = r_s + r_p` and `u = |x - y| / (2r)`, the overlap volume of two
//! depletion shells is
//!
//! ```text
//! V_ovlap(u) = 2 V_{d-1} r^d * int_0^{acos u} sin^d(t) dt    for u in [r_s/r, 1]
//! ```
//!
//! and zero for `u >= 1`. The energy of a sphere configuration is the volume
//! of the union of its shells.

use super::geometry::{
    neighbor_pairs, GeometryError, Metric, MonteCarloUnion, NeighborGrid, PointSet,
    SimulationDomain, VolumeEstimate, PAIRWISE_RATIO_MAX,
};

/// Relative tolerance below `u_min` that is still treated as contact.
const CONTACT_REL_TOL: f64 = 1e-9;

/// Parameters of the one-type effective model.
#[derive(Clone, Debug, PartialEq)]
pub struct DepletionParams {
    pub dim: usize,
    pub sphere_radius: f64,
    pub particle_radius: f64,
    pub depletion_radius: f64,
    /// Particle activity; acts as the inverse temperature of the potential.
    pub particle_activity: f64,
    /// Volume of the unit ball in dimension `dim`.
    pub vd: f64,
    /// Volume of the unit ball in dimension `dim - 1`.
    pub vd_minus_1: f64,
    /// Sample count for the Monte Carlo fallback outside the pairwise regime.
    pub mc_samples: usize,
    pub mc_seed: u64,
}

impl DepletionParams {
    pub fn new(
        dim: usize,
        sphere_radius: f64,
        particle_radius: f64,
        particle_activity: f64,
    ) -> Result<Self, GeometryError> {
        if dim < 2 {
            return Err(GeometryError::BadDimension(dim));
        }
        if !(sphere_radius > 0.0 && particle_radius > 0.0 && particle_radius < sphere_radius) {
            return Err(GeometryError::InvalidDomain(format!(
                "radii must satisfy 0 < particle radius < sphere radius, got {particle_radius} and {sphere_radius}"
            )));
        }
        if !(particle_activity >= 0.0 && particle_activity.is_finite()) {
            return Err(GeometryError::InvalidDomain(format!(
                "particle activity must be finite and non-negative, got {particle_activity}"
            )));
        }
        Ok(DepletionParams {
            dim,
            sphere_radius,
            particle_radius,
            depletion_radius: sphere_radius + particle_radius,
            particle_activity,
            vd: unit_ball_volume(dim),
            vd_minus_1: unit_ball_volume(dim - 1),
            mc_samples: 1_000_000,
            mc_seed: 0,
        })
    }

    pub fn from_domain(dom: &SimulationDomain, particle_activity: f64) -> Result<Self, GeometryError> {
        DepletionParams::new(
            dom.dim(),
            dom.sphere_radius(),
            dom.particle_radius(),
            particle_activity,
        )
    }

    /// Smallest admissible normalised distance, `r_s / (r_s + r_p)`.
    pub fn u_min(&self) -> f64 {
        self.sphere_radius / self.depletion_radius
    }

    pub fn ratio(&self) -> f64 {
        self.particle_radius / self.sphere_radius
    }

    pub fn is_pairwise_regime(&self) -> bool {
        self.ratio() <= PAIRWISE_RATIO_MAX
    }

    /// Volume of a single depletion shell.
    pub fn shell_volume(&self) -> f64 {
        self.vd * self.depletion_radius.powi(self.dim as i32)
    }

    /// Largest value of the potential, reached at contact.
    pub fn max_overlap(&self) -> f64 {
        v_ovlap(self.u_min(), self).expect("contact is admissible")
    }

    fn require_pairwise(&self) -> Result<(), GeometryError> {
        if self.is_pairwise_regime() {
            Ok(())
        } else {
            Err(GeometryError::TripleOverlapRegime {
                ratio: self.ratio(),
                max: PAIRWISE_RATIO_MAX,
            })
        }
    }
}

/// Volume of the unit ball in R^d.
pub fn unit_ball_volume(d: usize) -> f64 {
    let (mut v, start) = if d % 2 == 0 { (1.0, 2) } else { (2.0, 3) };
    let mut k = start;
    while k <= d {
        v *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    v
}

/// `int_0^theta sin^n(t) dt` by the reduction formula.
pub fn sin_power_integral(n: usize, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let mut prev = theta; // I_0
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 - c; // I_1
    let mut k = 1;
    // s^(k-1), updated as k grows
    let mut sp = 1.0;
    while k < n {
        k += 1;
        sp *= s;
        let next = (-c * sp + (k - 1) as f64 * prev) / k as f64;
        prev = cur;
        cur = next;
    }
    cur
}

fn check_u(u: f64, p: &DepletionParams) -> Result<f64, GeometryError> {
    let umin = p.u_min();
    if u.is_nan() || u < umin * (1.0 - CONTACT_REL_TOL) {
        return Err(GeometryError::HardCoreViolation { u, min: umin });
    }
    Ok(u.max(umin))
}

/// Overlap volume of two shells at normalised distance `u`.
pub fn v_ovlap(u: f64, p: &DepletionParams) -> Result<f64, GeometryError> {
    let u = check_u(u, p)?;
    Ok(lens_volume(u, p.dim, p.depletion_radius))
}

/// Derivative of [`v_ovlap`] in `u`. In d = 2 it jumps at `u = 1`, where the
/// left limit `0` is returned.
pub fn v_ovlap_prime(u: f64, p: &DepletionParams) -> Result<f64, GeometryError> {
    let u = check_u(u, p)?;
    Ok(lens_volume_prime(u, p.dim, p.depletion_radius))
}

/// Volume of the intersection of two balls of radius `r` in R^d whose
/// centres are `2 r u` apart, for any `u >= 0`.
pub fn lens_volume(u: f64, d: usize, r: f64) -> f64 {
    if u >= 1.0 {
        return 0.0;
    }
    let u = u.max(0.0);
    if d == 3 {
        return 2.0 * std::f64::consts::PI * r * r * r * (2.0 / 3.0 - u + u * u * u / 3.0);
    }
    2.0 * unit_ball_volume(d - 1) * r.powi(d as i32) * sin_power_integral(d, u.acos())
}

/// Derivative of [`lens_volume`] in `u`.
pub fn lens_volume_prime(u: f64, d: usize, r: f64) -> f64 {
    if u >= 1.0 {
        return 0.0;
    }
    -2.0 * unit_ball_volume(d - 1) * r.powi(d as i32) * radial_factor(u.max(0.0), d)
}

#[inline]
fn radial_factor(u: f64, d: usize) -> f64 {
    let w = (1.0 - u * u).max(0.0);
    if d % 2 == 1 {
        w.powi(((d - 1) / 2) as i32)
    } else {
        w.powi((d / 2 - 1) as i32) * w.sqrt()
    }
}

/// Overlap volume of the shells of two spheres whose centres are `dist` apart.
#[inline]
pub fn pair_overlap(dist: f64, p: &DepletionParams) -> Result<f64, GeometryError> {
    v_ovlap(dist / (2.0 * p.depletion_radius), p)
}

fn check_periodic(metric: &Metric, p: &DepletionParams) -> Result<(), GeometryError> {
    if let Metric::Periodic(sides) = metric {
        let min = 4.0 * p.depletion_radius;
        if sides.iter().any(|&l| l < min) {
            return Err(GeometryError::InvalidDomain(format!(
                "pairwise union volume needs periodic sides of at least {min}"
            )));
        }
    }
    Ok(())
}

/// `n V_d r^d - sum_{i<j} V_ovlap`; exact when no three shells meet.
pub fn pairwise_union_volume(
    spheres: &PointSet,
    p: &DepletionParams,
    metric: &Metric,
) -> Result<f64, GeometryError> {
    p.require_pairwise()?;
    check_periodic(metric, p)?;
    let mut v = spheres.len() as f64 * p.shell_volume();
    if spheres.is_empty() {
        return Ok(0.0);
    }
    for pair in neighbor_pairs(spheres, metric, 2.0 * p.depletion_radius) {
        v -= pair_overlap(pair.distance, p)?;
    }
    Ok(v)
}

/// Volume of the union of shells. Exact in the pairwise regime, otherwise a
/// Monte Carlo estimate using `p.mc_samples` and `p.mc_seed`.
pub fn energy(spheres: &PointSet, p: &DepletionParams, metric: &Metric) -> Result<VolumeEstimate, GeometryError> {
    if p.is_pairwise_regime() {
        return Ok(VolumeEstimate::exact(pairwise_union_volume(spheres, p, metric)?));
    }
    if spheres.is_empty() {
        return Ok(VolumeEstimate::exact(0.0));
    }
    let r = p.depletion_radius;
    let mc = MonteCarloUnion::bounding(spheres, metric, r, p.mc_samples, p.mc_seed);
    Ok(mc.estimate(spheres, metric, r))
}

/// Volume covered by the shells of `inside` but not by those of `outside`.
///
/// Only outside spheres within `2r` of an inside sphere contribute.
pub fn conditional_energy(
    inside: &PointSet,
    outside: &PointSet,
    p: &DepletionParams,
    metric: &Metric,
) -> Result<VolumeEstimate, GeometryError> {
    if inside.is_empty() {
        return Ok(VolumeEstimate::exact(0.0));
    }
    let r = p.depletion_radius;
    if p.is_pairwise_regime() {
        check_periodic(metric, p)?;
        let mut v = pairwise_union_volume(inside, p, metric)?;
        if !outside.is_empty() {
            let grid = NeighborGrid::build(outside, metric, 2.0 * r);
            let c2 = 4.0 * r * r;
            let mut err = None;
            for (_, x) in inside.iter() {
                grid.for_each_near(x, |j| {
                    let d2 = metric.dist2(x, outside.get(j));
                    if d2 < c2 && err.is_none() {
                        match pair_overlap(d2.sqrt(), p) {
                            Ok(o) => v -= o,
                            Err(e) => err = Some(e),
                        }
                    }
                });
            }
            if let Some(e) = err {
                return Err(e);
            }
        }
        return Ok(VolumeEstimate::exact(v));
    }
    let mc = MonteCarloUnion::bounding(inside, metric, r, p.mc_samples, p.mc_seed);
    let near = near_subset(outside, inside, metric, 2.0 * r);
    Ok(mc.estimate_excluding(inside, &near, metric, r))
}

fn near_subset(points: &PointSet, to: &PointSet, metric: &Metric, cutoff: f64) -> PointSet {
    let mut out = PointSet::new(points.dim());
    if to.is_empty() {
        return out;
    }
    let grid = NeighborGrid::build(to, metric, cutoff);
    let c2 = cutoff * cutoff;
    for (id, x) in points.iter() {
        let mut hit = false;
        grid.for_each_near(x, |j| hit |= metric.dist2(x, to.get(j)) < c2);
        if hit {
            out.push(id, x);
        }
    }
    out
}

/// Gradient of the pairwise energy, flattened as `n * d` values.
pub fn grad_energy(spheres: &PointSet, p: &DepletionParams, metric: &Metric) -> Result<Vec<f64>, GeometryError> {
    let mut out = vec![0.0; spheres.len() * spheres.dim()];
    grad_energy_into(spheres, p, metric, &mut out)?;
    Ok(out)
}

/// As [`grad_energy`], writing into `out` (length `n * d`).
pub fn grad_energy_into(
    spheres: &PointSet,
    p: &DepletionParams,
    metric: &Metric,
    out: &mut [f64],
) -> Result<(), GeometryError> {
    p.require_pairwise()?;
    check_periodic(metric, p)?;
    let d = spheres.dim();
    out.fill(0.0);
    if spheres.len() < 2 {
        return Ok(());
    }
    let r = p.depletion_radius;
    let range = 2.0 * r;
    let scale = p.vd_minus_1 * r.powi(d as i32 - 1);
    let grid = NeighborGrid::build(spheres, metric, range);
    let mut delta = vec![0.0; d];
    let c2 = range * range;
    for i in 0..spheres.len() {
        let xi = spheres.get(i);
        let mut coincident = false;
        grid.for_each_near(xi, |j| {
            if j == i {
                return;
            }
            metric.delta(xi, spheres.get(j), &mut delta);
            let d2: f64 = delta.iter().map(|v| v * v).sum();
            if d2 >= c2 {
                return;
            }
            if d2 == 0.0 {
                coincident = true;
                return;
            }
            let dist = d2.sqrt();
            let f = scale * radial_factor(dist / range, d) / dist;
            for k in 0..d {
                out[i * d + k] += f * delta[k];
            }
        });
        if coincident {
            return Err(GeometryError::HardCoreViolation {
                u: 0.0,
                min: p.u_min(),
            });
        }
    }
    Ok(())
}

/// Sphere activity below which clusters of interacting spheres stay finite.
pub fn critical_activity(p: &DepletionParams) -> f64 {
    let d = p.dim as i32;
    1.0 / (2f64.powi(d) * (p.depletion_radius.powi(d) - p.sphere_radius.powi(d)) * p.vd)
}

/// Small-particle asymptotic of [`critical_activity`].
pub fn critical_activity_asymptotic(p: &DepletionParams) -> f64 {
    let d = p.dim as i32;
    1.0 / (p.dim as f64 * 2f64.powi(d) * p.vd * p.sphere_radius.powi(d - 1) * p.particle_radius)
}

/// `(u, V_ovlap(u))` on `n` equally spaced points of `[u_min, 1]`.
pub fn potential_table(p: &DepletionParams, n: usize) -> Vec<(f64, f64)> {
    let umin = p.u_min();
    (0..n)
        .map(|i| {
            let u = if n == 1 {
                umin
            } else {
                umin + (1.0 - umin) * i as f64 / (n - 1) as f64
            };
            (u, v_ovlap(u, p).expect("u in range"))
        })
        .collect()
}
