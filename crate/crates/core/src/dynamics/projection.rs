use std::collections::BTreeSet;

use super::{DynamicsError, LocalTimeLedger, OffendingPair, PairKind};
use crate::geometry::{Metric, NeighborGrid, TwoTypeConfiguration};

/// Contact geometry and reflection weights used by the projection.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ContactRules {
    pub sphere_contact: f64,
    pub mixed_contact: f64,
    /// Squared particle diffusion coefficient; sets the 1 : sigma^2 split.
    pub sigma2: f64,
    pub max_sweeps: usize,
    pub tolerance: f64,
}

#[derive(Clone, Debug)]
struct Constraint {
    kind: PairKind,
    a: usize,
    b: usize,
    contact: f64,
    wa: f64,
    wb: f64,
    lambda: f64,
}

/// Outcome of one projection.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ProjectionReport {
    pub sweeps: usize,
    /// Pairs left at contact with a positive push.
    pub active: usize,
}

fn overlapping(config: &TwoTypeConfiguration, metric: &Metric, rules: &ContactRules, shift: f64) -> Vec<(PairKind, usize, usize)> {
    let spheres = &config.spheres;
    let mut out = Vec::new();
    if spheres.is_empty() {
        return out;
    }
    let grid = NeighborGrid::build(spheres, metric, rules.sphere_contact.max(rules.mixed_contact));
    let ss = (rules.sphere_contact - shift).max(0.0);
    let ss2 = ss * ss;
    for i in 0..spheres.len() {
        let xi = spheres.get(i);
        grid.for_each_near(xi, |j| {
            if j > i && metric.dist2(xi, spheres.get(j)) < ss2 {
                out.push((PairKind::SphereSphere, i, j));
            }
        });
    }
    let sp = (rules.mixed_contact - shift).max(0.0);
    let sp2 = sp * sp;
    for k in 0..config.particles.len() {
        let xk = config.particles.get(k);
        grid.for_each_near(xk, |i| {
            if metric.dist2(spheres.get(i), xk) < sp2 {
                out.push((PairKind::SphereParticle, i, k));
            }
        });
    }
    out
}

fn make_constraint(kind: PairKind, a: usize, b: usize, rules: &ContactRules) -> Constraint {
    match kind {
        PairKind::SphereSphere => Constraint {
            kind,
            a,
            b,
            contact: rules.sphere_contact,
            wa: 0.5,
            wb: 0.5,
            lambda: 0.0,
        },
        PairKind::SphereParticle => Constraint {
            kind,
            a,
            b,
            contact: rules.mixed_contact,
            wa: 1.0 / (1.0 + rules.sigma2),
            wb: rules.sigma2 / (1.0 + rules.sigma2),
            lambda: 0.0,
        },
    }
}

/// Current separation vector (b to a) and its length.
fn separation(config: &TwoTypeConfiguration, metric: &Metric, c: &Constraint, n: &mut [f64]) -> f64 {
    let xa = config.spheres.get(c.a);
    let xb = match c.kind {
        PairKind::SphereSphere => config.spheres.get(c.b),
        PairKind::SphereParticle => config.particles.get(c.b),
    };
    metric.delta(xa, xb, n);
    n.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn apply(config: &mut TwoTypeConfiguration, c: &Constraint, n: &[f64], r: f64, delta: f64) {
    let d = n.len();
    let mut unit = [0.0f64; 16];
    let unit = &mut unit[..d.min(16)];
    if r > 0.0 {
        for k in 0..d {
            unit[k] = n[k] / r;
        }
    } else {
        // coincident centres: separate along the first axis
        unit.fill(0.0);
        unit[0] = 1.0;
    }
    let xa = config.spheres.get_mut(c.a);
    for k in 0..d {
        xa[k] += c.wa * delta * unit[k];
    }
    let xb = match c.kind {
        PairKind::SphereSphere => config.spheres.get_mut(c.b),
        PairKind::SphereParticle => config.particles.get_mut(c.b),
    };
    for k in 0..d {
        xb[k] -= c.wb * delta * unit[k];
    }
}

/// Projected Gauss-Seidel on accumulated non-negative pair pushes.
///
/// Each pair carries a push `lambda >= 0` (total relative displacement along
/// the centre line). A visit sets the pair exactly to contact if that keeps
/// `lambda >= 0`, otherwise releases it. On convergence no pair overlaps by
/// more than the tolerance and every pushed pair sits at contact within it.
pub(crate) fn project(
    config: &mut TwoTypeConfiguration,
    metric: &Metric,
    rules: &ContactRules,
    ledger: &mut LocalTimeLedger,
) -> Result<ProjectionReport, DynamicsError> {
    let d = config.dim();
    assert!(d <= 16, "projection supports d <= 16");
    let mut cons: Vec<Constraint> = Vec::new();
    let mut known: BTreeSet<(PairKind, usize, usize)> = BTreeSet::new();
    let add = |found: Vec<(PairKind, usize, usize)>, cons: &mut Vec<Constraint>, known: &mut BTreeSet<_>| {
        let mut added = 0;
        for key in found {
            if known.insert(key) {
                cons.push(make_constraint(key.0, key.1, key.2, rules));
                added += 1;
            }
        }
        added
    };
    add(overlapping(config, metric, rules, 0.0), &mut cons, &mut known);
    if cons.is_empty() {
        return Ok(ProjectionReport::default());
    }
    let tol = rules.tolerance;
    let mut n = vec![0.0; d];
    let mut sweeps = 0;
    loop {
        // fixed (kind, a, b) visiting order
        cons.sort_by_key(|c| (c.kind, c.a, c.b));
        let mut converged = false;
        while sweeps < rules.max_sweeps {
            sweeps += 1;
            for c in cons.iter_mut() {
                let r = separation(config, metric, c, &mut n);
                let new_lambda = (c.lambda + (c.contact - r)).max(0.0);
                let delta = new_lambda - c.lambda;
                if delta != 0.0 {
                    apply(config, c, &n, r, delta);
                    c.lambda = new_lambda;
                }
            }
            let residual = cons
                .iter()
                .map(|c| {
                    let gap = separation(config, metric, c, &mut n) - c.contact;
                    if c.lambda > 0.0 {
                        gap.abs()
                    } else {
                        (-gap).max(0.0)
                    }
                })
                .fold(0.0, f64::max);
            if residual <= tol {
                converged = true;
                break;
            }
        }
        if !converged {
            let pairs = cons
                .iter()
                .filter_map(|c| {
                    let gap = separation(config, metric, c, &mut n) - c.contact;
                    let bad = if c.lambda > 0.0 { gap.abs() > tol } else { gap < -tol };
                    bad.then(|| offending(config, c, gap))
                })
                .collect();
            return Err(DynamicsError::ProjectionFailed { sweeps, pairs });
        }
        let found = overlapping(config, metric, rules, tol);
        if add(found, &mut cons, &mut known) == 0 {
            break;
        }
    }
    let mut active = 0;
    for c in &cons {
        if c.lambda > 0.0 {
            active += 1;
            let (ia, ib) = ids(config, c);
            let amount = match c.kind {
                PairKind::SphereSphere => c.lambda / (2.0 * c.contact),
                PairKind::SphereParticle => c.lambda / ((1.0 + rules.sigma2) * c.contact),
            };
            ledger.credit(c.kind, ia, ib, amount);
        }
    }
    Ok(ProjectionReport { sweeps, active })
}

fn ids(config: &TwoTypeConfiguration, c: &Constraint) -> (u64, u64) {
    let a = config.spheres.id(c.a);
    let b = match c.kind {
        PairKind::SphereSphere => config.spheres.id(c.b),
        PairKind::SphereParticle => config.particles.id(c.b),
    };
    (a, b)
}

fn offending(config: &TwoTypeConfiguration, c: &Constraint, gap: f64) -> OffendingPair {
    let (a, b) = ids(config, c);
    OffendingPair {
        kind: c.kind,
        a,
        b,
        gap,
    }
}
