use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GibbsError, GibbsModel, GibbsModelParams};
use crate::depletion::conditional_energy;
use crate::geometry::{admissible_with, BallKind, PointSet, TwoTypeConfiguration};
use crate::stats::{iid_estimate, Estimate};

const PRIMES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];
const REPLICATES: usize = 16;

/// Radical inverse of `index` in `base`: the Halton coordinate for that base.
pub fn halton(mut index: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut v = 0.0;
    while index > 0 {
        v += f * (index % b) as f64;
        index /= b;
        f *= inv;
    }
    v
}

/// Truncated grand-canonical partition sum with per-term estimates.
#[derive(Clone, Debug)]
pub struct TinyPartition {
    pub max_spheres: usize,
    pub max_particles: usize,
    /// `replicates[r][n * (max_particles + 1) + m]`: term `(n, m)` from one
    /// randomly shifted point set.
    replicates: Vec<Vec<f64>>,
}

impl TinyPartition {
    fn column(&self, f: impl Fn(&[f64]) -> f64) -> Estimate {
        let xs: Vec<f64> = self.replicates.iter().map(|r| f(r)).collect();
        iid_estimate(&xs)
    }

    fn slot(&self, n: usize, m: usize) -> usize {
        assert!(n <= self.max_spheres && m <= self.max_particles, "term outside the caps");
        n * (self.max_particles + 1) + m
    }

    /// Term `(z_s^n / n!) (z_p^m / m!) int w`.
    pub fn term(&self, n: usize, m: usize) -> Estimate {
        let k = self.slot(n, m);
        self.column(|r| r[k])
    }

    pub fn total(&self) -> Estimate {
        self.column(|r| r.iter().sum())
    }

    /// Probability of holding exactly `n` spheres and `m` particles.
    pub fn probability(&self, n: usize, m: usize) -> Estimate {
        let k = self.slot(n, m);
        self.column(|r| r[k] / r.iter().sum::<f64>())
    }
}

struct Weigher<'a> {
    params: &'a GibbsModelParams,
    lo: Vec<f64>,
    width: Vec<f64>,
    box_volume: f64,
}

impl Weigher<'_> {
    /// Unnormalised density of the configuration with its point coordinates
    /// taken from `u` (unit cube, `n + m` blocks of `d`).
    fn weight(&self, n: usize, m: usize, u: &[f64], buf: &mut Vec<f64>) -> f64 {
        let p = self.params;
        let d = p.dim;
        buf.clear();
        for (k, v) in u.iter().enumerate() {
            buf.push(self.lo[k % d] + self.width[k % d] * v);
        }
        let mut spheres = PointSet::new(d);
        let mut particles = PointSet::new(d);
        for i in 0..n + m {
            let x = &buf[i * d..(i + 1) * d];
            if !p.window.contains(x) {
                return 0.0;
            }
            if i < n {
                spheres.push(i as u64, x);
            } else {
                particles.push(i as u64, x);
            }
        }
        let metric = p.window.metric();
        let rs = p.sphere_radius;
        let ro = p.depletion_radius();
        let config = TwoTypeConfiguration { spheres, particles };
        if !admissible_with(&config, &metric, 2.0 * rs, ro) {
            return 0.0;
        }
        let b = &p.boundary;
        let one_type = p.model.is_one_type();
        let penalised = matches!(p.model, GibbsModel::TwoTypePenalised(_));
        if !penalised {
            let ss2 = 4.0 * rs * rs;
            let sp2 = ro * ro;
            for (_, x) in config.spheres.iter() {
                if b.spheres.iter().any(|(_, y)| metric.dist2(x, y) < ss2)
                    || (!one_type && b.particles.iter().any(|(_, y)| metric.dist2(x, y) < sp2))
                {
                    return 0.0;
                }
            }
            for (_, x) in config.particles.iter() {
                if b.spheres.iter().any(|(_, y)| metric.dist2(x, y) < sp2) {
                    return 0.0;
                }
            }
        }
        match &p.model {
            GibbsModel::TwoTypeHardcore => 1.0,
            GibbsModel::TwoTypePenalised(field) => {
                let s: f64 = config.spheres.iter().map(|(_, x)| field.value(x, BallKind::Sphere)).sum::<f64>()
                    + config.particles.iter().map(|(_, x)| field.value(x, BallKind::Particle)).sum::<f64>();
                (-s).exp()
            }
            GibbsModel::OneTypeDepletion(_) => {
                let dp = p.depletion_params().expect("validated radii");
                let e = conditional_energy(&config.spheres, &b.spheres, &dp, &metric)
                    .expect("pairwise regime checked")
                    .value;
                (-p.particle_activity * e).exp()
            }
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Truncated partition sum over at most `max_spheres` spheres and
/// `max_particles` particles, each integral by randomly shifted Halton
/// points (`samples` in total per term).
pub fn exact_tiny_partition(
    params: &GibbsModelParams,
    max_spheres: usize,
    max_particles: usize,
    samples: usize,
    seed: u64,
) -> Result<TinyPartition, GibbsError> {
    if max_spheres > 2 || max_particles > 2 {
        return Err(GibbsError::CapsExceeded(max_spheres, max_particles));
    }
    params.validate()?;
    if params.model.is_one_type() && max_particles > 0 {
        return Err(GibbsError::Invalid("the one-type model has no particles".into()));
    }
    if params.model.is_one_type() {
        let dp = params.depletion_params()?;
        if !dp.is_pairwise_regime() {
            return Err(GibbsError::Invalid("tiny one-type partition needs the pairwise regime".into()));
        }
    }
    let d = params.dim;
    if (max_spheres + max_particles) * d > PRIMES.len() {
        return Err(GibbsError::Invalid("too many integration dimensions".into()));
    }
    let (lo, hi) = params.window.bounds();
    let width: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| b - a).collect();
    let w = Weigher {
        params,
        box_volume: width.iter().product(),
        lo,
        width,
    };
    let per = (samples / REPLICATES).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut replicates = vec![vec![0.0; (max_spheres + 1) * (max_particles + 1)]; REPLICATES];
    let mut u = Vec::new();
    let mut buf = Vec::new();
    for row in replicates.iter_mut() {
        let shift: Vec<f64> = (0..PRIMES.len()).map(|_| rng.random()).collect();
        for n in 0..=max_spheres {
            for m in 0..=max_particles {
                let k = n + m;
                let coef = params.sphere_activity.powi(n as i32) / factorial(n)
                    * params.particle_activity.powi(m as i32)
                    / factorial(m);
                let value = if k == 0 {
                    1.0
                } else if coef == 0.0 {
                    0.0
                } else {
                    let dims = k * d;
                    let mut acc = 0.0;
                    for i in 0..per {
                        u.clear();
                        for j in 0..dims {
                            let h = halton(i as u64 + 1, PRIMES[j]) + shift[j];
                            u.push(h - h.floor());
                        }
                        acc += w.weight(n, m, &u, &mut buf);
                    }
                    coef * w.box_volume.powi(k as i32) * acc / per as f64
                };
                row[n * (max_particles + 1) + m] = value;
            }
        }
    }
    Ok(TinyPartition {
        max_spheres,
        max_particles,
        replicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Container, SimulationDomain};
    use crate::gibbs::Window;

    fn dom() -> SimulationDomain {
        SimulationDomain::new(2, 0.5, 0.075, 1.0, Container::Open).unwrap()
    }

    #[test]
    fn halton_prefix() {
        let v: Vec<f64> = (1..5).map(|i| halton(i, 2)).collect();
        assert_eq!(v, vec![0.5, 0.25, 0.75, 0.125]);
        assert!((halton(5, 3) - 7.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn caps_are_enforced() {
        let p = GibbsModelParams::two_type(&dom(), 1.0, 1.0, Window::cube(2, 0.5));
        assert_eq!(
            exact_tiny_partition(&p, 3, 0, 100, 0).unwrap_err(),
            GibbsError::CapsExceeded(3, 0)
        );
    }

    #[test]
    fn empty_and_single_sphere_sums() {
        let p = GibbsModelParams::two_type(&dom(), 2.0, 0.0, Window::cube(2, 0.6));
        let t = exact_tiny_partition(&p, 0, 0, 100, 0).unwrap();
        assert_eq!(t.total().mean, 1.0);
        // two spheres never fit, so the n = 2 term vanishes
        let t = exact_tiny_partition(&p, 2, 0, 4000, 1).unwrap();
        assert!((t.total().mean - (1.0 + 2.0 * 0.36)).abs() < 1e-12);
        assert_eq!(t.term(2, 0).mean, 0.0);
    }

    #[test]
    fn one_sphere_one_particle_matches_direct_integral() {
        // 0.5 x 0.5 window: the particle must sit at distance >= 0.575
        let z = 1.5;
        let zp = 2.0;
        let p = GibbsModelParams::two_type(&dom(), z, zp, Window::cube(2, 0.5));
        let t = exact_tiny_partition(&p, 1, 1, 64_000, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 400_000;
        let mut hit = 0u64;
        for _ in 0..n {
            let a = [rng.random::<f64>() * 0.5, rng.random::<f64>() * 0.5];
            let b = [rng.random::<f64>() * 0.5, rng.random::<f64>() * 0.5];
            if (a[0] - b[0]).hypot(a[1] - b[1]) >= 0.575 {
                hit += 1;
            }
        }
        let q = hit as f64 / n as f64;
        let direct = 1.0 + z * 0.25 + zp * 0.25 + z * zp * 0.0625 * q;
        let se = z * zp * 0.0625 * (q * (1.0 - q) / n as f64).sqrt();
        let est = t.total();
        assert!((est.mean - direct).abs() < 4.0 * (se + est.std_error) + 1e-4, "{} {}", est.mean, direct);
    }
}
