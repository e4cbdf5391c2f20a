use rand::Rng;

use super::{GeometryError, Metric, NeighborGrid, PointSet, SimulationDomain};
use crate::depletion::{self, DepletionParams};
use crate::par::{batch_rng, map_indexed, Execution};

const BATCH: usize = 1 << 15;

/// A volume with its Monte Carlo standard error (zero for exact values).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VolumeEstimate {
    pub value: f64,
    pub std_error: f64,
}

impl VolumeEstimate {
    pub fn exact(value: f64) -> Self {
        VolumeEstimate {
            value,
            std_error: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VolumeMethod {
    /// Inclusion-exclusion truncated at pairs; exact when no three shells meet.
    ExactPairwise,
    /// Hit-or-miss sampling in the bounding box of the union.
    MonteCarlo { samples: usize, seed: u64 },
}

/// Volume of the union of balls of radius `r_s + r_p` around the sphere centres.
pub fn forbidden_region_volume(
    spheres: &PointSet,
    dom: &SimulationDomain,
    method: VolumeMethod,
) -> Result<VolumeEstimate, GeometryError> {
    let metric = dom.metric();
    match method {
        VolumeMethod::ExactPairwise => {
            let p = DepletionParams::from_domain(dom, 0.0)?;
            Ok(VolumeEstimate::exact(depletion::pairwise_union_volume(
                spheres, &p, &metric,
            )?))
        }
        VolumeMethod::MonteCarlo { samples, seed } => {
            let r = dom.depletion_radius();
            let mc = MonteCarloUnion::bounding(spheres, &metric, r, samples, seed);
            Ok(mc.estimate(spheres, &metric, r))
        }
    }
}

/// Hit-or-miss estimator of a union of equal balls over a fixed box.
///
/// The sample points depend only on the box, the sample count and the seed,
/// so two estimates with the same `MonteCarloUnion` share their samples.
#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloUnion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl MonteCarloUnion {
    /// Box covering every ball of radius `radius` (the whole cell when periodic).
    pub fn bounding(points: &PointSet, metric: &Metric, radius: f64, samples: usize, seed: u64) -> Self {
        let d = points.dim();
        let (lo, hi) = match metric {
            Metric::Periodic(sides) => (vec![0.0; d], sides.clone()),
            Metric::Euclidean => {
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for (_, p) in points.iter() {
                    for k in 0..d {
                        lo[k] = lo[k].min(p[k] - radius);
                        hi[k] = hi[k].max(p[k] + radius);
                    }
                }
                if points.is_empty() {
                    (vec![0.0; d], vec![0.0; d])
                } else {
                    (lo, hi)
                }
            }
        };
        MonteCarloUnion {
            lo,
            hi,
            samples,
            seed,
            exec: Execution::default(),
        }
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn box_volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    /// Number of sample points covered by the union.
    pub fn hits(&self, points: &PointSet, metric: &Metric, radius: f64) -> u64 {
        self.hits_excluding(points, &PointSet::new(points.dim()), metric, radius)
    }

    /// Number of sample points covered by the balls of `points` and by none
    /// of the balls of `exclude`.
    pub fn hits_excluding(&self, points: &PointSet, exclude: &PointSet, metric: &Metric, radius: f64) -> u64 {
        if points.is_empty() || self.samples == 0 {
            return 0;
        }
        let grid = NeighborGrid::build(points, metric, radius);
        let ex_grid = NeighborGrid::build(exclude, metric, radius);
        let r2 = radius * radius;
        let d = points.dim();
        let batches = self.samples.div_ceil(BATCH);
        let counts = map_indexed(batches, self.exec, |b| {
            let mut rng = batch_rng(self.seed, b as u64);
            let n = BATCH.min(self.samples - b * BATCH);
            let mut x = vec![0.0; d];
            let mut hits = 0u64;
            for _ in 0..n {
                for k in 0..d {
                    x[k] = self.lo[k] + (self.hi[k] - self.lo[k]) * rng.random::<f64>();
                }
                let mut covered = false;
                grid.for_each_near(&x, |j| {
                    if !covered && metric.dist2(&x, points.get(j)) < r2 {
                        covered = true;
                    }
                });
                if covered && !exclude.is_empty() {
                    ex_grid.for_each_near(&x, |j| {
                        if covered && metric.dist2(&x, exclude.get(j)) < r2 {
                            covered = false;
                        }
                    });
                }
                hits += covered as u64;
            }
            hits
        });
        counts.into_iter().sum()
    }

    pub fn estimate(&self, points: &PointSet, metric: &Metric, radius: f64) -> VolumeEstimate {
        self.estimate_excluding(points, &PointSet::new(points.dim()), metric, radius)
    }

    /// Volume of the union of `points` balls minus the union of `exclude` balls.
    pub fn estimate_excluding(
        &self,
        points: &PointSet,
        exclude: &PointSet,
        metric: &Metric,
        radius: f64,
    ) -> VolumeEstimate {
        if self.samples == 0 {
            return VolumeEstimate::exact(f64::NAN);
        }
        let hits = self.hits_excluding(points, exclude, metric, radius);
        let n = self.samples as f64;
        let p = hits as f64 / n;
        let v = self.box_volume();
        VolumeEstimate {
            value: v * p,
            std_error: v * (p * (1.0 - p) / n).sqrt(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Container;
    use std::f64::consts::PI;

    #[test]
    fn single_ball_volume() {
        let dom = SimulationDomain::new(3, 0.9, 0.1, 1.0, Container::Open).unwrap();
        let s = PointSet::from_points(3, &[[0.0, 0.0, 0.0]]).unwrap();
        let v = forbidden_region_volume(&s, &dom, VolumeMethod::ExactPairwise).unwrap();
        assert!((v.value - 4.0 * PI / 3.0).abs() < 1e-12);
        let mc = forbidden_region_volume(
            &s,
            &dom,
            VolumeMethod::MonteCarlo {
                samples: 200_000,
                seed: 1,
            },
        )
        .unwrap();
        assert!((mc.value - 4.0 * PI / 3.0).abs() < 4.0 * mc.std_error);
    }

    #[test]
    fn triple_overlap_regime_is_rejected() {
        let dom = SimulationDomain::new(3, 1.0, 0.3, 1.0, Container::Open).unwrap();
        let s = PointSet::from_points(3, &[[0.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            forbidden_region_volume(&s, &dom, VolumeMethod::ExactPairwise),
            Err(GeometryError::TripleOverlapRegime { .. })
        ));
    }

    #[test]
    fn shared_samples_make_volume_monotone() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut set = PointSet::new(2);
        let metric = Metric::Euclidean;
        let mc = MonteCarloUnion {
            lo: vec![-1.0, -1.0],
            hi: vec![6.0, 6.0],
            samples: 20_000,
            seed: 5,
            exec: Execution::Sequential,
        };
        let mut prev = 0;
        for i in 0..20 {
            set.push(i, &[rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)]);
            let h = mc.hits(&set, &metric, 0.6);
            assert!(h >= prev);
            prev = h;
        }
    }
}
