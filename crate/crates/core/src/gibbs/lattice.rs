use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GibbsError, Window};
use crate::geometry::{Metric, PointSet};

const MAX_POINTS: usize = 50_000_000;

/// Union volume of equal balls counted on one randomly shifted lattice.
///
/// Every energy difference of a chain is measured on the same lattice, so
/// the accounting is exact in integers and never drifts. The lattice covers
/// the window grown by the ball radius (or the whole torus).
#[derive(Clone, Debug)]
pub(crate) struct SharedLattice {
    dim: usize,
    periodic: bool,
    origin: Vec<f64>,
    spacing: Vec<f64>,
    counts: Vec<usize>,
    radius: f64,
    cov: Vec<u16>,
    frozen: Vec<bool>,
    covered: usize,
    cell_volume: f64,
}

impl SharedLattice {
    pub(crate) fn new(window: &Window, radius: f64, spacing: f64, seed: u64) -> Result<Self, GibbsError> {
        let dim = window.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (periodic, origin, step, counts) = match window {
            Window::Periodic { sides } => {
                let counts: Vec<usize> = sides.iter().map(|l| (l / spacing).ceil().max(1.0) as usize).collect();
                let step: Vec<f64> = sides.iter().zip(&counts).map(|(l, &n)| l / n as f64).collect();
                let origin = step.iter().map(|s| s * rng.random::<f64>()).collect();
                (true, origin, step, counts)
            }
            _ => {
                let (lo, hi) = window.bounds();
                let origin: Vec<f64> = lo.iter().map(|a| a - radius - spacing * rng.random::<f64>()).collect();
                let counts = origin
                    .iter()
                    .zip(&hi)
                    .map(|(o, b)| ((b + radius - o) / spacing).floor() as usize + 1)
                    .collect();
                (false, origin, vec![spacing; dim], counts)
            }
        };
        let total = counts.iter().try_fold(1usize, |acc: usize, &n| acc.checked_mul(n));
        let total = match total {
            Some(t) if t <= MAX_POINTS => t,
            _ => {
                return Err(GibbsError::Invalid(format!(
                    "lattice spacing {spacing} needs more than {MAX_POINTS} points"
                )))
            }
        };
        Ok(SharedLattice {
            dim,
            periodic,
            cell_volume: step.iter().product(),
            origin,
            spacing: step,
            counts,
            radius,
            cov: vec![0; total],
            frozen: vec![false; total],
            covered: 0,
        })
    }

    pub(crate) fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// Covered volume not already covered by frozen balls.
    pub(crate) fn energy(&self) -> f64 {
        self.covered as f64 * self.cell_volume
    }

    #[cfg(test)]
    pub(crate) fn covered_points(&self) -> usize {
        self.covered
    }

    /// Calls `f(index)` for each lattice point within the radius of `x`.
    fn for_each_in_ball<F: FnMut(usize)>(&self, x: &[f64], mut f: F) {
        self.for_each_in_ball_at(x, |i, _| f(i));
    }

    /// Like `for_each_in_ball`, also passing the point's (unwrapped) position.
    fn for_each_in_ball_at<F: FnMut(usize, &[f64])>(&self, x: &[f64], mut f: F) {
        let d = self.dim;
        let r = self.radius;
        let r2 = r * r;
        let mut axes: Vec<Vec<(usize, f64, f64)>> = Vec::with_capacity(d);
        for k in 0..d {
            let s = self.spacing[k];
            let n = self.counts[k] as i64;
            let lo = ((x[k] - r - self.origin[k]) / s).ceil() as i64;
            let hi = ((x[k] + r - self.origin[k]) / s).floor() as i64;
            let mut list = Vec::with_capacity((hi - lo + 1).max(0) as usize);
            for i in lo..=hi {
                let off = self.origin[k] + i as f64 * s - x[k];
                let idx = if self.periodic {
                    i.rem_euclid(n)
                } else if i < 0 || i >= n {
                    continue;
                } else {
                    i
                };
                list.push((idx as usize, off * off, x[k] + off));
            }
            if list.is_empty() {
                return;
            }
            axes.push(list);
        }
        let mut pos = vec![0usize; d];
        let mut pt = vec![0.0; d];
        loop {
            let mut d2 = 0.0;
            let mut idx = 0usize;
            for k in 0..d {
                let (i, o, c) = axes[k][pos[k]];
                d2 += o;
                pt[k] = c;
                idx = idx * self.counts[k] + i;
            }
            if d2 <= r2 {
                f(idx, &pt);
            }
            let mut k = d;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                pos[k] += 1;
                if pos[k] < axes[k].len() {
                    break;
                }
                pos[k] = 0;
            }
        }
    }

    pub(crate) fn freeze(&mut self, frozen: &PointSet) {
        for (_, y) in frozen.iter() {
            let mut hits = Vec::new();
            self.for_each_in_ball(y, |i| hits.push(i));
            for i in hits {
                if !self.frozen[i] {
                    self.frozen[i] = true;
                    if self.cov[i] > 0 {
                        self.covered -= 1;
                    }
                }
            }
        }
    }

    /// Lattice points that a ball at `x` would newly cover.
    pub(crate) fn gain(&self, x: &[f64]) -> usize {
        let mut g = 0;
        self.for_each_in_ball(x, |i| {
            if self.cov[i] == 0 && !self.frozen[i] {
                g += 1;
            }
        });
        g
    }

    /// Lattice points newly covered when the ball at `from` moves to `to`.
    pub(crate) fn gain_moving(&self, from: &[f64], to: &[f64], metric: &Metric) -> usize {
        let r2 = self.radius * self.radius;
        let mut g = 0;
        self.for_each_in_ball_at(to, |i, pt| {
            if !self.frozen[i] && (self.cov[i] == 0 || (self.cov[i] == 1 && metric.dist2(pt, from) <= r2)) {
                g += 1;
            }
        });
        g
    }

    /// Lattice points that removing a ball at `x` would uncover.
    pub(crate) fn loss(&self, x: &[f64]) -> usize {
        let mut l = 0;
        self.for_each_in_ball(x, |i| {
            if self.cov[i] == 1 && !self.frozen[i] {
                l += 1;
            }
        });
        l
    }

    pub(crate) fn add(&mut self, x: &[f64]) {
        let mut hits = Vec::new();
        self.for_each_in_ball(x, |i| hits.push(i));
        for i in hits {
            if self.cov[i] == 0 && !self.frozen[i] {
                self.covered += 1;
            }
            self.cov[i] += 1;
        }
    }

    pub(crate) fn remove(&mut self, x: &[f64]) {
        let mut hits = Vec::new();
        self.for_each_in_ball(x, |i| hits.push(i));
        for i in hits {
            debug_assert!(self.cov[i] > 0);
            self.cov[i] -= 1;
            if self.cov[i] == 0 && !self.frozen[i] {
                self.covered -= 1;
            }
        }
    }

    /// Covered point count recomputed from scratch for `balls`.
    pub(crate) fn recount(&self, balls: &PointSet) -> usize {
        let mut mark = vec![false; self.cov.len()];
        for (_, x) in balls.iter() {
            self.for_each_in_ball(x, |i| mark[i] = true);
        }
        mark.iter().zip(&self.frozen).filter(|(m, f)| **m && !**f).count()
    }
}
