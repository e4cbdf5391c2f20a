use super::{Metric, PointSet};

const MAX_GRID_DIM: usize = 6;

/// Regular cell decomposition of a box, optionally periodic.
#[derive(Clone, Debug)]
pub(crate) struct CellLayout {
    dim: usize,
    origin: Vec<f64>,
    width: Vec<f64>,
    counts: Vec<usize>,
    periodic: bool,
}

impl CellLayout {
    /// Cells at least `cutoff` wide covering `[lo, hi]`, with the total cell
    /// count kept under `budget` by widening cells.
    pub(crate) fn euclidean(lo: &[f64], hi: &[f64], cutoff: f64, budget: usize) -> Self {
        let dim = lo.len();
        let cutoff = cutoff.max(f64::MIN_POSITIVE);
        if dim > MAX_GRID_DIM || dim == 0 {
            return CellLayout::single(dim, false, vec![f64::INFINITY; dim]);
        }
        let mut cell = cutoff;
        loop {
            let counts: Vec<usize> = lo
                .iter()
                .zip(hi)
                .map(|(a, b)| ((b - a) / cell).floor() as usize + 1)
                .collect();
            let total: f64 = counts.iter().map(|&c| c as f64).product();
            if total <= budget as f64 {
                return CellLayout {
                    dim,
                    origin: lo.to_vec(),
                    width: vec![cell; dim],
                    counts,
                    periodic: false,
                };
            }
            cell *= 1.5;
        }
    }

    /// Cells at least `cutoff` wide tiling the torus `[0, L_k)`.
    pub(crate) fn periodic(sides: &[f64], cutoff: f64) -> Self {
        let dim = sides.len();
        let cutoff = cutoff.max(f64::MIN_POSITIVE);
        if dim > MAX_GRID_DIM || dim == 0 {
            return CellLayout::single(dim, true, sides.to_vec());
        }
        let counts: Vec<usize> = sides
            .iter()
            .map(|&l| ((l / cutoff).floor() as usize).clamp(1, 1 << 16))
            .collect();
        let width = sides.iter().zip(&counts).map(|(&l, &c)| l / c as f64).collect();
        CellLayout {
            dim,
            origin: vec![0.0; dim],
            width,
            counts,
            periodic: true,
        }
    }

    fn single(dim: usize, periodic: bool, width: Vec<f64>) -> Self {
        CellLayout {
            dim,
            origin: vec![0.0; dim],
            width,
            counts: vec![1; dim],
            periodic,
        }
    }

    pub(crate) fn total(&self) -> usize {
        self.counts.iter().product()
    }

    fn axis_cell(&self, k: usize, x: f64) -> usize {
        if self.counts[k] == 1 {
            return 0;
        }
        let mut v = x - self.origin[k];
        if self.periodic {
            let l = self.width[k] * self.counts[k] as f64;
            v = v.rem_euclid(l);
        }
        let c = (v / self.width[k]).floor();
        if c < 0.0 {
            0
        } else {
            (c as usize).min(self.counts[k] - 1)
        }
    }

    pub(crate) fn cell_of(&self, p: &[f64]) -> usize {
        let mut idx = 0;
        for k in 0..self.dim {
            idx = idx * self.counts[k] + self.axis_cell(k, p[k]);
        }
        idx
    }

    /// Calls `f(cell)` for each cell of the 3^d block around `p`, once each.
    pub(crate) fn for_each_cell_near<F: FnMut(usize)>(&self, p: &[f64], mut f: F) {
        let d = self.dim;
        let mut base = [0usize; MAX_GRID_DIM];
        let mut lo = [0i64; MAX_GRID_DIM];
        let mut hi = [0i64; MAX_GRID_DIM];
        for k in 0..d.min(MAX_GRID_DIM) {
            base[k] = self.axis_cell(k, p[k]);
            let n = self.counts[k] as i64;
            if self.periodic {
                match n {
                    1 => (lo[k], hi[k]) = (0, 0),
                    2 => (lo[k], hi[k]) = (0, 1),
                    _ => (lo[k], hi[k]) = (-1, 1),
                }
            } else {
                lo[k] = if base[k] == 0 { 0 } else { -1 };
                hi[k] = if base[k] as i64 + 1 >= n { 0 } else { 1 };
            }
        }
        if d > MAX_GRID_DIM {
            f(0);
            return;
        }
        let mut off = [0i64; MAX_GRID_DIM];
        off[..d].copy_from_slice(&lo[..d]);
        loop {
            let mut idx = 0usize;
            for k in 0..d {
                let n = self.counts[k] as i64;
                let c = (base[k] as i64 + off[k]).rem_euclid(n);
                idx = idx * self.counts[k] + c as usize;
            }
            f(idx);
            // odometer increment
            let mut k = d;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                if off[k] < hi[k] {
                    off[k] += 1;
                    break;
                }
                off[k] = lo[k];
            }
        }
    }
}

/// Static cell list over a point set.
///
/// Cells are at least `cutoff` wide along every axis, so the 3^d block of
/// cells around a query point holds every stored point closer than `cutoff`.
#[derive(Clone, Debug)]
pub struct NeighborGrid {
    layout: CellLayout,
    starts: Vec<usize>,
    entries: Vec<usize>,
}

impl NeighborGrid {
    pub fn build(points: &PointSet, metric: &Metric, cutoff: f64) -> Self {
        let dim = points.dim();
        let n = points.len();
        let layout = match metric {
            Metric::Periodic(sides) => CellLayout::periodic(sides, cutoff),
            Metric::Euclidean => {
                let mut lo = vec![f64::INFINITY; dim];
                let mut hi = vec![f64::NEG_INFINITY; dim];
                for (_, p) in points.iter() {
                    for k in 0..dim {
                        lo[k] = lo[k].min(p[k]);
                        hi[k] = hi[k].max(p[k]);
                    }
                }
                if n == 0 {
                    lo = vec![0.0; dim];
                    hi = vec![0.0; dim];
                }
                CellLayout::euclidean(&lo, &hi, cutoff, (4 * n).max(64))
            }
        };
        let total = layout.total();
        let cells: Vec<usize> = (0..n).map(|i| layout.cell_of(points.get(i))).collect();
        let mut starts = vec![0usize; total + 1];
        for &c in &cells {
            starts[c + 1] += 1;
        }
        for c in 0..total {
            starts[c + 1] += starts[c];
        }
        let mut fill = starts.clone();
        let mut entries = vec![0usize; n];
        for (i, &c) in cells.iter().enumerate() {
            entries[fill[c]] = i;
            fill[c] += 1;
        }
        NeighborGrid {
            layout,
            starts,
            entries,
        }
    }

    pub fn cell_width(&self) -> &[f64] {
        &self.layout.width
    }

    /// Calls `f(j)` for every stored index that may lie within the cutoff of `p`.
    pub fn for_each_near<F: FnMut(usize)>(&self, p: &[f64], mut f: F) {
        self.layout.for_each_cell_near(p, |c| {
            for &j in &self.entries[self.starts[c]..self.starts[c + 1]] {
                f(j);
            }
        });
    }
}

/// Unordered pair of ids closer than the cutoff, with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeighborPair {
    pub a: u64,
    pub b: u64,
    pub distance: f64,
}

/// All unordered pairs of `points` at distance strictly below `cutoff`,
/// sorted by id pair.
pub fn neighbor_pairs(points: &PointSet, metric: &Metric, cutoff: f64) -> Vec<NeighborPair> {
    assert!(cutoff > 0.0, "cutoff must be positive");
    let grid = NeighborGrid::build(points, metric, cutoff);
    let c2 = cutoff * cutoff;
    let mut out = Vec::new();
    for i in 0..points.len() {
        let xi = points.get(i);
        grid.for_each_near(xi, |j| {
            if j > i {
                let d2 = metric.dist2(xi, points.get(j));
                if d2 < c2 {
                    let (a, b) = (points.id(i), points.id(j));
                    out.push(NeighborPair {
                        a: a.min(b),
                        b: a.max(b),
                        distance: d2.sqrt(),
                    });
                }
            }
        });
    }
    out.sort_by_key(|p| (p.a, p.b));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(points: &PointSet, metric: &Metric, cutoff: f64) -> Vec<(u64, u64)> {
        let mut out = Vec::new();
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                if metric.dist2(points.get(i), points.get(j)) < cutoff * cutoff {
                    let (a, b) = (points.id(i), points.id(j));
                    out.push((a.min(b), a.max(b)));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn empty_and_collinear() {
        let empty = PointSet::new(3);
        assert!(neighbor_pairs(&empty, &Metric::Euclidean, 1.0).is_empty());
        let line = PointSet::from_points(2, &[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]).unwrap();
        let pairs = neighbor_pairs(&line, &Metric::Euclidean, 1.5);
        let ids: Vec<_> = pairs.iter().map(|p| (p.a, p.b)).collect();
        assert_eq!(ids, vec![(0, 1), (1, 2)]);
        assert!((pairs[0].distance - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hundred_random_points_match_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for d in 1..=4 {
            let pts: Vec<Vec<f64>> = (0..100)
                .map(|_| (0..d).map(|_| rng.random_range(0.0..5.0)).collect())
                .collect();
            let set = PointSet::from_points(d, &pts).unwrap();
            for metric in [Metric::Euclidean, Metric::Periodic(vec![5.0; d])] {
                let got: Vec<_> = neighbor_pairs(&set, &metric, 0.9)
                    .iter()
                    .map(|p| (p.a, p.b))
                    .collect();
                assert_eq!(got, brute(&set, &metric, 0.9), "d={d} {metric:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn grid_matches_brute_force(
            pts in proptest::collection::vec((0.0f64..3.0, 0.0f64..3.0), 0..60),
            cutoff in 0.05f64..2.0,
            periodic in any::<bool>(),
        ) {
            let pts: Vec<[f64; 2]> = pts.into_iter().map(|(x, y)| [x, y]).collect();
            let set = PointSet::from_points(2, &pts).unwrap();
            let metric = if periodic { Metric::Periodic(vec![3.0, 3.0]) } else { Metric::Euclidean };
            let got: Vec<_> = neighbor_pairs(&set, &metric, cutoff).iter().map(|p| (p.a, p.b)).collect();
            prop_assert_eq!(got, brute(&set, &metric, cutoff));
        }
    }
}
