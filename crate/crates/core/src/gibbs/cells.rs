use crate::geometry::CellLayout;

/// Mutable cell list over the indices of a [`PointSet`].
#[derive(Clone, Debug)]
pub(crate) struct CellList {
    layout: CellLayout,
    cells: Vec<Vec<usize>>,
}

impl CellList {
    pub(crate) fn new(layout: CellLayout) -> Self {
        let cells = vec![Vec::new(); layout.total()];
        CellList { layout, cells }
    }

    pub(crate) fn insert(&mut self, index: usize, p: &[f64]) {
        let c = self.layout.cell_of(p);
        self.cells[c].push(index);
    }

    fn replace(&mut self, p: &[f64], from: usize, to: Option<usize>) {
        let c = self.layout.cell_of(p);
        let cell = &mut self.cells[c];
        let pos = cell
            .iter()
            .position(|&i| i == from)
            .expect("cell list out of sync");
        match to {
            Some(t) => cell[pos] = t,
            None => {
                cell.swap_remove(pos);
            }
        }
    }

    /// Removes `index` located at `p`.
    pub(crate) fn remove(&mut self, index: usize, p: &[f64]) {
        self.replace(p, index, None);
    }

    /// Mirrors `PointSet::swap_remove(index)`: drops `index` and relabels the
    /// former last point, located at `last_pos`, as `index`.
    pub(crate) fn swap_remove(&mut self, index: usize, p: &[f64], last: usize, last_pos: &[f64]) {
        self.remove(index, p);
        if last != index {
            self.replace(last_pos, last, Some(index));
        }
    }

    pub(crate) fn relocate(&mut self, index: usize, from: &[f64], to: &[f64]) {
        let a = self.layout.cell_of(from);
        let b = self.layout.cell_of(to);
        if a != b {
            self.remove(index, from);
            self.cells[b].push(index);
        }
    }

    pub(crate) fn for_each_near<F: FnMut(usize)>(&self, p: &[f64], mut f: F) {
        self.layout.for_each_cell_near(p, |c| {
            for &i in &self.cells[c] {
                f(i);
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Metric, PointSet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tracks_a_mutating_point_set() {
        let sides = [5.0, 4.0];
        let metric = Metric::Periodic(sides.to_vec());
        let mut list = CellList::new(CellLayout::periodic(&sides, 1.0));
        let mut pts = PointSet::new(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for step in 0..400u64 {
            let r: f64 = rng.random();
            if r < 0.5 || pts.is_empty() {
                let p = [rng.random::<f64>() * 5.0, rng.random::<f64>() * 4.0];
                list.insert(pts.len(), &p);
                pts.push(step, &p);
            } else if r < 0.75 {
                let i = rng.random_range(0..pts.len());
                let last = pts.len() - 1;
                let p = pts.get(i).to_vec();
                let lp = pts.get(last).to_vec();
                list.swap_remove(i, &p, last, &lp);
                pts.swap_remove(i);
            } else {
                let i = rng.random_range(0..pts.len());
                let from = pts.get(i).to_vec();
                let to = [rng.random::<f64>() * 5.0, rng.random::<f64>() * 4.0];
                list.relocate(i, &from, &to);
                pts.get_mut(i).copy_from_slice(&to);
            }
            let q = [rng.random::<f64>() * 5.0, rng.random::<f64>() * 4.0];
            let mut found = Vec::new();
            list.for_each_near(&q, |j| {
                if metric.dist2(&q, pts.get(j)) < 1.0 {
                    found.push(j);
                }
            });
            found.sort_unstable();
            let brute: Vec<usize> = (0..pts.len())
                .filter(|&j| metric.dist2(&q, pts.get(j)) < 1.0)
                .collect();
            assert_eq!(found, brute);
        }
    }
}
