use super::norm;
use crate::geometry::{Metric, NeighborGrid, PointSet};

fn adjacency(spheres: &PointSet, link: f64) -> Vec<Vec<usize>> {
    let n = spheres.len();
    let mut adj = vec![Vec::new(); n];
    if n == 0 {
        return adj;
    }
    let metric = Metric::Euclidean;
    let grid = NeighborGrid::build(spheres, &metric, link);
    let l2 = link * link;
    for (i, row) in adj.iter_mut().enumerate() {
        let xi = spheres.get(i);
        grid.for_each_near(xi, |j| {
            if j != i && metric.dist2(xi, spheres.get(j)) < l2 {
                row.push(j);
            }
        });
        row.sort_unstable();
    }
    adj
}

fn component_sizes(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut comp = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        let c = sizes.len();
        comp[s] = c;
        stack.push(s);
        let mut size = 0;
        while let Some(v) = stack.pop() {
            size += 1;
            for &w in &adj[v] {
                if comp[w] == usize::MAX {
                    comp[w] = c;
                    stack.push(w);
                }
            }
        }
        sizes.push(size);
    }
    comp.iter().map(|&c| sizes[c]).collect()
}

fn extend(adj: &[Vec<usize>], path: &mut Vec<usize>, on_path: &mut [bool], remaining: usize) -> bool {
    if remaining == 0 {
        return true;
    }
    let last = *path.last().expect("path starts with a seed");
    for &w in &adj[last] {
        if on_path[w] {
            continue;
        }
        on_path[w] = true;
        path.push(w);
        if extend(adj, path, on_path, remaining - 1) {
            return true;
        }
        path.pop();
        on_path[w] = false;
    }
    false
}

/// Finds `kappa + 1` distinct spheres, the first within distance `alpha` of
/// the origin, with consecutive centres closer than `2 r_s + eps`.
///
/// Returns the ids along the chain, starting in the ball `B(0, alpha)`.
pub fn detect_chain(spheres: &PointSet, sphere_radius: f64, alpha: f64, kappa: usize, eps: f64) -> Option<Vec<u64>> {
    let adj = adjacency(spheres, 2.0 * sphere_radius + eps);
    let sizes = component_sizes(&adj);
    let mut on_path = vec![false; spheres.len()];
    let mut path = Vec::with_capacity(kappa + 1);
    for s in 0..spheres.len() {
        if sizes[s] < kappa + 1 || norm(spheres.get(s)) > alpha {
            continue;
        }
        path.clear();
        path.push(s);
        on_path[s] = true;
        if extend(&adj, &mut path, &mut on_path, kappa) {
            return Some(path.iter().map(|&i| spheres.id(i)).collect());
        }
        on_path[s] = false;
    }
    None
}

/// Exhaustive check over all ordered tuples of distinct spheres; exponential,
/// meant for small configurations.
pub fn detect_chain_brute_force(spheres: &PointSet, sphere_radius: f64, alpha: f64, kappa: usize, eps: f64) -> bool {
    fn rec(spheres: &PointSet, tuple: &mut Vec<usize>, len: usize, link: f64, alpha: f64) -> bool {
        if tuple.len() == len {
            let first_ok = norm(spheres.get(tuple[0])) <= alpha;
            let links_ok = tuple.windows(2).all(|w| {
                Metric::Euclidean.dist2(spheres.get(w[0]), spheres.get(w[1])).sqrt() < link
            });
            return first_ok && links_ok;
        }
        for i in 0..spheres.len() {
            if tuple.contains(&i) {
                continue;
            }
            tuple.push(i);
            if rec(spheres, tuple, len, link, alpha) {
                return true;
            }
            tuple.pop();
        }
        false
    }
    if spheres.len() < kappa + 1 {
        return false;
    }
    rec(spheres, &mut Vec::new(), kappa + 1, 2.0 * sphere_radius + eps, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(n: usize, spacing: f64) -> PointSet {
        let pts: Vec<[f64; 2]> = (0..n).map(|i| [i as f64 * spacing, 0.0]).collect();
        PointSet::from_points(2, &pts).unwrap()
    }

    #[test]
    fn line_constructions() {
        let eps = 0.1;
        let near = line(4, 1.0 + eps / 2.0);
        let w = detect_chain(&near, 0.5, 0.5, 3, eps).unwrap();
        assert_eq!(w, vec![0, 1, 2, 3]);
        assert!(detect_chain(&line(4, 1.0 + 2.0 * eps), 0.5, 0.5, 3, eps).is_none());
        assert!(detect_chain(&near, 0.5, 0.5, 4, eps).is_none());
    }

    #[test]
    fn seed_must_lie_in_the_region() {
        let pts = PointSet::from_points(2, &[[7.1, 0.0], [6.05, 0.0], [5.0, 0.0]]).unwrap();
        assert!(detect_chain(&pts, 0.5, 4.9, 2, 0.1).is_none());
        assert_eq!(detect_chain(&pts, 0.5, 5.0, 2, 0.1), Some(vec![2, 1, 0]));
    }

    #[test]
    fn star_has_no_long_path() {
        let mut pts = vec![[0.0, 0.0]];
        for k in 0..5 {
            let a = k as f64 * std::f64::consts::TAU / 5.0;
            pts.push([1.02 * a.cos(), 1.02 * a.sin()]);
        }
        let ps = PointSet::from_points(2, &pts).unwrap();
        // leaf, centre, leaf
        assert!(detect_chain(&ps, 0.5, 2.0, 2, 0.05).is_some());
        assert!(detect_chain(&ps, 0.5, 2.0, 3, 0.05).is_none());
        // from the centre alone no two-link path exists
        assert!(detect_chain(&ps, 0.5, 0.1, 2, 0.05).is_none());
        assert!(detect_chain(&ps, 0.5, 0.1, 1, 0.05).is_some());
    }

    #[test]
    fn agrees_with_exhaustive_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..300 {
            let n = rng.random_range(0..=12);
            let mut ps = PointSet::new(2);
            let mut tries = 0;
            while ps.len() < n && tries < 2000 {
                tries += 1;
                let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
                if ps.iter().all(|(_, y)| Metric::Euclidean.dist2(&x, y) >= 1.0) {
                    ps.push(ps.len() as u64, &x);
                }
            }
            let kappa = rng.random_range(0..=4);
            let eps = rng.random_range(0.05..0.6);
            let alpha = rng.random_range(0.0..3.0);
            let fast = detect_chain(&ps, 0.5, alpha, kappa, eps);
            assert_eq!(fast.is_some(), detect_chain_brute_force(&ps, 0.5, alpha, kappa, eps), "trial {trial}");
            if let Some(w) = fast {
                assert_eq!(w.len(), kappa + 1);
                let i0 = ps.index_of(w[0]).unwrap();
                assert!(norm(ps.get(i0)) <= alpha);
                for pair in w.windows(2) {
                    let a = ps.get(ps.index_of(pair[0]).unwrap());
                    let b = ps.get(ps.index_of(pair[1]).unwrap());
                    assert!(Metric::Euclidean.dist2(a, b).sqrt() < 1.0 + eps);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn monotone_in_eps_and_kappa(
            coords in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 0..14),
            kappa in 1usize..4,
            eps in 0.05f64..0.5,
            extra in 0.0f64..0.5,
        ) {
            let mut ps = PointSet::new(2);
            for (x, y) in coords {
                let p = [x, y];
                if ps.iter().all(|(_, q)| Metric::Euclidean.dist2(&p, q) >= 1.0) {
                    ps.push(ps.len() as u64, &p);
                }
            }
            if detect_chain(&ps, 0.5, 2.0, kappa, eps).is_some() {
                prop_assert!(detect_chain(&ps, 0.5, 2.0, kappa, eps + extra).is_some());
                prop_assert!(detect_chain(&ps, 0.5, 2.0, kappa - 1, eps).is_some());
            }
        }
    }
}
