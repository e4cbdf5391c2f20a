use super::DiagnosticsError;
use crate::geometry::{NeighborGrid, PointSet, SimulationDomain};
use crate::gibbs::{EnergyBackend, GibbsModelParams, Sampler, Window};
use crate::par::{map_indexed, replica_rng, Execution};
use crate::report::Report;
use crate::stats::{batch_means, Estimate};

/// Connected components of the "closer than `radius`" graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Clusters {
    /// Cluster index of each sphere, numbered by first appearance.
    pub labels: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Successful unions; `sizes.len() + merges` equals the sphere count.
    pub merges: usize,
    /// Some cluster wraps around a periodic window, or touches two opposite
    /// faces of a bounded one.
    pub spanning: bool,
}

impl Clusters {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    pub fn max_size(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0)
    }

    /// Largest cluster over the sphere count, 0 when empty.
    pub fn largest_fraction(&self) -> f64 {
        if self.labels.is_empty() {
            0.0
        } else {
            self.max_size() as f64 / self.labels.len() as f64
        }
    }
}

/// Union-find carrying each node's unwrapped offset from its parent, so that
/// a cycle with nonzero winding can be recognised.
struct Forest {
    parent: Vec<usize>,
    offset: Vec<Vec<f64>>,
}

impl Forest {
    fn new(n: usize, dim: usize) -> Self {
        Forest {
            parent: (0..n).collect(),
            offset: vec![vec![0.0; dim]; n],
        }
    }

    /// Root of `i` and the offset `u_i - u_root`.
    fn find(&mut self, i: usize) -> (usize, Vec<f64>) {
        let p = self.parent[i];
        if p == i {
            return (i, vec![0.0; self.offset[i].len()]);
        }
        let (root, up) = self.find(p);
        for (o, u) in self.offset[i].iter_mut().zip(&up) {
            *o += u;
        }
        self.parent[i] = root;
        (root, self.offset[i].clone())
    }
}

/// Clusters of spheres at distance below `radius` (typically `2 r_o`).
///
/// On a periodic window a cluster spans when it closes a loop around the
/// torus. On other windows it spans when one member's `radius / 2` ball
/// reaches the low face and another's reaches the high face of the same
/// axis of the bounding box.
pub fn percolation_clusters(spheres: &PointSet, window: &Window, radius: f64) -> Result<Clusters, DiagnosticsError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(DiagnosticsError::Invalid(format!("radius must be positive, got {radius}")));
    }
    let dim = spheres.dim();
    if window.dim() != dim {
        return Err(DiagnosticsError::Invalid("window and spheres differ in dimension".into()));
    }
    let metric = window.metric();
    if let Window::Periodic { sides } = window {
        if sides.iter().any(|&l| l < 2.0 * radius) {
            return Err(DiagnosticsError::Invalid("periodic sides must be at least twice the radius".into()));
        }
    }
    let n = spheres.len();
    let mut forest = Forest::new(n, dim);
    let mut merges = 0;
    let mut wraps = false;
    if n > 0 {
        let grid = NeighborGrid::build(spheres, &metric, radius);
        let r2 = radius * radius;
        let mut d = vec![0.0; dim];
        let mut near = Vec::new();
        for i in 0..n {
            near.clear();
            grid.for_each_near(spheres.get(i), |j| near.push(j));
            near.sort_unstable();
            near.dedup();
            for &j in &near {
                if j <= i || metric.dist2(spheres.get(i), spheres.get(j)) >= r2 {
                    continue;
                }
                // d = u_j - u_i along the shortest image
                metric.delta(spheres.get(j), spheres.get(i), &mut d);
                let (ri, oi) = forest.find(i);
                let (rj, oj) = forest.find(j);
                if ri == rj {
                    let mismatch = (0..dim).any(|k| (oj[k] - oi[k] - d[k]).abs() > 0.5 * radius);
                    wraps |= mismatch;
                } else {
                    forest.parent[rj] = ri;
                    forest.offset[rj] = (0..dim).map(|k| d[k] + oi[k] - oj[k]).collect();
                    merges += 1;
                }
            }
        }
    }
    let mut labels = vec![usize::MAX; n];
    let mut root_label = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    for i in 0..n {
        let (r, _) = forest.find(i);
        if root_label[r] == usize::MAX {
            root_label[r] = sizes.len();
            sizes.push(0);
        }
        labels[i] = root_label[r];
        sizes[labels[i]] += 1;
    }
    let spanning = if window.is_periodic() {
        wraps
    } else {
        let (lo, hi) = window.bounds();
        let reach = radius / 2.0;
        let mut touch = vec![vec![[false; 2]; dim]; sizes.len()];
        for i in 0..n {
            let x = spheres.get(i);
            for k in 0..dim {
                touch[labels[i]][k][0] |= x[k] - lo[k] <= reach;
                touch[labels[i]][k][1] |= hi[k] - x[k] <= reach;
            }
        }
        touch.iter().any(|c| c.iter().any(|t| t[0] && t[1]))
    };
    Ok(Clusters {
        labels,
        sizes,
        merges,
        spanning,
    })
}

/// Budget for [`percolation_experiment`].
#[derive(Clone, Debug, PartialEq)]
pub struct PercolationSetup {
    /// Side of the smallest periodic box.
    pub base_side: f64,
    /// Box sides are `base_side * m` for each multiple.
    pub multiples: Vec<usize>,
    pub chains: usize,
    pub burn_in: u64,
    /// Moves between samples, per unit of box volume.
    pub thin_per_volume: f64,
    pub samples_per_chain: usize,
    pub batches: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for PercolationSetup {
    fn default() -> Self {
        PercolationSetup {
            base_side: 6.0,
            multiples: vec![1, 2, 3],
            chains: 4,
            burn_in: 200_000,
            thin_per_volume: 20.0,
            samples_per_chain: 500,
            batches: 10,
            seed: 0,
            exec: Execution::default(),
        }
    }
}

/// Largest-cluster fraction of the effective one-type model on growing
/// periodic boxes; passes when the fraction never grows beyond 3 sigma.
pub fn percolation_experiment(
    dom: &SimulationDomain,
    z_s: f64,
    z_p: f64,
    setup: &PercolationSetup,
) -> Result<Report, DiagnosticsError> {
    if setup.multiples.is_empty() || setup.chains == 0 || setup.samples_per_chain == 0 || setup.batches == 0 {
        return Err(DiagnosticsError::Invalid("empty percolation budget".into()));
    }
    let d = dom.dim();
    let radius = 2.0 * dom.depletion_radius();
    let mut report = Report::new("percolation");
    report.push_f64("sphere_activity", z_s).push_f64("particle_activity", z_p).push_f64("interaction_radius", radius);
    let mut previous: Option<Estimate> = None;
    let mut pass = true;
    for (level, &m) in setup.multiples.iter().enumerate() {
        let side = setup.base_side * m as f64;
        let window = Window::Periodic { sides: vec![side; d] };
        let params = GibbsModelParams::one_type(dom, z_s, z_p, window.clone(), EnergyBackend::Pairwise);
        let thin = (setup.thin_per_volume * window.volume()).ceil().max(1.0) as u64;
        let jobs = map_indexed(setup.chains, setup.exec, |c| -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), DiagnosticsError> {
            let mut rng = replica_rng(setup.seed, (level * setup.chains + c) as u64);
            let mut sampler = Sampler::new(params.clone())?;
            let mut frac = Vec::with_capacity(setup.samples_per_chain);
            let mut span = Vec::with_capacity(setup.samples_per_chain);
            let mut count = Vec::with_capacity(setup.samples_per_chain);
            let mut err = None;
            sampler.observe(setup.burn_in, thin, setup.samples_per_chain, &mut rng, |_, s| {
                match percolation_clusters(&s.state().spheres, &window, radius) {
                    Ok(c) => {
                        frac.push(c.largest_fraction());
                        span.push(if c.spanning { 1.0 } else { 0.0 });
                        count.push(c.labels.len() as f64);
                    }
                    Err(e) => err = Some(e),
                }
            });
            match err {
                Some(e) => Err(e),
                None => Ok((frac, span, count)),
            }
        });
        let mut fracs = Vec::new();
        let mut spans = Vec::new();
        let mut counts = Vec::new();
        for j in jobs {
            let (f, s, c) = j?;
            fracs.push(batch_means(&f, setup.batches));
            spans.extend(s);
            counts.extend(c);
        }
        let est = combine(&fracs);
        let key = format!("side_{}", fmt_side(side));
        report
            .push_f64(format!("{key}.largest_fraction"), est.mean)
            .push_f64(format!("{key}.largest_fraction_se"), est.std_error)
            .push_f64(format!("{key}.spanning_fraction"), crate::stats::mean(&spans))
            .push_f64(format!("{key}.mean_spheres"), crate::stats::mean(&counts));
        if let Some(p) = previous {
            let slack = 3.0 * (p.std_error.powi(2) + est.std_error.powi(2)).sqrt();
            let ok = est.mean <= p.mean + slack;
            report.push(format!("{key}.not_growing"), ok);
            pass &= ok;
        }
        previous = Some(est);
    }
    report.verdict(pass);
    Ok(report)
}

fn fmt_side(side: f64) -> String {
    if side.fract() == 0.0 {
        format!("{}", side as i64)
    } else {
        format!("{side}")
    }
}

/// Mean of independent chain estimates.
pub(crate) fn combine(parts: &[Estimate]) -> Estimate {
    let k = parts.len() as f64;
    let mean = parts.iter().map(|e| e.mean).sum::<f64>() / k;
    let var = parts.iter().map(|e| e.std_error * e.std_error).sum::<f64>() / (k * k);
    Estimate::new(mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Container, Metric};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bfs_components(spheres: &PointSet, metric: &Metric, radius: f64) -> Vec<Vec<usize>> {
        let n = spheres.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut queue = std::collections::VecDeque::from([s]);
            let mut comp = Vec::new();
            while let Some(v) = queue.pop_front() {
                comp.push(v);
                for w in 0..n {
                    if !seen[w] && metric.dist2(spheres.get(v), spheres.get(w)) < radius * radius {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out.sort();
        out
    }

    fn partition(c: &Clusters) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); c.count()];
        for (i, &l) in c.labels.iter().enumerate() {
            out[l].push(i);
        }
        out.sort();
        out
    }

    #[test]
    fn singletons_and_a_line() {
        let w = Window::cube(2, 20.0);
        let far = PointSet::from_points(2, &[[1.0, 1.0], [3.0, 1.0], [5.0, 1.0]]).unwrap();
        let c = percolation_clusters(&far, &w, 1.15).unwrap();
        assert_eq!(c.sizes, vec![1, 1, 1]);
        assert_eq!(c.merges, 0);
        let r_o = 0.575;
        let line: Vec<[f64; 2]> = (0..10).map(|i| [1.0 + i as f64 * 1.9 * r_o, 5.0]).collect();
        let c = percolation_clusters(&PointSet::from_points(2, &line).unwrap(), &w, 2.0 * r_o).unwrap();
        assert_eq!(c.sizes, vec![10]);
        assert_eq!(c.count() + c.merges, 10);
        assert!(!c.spanning);
    }

    #[test]
    fn spanning_rules() {
        let box_w = Window::cube(2, 5.0);
        let line: Vec<[f64; 2]> = (0..6).map(|i| [0.2 + i as f64 * 0.92, 2.5]).collect();
        let ps = PointSet::from_points(2, &line).unwrap();
        assert!(percolation_clusters(&ps, &box_w, 1.0).unwrap().spanning);
        // a full ring around a torus wraps, an open arc does not
        let torus = Window::Periodic { sides: vec![5.0, 5.0] };
        let ring: Vec<[f64; 2]> = (0..6).map(|i| [i as f64 * 5.0 / 6.0, 2.5]).collect();
        let ring = PointSet::from_points(2, &ring).unwrap();
        assert!(percolation_clusters(&ring, &torus, 1.0).unwrap().spanning);
        let arc: Vec<[f64; 2]> = (0..5).map(|i| [i as f64 * 5.0 / 6.0, 2.5]).collect();
        let c = percolation_clusters(&PointSet::from_points(2, &arc).unwrap(), &torus, 1.0).unwrap();
        assert_eq!(c.count(), 1);
        assert!(!c.spanning);
        assert!(percolation_clusters(&ring, &Window::Periodic { sides: vec![1.5, 5.0] }, 1.0).is_err());
    }

    #[test]
    fn union_find_matches_breadth_first_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..1000 {
            let n = rng.random_range(0..40);
            let periodic = trial % 2 == 0;
            let side = 8.0;
            let w = if periodic {
                Window::Periodic { sides: vec![side, side] }
            } else {
                Window::cube(2, side)
            };
            let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side]).collect();
            let ps = PointSet::from_points(2, &pts).unwrap();
            let radius = rng.random_range(0.3..2.0);
            let c = percolation_clusters(&ps, &w, radius).unwrap();
            assert_eq!(partition(&c), bfs_components(&ps, &w.metric(), radius), "trial {trial}");
            assert_eq!(c.count() + c.merges, n);
        }
    }

    #[test]
    fn dilute_fraction_does_not_grow() {
        let dom = SimulationDomain::new(2, 0.5, 0.075, 1.0, Container::Open).unwrap();
        let setup = PercolationSetup {
            base_side: 5.0,
            multiples: vec![1, 2],
            chains: 2,
            burn_in: 5_000,
            thin_per_volume: 5.0,
            samples_per_chain: 100,
            batches: 5,
            seed: 8,
            exec: Execution::Sequential,
        };
        let r = percolation_experiment(&dom, 0.2, 1.0, &setup).unwrap();
        assert!(r.passed(), "{r}");
        assert!(r.get("side_10.largest_fraction").is_some());
    }
}
