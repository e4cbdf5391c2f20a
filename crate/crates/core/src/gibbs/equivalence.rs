use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::{EnergyBackend, GibbsError, GibbsModel, GibbsModelParams, Sampler, Window};
use crate::geometry::{Metric, PointSet};
use crate::par::{map_indexed, replica_rng, Execution};
use crate::report::Report;
use crate::stats::{chi_square_p_value, mean, two_sided_p_value, variance, Estimate, THREE_SIGMA_P};

/// Run lengths of the marginal-equivalence experiment.
#[derive(Clone, Copy, Debug)]
pub struct EquivalenceSetup {
    /// Independent chains per sampler.
    pub chains: usize,
    /// Batches per chain for the error bars.
    pub batches: usize,
    pub burn_in: u64,
    pub thin: u64,
    pub samples_per_chain: usize,
    pub pair_bins: usize,
    /// Minimum pooled mass of a sphere-count bin.
    pub min_bin_mass: f64,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for EquivalenceSetup {
    fn default() -> Self {
        EquivalenceSetup {
            chains: 4,
            batches: 10,
            burn_in: 200_000,
            thin: 200,
            samples_per_chain: 5_000,
            pair_bins: 12,
            min_bin_mass: 0.02,
            seed: 0,
            exec: Execution::default(),
        }
    }
}

/// Per-draw observables of one chain.
#[derive(Default)]
struct ChainData {
    spheres: Vec<f64>,
    /// `pair_bins` values per draw.
    pairs: Vec<f64>,
    particles: Vec<f64>,
    /// Reconstructed particles minus `z_p (|box| - E)`; one-type chains only.
    thinning_gap: Vec<f64>,
    covered_fraction: Vec<f64>,
}

struct PairBinning {
    lo: f64,
    hi: f64,
    bins: usize,
}

impl PairBinning {
    fn fill(&self, spheres: &PointSet, metric: &Metric, out: &mut Vec<f64>) {
        let start = out.len();
        out.resize(start + self.bins, 0.0);
        let w = (self.hi - self.lo) / self.bins as f64;
        for i in 0..spheres.len() {
            for j in i + 1..spheres.len() {
                let r = metric.dist2(spheres.get(i), spheres.get(j)).sqrt();
                if r >= self.lo && r < self.hi {
                    let b = (((r - self.lo) / w) as usize).min(self.bins - 1);
                    out[start + b] += 1.0;
                }
            }
        }
    }
}

/// Batch means pooled over independent chains.
fn pooled(series: &[Vec<f64>], batches: usize) -> Estimate {
    let mut means = Vec::new();
    for s in series {
        let size = s.len() / batches;
        if size == 0 {
            continue;
        }
        for c in s.chunks_exact(size).take(batches) {
            means.push(mean(c));
        }
    }
    Estimate::new(mean(&means), (variance(&means) / means.len().max(1) as f64).sqrt())
}

fn column(chains: &[ChainData], f: impl Fn(&ChainData) -> Vec<f64>) -> Vec<Vec<f64>> {
    chains.iter().map(f).collect()
}

/// Chi-square of per-bin z-scores, skipping bins that neither side visits.
fn binwise(a: &[Estimate], b: &[Estimate], constrained: bool) -> (f64, usize) {
    let mut stat = 0.0;
    let mut k = 0usize;
    for (x, y) in a.iter().zip(b) {
        if x.std_error == 0.0 && y.std_error == 0.0 && x.mean == y.mean {
            continue;
        }
        let z = x.z_score(y);
        stat += z * z;
        k += 1;
    }
    let dof = if constrained { k.saturating_sub(1) } else { k };
    (stat, dof)
}

/// Compares the sphere marginal of the two-type hard-core measure with the
/// one-type depletion measure on a periodic box, and the particles of the
/// two-type chain with particles reconstructed from one-type draws.
///
/// `params` must be a two-type hard-core target on a periodic window in the
/// pairwise regime; the one-type target reuses its radii and activities.
pub fn marginal_equivalence_experiment(params: &GibbsModelParams, setup: &EquivalenceSetup) -> Result<Report, GibbsError> {
    let sides = match (&params.model, &params.window) {
        (GibbsModel::TwoTypeHardcore, Window::Periodic { sides }) => sides.clone(),
        _ => {
            return Err(GibbsError::Invalid(
                "equivalence needs a two-type hard-core target on a periodic window".into(),
            ))
        }
    };
    if setup.chains == 0 || setup.batches < 2 || setup.samples_per_chain < setup.batches || setup.pair_bins == 0 {
        return Err(GibbsError::Invalid("equivalence run lengths are too small".into()));
    }
    let mut one = params.clone();
    one.model = GibbsModel::OneTypeDepletion(EnergyBackend::Pairwise);
    one.validate()?;
    Sampler::new(params.clone())?;
    Sampler::new(one.clone())?;

    let metric = params.window.metric();
    let volume = params.window.volume();
    let zp = params.particle_activity;
    let ro = params.depletion_radius();
    let binning = PairBinning {
        lo: 2.0 * params.sphere_radius,
        hi: sides.iter().cloned().fold(f64::INFINITY, f64::min) / 2.0,
        bins: setup.pair_bins,
    };

    let runs = map_indexed(2 * setup.chains, setup.exec, |job| {
        let two_type = job % 2 == 0;
        let chain = (job / 2) as u64;
        let target = if two_type { params.clone() } else { one.clone() };
        let mut rng = replica_rng(setup.seed, 2 * chain + (!two_type) as u64);
        let mut recon_rng = replica_rng(setup.seed ^ 0x9e37_79b9_7f4a_7c15, chain);
        let mut sampler = Sampler::new(target).expect("validated above");
        let mut data = ChainData::default();
        let poisson = (zp * volume > 0.0).then(|| Poisson::new(zp * volume).expect("positive mean"));
        let mut x = vec![0.0; params.dim];
        sampler.observe(setup.burn_in, setup.thin, setup.samples_per_chain, &mut rng, |_, s| {
            let st = s.state();
            data.spheres.push(st.spheres.len() as f64);
            binning.fill(&st.spheres, &metric, &mut data.pairs);
            if two_type {
                data.particles.push(st.particles.len() as f64);
            } else {
                let n: u64 = poisson.as_ref().map_or(0, |p| p.sample(&mut recon_rng) as u64);
                let mut kept = 0u64;
                for _ in 0..n {
                    for (k, v) in x.iter_mut().enumerate() {
                        *v = sides[k] * recon_rng.random::<f64>();
                    }
                    let free = st.spheres.iter().all(|(_, y)| metric.dist2(&x, y) >= ro * ro);
                    kept += free as u64;
                }
                data.particles.push(kept as f64);
                data.thinning_gap.push(kept as f64 - zp * (volume - s.energy()));
                data.covered_fraction.push(s.energy() / volume);
            }
        });
        data
    });
    let (a, b): (Vec<_>, Vec<_>) = runs.into_iter().enumerate().partition(|(i, _)| i % 2 == 0);
    let a: Vec<ChainData> = a.into_iter().map(|(_, d)| d).collect();
    let b: Vec<ChainData> = b.into_iter().map(|(_, d)| d).collect();
    let nb = setup.batches;

    let mut report = Report::new("marginal-equivalence");
    report
        .push("sides", format!("{sides:?}"))
        .push_f64("sphere_activity", params.sphere_activity)
        .push_f64("particle_activity", zp)
        .push("chains", setup.chains)
        .push("samples_per_chain", setup.samples_per_chain);

    // sphere counts
    let ma = pooled(&column(&a, |d| d.spheres.clone()), nb);
    let mb = pooled(&column(&b, |d| d.spheres.clone()), nb);
    let mut all: Vec<u64> = a.iter().chain(&b).flat_map(|d| d.spheres.iter().map(|&v| v as u64)).collect();
    all.sort_unstable();
    let edges = count_bins(&all, setup.min_bin_mass);
    let bin_of = |n: f64| edges.iter().rposition(|&e| n as u64 >= e).unwrap_or(0);
    let hist = |side: &[ChainData], k: usize| {
        pooled(
            &column(side, |d| d.spheres.iter().map(|&n| (bin_of(n) == k) as u8 as f64).collect()),
            nb,
        )
    };
    let ha: Vec<Estimate> = (0..edges.len()).map(|k| hist(&a, k)).collect();
    let hb: Vec<Estimate> = (0..edges.len()).map(|k| hist(&b, k)).collect();
    let (count_stat, count_dof) = binwise(&ha, &hb, true);
    let count_p = chi_square_p_value(count_stat, count_dof);
    let mean_p = two_sided_p_value(ma.z_score(&mb));
    report
        .push_f64("count.mean_two_type", ma.mean)
        .push_f64("count.se_two_type", ma.std_error)
        .push_f64("count.mean_one_type", mb.mean)
        .push_f64("count.se_one_type", mb.std_error)
        .push_f64("count.mean_p", mean_p)
        .push("count.bins", edges.len())
        .push_f64("count.chi2", count_stat)
        .push("count.dof", count_dof)
        .push_f64("count.p", count_p);

    // pair correlation
    let pair_est = |side: &[ChainData], k: usize| {
        pooled(
            &column(side, |d| d.pairs.chunks_exact(setup.pair_bins).map(|c| c[k]).collect()),
            nb,
        )
    };
    let pa: Vec<Estimate> = (0..setup.pair_bins).map(|k| pair_est(&a, k)).collect();
    let pb: Vec<Estimate> = (0..setup.pair_bins).map(|k| pair_est(&b, k)).collect();
    let (pair_stat, pair_dof) = binwise(&pa, &pb, false);
    let pair_p = chi_square_p_value(pair_stat, pair_dof);
    report
        .push_f64("pairs.r_min", binning.lo)
        .push_f64("pairs.r_max", binning.hi)
        .push_f64("pairs.chi2", pair_stat)
        .push("pairs.dof", pair_dof)
        .push_f64("pairs.p", pair_p);

    // particles
    let qa = pooled(&column(&a, |d| d.particles.clone()), nb);
    let qb = pooled(&column(&b, |d| d.particles.clone()), nb);
    let particle_p = two_sided_p_value(qa.z_score(&qb));
    let gap = pooled(&column(&b, |d| d.thinning_gap.clone()), nb);
    let thinning_p = two_sided_p_value(gap.z_score(&Estimate::new(0.0, 0.0)));
    let cover = pooled(&column(&b, |d| d.covered_fraction.clone()), nb);
    report
        .push_f64("particles.mean_two_type", qa.mean)
        .push_f64("particles.mean_reconstructed", qb.mean)
        .push_f64("particles.p", particle_p)
        .push_f64("thinning.mean_covered_fraction", cover.mean)
        .push_f64("thinning.predicted_intensity", zp * (1.0 - cover.mean))
        .push_f64("thinning.measured_intensity", qb.mean / volume)
        .push_f64("thinning.p", thinning_p);

    let ps = [mean_p, count_p, pair_p, particle_p, thinning_p];
    report.push_f64("threshold_p", THREE_SIGMA_P);
    report.verdict(ps.iter().all(|&p| p >= THREE_SIGMA_P));
    Ok(report)
}

/// Lower edges of count bins, each holding at least `min_mass` of the sorted
/// pooled `values` (the last bin absorbs any remainder).
fn count_bins(values: &[u64], min_mass: f64) -> Vec<u64> {
    let n = values.len();
    if n == 0 {
        return vec![0];
    }
    let need = ((min_mass * n as f64).ceil() as usize).max(1);
    let mut edges = vec![0u64];
    let mut in_bin = 0usize;
    let mut i = 0;
    while i < n {
        let v = values[i];
        let run = values[i..].iter().take_while(|&&x| x == v).count();
        if in_bin >= need && n - i >= need {
            edges.push(v);
            in_bin = 0;
        }
        in_bin += run;
        i += run;
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Container, SimulationDomain};

    #[test]
    fn count_bins_hold_enough_mass() {
        let v = [0, 0, 1, 1, 1, 2, 5, 5, 6, 9];
        assert_eq!(count_bins(&v, 0.2), vec![0, 1, 2, 6]);
        assert_eq!(count_bins(&[3, 3, 3], 0.5), vec![0]);
    }

    #[test]
    fn hard_spheres_agree_without_particles() {
        let dom = SimulationDomain::new(2, 0.5, 0.075, 1.0, Container::Open).unwrap();
        let params = GibbsModelParams::two_type(&dom, 1.0, 0.0, Window::Periodic { sides: vec![4.0, 4.0] });
        let setup = EquivalenceSetup {
            chains: 2,
            batches: 10,
            burn_in: 5_000,
            thin: 50,
            samples_per_chain: 1_000,
            pair_bins: 6,
            seed: 3,
            ..Default::default()
        };
        let r = marginal_equivalence_experiment(&params, &setup).unwrap();
        assert!(r.passed(), "{r}");
        assert_eq!(r.get("thinning.predicted_intensity"), Some("0.0000000000000000e0"));
    }
}
