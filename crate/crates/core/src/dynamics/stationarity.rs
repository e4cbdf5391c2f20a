//! Two-sphere checks of the depletion gradient dynamics on a periodic square.
//!
//! The relative position of two spheres on a torus has stationary density
//! proportional to `exp(z_p V_ovlap(r)) 1{r >= 2 r_s}`, so for distances up
//! to half the side the distance density is proportional to
//! `r exp(z_p V_ovlap(r))`. Bin probabilities come from 1-d quadrature.
//!
//! The projection step leaves the pair exactly at contact with probability
//! of order `sqrt(h)`. Those samples form a separate atom that vanishes as
//! `h -> 0`; they are counted and reported, and the histogram test uses the
//! remaining samples.

use rand::Rng;

use super::{step_depletion, DynamicsError, GaussianNoise, IntegratorSettings, LocalTimeLedger, Scheme};
use crate::depletion::{pair_overlap, DepletionParams};
use crate::geometry::{Container, PointSet, SimulationDomain};
use crate::par::{map_indexed, replica_rng, Execution};
use crate::report::Report;
use crate::stats::{chi_square_p_value, iid_estimate, pearson_chi_square};

#[derive(Clone, Debug, PartialEq)]
pub struct StationaritySetup {
    pub sphere_radius: f64,
    pub particle_radius: f64,
    pub particle_activity: f64,
    pub side: f64,
    pub step: f64,
    pub replicas: usize,
    /// Burn-in time per replica.
    pub burn_in: f64,
    /// Time between recorded pairs.
    pub spacing: f64,
    pub samples_per_replica: usize,
    /// Histogram bins on `[2 r_s, side / 2]`.
    pub bins: usize,
    /// Lag of the exchangeability pairs.
    pub lag: f64,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for StationaritySetup {
    fn default() -> Self {
        StationaritySetup {
            sphere_radius: 0.5,
            particle_radius: 0.075,
            particle_activity: 30.0,
            side: 2.4,
            step: 1e-4,
            replicas: 16,
            burn_in: 1.0,
            spacing: 0.5,
            samples_per_replica: 600,
            bins: 8,
            lag: 0.05,
            seed: 1,
            exec: Execution::default(),
        }
    }
}

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Equal-width bin edges on `[lo, hi]`.
pub fn distance_bins(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect()
}

/// Stationary probabilities of the distance bins, conditional on the
/// distance lying in `[edges[0], edges[last]]`. A bin containing the
/// interaction range is split there, where the integrand has a kink.
pub fn stationary_bin_probabilities(p: &DepletionParams, edges: &[f64]) -> Vec<f64> {
    let range = 2.0 * p.depletion_radius;
    let f = |r: f64| r * (p.particle_activity * pair_overlap(r, p).unwrap_or(0.0)).exp();
    let mut masses = Vec::with_capacity(edges.len() - 1);
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let m = if a < range && range < b {
            simpson(&f, a, range, 256) + simpson(&f, range, b, 256)
        } else {
            simpson(&f, a, b, 256)
        };
        masses.push(m);
    }
    let total: f64 = masses.iter().sum();
    masses.into_iter().map(|m| m / total).collect()
}

/// Distances within this relative gap of contact count as the contact atom.
const CONTACT_REL_GAP: f64 = 1e-8;

struct ReplicaOutput {
    counts: Vec<u64>,
    raw_first: u64,
    at_contact: u64,
    antisymmetric: Vec<f64>,
    max_sweeps: usize,
}

/// Runs the two-sphere experiment. The verdict requires the chi-square
/// p-value of the distance histogram to exceed 0.01 and the exchangeability
/// statistic `E[d(s) d(t)^2 - d(s)^2 d(t)]` to be zero within 3 sigma.
pub fn stationarity_experiment(setup: &StationaritySetup) -> Result<Report, DynamicsError> {
    let dom = SimulationDomain::new(
        2,
        setup.sphere_radius,
        setup.particle_radius,
        1.0,
        Container::Periodic {
            sides: vec![setup.side, setup.side],
        },
    )?;
    let p = DepletionParams::from_domain(&dom, setup.particle_activity)?;
    if setup.side < 4.0 * p.depletion_radius {
        return Err(DynamicsError::InvalidSettings("side must be at least four depletion radii".into()));
    }
    if !(setup.lag > 0.0 && setup.lag < setup.spacing && setup.bins > 0 && setup.replicas > 0) {
        return Err(DynamicsError::InvalidSettings("need 0 < lag < spacing and positive bins and replicas".into()));
    }
    let lo = 2.0 * setup.sphere_radius;
    let hi = setup.side / 2.0;
    let edges = distance_bins(lo, hi, setup.bins);
    let probs = stationary_bin_probabilities(&p, &edges);
    let mut settings = IntegratorSettings::defaults(&dom, Scheme::DepletionGradient, setup.seed);
    settings.step = setup.step;
    settings.validate(&dom)?;
    let steps = |t: f64| (t / setup.step).round() as usize;
    let (burn, lag_steps) = (steps(setup.burn_in), steps(setup.lag));
    let gap_steps = steps(setup.spacing) - lag_steps;
    let metric = dom.metric();

    let outputs = map_indexed(setup.replicas, setup.exec, |r| -> Result<ReplicaOutput, DynamicsError> {
        let mut rng = replica_rng(setup.seed, r as u64);
        let mut a = [0.0; 2];
        let mut b = [0.0; 2];
        loop {
            for k in 0..2 {
                a[k] = rng.random::<f64>() * setup.side;
                b[k] = rng.random::<f64>() * setup.side;
            }
            if metric.dist2(&a, &b) >= lo * lo {
                break;
            }
        }
        let mut spheres = PointSet::from_points(2, &[a, b])?;
        let mut noise = GaussianNoise(rng);
        let mut ledger = LocalTimeLedger::new();
        let mut max_sweeps = 0;
        let mut advance = |spheres: &mut PointSet, n: usize| -> Result<(), DynamicsError> {
            for _ in 0..n {
                let rep = step_depletion(spheres, &dom, &p, &settings, &mut noise, &mut ledger)?;
                max_sweeps = max_sweeps.max(rep.sweeps);
            }
            Ok(())
        };
        let dist = |s: &PointSet| metric.dist2(s.get(0), s.get(1)).sqrt();
        advance(&mut spheres, burn)?;
        let mut counts = vec![0; setup.bins];
        let mut at_contact = 0;
        let mut antisymmetric = Vec::with_capacity(setup.samples_per_replica);
        for _ in 0..setup.samples_per_replica {
            advance(&mut spheres, gap_steps)?;
            let d1 = dist(&spheres);
            advance(&mut spheres, lag_steps)?;
            let d2 = dist(&spheres);
            if d1 - lo <= CONTACT_REL_GAP * lo {
                at_contact += 1;
            } else if d1 <= hi {
                let k = (((d1 - lo) / (hi - lo)) * setup.bins as f64).floor().max(0.0) as usize;
                counts[k.min(setup.bins - 1)] += 1;
            }
            antisymmetric.push(d1 * d2 * (d2 - d1));
        }
        Ok(ReplicaOutput {
            raw_first: counts[0] + at_contact,
            counts,
            at_contact,
            antisymmetric,
            max_sweeps,
        })
    });
    let mut counts = vec![0u64; setup.bins];
    let mut at_contact = 0;
    let mut raw_first = 0;
    let mut anti = Vec::new();
    let mut max_sweeps = 0;
    for o in outputs {
        let o = o?;
        for (c, k) in counts.iter_mut().zip(&o.counts) {
            *c += k;
        }
        at_contact += o.at_contact;
        raw_first += o.raw_first;
        anti.extend(o.antisymmetric);
        max_sweeps = max_sweeps.max(o.max_sweeps);
    }
    let (stat, dof) = pearson_chi_square(&counts, &probs, 5.0);
    let p_value = chi_square_p_value(stat, dof);
    let mut raw = counts.clone();
    raw[0] = raw_first;
    let (raw_stat, raw_dof) = pearson_chi_square(&raw, &probs, 5.0);
    let in_range = raw.iter().sum::<u64>();
    let samples = (setup.replicas * setup.samples_per_replica) as f64;
    let ex = iid_estimate(&anti);
    let z = if ex.std_error > 0.0 { ex.mean / ex.std_error } else { 0.0 };
    let mut report = Report::new("stationarity");
    report
        .push_f64("particle_activity", setup.particle_activity)
        .push_f64("side", setup.side)
        .push_f64("step", setup.step)
        .push("replicas", setup.replicas)
        .push("in_range_samples", in_range)
        .push("contact_samples", at_contact)
        .push_f64("contact_fraction", at_contact as f64 / samples)
        .push_f64("contact_fraction_per_sqrt_step", at_contact as f64 / samples / setup.step.sqrt())
        .push("max_sweeps_used", max_sweeps);
    for (k, (c, q)) in counts.iter().zip(&probs).enumerate() {
        report.push(format!("bin_{k}.observed"), c).push_f64(format!("bin_{k}.expected_probability"), *q);
    }
    let hist_ok = p_value > 0.01;
    let exch_ok = z.abs() <= 3.0;
    report
        .push_f64("chi_square", stat)
        .push("chi_square_dof", dof)
        .push_f64("chi_square_p", p_value)
        .push_f64("chi_square_p_with_contact", chi_square_p_value(raw_stat, raw_dof))
        .push("histogram_pass", hist_ok)
        .push_f64("exchangeability_mean", ex.mean)
        .push_f64("exchangeability_se", ex.std_error)
        .push_f64("exchangeability_z", z)
        .push("exchangeability_pass", exch_ok)
        .verdict(hist_ok && exch_ok);
    Ok(report)
}
