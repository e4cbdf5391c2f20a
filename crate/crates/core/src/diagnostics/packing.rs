use super::percolation::combine;
use super::DiagnosticsError;
use crate::geometry::{Metric, PointSet, SimulationDomain, TwoTypeConfiguration};
use crate::gibbs::{EnergyBackend, GibbsModelParams, Sampler, Window};
use crate::par::{map_indexed, replica_rng, Execution};
use crate::report::Report;
use crate::stats::{batch_means, two_sided_p_value, Estimate, THREE_SIGMA_P};

/// Centre density of the densest packing of spheres of radius `r`, where
/// known: the line, the hexagonal lattice and the face-centred cubic lattice.
pub fn closest_packing_density(dim: usize, r: f64) -> Option<f64> {
    match dim {
        1 => Some(1.0 / (2.0 * r)),
        2 => Some(1.0 / (2.0 * 3f64.sqrt() * r * r)),
        3 => Some(2f64.sqrt() / (8.0 * r * r * r)),
        _ => None,
    }
}

/// Dense admissible start on a periodic box: a hexagonal lattice in 2D, a
/// cubic one otherwise, with points that would overlap across the boundary
/// dropped.
pub fn hexagonal_start(sides: &[f64], sphere_radius: f64) -> PointSet {
    let d = sides.len();
    let a = 2.0 * sphere_radius * (1.0 + 1e-9);
    let metric = Metric::Periodic(sides.to_vec());
    let mut candidates: Vec<Vec<f64>> = Vec::new();
    if d == 2 {
        let dy = a * 3f64.sqrt() / 2.0;
        let rows = (sides[1] / dy).floor() as usize;
        let cols = (sides[0] / a).floor() as usize;
        for j in 0..rows {
            for i in 0..cols {
                let shift = if j % 2 == 1 { a / 2.0 } else { 0.0 };
                candidates.push(vec![i as f64 * a + shift, j as f64 * dy]);
            }
        }
    } else {
        let counts: Vec<usize> = sides.iter().map(|l| (l / a).floor() as usize).collect();
        let total: usize = counts.iter().product();
        for mut idx in 0..total {
            let mut p = vec![0.0; d];
            for k in (0..d).rev() {
                p[k] = (idx % counts[k]) as f64 * a;
                idx /= counts[k];
            }
            candidates.push(p);
        }
    }
    let mut out = PointSet::new(d);
    let c2 = 4.0 * sphere_radius * sphere_radius;
    for mut p in candidates {
        metric.wrap(&mut p);
        if out.iter().all(|(_, q)| metric.dist2(&p, q) >= c2) {
            out.push(out.len() as u64, &p);
        }
    }
    out
}

/// Budget for [`packing_experiment`].
#[derive(Clone, Debug, PartialEq)]
pub struct PackingSetup {
    pub sides: Vec<f64>,
    pub chains: usize,
    pub burn_in: u64,
    pub thin: u64,
    pub samples_per_chain: usize,
    pub batches: usize,
    pub seed: u64,
    pub exec: Execution,
}

/// Mean sphere intensity at one activity pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PackingPoint {
    pub sphere_activity: f64,
    pub particle_activity: f64,
    pub intensity: Estimate,
    /// Intensity over the closest-packing density, where known.
    pub ratio: Option<f64>,
}

/// Sphere intensity of the effective one-type model along a ladder of sphere
/// activities, for each particle activity, started from a dense lattice.
///
/// The verdict requires each curve to be non-decreasing within 3 sigma, the
/// top of each curve to exceed `0.8` of the closest-packing density (when
/// known), and the curves to agree at the top within 3 sigma.
pub fn packing_experiment(
    dom: &SimulationDomain,
    ladder: &[f64],
    particle_activities: &[f64],
    setup: &PackingSetup,
) -> Result<(Vec<PackingPoint>, Report), DiagnosticsError> {
    if ladder.is_empty() || particle_activities.is_empty() || setup.chains == 0 || setup.samples_per_chain == 0 {
        return Err(DiagnosticsError::Invalid("empty packing budget".into()));
    }
    if ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DiagnosticsError::Invalid("activity ladder must increase".into()));
    }
    let window = Window::Periodic { sides: setup.sides.clone() };
    let volume = window.volume();
    let start = hexagonal_start(&setup.sides, dom.sphere_radius());
    let rho_star = closest_packing_density(dom.dim(), dom.sphere_radius());
    let jobs: Vec<(usize, usize, usize)> = (0..particle_activities.len())
        .flat_map(|a| (0..ladder.len()).flat_map(move |b| (0..setup.chains).map(move |c| (a, b, c))))
        .collect();
    let results = map_indexed(jobs.len(), setup.exec, |j| -> Result<Estimate, DiagnosticsError> {
        let (a, b, _) = jobs[j];
        let params = GibbsModelParams::one_type(dom, ladder[b], particle_activities[a], window.clone(), EnergyBackend::Pairwise);
        let state = TwoTypeConfiguration::new(start.clone(), PointSet::new(dom.dim()))?;
        let mut sampler = Sampler::with_state(params, state)?;
        let mut rng = replica_rng(setup.seed, j as u64);
        let mut xs = Vec::with_capacity(setup.samples_per_chain);
        sampler.observe(setup.burn_in, setup.thin, setup.samples_per_chain, &mut rng, |_, s| {
            xs.push(s.state().spheres.len() as f64 / volume);
        });
        Ok(batch_means(&xs, setup.batches))
    });
    let mut per = vec![vec![Vec::new(); ladder.len()]; particle_activities.len()];
    for (res, &(a, b, _)) in results.into_iter().zip(&jobs) {
        per[a][b].push(res?);
    }
    let mut report = Report::new("packing");
    if let Some(r) = rho_star {
        report.push_f64("closest_packing_density", r);
    }
    report.push("start_spheres", start.len());
    let mut points = Vec::new();
    let mut pass = true;
    let mut tops = Vec::new();
    for (a, &zp) in particle_activities.iter().enumerate() {
        let curve: Vec<Estimate> = per[a].iter().map(|c| combine(c)).collect();
        for (b, est) in curve.iter().enumerate() {
            let key = format!("zp_{a}.z_{b}");
            let ratio = rho_star.map(|r| est.mean / r);
            report
                .push_f64(format!("{key}.sphere_activity"), ladder[b])
                .push_f64(format!("{key}.intensity"), est.mean)
                .push_f64(format!("{key}.intensity_se"), est.std_error);
            if let Some(q) = ratio {
                report.push_f64(format!("{key}.ratio"), q);
            }
            points.push(PackingPoint {
                sphere_activity: ladder[b],
                particle_activity: zp,
                intensity: *est,
                ratio,
            });
        }
        let monotone = curve
            .windows(2)
            .all(|w| w[1].mean >= w[0].mean - 3.0 * (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt());
        report.push_f64(format!("zp_{a}.particle_activity"), zp).push(format!("zp_{a}.monotone"), monotone);
        pass &= monotone;
        let top = *curve.last().expect("non-empty ladder");
        if let Some(r) = rho_star {
            let dense = top.mean > 0.8 * r;
            report.push(format!("zp_{a}.top_above_0.8"), dense);
            pass &= dense;
        }
        tops.push(top);
    }
    for (a, t) in tops.iter().enumerate().skip(1) {
        let p = two_sided_p_value(tops[0].z_score(t));
        report.push_f64(format!("top_agreement_0_{a}.p"), p);
        pass &= p >= THREE_SIGMA_P;
    }
    report.verdict(pass);
    Ok((points, report))
}
