use std::collections::BTreeSet;

use super::{detect_chain, detect_fast, norm, with_exterior, BadPathSchedule, DiagnosticsError};
use crate::dynamics::TrajectoryRecord;
use crate::geometry::{BallKind, Metric, PointSet, SimulationDomain};
use crate::report::Report;

/// Spheres within `rho` of the origin or linked to such a sphere by steps
/// shorter than `2 r_s + eps`, and the particles within `rho` or within
/// `r_s + r_p + eps` of one of those spheres.
pub fn index_sets(
    spheres: &PointSet,
    particles: &PointSet,
    rho: f64,
    eps: f64,
    sphere_radius: f64,
    depletion_radius: f64,
) -> (BTreeSet<u64>, BTreeSet<u64>) {
    let m = Metric::Euclidean;
    let link2 = (2.0 * sphere_radius + eps).powi(2);
    let n = spheres.len();
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|&i| norm(spheres.get(i)) <= rho).collect();
    for &i in &stack {
        seen[i] = true;
    }
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if !seen[j] && m.dist2(spheres.get(i), spheres.get(j)) < link2 {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    let members: Vec<usize> = (0..n).filter(|&i| seen[i]).collect();
    let spheres_in: BTreeSet<u64> = members.iter().map(|&i| spheres.id(i)).collect();
    let near2 = (depletion_radius + eps).powi(2);
    let particles_in = particles
        .iter()
        .filter(|(_, x)| norm(x) < rho || members.iter().any(|&i| m.dist2(x, spheres.get(i)) <= near2))
        .map(|(id, _)| id)
        .collect();
    (spheres_in, particles_in)
}

/// Outcome of [`verify_separation`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SeparationCheck {
    /// Why the trajectory does not qualify, if it does not.
    pub precondition: Option<String>,
    pub frames_checked: usize,
    pub separation_violations: usize,
    pub localisation_violations: usize,
    pub nesting_violations: usize,
    pub first_violation: Option<String>,
    /// `(spheres, particles)` in the index sets at each grid time.
    pub set_sizes: Vec<(usize, usize)>,
}

impl SeparationCheck {
    pub fn qualifies(&self) -> bool {
        self.precondition.is_none()
    }

    pub fn violations(&self) -> usize {
        self.separation_violations + self.localisation_violations + self.nesting_violations
    }

    pub fn to_report(&self) -> Report {
        let mut r = Report::new("separation");
        match &self.precondition {
            Some(why) => {
                r.push("precondition", "violated").push("reason", why);
            }
            None => {
                r.push("precondition", "ok")
                    .push("frames_checked", self.frames_checked)
                    .push("separation_violations", self.separation_violations)
                    .push("localisation_violations", self.localisation_violations)
                    .push("nesting_violations", self.nesting_violations);
                let sizes: Vec<String> = self.set_sizes.iter().map(|(a, b)| format!("{a}/{b}")).collect();
                r.push("set_sizes", sizes.join(" "));
                if let Some(v) = &self.first_violation {
                    r.push("first_violation", v);
                }
                r.verdict(self.violations() == 0);
            }
        }
        r
    }

    fn flag(&mut self, what: String) {
        if self.first_violation.is_none() {
            self.first_violation = Some(what);
        }
    }
}

fn grid_frames(record: &TrajectoryRecord, steps: usize) -> Result<Vec<usize>, DiagnosticsError> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut k = 0;
    for a in 0..=steps {
        let t = a as f64 / steps as f64;
        while k < record.times.len() && record.times[k] < t - 1e-9 {
            k += 1;
        }
        if k == record.times.len() || (record.times[k] - t).abs() > 1e-9 {
            return Err(DiagnosticsError::Invalid(format!("trajectory has no sample at time {t}")));
        }
        out.push(k);
    }
    Ok(out)
}

fn precondition(
    record: &TrajectoryRecord,
    schedule: &BadPathSchedule,
    rho: f64,
    grid: &[usize],
) -> Result<Option<String>, DiagnosticsError> {
    let dom = &record.domain;
    if schedule.kappa < 2 {
        return Ok(Some(format!("kappa = {} is below 2", schedule.kappa)));
    }
    let rho0 = schedule.rho_at(rho, 0);
    if rho0 > schedule.alpha {
        return Ok(Some(format!("rho_0 = {rho0} exceeds alpha = {}", schedule.alpha)));
    }
    for &k in grid {
        let spheres = with_exterior(&record.frames[k], dom, BallKind::Sphere);
        if let Some(w) = detect_chain(&spheres, dom.sphere_radius(), schedule.alpha, schedule.kappa, schedule.eps) {
            return Ok(Some(format!("chain {w:?} at t = {}", record.times[k])));
        }
    }
    if let Some(w) = detect_fast(record, schedule.alpha, schedule.delta, schedule.eps / 4.0)? {
        return Ok(Some(format!(
            "{:?} {} moved {} between t = {} and t = {}",
            w.kind, w.id, w.displacement, w.s, w.t
        )));
    }
    Ok(None)
}

/// Checks separation, localisation and nesting of the index sets along a
/// trajectory on `[0, 1]` that is free of chains and fast balls.
///
/// Only the sampled frames are inspected. Trajectories containing a chain at a
/// grid time or a fast ball come back with `precondition` set.
pub fn verify_separation(record: &TrajectoryRecord, schedule: &BadPathSchedule, rho: f64) -> Result<SeparationCheck, DiagnosticsError> {
    let dom: &SimulationDomain = &record.domain;
    if dom.metric().is_periodic() {
        return Err(DiagnosticsError::Invalid("separation is defined for non-periodic domains".into()));
    }
    if (schedule.sphere_radius - dom.sphere_radius()).abs() > 1e-12 {
        return Err(DiagnosticsError::Invalid("schedule and trajectory disagree on the sphere radius".into()));
    }
    if !(rho >= 0.0) {
        return Err(DiagnosticsError::Invalid(format!("rho must be non-negative, got {rho}")));
    }
    let steps = schedule.steps();
    let grid = grid_frames(record, steps)?;
    let mut out = SeparationCheck {
        precondition: precondition(record, schedule, rho, &grid)?,
        ..Default::default()
    };
    if !out.qualifies() {
        return Ok(out);
    }
    let rs = dom.sphere_radius();
    let ro = dom.depletion_radius();
    let eps = schedule.eps;
    let link = schedule.link();
    let m = Metric::Euclidean;
    let sets_at = |a: usize| {
        let f = &record.frames[grid[a]];
        let s = with_exterior(f, dom, BallKind::Sphere);
        let p = with_exterior(f, dom, BallKind::Particle);
        index_sets(&s, &p, schedule.rho_at(rho, a), eps, rs, ro)
    };
    let mut current = sets_at(0);
    for a in 0..steps {
        out.set_sizes.push((current.0.len(), current.1.len()));
        let rho_a = schedule.rho_at(rho, a);
        let sphere_reach = rho_a + schedule.kappa as f64 * link + eps / 4.0;
        let particle_reach = rho_a + schedule.kappa as f64 * link + ro + 1.25 * eps;
        let ss = (2.0 * rs + eps / 2.0).powi(2);
        let sp = (ro + eps / 2.0).powi(2);
        for k in grid[a]..=grid[a + 1] {
            out.frames_checked += 1;
            let t = record.times[k];
            let f = &record.frames[k];
            let s = with_exterior(f, dom, BallKind::Sphere);
            let p = with_exterior(f, dom, BallKind::Particle);
            let inside: Vec<usize> = (0..s.len()).filter(|&i| current.0.contains(&s.id(i))).collect();
            for &i in &inside {
                let xi = s.get(i);
                if norm(xi) > sphere_reach {
                    out.localisation_violations += 1;
                    out.flag(format!("sphere {} at distance {} > {sphere_reach} at t = {t}", s.id(i), norm(xi)));
                }
                for j in 0..s.len() {
                    if !current.0.contains(&s.id(j)) && m.dist2(xi, s.get(j)) <= ss {
                        out.separation_violations += 1;
                        out.flag(format!("spheres {} and {} too close at t = {t}", s.id(i), s.id(j)));
                    }
                }
                for (kid, y) in p.iter() {
                    if !current.1.contains(&kid) && m.dist2(xi, y) <= sp {
                        out.separation_violations += 1;
                        out.flag(format!("sphere {} and particle {kid} too close at t = {t}", s.id(i)));
                    }
                }
            }
            for (kid, y) in p.iter() {
                if current.1.contains(&kid) && norm(y) > particle_reach {
                    out.localisation_violations += 1;
                    out.flag(format!("particle {kid} at distance {} > {particle_reach} at t = {t}", norm(y)));
                }
            }
        }
        let next = sets_at(a + 1);
        let lost_s = next.0.difference(&current.0).count();
        let lost_p = next.1.difference(&current.1).count();
        if lost_s + lost_p > 0 {
            out.nesting_violations += lost_s + lost_p;
            out.flag(format!("index sets grew from step {a} to {}", a + 1));
        }
        current = next;
    }
    out.set_sizes.push((current.0.len(), current.1.len()));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{IntegratorSettings, Scheme};
    use crate::geometry::{Container, TwoTypeConfiguration};

    fn static_record(spheres: &[[f64; 2]], particles: &[[f64; 2]], dt: f64, radius: f64) -> TrajectoryRecord {
        let ext = TwoTypeConfiguration::empty(2);
        let dom = SimulationDomain::new(2, 0.5, 0.075, 1.0, Container::Ball { radius, exterior: ext }).unwrap();
        let frame = TwoTypeConfiguration::new(
            PointSet::from_points(2, spheres).unwrap(),
            PointSet::from_points(2, particles).unwrap(),
        )
        .unwrap();
        let t = (1.0 / dt).round() as usize + 1;
        TrajectoryRecord {
            times: (0..t).map(|k| k as f64 * dt).collect(),
            frames: vec![frame; t],
            ledgers: vec![Default::default(); t],
            settings: IntegratorSettings::defaults(&dom, Scheme::TwoTypePenalised, 0),
            domain: dom,
            max_sweeps_used: 0,
        }
    }

    #[test]
    fn index_sets_follow_chains() {
        let s = PointSet::from_points(2, &[[0.0, 0.0], [1.05, 0.0], [2.1, 0.0], [5.0, 0.0]]).unwrap();
        let p = PointSet::from_points(2, &[[2.1, 0.6], [5.0, 0.6], [0.2, 0.0]]).unwrap();
        let (js, jp) = index_sets(&s, &p, 0.5, 0.1, 0.5, 0.575);
        assert_eq!(js.into_iter().collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(jp.into_iter().collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn single_ball_is_trivially_separated() {
        let rec = static_record(&[[0.5, 0.0]], &[], 1.0 / 60.0, 27.0);
        let s = BadPathSchedule::new(27.0, 0.1, 0.5).unwrap();
        let c = verify_separation(&rec, &s, 1.0).unwrap();
        assert!(c.qualifies());
        assert_eq!(c.violations(), 0);
        assert_eq!(c.set_sizes, vec![(1, 0); 4]);
        assert!(c.to_report().passed());
    }

    #[test]
    fn static_clusters_give_constant_nested_sets() {
        let spheres = [[0.0, 0.0], [1.05, 0.0], [10.0, 0.0], [11.05, 0.0]];
        let particles = [[0.0, 0.6], [10.0, 0.6]];
        let rec = static_record(&spheres, &particles, 1.0 / 60.0, 27.0);
        let s = BadPathSchedule::new(27.0, 0.1, 0.5).unwrap();
        let c = verify_separation(&rec, &s, 0.5).unwrap();
        assert!(c.qualifies(), "{:?}", c.precondition);
        assert_eq!(c.violations(), 0);
        // rho_a shrinks from 20.3 to 0.5, so the far cluster drops out
        assert_eq!(c.set_sizes.first(), Some(&(4, 2)));
        assert_eq!(c.set_sizes.last(), Some(&(2, 1)));
        assert!(c.set_sizes.windows(2).all(|w| w[1].0 <= w[0].0 && w[1].1 <= w[0].1));
    }

    #[test]
    fn chains_fail_the_precondition() {
        let spheres: Vec<[f64; 2]> = (0..4).map(|i| [i as f64 * 1.05, 0.0]).collect();
        let rec = static_record(&spheres, &[], 1.0 / 60.0, 27.0);
        let s = BadPathSchedule::new(27.0, 0.1, 0.5).unwrap();
        let c = verify_separation(&rec, &s, 0.5).unwrap();
        assert!(!c.qualifies());
        assert_eq!(c.to_report().get("precondition"), Some("violated"));
        // rho_0 too large for alpha
        let rec = static_record(&[[0.0, 0.0]], &[], 1.0 / 60.0, 27.0);
        assert!(!verify_separation(&rec, &s, 10.0).unwrap().qualifies());
    }

    #[test]
    fn missing_grid_times_are_an_error() {
        let rec = static_record(&[[0.0, 0.0]], &[], 1.0 / 60.0, 27.0);
        let mut short = rec.clone();
        short.times.truncate(10);
        short.frames.truncate(10);
        let s = BadPathSchedule::new(27.0, 0.1, 0.5).unwrap();
        assert!(verify_separation(&short, &s, 0.5).is_err());
    }
}
