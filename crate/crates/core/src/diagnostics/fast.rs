use super::{norm, DiagnosticsError};
use crate::dynamics::TrajectoryRecord;
use crate::geometry::{BallKind, Metric};

/// A ball that moved more than `eps` within less than `delta`.
#[derive(Clone, Debug, PartialEq)]
pub struct FastWitness {
    pub kind: BallKind,
    pub id: u64,
    pub s: f64,
    pub t: f64,
    pub displacement: f64,
}

/// First sample pair `(i, j)` with `t_j - t_i < delta` and displacement above
/// `eps`, scanning forward windows.
pub fn oscillation_witness(times: &[f64], path: &[Vec<f64>], delta: f64, eps: f64, metric: &Metric) -> Option<(usize, usize)> {
    let e2 = eps * eps;
    for i in 0..path.len() {
        for j in i + 1..path.len() {
            if times[j] - times[i] >= delta {
                break;
            }
            if metric.dist2(&path[i], &path[j]) > e2 {
                return Some((i, j));
            }
        }
    }
    None
}

/// Quadratic scan over all sample pairs; reference for [`oscillation_witness`].
pub fn oscillation_witness_brute_force(
    times: &[f64],
    path: &[Vec<f64>],
    delta: f64,
    eps: f64,
    metric: &Metric,
) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for i in 0..path.len() {
        for j in 0..path.len() {
            if (times[j] - times[i]).abs() < delta && metric.dist2(&path[i], &path[j]).sqrt() > eps {
                let pair = (i.min(j), i.max(j));
                if best.is_none_or(|b| pair < b) {
                    best = Some(pair);
                }
            }
        }
    }
    best
}

/// Flags a ball whose sampled path comes within `alpha` of the origin and
/// moves more than `eps` within a time shorter than `delta`.
///
/// Only the sample grid is inspected, so oscillations between samples are
/// missed; the record must be sampled at least every `delta / 4`.
pub fn detect_fast(record: &TrajectoryRecord, alpha: f64, delta: f64, eps: f64) -> Result<Option<FastWitness>, DiagnosticsError> {
    if !(delta > 0.0 && eps > 0.0) {
        return Err(DiagnosticsError::Invalid("delta and eps must be positive".into()));
    }
    let gap = record.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if gap > delta / 4.0 * (1.0 + 1e-9) {
        return Err(DiagnosticsError::Invalid(format!(
            "trajectory sampled every {gap}, coarser than delta / 4 = {}",
            delta / 4.0
        )));
    }
    let Some(first) = record.frames.first() else {
        return Ok(None);
    };
    let metric = record.domain.metric();
    for kind in [BallKind::Sphere, BallKind::Particle] {
        for &id in first.set(kind).ids() {
            let Some(path) = record.path(kind, id) else {
                continue;
            };
            if !path.iter().any(|x| norm(x) <= alpha) {
                continue;
            }
            if let Some((i, j)) = oscillation_witness(&record.times, &path, delta, eps, &metric) {
                return Ok(Some(FastWitness {
                    kind,
                    id,
                    s: record.times[i],
                    t: record.times[j],
                    displacement: metric.dist2(&path[i], &path[j]).sqrt(),
                }));
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{IntegratorSettings, Scheme};
    use crate::geometry::{Container, PointSet, SimulationDomain, TwoTypeConfiguration};
    use proptest::prelude::*;

    fn record(paths: &[Vec<[f64; 2]>], dt: f64) -> TrajectoryRecord {
        let dom = SimulationDomain::new(2, 0.5, 0.075, 1.0, Container::Open).unwrap();
        let t = paths[0].len();
        let frames = (0..t)
            .map(|k| {
                let pts: Vec<[f64; 2]> = paths.iter().map(|p| p[k]).collect();
                TwoTypeConfiguration::new(PointSet::from_points(2, &pts).unwrap(), PointSet::new(2)).unwrap()
            })
            .collect();
        TrajectoryRecord {
            times: (0..t).map(|k| k as f64 * dt).collect(),
            frames,
            ledgers: vec![Default::default(); t],
            settings: IntegratorSettings::defaults(&dom, Scheme::TwoTypePenalised, 0),
            domain: dom,
            max_sweeps_used: 0,
        }
    }

    #[test]
    fn constant_and_jumping_paths() {
        let still = vec![[0.3, 0.0]; 9];
        let rec = record(&[still.clone()], 0.025);
        assert_eq!(detect_fast(&rec, 1.0, 0.1, 0.2).unwrap(), None);
        let mut jump = still;
        jump[5] = [0.3 + 0.21, 0.0];
        let rec = record(&[vec![[9.0, 9.0]; 9], jump], 0.025);
        let w = detect_fast(&rec, 1.0, 0.1, 0.2).unwrap().unwrap();
        assert_eq!((w.id, w.kind), (1, BallKind::Sphere));
        assert!(w.t - w.s < 0.1 && (w.t - 0.125).abs() < 1e-12);
        // outside the region nothing is reported
        assert_eq!(detect_fast(&rec, 0.2, 0.1, 0.2).unwrap(), None);
    }

    #[test]
    fn coarse_sampling_is_rejected() {
        let rec = record(&[vec![[0.0, 0.0]; 4]], 0.05);
        assert!(detect_fast(&rec, 1.0, 0.1, 0.2).is_err());
    }

    proptest! {
        #[test]
        fn window_scan_matches_quadratic_scan(
            steps in prop::collection::vec((-0.3f64..0.3, -0.3f64..0.3), 1..40),
            delta in 0.05f64..0.5,
            eps in 0.05f64..0.8,
        ) {
            let mut x = [0.0, 0.0];
            let mut path = vec![x.to_vec()];
            for (a, b) in steps {
                x[0] += a;
                x[1] += b;
                path.push(x.to_vec());
            }
            let times: Vec<f64> = (0..path.len()).map(|k| k as f64 * 0.02).collect();
            let m = Metric::Euclidean;
            let fast = oscillation_witness(&times, &path, delta, eps, &m);
            let slow = oscillation_witness_brute_force(&times, &path, delta, eps, &m);
            prop_assert_eq!(fast.is_some(), slow.is_some());
        }
    }
}
