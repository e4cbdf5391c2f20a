//! Bad-path detectors, the separation check along trajectories,
//! percolation clusters and Monte Carlo checks of the probability bounds.

mod bounds;
mod chain;
mod fast;
mod packing;
mod percolation;
mod separation;

pub use bounds::{
    brownian_oscillation_bound, chain_bound, chain_factor, fast_event_scaling, path_oscillation_exceeds,
    verify_chain_bound,
    verify_fast_bound, ChainBoundSetup, FastBoundSetup, FastScalingSetup,
};
pub use chain::{detect_chain, detect_chain_brute_force};
pub use fast::{detect_fast, oscillation_witness, oscillation_witness_brute_force, FastWitness};
pub use packing::{closest_packing_density, hexagonal_start, packing_experiment, PackingPoint, PackingSetup};
pub use percolation::{percolation_clusters, percolation_experiment, Clusters, PercolationSetup};
pub use separation::{index_sets, verify_separation, SeparationCheck};

use thiserror::Error;

use crate::dynamics::DynamicsError;
use crate::geometry::{BallKind, GeometryError, PointSet, SimulationDomain, TwoTypeConfiguration};
use crate::gibbs::GibbsError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Gibbs(#[from] GibbsError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid diagnostics input: {0}")]
    Invalid(String),
}

/// Time step, region size and chain length tied to a container radius.
#[derive(Clone, Debug, PartialEq)]
pub struct BadPathSchedule {
    pub radius: f64,
    /// `1 / kappa`.
    pub delta: f64,
    /// `radius - 2 r_s`.
    pub alpha: f64,
    /// `floor(radius^(1/3))`.
    pub kappa: usize,
    pub eps: f64,
    pub sphere_radius: f64,
}

impl BadPathSchedule {
    pub fn new(radius: f64, eps: f64, sphere_radius: f64) -> Result<Self, DiagnosticsError> {
        if !(radius.is_finite() && radius >= 1.0) {
            return Err(DiagnosticsError::Invalid(format!("radius must be at least 1, got {radius}")));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(DiagnosticsError::Invalid(format!("eps must be positive, got {eps}")));
        }
        if !(sphere_radius > 0.0 && sphere_radius.is_finite()) {
            return Err(DiagnosticsError::Invalid("sphere radius must be positive".into()));
        }
        // guard against cbrt rounding just below an integer
        let mut kappa = radius.cbrt().floor() as usize;
        if ((kappa + 1) as f64).powi(3) <= radius {
            kappa += 1;
        }
        Ok(BadPathSchedule {
            radius,
            delta: 1.0 / kappa as f64,
            alpha: radius - 2.0 * sphere_radius,
            kappa,
            eps,
            sphere_radius,
        })
    }

    /// Number of time steps `1 / delta`.
    pub fn steps(&self) -> usize {
        self.kappa
    }

    /// Chain link length `2 r_s + eps`.
    pub fn link(&self) -> f64 {
        2.0 * self.sphere_radius + self.eps
    }

    /// `rho_a = rho + 2 (1/delta - a) kappa (2 r_s + eps)`.
    pub fn rho_at(&self, rho: f64, a: usize) -> f64 {
        rho + 2.0 * (self.steps() as f64 - a as f64) * self.kappa as f64 * self.link()
    }
}

/// Offset added to exterior ids when they are merged with interior balls.
pub const EXTERIOR_ID_OFFSET: u64 = 1 << 62;

/// Interior balls of `kind` together with the frozen exterior balls of a
/// ball container, the latter relabelled by [`EXTERIOR_ID_OFFSET`].
pub fn with_exterior(frame: &TwoTypeConfiguration, dom: &SimulationDomain, kind: BallKind) -> PointSet {
    let mut out = frame.set(kind).clone();
    if let Some(ext) = dom.exterior() {
        for (id, y) in ext.set(kind).iter() {
            out.push(EXTERIOR_ID_OFFSET + id, y);
        }
    }
    out
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_values() {
        let s = BadPathSchedule::new(8.0, 0.1, 0.5).unwrap();
        assert_eq!(s.kappa, 2);
        assert_eq!(s.delta, 0.5);
        assert_eq!(s.alpha, 7.0);
        assert_eq!(s.delta * s.kappa as f64, 1.0);
        assert_eq!(BadPathSchedule::new(27.0, 0.1, 0.5).unwrap().kappa, 3);
        assert_eq!(BadPathSchedule::new(26.9, 0.1, 0.5).unwrap().kappa, 2);
        assert!((s.rho_at(1.0, 0) - (1.0 + 2.0 * 2.0 * 2.0 * 1.1)).abs() < 1e-12);
        assert_eq!(s.rho_at(1.0, 2), 1.0);
        assert!(BadPathSchedule::new(0.5, 0.1, 0.5).is_err());
        assert!(BadPathSchedule::new(8.0, 0.0, 0.5).is_err());
    }
}
