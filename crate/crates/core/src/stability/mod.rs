//! Both sides of the stability inequalities for pairs of phantoms: the
//! operator distance, per-entry attenuation and kernel differences, Sobolev
//! norms of extinction differences and the multiple-scattering bound.

mod checks;
mod distance;
mod report;
pub mod sobolev;

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{Domain, PhasePoint, Sign};
use crate::quadrature::halton;

pub use checks::{
    attenuation_floor_rows, check_attenuation_rows, check_class_rows, check_ladder_scaling,
    check_multiple_scatter_pairing, check_scattering_rows, embedding_constant, kappa_k,
    kappa_sigma, BoundCheckConfig, ClassCheckConfig, LadderRung, TailConfig,
};
pub use distance::{
    albedo_distance, entry_terms, DistanceConfig, EntryTerms, KernelQuadrature, OperatorDistance,
    Probe,
};
pub use report::{
    diff_reports, PairInfo, ReportRow, RowDiff, StabilityReport, REPORT_SCHEMA_VERSION,
};
pub use sobolev::{interpolation_check, sobolev_norm, FieldGrid, InterpolationCheck, SobolevNorm};

/// Largest angle from the inward normal used for entry nodes, as a fraction of `π/2`.
pub const ENTRY_ANGLE_FRACTION: f64 = 0.95;

/// An incoming boundary point `(x′₀, v′₀) ∈ Γ₋`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub theta: f64,
    /// Angle from the inward normal.
    pub psi: f64,
    pub point: PhasePoint,
    /// `τ₊(x′₀, v′₀)`.
    pub chord: f64,
}

impl Entry {
    pub fn new(domain: &Domain, theta: f64, psi: f64) -> Result<Self> {
        if domain.dimension() != 2 {
            return Err(Error::Unsupported(
                "entry sets are built on planar domains".into(),
            ));
        }
        if psi.abs() >= 0.5 * PI {
            return Err(Error::OutOfRange(format!(
                "entry angle {psi} is not incoming"
            )));
        }
        let point = PhasePoint {
            x: domain.boundary_point(theta),
            v: domain.boundary_direction(theta, psi, Sign::Minus),
        };
        Ok(Self {
            theta,
            psi,
            point,
            chord: domain.travel(&point.x, &point.v, Sign::Plus),
        })
    }
}

/// Halton entries: boundary parameter in base 2, normal angle in base 3
/// within `±0.95·π/2`. `seed` shifts the sequence.
pub fn entry_set(domain: &Domain, n: usize, seed: u64) -> Result<Vec<Entry>> {
    let offset = 1 + (seed % 1_000_003) as usize;
    (0..n)
        .map(|i| {
            let theta = 2.0 * PI * halton(i + offset, 2);
            let psi = ENTRY_ANGLE_FRACTION * 0.5 * PI * (2.0 * halton(i + offset, 3) - 1.0);
            Entry::new(domain, theta, psi)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_are_incoming_and_reproducible() {
        let domain = Domain::UnitDisk;
        let a = entry_set(&domain, 50, 7).unwrap();
        assert_eq!(a, entry_set(&domain, 50, 7).unwrap());
        assert_ne!(a, entry_set(&domain, 50, 8).unwrap());
        for e in &a {
            assert!(domain.outward_normal(&e.point.x).dot(&e.point.v) < 0.0);
            assert!((e.chord - 2.0 * e.psi.cos()).abs() < 1e-12);
        }
    }
}
