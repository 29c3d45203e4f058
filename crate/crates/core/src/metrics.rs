//! Quality metrics of a correction plan.

use serde::{Deserialize, Serialize};

use crate::build::CorrectionPlan;
use crate::lie::{displacement_jacobian, LieError, LogHomography};
use crate::path::{AnalysisPath, FrameGeometry, PathError};

pub const DEFAULT_TAU: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub tau: f64,
    /// Fraction of entries of `e1`, `e2`, `e3` with magnitude above `tau`.
    pub sparsity: [f64; 3],
    /// Root mean square over all correction log entries.
    pub rms_correction: f64,
    /// `min_t sqrt(area(P_t window) / frame area)`.
    pub fov_ratio: f64,
    /// Largest gap between exact and first-order transformed corners.
    pub max_linearization_residual: f64,
    /// Largest distance of an exactly transformed corner beyond the frame; negative when inside.
    pub max_frame_overshoot: f64,
}

/// Fraction of entries with `|x| > tau`; 0 for an empty trace.
pub fn sparsity_fraction(e: &[[f64; 9]], tau: f64) -> f64 {
    if e.is_empty() {
        return 0.0;
    }
    let above = e.iter().flatten().filter(|x| x.abs() > tau).count();
    above as f64 / (9 * e.len()) as f64
}

pub fn quality(
    plan: &CorrectionPlan,
    path: &AnalysisPath,
    geometry: &FrameGeometry,
    tau: f64,
) -> Result<QualityReport, LieError> {
    debug_assert_eq!(plan.corrections.len(), path.len());
    let d = &plan.diagnostics;
    let sparsity = [
        sparsity_fraction(&d.e1, tau),
        sparsity_fraction(&d.e2, tau),
        sparsity_fraction(&d.e3, tau),
    ];
    let n = plan.log_corrections.len().max(1);
    let sum_sq: f64 = plan
        .log_corrections
        .iter()
        .map(|p| p.vector().norm_squared())
        .sum();
    let rms_correction = (sum_sq / (9 * n) as f64).sqrt();

    let (hx, hy) = geometry.frame_half_extent();
    let mut fov_ratio = f64::INFINITY;
    let mut max_lin: f64 = 0.0;
    let mut overshoot = f64::NEG_INFINITY;
    for (h, p) in plan.corrections.iter().zip(&plan.log_corrections) {
        let moved = plan.crop_window.transformed(h)?;
        fov_ratio = fov_ratio.min((moved.area()? / geometry.frame_area()).sqrt());
        for (c, m) in plan.crop_window.corners.iter().zip(&moved.corners) {
            let lin = displacement_jacobian(*c) * p.vector();
            max_lin = max_lin
                .max((m.x - c.x - lin[0]).abs())
                .max((m.y - c.y - lin[1]).abs());
            overshoot = overshoot.max(m.x.abs() - hx).max(m.y.abs() - hy);
        }
    }
    if plan.corrections.is_empty() {
        fov_ratio = 0.0;
        overshoot = 0.0;
    }
    Ok(QualityReport {
        tau,
        sparsity,
        rms_correction,
        fov_ratio,
        max_linearization_residual: max_lin,
        max_frame_overshoot: overshoot,
    })
}

/// `(max |a - b|, rms(a - b))` over all elements.
pub fn compare_paths(a: &[LogHomography], b: &[LogHomography]) -> Result<(f64, f64), PathError> {
    if a.len() != b.len() {
        return Err(PathError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut max_abs: f64 = 0.0;
    let mut sum_sq = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x.vector() - y.vector();
        max_abs = max_abs.max(d.amax());
        sum_sq += d.norm_squared();
    }
    Ok((max_abs, (sum_sq / (9 * a.len()) as f64).sqrt()))
}
