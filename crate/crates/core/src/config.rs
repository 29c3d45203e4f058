//! Stabilizer configuration: weights, bounds, crop budget, saliency and windowing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lie::Point2;
use crate::qp::SolverSettings;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("weight `{name}` must be finite and nonnegative, got {value}")]
    NegativeWeight { name: &'static str, value: f64 },
    #[error("fidelity weight must be positive, got {0}")]
    NonPositiveFidelity(f64),
    #[error("per-frame fidelity weights cover {got} frames, path has {expected}")]
    FidelityLength { got: usize, expected: usize },
    #[error("bounds for element {index} do not contain zero: [{lower}, {upper}]")]
    BoundsExcludeZero {
        index: usize,
        lower: f64,
        upper: f64,
    },
    #[error("crop fraction {0} outside (0, 0.5]")]
    CropFraction(f64),
    #[error("window margin {margin} outside [0, {crop_fraction})")]
    WindowMargin { margin: f64, crop_fraction: f64 },
    #[error("window stride {stride} must satisfy 4 <= stride < length {length}")]
    Window { length: usize, stride: usize },
    #[error("saliency point {point:?} in frame {frame} lies outside the frame")]
    SaliencyOutsideFrame { frame: usize, point: Point2 },
    #[error("saliency track covers {got} frames, path has {expected}")]
    SaliencyLength { got: usize, expected: usize },
    #[error("solver tolerance `{0}` must be positive")]
    SolverTolerance(&'static str),
}

/// Per-element box on each correction `p_t`; `None` leaves that side open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementBounds {
    pub lower: [Option<f64>; 9],
    pub upper: [Option<f64>; 9],
}

impl ElementBounds {
    pub fn symmetric(half_widths: [Option<f64>; 9]) -> Self {
        ElementBounds {
            lower: half_widths.map(|w| w.map(|w| -w)),
            upper: half_widths,
        }
    }

    pub fn unbounded() -> Self {
        ElementBounds {
            lower: [None; 9],
            upper: [None; 9],
        }
    }
}

impl Default for ElementBounds {
    fn default() -> Self {
        let a = Some(0.15);
        let t = Some(0.5);
        let k = Some(0.2);
        ElementBounds::symmetric([a, a, t, a, a, t, k, k, None])
    }
}

/// Salient points per frame in normalized coordinates; an empty list leaves the frame free.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SaliencyTrack {
    pub frames: Vec<Vec<Point2>>,
}

impl SaliencyTrack {
    pub fn slice(&self, start: usize, end: usize) -> SaliencyTrack {
        SaliencyTrack {
            frames: self.frames[start..end].to_vec(),
        }
    }

    /// Mean of the points in frame `t`, if any.
    pub fn centroid(&self, t: usize) -> Option<Point2> {
        let pts = self.frames.get(t)?;
        if pts.is_empty() {
            return None;
        }
        let n = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(x, y), p| (x + p.x, y + p.y));
        Some(Point2::new(sx / n, sy / n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SaliencyMode {
    HardInclude,
    SoftInclude { penalty: f64 },
    Center { weight: f64 },
}

impl Default for SaliencyMode {
    fn default() -> Self {
        SaliencyMode::SoftInclude { penalty: 50.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyConfig {
    pub track: SaliencyTrack,
    pub mode: SaliencyMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowParams {
    pub length: usize,
    pub stride: usize,
}

impl Default for WindowParams {
    fn default() -> Self {
        WindowParams {
            length: 1800,
            stride: 1500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilizerConfig {
    /// Fidelity weight applied to every frame without an override.
    pub w0: f64,
    pub w0_per_frame: Option<Vec<f64>>,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub crop_fraction: f64,
    /// Extra crop-window size beyond `1 - crop_fraction`, spent by shrinking corrections.
    pub window_margin: f64,
    pub element_bounds: ElementBounds,
    pub w_diag: f64,
    pub w_offdiag: f64,
    pub keystone_ratio_weight: f64,
    /// Fixed `(R_x, R_y)`; estimated from the input when absent.
    pub keystone_ratio: Option<(f64, f64)>,
    pub saliency: Option<SaliencyConfig>,
    /// `None` solves the whole path as one problem.
    pub window: Option<WindowParams>,
    pub solver: SolverSettings,
}

impl Default for StabilizerConfig {
    fn default() -> Self {
        StabilizerConfig {
            w0: 1.0,
            w0_per_frame: None,
            w1: 10.0,
            w2: 1.0,
            w3: 100.0,
            crop_fraction: 0.2,
            window_margin: 0.05,
            element_bounds: ElementBounds::default(),
            w_diag: 10.0,
            w_offdiag: 10.0,
            keystone_ratio_weight: 10.0,
            keystone_ratio: None,
            saliency: None,
            window: Some(WindowParams::default()),
            solver: SolverSettings::default(),
        }
    }
}

fn check_weight(name: &'static str, value: f64) -> Result<(), ConfigError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::NegativeWeight { name, value })
    }
}

impl StabilizerConfig {
    /// Checks everything that does not depend on the input path.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.w0 > 0.0 && self.w0.is_finite()) {
            return Err(ConfigError::NonPositiveFidelity(self.w0));
        }
        if let Some(per_frame) = &self.w0_per_frame {
            if let Some(&w) = per_frame.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
                return Err(ConfigError::NonPositiveFidelity(w));
            }
        }
        for (name, w) in [
            ("w1", self.w1),
            ("w2", self.w2),
            ("w3", self.w3),
            ("w_diag", self.w_diag),
            ("w_offdiag", self.w_offdiag),
            ("keystone_ratio_weight", self.keystone_ratio_weight),
        ] {
            check_weight(name, w)?;
        }
        match self.saliency.as_ref().map(|s| s.mode) {
            Some(SaliencyMode::SoftInclude { penalty }) => check_weight("penalty", penalty)?,
            Some(SaliencyMode::Center { weight }) => check_weight("center", weight)?,
            _ => {}
        }
        for i in 0..9 {
            let lower = self.element_bounds.lower[i].unwrap_or(f64::NEG_INFINITY);
            let upper = self.element_bounds.upper[i].unwrap_or(f64::INFINITY);
            if !(lower <= 0.0 && upper >= 0.0) {
                return Err(ConfigError::BoundsExcludeZero {
                    index: i,
                    lower,
                    upper,
                });
            }
        }
        if !(self.crop_fraction > 0.0 && self.crop_fraction <= 0.5) {
            return Err(ConfigError::CropFraction(self.crop_fraction));
        }
        if !(self.window_margin >= 0.0 && self.window_margin < self.crop_fraction) {
            return Err(ConfigError::WindowMargin {
                margin: self.window_margin,
                crop_fraction: self.crop_fraction,
            });
        }
        if let Some(w) = self.window {
            if w.stride < 4 || w.stride >= w.length {
                return Err(ConfigError::Window {
                    length: w.length,
                    stride: w.stride,
                });
            }
        }
        let s = &self.solver;
        for (name, v) in [
            ("eps_primal", s.eps_primal),
            ("eps_dual", s.eps_dual),
            ("eps_complementarity", s.eps_complementarity),
            ("eps_infeasible", s.eps_infeasible),
        ] {
            if !(v > 0.0) {
                return Err(ConfigError::SolverTolerance(name));
            }
        }
        Ok(())
    }

    /// Checks the parts that depend on the path length and frame aspect.
    pub fn validate_for(&self, n: usize, aspect: f64) -> Result<(), ConfigError> {
        self.validate()?;
        if let Some(per_frame) = &self.w0_per_frame {
            if per_frame.len() != n {
                return Err(ConfigError::FidelityLength {
                    got: per_frame.len(),
                    expected: n,
                });
            }
        }
        if let Some(sal) = &self.saliency {
            if sal.track.frames.len() != n {
                return Err(ConfigError::SaliencyLength {
                    got: sal.track.frames.len(),
                    expected: n,
                });
            }
            for (frame, pts) in sal.track.frames.iter().enumerate() {
                if let Some(&point) = pts
                    .iter()
                    .find(|p| !(p.x.abs() <= 1.0 && p.y.abs() <= aspect))
                {
                    return Err(ConfigError::SaliencyOutsideFrame { frame, point });
                }
            }
        }
        Ok(())
    }

    /// Fidelity weights for frames `[start, end)`.
    pub fn fidelity_weights(&self, start: usize, end: usize) -> Vec<f64> {
        match &self.w0_per_frame {
            Some(w) => w[start..end].to_vec(),
            None => vec![self.w0; end - start],
        }
    }
}
