//! Analysis paths, stabilized paths, finite-difference operators and crop geometry.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lie::{CornerSet, LogHomography, Vector9};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("crop fraction {0} outside (0, 0.5]")]
    InvalidFraction(f64),
    #[error("window margin {margin} outside [0, {crop_fraction})")]
    InvalidMargin { margin: f64, crop_fraction: f64 },
    #[error("frame aspect {0} must be positive and finite")]
    InvalidAspect(f64),
    #[error("path has no frames")]
    Empty,
}

/// Input log-homographies `f_t = log F_t`, where `F_t` maps frame `t` to frame `t-1`.
///
/// `f_0` never enters a derivative term; it only offsets the cumulative path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisPath {
    pub increments: Vec<LogHomography>,
    /// Frame height over width.
    pub aspect: f64,
}

impl AnalysisPath {
    pub fn new(increments: Vec<LogHomography>, aspect: f64) -> Result<Self, PathError> {
        if increments.is_empty() {
            return Err(PathError::Empty);
        }
        if !(aspect > 0.0 && aspect.is_finite()) {
            return Err(PathError::InvalidAspect(aspect));
        }
        Ok(AnalysisPath { increments, aspect })
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// Frames `[start, end)` as a standalone path.
    pub fn slice(&self, start: usize, end: usize) -> AnalysisPath {
        AnalysisPath {
            increments: self.increments[start..end].to_vec(),
            aspect: self.aspect,
        }
    }
}

/// Corrections `p_t` together with the derivative traces of the stabilized path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizedPath {
    pub corrections: Vec<LogHomography>,
    pub e1: Vec<Vector9>,
    pub e2: Vec<Vector9>,
    pub e3: Vec<Vector9>,
}

impl StabilizedPath {
    pub fn new(corrections: Vec<LogHomography>, f: &[LogHomography]) -> Result<Self, PathError> {
        let (e1, e2, e3) = derivatives(&corrections, f)?;
        Ok(StabilizedPath {
            corrections,
            e1,
            e2,
            e3,
        })
    }
}

/// Running sum `f̃_t = f_0 + … + f_t` in the log domain.
pub fn cumulative_path(path: &AnalysisPath) -> Vec<LogHomography> {
    cumulative(&path.increments)
}

pub fn cumulative(f: &[LogHomography]) -> Vec<LogHomography> {
    let mut acc = Vector9::zeros();
    f.iter()
        .map(|ft| {
            acc += ft.vector();
            LogHomography::projected(acc)
        })
        .collect()
}

/// `(e1, e2, e3)` traces, one vector per difference.
pub type DerivativeTraces = (Vec<Vector9>, Vec<Vector9>, Vec<Vector9>);

/// Forward differences of the stabilized log-path `s̃_t = f̃_t + p_t`:
///
/// ```text
/// e1(t) = p[t+1] + f[t+1] - p[t]
/// e2(t) = p[t+2] + f[t+2] - 2p[t+1] - f[t+1] + p[t]
/// e3(t) = p[t+3] + f[t+3] - 3p[t+2] - 2f[t+2] + 3p[t+1] + f[t+1] - p[t]
/// ```
///
/// Outputs have lengths `n-1`, `n-2`, `n-3` (empty when `n` is too short).
pub fn derivatives(
    p: &[LogHomography],
    f: &[LogHomography],
) -> Result<DerivativeTraces, PathError> {
    if p.len() != f.len() {
        return Err(PathError::LengthMismatch {
            left: p.len(),
            right: f.len(),
        });
    }
    let n = p.len();
    let pv = |t: usize| p[t].vector();
    let fv = |t: usize| f[t].vector();

    let e1 = (0..n.saturating_sub(1))
        .map(|t| pv(t + 1) + fv(t + 1) - pv(t))
        .collect();
    let e2 = (0..n.saturating_sub(2))
        .map(|t| pv(t + 2) + fv(t + 2) - 2.0 * pv(t + 1) - fv(t + 1) + pv(t))
        .collect();
    let e3 = (0..n.saturating_sub(3))
        .map(|t| {
            pv(t + 3) + fv(t + 3) - 3.0 * pv(t + 2) - 2.0 * fv(t + 2) + 3.0 * pv(t + 1) + fv(t + 1)
                - pv(t)
        })
        .collect();
    Ok((e1, e2, e3))
}

/// Frame rectangle plus the fixed centered crop window the corrections act on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameGeometry {
    pub crop_fraction: f64,
    pub aspect: f64,
    pub crop_window: CornerSet,
    pub frame_corners: CornerSet,
}

impl FrameGeometry {
    pub fn frame_half_extent(&self) -> (f64, f64) {
        (1.0, self.aspect)
    }

    pub fn frame_area(&self) -> f64 {
        4.0 * self.aspect
    }

    /// Frame edge lengths in corner-edge order (top, right, bottom, left).
    pub fn frame_sidelengths(&self) -> [f64; 4] {
        [2.0, 2.0 * self.aspect, 2.0, 2.0 * self.aspect]
    }

    /// Lower bound on the area of the transformed crop window.
    pub fn min_area(&self) -> f64 {
        (1.0 - self.crop_fraction).powi(2) * self.frame_area()
    }

    /// Lower bounds on the transformed crop-window edges.
    pub fn min_sidelengths(&self) -> [f64; 4] {
        self.frame_sidelengths()
            .map(|s| (1.0 - self.crop_fraction) * s)
    }

    /// Axis-aligned crop rectangle as `(x_min, x_max, y_min, y_max)`.
    pub fn crop_rect(&self) -> (f64, f64, f64, f64) {
        let (lo, hi) = self.crop_window.bounds();
        (lo.x, hi.x, lo.y, hi.y)
    }
}

/// Centered crop window with sides `(1 - crop_fraction + margin)` times the frame sides.
///
/// The margin leaves room for corrections that shrink the window before the
/// field-of-view bound becomes active.
pub fn crop_window_from_fraction(
    crop_fraction: f64,
    aspect: f64,
    margin: f64,
) -> Result<FrameGeometry, PathError> {
    if !(crop_fraction > 0.0 && crop_fraction <= 0.5) {
        return Err(PathError::InvalidFraction(crop_fraction));
    }
    if !(margin >= 0.0 && margin < crop_fraction) {
        return Err(PathError::InvalidMargin {
            margin,
            crop_fraction,
        });
    }
    if !(aspect > 0.0 && aspect.is_finite()) {
        return Err(PathError::InvalidAspect(aspect));
    }
    let factor = 1.0 - crop_fraction + margin;
    Ok(FrameGeometry {
        crop_fraction,
        aspect,
        crop_window: CornerSet::centered_rect(factor, factor * aspect),
        frame_corners: CornerSet::centered_rect(1.0, aspect),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::LogHomography;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_seq(rng: &mut ChaCha8Rng, n: usize) -> Vec<LogHomography> {
        (0..n)
            .map(|_| {
                let v = Vector9::from_fn(|_, _| rng.gen_range(-0.1..0.1));
                LogHomography::projected(v)
            })
            .collect()
    }

    fn constant(c: LogHomography, n: usize) -> Vec<LogHomography> {
        vec![c; n]
    }

    #[test]
    fn cumulative_examples() {
        let zero = AnalysisPath::new(constant(LogHomography::zero(), 5), 0.5).unwrap();
        assert!(cumulative_path(&zero)
            .iter()
            .all(|h| *h == LogHomography::zero()));

        let c = LogHomography::translation(0.01, -0.02);
        let cum = cumulative(&constant(c, 6));
        for (t, h) in cum.iter().enumerate() {
            assert!((*h - c.scale((t + 1) as f64)).norm_inf() < 1e-15);
        }
    }

    #[test]
    fn cumulative_differences_recover_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_seq(&mut rng, 50);
        let cum = cumulative(&f);
        for t in 1..f.len() {
            assert!((cum[t] - cum[t - 1] - f[t]).norm_inf() < 1e-12);
        }
    }

    #[test]
    fn derivatives_examples() {
        let n = 8;
        let zero = constant(LogHomography::zero(), n);
        let (e1, e2, e3) = derivatives(&zero, &zero).unwrap();
        assert_eq!((e1.len(), e2.len(), e3.len()), (n - 1, n - 2, n - 3));
        assert!(e1.iter().chain(&e2).chain(&e3).all(|e| e.amax() == 0.0));

        let c = LogHomography::translation(0.02, 0.01);
        let f = constant(c, n);
        let (e1, e2, e3) = derivatives(&zero, &f).unwrap();
        assert!(e1.iter().all(|e| (e - c.vector()).amax() < 1e-16));
        assert!(e2.iter().all(|e| e.amax() < 1e-16));
        assert!(e3.iter().all(|e| e.amax() < 1e-16));
    }

    #[test]
    fn virtual_tripod_has_zero_velocity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_seq(&mut rng, 30);
        let p: Vec<_> = cumulative(&f).into_iter().map(|h| -h).collect();
        let (e1, e2, e3) = derivatives(&p, &f).unwrap();
        for e in e1.iter().chain(&e2).chain(&e3) {
            assert!(e.amax() < 1e-12);
        }
    }

    #[test]
    fn derivatives_short_and_mismatched() {
        let one = constant(LogHomography::zero(), 1);
        let (e1, e2, e3) = derivatives(&one, &one).unwrap();
        assert!(e1.is_empty() && e2.is_empty() && e3.is_empty());
        let three = constant(LogHomography::zero(), 3);
        let (e1, e2, e3) = derivatives(&three, &three).unwrap();
        assert_eq!((e1.len(), e2.len(), e3.len()), (2, 1, 0));
        assert_eq!(
            derivatives(&one, &three),
            Err(PathError::LengthMismatch { left: 1, right: 3 })
        );
    }

    #[test]
    fn second_difference_of_cumulative_is_first_difference_of_f() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = random_seq(&mut rng, 20);
        let cum = cumulative(&f);
        for t in 0..f.len() - 2 {
            let second = *cum[t + 2].vector() - 2.0 * cum[t + 1].vector() + cum[t].vector();
            let first = f[t + 2].vector() - f[t + 1].vector();
            assert!((second - first).amax() < 1e-12);
        }
    }

    #[test]
    fn crop_window_examples() {
        let g = crop_window_from_fraction(0.2, 9.0 / 16.0, 0.05).unwrap();
        let (x0, x1, y0, y1) = g.crop_rect();
        assert!((x1 - 0.85).abs() < 1e-15 && (x0 + 0.85).abs() < 1e-15);
        assert!((y1 - 0.85 * 9.0 / 16.0).abs() < 1e-15 && (y0 + y1).abs() < 1e-15);

        let tight = crop_window_from_fraction(0.2, 0.5, 0.0).unwrap();
        assert!((tight.crop_window.area().unwrap() - tight.min_area()).abs() < 1e-12);

        for cf in [0.1, 0.2, 0.3] {
            let g = crop_window_from_fraction(cf, 0.5625, 0.05).unwrap();
            assert!(g.crop_window.area().unwrap() >= g.min_area());
        }
    }

    #[test]
    fn crop_window_rejects_bad_input() {
        assert_eq!(
            crop_window_from_fraction(0.9, 0.5, 0.0),
            Err(PathError::InvalidFraction(0.9))
        );
        assert!(crop_window_from_fraction(0.0, 0.5, 0.0).is_err());
        assert!(matches!(
            crop_window_from_fraction(0.2, 0.5, 0.2),
            Err(PathError::InvalidMargin { .. })
        ));
    }

    proptest! {
        #[test]
        fn derivative_operators_are_linear(
            seed in 0u64..1000,
            alpha in -2.0f64..2.0,
            beta in -2.0f64..2.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 9;
            let p = random_seq(&mut rng, n);
            let q = random_seq(&mut rng, n);
            let f = random_seq(&mut rng, n);
            let zero = constant(LogHomography::zero(), n);
            let combo: Vec<_> = p.iter().zip(&q).map(|(a, b)| a.scale(alpha) + b.scale(beta)).collect();
            let lhs = derivatives(&combo, &f).unwrap();
            let dp = derivatives(&p, &zero).unwrap();
            let dq = derivatives(&q, &zero).unwrap();
            let df = derivatives(&zero, &f).unwrap();
            for (k, (l, (a, (b, c)))) in [
                (&lhs.0, (&dp.0, (&dq.0, &df.0))),
                (&lhs.1, (&dp.1, (&dq.1, &df.1))),
                (&lhs.2, (&dp.2, (&dq.2, &df.2))),
            ].into_iter().enumerate() {
                for t in 0..l.len() {
                    let want = a[t] * alpha + b[t] * beta + c[t];
                    prop_assert!((l[t] - want).amax() < 1e-12, "order {}", k + 1);
                }
            }
        }
    }
}
