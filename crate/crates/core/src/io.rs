//! File formats: trajectories, saliency tracks, plans and per-frame CSV.
//!
//! Numbers are written by `serde_json`, whose shortest round-trip decimal form
//! parses back to the identical `f64`.
//!
//! Pixel coordinates have their origin at the frame center, x to the right and
//! y down, and convert to normalized coordinates through `N = diag(2/w, 2/w, 1)`.

use std::fmt::Write as _;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::build::{CorrectionPlan, Diagnostics};
use crate::config::{SaliencyTrack, StabilizerConfig};
use crate::lie::{log_h, normalize_det1, row_major, CornerSet, Homography, LieError, Point2};
use crate::metrics::QualityReport;
use crate::path::{AnalysisPath, PathError};
use crate::synth::SynthSpec;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("field `{field}`: {message}")]
    Field {
        field: &'static str,
        message: String,
    },
    #[error("frame {frame} is missing: header declares {expected} frames")]
    MissingFrame { frame: usize, expected: usize },
    #[error("frame {frame}: {source}")]
    Frame { frame: usize, source: LieError },
    #[error("saliency entry for frame {frame} is outside the {frames}-frame path")]
    SaliencyFrame { frame: usize, frames: usize },
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl IoError {
    fn syntax(e: serde_json::Error) -> Self {
        IoError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateSpace {
    Pixel,
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryFile {
    pub version: u32,
    pub frame_count: usize,
    /// Height over width; derived from `width` and `height` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspect: Option<f64>,
    pub coordinates: CoordinateSpace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
    /// Row-major `F_t`, mapping frame `t` to frame `t-1`.
    pub frames: Vec<[f64; 9]>,
}

/// Pixel dimensions of the input, when it was given in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelFrame {
    pub width: f64,
    pub height: f64,
}

impl PixelFrame {
    /// `N`, taking centered pixel coordinates to normalized ones.
    pub fn to_normalized(&self) -> Matrix3<f64> {
        let s = 2.0 / self.width;
        Matrix3::new(s, 0.0, 0.0, 0.0, s, 0.0, 0.0, 0.0, 1.0)
    }

    pub fn point_to_pixel(&self, p: Point2) -> Point2 {
        Point2::new(0.5 * self.width * p.x, 0.5 * self.width * p.y)
    }

    /// `N⁻¹ H N`.
    pub fn homography_to_pixel(&self, h: &Homography) -> [f64; 9] {
        let n = self.to_normalized();
        let n_inv = Matrix3::new(
            0.5 * self.width,
            0.0,
            0.0,
            0.0,
            0.5 * self.width,
            0.0,
            0.0,
            0.0,
            1.0,
        );
        row_major(&(n_inv * h.matrix() * n))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub path: AnalysisPath,
    pub pixel: Option<PixelFrame>,
}

/// Counts complete 9-number frames before the end of a truncated document.
fn complete_frames_before_eof(text: &str) -> Option<usize> {
    let start = text.find("\"frames\"")?;
    let mut depth = 0usize;
    let mut count = 0;
    for c in text[start..].chars() {
        match c {
            '[' => depth += 1,
            ']' => {
                if depth == 2 {
                    count += 1;
                }
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    return None;
                }
            }
            _ => {}
        }
    }
    Some(count)
}

fn positive(field: &'static str, v: Option<f64>) -> Result<f64, IoError> {
    match v {
        Some(v) if v > 0.0 && v.is_finite() => Ok(v),
        Some(v) => Err(IoError::Field {
            field,
            message: format!("must be positive, got {v}"),
        }),
        None => Err(IoError::Field {
            field,
            message: "required".into(),
        }),
    }
}

/// Parses a trajectory and converts every `F_t` to `f_t = log(det1(F_t))` in normalized coordinates.
pub fn parse_trajectory(text: &str) -> Result<Trajectory, IoError> {
    let file: TrajectoryFile = serde_json::from_str(text).map_err(|e| {
        if e.is_eof() {
            if let (Some(frame), Ok(header)) = (
                complete_frames_before_eof(text),
                serde_json::from_str::<serde_json::Value>(&format!(
                    "{}]}}",
                    truncate_to_header(text)
                )),
            ) {
                if let Some(expected) = header.get("frame_count").and_then(|v| v.as_u64()) {
                    return IoError::MissingFrame {
                        frame,
                        expected: expected as usize,
                    };
                }
            }
        }
        IoError::syntax(e)
    })?;
    if file.version != FORMAT_VERSION {
        return Err(IoError::Field {
            field: "version",
            message: format!("unsupported version {}", file.version),
        });
    }
    if file.frames.len() < file.frame_count {
        return Err(IoError::MissingFrame {
            frame: file.frames.len(),
            expected: file.frame_count,
        });
    }
    if file.frames.len() > file.frame_count {
        return Err(IoError::Field {
            field: "frames",
            message: format!(
                "{} frames present but frame_count is {}",
                file.frames.len(),
                file.frame_count
            ),
        });
    }
    let (aspect, pixel) = match file.coordinates {
        CoordinateSpace::Normalized => (positive("aspect", file.aspect)?, None),
        CoordinateSpace::Pixel => {
            let width = positive("width", file.width)?;
            let height = positive("height", file.height)?;
            let aspect = height / width;
            if let Some(a) = file.aspect {
                if (a - aspect).abs() > 1e-9 * aspect {
                    return Err(IoError::Field {
                        field: "aspect",
                        message: format!("{a} disagrees with height / width = {aspect}"),
                    });
                }
            }
            (aspect, Some(PixelFrame { width, height }))
        }
    };
    let increments = file
        .frames
        .iter()
        .enumerate()
        .map(|(frame, m)| {
            let mut h = Matrix3::from_row_slice(m);
            if let Some(px) = pixel {
                let n = px.to_normalized();
                let n_inv = n.try_inverse().expect("diagonal with positive entries");
                h = n * h * n_inv;
            }
            normalize_det1(h)
                .and_then(|h| log_h(&h))
                .map_err(|source| IoError::Frame { frame, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Trajectory {
        path: AnalysisPath::new(increments, aspect)?,
        pixel,
    })
}

/// Text up to the opening of the `frames` array, closed as an object with an empty array.
fn truncate_to_header(text: &str) -> String {
    match text.find("\"frames\"") {
        Some(i) => format!("{}\"frames\": [", &text[..i]),
        None => text.to_string(),
    }
}

/// Normalized-coordinate trajectory whose frames are `exp(f_t)`.
pub fn trajectory_text(path: &AnalysisPath) -> String {
    let file = TrajectoryFile {
        version: FORMAT_VERSION,
        frame_count: path.len(),
        aspect: Some(path.aspect),
        coordinates: CoordinateSpace::Normalized,
        width: None,
        height: None,
        frames: path
            .increments
            .iter()
            .map(|f| f.exp().to_row_major())
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("trajectory serializes")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SaliencyFile {
    version: u32,
    frames: Vec<SaliencyEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SaliencyEntry {
    frame: usize,
    points: Vec<[f64; 2]>,
}

/// Per-frame salient points in normalized coordinates; frames not listed get no points.
pub fn parse_saliency(text: &str, frames: usize) -> Result<SaliencyTrack, IoError> {
    let file: SaliencyFile = serde_json::from_str(text).map_err(IoError::syntax)?;
    if file.version != FORMAT_VERSION {
        return Err(IoError::Field {
            field: "version",
            message: format!("unsupported version {}", file.version),
        });
    }
    let mut track = SaliencyTrack {
        frames: vec![Vec::new(); frames],
    };
    for entry in file.frames {
        let slot = track
            .frames
            .get_mut(entry.frame)
            .ok_or(IoError::SaliencyFrame {
                frame: entry.frame,
                frames,
            })?;
        slot.extend(entry.points.iter().map(|&p| Point2::from(p)));
    }
    Ok(track)
}

pub fn saliency_text(track: &SaliencyTrack) -> String {
    let file = SaliencyFile {
        version: FORMAT_VERSION,
        frames: track
            .frames
            .iter()
            .enumerate()
            .filter(|(_, pts)| !pts.is_empty())
            .map(|(frame, pts)| SaliencyEntry {
                frame,
                points: pts.iter().map(|&p| p.into()).collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("saliency serializes")
}

/// Where the analysis path came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanSource {
    Trajectory { file: String },
    Synth { spec: SynthSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropWindowFile {
    pub normalized: [[f64; 2]; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel: Option<[[f64; 2]; 4]>,
}

/// Corrections conjugated back to centered pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelCorrections {
    pub width: f64,
    pub height: f64,
    pub corrections: Vec<[f64; 9]>,
    pub inverse_corrections: Vec<[f64; 9]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub version: u32,
    pub frame_count: usize,
    pub aspect: f64,
    pub source: PlanSource,
    /// Corners in top-left, top-right, bottom-right, bottom-left order.
    pub crop_window: CropWindowFile,
    /// Row-major `P_t`.
    pub corrections: Vec<[f64; 9]>,
    /// Row-major `P_t⁻¹`.
    pub inverse_corrections: Vec<[f64; 9]>,
    pub log_corrections: Vec<[f64; 9]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel: Option<PixelCorrections>,
    pub config: StabilizerConfig,
    pub diagnostics: Diagnostics,
    pub quality: QualityReport,
}

fn corners(c: &CornerSet, f: impl Fn(Point2) -> Point2) -> [[f64; 2]; 4] {
    c.corners.map(|p| f(p).into())
}

impl PlanFile {
    pub fn new(
        plan: &CorrectionPlan,
        aspect: f64,
        pixel: Option<PixelFrame>,
        source: PlanSource,
        config: &StabilizerConfig,
        quality: QualityReport,
    ) -> Self {
        PlanFile {
            version: FORMAT_VERSION,
            frame_count: plan.corrections.len(),
            aspect,
            source,
            crop_window: CropWindowFile {
                normalized: corners(&plan.crop_window, |p| p),
                pixel: pixel.map(|px| corners(&plan.crop_window, |p| px.point_to_pixel(p))),
            },
            corrections: plan
                .corrections
                .iter()
                .map(Homography::to_row_major)
                .collect(),
            inverse_corrections: plan
                .inverse_corrections
                .iter()
                .map(Homography::to_row_major)
                .collect(),
            log_corrections: plan.log_corrections.iter().map(|p| p.to_array()).collect(),
            pixel: pixel.map(|px| PixelCorrections {
                width: px.width,
                height: px.height,
                corrections: plan
                    .corrections
                    .iter()
                    .map(|h| px.homography_to_pixel(h))
                    .collect(),
                inverse_corrections: plan
                    .inverse_corrections
                    .iter()
                    .map(|h| px.homography_to_pixel(h))
                    .collect(),
            }),
            config: config.clone(),
            diagnostics: plan.diagnostics.clone(),
            quality,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, IoError> {
        serde_json::from_str(text).map_err(IoError::syntax)
    }
}

pub const CSV_COLUMNS: usize = 1 + 9 + 9 + 9 + 27;

/// One row per frame: frame, `f_t`, `p_t`, the stabilized increment
/// `f_t + p_t - p_{t-1}` (with `p_{-1} = 0`), then `|e1|`, `|e2|`, `|e3|`.
/// Difference columns are empty past the end of their trace.
pub fn plan_csv(plan: &CorrectionPlan, path: &AnalysisPath) -> String {
    let mut out = String::from("frame");
    for prefix in ["f", "p", "s", "e1", "e2", "e3"] {
        for i in 0..9 {
            write!(out, ",{prefix}_{i}").unwrap();
        }
    }
    out.push('\n');
    let d = &plan.diagnostics;
    for (t, (f, p)) in path
        .increments
        .iter()
        .zip(&plan.log_corrections)
        .enumerate()
    {
        write!(out, "{t}").unwrap();
        for i in 0..9 {
            write!(out, ",{}", f[i]).unwrap();
        }
        for i in 0..9 {
            write!(out, ",{}", p[i]).unwrap();
        }
        for i in 0..9 {
            let prev = if t > 0 {
                plan.log_corrections[t - 1][i]
            } else {
                0.0
            };
            write!(out, ",{}", f[i] + p[i] - prev).unwrap();
        }
        for e in [&d.e1, &d.e2, &d.e3] {
            for i in 0..9 {
                match e.get(t) {
                    Some(v) => write!(out, ",{}", v[i].abs()).unwrap(),
                    None => out.push(','),
                }
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::LogHomography;

    fn normalized_file(frames: &[[f64; 9]]) -> String {
        serde_json::to_string_pretty(&TrajectoryFile {
            version: 1,
            frame_count: frames.len(),
            aspect: Some(0.5625),
            coordinates: CoordinateSpace::Normalized,
            width: None,
            height: None,
            frames: frames.to_vec(),
        })
        .unwrap()
    }

    const IDENTITY: [f64; 9] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];

    #[test]
    fn identity_frames_give_zero_increments() {
        let t = parse_trajectory(&normalized_file(&[IDENTITY; 4])).unwrap();
        assert_eq!(t.path.len(), 4);
        assert!(t.path.increments.iter().all(|f| f.norm_inf() == 0.0));
        assert_eq!(t.pixel, None);
    }

    #[test]
    fn pixel_translation_is_normalized_by_half_width() {
        let text = r#"{"version": 1, "frame_count": 1, "coordinates": "pixel",
            "width": 1920, "height": 1080,
            "frames": [[1, 0, 30, 0, 1, -20, 0, 0, 1]]}"#;
        let t = parse_trajectory(text).unwrap();
        let f = t.path.increments[0];
        assert!((f[2] - 0.03125).abs() < 1e-15);
        assert!((f[5] + 20.0 / 960.0).abs() < 1e-15);
        assert!((t.path.aspect - 0.5625).abs() < 1e-15);
    }

    #[test]
    fn scaled_matrices_are_normalized_to_unit_determinant() {
        let scaled = IDENTITY.map(|v| 3.0 * v);
        let t = parse_trajectory(&normalized_file(&[scaled])).unwrap();
        assert!(t.path.increments[0].norm_inf() < 1e-15);
    }

    #[test]
    fn truncated_file_names_the_missing_frame() {
        let text = normalized_file(&[IDENTITY; 3]);
        // Cut inside the third frame.
        let cut = text.rfind("1.0").unwrap();
        match parse_trajectory(&text[..cut]) {
            Err(IoError::MissingFrame { frame, expected }) => {
                assert_eq!((frame, expected), (2, 3));
            }
            other => panic!("{other:?}"),
        }
        let short = text.replacen("\"frame_count\": 3", "\"frame_count\": 5", 1);
        match parse_trajectory(&short) {
            Err(IoError::MissingFrame { frame, expected }) => assert_eq!((frame, expected), (3, 5)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_input_reports_location() {
        let err = parse_trajectory("{\"version\": 1,\n \"frame_count\": x}").unwrap_err();
        assert!(matches!(err, IoError::Syntax { line: 2, .. }), "{err:?}");
        let reflected = [-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let err = parse_trajectory(&normalized_file(&[IDENTITY, reflected])).unwrap_err();
        assert!(matches!(err, IoError::Frame { frame: 1, .. }), "{err:?}");
        let err = parse_trajectory(
            r#"{"version": 1, "frame_count": 0, "coordinates": "pixel", "height": 10, "frames": []}"#,
        )
        .unwrap_err();
        assert!(
            matches!(err, IoError::Field { field: "width", .. }),
            "{err:?}"
        );
    }

    #[test]
    fn trajectory_writer_roundtrips_increments() {
        let f = vec![
            LogHomography::translation(0.01, -0.02),
            LogHomography::projected(
                [0.01, 0.002, 0.03, -0.001, -0.004, 0.01, 0.001, -0.002, 0.0].into(),
            ),
        ];
        let path = AnalysisPath::new(f.clone(), 0.75).unwrap();
        let back = parse_trajectory(&trajectory_text(&path)).unwrap().path;
        assert_eq!(back.aspect, 0.75);
        for (a, b) in f.iter().zip(&back.increments) {
            assert!((*a - *b).norm_inf() < 1e-14);
        }
    }

    #[test]
    fn saliency_file_fills_missing_frames() {
        let text = r#"{"version": 1, "frames": [
            {"frame": 1, "points": [[0.1, 0.2], [0.3, -0.1]]},
            {"frame": 3, "points": [[0.0, 0.0]]}]}"#;
        let track = parse_saliency(text, 4).unwrap();
        assert_eq!(track.frames[0], vec![]);
        assert_eq!(
            track.frames[1],
            vec![Point2::new(0.1, 0.2), Point2::new(0.3, -0.1)]
        );
        assert_eq!(parse_saliency(&saliency_text(&track), 4).unwrap(), track);
        assert!(matches!(
            parse_saliency(text, 3),
            Err(IoError::SaliencyFrame {
                frame: 3,
                frames: 3
            })
        ));
    }
}
