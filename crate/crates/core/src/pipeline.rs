//! Command-line orchestration: read inputs, solve, write outputs.
//!
//! Exit codes: 0 success, 2 unreadable or malformed input, 3 infeasible
//! problem, 4 solver failure, 5 invalid configuration.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::build::{AssembledProblem, BuildError};
use crate::config::{SaliencyConfig, SaliencyMode, StabilizerConfig, WindowParams};
use crate::io::{
    parse_saliency, parse_trajectory, plan_csv, trajectory_text, IoError, PlanFile, PlanSource,
};
use crate::metrics::{quality, DEFAULT_TAU};
use crate::path::{crop_window_from_fraction, AnalysisPath};
use crate::synth::{generate, SynthSpec};
use crate::window::stabilize_observed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Parse,
    Infeasible,
    Solver,
    Config,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Parse => 2,
            ErrorKind::Infeasible => 3,
            ErrorKind::Solver => 4,
            ErrorKind::Config => 5,
        }
    }

    /// Stable identifier printed with every diagnostic.
    pub fn code(self) -> &'static str {
        match self {
            ErrorKind::Parse => "parse",
            ErrorKind::Infeasible => "infeasible",
            ErrorKind::Solver => "solver",
            ErrorKind::Config => "config",
        }
    }
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct PipelineError {
    pub kind: ErrorKind,
    pub message: String,
}

impl PipelineError {
    fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        PipelineError {
            kind,
            message: message.into(),
        }
    }

    fn file(kind: ErrorKind, path: &Path, e: impl std::fmt::Display) -> Self {
        PipelineError::new(kind, format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl From<BuildError> for PipelineError {
    fn from(e: BuildError) -> Self {
        let kind = match e {
            BuildError::Config(_) => ErrorKind::Config,
            BuildError::Infeasible { .. } | BuildError::InfeasibleSaliency { .. } => {
                ErrorKind::Infeasible
            }
            _ => ErrorKind::Solver,
        };
        PipelineError::new(kind, e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Trajectory(PathBuf),
    Synth(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowChoice {
    Global,
    Windowed(WindowParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineArgs {
    pub input: Input,
    /// Replaces the seed of a synthetic spec.
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
    pub crop: Option<f64>,
    pub margin: Option<f64>,
    pub window: Option<WindowChoice>,
    pub weights: Vec<(String, f64)>,
    pub saliency: Option<PathBuf>,
    pub saliency_mode: Option<SaliencyMode>,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    /// Directory receiving one triplet dump per solved problem.
    pub dump_qp: Option<PathBuf>,
    pub trajectory_out: Option<PathBuf>,
}

impl PipelineArgs {
    pub fn new(input: Input) -> Self {
        PipelineArgs {
            input,
            seed: None,
            config: None,
            crop: None,
            margin: None,
            window: None,
            weights: Vec::new(),
            saliency: None,
            saliency_mode: None,
            out: None,
            csv: None,
            dump_qp: None,
            trajectory_out: None,
        }
    }
}

/// `soft`, `soft:<penalty>`, `hard`, `center` or `center:<weight>`.
pub fn parse_saliency_mode(text: &str) -> Result<SaliencyMode, PipelineError> {
    let (name, value) = match text.split_once(':') {
        Some((n, v)) => (n, Some(v)),
        None => (text, None),
    };
    let number = |v: &str| {
        v.parse::<f64>().map_err(|_| {
            PipelineError::new(ErrorKind::Config, format!("bad saliency parameter `{v}`"))
        })
    };
    match (name, value) {
        ("hard", None) => Ok(SaliencyMode::HardInclude),
        ("soft", None) => Ok(SaliencyMode::default()),
        ("soft", Some(v)) => Ok(SaliencyMode::SoftInclude {
            penalty: number(v)?,
        }),
        ("center", None) => Ok(SaliencyMode::Center { weight: 100.0 }),
        ("center", Some(v)) => Ok(SaliencyMode::Center { weight: number(v)? }),
        _ => Err(PipelineError::new(
            ErrorKind::Config,
            format!("unknown saliency mode `{text}` (soft[:penalty], hard, center[:weight])"),
        )),
    }
}

/// `<l_w>,<l_s>`.
pub fn parse_window(text: &str) -> Result<WindowParams, PipelineError> {
    let bad = || {
        PipelineError::new(
            ErrorKind::Config,
            format!("bad window `{text}`, expected lw,ls"),
        )
    };
    let (l, s) = text.split_once(',').ok_or_else(bad)?;
    Ok(WindowParams {
        length: l.trim().parse().map_err(|_| bad())?,
        stride: s.trim().parse().map_err(|_| bad())?,
    })
}

/// Comma-separated `name=value` pairs.
pub fn parse_weights(text: &str) -> Result<Vec<(String, f64)>, PipelineError> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (k, v) = pair.split_once('=').ok_or_else(|| {
                PipelineError::new(
                    ErrorKind::Config,
                    format!("bad weight `{pair}`, expected name=value"),
                )
            })?;
            let v = v.trim().parse::<f64>().map_err(|_| {
                PipelineError::new(ErrorKind::Config, format!("bad weight value in `{pair}`"))
            })?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn set_weight(config: &mut StabilizerConfig, name: &str, value: f64) -> Result<(), PipelineError> {
    let slot = match name {
        "w0" => &mut config.w0,
        "w1" => &mut config.w1,
        "w2" => &mut config.w2,
        "w3" => &mut config.w3,
        "w_diag" => &mut config.w_diag,
        "w_offdiag" => &mut config.w_offdiag,
        "keystone_ratio_weight" | "keystone" => &mut config.keystone_ratio_weight,
        _ => {
            return Err(PipelineError::new(
                ErrorKind::Config,
                format!("unknown weight `{name}`"),
            ))
        }
    };
    *slot = value;
    Ok(())
}

/// Default config, then the config file, then individual flags.
pub fn resolve_config(args: &PipelineArgs) -> Result<StabilizerConfig, PipelineError> {
    let mut config = match &args.config {
        Some(p) => {
            let text =
                fs::read_to_string(p).map_err(|e| PipelineError::file(ErrorKind::Config, p, e))?;
            serde_json::from_str(&text).map_err(|e| PipelineError::file(ErrorKind::Config, p, e))?
        }
        None => StabilizerConfig::default(),
    };
    if let Some(c) = args.crop {
        config.crop_fraction = c;
    }
    if let Some(m) = args.margin {
        config.window_margin = m;
    }
    match args.window {
        Some(WindowChoice::Global) => config.window = None,
        Some(WindowChoice::Windowed(w)) => config.window = Some(w),
        None => {}
    }
    for (k, v) in &args.weights {
        set_weight(&mut config, k, *v)?;
    }
    if args.saliency_mode.is_some() && args.saliency.is_none() && config.saliency.is_none() {
        return Err(PipelineError::new(
            ErrorKind::Config,
            "--saliency-mode needs a saliency track",
        ));
    }
    if let (Some(mode), Some(sal)) = (args.saliency_mode, config.saliency.as_mut()) {
        sal.mode = mode;
    }
    config
        .validate()
        .map_err(|e| PipelineError::new(ErrorKind::Config, e.to_string()))?;
    Ok(config)
}

/// Everything the pipeline produced, also written to the requested files.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub plan: PlanFile,
    pub csv: String,
    pub path: AnalysisPath,
}

fn read(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| PipelineError::file(ErrorKind::Parse, path, e))
}

fn write(path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::write(path, text).map_err(|e| PipelineError::file(ErrorKind::Parse, path, e))
}

fn parse_error(path: &Path, e: IoError) -> PipelineError {
    PipelineError::file(ErrorKind::Parse, path, e)
}

pub fn run_pipeline(args: &PipelineArgs) -> Result<PipelineOutput, PipelineError> {
    let mut config = resolve_config(args)?;

    let (path, pixel, source) = match &args.input {
        Input::Trajectory(p) => {
            let t = parse_trajectory(&read(p)?).map_err(|e| parse_error(p, e))?;
            let source = PlanSource::Trajectory {
                file: p.display().to_string(),
            };
            (t.path, t.pixel, source)
        }
        Input::Synth(p) => {
            let mut spec: SynthSpec = serde_json::from_str(&read(p)?)
                .map_err(|e| PipelineError::file(ErrorKind::Parse, p, e))?;
            if let Some(seed) = args.seed {
                spec.seed = seed;
            }
            let out = generate(&spec).map_err(|e| PipelineError::file(ErrorKind::Parse, p, e))?;
            (out.path, None, PlanSource::Synth { spec })
        }
    };

    if let Some(p) = &args.saliency {
        let track = parse_saliency(&read(p)?, path.len()).map_err(|e| parse_error(p, e))?;
        let mode = args
            .saliency_mode
            .or(config.saliency.as_ref().map(|s| s.mode))
            .unwrap_or_default();
        config.saliency = Some(SaliencyConfig { track, mode });
    }
    config
        .validate_for(path.len(), path.aspect)
        .map_err(|e| PipelineError::new(ErrorKind::Config, e.to_string()))?;
    let geometry =
        crop_window_from_fraction(config.crop_fraction, path.aspect, config.window_margin)
            .map_err(|e| PipelineError::new(ErrorKind::Config, e.to_string()))?;

    if let Some(dir) = &args.dump_qp {
        fs::create_dir_all(dir).map_err(|e| PipelineError::file(ErrorKind::Parse, dir, e))?;
    }
    let mut dump_error = None;
    let mut observer = |start: usize, problem: &AssembledProblem| {
        if let (Some(dir), None) = (&args.dump_qp, &dump_error) {
            let file = dir.join(format!("window_{start:06}.qp"));
            if let Err(e) = write(&file, &problem.qp.to_triplet_text()) {
                dump_error = Some(e);
            }
        }
    };
    let plan = stabilize_observed(&path, &geometry, &config, &mut observer)?;
    if let Some(e) = dump_error {
        return Err(e);
    }

    let report = quality(&plan, &path, &geometry, DEFAULT_TAU)
        .map_err(|e| PipelineError::new(ErrorKind::Solver, e.to_string()))?;
    let plan_file = PlanFile::new(&plan, path.aspect, pixel, source, &config, report);
    let csv = plan_csv(&plan, &path);

    if let Some(p) = &args.out {
        write(p, &plan_file.to_json())?;
    }
    if let Some(p) = &args.csv {
        write(p, &csv)?;
    }
    if let Some(p) = &args.trajectory_out {
        write(p, &trajectory_text(&path))?;
    }
    Ok(PipelineOutput {
        plan: plan_file,
        csv,
        path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saliency_modes() {
        assert_eq!(
            parse_saliency_mode("hard").unwrap(),
            SaliencyMode::HardInclude
        );
        assert_eq!(
            parse_saliency_mode("soft:20").unwrap(),
            SaliencyMode::SoftInclude { penalty: 20.0 }
        );
        assert_eq!(
            parse_saliency_mode("soft").unwrap(),
            SaliencyMode::default()
        );
        assert_eq!(
            parse_saliency_mode("center").unwrap(),
            SaliencyMode::Center { weight: 100.0 }
        );
        assert_eq!(
            parse_saliency_mode("center:x").unwrap_err().kind,
            ErrorKind::Config
        );
        assert_eq!(
            parse_saliency_mode("loud").unwrap_err().kind,
            ErrorKind::Config
        );
    }

    #[test]
    fn window_and_weight_flags() {
        assert_eq!(
            parse_window("120, 90").unwrap(),
            WindowParams {
                length: 120,
                stride: 90
            }
        );
        assert!(parse_window("120").is_err());
        assert_eq!(
            parse_weights("w1=5,w3=2.5").unwrap(),
            vec![("w1".to_string(), 5.0), ("w3".to_string(), 2.5)]
        );
        assert!(parse_weights("w1").is_err());
    }

    #[test]
    fn flags_override_defaults_and_are_validated() {
        let mut args = PipelineArgs::new(Input::Trajectory("unused".into()));
        args.crop = Some(0.3);
        args.window = Some(WindowChoice::Global);
        args.weights = vec![("w2".into(), 4.0), ("keystone".into(), 0.5)];
        let c = resolve_config(&args).unwrap();
        assert_eq!(
            (c.crop_fraction, c.window, c.w2, c.keystone_ratio_weight),
            (0.3, None, 4.0, 0.5)
        );

        args.crop = Some(0.9);
        assert_eq!(resolve_config(&args).unwrap_err().exit_code(), 5);
        args.crop = None;
        args.weights = vec![("w9".into(), 1.0)];
        assert_eq!(resolve_config(&args).unwrap_err().exit_code(), 5);
        args.weights.clear();
        args.saliency_mode = Some(SaliencyMode::HardInclude);
        assert_eq!(resolve_config(&args).unwrap_err().exit_code(), 5);
    }

    #[test]
    fn error_kinds_map_to_exit_codes() {
        let codes: Vec<i32> = [
            ErrorKind::Parse,
            ErrorKind::Infeasible,
            ErrorKind::Solver,
            ErrorKind::Config,
        ]
        .iter()
        .map(|k| k.exit_code())
        .collect();
        assert_eq!(codes, [2, 3, 4, 5]);
        let e: PipelineError = BuildError::InfeasibleSaliency { start: 3 }.into();
        assert_eq!(e.kind, ErrorKind::Infeasible);
    }
}
