//! Camera-path stabilization by sparse derivative minimization over
//! log-homographies.
//!
//! The input is a sequence of frame-to-frame homographies. The output is a
//! per-frame correction that keeps a fixed crop window inside every frame
//! while making the stabilized path piecewise constant, linear or parabolic.

pub mod build;
pub mod config;
pub mod io;
pub mod lie;
pub mod metrics;
pub mod path;
pub mod pipeline;
pub mod qp;
pub mod synth;
pub mod window;

pub use build::{
    assemble, assemble_window, estimate_keystone_ratio, extract_plan, AssembledProblem, BuildError,
    CorrectionPlan, Diagnostics, VariableLayout,
};
pub use config::{
    ElementBounds, SaliencyConfig, SaliencyMode, SaliencyTrack, StabilizerConfig, WindowParams,
};
pub use lie::{exp_h, log_h, CornerSet, Homography, LieError, LogHomography, Point2};
pub use metrics::{compare_paths, quality, QualityReport};
pub use path::{crop_window_from_fraction, derivatives, AnalysisPath, FrameGeometry};
pub use qp::{solve, QpSolution, SolveStatus, SolverSettings, SparseQP};
pub use synth::{generate, SynthSpec};
pub use window::{solve_global, solve_windowed, stabilize};
