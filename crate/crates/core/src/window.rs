//! Overlapping-window solver.
//!
//! Each window after the first pins its leading three corrections to values
//! committed by the previous window. Third differences couple four
//! consecutive frames, so three pinned frames carry all the history the
//! remaining frames can see.

use serde::{Deserialize, Serialize};

use crate::build::{
    assemble, assemble_window, build_plan, estimate_keystone_ratio, extract_corrections,
    extract_plan, ActiveConstraints, AssembledProblem, BuildError, CorrectionPlan, PlanInputs,
    WindowProblem, WindowRecord,
};
use crate::config::{ConfigError, SaliencyMode, StabilizerConfig, WindowParams};
use crate::lie::LogHomography;
use crate::path::{AnalysisPath, FrameGeometry};
use crate::qp::{solve, QpSolution, SolveStatus};

/// Frames pinned at the start of every window but the first.
pub const OVERLAP: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub end: usize,
    pub fixed_prefix: usize,
    /// Frames `[start, commit_end)` are final once this window is solved.
    pub commit_end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSchedule {
    pub length: usize,
    pub stride: usize,
    pub windows: Vec<Window>,
}

/// Windows of `length` frames advancing by `stride - 3`; the last is truncated at `n`.
pub fn schedule(n: usize, length: usize, stride: usize) -> Result<WindowSchedule, ConfigError> {
    if stride < OVERLAP + 1 || stride >= length {
        return Err(ConfigError::Window { length, stride });
    }
    let mut windows = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + length).min(n);
        let fixed_prefix = if start == 0 { 0 } else { OVERLAP };
        let last = end == n;
        // A non-final window ends before n, so the next one is longer than length - stride + 3.
        debug_assert!(last || n - (start + stride - OVERLAP) > OVERLAP);
        windows.push(Window {
            start,
            end,
            fixed_prefix,
            commit_end: if last { n } else { start + stride },
        });
        if last {
            break;
        }
        start += stride - OVERLAP;
    }
    Ok(WindowSchedule {
        length,
        stride,
        windows,
    })
}

fn check_status(
    sol: &QpSolution,
    start: usize,
    config: &StabilizerConfig,
) -> Result<(), BuildError> {
    match sol.status {
        SolveStatus::Optimal => Ok(()),
        SolveStatus::Infeasible => {
            let hard = matches!(
                config.saliency.as_ref().map(|s| s.mode),
                Some(SaliencyMode::HardInclude)
            );
            Err(if hard {
                BuildError::InfeasibleSaliency { start }
            } else {
                BuildError::Infeasible { start }
            })
        }
        status => Err(BuildError::NotOptimal { status, start }),
    }
}

fn identity_plan(
    path: &AnalysisPath,
    geometry: &FrameGeometry,
    config: &StabilizerConfig,
    ratio: (f64, f64),
) -> Result<CorrectionPlan, BuildError> {
    let inputs = PlanInputs {
        path,
        geometry,
        config,
        keystone_ratio: ratio,
    };
    build_plan(
        vec![LogHomography::zero(); path.len()],
        inputs,
        Vec::new(),
        ActiveConstraints::default(),
    )
}

/// Receives each assembled problem, with the first frame it covers, before it is solved.
pub type ProblemObserver<'a> = dyn FnMut(usize, &AssembledProblem) + 'a;

/// One problem over every frame.
pub fn solve_global(
    path: &AnalysisPath,
    geometry: &FrameGeometry,
    config: &StabilizerConfig,
) -> Result<CorrectionPlan, BuildError> {
    global_observed(path, geometry, config, &mut |_, _| {})
}

fn global_observed(
    path: &AnalysisPath,
    geometry: &FrameGeometry,
    config: &StabilizerConfig,
    observer: &mut ProblemObserver,
) -> Result<CorrectionPlan, BuildError> {
    config.validate_for(path.len(), path.aspect)?;
    let ratio = config
        .keystone_ratio
        .unwrap_or_else(|| estimate_keystone_ratio(path));
    if path.len() == 1 {
        return identity_plan(path, geometry, config, ratio);
    }
    let problem = assemble(path, geometry, config)?;
    observer(0, &problem);
    let sol = solve(&problem.qp, &config.solver)?;
    check_status(&sol, 0, config)?;
    extract_plan(
        &sol,
        &problem,
        PlanInputs {
            path,
            geometry,
            config,
            keystone_ratio: ratio,
        },
    )
}

/// Sequence of overlapping windows; equals [`solve_global`] when one window covers the path.
pub fn solve_windowed(
    path: &AnalysisPath,
    geometry: &FrameGeometry,
    config: &StabilizerConfig,
    params: WindowParams,
) -> Result<CorrectionPlan, BuildError> {
    windowed_observed(path, geometry, config, params, &mut |_, _| {})
}

fn windowed_observed(
    path: &AnalysisPath,
    geometry: &FrameGeometry,
    config: &StabilizerConfig,
    params: WindowParams,
    observer: &mut ProblemObserver,
) -> Result<CorrectionPlan, BuildError> {
    config.validate_for(path.len(), path.aspect)?;
    let n = path.len();
    let sched = schedule(n, params.length, params.stride)?;
    if sched.windows.len() == 1 {
        return global_observed(path, geometry, config, observer);
    }
    let ratio = config
        .keystone_ratio
        .unwrap_or_else(|| estimate_keystone_ratio(path));

    let mut p: Vec<LogHomography> = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(sched.windows.len());
    let mut active = ActiveConstraints::default();
    for w in &sched.windows {
        debug_assert_eq!(p.len(), w.start + w.fixed_prefix);
        let sub = path.slice(w.start, w.end);
        let problem = assemble_window(&WindowProblem {
            path: &sub,
            geometry,
            config,
            fixed_prefix: &p[w.start..w.start + w.fixed_prefix],
            keystone_ratio: ratio,
            fidelity: config.fidelity_weights(w.start, w.end),
            saliency: config
                .saliency
                .as_ref()
                .map(|s| (s.track.slice(w.start, w.end), s.mode)),
        })?;
        observer(w.start, &problem);
        let sol = solve(&problem.qp, &config.solver)?;
        check_status(&sol, w.start, config)?;
        let local = extract_corrections(&sol.x, &problem.layout);
        let commit = w.fixed_prefix..w.commit_end - w.start;
        active.add(&ActiveConstraints::count(&problem, &sol.x, commit.clone()));
        p.extend_from_slice(&local[commit]);
        records.push(WindowRecord::new(
            w.start,
            w.fixed_prefix,
            &problem.qp,
            &sol,
            w.end - w.start,
        ));
    }
    build_plan(
        p,
        PlanInputs {
            path,
            geometry,
            config,
            keystone_ratio: ratio,
        },
        records,
        active,
    )
}

/// Dispatches on `config.window`.
pub fn stabilize(
    path: &AnalysisPath,
    geometry: &FrameGeometry,
    config: &StabilizerConfig,
) -> Result<CorrectionPlan, BuildError> {
    stabilize_observed(path, geometry, config, &mut |_, _| {})
}

/// [`stabilize`], handing every assembled problem to `observer`.
pub fn stabilize_observed(
    path: &AnalysisPath,
    geometry: &FrameGeometry,
    config: &StabilizerConfig,
    observer: &mut ProblemObserver,
) -> Result<CorrectionPlan, BuildError> {
    match config.window {
        Some(params) => windowed_observed(path, geometry, config, params, observer),
        None => global_observed(path, geometry, config, observer),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triples(s: &WindowSchedule) -> Vec<(usize, usize, usize)> {
        s.windows
            .iter()
            .map(|w| (w.start, w.end, w.fixed_prefix))
            .collect()
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(triples(&schedule(100, 120, 90).unwrap()), vec![(0, 100, 0)]);
        assert_eq!(
            triples(&schedule(200, 120, 90).unwrap()),
            vec![(0, 120, 0), (87, 200, 3)]
        );
        assert!(schedule(100, 90, 90).is_err());
        assert!(schedule(100, 90, 3).is_err());
    }

    #[test]
    fn schedule_commits_every_frame_once() {
        for n in [1, 5, 119, 120, 121, 207, 208, 500, 1234] {
            for (l_w, l_s) in [(120, 90), (10, 4), (30, 29)] {
                let s = schedule(n, l_w, l_s).unwrap();
                let mut next = 0;
                for w in &s.windows {
                    assert_eq!(w.start + w.fixed_prefix, next);
                    assert!(w.end - w.start <= l_w && w.end - w.start >= 4.min(n));
                    assert!(w.commit_end <= w.end);
                    next = w.commit_end;
                }
                assert_eq!(next, n);
            }
        }
    }
}
