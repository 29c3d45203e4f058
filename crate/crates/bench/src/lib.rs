//! Workloads shared by the criterion benchmarks in `benches/`.

use cinestab::synth::{Jitter, Motion, Segment};
use cinestab::{
    crop_window_from_fraction, generate, AnalysisPath, FrameGeometry, LogHomography, SynthSpec,
};

/// Static, panning and accelerating thirds with mild jitter.
pub fn mixed_spec(frames: usize, seed: u64) -> SynthSpec {
    let third = (frames / 3).max(1);
    let mut velocity = [0.0; 9];
    velocity[2] = 0.002;
    velocity[5] = 0.001;
    let mut acceleration = [0.0; 9];
    acceleration[2] = 1e-4;
    SynthSpec {
        segments: vec![
            Segment {
                frames: third,
                motion: Motion::Static,
            },
            Segment {
                frames: third,
                motion: Motion::ConstantVelocity { velocity },
            },
            Segment {
                frames: frames.saturating_sub(2 * third).max(1),
                motion: Motion::ConstantAcceleration { acceleration },
            },
        ],
        jitter_sigma: Jitter::Uniform(0.002),
        seed,
        aspect: 9.0 / 16.0,
        keystone_ratio: None,
    }
}

pub fn mixed_path(frames: usize) -> AnalysisPath {
    generate(&mixed_spec(frames, 1))
        .expect("mixed spec is valid")
        .path
}

pub fn default_geometry(aspect: f64) -> FrameGeometry {
    crop_window_from_fraction(0.15, aspect, 0.0).expect("valid crop fraction")
}

/// Trace-free logs of moderate size, deterministic in `count`.
pub fn sample_logs(count: usize) -> Vec<LogHomography> {
    (0..count)
        .map(|k| {
            let s = |j: usize| ((k * 9 + j) as f64 * 0.7548776662).fract() - 0.5;
            let mut v = [0.0; 9];
            for (j, x) in v.iter_mut().enumerate().take(8) {
                *x = 0.2 * s(j);
            }
            v[8] = -(v[0] + v[4]);
            LogHomography::from_slice(&v).expect("trace-free")
        })
        .collect()
}
