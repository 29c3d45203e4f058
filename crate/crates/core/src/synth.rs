//! Synthetic camera paths with known ground truth.
//!
//! Noise source: ChaCha8 seeded with `seed` through `SeedableRng::seed_from_u64`,
//! uniforms from the 53 high bits of successive `u64` outputs, normals from the
//! Box–Muller transform using both outputs of each pair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lie::{LogHomography, Vector9};
use crate::path::{cumulative, AnalysisPath, PathError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("synthetic spec has no segments")]
    NoSegments,
    #[error("segment {0} has zero frames")]
    EmptySegment(usize),
    #[error("jitter sigma must be finite and nonnegative")]
    BadSigma,
    #[error(transparent)]
    Path(#[from] PathError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    Static,
    ConstantVelocity {
        velocity: [f64; 9],
    },
    /// Starts from the last increment of the previous segment.
    ConstantAcceleration {
        acceleration: [f64; 9],
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub frames: usize,
    #[serde(flatten)]
    pub motion: Motion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Jitter {
    Uniform(f64),
    PerElement([f64; 9]),
}

impl Jitter {
    fn sigma(&self, i: usize) -> f64 {
        match self {
            Jitter::Uniform(s) => *s,
            Jitter::PerElement(s) => s[i],
        }
    }
}

fn default_aspect() -> f64 {
    9.0 / 16.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub segments: Vec<Segment>,
    pub jitter_sigma: Jitter,
    pub seed: u64,
    #[serde(default = "default_aspect")]
    pub aspect: f64,
    /// Makes keystone increments exactly `R` times the translation increments.
    #[serde(default)]
    pub keystone_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub path: AnalysisPath,
    /// Noise-free increments.
    pub ground_truth: Vec<LogHomography>,
    /// Cumulative noise-free path.
    pub ground_truth_path: Vec<LogHomography>,
}

struct Gaussian {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl Gaussian {
    fn new(seed: u64) -> Self {
        Gaussian {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1: f64 = 1.0 - self.rng.gen::<f64>();
        let u2: f64 = self.rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// Input increments `f_t = g_t + n_t - n_{t-1}`: ground truth plus the
/// difference of per-frame positional jitter `n_t ~ N(0, σ²)`, so the
/// cumulative input is the ground-truth path plus white noise.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput, SynthError> {
    if spec.segments.is_empty() {
        return Err(SynthError::NoSegments);
    }
    if let Some(i) = spec.segments.iter().position(|s| s.frames == 0) {
        return Err(SynthError::EmptySegment(i));
    }
    if !(0..9).all(|i| spec.jitter_sigma.sigma(i) >= 0.0 && spec.jitter_sigma.sigma(i).is_finite())
    {
        return Err(SynthError::BadSigma);
    }

    let mut truth = Vec::new();
    let mut last = Vector9::zeros();
    for seg in &spec.segments {
        for _ in 0..seg.frames {
            let g = match seg.motion {
                Motion::Static => Vector9::zeros(),
                Motion::ConstantVelocity { velocity } => Vector9::from_column_slice(&velocity),
                Motion::ConstantAcceleration { acceleration } => {
                    last + Vector9::from_column_slice(&acceleration)
                }
            };
            last = g;
            truth.push(g);
        }
    }
    if let Some(r) = spec.keystone_ratio {
        for g in &mut truth {
            g[6] = r * g[2];
            g[7] = r * g[5];
        }
    }
    let truth: Vec<LogHomography> = truth.into_iter().map(LogHomography::projected).collect();

    let mut gauss = Gaussian::new(spec.seed);
    let mut prev_noise = Vector9::zeros();
    let mut increments = Vec::with_capacity(truth.len());
    for g in &truth {
        let mut noise = Vector9::zeros();
        for i in 0..8 {
            noise[i] = spec.jitter_sigma.sigma(i) * gauss.sample();
        }
        let mut f = g.vector() + noise - prev_noise;
        prev_noise = noise;
        if let Some(r) = spec.keystone_ratio {
            f[6] = r * f[2];
            f[7] = r * f[5];
        }
        increments.push(LogHomography::projected(f));
    }
    let ground_truth_path = cumulative(&truth);
    Ok(SynthOutput {
        path: AnalysisPath::new(increments, spec.aspect)?,
        ground_truth: truth,
        ground_truth_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::derivatives;

    fn spec(segments: Vec<Segment>, sigma: f64, seed: u64) -> SynthSpec {
        SynthSpec {
            segments,
            jitter_sigma: Jitter::Uniform(sigma),
            seed,
            aspect: 0.5625,
            keystone_ratio: None,
        }
    }

    #[test]
    fn static_without_jitter_is_zero() {
        let out = generate(&spec(
            vec![Segment {
                frames: 20,
                motion: Motion::Static,
            }],
            0.0,
            1,
        ))
        .unwrap();
        assert!(out
            .path
            .increments
            .iter()
            .all(|f| *f == LogHomography::zero()));
    }

    #[test]
    fn constant_velocity_has_zero_second_difference() {
        let mut v = [0.0; 9];
        v[2] = 0.002;
        v[0] = 0.001;
        let out = generate(&spec(
            vec![Segment {
                frames: 30,
                motion: Motion::ConstantVelocity { velocity: v },
            }],
            0.0,
            1,
        ))
        .unwrap();
        let expected = LogHomography::projected(Vector9::from_column_slice(&v));
        assert!(out.path.increments.iter().all(|f| *f == expected));
        let zero = vec![LogHomography::zero(); 30];
        let (_, e2, _) = derivatives(&zero, &out.path.increments).unwrap();
        assert!(e2.iter().all(|e| e.amax() == 0.0));
    }

    #[test]
    fn acceleration_continues_from_previous_velocity() {
        let mut v = [0.0; 9];
        v[5] = 0.01;
        let mut a = [0.0; 9];
        a[5] = 0.001;
        let out = generate(&spec(
            vec![
                Segment {
                    frames: 2,
                    motion: Motion::ConstantVelocity { velocity: v },
                },
                Segment {
                    frames: 3,
                    motion: Motion::ConstantAcceleration { acceleration: a },
                },
            ],
            0.0,
            1,
        ))
        .unwrap();
        let y: Vec<f64> = out.ground_truth.iter().map(|g| g[5]).collect();
        let expected = [0.01, 0.01, 0.011, 0.012, 0.013];
        for (a, b) in y.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn fixed_seed_is_bitwise_reproducible() {
        let s = spec(
            vec![Segment {
                frames: 50,
                motion: Motion::Static,
            }],
            0.01,
            42,
        );
        let a = generate(&s).unwrap();
        let b = generate(&s).unwrap();
        for (x, y) in a.path.increments.iter().zip(&b.path.increments) {
            for i in 0..9 {
                assert_eq!(x[i].to_bits(), y[i].to_bits());
            }
        }
        let c = generate(&SynthSpec { seed: 43, ..s }).unwrap();
        assert_ne!(a.path.increments, c.path.increments);
    }

    #[test]
    fn jitter_is_zero_mean_and_trace_free() {
        let sigma = 0.01;
        let n = 2000;
        let out = generate(&spec(
            vec![Segment {
                frames: n,
                motion: Motion::Static,
            }],
            sigma,
            9,
        ))
        .unwrap();
        for i in 0..9 {
            let mean: f64 = out.path.increments.iter().map(|f| f[i]).sum::<f64>() / n as f64;
            assert!(
                mean.abs() <= 3.0 * sigma / (n as f64).sqrt(),
                "element {i}: {mean}"
            );
        }
        assert!(out.path.increments.iter().all(|f| f.trace().abs() < 1e-15));
        // cumulative input = truth + white noise, so its per-element spread is sigma
        let cum = cumulative(&out.path.increments);
        let var: f64 = cum.iter().map(|c| c[2] * c[2]).sum::<f64>() / n as f64;
        assert!((var.sqrt() - sigma).abs() < 0.1 * sigma);
    }

    #[test]
    fn keystone_ratio_is_exact() {
        let mut v = [0.0; 9];
        v[2] = 0.003;
        let out = generate(&SynthSpec {
            keystone_ratio: Some(0.1),
            ..spec(
                vec![Segment {
                    frames: 40,
                    motion: Motion::ConstantVelocity { velocity: v },
                }],
                0.001,
                3,
            )
        })
        .unwrap();
        for f in &out.path.increments {
            assert_eq!(f[6], 0.1 * f[2]);
            assert_eq!(f[7], 0.1 * f[5]);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert_eq!(generate(&spec(vec![], 0.0, 0)), Err(SynthError::NoSegments));
        assert_eq!(
            generate(&spec(
                vec![Segment {
                    frames: 0,
                    motion: Motion::Static
                }],
                0.0,
                0
            )),
            Err(SynthError::EmptySegment(0))
        );
        assert_eq!(
            generate(&spec(
                vec![Segment {
                    frames: 1,
                    motion: Motion::Static
                }],
                -1.0,
                0
            )),
            Err(SynthError::BadSigma)
        );
    }

    #[test]
    fn spec_json_shape() {
        let text = r#"{
            "segments": [
                {"frames": 10, "kind": "static"},
                {"frames": 5, "kind": "constant_velocity", "velocity": [0,0,0.002,0,0,0,0,0,0]}
            ],
            "jitter_sigma": 0.001,
            "seed": 7
        }"#;
        let s: SynthSpec = serde_json::from_str(text).unwrap();
        assert_eq!(s.segments.len(), 2);
        assert_eq!(s.aspect, 0.5625);
        assert_eq!(s.jitter_sigma, Jitter::Uniform(0.001));
    }
}
