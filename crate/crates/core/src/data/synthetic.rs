use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Targets};
use crate::linalg::Matrix;

/// 1-D regression data with a gap: `y = sin(ωx) + slope·x + ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusoidSpec {
    pub n: usize,
    pub noise_sd: f64,
    /// Inputs are drawn uniformly from `[lo, gap.0] ∪ [gap.1, hi]`.
    pub range: (f64, f64),
    pub gap: (f64, f64),
    pub omega: f64,
    pub slope: f64,
    pub seed: u64,
}

impl Default for SinusoidSpec {
    fn default() -> Self {
        Self {
            n: 150,
            noise_sd: 0.2,
            range: (0.0, 8.0),
            gap: (3.0, 5.0),
            omega: 2.0,
            slope: 0.3,
            seed: 0,
        }
    }
}

impl SinusoidSpec {
    pub fn truth(&self, x: f64) -> f64 {
        (self.omega * x).sin() + self.slope * x
    }
}

pub fn gen_sinusoid(spec: &SinusoidSpec) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = spec.range;
    let (a, b) = spec.gap;
    let left = (a - lo).max(0.0);
    let right = (hi - b).max(0.0);
    let noise = Normal::new(0.0, spec.noise_sd.max(0.0)).expect("finite noise scale");
    let mut xs = Vec::with_capacity(spec.n);
    let mut ys = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let u = rng.random_range(0.0..left + right);
        let x = if u < left { lo + u } else { b + (u - left) };
        let eps = if spec.noise_sd > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        xs.push(x);
        ys.push(spec.truth(x) + eps);
    }
    Dataset::new(Matrix::column(&xs), Targets::Real(Matrix::column(&ys)))
        .expect("generated data is consistent")
}

/// Two interleaved crescents in the plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BananaSpec {
    pub n: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for BananaSpec {
    fn default() -> Self {
        Self {
            n: 265,
            noise: 0.35,
            seed: 0,
        }
    }
}

/// Class 0 lies on the upper arc of a unit circle, class 1 on a shifted
/// lower arc; isotropic Gaussian noise is added to both. Classes alternate so
/// their counts differ by at most one.
pub fn gen_banana(spec: &BananaSpec) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise.max(0.0)).expect("finite noise scale");
    let mut x = Matrix::zeros(spec.n, 2);
    let mut labels = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let class = i % 2;
        let t = rng.random_range(0.0..PI);
        let (px, py) = if class == 0 {
            (t.cos(), t.sin())
        } else {
            (1.0 - t.cos(), 0.5 - t.sin())
        };
        let (ex, ey) = if spec.noise > 0.0 {
            (noise.sample(&mut rng), noise.sample(&mut rng))
        } else {
            (0.0, 0.0)
        };
        x[(i, 0)] = px + ex;
        x[(i, 1)] = py + ey;
        labels.push(class);
    }
    Dataset::new(x, Targets::Class(labels)).expect("generated data is consistent")
}
