//! Seeded two-moons samples and their rotated copies.
//!
//! Class 1 lies on the upper arc `(cos θ, sin θ)`, class 2 on the lower arc
//! `(1 − cos θ, 0.5 − sin θ)`, with `θ` on a uniform grid over `[0, π]`.
//! Isotropic Gaussian noise is the only random ingredient. Each draw uses its
//! own ChaCha stream, so step `t` of a sequence does not depend on how many
//! other steps were generated.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{OtError, Result};
use crate::measure::LabeledPointCloud;

pub const DEFAULT_NOISE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MoonsParams {
    pub n_samples: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl MoonsParams {
    pub fn new(n_samples: usize, noise_sigma: f64, seed: u64) -> Result<Self> {
        let params = Self {
            n_samples,
            noise_sigma,
            seed,
        };
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(OtError::InvalidParameter(format!(
                "two moons needs at least 2 samples, got {}",
                self.n_samples
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(OtError::InvalidParameter(format!(
                "noise must be nonnegative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

fn grid(count: usize) -> impl Iterator<Item = f64> {
    let step = if count > 1 { PI / (count - 1) as f64 } else { 0.0 };
    (0..count).map(move |k| k as f64 * step)
}

/// Two-moons draw from stream 0 of `params.seed`.
pub fn two_moons(params: &MoonsParams) -> Result<LabeledPointCloud> {
    two_moons_stream(params, 0)
}

/// Two-moons draw from an explicit ChaCha stream of `params.seed`.
pub fn two_moons_stream(params: &MoonsParams, stream: u64) -> Result<LabeledPointCloud> {
    params.validate()?;
    let n = params.n_samples;
    let upper = n.div_ceil(2);
    let lower = n / 2;
    let mut points = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for (i, theta) in grid(upper).enumerate() {
        points[[i, 0]] = theta.cos();
        points[[i, 1]] = theta.sin();
        labels.push(1);
    }
    for (i, theta) in grid(lower).enumerate() {
        points[[upper + i, 0]] = 1.0 - theta.cos();
        points[[upper + i, 1]] = 0.5 - theta.sin();
        labels.push(2);
    }
    if params.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(stream);
        let normal = Normal::new(0.0, params.noise_sigma)
            .map_err(|e| OtError::InvalidParameter(e.to_string()))?;
        points.mapv_inplace(|x| x + normal.sample(&mut rng));
    }
    LabeledPointCloud::new(points, Some(labels))
}

/// Rotates a planar cloud about the origin, counter-clockwise by `angle_deg`.
pub fn rotate_cloud(cloud: &LabeledPointCloud, angle_deg: f64) -> Result<LabeledPointCloud> {
    if cloud.dim() != 2 {
        return Err(crate::error::shape_mismatch("rotate_cloud dimension", 2, cloud.dim()));
    }
    let (s, c) = angle_deg.to_radians().sin_cos();
    let mut points = cloud.points().to_owned();
    for mut p in points.outer_iter_mut() {
        let (x, y) = (p[0], p[1]);
        p[0] = x * c - y * s;
        p[1] = x * s + y * c;
    }
    LabeledPointCloud::new(points, cloud.labels().map(<[usize]>::to_vec))
}

/// Fresh draws for steps `t = 1..=n_steps`, each rotated by `t · step_deg`.
pub fn target_sequence(
    params: &MoonsParams,
    n_steps: usize,
    step_deg: f64,
    per_step_samples: usize,
) -> Result<Vec<LabeledPointCloud>> {
    let step_params = MoonsParams {
        n_samples: per_step_samples,
        ..*params
    };
    (1..=n_steps)
        .map(|t| {
            let cloud = two_moons_stream(&step_params, t as u64)?;
            rotate_cloud(&cloud, t as f64 * step_deg)
        })
        .collect()
}
