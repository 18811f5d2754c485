//! Feature-space augmentation: perturb a genuine vector under a Gaussian
//! filter whose standard deviation is drawn uniformly from [σ_min, σ_max].
//!
//! The filter G(x) = exp(-x²/2σ²) / (√(2π)σ) is sampled at integer offsets,
//! truncated at radius ⌈4σ⌉ and renormalized to sum 1, so convolution
//! preserves constant vectors exactly. Two perturbation modes exist: SMOOTH
//! convolves the vector itself (the default), NOISE adds filtered white
//! noise scaled by σ.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{abs_silhouette, Cluster, FeatureVector};
use crate::swarm::{ParamKind, ParameterVector};

/// How a draw of σ turns a genuine vector into a synthetic one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbMode {
    /// Convolve the vector with the Gaussian kernel (reflect padding).
    #[default]
    Smooth,
    /// Add white standard-normal noise convolved with the kernel, scaled by σ.
    Noise,
}

/// Unnormalized Gaussian density at integer offset `x`.
pub fn gaussian(x: f64, sigma: f64) -> f64 {
    (-(x * x) / (2.0 * sigma * sigma)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * sigma)
}

/// Samples the Gaussian at x ∈ [-radius, radius] and renormalizes to sum 1.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Result<Vec<f64>> {
    if sigma <= 0.0 {
        return Err(Error::NonPositiveSigma { sigma });
    }
    if radius < 1 {
        return Err(Error::InvalidKernelRadius { radius });
    }
    let mut weights: Vec<f64> = (-(radius as i64)..=radius as i64)
        .map(|x| gaussian(x as f64, sigma))
        .collect();
    let sum: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= sum;
    }
    Ok(weights)
}

/// Truncation radius ⌈4σ⌉, at least 1; captures > 99.99% of the mass.
pub fn kernel_radius(sigma: f64) -> usize {
    ((4.0 * sigma).ceil() as usize).max(1)
}

/// Reflect-pad index lookup: mirrors with edge duplication, (d c b a | a b c d | d c b a).
fn reflect(idx: i64, len: usize) -> usize {
    let len = len as i64;
    let mut i = idx;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= len {
            i = 2 * len - i - 1;
        } else {
            return i as usize;
        }
    }
}

fn convolve_reflect(values: &[f64], kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as i64;
    (0..values.len() as i64)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * values[reflect(i + k as i64 - radius, values.len())])
                .sum()
        })
        .collect()
}

/// Generates `n` synthetic vectors from `v`. Each output draws its own
/// σ ~ U[σ_min, σ_max] and then applies `mode`.
pub fn perturb_features(
    v: &FeatureVector,
    params: &ParameterVector,
    n: usize,
    mode: PerturbMode,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<FeatureVector>> {
    if params.kind() != ParamKind::Gaussian {
        return Err(Error::InvalidParameters {
            reason: format!("expected gaussian parameters, got {:?}", params.kind()),
        });
    }
    let (sigma_min, sigma_max) = (params.values()[0], params.values()[1]);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let sigma = if sigma_min == sigma_max {
            sigma_min
        } else {
            rng.gen_range(sigma_min..=sigma_max)
        };
        let kernel = gaussian_kernel(sigma, kernel_radius(sigma))?;
        let values = match mode {
            PerturbMode::Smooth => convolve_reflect(v.values(), &kernel),
            PerturbMode::Noise => {
                let noise: Vec<f64> = (0..v.dim()).map(|_| rng.sample(StandardNormal)).collect();
                let correlated = convolve_reflect(&noise, &kernel);
                v.values()
                    .iter()
                    .zip(&correlated)
                    .map(|(x, e)| x + sigma * e)
                    .collect()
            }
        };
        out.push(FeatureVector::new(values)?);
    }
    Ok(out)
}

/// Fitness of a Gaussian parameter vector for one writer: generate `n_per`
/// synthetic vectors per genuine vector, then |Δ| between the genuine and
/// synthetic clusters.
pub fn eval_params_feature(
    params: &ParameterVector,
    genuine: &[FeatureVector],
    n_per: usize,
    mode: PerturbMode,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut synthetic = Vec::with_capacity(genuine.len() * n_per);
    for v in genuine {
        synthetic.extend(perturb_features(v, params, n_per, mode, rng)?);
    }
    let clusters = [
        Cluster::new("genuine", genuine.to_vec()),
        Cluster::new("synthetic", synthetic),
    ];
    abs_silhouette(&clusters)
}
