//! Image-space duplication: a sinusoidal-surface deformation driven by the
//! six variability parameters, plus an adapter shelling out to an external
//! full duplicator executable.
//!
//! Per duplicate the deformation draws amplitude A, period P and phases
//! (Sx, Sy) from their parameter intervals and displaces with
//!
//! ```text
//! dx(x, y) = (W / A) * sin(2*pi*y / (P*H) + 2*pi*Sx)
//! dy(x, y) = (H / A) * sin(2*pi*x / (P*W) + 2*pi*Sy)
//! ```
//!
//! so displacement magnitude is proportional to 1/A: amplitudes of 10 or
//! more flex the writing surface gently, and very large amplitudes leave the
//! seed image unchanged. Resampling is bilinear with background fill.

use std::path::PathBuf;
use std::process::Command;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::metrics::{abs_silhouette, Cluster, FeatureVector};
use crate::preprocess::normalize_signature;
use crate::raster::SignatureImage;
use crate::swarm::{ParamKind, ParameterVector};

/// Full duplicator configuration: the six optimizable variability parameters
/// natively applied, and the remaining parameters carried as opaque
/// passthrough for an external duplicator executable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DuplicatorConfig {
    pub variability: ParameterVector,
    /// Ordered (name, value) list of the non-variability parameters;
    /// honored only by the external adapter.
    pub passthrough: Vec<(String, f64)>,
    /// When set, `duplicate` shells out instead of deforming natively.
    #[serde(default)]
    pub external: Option<ExternalDuplicator>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExternalDuplicator {
    pub exe: PathBuf,
}

fn period_floor(p: f64) -> f64 {
    // The period parameter may reach 0 at its box edge; the displacement
    // formula divides by it.
    p.max(1e-6)
}

/// Applies one random sinusoidal deformation. Draw order: A, P, Sx, Sy.
pub fn sinusoidal_deform(
    img: &SignatureImage,
    variability: &ParameterVector,
    rng: &mut ChaCha8Rng,
) -> Result<SignatureImage> {
    if variability.kind() != ParamKind::Duplicator {
        return Err(Error::InvalidParameters {
            reason: format!(
                "expected duplicator parameters, got {:?}",
                variability.kind()
            ),
        });
    }
    let v = variability.values();
    let draw = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| -> f64 {
        if lo == hi {
            lo
        } else {
            rng.gen_range(lo..=hi)
        }
    };
    let amplitude = draw(rng, v[0], v[1]);
    let period = period_floor(draw(rng, v[2], v[3]));
    let phase_x = draw(rng, v[4], v[5]);
    let phase_y = draw(rng, v[4], v[5]);

    let w = img.width() as f64;
    let h = img.height() as f64;
    let tau = 2.0 * std::f64::consts::PI;
    let mut pixels = Vec::with_capacity((img.width() * img.height()) as usize);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let dx = (w / amplitude) * (tau * y as f64 / (period * h) + tau * phase_x).sin();
            let dy = (h / amplitude) * (tau * x as f64 / (period * w) + tau * phase_y).sin();
            let value = img.sample_bilinear(x as f64 + dx, y as f64 + dy);
            pixels.push(value.round().clamp(0.0, 255.0) as u8);
        }
    }
    SignatureImage::new(img.width(), img.height(), pixels, img.polarity())
}

/// Generates `n` duplicates of `img`, natively or through the external
/// adapter when one is configured.
pub fn duplicate(
    img: &SignatureImage,
    config: &DuplicatorConfig,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<SignatureImage>> {
    if let Some(external) = &config.external {
        return duplicate_external(img, config, external, n, rng);
    }
    (0..n)
        .map(|_| sinusoidal_deform(img, &config.variability, rng))
        .collect()
}

/// Invocation contract: `<exe> --params <file> --input <png> --output-dir
/// <dir> --count N --seed S`, where the params file is the flat `key=value`
/// list of every duplicator parameter. Nonzero exit is a failure; the
/// adapter must leave exactly N PNG files in the output directory.
fn duplicate_external(
    img: &SignatureImage,
    config: &DuplicatorConfig,
    external: &ExternalDuplicator,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<SignatureImage>> {
    let dir = tempfile::tempdir().map_err(|e| Error::Adapter(format!("tempdir: {e}")))?;
    let params_path = dir.path().join("params.txt");
    let input_path = dir.path().join("input.png");
    let out_dir = dir.path().join("out");
    std::fs::create_dir(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let mut params = String::new();
    let names = [
        "alpha_A_min",
        "alpha_A_max",
        "alpha_P_min",
        "alpha_P_max",
        "alpha_S_min",
        "alpha_S_max",
    ];
    for (name, value) in names.iter().zip(config.variability.values()) {
        params.push_str(&format!("{name}={value}\n"));
    }
    for (name, value) in &config.passthrough {
        params.push_str(&format!("{name}={value}\n"));
    }
    std::fs::write(&params_path, params).map_err(|e| Error::io(&params_path, e))?;
    img.write_png(&input_path)?;

    let seed: u64 = rng.gen();
    let output = Command::new(&external.exe)
        .arg("--params")
        .arg(&params_path)
        .arg("--input")
        .arg(&input_path)
        .arg("--output-dir")
        .arg(&out_dir)
        .arg("--count")
        .arg(n.to_string())
        .arg("--seed")
        .arg(seed.to_string())
        .output()
        .map_err(|e| Error::Adapter(format!("failed to spawn {}: {e}", external.exe.display())))?;
    if !output.status.success() {
        return Err(Error::Adapter(format!(
            "{} exited with {}: {}",
            external.exe.display(),
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }

    let mut paths: Vec<PathBuf> = std::fs::read_dir(&out_dir)
        .map_err(|e| Error::io(&out_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .collect();
    paths.sort();
    if paths.len() != n {
        return Err(Error::Adapter(format!(
            "expected {n} output images, found {}",
            paths.len()
        )));
    }
    paths.iter().map(|p| SignatureImage::read_png(p)).collect()
}

/// Fitness of a duplicator parameter vector for one writer: duplicate each
/// genuine image `n_per` times, normalize everything, extract features, and
/// return |Δ| between the genuine and duplicate clusters.
pub fn eval_params_image(
    variability: &ParameterVector,
    genuine: &[SignatureImage],
    n_per: usize,
    extractor: &dyn FeatureExtractor,
    canvas: (u32, u32),
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let genuine_features = genuine
        .iter()
        .map(|img| extractor.extract(&normalize_signature(img, canvas)?))
        .collect::<Result<Vec<_>>>()?;
    eval_params_image_cached(
        variability,
        genuine,
        &genuine_features,
        n_per,
        extractor,
        canvas,
        rng,
    )
}

/// `eval_params_image` with the genuine features precomputed; the genuine
/// images do not change between candidate evaluations, so optimization
/// drivers hoist their normalization out of the fitness loop.
pub fn eval_params_image_cached(
    variability: &ParameterVector,
    genuine: &[SignatureImage],
    genuine_features: &[FeatureVector],
    n_per: usize,
    extractor: &dyn FeatureExtractor,
    canvas: (u32, u32),
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut duplicate_features = Vec::with_capacity(genuine.len() * n_per);
    for img in genuine {
        for _ in 0..n_per {
            let deformed = sinusoidal_deform(img, variability, rng)?;
            duplicate_features.push(extractor.extract(&normalize_signature(&deformed, canvas)?)?);
        }
    }
    let clusters = [
        Cluster::new("genuine", genuine_features.to_vec()),
        Cluster::new("duplicate", duplicate_features),
    ];
    abs_silhouette(&clusters)
}
