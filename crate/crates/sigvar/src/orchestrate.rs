//! End-to-end parameter optimization: run the swarm once per writer with the
//! chosen evaluator as fitness, average the per-writer optima, and persist
//! parameter files with provenance.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::feature::{eval_params_feature, PerturbMode};
use crate::augment::image::eval_params_image_cached;
use crate::error::{Error, Result};
use crate::evaluate::config_fingerprint;
use crate::features::FeatureExtractor;
use crate::ingest::mix_seed;
use crate::metrics::FeatureVector;
use crate::preprocess::normalize_signature;
use crate::raster::SignatureImage;
use crate::swarm::{optimize, ParamKind, ParameterVector};

/// One writer's genuine material, in whichever space the fitness needs.
#[derive(Debug, Clone)]
pub enum WriterData {
    Images(Vec<SignatureImage>),
    Vectors(Vec<FeatureVector>),
}

#[derive(Debug, Clone)]
pub struct WriterSet {
    pub writer_id: u32,
    pub data: WriterData,
}

impl WriterSet {
    fn len(&self) -> usize {
        match &self.data {
            WriterData::Images(v) => v.len(),
            WriterData::Vectors(v) => v.len(),
        }
    }
}

/// Which evaluator scores a candidate parameter vector.
pub enum FitnessMode<'a> {
    /// Duplicate images, normalize, extract, silhouette.
    Image {
        extractor: &'a dyn FeatureExtractor,
        canvas: (u32, u32),
    },
    /// Perturb feature vectors with the Gaussian filter, silhouette.
    Feature { mode: PerturbMode },
}

impl FitnessMode<'_> {
    pub fn kind(&self) -> ParamKind {
        match self {
            FitnessMode::Image { .. } => ParamKind::Duplicator,
            FitnessMode::Feature { .. } => ParamKind::Gaussian,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizeSettings {
    /// Synthetic samples per genuine sample inside each fitness evaluation.
    pub n_per: usize,
    pub iterations: usize,
    pub particles: usize,
    pub seed: u64,
    /// Skip writers that fail their preconditions instead of aborting.
    pub skip_failed: bool,
}

impl Default for OptimizeSettings {
    fn default() -> Self {
        OptimizeSettings {
            n_per: 1,
            iterations: 40,
            particles: 30,
            seed: 0,
            skip_failed: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WriterOptimum {
    pub best: ParameterVector,
    pub fitness: f64,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub per_writer: BTreeMap<u32, WriterOptimum>,
    /// Componentwise arithmetic mean of the per-writer optima; ordered pairs
    /// stay ordered under averaging.
    pub average: ParameterVector,
}

/// Optimizes every writer independently and averages the optima. Per-writer
/// seeds derive from the master seed and the writer id, so results are
/// independent of scheduling and of which other writers are present.
pub fn sigvar_optimize(
    writers: &[WriterSet],
    mode: &FitnessMode<'_>,
    settings: &OptimizeSettings,
) -> Result<OptimizationResult> {
    if writers.is_empty() {
        return Err(Error::Manifest("no writers to optimize".into()));
    }
    let kind = mode.kind();

    let outcomes: Vec<(u32, Result<WriterOptimum>)> = writers
        .par_iter()
        .map(|writer| (writer.writer_id, optimize_writer(writer, mode, settings)))
        .collect();

    let mut per_writer = BTreeMap::new();
    for (id, outcome) in outcomes {
        match outcome {
            Ok(optimum) => {
                per_writer.insert(id, optimum);
            }
            Err(err) if settings.skip_failed => {
                log::warn!("skipping writer {id}: {err}");
            }
            Err(err) => return Err(err),
        }
    }
    if per_writer.is_empty() {
        return Err(Error::Manifest("every writer failed optimization".into()));
    }

    let dim = kind.dim();
    let mut mean = vec![0.0; dim];
    for optimum in per_writer.values() {
        for (m, v) in mean.iter_mut().zip(optimum.best.values()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= per_writer.len() as f64;
    }
    let average = ParameterVector::new(kind, mean)?;

    Ok(OptimizationResult {
        per_writer,
        average,
    })
}

fn optimize_writer(
    writer: &WriterSet,
    mode: &FitnessMode<'_>,
    settings: &OptimizeSettings,
) -> Result<WriterOptimum> {
    if writer.len() < 2 {
        return Err(Error::InsufficientSamples {
            writer: writer.writer_id,
            reason: format!(
                "optimization needs at least 2 genuine samples, have {}",
                writer.len()
            ),
        });
    }
    let seed = mix_seed(settings.seed, writer.writer_id as u64);

    let outcome = match (mode, &writer.data) {
        (FitnessMode::Feature { mode }, data) => {
            // Feature-space fitness normalizes and extracts once up front;
            // the vectors do not change between candidate evaluations.
            let vectors = match data {
                WriterData::Vectors(v) => v.clone(),
                WriterData::Images(_) => {
                    return Err(Error::InvalidParameters {
                        reason: "feature-mode optimization needs feature vectors".into(),
                    })
                }
            };
            let n_per = settings.n_per;
            let mode = *mode;
            optimize(
                move |params, rng| eval_params_feature(params, &vectors, n_per, mode, rng),
                ParamKind::Gaussian,
                settings.iterations,
                settings.particles,
                seed,
            )?
        }
        (FitnessMode::Image { extractor, canvas }, WriterData::Images(images)) => {
            let genuine_features: Vec<FeatureVector> = images
                .iter()
                .map(|img| extractor.extract(&normalize_signature(img, *canvas)?))
                .collect::<Result<_>>()?;
            let n_per = settings.n_per;
            optimize(
                move |params, rng| {
                    eval_params_image_cached(
                        params,
                        images,
                        &genuine_features,
                        n_per,
                        *extractor,
                        *canvas,
                        rng,
                    )
                },
                ParamKind::Duplicator,
                settings.iterations,
                settings.particles,
                seed,
            )?
        }
        (FitnessMode::Image { .. }, WriterData::Vectors(_)) => {
            return Err(Error::InvalidParameters {
                reason: "image-mode optimization needs raw images".into(),
            })
        }
    };

    Ok(WriterOptimum {
        best: outcome.best,
        fitness: outcome.best_fitness,
        trace: outcome.trace,
    })
}

/// JSON parameter-file keys per kind.
pub fn parameter_keys(kind: ParamKind) -> &'static [&'static str] {
    match kind {
        ParamKind::Duplicator => &[
            "alpha_A_min",
            "alpha_A_max",
            "alpha_P_min",
            "alpha_P_max",
            "alpha_S_min",
            "alpha_S_max",
        ],
        ParamKind::Gaussian => &["sigma_min", "sigma_max"],
    }
}

fn to_named(params: &ParameterVector) -> BTreeMap<String, f64> {
    parameter_keys(params.kind())
        .iter()
        .zip(params.values())
        .map(|(k, v)| (k.to_string(), *v))
        .collect()
}

fn from_named(kind: ParamKind, named: &BTreeMap<String, f64>) -> Result<ParameterVector> {
    let values = parameter_keys(kind)
        .iter()
        .map(|k| {
            named
                .get(*k)
                .copied()
                .ok_or_else(|| Error::InvalidParameters {
                    reason: format!("missing parameter key `{k}`"),
                })
        })
        .collect::<Result<Vec<f64>>>()?;
    ParameterVector::new(kind, values)
}

pub const PARAMS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub seed: u64,
    pub iterations: usize,
    pub particles: usize,
    pub n_per: usize,
    pub mode: String,
    pub fingerprint: String,
}

/// On-disk parameter file: the averaged vector under its symbol names,
/// per-writer optima, passthrough defaults for the external duplicator, and
/// run provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsFile {
    pub schema_version: u32,
    pub kind: ParamKind,
    pub average: BTreeMap<String, f64>,
    #[serde(default)]
    pub passthrough: BTreeMap<String, f64>,
    #[serde(default)]
    pub per_writer: BTreeMap<String, WriterEntry>,
    #[serde(default)]
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WriterEntry {
    pub values: BTreeMap<String, f64>,
    pub fitness: f64,
    pub trace: Vec<f64>,
}

impl ParamsFile {
    pub fn from_result(
        result: &OptimizationResult,
        provenance: Provenance,
        passthrough: &[(String, f64)],
    ) -> ParamsFile {
        ParamsFile {
            schema_version: PARAMS_SCHEMA_VERSION,
            kind: result.average.kind(),
            average: to_named(&result.average),
            passthrough: passthrough.iter().cloned().collect(),
            per_writer: result
                .per_writer
                .iter()
                .map(|(id, optimum)| {
                    (
                        id.to_string(),
                        WriterEntry {
                            values: to_named(&optimum.best),
                            fitness: optimum.fitness,
                            trace: optimum.trace.clone(),
                        },
                    )
                })
                .collect(),
            provenance,
        }
    }

    /// A parameter file holding a bare vector with no per-writer history.
    pub fn from_vector(params: &ParameterVector, passthrough: &[(String, f64)]) -> ParamsFile {
        ParamsFile {
            schema_version: PARAMS_SCHEMA_VERSION,
            kind: params.kind(),
            average: to_named(params),
            passthrough: passthrough.iter().cloned().collect(),
            per_writer: BTreeMap::new(),
            provenance: Provenance::default(),
        }
    }

    pub fn average_vector(&self) -> Result<ParameterVector> {
        from_named(self.kind, &self.average)
    }

    pub fn to_result(&self) -> Result<OptimizationResult> {
        let mut per_writer = BTreeMap::new();
        for (id, entry) in &self.per_writer {
            let id: u32 = id.parse().map_err(|_| Error::InvalidParameters {
                reason: format!("bad writer id `{id}` in parameter file"),
            })?;
            per_writer.insert(
                id,
                WriterOptimum {
                    best: from_named(self.kind, &entry.values)?,
                    fitness: entry.fitness,
                    trace: entry.trace.clone(),
                },
            );
        }
        Ok(OptimizationResult {
            per_writer,
            average: self.average_vector()?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ParamsFile> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        // Check the version before full deserialization so future files
        // fail with the version message rather than a shape error.
        let probe: serde_json::Value = serde_json::from_str(&text)?;
        let found = probe
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .unwrap_or(0) as u32;
        if found > PARAMS_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found,
                supported: PARAMS_SCHEMA_VERSION,
            });
        }
        Ok(serde_json::from_str(&text)?)
    }
}

/// Persists an optimization result with provenance derived from settings.
pub fn save_parameters(
    result: &OptimizationResult,
    settings: &OptimizeSettings,
    mode_name: &str,
    path: &Path,
) -> Result<()> {
    let provenance = Provenance {
        seed: settings.seed,
        iterations: settings.iterations,
        particles: settings.particles,
        n_per: settings.n_per,
        mode: mode_name.to_string(),
        fingerprint: config_fingerprint(settings),
    };
    let passthrough = if result.average.kind() == ParamKind::Duplicator {
        crate::defaults::default_passthrough()
    } else {
        Vec::new()
    };
    ParamsFile::from_result(result, provenance, &passthrough).save(path)
}

/// Loads a parameter file back into an optimization result.
pub fn load_parameters(path: &Path) -> Result<OptimizationResult> {
    ParamsFile::load(path)?.to_result()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vector_writer(id: u32, n: usize, center: f64, spread: f64) -> WriterSet {
        let mut rng = ChaCha8Rng::seed_from_u64(id as u64);
        WriterSet {
            writer_id: id,
            data: WriterData::Vectors(
                (0..n)
                    .map(|_| {
                        FeatureVector::new(
                            (0..16)
                                .map(|_| center + rng.gen_range(-spread..spread))
                                .collect(),
                        )
                        .unwrap()
                    })
                    .collect(),
            ),
        }
    }

    fn quick_settings(seed: u64) -> OptimizeSettings {
        OptimizeSettings {
            n_per: 1,
            iterations: 8,
            particles: 6,
            seed,
            skip_failed: false,
        }
    }

    #[test]
    fn single_writer_average_equals_its_optimum() {
        let writers = vec![vector_writer(3, 6, 0.0, 0.3)];
        let result = sigvar_optimize(
            &writers,
            &FitnessMode::Feature {
                mode: PerturbMode::Smooth,
            },
            &quick_settings(1),
        )
        .unwrap();
        assert_eq!(result.per_writer.len(), 1);
        assert_eq!(result.average.values(), result.per_writer[&3].best.values());
    }

    #[test]
    fn identical_writers_with_identical_seeds_share_optima() {
        // Same data and same derived seed stream: the mean equals each
        // writer's optimum. Forcing equal per-writer seeds means using the
        // same writer id, so run two one-writer optimizations.
        let a = sigvar_optimize(
            &[vector_writer(9, 5, 1.0, 0.2)],
            &FitnessMode::Feature {
                mode: PerturbMode::Smooth,
            },
            &quick_settings(4),
        )
        .unwrap();
        let b = sigvar_optimize(
            &[vector_writer(9, 5, 1.0, 0.2)],
            &FitnessMode::Feature {
                mode: PerturbMode::Smooth,
            },
            &quick_settings(4),
        )
        .unwrap();
        assert_eq!(a.average.values(), b.average.values());
    }

    #[test]
    fn removing_a_writer_leaves_others_unchanged() {
        let w1 = vector_writer(1, 5, 0.0, 0.25);
        let w2 = vector_writer(2, 5, 2.0, 0.4);
        let mode = FitnessMode::Feature {
            mode: PerturbMode::Smooth,
        };
        let both = sigvar_optimize(&[w1.clone(), w2.clone()], &mode, &quick_settings(11)).unwrap();
        let solo = sigvar_optimize(&[w1], &mode, &quick_settings(11)).unwrap();
        assert_eq!(
            both.per_writer[&1].best.values(),
            solo.per_writer[&1].best.values()
        );
        assert_eq!(both.per_writer[&1].trace, solo.per_writer[&1].trace);
    }

    #[test]
    fn average_preserves_pair_ordering() {
        let writers: Vec<WriterSet> = (1..=4)
            .map(|id| vector_writer(id, 5, id as f64 * 0.5, 0.3))
            .collect();
        let result = sigvar_optimize(
            &writers,
            &FitnessMode::Feature {
                mode: PerturbMode::Smooth,
            },
            &quick_settings(2),
        )
        .unwrap();
        let v = result.average.values();
        assert!(v[0] <= v[1]);
    }

    #[test]
    fn too_few_samples_abort_or_skip() {
        let tiny = WriterSet {
            writer_id: 8,
            data: WriterData::Vectors(vec![FeatureVector::new(vec![0.0; 4]).unwrap()]),
        };
        let mode = FitnessMode::Feature {
            mode: PerturbMode::Smooth,
        };
        let err =
            sigvar_optimize(std::slice::from_ref(&tiny), &mode, &quick_settings(0)).unwrap_err();
        assert!(matches!(err, Error::InsufficientSamples { writer: 8, .. }));

        let mut settings = quick_settings(0);
        settings.skip_failed = true;
        let ok = sigvar_optimize(&[tiny, vector_writer(9, 5, 0.0, 0.3)], &mode, &settings).unwrap();
        assert_eq!(ok.per_writer.len(), 1);
    }

    #[test]
    fn params_file_round_trip_is_lossless() {
        let writers = vec![vector_writer(1, 5, 0.0, 0.3), vector_writer(2, 5, 1.0, 0.2)];
        let settings = quick_settings(13);
        let result = sigvar_optimize(
            &writers,
            &FitnessMode::Feature {
                mode: PerturbMode::Smooth,
            },
            &settings,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.json");
        save_parameters(&result, &settings, "feature", &path).unwrap();
        let back = load_parameters(&path).unwrap();
        assert_eq!(back.average.values(), result.average.values());
        assert_eq!(back.per_writer.len(), result.per_writer.len());
        for (id, optimum) in &result.per_writer {
            let loaded = &back.per_writer[id];
            assert_eq!(loaded.best.values(), optimum.best.values());
            assert_eq!(loaded.fitness, optimum.fitness);
            assert_eq!(loaded.trace, optimum.trace);
        }
    }

    #[test]
    fn future_schema_version_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("future.json");
        std::fs::write(
            &path,
            r#"{"schema_version": 99, "kind": "gaussian", "average": {}}"#,
        )
        .unwrap();
        assert!(matches!(
            ParamsFile::load(&path),
            Err(Error::SchemaVersion { found: 99, .. })
        ));
    }

    #[test]
    fn default_parameter_file_matches_published_values() {
        let config = crate::defaults::default_duplicator_config();
        let file = ParamsFile::from_vector(&config.variability, &config.passthrough);
        assert_eq!(file.average["alpha_A_min"], 5.0);
        assert_eq!(file.average["alpha_A_max"], 30.0);
        assert_eq!(file.average["alpha_P_min"], 0.5);
        assert_eq!(file.average["alpha_P_max"], 1.0);
        assert_eq!(file.average["alpha_S_min"], 0.0);
        assert_eq!(file.average["alpha_S_max"], 1.0);
        assert_eq!(file.passthrough.len(), 24);
        assert_eq!(file.passthrough["psi"], 0.8);
    }

    #[test]
    fn image_mode_rejects_vector_data() {
        let writers = vec![vector_writer(1, 4, 0.0, 0.2)];
        let err = sigvar_optimize(
            &writers,
            &FitnessMode::Image {
                extractor: &crate::features::GridDescriptor,
                canvas: (100, 100),
            },
            &quick_settings(0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidParameters { .. }));
    }
}
