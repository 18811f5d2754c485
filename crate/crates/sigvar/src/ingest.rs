//! Dataset manifests and loading: map on-disk signature collections to
//! per-writer sample sets with genuine/skilled labeling and the dataset's
//! normalization canvas.
//!
//! Manifest JSON:
//!
//! ```json
//! {
//!   "name": "my-dataset",
//!   "canvas": [952, 1360],
//!   "expected": { "genuine": 24, "skilled": 30 },
//!   "writers": [
//!     { "id": 1, "genuine": ["w001/g-01.png"], "skilled": ["w001/s-01.png"] }
//!   ]
//! }
//! ```
//!
//! Paths are relative to the manifest file. `expected` is optional; when
//! present every writer must list exactly those counts.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, SampleLabel, VectorStore};
use crate::metrics::FeatureVector;
use crate::preprocess::normalize_signature;
use crate::raster::SignatureImage;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub name: String,
    /// Normalization window as (height, width). May be omitted when the
    /// dataset name identifies a known collection with a standard window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canvas: Option<(u32, u32)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<ExpectedCounts>,
    pub writers: Vec<ManifestWriter>,
}

/// Standard normalization windows, keyed by substring of the dataset name.
pub fn canvas_preset(name: &str) -> Option<(u32, u32)> {
    let lower = name.to_lowercase();
    if lower.contains("gpds") {
        Some((952, 1360))
    } else if lower.contains("cedar") {
        Some((730, 1042))
    } else if lower.contains("mcyt") {
        Some((600, 850))
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExpectedCounts {
    pub genuine: usize,
    pub skilled: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestWriter {
    pub id: u32,
    pub genuine: Vec<PathBuf>,
    #[serde(default)]
    pub skilled: Vec<PathBuf>,
}

/// A validated manifest with its root directory and canvas resolved.
#[derive(Debug, Clone)]
pub struct DatasetHandle {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub canvas: (u32, u32),
}

/// Loads and validates a manifest: unique writer ids, files present,
/// declared counts honored, canvas resolved (explicit or by preset).
pub fn load_manifest(path: &Path) -> Result<DatasetHandle> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let root = path
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from("."));

    let canvas = manifest
        .canvas
        .or_else(|| canvas_preset(&manifest.name))
        .ok_or_else(|| {
            Error::Manifest(format!(
                "manifest `{}` declares no canvas and matches no known dataset",
                manifest.name
            ))
        })?;
    if manifest.writers.is_empty() {
        return Err(Error::Manifest("no writers declared".into()));
    }
    let mut seen = BTreeSet::new();
    for w in &manifest.writers {
        if !seen.insert(w.id) {
            return Err(Error::Manifest(format!("duplicate writer id {}", w.id)));
        }
        if let Some(expected) = manifest.expected {
            if w.genuine.len() != expected.genuine {
                return Err(Error::Manifest(format!(
                    "writer {}: declared {} genuine, listed {}",
                    w.id,
                    expected.genuine,
                    w.genuine.len()
                )));
            }
            if w.skilled.len() != expected.skilled {
                return Err(Error::Manifest(format!(
                    "writer {}: declared {} skilled, listed {}",
                    w.id,
                    expected.skilled,
                    w.skilled.len()
                )));
            }
        }
        for rel in w.genuine.iter().chain(&w.skilled) {
            let p = root.join(rel);
            if !p.is_file() {
                return Err(Error::Manifest(format!(
                    "writer {}: missing file {}",
                    w.id,
                    p.display()
                )));
            }
        }
    }
    Ok(DatasetHandle {
        root,
        manifest,
        canvas,
    })
}

/// One sample ready for the pipeline: its feature vector, and the raw scan
/// when image-space augmentation needs a seed image.
#[derive(Debug, Clone)]
pub struct Sample {
    pub vector: FeatureVector,
    pub raw: Option<SignatureImage>,
}

#[derive(Debug, Clone)]
pub struct PreparedWriter {
    pub id: u32,
    pub genuine: Vec<Sample>,
    pub skilled: Vec<Sample>,
}

#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub writers: Vec<PreparedWriter>,
}

impl DatasetHandle {
    /// Loads every image, normalizes it on the manifest canvas, and extracts
    /// features. `keep_raw` retains the original scans for image-space
    /// augmentation.
    pub fn prepare(
        &self,
        extractor: &dyn FeatureExtractor,
        keep_raw: bool,
    ) -> Result<PreparedDataset> {
        use rayon::prelude::*;
        let writers: Vec<Result<PreparedWriter>> = self
            .manifest
            .writers
            .par_iter()
            .map(|w| {
                let load = |rel: &PathBuf| -> Result<Sample> {
                    let img = SignatureImage::read_png(&self.root.join(rel))?;
                    let vector = extractor.extract(&normalize_signature(&img, self.canvas)?)?;
                    Ok(Sample {
                        vector,
                        raw: keep_raw.then_some(img),
                    })
                };
                Ok(PreparedWriter {
                    id: w.id,
                    genuine: w.genuine.iter().map(load).collect::<Result<_>>()?,
                    skilled: w.skilled.iter().map(load).collect::<Result<_>>()?,
                })
            })
            .collect();
        Ok(PreparedDataset {
            writers: writers.into_iter().collect::<Result<_>>()?,
        })
    }
}

/// Builds a prepared dataset from a precomputed vector store instead of
/// images; genuine records become genuine samples, skilled-forgery records
/// become the skilled set.
pub fn prepare_from_store(store: &VectorStore) -> Result<PreparedDataset> {
    let mut writers = Vec::new();
    for (id, records) in store.by_writer() {
        let mut genuine = Vec::new();
        let mut skilled = Vec::new();
        for r in records {
            let sample = Sample {
                vector: r.vector.clone(),
                raw: None,
            };
            match r.label {
                SampleLabel::Genuine => genuine.push(sample),
                SampleLabel::ForgerySkilled => skilled.push(sample),
                SampleLabel::ForgeryRandom => {}
            }
        }
        writers.push(PreparedWriter {
            id,
            genuine,
            skilled,
        });
    }
    if writers.is_empty() {
        return Err(Error::Manifest("store contains no writers".into()));
    }
    Ok(PreparedDataset { writers })
}

/// Split configuration for one repetition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Largest training-genuine count in the sweep; the permutation prefix
    /// up to this index is reserved for training.
    pub max_train_genuine: usize,
    pub test_genuine: usize,
    pub test_random: usize,
    pub test_skilled: usize,
    /// Random-forgery cap per contributing writer.
    pub negatives_per_writer: usize,
}

/// The per-writer index selection of one repetition. Indices point into the
/// writer's own sample lists; negatives and test-random entries are
/// (writer index, sample index) pairs into the dataset.
#[derive(Debug, Clone)]
pub struct WriterSplit {
    pub writer_id: u32,
    /// Permutation prefix: `train_genuine[..r]` trains a classifier with r
    /// genuine samples.
    pub train_genuine: Vec<usize>,
    pub test_genuine: Vec<usize>,
    pub test_skilled: Vec<usize>,
    pub negatives: Vec<(usize, usize)>,
    pub test_random: Vec<(usize, usize)>,
}

/// Draws one writer's split. The same writer never contributes to both its
/// own positives and its own random forgeries: negatives and test-random
/// samples come exclusively from the other writers' genuine lists.
pub fn split_writer(
    data: &PreparedDataset,
    writer_index: usize,
    cfg: &SplitConfig,
    rng: &mut ChaCha8Rng,
) -> Result<WriterSplit> {
    let writer = &data.writers[writer_index];
    let insufficient = |reason: String| Error::InsufficientSamples {
        writer: writer.id,
        reason,
    };

    let need_genuine = cfg.max_train_genuine + cfg.test_genuine;
    if writer.genuine.len() < need_genuine {
        return Err(insufficient(format!(
            "need {need_genuine} genuine samples (train {} + test {}), have {}",
            cfg.max_train_genuine,
            cfg.test_genuine,
            writer.genuine.len()
        )));
    }
    if writer.skilled.len() < cfg.test_skilled {
        return Err(insufficient(format!(
            "need {} skilled forgeries, have {}",
            cfg.test_skilled,
            writer.skilled.len()
        )));
    }

    let mut genuine_perm: Vec<usize> = (0..writer.genuine.len()).collect();
    genuine_perm.shuffle(rng);
    let train_genuine = genuine_perm[..cfg.max_train_genuine].to_vec();
    let test_genuine = genuine_perm[genuine_perm.len() - cfg.test_genuine..].to_vec();

    let mut skilled_perm: Vec<usize> = (0..writer.skilled.len()).collect();
    skilled_perm.shuffle(rng);
    let test_skilled = skilled_perm[..cfg.test_skilled].to_vec();

    // Training negatives: a capped random draw from each other writer, in
    // writer order; the remainder forms the test-random pool.
    let mut negatives = Vec::new();
    let mut random_pool = Vec::new();
    for (other_index, other) in data.writers.iter().enumerate() {
        if other_index == writer_index {
            continue;
        }
        let mut perm: Vec<usize> = (0..other.genuine.len()).collect();
        perm.shuffle(rng);
        let take = cfg.negatives_per_writer.min(perm.len());
        for &s in &perm[..take] {
            negatives.push((other_index, s));
        }
        for &s in &perm[take..] {
            random_pool.push((other_index, s));
        }
    }
    if negatives.is_empty() {
        return Err(insufficient("no random-forgery pool available".into()));
    }
    if random_pool.len() < cfg.test_random {
        return Err(insufficient(format!(
            "need {} test random forgeries, pool has {}",
            cfg.test_random,
            random_pool.len()
        )));
    }
    random_pool.shuffle(rng);
    let test_random = random_pool[..cfg.test_random].to_vec();

    Ok(WriterSplit {
        writer_id: writer.id,
        train_genuine,
        test_genuine,
        test_skilled,
        negatives,
        test_random,
    })
}

/// Derives one u64 sub-seed from a master seed and a tag (SplitMix64 over
/// their combination); used to fan seeds out per writer and repetition so
/// parallel schedules cannot affect results.
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded RNG on a dedicated stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
