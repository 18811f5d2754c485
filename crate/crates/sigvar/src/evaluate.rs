//! Equal Error Rate computation and the repetition protocol: random
//! training selection, writer-dependent training, score pooling and the
//! (r, d) sweep over training-genuine counts and synthetic-sample counts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::feature::{perturb_features, PerturbMode};
use crate::augment::image::{duplicate, DuplicatorConfig};
use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::ingest::{mix_seed, split_writer, stream_rng, PreparedDataset, Sample, SplitConfig};
use crate::metrics::FeatureVector;
use crate::preprocess::normalize_signature;
use crate::swarm::ParameterVector;
use crate::verify::{decision_score, train_with_config, SvmConfig, TrainingSet};

/// Error rates at the equal-error operating point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EerPoint {
    pub eer: f64,
    pub far: f64,
    pub frr: f64,
    pub threshold: f64,
}

/// FAR/FRR at one threshold with the accept-if-score-≥-τ convention; scores
/// exactly at the threshold count half toward each error type.
fn rates_at(genuine: &[f64], forgery: &[f64], threshold: f64) -> (f64, f64) {
    let far = forgery
        .iter()
        .map(|&s| {
            if s > threshold {
                1.0
            } else if s == threshold {
                0.5
            } else {
                0.0
            }
        })
        .sum::<f64>()
        / forgery.len() as f64;
    let frr = genuine
        .iter()
        .map(|&s| {
            if s < threshold {
                1.0
            } else if s == threshold {
                0.5
            } else {
                0.0
            }
        })
        .sum::<f64>()
        / genuine.len() as f64;
    (far, frr)
}

/// Sweeps thresholds over the pooled score set (midpoints of consecutive
/// distinct values plus one candidate below and above everything) and
/// returns (FAR + FRR) / 2 at the point minimizing |FAR - FRR|. Ties keep
/// the lowest threshold.
pub fn eer_detail(genuine: &[f64], forgery: &[f64]) -> Result<EerPoint> {
    if genuine.is_empty() || forgery.is_empty() {
        return Err(Error::EmptyScores);
    }
    if let Some(index) = genuine.iter().chain(forgery).position(|s| !s.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let mut pooled: Vec<f64> = genuine.iter().chain(forgery).copied().collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    pooled.dedup();

    let mut candidates = Vec::with_capacity(pooled.len() + 1);
    candidates.push(pooled[0] - 1.0);
    for w in pooled.windows(2) {
        candidates.push(0.5 * (w[0] + w[1]));
    }
    candidates.push(pooled[pooled.len() - 1] + 1.0);

    let mut best: Option<(f64, EerPoint)> = None;
    for &threshold in &candidates {
        let (far, frr) = rates_at(genuine, forgery, threshold);
        let diff = (far - frr).abs();
        if best.as_ref().is_none_or(|(d, _)| diff < *d) {
            best = Some((
                diff,
                EerPoint {
                    eer: 0.5 * (far + frr),
                    far,
                    frr,
                    threshold,
                },
            ));
        }
    }
    Ok(best.expect("at least one candidate").1)
}

/// The equal error rate alone.
pub fn compute_eer(genuine: &[f64], forgery: &[f64]) -> Result<f64> {
    eer_detail(genuine, forgery).map(|p| p.eer)
}

/// How synthetic training vectors are produced during evaluation.
pub enum Augmenter<'a> {
    /// No augmentation; d > 0 is rejected.
    None,
    /// Gaussian-filter perturbation of the sample's feature vector.
    Feature {
        params: &'a ParameterVector,
        mode: PerturbMode,
    },
    /// Image-space duplication followed by normalization and extraction.
    Image {
        config: &'a DuplicatorConfig,
        extractor: &'a dyn FeatureExtractor,
        canvas: (u32, u32),
    },
}

impl Augmenter<'_> {
    fn synthesize(
        &self,
        sample: &Sample,
        n: usize,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<Vec<FeatureVector>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        match self {
            Augmenter::None => Err(Error::InvalidParameters {
                reason: "synthetic samples requested without an augmenter".into(),
            }),
            Augmenter::Feature { params, mode } => {
                perturb_features(&sample.vector, params, n, *mode, rng)
            }
            Augmenter::Image {
                config,
                extractor,
                canvas,
            } => {
                let raw = sample.raw.as_ref().ok_or(Error::InvalidParameters {
                    reason: "image augmentation requires raw images".into(),
                })?;
                duplicate(raw, config, n, rng)?
                    .iter()
                    .map(|img| extractor.extract(&normalize_signature(img, *canvas)?))
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Training-genuine counts to sweep.
    pub train_genuine: Vec<usize>,
    /// Synthetic-sample counts to sweep per training sample.
    pub duplicates: Vec<usize>,
    pub repetitions: usize,
    pub test_genuine: usize,
    pub test_random: usize,
    pub test_skilled: usize,
    pub negatives_per_writer: usize,
    /// Also generate d synthetic samples per random-forgery negative.
    pub augment_negatives: bool,
    /// Fixed kernel width; None derives it per writer from the training set.
    pub gamma: Option<f64>,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            train_genuine: vec![1, 2, 3],
            duplicates: vec![0],
            repetitions: 10,
            test_genuine: 10,
            test_random: 10,
            test_skilled: 10,
            negatives_per_writer: 14,
            augment_negatives: true,
            gamma: None,
            seed: 0,
        }
    }
}

/// One pooled-threshold result row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EerRow {
    pub rep: usize,
    pub r: usize,
    pub d: usize,
    pub eer: f64,
    pub far: f64,
    pub frr: f64,
    pub seed: u64,
    /// Mean of per-writer EERs at writer-specific thresholds.
    pub per_writer_eer: f64,
    /// EER over genuine vs skilled forgeries only.
    pub skilled_eer: f64,
    /// EER over genuine vs random forgeries only.
    pub random_eer: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EerSummary {
    pub r: usize,
    pub d: usize,
    pub mean_eer: f64,
    pub std_eer: f64,
    pub mean_per_writer_eer: f64,
    pub std_per_writer_eer: f64,
    pub mean_skilled_eer: f64,
    pub mean_random_eer: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EerReport {
    pub rows: Vec<EerRow>,
    pub summary: Vec<EerSummary>,
    pub config_fingerprint: String,
}

/// SHA-256 over the canonical JSON encoding of a config.
pub fn config_fingerprint(value: &impl Serialize) -> String {
    let json = serde_json::to_string(value).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

struct WriterScores {
    genuine: Vec<f64>,
    skilled: Vec<f64>,
    random: Vec<f64>,
}

/// Runs the full protocol: for every repetition and every (r, d) grid point,
/// train one classifier per writer and score its test split; EERs are
/// reported at a pooled global threshold and as per-writer means.
pub fn run_protocol(
    cfg: &ProtocolConfig,
    data: &PreparedDataset,
    augmenter: &Augmenter<'_>,
) -> Result<EerReport> {
    if cfg.train_genuine.is_empty() || cfg.duplicates.is_empty() || cfg.repetitions == 0 {
        return Err(Error::InvalidParameters {
            reason: "empty sweep grid".into(),
        });
    }
    let max_r = *cfg.train_genuine.iter().max().expect("non-empty");
    let split_cfg = SplitConfig {
        max_train_genuine: max_r,
        test_genuine: cfg.test_genuine,
        test_random: cfg.test_random,
        test_skilled: cfg.test_skilled,
        negatives_per_writer: cfg.negatives_per_writer,
    };
    let grid: Vec<(usize, usize)> = cfg
        .train_genuine
        .iter()
        .flat_map(|&r| cfg.duplicates.iter().map(move |&d| (r, d)))
        .collect();

    let mut rows = Vec::new();
    for rep in 0..cfg.repetitions {
        let rep_seed = mix_seed(cfg.seed, rep as u64 + 1);

        // Per-writer work is independent; seeds derive from (rep, writer id)
        // so the schedule cannot change results.
        let per_writer: Vec<Result<Vec<WriterScores>>> = data
            .writers
            .par_iter()
            .enumerate()
            .map(|(windex, writer)| {
                let wseed = mix_seed(rep_seed, writer.id as u64);
                let mut select_rng = stream_rng(wseed, 0);
                let split = split_writer(data, windex, &split_cfg, &mut select_rng)?;

                let negative_samples: Vec<&Sample> = split
                    .negatives
                    .iter()
                    .map(|&(w, s)| &data.writers[w].genuine[s])
                    .collect();
                let test_genuine: Vec<&FeatureVector> = split
                    .test_genuine
                    .iter()
                    .map(|&s| &writer.genuine[s].vector)
                    .collect();
                let test_skilled: Vec<&FeatureVector> = split
                    .test_skilled
                    .iter()
                    .map(|&s| &writer.skilled[s].vector)
                    .collect();
                let test_random: Vec<&FeatureVector> = split
                    .test_random
                    .iter()
                    .map(|&(w, s)| &data.writers[w].genuine[s].vector)
                    .collect();

                let mut results = Vec::with_capacity(grid.len());
                for (gindex, &(r, d)) in grid.iter().enumerate() {
                    let mut aug_rng = stream_rng(wseed, 1 + 2 * gindex as u64);
                    let mut positives = Vec::with_capacity(r * (1 + d));
                    for &s in &split.train_genuine[..r] {
                        let sample = &writer.genuine[s];
                        positives.push(sample.vector.clone());
                        positives.extend(augmenter.synthesize(sample, d, &mut aug_rng)?);
                    }
                    let mut neg_rng = stream_rng(wseed, 2 + 2 * gindex as u64);
                    let mut negatives = Vec::with_capacity(
                        negative_samples.len() * (1 + d * cfg.augment_negatives as usize),
                    );
                    for sample in &negative_samples {
                        negatives.push(sample.vector.clone());
                        if cfg.augment_negatives {
                            negatives.extend(augmenter.synthesize(sample, d, &mut neg_rng)?);
                        }
                    }

                    let ts = TrainingSet::new(positives, negatives)?;
                    let gamma = cfg.gamma.unwrap_or_else(|| ts.auto_gamma());
                    let model = train_with_config(&ts, &SvmConfig::with_gamma(gamma))?;

                    let score_all = |vs: &[&FeatureVector]| -> Result<Vec<f64>> {
                        vs.iter().map(|v| decision_score(&model, v)).collect()
                    };
                    results.push(WriterScores {
                        genuine: score_all(&test_genuine)?,
                        skilled: score_all(&test_skilled)?,
                        random: score_all(&test_random)?,
                    });
                }
                Ok(results)
            })
            .collect();

        let per_writer: Vec<Vec<WriterScores>> = per_writer.into_iter().collect::<Result<_>>()?;

        for (gindex, &(r, d)) in grid.iter().enumerate() {
            let mut genuine = Vec::new();
            let mut skilled = Vec::new();
            let mut random = Vec::new();
            let mut writer_eers = Vec::new();
            for writer_scores in &per_writer {
                let scores = &writer_scores[gindex];
                genuine.extend_from_slice(&scores.genuine);
                skilled.extend_from_slice(&scores.skilled);
                random.extend_from_slice(&scores.random);
                let forgeries: Vec<f64> = scores
                    .skilled
                    .iter()
                    .chain(&scores.random)
                    .copied()
                    .collect();
                writer_eers.push(compute_eer(&scores.genuine, &forgeries)?);
            }
            let forgeries: Vec<f64> = skilled.iter().chain(&random).copied().collect();
            let pooled = eer_detail(&genuine, &forgeries)?;
            let skilled_eer = if skilled.is_empty() {
                f64::NAN
            } else {
                compute_eer(&genuine, &skilled)?
            };
            let random_eer = if random.is_empty() {
                f64::NAN
            } else {
                compute_eer(&genuine, &random)?
            };
            rows.push(EerRow {
                rep,
                r,
                d,
                eer: pooled.eer,
                far: pooled.far,
                frr: pooled.frr,
                seed: rep_seed,
                per_writer_eer: writer_eers.iter().sum::<f64>() / writer_eers.len() as f64,
                skilled_eer,
                random_eer,
            });
        }
    }

    let summary = grid
        .iter()
        .map(|&(r, d)| {
            let of_point: Vec<&EerRow> =
                rows.iter().filter(|row| row.r == r && row.d == d).collect();
            let eers: Vec<f64> = of_point.iter().map(|row| row.eer).collect();
            let per_writer: Vec<f64> = of_point.iter().map(|row| row.per_writer_eer).collect();
            let (mean_eer, std_eer) = mean_std(&eers);
            let (mean_pw, std_pw) = mean_std(&per_writer);
            let skilled: Vec<f64> = of_point.iter().map(|row| row.skilled_eer).collect();
            let random: Vec<f64> = of_point.iter().map(|row| row.random_eer).collect();
            EerSummary {
                r,
                d,
                mean_eer,
                std_eer,
                mean_per_writer_eer: mean_pw,
                std_per_writer_eer: std_pw,
                mean_skilled_eer: mean_std(&skilled).0,
                mean_random_eer: mean_std(&random).0,
            }
        })
        .collect();

    Ok(EerReport {
        rows,
        summary,
        config_fingerprint: config_fingerprint(cfg),
    })
}

impl EerReport {
    /// Canonical CSV: `rep,r,d,eer,far,frr,seed`, one row per repetition and
    /// grid point, in grid order within each repetition.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rep,r,d,eer,far,frr,seed\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row.rep, row.r, row.d, row.eer, row.far, row.frr, row.seed
            ));
        }
        out
    }

    /// Line chart of mean pooled EER vs d, one polyline per r, with the
    /// plotted values embedded as a data table.
    pub fn to_svg(&self) -> String {
        let (width, height, margin) = (640.0, 400.0, 50.0);
        let ds: Vec<usize> = {
            let mut v: Vec<usize> = self.summary.iter().map(|s| s.d).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let rs: Vec<usize> = {
            let mut v: Vec<usize> = self.summary.iter().map(|s| s.r).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let max_d = *ds.last().unwrap_or(&1) as f64;
        let max_eer = self
            .summary
            .iter()
            .map(|s| s.mean_eer)
            .fold(0.0f64, f64::max)
            .max(1e-6);
        let x = |d: f64| margin + (width - 2.0 * margin) * d / max_d.max(1.0);
        let y = |e: f64| height - margin - (height - 2.0 * margin) * e / max_eer;

        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
        );
        svg.push_str(&format!(
            "  <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
        ));
        svg.push_str(&format!(
            "  <line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n  <line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
            m = margin,
            b = height - margin,
            r = width - margin
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"12\">synthetic samples per training sample</text>\n",
            width / 2.0 - 110.0,
            height - 12.0
        ));
        svg.push_str(&format!(
            "  <text x=\"12\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 12 {})\">mean EER</text>\n",
            height / 2.0,
            height / 2.0
        ));
        let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
        for (i, &r) in rs.iter().enumerate() {
            let color = colors[i % colors.len()];
            let points: Vec<String> = ds
                .iter()
                .filter_map(|&d| {
                    self.summary
                        .iter()
                        .find(|s| s.r == r && s.d == d)
                        .map(|s| format!("{:.2},{:.2}", x(d as f64), y(s.mean_eer)))
                })
                .collect();
            svg.push_str(&format!(
                "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                points.join(" ")
            ));
            svg.push_str(&format!(
                "  <text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\">r={r}</text>\n",
                width - margin + 4.0,
                y(self
                    .summary
                    .iter()
                    .rfind(|s| s.r == r)
                    .map(|s| s.mean_eer)
                    .unwrap_or(0.0))
                    + 4.0
            ));
        }
        svg.push_str("  <desc>r,d,mean_eer,std_eer\n");
        for s in &self.summary {
            svg.push_str(&format!("{},{},{},{}\n", s.r, s.d, s.mean_eer, s.std_eer));
        }
        svg.push_str("  </desc>\n</svg>\n");
        svg
    }
}
