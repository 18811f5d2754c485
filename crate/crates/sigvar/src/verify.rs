//! Writer-dependent verification: a soft-margin RBF-kernel SVM trained on
//! genuine signatures (positive class) against random forgeries (negative
//! class), with skew-derived asymmetric costs.
//!
//! The skew is ψ = N / P over the training counts; the negative cost is
//! fixed at C⁻ = 1 and the positive cost is C⁺ = ψ·C⁻, so a lone genuine
//! sample cannot be drowned by thousands of forgeries. The dual problem is
//! solved by sequential minimal optimization on the maximal KKT-violating
//! pair, with an LRU kernel-row cache.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::FeatureVector;

/// Asymmetric class costs from training counts: returns (C⁺, C⁻) with
/// C⁻ = 1 and C⁺ = ψ = n_count / p_count.
pub fn class_weights(p_count: usize, n_count: usize) -> Result<(f64, f64)> {
    if p_count == 0 || n_count == 0 {
        return Err(Error::EmptyClass);
    }
    let c_minus = 1.0;
    let skew = n_count as f64 / p_count as f64;
    Ok((skew * c_minus, c_minus))
}

/// Positive (genuine + synthetic) and negative (random forgeries +
/// synthetic) training vectors of one writer.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    positives: Vec<FeatureVector>,
    negatives: Vec<FeatureVector>,
}

impl TrainingSet {
    pub fn new(positives: Vec<FeatureVector>, negatives: Vec<FeatureVector>) -> Result<Self> {
        if positives.is_empty() || negatives.is_empty() {
            return Err(Error::EmptyClass);
        }
        let dim = positives[0].dim();
        for v in positives.iter().chain(&negatives) {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: v.dim(),
                });
            }
        }
        Ok(TrainingSet {
            positives,
            negatives,
        })
    }

    pub fn positives(&self) -> &[FeatureVector] {
        &self.positives
    }

    pub fn negatives(&self) -> &[FeatureVector] {
        &self.negatives
    }

    pub fn dim(&self) -> usize {
        self.positives[0].dim()
    }

    /// Default kernel width: 1 / (D * mean per-feature variance) over the
    /// whole training set.
    pub fn auto_gamma(&self) -> f64 {
        let dim = self.dim();
        let all: Vec<&FeatureVector> = self.positives.iter().chain(&self.negatives).collect();
        let n = all.len() as f64;
        let mut mean_var = 0.0;
        for d in 0..dim {
            let mean: f64 = all.iter().map(|v| v.values()[d]).sum::<f64>() / n;
            let var: f64 = all
                .iter()
                .map(|v| (v.values()[d] - mean).powi(2))
                .sum::<f64>()
                / n;
            mean_var += var;
        }
        mean_var /= dim as f64;
        if mean_var <= 0.0 {
            1.0 / dim as f64
        } else {
            1.0 / (dim as f64 * mean_var)
        }
    }
}

#[derive(Debug, Clone)]
pub struct SvmConfig {
    pub gamma: f64,
    /// Stop when the maximal KKT violation falls to this gap.
    pub tol: f64,
    /// Pair-update budget; 0 picks max(100_000, 200·n).
    pub max_iter: usize,
    /// Kernel-row cache budget in bytes.
    pub cache_bytes: usize,
}

impl SvmConfig {
    pub fn with_gamma(gamma: f64) -> Self {
        SvmConfig {
            gamma,
            tol: 1e-3,
            max_iter: 0,
            cache_bytes: 256 << 20,
        }
    }
}

/// Trained classifier: support vectors with their signed dual coefficients
/// (αᵢyᵢ) and the bias.
#[derive(Debug, Clone)]
pub struct SvmClassifier {
    pub gamma: f64,
    pub bias: f64,
    pub coefficients: Vec<f64>,
    pub support_vectors: Vec<FeatureVector>,
    /// Final dual objective Σα − ½ΣΣ αᵢαⱼyᵢyⱼK(i,j).
    pub objective: f64,
    /// KKT gap at the last selection.
    pub kkt_violation: f64,
    pub iterations: usize,
}

struct KernelCache<'a> {
    vectors: &'a [&'a FeatureVector],
    norms: Vec<f64>,
    gamma: f64,
    rows: HashMap<usize, (u64, Vec<f64>)>,
    capacity: usize,
    clock: u64,
}

impl<'a> KernelCache<'a> {
    fn new(vectors: &'a [&'a FeatureVector], gamma: f64, cache_bytes: usize) -> Self {
        let norms = vectors
            .iter()
            .map(|v| v.values().iter().map(|x| x * x).sum())
            .collect();
        let row_bytes = vectors.len() * std::mem::size_of::<f64>();
        let capacity = (cache_bytes / row_bytes.max(1)).max(2);
        KernelCache {
            vectors,
            norms,
            gamma,
            rows: HashMap::new(),
            capacity,
            clock: 0,
        }
    }

    fn compute_row(&self, i: usize) -> Vec<f64> {
        let vi = self.vectors[i].values();
        let ni = self.norms[i];
        self.vectors
            .iter()
            .zip(&self.norms)
            .map(|(vj, nj)| {
                let dot: f64 = vi.iter().zip(vj.values()).map(|(a, b)| a * b).sum();
                (-self.gamma * (ni + nj - 2.0 * dot).max(0.0)).exp()
            })
            .collect()
    }

    fn row(&mut self, i: usize) -> &[f64] {
        self.clock += 1;
        let clock = self.clock;
        if !self.rows.contains_key(&i) {
            if self.rows.len() >= self.capacity {
                if let Some((&oldest, _)) = self.rows.iter().min_by_key(|(_, (stamp, _))| *stamp) {
                    self.rows.remove(&oldest);
                }
            }
            let row = self.compute_row(i);
            self.rows.insert(i, (clock, row));
        }
        let entry = self.rows.get_mut(&i).expect("just inserted");
        entry.0 = clock;
        &entry.1
    }
}

/// Trains with the default solver configuration.
pub fn train_wd_classifier(ts: &TrainingSet, gamma: f64) -> Result<SvmClassifier> {
    train_with_config(ts, &SvmConfig::with_gamma(gamma))
}

pub fn train_with_config(ts: &TrainingSet, config: &SvmConfig) -> Result<SvmClassifier> {
    if config.gamma <= 0.0 {
        return Err(Error::NonPositiveGamma {
            gamma: config.gamma,
        });
    }
    let (c_plus, c_minus) = class_weights(ts.positives.len(), ts.negatives.len())?;

    let vectors: Vec<&FeatureVector> = ts.positives.iter().chain(&ts.negatives).collect();
    let labels: Vec<f64> = std::iter::repeat_n(1.0, ts.positives.len())
        .chain(std::iter::repeat_n(-1.0, ts.negatives.len()))
        .collect();
    let costs: Vec<f64> = labels
        .iter()
        .map(|&y| if y > 0.0 { c_plus } else { c_minus })
        .collect();
    let n = vectors.len();
    let max_iter = if config.max_iter == 0 {
        (200 * n).max(100_000)
    } else {
        config.max_iter
    };

    let mut cache = KernelCache::new(&vectors, config.gamma, config.cache_bytes);
    let mut alpha = vec![0.0f64; n];
    // Gradient of the dual objective in minimization form: G = Qα - 1.
    let mut grad = vec![-1.0f64; n];
    let mut iterations = 0usize;
    let mut gap;

    loop {
        // Maximal violating pair: i maximizes -y·G over the up-set, j
        // minimizes it over the low-set.
        let mut i = usize::MAX;
        let mut m = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut big_m = f64::INFINITY;
        for t in 0..n {
            let up =
                (labels[t] > 0.0 && alpha[t] < costs[t]) || (labels[t] < 0.0 && alpha[t] > 0.0);
            let low =
                (labels[t] > 0.0 && alpha[t] > 0.0) || (labels[t] < 0.0 && alpha[t] < costs[t]);
            let score = -labels[t] * grad[t];
            if up && score > m {
                m = score;
                i = t;
            }
            if low && score < big_m {
                big_m = score;
                j = t;
            }
        }
        gap = m - big_m;
        if gap <= config.tol || i == usize::MAX || j == usize::MAX {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::NoConvergence {
                iterations,
                violation: gap,
            });
        }
        iterations += 1;

        let (yi, yj) = (labels[i], labels[j]);
        let row_i = cache.row(i).to_vec();
        let kjj = {
            let row_j = cache.row(j);
            row_j[j]
        };
        let quad = (row_i[i] + kjj - 2.0 * row_i[j]).max(1e-12);
        // Move along α_i += yi·δ, α_j -= yj·δ, which preserves yᵀα.
        let mut delta = -(yi * grad[i] - yj * grad[j]) / quad;
        let cap_i = if yi > 0.0 {
            costs[i] - alpha[i]
        } else {
            alpha[i]
        };
        let cap_j = if yj > 0.0 {
            alpha[j]
        } else {
            costs[j] - alpha[j]
        };
        delta = delta.min(cap_i).min(cap_j);

        let d_alpha_i = yi * delta;
        let d_alpha_j = -yj * delta;
        alpha[i] += d_alpha_i;
        alpha[j] += d_alpha_j;

        let row_j = cache.row(j).to_vec();
        for t in 0..n {
            grad[t] += labels[t] * (yi * row_i[t] * d_alpha_i + yj * row_j[t] * d_alpha_j);
        }
    }

    // Bias from free support vectors, falling back to the violation-bound
    // midpoint when every α sits on the box.
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    for t in 0..n {
        if alpha[t] > 0.0 && alpha[t] < costs[t] {
            free_sum += -labels[t] * grad[t];
            free_count += 1;
        }
    }
    let bias = if free_count > 0 {
        free_sum / free_count as f64
    } else {
        let mut m = f64::NEG_INFINITY;
        let mut big_m = f64::INFINITY;
        for t in 0..n {
            let up =
                (labels[t] > 0.0 && alpha[t] < costs[t]) || (labels[t] < 0.0 && alpha[t] > 0.0);
            let low =
                (labels[t] > 0.0 && alpha[t] > 0.0) || (labels[t] < 0.0 && alpha[t] < costs[t]);
            let score = -labels[t] * grad[t];
            if up {
                m = m.max(score);
            }
            if low {
                big_m = big_m.min(score);
            }
        }
        (m + big_m) / 2.0
    };

    // Dual objective: Σα - ½ αᵀQα; the gradient identity gives
    // αᵀQα = αᵀ(G + 1).
    let quad_term: f64 = alpha.iter().zip(&grad).map(|(a, g)| a * (g + 1.0)).sum();
    let objective = alpha.iter().sum::<f64>() - 0.5 * quad_term;

    let mut coefficients = Vec::new();
    let mut support_vectors = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            coefficients.push(alpha[t] * labels[t]);
            support_vectors.push(vectors[t].clone());
        }
    }
    Ok(SvmClassifier {
        gamma: config.gamma,
        bias,
        coefficients,
        support_vectors,
        objective,
        kkt_violation: gap,
        iterations,
    })
}

/// Signed decision value; positive means the genuine side. Thresholding is
/// the evaluator's job.
pub fn decision_score(c: &SvmClassifier, v: &FeatureVector) -> Result<f64> {
    let dim = c
        .support_vectors
        .first()
        .map(|s| s.dim())
        .unwrap_or(v.dim());
    if v.dim() != dim {
        return Err(Error::DimensionMismatch {
            left: dim,
            right: v.dim(),
        });
    }
    let mut score = c.bias;
    for (coef, sv) in c.coefficients.iter().zip(&c.support_vectors) {
        let d2: f64 = sv
            .values()
            .iter()
            .zip(v.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        score += coef * (-c.gamma * d2).exp();
    }
    Ok(score)
}

/// Picks the gamma from `grid` with the lowest balanced error on a
/// validation split; ties keep the earlier grid entry.
pub fn gamma_grid_search(
    ts: &TrainingSet,
    val_positives: &[FeatureVector],
    val_negatives: &[FeatureVector],
    grid: &[f64],
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidParameters {
            reason: "empty gamma grid".into(),
        });
    }
    let mut best = (f64::INFINITY, grid[0]);
    for &gamma in grid {
        let model = train_wd_classifier(ts, gamma)?;
        let pos_err = val_positives
            .iter()
            .map(|v| decision_score(&model, v).map(|s| if s <= 0.0 { 1.0 } else { 0.0 }))
            .sum::<Result<f64>>()?
            / val_positives.len().max(1) as f64;
        let neg_err = val_negatives
            .iter()
            .map(|v| decision_score(&model, v).map(|s| if s > 0.0 { 1.0 } else { 0.0 }))
            .sum::<Result<f64>>()?
            / val_negatives.len().max(1) as f64;
        let balanced = (pos_err + neg_err) / 2.0;
        if balanced < best.0 {
            best = (balanced, gamma);
        }
    }
    Ok(best.1)
}

const CLASSIFIER_VERSION: u32 = 1;

impl SvmClassifier {
    /// Versioned text serialization: a header line with gamma/bias/dim/count,
    /// then one `coefficient,v1,...,vD` line per support vector.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let dim = self.support_vectors.first().map(|v| v.dim()).unwrap_or(0);
        writeln!(
            w,
            "svm v={CLASSIFIER_VERSION} gamma={} bias={} dim={dim} count={}",
            self.gamma,
            self.bias,
            self.support_vectors.len()
        )
        .map_err(|e| Error::io(path, e))?;
        for (coef, sv) in self.coefficients.iter().zip(&self.support_vectors) {
            let mut line = format!("{coef}");
            for v in sv.values() {
                line.push(',');
                line.push_str(&format!("{v}"));
            }
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<SvmClassifier> {
        let parse_err = |line: usize, reason: &str| Error::StoreParse {
            line,
            reason: reason.to_string(),
        };
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
        let header = header.map_err(|e| parse_err(1, &e.to_string()))?;
        let mut gamma = None;
        let mut bias = None;
        let mut count = None;
        let mut version = None;
        for token in header.split_whitespace().skip(1) {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| parse_err(1, "malformed header"))?;
            match key {
                "v" => version = value.parse::<u32>().ok(),
                "gamma" => gamma = value.parse::<f64>().ok(),
                "bias" => bias = value.parse::<f64>().ok(),
                "count" => count = value.parse::<usize>().ok(),
                _ => {}
            }
        }
        let version = version.ok_or_else(|| parse_err(1, "missing version"))?;
        if version > CLASSIFIER_VERSION {
            return Err(Error::SchemaVersion {
                found: version,
                supported: CLASSIFIER_VERSION,
            });
        }
        let gamma = gamma.ok_or_else(|| parse_err(1, "missing gamma"))?;
        let bias = bias.ok_or_else(|| parse_err(1, "missing bias"))?;
        let count = count.ok_or_else(|| parse_err(1, "missing count"))?;

        let mut coefficients = Vec::with_capacity(count);
        let mut support_vectors = Vec::with_capacity(count);
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line.map_err(|e| parse_err(line_no, &e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let coef: f64 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(line_no, "bad coefficient"))?;
            let values: Vec<f64> = parts
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(line_no, &format!("bad value: {e}")))?;
            coefficients.push(coef);
            support_vectors
                .push(FeatureVector::new(values).map_err(|e| parse_err(line_no, &e.to_string()))?);
        }
        if coefficients.len() != count {
            return Err(parse_err(
                0,
                &format!(
                    "expected {count} support vectors, got {}",
                    coefficients.len()
                ),
            ));
        }
        Ok(SvmClassifier {
            gamma,
            bias,
            coefficients,
            support_vectors,
            objective: f64::NAN,
            kkt_violation: f64::NAN,
            iterations: 0,
        })
    }
}
