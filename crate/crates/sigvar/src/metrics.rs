//! Cluster-quality measures: Euclidean dissimilarity, the silhouette chain,
//! and cohesion.
//!
//! These are the optimizer's fitness (`abs_silhouette`, minimized toward 0 so
//! that genuine and synthetic clusters overlap) and the feature-level
//! validation measure (`cohesion`). All arithmetic is f64 with a fixed,
//! index-ordered summation so results are identical run to run.

use crate::error::{Error, Result};

/// Fixed-dimension real feature vector, the unit of feature-space work.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    /// Builds a vector, rejecting NaN and infinite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(FeatureVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// A labeled group of feature vectors. Membership is a partition: within one
/// evaluation a vector belongs to exactly one cluster.
#[derive(Debug, Clone)]
pub struct Cluster {
    pub label: String,
    pub members: Vec<FeatureVector>,
}

impl Cluster {
    pub fn new(label: impl Into<String>, members: Vec<FeatureVector>) -> Self {
        Cluster {
            label: label.into(),
            members,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Euclidean distance between two vectors of equal dimension.
pub fn euclidean(u: &FeatureVector, v: &FeatureVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    Ok(euclidean_slices(u.values(), v.values()))
}

pub(crate) fn euclidean_slices(u: &[f64], v: &[f64]) -> f64 {
    let mut sum = 0.0;
    for i in 0..u.len() {
        let d = u[i] - v[i];
        sum += d * d;
    }
    sum.sqrt()
}

/// Silhouette width of one member: (b - a) / max(a, b).
///
/// `a` is the mean dissimilarity to the other members of its own cluster
/// (the sum over the cluster divided by n - 1; the self term is zero), `b`
/// the minimum over the other clusters of the mean dissimilarity to that
/// cluster. Singleton clusters get width 0 by convention, as does the
/// degenerate case a = b = 0.
pub fn silhouette_width(index: usize, own: &Cluster, others: &[Cluster]) -> Result<f64> {
    if own.is_empty() {
        return Err(Error::EmptyCluster {
            label: own.label.clone(),
        });
    }
    if others.iter().all(|c| c.is_empty()) {
        return Err(Error::TooFewClusters { got: 1 });
    }
    let point = &own.members[index];
    if own.len() == 1 {
        return Ok(0.0);
    }

    let mut intra = 0.0;
    for (j, other) in own.members.iter().enumerate() {
        if j != index {
            intra += euclidean(point, other)?;
        }
    }
    let a = intra / (own.len() - 1) as f64;

    let mut b = f64::INFINITY;
    for cluster in others.iter().filter(|c| !c.is_empty()) {
        let mut sum = 0.0;
        for member in &cluster.members {
            sum += euclidean(point, member)?;
        }
        let mean = sum / cluster.len() as f64;
        if mean < b {
            b = mean;
        }
    }

    let denom = a.max(b);
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((b - a) / denom)
}

/// Absolute silhouette index |Δ| over two or more clusters: the absolute
/// value of the mean silhouette width over every member of every cluster.
pub fn abs_silhouette(clusters: &[Cluster]) -> Result<f64> {
    let non_empty = clusters.iter().filter(|c| !c.is_empty()).count();
    if non_empty < 2 {
        return Err(Error::TooFewClusters { got: non_empty });
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (s, own) in clusters.iter().enumerate() {
        let others: Vec<Cluster> = clusters
            .iter()
            .enumerate()
            .filter(|(r, _)| *r != s)
            .map(|(_, c)| c.clone())
            .collect();
        for i in 0..own.len() {
            sum += silhouette_width(i, own, &others)?;
            count += 1;
        }
    }
    Ok((sum / count as f64).abs())
}

/// Cohesion: the sum of squared distances of a cluster's members to the
/// arithmetic centroid. A sparsity measure; lower is tighter.
pub fn cohesion(cluster: &Cluster) -> Result<f64> {
    if cluster.is_empty() {
        return Err(Error::EmptyCluster {
            label: cluster.label.clone(),
        });
    }
    let dim = cluster.members[0].dim();
    for m in &cluster.members {
        if m.dim() != dim {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: m.dim(),
            });
        }
    }
    let n = cluster.len() as f64;
    let mut centroid = vec![0.0; dim];
    for m in &cluster.members {
        for (c, v) in centroid.iter_mut().zip(m.values()) {
            *c += v;
        }
    }
    for c in centroid.iter_mut() {
        *c /= n;
    }
    let mut total = 0.0;
    for m in &cluster.members {
        for (c, v) in centroid.iter().zip(m.values()) {
            let d = v - c;
            total += d * d;
        }
    }
    Ok(total)
}
