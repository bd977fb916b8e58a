use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anomaly scores paired with ground truth.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub is_anomaly: Vec<bool>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, is_anomaly: Vec<bool>) -> Result<Self> {
        if scores.len() != is_anomaly.len() {
            return Err(Error::Shape(format!(
                "{} scores for {} labels",
                scores.len(),
                is_anomaly.len()
            )));
        }
        Ok(Self { scores, is_anomaly })
    }

    pub fn push(&mut self, score: f64, is_anomaly: bool) {
        self.scores.push(score);
        self.is_anomaly.push(is_anomaly);
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (anomaly, normal) pairs where the anomaly scores higher, ties counting
/// one half. `O(n log n)`.
///
/// The pair count is accumulated in integers (doubled, to keep the halves
/// exact), so the result equals the pairwise count divided by the number of
/// pairs with a single rounding.
pub fn auroc(set: &ScoredSet) -> Result<f64> {
    if set.scores.len() != set.is_anomaly.len() {
        return Err(Error::Shape("scores and labels differ in length".into()));
    }
    if set.scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Eval("scores contain NaN".into()));
    }
    let n_anomaly = set.is_anomaly.iter().filter(|&&a| a).count() as u128;
    let n_normal = set.is_anomaly.len() as u128 - n_anomaly;
    if n_anomaly == 0 || n_normal == 0 {
        return Err(Error::Eval(
            "AUROC needs at least one anomaly and one normal point".into(),
        ));
    }

    let mut order: Vec<usize> = (0..set.scores.len()).collect();
    order.sort_by(|&a, &b| set.scores[a].total_cmp(&set.scores[b]));

    // Scores are NaN-free, so total_cmp only separates -0.0 from 0.0; group
    // with `==` so they still tie.
    let mut doubled_wins: u128 = 0;
    let mut normals_below: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let value = set.scores[order[start]];
        let mut end = start;
        let (mut anomalies, mut normals) = (0u128, 0u128);
        while end < order.len() && set.scores[order[end]] == value {
            if set.is_anomaly[order[end]] {
                anomalies += 1;
            } else {
                normals += 1;
            }
            end += 1;
        }
        doubled_wins += 2 * anomalies * normals_below + anomalies * normals;
        normals_below += normals;
        start = end;
    }
    Ok(doubled_wins as f64 / (2 * n_anomaly * n_normal) as f64)
}
