//! Zero-shot classification against prompt-templated class embeddings, and
//! summation ensembling of per-representation outputs.

mod files;
mod proxies;

use std::collections::BTreeSet;

pub use files::{
    format_logit_file, format_predictions, parse_logit_file, parse_predictions, read_logit_file, read_predictions,
    PredictionRow,
};
pub use proxies::{classify_records, embed_proxy, proxy_seed, ClassifiedProxy};

use crate::embedding::{EmbeddingProvider, EmbeddingVector, PromptTemplate};
use crate::error::{Error, Result};

/// `K` class names and their unit text embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassBank {
    names: Vec<String>,
    rows: Vec<EmbeddingVector>,
}

impl ClassBank {
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> &[EmbeddingVector] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows[0].dim()
    }
}

pub fn build_class_bank(
    names: &[String],
    template: &PromptTemplate,
    provider: &dyn EmbeddingProvider,
) -> Result<ClassBank> {
    if names.is_empty() {
        return Err(Error::Config("class list is empty".into()));
    }
    let mut seen = BTreeSet::new();
    for name in names {
        if !seen.insert(name.trim().to_lowercase()) {
            return Err(Error::DuplicateClass(name.clone()));
        }
    }
    let rows = names
        .iter()
        .map(|n| provider.embed_text(&template.fill(n))?.normalize())
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassBank {
        names: names.to_vec(),
        rows,
    })
}

/// A probability per class and the class indices ordered by descending
/// probability (ties to the lower index).
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    probabilities: Vec<f64>,
    ranking: Vec<usize>,
}

impl Prediction {
    /// Validates a probability vector: non-empty, entries in `[0, 1]`,
    /// summing to 1 within 1e-6.
    pub fn from_probabilities(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::InvalidParameter("prediction over zero classes".into()));
        }
        if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter("probabilities must lie in [0, 1]".into()));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!("probabilities sum to {sum}")));
        }
        let mut ranking: Vec<usize> = (0..probabilities.len()).collect();
        ranking.sort_by(|&a, &b| probabilities[b].total_cmp(&probabilities[a]).then(a.cmp(&b)));
        Ok(Self { probabilities, ranking })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn ranking(&self) -> &[usize] {
        &self.ranking
    }

    pub fn top_k(&self, k: usize) -> &[usize] {
        &self.ranking[..k.min(self.ranking.len())]
    }

    pub fn argmax(&self) -> usize {
        self.ranking[0]
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax over raw inner products with the bank rows. `point_embedding` is
/// normalized first.
pub fn classify(point_embedding: &EmbeddingVector, bank: &ClassBank) -> Result<Prediction> {
    if point_embedding.dim() != bank.dim() {
        return Err(Error::DimensionMismatch {
            expected: bank.dim(),
            actual: point_embedding.dim(),
        });
    }
    let f = point_embedding.normalize()?;
    let logits: Vec<f64> = bank.rows.iter().map(|r| r.dot(&f)).collect();
    Prediction::from_probabilities(softmax(&logits))
}

/// Sums probability vectors elementwise and renormalizes.
pub fn ensemble(inputs: &[&[f64]]) -> Result<Prediction> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::InvalidParameter("nothing to ensemble".into()))?;
    let k = first.len();
    let mut sum = vec![0.0; k];
    for input in inputs {
        if input.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: input.len(),
            });
        }
        sum.iter_mut().zip(input.iter()).for_each(|(s, p)| *s += p);
    }
    let total: f64 = sum.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("ensemble inputs sum to zero".into()));
    }
    Prediction::from_probabilities(sum.into_iter().map(|s| s / total).collect())
}
