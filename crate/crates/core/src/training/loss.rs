//! Cross-modal contrastive objectives.
//!
//! Both losses are anchored on the frozen modality: for sample `i` the
//! positive logit is `a_i · p_i / τ` and the negatives are `a_i · p_j / τ`
//! over other point embeddings `p_j`. The text loss drops negatives that
//! share sample `i`'s caption; the image loss keeps every `j != i`.

use super::TrainingConfig;
use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;

const UNIT_TOLERANCE: f64 = 1e-6;

/// One mini-batch of aligned samples.
#[derive(Debug, Clone)]
pub struct Batch {
    /// Sampled point sets; may be empty when only the losses are evaluated.
    pub points: Vec<PointCloud>,
    pub text: Vec<EmbeddingVector>,
    pub image: Vec<EmbeddingVector>,
    pub captions: Vec<usize>,
}

impl Batch {
    pub fn new(
        points: Vec<PointCloud>,
        text: Vec<EmbeddingVector>,
        image: Vec<EmbeddingVector>,
        captions: Vec<usize>,
    ) -> Result<Self> {
        let n = captions.len();
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "a batch needs at least 2 samples, got {n}"
            )));
        }
        for len in [text.len(), image.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: len,
                });
            }
        }
        if !points.is_empty() && points.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: points.len(),
            });
        }
        let dim = text[0].dim();
        for e in text.iter().chain(&image) {
            check_unit(e, dim)?;
        }
        Ok(Self {
            points,
            text,
            image,
            captions,
        })
    }

    pub fn len(&self) -> usize {
        self.captions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.captions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.text[0].dim()
    }
}

fn check_unit(e: &EmbeddingVector, dim: usize) -> Result<()> {
    if e.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: e.dim(),
        });
    }
    if (e.norm() - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::InvalidParameter(format!(
            "embedding must be unit norm, found norm {}",
            e.norm()
        )));
    }
    Ok(())
}

/// A scalar loss and its gradient with respect to each point embedding.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub value: f64,
    pub grad: Vec<Vec<f64>>,
}

fn contrastive(
    anchors: &[EmbeddingVector],
    points: &[EmbeddingVector],
    tau: f64,
    is_negative: impl Fn(usize, usize) -> bool,
) -> Result<LossValue> {
    let n = anchors.len();
    if points.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: points.len(),
        });
    }
    if !(tau > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    let dim = anchors[0].dim();
    for p in points {
        check_unit(p, dim)?;
    }
    let mut value = 0.0;
    let mut grad = vec![vec![0.0; dim]; n];
    let mut logits = vec![0.0; n];
    for i in 0..n {
        let members: Vec<usize> = (0..n).filter(|&j| j == i || is_negative(i, j)).collect();
        for &j in &members {
            logits[j] = anchors[i].dot(&points[j]) / tau;
        }
        let max = members.iter().map(|&j| logits[j]).fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = members.iter().map(|&j| (logits[j] - max).exp()).sum();
        let lse = max + sum.ln();
        value += (max - logits[i]) + sum.ln();
        for &j in &members {
            let weight = (logits[j] - lse).exp() - if j == i { 1.0 } else { 0.0 };
            let scale = weight / (tau * n as f64);
            grad[j]
                .iter_mut()
                .zip(anchors[i].values())
                .for_each(|(g, a)| *g += scale * a);
        }
    }
    Ok(LossValue {
        value: value / n as f64,
        grad,
    })
}

/// Text-to-point loss with same-caption negatives removed.
pub fn loss_text_point(batch: &Batch, point_embeddings: &[EmbeddingVector], tau: f64) -> Result<LossValue> {
    let captions = &batch.captions;
    if captions.iter().all(|&c| c == captions[0]) {
        log::warn!(
            "every sample in the batch shares caption {}; text loss is zero",
            captions[0]
        );
    }
    contrastive(&batch.text, point_embeddings, tau, |i, j| captions[i] != captions[j])
}

/// Image-to-point loss over all other samples.
pub fn loss_image_point(batch: &Batch, point_embeddings: &[EmbeddingVector], tau: f64) -> Result<LossValue> {
    contrastive(&batch.image, point_embeddings, tau, |i, j| i != j)
}

/// `lambda1 * text loss + lambda2 * image loss`.
pub fn loss_combined(
    batch: &Batch,
    point_embeddings: &[EmbeddingVector],
    config: &TrainingConfig,
) -> Result<LossValue> {
    let tp = loss_text_point(batch, point_embeddings, config.temperature)?;
    let ip = loss_image_point(batch, point_embeddings, config.temperature)?;
    let (l1, l2) = (config.lambda1, config.lambda2);
    let grad = tp
        .grad
        .iter()
        .zip(&ip.grad)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| l1 * x + l2 * y).collect())
        .collect();
    Ok(LossValue {
        value: l1 * tp.value + l2 * ip.value,
        grad,
    })
}
