use super::{classify, ClassBank, Prediction, PredictionRow};
use crate::embedding::{fnv1a, EmbeddingVector};
use crate::encoder::{forward, sample_points, EncoderParams};
use crate::error::Result;
use crate::geometry::{aabb, Point3};
use crate::proxy::TripletRecord;

/// Sampling seed of one proxy, stable under reordering of the input.
pub fn proxy_seed(seed: u64, instance_id: &str) -> u64 {
    seed ^ fnv1a(instance_id.as_bytes())
}

/// Samples `instance_id`'s proxy and runs the encoder on it.
pub fn embed_proxy(params: &EncoderParams, record: &TripletRecord, seed: u64) -> Result<EmbeddingVector> {
    let sampled = sample_points(
        &record.point_proxy,
        params.config().num_points,
        proxy_seed(seed, &record.instance_id),
    )?;
    Ok(forward(params, &sampled)?.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedProxy {
    pub instance_id: String,
    /// Center of the proxy's axis-aligned bounding box.
    pub center: Point3,
    pub prediction: Prediction,
}

impl ClassifiedProxy {
    pub fn to_row(&self, k: usize) -> PredictionRow {
        let probs = self.prediction.probabilities();
        PredictionRow {
            instance_id: self.instance_id.clone(),
            center: self.center,
            top: self.prediction.top_k(k).iter().map(|&c| (c, probs[c])).collect(),
        }
    }
}

/// Embeds and classifies every record, in input order.
pub fn classify_records(
    params: &EncoderParams,
    records: &[TripletRecord],
    bank: &ClassBank,
    seed: u64,
) -> Result<Vec<ClassifiedProxy>> {
    records
        .iter()
        .map(|rec| {
            let f = embed_proxy(params, rec, seed)?;
            Ok(ClassifiedProxy {
                instance_id: rec.instance_id.clone(),
                center: aabb(&rec.point_proxy)?.center(),
                prediction: classify(&f, bank)?,
            })
        })
        .collect()
}
