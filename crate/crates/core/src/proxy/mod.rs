//! Triplet proxy collection: vocabulary captions, detector output, 3D
//! extraction for RGB-D and LiDAR scenes, class-balanced sampling and the
//! triplet file.

mod collect;
mod detections;
mod sampler;
mod triplets;
mod vocab;

pub use collect::{
    collect_indoor, collect_outdoor, CollectionOutcome, IndoorConfig, OutdoorConfig, SkipReason, Skipped,
};
pub use detections::{
    format_detections, parse_detections, read_detections, Detection, DetectionSet, DEFAULT_SCORE_THRESHOLD,
};
pub use sampler::{repeat_factors, RepeatFactorSampler, DEFAULT_REPEAT_THRESHOLD};
pub use triplets::{decode_triplets, encode_triplets, read_triplets, write_triplets, TripletSet};
pub use vocab::VocabularyList;

use crate::embedding::EmbeddingVector;
use crate::geometry::PointCloud;

/// One aligned (caption, image embedding, point proxy) training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletRecord {
    pub caption_index: usize,
    pub image_embedding: EmbeddingVector,
    pub point_proxy: PointCloud,
    pub scene_id: String,
    pub instance_id: String,
}

/// Stable identifier of the `index`-th detection line of a scene.
pub fn instance_id(scene_id: &str, index: usize) -> String {
    format!("{scene_id}/{index}")
}
