use std::fmt;

use super::{instance_id, Detection, TripletRecord, VocabularyList};
use crate::clustering::{dbscan, select_proxy_cluster, AxisLine, DbscanParams, SelectionPolicy};
use crate::embedding::{CropRef, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::geometry::{
    backproject_depth, build_frustum, points_in_frustum, CameraCalibration, DepthImage, ForegroundBand, PointCloud,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndoorConfig {
    pub band: ForegroundBand,
    /// Detections whose foreground yields fewer points are skipped.
    pub min_points: usize,
}

impl Default for IndoorConfig {
    fn default() -> Self {
        Self {
            band: ForegroundBand::default(),
            min_points: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutdoorConfig {
    pub near: f64,
    pub far: f64,
    pub dbscan: DbscanParams,
    pub min_cluster_size: usize,
}

impl Default for OutdoorConfig {
    fn default() -> Self {
        Self {
            near: 0.5,
            far: 80.0,
            dbscan: DbscanParams::default(),
            min_cluster_size: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SkipReason {
    EmptyForeground,
    TooFewPoints,
    EmptyFrustum,
    AllNoise,
    ClusterTooSmall,
}

impl SkipReason {
    pub fn code(&self) -> &'static str {
        match self {
            SkipReason::EmptyForeground => "empty-foreground",
            SkipReason::TooFewPoints => "too-few-points",
            SkipReason::EmptyFrustum => "empty-frustum",
            SkipReason::AllNoise => "all-noise",
            SkipReason::ClusterTooSmall => "cluster-too-small",
        }
    }
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skipped {
    pub instance_id: String,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CollectionOutcome {
    pub records: Vec<TripletRecord>,
    pub skipped: Vec<Skipped>,
}

impl CollectionOutcome {
    fn skip(&mut self, id: String, reason: SkipReason) {
        log::debug!("skipping {id}: {reason}");
        self.skipped.push(Skipped {
            instance_id: id,
            reason,
        });
    }
}

fn make_record(
    detection: &Detection,
    vocab: &VocabularyList,
    provider: &dyn EmbeddingProvider,
    id: String,
    proxy: PointCloud,
) -> Result<TripletRecord> {
    let caption = vocab
        .get(detection.bbox.label_index)
        .ok_or_else(|| Error::InvalidParameter(format!("caption index {} out of range", detection.bbox.label_index)))?;
    let image_embedding = provider.embed_image(CropRef { crop_id: &id, caption })?;
    if image_embedding.dim() != provider.dim() {
        return Err(Error::DimensionMismatch {
            expected: provider.dim(),
            actual: image_embedding.dim(),
        });
    }
    Ok(TripletRecord {
        caption_index: detection.bbox.label_index,
        image_embedding,
        point_proxy: proxy,
        scene_id: detection.scene_id.clone(),
        instance_id: id,
    })
}

/// RGB-D path: back-project each detection's foreground depth band.
pub fn collect_indoor(
    depth: &DepthImage,
    calib: &CameraCalibration,
    detections: &[Detection],
    vocab: &VocabularyList,
    provider: &dyn EmbeddingProvider,
    config: &IndoorConfig,
) -> Result<CollectionOutcome> {
    let mut out = CollectionOutcome::default();
    for det in detections {
        let id = instance_id(&det.scene_id, det.index);
        let proxy = backproject_depth(depth, calib, &det.bbox, config.band);
        if proxy.is_empty() {
            out.skip(id, SkipReason::EmptyForeground);
        } else if proxy.len() < config.min_points {
            out.skip(id, SkipReason::TooFewPoints);
        } else {
            out.records.push(make_record(det, vocab, provider, id, proxy)?);
        }
    }
    Ok(out)
}

/// LiDAR path: frustum crop, DBSCAN, then keep the selected cluster.
pub fn collect_outdoor(
    cloud: &PointCloud,
    calib: &CameraCalibration,
    detections: &[Detection],
    vocab: &VocabularyList,
    provider: &dyn EmbeddingProvider,
    config: &OutdoorConfig,
) -> Result<CollectionOutcome> {
    let mut out = CollectionOutcome::default();
    for det in detections {
        let id = instance_id(&det.scene_id, det.index);
        let frustum = build_frustum(&det.bbox, calib, config.near, config.far)?;
        let inside = points_in_frustum(cloud, &frustum);
        if inside.is_empty() {
            out.skip(id, SkipReason::EmptyFrustum);
            continue;
        }
        let labeling = dbscan(&inside, config.dbscan.eps, config.dbscan.min_pts)?;
        if labeling.cluster_count() == 0 {
            out.skip(id, SkipReason::AllNoise);
            continue;
        }
        let policy = SelectionPolicy {
            min_cluster_size: config.min_cluster_size,
            axis: Some(AxisLine {
                origin: frustum.apex(),
                direction: frustum.axis(),
            }),
        };
        match select_proxy_cluster(&inside, &labeling, &policy) {
            Some(proxy) => out.records.push(make_record(det, vocab, provider, id, proxy)?),
            None => out.skip(id, SkipReason::ClusterTooSmall),
        }
    }
    Ok(out)
}
