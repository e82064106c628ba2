//! Point-cloud representation learning from language–image–point triplet proxies.
//!
//! The pipeline has three stages:
//!
//! 1. [`proxy`]: turn scene data (RGB-D depth maps or LiDAR sweeps with
//!    calibrated cameras) plus open-vocabulary 2D detections into triplets of
//!    caption, image embedding and point cluster.
//! 2. [`training`]: pretrain the point encoder ([`encoder`]) so that its
//!    embeddings align with frozen text and image embeddings under a
//!    cross-modal contrastive objective.
//! 3. [`zero_shot`] and [`evaluation`]: classify point proxies against any
//!    class vocabulary through prompt-templated text embeddings, and score
//!    recognition and localization.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod binio;
pub mod clustering;
pub mod embedding;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod kv;
pub mod proxy;
pub mod synthetic;
pub mod training;
pub mod zero_shot;

pub use error::{Error, ErrorKind, Result};
