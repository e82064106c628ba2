//! Seeded synthetic scenes with known object geometry, matching detections,
//! labels and class-anchor embeddings.

mod scenes;
mod shapes;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use scenes::{generate, write_fixture, Fixture, FixtureSpec, Scene, SceneData, SceneKind, Split};
pub use shapes::{SceneObject, Shape};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// A class name and its characteristic primitive, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeClass {
    pub name: &'static str,
    pub shape: Shape,
}

pub const CATALOG: [ShapeClass; 5] = [
    ShapeClass {
        name: "car",
        shape: Shape::Cuboid {
            length: 4.2,
            width: 1.8,
            height: 1.5,
        },
    },
    ShapeClass {
        name: "pedestrian",
        shape: Shape::Cuboid {
            length: 0.6,
            width: 0.5,
            height: 1.75,
        },
    },
    ShapeClass {
        name: "traffic cone",
        shape: Shape::Cone {
            radius: 0.3,
            height: 0.75,
        },
    },
    ShapeClass {
        name: "ball",
        shape: Shape::Sphere { radius: 0.4 },
    },
    ShapeClass {
        name: "barrel",
        shape: Shape::Cylinder {
            radius: 0.3,
            height: 0.9,
        },
    },
];

/// Relative per-dimension size jitter of generated objects.
pub const SIZE_JITTER: (f64, f64) = (0.85, 1.15);

pub fn class_names(count: usize) -> Result<Vec<String>> {
    if count == 0 || count > CATALOG.len() {
        return Err(Error::InvalidParameter(format!(
            "class count must be between 1 and {}, got {count}",
            CATALOG.len()
        )));
    }
    Ok(CATALOG[..count].iter().map(|c| c.name.to_string()).collect())
}

/// Surface samples of one randomly sized and rotated object of a catalog
/// class, centered near the origin.
pub fn object_cloud(class_index: usize, points: usize, seed: u64) -> Result<PointCloud> {
    let class = CATALOG
        .get(class_index)
        .ok_or_else(|| Error::InvalidParameter(format!("no catalog class {class_index}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = class.shape.jittered(&mut rng, SIZE_JITTER.0, SIZE_JITTER.1);
    let yaw = rng.random_range(0.0..std::f64::consts::TAU);
    let object = SceneObject {
        class_index,
        shape,
        pose: nalgebra::Isometry3::new(nalgebra::Vector3::zeros(), nalgebra::Vector3::z() * yaw),
    };
    PointCloud::new(object.sample_surface(&mut rng, points))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
