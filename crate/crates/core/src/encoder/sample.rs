use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

pub const DEFAULT_SAMPLE_POINTS: usize = 2048;

/// Draws `n` points from `proxy` (with replacement only when the proxy is
/// smaller than `n`), centers them on their centroid and scales the farthest
/// point onto the unit sphere. A set with zero radius stays at the origin.
pub fn sample_points(proxy: &PointCloud, n: usize, seed: u64) -> Result<PointCloud> {
    if proxy.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = proxy.len();
    let indices: Vec<usize> = if len < n {
        (0..n).map(|_| rng.random_range(0..len)).collect()
    } else {
        rand::seq::index::sample(&mut rng, len, n).into_vec()
    };
    let picked = proxy.select(&indices);
    let center = picked.centroid()?;
    let radius = picked.points().iter().map(|p| p.distance(&center)).fold(0.0, f64::max);
    let scale = if radius > 0.0 { 1.0 / radius } else { 0.0 };
    let points: Vec<Point3> = picked.points().iter().map(|p| (*p - center) * scale).collect();
    PointCloud::new(points)
}
