//! DBSCAN over 3D points with a uniform-grid neighbor index.
//!
//! Semantics: a point is core when at least `min_pts` points (itself
//! included) lie within distance `eps` (closed ball). Clusters are the
//! density-connected components of core points plus the border points they
//! reach. Points are scanned in input order, cluster ids are assigned in
//! order of discovery, and a border point reachable from several clusters
//! keeps the lowest id.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

pub const NOISE: i32 = -1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabeling {
    labels: Vec<i32>,
    cluster_count: usize,
}

impl ClusterLabeling {
    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn cluster_count(&self) -> usize {
        self.cluster_count
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    /// Member indices of each cluster, in input order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.cluster_count];
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                out[l as usize].push(i);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        Self { eps: 0.5, min_pts: 5 }
    }
}

type Cell = (i64, i64, i64);

/// Grid cells slightly larger than `eps` guarantee that any neighbor lies in
/// one of the 27 surrounding cells despite rounding in the division.
const CELL_MARGIN: f64 = 1.0 + 1e-9;
const MAX_CELL_COORD: f64 = 1e15;

enum NeighborIndex {
    Grid {
        cell: f64,
        cells: HashMap<Cell, Vec<usize>>,
    },
    Linear,
}

struct RegionQuery<'a> {
    points: &'a [Point3],
    eps_sq: f64,
    index: NeighborIndex,
}

impl<'a> RegionQuery<'a> {
    fn new(points: &'a [Point3], eps: f64) -> Self {
        let cell = eps * CELL_MARGIN;
        let fits = points.iter().all(|p| {
            (p.x / cell).abs() < MAX_CELL_COORD
                && (p.y / cell).abs() < MAX_CELL_COORD
                && (p.z / cell).abs() < MAX_CELL_COORD
        });
        let index = if fits && cell > 0.0 {
            let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
            for (i, p) in points.iter().enumerate() {
                cells.entry(Self::cell_of(p, cell)).or_default().push(i);
            }
            NeighborIndex::Grid { cell, cells }
        } else {
            NeighborIndex::Linear
        };
        Self {
            points,
            eps_sq: eps * eps,
            index,
        }
    }

    fn cell_of(p: &Point3, cell: f64) -> Cell {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    /// Indices within `eps` of point `i` (including `i`), ascending.
    fn neighbors(&self, i: usize) -> Vec<usize> {
        let p = &self.points[i];
        let mut out = match &self.index {
            NeighborIndex::Linear => (0..self.points.len())
                .filter(|&j| p.distance_sq(&self.points[j]) <= self.eps_sq)
                .collect::<Vec<_>>(),
            NeighborIndex::Grid { cell, cells } => {
                let (cx, cy, cz) = Self::cell_of(p, *cell);
                let mut found = Vec::new();
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        for dz in -1..=1 {
                            if let Some(bucket) = cells.get(&(cx + dx, cy + dy, cz + dz)) {
                                found.extend(
                                    bucket
                                        .iter()
                                        .copied()
                                        .filter(|&j| p.distance_sq(&self.points[j]) <= self.eps_sq),
                                );
                            }
                        }
                    }
                }
                found
            }
        };
        out.sort_unstable();
        out
    }
}

const UNVISITED: i32 = -2;

pub fn dbscan(cloud: &PointCloud, eps: f64, min_pts: usize) -> Result<ClusterLabeling> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "dbscan eps must be positive, got {eps}"
        )));
    }
    if min_pts == 0 {
        return Err(Error::InvalidParameter("dbscan min_pts must be at least 1".into()));
    }
    let points = cloud.points();
    let query = RegionQuery::new(points, eps);
    let mut labels = vec![UNVISITED; points.len()];
    let mut cluster_count = 0usize;
    let mut queue = VecDeque::new();

    for i in 0..points.len() {
        if labels[i] != UNVISITED {
            continue;
        }
        let seeds = query.neighbors(i);
        if seeds.len() < min_pts {
            labels[i] = NOISE;
            continue;
        }
        let id = cluster_count as i32;
        cluster_count += 1;
        labels[i] = id;
        queue.extend(seeds);
        while let Some(j) = queue.pop_front() {
            match labels[j] {
                NOISE => labels[j] = id,
                UNVISITED => {
                    labels[j] = id;
                    let nb = query.neighbors(j);
                    if nb.len() >= min_pts {
                        queue.extend(nb.into_iter().filter(|&k| labels[k] < 0));
                    }
                }
                _ => {}
            }
        }
    }
    debug_assert!(labels.iter().all(|&l| l >= NOISE));
    Ok(ClusterLabeling { labels, cluster_count })
}

/// Line used to break ties between equally sized clusters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisLine {
    pub origin: Point3,
    /// Unit direction.
    pub direction: Point3,
}

impl AxisLine {
    pub fn distance(&self, p: &Point3) -> f64 {
        let rel = *p - self.origin;
        let along = rel.dot(&self.direction);
        (rel.dot(&rel) - along * along).max(0.0).sqrt()
    }
}

/// Chooses the largest cluster; ties go to the centroid nearest the axis
/// (when one is given), then to the lower cluster id.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SelectionPolicy {
    /// Clusters smaller than this are never selected.
    pub min_cluster_size: usize,
    pub axis: Option<AxisLine>,
}

pub fn select_proxy_cluster(
    cloud: &PointCloud,
    labeling: &ClusterLabeling,
    policy: &SelectionPolicy,
) -> Option<PointCloud> {
    let members = labeling.members();
    let axis_distance = |idx: &[usize]| -> f64 {
        match policy.axis {
            Some(axis) => {
                let sub = cloud.select(idx);
                axis.distance(&sub.centroid().expect("clusters are non-empty"))
            }
            None => 0.0,
        }
    };
    members
        .iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty() && m.len() >= policy.min_cluster_size)
        .map(|(id, m)| (m.len(), axis_distance(m), id))
        .min_by(|a, b| b.0.cmp(&a.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)))
        .map(|(_, _, id)| cloud.select(&members[id]))
}
