//! Density-based clustering over 3D points.
//!
//! Neighbor queries go through a uniform grid with cell size `eps`, so
//! clustering stays near-linear on the blob-like inputs the grounder
//! produces. Semantics are the classic ones: a core point has at least
//! `min_pts` neighbors within `eps` (itself included), clusters are maximal
//! density-connected sets, border points join the first core cluster that
//! reaches them, and everything else is noise. Points are processed in
//! index order and cluster ids assigned in discovery order, so the output
//! is deterministic.

use crate::geometry::Point3;
use std::collections::HashMap;
use std::collections::VecDeque;

pub const NOISE: i32 = -1;

/// Per-point cluster assignment: ids contiguous from 0, or [`NOISE`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabels {
    pub labels: Vec<i32>,
    pub n_clusters: usize,
}

impl ClusterLabels {
    /// Point indices grouped by cluster id.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                out[l as usize].push(i);
            }
        }
        out
    }
}

struct Grid {
    cells: HashMap<[i64; 3], Vec<usize>>,
    inv_eps: f64,
}

impl Grid {
    fn build(points: &[Point3], eps: f64) -> Self {
        let inv_eps = 1.0 / eps;
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, inv_eps)).or_default().push(i);
        }
        Self { cells, inv_eps }
    }

    fn key(p: &Point3, inv_eps: f64) -> [i64; 3] {
        [
            (p.x * inv_eps).floor() as i64,
            (p.y * inv_eps).floor() as i64,
            (p.z * inv_eps).floor() as i64,
        ]
    }

    /// Indices within `eps` of `p`, in ascending index order.
    fn neighbors(&self, points: &[Point3], p: &Point3, eps: f64) -> Vec<usize> {
        let [cx, cy, cz] = Self::key(p, self.inv_eps);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(cell) = self.cells.get(&[cx + dx, cy + dy, cz + dz]) {
                        for &i in cell {
                            if points[i].distance(p) <= eps {
                                out.push(i);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

pub fn dbscan(points: &[Point3], eps: f64, min_pts: usize) -> ClusterLabels {
    assert!(eps > 0.0, "eps must be positive");
    assert!(min_pts >= 1, "min_pts must be at least 1");
    let n = points.len();
    let mut labels = vec![NOISE; n];
    if n == 0 {
        return ClusterLabels {
            labels,
            n_clusters: 0,
        };
    }
    let grid = Grid::build(points, eps);
    let mut visited = vec![false; n];
    let mut next_cluster: i32 = 0;

    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let neighbors = grid.neighbors(points, &points[i], eps);
        if neighbors.len() < min_pts {
            continue; // noise unless later absorbed as a border point
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[i] = cluster;
        let mut queue: VecDeque<usize> = neighbors.into_iter().collect();
        while let Some(j) = queue.pop_front() {
            if labels[j] == NOISE {
                labels[j] = cluster;
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let jn = grid.neighbors(points, &points[j], eps);
            if jn.len() >= min_pts {
                queue.extend(jn);
            }
        }
    }

    ClusterLabels {
        labels,
        n_clusters: next_cluster as usize,
    }
}
