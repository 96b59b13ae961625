//! Core 3D primitives: points, point clouds, and axis-aligned boxes.
//!
//! Boxes are stored as centroid plus extents, which is the wire format the
//! grounding tools report (`Cx, Cy, Cz, dX, dY, dZ`); the min/max corner form
//! is derived on demand. All geometry is double precision.

mod cloud;

pub use cloud::{load_point_cloud, write_point_cloud, FeatureMeta, PointCloud};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("cannot build a bounding box from an empty cluster")]
    EmptyCluster,
    #[error("non-finite coordinate in point data: {0}")]
    NonFinite(String),
    #[error("point cloud error: {0}")]
    Cloud(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A point in meters. Coordinates must be finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Axis-aligned bounding box: centroid plus per-axis extents (each >= 0).
///
/// Zero-volume boxes are legal; single-point clusters produce them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub centroid: Point3,
    pub extents: [f64; 3],
}

impl Aabb {
    pub fn new(centroid: Point3, extents: [f64; 3]) -> Self {
        debug_assert!(extents.iter().all(|e| *e >= 0.0));
        Self { centroid, extents }
    }

    /// Minimal box containing every input point.
    ///
    /// The centroid is the midpoint of the min/max corners, not the mean of
    /// the points.
    pub fn from_points<'a, I>(points: I) -> Result<Self, GeometryError>
    where
        I: IntoIterator<Item = &'a Point3>,
    {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        let mut any = false;
        for p in points {
            if !p.is_finite() {
                return Err(GeometryError::NonFinite(format!("{p:?}")));
            }
            any = true;
            min[0] = min[0].min(p.x);
            min[1] = min[1].min(p.y);
            min[2] = min[2].min(p.z);
            max[0] = max[0].max(p.x);
            max[1] = max[1].max(p.y);
            max[2] = max[2].max(p.z);
        }
        if !any {
            return Err(GeometryError::EmptyCluster);
        }
        Ok(Self {
            centroid: Point3::new(
                (min[0] + max[0]) / 2.0,
                (min[1] + max[1]) / 2.0,
                (min[2] + max[2]) / 2.0,
            ),
            extents: [max[0] - min[0], max[1] - min[1], max[2] - min[2]],
        })
    }

    pub fn min_corner(&self) -> Point3 {
        Point3::new(
            self.centroid.x - self.extents[0] / 2.0,
            self.centroid.y - self.extents[1] / 2.0,
            self.centroid.z - self.extents[2] / 2.0,
        )
    }

    pub fn max_corner(&self) -> Point3 {
        Point3::new(
            self.centroid.x + self.extents[0] / 2.0,
            self.centroid.y + self.extents[1] / 2.0,
            self.centroid.z + self.extents[2] / 2.0,
        )
    }

    pub fn volume(&self) -> f64 {
        self.extents[0] * self.extents[1] * self.extents[2]
    }

    pub fn contains(&self, p: &Point3) -> bool {
        let min = self.min_corner();
        let max = self.max_corner();
        p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z && p.z <= max.z
    }

    /// Intersection over union in [0, 1].
    ///
    /// Identical boxes score 1 even when degenerate; otherwise a zero-volume
    /// union or intersection scores 0.
    pub fn iou(&self, other: &Aabb) -> f64 {
        if self == other {
            return 1.0;
        }
        let amin = self.min_corner();
        let amax = self.max_corner();
        let bmin = other.min_corner();
        let bmax = other.max_corner();
        let ix = (amax.x.min(bmax.x) - amin.x.max(bmin.x)).max(0.0);
        let iy = (amax.y.min(bmax.y) - amin.y.max(bmin.y)).max(0.0);
        let iz = (amax.z.min(bmax.z) - amin.z.max(bmin.z)).max(0.0);
        let inter = ix * iy * iz;
        let union = self.volume() + other.volume() - inter;
        if union <= 0.0 {
            return 0.0;
        }
        inter / union
    }

    pub fn centroid_distance(&self, other: &Aabb) -> f64 {
        self.centroid.distance(&other.centroid)
    }
}
