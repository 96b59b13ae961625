//! Point-cloud container and scene loading.
//!
//! Scenes load from an ASCII polygon-format subset: a header declaring the
//! vertex count and `x`, `y`, `z` properties, with an optional integer
//! `label` property whose names come from `comment label <idx> <name>`
//! header lines. Per-point feature vectors live in an optional sidecar:
//! a row-major little-endian f32 matrix at `<scene>.feat` described by a
//! JSON metadata file at `<scene>.feat.json`.

use super::{GeometryError, Point3};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

/// Immutable scene geometry: positions plus optional per-point labels and
/// unit-norm feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    labels: Option<Vec<String>>,
    features: Option<Features>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    data: Vec<f32>,
    dim: usize,
}

/// Sidecar metadata for the binary feature matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub count: usize,
    pub dim: usize,
    pub endianness: String,
}

const UNIT_NORM_TOL: f64 = 1e-4;

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self, GeometryError> {
        for p in &points {
            if !p.is_finite() {
                return Err(GeometryError::NonFinite(format!("{p:?}")));
            }
        }
        Ok(Self {
            points,
            labels: None,
            features: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, GeometryError> {
        if labels.len() != self.points.len() {
            return Err(GeometryError::Cloud(format!(
                "label count {} does not match point count {}",
                labels.len(),
                self.points.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Attach one feature vector per point. Vectors must share a dimension
    /// and be unit L2 norm within 1e-4.
    pub fn with_features(mut self, data: Vec<f32>, dim: usize) -> Result<Self, GeometryError> {
        if dim == 0 || data.len() != self.points.len() * dim {
            return Err(GeometryError::Cloud(format!(
                "feature matrix {}x{dim} does not match point count {}",
                data.len().checked_div(dim).unwrap_or(0),
                self.points.len()
            )));
        }
        for (i, row) in data.chunks(dim).enumerate() {
            let norm: f64 = row.iter().map(|v| (*v as f64) * (*v as f64)).sum::<f64>().sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(GeometryError::Cloud(format!(
                    "feature vector {i} has L2 norm {norm}, expected 1.0 +/- {UNIT_NORM_TOL}"
                )));
            }
        }
        self.features = Some(Features { data, dim });
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.features.as_ref().map(|f| f.dim)
    }

    pub fn feature(&self, index: usize) -> Option<&[f32]> {
        let f = self.features.as_ref()?;
        f.data.get(index * f.dim..(index + 1) * f.dim)
    }
}

/// Load a scene from disk, picking up the feature sidecar when present.
pub fn load_point_cloud(path: &Path) -> Result<PointCloud, GeometryError> {
    let file = std::fs::File::open(path)?;
    let cloud = parse_ply(BufReader::new(file))?;
    let feat_path = sidecar_path(path, "feat");
    let meta_path = sidecar_path(path, "feat.json");
    if feat_path.exists() && meta_path.exists() {
        let meta: FeatureMeta = serde_json::from_str(&std::fs::read_to_string(&meta_path)?)
            .map_err(|e| GeometryError::Cloud(format!("bad feature metadata: {e}")))?;
        if meta.endianness != "little" {
            return Err(GeometryError::Cloud(format!(
                "unsupported feature endianness {:?}",
                meta.endianness
            )));
        }
        if meta.count != cloud.len() {
            return Err(GeometryError::Cloud(format!(
                "feature metadata count {} does not match point count {}",
                meta.count,
                cloud.len()
            )));
        }
        let mut raw = Vec::new();
        std::fs::File::open(&feat_path)?.read_to_end(&mut raw)?;
        if raw.len() != meta.count * meta.dim * 4 {
            return Err(GeometryError::Cloud(format!(
                "feature file is {} bytes, expected {}",
                raw.len(),
                meta.count * meta.dim * 4
            )));
        }
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        return cloud.with_features(data, meta.dim);
    }
    Ok(cloud)
}

fn sidecar_path(path: &Path, ext: &str) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".");
    os.push(ext);
    os.into()
}

fn parse_ply<R: BufRead>(mut reader: R) -> Result<PointCloud, GeometryError> {
    let bad = |msg: String| GeometryError::Cloud(msg);
    let mut line = String::new();
    let read_line = |reader: &mut R, line: &mut String| -> Result<bool, GeometryError> {
        line.clear();
        Ok(reader.read_line(line)? > 0)
    };

    if !read_line(&mut reader, &mut line)? || line.trim() != "ply" {
        return Err(bad("missing 'ply' magic line".into()));
    }

    let mut vertex_count: Option<usize> = None;
    let mut properties: Vec<String> = Vec::new();
    let mut label_names: HashMap<i64, String> = HashMap::new();
    loop {
        if !read_line(&mut reader, &mut line)? {
            return Err(bad("header ended before end_header".into()));
        }
        let trimmed = line.trim();
        if trimmed == "end_header" {
            break;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", "ascii", _] => {}
            ["comment", "label", idx, name @ ..] if !name.is_empty() => {
                let idx: i64 = idx
                    .parse()
                    .map_err(|_| bad(format!("bad label index in header: {trimmed}")))?;
                label_names.insert(idx, name.join(" "));
            }
            ["comment", ..] => {}
            ["element", "vertex", n] => {
                vertex_count = Some(
                    n.parse()
                        .map_err(|_| bad(format!("bad vertex count: {n}")))?,
                );
            }
            ["element", name, _] => {
                return Err(bad(format!("unsupported element: {name}")));
            }
            ["property", _ty, name] => properties.push((*name).to_string()),
            _ => return Err(bad(format!("unrecognized header line: {trimmed}"))),
        }
    }

    let vertex_count = vertex_count.ok_or_else(|| bad("header missing element vertex".into()))?;
    let xi = properties.iter().position(|p| p == "x");
    let yi = properties.iter().position(|p| p == "y");
    let zi = properties.iter().position(|p| p == "z");
    let li = properties.iter().position(|p| p == "label");
    let (xi, yi, zi) = match (xi, yi, zi) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(bad("header must declare x, y, z properties".into())),
    };

    let mut points = Vec::with_capacity(vertex_count);
    let mut labels: Vec<String> = Vec::new();
    for row in 0..vertex_count {
        if !read_line(&mut reader, &mut line)? {
            return Err(bad(format!(
                "expected {vertex_count} vertices, file ended at {row}"
            )));
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != properties.len() {
            return Err(bad(format!(
                "vertex {row}: {} fields, header declares {}",
                fields.len(),
                properties.len()
            )));
        }
        let coord = |i: usize| -> Result<f64, GeometryError> {
            fields[i]
                .parse::<f64>()
                .map_err(|_| bad(format!("vertex {row}: bad number {:?}", fields[i])))
        };
        points.push(Point3::new(coord(xi)?, coord(yi)?, coord(zi)?));
        if let Some(li) = li {
            let idx: i64 = fields[li]
                .parse()
                .map_err(|_| bad(format!("vertex {row}: bad label index {:?}", fields[li])))?;
            let name = label_names
                .get(&idx)
                .ok_or_else(|| bad(format!("vertex {row}: label index {idx} not in header")))?;
            labels.push(name.clone());
        }
    }

    let cloud = PointCloud::new(points)?;
    if li.is_some() {
        cloud.with_labels(labels)
    } else {
        Ok(cloud)
    }
}

/// Write a labeled cloud in the same ASCII format [`load_point_cloud`] reads.
pub fn write_point_cloud(path: &Path, cloud: &PointCloud) -> Result<(), GeometryError> {
    use std::io::Write;
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    let mut index_of: HashMap<&str, usize> = HashMap::new();
    if let Some(labels) = cloud.labels() {
        let mut names: Vec<&str> = Vec::new();
        for l in labels {
            if !index_of.contains_key(l.as_str()) {
                index_of.insert(l.as_str(), names.len());
                names.push(l);
            }
        }
        for (i, name) in names.iter().enumerate() {
            out.push_str(&format!("comment label {i} {name}\n"));
        }
    }
    out.push_str(&format!("element vertex {}\n", cloud.len()));
    out.push_str("property float x\nproperty float y\nproperty float z\n");
    if cloud.labels().is_some() {
        out.push_str("property int label\n");
    }
    out.push_str("end_header\n");
    for (i, p) in cloud.points().iter().enumerate() {
        match cloud.labels() {
            Some(labels) => out.push_str(&format!(
                "{} {} {} {}\n",
                p.x, p.y, p.z, index_of[labels[i].as_str()]
            )),
            None => out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z)),
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}
