//! Zero-shot, open-vocabulary 3D visual grounding.
//!
//! The pipeline decomposes a compositional referring expression ("a chair
//! between the dining table and window") into a target phrase and landmark
//! phrases, grounds each sub-query in a point cloud by clustering
//! high-relevance points into candidate boxes, and selects the referent by
//! spatial and commonsense reasoning. Selection runs either through an
//! LLM agent loop ([`agent`]) or a deterministic resolver ([`spatial`]).
//! The [`eval`] module provides a ScanRefer-style benchmark harness with
//! difficulty and complexity analyses, plus a synthetic scene generator
//! that runs fully offline.

pub mod agent;
pub mod eval;
pub mod geometry;
pub mod grounder;
pub mod query;
pub mod spatial;

pub use geometry::{Aabb, Point3, PointCloud};
pub use grounder::{Candidate, GrounderParams, RelevanceBackend};
pub use query::{ParsedQuery, SpatialRelation};
