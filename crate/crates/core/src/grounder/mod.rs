//! The visual-grounding tool pair: target finder and landmark finder.
//!
//! Grounding a noun phrase works in four steps: score every point against
//! the phrase (the relevance field), keep the high-relevance quantile,
//! cluster the survivors with DBSCAN, and wrap each cluster in a bounding
//! box. The target finder reports candidate boxes with volumes; the
//! landmark finder reports the best box for a landmark phrase plus the
//! distance from every target candidate's centroid to it.

mod dbscan;

pub use dbscan::{dbscan, ClusterLabels, NOISE};

use crate::geometry::{Aabb, GeometryError, Point3, PointCloud};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GrounderError {
    #[error("phrase must be non-empty")]
    EmptyPhrase,
    #[error("backend mismatch: {0}")]
    BackendMismatch(String),
    #[error("embedding failed for phrase {phrase:?}: {source}")]
    Embedding {
        phrase: String,
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("invalid grounder params: {0}")]
    BadParams(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Turns a text phrase into a unit-norm embedding of the cloud's feature
/// dimension.
pub trait PhraseEmbedder: Send + Sync {
    fn embed(&self, phrase: &str) -> Result<Vec<f32>, Box<dyn std::error::Error + Send + Sync>>;
}

/// How per-point relevance is computed.
///
/// `Labels` is the mock backend: a point scores 1.0 when any phrase token
/// matches a token of its label, else 0.0. It deliberately reproduces the
/// bag-of-words behavior of CLIP-style grounders, where a full sentence
/// lights up landmarks as well as the target. `Features` computes cosine
/// similarity between the phrase embedding and per-point features, mapped
/// to [0, 1] via (1 + cos) / 2.
#[derive(Clone)]
pub enum RelevanceBackend {
    Labels,
    Features(Arc<dyn PhraseEmbedder>),
}

impl std::fmt::Debug for RelevanceBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RelevanceBackend::Labels => write!(f, "Labels"),
            RelevanceBackend::Features(_) => write!(f, "Features(..)"),
        }
    }
}

/// One relevance score per point, all in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceField {
    pub scores: Vec<f64>,
    pub phrase: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrounderParams {
    /// Empirical quantile defining the "high relevance" cutoff.
    pub quantile: f64,
    /// DBSCAN neighborhood radius in meters.
    pub eps: f64,
    /// DBSCAN minimum neighbor count (core point threshold).
    pub min_pts: usize,
    /// Candidates kept per tool response.
    pub max_candidates: usize,
}

impl Default for GrounderParams {
    fn default() -> Self {
        // indoor-furniture scale defaults
        Self {
            quantile: 0.98,
            eps: 0.15,
            min_pts: 10,
            max_candidates: 8,
        }
    }
}

impl GrounderParams {
    pub fn validate(&self) -> Result<(), GrounderError> {
        if !(0.0 < self.quantile && self.quantile < 1.0) {
            return Err(GrounderError::BadParams(format!(
                "quantile {} not in (0, 1)",
                self.quantile
            )));
        }
        if !self.eps.is_finite() || self.eps <= 0.0 {
            return Err(GrounderError::BadParams(format!("eps {} <= 0", self.eps)));
        }
        if self.min_pts == 0 || self.max_candidates == 0 {
            return Err(GrounderError::BadParams(
                "min_pts and max_candidates must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A grounded proposal for one phrase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub candidate_id: u32,
    #[serde(rename = "box")]
    pub aabb: Aabb,
    /// Mean relevance of member points, in [0, 1].
    pub grounder_score: f64,
    pub volume: f64,
    pub point_count: usize,
    /// Distance from this candidate's centroid to each resolved landmark,
    /// filled in by the landmark finder.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub landmark_distances: BTreeMap<String, f64>,
    /// Indices into the scene cloud of the member points. Not part of the
    /// tool wire format.
    #[serde(skip)]
    pub point_indices: Vec<usize>,
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn relevance_field(
    cloud: &PointCloud,
    phrase: &str,
    backend: &RelevanceBackend,
) -> Result<RelevanceField, GrounderError> {
    if phrase.trim().is_empty() {
        return Err(GrounderError::EmptyPhrase);
    }
    let scores = match backend {
        RelevanceBackend::Labels => {
            let labels = cloud.labels().ok_or_else(|| {
                GrounderError::BackendMismatch("label backend requires per-point labels".into())
            })?;
            let phrase_tokens = tokenize(phrase);
            labels
                .iter()
                .map(|label| {
                    let hit = tokenize(label)
                        .iter()
                        .any(|t| phrase_tokens.iter().any(|p| p == t));
                    if hit {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        }
        RelevanceBackend::Features(embedder) => {
            let dim = cloud.feature_dim().ok_or_else(|| {
                GrounderError::BackendMismatch(
                    "feature backend requires per-point feature vectors".into(),
                )
            })?;
            let embedding = embedder
                .embed(phrase)
                .map_err(|source| GrounderError::Embedding {
                    phrase: phrase.to_string(),
                    source,
                })?;
            if embedding.len() != dim {
                return Err(GrounderError::BackendMismatch(format!(
                    "embedding dimension {} does not match cloud features {dim}",
                    embedding.len()
                )));
            }
            (0..cloud.len())
                .map(|i| {
                    let feat = cloud.feature(i).expect("dim checked");
                    let cos: f64 = feat
                        .iter()
                        .zip(&embedding)
                        .map(|(a, b)| (*a as f64) * (*b as f64))
                        .sum();
                    ((1.0 + cos) / 2.0).clamp(0.0, 1.0)
                })
                .collect()
        }
    };
    Ok(RelevanceField {
        scores,
        phrase: phrase.to_string(),
    })
}

/// Result of the quantile cutoff, including the degenerate-field flag set
/// when every score is identical (the cutoff then keeps everything).
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdResult {
    pub indices: Vec<usize>,
    pub cutoff: f64,
    pub degenerate: bool,
}

/// Keep point indices whose score reaches the empirical `quantile` of the
/// field, ties at the cutoff included. Nearest-rank quantile.
pub fn threshold_points(field: &RelevanceField, quantile: f64) -> ThresholdResult {
    assert!(0.0 < quantile && quantile < 1.0, "quantile must be in (0,1)");
    let n = field.scores.len();
    if n == 0 {
        return ThresholdResult {
            indices: Vec::new(),
            cutoff: 0.0,
            degenerate: false,
        };
    }
    let mut sorted = field.scores.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    let rank = ((quantile * n as f64).ceil() as usize).clamp(1, n);
    let cutoff = sorted[rank - 1];
    let degenerate = sorted[0] == sorted[n - 1];
    let indices = field
        .scores
        .iter()
        .enumerate()
        .filter(|(_, s)| **s >= cutoff)
        .map(|(i, _)| i)
        .collect();
    ThresholdResult {
        indices,
        cutoff,
        degenerate,
    }
}

/// Full grounding pipeline for one phrase: relevance, threshold, cluster,
/// box. Candidates come back sorted by score descending (ties to the lower
/// cluster id), truncated to `max_candidates`, ids reassigned 0..k.
pub fn find_candidates(
    cloud: &PointCloud,
    phrase: &str,
    params: &GrounderParams,
    backend: &RelevanceBackend,
) -> Result<Vec<Candidate>, GrounderError> {
    params.validate()?;
    let field = relevance_field(cloud, phrase, backend)?;
    if field.scores.iter().all(|s| *s <= 0.0) {
        return Ok(Vec::new());
    }
    let threshold = threshold_points(&field, params.quantile);
    if threshold.indices.is_empty() {
        return Ok(Vec::new());
    }
    let subset: Vec<Point3> = threshold
        .indices
        .iter()
        .map(|&i| cloud.points()[i])
        .collect();
    let clustering = dbscan(&subset, params.eps, params.min_pts);
    let mut candidates: Vec<Candidate> = Vec::new();
    for (cluster_id, members) in clustering.members().into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let point_indices: Vec<usize> = members.iter().map(|&j| threshold.indices[j]).collect();
        let points: Vec<Point3> = members.iter().map(|&j| subset[j]).collect();
        let aabb = Aabb::from_points(points.iter())?;
        let grounder_score = point_indices
            .iter()
            .map(|&i| field.scores[i])
            .sum::<f64>()
            / point_indices.len() as f64;
        candidates.push(Candidate {
            candidate_id: cluster_id as u32, // provisional, reassigned after sort
            aabb,
            grounder_score,
            volume: aabb.volume(),
            point_count: point_indices.len(),
            landmark_distances: BTreeMap::new(),
            point_indices,
        });
    }
    candidates.sort_by(|a, b| {
        b.grounder_score
            .partial_cmp(&a.grounder_score)
            .expect("scores are finite")
            .then(a.candidate_id.cmp(&b.candidate_id))
    });
    candidates.truncate(params.max_candidates);
    for (i, c) in candidates.iter_mut().enumerate() {
        c.candidate_id = i as u32;
    }
    Ok(candidates)
}

/// Target-finder tool response: candidate boxes with volumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetFinderResponse {
    pub phrase: String,
    pub candidates: Vec<Candidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub fn target_finder(
    cloud: &PointCloud,
    phrase: &str,
    params: &GrounderParams,
    backend: &RelevanceBackend,
) -> Result<TargetFinderResponse, GrounderError> {
    let candidates = find_candidates(cloud, phrase, params, backend)?;
    let note = if candidates.is_empty() {
        Some("no candidates found for this phrase".to_string())
    } else {
        None
    };
    Ok(TargetFinderResponse {
        phrase: phrase.to_string(),
        candidates,
        note,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateDistance {
    pub candidate_id: u32,
    pub meters: f64,
}

/// Landmark-finder tool response: the single best box for the landmark
/// phrase plus the centroid distance from every target candidate to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkFinderResponse {
    pub phrase: String,
    pub landmark: Option<Candidate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub distances: Vec<CandidateDistance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub fn landmark_finder(
    cloud: &PointCloud,
    phrase: &str,
    params: &GrounderParams,
    backend: &RelevanceBackend,
    targets: &[Candidate],
) -> Result<LandmarkFinderResponse, GrounderError> {
    let candidates = find_candidates(cloud, phrase, params, backend)?;
    let Some(landmark) = candidates.into_iter().next() else {
        return Ok(LandmarkFinderResponse {
            phrase: phrase.to_string(),
            landmark: None,
            distances: Vec::new(),
            note: Some("landmark not found".to_string()),
        });
    };
    let distances = targets
        .iter()
        .map(|t| CandidateDistance {
            candidate_id: t.candidate_id,
            meters: t.aabb.centroid_distance(&landmark.aabb),
        })
        .collect();
    Ok(LandmarkFinderResponse {
        phrase: phrase.to_string(),
        landmark: Some(landmark),
        distances,
        note: None,
    })
}

/// Embedding-service client: POSTs `{"phrase": ...}` and expects
/// `{"embedding": [...]}` with a unit-norm vector.
pub struct HttpEmbedder {
    endpoint: String,
    timeout: std::time::Duration,
}

impl HttpEmbedder {
    pub fn new(endpoint: impl Into<String>, timeout: std::time::Duration) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout,
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    phrase: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embedding: Vec<f32>,
}

impl PhraseEmbedder for HttpEmbedder {
    fn embed(&self, phrase: &str) -> Result<Vec<f32>, Box<dyn std::error::Error + Send + Sync>> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let response: EmbedResponse = agent
            .post(&self.endpoint)
            .send_json(&EmbedRequest { phrase })?
            .body_mut()
            .read_json()?;
        Ok(response.embedding)
    }
}
