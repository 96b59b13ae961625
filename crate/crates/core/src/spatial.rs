//! Deterministic spatial and commonsense reasoning over candidates.
//!
//! Used two ways: as the verifier behind the agent loop's fallback, and as
//! a standalone LLM-free resolver. Scores are distances, lower is better.
//! A candidate whose distance to a landmark does not comply with the
//! relation (wrong side for above/below) is pushed behind every compliant
//! one via a batch sentinel rather than an infinity, so ranking stays
//! finite and comparable.

use crate::geometry::Aabb;
use crate::grounder::{
    find_candidates, landmark_finder, Candidate, GrounderError, GrounderParams, RelevanceBackend,
};
use crate::query::{parse_query_rules, ParseError, ParsedQuery, SpatialRelation};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpatialError {
    #[error("relation {relation:?} expects {expected} landmark(s), got {got}")]
    RelationArity {
        relation: String,
        expected: usize,
        got: usize,
    },
    #[error("no candidates to select from")]
    NoCandidates,
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Grounder(#[from] GrounderError),
}

/// Relation-compliance score for one candidate; lower is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationScore {
    pub candidate_id: u32,
    pub relation: SpatialRelation,
    pub score: f64,
    /// Set when the relation was unsupported and scored as NEAR.
    pub low_confidence: bool,
}

/// Volume plausibility bounds; the global default floor of 0.01 m^3 is the
/// scale at which an indoor "chair" candidate is almost surely a false
/// positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeFilterConfig {
    pub min_volume: f64,
    pub max_volume: Option<f64>,
    #[serde(default)]
    pub per_class: BTreeMap<String, (f64, Option<f64>)>,
}

impl Default for VolumeFilterConfig {
    fn default() -> Self {
        Self {
            min_volume: 0.01,
            max_volume: None,
            per_class: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeRejection {
    pub candidate_id: u32,
    pub volume: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeFilterOutcome {
    pub kept: Vec<Candidate>,
    pub rejections: Vec<VolumeRejection>,
    /// True when every candidate fell outside the bounds and the filter
    /// was skipped: a wrong box still scores partial IoU, no box scores
    /// none.
    pub skipped: bool,
}

/// Drop candidates with implausible volumes for `class` (or the global
/// default bounds). Never empties a non-empty input.
pub fn filter_by_volume(
    candidates: &[Candidate],
    class: Option<&str>,
    config: &VolumeFilterConfig,
) -> VolumeFilterOutcome {
    let (min, max) = class
        .and_then(|c| config.per_class.get(c))
        .map(|(lo, hi)| (*lo, *hi))
        .unwrap_or((config.min_volume, config.max_volume));
    let mut kept = Vec::new();
    let mut rejections = Vec::new();
    for c in candidates {
        if c.volume < min {
            rejections.push(VolumeRejection {
                candidate_id: c.candidate_id,
                volume: c.volume,
                reason: format!("volume {:.4} m^3 below minimum {min:.4}", c.volume),
            });
        } else if max.is_some_and(|m| c.volume > m) {
            rejections.push(VolumeRejection {
                candidate_id: c.candidate_id,
                volume: c.volume,
                reason: format!(
                    "volume {:.4} m^3 above maximum {:.4}",
                    c.volume,
                    max.unwrap()
                ),
            });
        } else {
            kept.push(c.clone());
        }
    }
    if kept.is_empty() && !candidates.is_empty() {
        return VolumeFilterOutcome {
            kept: candidates.to_vec(),
            rejections: vec![VolumeRejection {
                candidate_id: candidates[0].candidate_id,
                volume: candidates[0].volume,
                reason: "all candidates outside volume bounds; filter skipped".to_string(),
            }],
            skipped: true,
        };
    }
    VolumeFilterOutcome {
        kept,
        rejections,
        skipped: false,
    }
}

fn expected_arity(relation: &SpatialRelation) -> usize {
    match relation {
        SpatialRelation::Between => 2,
        _ => 1,
    }
}

/// Score every candidate against one relation and its landmark box(es).
///
/// Batch-level post-processing replaces the non-compliance sentinel with
/// (max finite score + 1) and shifts FARTHEST scores by the batch maximum
/// distance so all scores stay finite and >= 0.
pub fn relation_scores(
    candidates: &[Candidate],
    relation: &SpatialRelation,
    landmarks: &[Aabb],
) -> Result<Vec<RelationScore>, SpatialError> {
    let expected = expected_arity(relation);
    if landmarks.len() != expected {
        return Err(SpatialError::RelationArity {
            relation: format!("{relation:?}"),
            expected,
            got: landmarks.len(),
        });
    }
    let low_confidence = !relation.is_supported();
    // raw score, or None for the non-compliance sentinel
    let raw: Vec<Option<f64>> = candidates
        .iter()
        .map(|c| {
            let d = |l: &Aabb| c.aabb.centroid_distance(l);
            match relation {
                SpatialRelation::Between => Some(d(&landmarks[0]) + d(&landmarks[1])),
                SpatialRelation::Near
                | SpatialRelation::In
                | SpatialRelation::On
                | SpatialRelation::Closest
                | SpatialRelation::Unsupported(_) => Some(d(&landmarks[0])),
                SpatialRelation::Above => {
                    (c.aabb.centroid.z > landmarks[0].centroid.z).then(|| d(&landmarks[0]))
                }
                SpatialRelation::Below => {
                    (c.aabb.centroid.z < landmarks[0].centroid.z).then(|| d(&landmarks[0]))
                }
                SpatialRelation::Farthest => Some(-d(&landmarks[0])),
            }
        })
        .collect();
    let max_finite = raw
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let scores = raw
        .into_iter()
        .zip(candidates)
        .map(|(score, c)| {
            let score = match (score, relation) {
                (Some(s), SpatialRelation::Farthest) => max_finite + s, // = max_d - d
                (Some(s), _) => s,
                (None, _) => max_finite + 1.0,
            };
            RelationScore {
                candidate_id: c.candidate_id,
                relation: relation.clone(),
                score,
                low_confidence,
            }
        })
        .collect();
    Ok(scores)
}

/// One ranked entry from [`select_candidate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub candidate: Candidate,
    pub total_score: f64,
    pub relation_scores: Vec<RelationScore>,
    /// IN tie-break bonus: candidate centroid inside the landmark box.
    pub contained_in_landmark: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub chosen: Candidate,
    pub ranked: Vec<RankedCandidate>,
    pub volume_filter: VolumeFilterOutcome,
}

/// Pick the candidate that best satisfies every landmark relation of the
/// query: volume filter, then sum of relation scores ranked ascending.
/// Ties go to the higher grounder score, then the lower candidate id.
/// Queries without landmarks rank by grounder score descending.
pub fn select_candidate(
    parsed: &ParsedQuery,
    targets: &[Candidate],
    landmark_boxes: &[(String, Aabb)],
) -> Result<Selection, SpatialError> {
    select_candidate_with(parsed, targets, landmark_boxes, &VolumeFilterConfig::default())
}

pub fn select_candidate_with(
    parsed: &ParsedQuery,
    targets: &[Candidate],
    landmark_boxes: &[(String, Aabb)],
    volume_config: &VolumeFilterConfig,
) -> Result<Selection, SpatialError> {
    if targets.is_empty() {
        return Err(SpatialError::NoCandidates);
    }
    let volume_filter = filter_by_volume(targets, Some(parsed.target.as_str()), volume_config);
    let pool = &volume_filter.kept;

    // resolve each query landmark to its box; Between consumes two entries
    let mut per_candidate: Vec<RankedCandidate> = pool
        .iter()
        .map(|c| RankedCandidate {
            candidate: c.clone(),
            total_score: 0.0,
            relation_scores: Vec::new(),
            contained_in_landmark: false,
        })
        .collect();

    let mut between_boxes: Vec<Aabb> = Vec::new();
    for landmark in &parsed.landmarks {
        let Some((_, lbox)) = landmark_boxes.iter().find(|(name, _)| *name == landmark.phrase)
        else {
            continue; // unresolved landmark contributes nothing
        };
        if landmark.relation == SpatialRelation::Between {
            between_boxes.push(*lbox);
            if between_boxes.len() < 2 {
                continue;
            }
            let scores = relation_scores(pool, &SpatialRelation::Between, &between_boxes)?;
            between_boxes.clear();
            for (rc, s) in per_candidate.iter_mut().zip(scores) {
                rc.total_score += s.score;
                rc.relation_scores.push(s);
            }
        } else {
            let scores =
                relation_scores(pool, &landmark.relation, std::slice::from_ref(lbox))?;
            for (rc, s) in per_candidate.iter_mut().zip(scores) {
                rc.total_score += s.score;
                rc.relation_scores.push(s);
            }
            if landmark.relation == SpatialRelation::In {
                for rc in per_candidate.iter_mut() {
                    if lbox.contains(&rc.candidate.aabb.centroid) {
                        rc.contained_in_landmark = true;
                    }
                }
            }
        }
    }

    let scored_any = per_candidate.iter().any(|rc| !rc.relation_scores.is_empty());
    per_candidate.sort_by(|a, b| {
        let key = if scored_any {
            a.total_score
                .partial_cmp(&b.total_score)
                .expect("finite scores")
                .then(b.contained_in_landmark.cmp(&a.contained_in_landmark))
        } else {
            b.candidate
                .grounder_score
                .partial_cmp(&a.candidate.grounder_score)
                .expect("finite scores")
        };
        key.then(
            b.candidate
                .grounder_score
                .partial_cmp(&a.candidate.grounder_score)
                .expect("finite scores"),
        )
        .then(a.candidate.candidate_id.cmp(&b.candidate.candidate_id))
    });

    Ok(Selection {
        chosen: per_candidate[0].candidate.clone(),
        ranked: per_candidate,
        volume_filter,
    })
}

/// Full deterministic resolver: parse, ground target and landmarks, select.
/// This is both the `resolver` benchmark strategy and the agent's fallback.
pub fn resolve(
    scene: &crate::geometry::PointCloud,
    query_text: &str,
    params: &GrounderParams,
    backend: &RelevanceBackend,
    volume_config: &VolumeFilterConfig,
) -> Result<Selection, SpatialError> {
    let parsed = parse_query_rules(query_text)?;
    let targets = find_candidates(scene, &parsed.target, params, backend)?;
    if targets.is_empty() {
        return Err(SpatialError::NoCandidates);
    }
    let mut landmark_boxes = Vec::new();
    for landmark in &parsed.landmarks {
        let resp = landmark_finder(scene, &landmark.phrase, params, backend, &targets)?;
        if let Some(found) = resp.landmark {
            landmark_boxes.push((landmark.phrase.clone(), found.aabb));
        }
    }
    select_candidate_with(&parsed, &targets, &landmark_boxes, volume_config)
}
