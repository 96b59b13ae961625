//! Seed-deterministic synthetic scene generator.
//!
//! A desk-scale stand-in for real scan data: every scene is a set of
//! labeled point blobs in a 10x10x2.5 m room. One target-class object is
//! placed to satisfy a sampled spatial relation against one or two
//! landmark objects; `k` distractors of the same class are placed to
//! violate it, each losing to the correct candidate's relation score by at
//! least 20%. Queries are templated from the relation, so the whole
//! benchmark runs offline with the mock label backend.
//!
//! Target classes are deliberately larger than landmark classes: with no
//! distractors the bag-of-words baseline (largest cluster for the full
//! sentence) still finds the sole target, while distractors of the same
//! class make its pick essentially random.

use super::{BenchmarkQuery, GtObject, SceneGroundTruth};
use crate::geometry::{Aabb, Point3, PointCloud};
use crate::grounder::{Candidate, GrounderParams};
use crate::query::SpatialRelation;
use crate::spatial::relation_scores;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
#[error("scene generation failed for seed {seed}, scene {scene_index}: {message}")]
pub struct SynthError {
    pub seed: u64,
    pub scene_index: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_scenes: usize,
    pub k_distractors: usize,
    pub relations: Vec<SpatialRelation>,
    /// Points per cubic meter of object volume (floor of 30 points per
    /// object).
    pub point_density: f64,
    /// Scene ids are `{scene_prefix}{index:04}`; distinct prefixes let two
    /// generated suites merge without id collisions.
    pub scene_prefix: String,
    /// Draw targets from the small classes and landmarks from the large
    /// ones. The largest-cluster baseline then loses even without
    /// distractors, which is how the low-difficulty split gets headroom.
    pub swap_roles: bool,
}

impl SynthConfig {
    pub fn new(seed: u64, n_scenes: usize, k_distractors: usize) -> Self {
        Self {
            seed,
            n_scenes,
            k_distractors,
            scene_prefix: "synth".into(),
            swap_roles: false,
            relations: vec![
                SpatialRelation::Between,
                SpatialRelation::Near,
                SpatialRelation::Closest,
                SpatialRelation::Farthest,
                SpatialRelation::Above,
                SpatialRelation::Below,
            ],
            point_density: 350.0,
        }
    }

    /// Grounder parameters matched to the generator's blob density. The
    /// quantile sits high enough that a small object's points survive
    /// thresholding even when large furniture dominates the scene.
    pub fn recommended_params() -> GrounderParams {
        GrounderParams {
            quantile: 0.995,
            eps: 0.3,
            min_pts: 5,
            max_candidates: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthSuite {
    pub scenes: BTreeMap<String, PointCloud>,
    pub queries: Vec<BenchmarkQuery>,
    pub ground_truth: BTreeMap<String, SceneGroundTruth>,
}

const ROOM_XY: f64 = 5.0;
const ROOM_Z: f64 = 2.5;
/// Inflation applied to boxes for the separation check; keeps blob point
/// sets farther apart than any sane clustering eps.
const CLEARANCE: f64 = 0.35;

const TARGET_CLASSES: &[(&str, [f64; 3])] = &[
    ("table", [1.4, 0.8, 0.75]),
    ("sofa", [1.8, 0.9, 0.8]),
    ("bed", [2.0, 1.5, 0.6]),
    ("desk", [1.2, 0.6, 0.75]),
    ("bookshelf", [0.9, 0.35, 1.8]),
];

const LANDMARK_CLASSES: &[(&str, [f64; 3])] = &[
    ("lamp", [0.3, 0.3, 0.5]),
    ("plant", [0.4, 0.4, 0.6]),
    ("pillow", [0.5, 0.4, 0.25]),
    ("monitor", [0.5, 0.2, 0.4]),
    ("box", [0.4, 0.4, 0.4]),
];

struct PlacedObject {
    class: String,
    aabb: Aabb,
}

fn jittered_extents(rng: &mut ChaCha8Rng, base: [f64; 3]) -> [f64; 3] {
    base.map(|e| e * rng.gen_range(0.85..1.15))
}

fn in_room(aabb: &Aabb) -> bool {
    let min = aabb.min_corner();
    let max = aabb.max_corner();
    min.x >= -ROOM_XY && max.x <= ROOM_XY
        && min.y >= -ROOM_XY && max.y <= ROOM_XY
        && min.z >= 0.0 && max.z <= ROOM_Z
}

fn separated(aabb: &Aabb, others: &[PlacedObject]) -> bool {
    others.iter().all(|o| {
        let a = Aabb::new(aabb.centroid, aabb.extents.map(|e| e + 2.0 * CLEARANCE));
        a.iou(&o.aabb) == 0.0 && {
            // iou 0 also holds for touching boxes; require a real gap
            let amin = a.min_corner();
            let amax = a.max_corner();
            let bmin = o.aabb.min_corner();
            let bmax = o.aabb.max_corner();
            amax.x < bmin.x || bmax.x < amin.x
                || amax.y < bmin.y || bmax.y < amin.y
                || amax.z < bmin.z || bmax.z < amin.z
        }
    })
}

fn floor_z(rng: &mut ChaCha8Rng, extents: &[f64; 3]) -> f64 {
    extents[2] / 2.0 + rng.gen_range(0.0..0.05)
}

fn random_xy(rng: &mut ChaCha8Rng, extents: &[f64; 3]) -> (f64, f64) {
    let margin_x = extents[0] / 2.0 + 0.1;
    let margin_y = extents[1] / 2.0 + 0.1;
    (
        rng.gen_range(-(ROOM_XY - margin_x)..(ROOM_XY - margin_x)),
        rng.gen_range(-(ROOM_XY - margin_y)..(ROOM_XY - margin_y)),
    )
}

fn pseudo_candidate(id: u32, aabb: Aabb) -> Candidate {
    Candidate {
        candidate_id: id,
        aabb,
        grounder_score: 1.0,
        volume: aabb.volume(),
        point_count: 0,
        landmark_distances: BTreeMap::new(),
        point_indices: Vec::new(),
    }
}

/// Correct candidate must beat every distractor by >= 20% (plus a small
/// absolute floor so zero-score relations still separate).
fn margin_ok(relation: &SpatialRelation, target: &Aabb, distractors: &[Aabb], landmarks: &[Aabb]) -> bool {
    let mut batch = vec![pseudo_candidate(0, *target)];
    batch.extend(
        distractors
            .iter()
            .enumerate()
            .map(|(i, b)| pseudo_candidate(i as u32 + 1, *b)),
    );
    let Ok(scores) = relation_scores(&batch, relation, landmarks) else {
        return false;
    };
    let target_score = scores[0].score;
    scores[1..]
        .iter()
        .all(|s| s.score >= 1.2 * target_score + 0.1)
}

fn query_text(relation: &SpatialRelation, target: &str, landmarks: &[&str]) -> String {
    match relation {
        SpatialRelation::Between => format!(
            "the {target} between the {} and the {}",
            landmarks[0], landmarks[1]
        ),
        SpatialRelation::Near => format!("the {target} near the {}", landmarks[0]),
        SpatialRelation::Closest => format!("the {target} closest to the {}", landmarks[0]),
        SpatialRelation::Farthest => format!("the {target} farthest from the {}", landmarks[0]),
        SpatialRelation::Above => format!("the {target} above the {}", landmarks[0]),
        SpatialRelation::Below => format!("the {target} below the {}", landmarks[0]),
        other => unreachable!("relation {other:?} not in the synthetic mix"),
    }
}

fn try_generate_scene(
    rng: &mut ChaCha8Rng,
    relation: &SpatialRelation,
    k: usize,
    swap_roles: bool,
) -> Option<(Vec<PlacedObject>, usize, Vec<usize>)> {
    let (target_classes, landmark_classes) = if swap_roles {
        (LANDMARK_CLASSES, TARGET_CLASSES)
    } else {
        (TARGET_CLASSES, LANDMARK_CLASSES)
    };
    let (target_class, target_base) =
        target_classes[rng.gen_range(0..target_classes.len())];
    let n_landmarks = if *relation == SpatialRelation::Between { 2 } else { 1 };
    let mut landmark_pool: Vec<usize> = (0..landmark_classes.len()).collect();
    let mut objects: Vec<PlacedObject> = Vec::new();
    let mut landmark_indices = Vec::new();

    // landmarks first
    let mut landmark_boxes = Vec::new();
    for _ in 0..n_landmarks {
        let pick = rng.gen_range(0..landmark_pool.len());
        let (class, base) = landmark_classes[landmark_pool.remove(pick)];
        let extents = jittered_extents(rng, base);
        let aabb = 'placed: {
            for _ in 0..60 {
                let (x, y) = random_xy(rng, &extents);
                let z = match relation {
                    SpatialRelation::Above => rng.gen_range(0.8..1.2),
                    SpatialRelation::Below => rng.gen_range(1.6..2.0),
                    _ => floor_z(rng, &extents),
                };
                let candidate = Aabb::new(Point3::new(x, y, z), extents);
                if *relation == SpatialRelation::Between && !landmark_boxes.is_empty() {
                    let d = candidate.centroid_distance(&landmark_boxes[0]);
                    if !(3.0..6.5).contains(&d) {
                        continue;
                    }
                }
                if in_room(&candidate) && separated(&candidate, &objects) {
                    break 'placed candidate;
                }
            }
            return None;
        };
        landmark_boxes.push(aabb);
        landmark_indices.push(objects.len());
        objects.push(PlacedObject {
            class: class.to_string(),
            aabb,
        });
    }

    // target placed to satisfy the relation
    let target_extents = jittered_extents(rng, target_base);
    let target_aabb = 'placed: {
        for _ in 0..80 {
            let candidate = match relation {
                SpatialRelation::Between => {
                    let a = landmark_boxes[0].centroid;
                    let b = landmark_boxes[1].centroid;
                    Aabb::new(
                        Point3::new(
                            (a.x + b.x) / 2.0 + rng.gen_range(-0.2..0.2),
                            (a.y + b.y) / 2.0 + rng.gen_range(-0.2..0.2),
                            floor_z(rng, &target_extents),
                        ),
                        target_extents,
                    )
                }
                SpatialRelation::Near | SpatialRelation::Closest => {
                    let l = landmark_boxes[0].centroid;
                    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                    let d = rng.gen_range(1.2..1.8);
                    Aabb::new(
                        Point3::new(
                            l.x + d * angle.cos(),
                            l.y + d * angle.sin(),
                            floor_z(rng, &target_extents),
                        ),
                        target_extents,
                    )
                }
                SpatialRelation::Farthest => {
                    let l = landmark_boxes[0].centroid;
                    let (x, y) = random_xy(rng, &target_extents);
                    let candidate = Aabb::new(
                        Point3::new(x, y, floor_z(rng, &target_extents)),
                        target_extents,
                    );
                    if candidate.centroid.distance(&l) < 6.0 {
                        continue;
                    }
                    candidate
                }
                SpatialRelation::Above => {
                    let l = landmark_boxes[0].centroid;
                    Aabb::new(
                        Point3::new(
                            l.x + rng.gen_range(-0.3..0.3),
                            l.y + rng.gen_range(-0.3..0.3),
                            (l.z + rng.gen_range(0.7..0.9))
                                .min(ROOM_Z - target_extents[2] / 2.0 - 0.05),
                        ),
                        target_extents,
                    )
                }
                SpatialRelation::Below => {
                    let l = landmark_boxes[0].centroid;
                    Aabb::new(
                        Point3::new(
                            l.x + rng.gen_range(-0.3..0.3),
                            l.y + rng.gen_range(-0.3..0.3),
                            floor_z(rng, &target_extents),
                        ),
                        target_extents,
                    )
                }
                other => unreachable!("relation {other:?} not in the synthetic mix"),
            };
            if in_room(&candidate) && separated(&candidate, &objects) {
                break 'placed candidate;
            }
        }
        return None;
    };
    let target_index = objects.len();
    objects.push(PlacedObject {
        class: target_class.to_string(),
        aabb: target_aabb,
    });

    // distractors of the target class, placed to violate the relation
    let mut distractor_boxes: Vec<Aabb> = Vec::new();
    for _ in 0..k {
        let extents = jittered_extents(rng, target_base);
        let aabb = 'placed: {
            for _ in 0..80 {
                let (x, y) = random_xy(rng, &extents);
                let z = match relation {
                    // above/below distractors sit on the wrong side
                    SpatialRelation::Above => {
                        let limit = landmark_boxes[0].centroid.z - 0.1;
                        if extents[2] / 2.0 >= limit {
                            continue;
                        }
                        rng.gen_range(extents[2] / 2.0..limit)
                    }
                    SpatialRelation::Below => {
                        let low = landmark_boxes[0].centroid.z + 0.1;
                        let high = ROOM_Z - extents[2] / 2.0 - 0.05;
                        if low >= high {
                            continue;
                        }
                        rng.gen_range(low..high)
                    }
                    _ => floor_z(rng, &extents),
                };
                let candidate = Aabb::new(Point3::new(x, y, z), extents);
                if !in_room(&candidate) || !separated(&candidate, &objects) {
                    continue;
                }
                let mut with_candidate = distractor_boxes.clone();
                with_candidate.push(candidate);
                if margin_ok(relation, &target_aabb, &with_candidate, &landmark_boxes) {
                    break 'placed candidate;
                }
            }
            return None;
        };
        distractor_boxes.push(aabb);
        objects.push(PlacedObject {
            class: target_class.to_string(),
            aabb,
        });
    }

    Some((objects, target_index, landmark_indices))
}

fn sample_blob(rng: &mut ChaCha8Rng, aabb: &Aabb, density: f64) -> Vec<Point3> {
    let n = ((aabb.volume() * density).round() as usize).max(30);
    let min = aabb.min_corner();
    let max = aabb.max_corner();
    (0..n)
        .map(|_| {
            Point3::new(
                rng.gen_range(min.x..=max.x),
                rng.gen_range(min.y..=max.y),
                rng.gen_range(min.z..=max.z),
            )
        })
        .collect()
}

/// Generate the full suite. Identical configs produce identical scenes,
/// queries, and ground truth.
pub fn synth_generate(config: &SynthConfig) -> Result<SynthSuite, SynthError> {
    assert!(!config.relations.is_empty(), "relation mix must be non-empty");
    let mut scenes = BTreeMap::new();
    let mut queries = Vec::new();
    let mut ground_truth = BTreeMap::new();

    for scene_index in 0..config.n_scenes {
        let scene_id = format!("{}{scene_index:04}", config.scene_prefix);
        let relation = &config.relations[scene_index % config.relations.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(
            config
                .seed
                .wrapping_mul(0x9E3779B97F4A7C15)
                .wrapping_add(scene_index as u64),
        );
        let mut placed = None;
        for _ in 0..25 {
            if let Some(result) =
                try_generate_scene(&mut rng, relation, config.k_distractors, config.swap_roles)
            {
                placed = Some(result);
                break;
            }
        }
        let (objects, target_index, landmark_indices) = placed.ok_or_else(|| SynthError {
            seed: config.seed,
            scene_index,
            message: format!("no feasible placement for relation {relation:?}"),
        })?;

        let mut points = Vec::new();
        let mut labels = Vec::new();
        let mut gt = SceneGroundTruth::new();
        for (object_id, object) in objects.iter().enumerate() {
            let blob = sample_blob(&mut rng, &object.aabb, config.point_density);
            let blob_box = Aabb::from_points(blob.iter()).expect("blob is non-empty");
            labels.extend(std::iter::repeat_n(object.class.clone(), blob.len()));
            points.extend(blob);
            gt.insert(
                object_id.to_string(),
                GtObject {
                    object_name: object.class.clone(),
                    centroid: blob_box.centroid,
                    extents: blob_box.extents,
                },
            );
        }
        let cloud = PointCloud::new(points)
            .expect("generated points are finite")
            .with_labels(labels)
            .expect("one label per point");

        let landmark_names: Vec<&str> = landmark_indices
            .iter()
            .map(|&i| objects[i].class.as_str())
            .collect();
        queries.push(BenchmarkQuery {
            scene_id: scene_id.clone(),
            object_id: target_index.to_string(),
            object_name: objects[target_index].class.clone(),
            description: query_text(relation, &objects[target_index].class, &landmark_names),
        });
        ground_truth.insert(scene_id.clone(), gt);
        scenes.insert(scene_id, cloud);
    }

    Ok(SynthSuite {
        scenes,
        queries,
        ground_truth,
    })
}

/// Write the suite in the loader's file formats: one scene file per scene
/// under `scenes/`, plus `annotations.json` and `ground_truth.json`.
pub fn write_suite(dir: &std::path::Path, suite: &SynthSuite) -> std::io::Result<()> {
    let scene_dir = dir.join("scenes");
    std::fs::create_dir_all(&scene_dir)?;
    for (scene_id, cloud) in &suite.scenes {
        crate::geometry::write_point_cloud(&scene_dir.join(format!("{scene_id}.ply")), cloud)
            .map_err(std::io::Error::other)?;
    }
    std::fs::write(
        dir.join("annotations.json"),
        serde_json::to_string_pretty(&suite.queries).expect("serializable"),
    )?;
    std::fs::write(
        dir.join("ground_truth.json"),
        serde_json::to_string_pretty(&suite.ground_truth).expect("serializable"),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let config = SynthConfig::new(7, 6, 2);
        let a = synth_generate(&config).unwrap();
        let b = synth_generate(&config).unwrap();
        assert_eq!(a.queries, b.queries);
        assert_eq!(a.ground_truth, b.ground_truth);
        for (id, cloud) in &a.scenes {
            assert_eq!(cloud, &b.scenes[id]);
        }
    }

    #[test]
    fn scene_counts_match_config() {
        let config = SynthConfig::new(3, 5, 3);
        let suite = synth_generate(&config).unwrap();
        assert_eq!(suite.scenes.len(), 5);
        assert_eq!(suite.queries.len(), 5);
        for q in &suite.queries {
            let scene_gt = &suite.ground_truth[&q.scene_id];
            let same_class = scene_gt
                .values()
                .filter(|o| o.object_name == q.object_name)
                .count();
            assert_eq!(same_class, 4); // target + 3 distractors
        }
    }

    #[test]
    fn blobs_have_at_least_30_points() {
        let suite = synth_generate(&SynthConfig::new(11, 4, 1)).unwrap();
        for (scene_id, gt) in &suite.ground_truth {
            let cloud = &suite.scenes[scene_id];
            for object in gt.values() {
                let gt_box = object.aabb();
                let inflated = Aabb::new(gt_box.centroid, gt_box.extents.map(|e| e + 1e-9));
                let count = cloud
                    .labels()
                    .unwrap()
                    .iter()
                    .zip(cloud.points())
                    .filter(|(l, p)| *l == &object.object_name && inflated.contains(p))
                    .count();
                assert!(count >= 30, "object {} has {count} points", object.object_name);
            }
        }
    }

    #[test]
    fn margin_holds_by_construction() {
        let config = SynthConfig::new(21, 12, 3);
        let suite = synth_generate(&config).unwrap();
        assert_eq!(suite.queries.len(), 12);
    }
}
