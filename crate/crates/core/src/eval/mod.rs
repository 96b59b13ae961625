//! Benchmark harness: annotation loading, Acc@IoU metrics, difficulty and
//! complexity splits, and report emission.
//!
//! Annotations keep the ScanRefer field names (`scene_id`, `object_id`,
//! `object_name`, `description`) so real files drop in unchanged. Ground
//! truth is a per-scene map from object id to class name and box. Every
//! query is scored; a per-query failure scores IoU 0 rather than aborting
//! the run.

pub mod synth;

use crate::agent::{run_agent, AgentEnv, Budget, ChatClient};
use crate::geometry::{Aabb, Point3, PointCloud};
use crate::grounder::{find_candidates, GrounderParams, RelevanceBackend};
use crate::query::count_nouns;
use crate::spatial::{resolve, VolumeFilterConfig};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot compute accuracy over an empty result set")]
    EmptyEvaluation,
    #[error("threshold {0} not in (0, 1)")]
    BadThreshold(f64),
    #[error("{path}: record {locus}: {message}")]
    MalformedRecord {
        path: String,
        locus: String,
        message: String,
    },
    #[error("{0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One ScanRefer-style annotation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkQuery {
    pub scene_id: String,
    pub object_id: String,
    pub object_name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtObject {
    pub object_name: String,
    pub centroid: Point3,
    pub extents: [f64; 3],
}

impl GtObject {
    pub fn aabb(&self) -> Aabb {
        Aabb::new(self.centroid, self.extents)
    }
}

pub type SceneGroundTruth = BTreeMap<String, GtObject>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRecord {
    pub scene_id: String,
    pub object_id: String,
    pub diagnostic: String,
}

#[derive(Debug, Clone, Default)]
pub struct Benchmark {
    pub queries: Vec<BenchmarkQuery>,
    pub ground_truth: BTreeMap<String, SceneGroundTruth>,
    /// Entries whose (scene_id, object_id) did not resolve, with per-entry
    /// diagnostics.
    pub rejected: Vec<RejectedRecord>,
}

/// Load annotations and ground truth, cross-checking that every query
/// resolves to a ground-truth box.
pub fn load_benchmark(annotations: &Path, ground_truth: &Path) -> Result<Benchmark, EvalError> {
    let gt_text = std::fs::read_to_string(ground_truth)?;
    let ground_truth_map: BTreeMap<String, SceneGroundTruth> = serde_json::from_str(&gt_text)
        .map_err(|e| EvalError::MalformedRecord {
            path: ground_truth.display().to_string(),
            locus: format!("line {}", e.line()),
            message: e.to_string(),
        })?;
    let ann_text = std::fs::read_to_string(annotations)?;
    let records: Vec<BenchmarkQuery> =
        serde_json::from_str(&ann_text).map_err(|e| EvalError::MalformedRecord {
            path: annotations.display().to_string(),
            locus: format!("line {}", e.line()),
            message: e.to_string(),
        })?;
    let mut queries = Vec::new();
    let mut rejected = Vec::new();
    for record in records {
        if record.scene_id.is_empty() || record.object_id.is_empty() {
            rejected.push(RejectedRecord {
                scene_id: record.scene_id.clone(),
                object_id: record.object_id.clone(),
                diagnostic: "empty scene_id or object_id".into(),
            });
            continue;
        }
        if record.description.trim().is_empty() {
            rejected.push(RejectedRecord {
                scene_id: record.scene_id.clone(),
                object_id: record.object_id.clone(),
                diagnostic: "empty description".into(),
            });
            continue;
        }
        match ground_truth_map
            .get(&record.scene_id)
            .and_then(|scene| scene.get(&record.object_id))
        {
            Some(_) => queries.push(record),
            None => rejected.push(RejectedRecord {
                diagnostic: format!(
                    "object {:?} has no ground-truth box in scene {:?}",
                    record.object_id, record.scene_id
                ),
                scene_id: record.scene_id,
                object_id: record.object_id,
            }),
        }
    }
    Ok(Benchmark {
        queries,
        ground_truth: ground_truth_map,
        rejected,
    })
}

/// Grounding strategy under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    /// Bag-of-words baseline: ground the full sentence, pick the largest
    /// cluster.
    RawGrounder,
    /// Deterministic parse + ground + spatial selection pipeline.
    Resolver,
    /// LLM agent loop with deterministic fallback.
    Agent,
}

impl Strategy {
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::RawGrounder => "raw-grounder",
            Strategy::Resolver => "resolver",
            Strategy::Agent => "agent",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" | "raw-grounder" => Ok(Strategy::RawGrounder),
            "resolver" => Ok(Strategy::Resolver),
            "agent" => Ok(Strategy::Agent),
            other => Err(format!(
                "unknown strategy {other:?}, expected raw|resolver|agent"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query: BenchmarkQuery,
    pub predicted: Option<Aabb>,
    pub iou: f64,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Fraction of results with IoU at or above `threshold`.
pub fn accuracy_at(results: &[QueryResult], threshold: f64) -> Result<f64, EvalError> {
    if !(0.0 < threshold && threshold < 1.0) {
        return Err(EvalError::BadThreshold(threshold));
    }
    if results.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }
    let hits = results.iter().filter(|r| r.iou >= threshold).count();
    Ok(hits as f64 / results.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Difficulty {
    Low,
    High,
}

/// Visual-difficulty label: LOW when the query's class has no distractor
/// in its scene, HIGH when it has one or more.
pub fn difficulty_split(
    query: &BenchmarkQuery,
    ground_truth: &BTreeMap<String, SceneGroundTruth>,
) -> Difficulty {
    let distractors = ground_truth
        .get(&query.scene_id)
        .map(|scene| {
            scene
                .values()
                .filter(|o| o.object_name == query.object_name)
                .count()
                .saturating_sub(1)
        })
        .unwrap_or(0);
    if distractors == 0 {
        Difficulty::Low
    } else {
        Difficulty::High
    }
}

/// Partition queries by noun count of their description.
pub fn complexity_buckets(queries: &[BenchmarkQuery]) -> BTreeMap<usize, Vec<BenchmarkQuery>> {
    let mut buckets: BTreeMap<usize, Vec<BenchmarkQuery>> = BTreeMap::new();
    for q in queries {
        buckets
            .entry(count_nouns(&q.description))
            .or_default()
            .push(q.clone());
    }
    buckets
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub strategy: String,
    pub split: String,
    pub acc_at_25: f64,
    pub acc_at_50: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BucketRow {
    pub noun_count: usize,
    pub strategy: String,
    pub acc_at_25: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BucketDelta {
    pub noun_count: usize,
    pub baseline_acc: f64,
    pub pipeline_acc: f64,
    pub delta: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub overall: Vec<ReportRow>,
    pub difficulty: Vec<ReportRow>,
    pub buckets: Vec<BucketRow>,
    /// Per-bucket pipeline-minus-baseline Acc@0.25, present when both a
    /// baseline and a pipeline strategy ran.
    pub deltas: Vec<BucketDelta>,
    pub results: BTreeMap<String, Vec<QueryResult>>,
}

pub struct EvalConfig<'a> {
    pub params: GrounderParams,
    pub volume: VolumeFilterConfig,
    pub backend: RelevanceBackend,
    pub workers: usize,
    pub budget: Budget,
    pub chat_client: Option<&'a ChatClient>,
    /// Directory for per-query agent transcripts, when running the agent.
    pub transcript_dir: Option<std::path::PathBuf>,
}

impl Default for EvalConfig<'_> {
    fn default() -> Self {
        Self {
            params: GrounderParams::default(),
            volume: VolumeFilterConfig::default(),
            backend: RelevanceBackend::Labels,
            workers: 1,
            budget: Budget::default(),
            chat_client: None,
            transcript_dir: None,
        }
    }
}

fn ground_one(
    query: &BenchmarkQuery,
    scene: &PointCloud,
    strategy: Strategy,
    config: &EvalConfig<'_>,
) -> (Option<Aabb>, Option<String>, Option<String>) {
    match strategy {
        Strategy::RawGrounder => {
            match find_candidates(scene, &query.description, &config.params, &config.backend) {
                Ok(candidates) => {
                    let largest = candidates
                        .iter()
                        .max_by(|a, b| {
                            a.point_count
                                .cmp(&b.point_count)
                                .then(b.candidate_id.cmp(&a.candidate_id))
                        })
                        .map(|c| c.aabb);
                    let failure =
                        largest.is_none().then(|| "no candidates for sentence".to_string());
                    (largest, None, failure)
                }
                Err(e) => (None, None, Some(e.to_string())),
            }
        }
        Strategy::Resolver => match resolve(
            scene,
            &query.description,
            &config.params,
            &config.backend,
            &config.volume,
        ) {
            Ok(selection) => (Some(selection.chosen.aabb), None, None),
            Err(e) => (None, None, Some(e.to_string())),
        },
        Strategy::Agent => {
            let Some(client) = config.chat_client else {
                return (None, None, Some("agent strategy needs a chat client".into()));
            };
            let env = AgentEnv {
                scene,
                params: &config.params,
                backend: &config.backend,
                volume_config: &config.volume,
            };
            let transcript = run_agent(&query.description, &env, client, &config.budget);
            let chosen = transcript.chosen_box();
            let failure = match &transcript.outcome {
                crate::agent::Outcome::Failed { reason } => Some(reason.clone()),
                _ => None,
            };
            let path = config.transcript_dir.as_ref().map(|dir| {
                let path = dir.join(format!(
                    "{}_{}_{}.json",
                    query.scene_id,
                    query.object_id,
                    strategy.label()
                ));
                let _ = std::fs::create_dir_all(dir);
                let _ = transcript.write(&path);
                path.display().to_string()
            });
            (chosen, path, failure)
        }
    }
}

/// Evaluate every query under every requested strategy. Per-query failures
/// score IoU 0; only configuration errors abort before the run starts.
pub fn run_benchmark(
    benchmark: &Benchmark,
    scenes: &BTreeMap<String, PointCloud>,
    strategies: &[Strategy],
    config: &EvalConfig<'_>,
) -> Result<BenchmarkReport, EvalError> {
    if strategies.is_empty() {
        return Err(EvalError::Config("no strategies requested".into()));
    }
    if strategies.contains(&Strategy::Agent) && config.chat_client.is_none() {
        return Err(EvalError::Config(
            "agent strategy requires a configured chat client".into(),
        ));
    }
    for q in &benchmark.queries {
        if !scenes.contains_key(&q.scene_id) {
            return Err(EvalError::Config(format!(
                "scene {:?} referenced by annotations was not loaded",
                q.scene_id
            )));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| EvalError::Config(e.to_string()))?;
    log::info!(
        "evaluating {} queries x {} strategies on {} workers",
        benchmark.queries.len(),
        strategies.len(),
        config.workers.max(1)
    );

    let mut results: BTreeMap<String, Vec<QueryResult>> = BTreeMap::new();
    for &strategy in strategies {
        use rayon::prelude::*;
        let strategy_results: Vec<QueryResult> = pool.install(|| {
            benchmark
                .queries
                .par_iter()
                .map(|query| {
                    let scene = &scenes[&query.scene_id];
                    let (predicted, transcript_path, failure) =
                        ground_one(query, scene, strategy, config);
                    let gt = benchmark.ground_truth[&query.scene_id][&query.object_id].aabb();
                    let iou = predicted.map(|p| p.iou(&gt)).unwrap_or(0.0);
                    QueryResult {
                        query: query.clone(),
                        predicted,
                        iou,
                        strategy,
                        transcript_path,
                        failure,
                    }
                })
                .collect()
        });
        results.insert(strategy.label().to_string(), strategy_results);
    }

    build_report(benchmark, results)
}

fn accs(results: &[QueryResult]) -> Result<(f64, f64), EvalError> {
    Ok((accuracy_at(results, 0.25)?, accuracy_at(results, 0.5)?))
}

fn build_report(
    benchmark: &Benchmark,
    results: BTreeMap<String, Vec<QueryResult>>,
) -> Result<BenchmarkReport, EvalError> {
    let mut overall = Vec::new();
    let mut difficulty = Vec::new();
    let mut buckets = Vec::new();
    for (strategy, rows) in &results {
        let (a25, a50) = accs(rows)?;
        overall.push(ReportRow {
            strategy: strategy.clone(),
            split: "overall".into(),
            acc_at_25: a25,
            acc_at_50: a50,
            n: rows.len(),
        });
        for (label, level) in [("low", Difficulty::Low), ("high", Difficulty::High)] {
            let subset: Vec<QueryResult> = rows
                .iter()
                .filter(|r| difficulty_split(&r.query, &benchmark.ground_truth) == level)
                .cloned()
                .collect();
            if subset.is_empty() {
                continue;
            }
            let (a25, a50) = accs(&subset)?;
            difficulty.push(ReportRow {
                strategy: strategy.clone(),
                split: label.into(),
                acc_at_25: a25,
                acc_at_50: a50,
                n: subset.len(),
            });
        }
        let by_count = complexity_buckets(&benchmark.queries);
        for (&count, bucket_queries) in &by_count {
            let subset: Vec<QueryResult> = rows
                .iter()
                .filter(|r| bucket_queries.iter().any(|q| q == &r.query))
                .cloned()
                .collect();
            if subset.is_empty() {
                continue;
            }
            buckets.push(BucketRow {
                noun_count: count,
                strategy: strategy.clone(),
                acc_at_25: accuracy_at(&subset, 0.25)?,
                n: subset.len(),
            });
        }
    }

    // delta = pipeline - baseline per bucket, where the baseline is the
    // raw grounder and the pipeline is the resolver (or agent)
    let baseline = Strategy::RawGrounder.label();
    let pipeline = if results.contains_key(Strategy::Resolver.label()) {
        Strategy::Resolver.label()
    } else {
        Strategy::Agent.label()
    };
    let mut deltas = Vec::new();
    if results.contains_key(baseline) && results.contains_key(pipeline) {
        let counts: std::collections::BTreeSet<usize> =
            buckets.iter().map(|b| b.noun_count).collect();
        for count in counts {
            let find = |strategy: &str| {
                buckets
                    .iter()
                    .find(|b| b.noun_count == count && b.strategy == strategy)
            };
            if let (Some(b), Some(p)) = (find(baseline), find(pipeline)) {
                deltas.push(BucketDelta {
                    noun_count: count,
                    baseline_acc: b.acc_at_25,
                    pipeline_acc: p.acc_at_25,
                    delta: p.acc_at_25 - b.acc_at_25,
                    n: p.n,
                });
            }
        }
    }

    Ok(BenchmarkReport {
        overall,
        difficulty,
        buckets,
        deltas,
        results,
    })
}

/// Write the delimited-text tables plus a machine-readable summary.
/// Every file starts with a header embedding the seed and config digest.
pub fn write_reports(
    dir: &Path,
    report: &BenchmarkReport,
    seed: u64,
    config_digest: &str,
) -> Result<(), EvalError> {
    std::fs::create_dir_all(dir)?;
    let header = format!("# seed={seed} config={config_digest}\n");

    let mut overall = header.clone();
    overall.push_str("strategy\tsplit\tacc@0.25\tacc@0.5\tn\n");
    for row in report.overall.iter().chain(&report.difficulty) {
        overall.push_str(&format!(
            "{}\t{}\t{:.4}\t{:.4}\t{}\n",
            row.strategy, row.split, row.acc_at_25, row.acc_at_50, row.n
        ));
    }
    std::fs::write(dir.join("accuracy.tsv"), &overall)?;

    let mut complexity = header.clone();
    complexity.push_str("noun_count\tstrategy\tacc@0.25\tn\n");
    for row in &report.buckets {
        complexity.push_str(&format!(
            "{}\t{}\t{:.4}\t{}\n",
            row.noun_count, row.strategy, row.acc_at_25, row.n
        ));
    }
    if !report.deltas.is_empty() {
        complexity.push_str("noun_count\tbaseline\tpipeline\tdelta\tn\n");
        for d in &report.deltas {
            complexity.push_str(&format!(
                "{}\t{:.4}\t{:.4}\t{:+.4}\t{}\n",
                d.noun_count, d.baseline_acc, d.pipeline_acc, d.delta, d.n
            ));
        }
    }
    std::fs::write(dir.join("complexity.tsv"), &complexity)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        seed: u64,
        config_digest: &'a str,
        overall: &'a [ReportRow],
        difficulty: &'a [ReportRow],
        buckets: &'a [BucketRow],
        deltas: &'a [BucketDelta],
    }
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&Summary {
            seed,
            config_digest,
            overall: &report.overall,
            difficulty: &report.difficulty,
            buckets: &report.buckets,
            deltas: &report.deltas,
        })
        .expect("serializable"),
    )?;
    Ok(())
}
