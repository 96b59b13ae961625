//! `ground3d`: command-line front end for the grounding pipeline.
//!
//! Subcommands: `ground` one query against one scene, `bench` a full
//! annotation set, `synth` a synthetic benchmark suite, and `cache` for
//! the chat-cache maintenance verbs. Exit codes: 0 on success, 1 on a
//! runtime failure, 2 on a usage or configuration error.

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use ground3d_core::agent::chat::{cache_clear, cache_entry_count, cache_export, cache_import};
use ground3d_core::agent::chat::{ChatClient, HttpChatTransport};
use ground3d_core::agent::{run_agent, AgentEnv, Budget, Outcome};
use ground3d_core::eval::synth::{synth_generate, write_suite, SynthConfig};
use ground3d_core::eval::{load_benchmark, run_benchmark, write_reports, EvalConfig, Strategy};
use ground3d_core::geometry::load_point_cloud;
use ground3d_core::grounder::{find_candidates, HttpEmbedder};
use ground3d_core::spatial::{resolve, VolumeFilterConfig};
use ground3d_core::{Aabb, GrounderParams, PointCloud, RelevanceBackend};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

/// Environment variable holding the chat API key; there is deliberately no
/// command-line flag for it.
const API_KEY_VAR: &str = "GROUND3D_API_KEY";

#[derive(Parser)]
#[command(name = "ground3d", version, about = "Zero-shot 3D visual grounding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ground one referring expression in one scene.
    Ground(GroundArgs),
    /// Evaluate strategies over an annotation set.
    Bench(BenchArgs),
    /// Generate a deterministic synthetic benchmark suite.
    Synth(SynthArgs),
    /// Inspect or maintain the chat response cache.
    Cache(CacheArgs),
}

/// Pipeline settings shared by `ground` and `bench`. Every field can come
/// from the config file; flags override the file.
#[derive(Debug, Default, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    quantile: Option<f64>,
    eps: Option<f64>,
    min_pts: Option<usize>,
    max_candidates: Option<usize>,
    min_volume: Option<f64>,
    max_volume: Option<f64>,
    model: Option<String>,
    endpoint: Option<String>,
    embedding_endpoint: Option<String>,
    workers: Option<usize>,
    max_rounds: Option<u32>,
    max_tool_calls: Option<u32>,
}

#[derive(Args, Debug, Clone)]
struct PipelineArgs {
    /// JSON config file; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    quantile: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    min_pts: Option<usize>,
    #[arg(long)]
    max_candidates: Option<usize>,
    /// Chat model name for the agent strategy.
    #[arg(long)]
    model: Option<String>,
    /// Chat completions endpoint for the agent strategy.
    #[arg(long)]
    endpoint: Option<String>,
    /// Phrase-embedding endpoint; set to use embedding relevance instead
    /// of label matching.
    #[arg(long)]
    embedding_endpoint: Option<String>,
    /// Directory for the on-disk chat cache.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

/// Fully resolved settings after merging the config file and flags.
#[derive(Debug, Clone, Serialize)]
struct Effective {
    params: GrounderParams,
    volume: VolumeFilterConfig,
    model: String,
    endpoint: String,
    embedding_endpoint: Option<String>,
    workers: usize,
    budget: Budget,
}

impl Effective {
    /// Stable digest of every setting that can change a result; embedded
    /// in reports so runs are attributable to their configuration.
    fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_string(self).expect("serializable"));
        hex::encode(&hasher.finalize()[..8])
    }

    fn backend(&self) -> RelevanceBackend {
        match &self.embedding_endpoint {
            None => RelevanceBackend::Labels,
            Some(endpoint) => RelevanceBackend::Features(Arc::new(HttpEmbedder::new(
                endpoint.clone(),
                Duration::from_secs(30),
            ))),
        }
    }
}

#[derive(Debug)]
enum CliError {
    /// Bad flags, bad config, unreadable inputs the user named: exit 2.
    Usage(String),
    /// The pipeline itself failed: exit 1.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

fn merge_config(args: &PipelineArgs, workers_flag: Option<usize>) -> Result<Effective, CliError> {
    let file: ConfigFile = match &args.config {
        None => ConfigFile::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| usage(format!("bad config {}: {e}", path.display())))?
        }
    };
    let defaults = GrounderParams::default();
    let params = GrounderParams {
        quantile: args.quantile.or(file.quantile).unwrap_or(defaults.quantile),
        eps: args.eps.or(file.eps).unwrap_or(defaults.eps),
        min_pts: args.min_pts.or(file.min_pts).unwrap_or(defaults.min_pts),
        max_candidates: args
            .max_candidates
            .or(file.max_candidates)
            .unwrap_or(defaults.max_candidates),
    };
    params.validate().map_err(|e| usage(e.to_string()))?;
    let mut volume = VolumeFilterConfig::default();
    if let Some(v) = file.min_volume {
        volume.min_volume = v;
    }
    volume.max_volume = file.max_volume.or(volume.max_volume);
    let mut budget = Budget::default();
    if let Some(r) = file.max_rounds {
        budget.max_rounds = r;
    }
    if let Some(t) = file.max_tool_calls {
        budget.max_tool_calls = t;
    }
    Ok(Effective {
        params,
        volume,
        model: args
            .model
            .clone()
            .or(file.model)
            .unwrap_or_else(|| "gpt-4".into()),
        endpoint: args
            .endpoint
            .clone()
            .or(file.endpoint)
            .unwrap_or_else(|| "https://api.openai.com/v1/chat/completions".into()),
        embedding_endpoint: args.embedding_endpoint.clone().or(file.embedding_endpoint),
        workers: workers_flag.or(file.workers).unwrap_or(1),
        budget,
    })
}

fn chat_client(effective: &Effective, cache_dir: &Option<PathBuf>) -> ChatClient {
    let mut client = ChatClient::new(effective.model.clone()).with_transport(Arc::new(
        HttpChatTransport {
            endpoint: effective.endpoint.clone(),
            api_key: std::env::var(API_KEY_VAR).ok(),
            timeout: Duration::from_secs(120),
        },
    ));
    if let Some(dir) = cache_dir {
        client = client.with_cache_dir(dir);
    }
    client
}

// ---------------------------------------------------------------------------
// ground

#[derive(Args)]
struct GroundArgs {
    /// Scene file (PLY subset with per-point labels).
    #[arg(long)]
    scene: PathBuf,
    /// Referring expression to ground.
    #[arg(long)]
    query: String,
    /// raw | resolver | agent
    #[arg(long, default_value = "resolver")]
    strategy: Strategy,
    /// Write the result as JSON here in addition to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Serialize)]
struct GroundOutput {
    query: String,
    strategy: String,
    config_digest: String,
    chosen: Aabb,
    outcome: String,
}

fn load_scene(path: &Path) -> Result<PointCloud, CliError> {
    load_point_cloud(path).map_err(|e| usage(format!("cannot load scene {}: {e}", path.display())))
}

fn cmd_ground(args: GroundArgs) -> Result<(), CliError> {
    let effective = merge_config(&args.pipeline, None)?;
    let scene = load_scene(&args.scene)?;
    let backend = effective.backend();
    let (chosen, outcome) = match args.strategy {
        Strategy::RawGrounder => {
            let candidates =
                find_candidates(&scene, &args.query, &effective.params, &backend)
                    .context("grounding failed")?;
            let best = candidates
                .iter()
                .max_by_key(|c| c.point_count)
                .ok_or_else(|| CliError::Runtime(anyhow::anyhow!("no candidates found")))?;
            (best.aabb, "largest-cluster".to_string())
        }
        Strategy::Resolver => {
            let selection = resolve(
                &scene,
                &args.query,
                &effective.params,
                &backend,
                &effective.volume,
            )
            .context("resolver failed")?;
            (selection.chosen.aabb, "resolver".to_string())
        }
        Strategy::Agent => {
            let client = chat_client(&effective, &args.pipeline.cache_dir);
            let env = AgentEnv {
                scene: &scene,
                params: &effective.params,
                backend: &backend,
                volume_config: &effective.volume,
            };
            let transcript = run_agent(&args.query, &env, &client, &effective.budget);
            let label = match &transcript.outcome {
                Outcome::FinalAnswer { .. } => "agent".to_string(),
                Outcome::FallbackUsed { reason, .. } => format!("agent-fallback: {reason}"),
                Outcome::Failed { reason } => {
                    return Err(CliError::Runtime(anyhow::anyhow!(
                        "agent failed: {reason}"
                    )))
                }
            };
            let chosen = transcript
                .chosen_box()
                .ok_or_else(|| CliError::Runtime(anyhow::anyhow!("agent chose nothing")))?;
            (chosen, label)
        }
    };
    let output = GroundOutput {
        query: args.query.clone(),
        strategy: args.strategy.label().to_string(),
        config_digest: effective.digest(),
        chosen,
        outcome,
    };
    let json = serde_json::to_string_pretty(&output).expect("serializable");
    if let Some(out) = &args.out {
        std::fs::write(out, &json)
            .map_err(|e| CliError::Runtime(anyhow::anyhow!("cannot write {}: {e}", out.display())))?;
    }
    println!("{json}");
    Ok(())
}

// ---------------------------------------------------------------------------
// bench

#[derive(Args)]
struct BenchArgs {
    /// Directory of scene files named `<scene_id>.ply`.
    #[arg(long)]
    scenes: PathBuf,
    /// ScanRefer-style annotation JSON.
    #[arg(long)]
    annotations: PathBuf,
    /// Ground-truth boxes JSON.
    #[arg(long)]
    ground_truth: PathBuf,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
    /// Repeatable: raw | resolver | agent.
    #[arg(long = "strategy", default_values = ["raw", "resolver"])]
    strategies: Vec<Strategy>,
    #[arg(long)]
    workers: Option<usize>,
    /// Recorded in report headers (and seeds nothing at bench time; scenes
    /// are inputs here).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for per-query agent transcripts.
    #[arg(long)]
    transcripts: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    let effective = merge_config(&args.pipeline, args.workers)?;
    let benchmark = load_benchmark(&args.annotations, &args.ground_truth)
        .map_err(|e| usage(e.to_string()))?;
    for rejected in &benchmark.rejected {
        eprintln!(
            "warning: skipping {}/{}: {}",
            rejected.scene_id, rejected.object_id, rejected.diagnostic
        );
    }
    let mut scenes: BTreeMap<String, PointCloud> = BTreeMap::new();
    for query in &benchmark.queries {
        if !scenes.contains_key(&query.scene_id) {
            let path = args.scenes.join(format!("{}.ply", query.scene_id));
            scenes.insert(query.scene_id.clone(), load_scene(&path)?);
        }
    }
    let needs_agent = args.strategies.contains(&Strategy::Agent);
    let client = needs_agent.then(|| chat_client(&effective, &args.pipeline.cache_dir));
    let config = EvalConfig {
        params: effective.params,
        volume: effective.volume.clone(),
        backend: effective.backend(),
        workers: effective.workers,
        budget: effective.budget,
        chat_client: client.as_ref(),
        transcript_dir: args.transcripts.clone(),
    };
    let report = run_benchmark(&benchmark, &scenes, &args.strategies, &config)
        .context("benchmark failed")?;
    let digest = effective.digest();
    write_reports(&args.out, &report, args.seed, &digest).context("cannot write reports")?;
    println!("seed={} config={digest}", args.seed);
    for row in &report.overall {
        println!(
            "{:<14} {:<8} acc@0.25={:.4} acc@0.5={:.4} n={}",
            row.strategy, row.split, row.acc_at_25, row.acc_at_50, row.n
        );
    }
    println!("reports written to {}", args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// synth

#[derive(Args)]
struct SynthArgs {
    /// Output directory: scenes/, annotations.json, ground_truth.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    scenes: usize,
    /// Same-class distractors per scene.
    #[arg(long, default_value_t = 3)]
    distractors: usize,
    /// Scene id prefix.
    #[arg(long, default_value = "synth")]
    prefix: String,
    /// Small targets among large landmarks instead of the reverse.
    #[arg(long)]
    swap_roles: bool,
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let config = SynthConfig {
        scene_prefix: args.prefix.clone(),
        swap_roles: args.swap_roles,
        ..SynthConfig::new(args.seed, args.scenes, args.distractors)
    };
    let suite = synth_generate(&config).map_err(|e| CliError::Runtime(e.into()))?;
    write_suite(&args.out, &suite)
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("cannot write suite: {e}")))?;
    println!(
        "seed={} scenes={} queries={} out={}",
        args.seed,
        suite.scenes.len(),
        suite.queries.len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// cache

#[derive(Args)]
struct CacheArgs {
    #[command(subcommand)]
    verb: CacheVerb,
}

#[derive(Subcommand)]
enum CacheVerb {
    /// Count cached responses.
    Stats {
        #[arg(long)]
        cache_dir: PathBuf,
    },
    /// Delete every cached response.
    Clear {
        #[arg(long)]
        cache_dir: PathBuf,
    },
    /// Bundle the cache into one portable JSON file.
    Export {
        #[arg(long)]
        cache_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge a bundle into the cache.
    Import {
        #[arg(long)]
        cache_dir: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
    },
}

fn cmd_cache(args: CacheArgs) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Runtime(anyhow::anyhow!("cache operation: {e}"));
    match args.verb {
        CacheVerb::Stats { cache_dir } => {
            let n = cache_entry_count(&cache_dir).map_err(io_err)?;
            println!("{n} cached responses in {}", cache_dir.display());
        }
        CacheVerb::Clear { cache_dir } => {
            let n = cache_clear(&cache_dir).map_err(io_err)?;
            println!("removed {n} cached responses");
        }
        CacheVerb::Export { cache_dir, out } => {
            let n = cache_export(&cache_dir, &out).map_err(io_err)?;
            println!("exported {n} responses to {}", out.display());
        }
        CacheVerb::Import { cache_dir, bundle } => {
            let n = cache_import(&bundle, &cache_dir).map_err(io_err)?;
            println!("imported {n} responses into {}", cache_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ground(args) => cmd_ground(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Cache(args) => cmd_cache(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
