//! Command implementations. Every command resolves its configuration up
//! front, writes outputs atomically, and echoes the resolved run
//! configuration (seeds included, secrets excluded) into the output
//! directory so artifacts are reproducible from what they carry.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::json;

use statefactory_core::baselines::{self, Judge, JudgeConfig, JudgeMode};
use statefactory_core::blocksworld;
use statefactory_core::chat::ReasoningEffort;
use statefactory_core::dataset::{
    self, load_dataset, write_atomic, BlocksworldGenConfig, Trajectory,
};
use statefactory_core::embedding::{SimilarityProvider, Triplet};
use statefactory_core::extraction::{
    self, ExtractorBackend, GenerativeConfig, GenerativeExtractor,
};
use statefactory_core::metrics::{
    self, evaluate, render_table, EvalMode, PredictionSet, RewardSeries,
};
use statefactory_core::planner::{self, PlannerConfig, Policy};
use statefactory_core::prompts::PromptSet;
use statefactory_core::state_model::DegradeLevel;

use crate::config::Settings;

/// Failure classes mapped to documented exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid arguments: {0}")]
    Usage(String),
    #[error("i/o or data failure: {0}")]
    Data(String),
    #[error("backend configuration missing: {0}")]
    BackendConfig(String),
    #[error("prediction misalignment: {0}")]
    Misalignment(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::BackendConfig(_) => 4,
            CliError::Misalignment(_) => 5,
            CliError::Other(_) => 1,
        }
    }
}

fn data_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

fn write_run_config(
    out: &Path,
    command: &str,
    params: serde_json::Value,
    settings: &Settings,
) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct RunEcho<'a> {
        command: &'a str,
        params: serde_json::Value,
        settings: crate::config::SettingsEcho,
    }
    let echo = RunEcho {
        command,
        params,
        settings: settings.echo(),
    };
    let text = serde_json::to_string_pretty(&echo).expect("serializable") + "\n";
    write_atomic(&out.join("run_config.json"), text.as_bytes()).map_err(data_err)
}

// ---------------------------------------------------------------------------
// Provider / backend construction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ProviderKind {
    Exact,
    Hashmock,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BackendKind {
    Rules,
    Generative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum JudgeModeArg {
    Intuitive,
    Analytical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EffortArg {
    Low,
    Medium,
}

impl From<EffortArg> for ReasoningEffort {
    fn from(value: EffortArg) -> Self {
        match value {
            EffortArg::Low => ReasoningEffort::Low,
            EffortArg::Medium => ReasoningEffort::Medium,
        }
    }
}

pub fn build_provider(
    kind: ProviderKind,
    hash_dim: usize,
    hash_seed: u64,
    settings: &Settings,
) -> Result<SimilarityProvider, CliError> {
    match kind {
        ProviderKind::Exact => Ok(SimilarityProvider::exact_match()),
        ProviderKind::Hashmock => Ok(SimilarityProvider::hash_mock(hash_dim, hash_seed)),
        ProviderKind::Remote => {
            let config = settings.embed_config().ok_or_else(|| {
                CliError::BackendConfig(
                    "remote provider needs EMBED_ENDPOINT and EMBED_MODEL (flags, env, or config file)"
                        .into(),
                )
            })?;
            SimilarityProvider::remote(config).map_err(|e| CliError::BackendConfig(e.to_string()))
        }
    }
}

pub fn build_backend(
    kind: BackendKind,
    settings: &Settings,
    reasoning_effort: Option<EffortArg>,
    prompts_dir: Option<&Path>,
) -> Result<ExtractorBackend, CliError> {
    match kind {
        BackendKind::Rules => Ok(ExtractorBackend::BlocksWorldRules),
        BackendKind::Generative => {
            let chat = settings.chat_config(reasoning_effort.map(Into::into)).ok_or_else(|| {
                CliError::BackendConfig(
                    "generative backend needs LLM_ENDPOINT and LLM_MODEL (flags, env, or config file)"
                        .into(),
                )
            })?;
            let prompts = load_prompts(prompts_dir)?;
            let extractor = GenerativeExtractor::new(GenerativeConfig::new(chat), prompts)
                .map_err(|e| CliError::BackendConfig(e.to_string()))?;
            Ok(ExtractorBackend::Generative(Box::new(extractor)))
        }
    }
}

fn load_prompts(dir: Option<&Path>) -> Result<PromptSet, CliError> {
    match dir {
        None => Ok(PromptSet::builtin()),
        Some(dir) => PromptSet::from_dir(dir).map_err(data_err),
    }
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

pub struct GenDataArgs {
    pub domain: String,
    pub n_pairs: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub min_blocks: usize,
    pub max_blocks: usize,
    pub max_pad: usize,
}

pub fn cmd_gen_data(args: &GenDataArgs, settings: &Settings) -> Result<(), CliError> {
    if args.domain != "blocksworld" {
        return Err(CliError::Usage(format!(
            "generation is native for blocksworld only; {} trajectories are ingested from files \
             in the documented JSONL format",
            args.domain
        )));
    }
    let mut config = BlocksworldGenConfig::new(args.n_pairs, args.seed);
    config.min_blocks = args.min_blocks;
    config.max_blocks = args.max_blocks;
    config.max_pad = args.max_pad;
    let pairs = dataset::generate_blocksworld_pairs(config).map_err(data_err)?;
    dataset::save_dataset(&pairs, &args.out).map_err(data_err)?;
    write_run_config(
        &args.out,
        "gen-data",
        json!({
            "domain": args.domain,
            "n_pairs": args.n_pairs,
            "seed": args.seed,
            "min_blocks": args.min_blocks,
            "max_blocks": args.max_blocks,
            "max_pad": args.max_pad,
        }),
        settings,
    )?;
    println!("wrote {} pairs to {}", pairs.len(), args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// gen-instances
// ---------------------------------------------------------------------------

pub struct GenInstancesArgs {
    pub n: usize,
    pub blocks: usize,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn cmd_gen_instances(args: &GenInstancesArgs, settings: &Settings) -> Result<(), CliError> {
    let config = blocksworld::InstanceGenConfig {
        n_blocks: args.blocks,
        ..Default::default()
    };
    let instances = blocksworld::generate_instances(args.n, args.seed, config);
    let mut text = String::new();
    for instance in &instances {
        text.push_str(&blocksworld::instance_to_line(instance));
        text.push('\n');
    }
    std::fs::create_dir_all(&args.out).map_err(data_err)?;
    write_atomic(&args.out.join("instances.jsonl"), text.as_bytes()).map_err(data_err)?;
    write_run_config(
        &args.out,
        "gen-instances",
        json!({"n": args.n, "blocks": args.blocks, "seed": args.seed}),
        settings,
    )?;
    println!(
        "wrote {} instances to {}",
        instances.len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Statefactory,
    Monotonic,
    Judge,
    Flat,
    ObjectCentric,
}

impl Method {
    fn name(&self) -> &'static str {
        match self {
            Method::Statefactory => "statefactory",
            Method::Monotonic => "monotonic",
            Method::Judge => "judge",
            Method::Flat => "flat",
            Method::ObjectCentric => "object-centric",
        }
    }
}

pub struct PredictArgs {
    pub data: PathBuf,
    pub method: Method,
    pub out: PathBuf,
    pub provider: ProviderKind,
    pub hash_dim: usize,
    pub hash_seed: u64,
    pub backend: BackendKind,
    pub judge_mode: JudgeModeArg,
    pub reasoning_effort: Option<EffortArg>,
    pub prompts_dir: Option<PathBuf>,
}

/// One audit line per trajectory, written for the state-building methods.
#[derive(Serialize)]
struct AuditLine {
    id: String,
    steps: Vec<AuditStep>,
}

#[derive(Serialize)]
struct AuditStep {
    step_index: usize,
    degraded: bool,
    goal: serde_json::Value,
    state: serde_json::Value,
    report: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    state_thinking: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    goal_thinking: Option<String>,
}

fn predict_one(
    trajectory: &Trajectory,
    method: Method,
    backend: &ExtractorBackend,
    provider: &SimilarityProvider,
    judge: Option<&Judge>,
) -> Result<(RewardSeries, Option<serde_json::Value>), CliError> {
    match method {
        Method::Monotonic => Ok((baselines::monotonic_predict(trajectory), None)),
        Method::Judge => {
            let judge = judge.expect("judge constructed for judge method");
            let (series, calls) = judge
                .predict_series_with_transcript(trajectory)
                .map_err(|e| CliError::Other(e.to_string()))?;
            let flagged = calls.iter().filter(|c| c.flagged).count();
            if flagged > 0 {
                log::warn!(
                    "trajectory {}: {flagged} judged steps flagged",
                    trajectory.id
                );
            }
            let audit = json!({
                "id": trajectory.id,
                "flagged_steps": flagged,
                "calls": calls,
            });
            Ok((series, Some(audit)))
        }
        Method::Flat => {
            let series = extraction::run_trajectory_degraded(
                trajectory,
                backend,
                provider,
                DegradeLevel::FlatText,
            )
            .map_err(|e| CliError::Other(e.to_string()))?;
            Ok((series, None))
        }
        Method::ObjectCentric => {
            let series = extraction::run_trajectory_degraded(
                trajectory,
                backend,
                provider,
                DegradeLevel::ObjectCentric,
            )
            .map_err(|e| CliError::Other(e.to_string()))?;
            Ok((series, None))
        }
        Method::Statefactory => {
            let run = extraction::run_trajectory(trajectory, backend, provider)
                .map_err(|e| CliError::Other(e.to_string()))?;
            let steps = run
                .audits
                .iter()
                .zip(
                    run.states
                        .iter()
                        .zip(run.goals.iter().zip(run.reports.iter())),
                )
                .map(|(audit, (state, (goal, report)))| AuditStep {
                    step_index: audit.step_index,
                    degraded: audit.degraded,
                    goal: goal.to_document_value(),
                    state: state.to_document_value(),
                    report: serde_json::to_value(report).expect("serializable"),
                    state_thinking: audit.state_thinking.clone(),
                    goal_thinking: audit.goal_thinking.clone(),
                })
                .collect();
            let line = AuditLine {
                id: trajectory.id.clone(),
                steps,
            };
            Ok((
                run.rewards,
                Some(serde_json::to_value(&line).expect("serializable")),
            ))
        }
    }
}

pub fn cmd_predict(args: &PredictArgs, settings: &Settings) -> Result<(), CliError> {
    let instances = load_dataset(&args.data).map_err(data_err)?;
    let trajectories: Vec<&Trajectory> = instances
        .iter()
        .flat_map(|p| [&p.positive, &p.negative])
        .collect();

    let needs_provider = !matches!(args.method, Method::Monotonic | Method::Judge);
    let provider = if needs_provider {
        build_provider(args.provider, args.hash_dim, args.hash_seed, settings)?
    } else {
        SimilarityProvider::exact_match()
    };
    let backend = if needs_provider {
        build_backend(
            args.backend,
            settings,
            args.reasoning_effort,
            args.prompts_dir.as_deref(),
        )?
    } else {
        ExtractorBackend::BlocksWorldRules
    };
    let judge = match args.method {
        Method::Judge => {
            let chat = settings
                .chat_config(args.reasoning_effort.map(Into::into))
                .ok_or_else(|| {
                    CliError::BackendConfig(
                        "judge method needs LLM_ENDPOINT and LLM_MODEL (flags, env, or config file)"
                            .into(),
                    )
                })?;
            let mode = match args.judge_mode {
                JudgeModeArg::Intuitive => JudgeMode::Intuitive,
                JudgeModeArg::Analytical => JudgeMode::Analytical,
            };
            let prompts = load_prompts(args.prompts_dir.as_deref())?;
            Some(
                Judge::new(JudgeConfig::new(chat, mode), prompts)
                    .map_err(|e| CliError::BackendConfig(e.to_string()))?,
            )
        }
        _ => None,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.parallelism)
        .build()
        .map_err(|e| CliError::Other(e.to_string()))?;
    let results: Vec<Result<(RewardSeries, Option<serde_json::Value>), CliError>> =
        pool.install(|| {
            use rayon::prelude::*;
            trajectories
                .par_iter()
                .map(|t| predict_one(t, args.method, &backend, &provider, judge.as_ref()))
                .collect()
        });

    let mut predictions = PredictionSet::new();
    let mut audit_lines = String::new();
    for (trajectory, result) in trajectories.iter().zip(results) {
        let (series, audit) = result?;
        predictions.insert(&trajectory.id, series);
        if let Some(line) = audit {
            audit_lines.push_str(&serde_json::to_string(&line).expect("serializable"));
            audit_lines.push('\n');
        }
    }

    std::fs::create_dir_all(&args.out).map_err(data_err)?;
    write_atomic(
        &args.out.join("predictions.jsonl"),
        metrics::predictions_to_jsonl(&predictions).as_bytes(),
    )
    .map_err(data_err)?;
    if !audit_lines.is_empty() {
        write_atomic(&args.out.join("audit.jsonl"), audit_lines.as_bytes()).map_err(data_err)?;
    }
    write_run_config(
        &args.out,
        "predict",
        json!({
            "data": args.data.display().to_string(),
            "method": args.method.name(),
            "provider": format!("{:?}", args.provider).to_lowercase(),
            "hash_dim": args.hash_dim,
            "hash_seed": args.hash_seed,
            "backend": format!("{:?}", args.backend).to_lowercase(),
        }),
        settings,
    )?;
    println!(
        "wrote predictions for {} trajectories to {}",
        trajectories.len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeArg {
    PerPair,
    PerTraj,
}

pub struct EvalArgs {
    pub data: PathBuf,
    pub pred: PathBuf,
    pub mode: ModeArg,
    pub out: PathBuf,
    pub method_name: String,
}

pub fn cmd_eval(args: &EvalArgs, settings: &Settings) -> Result<(), CliError> {
    let instances = load_dataset(&args.data).map_err(data_err)?;
    let pred_path = if args.pred.is_dir() {
        args.pred.join("predictions.jsonl")
    } else {
        args.pred.clone()
    };
    let text = std::fs::read_to_string(&pred_path)
        .with_context(|| format!("reading {}", pred_path.display()))
        .map_err(data_err)?;
    let predictions = metrics::predictions_from_jsonl(&text)
        .map_err(|e| CliError::Misalignment(e.to_string()))?;
    let mode = match args.mode {
        ModeArg::PerPair => EvalMode::PerPair,
        ModeArg::PerTraj => EvalMode::PerTrajectory,
    };
    let report = evaluate(&instances, &predictions, mode)
        .map_err(|e| CliError::Misalignment(e.to_string()))?;
    let table = render_table(&[(args.method_name.as_str(), &report)]);

    std::fs::create_dir_all(&args.out).map_err(data_err)?;
    let report_json = serde_json::to_string_pretty(&report).expect("serializable") + "\n";
    write_atomic(&args.out.join("report.json"), report_json.as_bytes()).map_err(data_err)?;
    write_atomic(&args.out.join("table.txt"), table.as_bytes()).map_err(data_err)?;
    write_run_config(
        &args.out,
        "eval",
        json!({
            "data": args.data.display().to_string(),
            "pred": pred_path.display().to_string(),
            "mode": match args.mode { ModeArg::PerPair => "per-pair", ModeArg::PerTraj => "per-traj" },
            "method": args.method_name,
        }),
        settings,
    )?;
    print!("{table}");
    if let Some(overall) = report.overall {
        println!(
            "overall: {overall:.4} over {} items ({} degenerate)",
            report.included, report.degenerate
        );
    } else {
        println!("overall: undefined (all items degenerate)");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// probe
// ---------------------------------------------------------------------------

pub struct ProbeArgs {
    pub triplets: PathBuf,
    pub provider: ProviderKind,
    pub hash_dim: usize,
    pub hash_seed: u64,
    pub out: Option<PathBuf>,
}

pub fn cmd_probe(args: &ProbeArgs, settings: &Settings) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.triplets).map_err(data_err)?;
    let mut triplets = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let triplet: Triplet = serde_json::from_str(line)
            .map_err(|e| CliError::Data(format!("triplets line {}: {e}", index + 1)))?;
        triplet
            .validate()
            .map_err(|e| CliError::Data(format!("triplets line {}: {e}", index + 1)))?;
        triplets.push(triplet);
    }
    let provider = build_provider(args.provider, args.hash_dim, args.hash_seed, settings)?;
    let accuracy = provider
        .triplet_accuracy(&triplets)
        .map_err(|e| CliError::Other(e.to_string()))?;
    println!(
        "triplet accuracy: {accuracy:.4} over {} triplets",
        triplets.len()
    );
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out).map_err(data_err)?;
        let payload = serde_json::to_string_pretty(&json!({
            "triplets": triplets.len(),
            "accuracy": accuracy,
            "provider": provider.name(),
        }))
        .expect("serializable")
            + "\n";
        write_atomic(&out.join("probe.json"), payload.as_bytes()).map_err(data_err)?;
        write_run_config(
            out,
            "probe",
            json!({
                "triplets": args.triplets.display().to_string(),
                "provider": format!("{:?}", args.provider).to_lowercase(),
                "hash_dim": args.hash_dim,
                "hash_seed": args.hash_seed,
            }),
            settings,
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// plan
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PolicyArg {
    RewardGuided,
    Random,
}

pub struct PlanArgs {
    pub instances: PathBuf,
    pub policy: PolicyArg,
    pub seed: u64,
    pub max_steps: usize,
    pub top_k: usize,
    pub repetition_penalty: f64,
    pub out: PathBuf,
    pub provider: ProviderKind,
    pub hash_dim: usize,
    pub hash_seed: u64,
}

pub fn cmd_plan(args: &PlanArgs, settings: &Settings) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.instances).map_err(data_err)?;
    let instances = blocksworld::parse_instances(&text).map_err(data_err)?;
    if instances.is_empty() {
        return Err(CliError::Data("instance file is empty".into()));
    }
    let provider = build_provider(args.provider, args.hash_dim, args.hash_seed, settings)?;
    let backend = ExtractorBackend::BlocksWorldRules;
    let config = PlannerConfig {
        top_k: args.top_k,
        repetition_penalty: args.repetition_penalty,
        max_steps: args.max_steps,
        tie_break_seed: args.seed,
        ..Default::default()
    };
    let policy = match args.policy {
        PolicyArg::RewardGuided => Policy::RewardGuided,
        PolicyArg::Random => Policy::Random,
    };
    let (rate, episodes) = planner::success_rate(&instances, policy, &backend, &provider, &config)
        .map_err(|e| CliError::Other(e.to_string()))?;

    let mut lines = String::new();
    for episode in &episodes {
        lines.push_str(&serde_json::to_string(episode).expect("serializable"));
        lines.push('\n');
    }
    std::fs::create_dir_all(&args.out).map_err(data_err)?;
    write_atomic(&args.out.join("episodes.jsonl"), lines.as_bytes()).map_err(data_err)?;
    let successes = episodes.iter().filter(|e| e.success).count();
    let summary = serde_json::to_string_pretty(&json!({
        "policy": match args.policy { PolicyArg::RewardGuided => "reward-guided", PolicyArg::Random => "random" },
        "instances": instances.len(),
        "successes": successes,
        "success_rate": rate,
        "max_steps": args.max_steps,
        "seed": args.seed,
    }))
    .expect("serializable")
        + "\n";
    write_atomic(&args.out.join("summary.json"), summary.as_bytes()).map_err(data_err)?;
    write_run_config(
        &args.out,
        "plan",
        json!({
            "instances": args.instances.display().to_string(),
            "policy": match args.policy { PolicyArg::RewardGuided => "reward-guided", PolicyArg::Random => "random" },
            "seed": args.seed,
            "max_steps": args.max_steps,
            "top_k": args.top_k,
            "repetition_penalty": args.repetition_penalty,
            "provider": format!("{:?}", args.provider).to_lowercase(),
        }),
        settings,
    )?;
    println!(
        "success rate: {rate:.4} ({successes}/{} instances)",
        instances.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

pub fn cmd_stats(data: &Path) -> Result<(), CliError> {
    let instances = load_dataset(data).map_err(data_err)?;
    let stats = dataset::dataset_stats(&instances);
    println!(
        "{}",
        serde_json::to_string_pretty(&stats).expect("serializable")
    );
    Ok(())
}
