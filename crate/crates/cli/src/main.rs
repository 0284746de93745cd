//! Operator surface: dataset generation, reward prediction, EPIC
//! evaluation, embedding probes, and reward-guided planning.
//!
//! Exit codes: 0 success, 2 invalid flags, 3 I/O or data failure, 4 missing
//! backend configuration, 5 prediction/dataset misalignment.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{
    BackendKind, CliError, EffortArg, EvalArgs, GenDataArgs, GenInstancesArgs, JudgeModeArg,
    Method, ModeArg, PlanArgs, PolicyArg, PredictArgs, ProbeArgs, ProviderKind,
};
use config::{ConfigFile, Settings};

#[derive(Parser)]
#[command(
    name = "statefactory",
    version,
    about = "Zero-shot reward prediction for goal-conditioned text agents: benchmark construction, factored-state reward estimation, EPIC evaluation, and reward-guided planning"
)]
struct Cli {
    /// TOML config file (documented keys: parallelism, [llm], [embed]).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker pool bound for parallel sections.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Chat backend base URL (overrides LLM_ENDPOINT and the config file).
    #[arg(long, global = true)]
    llm_endpoint: Option<String>,
    /// Chat backend model name (overrides LLM_MODEL and the config file).
    #[arg(long, global = true)]
    llm_model: Option<String>,
    /// Embeddings backend base URL (overrides EMBED_ENDPOINT and the config file).
    #[arg(long, global = true)]
    embed_endpoint: Option<String>,
    /// Embeddings model name (overrides EMBED_MODEL and the config file).
    #[arg(long, global = true)]
    embed_model: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a paired positive/negative benchmark dataset.
    GenData {
        /// Source domain; native generation exists for blocksworld.
        #[arg(long, default_value = "blocksworld")]
        domain: String,
        #[arg(long)]
        n_pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (trajectories.jsonl + pairs.jsonl).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        min_blocks: usize,
        #[arg(long, default_value_t = 4)]
        max_blocks: usize,
        /// Maximum random pad steps per positive trajectory.
        #[arg(long, default_value_t = 3)]
        max_pad: usize,
    },
    /// Generate seeded planning instances.
    GenInstances {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        blocks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (instances.jsonl).
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict per-step rewards for every trajectory in a dataset.
    Predict {
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        /// Output directory (predictions.jsonl, audit.jsonl for
        /// state-building methods).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ProviderKind::Exact)]
        provider: ProviderKind,
        #[arg(long, default_value_t = 64)]
        hash_dim: usize,
        #[arg(long, default_value_t = 0)]
        hash_seed: u64,
        #[arg(long, value_enum, default_value_t = BackendKind::Rules)]
        backend: BackendKind,
        #[arg(long, value_enum, default_value_t = JudgeModeArg::Intuitive)]
        judge_mode: JudgeModeArg,
        /// Reasoning-effort passthrough for reasoning-capable backends.
        #[arg(long, value_enum)]
        reasoning_effort: Option<EffortArg>,
        /// Directory of prompt template overrides.
        #[arg(long)]
        prompts_dir: Option<PathBuf>,
    },
    /// Score predictions against ground truth with the EPIC distance.
    Eval {
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Predictions file (or a predict output directory).
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::PerPair)]
        mode: ModeArg,
        /// Output directory (report.json, table.txt).
        #[arg(long)]
        out: PathBuf,
        /// Row label in the printed table.
        #[arg(long, default_value = "method")]
        method_name: String,
    },
    /// Measure triplet accuracy of a similarity provider.
    Probe {
        /// JSONL file of {"anchor","positive","negative"} lines.
        #[arg(long)]
        triplets: PathBuf,
        #[arg(long, value_enum, default_value_t = ProviderKind::Exact)]
        provider: ProviderKind,
        #[arg(long, default_value_t = 64)]
        hash_dim: usize,
        #[arg(long, default_value_t = 0)]
        hash_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run planning episodes over an instance file.
    Plan {
        /// Instance file (instances.jsonl).
        #[arg(long)]
        instances: PathBuf,
        #[arg(long, value_enum, default_value_t = PolicyArg::RewardGuided)]
        policy: PolicyArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        max_steps: usize,
        #[arg(long, default_value_t = 3)]
        top_k: usize,
        /// Repetition penalty subtracted from repeated candidate actions.
        #[arg(long, default_value_t = 0.1)]
        repetition_penalty: f64,
        /// Output directory (episodes.jsonl, summary.json).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ProviderKind::Exact)]
        provider: ProviderKind,
        #[arg(long, default_value_t = 64)]
        hash_dim: usize,
        #[arg(long, default_value_t = 0)]
        hash_seed: u64,
    },
    /// Print summary statistics for a dataset.
    Stats {
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = ConfigFile::load(cli.config.as_deref())
        .map_err(|e| CliError::Data(format!("config file: {e}")))?;
    let settings = Settings::resolve(
        &file,
        cli.parallelism,
        cli.llm_endpoint,
        cli.llm_model,
        cli.embed_endpoint,
        cli.embed_model,
    );
    match cli.command {
        Command::GenData {
            domain,
            n_pairs,
            seed,
            out,
            min_blocks,
            max_blocks,
            max_pad,
        } => commands::cmd_gen_data(
            &GenDataArgs {
                domain,
                n_pairs,
                seed,
                out,
                min_blocks,
                max_blocks,
                max_pad,
            },
            &settings,
        ),
        Command::GenInstances {
            n,
            blocks,
            seed,
            out,
        } => commands::cmd_gen_instances(
            &GenInstancesArgs {
                n,
                blocks,
                seed,
                out,
            },
            &settings,
        ),
        Command::Predict {
            data,
            method,
            out,
            provider,
            hash_dim,
            hash_seed,
            backend,
            judge_mode,
            reasoning_effort,
            prompts_dir,
        } => commands::cmd_predict(
            &PredictArgs {
                data,
                method,
                out,
                provider,
                hash_dim,
                hash_seed,
                backend,
                judge_mode,
                reasoning_effort,
                prompts_dir,
            },
            &settings,
        ),
        Command::Eval {
            data,
            pred,
            mode,
            out,
            method_name,
        } => commands::cmd_eval(
            &EvalArgs {
                data,
                pred,
                mode,
                out,
                method_name,
            },
            &settings,
        ),
        Command::Probe {
            triplets,
            provider,
            hash_dim,
            hash_seed,
            out,
        } => commands::cmd_probe(
            &ProbeArgs {
                triplets,
                provider,
                hash_dim,
                hash_seed,
                out,
            },
            &settings,
        ),
        Command::Plan {
            instances,
            policy,
            seed,
            max_steps,
            top_k,
            repetition_penalty,
            out,
            provider,
            hash_dim,
            hash_seed,
        } => commands::cmd_plan(
            &PlanArgs {
                instances,
                policy,
                seed,
                max_steps,
                top_k,
                repetition_penalty,
                out,
                provider,
                hash_dim,
                hash_seed,
            },
            &settings,
        ),
        Command::Stats { data } => commands::cmd_stats(&data),
    }
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(error) = run(cli) {
        eprintln!("error: {error}");
        std::process::exit(error.exit_code());
    }
}
