//! Paired benchmark construction and I/O.
//!
//! Every benchmark item is a positive/negative trajectory pair sharing one
//! goal. Positives wrap an expert demonstration whose steps carry linearly
//! interpolated rewards `j/T` (1-indexed), optionally padded front and back
//! with random interaction steps that keep their native environment reward.
//! Negatives come from a random policy and carry all-zero rewards; any
//! rollout that reports success or shares a contiguous action run with the
//! expert is rejected outright.
//!
//! On disk a dataset is a directory with two JSONL files:
//! `trajectories.jsonl` (one trajectory per line) and `pairs.jsonl`
//! (`{"positive_id": ..., "negative_id": ...}` per line).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blocksworld::{
    self, admissible_actions, apply, expert_plan, goal_satisfied, BlocksState, BLOCK_COLORS,
};
use crate::seeding;

pub const TRAJECTORIES_FILE: &str = "trajectories.jsonl";
pub const PAIRS_FILE: &str = "pairs.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("expert step list is empty")]
    EmptyExpert,
    #[error("rollout step list is empty")]
    EmptyRollout,
    #[error("{file} line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("trajectory {trajectory_id}: {message}")]
    Invariant {
        trajectory_id: String,
        message: String,
    },
    #[error("could not build an accepted negative for {pair_id} within {attempts} attempts")]
    NegativeExhausted { pair_id: String, attempts: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Blocks(#[from] blocksworld::BlocksError),
}

/// Where a step came from during construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOrigin {
    Expert,
    RandomPad,
    RandomPolicy,
}

/// Task domain of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    AlfWorld,
    ScienceWorld,
    WebShop,
    BlocksWorld,
    TextWorld,
    Synthetic,
}

impl Domain {
    pub const ALL: [Domain; 6] = [
        Domain::AlfWorld,
        Domain::ScienceWorld,
        Domain::WebShop,
        Domain::BlocksWorld,
        Domain::TextWorld,
        Domain::Synthetic,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Domain::AlfWorld => "AlfWorld",
            Domain::ScienceWorld => "ScienceWorld",
            Domain::WebShop => "WebShop",
            Domain::BlocksWorld => "BlocksWorld",
            Domain::TextWorld => "TextWorld",
            Domain::Synthetic => "Synthetic",
        }
    }
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

/// One interaction step with its ground-truth reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub action: String,
    pub observation: String,
    pub reward: f64,
    pub origin: StepOrigin,
}

/// A goal-conditioned trajectory with step-wise ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub domain: Domain,
    pub goal: String,
    pub label: Label,
    pub steps: Vec<Step>,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl Trajectory {
    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let fail = |message: String| DatasetError::Invariant {
            trajectory_id: self.id.clone(),
            message,
        };
        if self.id.trim().is_empty() {
            return Err(fail("empty id".into()));
        }
        if self.steps.is_empty() {
            return Err(fail("trajectory has no steps".into()));
        }
        for (i, step) in self.steps.iter().enumerate() {
            if !step.reward.is_finite() || !(0.0..=1.0).contains(&step.reward) {
                return Err(fail(format!(
                    "step {i} reward {} outside [0, 1]",
                    step.reward
                )));
            }
        }
        match self.label {
            Label::Positive => {
                if !self.steps.iter().any(|s| s.reward == 1.0) {
                    return Err(fail("positive trajectory never reaches reward 1.0".into()));
                }
            }
            Label::Negative => {
                if self.steps.iter().any(|s| s.reward >= 1.0) {
                    return Err(fail("negative trajectory contains reward 1.0".into()));
                }
            }
        }
        Ok(())
    }
}

/// A positive/negative pair sharing goal text and domain.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedInstance {
    pub positive: Trajectory,
    pub negative: Trajectory,
}

impl PairedInstance {
    pub fn validate(&self) -> Result<(), DatasetError> {
        self.positive.validate()?;
        self.negative.validate()?;
        if self.positive.label != Label::Positive {
            return Err(DatasetError::Invariant {
                trajectory_id: self.positive.id.clone(),
                message: "pair's positive member is not labeled positive".into(),
            });
        }
        if self.negative.label != Label::Negative {
            return Err(DatasetError::Invariant {
                trajectory_id: self.negative.id.clone(),
                message: "pair's negative member is not labeled negative".into(),
            });
        }
        if self.positive.goal != self.negative.goal || self.positive.domain != self.negative.domain
        {
            return Err(DatasetError::Invariant {
                trajectory_id: self.negative.id.clone(),
                message: "pair members disagree on goal or domain".into(),
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

/// An unlabeled interaction step.
#[derive(Debug, Clone)]
pub struct RawStep {
    pub action: String,
    pub observation: String,
}

/// A padding step carrying its native environment reward.
#[derive(Debug, Clone)]
pub struct PadStep {
    pub action: String,
    pub observation: String,
    pub native_reward: f64,
}

/// How many pad steps go before and after the expert segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PadPlan {
    pub front: usize,
    pub back: usize,
}

impl PadPlan {
    /// Draw the total pad count uniformly from `0..=max_pad`, then the front
    /// share uniformly from `0..=total`.
    pub fn draw(rng_seed: u64, max_pad: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let total = rng.random_range(0..=max_pad);
        let front = rng.random_range(0..=total);
        Self {
            front,
            back: total - front,
        }
    }
}

/// Assemble a positive trajectory: pads keep their native rewards, expert
/// step `j` of `T` (1-indexed) receives `j/T`.
pub fn build_positive(
    id: &str,
    domain: Domain,
    goal: &str,
    expert: &[RawStep],
    front_pads: &[PadStep],
    back_pads: &[PadStep],
) -> Result<Trajectory, DatasetError> {
    if expert.is_empty() {
        return Err(DatasetError::EmptyExpert);
    }
    let total = expert.len() as f64;
    let mut steps = Vec::with_capacity(front_pads.len() + expert.len() + back_pads.len());
    for pad in front_pads {
        steps.push(Step {
            action: pad.action.clone(),
            observation: pad.observation.clone(),
            reward: pad.native_reward,
            origin: StepOrigin::RandomPad,
        });
    }
    for (index, step) in expert.iter().enumerate() {
        steps.push(Step {
            action: step.action.clone(),
            observation: step.observation.clone(),
            reward: (index + 1) as f64 / total,
            origin: StepOrigin::Expert,
        });
    }
    for pad in back_pads {
        steps.push(Step {
            action: pad.action.clone(),
            observation: pad.observation.clone(),
            reward: pad.native_reward,
            origin: StepOrigin::RandomPad,
        });
    }
    let trajectory = Trajectory {
        id: id.to_string(),
        domain,
        goal: goal.to_string(),
        label: Label::Positive,
        steps,
        meta: BTreeMap::new(),
    };
    trajectory.validate()?;
    Ok(trajectory)
}

/// Why a candidate negative was thrown away.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    /// Some step reported environment success.
    SuccessObserved { step: usize },
    /// The rollout shares a contiguous action run with the expert.
    ExpertOverlap { rollout_start: usize, length: usize },
}

/// Outcome of negative screening: rejection is a value, not an error.
#[derive(Debug, Clone)]
pub enum NegativeOutcome {
    Accepted(Trajectory),
    Rejected(RejectReason),
}

/// Find the first contiguous run of at least `min_len` actions shared
/// between `rollout` and `expert`. Any longer shared run necessarily
/// contains one of this length.
pub fn find_contiguous_overlap(
    rollout: &[String],
    expert: &[String],
    min_len: usize,
) -> Option<(usize, usize)> {
    if min_len == 0 || rollout.len() < min_len || expert.len() < min_len {
        return None;
    }
    for start in 0..=(rollout.len() - min_len) {
        let window = &rollout[start..start + min_len];
        if expert.windows(min_len).any(|w| w == window) {
            return Some((start, min_len));
        }
    }
    None
}

/// Screen a random rollout into an all-zero-reward negative, rejecting
/// accidental successes and expert mimicry.
pub fn build_negative(
    id: &str,
    domain: Domain,
    goal: &str,
    rollout: &[RawStep],
    expert: &[RawStep],
    goal_reached_flags: &[bool],
    overlap_min_len: usize,
) -> Result<NegativeOutcome, DatasetError> {
    if rollout.is_empty() {
        return Err(DatasetError::EmptyRollout);
    }
    if expert.is_empty() {
        return Err(DatasetError::EmptyExpert);
    }
    if let Some(step) = goal_reached_flags.iter().position(|reached| *reached) {
        return Ok(NegativeOutcome::Rejected(RejectReason::SuccessObserved {
            step,
        }));
    }
    let rollout_actions: Vec<String> = rollout.iter().map(|s| s.action.clone()).collect();
    let expert_actions: Vec<String> = expert.iter().map(|s| s.action.clone()).collect();
    if let Some((rollout_start, length)) =
        find_contiguous_overlap(&rollout_actions, &expert_actions, overlap_min_len)
    {
        return Ok(NegativeOutcome::Rejected(RejectReason::ExpertOverlap {
            rollout_start,
            length,
        }));
    }
    let steps = rollout
        .iter()
        .map(|s| Step {
            action: s.action.clone(),
            observation: s.observation.clone(),
            reward: 0.0,
            origin: StepOrigin::RandomPolicy,
        })
        .collect();
    let trajectory = Trajectory {
        id: id.to_string(),
        domain,
        goal: goal.to_string(),
        label: Label::Negative,
        steps,
        meta: BTreeMap::new(),
    };
    trajectory.validate()?;
    Ok(NegativeOutcome::Accepted(trajectory))
}

// ---------------------------------------------------------------------------
// BlocksWorld-backed pair generation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct BlocksworldGenConfig {
    pub n_pairs: usize,
    pub seed: u64,
    pub min_blocks: usize,
    pub max_blocks: usize,
    pub max_pad: usize,
    /// Rollout resample budget per negative.
    pub negative_attempts: usize,
    /// Minimum shared contiguous action run that disqualifies a negative.
    pub overlap_min_len: usize,
}

impl BlocksworldGenConfig {
    pub fn new(n_pairs: usize, seed: u64) -> Self {
        Self {
            n_pairs,
            seed,
            min_blocks: 3,
            max_blocks: 4,
            max_pad: 3,
            negative_attempts: 200,
            overlap_min_len: 2,
        }
    }
}

fn pad_from_action(
    state: &BlocksState,
    action: &blocksworld::BlockAction,
    reward: f64,
) -> (PadStep, BlocksState) {
    let next = apply(state, action).expect("pad actions come from the admissible set");
    (
        PadStep {
            action: action.describe(),
            observation: next.to_text(),
            native_reward: reward,
        },
        next,
    )
}

/// Build `n_pairs` positive/negative pairs from seeded BlocksWorld episodes:
/// expert plans for positives (with native-reward pads), filtered random
/// rollouts for negatives.
pub fn generate_blocksworld_pairs(
    config: BlocksworldGenConfig,
) -> Result<Vec<PairedInstance>, DatasetError> {
    let mut pairs = Vec::with_capacity(config.n_pairs);
    for index in 0..config.n_pairs {
        let mut rng = ChaCha8Rng::seed_from_u64(seeding::mix(&[
            config.seed,
            index as u64,
            seeding::hash_text("pair-instance"),
        ]));
        let n_blocks = rng
            .random_range(config.min_blocks..=config.max_blocks.max(config.min_blocks))
            .clamp(2, BLOCK_COLORS.len());
        let blocks: Vec<String> = BLOCK_COLORS
            .iter()
            .take(n_blocks)
            .map(|c| c.to_string())
            .collect();
        let (init, goal) = blocksworld::sample_init_and_goal(&blocks, &mut rng, 64);
        let goal_text = goal.to_text();
        let pair_id = format!("bw-{}-{:04}", config.seed, index);

        let plan = PadPlan::draw(
            seeding::mix(&[config.seed, index as u64, seeding::hash_text("pad-plan")]),
            config.max_pad,
        );

        // Front pads wander from the initial state but must not complete the
        // goal; the expert plan starts from wherever they end.
        let mut front_pads = Vec::new();
        let mut cursor = init.clone();
        for _ in 0..plan.front {
            let safe: Vec<_> = admissible_actions(&cursor)
                .into_iter()
                .filter(|a| {
                    let next = apply(&cursor, a).expect("admissible");
                    !goal_satisfied(&next, &goal)
                })
                .collect();
            if safe.is_empty() {
                break;
            }
            let action = safe[rng.random_range(0..safe.len())].clone();
            let (pad, next) = pad_from_action(&cursor, &action, 0.0);
            front_pads.push(pad);
            cursor = next;
        }

        let expert_actions = expert_plan(&cursor, &goal)?;
        let mut expert_steps = Vec::with_capacity(expert_actions.len());
        for action in &expert_actions {
            cursor = apply(&cursor, action)?;
            expert_steps.push(RawStep {
                action: action.describe(),
                observation: cursor.to_text(),
            });
        }

        // Back pads keep the goal satisfied, matching the sparse-success
        // convention that post-success exploration still reads reward 1.
        let mut back_pads = Vec::new();
        for _ in 0..plan.back {
            let safe: Vec<_> = admissible_actions(&cursor)
                .into_iter()
                .filter(|a| {
                    let next = apply(&cursor, a).expect("admissible");
                    goal_satisfied(&next, &goal)
                })
                .collect();
            if safe.is_empty() {
                break;
            }
            let action = safe[rng.random_range(0..safe.len())].clone();
            let (pad, next) = pad_from_action(&cursor, &action, 1.0);
            back_pads.push(pad);
            cursor = next;
        }

        let mut positive = build_positive(
            &format!("{pair_id}-pos"),
            Domain::BlocksWorld,
            &goal_text,
            &expert_steps,
            &front_pads,
            &back_pads,
        )?;
        positive
            .meta
            .insert("blocks".into(), serde_json::json!(n_blocks));
        positive
            .meta
            .insert("expert_len".into(), serde_json::json!(expert_steps.len()));
        positive
            .meta
            .insert("pads_front".into(), serde_json::json!(front_pads.len()));
        positive
            .meta
            .insert("pads_back".into(), serde_json::json!(back_pads.len()));

        let rollout_len = positive.steps.len();
        let mut negative = None;
        for attempt in 0..config.negative_attempts {
            let rollout_seed = seeding::mix(&[
                config.seed,
                index as u64,
                attempt as u64,
                seeding::hash_text("negative-rollout"),
            ]);
            let rollout = blocksworld::random_rollout(&init, rollout_len, rollout_seed);
            if rollout.is_empty() {
                break;
            }
            let raw: Vec<RawStep> = rollout
                .iter()
                .map(|s| RawStep {
                    action: s.action.describe(),
                    observation: s.state_after.to_text(),
                })
                .collect();
            let flags: Vec<bool> = rollout
                .iter()
                .map(|s| goal_satisfied(&s.state_after, &goal))
                .collect();
            match build_negative(
                &format!("{pair_id}-neg"),
                Domain::BlocksWorld,
                &goal_text,
                &raw,
                &expert_steps,
                &flags,
                config.overlap_min_len,
            )? {
                NegativeOutcome::Accepted(mut trajectory) => {
                    trajectory
                        .meta
                        .insert("attempt".into(), serde_json::json!(attempt));
                    negative = Some(trajectory);
                    break;
                }
                NegativeOutcome::Rejected(_) => continue,
            }
        }
        let negative = negative.ok_or(DatasetError::NegativeExhausted {
            pair_id: pair_id.clone(),
            attempts: config.negative_attempts,
        })?;

        let pair = PairedInstance { positive, negative };
        pair.validate()?;
        pairs.push(pair);
    }
    Ok(pairs)
}

// ---------------------------------------------------------------------------
// I/O
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct PairLine {
    positive_id: String,
    negative_id: String,
}

/// Write `data` to `path` atomically (temp file in the same directory, then
/// rename), so failures never leave partial files behind.
pub fn write_atomic(path: &Path, data: &[u8]) -> std::io::Result<()> {
    let directory = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(directory)?;
    let tmp = directory.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out")
    ));
    {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(data)?;
        file.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Save a dataset under `dir` as `trajectories.jsonl` + `pairs.jsonl`.
pub fn save_dataset(instances: &[PairedInstance], dir: &Path) -> Result<(), DatasetError> {
    let mut trajectories = String::new();
    let mut manifest = String::new();
    for pair in instances {
        pair.validate()?;
        trajectories.push_str(&serde_json::to_string(&pair.positive).expect("serializable"));
        trajectories.push('\n');
        trajectories.push_str(&serde_json::to_string(&pair.negative).expect("serializable"));
        trajectories.push('\n');
        manifest.push_str(
            &serde_json::to_string(&PairLine {
                positive_id: pair.positive.id.clone(),
                negative_id: pair.negative.id.clone(),
            })
            .expect("serializable"),
        );
        manifest.push('\n');
    }
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join(TRAJECTORIES_FILE), trajectories.as_bytes())?;
    write_atomic(&dir.join(PAIRS_FILE), manifest.as_bytes())?;
    Ok(())
}

/// Load and validate a dataset directory.
pub fn load_dataset(dir: &Path) -> Result<Vec<PairedInstance>, DatasetError> {
    let trajectories_path = dir.join(TRAJECTORIES_FILE);
    let pairs_path = dir.join(PAIRS_FILE);
    let mut by_id: BTreeMap<String, Trajectory> = BTreeMap::new();
    let text = std::fs::read_to_string(&trajectories_path)?;
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let trajectory: Trajectory =
            serde_json::from_str(line).map_err(|e| DatasetError::Parse {
                file: TRAJECTORIES_FILE.into(),
                line: index + 1,
                message: e.to_string(),
            })?;
        trajectory.validate()?;
        if by_id
            .insert(trajectory.id.clone(), trajectory.clone())
            .is_some()
        {
            return Err(DatasetError::Invariant {
                trajectory_id: trajectory.id,
                message: "duplicate trajectory id".into(),
            });
        }
    }
    let manifest = std::fs::read_to_string(&pairs_path)?;
    let mut instances = Vec::new();
    for (index, line) in manifest.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pair: PairLine = serde_json::from_str(line).map_err(|e| DatasetError::Parse {
            file: PAIRS_FILE.into(),
            line: index + 1,
            message: e.to_string(),
        })?;
        let positive =
            by_id
                .get(&pair.positive_id)
                .cloned()
                .ok_or_else(|| DatasetError::Invariant {
                    trajectory_id: pair.positive_id.clone(),
                    message: "pair references unknown trajectory".into(),
                })?;
        let negative =
            by_id
                .get(&pair.negative_id)
                .cloned()
                .ok_or_else(|| DatasetError::Invariant {
                    trajectory_id: pair.negative_id.clone(),
                    message: "pair references unknown trajectory".into(),
                })?;
        let instance = PairedInstance { positive, negative };
        instance.validate()?;
        instances.push(instance);
    }
    Ok(instances)
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub pairs: usize,
    pub pairs_per_domain: BTreeMap<String, usize>,
    pub trajectories: usize,
    pub positives: usize,
    pub negatives: usize,
    pub mean_steps: f64,
}

/// Direct-iteration summary of a dataset.
pub fn dataset_stats(instances: &[PairedInstance]) -> DatasetStats {
    let mut pairs_per_domain: BTreeMap<String, usize> = BTreeMap::new();
    let mut total_steps = 0usize;
    for pair in instances {
        *pairs_per_domain
            .entry(pair.positive.domain.label().to_string())
            .or_default() += 1;
        total_steps += pair.positive.steps.len() + pair.negative.steps.len();
    }
    let trajectories = instances.len() * 2;
    DatasetStats {
        pairs: instances.len(),
        pairs_per_domain,
        trajectories,
        positives: instances.len(),
        negatives: instances.len(),
        mean_steps: if trajectories == 0 {
            0.0
        } else {
            total_steps as f64 / trajectories as f64
        },
    }
}
