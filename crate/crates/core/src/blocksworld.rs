//! Native BlocksWorld: state, legal actions, transitions, goal checking,
//! text grounding, an expert planner, and seeded random rollouts.
//!
//! This is the offline substrate for end-to-end pipelines: symbolic states
//! are grounded into canonical sentences so the rule-based extractor and the
//! routing layer can be exercised without any model backend.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::seeding;

/// Block color vocabulary used by the instance generator.
pub const BLOCK_COLORS: &[&str] = &[
    "red", "orange", "blue", "green", "yellow", "purple", "white", "black",
];

#[derive(Debug, thiserror::Error)]
pub enum BlocksError {
    #[error("block {0:?} has no support or multiple supports")]
    BrokenSupport(String),
    #[error("block {0:?} supports more than one block")]
    DoubleStacked(String),
    #[error("cycle detected through block {0:?}")]
    Cycle(String),
    #[error("block name is empty")]
    EmptyName,
    #[error("goal is inconsistent: {0}")]
    InconsistentGoal(String),
    #[error("goal references unknown block {0:?}")]
    UnknownBlock(String),
    #[error("illegal action {action}: {reason}")]
    IllegalAction { action: String, reason: String },
    #[error("instance line {line} is invalid: {message}")]
    InvalidInstance { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("instance line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
}

/// A physical block configuration. Every block rests on exactly one support:
/// another block, the table, or the hand (at most one block held).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct BlocksState {
    /// `x -> y` meaning x sits directly on y.
    on: BTreeMap<String, String>,
    table: BTreeSet<String>,
    holding: Option<String>,
}

impl BlocksState {
    pub fn new(
        on: BTreeMap<String, String>,
        table: BTreeSet<String>,
        holding: Option<String>,
    ) -> Result<Self, BlocksError> {
        let state = Self { on, table, holding };
        state.validate()?;
        Ok(state)
    }

    /// All blocks on the table, hand empty.
    pub fn all_on_table(blocks: &[String]) -> Result<Self, BlocksError> {
        Self::new(BTreeMap::new(), blocks.iter().cloned().collect(), None)
    }

    fn validate(&self) -> Result<(), BlocksError> {
        for name in self.blocks() {
            if name.trim().is_empty() {
                return Err(BlocksError::EmptyName);
            }
            let mut supports = 0;
            if self.on.contains_key(&name) {
                supports += 1;
            }
            if self.table.contains(&name) {
                supports += 1;
            }
            if self.holding.as_deref() == Some(name.as_str()) {
                supports += 1;
            }
            if supports != 1 {
                return Err(BlocksError::BrokenSupport(name));
            }
        }
        // A block may carry at most one other block.
        let mut seen_support: BTreeSet<&str> = BTreeSet::new();
        for support in self.on.values() {
            if !seen_support.insert(support) {
                return Err(BlocksError::DoubleStacked(support.clone()));
            }
        }
        if let Some(held) = &self.holding {
            if self.on.values().any(|s| s == held) {
                return Err(BlocksError::DoubleStacked(held.clone()));
            }
        }
        // No cycles: walk each chain down to the table.
        for start in self.on.keys() {
            let mut cursor = start;
            let mut hops = 0;
            while let Some(below) = self.on.get(cursor) {
                cursor = below;
                hops += 1;
                if hops > self.on.len() {
                    return Err(BlocksError::Cycle(start.clone()));
                }
            }
        }
        Ok(())
    }

    /// Every block name present in the state.
    pub fn blocks(&self) -> BTreeSet<String> {
        let mut all: BTreeSet<String> = self.on.keys().cloned().collect();
        all.extend(self.on.values().cloned());
        all.extend(self.table.iter().cloned());
        if let Some(h) = &self.holding {
            all.insert(h.clone());
        }
        all
    }

    /// Blocks with nothing on top of them and not currently held.
    pub fn clear_blocks(&self) -> BTreeSet<String> {
        let covered: BTreeSet<&String> = self.on.values().collect();
        self.blocks()
            .into_iter()
            .filter(|b| !covered.contains(b) && self.holding.as_deref() != Some(b.as_str()))
            .collect()
    }

    pub fn holding(&self) -> Option<&str> {
        self.holding.as_deref()
    }

    pub fn support_of(&self, block: &str) -> Option<&str> {
        self.on.get(block).map(String::as_str)
    }

    pub fn is_on_table(&self, block: &str) -> bool {
        self.table.contains(block)
    }

    pub fn on_relations(&self) -> &BTreeMap<String, String> {
        &self.on
    }

    pub fn table_blocks(&self) -> &BTreeSet<String> {
        &self.table
    }

    /// Canonical sentence rendering: hand clause, then on-relations sorted by
    /// the upper block, then table placements sorted, joined with ", ".
    pub fn to_text(&self) -> String {
        let mut clauses = Vec::new();
        match &self.holding {
            Some(h) => clauses.push(format!("the hand is currently holding {h} block")),
            None => clauses.push("the hand is empty".to_string()),
        }
        for (x, y) in &self.on {
            clauses.push(format!("the {x} block is on top of the {y} block"));
        }
        for x in &self.table {
            clauses.push(format!("the {x} block is on the table"));
        }
        clauses.join(", ")
    }
}

/// One of the four primitive manipulations.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BlockAction {
    PickUp(String),
    PutDown(String),
    Stack(String, String),
    Unstack(String, String),
}

impl BlockAction {
    /// Sentence form, matching the grounded observation grammar.
    pub fn describe(&self) -> String {
        match self {
            BlockAction::PickUp(x) => format!("pick up the {x} block"),
            BlockAction::PutDown(x) => format!("put down the {x} block"),
            BlockAction::Stack(x, y) => format!("stack the {x} block on top of the {y} block"),
            BlockAction::Unstack(x, y) => {
                format!("unstack the {x} block from on top of the {y} block")
            }
        }
    }

    /// Opaque ID form, e.g. `UNSTACK_ORANGE_RED`.
    pub fn id(&self) -> String {
        fn up(s: &str) -> String {
            s.to_uppercase().replace(' ', "-")
        }
        match self {
            BlockAction::PickUp(x) => format!("PICK-UP_{}", up(x)),
            BlockAction::PutDown(x) => format!("PUT-DOWN_{}", up(x)),
            BlockAction::Stack(x, y) => format!("STACK_{}_{}", up(x), up(y)),
            BlockAction::Unstack(x, y) => format!("UNSTACK_{}_{}", up(x), up(y)),
        }
    }
}

/// Exactly the legal actions in `state`, in a deterministic order
/// (action kind, then block names lexicographically).
pub fn admissible_actions(state: &BlocksState) -> Vec<BlockAction> {
    let mut actions = Vec::new();
    let clear = state.clear_blocks();
    match state.holding() {
        Some(held) => {
            actions.push(BlockAction::PutDown(held.to_string()));
            for y in &clear {
                if y != held {
                    actions.push(BlockAction::Stack(held.to_string(), y.clone()));
                }
            }
        }
        None => {
            for x in &clear {
                if state.is_on_table(x) {
                    actions.push(BlockAction::PickUp(x.clone()));
                } else if let Some(y) = state.support_of(x) {
                    actions.push(BlockAction::Unstack(x.clone(), y.to_string()));
                }
            }
        }
    }
    actions.sort();
    actions
}

/// Apply an action, checking its preconditions.
pub fn apply(state: &BlocksState, action: &BlockAction) -> Result<BlocksState, BlocksError> {
    let illegal = |reason: &str| BlocksError::IllegalAction {
        action: action.describe(),
        reason: reason.to_string(),
    };
    let mut next = state.clone();
    match action {
        BlockAction::PickUp(x) => {
            if state.holding().is_some() {
                return Err(illegal("hand is not empty"));
            }
            if !state.is_on_table(x) {
                return Err(illegal("block is not on the table"));
            }
            if !state.clear_blocks().contains(x) {
                return Err(illegal("block is not clear"));
            }
            next.table.remove(x);
            next.holding = Some(x.clone());
        }
        BlockAction::PutDown(x) => {
            if state.holding() != Some(x.as_str()) {
                return Err(illegal("hand is not holding this block"));
            }
            next.holding = None;
            next.table.insert(x.clone());
        }
        BlockAction::Stack(x, y) => {
            if x == y {
                return Err(illegal("cannot stack a block on itself"));
            }
            if state.holding() != Some(x.as_str()) {
                return Err(illegal("hand is not holding this block"));
            }
            if !state.clear_blocks().contains(y) {
                return Err(illegal("target block is not clear"));
            }
            next.holding = None;
            next.on.insert(x.clone(), y.clone());
        }
        BlockAction::Unstack(x, y) => {
            if x == y {
                return Err(illegal("cannot unstack a block from itself"));
            }
            if state.holding().is_some() {
                return Err(illegal("hand is not empty"));
            }
            if state.support_of(x) != Some(y.as_str()) {
                return Err(illegal("block is not on the named support"));
            }
            if !state.clear_blocks().contains(x) {
                return Err(illegal("block is not clear"));
            }
            next.on.remove(x);
            next.holding = Some(x.clone());
        }
    }
    debug_assert!(next.validate().is_ok());
    Ok(next)
}

/// Target configuration: required on-pairs plus optional table placements.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BlocksGoal {
    on: BTreeMap<String, String>,
    table: BTreeSet<String>,
}

impl BlocksGoal {
    pub fn new(on: BTreeMap<String, String>, table: BTreeSet<String>) -> Result<Self, BlocksError> {
        let goal = Self { on, table };
        goal.validate()?;
        Ok(goal)
    }

    pub fn from_pairs<'a, I: IntoIterator<Item = (&'a str, &'a str)>>(
        pairs: I,
    ) -> Result<Self, BlocksError> {
        let on = pairs
            .into_iter()
            .map(|(x, y)| (x.to_string(), y.to_string()))
            .collect();
        Self::new(on, BTreeSet::new())
    }

    fn validate(&self) -> Result<(), BlocksError> {
        for (x, y) in &self.on {
            if x == y {
                return Err(BlocksError::InconsistentGoal(format!(
                    "{x} required on itself"
                )));
            }
            if self.table.contains(x) {
                return Err(BlocksError::InconsistentGoal(format!(
                    "{x} required both on {y} and on the table"
                )));
            }
        }
        let mut supports = BTreeSet::new();
        for y in self.on.values() {
            if !supports.insert(y) {
                return Err(BlocksError::InconsistentGoal(format!(
                    "two blocks required on {y}"
                )));
            }
        }
        // On-chains must be acyclic.
        for start in self.on.keys() {
            let mut cursor = start;
            let mut hops = 0;
            while let Some(below) = self.on.get(cursor) {
                cursor = below;
                hops += 1;
                if hops > self.on.len() {
                    return Err(BlocksError::InconsistentGoal(format!(
                        "cycle through {start}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn on_requirements(&self) -> &BTreeMap<String, String> {
        &self.on
    }

    pub fn table_requirements(&self) -> &BTreeSet<String> {
        &self.table
    }

    pub fn is_empty(&self) -> bool {
        self.on.is_empty() && self.table.is_empty()
    }

    /// All individual requirements rendered as canonical clauses, on-pairs
    /// first, each in the same grammar the state rendering uses.
    pub fn to_text(&self) -> String {
        let mut clauses: Vec<String> = self
            .on
            .iter()
            .map(|(x, y)| format!("the {x} block is on top of the {y} block"))
            .collect();
        clauses.extend(
            self.table
                .iter()
                .map(|x| format!("the {x} block is on the table")),
        );
        clauses.join(", ")
    }
}

/// True when every goal requirement holds in `state`.
pub fn goal_satisfied(state: &BlocksState, goal: &BlocksGoal) -> bool {
    goal.on
        .iter()
        .all(|(x, y)| state.support_of(x) == Some(y.as_str()))
        && goal.table.iter().all(|x| state.is_on_table(x))
}

/// Count of goal requirements currently satisfied.
pub fn satisfied_clauses(state: &BlocksState, goal: &BlocksGoal) -> usize {
    goal.on
        .iter()
        .filter(|(x, y)| state.support_of(x) == Some(y.as_str()))
        .count()
        + goal.table.iter().filter(|x| state.is_on_table(x)).count()
}

/// A block is settled when it sits in its final goal position with its whole
/// support chain final beneath it. Settled towers are never disturbed.
fn settled(block: &str, state: &BlocksState, goal: &BlocksGoal) -> bool {
    if state.holding() == Some(block) {
        return false;
    }
    match state.support_of(block) {
        Some(actual) => match goal.on.get(block) {
            Some(required) if required == actual => settled(actual, state, goal),
            _ => false,
        },
        None => {
            // On the table: final unless the goal wants it on another block.
            !goal.on.contains_key(block)
        }
    }
}

/// Two-phase expert planner: unstack every unsettled stacked block onto the
/// table, then build the goal towers bottom-up. Plans are valid rather than
/// optimal; length is bounded by two actions per block and phase.
pub fn expert_plan(init: &BlocksState, goal: &BlocksGoal) -> Result<Vec<BlockAction>, BlocksError> {
    for block in goal
        .on
        .keys()
        .chain(goal.on.values())
        .chain(goal.table.iter())
    {
        if !init.blocks().contains(block) {
            return Err(BlocksError::UnknownBlock(block.clone()));
        }
    }
    let mut plan = Vec::new();
    let mut state = init.clone();
    if goal_satisfied(&state, goal) {
        return Ok(plan);
    }
    // A held block goes to the table first so both phases start hand-empty.
    if let Some(held) = state.holding() {
        let action = BlockAction::PutDown(held.to_string());
        state = apply(&state, &action)?;
        plan.push(action);
    }
    // Phase 1: clear everything that is not already final.
    loop {
        let candidate = state
            .clear_blocks()
            .into_iter()
            .find(|b| state.support_of(b).is_some() && !settled(b, &state, goal));
        match candidate {
            Some(block) => {
                let support = state.support_of(&block).expect("stacked").to_string();
                for action in [
                    BlockAction::Unstack(block.clone(), support),
                    BlockAction::PutDown(block.clone()),
                ] {
                    state = apply(&state, &action)?;
                    plan.push(action);
                }
            }
            None => break,
        }
    }
    // Phase 2: stack goal pairs bottom-up.
    loop {
        let next_pair = goal
            .on
            .iter()
            .find(|(x, y)| !settled(x, &state, goal) && settled(y, &state, goal));
        match next_pair {
            Some((x, y)) => {
                let (x, y) = (x.clone(), y.clone());
                for action in [BlockAction::PickUp(x.clone()), BlockAction::Stack(x, y)] {
                    state = apply(&state, &action)?;
                    plan.push(action);
                }
            }
            None => break,
        }
    }
    debug_assert!(goal_satisfied(&state, goal));
    Ok(plan)
}

/// One step of a rollout: the action taken and the state it produced.
#[derive(Debug, Clone)]
pub struct RolloutStep {
    pub action: BlockAction,
    pub state_after: BlocksState,
}

/// Uniformly sample admissible actions for `steps` steps, deterministically
/// per seed.
pub fn random_rollout(init: &BlocksState, steps: usize, rng_seed: u64) -> Vec<RolloutStep> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut state = init.clone();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let actions = admissible_actions(&state);
        if actions.is_empty() {
            break;
        }
        let action = actions[rng.random_range(0..actions.len())].clone();
        state = apply(&state, &action).expect("sampled from admissible set");
        out.push(RolloutStep {
            action: action.clone(),
            state_after: state.clone(),
        });
    }
    out
}

// ---------------------------------------------------------------------------
// Instances and generation
// ---------------------------------------------------------------------------

/// A planning problem: named blocks, an initial configuration (hand empty),
/// and a goal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlocksInstance {
    pub id: String,
    pub blocks: Vec<String>,
    pub init: BlocksState,
    pub goal: BlocksGoal,
}

impl BlocksInstance {
    /// Goal text in the canonical clause grammar.
    pub fn goal_text(&self) -> String {
        self.goal.to_text()
    }
}

#[derive(Serialize, Deserialize)]
struct InitSpec {
    on: BTreeMap<String, String>,
    table: BTreeSet<String>,
}

#[derive(Serialize, Deserialize)]
struct GoalSpec {
    on: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    table: BTreeSet<String>,
}

#[derive(Serialize, Deserialize)]
struct InstanceLine {
    blocks: Vec<String>,
    init: InitSpec,
    goal: GoalSpec,
}

/// Serialize one instance to its JSONL line form.
pub fn instance_to_line(instance: &BlocksInstance) -> String {
    let line = InstanceLine {
        blocks: instance.blocks.clone(),
        init: InitSpec {
            on: instance.init.on_relations().clone(),
            table: instance.init.table_blocks().clone(),
        },
        goal: GoalSpec {
            on: instance.goal.on_requirements().clone(),
            table: instance.goal.table_requirements().clone(),
        },
    };
    serde_json::to_string(&line).expect("instance serialization cannot fail")
}

/// Parse an instance file (one JSON object per line; ids assigned by line).
pub fn parse_instances(text: &str) -> Result<Vec<BlocksInstance>, BlocksError> {
    let mut out = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let line_no = index + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let line: InstanceLine = serde_json::from_str(raw).map_err(|source| BlocksError::Json {
            line: line_no,
            source,
        })?;
        let init = BlocksState::new(line.init.on, line.init.table, None).map_err(|e| {
            BlocksError::InvalidInstance {
                line: line_no,
                message: e.to_string(),
            }
        })?;
        let goal = BlocksGoal::new(line.goal.on, line.goal.table).map_err(|e| {
            BlocksError::InvalidInstance {
                line: line_no,
                message: e.to_string(),
            }
        })?;
        let instance = BlocksInstance {
            id: format!("instance-{:04}", index),
            blocks: line.blocks,
            init,
            goal,
        };
        let known = instance.init.blocks();
        for b in &instance.blocks {
            if !known.contains(b) {
                return Err(BlocksError::InvalidInstance {
                    line: line_no,
                    message: format!("declared block {b:?} absent from init"),
                });
            }
        }
        out.push(instance);
    }
    Ok(out)
}

/// Random configuration: shuffle the blocks, then grow stacks left to right,
/// starting a new stack with probability 1/2.
pub fn random_state(blocks: &[String], rng: &mut ChaCha8Rng) -> BlocksState {
    let mut order: Vec<String> = blocks.to_vec();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut on = BTreeMap::new();
    let mut table = BTreeSet::new();
    let mut previous: Option<String> = None;
    for block in order {
        let new_stack = previous.is_none() || rng.random_range(0..2) == 0;
        if new_stack {
            table.insert(block.clone());
        } else {
            on.insert(block.clone(), previous.clone().expect("previous exists"));
        }
        previous = Some(block);
    }
    BlocksState::new(on, table, None).expect("construction is support-consistent")
}

/// Configuration for [`generate_instances`].
#[derive(Debug, Clone, Copy)]
pub struct InstanceGenConfig {
    pub n_blocks: usize,
    /// Resample budget for drawing a goal no clause of which already holds
    /// in the initial state.
    pub max_goal_attempts: usize,
}

impl Default for InstanceGenConfig {
    fn default() -> Self {
        Self {
            n_blocks: 3,
            max_goal_attempts: 64,
        }
    }
}

/// Draw an initial state plus a goal none of whose requirements already
/// holds there: progress starts at zero, so every step that completes a
/// requirement is a real gain.
pub fn sample_init_and_goal(
    blocks: &[String],
    rng: &mut ChaCha8Rng,
    max_goal_attempts: usize,
) -> (BlocksState, BlocksGoal) {
    let init = random_state(blocks, rng);
    for _ in 0..max_goal_attempts {
        let target = random_state(blocks, rng);
        if target.on_relations().is_empty() {
            continue;
        }
        let candidate = BlocksGoal::new(target.on_relations().clone(), BTreeSet::new())
            .expect("relations of a valid state are consistent");
        let fresh = candidate
            .on_requirements()
            .iter()
            .all(|(x, y)| init.support_of(x) != Some(y.as_str()));
        if fresh {
            return (init, candidate);
        }
    }
    // Fall back to a canonical tower if sampling kept colliding; if even
    // that matches the initial stacking, the reversed tower cannot.
    let mut on = BTreeMap::new();
    for pair in blocks.windows(2) {
        if init.support_of(&pair[1]) != Some(pair[0].as_str()) {
            on.insert(pair[1].clone(), pair[0].clone());
        }
    }
    if on.is_empty() {
        for pair in blocks.windows(2) {
            on.insert(pair[0].clone(), pair[1].clone());
        }
    }
    let goal = BlocksGoal::new(on, BTreeSet::new()).expect("tower goal is consistent");
    (init, goal)
}

/// Seeded instance set with fully-unsatisfied goals per
/// [`sample_init_and_goal`].
pub fn generate_instances(
    count: usize,
    seed: u64,
    config: InstanceGenConfig,
) -> Vec<BlocksInstance> {
    let n = config.n_blocks.clamp(2, BLOCK_COLORS.len());
    let blocks: Vec<String> = BLOCK_COLORS.iter().take(n).map(|c| c.to_string()).collect();
    (0..count)
        .map(|index| {
            let mut rng = ChaCha8Rng::seed_from_u64(seeding::mix(&[
                seed,
                index as u64,
                seeding::hash_text("blocks-instance"),
            ]));
            let (init, goal) = sample_init_and_goal(&blocks, &mut rng, config.max_goal_attempts);
            BlocksInstance {
                id: format!("blocks-{seed}-{index:04}"),
                blocks: blocks.clone(),
                init,
                goal,
            }
        })
        .collect()
}
