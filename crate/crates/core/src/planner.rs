//! Reward-guided action selection over the native BlocksWorld environment.
//!
//! Each step enumerates the admissible actions, simulates every candidate
//! one step ahead through the exact transition function, extracts the
//! successor's factored state, and ranks candidates by differential reward:
//! the predicted-reward gain over the current state minus a repetition
//! penalty. The top candidate is executed; when every candidate's gain stays
//! non-positive for several steps in a row, one seeded random action breaks
//! the deadlock.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::blocksworld::{
    admissible_actions, apply, goal_satisfied, BlockAction, BlocksError, BlocksInstance,
    BlocksState,
};
use crate::embedding::SimilarityProvider;
use crate::extraction::{self, ExtractionContext, ExtractionError, ExtractorBackend};
use crate::routing::{predict_reward, MatchReport, RoutingError};
use crate::seeding;
use crate::state_model::{FactoredState, GoalState};

#[derive(Debug, thiserror::Error)]
pub enum PlannerError {
    #[error("candidate list is empty")]
    EmptyCandidates,
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Extraction(#[from] ExtractionError),
    #[error(transparent)]
    Blocks(#[from] BlocksError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    RewardGuided,
    Random,
}

#[derive(Debug, Clone, Copy)]
pub struct PlannerConfig {
    pub top_k: usize,
    /// Repetition penalty subtracted when the action appears in the recent
    /// history window.
    pub repetition_penalty: f64,
    /// How far back the repetition indicator looks. Cycles are local;
    /// penalizing the whole episode log permanently buries moves that a
    /// recovery legitimately needs to repeat.
    pub repetition_window: usize,
    pub max_steps: usize,
    pub tie_break_seed: u64,
    /// Candidate sets larger than this are subsampled (seeded) before
    /// ranking.
    pub candidate_cap: usize,
    /// Consecutive non-positive best gains tolerated before one random
    /// escape action.
    pub plateau_patience: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            top_k: 3,
            repetition_penalty: 0.1,
            repetition_window: 4,
            max_steps: 20,
            tie_break_seed: 0,
            candidate_cap: 16,
            plateau_patience: 3,
        }
    }
}

/// One scored candidate action.
#[derive(Debug, Clone, Serialize)]
pub struct RankedCandidate {
    pub action: String,
    pub action_id: String,
    /// Predicted reward of the simulated successor.
    pub successor_reward: f64,
    /// successor_reward − current_score − penalty·repeated.
    pub differential: f64,
    pub repeated: bool,
}

/// Score and order candidates by differential reward, descending. Exact ties
/// break by a seeded per-action key, then action text.
pub fn rank_candidates(
    goal: &GoalState,
    current_score: f64,
    candidates: &[(BlockAction, FactoredState)],
    history: &[String],
    provider: &SimilarityProvider,
    config: &PlannerConfig,
) -> Result<Vec<RankedCandidate>, PlannerError> {
    if candidates.is_empty() {
        return Err(PlannerError::EmptyCandidates);
    }
    let window_start = history.len().saturating_sub(config.repetition_window);
    let recent = &history[window_start..];
    let mut ranked = Vec::with_capacity(candidates.len());
    for (action, successor) in candidates {
        let text = action.describe();
        let repeated = recent.iter().any(|h| h == &text);
        let successor_reward = predict_reward(goal, successor, provider)?.reward;
        let differential = successor_reward
            - current_score
            - if repeated {
                config.repetition_penalty
            } else {
                0.0
            };
        ranked.push(RankedCandidate {
            action_id: action.id(),
            action: text,
            successor_reward,
            differential,
            repeated,
        });
    }
    // The tie shuffle is salted by the history length so exact ties resolve
    // differently from step to step; a fixed preference order would walk
    // score plateaus in 2-cycles.
    let salt = history.len() as u64;
    ranked.sort_by(|a, b| {
        b.differential
            .partial_cmp(&a.differential)
            .expect("scores are finite")
            .then_with(|| {
                let ka =
                    seeding::mix(&[config.tie_break_seed, salt, seeding::hash_text(&a.action)]);
                let kb =
                    seeding::mix(&[config.tie_break_seed, salt, seeding::hash_text(&b.action)]);
                ka.cmp(&kb)
            })
            .then_with(|| a.action.cmp(&b.action))
    });
    Ok(ranked)
}

/// One executed step of an episode log.
#[derive(Debug, Clone, Serialize)]
pub struct EpisodeStep {
    pub action: String,
    pub action_id: String,
    pub observation: String,
    /// Native sparse signal after the step: 1 when the goal holds.
    pub native_reward: f64,
    /// True when this step came from the plateau-escape random draw.
    pub escaped: bool,
    pub candidates: Vec<RankedCandidate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<MatchReport>,
}

/// Full episode log, serializable to the JSONL episode format.
#[derive(Debug, Clone, Serialize)]
pub struct Episode {
    pub instance_id: String,
    pub goal: String,
    pub policy: Policy,
    pub seed: u64,
    pub success: bool,
    pub steps: Vec<EpisodeStep>,
}

/// Breadth-first enumeration of unexplored states within a few native
/// transitions, scored by predicted reward. Returns the first action of the
/// path toward the best-scoring frontier state (nearest wins ties), fully
/// deterministic. The depth bound keeps this a local exploration heuristic
/// rather than a goal search: the reward only picks a direction for the
/// walk when the one-step differential is flat.
#[allow(clippy::too_many_arguments)]
fn frontier_walk(
    env: &BlocksState,
    visited: &std::collections::BTreeSet<BlocksState>,
    goal: &GoalState,
    goal_text: &str,
    backend: &ExtractorBackend,
    provider: &SimilarityProvider,
    depth_cap: usize,
    expansion_cap: usize,
) -> Result<Option<BlockAction>, PlannerError> {
    let mut queue: std::collections::VecDeque<(BlocksState, Option<BlockAction>, usize)> =
        std::collections::VecDeque::new();
    let mut seen: std::collections::BTreeSet<BlocksState> = std::collections::BTreeSet::new();
    queue.push_back((env.clone(), None, 0));
    seen.insert(env.clone());
    let mut expanded = 0usize;
    let mut best: Option<(f64, usize, BlockAction)> = None;
    while let Some((state, first, depth)) = queue.pop_front() {
        if depth >= depth_cap {
            continue;
        }
        expanded += 1;
        if expanded > expansion_cap {
            break;
        }
        for action in admissible_actions(&state) {
            let next = apply(&state, &action).expect("admissible");
            if seen.contains(&next) {
                continue;
            }
            seen.insert(next.clone());
            let first_action = first.clone().unwrap_or_else(|| action.clone());
            if visited.contains(&next) {
                queue.push_back((next, Some(first_action), depth + 1));
                continue;
            }
            let ctx = ExtractionContext::initial(goal_text, &next.to_text(), None);
            let factored = extraction::extract_state(&ctx, backend)?;
            let score = predict_reward(goal, &factored, provider)?.reward;
            let better = match &best {
                None => true,
                Some((best_score, best_depth, _)) => {
                    score > *best_score + 1e-12
                        || ((score - best_score).abs() <= 1e-12 && depth + 1 < *best_depth)
                }
            };
            if better {
                best = Some((score, depth + 1, first_action.clone()));
            }
            queue.push_back((next, Some(first_action), depth + 1));
        }
    }
    Ok(best.map(|(_, _, action)| action))
}

#[allow(clippy::too_many_arguments)]
fn extract_successor(
    goal_text: &str,
    goal: &GoalState,
    current: &FactoredState,
    observation: &str,
    last_action: &str,
    step_index: usize,
    history: &[String],
    backend: &ExtractorBackend,
) -> Result<FactoredState, ExtractionError> {
    let ctx = ExtractionContext {
        goal_text: goal_text.to_string(),
        prev_goal: goal.clone(),
        prev_state: current.clone(),
        observation: observation.to_string(),
        last_action: Some(last_action.to_string()),
        step_index,
        action_history: history.to_vec(),
    };
    let extracted = extraction::extract_state(&ctx, backend)?;
    extraction::refine_state(current, &extracted, goal_text, backend, history)
}

/// Run one episode under the given policy. Failure to reach the goal within
/// `max_steps` is a `success = false` return, not an error.
pub fn run_episode(
    instance: &BlocksInstance,
    policy: Policy,
    backend: &ExtractorBackend,
    provider: &SimilarityProvider,
    config: &PlannerConfig,
) -> Result<Episode, PlannerError> {
    let goal_text = instance.goal_text();
    let episode_seed = seeding::mix(&[config.tie_break_seed, seeding::hash_text(&instance.id)]);
    let mut rng = ChaCha8Rng::seed_from_u64(episode_seed);

    let init_observation = instance.init.to_text();
    let init_ctx = ExtractionContext::initial(&goal_text, &init_observation, None);
    let goal = extraction::interpret_goal(&init_ctx, backend)?;
    let mut factored = extraction::extract_state(&init_ctx, backend)?;
    let mut current_score = predict_reward(&goal, &factored, provider)?.reward;

    let mut env = instance.init.clone();
    let mut history: Vec<String> = Vec::new();
    let mut steps = Vec::new();
    let mut stalled = 0usize;
    let mut visited: std::collections::BTreeSet<BlocksState> = std::collections::BTreeSet::new();
    visited.insert(env.clone());

    for step_index in 0..config.max_steps {
        if goal_satisfied(&env, &instance.goal) {
            break;
        }
        let mut actions = admissible_actions(&env);
        if actions.is_empty() {
            break;
        }
        if actions.len() > config.candidate_cap {
            // Seeded subsample keeps ranking affordable in large states.
            for i in (1..actions.len()).rev() {
                let j = rng.random_range(0..=i);
                actions.swap(i, j);
            }
            actions.truncate(config.candidate_cap);
            actions.sort();
        }

        let (action, candidates, escaped) = match policy {
            Policy::Random => {
                let action = actions[rng.random_range(0..actions.len())].clone();
                (action, Vec::new(), false)
            }
            Policy::RewardGuided => {
                let mut simulated = Vec::with_capacity(actions.len());
                for action in &actions {
                    let next_env = apply(&env, action)?;
                    let successor = extract_successor(
                        &goal_text,
                        &goal,
                        &factored,
                        &next_env.to_text(),
                        &action.describe(),
                        step_index + 1,
                        &history,
                        backend,
                    )?;
                    simulated.push((action.clone(), successor));
                }
                let ranked =
                    rank_candidates(&goal, current_score, &simulated, &history, provider, config)?;
                let top: Vec<RankedCandidate> = ranked.iter().take(config.top_k).cloned().collect();
                let lookup = |text: &str| -> &BlockAction {
                    actions
                        .iter()
                        .find(|a| a.describe() == text)
                        .expect("ranked actions come from the candidate set")
                };
                let successor =
                    |c: &RankedCandidate| apply(&env, lookup(&c.action)).expect("admissible");
                // A positive-gain move into a state this episode already
                // visited re-collects an optimum it deliberately abandoned
                // and pins the run to the deadlock it escaped; such moves
                // are off the table everywhere below.
                let pool: Vec<&RankedCandidate> = ranked
                    .iter()
                    .filter(|c| c.differential <= 0.0 || !visited.contains(&successor(c)))
                    .collect();
                let effective_best = pool
                    .first()
                    .map(|c| c.differential)
                    .unwrap_or(f64::NEG_INFINITY);
                if effective_best > 0.0 {
                    stalled = 0;
                } else {
                    stalled += 1;
                }
                let frontier = if effective_best > 0.0 {
                    None
                } else {
                    frontier_walk(
                        &env, &visited, &goal, &goal_text, backend, provider, 4, 2048,
                    )?
                };
                if effective_best > 0.0 {
                    // Exploit any effective gain immediately.
                    (lookup(&pool[0].action).clone(), top, false)
                } else if let Some(action) = frontier {
                    // Plateau: walk deterministically toward the most
                    // promising unexplored state nearby. This crosses reward
                    // valleys the one-step differential cannot see across,
                    // instead of circling visited configurations.
                    (action, top, false)
                } else if stalled >= config.plateau_patience {
                    // No gain and no reachable frontier: fall back to a
                    // seeded random draw each stuck step.
                    let pick = if pool.is_empty() {
                        &ranked[rng.random_range(0..ranked.len())]
                    } else {
                        pool[rng.random_range(0..pool.len())]
                    };
                    (lookup(&pick.action).clone(), top, true)
                } else {
                    let chosen = pool.first().copied().unwrap_or(&ranked[0]);
                    (lookup(&chosen.action).clone(), top, false)
                }
            }
        };

        env = apply(&env, &action)?;
        let observation = env.to_text();
        history.push(action.describe());
        visited.insert(env.clone());
        factored = extract_successor(
            &goal_text,
            &goal,
            &factored,
            &observation,
            &action.describe(),
            step_index + 1,
            &history,
            backend,
        )?;
        let report = match policy {
            Policy::RewardGuided => Some(predict_reward(&goal, &factored, provider)?),
            Policy::Random => None,
        };
        if let Some(r) = &report {
            current_score = r.reward;
        }
        steps.push(EpisodeStep {
            action: action.describe(),
            action_id: action.id(),
            observation,
            native_reward: if goal_satisfied(&env, &instance.goal) {
                1.0
            } else {
                0.0
            },
            escaped,
            candidates,
            report,
        });
    }

    Ok(Episode {
        instance_id: instance.id.clone(),
        goal: goal_text,
        policy,
        seed: episode_seed,
        success: goal_satisfied(&env, &instance.goal),
        steps,
    })
}

/// Fraction of instances solved under the policy, plus the episode logs.
pub fn success_rate(
    instances: &[BlocksInstance],
    policy: Policy,
    backend: &ExtractorBackend,
    provider: &SimilarityProvider,
    config: &PlannerConfig,
) -> Result<(f64, Vec<Episode>), PlannerError> {
    if instances.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let mut episodes = Vec::with_capacity(instances.len());
    for instance in instances {
        episodes.push(run_episode(instance, policy, backend, provider, config)?);
    }
    let successes = episodes.iter().filter(|e| e.success).count();
    Ok((successes as f64 / instances.len() as f64, episodes))
}
