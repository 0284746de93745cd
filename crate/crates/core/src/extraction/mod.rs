//! Recurrent state extraction and goal interpretation.
//!
//! At every trajectory step the pipeline runs goal interpretation, state
//! extraction, and refinement against one of two backends — a generative
//! chat model or the deterministic BlocksWorld rule parser — then scores the
//! (goal, state) pair through the routing layer. Carried-over entities that
//! the current observation does not mention are retained unchanged, which is
//! what makes the state a memory rather than a per-step snapshot.
//!
//! Per-step schema failures degrade gracefully: the step keeps the previous
//! state and goal and is flagged, so one malformed backend reply cannot sink
//! a whole trajectory. Transport-level backend failures abort.

pub mod generative;
pub mod rules;

use serde::Serialize;

use crate::chat::BackendError;
use crate::dataset::Trajectory;
use crate::embedding::SimilarityProvider;
use crate::metrics::RewardSeries;
use crate::routing::{predict_reward, MatchReport, RoutingError};
use crate::state_model::{FactoredState, GoalState, SchemaError};
use crate::{normalize, routing};

pub use generative::{Extracted, GenerativeConfig, GenerativeExtractor};

/// Identity-similarity threshold above which a goal entity disappearing in
/// favor of a near-identity replacement counts as an anchoring rename
/// rather than a persistence violation.
pub const DEFAULT_ANCHOR_THRESHOLD: f64 = 0.6;

#[derive(Debug, thiserror::Error)]
pub enum ExtractionError {
    #[error("observation is empty")]
    EmptyObservation,
    #[error("goal text is empty")]
    EmptyGoalText,
    #[error("trajectory has no steps")]
    EmptyTrajectory,
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

impl ExtractionError {
    /// Failures that degrade to carrying the previous state/goal forward
    /// instead of aborting the trajectory.
    fn is_degradable(&self) -> bool {
        matches!(
            self,
            ExtractionError::Schema(_) | ExtractionError::EmptyObservation
        )
    }
}

/// Everything a backend may condition on at one step.
#[derive(Debug, Clone)]
pub struct ExtractionContext {
    pub goal_text: String,
    pub prev_goal: GoalState,
    pub prev_state: FactoredState,
    pub observation: String,
    pub last_action: Option<String>,
    pub step_index: usize,
    pub action_history: Vec<String>,
}

impl ExtractionContext {
    /// Context for the first step: previous state and goal are empty.
    pub fn initial(goal_text: &str, observation: &str, last_action: Option<&str>) -> Self {
        Self {
            goal_text: goal_text.to_string(),
            prev_goal: GoalState::empty(),
            prev_state: FactoredState::empty(),
            observation: observation.to_string(),
            last_action: last_action.map(str::to_string),
            step_index: 0,
            action_history: last_action.map(|a| vec![a.to_string()]).unwrap_or_default(),
        }
    }
}

/// The extraction engine behind the pipeline.
#[derive(Debug)]
pub enum ExtractorBackend {
    Generative(Box<GenerativeExtractor>),
    BlocksWorldRules,
}

fn extract_state_with_audit(
    ctx: &ExtractionContext,
    backend: &ExtractorBackend,
) -> Result<(FactoredState, Option<String>), ExtractionError> {
    if normalize::is_blank(&ctx.observation) {
        return Err(ExtractionError::EmptyObservation);
    }
    match backend {
        ExtractorBackend::BlocksWorldRules => {
            let facts = rules::parse_observation(&ctx.observation);
            Ok((rules::merge_facts(&ctx.prev_state, &facts), None))
        }
        ExtractorBackend::Generative(extractor) => {
            let extracted = extractor.extract_state(ctx)?;
            Ok((extracted.value, extracted.thinking))
        }
    }
}

/// Produce the current factored state from the observation plus carried
/// memory.
pub fn extract_state(
    ctx: &ExtractionContext,
    backend: &ExtractorBackend,
) -> Result<FactoredState, ExtractionError> {
    extract_state_with_audit(ctx, backend).map(|(state, _)| state)
}

/// Merge the freshly extracted state into the running memory. Entities in
/// both take the current version; entities only in the memory are retained.
/// The generative backend may additionally drop task-irrelevant entities.
pub fn refine_state(
    prev: &FactoredState,
    current: &FactoredState,
    goal_text: &str,
    backend: &ExtractorBackend,
    action_history: &[String],
) -> Result<FactoredState, ExtractionError> {
    match backend {
        ExtractorBackend::BlocksWorldRules => Ok(rules::merge_states(prev, current)),
        ExtractorBackend::Generative(extractor) => Ok(extractor
            .refine_state(prev, current, goal_text, action_history)?
            .value),
    }
}

fn interpret_goal_with_audit(
    ctx: &ExtractionContext,
    backend: &ExtractorBackend,
) -> Result<(GoalState, Option<String>), ExtractionError> {
    if normalize::is_blank(&ctx.goal_text) {
        return Err(ExtractionError::EmptyGoalText);
    }
    match backend {
        ExtractorBackend::BlocksWorldRules => {
            // The blueprint is parsed once from the goal text and is static
            // thereafter.
            if ctx.step_index == 0 || ctx.prev_goal.is_empty() {
                Ok((rules::interpret_goal_text(&ctx.goal_text), None))
            } else {
                Ok((ctx.prev_goal.clone(), None))
            }
        }
        ExtractorBackend::Generative(extractor) => {
            let extracted = extractor.interpret_goal(ctx)?;
            Ok((extracted.value, extracted.thinking))
        }
    }
}

/// Interpret the textual goal into (or update) the success blueprint.
pub fn interpret_goal(
    ctx: &ExtractionContext,
    backend: &ExtractorBackend,
) -> Result<GoalState, ExtractionError> {
    interpret_goal_with_audit(ctx, backend).map(|(goal, _)| goal)
}

/// A goal-evolution compliance finding.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// A goal entity vanished with no near-identity replacement.
    EntityDropped { identity: String },
    /// A required attribute key disappeared from a persisting entity.
    AttributeRemoved { identity: String, key: String },
}

/// Check goal persistence between consecutive blueprints: entities must
/// persist (an anchoring rename to a near-identity instance is allowed) and
/// required attribute keys must not disappear. An empty list is compliant.
pub fn validate_goal_evolution(
    prev: &GoalState,
    next: &GoalState,
    provider: &SimilarityProvider,
    anchor_threshold: f64,
) -> Result<Vec<Violation>, RoutingError> {
    let mut violations = Vec::new();
    for prev_entity in prev.entities() {
        let successor = match next.entity(prev_entity.identity()) {
            Some(exact) => Some(exact),
            None => {
                let mut anchored = None;
                for candidate in next.entities() {
                    let sim = provider.similarity(prev_entity.identity(), candidate.identity())?;
                    if sim >= anchor_threshold {
                        anchored = Some(candidate);
                        break;
                    }
                }
                anchored
            }
        };
        match successor {
            Some(entity) => {
                for attr in prev_entity.attributes() {
                    if entity.attribute(attr.key()).is_none() {
                        violations.push(Violation::AttributeRemoved {
                            identity: prev_entity.identity().to_string(),
                            key: attr.key().to_string(),
                        });
                    }
                }
            }
            None => violations.push(Violation::EntityDropped {
                identity: prev_entity.identity().to_string(),
            }),
        }
    }
    Ok(violations)
}

/// Per-step audit from a trajectory run.
#[derive(Debug, Clone, Serialize)]
pub struct StepAudit {
    pub step_index: usize,
    /// The step fell back to the previous state/goal after a schema failure.
    pub degraded: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_thinking: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub goal_thinking: Option<String>,
}

/// Everything produced by running the pipeline over one trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryRun {
    pub rewards: RewardSeries,
    pub reports: Vec<MatchReport>,
    pub states: Vec<FactoredState>,
    pub goals: Vec<GoalState>,
    pub audits: Vec<StepAudit>,
}

/// Run goal interpretation, extraction, refinement, and reward prediction
/// over every step of a trajectory. The reward series always has exactly one
/// entry per step.
pub fn run_trajectory(
    trajectory: &Trajectory,
    backend: &ExtractorBackend,
    provider: &SimilarityProvider,
) -> Result<TrajectoryRun, ExtractionError> {
    if trajectory.steps.is_empty() {
        return Err(ExtractionError::EmptyTrajectory);
    }
    let mut prev_state = FactoredState::empty();
    let mut prev_goal = GoalState::empty();
    let mut action_history: Vec<String> = Vec::new();
    let mut rewards = Vec::with_capacity(trajectory.steps.len());
    let mut reports = Vec::with_capacity(trajectory.steps.len());
    let mut states = Vec::with_capacity(trajectory.steps.len());
    let mut goals = Vec::with_capacity(trajectory.steps.len());
    let mut audits = Vec::with_capacity(trajectory.steps.len());

    for (step_index, step) in trajectory.steps.iter().enumerate() {
        action_history.push(step.action.clone());
        let ctx = ExtractionContext {
            goal_text: trajectory.goal.clone(),
            prev_goal: prev_goal.clone(),
            prev_state: prev_state.clone(),
            observation: step.observation.clone(),
            last_action: Some(step.action.clone()),
            step_index,
            action_history: action_history.clone(),
        };

        let mut degraded = false;
        let (goal, goal_thinking) = match interpret_goal_with_audit(&ctx, backend) {
            Ok(result) => result,
            Err(e) if e.is_degradable() => {
                log::warn!("step {step_index}: goal interpretation degraded ({e})");
                degraded = true;
                (prev_goal.clone(), None)
            }
            Err(e) => return Err(e),
        };

        let (state, state_thinking) = match extract_state_with_audit(&ctx, backend) {
            Ok(result) => result,
            Err(e) if e.is_degradable() => {
                log::warn!("step {step_index}: state extraction degraded ({e})");
                degraded = true;
                (prev_state.clone(), None)
            }
            Err(e) => return Err(e),
        };

        let refined = match refine_state(
            &prev_state,
            &state,
            &trajectory.goal,
            backend,
            &action_history,
        ) {
            Ok(refined) => refined,
            Err(e) if e.is_degradable() => {
                log::warn!("step {step_index}: refinement degraded ({e})");
                degraded = true;
                rules::merge_states(&prev_state, &state)
            }
            Err(e) => return Err(e),
        };

        let report = predict_reward(&goal, &refined, provider)?;
        rewards.push(report.reward);
        reports.push(report);
        states.push(refined.clone());
        goals.push(goal.clone());
        audits.push(StepAudit {
            step_index,
            degraded,
            state_thinking,
            goal_thinking,
        });

        prev_state = refined;
        prev_goal = goal;
    }

    let rewards = RewardSeries::new(rewards).expect("one reward per step, all in [0, 1]");
    Ok(TrajectoryRun {
        rewards,
        reports,
        states,
        goals,
        audits,
    })
}

/// Flat-sentence prediction over a trajectory for the degraded-representation
/// pipelines: states come from the same backend, then lose structure before
/// scoring.
pub fn run_trajectory_degraded(
    trajectory: &Trajectory,
    backend: &ExtractorBackend,
    provider: &SimilarityProvider,
    level: crate::state_model::DegradeLevel,
) -> Result<RewardSeries, ExtractionError> {
    let run = run_trajectory(trajectory, backend, provider)?;
    let mut rewards = Vec::with_capacity(run.states.len());
    for (state, goal) in run.states.iter().zip(&run.goals) {
        let goal_state: FactoredState = goal.clone().into();
        let reward = match level {
            crate::state_model::DegradeLevel::FlatText => {
                let goal_sentences = flat_sentences(&goal_state);
                if goal_sentences.is_empty() {
                    0.0
                } else {
                    routing::predict_reward_flat(&goal_sentences, &flat_sentences(state), provider)?
                }
            }
            crate::state_model::DegradeLevel::ObjectCentric => {
                routing::predict_reward_object_centric(
                    &grouped_sentences(&goal_state),
                    &grouped_sentences(state),
                    provider,
                )?
            }
        };
        rewards.push(reward);
    }
    Ok(RewardSeries::new(rewards).expect("one reward per step"))
}

fn flat_sentences(state: &FactoredState) -> Vec<String> {
    match crate::state_model::degrade(state, crate::state_model::DegradeLevel::FlatText) {
        crate::state_model::DegradedState::FlatText(sentences) => sentences,
        _ => unreachable!(),
    }
}

fn grouped_sentences(state: &FactoredState) -> Vec<(String, Vec<String>)> {
    match crate::state_model::degrade(state, crate::state_model::DegradeLevel::ObjectCentric) {
        crate::state_model::DegradedState::ObjectCentric(groups) => groups,
        _ => unreachable!(),
    }
}
