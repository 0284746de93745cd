//! Hierarchical reward routing.
//!
//! The dense reward for a (goal, state) pair is assembled bottom-up:
//!
//! 1. *Key alignment* — for each required goal attribute, pick the state
//!    attribute whose key is most similar (hard max, lowest index on ties).
//! 2. *Attribute satisfaction* — average the value similarities over the
//!    goal entity's required attributes.
//! 3. *Object matching* — for each goal entity, choose the state entity
//!    maximizing identity similarity × attribute satisfaction. The product
//!    gates the score: a wrong object scores low no matter how well its
//!    attributes happen to match, and the right object with the wrong state
//!    scores low too.
//! 4. *Aggregation* — the reward is the mean of the per-goal-entity maxima.
//!
//! Every intermediate score is retained in [`MatchReport`] so a predicted
//! reward can be audited step by step.

use serde::Serialize;

use crate::embedding::{EmbeddingError, SimilarityProvider};
use crate::state_model::{Entity, FactoredState, GoalState};

#[derive(Debug, thiserror::Error)]
pub enum RoutingError {
    #[error("candidate key list is empty")]
    EmptyCandidates,
    #[error("goal sentence list is empty")]
    EmptyGoal,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Audit record for one goal entity.
#[derive(Debug, Clone, Serialize)]
pub struct EntityMatch {
    pub goal_identity: String,
    /// Identity of the best state entity, when the state is non-empty.
    pub matched_identity: Option<String>,
    /// Index of that entity in the state's entity list.
    pub matched_index: Option<usize>,
    /// Identity similarity of the chosen entity.
    pub identity_similarity: f64,
    /// Attribute satisfaction of the chosen entity.
    pub attribute_satisfaction: f64,
    /// Identity similarity × attribute satisfaction of the chosen entity.
    pub composite: f64,
    /// The per-goal-entity reward: the maximum composite over the state.
    pub local_reward: f64,
}

/// Full audit of one reward prediction.
#[derive(Debug, Clone, Serialize)]
pub struct MatchReport {
    pub per_entity: Vec<EntityMatch>,
    /// Mean of the per-entity local rewards; 0 for an empty goal.
    pub reward: f64,
}

/// Pick the candidate key most similar to `goal_key`. Ties resolve to the
/// lowest list index.
pub fn align_key<'a>(
    goal_key: &str,
    candidate_keys: &[&'a str],
    provider: &SimilarityProvider,
) -> Result<(&'a str, f64), RoutingError> {
    if candidate_keys.is_empty() {
        return Err(RoutingError::EmptyCandidates);
    }
    let mut best_index = 0usize;
    let mut best_sim = f64::NEG_INFINITY;
    for (index, candidate) in candidate_keys.iter().enumerate() {
        let sim = provider.similarity(goal_key, candidate)?;
        if sim > best_sim {
            best_sim = sim;
            best_index = index;
        }
    }
    Ok((candidate_keys[best_index], best_sim))
}

/// Mean over the goal entity's attributes of the similarity between the goal
/// value and the value under the aligned key of `state_entity`.
///
/// A goal entity with no required attributes is satisfied by existence alone
/// (score 1). A goal with requirements scored against an attribute-less
/// state entity scores 0.
pub fn attribute_satisfaction(
    goal_entity: &Entity,
    state_entity: &Entity,
    provider: &SimilarityProvider,
) -> Result<f64, RoutingError> {
    if goal_entity.attributes().is_empty() {
        return Ok(1.0);
    }
    if state_entity.attributes().is_empty() {
        return Ok(0.0);
    }
    let candidate_keys: Vec<&str> = state_entity.attributes().iter().map(|a| a.key()).collect();
    let mut total = 0.0;
    for goal_attr in goal_entity.attributes() {
        let (aligned_key, _) = align_key(goal_attr.key(), &candidate_keys, provider)?;
        let aligned_value = state_entity
            .attribute(aligned_key)
            .expect("aligned key comes from this entity")
            .value();
        total += provider.similarity(goal_attr.value(), aligned_value)?;
    }
    Ok(total / goal_entity.attributes().len() as f64)
}

/// Choose the state entity maximizing identity similarity × attribute
/// satisfaction for one goal entity. Returns the per-goal-entity reward
/// alongside the audit record. An empty state scores 0 with no match.
pub fn match_object(
    goal_entity: &Entity,
    state: &FactoredState,
    provider: &SimilarityProvider,
) -> Result<EntityMatch, RoutingError> {
    let mut report = EntityMatch {
        goal_identity: goal_entity.identity().to_string(),
        matched_identity: None,
        matched_index: None,
        identity_similarity: 0.0,
        attribute_satisfaction: 0.0,
        composite: 0.0,
        local_reward: 0.0,
    };
    let mut best = f64::NEG_INFINITY;
    for (index, state_entity) in state.entities().iter().enumerate() {
        let identity_sim = provider.similarity(goal_entity.identity(), state_entity.identity())?;
        let satisfaction = attribute_satisfaction(goal_entity, state_entity, provider)?;
        let composite = identity_sim * satisfaction;
        if composite > best {
            best = composite;
            report.matched_identity = Some(state_entity.identity().to_string());
            report.matched_index = Some(index);
            report.identity_similarity = identity_sim;
            report.attribute_satisfaction = satisfaction;
            report.composite = composite;
            report.local_reward = composite;
        }
    }
    Ok(report)
}

/// Predict the reward for a (goal, state) pair, returning the full audit.
///
/// An empty goal scores 0: the mean over zero entities is undefined and an
/// empty blueprint signals extraction failure, not success.
pub fn predict_reward(
    goal: &GoalState,
    state: &FactoredState,
    provider: &SimilarityProvider,
) -> Result<MatchReport, RoutingError> {
    let mut per_entity = Vec::with_capacity(goal.len());
    for goal_entity in goal.entities() {
        per_entity.push(match_object(goal_entity, state, provider)?);
    }
    let reward = if per_entity.is_empty() {
        0.0
    } else {
        per_entity.iter().map(|m| m.local_reward).sum::<f64>() / per_entity.len() as f64
    };
    Ok(MatchReport { per_entity, reward })
}

/// Scoring rule for the flat-sentence ablation: mean over goal sentences of
/// the best similarity to any state sentence.
pub fn predict_reward_flat(
    goal_sentences: &[String],
    state_sentences: &[String],
    provider: &SimilarityProvider,
) -> Result<f64, RoutingError> {
    if goal_sentences.is_empty() {
        return Err(RoutingError::EmptyGoal);
    }
    let mut total = 0.0;
    for goal_sentence in goal_sentences {
        let mut best = 0.0f64;
        for state_sentence in state_sentences {
            let sim = provider.similarity(goal_sentence, state_sentence)?;
            if sim > best {
                best = sim;
            }
        }
        total += best;
    }
    Ok(total / goal_sentences.len() as f64)
}

/// Scoring rule for the object-centric ablation: groups carry an identity
/// and a bag of sentences but no keys, so satisfaction is the mean over goal
/// sentences of the best sentence similarity, gated by identity similarity.
pub fn predict_reward_object_centric(
    goal_groups: &[(String, Vec<String>)],
    state_groups: &[(String, Vec<String>)],
    provider: &SimilarityProvider,
) -> Result<f64, RoutingError> {
    if goal_groups.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (goal_identity, goal_sentences) in goal_groups {
        let mut best = 0.0f64;
        for (state_identity, state_sentences) in state_groups {
            let identity_sim = provider.similarity(goal_identity, state_identity)?;
            let satisfaction = if goal_sentences.is_empty() {
                1.0
            } else if state_sentences.is_empty() {
                0.0
            } else {
                predict_reward_flat(goal_sentences, state_sentences, provider)?
            };
            let composite = identity_sim * satisfaction;
            if composite > best {
                best = composite;
            }
        }
        total += best;
    }
    Ok(total / goal_groups.len() as f64)
}
