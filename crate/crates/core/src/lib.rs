//! Zero-shot reward prediction for goal-conditioned text agents.
//!
//! World observations are factorized into object entities with
//! attribute-key/sentence pairs; the textual goal is interpreted into a
//! blueprint of the same shape; a hierarchical similarity routing turns the
//! (goal, state) pair into a dense progress reward. Around that core sit the
//! pieces an evaluation needs end to end:
//!
//! - [`state_model`] — the factored representation, its document format, and
//!   the degraded representation levels,
//! - [`embedding`] — pluggable text-similarity providers with caching,
//! - [`routing`] — key alignment, attribute satisfaction, object matching,
//!   and reward aggregation,
//! - [`extraction`] — the recurrent extraction/interpretation pipeline over
//!   a generative or rule-based backend,
//! - [`metrics`] — Pearson/EPIC scoring and benchmark aggregation,
//! - [`dataset`] — paired positive/negative benchmark construction and I/O,
//! - [`blocksworld`] — a native deterministic environment for offline runs,
//! - [`baselines`] — the monotonic heuristic and the judge protocol,
//! - [`planner`] — differential-reward action ranking and episode loops.

pub mod baselines;
pub mod blocksworld;
pub mod chat;
pub mod dataset;
pub mod embedding;
pub mod extraction;
pub mod metrics;
pub mod normalize;
pub mod planner;
pub mod prompts;
pub mod routing;
pub mod seeding;
pub mod state_model;

#[cfg(test)]
pub(crate) mod testhttp;

pub use embedding::{SimilarityProvider, Triplet};
pub use extraction::{ExtractionContext, ExtractorBackend};
pub use metrics::{EvalMode, PredictionSet, RewardSeries};
pub use routing::{predict_reward, MatchReport};
pub use state_model::{Entity, FactoredState, GoalState};
