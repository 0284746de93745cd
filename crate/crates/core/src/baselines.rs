//! Representation-free reward predictors: the monotonic time heuristic and
//! the judge protocol that prompts a chat model for a 0-100 progress score.

use serde::Serialize;

use crate::chat::{scan_json_values, BackendError, ChatClient, ChatConfig};
use crate::dataset::Trajectory;
use crate::metrics::RewardSeries;
use crate::prompts::{render, PromptSet};

/// Linear time-as-progress heuristic: step `j` of `T` (1-indexed) scores
/// `j/T` regardless of content or label.
pub fn monotonic_predict(trajectory: &Trajectory) -> RewardSeries {
    let total = trajectory.steps.len() as f64;
    let values = (1..=trajectory.steps.len())
        .map(|j| j as f64 / total)
        .collect();
    RewardSeries::new(values).expect("non-empty trajectories produce valid series")
}

/// Whether the judge is asked for an immediate score or step-by-step
/// analysis first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeMode {
    Intuitive,
    Analytical,
}

#[derive(Debug, Clone)]
pub struct JudgeConfig {
    pub chat: ChatConfig,
    pub mode: JudgeMode,
    /// Re-ask budget when the reply carries no parsable score.
    pub parse_retries: usize,
}

impl JudgeConfig {
    pub fn new(chat: ChatConfig, mode: JudgeMode) -> Self {
        Self {
            chat,
            mode,
            parse_retries: 2,
        }
    }
}

/// One judged score in [0, 1]. `flagged` marks values that were clamped or
/// substituted after parse failure; flagged rates are reported, never
/// silently absorbed into means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JudgeScore {
    pub value: f64,
    pub flagged: bool,
}

/// Transcript of one judge call, persisted for audit.
#[derive(Debug, Clone, Serialize)]
pub struct JudgeCall {
    /// Step index the history was rendered through.
    pub upto: usize,
    /// The backend's final reply text.
    pub reply: String,
    pub value: f64,
    pub flagged: bool,
}

/// Stateless trajectory judge over an OpenAI-compatible chat backend.
pub struct Judge {
    client: ChatClient,
    prompts: PromptSet,
    config: JudgeConfig,
}

impl std::fmt::Debug for Judge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Judge")
            .field("mode", &self.config.mode)
            .finish()
    }
}

/// Pull the first numeric `reward` field out of free-form reply text.
/// Accepts objects embedded in prose or fences and numeric strings.
pub fn extract_reward(text: &str) -> Option<f64> {
    for value in scan_json_values(text) {
        if let Some(reward) = value.get("reward") {
            if let Some(n) = reward.as_f64() {
                return Some(n);
            }
            if let Some(s) = reward.as_str() {
                if let Ok(n) = s.trim().parse::<f64>() {
                    return Some(n);
                }
            }
        }
    }
    None
}

/// Render the chronological action/observation log through `upto`.
fn history_log(trajectory: &Trajectory, upto: usize) -> String {
    trajectory
        .steps
        .iter()
        .take(upto + 1)
        .enumerate()
        .map(|(i, s)| {
            format!(
                "Step {i}:\nAction: {}\nObservation: {}",
                s.action, s.observation
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

impl Judge {
    pub fn new(config: JudgeConfig, prompts: PromptSet) -> Result<Self, BackendError> {
        let client = ChatClient::new(config.chat.clone())?;
        Ok(Self {
            client,
            prompts,
            config,
        })
    }

    fn templates(&self) -> (&str, &str) {
        match self.config.mode {
            JudgeMode::Intuitive => (
                &self.prompts.judge_intuitive_system,
                &self.prompts.judge_intuitive,
            ),
            JudgeMode::Analytical => (
                &self.prompts.judge_analytical_system,
                &self.prompts.judge_analytical,
            ),
        }
    }

    fn predict_inner(
        &self,
        trajectory: &Trajectory,
        upto: usize,
    ) -> Result<(JudgeScore, String), BackendError> {
        let (system, template) = self.templates();
        let history = history_log(trajectory, upto);
        let prompt = render(
            template,
            &[
                ("task_description", trajectory.goal.as_str()),
                ("history_log", &history),
            ],
        );
        let mut last_reply = String::new();
        for attempt in 0..=self.config.parse_retries {
            let reply = self.client.complete(system, &prompt)?;
            last_reply = reply.content;
            match extract_reward(&last_reply) {
                Some(raw) => {
                    let clamped = raw.clamp(0.0, 100.0);
                    let score = JudgeScore {
                        value: clamped / 100.0,
                        flagged: clamped != raw,
                    };
                    return Ok((score, last_reply));
                }
                None => {
                    log::warn!("judge reply carried no reward field (attempt {attempt})");
                }
            }
        }
        // Parse failure after retries: score zero and flag it.
        Ok((
            JudgeScore {
                value: 0.0,
                flagged: true,
            },
            last_reply,
        ))
    }

    /// Judge progress after step `upto` (0-indexed, inclusive). Stateless
    /// per call: the full history up to that step is rendered each time.
    pub fn predict(
        &self,
        trajectory: &Trajectory,
        upto: usize,
    ) -> Result<JudgeScore, BackendError> {
        self.predict_inner(trajectory, upto).map(|(score, _)| score)
    }

    /// Judge every prefix of the trajectory. Returns the series plus the
    /// number of flagged steps.
    pub fn predict_series(
        &self,
        trajectory: &Trajectory,
    ) -> Result<(RewardSeries, usize), BackendError> {
        let (series, calls) = self.predict_series_with_transcript(trajectory)?;
        Ok((series, calls.iter().filter(|c| c.flagged).count()))
    }

    /// [`Judge::predict_series`] plus the per-call transcripts.
    pub fn predict_series_with_transcript(
        &self,
        trajectory: &Trajectory,
    ) -> Result<(RewardSeries, Vec<JudgeCall>), BackendError> {
        let mut values = Vec::with_capacity(trajectory.steps.len());
        let mut calls = Vec::with_capacity(trajectory.steps.len());
        for upto in 0..trajectory.steps.len() {
            let (score, reply) = self.predict_inner(trajectory, upto)?;
            values.push(score.value);
            calls.push(JudgeCall {
                upto,
                reply,
                value: score.value,
                flagged: score.flagged,
            });
        }
        Ok((
            RewardSeries::new(values).expect("one value per step"),
            calls,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Domain, Label, Step, StepOrigin};
    use crate::metrics::{epic_distance, MetricOutcome};
    use crate::testhttp::MockServer;

    fn trajectory(steps: usize) -> Trajectory {
        Trajectory {
            id: "t".into(),
            domain: Domain::Synthetic,
            goal: "reach the end".into(),
            label: Label::Positive,
            steps: (0..steps)
                .map(|i| Step {
                    action: format!("a{i}"),
                    observation: format!("o{i}"),
                    reward: (i + 1) as f64 / steps as f64,
                    origin: StepOrigin::Expert,
                })
                .collect(),
            meta: Default::default(),
        }
    }

    #[test]
    fn monotonic_formula() {
        assert_eq!(
            monotonic_predict(&trajectory(4)).values(),
            &[0.25, 0.5, 0.75, 1.0]
        );
        assert_eq!(monotonic_predict(&trajectory(1)).values(), &[1.0]);
    }

    #[test]
    fn monotonic_is_strictly_increasing_to_one() {
        for n in 1..20 {
            let series = monotonic_predict(&trajectory(n));
            assert!(series.values().windows(2).all(|w| w[0] < w[1]));
            assert_eq!(*series.values().last().unwrap(), 1.0);
        }
    }

    #[test]
    fn monotonic_matches_unpadded_positive_ramps_exactly() {
        // An unpadded positive carries the same 1-indexed ramp, so the
        // prediction correlates perfectly.
        let t = trajectory(6);
        let pred = monotonic_predict(&t);
        let truth = RewardSeries::new(t.rewards()).unwrap();
        assert_eq!(
            epic_distance(&pred, &truth).unwrap(),
            MetricOutcome::Defined(0.0)
        );
    }

    #[test]
    fn reward_extraction_handles_a_malformed_corpus() {
        // Synthetic corpus of messy replies and the expected parse.
        let cases: Vec<(&str, Option<f64>)> = vec![
            (r#"{"reward": 50}"#, Some(50.0)),
            (r#"{"reward": 0}"#, Some(0.0)),
            (r#"{"reward": 100}"#, Some(100.0)),
            (r#"{"reward": 150}"#, Some(150.0)),
            (r#"{"reward": -3}"#, Some(-3.0)),
            (r#"{"reward": 62.5}"#, Some(62.5)),
            (r#"{"reward": "75"}"#, Some(75.0)),
            (r#"{"reward": " 20 "}"#, Some(20.0)),
            ("The score is {\"reward\": 40} overall.", Some(40.0)),
            ("```json\n{\"reward\": 55}\n```", Some(55.0)),
            ("{\"analysis\": \"good\", \"reward\": 80}", Some(80.0)),
            ("{\"reward\": 10}{\"reward\": 90}", Some(10.0)),
            ("{\"nested\": {\"reward\": 33}}", None),
            ("{\"reward\": null}", None),
            ("{\"reward\": \"high\"}", None),
            ("{\"score\": 44}", None),
            ("reward: 44", None),
            ("plain refusal text", None),
            ("{broken json \"reward\": 5", None),
            ("", None),
        ];
        for (text, expected) in cases {
            assert_eq!(extract_reward(text), expected, "case: {text:?}");
        }
    }

    fn judge_for(url: &str, mode: JudgeMode) -> Judge {
        let config = JudgeConfig::new(ChatConfig::new(url, "judge-model"), mode);
        Judge::new(config, PromptSet::builtin()).unwrap()
    }

    fn reply(content: &str) -> String {
        serde_json::json!({"choices": [{"message": {"content": content}}]}).to_string()
    }

    #[test]
    fn judge_scores_and_normalizes() {
        let server = MockServer::start(vec![reply(r#"{"reward": 50}"#)]);
        let judge = judge_for(&server.url(), JudgeMode::Intuitive);
        let score = judge.predict(&trajectory(3), 1).unwrap();
        assert_eq!(
            score,
            JudgeScore {
                value: 0.5,
                flagged: false
            }
        );
        // Prompt carried the rendered history through the requested step.
        let body = &server.request_bodies()[0];
        assert!(body.contains("a1"));
        assert!(!body.contains("a2"));
        assert!(body.contains("Without Thinking"));
    }

    #[test]
    fn judge_clamps_out_of_range_and_flags() {
        let server = MockServer::start(vec![reply(r#"{"reward": 150}"#)]);
        let judge = judge_for(&server.url(), JudgeMode::Analytical);
        let score = judge.predict(&trajectory(2), 0).unwrap();
        assert_eq!(
            score,
            JudgeScore {
                value: 1.0,
                flagged: true
            }
        );
    }

    #[test]
    fn judge_parse_failure_scores_zero_after_retries() {
        let server = MockServer::start(vec![reply("no score here")]);
        let judge = judge_for(&server.url(), JudgeMode::Intuitive);
        let score = judge.predict(&trajectory(2), 1).unwrap();
        assert_eq!(
            score,
            JudgeScore {
                value: 0.0,
                flagged: true
            }
        );
        assert_eq!(server.request_bodies().len(), 3);
    }

    #[test]
    fn judge_series_counts_flags() {
        let server = MockServer::start(vec![
            reply(r#"{"reward": 10}"#),
            reply(r#"{"reward": 200}"#),
            reply(r#"{"reward": 90}"#),
        ]);
        let judge = judge_for(&server.url(), JudgeMode::Intuitive);
        let (series, flagged) = judge.predict_series(&trajectory(3)).unwrap();
        assert_eq!(series.values(), &[0.1, 1.0, 0.9]);
        assert_eq!(flagged, 1);
    }
}
