//! Generative extraction backend: drives a chat model through the
//! three-stage pipeline (world-state extraction, task-relevant refinement,
//! goal interpretation) and parses the structured replies.
//!
//! Replies must contain the factored-state document; malformed replies are
//! re-prompted with a corrective note up to `schema_retries` times before a
//! `SchemaError` surfaces to the caller.

use serde_json::Value;

use super::{ExtractionContext, ExtractionError};
use crate::chat::{approx_tokens, scan_json_values, ChatClient, ChatConfig};
use crate::prompts::{
    render, PromptSet, OBJECT_ATTRIBUTE_FORMAT, OBJECT_ATTRIBUTE_FORMAT_DESCRIPTION,
};
use crate::state_model::{FactoredState, GoalState, ParseLimits, SchemaError};

#[derive(Debug, Clone)]
pub struct GenerativeConfig {
    pub chat: ChatConfig,
    /// Re-prompt budget after a schema-invalid reply.
    pub schema_retries: usize,
    pub limits: ParseLimits,
}

impl GenerativeConfig {
    pub fn new(chat: ChatConfig) -> Self {
        Self {
            chat,
            schema_retries: 2,
            limits: ParseLimits::default(),
        }
    }
}

/// A structured reply: the parsed document plus the model's own reasoning
/// text, kept for audit and never used for scoring.
#[derive(Debug, Clone)]
pub struct Extracted<T> {
    pub value: T,
    pub thinking: Option<String>,
}

pub struct GenerativeExtractor {
    client: ChatClient,
    prompts: PromptSet,
    config: GenerativeConfig,
}

impl std::fmt::Debug for GenerativeExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GenerativeExtractor")
            .field("client", &self.client)
            .finish()
    }
}

/// Render an action history, dropping oldest lines first when the whole
/// prompt would exceed the context budget.
fn render_history(history: &[String], budget_tokens: usize) -> String {
    if history.is_empty() {
        return "None".to_string();
    }
    let mut start = 0;
    loop {
        let rendered = history[start..].join("\n");
        if approx_tokens(&rendered) <= budget_tokens || start + 1 >= history.len() {
            return rendered;
        }
        start += 1;
    }
}

fn option_text(value: &Option<String>) -> &str {
    value.as_deref().unwrap_or("None")
}

impl GenerativeExtractor {
    pub fn new(config: GenerativeConfig, prompts: PromptSet) -> Result<Self, ExtractionError> {
        let client = ChatClient::new(config.chat.clone())?;
        Ok(Self {
            client,
            prompts,
            config,
        })
    }

    fn history_budget(&self) -> usize {
        // Leave half the window for the template, inputs, and reply.
        self.config.chat.max_context / 2
    }

    /// Send a prompt and parse a state/goal document out of the reply under
    /// `field`; falls back to a bare top-level array. Retries with a
    /// corrective note on schema failures.
    fn ask_for_document(
        &self,
        user_prompt: &str,
        field: &str,
    ) -> Result<Extracted<Value>, ExtractionError> {
        let mut prompt = user_prompt.to_string();
        let mut last_schema_error: Option<SchemaError> = None;
        for _ in 0..=self.config.schema_retries {
            let reply = self.client.complete(&self.prompts.system, &prompt)?;
            match find_document(&reply.content, field) {
                Ok((document, thinking)) => {
                    return Ok(Extracted {
                        value: document,
                        thinking: thinking.or(reply.reasoning),
                    })
                }
                Err(e) => {
                    log::warn!("schema-invalid backend reply ({e}); re-prompting");
                    last_schema_error = Some(e);
                    prompt = format!(
                        "{user_prompt}\n\nYour previous reply was not valid. Output ONLY the requested JSON, with the \"{field}\" field present."
                    );
                }
            }
        }
        Err(ExtractionError::Schema(
            last_schema_error.expect("at least one attempt ran"),
        ))
    }

    pub fn extract_state(
        &self,
        ctx: &ExtractionContext,
    ) -> Result<Extracted<FactoredState>, ExtractionError> {
        let history = render_history(&ctx.action_history, self.history_budget());
        let prompt = render(
            &self.prompts.state_extraction,
            &[
                ("task_description", ctx.goal_text.as_str()),
                ("prev_goal_state", &ctx.prev_goal.to_document()),
                ("last_action", option_text(&ctx.last_action)),
                ("observation", ctx.observation.as_str()),
                ("prev_states", &ctx.prev_state.to_document()),
                ("action_history", &history),
                ("output_format", OBJECT_ATTRIBUTE_FORMAT),
                ("output_format_des", OBJECT_ATTRIBUTE_FORMAT_DESCRIPTION),
            ],
        );
        let extracted = self.ask_for_document(&prompt, "current_state")?;
        let state = FactoredState::from_document_value(&extracted.value, self.config.limits)?;
        Ok(Extracted {
            value: state,
            thinking: extracted.thinking,
        })
    }

    pub fn refine_state(
        &self,
        prev: &FactoredState,
        current: &FactoredState,
        goal_text: &str,
        action_history: &[String],
    ) -> Result<Extracted<FactoredState>, ExtractionError> {
        let history = render_history(action_history, self.history_budget());
        let prompt = render(
            &self.prompts.state_refinement,
            &[
                ("task_description", goal_text),
                ("prev_states", &prev.to_document()),
                ("current_state", &current.to_document()),
                ("action_history", &history),
                ("output_format", OBJECT_ATTRIBUTE_FORMAT),
                ("output_format_des", OBJECT_ATTRIBUTE_FORMAT_DESCRIPTION),
            ],
        );
        let extracted = self.ask_for_document(&prompt, "current_state")?;
        let state = FactoredState::from_document_value(&extracted.value, self.config.limits)?;
        Ok(Extracted {
            value: state,
            thinking: extracted.thinking,
        })
    }

    pub fn interpret_goal(
        &self,
        ctx: &ExtractionContext,
    ) -> Result<Extracted<GoalState>, ExtractionError> {
        let history = render_history(&ctx.action_history, self.history_budget());
        let prompt = render(
            &self.prompts.goal_interpretation,
            &[
                ("task_description", ctx.goal_text.as_str()),
                ("current_state", &ctx.prev_state.to_document()),
                ("observation", ctx.observation.as_str()),
                ("action_history", &history),
                ("prev_goal_state", &ctx.prev_goal.to_document()),
                ("output_format", OBJECT_ATTRIBUTE_FORMAT),
                ("output_format_des", OBJECT_ATTRIBUTE_FORMAT_DESCRIPTION),
            ],
        );
        let extracted = self.ask_for_document(&prompt, "goal_state")?;
        let goal = GoalState::from_document_value(&extracted.value, self.config.limits)?;
        Ok(Extracted {
            value: goal,
            thinking: extracted.thinking,
        })
    }
}

/// Locate the state document in a reply: the first JSON object carrying
/// `field` (its `thinking` sibling is captured for audit), else the first
/// bare top-level array.
fn find_document(content: &str, field: &str) -> Result<(Value, Option<String>), SchemaError> {
    let values = scan_json_values(content);
    for value in &values {
        if let Some(document) = value.get(field) {
            let thinking = value
                .get("thinking")
                .and_then(Value::as_str)
                .map(str::to_string);
            return Ok((document.clone(), thinking));
        }
    }
    for value in values {
        if value.is_array() {
            return Ok((value, None));
        }
    }
    Err(SchemaError::MissingObjectWrapper { index: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state_model::FactoredState;
    use crate::testhttp::MockServer;

    fn chat_reply(content: &str) -> String {
        serde_json::json!({
            "choices": [{"message": {"content": content}}]
        })
        .to_string()
    }

    fn context(observation: &str) -> ExtractionContext {
        ExtractionContext {
            goal_text: "put the cd on the safe".into(),
            prev_goal: GoalState::empty(),
            prev_state: FactoredState::empty(),
            observation: observation.into(),
            last_action: Some("look".into()),
            step_index: 0,
            action_history: vec!["look".into()],
        }
    }

    fn extractor(endpoint: &str) -> GenerativeExtractor {
        let config = GenerativeConfig::new(ChatConfig::new(endpoint, "test-model"));
        GenerativeExtractor::new(config, PromptSet::builtin()).unwrap()
    }

    #[test]
    fn parses_wrapped_state_document_and_keeps_thinking() {
        let body = chat_reply(
            r#"{"thinking": "cd 1 seen on desk 2", "current_state": [{"object": {"cd 1": [{"position": "The cd 1 is on desk 2."}]}}]}"#,
        );
        let server = MockServer::start(vec![body]);
        let result = extractor(&server.url())
            .extract_state(&context("you see cd 1 on desk 2"))
            .unwrap();
        assert_eq!(result.value.len(), 1);
        assert_eq!(result.value.entities()[0].identity(), "cd 1");
        assert_eq!(result.thinking.as_deref(), Some("cd 1 seen on desk 2"));

        // The request carried the rendered template with inputs substituted.
        let requests = server.request_bodies();
        assert!(requests[0].contains("you see cd 1 on desk 2"));
        assert!(requests[0].contains("put the cd on the safe"));
        assert!(!requests[0].contains("{observation}"));
    }

    #[test]
    fn retries_on_schema_failure_then_succeeds() {
        let bad = chat_reply("I cannot answer in JSON right now.");
        let good = chat_reply(r#"{"current_state": []}"#);
        let server = MockServer::start(vec![bad, good]);
        let result = extractor(&server.url())
            .extract_state(&context("empty room"))
            .unwrap();
        assert!(result.value.is_empty());
        let requests = server.request_bodies();
        assert_eq!(requests.len(), 2);
        assert!(requests[1].contains("previous reply was not valid"));
    }

    #[test]
    fn exhausted_retries_surface_schema_error() {
        let bad = chat_reply("still not json");
        let server = MockServer::start(vec![bad.clone(), bad.clone(), bad]);
        let err = extractor(&server.url())
            .extract_state(&context("room"))
            .unwrap_err();
        assert!(matches!(err, ExtractionError::Schema(_)), "{err}");
        assert_eq!(server.request_bodies().len(), 3);
    }

    #[test]
    fn bare_array_reply_is_accepted_for_refinement() {
        let body = chat_reply(r#"[{"object": {"mug 1": [{"location": "The mug 1 is clean."}]}}]"#);
        let server = MockServer::start(vec![body]);
        let prev = FactoredState::empty();
        let current = FactoredState::empty();
        let result = extractor(&server.url())
            .refine_state(&prev, &current, "clean the mug", &[])
            .unwrap();
        assert_eq!(result.value.len(), 1);
    }

    #[test]
    fn goal_interpretation_parses_goal_field() {
        let body = chat_reply(
            r#"{"thinking": "the task wants the cd on the safe", "goal_state": [{"object": {"cd": [{"position": "The cd is on the safe."}]}}]}"#,
        );
        let server = MockServer::start(vec![body]);
        let result = extractor(&server.url())
            .interpret_goal(&context("start"))
            .unwrap();
        assert_eq!(result.value.len(), 1);
        assert!(result.value.entity("cd").is_some());
    }

    #[test]
    fn history_truncation_drops_oldest_lines() {
        let history: Vec<String> = (0..100).map(|i| format!("action number {i}")).collect();
        let rendered = render_history(&history, 40);
        assert!(!rendered.contains("action number 0"));
        assert!(rendered.contains("action number 99"));
        assert_eq!(render_history(&[], 40), "None");
    }
}
