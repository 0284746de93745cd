//! Prompt templates for the generative backends.
//!
//! Templates ship compiled in but remain editable text assets: point
//! [`PromptSet::from_dir`] at a directory to override any of them by file
//! name. Placeholders use `{name}` and only the known names are substituted,
//! so literal braces in JSON examples survive rendering.

use std::path::Path;

/// The factored-state output schema used in extraction prompts.
pub const OBJECT_ATTRIBUTE_FORMAT: &str = r#"[{"object": {"<object description>": [{"<state key>": "<state description>"}, {"<state key>": "<state description>"}]}}]"#;

/// Prose constraint attached to the schema.
pub const OBJECT_ATTRIBUTE_FORMAT_DESCRIPTION: &str = "a JSON array where each element is {\"object\": {\"<object description>\": [{\"<state key>\": \"<state description>\"}, ...]}}. Each <state description> must be a grammatically complete sentence with its own subject and verb; it must NOT assume the key is part of the sentence. Each <state key> must be short and summative.";

/// File names recognized by [`PromptSet::from_dir`].
pub const PROMPT_FILES: &[&str] = &[
    "system.txt",
    "state_extraction.txt",
    "state_refinement.txt",
    "goal_interpretation.txt",
    "judge_intuitive_system.txt",
    "judge_intuitive.txt",
    "judge_analytical_system.txt",
    "judge_analytical.txt",
];

/// The full set of templates used across extraction and judging.
#[derive(Debug, Clone)]
pub struct PromptSet {
    pub system: String,
    pub state_extraction: String,
    pub state_refinement: String,
    pub goal_interpretation: String,
    pub judge_intuitive_system: String,
    pub judge_intuitive: String,
    pub judge_analytical_system: String,
    pub judge_analytical: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptSet {
    /// The compiled-in templates.
    pub fn builtin() -> Self {
        Self {
            system: include_str!("../assets/prompts/system.txt").to_string(),
            state_extraction: include_str!("../assets/prompts/state_extraction.txt").to_string(),
            state_refinement: include_str!("../assets/prompts/state_refinement.txt").to_string(),
            goal_interpretation: include_str!("../assets/prompts/goal_interpretation.txt")
                .to_string(),
            judge_intuitive_system: include_str!("../assets/prompts/judge_intuitive_system.txt")
                .to_string(),
            judge_intuitive: include_str!("../assets/prompts/judge_intuitive.txt").to_string(),
            judge_analytical_system: include_str!("../assets/prompts/judge_analytical_system.txt")
                .to_string(),
            judge_analytical: include_str!("../assets/prompts/judge_analytical.txt").to_string(),
        }
    }

    /// Builtin templates with per-file overrides from `dir`.
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        let mut set = Self::builtin();
        for name in PROMPT_FILES {
            let path = dir.join(name);
            if path.exists() {
                let text = std::fs::read_to_string(&path)?;
                match *name {
                    "system.txt" => set.system = text,
                    "state_extraction.txt" => set.state_extraction = text,
                    "state_refinement.txt" => set.state_refinement = text,
                    "goal_interpretation.txt" => set.goal_interpretation = text,
                    "judge_intuitive_system.txt" => set.judge_intuitive_system = text,
                    "judge_intuitive.txt" => set.judge_intuitive = text,
                    "judge_analytical_system.txt" => set.judge_analytical_system = text,
                    "judge_analytical.txt" => set.judge_analytical = text,
                    _ => unreachable!(),
                }
            }
        }
        Ok(set)
    }
}

/// Substitute `{name}` placeholders for the given pairs; anything else,
/// including literal braces, is left untouched.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in vars {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_replaces_only_known_placeholders() {
        let rendered = render(
            "goal: {task_description} schema: {\"reward\": 50} obs: {observation}",
            &[
                ("task_description", "stack blocks"),
                ("observation", "all clear"),
            ],
        );
        assert_eq!(
            rendered,
            "goal: stack blocks schema: {\"reward\": 50} obs: all clear"
        );
    }

    #[test]
    fn builtin_templates_carry_their_placeholders() {
        let set = PromptSet::builtin();
        for needle in ["{task_description}", "{observation}", "{prev_states}"] {
            assert!(set.state_extraction.contains(needle), "missing {needle}");
        }
        assert!(set.goal_interpretation.contains("{prev_goal_state}"));
        assert!(set.state_refinement.contains("{current_state}"));
        assert!(set.judge_intuitive.contains("{history_log}"));
        assert!(set.judge_analytical.contains("{history_log}"));
        assert!(set.judge_intuitive_system.contains("[Without Thinking]"));
    }

    #[test]
    fn overrides_load_from_directory() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("system.txt"), "custom system").unwrap();
        let set = PromptSet::from_dir(dir.path()).unwrap();
        assert_eq!(set.system, "custom system");
        assert_eq!(set.judge_intuitive, PromptSet::builtin().judge_intuitive);
    }
}
