//! Deterministic rule-based extraction for the BlocksWorld clause grammar.
//!
//! The grounded observation text is a comma-joined list of clauses in four
//! shapes: hand-empty, hand-holding, block-on-block, and block-on-table.
//! Each clause maps to one (entity, key, sentence) triple; the holding
//! clause updates both the hand and the held block, so a block's position
//! attribute always reflects where it currently is.

use crate::normalize;
use crate::state_model::{Entity, FactoredState, GoalState};

/// One parsed fact: entity identity, attribute key, full clause text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedFact {
    pub identity: String,
    pub key: String,
    pub value: String,
}

fn fact(identity: &str, key: &str, value: &str) -> ParsedFact {
    ParsedFact {
        identity: identity.to_string(),
        key: key.to_string(),
        value: value.to_string(),
    }
}

/// Parse one clause into facts; unrecognized clauses yield none.
fn parse_clause(clause: &str) -> Vec<ParsedFact> {
    let clause = normalize::display(clause);
    let text = clause.trim_end_matches('.');
    if text == "the hand is empty" {
        return vec![fact("hand", "content", text)];
    }
    if let Some(rest) = text.strip_prefix("the hand is currently holding ") {
        // "the hand is currently holding orange block"
        if rest.ends_with(" block") && !rest.is_empty() {
            return vec![fact("hand", "content", text), fact(rest, "position", text)];
        }
        return vec![fact("hand", "content", text)];
    }
    if let Some(rest) = text.strip_prefix("the ") {
        if let Some((upper, lower)) = rest.split_once(" is on top of the ") {
            if upper.ends_with(" block") && lower.ends_with(" block") {
                return vec![fact(upper, "position", text)];
            }
        }
        if let Some(upper) = rest.strip_suffix(" is on the table") {
            if upper.ends_with(" block") {
                return vec![fact(upper, "position", text)];
            }
        }
    }
    Vec::new()
}

/// Parse a full observation into facts, clause by clause.
pub fn parse_observation(observation: &str) -> Vec<ParsedFact> {
    observation.split(", ").flat_map(parse_clause).collect()
}

/// Merge parsed facts into the previous state: entities already known update
/// in place (key-wise), new entities append in first-mention order, and
/// everything unmentioned carries over unchanged.
pub fn merge_facts(prev: &FactoredState, facts: &[ParsedFact]) -> FactoredState {
    let mut entities: Vec<Entity> = prev.entities().to_vec();
    for f in facts {
        let folded = normalize::equality(&f.identity);
        match entities
            .iter_mut()
            .find(|e| normalize::equality(e.identity()) == folded)
        {
            Some(entity) => {
                let _ = entity.set_attribute(&f.key, &f.value);
            }
            None => {
                if let Ok(mut entity) = Entity::new(&f.identity) {
                    let _ = entity.set_attribute(&f.key, &f.value);
                    entities.push(entity);
                }
            }
        }
    }
    FactoredState::from_entities(entities)
}

/// Key-wise merge of two factored states: `current` wins on shared keys,
/// entities only in `prev` are retained, entities only in `current` append.
pub fn merge_states(prev: &FactoredState, current: &FactoredState) -> FactoredState {
    let mut entities: Vec<Entity> = prev.entities().to_vec();
    for incoming in current.entities() {
        let folded = normalize::equality(incoming.identity());
        match entities
            .iter_mut()
            .find(|e| normalize::equality(e.identity()) == folded)
        {
            Some(entity) => {
                for attr in incoming.attributes() {
                    let _ = entity.set_attribute(attr.key(), attr.value());
                }
            }
            None => entities.push(incoming.clone()),
        }
    }
    FactoredState::from_entities(entities)
}

/// Interpret a goal description made of the same clause grammar into a goal
/// blueprint: one entity per constrained block, `position` holding the
/// required clause.
pub fn interpret_goal_text(goal_text: &str) -> GoalState {
    let facts = parse_observation(goal_text);
    let mut entities: Vec<Entity> = Vec::new();
    for f in facts {
        // The goal describes required block placements; hand state is not a
        // requirement.
        if normalize::eq(&f.identity, "hand") {
            continue;
        }
        let folded = normalize::equality(&f.identity);
        match entities
            .iter_mut()
            .find(|e| normalize::equality(e.identity()) == folded)
        {
            Some(entity) => {
                let _ = entity.set_attribute(&f.key, &f.value);
            }
            None => {
                if let Ok(mut entity) = Entity::new(&f.identity) {
                    let _ = entity.set_attribute(&f.key, &f.value);
                    entities.push(entity);
                }
            }
        }
    }
    GoalState::from_entities(entities)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_block_and_hand_clauses() {
        let facts =
            parse_observation("the red block is on top of the orange block, the hand is empty");
        assert_eq!(
            facts,
            vec![
                fact(
                    "red block",
                    "position",
                    "the red block is on top of the orange block"
                ),
                fact("hand", "content", "the hand is empty"),
            ]
        );
    }

    #[test]
    fn holding_clause_updates_hand_and_block() {
        let facts = parse_observation("the hand is currently holding orange block");
        assert_eq!(
            facts,
            vec![
                fact(
                    "hand",
                    "content",
                    "the hand is currently holding orange block"
                ),
                fact(
                    "orange block",
                    "position",
                    "the hand is currently holding orange block"
                ),
            ]
        );
    }

    #[test]
    fn unknown_clauses_are_ignored() {
        assert!(parse_observation("you see a mug on the counter").is_empty());
        assert!(parse_observation("the green block is clear").is_empty());
    }

    #[test]
    fn merge_keeps_unmentioned_entities() {
        let prev = merge_facts(
            &FactoredState::empty(),
            &parse_observation("the cd block is on the table, the hand is empty"),
        );
        let next = merge_facts(
            &prev,
            &parse_observation("the hand is currently holding red block"),
        );
        assert!(next.entity("cd block").is_some());
        assert_eq!(
            next.entity("hand")
                .unwrap()
                .attribute("content")
                .unwrap()
                .value(),
            "the hand is currently holding red block"
        );
        assert_eq!(
            next.entity("red block")
                .unwrap()
                .attribute("position")
                .unwrap()
                .value(),
            "the hand is currently holding red block"
        );
    }

    #[test]
    fn goal_text_parses_to_blueprint() {
        let goal = interpret_goal_text("the red block is on top of the orange block");
        assert_eq!(goal.len(), 1);
        let entity = goal.entity("red block").unwrap();
        assert_eq!(
            entity.attribute("position").unwrap().value(),
            "the red block is on top of the orange block"
        );

        let multi = interpret_goal_text(
            "the red block is on top of the blue block, the blue block is on top of the orange block",
        );
        assert_eq!(multi.len(), 2);
    }
}
