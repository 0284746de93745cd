//! Factored world-state and goal representations.
//!
//! A state is an ordered set of object entities; each entity couples a short
//! identity (`"cd 1"`) with an ordered list of attribute pairs whose keys are
//! short summative names (`"position"`) and whose values are complete
//! declarative sentences (`"The cd 1 is on desk 2."`). Goal states share the
//! structure and describe the blueprint a task must reach.
//!
//! The on-disk/document form is a JSON array of
//! `{"object": {"<identity>": [{"<key>": "<value>"}, ...]}}` wrappers; see
//! [`FactoredState::from_document`] and [`FactoredState::to_document`].

use serde_json::Value;

use crate::normalize;

/// Hard ceilings applied when ingesting backend output. Backends occasionally
/// dump entire room inventories; these guards bound the damage. Entities and
/// attributes beyond the cap are dropped with a warning.
#[derive(Debug, Clone, Copy)]
pub struct ParseLimits {
    pub max_entities: usize,
    pub max_attributes: usize,
}

impl Default for ParseLimits {
    fn default() -> Self {
        Self {
            max_entities: 64,
            max_attributes: 16,
        }
    }
}

/// Errors raised while parsing or constructing factored states.
#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("document root is not an array")]
    NotAnArray,
    #[error("array element {index} is missing the object wrapper")]
    MissingObjectWrapper { index: usize },
    #[error("entity {identity:?} has a malformed attribute list")]
    MalformedAttributeList { identity: String },
    #[error("attribute {key:?} of entity {identity:?} has a non-text value")]
    NonTextValue { identity: String, key: String },
    #[error("duplicate attribute key {key:?} within entity {identity:?}")]
    DuplicateKey { identity: String, key: String },
    #[error("entity identity is empty")]
    EmptyIdentity,
    #[error("attribute key is empty (entity {identity:?})")]
    EmptyKey { identity: String },
    #[error("attribute value is empty (entity {identity:?}, key {key:?})")]
    EmptyValue { identity: String, key: String },
    #[error("invalid document JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// One attribute: a short summative key and a full-sentence value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributePair {
    key: String,
    value: String,
}

impl AttributePair {
    pub fn new(key: &str, value: &str) -> Result<Self, SchemaError> {
        let key = normalize::display(key);
        let value = normalize::display(value);
        if key.is_empty() {
            return Err(SchemaError::EmptyKey {
                identity: String::new(),
            });
        }
        if value.is_empty() {
            return Err(SchemaError::EmptyValue {
                identity: String::new(),
                key,
            });
        }
        Ok(Self { key, value })
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn value(&self) -> &str {
        &self.value
    }
}

/// An object entity: identity plus ordered attributes with unique keys
/// (uniqueness judged after case-folding).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    identity: String,
    attributes: Vec<AttributePair>,
}

impl Entity {
    /// An entity with no attributes yet (identity-only observation).
    pub fn new(identity: &str) -> Result<Self, SchemaError> {
        let identity = normalize::display(identity);
        if identity.is_empty() {
            return Err(SchemaError::EmptyIdentity);
        }
        Ok(Self {
            identity,
            attributes: Vec::new(),
        })
    }

    /// Build from key/value pairs, rejecting duplicate keys.
    pub fn from_pairs<'a, I>(identity: &str, pairs: I) -> Result<Self, SchemaError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut entity = Self::new(identity)?;
        for (key, value) in pairs {
            entity.push_attribute(key, value)?;
        }
        Ok(entity)
    }

    /// Append an attribute; errors if the (case-folded) key already exists.
    pub fn push_attribute(&mut self, key: &str, value: &str) -> Result<(), SchemaError> {
        let pair = AttributePair::new(key, value).map_err(|e| match e {
            SchemaError::EmptyKey { .. } => SchemaError::EmptyKey {
                identity: self.identity.clone(),
            },
            SchemaError::EmptyValue { key, .. } => SchemaError::EmptyValue {
                identity: self.identity.clone(),
                key,
            },
            other => other,
        })?;
        if self.attribute(&pair.key).is_some() {
            return Err(SchemaError::DuplicateKey {
                identity: self.identity.clone(),
                key: pair.key,
            });
        }
        self.attributes.push(pair);
        Ok(())
    }

    /// Insert or replace the attribute under `key`, preserving list position
    /// on replacement.
    pub fn set_attribute(&mut self, key: &str, value: &str) -> Result<(), SchemaError> {
        let pair = AttributePair::new(key, value)?;
        let folded = normalize::equality(&pair.key);
        match self
            .attributes
            .iter_mut()
            .find(|a| normalize::equality(&a.key) == folded)
        {
            Some(existing) => existing.value = pair.value,
            None => self.attributes.push(pair),
        }
        Ok(())
    }

    pub fn identity(&self) -> &str {
        &self.identity
    }

    pub fn attributes(&self) -> &[AttributePair] {
        &self.attributes
    }

    /// Look up an attribute by case-folded key.
    pub fn attribute(&self, key: &str) -> Option<&AttributePair> {
        let folded = normalize::equality(key);
        self.attributes
            .iter()
            .find(|a| normalize::equality(&a.key) == folded)
    }
}

/// The world state as currently believed: an ordered list of entities whose
/// identities are unique under case-folding. May be empty when nothing
/// task-relevant has been observed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FactoredState {
    entities: Vec<Entity>,
}

/// The success blueprint: goal entities and the attributes they must reach.
/// Structurally identical to [`FactoredState`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GoalState {
    entities: Vec<Entity>,
}

/// Dedupe entities by case-folded identity, keeping the first occurrence.
/// Backends are instructed not to emit duplicates but sometimes do anyway.
fn dedupe_entities(entities: Vec<Entity>) -> Vec<Entity> {
    let mut seen: Vec<String> = Vec::new();
    let mut out = Vec::with_capacity(entities.len());
    for entity in entities {
        let folded = normalize::equality(entity.identity());
        if seen.contains(&folded) {
            log::warn!(
                "duplicate entity identity {:?}; keeping the first",
                entity.identity()
            );
            continue;
        }
        seen.push(folded);
        out.push(entity);
    }
    out
}

fn entities_from_document_value(
    doc: &Value,
    limits: ParseLimits,
) -> Result<Vec<Entity>, SchemaError> {
    let array = doc.as_array().ok_or(SchemaError::NotAnArray)?;
    let mut entities = Vec::new();
    for (index, element) in array.iter().enumerate() {
        let wrapper = element
            .as_object()
            .filter(|m| m.len() == 1 && m.contains_key("object"))
            .ok_or(SchemaError::MissingObjectWrapper { index })?;
        let inner = wrapper["object"]
            .as_object()
            .ok_or(SchemaError::MissingObjectWrapper { index })?;
        for (identity, attrs) in inner {
            let mut entity = Entity::new(identity)?;
            let list = attrs
                .as_array()
                .ok_or_else(|| SchemaError::MalformedAttributeList {
                    identity: identity.clone(),
                })?;
            for attr in list {
                let map = attr
                    .as_object()
                    .ok_or_else(|| SchemaError::MalformedAttributeList {
                        identity: identity.clone(),
                    })?;
                for (key, value) in map {
                    let text = value.as_str().ok_or_else(|| SchemaError::NonTextValue {
                        identity: identity.clone(),
                        key: key.clone(),
                    })?;
                    if entity.attributes.len() >= limits.max_attributes {
                        log::warn!(
                            "entity {:?} exceeds the {}-attribute cap; dropping {:?}",
                            identity,
                            limits.max_attributes,
                            key
                        );
                        continue;
                    }
                    entity.push_attribute(key, text)?;
                }
            }
            if entities.len() >= limits.max_entities {
                log::warn!(
                    "document exceeds the {}-entity cap; dropping {:?}",
                    limits.max_entities,
                    identity
                );
                continue;
            }
            entities.push(entity);
        }
    }
    Ok(dedupe_entities(entities))
}

fn entities_to_document_value(entities: &[Entity]) -> Value {
    Value::Array(
        entities
            .iter()
            .map(|entity| {
                let attrs: Vec<Value> = entity
                    .attributes()
                    .iter()
                    .map(|a| {
                        let mut map = serde_json::Map::new();
                        map.insert(a.key().to_string(), Value::String(a.value().to_string()));
                        Value::Object(map)
                    })
                    .collect();
                let mut inner = serde_json::Map::new();
                inner.insert(entity.identity().to_string(), Value::Array(attrs));
                let mut wrapper = serde_json::Map::new();
                wrapper.insert("object".to_string(), Value::Object(inner));
                Value::Object(wrapper)
            })
            .collect(),
    )
}

macro_rules! state_like {
    ($name:ident) => {
        impl $name {
            /// Build from entities, deduping identities (first wins).
            pub fn from_entities(entities: Vec<Entity>) -> Self {
                Self {
                    entities: dedupe_entities(entities),
                }
            }

            pub fn empty() -> Self {
                Self::default()
            }

            pub fn entities(&self) -> &[Entity] {
                &self.entities
            }

            pub fn is_empty(&self) -> bool {
                self.entities.is_empty()
            }

            pub fn len(&self) -> usize {
                self.entities.len()
            }

            /// Look up an entity by case-folded identity.
            pub fn entity(&self, identity: &str) -> Option<&Entity> {
                let folded = normalize::equality(identity);
                self.entities
                    .iter()
                    .find(|e| normalize::equality(e.identity()) == folded)
            }

            /// Parse the external document format with the given limits.
            pub fn from_document_value(
                doc: &Value,
                limits: ParseLimits,
            ) -> Result<Self, SchemaError> {
                Ok(Self {
                    entities: entities_from_document_value(doc, limits)?,
                })
            }

            /// Parse the external document format from JSON text.
            pub fn from_document(text: &str) -> Result<Self, SchemaError> {
                let doc: Value = serde_json::from_str(text)?;
                Self::from_document_value(&doc, ParseLimits::default())
            }

            /// Serialize to the external document format.
            pub fn to_document_value(&self) -> Value {
                entities_to_document_value(&self.entities)
            }

            /// Serialize to compact JSON text in the external document format.
            pub fn to_document(&self) -> String {
                self.to_document_value().to_string()
            }
        }
    };
}

state_like!(FactoredState);
state_like!(GoalState);

impl From<FactoredState> for GoalState {
    fn from(state: FactoredState) -> Self {
        GoalState {
            entities: state.entities,
        }
    }
}

impl From<GoalState> for FactoredState {
    fn from(goal: GoalState) -> Self {
        FactoredState {
            entities: goal.entities,
        }
    }
}

/// Parse a Level-4 document into a [`FactoredState`] with default limits.
pub fn parse_factored_state(document: &str) -> Result<FactoredState, SchemaError> {
    FactoredState::from_document(document)
}

/// The four granularities a state representation can take. `Raw` is the
/// untouched observation text and `ObjectAttribute` is the full factored
/// form; the middle two are produced by [`degrade`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepresentationLevel {
    Raw,
    FlatText,
    ObjectCentric,
    ObjectAttribute,
}

/// The two levels [`degrade`] can produce from a factored state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegradeLevel {
    FlatText,
    ObjectCentric,
}

/// A structurally reduced state. Every sentence is a verbatim attribute
/// value of the source state; only structure is removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DegradedState {
    /// One sentence per attribute value, in entity-then-attribute order.
    FlatText(Vec<String>),
    /// Sentences grouped under their entity identity.
    ObjectCentric(Vec<(String, Vec<String>)>),
}

/// Strip structure from a factored state down to the requested level.
pub fn degrade(state: &FactoredState, level: DegradeLevel) -> DegradedState {
    match level {
        DegradeLevel::FlatText => DegradedState::FlatText(
            state
                .entities()
                .iter()
                .flat_map(|e| e.attributes().iter().map(|a| a.value().to_string()))
                .collect(),
        ),
        DegradeLevel::ObjectCentric => DegradedState::ObjectCentric(
            state
                .entities()
                .iter()
                .map(|e| {
                    (
                        e.identity().to_string(),
                        e.attributes()
                            .iter()
                            .map(|a| a.value().to_string())
                            .collect(),
                    )
                })
                .collect(),
        ),
    }
}
