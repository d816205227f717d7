//! The JSON model document format.
//!
//! ```text
//! { "version": 1, "id": "...", "name": "...",
//!   "components":    [{ "id", "kind": "Biotic"|"Abiotic", "label", "taxon_ref"?, "properties": {...} }],
//!   "relationships": [{ "id", "source", "target", "kind", "params": {...} }],
//!   "metadata": {...} }
//! ```
//!
//! Unknown top-level fields are kept in `metadata`. Everything below the top
//! level is strict.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{Map, Value};
use thiserror::Error;

use super::{
    AbioticProperties, AffectsParams, BioticProperties, Component, ComponentKind,
    ComponentProperties, ConceptualModel, ConsumesParams, DestroysParams, Interaction,
    OnDeathParams, ProducesParams, Relationship, RelationshipKind,
};
use crate::canonical::value_to_canonical_string;

pub const MODEL_FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
}

impl ParseError {
    fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        ParseError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentDoc {
    id: String,
    kind: ComponentKind,
    label: String,
    #[serde(default)]
    taxon_ref: Option<String>,
    properties: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RelationshipDoc {
    id: String,
    source: String,
    target: String,
    kind: RelationshipKind,
    params: Value,
}

const KNOWN_TOP_LEVEL: [&str; 6] = ["version", "id", "name", "components", "relationships", "metadata"];

fn typed<T: DeserializeOwned>(value: Value, path: &str) -> Result<T, ParseError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let full = if inner == "." || inner.is_empty() {
            path.to_string()
        } else {
            format!("{path}.{inner}")
        };
        ParseError::schema(full, e.into_inner().to_string())
    })
}

/// Parses a model document without checking cross references.
///
/// Used by editors that want to report dangling edges through
/// [`validate_model`](super::validate_model) instead of rejecting the whole
/// document.
pub fn parse_document(bytes: &[u8]) -> Result<ConceptualModel, ParseError> {
    let root: Value = serde_json::from_slice(bytes).map_err(|e| ParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let Value::Object(mut obj) = root else {
        return Err(ParseError::schema("$", "model document must be a JSON object"));
    };

    match obj.remove("version") {
        None => return Err(ParseError::schema("version", "missing field `version`")),
        Some(v) if v.as_u64() == Some(MODEL_FORMAT_VERSION) => {}
        Some(v) => {
            return Err(ParseError::schema(
                "version",
                format!("unsupported version {v}, expected {MODEL_FORMAT_VERSION}"),
            ))
        }
    }
    let name = match obj.remove("name") {
        Some(Value::String(s)) => s,
        Some(_) => return Err(ParseError::schema("name", "expected a string")),
        None => return Err(ParseError::schema("name", "missing field `name`")),
    };
    let id = match obj.remove("id") {
        None => String::new(),
        Some(Value::String(s)) => s,
        Some(_) => return Err(ParseError::schema("id", "expected a string")),
    };
    let mut metadata: BTreeMap<String, Value> = match obj.remove("metadata") {
        None => BTreeMap::new(),
        Some(Value::Object(m)) => m.into_iter().collect(),
        Some(_) => return Err(ParseError::schema("metadata", "expected an object")),
    };

    let components = match obj.remove("components") {
        None => Vec::new(),
        Some(Value::Array(items)) => items
            .into_iter()
            .enumerate()
            .map(|(i, v)| parse_component(v, &format!("components[{i}]")))
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err(ParseError::schema("components", "expected an array")),
    };
    let relationships = match obj.remove("relationships") {
        None => Vec::new(),
        Some(Value::Array(items)) => items
            .into_iter()
            .enumerate()
            .map(|(i, v)| parse_relationship(v, &format!("relationships[{i}]")))
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err(ParseError::schema("relationships", "expected an array")),
    };

    for (key, value) in obj {
        debug_assert!(!KNOWN_TOP_LEVEL.contains(&key.as_str()));
        if metadata.contains_key(&key) {
            return Err(ParseError::schema(
                key.clone(),
                format!("unknown field `{key}` collides with metadata key of the same name"),
            ));
        }
        metadata.insert(key, value);
    }

    Ok(ConceptualModel {
        id,
        name,
        components,
        relationships,
        metadata,
    })
}

/// Parses a model document and checks that every relationship endpoint names
/// an existing component.
pub fn parse_model(bytes: &[u8]) -> Result<ConceptualModel, ParseError> {
    let model = parse_document(bytes)?;
    for (i, rel) in model.relationships.iter().enumerate() {
        for (end, id) in [("source", &rel.source), ("target", &rel.target)] {
            if model.component(id).is_none() {
                return Err(ParseError::schema(
                    format!("relationships[{i}].{end}"),
                    format!("relationship `{}` references unknown component `{id}`", rel.id),
                ));
            }
        }
    }
    Ok(model)
}

fn parse_component(value: Value, path: &str) -> Result<Component, ParseError> {
    let doc: ComponentDoc = typed(value, path)?;
    let props_path = format!("{path}.properties");
    let properties = match doc.kind {
        ComponentKind::Biotic => {
            ComponentProperties::Biotic(typed::<BioticProperties>(doc.properties, &props_path)?)
        }
        ComponentKind::Abiotic => {
            ComponentProperties::Abiotic(typed::<AbioticProperties>(doc.properties, &props_path)?)
        }
    };
    Ok(Component {
        id: doc.id,
        label: doc.label,
        taxon_ref: doc.taxon_ref,
        properties,
    })
}

fn parse_relationship(value: Value, path: &str) -> Result<Relationship, ParseError> {
    let doc: RelationshipDoc = typed(value, path)?;
    let p = format!("{path}.params");
    let interaction = match doc.kind {
        RelationshipKind::Consumes => Interaction::Consumes(typed::<ConsumesParams>(doc.params, &p)?),
        RelationshipKind::Destroys => Interaction::Destroys(typed::<DestroysParams>(doc.params, &p)?),
        RelationshipKind::Produces => Interaction::Produces(typed::<ProducesParams>(doc.params, &p)?),
        RelationshipKind::Affects => Interaction::Affects(typed::<AffectsParams>(doc.params, &p)?),
        RelationshipKind::BecomesOnDeath => {
            Interaction::BecomesOnDeath(typed::<OnDeathParams>(doc.params, &p)?)
        }
    };
    Ok(Relationship {
        id: doc.id,
        source: doc.source,
        target: doc.target,
        interaction,
    })
}

pub(crate) fn to_document(model: &ConceptualModel) -> Value {
    let mut root = Map::new();
    root.insert("version".into(), Value::from(MODEL_FORMAT_VERSION));
    if !model.id.is_empty() {
        root.insert("id".into(), Value::String(model.id.clone()));
    }
    root.insert("name".into(), Value::String(model.name.clone()));
    root.insert(
        "components".into(),
        Value::Array(model.components.iter().map(component_doc).collect()),
    );
    root.insert(
        "relationships".into(),
        Value::Array(model.relationships.iter().map(relationship_doc).collect()),
    );
    if !model.metadata.is_empty() {
        root.insert(
            "metadata".into(),
            Value::Object(model.metadata.clone().into_iter().collect()),
        );
    }
    Value::Object(root)
}

fn component_doc(c: &Component) -> Value {
    let mut m = Map::new();
    m.insert("id".into(), Value::String(c.id.clone()));
    m.insert("kind".into(), Value::String(c.kind().to_string()));
    m.insert("label".into(), Value::String(c.label.clone()));
    if let Some(t) = &c.taxon_ref {
        m.insert("taxon_ref".into(), Value::String(t.clone()));
    }
    let props = match &c.properties {
        ComponentProperties::Biotic(p) => serde_json::to_value(p),
        ComponentProperties::Abiotic(p) => serde_json::to_value(p),
    }
    .expect("finite properties serialize");
    m.insert("properties".into(), props);
    Value::Object(m)
}

fn relationship_doc(r: &Relationship) -> Value {
    let mut m = Map::new();
    m.insert("id".into(), Value::String(r.id.clone()));
    m.insert("source".into(), Value::String(r.source.clone()));
    m.insert("target".into(), Value::String(r.target.clone()));
    let tagged = serde_json::to_value(&r.interaction).expect("finite params serialize");
    if let Value::Object(t) = tagged {
        m.extend(t);
    }
    Value::Object(m)
}

/// Canonical bytes: sorted keys, LF endings, shortest round-trip numbers.
pub fn serialize_model(model: &ConceptualModel) -> Vec<u8> {
    value_to_canonical_string(&to_document(model)).into_bytes()
}
