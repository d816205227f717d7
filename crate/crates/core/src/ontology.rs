//! GloBI interaction vocabulary reduced to the five primitive relationship
//! kinds.
//!
//! The alias table ships as `data/globi_aliases.v1.json`. It holds the 19
//! distinct interaction names of the taxonomy (23 entries once sign-qualified
//! variants are counted). `parasitize` and `get parasitized by` appear twice:
//! unsigned they resolve to `Destroys`, and only an explicit negative sign
//! selects the `Affects` reading.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    default_relationship_params, endpoint_kinds_allowed, ComponentKind, Interaction, Relationship,
    RelationshipKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    Positive,
    Negative,
}

impl FromStr for Sign {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "+" | "positive" | "Positive" => Ok(Sign::Positive),
            "-" | "negative" | "Negative" => Ok(Sign::Negative),
            other => Err(format!("sign must be `+` or `-`, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// The alias reads "X <alias> Y" with X as the relationship source.
    Forward,
    /// The alias reads "Y <alias> X"; callers swap endpoints.
    Inverse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobiAlias {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign: Option<Sign>,
    pub primitive: RelationshipKind,
    pub direction: Direction,
    /// The alias naming the same interaction from the other side, if the
    /// vocabulary has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterpart: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AliasFile {
    version: u32,
    aliases: Vec<GlobiAlias>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionMapping {
    pub kind: RelationshipKind,
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign: Option<Sign>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OntologyError {
    #[error("unknown interaction `{0}`")]
    UnknownInteraction(String),
    #[error("interaction `{0}` needs a sign (+ or -)")]
    MissingSign(String),
    #[error("{kind} cannot join a {source_kind} source to a {target_kind} target")]
    EndpointKindMismatch {
        kind: RelationshipKind,
        source_kind: ComponentKind,
        target_kind: ComponentKind,
    },
}

static ALIASES: LazyLock<Vec<GlobiAlias>> = LazyLock::new(|| {
    let file: AliasFile = serde_json::from_str(include_str!("../data/globi_aliases.v1.json"))
        .expect("bundled alias table is well-formed");
    assert_eq!(file.version, 1);
    let mut aliases = file.aliases;
    aliases.sort_by(|a, b| {
        let rank = |k: RelationshipKind| RelationshipKind::ALL.iter().position(|x| *x == k);
        (rank(a.primitive), &a.name, a.sign).cmp(&(rank(b.primitive), &b.name, b.sign))
    });
    aliases
});

/// Lowercases, drops hyphens and trailing periods, and collapses whitespace.
pub fn normalize_alias(name: &str) -> String {
    let cleaned: String = name.to_lowercase().chars().filter(|c| *c != '-').collect();
    let cleaned = cleaned.trim().trim_end_matches('.');
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn list_aliases() -> &'static [GlobiAlias] {
    &ALIASES
}

pub fn map_interaction(name: &str, sign: Option<Sign>) -> Result<InteractionMapping, OntologyError> {
    let key = normalize_alias(name);
    let matching: Vec<&GlobiAlias> = ALIASES.iter().filter(|a| a.name == key).collect();
    if matching.is_empty() {
        return Err(OntologyError::UnknownInteraction(name.to_string()));
    }
    let found = matching
        .iter()
        .find(|a| a.sign == sign)
        .or_else(|| matching.iter().find(|a| a.sign.is_none()));
    match found {
        Some(alias) => Ok(InteractionMapping {
            kind: alias.primitive,
            direction: alias.direction,
            sign: alias.sign,
        }),
        None => Err(OntologyError::MissingSign(name.to_string())),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Endpoint<'a> {
    pub id: &'a str,
    pub kind: ComponentKind,
}

/// Builds a relationship with default parameters from an interaction name,
/// swapping endpoints for inverse aliases.
pub fn suggest_relationship(
    source: Endpoint<'_>,
    target: Endpoint<'_>,
    name: &str,
    sign: Option<Sign>,
) -> Result<Relationship, OntologyError> {
    let mapping = map_interaction(name, sign)?;
    let (from, to) = match mapping.direction {
        Direction::Forward => (source, target),
        Direction::Inverse => (target, source),
    };
    if !endpoint_kinds_allowed(mapping.kind, from.kind, to.kind) {
        return Err(OntologyError::EndpointKindMismatch {
            kind: mapping.kind,
            source_kind: from.kind,
            target_kind: to.kind,
        });
    }
    let mut interaction = default_relationship_params(mapping.kind);
    if let Interaction::Affects(p) = &mut interaction {
        p.growth_rate_modifier = match mapping.sign {
            Some(Sign::Negative) => -p.growth_rate_modifier.abs(),
            _ => p.growth_rate_modifier.abs(),
        };
    }
    Ok(Relationship {
        id: format!("{}-{}-{}", from.id, mapping.kind.as_str().to_lowercase(), to.id),
        source: from.id.to_string(),
        target: to.id.to_string(),
        interaction,
    })
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "Forward",
            Direction::Inverse => "Inverse",
        })
    }
}
