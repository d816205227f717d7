//! Semantic validation of conceptual models.
//!
//! Endpoint-kind rules (which component kinds each relationship may join):
//!
//! | relationship     | allowed source → target                    |
//! |------------------|--------------------------------------------|
//! | `Consumes`       | Biotic → Biotic, Biotic → Abiotic          |
//! | `Destroys`       | any → Biotic, Biotic → Abiotic             |
//! | `Produces`       | Biotic → Abiotic, Biotic → Biotic          |
//! | `Affects`        | any → any                                  |
//! | `BecomesOnDeath` | Biotic → Abiotic, Biotic → Biotic          |
//!
//! The source material only gives prose examples for these, so the table is a
//! project decision rather than a transcription.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{ComponentKind, ComponentProperties, ConceptualModel, RelationshipKind};

pub mod codes {
    pub const DUPLICATE_ID: &str = "DUPLICATE_ID";
    pub const DUPLICATE_RELATIONSHIP_ID: &str = "DUPLICATE_RELATIONSHIP_ID";
    pub const ID_FORMAT: &str = "ID_FORMAT";
    pub const PROP_RANGE: &str = "PROP_RANGE";
    pub const PROP_MATURITY: &str = "PROP_MATURITY";
    pub const PROP_AMOUNT: &str = "PROP_AMOUNT";
    pub const PARAM_RANGE: &str = "PARAM_RANGE";
    pub const REL_ENDPOINT: &str = "REL_ENDPOINT";
    pub const REL_SELF_LOOP: &str = "REL_SELF_LOOP";
    pub const REL_ENDPOINT_KIND: &str = "REL_ENDPOINT_KIND";

    pub const WARN_ISOLATED: &str = "ISOLATED_COMPONENT";
    pub const WARN_BELOW_REFUGE: &str = "START_BELOW_MINIMUM";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub code: String,
    pub message: String,
    /// Id of the offending component or relationship.
    pub subject: String,
    /// Property or parameter name, when the finding is about one field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<ValidationIssue>,
    pub warnings: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_compilable(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn has_code(&self, code: &str) -> bool {
        self.errors.iter().any(|e| e.code == code)
    }
}

pub fn endpoint_kinds_allowed(kind: RelationshipKind, source: ComponentKind, target: ComponentKind) -> bool {
    use ComponentKind::{Abiotic, Biotic};
    match kind {
        RelationshipKind::Consumes | RelationshipKind::Produces | RelationshipKind::BecomesOnDeath => {
            source == Biotic
        }
        RelationshipKind::Destroys => !(source == Abiotic && target == Abiotic),
        RelationshipKind::Affects => true,
    }
}

/// Ids start with an ASCII letter and continue with letters, digits, `-` or `_`.
pub fn valid_id(id: &str) -> bool {
    let mut chars = id.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

struct Collector {
    errors: Vec<ValidationIssue>,
    warnings: Vec<ValidationIssue>,
}

impl Collector {
    fn error(&mut self, code: &str, subject: &str, field: Option<&str>, message: String) {
        self.errors.push(issue(code, subject, field, message));
    }

    fn warn(&mut self, code: &str, subject: &str, field: Option<&str>, message: String) {
        self.warnings.push(issue(code, subject, field, message));
    }
}

fn issue(code: &str, subject: &str, field: Option<&str>, message: String) -> ValidationIssue {
    ValidationIssue {
        code: code.to_string(),
        message,
        subject: subject.to_string(),
        field: field.map(str::to_string),
    }
}

type Bound = (&'static str, fn(f64) -> bool, &'static str);

fn is_count(x: f64) -> bool {
    x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64
}

const BIOTIC_BOUNDS: [Bound; 13] = [
    ("lifespan", |x| x > 0.0, "must be > 0 months"),
    ("reproductive_maturity", |x| x >= 0.0, "must be >= 0 months"),
    ("reproductive_interval", |x| x > 0.0, "must be > 0 months"),
    ("offspring_count", is_count, "must be a non-negative whole count"),
    ("starting_population", is_count, "must be a non-negative whole count"),
    ("minimum_population", is_count, "must be a non-negative whole count"),
    ("body_mass", |x| x > 0.0, "must be > 0 kg"),
    ("carbon_biomass", |x| x > 0.0, "must be > 0 kg"),
    ("respiratory_rate", |x| x >= 0.0, "must be >= 0"),
    ("photosynthesis_rate", |x| x >= 0.0, "must be >= 0"),
    ("assimilation_efficiency", |x| (0.0..=1.0).contains(&x), "must lie in [0, 1]"),
    ("move_direction", |x| (0.0..360.0).contains(&x), "must lie in [0, 360) degrees"),
    ("move_velocity", |x| x >= 0.0, "must be >= 0 cells/month"),
];

const ABIOTIC_BOUNDS: [Bound; 3] = [
    ("amount", |x| x >= 0.0, "must be >= 0"),
    ("minimum_amount", |x| x >= 0.0, "must be >= 0"),
    ("growth_rate", |_| true, "must be finite"),
];

fn param_bound(name: &str) -> (fn(f64) -> bool, &'static str) {
    match name {
        "production_rate" => (|x| x >= 0.0, "must be >= 0"),
        "growth_rate_modifier" => (|x| (-1.0..=1.0).contains(&x), "must lie in [-1, 1]"),
        _ => (|x| (0.0..=1.0).contains(&x), "must lie in [0, 1]"),
    }
}

/// Checks every model invariant. Findings are sorted by `(subject, code)`;
/// ties keep discovery order.
pub fn validate_model(model: &ConceptualModel) -> ValidationReport {
    let mut c = Collector {
        errors: Vec::new(),
        warnings: Vec::new(),
    };

    let mut seen = HashSet::new();
    let mut kinds: HashMap<&str, ComponentKind> = HashMap::new();
    for comp in &model.components {
        if !valid_id(&comp.id) {
            c.error(
                codes::ID_FORMAT,
                &comp.id,
                None,
                format!("component id `{}` must start with a letter and contain only letters, digits, '-' or '_'", comp.id),
            );
        }
        if !seen.insert(comp.id.as_str()) {
            c.error(codes::DUPLICATE_ID, &comp.id, None, format!("component id `{}` is used more than once", comp.id));
        }
        kinds.entry(comp.id.as_str()).or_insert(comp.kind());

        match &comp.properties {
            ComponentProperties::Biotic(p) => {
                for ((name, ok, rule), value) in BIOTIC_BOUNDS.iter().zip(p.values()) {
                    if !value.is_finite() || !ok(value) {
                        c.error(codes::PROP_RANGE, &comp.id, Some(name), format!("{name} = {value} {rule}"));
                    }
                }
                if p.reproductive_maturity.is_finite()
                    && p.lifespan.is_finite()
                    && p.reproductive_maturity >= p.lifespan
                {
                    c.error(
                        codes::PROP_MATURITY,
                        &comp.id,
                        Some("reproductive_maturity"),
                        format!(
                            "reproductive_maturity ({}) must be less than lifespan ({})",
                            p.reproductive_maturity, p.lifespan
                        ),
                    );
                }
                if p.starting_population < p.minimum_population {
                    c.warn(
                        codes::WARN_BELOW_REFUGE,
                        &comp.id,
                        Some("starting_population"),
                        "starting population is below the minimum population".into(),
                    );
                }
            }
            ComponentProperties::Abiotic(p) => {
                let values = [p.amount, p.minimum_amount, p.growth_rate];
                for ((name, ok, rule), value) in ABIOTIC_BOUNDS.iter().zip(values) {
                    if !value.is_finite() || !ok(value) {
                        c.error(codes::PROP_RANGE, &comp.id, Some(name), format!("{name} = {value} {rule}"));
                    }
                }
                if p.amount < p.minimum_amount {
                    c.error(
                        codes::PROP_AMOUNT,
                        &comp.id,
                        Some("amount"),
                        format!("amount ({}) is below minimum_amount ({})", p.amount, p.minimum_amount),
                    );
                }
            }
        }
    }

    let mut rel_ids = HashSet::new();
    let mut touched = HashSet::new();
    for rel in &model.relationships {
        if !valid_id(&rel.id) {
            c.error(codes::ID_FORMAT, &rel.id, None, format!("relationship id `{}` is malformed", rel.id));
        }
        if !rel_ids.insert(rel.id.as_str()) {
            c.error(
                codes::DUPLICATE_RELATIONSHIP_ID,
                &rel.id,
                None,
                format!("relationship id `{}` is used more than once", rel.id),
            );
        }
        touched.insert(rel.source.as_str());
        touched.insert(rel.target.as_str());

        let source = kinds.get(rel.source.as_str()).copied();
        let target = kinds.get(rel.target.as_str()).copied();
        for (end, id, kind) in [("source", &rel.source, source), ("target", &rel.target, target)] {
            if kind.is_none() {
                c.error(
                    codes::REL_ENDPOINT,
                    &rel.id,
                    Some(end),
                    format!("{end} `{id}` does not name a component"),
                );
            }
        }
        if rel.source == rel.target {
            c.error(
                codes::REL_SELF_LOOP,
                &rel.id,
                None,
                format!("`{}` cannot {} itself", rel.source, rel.kind()),
            );
        }
        if let (Some(s), Some(t)) = (source, target) {
            if !endpoint_kinds_allowed(rel.kind(), s, t) {
                c.error(
                    codes::REL_ENDPOINT_KIND,
                    &rel.id,
                    None,
                    format!("{} is not allowed from a {s} to a {t} component", rel.kind()),
                );
            }
        }
        for (name, value) in rel.interaction.param_values() {
            let (ok, rule) = param_bound(name);
            if !value.is_finite() || !ok(value) {
                c.error(codes::PARAM_RANGE, &rel.id, Some(name), format!("{name} = {value} {rule}"));
            }
        }
    }

    if model.components.len() > 1 {
        for comp in &model.components {
            if !touched.contains(comp.id.as_str()) {
                c.warn(
                    codes::WARN_ISOLATED,
                    &comp.id,
                    None,
                    format!("`{}` takes part in no relationship", comp.id),
                );
            }
        }
    }

    let key = |i: &ValidationIssue| (i.subject.clone(), i.code.clone());
    c.errors.sort_by_key(key);
    c.warnings.sort_by_key(key);
    ValidationReport {
        errors: c.errors,
        warnings: c.warnings,
    }
}
