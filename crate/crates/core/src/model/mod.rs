//! Component-Mechanism-Phenomenon model structures.
//!
//! A [`ConceptualModel`] is a directed graph: nodes are biotic populations or
//! abiotic substance pools, edges are one of five primitive interactions.
//! Properties and interaction parameters are tagged unions, so a biotic
//! component can never carry abiotic properties and a `Consumes` edge can
//! never carry a production rate.

mod defaults;
mod document;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use defaults::{default_properties, default_relationship_params, DefaultTable, DEFAULTS};
pub use document::{parse_document, parse_model, serialize_model, ParseError, MODEL_FORMAT_VERSION};
pub use validate::{codes, endpoint_kinds_allowed, valid_id, validate_model, Severity, ValidationIssue, ValidationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ComponentKind {
    Biotic,
    Abiotic,
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ComponentKind::Biotic => "Biotic",
            ComponentKind::Abiotic => "Abiotic",
        })
    }
}

/// The thirteen per-population parameters. Time is in months, mass in kg,
/// rates in kg of carbon per month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BioticProperties {
    pub lifespan: f64,
    pub reproductive_maturity: f64,
    pub reproductive_interval: f64,
    pub offspring_count: f64,
    pub starting_population: f64,
    pub minimum_population: f64,
    pub body_mass: f64,
    pub carbon_biomass: f64,
    pub respiratory_rate: f64,
    pub photosynthesis_rate: f64,
    pub assimilation_efficiency: f64,
    pub move_direction: f64,
    pub move_velocity: f64,
}

impl BioticProperties {
    pub const FIELD_NAMES: [&'static str; 13] = [
        "lifespan",
        "reproductive_maturity",
        "reproductive_interval",
        "offspring_count",
        "starting_population",
        "minimum_population",
        "body_mass",
        "carbon_biomass",
        "respiratory_rate",
        "photosynthesis_rate",
        "assimilation_efficiency",
        "move_direction",
        "move_velocity",
    ];

    /// Field values in [`Self::FIELD_NAMES`] order.
    pub fn values(&self) -> [f64; 13] {
        [
            self.lifespan,
            self.reproductive_maturity,
            self.reproductive_interval,
            self.offspring_count,
            self.starting_population,
            self.minimum_population,
            self.body_mass,
            self.carbon_biomass,
            self.respiratory_rate,
            self.photosynthesis_rate,
            self.assimilation_efficiency,
            self.move_direction,
            self.move_velocity,
        ]
    }

    pub fn get(&self, field: &str) -> Option<f64> {
        Self::FIELD_NAMES
            .iter()
            .position(|f| *f == field)
            .map(|i| self.values()[i])
    }

    pub fn field_mut(&mut self, field: &str) -> Option<&mut f64> {
        Some(match field {
            "lifespan" => &mut self.lifespan,
            "reproductive_maturity" => &mut self.reproductive_maturity,
            "reproductive_interval" => &mut self.reproductive_interval,
            "offspring_count" => &mut self.offspring_count,
            "starting_population" => &mut self.starting_population,
            "minimum_population" => &mut self.minimum_population,
            "body_mass" => &mut self.body_mass,
            "carbon_biomass" => &mut self.carbon_biomass,
            "respiratory_rate" => &mut self.respiratory_rate,
            "photosynthesis_rate" => &mut self.photosynthesis_rate,
            "assimilation_efficiency" => &mut self.assimilation_efficiency,
            "move_direction" => &mut self.move_direction,
            "move_velocity" => &mut self.move_velocity,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbioticProperties {
    pub amount: f64,
    pub minimum_amount: f64,
    /// Substance units per month; may be negative.
    pub growth_rate: f64,
}

impl AbioticProperties {
    pub const FIELD_NAMES: [&'static str; 3] = ["amount", "minimum_amount", "growth_rate"];
}

#[derive(Debug, Clone, PartialEq)]
pub enum ComponentProperties {
    Biotic(BioticProperties),
    Abiotic(AbioticProperties),
}

impl ComponentProperties {
    pub fn kind(&self) -> ComponentKind {
        match self {
            ComponentProperties::Biotic(_) => ComponentKind::Biotic,
            ComponentProperties::Abiotic(_) => ComponentKind::Abiotic,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub id: String,
    pub label: String,
    /// Taxon the properties were looked up from, if any.
    pub taxon_ref: Option<String>,
    pub properties: ComponentProperties,
}

impl Component {
    pub fn kind(&self) -> ComponentKind {
        self.properties.kind()
    }

    pub fn biotic(&self) -> Option<&BioticProperties> {
        match &self.properties {
            ComponentProperties::Biotic(p) => Some(p),
            ComponentProperties::Abiotic(_) => None,
        }
    }

    pub fn abiotic(&self) -> Option<&AbioticProperties> {
        match &self.properties {
            ComponentProperties::Abiotic(p) => Some(p),
            ComponentProperties::Biotic(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationshipKind {
    Consumes,
    Destroys,
    Produces,
    Affects,
    BecomesOnDeath,
}

impl RelationshipKind {
    pub const ALL: [RelationshipKind; 5] = [
        RelationshipKind::Consumes,
        RelationshipKind::Destroys,
        RelationshipKind::Produces,
        RelationshipKind::Affects,
        RelationshipKind::BecomesOnDeath,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationshipKind::Consumes => "Consumes",
            RelationshipKind::Destroys => "Destroys",
            RelationshipKind::Produces => "Produces",
            RelationshipKind::Affects => "Affects",
            RelationshipKind::BecomesOnDeath => "BecomesOnDeath",
        }
    }
}

impl fmt::Display for RelationshipKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsumesParams {
    /// Fraction of the prey's carbon removed per successful interaction.
    pub consumption_rate: f64,
    pub interaction_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DestroysParams {
    pub destruction_rate: f64,
    pub interaction_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProducesParams {
    /// Mean units emitted per source individual per month.
    pub production_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffectsParams {
    pub growth_rate_modifier: f64,
    pub interaction_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnDeathParams {
    pub percent_body_mass: f64,
}

/// Relationship kind together with exactly the parameters that kind uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params")]
pub enum Interaction {
    Consumes(ConsumesParams),
    Destroys(DestroysParams),
    Produces(ProducesParams),
    Affects(AffectsParams),
    BecomesOnDeath(OnDeathParams),
}

impl Interaction {
    pub fn kind(&self) -> RelationshipKind {
        match self {
            Interaction::Consumes(_) => RelationshipKind::Consumes,
            Interaction::Destroys(_) => RelationshipKind::Destroys,
            Interaction::Produces(_) => RelationshipKind::Produces,
            Interaction::Affects(_) => RelationshipKind::Affects,
            Interaction::BecomesOnDeath(_) => RelationshipKind::BecomesOnDeath,
        }
    }

    /// `(name, value)` pairs of the parameters carried by this interaction.
    pub fn param_values(&self) -> Vec<(&'static str, f64)> {
        match self {
            Interaction::Consumes(p) => vec![
                ("consumption_rate", p.consumption_rate),
                ("interaction_probability", p.interaction_probability),
            ],
            Interaction::Destroys(p) => vec![
                ("destruction_rate", p.destruction_rate),
                ("interaction_probability", p.interaction_probability),
            ],
            Interaction::Produces(p) => vec![("production_rate", p.production_rate)],
            Interaction::Affects(p) => vec![
                ("growth_rate_modifier", p.growth_rate_modifier),
                ("interaction_probability", p.interaction_probability),
            ],
            Interaction::BecomesOnDeath(p) => vec![("percent_body_mass", p.percent_body_mass)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relationship {
    pub id: String,
    pub source: String,
    pub target: String,
    pub interaction: Interaction,
}

impl Relationship {
    pub fn kind(&self) -> RelationshipKind {
        self.interaction.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConceptualModel {
    pub id: String,
    pub name: String,
    pub components: Vec<Component>,
    pub relationships: Vec<Relationship>,
    /// Free-form annotations; unknown top-level document fields land here too.
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl ConceptualModel {
    pub fn component(&self, id: &str) -> Option<&Component> {
        self.components.iter().find(|c| c.id == id)
    }

    pub fn component_index(&self, id: &str) -> Option<usize> {
        self.components.iter().position(|c| c.id == id)
    }
}

impl Serialize for ConceptualModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        document::to_document(self).serialize(serializer)
    }
}
