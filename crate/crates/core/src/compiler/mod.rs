//! Model compilation: conceptual model → domain model → simulation IR →
//! backends (engine program, NetLogo source).

mod engine_program;
mod ir;
mod netlogo;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    validate_model, AbioticProperties, BioticProperties, ComponentProperties, ConceptualModel, Interaction,
    ValidationReport,
};

pub use engine_program::{compile_for_engine, EngineInstr, EnginePhase, EnginePool, EnginePopulation, EngineProgram, Target};
pub use ir::{lower_to_ir, Access, Asg, AsgEdge, Op, ParamRef, Phase, PhaseBlock, PrimitiveOp, SimulationProgram, Symbol};
pub use netlogo::{breed_names, check_netlogo, emit_netlogo, NetLogoSyntaxError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("model has {} validation error(s)", .0.errors.len())]
    Invalid(ValidationReport),
    #[error("component `{component}` has no usable value for `{field}`")]
    UnresolvedProperties { component: String, field: String },
    #[error("unsupported construct: {0}")]
    UnsupportedConstruct(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    MobileAgent,
    /// Stationary, area-based plant population; one individual per cell.
    DensityPool,
    SubstancePool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ResolvedProperties {
    Biotic(BioticProperties),
    Abiotic(AbioticProperties),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub id: String,
    pub label: String,
    pub role: Role,
    pub properties: ResolvedProperties,
}

impl Population {
    pub fn biotic(&self) -> Option<&BioticProperties> {
        match &self.properties {
            ResolvedProperties::Biotic(p) => Some(p),
            ResolvedProperties::Abiotic(_) => None,
        }
    }

    pub fn abiotic(&self) -> Option<&AbioticProperties> {
        match &self.properties {
            ResolvedProperties::Abiotic(p) => Some(p),
            ResolvedProperties::Biotic(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionSpec {
    pub id: String,
    pub source: String,
    pub target: String,
    pub interaction: Interaction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainModel {
    pub name: String,
    pub populations: Vec<Population>,
    pub interactions: Vec<InteractionSpec>,
}

impl DomainModel {
    pub fn population(&self, id: &str) -> Option<&Population> {
        self.populations.iter().find(|p| p.id == id)
    }
}

/// Biotic populations that photosynthesize without moving are density pools;
/// other biotic populations are mobile agents; abiotic ones are substance
/// pools.
pub fn role_for(properties: &ComponentProperties) -> Role {
    match properties {
        ComponentProperties::Biotic(p) if p.photosynthesis_rate > 0.0 && p.move_velocity == 0.0 => Role::DensityPool,
        ComponentProperties::Biotic(_) => Role::MobileAgent,
        ComponentProperties::Abiotic(_) => Role::SubstancePool,
    }
}

pub fn build_domain_model(model: &ConceptualModel) -> Result<DomainModel, CompileError> {
    let report = validate_model(model);
    if !report.is_compilable() {
        return Err(CompileError::Invalid(report));
    }
    let mut populations = Vec::with_capacity(model.components.len());
    for c in &model.components {
        let (names, values): (&[&str], Vec<f64>) = match &c.properties {
            ComponentProperties::Biotic(p) => (&BioticProperties::FIELD_NAMES, p.values().to_vec()),
            ComponentProperties::Abiotic(p) => (
                &AbioticProperties::FIELD_NAMES,
                vec![p.amount, p.minimum_amount, p.growth_rate],
            ),
        };
        if let Some((field, _)) = names.iter().zip(&values).find(|(_, v)| !v.is_finite()) {
            return Err(CompileError::UnresolvedProperties {
                component: c.id.clone(),
                field: field.to_string(),
            });
        }
        let properties = match &c.properties {
            ComponentProperties::Biotic(p) => ResolvedProperties::Biotic(p.clone()),
            ComponentProperties::Abiotic(p) => ResolvedProperties::Abiotic(p.clone()),
        };
        populations.push(Population {
            id: c.id.clone(),
            label: c.label.clone(),
            role: role_for(&c.properties),
            properties,
        });
    }
    let interactions = model
        .relationships
        .iter()
        .map(|r| InteractionSpec {
            id: r.id.clone(),
            source: r.source.clone(),
            target: r.target.clone(),
            interaction: r.interaction.clone(),
        })
        .collect();
    Ok(DomainModel {
        name: model.name.clone(),
        populations,
        interactions,
    })
}

/// Validates, builds the domain model and lowers it in one call.
pub fn compile_model(model: &ConceptualModel) -> Result<SimulationProgram, CompileError> {
    Ok(lower_to_ir(&build_domain_model(model)?))
}
