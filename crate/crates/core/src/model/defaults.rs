use std::sync::LazyLock;

use serde::Deserialize;

use super::{
    AbioticProperties, AffectsParams, BioticProperties, ComponentKind, ComponentProperties,
    ConsumesParams, DestroysParams, Interaction, OnDeathParams, ProducesParams, RelationshipKind,
};

/// Shipped default values, loaded from `data/default_properties.v1.json`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefaultTable {
    pub version: u32,
    pub biotic: BioticProperties,
    pub abiotic: AbioticProperties,
    pub relationship_params: RelationshipDefaults,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct RelationshipDefaults {
    pub Consumes: ConsumesParams,
    pub Destroys: DestroysParams,
    pub Produces: ProducesParams,
    pub Affects: AffectsParams,
    pub BecomesOnDeath: OnDeathParams,
}

pub static DEFAULTS: LazyLock<DefaultTable> = LazyLock::new(|| {
    serde_json::from_str(include_str!("../../data/default_properties.v1.json"))
        .expect("bundled default property table is well-formed")
});

pub fn default_properties(kind: ComponentKind) -> ComponentProperties {
    match kind {
        ComponentKind::Biotic => ComponentProperties::Biotic(DEFAULTS.biotic.clone()),
        ComponentKind::Abiotic => ComponentProperties::Abiotic(DEFAULTS.abiotic.clone()),
    }
}

pub fn default_relationship_params(kind: RelationshipKind) -> Interaction {
    let d = &DEFAULTS.relationship_params;
    match kind {
        RelationshipKind::Consumes => Interaction::Consumes(d.Consumes.clone()),
        RelationshipKind::Destroys => Interaction::Destroys(d.Destroys.clone()),
        RelationshipKind::Produces => Interaction::Produces(d.Produces.clone()),
        RelationshipKind::Affects => Interaction::Affects(d.Affects.clone()),
        RelationshipKind::BecomesOnDeath => Interaction::BecomesOnDeath(d.BecomesOnDeath.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_model, Component, ConceptualModel};

    #[test]
    fn abiotic_defaults_match_table() {
        let ComponentProperties::Abiotic(a) = default_properties(ComponentKind::Abiotic) else {
            panic!("wrong variant");
        };
        assert_eq!((a.amount, a.minimum_amount, a.growth_rate), (100.0, 0.0, 0.0));
    }

    #[test]
    fn biotic_default_assimilation_is_fallback_constant() {
        let ComponentProperties::Biotic(b) = default_properties(ComponentKind::Biotic) else {
            panic!("wrong variant");
        };
        assert_eq!(b.assimilation_efficiency, 0.1);
        assert_eq!(DEFAULTS.version, 1);
    }

    #[test]
    fn defaults_validate_on_fresh_components() {
        let model = ConceptualModel {
            id: "m".into(),
            name: "defaults".into(),
            components: [ComponentKind::Biotic, ComponentKind::Abiotic]
                .into_iter()
                .enumerate()
                .map(|(i, k)| Component {
                    id: format!("c{i}"),
                    label: format!("c{i}"),
                    taxon_ref: None,
                    properties: default_properties(k),
                })
                .collect(),
            ..Default::default()
        };
        let report = validate_model(&model);
        assert!(report.errors.is_empty(), "{:?}", report.errors);
    }

    #[test]
    fn relationship_defaults_carry_their_kind() {
        for kind in RelationshipKind::ALL {
            assert_eq!(default_relationship_params(kind).kind(), kind);
        }
    }
}
