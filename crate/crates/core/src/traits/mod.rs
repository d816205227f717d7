//! Species lookup and derivation of biotic parameters from trait records.
//!
//! Each parameter is resolved by the first method that yields a usable value:
//! the arithmetic mean of matching trait records (after unit normalisation),
//! an estimate from taxonomic ancestry and other traits, or the shipped
//! default. Every step is written to a [`DerivationReport`] whose formulas can
//! be re-evaluated from the cited inputs.

mod backend;
mod live;
mod units;

use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::format_number;
use crate::model::{BioticProperties, DEFAULTS};

pub use backend::{backend_from_env, backend_from_spec, FixtureBackend, TraitBackend, TRAIT_BACKEND_ENV};
pub use live::LiveBackend;
pub use units::{dimension_of, is_known_unit, normalize_unit, Dimension, UnsupportedUnit, DAYS_PER_MONTH};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonMatch {
    pub taxon_id: String,
    pub canonical_name: String,
    pub common_names: Vec<String>,
    /// Root to leaf.
    pub ancestry: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitRecord {
    pub taxon_id: String,
    pub predicate: String,
    pub value: f64,
    pub unit: String,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraitError {
    #[error("search query is empty")]
    EmptyQuery,
    #[error("unknown taxon `{0}`")]
    UnknownTaxon(String),
    #[error("trait backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("invalid fixture {path}: {message}")]
    InvalidFixture { path: String, message: String },
    #[error("invalid trait backend configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Direct,
    AncestryEstimate,
    Default,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivationEntry {
    pub parameter: String,
    pub method: Method,
    pub inputs: Vec<TraitRecord>,
    /// Arithmetic over literal numbers (`mean(..)`, `round(..)`, `*`, `/`)
    /// that evaluates to `value`.
    pub formula: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivationReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxon_id: Option<String>,
    pub entries: Vec<DerivationEntry>,
    /// Records that matched no parameter or carried an incompatible unit.
    pub unused_records: Vec<TraitRecord>,
}

impl DerivationReport {
    pub fn entry(&self, parameter: &str) -> Option<&DerivationEntry> {
        self.entries.iter().find(|e| e.parameter == parameter)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssimilationClass {
    efficiency: f64,
    taxa: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssimilationTable {
    carnivore_like: AssimilationClass,
    herbivore_like: AssimilationClass,
    default: f64,
}

/// Carbon fraction of body mass by ancestry class.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct CarbonEstimationTable {
    pub Mammalia: f64,
    pub Reptilia: f64,
    pub Default: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimationData {
    version: u32,
    carbon_fraction: CarbonEstimationTable,
    joules_per_kg_carbon: f64,
    assimilation: AssimilationTable,
}

static ESTIMATION: LazyLock<EstimationData> = LazyLock::new(|| {
    let data: EstimationData = serde_json::from_str(include_str!("../../data/estimation.v1.json"))
        .expect("bundled estimation table is well-formed");
    assert_eq!(data.version, 1);
    data
});

pub fn carbon_estimation_table() -> &'static CarbonEstimationTable {
    &ESTIMATION.carbon_fraction
}

/// Energy released by respiring one kg of carbon.
pub fn joules_per_kg_carbon() -> f64 {
    ESTIMATION.joules_per_kg_carbon
}

fn carbon_fraction(ancestry: &[String]) -> f64 {
    let table = carbon_estimation_table();
    for name in ancestry {
        if name.eq_ignore_ascii_case("Mammalia") {
            return table.Mammalia;
        }
        if name.eq_ignore_ascii_case("Reptilia") {
            return table.Reptilia;
        }
    }
    table.Default
}

/// Carbon biomass from body mass: the fraction for the first Mammalia or
/// Reptilia ancestor, otherwise the default fraction.
pub fn estimate_carbon_biomass(body_mass: f64, ancestry: &[String]) -> f64 {
    carbon_fraction(ancestry) * body_mass
}

/// Assimilation efficiency for the most specific ancestor that falls in a
/// feeding class.
fn assimilation_class(ancestry: &[String]) -> Option<f64> {
    let table = &ESTIMATION.assimilation;
    ancestry.iter().rev().find_map(|name| {
        [&table.carnivore_like, &table.herbivore_like]
            .into_iter()
            .find(|class| class.taxa.iter().any(|t| t.eq_ignore_ascii_case(name)))
            .map(|class| class.efficiency)
    })
}

#[derive(Clone, Copy)]
struct ParamSpec {
    field: &'static str,
    predicates: &'static [&'static str],
    target_unit: &'static str,
    whole: bool,
}

const SPECS: [ParamSpec; 13] = [
    ParamSpec { field: "lifespan", predicates: &["life span", "total life span"], target_unit: "months", whole: false },
    ParamSpec {
        field: "reproductive_maturity",
        predicates: &[
            "age at first birth",
            "age at first reproduction",
            "age at maturity",
            "onset of fertility",
            "egg laying begins",
        ],
        target_unit: "months",
        whole: false,
    },
    ParamSpec { field: "reproductive_interval", predicates: &["inter-birth interval"], target_unit: "months", whole: false },
    ParamSpec { field: "offspring_count", predicates: &["offspring", "litters per year"], target_unit: "count", whole: true },
    ParamSpec { field: "starting_population", predicates: &[], target_unit: "count", whole: true },
    ParamSpec { field: "minimum_population", predicates: &[], target_unit: "count", whole: true },
    ParamSpec { field: "body_mass", predicates: &["body mass"], target_unit: "kg", whole: false },
    ParamSpec { field: "carbon_biomass", predicates: &["carbon biomass"], target_unit: "kg", whole: false },
    ParamSpec { field: "respiratory_rate", predicates: &["respiratory rate"], target_unit: "kg/month", whole: false },
    ParamSpec {
        field: "photosynthesis_rate",
        predicates: &["photosynthetic rate"],
        target_unit: "kg/m2/month",
        whole: false,
    },
    ParamSpec { field: "assimilation_efficiency", predicates: &[], target_unit: "count", whole: false },
    ParamSpec { field: "move_direction", predicates: &[], target_unit: "count", whole: false },
    ParamSpec { field: "move_velocity", predicates: &[], target_unit: "count", whole: false },
];

const BMR_PREDICATE: &str = "basal metabolic rate";
const CARBON_FIXATION_PREDICATE: &str = "net carbon fixation rate";

fn predicate_matches(record: &TraitRecord, names: &[&str]) -> bool {
    let p = record.predicate.trim().to_lowercase();
    names.iter().any(|n| *n == p)
}

/// Mean of the records for `predicates` after conversion to `target`.
/// Returns the used records, their converted values, and the mean.
fn mean_of(records: &[TraitRecord], predicates: &[&str], target: &str) -> Option<(Vec<TraitRecord>, Vec<f64>, f64)> {
    let mut used = Vec::new();
    let mut values = Vec::new();
    for r in records.iter().filter(|r| predicate_matches(r, predicates)) {
        if let Ok(v) = normalize_unit(r.value, &r.unit, target) {
            if v.is_finite() {
                used.push(r.clone());
                values.push(v);
            }
        }
    }
    if values.is_empty() {
        return None;
    }
    let mean = exact_sum(&values) / values.len() as f64;
    Some((used, values, mean))
}

/// Correctly rounded sum (Shewchuk partials). Order-independent, so a mean
/// over duplicated records is bit-identical to the mean over the originals.
fn exact_sum(values: &[f64]) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for &v in values {
        let mut x = v;
        let mut kept = 0;
        for i in 0..partials.len() {
            let mut y = partials[i];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }
    // Round the partials (largest last) to a single double, with the
    // half-way correction.
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

fn mean_formula(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format_number(*v)).collect();
    format!("mean({})", parts.join(", "))
}

fn within_bounds(field: &str, value: f64) -> bool {
    if !value.is_finite() {
        return false;
    }
    match field {
        "lifespan" | "reproductive_interval" | "body_mass" | "carbon_biomass" => value > 0.0,
        "assimilation_efficiency" => (0.0..=1.0).contains(&value),
        "move_direction" => (0.0..360.0).contains(&value),
        _ => value >= 0.0,
    }
}

struct Builder<'a> {
    records: &'a [TraitRecord],
    entries: Vec<DerivationEntry>,
    used: Vec<bool>,
}

impl Builder<'_> {
    fn mark_used(&mut self, inputs: &[TraitRecord]) {
        for (i, r) in self.records.iter().enumerate() {
            if inputs.contains(r) {
                self.used[i] = true;
            }
        }
    }

    fn push(&mut self, field: &str, method: Method, inputs: Vec<TraitRecord>, formula: String, value: f64) -> f64 {
        self.mark_used(&inputs);
        self.entries.push(DerivationEntry {
            parameter: field.to_string(),
            method,
            inputs,
            formula,
            value,
        });
        value
    }

    fn direct(&mut self, spec: &ParamSpec) -> Option<f64> {
        let (used, values, mean) = mean_of(self.records, spec.predicates, spec.target_unit)?;
        let (value, formula) = if spec.whole {
            (mean.round(), format!("round({})", mean_formula(&values)))
        } else {
            (mean, mean_formula(&values))
        };
        if !within_bounds(spec.field, value) {
            return None;
        }
        Some(self.push(spec.field, Method::Direct, used, formula, value))
    }

    fn default(&mut self, field: &str, defaults: &BioticProperties) -> f64 {
        let value = defaults.get(field).expect("known field");
        self.push(field, Method::Default, Vec::new(), format_number(value), value)
    }
}

/// Derives all thirteen biotic parameters. Always total: parameters without
/// usable evidence fall back to `defaults`.
pub fn derive_parameters(
    records: &[TraitRecord],
    ancestry: &[String],
    defaults: &BioticProperties,
) -> (BioticProperties, DerivationReport) {
    let mut b = Builder {
        records,
        entries: Vec::new(),
        used: vec![false; records.len()],
    };
    let mut props = defaults.clone();

    for spec in SPECS {
        let value = match spec.field {
            "carbon_biomass" => b.direct(&spec).unwrap_or_else(|| {
                let body_entry = b.entries.iter().find(|e| e.parameter == "body_mass").cloned();
                let body = props.body_mass;
                let body_is_direct = matches!(&body_entry, Some(e) if e.method == Method::Direct);
                if ancestry.is_empty() && !body_is_direct {
                    return b.default(spec.field, defaults);
                }
                let fraction = carbon_fraction(ancestry);
                let value = fraction * body;
                let inputs = body_entry.map(|e| e.inputs).unwrap_or_default();
                let method = if ancestry.is_empty() { Method::Default } else { Method::AncestryEstimate };
                let formula = format!("{} * {}", format_number(fraction), format_number(body));
                b.push(spec.field, method, inputs, formula, value)
            }),
            "respiratory_rate" => b.direct(&spec).unwrap_or_else(|| {
                respiration_from_bmr(&mut b, props.body_mass).unwrap_or_else(|| b.default(spec.field, defaults))
            }),
            "photosynthesis_rate" => b.direct(&spec).unwrap_or_else(|| {
                match mean_of(records, &[CARBON_FIXATION_PREDICATE], "kg/m2/month") {
                    Some((used, values, mean)) if within_bounds(spec.field, mean) => {
                        b.push(spec.field, Method::AncestryEstimate, used, mean_formula(&values), mean)
                    }
                    _ => b.default(spec.field, defaults),
                }
            }),
            "assimilation_efficiency" => match assimilation_class(ancestry) {
                Some(eff) => b.push(spec.field, Method::AncestryEstimate, Vec::new(), format_number(eff), eff),
                None if !ancestry.is_empty() => {
                    let eff = ESTIMATION.assimilation.default;
                    b.push(spec.field, Method::AncestryEstimate, Vec::new(), format_number(eff), eff)
                }
                None => b.default(spec.field, defaults),
            },
            _ if spec.predicates.is_empty() => b.default(spec.field, defaults),
            _ => b.direct(&spec).unwrap_or_else(|| b.default(spec.field, defaults)),
        };
        *props.field_mut(spec.field).expect("known field") = value;
    }

    if props.reproductive_maturity >= props.lifespan {
        let value = props.lifespan * 0.5;
        let formula = format!("{} * 0.5", format_number(props.lifespan));
        let entry = b
            .entries
            .iter_mut()
            .find(|e| e.parameter == "reproductive_maturity")
            .expect("entry exists");
        *entry = DerivationEntry {
            parameter: "reproductive_maturity".into(),
            method: Method::Default,
            inputs: Vec::new(),
            formula,
            value,
        };
        props.reproductive_maturity = value;
    }

    let unused_records = records
        .iter()
        .zip(&b.used)
        .filter(|(_, used)| !**used)
        .map(|(r, _)| r.clone())
        .collect();
    let taxon_id = records.first().map(|r| r.taxon_id.clone());
    (
        props,
        DerivationReport {
            taxon_id,
            entries: b.entries,
            unused_records,
        },
    )
}

/// Respiration estimated from basal metabolic rate: energy per month divided
/// by the energy content of a kg of carbon. Mass-specific rates are scaled by
/// body mass first.
fn respiration_from_bmr(b: &mut Builder<'_>, body_mass: f64) -> Option<f64> {
    let joules = joules_per_kg_carbon();
    if let Some((used, values, mean)) = mean_of(b.records, &[BMR_PREDICATE], "J/month") {
        let value = mean / joules;
        if within_bounds("respiratory_rate", value) {
            let formula = format!("{} / {}", mean_formula(&values), format_number(joules));
            return Some(b.push("respiratory_rate", Method::AncestryEstimate, used, formula, value));
        }
    }
    if let Some((used, values, mean)) = mean_of(b.records, &[BMR_PREDICATE], "J/month/kg") {
        let value = mean * body_mass / joules;
        if within_bounds("respiratory_rate", value) {
            let mut inputs = used;
            if let Some(body) = b.entries.iter().find(|e| e.parameter == "body_mass") {
                inputs.extend(body.inputs.iter().cloned());
            }
            let formula = format!(
                "{} * {} / {}",
                mean_formula(&values),
                format_number(body_mass),
                format_number(joules)
            );
            return Some(b.push("respiratory_rate", Method::AncestryEstimate, inputs, formula, value));
        }
    }
    None
}

/// Looks a taxon up in `backend` and derives its parameters against the
/// shipped defaults.
pub fn derive_for_taxon(
    backend: &dyn TraitBackend,
    taxon_id: &str,
) -> Result<(BioticProperties, DerivationReport), TraitError> {
    let taxon = backend.taxon(taxon_id)?;
    let records = backend.fetch_traits(taxon_id)?;
    let (props, mut report) = derive_parameters(&records, &taxon.ancestry, &DEFAULTS.biotic);
    report.taxon_id = Some(taxon.taxon_id);
    Ok((props, report))
}

fn normalize_name(s: &str) -> String {
    s.to_lowercase()
        .replace('-', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Ranks candidates: exact scientific name, exact common name, prefix,
/// substring. Non-matching candidates are dropped; ties break on canonical
/// name then id.
pub fn rank_matches(query: &str, candidates: &[TaxonMatch]) -> Result<Vec<TaxonMatch>, TraitError> {
    let q = normalize_name(query);
    if q.is_empty() {
        return Err(TraitError::EmptyQuery);
    }
    let mut ranked: Vec<(u8, &TaxonMatch)> = candidates
        .iter()
        .filter_map(|t| {
            let sci = normalize_name(&t.canonical_name);
            let commons: Vec<String> = t.common_names.iter().map(|c| normalize_name(c)).collect();
            let names = std::iter::once(&sci).chain(commons.iter());
            let rank = if sci == q {
                0
            } else if commons.contains(&q) {
                1
            } else if names.clone().any(|n| n.starts_with(&q)) {
                2
            } else if names.clone().any(|n| n.contains(&q)) {
                3
            } else {
                return None;
            };
            Some((rank, t))
        })
        .collect();
    ranked.sort_by(|a, b| {
        (a.0, &a.1.canonical_name, &a.1.taxon_id).cmp(&(b.0, &b.1.canonical_name, &b.1.taxon_id))
    });
    Ok(ranked.into_iter().map(|(_, t)| t.clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(predicate: &str, value: f64, unit: &str) -> TraitRecord {
        TraitRecord {
            taxon_id: "t".into(),
            predicate: predicate.into(),
            value,
            unit: unit.into(),
            source: "test".into(),
        }
    }

    fn anc(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn carbon_constants() {
        assert_eq!(estimate_carbon_biomass(10.0, &anc(&["Animalia", "Chordata", "Mammalia"])), 1.6);
        assert_eq!(estimate_carbon_biomass(10.0, &anc(&["Animalia", "Chordata", "Reptilia"])), 1.22);
        assert_eq!(estimate_carbon_biomass(10.0, &anc(&["Plantae"])), 1.0);
        let t = carbon_estimation_table();
        for c in [t.Mammalia, t.Reptilia, t.Default] {
            assert!(c > 0.0 && c < 1.0);
        }
    }

    #[test]
    fn lifespan_records_are_averaged() {
        let records = [rec("life span", 10.0, "years"), rec("total life span", 14.0, "years")];
        let (p, r) = derive_parameters(&records, &[], &DEFAULTS.biotic);
        assert_eq!(p.lifespan, 144.0);
        let e = r.entry("lifespan").unwrap();
        assert_eq!(e.method, Method::Direct);
        assert_eq!(e.inputs.len(), 2);
        assert_eq!(e.formula, "mean(120, 168)");
    }

    #[test]
    fn carbon_from_mammal_body_mass() {
        let records = [rec("body mass", 10.0, "kg")];
        let (p, r) = derive_parameters(&records, &anc(&["Animalia", "Mammalia", "Rodentia"]), &DEFAULTS.biotic);
        assert_eq!(p.carbon_biomass, 1.6);
        assert_eq!(r.entry("carbon_biomass").unwrap().method, Method::AncestryEstimate);
        assert_eq!(p.assimilation_efficiency, 0.4);
    }

    #[test]
    fn no_evidence_gives_defaults() {
        let (p, r) = derive_parameters(&[], &[], &DEFAULTS.biotic);
        assert_eq!(p, DEFAULTS.biotic);
        assert_eq!(r.entries.len(), 13);
        assert!(r.entries.iter().all(|e| e.method == Method::Default));
    }

    #[test]
    fn maturity_is_repaired_when_not_below_lifespan() {
        let records = [rec("life span", 1.0, "years"), rec("age at maturity", 2.0, "years")];
        let (p, r) = derive_parameters(&records, &[], &DEFAULTS.biotic);
        assert_eq!(p.lifespan, 12.0);
        assert_eq!(p.reproductive_maturity, 6.0);
        assert_eq!(r.entry("reproductive_maturity").unwrap().method, Method::Default);
    }

    #[test]
    fn respiration_from_basal_metabolic_rate() {
        let records = [rec("basal metabolic rate", 2.0, "W")];
        let (p, r) = derive_parameters(&records, &anc(&["Aves"]), &DEFAULTS.biotic);
        let expected = 2.0 * (30.44 * 86_400.0) / 1.0 / 39_000_000.0;
        assert_eq!(p.respiratory_rate, expected);
        assert_eq!(r.entry("respiratory_rate").unwrap().method, Method::AncestryEstimate);
    }

    #[test]
    fn mismatched_units_are_reported_unused() {
        let records = [rec("life span", 3.0, "kg"), rec("wing span", 1.0, "kg")];
        let (p, r) = derive_parameters(&records, &[], &DEFAULTS.biotic);
        assert_eq!(p.lifespan, DEFAULTS.biotic.lifespan);
        assert_eq!(r.unused_records.len(), 2);
    }

    #[test]
    fn offspring_mean_is_rounded() {
        let records = [rec("offspring", 2.0, "count"), rec("offspring", 3.0, "count")];
        let (p, r) = derive_parameters(&records, &[], &DEFAULTS.biotic);
        assert_eq!(p.offspring_count, 3.0);
        assert_eq!(r.entry("offspring_count").unwrap().formula, "round(mean(2, 3))");
    }

    #[test]
    fn ranking_order() {
        let mk = |id: &str, sci: &str, common: &[&str]| TaxonMatch {
            taxon_id: id.into(),
            canonical_name: sci.into(),
            common_names: common.iter().map(|s| s.to_string()).collect(),
            ancestry: vec!["x".into()],
        };
        let c = [
            mk("3", "Hawkia minor", &[]),
            mk("1", "Buteo jamaicensis", &["Red-tailed hawk"]),
            mk("2", "Accipiter hawk", &["sharp shinned hawk"]),
        ];
        let r = rank_matches("red tailed hawk", &c).unwrap();
        assert_eq!(r[0].taxon_id, "1");
        let r = rank_matches("hawk", &c).unwrap();
        let ids: Vec<_> = r.iter().map(|t| t.taxon_id.as_str()).collect();
        assert_eq!(ids, ["3", "2", "1"]);
        assert_eq!(rank_matches("  ", &c), Err(TraitError::EmptyQuery));
        assert!(rank_matches("zzzz", &c).unwrap().is_empty());
    }
}
