use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use super::{rank_matches, LiveBackend, TaxonMatch, TraitError, TraitRecord};

pub const TRAIT_BACKEND_ENV: &str = "ECOFORGE_TRAIT_BACKEND";

/// Source of taxa and trait records.
pub trait TraitBackend: Send + Sync {
    fn search_taxa(&self, query: &str) -> Result<Vec<TaxonMatch>, TraitError>;
    fn taxon(&self, taxon_id: &str) -> Result<TaxonMatch, TraitError>;
    /// All records for the taxon, ordered by (predicate, source).
    fn fetch_traits(&self, taxon_id: &str) -> Result<Vec<TraitRecord>, TraitError>;
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureRecord {
    predicate: String,
    value: f64,
    unit: String,
    source: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureTaxon {
    taxon_id: String,
    canonical_name: String,
    common_names: Vec<String>,
    ancestry: Vec<String>,
    records: Vec<FixtureRecord>,
}

const BUNDLED: &[(&str, &str)] = &[
    ("buteo-jamaicensis.json", include_str!("../../fixtures/taxa/buteo-jamaicensis.json")),
    ("carpinus-caroliniana.json", include_str!("../../fixtures/taxa/carpinus-caroliniana.json")),
    ("megacopta-cribraria.json", include_str!("../../fixtures/taxa/megacopta-cribraria.json")),
    ("pueraria-montana.json", include_str!("../../fixtures/taxa/pueraria-montana.json")),
    ("quercus-alba.json", include_str!("../../fixtures/taxa/quercus-alba.json")),
    ("sciurus-carolinensis.json", include_str!("../../fixtures/taxa/sciurus-carolinensis.json")),
    ("terrapene-carolina.json", include_str!("../../fixtures/taxa/terrapene-carolina.json")),
];

/// Offline backend over a set of taxon fixture files.
#[derive(Debug, Clone, Default)]
pub struct FixtureBackend {
    taxa: BTreeMap<String, (TaxonMatch, Vec<TraitRecord>)>,
}

impl FixtureBackend {
    /// The fixtures compiled into the binary.
    pub fn bundled() -> Self {
        let mut backend = FixtureBackend::default();
        for (name, text) in BUNDLED {
            backend.insert(name, text).expect("bundled taxon fixtures are well-formed");
        }
        backend
    }

    /// Loads every `*.json` file in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, TraitError> {
        let entries = std::fs::read_dir(dir).map_err(|e| TraitError::Config(format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut backend = FixtureBackend::default();
        for path in paths {
            let text = std::fs::read_to_string(&path).map_err(|e| TraitError::InvalidFixture {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            backend.insert(&path.display().to_string(), &text)?;
        }
        Ok(backend)
    }

    fn insert(&mut self, path: &str, text: &str) -> Result<(), TraitError> {
        let invalid = |message: String| TraitError::InvalidFixture {
            path: path.to_string(),
            message,
        };
        let t: FixtureTaxon = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        if t.ancestry.is_empty() {
            return Err(invalid("ancestry is empty".into()));
        }
        if let Some(r) = t.records.iter().find(|r| !r.value.is_finite()) {
            return Err(invalid(format!("non-finite value for `{}`", r.predicate)));
        }
        if let Some(r) = t.records.iter().find(|r| !super::is_known_unit(&r.unit)) {
            return Err(invalid(format!("unknown unit `{}` for `{}`", r.unit, r.predicate)));
        }
        if self.taxa.contains_key(&t.taxon_id) {
            return Err(invalid(format!("duplicate taxon id `{}`", t.taxon_id)));
        }
        let mut records: Vec<TraitRecord> = t
            .records
            .into_iter()
            .map(|r| TraitRecord {
                taxon_id: t.taxon_id.clone(),
                predicate: r.predicate,
                value: r.value,
                unit: r.unit,
                source: r.source,
            })
            .collect();
        records.sort_by(|a, b| (&a.predicate, &a.source).cmp(&(&b.predicate, &b.source)));
        let taxon = TaxonMatch {
            taxon_id: t.taxon_id.clone(),
            canonical_name: t.canonical_name,
            common_names: t.common_names,
            ancestry: t.ancestry,
        };
        self.taxa.insert(t.taxon_id, (taxon, records));
        Ok(())
    }

    pub fn taxon_ids(&self) -> impl Iterator<Item = &str> {
        self.taxa.keys().map(String::as_str)
    }
}

impl TraitBackend for FixtureBackend {
    fn search_taxa(&self, query: &str) -> Result<Vec<TaxonMatch>, TraitError> {
        let all: Vec<TaxonMatch> = self.taxa.values().map(|(t, _)| t.clone()).collect();
        rank_matches(query, &all)
    }

    fn taxon(&self, taxon_id: &str) -> Result<TaxonMatch, TraitError> {
        self.taxa
            .get(taxon_id)
            .map(|(t, _)| t.clone())
            .ok_or_else(|| TraitError::UnknownTaxon(taxon_id.to_string()))
    }

    fn fetch_traits(&self, taxon_id: &str) -> Result<Vec<TraitRecord>, TraitError> {
        self.taxa
            .get(taxon_id)
            .map(|(_, r)| r.clone())
            .ok_or_else(|| TraitError::UnknownTaxon(taxon_id.to_string()))
    }
}

/// Parses `fixtures:<dir>` or `live:<base-url>`.
pub fn backend_from_spec(spec: &str) -> Result<Arc<dyn TraitBackend>, TraitError> {
    if let Some(dir) = spec.strip_prefix("fixtures:") {
        if dir.is_empty() {
            return Ok(Arc::new(FixtureBackend::bundled()));
        }
        return Ok(Arc::new(FixtureBackend::from_dir(Path::new(dir))?));
    }
    if let Some(url) = spec.strip_prefix("live:") {
        if url.is_empty() {
            return Err(TraitError::Config("live backend needs a base url".into()));
        }
        return Ok(Arc::new(LiveBackend::new(url)));
    }
    Err(TraitError::Config(format!(
        "expected `fixtures:<dir>` or `live:<base-url>`, got `{spec}`"
    )))
}

/// Backend selected by `ECOFORGE_TRAIT_BACKEND`; the bundled fixtures when
/// unset.
pub fn backend_from_env() -> Result<Arc<dyn TraitBackend>, TraitError> {
    match std::env::var(TRAIT_BACKEND_ENV) {
        Ok(spec) if !spec.trim().is_empty() => backend_from_spec(spec.trim()),
        _ => Ok(Arc::new(FixtureBackend::bundled())),
    }
}
