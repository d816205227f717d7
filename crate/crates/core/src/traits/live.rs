//! Opt-in HTTP client for the Encyclopedia of Life search and Cypher
//! endpoints. Responses are parsed by pure functions so they can be tested
//! against canned payloads.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use serde_json::Value;

use super::{rank_matches, TaxonMatch, TraitBackend, TraitError, TraitRecord};

type Slot<T> = Arc<OnceLock<Result<T, TraitError>>>;

pub struct LiveBackend {
    base: String,
    agent: ureq::Agent,
    taxa: Mutex<HashMap<String, Slot<TaxonMatch>>>,
    traits: Mutex<HashMap<String, Slot<Vec<TraitRecord>>>>,
}

impl std::fmt::Debug for LiveBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveBackend").field("base", &self.base).finish()
    }
}

/// Returns the shared slot for `key`; the first caller fills it and any
/// concurrent caller blocks on the same cell instead of issuing a second
/// request.
fn coalesce<T: Clone>(
    map: &Mutex<HashMap<String, Slot<T>>>,
    key: &str,
    fetch: impl FnOnce() -> Result<T, TraitError>,
) -> Result<T, TraitError> {
    let slot = {
        let mut map = map.lock().unwrap_or_else(|e| e.into_inner());
        map.entry(key.to_string()).or_default().clone()
    };
    let result = slot.get_or_init(fetch).clone();
    if matches!(result, Err(TraitError::BackendUnavailable(_))) {
        // Transport failures are not cached.
        map.lock().unwrap_or_else(|e| e.into_inner()).remove(key);
    }
    result
}

fn page_id(taxon_id: &str) -> Result<u64, TraitError> {
    taxon_id
        .parse()
        .map_err(|_| TraitError::UnknownTaxon(taxon_id.to_string()))
}

impl LiveBackend {
    pub fn new(base_url: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(20)))
            .build()
            .into();
        LiveBackend {
            base: base_url.trim_end_matches('/').to_string(),
            agent,
            taxa: Mutex::default(),
            traits: Mutex::default(),
        }
    }

    fn get_json(&self, path: &str, query: &[(&str, &str)]) -> Result<Value, TraitError> {
        let url = format!("{}{}", self.base, path);
        let mut req = self.agent.get(&url);
        for (k, v) in query {
            req = req.query(*k, *v);
        }
        let mut resp = req.call().map_err(|e| TraitError::BackendUnavailable(e.to_string()))?;
        resp.body_mut()
            .read_json()
            .map_err(|e| TraitError::BackendUnavailable(e.to_string()))
    }

    fn cypher(&self, query: &str) -> Result<Value, TraitError> {
        self.get_json("/service/cypher", &[("query", query)])
    }
}

pub(crate) fn traits_query(page: u64) -> String {
    format!(
        "MATCH (p:Page {{page_id: {page}}})-[:trait]->(t:Trait)-[:predicate]->(pred:Term) \
         OPTIONAL MATCH (t)-[:units_term]->(u:Term) \
         OPTIONAL MATCH (t)-[:supplier]->(r:Resource) \
         RETURN pred.name, t.normal_measurement, u.name, r.name LIMIT 2000"
    )
}

pub(crate) fn ancestry_query(page: u64) -> String {
    format!(
        "MATCH (p:Page {{page_id: {page}}}) \
         OPTIONAL MATCH path = (p)-[:parent*]->(a:Page) \
         RETURN p.canonical, a.canonical, length(path) ORDER BY length(path) DESC"
    )
}

fn as_number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
    .filter(|x: &f64| x.is_finite())
}

/// Search endpoint payload to candidate taxa (ancestry left empty).
pub fn parse_search_response(body: &Value) -> Vec<TaxonMatch> {
    let Some(results) = body.get("results").and_then(Value::as_array) else {
        return Vec::new();
    };
    results
        .iter()
        .filter_map(|r| {
            let id = match r.get("id")? {
                Value::Number(n) => n.to_string(),
                Value::String(s) => s.clone(),
                _ => return None,
            };
            let title = r.get("title")?.as_str()?.to_string();
            let common = r
                .get("content")
                .and_then(Value::as_str)
                .map(|c| c.split(';').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
                .unwrap_or_default();
            Some(TaxonMatch {
                taxon_id: id,
                canonical_name: title,
                common_names: common,
                ancestry: Vec::new(),
            })
        })
        .collect()
}

/// Cypher rows `[predicate, value, unit, source]` to trait records. Rows
/// without a numeric value are dropped.
pub fn parse_trait_rows(taxon_id: &str, body: &Value) -> Vec<TraitRecord> {
    let Some(rows) = body.get("data").and_then(Value::as_array) else {
        return Vec::new();
    };
    let mut records: Vec<TraitRecord> = rows
        .iter()
        .filter_map(|row| {
            let row = row.as_array()?;
            let predicate = row.first()?.as_str()?.to_string();
            let value = as_number(row.get(1)?)?;
            let unit = row.get(2).and_then(Value::as_str).unwrap_or("count").to_string();
            let source = row.get(3).and_then(Value::as_str).unwrap_or("EOL").to_string();
            Some(TraitRecord {
                taxon_id: taxon_id.to_string(),
                predicate,
                value,
                unit,
                source,
            })
        })
        .collect();
    records.sort_by(|a, b| (&a.predicate, &a.source).cmp(&(&b.predicate, &b.source)));
    records
}

/// Cypher rows `[canonical, ancestor, depth]` ordered root first.
pub fn parse_ancestry_rows(taxon_id: &str, body: &Value) -> Option<TaxonMatch> {
    let rows = body.get("data")?.as_array()?;
    let canonical = rows.first()?.as_array()?.first()?.as_str()?.to_string();
    let mut ancestry: Vec<String> = rows
        .iter()
        .filter_map(|r| r.as_array()?.get(1)?.as_str().map(str::to_string))
        .collect();
    ancestry.push(canonical.clone());
    Some(TaxonMatch {
        taxon_id: taxon_id.to_string(),
        canonical_name: canonical,
        common_names: Vec::new(),
        ancestry,
    })
}

impl TraitBackend for LiveBackend {
    fn search_taxa(&self, query: &str) -> Result<Vec<TaxonMatch>, TraitError> {
        if query.trim().is_empty() {
            return Err(TraitError::EmptyQuery);
        }
        let body = self.get_json("/api/search/1.0.json", &[("q", query.trim())])?;
        let candidates = parse_search_response(&body);
        let ranked = rank_matches(query, &candidates)?;
        // The remote search is fuzzier than the local ranking; keep its
        // extra hits after the ranked ones.
        let mut out = ranked.clone();
        out.extend(candidates.into_iter().filter(|c| !ranked.contains(c)));
        Ok(out)
    }

    fn taxon(&self, taxon_id: &str) -> Result<TaxonMatch, TraitError> {
        let page = page_id(taxon_id)?;
        coalesce(&self.taxa, taxon_id, || {
            let body = self.cypher(&ancestry_query(page))?;
            parse_ancestry_rows(taxon_id, &body).ok_or_else(|| TraitError::UnknownTaxon(taxon_id.to_string()))
        })
    }

    fn fetch_traits(&self, taxon_id: &str) -> Result<Vec<TraitRecord>, TraitError> {
        let page = page_id(taxon_id)?;
        coalesce(&self.traits, taxon_id, || {
            let body = self.cypher(&traits_query(page))?;
            Ok(parse_trait_rows(taxon_id, &body))
        })
    }
}
