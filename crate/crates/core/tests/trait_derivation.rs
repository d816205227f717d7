use ecoforge_core::model::{default_properties, validate_model, Component, ComponentKind, ComponentProperties, ConceptualModel};
use ecoforge_core::traits::{
    derive_for_taxon, derive_parameters, estimate_carbon_biomass, FixtureBackend, Method, TraitBackend, TraitRecord,
};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Signed, ToPrimitive, Zero};
use proptest::prelude::*;

fn defaults() -> ecoforge_core::model::BioticProperties {
    match default_properties(ComponentKind::Biotic) {
        ComponentProperties::Biotic(b) => b,
        ComponentProperties::Abiotic(_) => unreachable!(),
    }
}

fn record(predicate: &str, value: f64, unit: &str, source: &str) -> TraitRecord {
    TraitRecord {
        taxon_id: "t".into(),
        predicate: predicate.into(),
        value,
        unit: unit.into(),
        source: source.into(),
    }
}

/// Exact evaluator for derivation formulas: `mean(a, b, ..)`, `round(x)`,
/// products and quotients of literals.
struct Exact<'a> {
    s: &'a [u8],
    i: usize,
}

impl Exact<'_> {
    fn eval(formula: &str) -> BigRational {
        let mut p = Exact { s: formula.as_bytes(), i: 0 };
        let v = p.product();
        p.ws();
        assert_eq!(p.i, p.s.len(), "trailing input in `{formula}`");
        v
    }

    fn ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i] == b' ' {
            self.i += 1;
        }
    }

    fn eat(&mut self, lit: &str) -> bool {
        self.ws();
        if self.s[self.i..].starts_with(lit.as_bytes()) {
            self.i += lit.len();
            true
        } else {
            false
        }
    }

    fn product(&mut self) -> BigRational {
        let mut v = self.atom();
        loop {
            if self.eat("*") {
                v *= self.atom();
            } else if self.eat("/") {
                v /= self.atom();
            } else {
                return v;
            }
        }
    }

    fn atom(&mut self) -> BigRational {
        if self.eat("mean(") {
            let mut items = vec![self.product()];
            while self.eat(",") {
                items.push(self.product());
            }
            assert!(self.eat(")"));
            let n = BigRational::from_integer(BigInt::from(items.len()));
            items.into_iter().fold(BigRational::zero(), |a, b| a + b) / n
        } else if self.eat("round(") {
            let v = self.product();
            assert!(self.eat(")"));
            // Half away from zero, as f64::round.
            let half = BigRational::new(BigInt::one(), BigInt::from(2));
            if v.is_negative() { (v - half).ceil() } else { (v + half).floor() }
        } else {
            self.ws();
            let start = self.i;
            while self.i < self.s.len() && (self.s[self.i].is_ascii_digit() || b".eE+-".contains(&self.s[self.i])) {
                self.i += 1;
            }
            let text = std::str::from_utf8(&self.s[start..self.i]).unwrap();
            let x: f64 = text.parse().unwrap_or_else(|_| panic!("bad literal `{text}`"));
            BigRational::from_f64(x).unwrap()
        }
    }
}

fn close(value: f64, exact: &BigRational) -> bool {
    let e = exact.to_f64().unwrap();
    value == e || (value - e).abs() <= 1e-12 * e.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn carbon_constants_are_exact() {
    let a = |names: &[&str]| names.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    assert_eq!(estimate_carbon_biomass(10.0, &a(&["Animalia", "Chordata", "Mammalia"])), 1.6);
    assert_eq!(estimate_carbon_biomass(10.0, &a(&["Animalia", "Chordata", "Reptilia"])), 1.22);
    assert_eq!(estimate_carbon_biomass(10.0, &[]), 1.0);
}

#[test]
fn lifespan_mean_in_months() {
    let recs = [record("life span", 10.0, "years", "a"), record("life span", 14.0, "years", "b")];
    let (props, report) = derive_parameters(&recs, &[], &defaults());
    assert_eq!(props.lifespan, 144.0);
    let e = report.entry("lifespan").unwrap();
    assert_eq!(e.method, Method::Direct);
    assert_eq!(e.inputs.len(), 2);
}

#[test]
fn empty_records_give_the_default_set() {
    let (props, report) = derive_parameters(&[], &[], &defaults());
    assert_eq!(props, defaults());
    assert_eq!(report.entries.len(), 13);
    assert!(report.entries.iter().all(|e| e.method == Method::Default));
}

#[test]
fn every_bundled_taxon_derives_a_valid_component() {
    let backend = FixtureBackend::bundled();
    let hits = backend.search_taxa("a").unwrap();
    assert!(hits.len() >= 7);
    for t in hits {
        let (props, report) = derive_for_taxon(&backend, &t.taxon_id).unwrap();
        assert_eq!(report.entries.len(), 13, "{}", t.taxon_id);
        for e in &report.entries {
            assert!(close(e.value, &Exact::eval(&e.formula)), "{}: {} != {}", t.taxon_id, e.formula, e.value);
        }
        let model = ConceptualModel {
            id: "m".into(),
            name: "m".into(),
            components: vec![Component {
                id: "c".into(),
                label: t.canonical_name.clone(),
                taxon_ref: Some(t.taxon_id.clone()),
                properties: ComponentProperties::Biotic(props),
            }],
            ..Default::default()
        };
        assert!(validate_model(&model).errors.is_empty(), "{}", t.taxon_id);
    }
}

const PREDICATES: [(&str, &[&str]); 8] = [
    ("life span", &["years", "months", "days"]),
    ("age at first reproduction", &["years", "months", "weeks"]),
    ("inter-birth interval", &["days", "months"]),
    ("offspring", &["count"]),
    ("body mass", &["g", "kg", "mg"]),
    ("respiratory rate", &["kg/month", "g/day"]),
    ("basal metabolic rate", &["W", "J/month", "W/kg"]),
    ("photosynthetic rate", &["g/m2/day", "kg/m2/month"]),
];

fn arb_record() -> impl Strategy<Value = TraitRecord> {
    (0..PREDICATES.len(), 0usize..3, 0.001f64..500.0, "[a-c]")
        .prop_map(|(p, u, v, s)| {
            let (pred, units) = PREDICATES[p];
            record(pred, v, units[u % units.len()], &s)
        })
}

fn arb_ancestry() -> impl Strategy<Value = Vec<String>> {
    prop::sample::select(vec![
        vec![],
        vec!["Animalia", "Chordata", "Mammalia"],
        vec!["Animalia", "Chordata", "Reptilia"],
        vec!["Animalia", "Arthropoda", "Insecta"],
        vec!["Plantae", "Tracheophyta"],
    ])
    .prop_map(|v| v.into_iter().map(String::from).collect())
}

proptest! {
    #[test]
    fn duplicating_records_leaves_every_value_bit_identical(
        recs in prop::collection::vec(arb_record(), 0..12),
        ancestry in arb_ancestry(),
    ) {
        let (a, _) = derive_parameters(&recs, &ancestry, &defaults());
        let doubled: Vec<_> = recs.iter().chain(recs.iter()).cloned().collect();
        let (b, _) = derive_parameters(&doubled, &ancestry, &defaults());
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
        let mut reversed = recs.clone();
        reversed.reverse();
        let (c, _) = derive_parameters(&reversed, &ancestry, &defaults());
        prop_assert_eq!(a, c);
    }

    #[test]
    fn derivation_is_total_and_reports_faithfully(
        recs in prop::collection::vec(arb_record(), 0..12),
        ancestry in arb_ancestry(),
    ) {
        let (props, report) = derive_parameters(&recs, &ancestry, &defaults());
        prop_assert_eq!(report.entries.len(), 13);
        let values = props.values();
        prop_assert!(values.iter().all(|v| v.is_finite()));
        for e in &report.entries {
            prop_assert_eq!(Some(e.value), props.get(&e.parameter));
            let exact = Exact::eval(&e.formula);
            prop_assert!(close(e.value, &exact), "{} = {} but formula gives {}", e.parameter, e.value, exact);
            if e.method == Method::Default {
                prop_assert!(e.inputs.is_empty() || e.parameter == "carbon_biomass");
            }
            for i in &e.inputs {
                prop_assert!(recs.contains(i));
            }
        }
        for r in &report.unused_records {
            prop_assert!(report.entries.iter().all(|e| !e.inputs.contains(r)));
        }
        prop_assert!(props.reproductive_maturity < props.lifespan);
    }
}
