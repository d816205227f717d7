//! Acceptance suite: prints one `[PASS]` or `[FAIL]` line per criterion and
//! exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::time::{Duration, Instant};

use ecoforge_core::compiler::{breed_names, check_netlogo, compile_for_engine, compile_model, emit_netlogo, EngineProgram};
use ecoforge_core::engine::{csv_header, csv_row, run, Command, SimConfig, SimFrame, SimState, Status};
use ecoforge_core::model::{
    codes, default_properties, default_relationship_params, parse_document, parse_model, serialize_model, validate_model,
    BioticProperties, Component, ComponentKind, ComponentProperties, ConceptualModel, Relationship, RelationshipKind,
};
use ecoforge_core::ontology::{map_interaction, Sign};
use ecoforge_core::oracle::run_ir;
use ecoforge_core::traits::{derive_parameters, estimate_carbon_biomass, Method, TraitRecord};
use serde_json::{json, Value};

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn core_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core")
}

fn fixture_path(name: &str) -> PathBuf {
    core_dir().join(format!("fixtures/models/{name}.json"))
}

fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(fixture_path(name)).unwrap()
}

fn engine_program(name: &str) -> EngineProgram {
    compile_for_engine(&compile_model(&parse_model(&fixture(name)).unwrap()).unwrap())
}

fn cli(args: &[&str]) -> std::process::Output {
    Process::new(env!("CARGO_BIN_EXE_ecoforge")).args(args).output().unwrap()
}

fn carbon_constants() -> Outcome {
    let a = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let cases = [
        (a(&["Animalia", "Chordata", "Mammalia"]), 1.6),
        (a(&["Animalia", "Chordata", "Reptilia"]), 1.22),
        (a(&[]), 1.0),
    ];
    for (ancestry, expected) in &cases {
        let got = estimate_carbon_biomass(10.0, ancestry);
        ensure!(got == *expected, "{ancestry:?}: {got} != {expected}");
    }
    Ok("10 kg gives 1.6 / 1.22 / 1.0 exactly".into())
}

// The interaction column of the taxonomy table, row by row, as printed.
const ALIAS_TABLE: [(RelationshipKind, &[&str]); 4] = [
    (RelationshipKind::Consumes, &["eat", "get eaten by", "preys on", "get preyed on by"]),
    (
        RelationshipKind::Destroys,
        &["kill", "is killed by", "parasi-tize", "get parasitized by", "get infected by"],
    ),
    (
        RelationshipKind::Produces,
        &["visits flowers of", "flowers visited by", "pollinate", "get pollinated by", "spread", "get spread by."],
    ),
    (RelationshipKind::Affects, &["interacts with", "related to", "hosts", "get hosted by"]),
];

fn ontology_totality() -> Outcome {
    let mut mapped = 0;
    for (kind, names) in ALIAS_TABLE {
        for name in names {
            let signs: Vec<Option<Sign>> = match map_interaction(name, None) {
                Err(ecoforge_core::ontology::OntologyError::MissingSign(_)) => vec![Some(Sign::Positive), Some(Sign::Negative)],
                _ => vec![None],
            };
            for sign in signs {
                let m = map_interaction(name, sign).map_err(|e| format!("`{name}`: {e}"))?;
                ensure!(m.kind == kind, "`{name}` maps to {} instead of {kind}", m.kind);
            }
            mapped += 1;
        }
    }
    let outside = ["photobombs", "", "eats grass", "competes with", "symbiont of", "pollinates flowers"];
    for name in outside {
        ensure!(map_interaction(name, None).is_err(), "`{name}` was accepted");
        ensure!(map_interaction(name, Some(Sign::Positive)).is_err(), "`{name}` was accepted with a sign");
    }
    Ok(format!("{mapped} table aliases mapped, 0 unknown, {} outside strings rejected", outside.len()))
}

fn trait_averaging() -> Outcome {
    let defaults = match default_properties(ComponentKind::Biotic) {
        ComponentProperties::Biotic(b) => b,
        ComponentProperties::Abiotic(_) => unreachable!(),
    };
    let rec = |v: f64, s: &str| TraitRecord {
        taxon_id: "t".into(),
        predicate: "life span".into(),
        value: v,
        unit: "years".into(),
        source: s.into(),
    };
    let (props, report) = derive_parameters(&[rec(10.0, "a"), rec(14.0, "b")], &[], &defaults);
    let entry = report.entry("lifespan").ok_or("no lifespan entry")?;
    ensure!(props.lifespan == 144.0, "lifespan {} != 144", props.lifespan);
    ensure!(entry.method == Method::Direct, "method {:?}", entry.method);
    let (props, report) = derive_parameters(&[], &[], &defaults);
    ensure!(props == defaults, "empty records changed the defaults");
    ensure!(report.entries.len() == 13, "{} report entries", report.entries.len());
    ensure!(report.entries.iter().all(|e| e.method == Method::Default), "non-default method on empty input");
    Ok("{10 y, 14 y} gives 144 months (Direct); empty gives 13 Default entries".into())
}

fn determinism() -> Outcome {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let model = fixture_path("kudzu");
    let mut outputs = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("run{i}.csv"));
        let r = cli(&["simulate", model.to_str().unwrap(), "--months", "240", "--seed", "42", "--csv", out.to_str().unwrap()]);
        ensure!(r.status.success(), "simulate exited {:?}: {}", r.status, String::from_utf8_lossy(&r.stderr));
        outputs.push(std::fs::read(out).unwrap());
    }
    ensure!(outputs[0] == outputs[1], "two runs differ");

    let prog = engine_program("kudzu");
    let cfg = SimConfig::new(42, 240);
    let whole = run(&prog, &cfg).map_err(|e| e.to_string())?;
    ensure!(whole.to_csv().as_bytes() == outputs[0].as_slice(), "library run differs from CLI output");
    let mut s = SimState::init(&prog, &cfg).map_err(|e| e.to_string())?;
    let mut frames = vec![s.frame()];
    let mut pauses = 0;
    s.control(Command::Start).unwrap();
    while s.status() != Status::Finished {
        if s.tick() % 37 == 5 && s.status() == Status::Running {
            s.control(Command::Stop).unwrap();
            pauses += 1;
            frames.extend(s.control(Command::Step).unwrap());
            if s.status() == Status::Paused {
                s.control(Command::Start).unwrap();
            }
            continue;
        }
        frames.extend(s.step().unwrap());
    }
    ensure!(frames == whole.frames, "paused trace differs from the uninterrupted trace");
    Ok(format!(
        "{} byte CSV identical twice; {pauses} pause/step/resume cycles match; {:.2} s",
        outputs[0].len(),
        t0.elapsed().as_secs_f64()
    ))
}

fn quiet(id: &str, extra: Value) -> Value {
    let mut props = json!({
        "assimilation_efficiency": 0.5, "body_mass": 1, "carbon_biomass": 1, "lifespan": 1e9,
        "minimum_population": 0, "move_direction": 0, "move_velocity": 1, "offspring_count": 0,
        "photosynthesis_rate": 0, "reproductive_interval": 1, "reproductive_maturity": 0,
        "respiratory_rate": 0, "starting_population": 10
    });
    for (k, v) in extra.as_object().unwrap() {
        props[k] = v.clone();
    }
    json!({"id": id, "kind": "Biotic", "label": id, "properties": props})
}

fn carbon_ledger() -> Outcome {
    let efficiency = 0.3;
    let doc = json!({
        "version": 1, "id": "ledger", "name": "ledger",
        "components": [
            quiet("prey", json!({"starting_population": 200, "carbon_biomass": 0.8})),
            quiet("predator", json!({"starting_population": 40, "move_velocity": 2, "assimilation_efficiency": efficiency})),
        ],
        "relationships": [{
            "id": "eats", "kind": "Consumes", "source": "predator", "target": "prey",
            "params": {"consumption_rate": 0.6, "interaction_probability": 0.5}
        }]
    });
    let model = parse_model(doc.to_string().as_bytes()).map_err(|e| e.to_string())?;
    let prog = compile_for_engine(&compile_model(&model).map_err(|e| e.to_string())?);
    let (mut ticks, mut worst) = (0, 0.0f64);
    for seed in 0..10 {
        let cfg = SimConfig {
            grid_width: 20,
            grid_height: 20,
            ..SimConfig::new(seed, 100)
        };
        let mut s = SimState::init(&prog, &cfg).map_err(|e| e.to_string())?;
        s.control(Command::Start).unwrap();
        while s.status() == Status::Running {
            let before = s.total_carbon();
            s.step().map_err(|e| e.to_string())?;
            let decrease = before - s.total_carbon();
            let expected = (1.0 - efficiency) * s.last_flux().consumed;
            let err = (decrease - expected).abs();
            let scale = expected.abs().max(before * f64::EPSILON);
            ensure!(err <= 1e-9 * scale, "seed {seed} tick {}: decrease {decrease} vs {expected}", s.tick());
            if expected > 0.0 {
                worst = worst.max(err / expected);
            }
            ticks += 1;
        }
    }
    ensure!(ticks == 1000, "only {ticks} ticks ran");
    Ok(format!("1000 ticks over 10 seeds, worst relative error {worst:.1e}"))
}

fn kudzu_phenomena() -> Outcome {
    let t0 = Instant::now();
    let levels = [("kudzu-low", "hornbeam out, kudzu alive"), ("kudzu-medium", "both alive"), ("kudzu-high", "both out")];
    let mut summary = Vec::new();
    let mut failed = Vec::new();
    for (level, (name, label)) in levels.iter().enumerate() {
        let prog = engine_program(name);
        let idx = |id: &str| prog.populations.iter().position(|p| p.id == id).unwrap();
        let (k, h) = (idx("kudzu"), idx("american-hornbeam"));
        let hits: usize = std::thread::scope(|scope| {
            let handles: Vec<_> = (1..=20u64)
                .map(|seed| {
                    let prog = &prog;
                    scope.spawn(move || {
                        let series = run(prog, &SimConfig::new(seed, 120)).unwrap();
                        let last = series.frames.last().unwrap();
                        let (kudzu, hornbeam) = (last.counts[k] > 0, last.counts[h] > 0);
                        match level {
                            0 => kudzu && !hornbeam,
                            1 => kudzu && hornbeam,
                            _ => !kudzu && !hornbeam,
                        }
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap() as usize).sum()
        });
        summary.push(format!("{name} {hits}/20 {label}"));
        if hits < 15 {
            failed.push(name.to_string());
        }
    }
    let line = format!("{}; {:.1} s", summary.join(", "), t0.elapsed().as_secs_f64());
    if failed.is_empty() {
        Ok(line)
    } else {
        Err(line)
    }
}

fn netlogo_emission() -> Outcome {
    let model = parse_model(&fixture("kudzu")).unwrap();
    let prog = compile_model(&model).map_err(|e| e.to_string())?;
    let source = emit_netlogo(&prog);
    let golden = std::fs::read_to_string(core_dir().join("tests/golden/kudzu.nlogo")).unwrap();
    ensure!(source == golden, "emitted source differs from the golden file");
    check_netlogo(&source).map_err(|e| e.to_string())?;
    let biotic: Vec<_> = model.components.iter().filter(|c| c.kind() == ComponentKind::Biotic).collect();
    let breeds = source.lines().filter(|l| l.starts_with("breed [")).count();
    ensure!(breeds == biotic.len(), "{breeds} breeds for {} biotic components", biotic.len());
    for c in &biotic {
        let (plural, singular) = breed_names(&c.id);
        ensure!(source.contains(&format!("breed [{plural} {singular}]")), "no breed for {}", c.id);
    }
    let consumes: Vec<_> = model.relationships.iter().filter(|r| r.kind() == RelationshipKind::Consumes).collect();
    let eats = source.lines().filter(|l| l.starts_with("to eat-")).count();
    ensure!(eats == consumes.len(), "{eats} eat procedures for {} Consumes edges", consumes.len());
    for r in &consumes {
        ensure!(source.contains(&format!("to eat-{}", r.target)), "no eat procedure for {}", r.id);
    }
    Ok(format!("golden match, grammar ok, {breeds} breeds, {eats} eat procedures"))
}

fn dual_backend() -> Outcome {
    let small = ["single-mobile", "predator-prey", "grazer-on-pool", "pollination", "decomposition", "parasite"];
    let t0 = Instant::now();
    let mut frames = 0;
    for name in small {
        let ir = compile_model(&parse_model(&fixture(name)).unwrap()).map_err(|e| e.to_string())?;
        let ep = compile_for_engine(&ir);
        for seed in 0..4 {
            let cfg = SimConfig {
                grid_width: 15,
                grid_height: 13,
                ..SimConfig::new(seed, 60)
            };
            let a = run(&ep, &cfg).map_err(|e| e.to_string())?;
            let b = run_ir(&ir, &cfg).map_err(|e| e.to_string())?;
            ensure!(a.frames.len() == b.frames.len(), "{name} seed {seed}: {} vs {} frames", a.frames.len(), b.frames.len());
            if let Some(i) = (0..a.frames.len()).find(|&i| a.frames[i] != b.frames[i]) {
                return Err(format!("{name} seed {seed}: first difference at tick {}", a.frames[i].tick));
            }
            frames += a.frames.len();
        }
    }
    Ok(format!(
        "{} models x 4 seeds, {frames} frames identical; {:.2} s",
        small.len(),
        t0.elapsed().as_secs_f64()
    ))
}

const ALL_FIXTURES: [&str; 11] = [
    "kudzu",
    "kudzu-low",
    "kudzu-medium",
    "kudzu-high",
    "empty",
    "single-mobile",
    "predator-prey",
    "grazer-on-pool",
    "pollination",
    "decomposition",
    "parasite",
];

// Legal (source, target) kinds per relationship, written out independently.
fn legal(kind: RelationshipKind, s: ComponentKind, t: ComponentKind) -> bool {
    use ComponentKind::{Abiotic as A, Biotic as B};
    let table: &[(ComponentKind, ComponentKind)] = match kind {
        RelationshipKind::Consumes => &[(B, B), (B, A)],
        RelationshipKind::Destroys => &[(B, B), (A, B), (B, A)],
        RelationshipKind::Produces => &[(B, A), (B, B)],
        RelationshipKind::Affects => &[(B, B), (B, A), (A, B), (A, A)],
        RelationshipKind::BecomesOnDeath => &[(B, A), (B, B)],
    };
    table.contains(&(s, t))
}

fn round_trip_and_validation() -> Outcome {
    for name in ALL_FIXTURES {
        let raw = fixture(name);
        let model = parse_model(&raw).map_err(|e| format!("{name}: {e}"))?;
        ensure!(serialize_model(&model) == raw, "{name} does not round-trip");
        ensure!(validate_model(&model).errors.is_empty(), "{name} has validation errors");
    }

    let single = |b: BioticProperties| ConceptualModel {
        id: "m".into(),
        name: "m".into(),
        components: vec![Component {
            id: "c".into(),
            label: "c".into(),
            taxon_ref: None,
            properties: ComponentProperties::Biotic(b),
        }],
        ..Default::default()
    };
    let base = match default_properties(ComponentKind::Biotic) {
        ComponentProperties::Biotic(b) => b,
        ComponentProperties::Abiotic(_) => unreachable!(),
    };
    let violations: [(&str, f64); 13] = [
        ("lifespan", 0.0),
        ("reproductive_maturity", -1.0),
        ("reproductive_interval", 0.0),
        ("offspring_count", 1.5),
        ("starting_population", -3.0),
        ("minimum_population", 0.25),
        ("body_mass", 0.0),
        ("carbon_biomass", -0.1),
        ("respiratory_rate", -0.001),
        ("photosynthesis_rate", -1.0),
        ("assimilation_efficiency", 1.5),
        ("move_direction", 360.0),
        ("move_velocity", -2.0),
    ];
    for (field, bad) in violations {
        let mut b = base.clone();
        *b.field_mut(field).unwrap() = bad;
        let report = validate_model(&single(b));
        let hit = report.errors.iter().any(|e| e.code == codes::PROP_RANGE && e.field.as_deref() == Some(field));
        ensure!(hit, "{field} = {bad} gave {:?}", report.errors);
    }

    let kinds = [ComponentKind::Biotic, ComponentKind::Abiotic];
    let mut cells = 0;
    for kind in RelationshipKind::ALL {
        for s in kinds {
            for t in kinds {
                let component = |id: &str, k: ComponentKind| Component {
                    id: id.into(),
                    label: id.into(),
                    taxon_ref: None,
                    properties: default_properties(k),
                };
                let model = ConceptualModel {
                    id: "m".into(),
                    name: "m".into(),
                    components: vec![component("s", s), component("t", t)],
                    relationships: vec![Relationship {
                        id: "r".into(),
                        source: "s".into(),
                        target: "t".into(),
                        interaction: default_relationship_params(kind),
                    }],
                    ..Default::default()
                };
                let found: Vec<String> = validate_model(&model).errors.into_iter().map(|e| e.code).collect();
                let expected: Vec<String> = if legal(kind, s, t) {
                    vec![]
                } else {
                    vec![codes::REL_ENDPOINT_KIND.into()]
                };
                ensure!(found == expected, "{kind} {s}->{t}: {found:?}");
                cells += 1;
            }
        }
    }

    let mut doc: Value = serde_json::from_slice(&fixture("kudzu")).unwrap();
    doc["components"].as_array_mut().unwrap().retain(|c| c["id"] != "light");
    let text = doc.to_string();
    ensure!(parse_model(text.as_bytes()).is_err(), "strict parse accepted a dangling endpoint");
    let report = validate_model(&parse_document(text.as_bytes()).unwrap());
    ensure!(report.has_code(codes::REL_ENDPOINT), "dangling endpoint gave {:?}", report.errors);

    Ok(format!(
        "{} fixtures bit-exact; 13 property bounds and {cells} endpoint cells give their codes",
        ALL_FIXTURES.len()
    ))
}

fn service_conformance() -> Outcome {
    let t0 = Instant::now();
    let (seed, months) = (42u64, 60u64);
    let model = fixture_path("kudzu");
    let out = cli(&["simulate", model.to_str().unwrap(), "--months", &months.to_string(), "--seed", &seed.to_string()]);
    ensure!(out.status.success(), "CLI simulate failed");
    let cli_csv = String::from_utf8(out.stdout).unwrap();

    let rt = tokio::runtime::Runtime::new().unwrap();
    let (streamed, served) = rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}/api/v1", listener.local_addr().unwrap());
        let app = ecoforge_service::router(ecoforge_service::ServiceConfig::default()).unwrap();
        tokio::spawn(ecoforge_service::serve(listener, app));
        let c = reqwest::Client::new();

        let r = c.post(format!("{base}/models")).body(fixture("kudzu")).send().await.unwrap();
        ensure!(r.status() == 201, "create returned {}", r.status());
        let report: Value = c.post(format!("{base}/models/kudzu/validate")).send().await.unwrap().json().await.unwrap();
        ensure!(report["errors"] == json!([]), "validate reported {}", report["errors"]);
        let info: Value = c
            .post(format!("{base}/simulations"))
            .json(&json!({"model_id": "kudzu", "seed": seed, "max_ticks": months}))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        let sid = info["session_id"].as_str().ok_or("no session id")?.to_string();
        let populations: Vec<String> = serde_json::from_value(info["populations"].clone()).unwrap();
        let pools: Vec<String> = serde_json::from_value(info["pools"].clone()).unwrap();

        let stream = c.get(format!("{base}/simulations/{sid}/frames")).send().await.unwrap();
        let r = c
            .post(format!("{base}/simulations/{sid}/command"))
            .json(&json!({"command": "start"}))
            .send()
            .await
            .unwrap();
        ensure!(r.status() == 200, "start returned {}", r.status());

        let mut csv = csv_header(&populations, &pools) + "\n";
        let mut body = stream;
        let mut buf = String::new();
        let deadline = tokio::time::Instant::now() + Duration::from_secs(30);
        'read: loop {
            let chunk = tokio::time::timeout_at(deadline, body.chunk()).await.map_err(|_| "stream timed out".to_string())?;
            let Some(chunk) = chunk.map_err(|e| e.to_string())? else { break };
            buf.push_str(std::str::from_utf8(&chunk).unwrap());
            while let Some(end) = buf.find("\n\n") {
                let block: String = buf.drain(..end + 2).collect();
                let event = block.lines().find_map(|l| l.strip_prefix("event:")).map(str::trim);
                let data: String = block.lines().filter_map(|l| l.strip_prefix("data:")).map(str::trim_start).collect();
                match event {
                    Some("frame") => {
                        let frame: SimFrame = serde_json::from_str(&data).map_err(|e| e.to_string())?;
                        csv.push_str(&csv_row(&frame));
                        csv.push('\n');
                    }
                    Some("end") => break 'read,
                    _ => {}
                }
            }
        }
        let served = c.get(format!("{base}/simulations/{sid}/series.csv")).send().await.unwrap().text().await.unwrap();
        Ok::<_, String>((csv, served))
    })?;
    ensure!(served == cli_csv, "series.csv differs from the CLI CSV");
    ensure!(streamed == cli_csv, "CSV rebuilt from the frame stream differs from the CLI CSV");
    Ok(format!(
        "{} months seed {seed}: stream and series.csv equal CLI output ({} bytes); {:.2} s",
        months,
        cli_csv.len(),
        t0.elapsed().as_secs_f64()
    ))
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("carbon estimation constants", carbon_constants),
        ("ontology totality", ontology_totality),
        ("trait averaging", trait_averaging),
        ("determinism", determinism),
        ("carbon ledger", carbon_ledger),
        ("kudzu three phenomena", kudzu_phenomena),
        ("NetLogo emission", netlogo_emission),
        ("dual-backend equivalence", dual_backend),
        ("model round trip and validation", round_trip_and_validation),
        ("service conformance", service_conformance),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("[FAIL] {name}: {detail}");
            }
        }
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
