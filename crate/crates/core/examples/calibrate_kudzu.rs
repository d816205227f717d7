//! Sweeps the kudzu bug starting population and reports, per level, how many
//! of the 20 fixed seeds end in each outcome after 120 months.
//!
//! cargo run --release -p ecoforge-core --example calibrate_kudzu -- [model.json] [id.field=value ...]
//!
//! Set `BUGS=100,200,...` to sweep a different grid.
//!
//! The bundled kudzu-low/medium/high fixtures were pinned from this output.

use ecoforge_core::compiler::{compile_for_engine, compile_model};
use ecoforge_core::engine::{run, SimConfig};
use ecoforge_core::model::parse_model;
use serde_json::Value;

const SEEDS: std::ops::RangeInclusive<u64> = 1..=20;
const BUG_GRID: [u64; 14] = [0, 25, 50, 100, 200, 400, 600, 800, 1000, 1200, 1500, 2000, 3000, 4000];

fn set(doc: &mut Value, target: &str, value: f64) {
    let (id, field) = target.split_once('.').expect("override is id.field=value");
    for list in ["components", "relationships"] {
        for item in doc[list].as_array_mut().unwrap() {
            if item["id"] == id {
                let slot = if list == "components" { "properties" } else { "params" };
                item[slot][field] = serde_json::json!(value);
                return;
            }
        }
    }
    panic!("no component or relationship `{id}`");
}

fn main() {
    let mut args: Vec<String> = std::env::args().skip(1).collect();
    let path = if args.first().is_some_and(|a| !a.contains('=')) {
        args.remove(0)
    } else {
        concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/models/kudzu.json").to_string()
    };
    let mut base: Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    for a in &args {
        let (k, v) = a.split_once('=').unwrap();
        set(&mut base, k, v.parse().unwrap());
    }
    println!("bugs  hornbeam-out  both-alive  both-out  mean(kudzu, hornbeam, bug)");
    let grid: Vec<u64> = match std::env::var("BUGS") {
        Ok(list) => list.split(',').map(|b| b.trim().parse().unwrap()).collect(),
        Err(_) => BUG_GRID.to_vec(),
    };
    for bugs in grid {
        let mut doc = base.clone();
        set(&mut doc, "kudzu-bug.starting_population", bugs as f64);
        let model = parse_model(&serde_json::to_vec(&doc).unwrap()).unwrap();
        let prog = compile_for_engine(&compile_model(&model).unwrap());
        let idx = |id: &str| prog.populations.iter().position(|p| p.id == id).unwrap();
        let (k, h, b) = (idx("kudzu"), idx("american-hornbeam"), idx("kudzu-bug"));
        let (mut low, mut mid, mut high) = (0, 0, 0);
        let mut sums = [0u64; 3];
        for seed in SEEDS {
            let series = run(&prog, &SimConfig::new(seed, 120)).unwrap();
            let last = series.frames.last().unwrap();
            let (kc, hc) = (last.counts[k], last.counts[h]);
            low += (kc > 0 && hc == 0) as u32;
            mid += (kc > 0 && hc > 0) as u32;
            high += (kc == 0 && hc == 0) as u32;
            sums[0] += kc;
            sums[1] += hc;
            sums[2] += last.counts[b];
        }
        let n = SEEDS.count() as f64;
        println!(
            "{bugs:>4}  {low:>12}  {mid:>10}  {high:>8}  ({:.0}, {:.0}, {:.0})",
            sums[0] as f64 / n,
            sums[1] as f64 / n,
            sums[2] as f64 / n
        );
    }
}
