//! Lowering of the IR to the flat instruction set run by the engine. Every
//! population, pool and parameter reference is replaced by an index or a
//! numeric constant.

use serde::{Deserialize, Serialize};

use super::ir::{Op, Phase, SimulationProgram};
use super::Role;
use crate::engine::constants;

/// Engine-side handle for an interaction endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    Population(usize),
    Pool(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnginePopulation {
    pub id: String,
    /// Position in the model's component list; selects the RNG substream.
    pub component_index: usize,
    /// True for stationary one-per-cell populations.
    pub density: bool,
    pub minimum_population: u64,
    pub carbon_biomass: f64,
    pub move_direction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnginePool {
    pub id: String,
    pub component_index: usize,
    pub amount: f64,
    pub minimum_amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op")]
pub enum EngineInstr {
    Spawn { population: usize, count: u64, carbon: f64, age_bound: u64, heading: f64 },
    InitPool { pool: usize, amount: f64 },
    Move { population: usize, velocity: f64, max_turn: f64 },
    /// `light` pairs a pool with its initial amount.
    Photosynthesize { population: usize, rate: f64, light: Vec<(usize, f64)> },
    Respire { population: usize, rate: f64 },
    Consume { source: usize, target: Target, probability: f64, rate: f64, efficiency: f64 },
    Destroy { source: Target, target: Target, probability: f64, rate: f64 },
    Produce { source: Target, target: Target, rate: f64 },
    Affect { source: Target, target: Target, probability: f64, modifier: f64 },
    Reproduce { population: usize, maturity: u64, interval: u64, offspring: u64, carbon_fraction: f64 },
    Senesce { population: usize, lifespan: f64 },
    OnDeath { source: usize, target: Target, amount: f64 },
    Regrow { pool: usize, growth: f64, minimum: f64 },
}

impl EngineInstr {
    pub fn constants(&self) -> Vec<f64> {
        match self {
            EngineInstr::Spawn { carbon, heading, .. } => vec![*carbon, *heading],
            EngineInstr::InitPool { amount, .. } => vec![*amount],
            EngineInstr::Move { velocity, max_turn, .. } => vec![*velocity, *max_turn],
            EngineInstr::Photosynthesize { rate, light, .. } => {
                std::iter::once(*rate).chain(light.iter().map(|l| l.1)).collect()
            }
            EngineInstr::Respire { rate, .. } => vec![*rate],
            EngineInstr::Consume { probability, rate, efficiency, .. } => vec![*probability, *rate, *efficiency],
            EngineInstr::Destroy { probability, rate, .. } => vec![*probability, *rate],
            EngineInstr::Produce { rate, .. } => vec![*rate],
            EngineInstr::Affect { probability, modifier, .. } => vec![*probability, *modifier],
            EngineInstr::Reproduce { carbon_fraction, .. } => vec![*carbon_fraction],
            EngineInstr::Senesce { lifespan, .. } => vec![*lifespan],
            EngineInstr::OnDeath { amount, .. } => vec![*amount],
            EngineInstr::Regrow { growth, minimum, .. } => vec![*growth, *minimum],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnginePhase {
    pub phase: Phase,
    pub instrs: Vec<EngineInstr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineProgram {
    pub version: u32,
    pub populations: Vec<EnginePopulation>,
    pub pools: Vec<EnginePool>,
    pub setup: Vec<EngineInstr>,
    pub phases: Vec<EnginePhase>,
}

impl EngineProgram {
    pub fn phase(&self, phase: Phase) -> &[EngineInstr] {
        self.phases
            .iter()
            .find(|p| p.phase == phase)
            .map(|p| p.instrs.as_slice())
            .unwrap_or(&[])
    }

    pub fn all_constants_finite(&self) -> bool {
        self.setup
            .iter()
            .chain(self.phases.iter().flat_map(|p| &p.instrs))
            .flat_map(EngineInstr::constants)
            .chain(self.populations.iter().flat_map(|p| [p.carbon_biomass, p.move_direction]))
            .chain(self.pools.iter().flat_map(|p| [p.amount, p.minimum_amount]))
            .all(f64::is_finite)
    }

    pub fn to_json(&self) -> String {
        crate::canonical::to_canonical_string(self).expect("engine programs serialize")
    }
}

/// Months to whole ticks, rounding up so that e.g. a 2.5-month maturity is
/// reached at tick 3.
pub(crate) fn months_ceil(m: f64) -> u64 {
    m.max(0.0).ceil() as u64
}

pub(crate) fn whole(x: f64) -> u64 {
    x.max(0.0).round() as u64
}

pub fn compile_for_engine(prog: &SimulationProgram) -> EngineProgram {
    let dm = &prog.domain;
    let mut populations = Vec::new();
    let mut pools = Vec::new();
    let mut targets = Vec::new();
    for (component_index, p) in dm.populations.iter().enumerate() {
        match p.role {
            Role::SubstancePool => {
                let a = p.abiotic().expect("substance pools are abiotic");
                targets.push((p.id.as_str(), Target::Pool(pools.len())));
                pools.push(EnginePool {
                    id: p.id.clone(),
                    component_index,
                    amount: a.amount,
                    minimum_amount: a.minimum_amount,
                });
            }
            role => {
                let b = p.biotic().expect("agent populations are biotic");
                targets.push((p.id.as_str(), Target::Population(populations.len())));
                populations.push(EnginePopulation {
                    id: p.id.clone(),
                    component_index,
                    density: role == Role::DensityPool,
                    minimum_population: whole(b.minimum_population),
                    carbon_biomass: b.carbon_biomass,
                    move_direction: b.move_direction,
                });
            }
        }
    }
    let target = |id: &str| {
        targets
            .iter()
            .find(|(t, _)| *t == id)
            .map(|(_, t)| *t)
            .expect("IR references resolve")
    };
    let pop = |id: &str| match target(id) {
        Target::Population(i) => i,
        Target::Pool(_) => panic!("`{id}` is not an agent population"),
    };
    let pool = |id: &str| match target(id) {
        Target::Pool(i) => i,
        Target::Population(_) => panic!("`{id}` is not a pool"),
    };
    let value = |r: &super::ParamRef| prog.resolve(r).expect("IR references resolve");
    let engine = constants();

    let lower = |op: &Op| -> EngineInstr {
        match op {
            Op::SpawnPopulation { population } => {
                let b = dm.population(population).and_then(|p| p.biotic()).expect("biotic");
                EngineInstr::Spawn {
                    population: pop(population),
                    count: whole(b.starting_population),
                    carbon: b.carbon_biomass,
                    age_bound: months_ceil(b.lifespan).max(1),
                    heading: b.move_direction,
                }
            }
            Op::InitPool { pool: id } => EngineInstr::InitPool {
                pool: pool(id),
                amount: dm.population(id).and_then(|p| p.abiotic()).expect("abiotic").amount,
            },
            Op::Move { population, velocity, .. } => EngineInstr::Move {
                population: pop(population),
                velocity: value(velocity),
                max_turn: engine.max_turn_degrees,
            },
            Op::Photosynthesize { population, rate, light } => EngineInstr::Photosynthesize {
                population: pop(population),
                rate: value(rate),
                light: light
                    .iter()
                    .map(|l| (pool(l), dm.population(l).and_then(|p| p.abiotic()).expect("abiotic").amount))
                    .collect(),
            },
            Op::Respire { population, rate } => EngineInstr::Respire {
                population: pop(population),
                rate: value(rate),
            },
            Op::Interaction { relationship, .. } => {
                let spec = dm.interactions.iter().find(|i| &i.id == relationship).expect("interaction exists");
                let (s, t) = (target(&spec.source), target(&spec.target));
                match &spec.interaction {
                    crate::model::Interaction::Consumes(c) => EngineInstr::Consume {
                        source: pop(&spec.source),
                        target: t,
                        probability: c.interaction_probability,
                        rate: c.consumption_rate,
                        efficiency: dm
                            .population(&spec.source)
                            .and_then(|p| p.biotic())
                            .expect("biotic")
                            .assimilation_efficiency,
                    },
                    crate::model::Interaction::Destroys(d) => EngineInstr::Destroy {
                        source: s,
                        target: t,
                        probability: d.interaction_probability,
                        rate: d.destruction_rate,
                    },
                    crate::model::Interaction::Produces(p) => EngineInstr::Produce {
                        source: s,
                        target: t,
                        rate: p.production_rate,
                    },
                    crate::model::Interaction::Affects(a) => EngineInstr::Affect {
                        source: s,
                        target: t,
                        probability: a.interaction_probability,
                        modifier: a.growth_rate_modifier,
                    },
                    crate::model::Interaction::BecomesOnDeath(_) => unreachable!("lowered in the die phase"),
                }
            }
            Op::Reproduce { population, maturity, interval, offspring } => EngineInstr::Reproduce {
                population: pop(population),
                maturity: months_ceil(value(maturity)),
                interval: whole(value(interval)).max(1),
                offspring: whole(value(offspring)),
                carbon_fraction: engine.offspring_carbon_fraction,
            },
            Op::Senesce { population, lifespan } => EngineInstr::Senesce {
                population: pop(population),
                lifespan: value(lifespan),
            },
            Op::OnDeathConvert { source, target: t, percent, body_mass, .. } => EngineInstr::OnDeath {
                source: pop(source),
                target: target(t),
                amount: value(percent) * value(body_mass),
            },
            Op::Regrow { pool: id, growth, minimum } => EngineInstr::Regrow {
                pool: pool(id),
                growth: value(growth),
                minimum: value(minimum),
            },
        }
    };

    EngineProgram {
        version: 1,
        setup: prog.setup.iter().map(lower).collect(),
        phases: prog
            .phases
            .iter()
            .map(|b| EnginePhase {
                phase: b.phase,
                instrs: b.ops.iter().map(lower).collect(),
            })
            .collect(),
        populations,
        pools,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::compile_model;
    use crate::model::parse_model;

    #[test]
    fn kudzu_program_shape() {
        let m = parse_model(include_bytes!("../../fixtures/models/kudzu.json")).unwrap();
        let ir = compile_model(&m).unwrap();
        let ep = compile_for_engine(&ir);
        assert_eq!(ep.populations.len() + ep.pools.len(), 4);
        assert_eq!(ep.phase(Phase::Interact).len(), ir.phase(Phase::Interact).len());
        for (a, b) in ep.phases.iter().zip(&ir.phases) {
            assert_eq!(a.phase, b.phase);
            assert_eq!(a.instrs.len(), b.ops.len());
        }
        assert!(ep.all_constants_finite());
        let back: EngineProgram = serde_json::from_str(&ep.to_json()).unwrap();
        assert_eq!(back, ep);
    }
}
