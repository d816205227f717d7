//! Domain-independent simulation IR: an operation tree grouped into tick
//! phases, plus a semantic graph of which operations read or write which
//! populations and pools.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{DomainModel, Role};
use crate::model::{Interaction, RelationshipKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Move,
    Metabolize,
    Interact,
    Reproduce,
    Die,
    Regrow,
}

impl Phase {
    pub const ORDER: [Phase; 6] = [
        Phase::Move,
        Phase::Metabolize,
        Phase::Interact,
        Phase::Reproduce,
        Phase::Die,
        Phase::Regrow,
    ];
}

/// Symbolic reference to a numeric parameter: a component property or a
/// relationship parameter, looked up by owner id and field name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamRef {
    pub owner: String,
    pub field: String,
}

impl ParamRef {
    fn new(owner: &str, field: &str) -> Self {
        ParamRef {
            owner: owner.to_string(),
            field: field.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PrimitiveOp {
    /// Pick a neighbouring target with the given probability.
    EncounterTest { source: String, target: String, probability: ParamRef },
    /// Move `rate` of the target's carbon to the source, keeping `efficiency`.
    CarbonTransfer { from: String, to: String, rate: ParamRef, efficiency: ParamRef },
    /// Remove `rate` of the target's carbon without transfer.
    Degrade { target: String, rate: ParamRef },
    /// Drop targets whose carbon reached zero.
    RemoveDepleted { population: String },
    /// Poisson-distributed output per source individual per tick.
    StochasticEmission { source: String, target: String, rate: ParamRef },
    /// Scale the target's carbon (or amount) by `1 + modifier`.
    GrowthModifier { source: String, target: String, modifier: ParamRef },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Op {
    SpawnPopulation { population: String },
    InitPool { pool: String },
    Move { population: String, velocity: ParamRef, direction: ParamRef },
    Photosynthesize { population: String, rate: ParamRef, light: Vec<String> },
    Respire { population: String, rate: ParamRef },
    Interaction { relationship: String, kind: RelationshipKind, ops: Vec<PrimitiveOp> },
    Reproduce { population: String, maturity: ParamRef, interval: ParamRef, offspring: ParamRef },
    Senesce { population: String, lifespan: ParamRef },
    OnDeathConvert { relationship: String, source: String, target: String, percent: ParamRef, body_mass: ParamRef },
    Regrow { pool: String, growth: ParamRef, minimum: ParamRef },
}

impl Op {
    /// Stable label used as the op's node name in the semantic graph.
    pub fn label(&self) -> String {
        match self {
            Op::SpawnPopulation { population } => format!("spawn:{population}"),
            Op::InitPool { pool } => format!("init-pool:{pool}"),
            Op::Move { population, .. } => format!("move:{population}"),
            Op::Photosynthesize { population, .. } => format!("photosynthesize:{population}"),
            Op::Respire { population, .. } => format!("respire:{population}"),
            Op::Interaction { relationship, .. } => format!("interact:{relationship}"),
            Op::Reproduce { population, .. } => format!("reproduce:{population}"),
            Op::Senesce { population, .. } => format!("senesce:{population}"),
            Op::OnDeathConvert { relationship, .. } => format!("on-death:{relationship}"),
            Op::Regrow { pool, .. } => format!("regrow:{pool}"),
        }
    }

    pub fn param_refs(&self) -> Vec<&ParamRef> {
        match self {
            Op::SpawnPopulation { .. } | Op::InitPool { .. } => Vec::new(),
            Op::Move { velocity, direction, .. } => vec![velocity, direction],
            Op::Photosynthesize { rate, .. } | Op::Respire { rate, .. } => vec![rate],
            Op::Interaction { ops, .. } => ops
                .iter()
                .flat_map(|op| match op {
                    PrimitiveOp::EncounterTest { probability, .. } => vec![probability],
                    PrimitiveOp::CarbonTransfer { rate, efficiency, .. } => vec![rate, efficiency],
                    PrimitiveOp::Degrade { rate, .. } => vec![rate],
                    PrimitiveOp::RemoveDepleted { .. } => vec![],
                    PrimitiveOp::StochasticEmission { rate, .. } => vec![rate],
                    PrimitiveOp::GrowthModifier { modifier, .. } => vec![modifier],
                })
                .collect(),
            Op::Reproduce { maturity, interval, offspring, .. } => vec![maturity, interval, offspring],
            Op::Senesce { lifespan, .. } => vec![lifespan],
            Op::OnDeathConvert { percent, body_mass, .. } => vec![percent, body_mass],
            Op::Regrow { growth, minimum, .. } => vec![growth, minimum],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseBlock {
    pub phase: Phase,
    pub ops: Vec<Op>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Symbol {
    Population(String),
    Pool(String),
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Population(id) => write!(f, "population:{id}"),
            Symbol::Pool(id) => write!(f, "pool:{id}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Access {
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AsgEdge {
    pub op: String,
    pub access: Access,
    pub symbol: Symbol,
}

/// Cross-reference graph: op label → symbols it reads or writes, plus the
/// parameters it is parameterised by.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Asg {
    pub symbols: Vec<Symbol>,
    pub edges: Vec<AsgEdge>,
    pub params: Vec<(String, ParamRef)>,
}

impl Asg {
    pub fn readers(&self, symbol: &Symbol) -> Vec<&str> {
        self.edges
            .iter()
            .filter(|e| e.access == Access::Read && &e.symbol == symbol)
            .map(|e| e.op.as_str())
            .collect()
    }

    pub fn writers(&self, symbol: &Symbol) -> Vec<&str> {
        self.edges
            .iter()
            .filter(|e| e.access == Access::Write && &e.symbol == symbol)
            .map(|e| e.op.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationProgram {
    pub domain: DomainModel,
    /// Ops run once before the first tick.
    pub setup: Vec<Op>,
    pub phases: Vec<PhaseBlock>,
    pub asg: Asg,
    pub schedule: Vec<Phase>,
}

impl SimulationProgram {
    pub fn phase(&self, phase: Phase) -> &[Op] {
        self.phases
            .iter()
            .find(|b| b.phase == phase)
            .map(|b| b.ops.as_slice())
            .unwrap_or(&[])
    }

    pub fn symbol(&self, id: &str) -> Option<Symbol> {
        let p = self.domain.population(id)?;
        Some(match p.role {
            Role::SubstancePool => Symbol::Pool(id.to_string()),
            _ => Symbol::Population(id.to_string()),
        })
    }

    /// Looks a parameter up by name in the domain model.
    pub fn resolve(&self, r: &ParamRef) -> Option<f64> {
        if let Some(p) = self.domain.population(&r.owner) {
            return match p.biotic() {
                Some(b) => b.get(&r.field),
                None => {
                    let a = p.abiotic()?;
                    match r.field.as_str() {
                        "amount" => Some(a.amount),
                        "minimum_amount" => Some(a.minimum_amount),
                        "growth_rate" => Some(a.growth_rate),
                        _ => None,
                    }
                }
            };
        }
        let spec = self.domain.interactions.iter().find(|i| i.id == r.owner)?;
        spec.interaction
            .param_values()
            .into_iter()
            .find(|(name, _)| *name == r.field)
            .map(|(_, v)| v)
    }

    /// Structural checks: schedule order, every op scheduled once, every
    /// reference resolvable.
    pub fn check(&self) -> Result<(), String> {
        if self.schedule != Phase::ORDER {
            return Err(format!("schedule {:?} is not the tick phase order", self.schedule));
        }
        let block_phases: Vec<Phase> = self.phases.iter().map(|b| b.phase).collect();
        if block_phases != self.schedule {
            return Err("phase blocks do not match the schedule".into());
        }
        let mut seen = BTreeSet::new();
        for op in self.setup.iter().chain(self.phases.iter().flat_map(|b| &b.ops)) {
            if !seen.insert(op.label()) {
                return Err(format!("op `{}` is scheduled twice", op.label()));
            }
            for r in op.param_refs() {
                match self.resolve(r) {
                    Some(v) if v.is_finite() => {}
                    _ => return Err(format!("op `{}`: unresolved parameter {}.{}", op.label(), r.owner, r.field)),
                }
            }
        }
        for e in &self.asg.edges {
            if !seen.contains(&e.op) {
                return Err(format!("semantic graph names unknown op `{}`", e.op));
            }
            if !self.asg.symbols.contains(&e.symbol) {
                return Err(format!("semantic graph names unknown symbol `{}`", e.symbol));
            }
        }
        for b in &self.phases {
            let interaction_here = b.ops.iter().any(|op| matches!(op, Op::Interaction { .. }));
            if interaction_here && b.phase != Phase::Interact {
                return Err(format!("interaction op in {:?} phase", b.phase));
            }
        }
        Ok(())
    }
}

fn interaction_ops(id: &str, source: &str, target: &str, interaction: &Interaction) -> Vec<PrimitiveOp> {
    let p = |field: &str| ParamRef::new(id, field);
    let encounter = || PrimitiveOp::EncounterTest {
        source: source.to_string(),
        target: target.to_string(),
        probability: p("interaction_probability"),
    };
    match interaction {
        Interaction::Consumes(_) => vec![
            encounter(),
            PrimitiveOp::CarbonTransfer {
                from: target.to_string(),
                to: source.to_string(),
                rate: p("consumption_rate"),
                efficiency: ParamRef::new(source, "assimilation_efficiency"),
            },
            PrimitiveOp::RemoveDepleted {
                population: target.to_string(),
            },
        ],
        Interaction::Destroys(_) => vec![
            encounter(),
            PrimitiveOp::Degrade {
                target: target.to_string(),
                rate: p("destruction_rate"),
            },
            PrimitiveOp::RemoveDepleted {
                population: target.to_string(),
            },
        ],
        Interaction::Produces(_) => vec![PrimitiveOp::StochasticEmission {
            source: source.to_string(),
            target: target.to_string(),
            rate: p("production_rate"),
        }],
        Interaction::Affects(_) => vec![
            encounter(),
            PrimitiveOp::GrowthModifier {
                source: source.to_string(),
                target: target.to_string(),
                modifier: p("growth_rate_modifier"),
            },
        ],
        Interaction::BecomesOnDeath(_) => unreachable!("on-death conversion is lowered into the die phase"),
    }
}

pub fn lower_to_ir(dm: &DomainModel) -> SimulationProgram {
    let mut setup = Vec::new();
    let mut blocks: Vec<PhaseBlock> = Phase::ORDER
        .iter()
        .map(|&phase| PhaseBlock { phase, ops: Vec::new() })
        .collect();
    let mut push = |phase: Phase, op: Op| blocks[phase as usize].ops.push(op);

    for pop in &dm.populations {
        let id = pop.id.as_str();
        let p = |field: &str| ParamRef::new(id, field);
        match pop.role {
            Role::SubstancePool => setup.push(Op::InitPool { pool: id.to_string() }),
            _ => setup.push(Op::SpawnPopulation {
                population: id.to_string(),
            }),
        }
        let Some(b) = pop.biotic() else {
            continue;
        };
        if pop.role == Role::MobileAgent {
            push(
                Phase::Move,
                Op::Move {
                    population: id.to_string(),
                    velocity: p("move_velocity"),
                    direction: p("move_direction"),
                },
            );
        }
        if b.photosynthesis_rate > 0.0 {
            let light = dm
                .interactions
                .iter()
                .filter(|i| {
                    i.target == id
                        && matches!(i.interaction, Interaction::Affects(_))
                        && dm.population(&i.source).is_some_and(|s| s.role == Role::SubstancePool)
                })
                .map(|i| i.source.clone())
                .collect();
            push(
                Phase::Metabolize,
                Op::Photosynthesize {
                    population: id.to_string(),
                    rate: p("photosynthesis_rate"),
                    light,
                },
            );
        }
        push(
            Phase::Metabolize,
            Op::Respire {
                population: id.to_string(),
                rate: p("respiratory_rate"),
            },
        );
    }

    for spec in &dm.interactions {
        if let Interaction::BecomesOnDeath(_) = spec.interaction {
            continue;
        }
        push(
            Phase::Interact,
            Op::Interaction {
                relationship: spec.id.clone(),
                kind: spec.interaction.kind(),
                ops: interaction_ops(&spec.id, &spec.source, &spec.target, &spec.interaction),
            },
        );
    }

    for pop in dm.populations.iter().filter(|p| p.biotic().is_some()) {
        let p = |field: &str| ParamRef::new(&pop.id, field);
        push(
            Phase::Reproduce,
            Op::Reproduce {
                population: pop.id.clone(),
                maturity: p("reproductive_maturity"),
                interval: p("reproductive_interval"),
                offspring: p("offspring_count"),
            },
        );
        push(
            Phase::Die,
            Op::Senesce {
                population: pop.id.clone(),
                lifespan: p("lifespan"),
            },
        );
    }
    for spec in &dm.interactions {
        if let Interaction::BecomesOnDeath(_) = spec.interaction {
            push(
                Phase::Die,
                Op::OnDeathConvert {
                    relationship: spec.id.clone(),
                    source: spec.source.clone(),
                    target: spec.target.clone(),
                    percent: ParamRef::new(&spec.id, "percent_body_mass"),
                    body_mass: ParamRef::new(&spec.source, "body_mass"),
                },
            );
        }
    }
    for pop in dm.populations.iter().filter(|p| p.role == Role::SubstancePool) {
        push(
            Phase::Regrow,
            Op::Regrow {
                pool: pop.id.clone(),
                growth: ParamRef::new(&pop.id, "growth_rate"),
                minimum: ParamRef::new(&pop.id, "minimum_amount"),
            },
        );
    }

    let mut prog = SimulationProgram {
        domain: dm.clone(),
        setup,
        phases: blocks,
        asg: Asg::default(),
        schedule: Phase::ORDER.to_vec(),
    };
    prog.asg = build_asg(&prog);
    prog
}

fn build_asg(prog: &SimulationProgram) -> Asg {
    let sym = |id: &str| prog.symbol(id).expect("ops only name domain populations");
    let mut asg = Asg {
        symbols: prog.domain.populations.iter().map(|p| sym(&p.id)).collect(),
        ..Asg::default()
    };
    let mut edge = |op: &Op, access: Access, id: &str| {
        asg.edges.push(AsgEdge {
            op: op.label(),
            access,
            symbol: sym(id),
        });
    };
    let all_ops = prog.setup.iter().chain(prog.phases.iter().flat_map(|b| &b.ops));
    for op in all_ops.clone() {
        use Access::{Read, Write};
        match op {
            Op::SpawnPopulation { population } => edge(op, Write, population),
            Op::InitPool { pool } => edge(op, Write, pool),
            Op::Move { population, .. } | Op::Respire { population, .. } => {
                edge(op, Read, population);
                edge(op, Write, population);
            }
            Op::Photosynthesize { population, light, .. } => {
                for l in light {
                    edge(op, Read, l);
                }
                edge(op, Read, population);
                edge(op, Write, population);
            }
            Op::Interaction { ops, .. } => {
                for prim in ops {
                    match prim {
                        PrimitiveOp::EncounterTest { source, target, .. } => {
                            edge(op, Read, source);
                            edge(op, Read, target);
                        }
                        PrimitiveOp::CarbonTransfer { from, to, .. } => {
                            edge(op, Write, from);
                            edge(op, Write, to);
                        }
                        PrimitiveOp::Degrade { target, .. } | PrimitiveOp::RemoveDepleted { population: target } => {
                            edge(op, Write, target)
                        }
                        PrimitiveOp::StochasticEmission { source, target, .. }
                        | PrimitiveOp::GrowthModifier { source, target, .. } => {
                            edge(op, Read, source);
                            edge(op, Write, target);
                        }
                    }
                }
            }
            Op::Reproduce { population, .. } | Op::Senesce { population, .. } => {
                edge(op, Read, population);
                edge(op, Write, population);
            }
            Op::OnDeathConvert { source, target, .. } => {
                edge(op, Read, source);
                edge(op, Write, target);
            }
            Op::Regrow { pool, .. } => {
                edge(op, Read, pool);
                edge(op, Write, pool);
            }
        }
    }
    asg.edges.sort();
    asg.edges.dedup();
    for op in all_ops {
        for r in op.param_refs() {
            asg.params.push((op.label(), r.clone()));
        }
    }
    asg
}
