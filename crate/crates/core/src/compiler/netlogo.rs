//! NetLogo 6 code-tab emission and a small grammar checker for the emitted
//! subset.
//!
//! Every biotic population becomes a breed of turtles (density pools are
//! stationary turtles, one per patch), every substance pool a global. Turtle
//! energy holds carbon biomass.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use super::ir::{Op, ParamRef, Phase, PrimitiveOp, SimulationProgram};
use super::Role;
use crate::canonical::format_number;
use crate::engine::constants;
use crate::model::RelationshipKind;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct NetLogoSyntaxError {
    pub line: usize,
    pub message: String,
}

/// `(plural, singular)` breed names for a component id.
pub fn breed_names(id: &str) -> (String, String) {
    let singular = id.to_lowercase().replace('_', "-");
    let plural = if ["s", "x", "z", "ch", "sh"].iter().any(|e| singular.ends_with(e)) {
        format!("{singular}es")
    } else {
        format!("{singular}s")
    };
    (plural, singular)
}

fn global_name(id: &str) -> String {
    let name = id.to_lowercase().replace('_', "-");
    if LEXICON.contains(&name.as_str()) {
        format!("pool-{name}")
    } else {
        name
    }
}

struct Names {
    plural: BTreeMap<String, String>,
    global: BTreeMap<String, String>,
    eat: BTreeMap<String, String>,
    density: Vec<String>,
}

impl Names {
    fn new(prog: &SimulationProgram) -> Self {
        let mut plural = BTreeMap::new();
        let mut global = BTreeMap::new();
        let mut density = Vec::new();
        for p in &prog.domain.populations {
            match p.role {
                Role::SubstancePool => {
                    global.insert(p.id.clone(), global_name(&p.id));
                }
                role => {
                    let (pl, _) = breed_names(&p.id);
                    if role == Role::DensityPool {
                        density.push(pl.clone());
                    }
                    plural.insert(p.id.clone(), pl);
                }
            }
        }
        // `eat-<prey>`, or `<predator>-eat-<prey>` when several consumers
        // share a prey.
        let consumes: Vec<_> = prog
            .domain
            .interactions
            .iter()
            .filter(|i| i.interaction.kind() == RelationshipKind::Consumes)
            .collect();
        let mut eat = BTreeMap::new();
        for c in &consumes {
            let prey = breed_names(&c.target).1;
            let shared = consumes.iter().filter(|o| o.target == c.target).count() > 1;
            let name = if shared {
                format!("{}-eat-{prey}", breed_names(&c.source).1)
            } else {
                format!("eat-{prey}")
            };
            eat.insert(c.id.clone(), name);
        }
        Names {
            plural,
            global,
            eat,
            density,
        }
    }

    fn breed(&self, id: &str) -> &str {
        &self.plural[id]
    }

    fn is_pool(&self, id: &str) -> bool {
        self.global.contains_key(id)
    }

    fn pool(&self, id: &str) -> &str {
        &self.global[id]
    }

    /// Reporter for patches holding no density-pool turtle.
    fn free_patch_condition(&self) -> String {
        let here: Vec<String> = self.density.iter().map(|b| format!("{b}-here")).collect();
        if here.len() == 1 {
            format!("not any? {}", here[0])
        } else {
            format!("not any? (turtle-set {})", here.join(" "))
        }
    }
}

struct Emitter<'a> {
    prog: &'a SimulationProgram,
    names: Names,
    out: String,
}

impl Emitter<'_> {
    fn num(&self, r: &ParamRef) -> String {
        format_number(self.prog.resolve(r).expect("IR references resolve"))
    }

    fn line(&mut self, indent: usize, text: &str) {
        for _ in 0..indent {
            self.out.push_str("  ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn blank(&mut self) {
        self.out.push('\n');
    }

    fn header(&mut self) {
        let name = self.prog.domain.name.replace('\n', " ");
        self.line(0, &format!("; {name}"));
        self.line(0, "; Generated by ecoforge. Code tab only; turtle energy is carbon biomass in kg.");
        self.blank();
        let globals: Vec<String> = self.names.global.values().cloned().collect();
        let ordered: Vec<String> = self
            .prog
            .domain
            .populations
            .iter()
            .filter(|p| p.role == Role::SubstancePool)
            .map(|p| self.names.pool(&p.id).to_string())
            .collect();
        debug_assert_eq!(globals.len(), ordered.len());
        if !ordered.is_empty() {
            self.line(0, &format!("globals [ {} ]", ordered.join(" ")));
        }
        for p in &self.prog.domain.populations {
            if p.role != Role::SubstancePool {
                let (pl, sg) = breed_names(&p.id);
                self.line(0, &format!("breed [{pl} {sg}]"));
            }
        }
        self.line(0, "turtles-own [ energy age ]");
        self.blank();
    }

    fn setup(&mut self) {
        self.line(0, "to setup");
        self.line(1, "clear-all");
        for op in &self.prog.setup {
            match op {
                Op::InitPool { pool } => {
                    let amount = self.num(&ParamRef {
                        owner: pool.clone(),
                        field: "amount".into(),
                    });
                    let g = self.names.pool(pool).to_string();
                    self.line(1, &format!("set {g} {amount}"));
                }
                Op::SpawnPopulation { population } => {
                    let p = self.prog.domain.population(population).expect("known population");
                    let b = p.biotic().expect("biotic");
                    let breed = self.names.breed(population).to_string();
                    let count = format_number(b.starting_population.max(0.0).round());
                    let age_bound = format_number(b.lifespan.ceil().max(1.0));
                    self.line(1, &format!("create-{breed} {count} ["));
                    if p.role == Role::DensityPool {
                        let cond = self.names.free_patch_condition();
                        self.line(2, &format!("let spot one-of patches with [ {cond} ]"));
                        self.line(2, "ifelse spot = nobody [ die ] [ move-to spot ]");
                    } else {
                        self.line(2, "setxy random-xcor random-ycor");
                    }
                    self.line(2, &format!("set heading {}", format_number(b.move_direction)));
                    self.line(2, &format!("set energy {}", format_number(b.carbon_biomass)));
                    self.line(2, &format!("set age random {age_bound}"));
                    self.line(1, "]");
                }
                _ => {}
            }
        }
        self.line(1, "reset-ticks");
        self.line(0, "end");
        self.blank();
    }

    fn go(&mut self) {
        self.line(0, "to go");
        if !self.names.plural.is_empty() {
            self.line(1, "if not any? turtles [ stop ]");
        }
        for block in &self.prog.phases {
            if !block.ops.is_empty() {
                self.line(1, phase_procedure(block.phase));
            }
        }
        self.line(1, "tick");
        self.line(0, "end");
        self.blank();
    }

    fn phase(&mut self, phase: Phase, ops: &[Op]) {
        if ops.is_empty() {
            return;
        }
        let mut procs = Vec::new();
        self.line(0, &format!("to {}", phase_procedure(phase)));
        match phase {
            Phase::Die => self.die_phase(ops),
            _ => {
                for op in ops {
                    self.op(op, &mut procs);
                }
            }
        }
        self.line(0, "end");
        self.blank();
        for p in procs {
            self.out.push_str(&p);
        }
    }

    fn op(&mut self, op: &Op, procs: &mut Vec<String>) {
        match op {
            Op::Move { population, velocity, .. } => {
                let v = self.num(velocity);
                if v == "0" {
                    return;
                }
                let breed = self.names.breed(population).to_string();
                let turn = format_number(constants().max_turn_degrees);
                let span = format_number(2.0 * constants().max_turn_degrees);
                self.line(1, &format!("ask {breed} ["));
                self.line(2, &format!("set heading heading + (random-float {span} - {turn})"));
                self.line(2, &format!("setxy (xcor + {v} * sin heading) (ycor + {v} * cos heading)"));
                self.line(1, "]");
            }
            Op::Photosynthesize { population, rate, light } => {
                let breed = self.names.breed(population).to_string();
                let mut gain = self.num(rate);
                for l in light {
                    let initial = self.num(&ParamRef {
                        owner: l.clone(),
                        field: "amount".into(),
                    });
                    if initial != "0" {
                        let g = self.names.pool(l);
                        gain = format!("{gain} * (max list 0 (min list 2 ({g} / {initial})))");
                    }
                }
                self.line(1, &format!("ask {breed} [ set energy energy + {gain} ]"));
            }
            Op::Respire { population, rate } => {
                let breed = self.names.breed(population).to_string();
                let r = self.num(rate);
                self.line(1, &format!("ask {breed} [ set energy max list 0 (energy - {r}) ]"));
            }
            Op::Interaction { relationship, kind, ops } => self.interaction(relationship, *kind, ops, procs),
            Op::Reproduce { population, maturity, interval, offspring } => {
                let offspring = self.prog.resolve(offspring).expect("resolves").max(0.0).round();
                if offspring == 0.0 {
                    return;
                }
                let m = format_number(self.prog.resolve(maturity).expect("resolves").max(0.0).ceil());
                let i = format_number(self.prog.resolve(interval).expect("resolves").round().max(1.0));
                let pop = self.prog.domain.population(population).expect("known");
                let breed = self.names.breed(population).to_string();
                let fraction = format_number(constants().offspring_carbon_fraction);
                let heading = format_number(pop.biotic().expect("biotic").move_direction);
                self.line(1, &format!("ask {breed} ["));
                self.line(2, &format!("if age >= {m} and (age - {m}) mod {i} = 0 ["));
                self.line(3, &format!("repeat {} [", format_number(offspring)));
                self.line(4, &format!("let share energy * {fraction}"));
                if pop.role == Role::DensityPool {
                    let cond = self.names.free_patch_condition();
                    self.line(4, &format!("let spot one-of neighbors with [ {cond} ]"));
                    self.line(4, "if spot != nobody [");
                    self.line(5, "set energy energy - share");
                    self.line(5, &format!("hatch 1 [ set energy share set age 0 set heading {heading} move-to spot ]"));
                    self.line(4, "]");
                } else {
                    self.line(4, "set energy energy - share");
                    self.line(4, &format!("hatch 1 [ set energy share set age 0 set heading {heading} ]"));
                }
                self.line(3, "]");
                self.line(2, "]");
                self.line(1, "]");
            }
            Op::Regrow { pool, growth, minimum } => {
                let g = self.names.pool(pool).to_string();
                let (growth, minimum) = (self.num(growth), self.num(minimum));
                self.line(1, &format!("set {g} max list {minimum} ({g} + {growth})"));
            }
            Op::SpawnPopulation { .. } | Op::InitPool { .. } | Op::Senesce { .. } | Op::OnDeathConvert { .. } => {}
        }
    }

    fn refuge(&self, target: &str) -> String {
        let min = self
            .prog
            .domain
            .population(target)
            .and_then(|p| p.biotic())
            .map(|b| b.minimum_population.max(0.0).round())
            .unwrap_or(0.0);
        format!("count {} > {}", self.names.breed(target), format_number(min))
    }

    fn interaction(&mut self, id: &str, kind: RelationshipKind, ops: &[PrimitiveOp], procs: &mut Vec<String>) {
        let spec = self
            .prog
            .domain
            .interactions
            .iter()
            .find(|i| i.id == id)
            .expect("known relationship");
        let (source, target) = (spec.source.clone(), spec.target.clone());
        let prob = ops.iter().find_map(|o| match o {
            PrimitiveOp::EncounterTest { probability, .. } => Some(self.num(probability)),
            _ => None,
        });
        let src_pool = self.names.is_pool(&source);
        let tgt_pool = self.names.is_pool(&target);
        match kind {
            RelationshipKind::Consumes => {
                let proc_name = self.names.eat[id].clone();
                let (rate, eff) = ops
                    .iter()
                    .find_map(|o| match o {
                        PrimitiveOp::CarbonTransfer { rate, efficiency, .. } => Some((self.num(rate), self.num(efficiency))),
                        _ => None,
                    })
                    .expect("consumes carries a transfer");
                let p = prob.expect("consumes carries an encounter test");
                let src_breed = self.names.breed(&source).to_string();
                self.line(1, &format!("ask {src_breed} [ {proc_name} ]"));
                let mut body = String::new();
                writeln!(body, "to {proc_name}").unwrap();
                if tgt_pool {
                    let g = self.names.pool(&target);
                    let minimum = self.num(&ParamRef {
                        owner: target.clone(),
                        field: "minimum_amount".into(),
                    });
                    writeln!(body, "  if random-float 1 < {p} [").unwrap();
                    writeln!(body, "    let taken {rate} * (max list 0 ({g} - {minimum}))").unwrap();
                    writeln!(body, "    set {g} {g} - taken").unwrap();
                    writeln!(body, "    set energy energy + {eff} * taken").unwrap();
                    writeln!(body, "  ]").unwrap();
                } else {
                    let prey = self.names.breed(&target);
                    writeln!(body, "  if {} [", self.refuge(&target)).unwrap();
                    writeln!(body, "    let candidates {prey}-on (patch-set patch-here neighbors)").unwrap();
                    writeln!(body, "    if any? candidates and random-float 1 < {p} [").unwrap();
                    writeln!(body, "      let prey one-of candidates").unwrap();
                    writeln!(body, "      let consumed {rate} * [energy] of prey").unwrap();
                    writeln!(body, "      ask prey [ set energy energy - consumed if energy <= 0 [ die ] ]").unwrap();
                    writeln!(body, "      set energy energy + {eff} * consumed").unwrap();
                    writeln!(body, "    ]").unwrap();
                    writeln!(body, "  ]").unwrap();
                }
                writeln!(body, "end\n").unwrap();
                procs.push(body);
            }
            RelationshipKind::Destroys => {
                let rate = ops
                    .iter()
                    .find_map(|o| match o {
                        PrimitiveOp::Degrade { rate, .. } => Some(self.num(rate)),
                        _ => None,
                    })
                    .expect("destroys carries a degrade op");
                let p = prob.expect("destroys carries an encounter test");
                if tgt_pool {
                    let g = self.names.pool(&target).to_string();
                    let minimum = self.num(&ParamRef {
                        owner: target.clone(),
                        field: "minimum_amount".into(),
                    });
                    let src = self.names.breed(&source).to_string();
                    self.line(1, &format!("ask {src} ["));
                    self.line(2, &format!("if random-float 1 < {p} [ set {g} {g} - {rate} * (max list 0 ({g} - {minimum})) ]"));
                    self.line(1, "]");
                } else if src_pool {
                    let tgt = self.names.breed(&target).to_string();
                    let refuge = self.refuge(&target);
                    self.line(1, &format!("ask {tgt} ["));
                    self.line(2, &format!("if {refuge} and random-float 1 < {p} ["));
                    self.line(3, &format!("set energy energy - {rate} * energy"));
                    self.line(3, "if energy <= 0 [ die ]");
                    self.line(2, "]");
                    self.line(1, "]");
                } else {
                    let src = self.names.breed(&source).to_string();
                    let tgt = self.names.breed(&target).to_string();
                    let refuge = self.refuge(&target);
                    self.line(1, &format!("ask {src} ["));
                    self.line(2, &format!("let candidates {tgt}-on (patch-set patch-here neighbors)"));
                    self.line(2, &format!("if {refuge} and any? candidates and random-float 1 < {p} ["));
                    self.line(3, "ask one-of candidates [");
                    self.line(4, &format!("set energy energy - {rate} * energy"));
                    self.line(4, "if energy <= 0 [ die ]");
                    self.line(3, "]");
                    self.line(2, "]");
                    self.line(1, "]");
                }
            }
            RelationshipKind::Produces => {
                let rate = ops
                    .iter()
                    .find_map(|o| match o {
                        PrimitiveOp::StochasticEmission { rate, .. } => Some(self.num(rate)),
                        _ => None,
                    })
                    .expect("produces carries an emission op");
                let src = self.names.breed(&source).to_string();
                if tgt_pool {
                    let g = self.names.pool(&target).to_string();
                    self.line(1, &format!("ask {src} [ set {g} {g} + random-poisson {rate} ]"));
                } else {
                    let tgt = self.names.breed(&target).to_string();
                    let b = self.prog.domain.population(&target).and_then(|p| p.biotic()).expect("biotic");
                    let carbon = format_number(b.carbon_biomass);
                    let heading = format_number(b.move_direction);
                    self.line(1, &format!("ask {src} ["));
                    self.line(2, &format!("hatch-{tgt} random-poisson {rate} [ set energy {carbon} set age 0 set heading {heading} ]"));
                    self.line(1, "]");
                }
            }
            RelationshipKind::Affects => {
                let m = ops
                    .iter()
                    .find_map(|o| match o {
                        PrimitiveOp::GrowthModifier { modifier, .. } => Some(self.num(modifier)),
                        _ => None,
                    })
                    .expect("affects carries a growth modifier");
                let p = prob.expect("affects carries an encounter test");
                match (src_pool, tgt_pool) {
                    (true, true) => {
                        let g = self.names.pool(&target).to_string();
                        let minimum = self.num(&ParamRef {
                            owner: target.clone(),
                            field: "minimum_amount".into(),
                        });
                        self.line(1, &format!("if random-float 1 < {p} [ set {g} max list {minimum} ({g} * (1 + {m})) ]"));
                    }
                    (false, true) => {
                        let g = self.names.pool(&target).to_string();
                        let minimum = self.num(&ParamRef {
                            owner: target.clone(),
                            field: "minimum_amount".into(),
                        });
                        let src = self.names.breed(&source).to_string();
                        self.line(1, &format!("ask {src} ["));
                        self.line(2, &format!("if random-float 1 < {p} [ set {g} max list {minimum} ({g} * (1 + {m})) ]"));
                        self.line(1, "]");
                    }
                    (true, false) => {
                        let tgt = self.names.breed(&target).to_string();
                        self.line(1, &format!("ask {tgt} [ if random-float 1 < {p} [ set energy energy * (1 + {m}) ] ]"));
                    }
                    (false, false) => {
                        let src = self.names.breed(&source).to_string();
                        let tgt = self.names.breed(&target).to_string();
                        self.line(1, &format!("ask {src} ["));
                        self.line(2, &format!("let candidates {tgt}-on (patch-set patch-here neighbors)"));
                        self.line(2, &format!("if any? candidates and random-float 1 < {p} ["));
                        self.line(3, &format!("ask one-of candidates [ set energy energy * (1 + {m}) ]"));
                        self.line(2, "]");
                        self.line(1, "]");
                    }
                }
            }
            RelationshipKind::BecomesOnDeath => {}
        }
    }

    fn die_phase(&mut self, ops: &[Op]) {
        for op in ops {
            let Op::Senesce { population, lifespan } = op else {
                continue;
            };
            let breed = self.names.breed(population).to_string();
            let l = self.num(lifespan);
            let conversions: Vec<(String, String, f64)> = ops
                .iter()
                .filter_map(|o| match o {
                    Op::OnDeathConvert { source, target, percent, body_mass, .. } if source == population => {
                        let amount = self.prog.resolve(percent).expect("resolves") * self.prog.resolve(body_mass).expect("resolves");
                        Some((source.clone(), target.clone(), amount))
                    }
                    _ => None,
                })
                .collect();
            self.line(1, &format!("ask {breed} ["));
            self.line(2, "set age age + 1");
            if conversions.is_empty() {
                self.line(2, &format!("if age >= {l} or energy <= 0 [ die ]"));
            } else {
                self.line(2, &format!("if age >= {l} or energy <= 0 ["));
                for (_, target, amount) in &conversions {
                    let amount = format_number(*amount);
                    if self.names.is_pool(target) {
                        let g = self.names.pool(target).to_string();
                        self.line(3, &format!("set {g} {g} + {amount}"));
                    } else {
                        let tgt = self.names.breed(target).to_string();
                        let heading = format_number(
                            self.prog
                                .domain
                                .population(target)
                                .and_then(|p| p.biotic())
                                .expect("biotic")
                                .move_direction,
                        );
                        self.line(3, &format!("hatch-{tgt} 1 [ set energy {amount} set age 0 set heading {heading} ]"));
                    }
                }
                self.line(3, "die");
                self.line(2, "]");
            }
            self.line(1, "]");
        }
    }
}

fn phase_procedure(phase: Phase) -> &'static str {
    match phase {
        Phase::Move => "move",
        Phase::Metabolize => "metabolize",
        Phase::Interact => "interact",
        Phase::Reproduce => "reproduce",
        Phase::Die => "die-off",
        Phase::Regrow => "regrow",
    }
}

/// Emits the NetLogo code tab for `prog`. Output is a pure function of the
/// program.
pub fn emit_netlogo(prog: &SimulationProgram) -> String {
    let mut e = Emitter {
        prog,
        names: Names::new(prog),
        out: String::new(),
    };
    e.header();
    e.setup();
    e.go();
    for block in &prog.phases {
        e.phase(block.phase, &block.ops);
    }
    while e.out.ends_with("\n\n") {
        e.out.pop();
    }
    e.out
}

/// NetLogo primitives and keywords accepted by [`check_netlogo`].
const LEXICON: &[&str] = &[
    "and", "any?", "ask", "breed", "clear-all", "cos", "count", "die", "end", "energy", "age", "false", "globals",
    "hatch", "heading", "if", "ifelse", "let", "list", "max", "min", "mod", "move-to", "neighbors", "nobody", "not",
    "of", "one-of", "or", "patch-here", "patch-set", "patches", "random", "random-float", "random-poisson",
    "random-xcor", "random-ycor", "repeat", "reset-ticks", "set", "setxy", "sin", "stop", "tick", "ticks", "to",
    "to-report", "true", "turtle-set", "turtles", "turtles-here", "turtles-own", "with", "xcor", "ycor",
];

const OPERATORS: &[&str] = &["+", "-", "*", "/", "<", ">", "<=", ">=", "=", "!="];

fn tokenize(src: &str) -> Result<Vec<(usize, String)>, NetLogoSyntaxError> {
    let mut tokens = Vec::new();
    for (n, raw) in src.lines().enumerate() {
        let line = n + 1;
        let mut chars = raw.char_indices().peekable();
        let mut current = String::new();
        let flush = |current: &mut String, tokens: &mut Vec<(usize, String)>| {
            if !current.is_empty() {
                tokens.push((line, std::mem::take(current)));
            }
        };
        while let Some((_, c)) = chars.next() {
            match c {
                ';' => break,
                '"' => {
                    flush(&mut current, &mut tokens);
                    let mut closed = false;
                    for (_, d) in chars.by_ref() {
                        if d == '"' {
                            closed = true;
                            break;
                        }
                    }
                    if !closed {
                        return Err(NetLogoSyntaxError {
                            line,
                            message: "unterminated string".into(),
                        });
                    }
                    tokens.push((line, "\"\"".into()));
                }
                '[' | ']' | '(' | ')' => {
                    flush(&mut current, &mut tokens);
                    tokens.push((line, c.to_string()));
                }
                c if c.is_whitespace() => flush(&mut current, &mut tokens),
                c => current.push(c),
            }
        }
        flush(&mut current, &mut tokens);
    }
    Ok(tokens)
}

fn is_number(t: &str) -> bool {
    t.parse::<f64>().is_ok_and(f64::is_finite)
}

/// Checks the emitted subset: balanced brackets and parentheses, `to`/`end`
/// pairing, declarations only at top level, and every word either a known
/// primitive, a declared name, a breed-derived primitive, a local, or a
/// number.
pub fn check_netlogo(src: &str) -> Result<(), NetLogoSyntaxError> {
    let tokens = tokenize(src)?;
    let err = |line: usize, message: String| NetLogoSyntaxError { line, message };

    let mut stack: Vec<(usize, char)> = Vec::new();
    for (line, t) in &tokens {
        match t.as_str() {
            "[" => stack.push((*line, '[')),
            "(" => stack.push((*line, '(')),
            "]" | ")" => {
                let want = if t == "]" { '[' } else { '(' };
                match stack.pop() {
                    Some((_, open)) if open == want => {}
                    _ => return Err(err(*line, format!("unbalanced `{t}`"))),
                }
            }
            _ => {}
        }
    }
    if let Some((line, open)) = stack.pop() {
        return Err(err(line, format!("unclosed `{open}`")));
    }

    // Declarations.
    let mut globals = BTreeSet::new();
    let mut breeds: Vec<(String, String)> = Vec::new();
    let mut procedures = BTreeSet::new();
    let mut i = 0;
    let mut in_proc = false;
    while i < tokens.len() {
        let (line, t) = &tokens[i];
        match t.as_str() {
            "to" | "to-report" => {
                if in_proc {
                    return Err(err(*line, "nested procedure definition".into()));
                }
                let name = tokens.get(i + 1).ok_or_else(|| err(*line, "procedure without a name".into()))?;
                if !procedures.insert(name.1.clone()) {
                    return Err(err(*line, format!("procedure `{}` defined twice", name.1)));
                }
                in_proc = true;
                i += 2;
                continue;
            }
            "end" => {
                if !in_proc {
                    return Err(err(*line, "`end` outside a procedure".into()));
                }
                in_proc = false;
            }
            "globals" | "turtles-own" | "breed" if !in_proc => {
                let mut j = i + 1;
                if tokens.get(j).map(|t| t.1.as_str()) != Some("[") {
                    return Err(err(*line, format!("`{t}` needs a bracketed list")));
                }
                j += 1;
                let mut names = Vec::new();
                while j < tokens.len() && tokens[j].1 != "]" {
                    names.push(tokens[j].1.clone());
                    j += 1;
                }
                match t.as_str() {
                    "globals" => globals.extend(names),
                    "breed" => {
                        if names.len() != 2 {
                            return Err(err(*line, "breed needs plural and singular names".into()));
                        }
                        breeds.push((names[0].clone(), names[1].clone()));
                    }
                    _ => {}
                }
                i = j + 1;
                continue;
            }
            _ if !in_proc => return Err(err(*line, format!("unexpected `{t}` at top level"))),
            _ => {}
        }
        i += 1;
    }
    if in_proc {
        return Err(err(tokens.last().map_or(1, |t| t.0), "procedure missing `end`".into()));
    }

    let mut known: BTreeSet<String> = LEXICON.iter().map(|s| s.to_string()).collect();
    known.extend(globals);
    known.extend(procedures.iter().cloned());
    for (plural, singular) in &breeds {
        known.insert(plural.clone());
        known.insert(singular.clone());
        for prefix in ["create-", "hatch-"] {
            known.insert(format!("{prefix}{plural}"));
        }
        for suffix in ["-here", "-on"] {
            known.insert(format!("{plural}{suffix}"));
        }
    }

    // Words inside procedures.
    let mut locals = BTreeSet::new();
    let mut i = 0;
    while i < tokens.len() {
        let (line, t) = &tokens[i];
        match t.as_str() {
            "to" | "to-report" => {
                locals.clear();
                i += 2;
                continue;
            }
            "let" => {
                if let Some((_, name)) = tokens.get(i + 1) {
                    locals.insert(name.clone());
                }
                i += 2;
                continue;
            }
            "[" | "]" | "(" | ")" | "\"\"" => {}
            w if OPERATORS.contains(&w) || is_number(w) || known.contains(w) || locals.contains(w) => {}
            "globals" | "turtles-own" | "breed" => {
                // Skip declaration lists.
                while i < tokens.len() && tokens[i].1 != "]" {
                    i += 1;
                }
            }
            w => return Err(err(*line, format!("unknown word `{w}`"))),
        }
        i += 1;
    }
    Ok(())
}
