//! Reference interpreter that runs the IR directly, resolving every
//! population and parameter by name on each use and scanning all agents for
//! neighbours. It is slow on purpose and exists to cross-check the engine:
//! both must produce the same trace for the same seed.

use std::collections::BTreeMap;

use crate::compiler::{Op, ParamRef, Phase, PrimitiveOp, Role, SimulationProgram};
use crate::engine::{constants, EngineError, SimConfig, SimFrame, Status, Stream, TimeSeries};
use crate::model::RelationshipKind;

#[derive(Debug, Clone)]
struct Body {
    age: u64,
    carbon: f64,
    x: f64,
    y: f64,
    heading: f64,
}

pub struct IrInterpreter<'a> {
    prog: &'a SimulationProgram,
    cfg: SimConfig,
    tick: u64,
    agents: BTreeMap<String, BTreeMap<u64, Body>>,
    next_id: BTreeMap<String, u64>,
    pools: BTreeMap<String, f64>,
    streams: BTreeMap<String, Stream>,
    dead: BTreeMap<String, Vec<Body>>,
    pending: Vec<(String, Body, Option<usize>)>,
}

fn torus(v: f64, size: f64) -> f64 {
    let r = v.rem_euclid(size);
    if r >= size {
        0.0
    } else {
        r
    }
}

impl<'a> IrInterpreter<'a> {
    pub fn new(prog: &'a SimulationProgram, cfg: &SimConfig) -> Result<Self, EngineError> {
        cfg.check()?;
        let mut me = IrInterpreter {
            prog,
            cfg: cfg.clone(),
            tick: 0,
            agents: BTreeMap::new(),
            next_id: BTreeMap::new(),
            pools: BTreeMap::new(),
            streams: BTreeMap::new(),
            dead: BTreeMap::new(),
            pending: Vec::new(),
        };
        for (i, p) in prog.domain.populations.iter().enumerate() {
            me.streams.insert(p.id.clone(), Stream::new(cfg.seed, i));
        }
        let (w, h) = me.dims();
        let mut free: Vec<usize> = (0..w * h).collect();
        for op in &prog.setup {
            match op {
                Op::InitPool { pool } => {
                    let amount = me.param(pool, "amount");
                    me.pools.insert(pool.clone(), amount);
                }
                Op::SpawnPopulation { population } => {
                    me.agents.insert(population.clone(), BTreeMap::new());
                    me.next_id.insert(population.clone(), 0);
                    let count = me.param(population, "starting_population").max(0.0).round() as u64;
                    let carbon = me.param(population, "carbon_biomass");
                    let age_bound = (me.param(population, "lifespan").max(0.0).ceil() as u64).max(1);
                    let heading = me.param(population, "move_direction");
                    let density = me.is_density(population);
                    for _ in 0..count {
                        let rng = me.streams.get_mut(population).expect("stream");
                        let (x, y) = if density {
                            if free.is_empty() {
                                break;
                            }
                            let k = rng.below(free.len() as u64) as usize;
                            let cell = free.swap_remove(k);
                            ((cell % w) as f64 + 0.5, (cell / w) as f64 + 0.5)
                        } else {
                            let x = torus(rng.uniform() * w as f64, w as f64);
                            let y = torus(rng.uniform() * h as f64, h as f64);
                            (x, y)
                        };
                        let age = rng.below(age_bound);
                        me.add(population, Body { age, carbon: carbon.max(0.0), x, y, heading });
                    }
                }
                _ => unreachable!("setup holds only spawn and pool ops"),
            }
        }
        Ok(me)
    }

    fn dims(&self) -> (usize, usize) {
        (self.cfg.grid_width as usize, self.cfg.grid_height as usize)
    }

    fn param(&self, owner: &str, field: &str) -> f64 {
        self.value(&ParamRef {
            owner: owner.to_string(),
            field: field.to_string(),
        })
    }

    fn value(&self, r: &ParamRef) -> f64 {
        self.prog.resolve(r).expect("IR references resolve")
    }

    fn role(&self, id: &str) -> Role {
        self.prog.domain.population(id).expect("known id").role
    }

    fn is_density(&self, id: &str) -> bool {
        self.role(id) == Role::DensityPool
    }

    fn is_pool(&self, id: &str) -> bool {
        self.role(id) == Role::SubstancePool
    }

    fn add(&mut self, population: &str, body: Body) {
        let id = self.next_id.get_mut(population).expect("population");
        let current = *id;
        *id += 1;
        self.agents.get_mut(population).expect("population").insert(current, body);
    }

    fn cell(&self, x: f64, y: f64) -> (usize, usize) {
        let (w, h) = self.dims();
        ((x.floor().max(0.0) as usize).min(w - 1), (y.floor().max(0.0) as usize).min(h - 1))
    }

    fn near(&self, a: (usize, usize), b: (usize, usize)) -> bool {
        let (w, h) = self.dims();
        let dx = a.0.abs_diff(b.0);
        let dy = a.1.abs_diff(b.1);
        dx.min(w - dx) <= 1 && dy.min(h - dy) <= 1
    }

    /// True when any density-population agent, living or about to be
    /// appended, sits in the cell.
    fn occupied(&self, cell: (usize, usize)) -> bool {
        let (w, _) = self.dims();
        let in_agents = self
            .agents
            .iter()
            .filter(|(p, _)| self.is_density(p))
            .flat_map(|(_, m)| m.values())
            .any(|b| self.cell(b.x, b.y) == cell);
        let in_pending = self
            .pending
            .iter()
            .any(|(_, _, c)| *c == Some(cell.1 * w + cell.0));
        in_agents || in_pending
    }

    /// Moore neighbours in the engine's scan order, centre included.
    fn around(&self, cell: (usize, usize)) -> Vec<(usize, usize)> {
        let (w, h) = self.dims();
        let mut out = Vec::new();
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let c = (
                    (cell.0 as i64 + dx).rem_euclid(w as i64) as usize,
                    (cell.1 as i64 + dy).rem_euclid(h as i64) as usize,
                );
                if !out.contains(&c) {
                    out.push(c);
                }
            }
        }
        out
    }

    fn count(&self, population: &str) -> u64 {
        self.agents.get(population).map_or(0, |m| m.len() as u64)
    }

    pub fn frame(&self) -> SimFrame {
        let mut f = SimFrame {
            tick: self.tick,
            counts: Vec::new(),
            carbon: Vec::new(),
            pools: Vec::new(),
        };
        for p in &self.prog.domain.populations {
            if p.role == Role::SubstancePool {
                f.pools.push(self.pools[&p.id]);
            } else {
                f.counts.push(self.count(&p.id));
                f.carbon.push(self.agents[&p.id].values().map(|b| b.carbon).sum::<f64>() + 0.0);
            }
        }
        f
    }

    pub fn is_over(&self) -> bool {
        let biotic: Vec<_> = self.agents.keys().collect();
        self.tick >= self.cfg.max_ticks || (!biotic.is_empty() && biotic.iter().all(|p| self.count(p) == 0))
    }

    pub fn step(&mut self) -> SimFrame {
        self.dead.clear();
        for phase in &self.prog.schedule {
            let ops = self.prog.phase(*phase);
            for op in ops {
                self.exec(op);
            }
            if *phase == Phase::Interact {
                for (population, body, _) in std::mem::take(&mut self.pending) {
                    self.add(&population, body);
                }
            }
        }
        self.tick += 1;
        self.frame()
    }

    fn exec(&mut self, op: &Op) {
        let (w, h) = self.dims();
        match op {
            Op::Move { population, velocity, .. } => {
                let v = self.value(velocity);
                if v == 0.0 {
                    return;
                }
                let max_turn = constants().max_turn_degrees;
                let ids: Vec<u64> = self.agents[population].keys().copied().collect();
                for id in ids {
                    let u = self.streams.get_mut(population).unwrap().uniform();
                    let b = self.agents.get_mut(population).unwrap().get_mut(&id).unwrap();
                    let turn = (u * 2.0 - 1.0) * max_turn;
                    b.heading = (b.heading + turn).rem_euclid(360.0);
                    let rad = b.heading.to_radians();
                    b.x = torus(b.x + v * rad.sin(), w as f64);
                    b.y = torus(b.y + v * rad.cos(), h as f64);
                }
            }
            Op::Photosynthesize { population, rate, light } => {
                let mut scale = 1.0;
                for pool in light {
                    let initial = self.param(pool, "amount");
                    if initial > 0.0 {
                        scale *= (self.pools[pool] / initial).clamp(0.0, 2.0);
                    }
                }
                let gain = self.value(rate) * scale;
                for b in self.agents.get_mut(population).unwrap().values_mut() {
                    b.carbon += gain;
                }
            }
            Op::Respire { population, rate } => {
                let r = self.value(rate);
                for b in self.agents.get_mut(population).unwrap().values_mut() {
                    b.carbon = (b.carbon - r).max(0.0);
                }
            }
            Op::Interaction { relationship, kind, ops } => self.interaction(relationship, *kind, ops),
            Op::Reproduce { population, maturity, interval, offspring } => {
                let offspring = self.value(offspring).max(0.0).round() as u64;
                if offspring == 0 {
                    return;
                }
                let maturity = self.value(maturity).max(0.0).ceil() as u64;
                let interval = (self.value(interval).max(0.0).round() as u64).max(1);
                let fraction = constants().offspring_carbon_fraction;
                let heading = self.param(population, "move_direction");
                let density = self.is_density(population);
                let ids: Vec<u64> = self.agents[population].keys().copied().collect();
                for id in ids {
                    let parent = self.agents[population][&id].clone();
                    if parent.age < maturity || !(parent.age - maturity).is_multiple_of(interval) {
                        continue;
                    }
                    for _ in 0..offspring {
                        let parent = self.agents[population][&id].clone();
                        let (x, y) = if density {
                            let own = self.cell(parent.x, parent.y);
                            let free: Vec<_> = self
                                .around(own)
                                .into_iter()
                                .filter(|&c| c != own && !self.occupied(c))
                                .collect();
                            if free.is_empty() {
                                break;
                            }
                            let k = self.streams.get_mut(population).unwrap().below(free.len() as u64) as usize;
                            (free[k].0 as f64 + 0.5, free[k].1 as f64 + 0.5)
                        } else {
                            (parent.x, parent.y)
                        };
                        let share = parent.carbon * fraction;
                        self.agents.get_mut(population).unwrap().get_mut(&id).unwrap().carbon -= share;
                        self.add(population, Body { age: 0, carbon: share, x, y, heading });
                    }
                }
            }
            Op::Senesce { population, lifespan } => {
                let lifespan = self.value(lifespan);
                let ids: Vec<u64> = self.agents[population].keys().copied().collect();
                for id in ids {
                    let b = self.agents.get_mut(population).unwrap().get_mut(&id).unwrap();
                    b.age += 1;
                    if b.age as f64 >= lifespan || b.carbon <= 0.0 {
                        let body = self.agents.get_mut(population).unwrap().remove(&id).unwrap();
                        self.dead.entry(population.clone()).or_default().push(body);
                    }
                }
            }
            Op::OnDeathConvert { source, target, percent, body_mass, .. } => {
                let amount = self.value(percent) * self.value(body_mass);
                let dead = self.dead.get(source).cloned().unwrap_or_default();
                for d in dead {
                    if self.is_pool(target) {
                        *self.pools.get_mut(target).unwrap() += amount;
                        continue;
                    }
                    let (x, y) = if self.is_density(target) {
                        let own = self.cell(d.x, d.y);
                        let cell = if !self.occupied(own) {
                            own
                        } else {
                            let free: Vec<_> = self
                                .around(own)
                                .into_iter()
                                .filter(|&c| c != own && !self.occupied(c))
                                .collect();
                            if free.is_empty() {
                                continue;
                            }
                            let k = self.streams.get_mut(source).unwrap().below(free.len() as u64) as usize;
                            free[k]
                        };
                        (cell.0 as f64 + 0.5, cell.1 as f64 + 0.5)
                    } else {
                        (d.x, d.y)
                    };
                    let heading = self.param(target, "move_direction");
                    self.add(target, Body { age: 0, carbon: amount, x, y, heading });
                }
            }
            Op::Regrow { pool, growth, minimum } => {
                let (g, m) = (self.value(growth), self.value(minimum));
                let a = self.pools.get_mut(pool).unwrap();
                *a = (*a + g).max(m);
            }
            Op::SpawnPopulation { .. } | Op::InitPool { .. } => {}
        }
    }

    fn interaction(&mut self, relationship: &str, kind: RelationshipKind, ops: &[PrimitiveOp]) {
        let spec = self
            .prog
            .domain
            .interactions
            .iter()
            .find(|i| i.id == relationship)
            .expect("known relationship");
        let (source, target) = (spec.source.clone(), spec.target.clone());
        let probability = ops.iter().find_map(|o| match o {
            PrimitiveOp::EncounterTest { probability, .. } => Some(self.value(probability)),
            _ => None,
        });
        let (src_pool, tgt_pool) = (self.is_pool(&source), self.is_pool(&target));
        match kind {
            RelationshipKind::Produces => {
                let rate = ops
                    .iter()
                    .find_map(|o| match o {
                        PrimitiveOp::StochasticEmission { rate, .. } => Some(self.value(rate)),
                        _ => None,
                    })
                    .unwrap();
                if src_pool {
                    return;
                }
                self.produce(&source, &target, rate);
            }
            RelationshipKind::Consumes | RelationshipKind::Destroys | RelationshipKind::Affects => {
                let p = probability.expect("encounter test present");
                let step = |o: &PrimitiveOp| -> Option<(char, f64, f64)> {
                    match o {
                        PrimitiveOp::CarbonTransfer { rate, efficiency, .. } => {
                            Some(('c', self.value(rate), self.value(efficiency)))
                        }
                        PrimitiveOp::Degrade { rate, .. } => Some(('d', self.value(rate), 0.0)),
                        PrimitiveOp::GrowthModifier { modifier, .. } => Some(('a', self.value(modifier), 0.0)),
                        _ => None,
                    }
                };
                let (tag, a, b) = ops.iter().find_map(step).expect("effect op present");
                let removes = ops.iter().any(|o| matches!(o, PrimitiveOp::RemoveDepleted { .. }));
                match (src_pool, tgt_pool) {
                    (false, false) => self.agent_on_agent(&source, &target, p, tag, a, b, removes),
                    (true, false) => self.pool_on_agent(&target, p, tag, a, removes),
                    (false, true) => {
                        let minimum = self.param(&target, "minimum_amount");
                        let ids: Vec<u64> = self.agents[&source].keys().copied().collect();
                        for id in ids {
                            if self.streams.get_mut(&source).unwrap().uniform() >= p {
                                continue;
                            }
                            let amount = self.pools[&target];
                            match tag {
                                'c' => {
                                    let available = amount - minimum;
                                    let taken = if available > 0.0 { a * available } else { 0.0 };
                                    *self.pools.get_mut(&target).unwrap() -= taken;
                                    self.agents.get_mut(&source).unwrap().get_mut(&id).unwrap().carbon += b * taken;
                                }
                                'd' => {
                                    let available = amount - minimum;
                                    if available > 0.0 {
                                        *self.pools.get_mut(&target).unwrap() -= a * available;
                                    }
                                }
                                _ => *self.pools.get_mut(&target).unwrap() = (amount * (1.0 + a)).max(minimum),
                            }
                        }
                    }
                    (true, true) => {
                        if tag == 'a' && self.streams.get_mut(&source).unwrap().uniform() < p {
                            let minimum = self.param(&target, "minimum_amount");
                            let amount = self.pools[&target];
                            *self.pools.get_mut(&target).unwrap() = (amount * (1.0 + a)).max(minimum);
                        }
                    }
                }
            }
            RelationshipKind::BecomesOnDeath => {}
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn agent_on_agent(&mut self, source: &str, target: &str, p: f64, tag: char, a: f64, b: f64, removes: bool) {
        let minimum = self.param(target, "minimum_population").max(0.0).round() as u64;
        let ids: Vec<u64> = self.agents[source].keys().copied().collect();
        for id in ids {
            if removes && self.count(target) <= minimum {
                continue;
            }
            let me = self.agents[source][&id].clone();
            let here = self.cell(me.x, me.y);
            let candidates: Vec<u64> = self.agents[target]
                .iter()
                .filter(|(_, t)| self.near(here, self.cell(t.x, t.y)))
                .map(|(k, _)| *k)
                .collect();
            if candidates.is_empty() {
                continue;
            }
            let rng = self.streams.get_mut(source).unwrap();
            if rng.uniform() >= p {
                continue;
            }
            let victim = candidates[rng.below(candidates.len() as u64) as usize];
            let t = self.agents.get_mut(target).unwrap().get_mut(&victim).unwrap();
            match tag {
                'c' => {
                    let consumed = a * t.carbon;
                    t.carbon -= consumed;
                    self.agents.get_mut(source).unwrap().get_mut(&id).unwrap().carbon += b * consumed;
                }
                'd' => {
                    let destroyed = a * t.carbon;
                    t.carbon -= destroyed;
                }
                _ => t.carbon *= 1.0 + a,
            }
            if removes && self.agents[target][&victim].carbon <= 0.0 {
                self.agents.get_mut(target).unwrap().remove(&victim);
            }
        }
    }

    fn pool_on_agent(&mut self, target: &str, p: f64, tag: char, a: f64, removes: bool) {
        let minimum = self.param(target, "minimum_population").max(0.0).round() as u64;
        let ids: Vec<u64> = self.agents[target].keys().copied().collect();
        for id in ids {
            if !self.agents[target].contains_key(&id) || (removes && self.count(target) <= minimum) {
                continue;
            }
            if self.streams.get_mut(target).unwrap().uniform() >= p {
                continue;
            }
            let t = self.agents.get_mut(target).unwrap().get_mut(&id).unwrap();
            if tag == 'd' {
                let destroyed = a * t.carbon;
                t.carbon -= destroyed;
            } else {
                t.carbon *= 1.0 + a;
            }
            if removes && t.carbon <= 0.0 {
                self.agents.get_mut(target).unwrap().remove(&id);
            }
        }
    }

    fn produce(&mut self, source: &str, target: &str, rate: f64) {
        let (w, _) = self.dims();
        let ids: Vec<u64> = self.agents[source].keys().copied().collect();
        for id in ids {
            let k = self.streams.get_mut(source).unwrap().poisson(rate);
            if self.is_pool(target) {
                *self.pools.get_mut(target).unwrap() += k as f64;
                continue;
            }
            let src = self.agents[source][&id].clone();
            let carbon = self.param(target, "carbon_biomass");
            let heading = self.param(target, "move_direction");
            for _ in 0..k {
                let (x, y, reserved) = if self.is_density(target) {
                    let here = self.cell(src.x, src.y);
                    let free: Vec<_> = self.around(here).into_iter().filter(|&c| !self.occupied(c)).collect();
                    if free.is_empty() {
                        break;
                    }
                    let c = free[self.streams.get_mut(source).unwrap().below(free.len() as u64) as usize];
                    (c.0 as f64 + 0.5, c.1 as f64 + 0.5, Some(c.1 * w + c.0))
                } else {
                    (src.x, src.y, None)
                };
                self.pending.push((
                    target.to_string(),
                    Body {
                        age: 0,
                        carbon,
                        x,
                        y,
                        heading,
                    },
                    reserved,
                ));
            }
        }
    }
}

/// Runs the IR to completion with the same stopping rule and snapshot grid
/// as the engine.
pub fn run_ir(prog: &SimulationProgram, cfg: &SimConfig) -> Result<TimeSeries, EngineError> {
    let mut it = IrInterpreter::new(prog, cfg)?;
    let mut frames = vec![it.frame()];
    while !it.is_over() {
        let f = it.step();
        if f.tick % cfg.snapshot_every == 0 {
            frames.push(f);
        }
    }
    let ids = |pool: bool| {
        prog.domain
            .populations
            .iter()
            .filter(|p| (p.role == Role::SubstancePool) == pool)
            .map(|p| p.id.clone())
            .collect()
    };
    Ok(TimeSeries {
        populations: ids(false),
        pools: ids(true),
        config: cfg.clone(),
        frames,
        status: Status::Finished,
    })
}
