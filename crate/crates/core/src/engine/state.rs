use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::rng::Stream;
use super::{constants, EngineError, SimConfig, SimFrame, TimeSeries};
use crate::compiler::{EngineInstr, EngineProgram, Phase, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Ready,
    Running,
    Paused,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Start,
    Stop,
    Reset,
    Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: u64,
    /// Whole months lived.
    pub age: u64,
    pub carbon: f64,
    pub x: f64,
    pub y: f64,
    /// Degrees clockwise from north.
    pub heading: f64,
    #[serde(skip, default = "alive")]
    alive: bool,
}

fn alive() -> bool {
    true
}

/// Carbon moved by each process during the last tick, in kg. The change in
/// total agent carbon over the tick equals [`TickFlux::net`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TickFlux {
    pub photosynthesis: f64,
    pub respiration: f64,
    /// Carbon removed from prey agents by `Consumes`.
    pub consumed: f64,
    /// Part of `consumed` kept by the consumers.
    pub assimilated: f64,
    /// Carbon gained by consumers grazing substance pools.
    pub grazed: f64,
    pub destroyed: f64,
    /// Net carbon change caused by `Affects` on agents.
    pub affected: f64,
    /// Carbon of agents created by `Produces`.
    pub produced: f64,
    /// Carbon of agents created by `BecomesOnDeath`.
    pub on_death: f64,
    /// Carbon held by agents removed in the die phase.
    pub senescence: f64,
}

impl TickFlux {
    pub fn net(&self) -> f64 {
        self.photosynthesis - self.respiration - self.consumed + self.assimilated + self.grazed - self.destroyed
            + self.affected
            + self.produced
            + self.on_death
            - self.senescence
    }
}

#[derive(Debug, Clone)]
struct PopState {
    agents: Vec<Agent>,
    next_id: u64,
    live: u64,
    rng: Stream,
}

impl PopState {
    fn push(&mut self, mut agent: Agent) {
        agent.id = self.next_id;
        agent.alive = true;
        self.next_id += 1;
        self.live += 1;
        self.agents.push(agent);
    }
}

#[derive(Debug, Clone)]
struct PoolState {
    amount: f64,
    rng: Stream,
}

#[derive(Debug, Clone)]
pub struct SimState {
    prog: Arc<EngineProgram>,
    cfg: SimConfig,
    tick: u64,
    status: Status,
    pops: Vec<PopState>,
    pools: Vec<PoolState>,
    /// One flag per cell; set while a density-population agent sits there.
    occupied: Vec<bool>,
    flux: TickFlux,
    dead: Vec<Vec<Agent>>,
    pending: Vec<(usize, Agent)>,
}

/// Keeps coordinates in [0, size) on the torus.
fn wrap(v: f64, size: f64) -> f64 {
    let r = v.rem_euclid(size);
    if r >= size {
        0.0
    } else {
        r
    }
}

/// Cells within Chebyshev distance 1 on the torus, centre included, scanned
/// row by row from (-1, -1); duplicates on grids narrower than 3 are dropped.
pub(crate) fn neighbor_cells(cell: usize, w: usize, h: usize) -> Vec<usize> {
    let (cx, cy) = ((cell % w) as i64, (cell / w) as i64);
    let mut out = Vec::with_capacity(9);
    for dy in -1..=1 {
        for dx in -1..=1 {
            let x = (cx + dx).rem_euclid(w as i64) as usize;
            let y = (cy + dy).rem_euclid(h as i64) as usize;
            let c = y * w + x;
            if !out.contains(&c) {
                out.push(c);
            }
        }
    }
    out
}

/// Agent indices bucketed by cell (compressed rows), ascending within a cell.
struct CellIndex {
    start: Vec<usize>,
    items: Vec<usize>,
}

impl CellIndex {
    fn build(agents: &[Agent], w: usize, h: usize) -> Self {
        let cells = w * h;
        let mut start = vec![0usize; cells + 1];
        let cell_ids: Vec<usize> = agents.iter().map(|a| cell_of(a.x, a.y, w, h)).collect();
        for &c in &cell_ids {
            start[c + 1] += 1;
        }
        for i in 0..cells {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let mut items = vec![0usize; agents.len()];
        for (i, &c) in cell_ids.iter().enumerate() {
            items[fill[c]] = i;
            fill[c] += 1;
        }
        CellIndex { start, items }
    }

    fn cell(&self, c: usize) -> &[usize] {
        &self.items[self.start[c]..self.start[c + 1]]
    }
}

pub(crate) fn cell_of(x: f64, y: f64, w: usize, h: usize) -> usize {
    let cx = (x.floor().max(0.0) as usize).min(w - 1);
    let cy = (y.floor().max(0.0) as usize).min(h - 1);
    cy * w + cx
}

fn centre(cell: usize, w: usize) -> (f64, f64) {
    ((cell % w) as f64 + 0.5, (cell / w) as f64 + 0.5)
}

fn two_mut<T>(v: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    assert_ne!(a, b, "interaction endpoints must differ");
    if a < b {
        let (l, r) = v.split_at_mut(b);
        (&mut l[a], &mut r[0])
    } else {
        let (l, r) = v.split_at_mut(a);
        (&mut r[0], &mut l[b])
    }
}

#[derive(Clone, Copy)]
enum Effect {
    Consume { rate: f64, efficiency: f64 },
    Destroy { rate: f64 },
    Affect { modifier: f64 },
}

impl SimState {
    pub fn init(prog: &EngineProgram, cfg: &SimConfig) -> Result<Self, EngineError> {
        Self::init_shared(Arc::new(prog.clone()), cfg)
    }

    fn init_shared(prog: Arc<EngineProgram>, cfg: &SimConfig) -> Result<Self, EngineError> {
        cfg.check()?;
        let cap = constants().max_agents;
        let requested: u64 = prog
            .setup
            .iter()
            .map(|i| match i {
                EngineInstr::Spawn { count, .. } => *count,
                _ => 0,
            })
            .sum();
        if requested > cap as u64 {
            return Err(EngineError::CapacityExceeded {
                agents: requested.min(usize::MAX as u64) as usize,
                cap,
            });
        }
        let (w, h) = (cfg.grid_width as usize, cfg.grid_height as usize);
        let mut state = SimState {
            pops: prog
                .populations
                .iter()
                .map(|p| PopState {
                    agents: Vec::new(),
                    next_id: 0,
                    live: 0,
                    rng: Stream::new(cfg.seed, p.component_index),
                })
                .collect(),
            pools: prog
                .pools
                .iter()
                .map(|p| PoolState {
                    amount: p.amount,
                    rng: Stream::new(cfg.seed, p.component_index),
                })
                .collect(),
            occupied: vec![false; w * h],
            dead: vec![Vec::new(); prog.populations.len()],
            prog: prog.clone(),
            cfg: cfg.clone(),
            tick: 0,
            status: Status::Ready,
            flux: TickFlux::default(),
            pending: Vec::new(),
        };
        let mut free: Vec<usize> = (0..w * h).collect();
        for instr in &prog.setup {
            match *instr {
                EngineInstr::Spawn { population, count, carbon, age_bound, heading } => {
                    let density = prog.populations[population].density;
                    let pop = &mut state.pops[population];
                    for _ in 0..count {
                        let (x, y) = if density {
                            if free.is_empty() {
                                break;
                            }
                            let k = pop.rng.below(free.len() as u64) as usize;
                            let cell = free.swap_remove(k);
                            state.occupied[cell] = true;
                            centre(cell, w)
                        } else {
                            let x = wrap(pop.rng.uniform() * w as f64, w as f64);
                            let y = wrap(pop.rng.uniform() * h as f64, h as f64);
                            (x, y)
                        };
                        let age = pop.rng.below(age_bound);
                        pop.push(Agent {
                            id: 0,
                            age,
                            carbon: carbon.max(0.0),
                            x,
                            y,
                            heading,
                            alive: true,
                        });
                    }
                }
                EngineInstr::InitPool { pool, amount } => state.pools[pool].amount = amount,
                ref other => {
                    return Err(EngineError::InvariantBreach(format!("{other:?} in setup block")));
                }
            }
        }
        if state.run_is_over() {
            state.status = Status::Finished;
        }
        Ok(state)
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn program(&self) -> &EngineProgram {
        &self.prog
    }

    /// Carbon fluxes of the most recent tick.
    pub fn last_flux(&self) -> &TickFlux {
        &self.flux
    }

    pub fn agents(&self, population: usize) -> &[Agent] {
        &self.pops[population].agents
    }

    pub fn pool_amount(&self, pool: usize) -> f64 {
        self.pools[pool].amount
    }

    pub fn total_carbon(&self) -> f64 {
        self.pops.iter().flat_map(|p| &p.agents).map(|a| a.carbon).sum()
    }

    fn has_biotic(&self) -> bool {
        !self.pops.is_empty()
    }

    fn run_is_over(&self) -> bool {
        self.tick >= self.cfg.max_ticks || (self.has_biotic() && self.pops.iter().all(|p| p.live == 0))
    }

    pub fn frame(&self) -> SimFrame {
        SimFrame {
            tick: self.tick,
            counts: self.pops.iter().map(|p| p.live).collect(),
            carbon: self
                .pops
                .iter()
                .map(|p| p.agents.iter().filter(|a| a.alive).map(|a| a.carbon).sum::<f64>() + 0.0)
                .collect(),
            pools: self.pools.iter().map(|p| p.amount).collect(),
        }
    }

    /// SHA-256 over tick, agents, pools and generator states.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.tick.to_le_bytes());
        for p in &self.pops {
            h.update(p.next_id.to_le_bytes());
            h.update(p.rng.state_bytes());
            for a in p.agents.iter().filter(|a| a.alive) {
                h.update(a.id.to_le_bytes());
                h.update(a.age.to_le_bytes());
                for v in [a.carbon, a.x, a.y, a.heading] {
                    h.update(v.to_bits().to_le_bytes());
                }
            }
        }
        for p in &self.pools {
            h.update(p.amount.to_bits().to_le_bytes());
            h.update(p.rng.state_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn control(&mut self, command: Command) -> Result<Option<SimFrame>, EngineError> {
        let illegal = || EngineError::IllegalTransition {
            from: self.status,
            command,
        };
        match (self.status, command) {
            (_, Command::Reset) => {
                *self = Self::init_shared(self.prog.clone(), &self.cfg)?;
                Ok(None)
            }
            (Status::Ready | Status::Paused, Command::Start) => {
                self.status = Status::Running;
                Ok(None)
            }
            (Status::Running, Command::Stop) => {
                self.status = Status::Paused;
                Ok(None)
            }
            (Status::Ready | Status::Paused, Command::Step) => {
                let frame = self.step()?;
                if self.status != Status::Finished {
                    self.status = Status::Paused;
                }
                Ok(frame)
            }
            _ => Err(illegal()),
        }
    }

    pub fn into_series(self, frames: Vec<SimFrame>) -> TimeSeries {
        TimeSeries {
            populations: self.prog.populations.iter().map(|p| p.id.clone()).collect(),
            pools: self.prog.pools.iter().map(|p| p.id.clone()).collect(),
            config: self.cfg,
            frames,
            status: self.status,
        }
    }

    /// Advances one month. Returns the frame when the new tick falls on the
    /// snapshot grid.
    pub fn step(&mut self) -> Result<Option<SimFrame>, EngineError> {
        if self.status == Status::Finished {
            return Err(EngineError::IllegalTransition {
                from: self.status,
                command: Command::Step,
            });
        }
        self.flux = TickFlux::default();
        for d in &mut self.dead {
            d.clear();
        }
        let prog = self.prog.clone();
        for block in &prog.phases {
            for instr in &block.instrs {
                self.exec(instr);
            }
            match block.phase {
                Phase::Interact => {
                    self.compact();
                    for (pop, agent) in std::mem::take(&mut self.pending) {
                        self.pops[pop].push(agent);
                    }
                }
                Phase::Die => self.compact(),
                _ => {}
            }
        }
        self.tick += 1;
        let total: usize = self.pops.iter().map(|p| p.agents.len()).sum();
        let cap = constants().max_agents;
        if total > cap {
            self.status = Status::Finished;
            return Err(EngineError::CapacityExceeded { agents: total, cap });
        }
        if self.run_is_over() {
            self.status = Status::Finished;
        }
        Ok(self.tick.is_multiple_of(self.cfg.snapshot_every).then(|| self.frame()))
    }

    fn dims(&self) -> (usize, usize) {
        (self.cfg.grid_width as usize, self.cfg.grid_height as usize)
    }

    fn compact(&mut self) {
        for p in &mut self.pops {
            p.agents.retain(|a| a.alive);
        }
    }

    fn exec(&mut self, instr: &EngineInstr) {
        let (w, h) = self.dims();
        match *instr {
            EngineInstr::Spawn { .. } | EngineInstr::InitPool { .. } => {}
            EngineInstr::Move { population, velocity, max_turn } => {
                if velocity == 0.0 {
                    return;
                }
                let pop = &mut self.pops[population];
                for a in pop.agents.iter_mut().filter(|a| a.alive) {
                    let turn = (pop.rng.uniform() * 2.0 - 1.0) * max_turn;
                    a.heading = (a.heading + turn).rem_euclid(360.0);
                    let rad = a.heading.to_radians();
                    a.x = wrap(a.x + velocity * rad.sin(), w as f64);
                    a.y = wrap(a.y + velocity * rad.cos(), h as f64);
                }
            }
            EngineInstr::Photosynthesize { population, rate, ref light } => {
                let mut scale = 1.0;
                for &(pool, initial) in light {
                    if initial > 0.0 {
                        scale *= (self.pools[pool].amount / initial).clamp(0.0, 2.0);
                    }
                }
                let gain = rate * scale;
                for a in self.pops[population].agents.iter_mut().filter(|a| a.alive) {
                    a.carbon += gain;
                    self.flux.photosynthesis += gain;
                }
            }
            EngineInstr::Respire { population, rate } => {
                for a in self.pops[population].agents.iter_mut().filter(|a| a.alive) {
                    let after = (a.carbon - rate).max(0.0);
                    self.flux.respiration += a.carbon - after;
                    a.carbon = after;
                }
            }
            EngineInstr::Consume { source, target, probability, rate, efficiency } => match target {
                Target::Population(t) => {
                    self.encounters(source, t, probability, Effect::Consume { rate, efficiency })
                }
                Target::Pool(q) => {
                    let minimum = self.prog.pools[q].minimum_amount;
                    let pop = &mut self.pops[source];
                    let pool = &mut self.pools[q];
                    for a in pop.agents.iter_mut().filter(|a| a.alive) {
                        if pop.rng.uniform() >= probability {
                            continue;
                        }
                        let available = pool.amount - minimum;
                        let taken = if available > 0.0 { rate * available } else { 0.0 };
                        pool.amount -= taken;
                        let gain = efficiency * taken;
                        a.carbon += gain;
                        self.flux.grazed += gain;
                    }
                }
            },
            EngineInstr::Destroy { source, target, probability, rate } => match (source, target) {
                (Target::Population(s), Target::Population(t)) => {
                    self.encounters(s, t, probability, Effect::Destroy { rate })
                }
                (Target::Pool(_), Target::Population(t)) => {
                    self.pool_on_agents(t, probability, Effect::Destroy { rate })
                }
                (Target::Population(s), Target::Pool(q)) => {
                    let minimum = self.prog.pools[q].minimum_amount;
                    let pop = &mut self.pops[s];
                    let pool = &mut self.pools[q];
                    for _ in pop.agents.iter().filter(|a| a.alive) {
                        if pop.rng.uniform() < probability {
                            let available = pool.amount - minimum;
                            if available > 0.0 {
                                pool.amount -= rate * available;
                            }
                        }
                    }
                }
                (Target::Pool(_), Target::Pool(_)) => {}
            },
            EngineInstr::Produce { source, target, rate } => {
                let Target::Population(s) = source else {
                    return;
                };
                match target {
                    Target::Pool(q) => {
                        let pop = &mut self.pops[s];
                        for _ in pop.agents.iter().filter(|a| a.alive) {
                            let k = pop.rng.poisson(rate);
                            self.pools[q].amount += k as f64;
                        }
                    }
                    Target::Population(t) => self.produce_agents(s, t, rate),
                }
            }
            EngineInstr::Affect { source, target, probability, modifier } => match (source, target) {
                (Target::Population(s), Target::Population(t)) => {
                    self.encounters(s, t, probability, Effect::Affect { modifier })
                }
                (Target::Pool(_), Target::Population(t)) => {
                    self.pool_on_agents(t, probability, Effect::Affect { modifier })
                }
                (Target::Population(s), Target::Pool(q)) => {
                    let minimum = self.prog.pools[q].minimum_amount;
                    let pop = &mut self.pops[s];
                    let pool = &mut self.pools[q];
                    for _ in pop.agents.iter().filter(|a| a.alive) {
                        if pop.rng.uniform() < probability {
                            pool.amount = (pool.amount * (1.0 + modifier)).max(minimum);
                        }
                    }
                }
                (Target::Pool(p), Target::Pool(q)) => {
                    let minimum = self.prog.pools[q].minimum_amount;
                    if self.pools[p].rng.uniform() < probability {
                        self.pools[q].amount = (self.pools[q].amount * (1.0 + modifier)).max(minimum);
                    }
                }
            },
            EngineInstr::Reproduce { population, maturity, interval, offspring, carbon_fraction } => {
                if offspring == 0 {
                    return;
                }
                let density = self.prog.populations[population].density;
                let heading = self.prog.populations[population].move_direction;
                let pop = &mut self.pops[population];
                let parents = pop.agents.len();
                for i in 0..parents {
                    let a = &pop.agents[i];
                    if !a.alive || a.age < maturity || !(a.age - maturity).is_multiple_of(interval) {
                        continue;
                    }
                    for _ in 0..offspring {
                        let parent = &pop.agents[i];
                        let (x, y) = if density {
                            let own = cell_of(parent.x, parent.y, w, h);
                            let free: Vec<usize> = neighbor_cells(own, w, h)
                                .into_iter()
                                .filter(|&c| c != own && !self.occupied[c])
                                .collect();
                            if free.is_empty() {
                                break;
                            }
                            let cell = free[pop.rng.below(free.len() as u64) as usize];
                            self.occupied[cell] = true;
                            centre(cell, w)
                        } else {
                            (parent.x, parent.y)
                        };
                        let child_carbon = pop.agents[i].carbon * carbon_fraction;
                        pop.agents[i].carbon -= child_carbon;
                        pop.push(Agent {
                            id: 0,
                            age: 0,
                            carbon: child_carbon,
                            x,
                            y,
                            heading,
                            alive: true,
                        });
                    }
                }
            }
            EngineInstr::Senesce { population, lifespan } => {
                let density = self.prog.populations[population].density;
                let pop = &mut self.pops[population];
                for a in pop.agents.iter_mut().filter(|a| a.alive) {
                    a.age += 1;
                    if a.age as f64 >= lifespan || a.carbon <= 0.0 {
                        a.alive = false;
                        pop.live -= 1;
                        if density {
                            self.occupied[cell_of(a.x, a.y, w, h)] = false;
                        }
                        self.flux.senescence += a.carbon;
                        self.dead[population].push(a.clone());
                    }
                }
            }
            EngineInstr::OnDeath { source, target, amount } => {
                let dead = std::mem::take(&mut self.dead[source]);
                for d in &dead {
                    match target {
                        Target::Pool(q) => self.pools[q].amount += amount,
                        Target::Population(t) => {
                            let density = self.prog.populations[t].density;
                            let (x, y) = if density {
                                let own = cell_of(d.x, d.y, w, h);
                                let cell = if !self.occupied[own] {
                                    own
                                } else {
                                    let free: Vec<usize> = neighbor_cells(own, w, h)
                                        .into_iter()
                                        .filter(|&c| c != own && !self.occupied[c])
                                        .collect();
                                    if free.is_empty() {
                                        continue;
                                    }
                                    free[self.pops[source].rng.below(free.len() as u64) as usize]
                                };
                                self.occupied[cell] = true;
                                centre(cell, w)
                            } else {
                                (d.x, d.y)
                            };
                            let heading = self.prog.populations[t].move_direction;
                            self.pops[t].push(Agent {
                                id: 0,
                                age: 0,
                                carbon: amount,
                                x,
                                y,
                                heading,
                                alive: true,
                            });
                            self.flux.on_death += amount;
                        }
                    }
                }
                self.dead[source] = dead;
            }
            EngineInstr::Regrow { pool, growth, minimum } => {
                let p = &mut self.pools[pool];
                p.amount = (p.amount + growth).max(minimum);
            }
        }
    }

    /// One attempt per live source agent: pick a live target within one cell
    /// with the given probability and apply the effect.
    fn encounters(&mut self, s: usize, t: usize, probability: f64, effect: Effect) {
        let (w, h) = self.dims();
        let removes = !matches!(effect, Effect::Affect { .. });
        let minimum = self.prog.populations[t].minimum_population;
        let target_density = self.prog.populations[t].density;
        let SimState { pops, occupied, flux, .. } = self;
        let (sp, tp) = two_mut(pops, s, t);
        let index = CellIndex::build(&tp.agents, w, h);
        let mut candidates = Vec::new();
        for i in 0..sp.agents.len() {
            if !sp.agents[i].alive {
                continue;
            }
            if removes && tp.live <= minimum {
                continue;
            }
            candidates.clear();
            let cell = cell_of(sp.agents[i].x, sp.agents[i].y, w, h);
            for c in neighbor_cells(cell, w, h) {
                candidates.extend(index.cell(c).iter().copied().filter(|&j| tp.agents[j].alive));
            }
            if candidates.is_empty() {
                continue;
            }
            candidates.sort_unstable();
            if sp.rng.uniform() >= probability {
                continue;
            }
            let j = candidates[sp.rng.below(candidates.len() as u64) as usize];
            let (src, tgt) = (&mut sp.agents[i], &mut tp.agents[j]);
            match effect {
                Effect::Consume { rate, efficiency } => {
                    let consumed = rate * tgt.carbon;
                    tgt.carbon -= consumed;
                    let gain = efficiency * consumed;
                    src.carbon += gain;
                    flux.consumed += consumed;
                    flux.assimilated += gain;
                }
                Effect::Destroy { rate } => {
                    let destroyed = rate * tgt.carbon;
                    tgt.carbon -= destroyed;
                    flux.destroyed += destroyed;
                }
                Effect::Affect { modifier } => {
                    let before = tgt.carbon;
                    tgt.carbon = before * (1.0 + modifier);
                    flux.affected += tgt.carbon - before;
                }
            }
            if removes && tgt.carbon <= 0.0 {
                tgt.alive = false;
                tp.live -= 1;
                if target_density {
                    occupied[cell_of(tgt.x, tgt.y, w, h)] = false;
                }
            }
        }
    }

    /// A substance pool acting on every live agent of `t`; each agent rolls
    /// on its own population's stream.
    fn pool_on_agents(&mut self, t: usize, probability: f64, effect: Effect) {
        let (w, h) = self.dims();
        let removes = !matches!(effect, Effect::Affect { .. });
        let minimum = self.prog.populations[t].minimum_population;
        let density = self.prog.populations[t].density;
        let SimState { pops, occupied, flux, .. } = self;
        let tp = &mut pops[t];
        for j in 0..tp.agents.len() {
            if !tp.agents[j].alive || (removes && tp.live <= minimum) {
                continue;
            }
            if tp.rng.uniform() >= probability {
                continue;
            }
            let a = &mut tp.agents[j];
            match effect {
                Effect::Destroy { rate } => {
                    let destroyed = rate * a.carbon;
                    a.carbon -= destroyed;
                    flux.destroyed += destroyed;
                }
                Effect::Affect { modifier } => {
                    let before = a.carbon;
                    a.carbon = before * (1.0 + modifier);
                    flux.affected += a.carbon - before;
                }
                Effect::Consume { .. } => unreachable!("pools do not consume"),
            }
            if removes && a.carbon <= 0.0 {
                a.alive = false;
                tp.live -= 1;
                if density {
                    occupied[cell_of(a.x, a.y, w, h)] = false;
                }
            }
        }
    }

    /// Poisson-many new `t` agents per live `s` agent, placed at the source
    /// (or a free cell next to it for density populations). Appended when the
    /// interact phase ends.
    fn produce_agents(&mut self, s: usize, t: usize, rate: f64) {
        let (w, h) = self.dims();
        let density = self.prog.populations[t].density;
        let carbon = self.prog.populations[t].carbon_biomass;
        let heading = self.prog.populations[t].move_direction;
        let SimState { pops, occupied, flux, pending, .. } = self;
        let sp = &mut pops[s];
        for i in 0..sp.agents.len() {
            if !sp.agents[i].alive {
                continue;
            }
            let k = sp.rng.poisson(rate);
            let (sx, sy) = (sp.agents[i].x, sp.agents[i].y);
            for _ in 0..k {
                let (x, y) = if density {
                    let free: Vec<usize> = neighbor_cells(cell_of(sx, sy, w, h), w, h)
                        .into_iter()
                        .filter(|&c| !occupied[c])
                        .collect();
                    if free.is_empty() {
                        break;
                    }
                    let cell = free[sp.rng.below(free.len() as u64) as usize];
                    occupied[cell] = true;
                    centre(cell, w)
                } else {
                    (sx, sy)
                };
                pending.push((
                    t,
                    Agent {
                        id: 0,
                        age: 0,
                        carbon,
                        x,
                        y,
                        heading,
                        alive: true,
                    },
                ));
                flux.produced += carbon;
            }
        }
    }

    /// Checks carbon, pool, age and occupancy invariants.
    pub fn check_invariants(&self) -> Result<(), EngineError> {
        let (w, h) = self.dims();
        let mut occupied = vec![false; w * h];
        for (pi, p) in self.pops.iter().enumerate() {
            let live = p.agents.iter().filter(|a| a.alive).count() as u64;
            if live != p.live {
                return Err(EngineError::InvariantBreach(format!("population {pi}: live tally {} != {live}", p.live)));
            }
            for a in p.agents.iter().filter(|a| a.alive) {
                if a.carbon.is_nan() || a.carbon < 0.0 {
                    return Err(EngineError::InvariantBreach(format!("agent {} carbon {}", a.id, a.carbon)));
                }
                if self.prog.populations[pi].density {
                    let c = cell_of(a.x, a.y, w, h);
                    if occupied[c] {
                        return Err(EngineError::InvariantBreach(format!("cell {c} doubly occupied")));
                    }
                    occupied[c] = true;
                }
            }
        }
        if occupied != self.occupied {
            return Err(EngineError::InvariantBreach("occupancy map out of sync".into()));
        }
        for (p, spec) in self.pools.iter().zip(&self.prog.pools) {
            if p.amount < spec.minimum_amount {
                return Err(EngineError::InvariantBreach(format!("pool {} below minimum", spec.id)));
            }
        }
        if self.tick > self.cfg.max_ticks {
            return Err(EngineError::InvariantBreach("tick past max_ticks".into()));
        }
        Ok(())
    }
}
