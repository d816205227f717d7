//! Deterministic agent-based interpreter for [`EngineProgram`]s.
//!
//! The world is a toroidal grid of unit cells; one tick is one month. Each
//! tick runs the program's phases in order: move, metabolize, interact,
//! reproduce, die, regrow.

mod rng;
mod state;

use std::fmt::Write as _;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::format_number;
use crate::compiler::EngineProgram;

pub use rng::{Stream, STREAM_OFFSET};
pub use state::{Agent, Command, SimState, Status, TickFlux};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConstants {
    pub version: u32,
    pub default_grid_width: u32,
    pub default_grid_height: u32,
    pub max_agents: usize,
    pub max_turn_degrees: f64,
    /// Share of the parent's carbon given to each offspring.
    pub offspring_carbon_fraction: f64,
}

static CONSTANTS: LazyLock<EngineConstants> = LazyLock::new(|| {
    serde_json::from_str(include_str!("../../data/engine.v1.json")).expect("bundled engine constants are well-formed")
});

pub fn constants() -> &'static EngineConstants {
    &CONSTANTS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub grid_width: u32,
    pub grid_height: u32,
    pub max_ticks: u64,
    pub snapshot_every: u64,
}

impl SimConfig {
    pub fn new(seed: u64, max_ticks: u64) -> Self {
        SimConfig {
            seed,
            max_ticks,
            ..Default::default()
        }
    }

    pub fn check(&self) -> Result<(), EngineError> {
        if self.grid_width == 0 || self.grid_height == 0 {
            return Err(EngineError::InvalidConfig("grid dimensions must be at least 1".into()));
        }
        if self.snapshot_every == 0 {
            return Err(EngineError::InvalidConfig("snapshot_every must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            grid_width: constants().default_grid_width,
            grid_height: constants().default_grid_height,
            max_ticks: 120,
            snapshot_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{agents} agents exceed the capacity of {cap}")]
    CapacityExceeded { agents: usize, cap: usize },
    #[error("cannot {command:?} a {from:?} simulation")]
    IllegalTransition { from: Status, command: Command },
    #[error("invariant breached: {0}")]
    InvariantBreach(String),
}

/// Population and pool observables at one tick. Vectors follow the program's
/// population and pool order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimFrame {
    pub tick: u64,
    pub counts: Vec<u64>,
    pub carbon: Vec<f64>,
    pub pools: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub populations: Vec<String>,
    pub pools: Vec<String>,
    pub config: SimConfig,
    pub frames: Vec<SimFrame>,
    pub status: Status,
}

pub fn csv_header(populations: &[String], pools: &[String]) -> String {
    let mut h = String::from("tick");
    for p in populations {
        write!(h, ",{p}_count,{p}_carbon").unwrap();
    }
    for p in pools {
        write!(h, ",{p}_amount").unwrap();
    }
    h
}

pub fn csv_row(frame: &SimFrame) -> String {
    let mut row = frame.tick.to_string();
    for (count, carbon) in frame.counts.iter().zip(&frame.carbon) {
        write!(row, ",{count},{}", format_number(*carbon)).unwrap();
    }
    for amount in &frame.pools {
        write!(row, ",{}", format_number(*amount)).unwrap();
    }
    row
}

impl TimeSeries {
    pub fn to_csv(&self) -> String {
        let mut out = csv_header(&self.populations, &self.pools);
        out.push('\n');
        for f in &self.frames {
            out.push_str(&csv_row(f));
            out.push('\n');
        }
        out
    }
}

/// Runs a program to completion: `max_ticks` or extinction of every biotic
/// population, whichever comes first.
pub fn run(prog: &EngineProgram, cfg: &SimConfig) -> Result<TimeSeries, EngineError> {
    let mut state = SimState::init(prog, cfg)?;
    let mut frames = vec![state.frame()];
    if state.status() != Status::Finished {
        state.control(Command::Start)?;
    }
    while state.status() == Status::Running {
        if let Some(frame) = state.step()? {
            frames.push(frame);
        }
    }
    Ok(state.into_series(frames))
}
