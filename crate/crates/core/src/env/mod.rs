//! Benchmark environments: the continuous Table docking task, the Five Rooms
//! grid worlds (primitive moves or options), and a small chain MDP used to
//! check value learning against value iteration.

mod chain;
mod grid;
mod table;

use std::fmt;
use std::str::FromStr;

use rand::RngCore;

pub use chain::ChainEnv;
pub use grid::{
    bfs_shortest_path, grid_step, load_map, optimal_grid_policy, option_step, render_map, Cell, GridAction, GridEnv,
    GridOption, GridPolicy, GridWorld, OptionKind, OptionSet, GRID1_MAP, GRID2_MAP, FIVEROOMS_MAP,
};
pub use table::{
    angular_distance, table_reset, table_step, wrap_angle, TableAction, TableEnv, TableState, DOCK_ANGLE_TOLERANCE,
    MAX_STEPS as TABLE_MAX_STEPS,
};

use crate::error::Result;
use crate::nn::Features;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TerminalCause {
    Goal,
    Fell,
    Timeout,
}

impl TerminalCause {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminalCause::Goal => "goal",
            TerminalCause::Fell => "fell",
            TerminalCause::Timeout => "timeout",
        }
    }
}

impl fmt::Display for TerminalCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TerminalCause {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "goal" => Ok(TerminalCause::Goal),
            "fell" => Ok(TerminalCause::Fell),
            "timeout" => Ok(TerminalCause::Timeout),
            other => Err(format!("unknown terminal cause '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Features,
    pub reward: f64,
    pub terminal: Option<TerminalCause>,
    /// Number of primitive moves executed; greater than one under options.
    pub primitive_steps: u32,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminal.is_some()
    }

    /// True terminal states stop bootstrapping; timeouts do not.
    pub fn is_absorbing(&self) -> bool {
        matches!(self.terminal, Some(TerminalCause::Goal | TerminalCause::Fell))
    }
}

/// Typed view of the current environment state, for advisors that reason
/// about positions rather than feature vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvState {
    Table(TableState),
    Grid(Cell),
    Chain(usize),
}

pub trait Environment {
    fn n_actions(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn reset(&mut self) -> Features;
    fn step(&mut self, action: usize, rng: &mut dyn RngCore) -> Result<StepResult>;
    fn state(&self) -> EnvState;
    fn observation(&self) -> Features;
}
