//! Advice sources. Every advisor returns the all-ones vector when it does
//! not intervene.

use rand::{Rng, RngCore};

use crate::env::{angular_distance, Cell, EnvState, GridPolicy, TableState, DOCK_ANGLE_TOLERANCE as DOCK_TOL};
use crate::error::{Error, Result};
use crate::nn::{Features, MlpPolicy};
use crate::shaping::AdviceVector;

/// Distance to an edge below which the backup policy may take over.
pub const EDGE_MARGIN: f64 = 0.05;

const TABLE_ACTIONS: usize = 3;
const TURN_LEFT: usize = 1;

pub trait Advisor {
    fn advise(&mut self, state: &EnvState, obs: &Features, rng: &mut dyn RngCore) -> Result<AdviceVector>;

    /// Number of times the advisor has intervened so far.
    fn interventions(&self) -> u64 {
        0
    }
}

pub fn neutral_advice(n_actions: usize) -> AdviceVector {
    AdviceVector::neutral(n_actions)
}

/// True when the robot is within the margin of an edge and heading toward it.
pub fn facing_nearby_edge(s: &TableState) -> bool {
    let (c, sn) = (s.theta.cos(), s.theta.sin());
    (s.x < EDGE_MARGIN && c < 0.0)
        || (s.x > 1.0 - EDGE_MARGIN && c > 0.0)
        || (s.y < EDGE_MARGIN && sn < 0.0)
        || (s.y > 1.0 - EDGE_MARGIN && sn > 0.0)
}

/// Turn-left directive near a facing edge.
pub fn backup_advice(s: &TableState) -> AdviceVector {
    if facing_nearby_edge(s) {
        AdviceVector::one_hot(TABLE_ACTIONS, TURN_LEFT)
    } else {
        AdviceVector::neutral(TABLE_ACTIONS)
    }
}

/// Turn-left directive inside the docking box with the wrong heading.
pub fn goal_heuristic_advice(s: &TableState) -> AdviceVector {
    let in_box = (s.x - 0.5).abs() <= 0.05 && (s.y - 0.5).abs() <= 0.05;
    if in_box && angular_distance(s.theta, std::f64::consts::FRAC_PI_4) > DOCK_TOL {
        AdviceVector::one_hot(TABLE_ACTIONS, TURN_LEFT)
    } else {
        AdviceVector::neutral(TABLE_ACTIONS)
    }
}

/// Backup first, then the heuristic.
pub fn combined_table_advice(s: &TableState) -> AdviceVector {
    let backup = backup_advice(s);
    if !backup.is_neutral() {
        return backup;
    }
    goal_heuristic_advice(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableAdviceMode {
    Backup,
    Heuristic,
    Combined,
}

#[derive(Debug, Clone)]
pub struct TableAdvisor {
    pub mode: TableAdviceMode,
    interventions: u64,
}

impl TableAdvisor {
    pub fn new(mode: TableAdviceMode) -> Self {
        Self { mode, interventions: 0 }
    }
}

impl Advisor for TableAdvisor {
    fn advise(&mut self, state: &EnvState, _obs: &Features, _rng: &mut dyn RngCore) -> Result<AdviceVector> {
        let EnvState::Table(s) = state else {
            return Err(Error::InvalidArgument("table advisor needs a table state".into()));
        };
        let advice = match self.mode {
            TableAdviceMode::Backup => backup_advice(s),
            TableAdviceMode::Heuristic => goal_heuristic_advice(s),
            TableAdviceMode::Combined => combined_table_advice(s),
        };
        if !advice.is_neutral() {
            self.interventions += 1;
        }
        Ok(advice)
    }

    fn interventions(&self) -> u64 {
        self.interventions
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulatedHumanConfig {
    /// Probability of giving advice at a decision.
    pub availability: f64,
    /// Probability that given advice is correct.
    pub p_right: f64,
    pub budget: Option<u64>,
    /// Action advised when the advice is wrong.
    pub wrong_option: usize,
}

impl SimulatedHumanConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("availability", self.availability), ("p_right", self.p_right)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

/// One decision of the simulated teacher. `interventions` is incremented
/// when advice is given.
pub fn simulated_human_advice<R: Rng + ?Sized>(
    cell: Cell,
    cfg: &SimulatedHumanConfig,
    oracle: &GridPolicy,
    n_actions: usize,
    interventions: &mut u64,
    rng: &mut R,
) -> AdviceVector {
    if cfg.budget.is_some_and(|b| *interventions >= b) {
        return AdviceVector::neutral(n_actions);
    }
    if !(rng.random::<f64>() < cfg.availability) {
        return AdviceVector::neutral(n_actions);
    }
    let Some(correct) = oracle.get(cell) else {
        return AdviceVector::neutral(n_actions);
    };
    *interventions += 1;
    let advised = if rng.random::<f64>() < cfg.p_right { correct } else { cfg.wrong_option };
    AdviceVector::one_hot(n_actions, advised)
}

#[derive(Debug, Clone)]
pub struct SimulatedHuman {
    pub config: SimulatedHumanConfig,
    oracle: GridPolicy,
    n_actions: usize,
    interventions: u64,
}

impl SimulatedHuman {
    pub fn new(config: SimulatedHumanConfig, oracle: GridPolicy, n_actions: usize) -> Result<Self> {
        config.validate()?;
        if config.wrong_option >= n_actions {
            return Err(Error::InvalidArgument(format!(
                "wrong option {} out of range for {n_actions} actions",
                config.wrong_option
            )));
        }
        Ok(Self {
            config,
            oracle,
            n_actions,
            interventions: 0,
        })
    }
}

impl Advisor for SimulatedHuman {
    fn advise(&mut self, state: &EnvState, _obs: &Features, rng: &mut dyn RngCore) -> Result<AdviceVector> {
        let EnvState::Grid(cell) = state else {
            return Err(Error::InvalidArgument("simulated human needs a grid state".into()));
        };
        Ok(simulated_human_advice(
            *cell,
            &self.config,
            &self.oracle,
            self.n_actions,
            &mut self.interventions,
            rng,
        ))
    }

    fn interventions(&self) -> u64 {
        self.interventions
    }
}

/// `source(state) + 1`, left unnormalized.
pub fn transfer_advice(source: &MlpPolicy, state: &Features) -> Result<AdviceVector> {
    let p = source.learned_distribution(state)?;
    AdviceVector::new(p.probs().iter().map(|x| x + 1.0).collect())
}

#[derive(Debug, Clone)]
pub struct TransferAdvisor {
    source: MlpPolicy,
}

impl TransferAdvisor {
    pub fn new(source: MlpPolicy) -> Self {
        Self { source }
    }

    pub fn source(&self) -> &MlpPolicy {
        &self.source
    }
}

impl Advisor for TransferAdvisor {
    fn advise(&mut self, _state: &EnvState, obs: &Features, _rng: &mut dyn RngCore) -> Result<AdviceVector> {
        transfer_advice(&self.source, obs)
    }
}

#[derive(Debug, Clone)]
pub struct NeutralAdvisor {
    pub n_actions: usize,
}

impl Advisor for NeutralAdvisor {
    fn advise(&mut self, _state: &EnvState, _obs: &Features, _rng: &mut dyn RngCore) -> Result<AdviceVector> {
        Ok(AdviceVector::neutral(self.n_actions))
    }
}
