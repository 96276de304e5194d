use rand::RngCore;

use super::{EnvState, Environment, StepResult, TerminalCause};
use crate::error::{Error, Result};
use crate::nn::Features;

/// Deterministic chain: action 0 moves left (clamped at 0), action 1 moves
/// right. Reaching the last state pays `goal_reward` and ends the episode.
#[derive(Debug, Clone)]
pub struct ChainEnv {
    pub n_states: usize,
    pub goal_reward: f64,
    pub max_steps: u32,
    pos: usize,
    steps: u32,
}

impl ChainEnv {
    pub fn new(n_states: usize) -> Self {
        assert!(n_states >= 2);
        Self {
            n_states,
            goal_reward: 1.0,
            max_steps: 100,
            pos: 0,
            steps: 0,
        }
    }

    /// Successor, reward and terminal flag of a transition.
    pub fn transition(&self, pos: usize, action: usize) -> (usize, f64, bool) {
        let next = if action == 0 { pos.saturating_sub(1) } else { pos + 1 };
        if next == self.n_states - 1 {
            (next, self.goal_reward, true)
        } else {
            (next, 0.0, false)
        }
    }

    pub fn features_of(&self, pos: usize) -> Features {
        Features::OneHot {
            index: pos,
            len: self.n_states,
        }
    }

    pub fn set_position(&mut self, pos: usize) {
        self.pos = pos;
    }
}

impl Environment for ChainEnv {
    fn n_actions(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        self.n_states
    }

    fn reset(&mut self) -> Features {
        self.pos = 0;
        self.steps = 0;
        self.features_of(0)
    }

    fn step(&mut self, action: usize, _rng: &mut dyn RngCore) -> Result<StepResult> {
        if action > 1 {
            return Err(Error::InvalidArgument(format!("invalid chain action {action}")));
        }
        let (next, reward, goal) = self.transition(self.pos, action);
        self.pos = next;
        self.steps += 1;
        let terminal = if goal {
            Some(TerminalCause::Goal)
        } else if self.steps >= self.max_steps {
            Some(TerminalCause::Timeout)
        } else {
            None
        };
        Ok(StepResult {
            observation: self.features_of(next),
            reward,
            terminal,
            primitive_steps: 1,
        })
    }

    fn state(&self) -> EnvState {
        EnvState::Chain(self.pos)
    }

    fn observation(&self) -> Features {
        self.features_of(self.pos)
    }
}
