//! Learning agents: the advised policy-gradient actor, the Double DQN critic,
//! their Actor-Advisor composition, and the reward-shaping teacher baseline.

mod actor;
mod actor_advisor;
mod dqn;
mod teacher;

pub use actor::{policy_entropy, ActorConfig, DpgActor, UpdateStats};
pub use actor_advisor::{ActorAdvisor, DEFAULT_CRITIC_TEMPERATURE};
pub use dqn::{critic_advice, DoubleDqn, DqnConfig, Experience, ReplayBuffer, TrainStats};
pub use teacher::{reward_shaping_teacher, RewardShapingTeacher, TEACHER_PENALTY};

use crate::nn::Features;
use crate::shaping::AdviceVector;

/// One decision: the state, the advice in force when the action was
/// sampled, the action, and the reward that followed.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: Features,
    pub advice: Option<AdviceVector>,
    pub action: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, step: Step) {
        self.steps.push(step);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Sets the reward of the most recent step.
    pub fn reward_last(&mut self, reward: f64) {
        if let Some(s) = self.steps.last_mut() {
            s.reward = reward;
        }
    }
}
