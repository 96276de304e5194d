use rand::Rng;

use super::{ActorConfig, DoubleDqn, DpgActor, DqnConfig, Experience, Step, Trajectory, TrainStats, UpdateStats};
use crate::env::StepResult;
use crate::error::Result;
use crate::nn::Features;
use crate::shaping::AdviceVector;

pub const DEFAULT_CRITIC_TEMPERATURE: f64 = 0.1;

/// An advised policy-gradient actor whose advice is the softmax of a Double
/// DQN critic trained off-policy on the same transitions.
#[derive(Debug, Clone)]
pub struct ActorAdvisor {
    pub actor: DpgActor,
    pub critic: DoubleDqn,
    pub temperature: f64,
}

impl ActorAdvisor {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        n_actions: usize,
        actor: ActorConfig,
        critic: DqnConfig,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            actor: DpgActor::new(obs_dim, n_actions, actor, rng)?,
            critic: DoubleDqn::new(obs_dim, n_actions, critic, rng)?,
            temperature: DEFAULT_CRITIC_TEMPERATURE,
        })
    }

    pub fn critic_advice(&self, state: &Features) -> Result<AdviceVector> {
        self.critic.advice(state, self.temperature)
    }

    /// Samples from the actor mixed with the critic's advice.
    pub fn act<R: Rng + ?Sized>(&self, state: &Features, rng: &mut R) -> Result<(usize, Step)> {
        let advice = self.critic_advice(state)?;
        self.actor.act(state, &advice, rng)
    }

    /// Feeds one transition to the critic.
    pub fn observe<R: Rng + ?Sized>(
        &mut self,
        state: &Features,
        action: usize,
        result: &StepResult,
        rng: &mut R,
    ) -> Result<Option<TrainStats>> {
        self.critic.observe(
            Experience {
                state: state.clone(),
                action,
                reward: result.reward,
                next_state: result.observation.clone(),
                done: result.is_absorbing(),
            },
            rng,
        )
    }

    pub fn finish_episode(&mut self, trajectory: Trajectory, gamma: f64) -> Result<Option<UpdateStats>> {
        self.actor.finish_episode(trajectory, gamma)
    }
}
