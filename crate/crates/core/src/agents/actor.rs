use rand::Rng;

use super::{Step, Trajectory};
use crate::error::{Error, Result};
use crate::nn::{AdamState, Features, MlpPolicy, DEFAULT_HIDDEN};
use crate::shaping::{accumulate_trajectory_gradient, sample, AdviceVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    /// Completed episodes between gradient steps.
    pub update_period: usize,
}

impl Default for ActorConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN,
            learning_rate: 1e-4,
            update_period: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub loss: f64,
    pub grad_norm: f64,
    pub episodes: usize,
}

/// Policy-gradient actor whose sampling distribution and gradient both go
/// through the advice mixture.
#[derive(Debug, Clone)]
pub struct DpgActor {
    net: MlpPolicy,
    adam: AdamState,
    pending: Vec<Trajectory>,
    update_period: usize,
}

impl DpgActor {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, n_actions: usize, cfg: ActorConfig, rng: &mut R) -> Result<Self> {
        let net = MlpPolicy::new(obs_dim, cfg.hidden, n_actions, rng)?;
        Self::from_policy(net, cfg)
    }

    pub fn from_policy(net: MlpPolicy, cfg: ActorConfig) -> Result<Self> {
        if cfg.update_period == 0 {
            return Err(Error::InvalidArgument("update period must be at least one episode".into()));
        }
        let adam = AdamState::new(net.params().len(), cfg.learning_rate);
        Ok(Self {
            net,
            adam,
            pending: Vec::new(),
            update_period: cfg.update_period,
        })
    }

    pub fn policy(&self) -> &MlpPolicy {
        &self.net
    }

    pub fn policy_mut(&mut self) -> &mut MlpPolicy {
        &mut self.net
    }

    pub fn n_actions(&self) -> usize {
        self.net.n_actions()
    }

    pub fn pending_episodes(&self) -> usize {
        self.pending.len()
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    /// Samples from the mixed policy and records the advice that was used.
    pub fn act<R: Rng + ?Sized>(&self, state: &Features, advice: &AdviceVector, rng: &mut R) -> Result<(usize, Step)> {
        let (dist, _) = self.net.forward(state, advice)?;
        let action = sample(&dist, rng);
        Ok((
            action,
            Step {
                state: state.clone(),
                advice: Some(advice.clone()),
                action,
                reward: 0.0,
            },
        ))
    }

    /// Baseline that ignores the mixture: directives override the action,
    /// otherwise the learned policy acts alone. The recorded advice is
    /// always neutral, so the gradient only sees the learned policy.
    pub fn override_act<R: Rng + ?Sized>(
        &self,
        state: &Features,
        advice: &AdviceVector,
        rng: &mut R,
    ) -> Result<(usize, Step)> {
        let neutral = AdviceVector::neutral(self.n_actions());
        if advice.len() != self.n_actions() {
            return Err(Error::Dimension {
                what: "advice",
                expected: self.n_actions(),
                got: advice.len(),
            });
        }
        let action = match advice.directive() {
            Some(a) => {
                // Still draw so the random stream does not depend on overrides.
                let _: f64 = rng.random();
                a
            }
            None => {
                let (dist, _) = self.net.forward(state, &neutral)?;
                sample(&dist, rng)
            }
        };
        Ok((
            action,
            Step {
                state: state.clone(),
                advice: Some(neutral),
                action,
                reward: 0.0,
            },
        ))
    }

    /// Queues a finished episode; every `update_period` episodes the summed
    /// gradient of all queued episodes is applied in one Adam step.
    pub fn finish_episode(&mut self, trajectory: Trajectory, gamma: f64) -> Result<Option<UpdateStats>> {
        if !trajectory.is_empty() {
            self.pending.push(trajectory);
        }
        if self.pending.len() < self.update_period {
            return Ok(None);
        }
        let mut grad = vec![0.0; self.net.params().len()];
        let mut loss = 0.0;
        for traj in &self.pending {
            loss += accumulate_trajectory_gradient(traj, &self.net, gamma, &mut grad)?;
        }
        let episodes = self.pending.len();
        self.pending.clear();
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm > 0.0 {
            self.adam.step(self.net.params_mut(), &grad)?;
        }
        Ok(Some(UpdateStats {
            loss,
            grad_norm,
            episodes,
        }))
    }
}

/// Mean entropy (nats) of the neutral-advice distribution over `states`.
pub fn policy_entropy(net: &MlpPolicy, states: &[Features]) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::InvalidArgument("entropy needs at least one state".into()));
    }
    let mut total = 0.0;
    for s in states {
        total += net.learned_distribution(s)?.entropy();
    }
    Ok(total / states.len() as f64)
}
