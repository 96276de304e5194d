use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{softmax, AdamState, Features, ValueNet, DEFAULT_HIDDEN};
use crate::shaping::{argmax, AdviceVector};

#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: Features,
    pub action: usize,
    pub reward: f64,
    pub next_state: Features,
    /// True only for absorbing terminals; timeouts still bootstrap.
    pub done: bool,
}

/// Fixed-capacity ring buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Experience>,
    capacity: usize,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("replay capacity must be positive".into()));
        }
        Ok(Self {
            items: Vec::with_capacity(capacity.min(4096)),
            capacity,
            next: 0,
        })
    }

    pub fn push(&mut self, exp: Experience) {
        if self.items.len() < self.capacity {
            self.items.push(exp);
        } else {
            self.items[self.next] = exp;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.items.iter()
    }

    /// `n` indices drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Experience> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DqnConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Environment steps between training iterations.
    pub train_period: u64,
    /// Environment steps between target network copies.
    pub target_sync: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN,
            learning_rate: 1e-3,
            gamma: 0.99,
            buffer_capacity: 20_000,
            batch_size: 512,
            train_period: 16,
            target_sync: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    pub mean_squared_td: f64,
    pub batch: usize,
}

/// Double DQN with its own replay buffer and target network.
#[derive(Debug, Clone)]
pub struct DoubleDqn {
    online: ValueNet,
    target: ValueNet,
    adam: AdamState,
    buffer: ReplayBuffer,
    cfg: DqnConfig,
    steps: u64,
}

impl DoubleDqn {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, n_actions: usize, cfg: DqnConfig, rng: &mut R) -> Result<Self> {
        if cfg.batch_size == 0 || cfg.train_period == 0 || cfg.target_sync == 0 {
            return Err(Error::InvalidArgument("dqn batch, train period and target sync must be positive".into()));
        }
        let online = ValueNet::new(obs_dim, cfg.hidden, n_actions, rng)?;
        let target = online.clone();
        let adam = AdamState::new(online.params().len(), cfg.learning_rate);
        Ok(Self {
            online,
            target,
            adam,
            buffer: ReplayBuffer::new(cfg.buffer_capacity)?,
            cfg,
            steps: 0,
        })
    }

    pub fn online(&self) -> &ValueNet {
        &self.online
    }

    pub fn target(&self) -> &ValueNet {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn config(&self) -> &DqnConfig {
        &self.cfg
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn q_values(&self, state: &Features) -> Result<Vec<f64>> {
        self.online.q_values(state)
    }

    /// `r + gamma * (1 - done) * Q_target(s', argmax_a Q_online(s', a))`.
    pub fn td_target(&self, exp: &Experience) -> Result<f64> {
        if exp.done {
            return Ok(exp.reward);
        }
        let a = argmax(&self.online.q_values(&exp.next_state)?);
        Ok(exp.reward + self.cfg.gamma * self.target.q_values(&exp.next_state)?[a])
    }

    /// Stores the transition, trains every `train_period` steps once a full
    /// batch is available, and syncs the target every `target_sync` steps.
    pub fn observe<R: Rng + ?Sized>(&mut self, exp: Experience, rng: &mut R) -> Result<Option<TrainStats>> {
        self.buffer.push(exp);
        self.steps += 1;
        let mut stats = None;
        if self.steps % self.cfg.train_period == 0 && self.buffer.len() >= self.cfg.batch_size {
            stats = Some(self.train_batch(rng)?);
        }
        if self.steps % self.cfg.target_sync == 0 {
            self.target.copy_from(&self.online);
        }
        Ok(stats)
    }

    /// One Adam step on the mean squared TD error of a uniform minibatch.
    pub fn train_batch<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<TrainStats> {
        let batch: Vec<Experience> = self
            .buffer
            .sample(self.cfg.batch_size, rng)
            .into_iter()
            .cloned()
            .collect();
        self.train_on(&batch)
    }

    pub fn train_on(&mut self, batch: &[Experience]) -> Result<TrainStats> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty training batch".into()));
        }
        let weight = 1.0 / batch.len() as f64;
        let mut grad = vec![0.0; self.online.params().len()];
        let mut sq = 0.0;
        for exp in batch {
            let y = self.td_target(exp)?;
            let err = self.online.td_backward_into(&exp.state, exp.action, y, weight, &mut grad)?;
            sq += err * err;
        }
        self.adam.step(self.online.params_mut(), &grad)?;
        Ok(TrainStats {
            mean_squared_td: sq * weight,
            batch: batch.len(),
        })
    }

    pub fn sync_target(&mut self) {
        self.target.copy_from(&self.online);
    }

    pub fn advice(&self, state: &Features, temperature: f64) -> Result<AdviceVector> {
        critic_advice(&self.online.q_values(state)?, temperature)
    }
}

/// Softmax of Q-values at `temperature`. Entries that would underflow are
/// floored at the smallest positive double so the advice keeps full support.
pub fn critic_advice(q: &[f64], temperature: f64) -> Result<AdviceVector> {
    let dist = softmax(q, temperature)?;
    AdviceVector::new(dist.into_inner().into_iter().map(|p| p.max(f64::MIN_POSITIVE)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ChainEnv, Environment};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp(s: usize, a: usize, r: f64, s2: usize, done: bool) -> Experience {
        Experience {
            state: Features::OneHot { index: s, len: 4 },
            action: a,
            reward: r,
            next_state: Features::OneHot { index: s2, len: 4 },
            done,
        }
    }

    #[test]
    fn ring_buffer_overwrites_oldest() {
        let mut b = ReplayBuffer::new(3).unwrap();
        for i in 0..5 {
            b.push(exp(0, 0, i as f64, 0, false));
        }
        assert_eq!(b.len(), 3);
        let mut rewards: Vec<f64> = b.iter().map(|e| e.reward).collect();
        rewards.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(b.sample(10, &mut rng).len(), 10);
        assert!(ReplayBuffer::new(0).is_err());
    }

    #[test]
    fn terminal_target_is_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = DoubleDqn::new(4, 2, DqnConfig { hidden: 5, ..Default::default() }, &mut rng).unwrap();
        assert_eq!(d.td_target(&exp(0, 1, 3.5, 2, true)).unwrap(), 3.5);
    }

    #[test]
    fn double_target_uses_online_argmax_and_target_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = DqnConfig {
            hidden: 6,
            gamma: 0.9,
            ..Default::default()
        };
        let mut d = DoubleDqn::new(4, 3, cfg, &mut rng).unwrap();
        for p in d.target.params_mut() {
            *p = rng.random_range(-1.0..1.0);
        }
        let e = exp(1, 0, -1.0, 2, false);
        let q_on = d.online.q_values(&e.next_state).unwrap();
        let q_tg = d.target.q_values(&e.next_state).unwrap();
        let mut best = 0;
        for i in 1..3 {
            if q_on[i] > q_on[best] {
                best = i;
            }
        }
        let expected = -1.0 + 0.9 * q_tg[best];
        assert!((d.td_target(&e).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn training_and_sync_cadence() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = DqnConfig {
            hidden: 5,
            batch_size: 4,
            train_period: 2,
            target_sync: 6,
            ..Default::default()
        };
        let mut d = DoubleDqn::new(4, 2, cfg, &mut rng).unwrap();
        let initial = d.target.params().to_vec();
        let mut trained = Vec::new();
        for i in 1..=6u64 {
            let stats = d.observe(exp(0, 1, 1.0, 1, false), &mut rng).unwrap();
            trained.push(stats.is_some());
            if i < 6 {
                assert_eq!(d.target.params(), &initial[..]);
            }
        }
        // Training needs a full batch, then happens every second step.
        assert_eq!(trained, vec![false, false, false, true, false, true]);
        assert_eq!(d.target.params(), d.online.params());
        assert_ne!(d.online.params(), &initial[..]);
    }

    #[test]
    fn critic_advice_is_positive_softmax() {
        let a = critic_advice(&[1.0, 1.2, 0.9], 0.1).unwrap();
        let z: f64 = [-2.0f64, 0.0, -3.0].iter().map(|x| x.exp()).sum();
        let expected = [(-2.0f64).exp() / z, 1.0 / z, (-3.0f64).exp() / z];
        for (x, y) in a.prefs().iter().zip(expected) {
            assert!((x - y).abs() < 1e-12);
        }
        let wide = critic_advice(&[0.0, 500.0], 0.1).unwrap();
        assert!(wide.prefs().iter().all(|p| *p > 0.0));
        assert!(critic_advice(&[0.0, 1.0], 0.0).is_err());
    }

    /// Value iteration on the chain with every state a possible start.
    fn chain_values(n: usize, gamma: f64) -> Vec<[f64; 2]> {
        let env = ChainEnv::new(n);
        let mut q = vec![[0.0f64; 2]; n];
        for _ in 0..1000 {
            let mut next = q.clone();
            for s in 0..n - 1 {
                for a in 0..2 {
                    let (s2, r, done) = env.transition(s, a);
                    let v = if done { 0.0 } else { q[s2][0].max(q[s2][1]) };
                    next[s][a] = r + gamma * v;
                }
            }
            q = next;
        }
        q
    }

    #[test]
    fn learns_chain_values() {
        let n = 5;
        let gamma = 0.9;
        let truth = chain_values(n, gamma);
        let env = ChainEnv::new(n);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = DqnConfig {
            hidden: 16,
            gamma,
            batch_size: 32,
            train_period: 1,
            target_sync: 50,
            learning_rate: 3e-3,
            ..Default::default()
        };
        let mut d = DoubleDqn::new(n, 2, cfg, &mut rng).unwrap();
        for _ in 0..6000 {
            let s = rng.random_range(0..n - 1);
            let a = rng.random_range(0..2);
            let (s2, r, done) = env.transition(s, a);
            d.observe(
                Experience {
                    state: env.features_of(s),
                    action: a,
                    reward: r,
                    next_state: env.features_of(s2),
                    done,
                },
                &mut rng,
            )
            .unwrap();
        }
        for s in 0..n - 1 {
            let q = d.q_values(&env.features_of(s)).unwrap();
            for a in 0..2 {
                assert!((q[a] - truth[s][a]).abs() < 0.05, "s={s} a={a} q={} v={}", q[a], truth[s][a]);
            }
        }
        let _ = env.n_actions();
    }
}
