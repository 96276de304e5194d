//! Policy-shaping algebra: the advice mixture, Monte-Carlo returns, the
//! policy-gradient loss over the mixed policy, and categorical sampling.

use rand::Rng;

use crate::agents::Trajectory;
use crate::error::{Error, Result};
use crate::nn::MlpPolicy;

const SUM_TOLERANCE: f64 = 1e-9;

/// A probability vector over a finite action set.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDistribution(Vec<f64>);

impl PolicyDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty".into()));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidDistribution(format!("entries outside [0, 1]: {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("sums to {total}")));
        }
        Ok(Self(probs))
    }

    pub(crate) fn from_normalized(probs: Vec<f64>) -> Self {
        debug_assert!(probs.iter().all(|p| *p >= 0.0));
        Self(probs)
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.0.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Non-negative per-action preferences; need not sum to one.
/// All ones is neutral, a one-hot vector is a directive.
#[derive(Debug, Clone, PartialEq)]
pub struct AdviceVector(Vec<f64>);

impl AdviceVector {
    pub fn new(prefs: Vec<f64>) -> Result<Self> {
        if prefs.is_empty() {
            return Err(Error::InvalidAdvice("empty".into()));
        }
        if prefs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidAdvice(format!("negative or non-finite entry: {prefs:?}")));
        }
        if !prefs.iter().any(|p| *p > 0.0) {
            return Err(Error::InvalidAdvice("all entries are zero".into()));
        }
        Ok(Self(prefs))
    }

    pub fn neutral(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn one_hot(n: usize, action: usize) -> Self {
        assert!(action < n, "directive action {action} out of range for {n} actions");
        let mut v = vec![0.0; n];
        v[action] = 1.0;
        Self(v)
    }

    pub fn prefs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The single allowed action when exactly one entry is positive.
    pub fn directive(&self) -> Option<usize> {
        let mut positive = self.0.iter().enumerate().filter(|(_, p)| **p > 0.0);
        match (positive.next(), positive.next()) {
            (Some((i, _)), None) => Some(i),
            _ => None,
        }
    }

    pub fn is_neutral(&self) -> bool {
        self.0.iter().all(|p| *p == 1.0)
    }
}

/// `learned[a] * advice[a] / sum_b learned[b] * advice[b]`.
pub fn mix(learned: &PolicyDistribution, advice: &AdviceVector) -> Result<PolicyDistribution> {
    if learned.len() != advice.len() {
        return Err(Error::Dimension {
            what: "advice",
            expected: learned.len(),
            got: advice.len(),
        });
    }
    // Neutral advice is the identity; skipping the division keeps it bit-exact.
    if advice.is_neutral() {
        return Ok(learned.clone());
    }
    let products: Vec<f64> = learned.probs().iter().zip(advice.prefs()).map(|(p, e)| p * e).collect();
    let dot: f64 = products.iter().sum();
    if !(dot > 0.0) {
        return Err(Error::AdviceAnnihilatesPolicy);
    }
    Ok(PolicyDistribution::from_normalized(
        products.into_iter().map(|x| x / dot).collect(),
    ))
}

/// Rewards of one episode with their discount factor.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardSequence {
    pub rewards: Vec<f64>,
    pub gamma: f64,
}

impl RewardSequence {
    pub fn new(rewards: Vec<f64>, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidArgument(format!("discount must be in (0, 1], got {gamma}")));
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidArgument("non-finite reward".into()));
        }
        Ok(Self { rewards, gamma })
    }

    pub fn returns(&self) -> Vec<f64> {
        discounted_returns(&self.rewards, self.gamma)
    }
}

/// `R_t = r_t + gamma * R_{t+1}`, i.e. discounting counted from step `t`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Policy-gradient loss `-sum_t R_t log pi(a_t | s_t, advice_t)` and its
/// gradient. The advice stored with each step re-enters the forward pass.
pub fn trajectory_loss(traj: &Trajectory, net: &MlpPolicy, gamma: f64) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; net.params().len()];
    let loss = accumulate_trajectory_gradient(traj, net, gamma, &mut grad)?;
    Ok((loss, grad))
}

pub(crate) fn accumulate_trajectory_gradient(
    traj: &Trajectory,
    net: &MlpPolicy,
    gamma: f64,
    grad: &mut [f64],
) -> Result<f64> {
    if traj.steps.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    let rewards: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
    let returns = discounted_returns(&rewards, gamma);
    let mut loss = 0.0;
    for (t, (step, ret)) in traj.steps.iter().zip(returns).enumerate() {
        let advice = step.advice.as_ref().ok_or(Error::MissingAdvice(t))?;
        let (_, cache) = net.forward(&step.state, advice)?;
        loss += MlpPolicy::log_loss(&cache, step.action, ret)?;
        if ret != 0.0 {
            net.backward_into(&cache, step.action, ret, grad)?;
        }
    }
    Ok(loss)
}

/// Inverse-CDF draw.
pub fn sample<R: Rng + ?Sized>(dist: &PolicyDistribution, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &p) in dist.probs().iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        cum += p;
        last_positive = i;
        if u < cum {
            return i;
        }
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dist(v: &[f64]) -> PolicyDistribution {
        PolicyDistribution::new(v.to_vec()).unwrap()
    }

    fn advice(v: &[f64]) -> AdviceVector {
        AdviceVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn mix_examples() {
        assert_eq!(mix(&dist(&[0.5, 0.3, 0.2]), &advice(&[1.0, 1.0, 1.0])).unwrap().probs(), &[0.5, 0.3, 0.2]);
        assert_eq!(mix(&dist(&[0.5, 0.5]), &advice(&[0.0, 1.0])).unwrap().probs(), &[0.0, 1.0]);
        let m = mix(&dist(&[0.25, 0.75]), &advice(&[0.6, 0.4])).unwrap();
        assert!((m.probs()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.probs()[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mix_errors() {
        assert!(matches!(
            mix(&dist(&[1.0, 0.0]), &advice(&[0.0, 1.0])),
            Err(Error::AdviceAnnihilatesPolicy)
        ));
        assert!(mix(&dist(&[1.0, 0.0]), &advice(&[1.0])).is_err());
    }

    #[test]
    fn advice_validation() {
        assert!(AdviceVector::new(vec![0.0, 0.0]).is_err());
        assert!(AdviceVector::new(vec![-0.1, 1.0]).is_err());
        assert!(AdviceVector::new(vec![]).is_err());
        assert_eq!(advice(&[0.0, 2.0, 0.0]).directive(), Some(1));
        assert_eq!(advice(&[0.5, 2.0, 0.0]).directive(), None);
        assert!(AdviceVector::neutral(3).is_neutral());
    }

    #[test]
    fn returns_examples() {
        assert_eq!(discounted_returns(&[0.0, 0.0, 1.0], 0.5), vec![0.25, 0.5, 1.0]);
        assert_eq!(discounted_returns(&[-1.0, -1.0, 100.0], 1.0), vec![98.0, 99.0, 100.0]);
    }

    #[test]
    fn returns_match_double_loop() {
        let mut r = ChaCha8Rng::seed_from_u64(11);
        let rewards: Vec<f64> = (0..7).map(|_| r.random_range(-5.0..5.0)).collect();
        let fast = discounted_returns(&rewards, 0.9);
        for t in 0..7 {
            let mut brute = 0.0;
            for tau in t..7 {
                brute += 0.9f64.powi((tau - t) as i32) * rewards[tau];
            }
            assert!((fast[t] - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn reward_sequence_validation() {
        assert!(RewardSequence::new(vec![1.0], 0.0).is_err());
        assert!(RewardSequence::new(vec![1.0], 1.1).is_err());
        assert!(RewardSequence::new(vec![f64::NAN], 0.9).is_err());
        assert_eq!(RewardSequence::new(vec![1.0, 1.0], 1.0).unwrap().returns(), vec![2.0, 1.0]);
    }

    #[test]
    fn sample_examples() {
        let mut r = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            assert_eq!(sample(&dist(&[1.0, 0.0, 0.0]), &mut r), 0);
            assert_eq!(sample(&dist(&[0.0, 1.0]), &mut r), 1);
        }
        let half = dist(&[0.5, 0.5]);
        let ones = (0..10_000).filter(|_| sample(&half, &mut r) == 1).count();
        assert!((ones as f64 / 10_000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn entropy_of_uniform() {
        assert!((PolicyDistribution::uniform(4).entropy() - 4f64.ln()).abs() < 1e-15);
        assert_eq!(dist(&[0.0, 1.0]).entropy(), 0.0);
    }

    fn normalized(raw: Vec<f64>) -> PolicyDistribution {
        let total: f64 = raw.iter().sum();
        PolicyDistribution::new(raw.into_iter().map(|x| x / total).collect()).unwrap()
    }

    proptest! {
        #[test]
        fn mix_is_scale_invariant(
            raw in prop::collection::vec(0.01f64..1.0, 2..6),
            e in prop::collection::vec(0.01f64..3.0, 6),
            c in 0.01f64..100.0,
        ) {
            let p = normalized(raw);
            let e = advice(&e[..p.len()]);
            let scaled = advice(&e.prefs().iter().map(|x| x * c).collect::<Vec<_>>());
            let a = mix(&p, &e).unwrap();
            let b = mix(&p, &scaled).unwrap();
            for (x, y) in a.probs().iter().zip(b.probs()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn mix_support_rule(
            raw in prop::collection::vec(0.0f64..1.0, 3..6),
            mask in prop::collection::vec(prop::bool::ANY, 6),
        ) {
            prop_assume!(raw.iter().any(|x| *x > 0.0));
            let p = normalized(raw);
            let e: Vec<f64> = (0..p.len()).map(|i| if mask[i] { 1.0 } else { 0.0 }).collect();
            prop_assume!(p.probs().iter().zip(&e).any(|(a, b)| a * b > 0.0));
            let m = mix(&p, &advice(&e)).unwrap();
            for i in 0..p.len() {
                prop_assert_eq!(m.probs()[i] == 0.0, p.probs()[i] * e[i] == 0.0);
            }
        }

        #[test]
        fn undiscounted_returns_are_suffix_sums(rewards in prop::collection::vec(-100i32..100, 1..30)) {
            let r: Vec<f64> = rewards.iter().map(|&x| x as f64).collect();
            let mut suffix: Vec<f64> = r.iter().rev().scan(0.0, |acc, x| { *acc += x; Some(*acc) }).collect();
            suffix.reverse();
            prop_assert_eq!(discounted_returns(&r, 1.0), suffix);
        }
    }
}
