//! Dense two-layer networks with hand-written backpropagation.
//!
//! Both the advised policy network and the Q-value network share the same
//! substrate: a `tanh` hidden layer followed by an affine output layer. The
//! policy applies a sigmoid to the output, multiplies element-wise by the
//! advice vector and normalizes; the value network uses the affine output
//! directly.
//!
//! Parameters are stored in one flat vector laid out as `[W1, b1, W2, b2]`,
//! weights row-major (`out_dim x in_dim`). Gradients and Adam moments share
//! that layout.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::shaping::{AdviceVector, PolicyDistribution};

/// Normalizers below this value are clamped to it.
pub const NORMALIZER_FLOOR: f64 = 1e-12;

pub const DEFAULT_HIDDEN: usize = 100;

/// Network input. Grid observations are one-hot cell indicators, which the
/// forward and backward passes exploit by skipping zero inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Dense(Vec<f64>),
    OneHot { index: usize, len: usize },
}

impl Features {
    pub fn len(&self) -> usize {
        match self {
            Features::Dense(v) => v.len(),
            Features::OneHot { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_dense(&self) -> Vec<f64> {
        match self {
            Features::Dense(v) => v.clone(),
            Features::OneHot { index, len } => {
                let mut v = vec![0.0; *len];
                v[*index] = 1.0;
                v
            }
        }
    }

    fn for_each_nonzero(&self, mut f: impl FnMut(usize, f64)) {
        match self {
            Features::Dense(v) => {
                for (j, &x) in v.iter().enumerate() {
                    if x != 0.0 {
                        f(j, x);
                    }
                }
            }
            Features::OneHot { index, .. } => f(*index, 1.0),
        }
    }
}

impl From<Vec<f64>> for Features {
    fn from(v: Vec<f64>) -> Self {
        Features::Dense(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpShape {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl MlpShape {
    pub fn new(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            input,
            hidden,
            output,
        }
    }

    pub fn param_count(&self) -> usize {
        self.hidden * self.input + self.hidden + self.output * self.hidden + self.output
    }

    fn b1_offset(&self) -> usize {
        self.hidden * self.input
    }

    fn w2_offset(&self) -> usize {
        self.b1_offset() + self.hidden
    }

    fn b2_offset(&self) -> usize {
        self.w2_offset() + self.output * self.hidden
    }
}

/// Borrowed view of one dense layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerParams<'a> {
    pub weights: &'a [f64],
    pub biases: &'a [f64],
    pub out_dim: usize,
    pub in_dim: usize,
}

impl LayerParams<'_> {
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.in_dim + col]
    }
}

/// `tanh` hidden layer plus affine output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    shape: MlpShape,
    params: Vec<f64>,
}

impl Mlp {
    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn new<R: Rng + ?Sized>(shape: MlpShape, rng: &mut R) -> Result<Self> {
        if shape.input == 0 || shape.hidden == 0 || shape.output == 0 {
            return Err(Error::InvalidArgument(format!(
                "layer sizes must be positive, got {shape:?}"
            )));
        }
        let mut params = vec![0.0; shape.param_count()];
        let bound1 = 1.0 / (shape.input as f64).sqrt();
        for w in &mut params[..shape.b1_offset()] {
            *w = rng.random_range(-bound1..=bound1);
        }
        let bound2 = 1.0 / (shape.hidden as f64).sqrt();
        for w in &mut params[shape.w2_offset()..shape.b2_offset()] {
            *w = rng.random_range(-bound2..=bound2);
        }
        Ok(Self { shape, params })
    }

    pub fn from_params(shape: MlpShape, params: Vec<f64>) -> Result<Self> {
        if params.len() != shape.param_count() {
            return Err(Error::Dimension {
                what: "parameter vector",
                expected: shape.param_count(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        Ok(Self { shape, params })
    }

    pub fn shape(&self) -> MlpShape {
        self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn layer1(&self) -> LayerParams<'_> {
        let s = self.shape;
        LayerParams {
            weights: &self.params[..s.b1_offset()],
            biases: &self.params[s.b1_offset()..s.w2_offset()],
            out_dim: s.hidden,
            in_dim: s.input,
        }
    }

    pub fn layer2(&self) -> LayerParams<'_> {
        let s = self.shape;
        LayerParams {
            weights: &self.params[s.w2_offset()..s.b2_offset()],
            biases: &self.params[s.b2_offset()..],
            out_dim: s.output,
            in_dim: s.hidden,
        }
    }

    /// Returns `(hidden pre-activation, hidden activation, output pre-activation)`.
    pub fn forward(&self, x: &Features) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let s = self.shape;
        if x.len() != s.input {
            return Err(Error::Dimension {
                what: "state features",
                expected: s.input,
                got: x.len(),
            });
        }
        let l1 = self.layer1();
        let mut pre = l1.biases.to_vec();
        x.for_each_nonzero(|j, xj| {
            for (i, p) in pre.iter_mut().enumerate() {
                *p += l1.weights[i * s.input + j] * xj;
            }
        });
        let hidden: Vec<f64> = pre.iter().map(|v| v.tanh()).collect();
        let l2 = self.layer2();
        let out = (0..s.output)
            .map(|k| {
                let row = &l2.weights[k * s.hidden..(k + 1) * s.hidden];
                l2.biases[k] + row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>()
            })
            .collect();
        Ok((pre, hidden, out))
    }

    /// Accumulates into `grad` the parameter gradient given the gradient of
    /// the loss with respect to the output pre-activations.
    pub fn backward_into(&self, x: &Features, hidden: &[f64], d_out: &[f64], grad: &mut [f64]) {
        let s = self.shape;
        debug_assert_eq!(grad.len(), s.param_count());
        let l2 = self.layer2();
        let mut d_hidden = vec![0.0; s.hidden];
        for (k, &dz) in d_out.iter().enumerate() {
            if dz == 0.0 {
                continue;
            }
            let w_off = s.w2_offset() + k * s.hidden;
            for i in 0..s.hidden {
                grad[w_off + i] += dz * hidden[i];
                d_hidden[i] += dz * l2.weights[k * s.hidden + i];
            }
            grad[s.b2_offset() + k] += dz;
        }
        for (dh, h) in d_hidden.iter_mut().zip(hidden) {
            *dh *= 1.0 - h * h;
        }
        for (i, &dh) in d_hidden.iter().enumerate() {
            grad[s.b1_offset() + i] += dh;
        }
        x.for_each_nonzero(|j, xj| {
            for (i, &dh) in d_hidden.iter().enumerate() {
                grad[i * s.input + j] += dh * xj;
            }
        });
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(SNAPSHOT_MAGIC.len() + 24 + 8 * self.params.len());
        out.extend_from_slice(SNAPSHOT_MAGIC);
        for d in [self.shape.input, self.shape.hidden, self.shape.output] {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = SNAPSHOT_MAGIC.len() + 24;
        if bytes.len() < header || &bytes[..SNAPSHOT_MAGIC.len()] != SNAPSHOT_MAGIC {
            return Err(Error::Snapshot("missing snapshot header".into()));
        }
        let dim = |i: usize| {
            let off = SNAPSHOT_MAGIC.len() + 8 * i;
            u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()) as usize
        };
        let shape = MlpShape::new(dim(0), dim(1), dim(2));
        let body = &bytes[header..];
        if body.len() != 8 * shape.param_count() {
            return Err(Error::Snapshot(format!(
                "expected {} parameters, found {} bytes",
                shape.param_count(),
                body.len()
            )));
        }
        let params = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Mlp::from_params(shape, params)
    }
}

/// Snapshot header: magic, then `input`, `hidden`, `output` as little-endian
/// u64, then every parameter as a little-endian f64 in `[W1, b1, W2, b2]`
/// order.
pub const SNAPSHOT_MAGIC: &[u8; 8] = b"DPGNET01";

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Everything `MlpPolicy::backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Features,
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub sigmoid: Vec<f64>,
    pub advice: AdviceVector,
    /// `sigmoid(logits) * advice`, before normalization.
    pub mixed: Vec<f64>,
    pub normalizer: f64,
    /// Set when the normalizer fell below [`NORMALIZER_FLOOR`].
    pub clamped: bool,
    pub output: Vec<f64>,
}

/// Policy network whose output is the learned sigmoid head mixed with advice.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpPolicy {
    mlp: Mlp,
}

impl MlpPolicy {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, actions: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            mlp: Mlp::new(MlpShape::new(input, hidden, actions), rng)?,
        })
    }

    pub fn from_mlp(mlp: Mlp) -> Self {
        Self { mlp }
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn params(&self) -> &[f64] {
        self.mlp.params()
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.mlp.params_mut()
    }

    pub fn n_actions(&self) -> usize {
        self.mlp.shape.output
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.shape.input
    }

    pub fn forward(&self, state: &Features, advice: &AdviceVector) -> Result<(PolicyDistribution, ForwardCache)> {
        let n = self.n_actions();
        if advice.len() != n {
            return Err(Error::Dimension {
                what: "advice",
                expected: n,
                got: advice.len(),
            });
        }
        let (hidden_pre, hidden, logits) = self.mlp.forward(state)?;
        let sig: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
        let mixed: Vec<f64> = sig.iter().zip(advice.prefs()).map(|(s, e)| s * e).collect();
        let mut normalizer: f64 = mixed.iter().sum();
        let clamped = normalizer < NORMALIZER_FLOOR;
        if clamped {
            normalizer = NORMALIZER_FLOOR;
        }
        let output: Vec<f64> = mixed.iter().map(|m| m / normalizer).collect();
        let dist = PolicyDistribution::from_normalized(output.clone());
        Ok((
            dist,
            ForwardCache {
                input: state.clone(),
                hidden_pre,
                hidden,
                logits,
                sigmoid: sig,
                advice: advice.clone(),
                mixed,
                normalizer,
                clamped,
                output,
            },
        ))
    }

    /// `-scale * log y[action]`, with the log split as `ln(mixed) - ln(normalizer)`.
    pub fn log_loss(cache: &ForwardCache, action: usize, scale: f64) -> Result<f64> {
        let m = *cache.mixed.get(action).ok_or(Error::Dimension {
            what: "action index",
            expected: cache.mixed.len(),
            got: action,
        })?;
        if m <= 0.0 {
            return Err(Error::ZeroProbabilityAction);
        }
        Ok(-scale * (m.ln() - cache.normalizer.ln()))
    }

    /// Gradient of `-scale * log y[action]` with respect to all parameters.
    pub fn backward(&self, cache: &ForwardCache, action: usize, scale: f64) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.mlp.shape.param_count()];
        self.backward_into(cache, action, scale, &mut grad)?;
        Ok(grad)
    }

    pub fn backward_into(&self, cache: &ForwardCache, action: usize, scale: f64, grad: &mut [f64]) -> Result<()> {
        let n = self.n_actions();
        if action >= n {
            return Err(Error::Dimension {
                what: "action index",
                expected: n,
                got: action,
            });
        }
        if grad.len() != self.mlp.shape.param_count() {
            return Err(Error::Dimension {
                what: "gradient buffer",
                expected: self.mlp.shape.param_count(),
                got: grad.len(),
            });
        }
        if cache.output[action] <= 0.0 {
            return Err(Error::ZeroProbabilityAction);
        }
        // d/dz_j of -scale * (ln(sig_a e_a) - ln(sum_b sig_b e_b))
        //   = -scale * (1 - sig_j) * ([j == a] - y_j)
        // with y_j computed against the unclamped normalizer. When clamped,
        // the normalizer is a constant and only the numerator contributes.
        let d_logits: Vec<f64> = (0..n)
            .map(|j| {
                let indicator = if j == action { 1.0 } else { 0.0 };
                let y_j = if cache.clamped { 0.0 } else { cache.output[j] };
                -scale * (1.0 - cache.sigmoid[j]) * (indicator - y_j)
            })
            .collect();
        self.mlp.backward_into(&cache.input, &cache.hidden, &d_logits, grad);
        Ok(())
    }

    /// Distribution under neutral advice.
    pub fn learned_distribution(&self, state: &Features) -> Result<PolicyDistribution> {
        let (d, _) = self.forward(state, &AdviceVector::neutral(self.n_actions()))?;
        Ok(d)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.mlp.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Ok(Self::from_mlp(Mlp::from_bytes(&bytes)?))
    }
}

/// Action-value network: same substrate with a linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    mlp: Mlp,
}

impl ValueNet {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, actions: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            mlp: Mlp::new(MlpShape::new(input, hidden, actions), rng)?,
        })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn params(&self) -> &[f64] {
        self.mlp.params()
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.mlp.params_mut()
    }

    pub fn n_actions(&self) -> usize {
        self.mlp.shape.output
    }

    pub fn q_values(&self, state: &Features) -> Result<Vec<f64>> {
        Ok(self.mlp.forward(state)?.2)
    }

    /// Accumulates the gradient of `weight * 0.5 * (Q(state, action) - target)^2`.
    pub fn td_backward_into(
        &self,
        state: &Features,
        action: usize,
        target: f64,
        weight: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        let (_, hidden, q) = self.mlp.forward(state)?;
        let err = q[action] - target;
        let mut d_out = vec![0.0; q.len()];
        d_out[action] = weight * err;
        self.mlp.backward_into(state, &hidden, &d_out, grad);
        Ok(err)
    }

    pub fn copy_from(&mut self, other: &ValueNet) {
        self.mlp.params.copy_from_slice(&other.mlp.params);
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(n_params: usize, alpha: f64) -> Self {
        Self {
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            step_count: 0,
            alpha,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        adam_step(params, grads, self)
    }
}

pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::Dimension {
            what: "adam parameters",
            expected: state.first_moment.len(),
            got: grads.len(),
        });
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::DivergentGradient);
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        let m = b1 * state.first_moment[i] + (1.0 - b1) * g;
        let v = b2 * state.second_moment[i] + (1.0 - b2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        params[i] -= state.alpha * (m / c1) / ((v / c2).sqrt() + state.epsilon);
    }
    Ok(())
}

/// `exp((v - max v) / temperature)`, normalized.
pub fn softmax(values: &[f64], temperature: f64) -> Result<PolicyDistribution> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "softmax temperature must be positive, got {temperature}"
        )));
    }
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("softmax needs finite, non-empty values".into()));
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| ((v - max) / temperature).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(PolicyDistribution::from_normalized(
        exps.into_iter().map(|e| e / total).collect(),
    ))
}

/// Central-difference gradient of `loss` at `params`.
pub fn finite_diff_grad<F>(mut loss: F, params: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let mut theta = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = theta[i];
        theta[i] = orig + h;
        let plus = loss(&theta);
        theta[i] = orig - h;
        let minus = loss(&theta);
        theta[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_state(r: &mut ChaCha8Rng, n: usize) -> Features {
        Features::Dense((0..n).map(|_| r.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn neutral_advice_gives_normalized_sigmoid() {
        let mut r = rng(1);
        let net = MlpPolicy::new(3, 8, 5, &mut r).unwrap();
        let s = random_state(&mut r, 3);
        let (y, cache) = net.forward(&s, &AdviceVector::neutral(5)).unwrap();
        let total: f64 = cache.sigmoid.iter().sum();
        for (p, sg) in y.probs().iter().zip(&cache.sigmoid) {
            assert!((p - sg / total).abs() < 1e-15);
        }
    }

    #[test]
    fn one_hot_advice_gives_one_hot_output() {
        let mut r = rng(2);
        let net = MlpPolicy::new(4, 10, 5, &mut r).unwrap();
        let s = random_state(&mut r, 4);
        let (y, _) = net.forward(&s, &AdviceVector::one_hot(5, 3)).unwrap();
        assert_eq!(y.probs(), &[0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn zero_state_matches_straight_line_evaluation() {
        let mut r = rng(3);
        let net = MlpPolicy::new(3, 6, 2, &mut r).unwrap();
        let s = Features::Dense(vec![0.0; 3]);
        let (y, _) = net.forward(&s, &AdviceVector::neutral(2)).unwrap();
        // Independent evaluation: with s = 0 the hidden layer is tanh(b1) = 0,
        // so the output is sigma(b2) normalized.
        let l1 = net.mlp().layer1();
        let l2 = net.mlp().layer2();
        let h: Vec<f64> = l1.biases.iter().map(|b| b.tanh()).collect();
        let z: Vec<f64> = (0..2)
            .map(|k| l2.biases[k] + (0..6).map(|i| l2.weight(k, i) * h[i]).sum::<f64>())
            .collect();
        let sg: Vec<f64> = z.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect();
        let tot = sg[0] + sg[1];
        assert!((y.probs()[0] - sg[0] / tot).abs() < 1e-14);
        assert!((y.probs()[1] - sg[1] / tot).abs() < 1e-14);
        assert!((y.probs()[0] - 0.5).abs() < 1e-14, "zero biases give a uniform output");
    }

    #[test]
    fn forward_rejects_bad_dimensions() {
        let mut r = rng(4);
        let net = MlpPolicy::new(3, 4, 2, &mut r).unwrap();
        assert!(net.forward(&Features::Dense(vec![0.0; 2]), &AdviceVector::neutral(2)).is_err());
        assert!(net.forward(&Features::Dense(vec![0.0; 3]), &AdviceVector::neutral(3)).is_err());
    }

    #[test]
    fn zero_probability_action_is_an_error() {
        let mut r = rng(5);
        let net = MlpPolicy::new(3, 4, 3, &mut r).unwrap();
        let (_, cache) = net
            .forward(&Features::Dense(vec![0.1, 0.2, 0.3]), &AdviceVector::one_hot(3, 0))
            .unwrap();
        assert!(matches!(net.backward(&cache, 1, 1.0), Err(Error::ZeroProbabilityAction)));
    }

    #[test]
    fn deterministic_advice_zeroes_gradient() {
        let mut r = rng(6);
        let net = MlpPolicy::new(3, 12, 4, &mut r).unwrap();
        let s = random_state(&mut r, 3);
        let (_, cache) = net.forward(&s, &AdviceVector::one_hot(4, 2)).unwrap();
        let g = net.backward(&cache, 2, 37.5).unwrap();
        assert!(g.iter().all(|v| v.abs() <= 1e-10));
    }

    #[test]
    fn stochastic_advice_gradient_matches_finite_differences() {
        let mut r = rng(7);
        let net = MlpPolicy::new(3, 7, 2, &mut r).unwrap();
        let s = random_state(&mut r, 3);
        let advice = AdviceVector::new(vec![0.7, 0.3]).unwrap();
        let (_, cache) = net.forward(&s, &advice).unwrap();
        let analytic = net.backward(&cache, 1, 1.3).unwrap();
        let shape = net.mlp().shape();
        let numeric = finite_diff_grad(
            |theta| {
                let p = MlpPolicy::from_mlp(Mlp::from_params(shape, theta.to_vec()).unwrap());
                let (_, c) = p.forward(&s, &advice).unwrap();
                MlpPolicy::log_loss(&c, 1, 1.3).unwrap()
            },
            net.params(),
            1e-5,
        )
        .unwrap();
        for (a, n) in analytic.iter().zip(&numeric) {
            let denom = a.abs().max(n.abs()).max(1e-8);
            assert!((a - n).abs() / denom < 1e-4, "analytic {a} numeric {n}");
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut params = vec![0.5, -1.0];
        let mut st = AdamState::new(2, 0.001);
        adam_step(&mut params, &[0.0, 0.0], &mut st).unwrap();
        assert_eq!(params, vec![0.5, -1.0]);
        assert_eq!(st.step_count, 1);
        assert_eq!(st.first_moment, vec![0.0, 0.0]);
    }

    #[test]
    fn adam_decays_moments_on_zero_gradient() {
        let mut params = vec![0.0];
        let mut st = AdamState::new(1, 0.001);
        st.first_moment = vec![1.0];
        st.second_moment = vec![1.0];
        adam_step(&mut params, &[0.0], &mut st).unwrap();
        assert!((st.first_moment[0] - 0.9).abs() < 1e-15);
        assert!((st.second_moment[0] - 0.999).abs() < 1e-15);
    }

    #[test]
    fn adam_single_step_value() {
        let mut params = vec![0.0];
        let mut st = AdamState::new(1, 0.001);
        adam_step(&mut params, &[1.0], &mut st).unwrap();
        // m_hat = v_hat = 1, update = -0.001 / (1 + 1e-8)
        assert!((params[0] - (-0.001 / (1.0 + 1e-8))).abs() < 1e-15);
        assert!((params[0] + 0.000999999).abs() < 1e-9);
        let before = params[0];
        adam_step(&mut params, &[1.0], &mut st).unwrap();
        assert!(params[0] < before);
        assert_eq!(st.step_count, 2);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut params = vec![0.0];
        let mut st = AdamState::new(1, 0.001);
        assert!(matches!(
            adam_step(&mut params, &[f64::NAN], &mut st),
            Err(Error::DivergentGradient)
        ));
        assert_eq!(st.step_count, 0);
    }

    #[test]
    fn softmax_examples() {
        let u = softmax(&[3.0, 3.0, 3.0], 0.7).unwrap();
        for p in u.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let d = softmax(&[1.0, 2.0], 0.1).unwrap();
        let expected0 = 1.0 / (1.0 + 10f64.exp());
        assert!((d.probs()[0] - expected0).abs() < 1e-15);
        assert!((d.probs()[0] - 4.5398e-5).abs() < 1e-9);
        assert!((d.probs()[1] - 0.9999546).abs() < 1e-7);
        let flat = softmax(&[1.0, 2.0], 1e6).unwrap();
        assert!((flat.probs()[0] - 0.5).abs() < 1e-5);
        assert!(softmax(&[1.0], 0.0).is_err());
        assert!(softmax(&[1.0], -1.0).is_err());
    }

    #[test]
    fn finite_diff_examples() {
        let g = finite_diff_grad(|t| t.iter().map(|v| v * v).sum(), &[1.0, 2.0], 1e-5).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-6 && (g[1] - 4.0).abs() < 1e-6);
        let z = finite_diff_grad(|_| 3.0, &[1.0, 2.0, 3.0], 1e-5).unwrap();
        assert_eq!(z, vec![0.0; 3]);
        assert!(finite_diff_grad(|_| f64::NAN, &[1.0], 1e-5).is_err());
        assert!(finite_diff_grad(|_| 0.0, &[1.0], 0.0).is_err());
    }

    #[test]
    fn one_hot_features_match_dense() {
        let mut r = rng(8);
        let net = ValueNet::new(6, 5, 3, &mut r).unwrap();
        let oh = Features::OneHot { index: 4, len: 6 };
        let dense = Features::Dense(oh.to_dense());
        assert_eq!(net.q_values(&oh).unwrap(), net.q_values(&dense).unwrap());
        let mut g1 = vec![0.0; net.mlp().shape().param_count()];
        let mut g2 = g1.clone();
        net.td_backward_into(&oh, 1, 0.3, 1.0, &mut g1).unwrap();
        net.td_backward_into(&dense, 1, 0.3, 1.0, &mut g2).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn value_gradient_matches_finite_differences() {
        let mut r = rng(9);
        let net = ValueNet::new(3, 6, 2, &mut r).unwrap();
        let s = random_state(&mut r, 3);
        let mut g = vec![0.0; net.mlp().shape().param_count()];
        net.td_backward_into(&s, 0, 0.8, 1.0, &mut g).unwrap();
        let shape = net.mlp().shape();
        let numeric = finite_diff_grad(
            |theta| {
                let m = Mlp::from_params(shape, theta.to_vec()).unwrap();
                let q = m.forward(&s).unwrap().2;
                0.5 * (q[0] - 0.8).powi(2)
            },
            net.params(),
            1e-5,
        )
        .unwrap();
        for (a, n) in g.iter().zip(&numeric) {
            assert!((a - n).abs() < 1e-7);
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let mut r = rng(10);
        let net = MlpPolicy::new(5, 4, 3, &mut r).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bin");
        net.save(&path).unwrap();
        assert_eq!(MlpPolicy::load(&path).unwrap(), net);
        let bytes = net.mlp().to_bytes();
        assert!(Mlp::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Mlp::from_bytes(b"garbage").is_err());
    }
}
