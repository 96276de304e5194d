//! Randomized checks of the mixed-policy gradient: agreement with central
//! finite differences, exact zero under directive advice, and invariance
//! under uniform advice.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::{finite_diff_grad, Features, Mlp, MlpPolicy, MlpShape};
use crate::shaping::AdviceVector;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
pub const DIRECTIVE_TOLERANCE: f64 = 1e-10;
pub const UNIFORM_TOLERANCE: f64 = 1e-12;
pub const UNIFORM_SCALES: [f64; 3] = [0.1, 1.0, 7.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub trials: usize,
    pub worst: f64,
    pub tolerance: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.worst.is_finite() && self.worst <= self.tolerance
    }
}

/// A random small policy, state, action and return scale.
pub struct Draw {
    pub net: MlpPolicy,
    pub state: Features,
    pub action: usize,
    pub scale: f64,
}

pub fn random_draw<R: Rng + ?Sized>(rng: &mut R) -> Draw {
    let shape = MlpShape::new(rng.random_range(2..7), rng.random_range(2..9), rng.random_range(2..6));
    let params = (0..shape.param_count()).map(|_| rng.random_range(-1.5..1.5)).collect();
    let net = MlpPolicy::from_mlp(Mlp::from_params(shape, params).expect("shape matches"));
    let state = Features::Dense((0..shape.input).map(|_| rng.random_range(-2.0..2.0)).collect());
    let action = rng.random_range(0..shape.output);
    let scale = rng.random_range(-5.0..5.0);
    Draw {
        net,
        state,
        action,
        scale,
    }
}

fn loss_at(draw: &Draw, advice: &AdviceVector, params: &[f64]) -> f64 {
    let shape = draw.net.mlp().shape();
    let net = MlpPolicy::from_mlp(Mlp::from_params(shape, params.to_vec()).expect("shape matches"));
    match net.forward(&draw.state, advice) {
        Ok((_, cache)) => MlpPolicy::log_loss(&cache, draw.action, draw.scale).unwrap_or(f64::NAN),
        Err(_) => f64::NAN,
    }
}

fn max_abs(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Runs the three suites. `flip_sign` negates the analytic gradient, as a
/// negative control that must make the finite-difference suite fail.
pub fn run_gradient_suites(seed: u64, trials: usize, flip_sign: bool) -> Result<Vec<SuiteResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sign = if flip_sign { -1.0 } else { 1.0 };
    let (mut fd_worst, mut det_worst, mut uni_worst) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..trials {
        let draw = random_draw(&mut rng);
        let n = draw.net.n_actions();

        let advice = AdviceVector::new((0..n).map(|_| rng.random_range(0.05..3.0)).collect())?;
        let (_, cache) = draw.net.forward(&draw.state, &advice)?;
        let analytic: Vec<f64> = draw
            .net
            .backward(&cache, draw.action, draw.scale)?
            .into_iter()
            .map(|g| sign * g)
            .collect();
        let numeric = finite_diff_grad(|p| loss_at(&draw, &advice, p), draw.net.params(), FD_STEP)?;
        let err = max_abs(analytic.iter().zip(&numeric).map(|(a, b)| a - b));
        let denom = max_abs(numeric.iter().copied()).max(1e-6);
        fd_worst = fd_worst.max(err / denom);

        let directive = AdviceVector::one_hot(n, draw.action);
        let (_, cache) = draw.net.forward(&draw.state, &directive)?;
        let g = draw.net.backward(&cache, draw.action, draw.scale)?;
        det_worst = det_worst.max(max_abs(g.into_iter().map(|x| sign * x)));

        let (_, cache) = draw.net.forward(&draw.state, &AdviceVector::neutral(n))?;
        let base = draw.net.backward(&cache, draw.action, draw.scale)?;
        for c in UNIFORM_SCALES {
            let uniform = AdviceVector::new(vec![c; n])?;
            let (_, cache) = draw.net.forward(&draw.state, &uniform)?;
            let g = draw.net.backward(&cache, draw.action, draw.scale)?;
            uni_worst = uni_worst.max(max_abs(g.iter().zip(&base).map(|(a, b)| a - b)));
        }
    }
    Ok(vec![
        SuiteResult {
            name: "finite-difference",
            trials,
            worst: fd_worst,
            tolerance: FD_TOLERANCE,
        },
        SuiteResult {
            name: "deterministic-zero",
            trials,
            worst: det_worst,
            tolerance: DIRECTIVE_TOLERANCE,
        },
        SuiteResult {
            name: "uniform-equivalence",
            trials,
            worst: uni_worst,
            tolerance: UNIFORM_TOLERANCE,
        },
    ])
}
