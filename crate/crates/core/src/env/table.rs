use std::f64::consts::{FRAC_PI_4, PI};

use rand::RngCore;

use super::{EnvState, Environment, StepResult, TerminalCause};
use crate::error::{Error, Result};
use crate::nn::Features;

pub const FORWARD_DISTANCE: f64 = 0.005;
pub const TURN_ANGLE: f64 = 0.1;
pub const MAX_STEPS: u32 = 2000;
pub const GOAL_REWARD: f64 = 100.0;
pub const FALL_REWARD: f64 = -50.0;
pub const DOCK_CENTER: (f64, f64) = (0.5, 0.5);
pub const DOCK_HALF_WIDTH: f64 = 0.05;
pub const DOCK_HEADING: f64 = FRAC_PI_4;
pub const DOCK_ANGLE_TOLERANCE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableAction {
    Forward = 0,
    Left = 1,
    Right = 2,
}

impl TableAction {
    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(TableAction::Forward),
            1 => Ok(TableAction::Left),
            2 => Ok(TableAction::Right),
            _ => Err(Error::InvalidArgument(format!("invalid table action {i}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl TableState {
    pub fn features(&self) -> Features {
        Features::Dense(vec![self.x, self.y, self.theta])
    }

    pub fn on_table(&self) -> bool {
        (0.0..=1.0).contains(&self.x) && (0.0..=1.0).contains(&self.y)
    }

    pub fn docked(&self) -> bool {
        (self.x - DOCK_CENTER.0).abs() <= DOCK_HALF_WIDTH
            && (self.y - DOCK_CENTER.1).abs() <= DOCK_HALF_WIDTH
            && angular_distance(self.theta, DOCK_HEADING) <= DOCK_ANGLE_TOLERANCE
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut t = theta - two_pi * ((theta + PI) / two_pi).floor();
    if t <= -PI {
        t += two_pi;
    }
    if t > PI {
        t -= two_pi;
    }
    t
}

/// Absolute angular difference in `[0, pi]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

pub fn table_reset() -> TableState {
    TableState {
        x: 0.1,
        y: 0.1,
        theta: 0.1,
    }
}

/// Applies one action. `steps_after` is the episode's step count including
/// this step, used for the timeout.
pub fn table_step(state: &TableState, action: usize, steps_after: u32) -> Result<(TableState, f64, Option<TerminalCause>)> {
    let mut next = *state;
    match TableAction::from_index(action)? {
        TableAction::Forward => {
            next.x += FORWARD_DISTANCE * state.theta.cos();
            next.y += FORWARD_DISTANCE * state.theta.sin();
        }
        TableAction::Left => next.theta = wrap_angle(state.theta + TURN_ANGLE),
        TableAction::Right => next.theta = wrap_angle(state.theta - TURN_ANGLE),
    }
    if !next.on_table() {
        return Ok((next, FALL_REWARD, Some(TerminalCause::Fell)));
    }
    if next.docked() {
        return Ok((next, GOAL_REWARD, Some(TerminalCause::Goal)));
    }
    if steps_after >= MAX_STEPS {
        return Ok((next, 0.0, Some(TerminalCause::Timeout)));
    }
    Ok((next, 0.0, None))
}

#[derive(Debug, Clone)]
pub struct TableEnv {
    state: TableState,
    steps: u32,
}

impl Default for TableEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl TableEnv {
    pub fn new() -> Self {
        Self {
            state: table_reset(),
            steps: 0,
        }
    }

    pub fn table_state(&self) -> TableState {
        self.state
    }

    pub fn set_state(&mut self, state: TableState) {
        self.state = state;
    }
}

impl Environment for TableEnv {
    fn n_actions(&self) -> usize {
        3
    }

    fn obs_dim(&self) -> usize {
        3
    }

    fn reset(&mut self) -> Features {
        self.state = table_reset();
        self.steps = 0;
        self.state.features()
    }

    fn step(&mut self, action: usize, _rng: &mut dyn RngCore) -> Result<StepResult> {
        let (next, reward, terminal) = table_step(&self.state, action, self.steps + 1)?;
        self.steps += 1;
        self.state = next;
        Ok(StepResult {
            observation: next.features(),
            reward,
            terminal,
            primitive_steps: 1,
        })
    }

    fn state(&self) -> EnvState {
        EnvState::Table(self.state)
    }

    fn observation(&self) -> Features {
        self.state.features()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn st(x: f64, y: f64, theta: f64) -> TableState {
        TableState { x, y, theta }
    }

    #[test]
    fn reset_is_fixed() {
        assert_eq!(table_reset(), st(0.1, 0.1, 0.1));
        let mut env = TableEnv::new();
        let a = env.reset();
        let b = env.reset();
        assert_eq!(a, b);
        assert_eq!(a.to_dense(), vec![0.1, 0.1, 0.1]);
    }

    #[test]
    fn forward_moves_along_heading() {
        let (next, r, t) = table_step(&st(0.1, 0.1, 0.0), 0, 1).unwrap();
        assert!((next.x - 0.105).abs() < 1e-15);
        assert_eq!(next.y, 0.1);
        assert_eq!(next.theta, 0.0);
        assert_eq!((r, t), (0.0, None));
    }

    #[test]
    fn turns_change_heading_only() {
        let s = st(0.3, 0.4, 0.0);
        let (l, _, _) = table_step(&s, 1, 1).unwrap();
        let (r, _, _) = table_step(&s, 2, 1).unwrap();
        assert_eq!((l.x, l.y), (0.3, 0.4));
        assert!((l.theta - 0.1).abs() < 1e-15 && (r.theta + 0.1).abs() < 1e-15);
    }

    #[test]
    fn falling_off() {
        let (next, r, t) = table_step(&st(0.002, 0.5, PI), 0, 1).unwrap();
        assert!(next.x < 0.0);
        assert_eq!((r, t), (-50.0, Some(TerminalCause::Fell)));
    }

    #[test]
    fn docking() {
        for a in 0..3 {
            let (_, r, t) = table_step(&st(0.5, 0.5, FRAC_PI_4), a, 1).unwrap();
            assert_eq!((r, t), (100.0, Some(TerminalCause::Goal)));
        }
        // Heading outside tolerance does not dock.
        let (_, r, t) = table_step(&st(0.5, 0.5, FRAC_PI_4 + 0.35), 0, 1).unwrap();
        assert_eq!((r, t), (0.0, None));
        // Turning right brings it back to 0.25 off.
        let (_, r, t) = table_step(&st(0.5, 0.5, FRAC_PI_4 + 0.35), 2, 1).unwrap();
        assert_eq!((r, t), (100.0, Some(TerminalCause::Goal)));
        // Wrapped heading docks.
        assert!(st(0.5, 0.5, FRAC_PI_4 + 2.0 * PI).docked());
    }

    #[test]
    fn timeout_at_step_limit() {
        let (_, r, t) = table_step(&st(0.3, 0.3, 0.0), 1, MAX_STEPS).unwrap();
        assert_eq!((r, t), (0.0, Some(TerminalCause::Timeout)));
        let mut env = TableEnv::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut n = 0;
        loop {
            n += 1;
            let res = env.step(1, &mut rng).unwrap();
            if res.done() {
                assert_eq!(res.terminal, Some(TerminalCause::Timeout));
                break;
            }
        }
        assert_eq!(n, MAX_STEPS);
    }

    #[test]
    fn invalid_action() {
        assert!(table_step(&table_reset(), 3, 1).is_err());
    }

    proptest! {
        #[test]
        fn wrap_stays_in_range(theta in -100.0f64..100.0) {
            let w = wrap_angle(theta);
            prop_assert!(w > -PI && w <= PI);
            prop_assert!(((theta - w) / (2.0 * PI)).fract().abs() < 1e-9
                || (1.0 - ((theta - w) / (2.0 * PI)).fract().abs()) < 1e-9);
        }

        #[test]
        fn positions_stay_on_table_until_fall(actions in prop::collection::vec(0usize..3, 1..400)) {
            let mut s = st(0.05, 0.05, -2.0);
            for (i, a) in actions.iter().enumerate() {
                let (next, r, t) = table_step(&s, *a, i as u32 + 1).unwrap();
                if t == Some(TerminalCause::Fell) {
                    prop_assert_eq!(r, -50.0);
                    prop_assert!(!next.on_table());
                    break;
                }
                prop_assert!(next.on_table());
                prop_assert!(next.theta > -PI && next.theta <= PI);
                if t.is_some() { break; }
                s = next;
            }
        }
    }
}
