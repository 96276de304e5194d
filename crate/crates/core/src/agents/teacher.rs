use rand::Rng;

use crate::error::{Error, Result};

pub const TEACHER_PENALTY: f64 = -5.0;

/// Extra reward from a teacher who is present with probability
/// `availability`: zero for an optimal action, `TEACHER_PENALTY` otherwise.
/// One uniform draw is consumed per call.
pub fn reward_shaping_teacher<R: Rng + ?Sized>(
    action: usize,
    optimal_action: Option<usize>,
    availability: f64,
    rng: &mut R,
) -> f64 {
    let present = rng.random::<f64>() < availability;
    match optimal_action {
        Some(best) if present && action != best => TEACHER_PENALTY,
        _ => 0.0,
    }
}

#[derive(Debug, Clone)]
pub struct RewardShapingTeacher {
    pub availability: f64,
    interventions: u64,
}

impl RewardShapingTeacher {
    pub fn new(availability: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&availability) {
            return Err(Error::InvalidArgument(format!("availability must be in [0, 1], got {availability}")));
        }
        Ok(Self {
            availability,
            interventions: 0,
        })
    }

    pub fn shape<R: Rng + ?Sized>(&mut self, action: usize, optimal_action: Option<usize>, rng: &mut R) -> f64 {
        let r = reward_shaping_teacher(action, optimal_action, self.availability, rng);
        if r != 0.0 {
            self.interventions += 1;
        }
        r
    }

    pub fn interventions(&self) -> u64 {
        self.interventions
    }
}
