//! Policy-gradient agents that accept action advice through a multiplicative
//! policy mixture, with the environments, advisors and experiment harness
//! needed to train and compare them.

pub mod advisors;
pub mod agents;
pub mod env;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod nn;
pub mod shaping;

pub use error::{Error, Result};
pub use nn::{Features, MlpPolicy, ValueNet};
pub use shaping::{discounted_returns, mix, AdviceVector, PolicyDistribution};
