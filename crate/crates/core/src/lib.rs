//! Markov branching processes in a varying environment with theta-positive
//! offspring generating functions
//!
//! `h_t(s) = 1 - a_t (1-s) + a_t (1+theta)^-1 (1-s)^(1+theta)`,
//!
//! death rate `lambda_t` and `0 <= a_t <= 1 + 1/theta`.
//!
//! * [`env`]: environments, validation and the built-in scenarios.
//! * [`transforms`]: `Lambda_t`, `ln mu_t`, `A_t`, `V_t`, `B_t`, `mu_t^theta V_t`
//!   and probing of their limits.
//! * [`exact`]: generating functions, survival, conditional laws, extinction
//!   and limit laws.
//! * [`classify`]: the five asymptotic regimes.
//! * [`sim`] and [`mc`]: exact simulation and Monte Carlo verification.
//! * [`cli`]: the `theta-branch` command.

pub mod classify;
pub mod cli;
pub mod env;
pub mod error;
pub mod exact;
pub mod mc;
pub mod quad;
pub mod sim;
pub mod transforms;

pub use classify::{Regime, RegimeReport};
pub use env::{
    builtin_scenario, list_scenarios, Environment, HazardSpec, OffspringMeanSpec, ScenarioParams,
    Theta,
};
pub use error::{EnvError, NumericError, SimError};
pub use transforms::TransformValue;
