// SPDX-License-Identifier: Apache-2.0

//! Optimal bounded-velocity capacity control under Brownian demand.
//!
//! The crate solves for the no-action band `[L, U]` of the optimal policy,
//! builds and checks the value function, simulates the policy against two
//! baselines, and provides finite-difference and brute-force oracles.

pub mod cli;
pub mod config;
pub mod contract;
pub mod demand;
pub mod error;
pub mod evaluate;
pub mod model;
pub mod oracle;
pub mod policies;
pub mod rootfind;
pub mod threshold_solver;

pub use error::{Error, Result};
pub use model::{Model, ModelParams};
pub use threshold_solver::{CaseTag, ThresholdPolicy};
