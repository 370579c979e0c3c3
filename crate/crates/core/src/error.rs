// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model, config or pattern invariant does not hold.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("no sign change on bracket [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("sub-case residual check failed: {0}")]
    ResidualCheck(String),

    #[error("smooth-fit violation at x = {breakpoint}: {detail}")]
    SmoothFit { breakpoint: f64, detail: String },

    #[error("degenerate velocity window: theta_l = {theta_l}, theta_u = {theta_u}")]
    DegenerateVelocityWindow { theta_l: f64, theta_u: f64 },

    #[error("invalid aggregate economics: N_p(w) = {n_p} <= N_s = {n_s}")]
    InvalidAggregateEconomics { n_p: f64, n_s: f64 },

    #[error("no feasible contract on the lattice")]
    NoFeasibleContract,

    #[error("LP solver exceeded {0} iterations")]
    IterationCap(usize),

    #[error("HJB iteration did not converge within {0} sweeps")]
    NoConvergence(usize),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Numerical failures map to exit code 2, everything else to 1.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoSignChange { .. }
                | Error::ResidualCheck(_)
                | Error::SmoothFit { .. }
                | Error::IterationCap(_)
                | Error::NoConvergence(_)
        )
    }
}
