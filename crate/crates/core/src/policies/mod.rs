// SPDX-License-Identifier: Apache-2.0

//! Capacity controllers run against a sampled demand path.
//!
//! Every controller picks a velocity per step, clipped to
//! `[theta_l, theta_u]`, and capacity advances by exactly `velocity * dt`.

mod cf;
mod offline_lp;

pub use cf::{cf_resolve_step, least_squares_slope, simulate_cf};
pub use offline_lp::{
    lp_objective, offline_lp_solve, slot_averages, solve_offline_dp, solve_offline_simplex,
    LpSolution,
};

use std::fmt;
use std::str::FromStr;

use crate::demand::{DemandPattern, SamplePath, SimConfig};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::threshold_solver::{solve_policy, ThresholdPolicy};

#[derive(Debug, Clone, PartialEq)]
pub struct ControlTrajectory {
    /// Step length in hours.
    pub dt: f64,
    /// `P_0 .. P_K`.
    pub capacity: Vec<f64>,
    /// `theta_0 .. theta_{K-1}`; `P_{k+1} = P_k + theta_k dt`.
    pub velocity: Vec<f64>,
}

impl ControlTrajectory {
    pub fn steps(&self) -> usize {
        self.velocity.len()
    }
}

/// Runs `rule(k, P_k, D_k)` over the path, clipping each velocity into
/// `[theta_l, theta_u]`.
pub fn drive<F>(path: &SamplePath, p0: f64, theta_l: f64, theta_u: f64, mut rule: F) -> ControlTrajectory
where
    F: FnMut(usize, f64, f64) -> f64,
{
    let k = path.steps();
    let mut capacity = Vec::with_capacity(k + 1);
    let mut velocity = Vec::with_capacity(k);
    let mut p = p0;
    capacity.push(p);
    for step in 0..k {
        let v = rule(step, p, path.values[step]).clamp(theta_l, theta_u);
        p += v * path.dt;
        velocity.push(v);
        capacity.push(p);
    }
    ControlTrajectory {
        dt: path.dt,
        capacity,
        velocity,
    }
}

/// Bang-bang rule of a band: push up below `L`, down above `U`, hold inside.
pub fn threshold_policy_step(x: f64, policy: &ThresholdPolicy, theta_l: f64, theta_u: f64) -> f64 {
    if x < policy.lower {
        theta_u
    } else if x > policy.upper {
        theta_l
    } else {
        0.0
    }
}

/// One band per pattern segment, each solved with that segment's drift.
#[derive(Debug, Clone)]
pub struct OptimalController {
    pattern: DemandPattern,
    bands: Vec<ThresholdPolicy>,
    theta_l: f64,
    theta_u: f64,
}

impl OptimalController {
    pub fn new(pattern: &DemandPattern, params: &ModelParams) -> Result<Self> {
        let bands = pattern
            .drifts()
            .into_iter()
            .map(|b| solve_policy(&ModelParams { b, ..*params }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::with_bands(pattern, params, bands))
    }

    /// A controller with caller-chosen bands, one per segment.
    pub fn with_bands(pattern: &DemandPattern, params: &ModelParams, bands: Vec<ThresholdPolicy>) -> Self {
        assert_eq!(bands.len(), pattern.segment_count());
        OptimalController {
            pattern: pattern.clone(),
            bands,
            theta_l: params.theta_l,
            theta_u: params.theta_u,
        }
    }

    pub fn bands(&self) -> &[ThresholdPolicy] {
        &self.bands
    }

    pub fn simulate(&self, path: &SamplePath, p0: f64) -> ControlTrajectory {
        // Segment boundaries as step indices, so the hot loop avoids searching.
        let mut segment = 0;
        let mut next_switch = self.switch_step(path.dt, 1);
        drive(path, p0, self.theta_l, self.theta_u, |k, p, d| {
            while k >= next_switch {
                segment += 1;
                next_switch = self.switch_step(path.dt, segment + 1);
            }
            threshold_policy_step(p - d, &self.bands[segment], self.theta_l, self.theta_u)
        })
    }

    /// First step index that belongs to segment `i`.
    fn switch_step(&self, dt: f64, i: usize) -> usize {
        if i >= self.pattern.segment_count() {
            return usize::MAX;
        }
        let t = self.pattern.times()[i];
        // Step k is in segment i once k dt >= t, up to the pattern's slack.
        (((t - 1e-9) / dt).ceil().max(0.0)) as usize
    }
}

/// Simulates the optimal band policy, re-solved for each segment's drift.
pub fn simulate_optimal(
    path: &SamplePath,
    pattern: &DemandPattern,
    params: &ModelParams,
    p0: f64,
) -> Result<ControlTrajectory> {
    Ok(OptimalController::new(pattern, params)?.simulate(path, p0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Optimal,
    OfflineLp,
    Cf,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Optimal, PolicyKind::OfflineLp, PolicyKind::Cf];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Optimal => "optimal",
            PolicyKind::OfflineLp => "offline-lp",
            PolicyKind::Cf => "cf",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidParams(format!(
                    "unknown policy {s:?} (expected optimal, offline-lp or cf)"
                ))
            })
    }
}

/// A policy ready to run on many paths of one configuration.
#[derive(Debug, Clone)]
pub enum PreparedPolicy {
    Optimal(OptimalController),
    OfflineLp,
    Cf,
}

impl PreparedPolicy {
    pub fn new(kind: PolicyKind, pattern: &DemandPattern, params: &ModelParams) -> Result<Self> {
        Ok(match kind {
            PolicyKind::Optimal => PreparedPolicy::Optimal(OptimalController::new(pattern, params)?),
            PolicyKind::OfflineLp => PreparedPolicy::OfflineLp,
            PolicyKind::Cf => PreparedPolicy::Cf,
        })
    }

    pub fn run(
        &self,
        path: &SamplePath,
        pattern: &DemandPattern,
        cfg: &SimConfig,
        params: &ModelParams,
        p0: f64,
    ) -> Result<ControlTrajectory> {
        match self {
            PreparedPolicy::Optimal(c) => Ok(c.simulate(path, p0)),
            PreparedPolicy::OfflineLp => offline_lp_solve(path, cfg, params, p0),
            PreparedPolicy::Cf => Ok(simulate_cf(path, pattern, cfg, params, p0)),
        }
    }
}
