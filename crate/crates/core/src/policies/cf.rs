// SPDX-License-Identifier: Apache-2.0

//! Online re-solve baseline.
//!
//! At every slot boundary the controller observes demand, estimates its rate
//! from the trailing slot, and assumes demand follows that straight line until
//! the next boundary. Under such a deterministic forecast the cheapest plan
//! is to close the gap at full speed and then ride the line.

use crate::demand::{DemandPattern, SamplePath, SimConfig};
use crate::model::ModelParams;
use crate::policies::{drive, ControlTrajectory};

/// Least-squares slope of equally spaced samples.
pub fn least_squares_slope(values: &[f64], dt: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean_k = (n - 1) as f64 / 2.0;
    let mean_v = values.iter().sum::<f64>() / n as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for (k, v) in values.iter().enumerate() {
        let dk = k as f64 - mean_k;
        num += dk * (v - mean_v);
        den += dk * dk;
    }
    num / (den * dt)
}

/// Velocity that lands on the forecast `d_obs + b_hat * elapsed` at the end
/// of the step, before clipping.
fn forecast_velocity(p: f64, d_obs: f64, b_hat: f64, steps_after: usize, dt: f64) -> f64 {
    (d_obs + b_hat * steps_after as f64 * dt - p) / dt
}

/// Plays one slot of `steps` steps against the forecast
/// `D(s) = d_observed + b_hat (s - t)`, starting from capacity `p`.
pub fn cf_resolve_step(
    p: f64,
    d_observed: f64,
    b_hat: f64,
    params: &ModelParams,
    dt: f64,
    steps: usize,
) -> ControlTrajectory {
    let forecast = SamplePath {
        path_id: 0,
        dt,
        values: (0..=steps)
            .map(|k| d_observed + b_hat * k as f64 * dt)
            .collect(),
    };
    drive(&forecast, p, params.theta_l, params.theta_u, |k, p, _| {
        forecast_velocity(p, d_observed, b_hat, k + 1, dt)
    })
}

/// Runs the re-solve controller over a whole path. The first slot has no
/// history and uses the pattern's initial slope.
pub fn simulate_cf(
    path: &SamplePath,
    pattern: &DemandPattern,
    cfg: &SimConfig,
    params: &ModelParams,
    p0: f64,
) -> ControlTrajectory {
    let s = cfg.steps_per_slot;
    let dt = path.dt;
    let initial_slope = pattern.drifts()[pattern.segment_at(0.0)];
    let (mut d_obs, mut b_hat, mut slot_start) = (0.0, 0.0, 0);
    drive(path, p0, params.theta_l, params.theta_u, |k, p, d| {
        if k % s == 0 {
            d_obs = d;
            b_hat = if k == 0 {
                initial_slope
            } else {
                least_squares_slope(&path.values[k - s..=k], dt)
            };
            slot_start = k;
        }
        forecast_velocity(p, d_obs, b_hat, k - slot_start + 1, dt)
    })
}
