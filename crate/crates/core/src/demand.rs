// SPDX-License-Identifier: Apache-2.0

//! Demand patterns and reproducible Brownian sample paths.
//!
//! A pattern is a piecewise-linear mean demand `f(t)` over one horizon, in
//! hours. Sample paths add `sigma` times a Brownian motion to it. Each path
//! draws from its own ChaCha stream selected by the path index, so a path's
//! values depend only on `(seed, path index)` and never on which thread
//! generated it or in what order.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const SECONDS_PER_HOUR: f64 = 3600.0;

/// Slack when locating a time on the pattern breakpoints, in hours.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DemandPattern {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl DemandPattern {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::LengthMismatch(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::InvalidParams(
                "pattern needs at least two points".into(),
            ));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidParams(format!(
                "pattern must start at t = 0, starts at {}",
                times[0]
            )));
        }
        if let Some(v) = times.iter().chain(&values).find(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite pattern entry {v}")));
        }
        if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParams(format!(
                "pattern times must increase strictly: {} then {}",
                w[0], w[1]
            )));
        }
        Ok(DemandPattern { times, values })
    }

    /// Constant level over `[0, horizon]`.
    pub fn flat(level: f64, horizon: f64) -> Result<Self> {
        DemandPattern::new(vec![0.0, horizon], vec![level, level])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("validated non-empty")
    }

    pub fn segment_count(&self) -> usize {
        self.times.len() - 1
    }

    /// Slope of each segment, per hour.
    pub fn drifts(&self) -> Vec<f64> {
        self.times
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(t, v)| (v[1] - v[0]) / (t[1] - t[0]))
            .collect()
    }

    /// Index of the segment in force at `t`. A breakpoint belongs to the
    /// segment that starts there; times past the horizon map to the last one.
    pub fn segment_at(&self, t: f64) -> usize {
        let n = self.segment_count();
        let k = self.times.partition_point(|&s| s <= t + TIME_EPS);
        k.saturating_sub(1).min(n - 1)
    }

    pub fn level(&self, t: f64) -> f64 {
        let k = self.segment_at(t);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let (v0, v1) = (self.values[k], self.values[k + 1]);
        let w = (t - t0) / (t1 - t0);
        v0 + (v1 - v0) * w
    }

    pub fn min_level(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_level(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Time average of `f` over the horizon.
    pub fn mean_level(&self) -> f64 {
        let area: f64 = self
            .times
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(t, v)| 0.5 * (v[0] + v[1]) * (t[1] - t[0]))
            .sum();
        area / self.horizon()
    }
}

/// Reads a `t,value` CSV with `t` in hours.
pub fn load_pattern<R: Read>(source: R) -> Result<DemandPattern> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "value" {
        return Err(Error::Malformed(format!(
            "pattern header must be \"t,value\", got {:?}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let parse = |j: usize| -> Result<f64> {
            row.get(j)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::Malformed(format!("pattern row {}: {:?}", i + 1, row)))
        };
        times.push(parse(0)?);
        values.push(parse(1)?);
    }
    DemandPattern::new(times, values)
}

/// Discretization of one simulated horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Step length in hours.
    pub dt: f64,
    pub steps_per_slot: usize,
    pub slots: usize,
    pub n_paths: usize,
    pub seed: u64,
    /// Demand volatility, per square-root hour.
    pub sigma: f64,
}

impl SimConfig {
    /// Builds a configuration from a step and slot length in seconds and a
    /// horizon in hours. The slot must be a whole number of steps and the
    /// horizon a whole number of slots.
    pub fn new(
        dt_seconds: f64,
        gamma_seconds: f64,
        horizon_hours: f64,
        n_paths: usize,
        seed: u64,
        sigma: f64,
    ) -> Result<Self> {
        if !(dt_seconds > 0.0) || !dt_seconds.is_finite() {
            return Err(Error::InvalidParams("dt must be positive".into()));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParams("sigma must be nonnegative".into()));
        }
        let steps_per_slot = whole_multiple(gamma_seconds, dt_seconds)
            .ok_or_else(|| Error::InvalidParams("gamma must be a whole multiple of dt".into()))?;
        let slots = whole_multiple(horizon_hours * SECONDS_PER_HOUR, gamma_seconds)
            .ok_or_else(|| {
                Error::InvalidParams("horizon must be a whole multiple of gamma".into())
            })?;
        Ok(SimConfig {
            dt: dt_seconds / SECONDS_PER_HOUR,
            steps_per_slot,
            slots,
            n_paths,
            seed,
            sigma,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps_per_slot * self.slots
    }

    /// Slot length in hours.
    pub fn gamma(&self) -> f64 {
        self.dt * self.steps_per_slot as f64
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps() as f64
    }

    /// Time of step `k`, in hours.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn with_sigma(self, sigma: f64) -> Self {
        SimConfig { sigma, ..self }
    }
}

fn whole_multiple(total: f64, unit: f64) -> Option<usize> {
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    let n = (total / unit).round();
    ((n * unit - total).abs() <= 1e-9 * total && n >= 1.0).then_some(n as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub path_id: u64,
    /// Step length in hours.
    pub dt: f64,
    /// `D_0 .. D_K`.
    pub values: Vec<f64>,
}

impl SamplePath {
    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }
}

/// Independent generator for one path.
pub fn path_rng(seed: u64, path_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_id);
    rng
}

/// One path: `D_0 = f(0)`, then each step adds the exact change of `f` over
/// the step plus `sigma sqrt(dt) Z`.
pub fn generate_path(pattern: &DemandPattern, cfg: &SimConfig, path_id: u64) -> SamplePath {
    let k = cfg.steps();
    let mut rng = path_rng(cfg.seed, path_id);
    let noise = cfg.sigma * cfg.dt.sqrt();
    let mut values = Vec::with_capacity(k + 1);
    let mut prev_level = pattern.level(0.0);
    let mut d = prev_level;
    values.push(d);
    for step in 1..=k {
        let level = pattern.level(cfg.time(step));
        let z: f64 = StandardNormal.sample(&mut rng);
        d += (level - prev_level) + noise * z;
        prev_level = level;
        values.push(d);
    }
    SamplePath {
        path_id,
        dt: cfg.dt,
        values,
    }
}

/// All `cfg.n_paths` paths, in path order.
pub fn generate_paths(pattern: &DemandPattern, cfg: &SimConfig) -> Vec<SamplePath> {
    (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|id| generate_path(pattern, cfg, id))
        .collect()
}

/// Writes paths as `path_id,t,D` rows.
pub fn write_paths<W: Write>(paths: &[SamplePath], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["path_id", "t", "D"])?;
    for p in paths {
        for (k, v) in p.values.iter().enumerate() {
            w.write_record([
                p.path_id.to_string(),
                (k as f64 * p.dt).to_string(),
                v.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
