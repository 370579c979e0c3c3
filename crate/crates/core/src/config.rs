// SPDX-License-Identifier: Apache-2.0

//! `key = value` run configuration.
//!
//! One setting per line; `#` starts a comment. Every key has a default, so
//! an empty file is the base single-resource setup. Per-resource keys of the
//! contract model carry a `_1 .. _P` suffix.

use std::collections::BTreeMap;
use std::path::Path;

use crate::contract::MultiParams;
use crate::demand::SimConfig;
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Documented keys with their defaults, in the order `--help` lists them.
pub const KEYS: [(&str, &str); 18] = [
    ("b", "demand drift per hour, default 0 (simulations use the pattern's slopes)"),
    ("sigma", "demand volatility per sqrt(hour), default 0.4"),
    ("alpha", "discount rate per hour, default 0.02"),
    ("theta_l", "lower velocity bound, default -10"),
    ("theta_u", "upper velocity bound, default 10"),
    ("R_p", "primary reward per unit, default 22.5"),
    ("C_p", "primary cost per unit, default 20"),
    ("R_s", "secondary reward per unit, default 1"),
    ("C_s", "secondary cost per unit, default 0.5"),
    ("I_p", "cost per unit of capacity increase, default 0.5"),
    ("D_p", "cost per unit of capacity decrease, default 0.5"),
    ("x0", "initial X(0) = P(0) - D(0), default 0"),
    ("D0", "initial demand for the contract net benefit, default 4.5"),
    ("dt", "simulation step in seconds, default 2"),
    ("gamma", "slot length in seconds, default 300"),
    ("horizon", "simulated horizon in hours, default 24"),
    ("paths", "number of sample paths, default 10000"),
    ("seed", "base RNG seed, default 0"),
];

/// Per-resource keys, written with a `_1 .. _P` suffix.
pub const RESOURCE_KEYS: [&str; 6] = ["R_p", "C_p", "I_p", "D_p", "theta_l", "theta_u"];

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub params: ModelParams,
    pub x0: f64,
    pub d0: f64,
    pub dt_seconds: f64,
    pub gamma_seconds: f64,
    pub horizon_hours: f64,
    pub paths: usize,
    pub seed: u64,
    /// `resources[i][key]` for the suffixed keys.
    resources: BTreeMap<usize, BTreeMap<String, f64>>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            params: ModelParams {
                b: 0.0,
                sigma: 0.4,
                alpha: 0.02,
                theta_l: -10.0,
                theta_u: 10.0,
                r_p: 22.5,
                c_p: 20.0,
                r_s: 1.0,
                c_s: 0.5,
                i_p: 0.5,
                d_p: 0.5,
            },
            x0: 0.0,
            d0: 4.5,
            dt_seconds: 2.0,
            gamma_seconds: 300.0,
            horizon_hours: 24.0,
            paths: 10_000,
            seed: 0,
            resources: BTreeMap::new(),
        }
    }
}

fn parse_number(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::Malformed(format!("{key}: {value:?} is not a number")))
}

fn parse_count(key: &str, value: &str) -> Result<u64> {
    value
        .parse::<u64>()
        .map_err(|_| Error::Malformed(format!("{key}: {value:?} is not a nonnegative integer")))
}

/// Splits `C_p_2` into `("C_p", 2)`.
fn resource_key(key: &str) -> Option<(&'static str, usize)> {
    let (base, idx) = key.rsplit_once('_')?;
    let idx: usize = idx.parse().ok()?;
    let base = RESOURCE_KEYS.into_iter().find(|k| *k == base)?;
    (idx >= 1).then_some((base, idx))
}

impl Config {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        if let Some((base, idx)) = resource_key(key) {
            let v = parse_number(key, value)?;
            self.resources.entry(idx).or_default().insert(base.to_string(), v);
            return Ok(());
        }
        let p = &mut self.params;
        match key {
            "b" => p.b = parse_number(key, value)?,
            "sigma" => p.sigma = parse_number(key, value)?,
            "alpha" => p.alpha = parse_number(key, value)?,
            "theta_l" => p.theta_l = parse_number(key, value)?,
            "theta_u" => p.theta_u = parse_number(key, value)?,
            "R_p" => p.r_p = parse_number(key, value)?,
            "C_p" => p.c_p = parse_number(key, value)?,
            "R_s" => p.r_s = parse_number(key, value)?,
            "C_s" => p.c_s = parse_number(key, value)?,
            "I_p" => p.i_p = parse_number(key, value)?,
            "D_p" => p.d_p = parse_number(key, value)?,
            "x0" => self.x0 = parse_number(key, value)?,
            "D0" => self.d0 = parse_number(key, value)?,
            "dt" => self.dt_seconds = parse_number(key, value)?,
            "gamma" => self.gamma_seconds = parse_number(key, value)?,
            "horizon" => self.horizon_hours = parse_number(key, value)?,
            "paths" => self.paths = parse_count(key, value)? as usize,
            "seed" => self.seed = parse_count(key, value)?,
            _ => return Err(Error::InvalidParams(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Reads `key = value` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Malformed(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Config::parse(&std::fs::read_to_string(path)?)
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        SimConfig::new(
            self.dt_seconds,
            self.gamma_seconds,
            self.horizon_hours,
            self.paths,
            self.seed,
            self.params.sigma,
        )
    }

    /// The multi-resource block; absent when no suffixed key was given.
    pub fn multi_params(&self) -> Result<Option<MultiParams>> {
        let Some(&count) = self.resources.keys().next_back() else {
            return Ok(None);
        };
        let mut lists: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for i in 1..=count {
            let entry = self.resources.get(&i);
            for key in RESOURCE_KEYS {
                let v = entry.and_then(|e| e.get(key)).ok_or_else(|| {
                    Error::InvalidParams(format!("missing config key {key}_{i}"))
                })?;
                lists.entry(key).or_default().push(*v);
            }
        }
        let mut take = |k: &str| lists.remove(k).unwrap_or_default();
        let mp = MultiParams {
            r_p: take("R_p"),
            c_p: take("C_p"),
            i_p: take("I_p"),
            d_p: take("D_p"),
            theta_l: take("theta_l"),
            theta_u: take("theta_u"),
            b: self.params.b,
            sigma: self.params.sigma,
            alpha: self.params.alpha,
            r_s: self.params.r_s,
            c_s: self.params.c_s,
            d0: self.d0,
        };
        mp.validate()?;
        Ok(Some(mp))
    }
}
