// SPDX-License-Identifier: Apache-2.0

//! Discounted accounting of trajectories and Monte Carlo comparison.
//!
//! Running terms use the midpoint rule: on step `k` the integrand is
//! evaluated at the averaged capacity and demand and discounted at the step
//! midpoint. Adjustment charges are discounted at the start of their step.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::demand::{generate_path, DemandPattern, SamplePath, SimConfig};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::policies::{ControlTrajectory, PolicyKind, PreparedPolicy};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Discount factors at step midpoints and step starts.
#[derive(Debug, Clone)]
pub struct DiscountTable {
    pub dt: f64,
    pub mid: Vec<f64>,
    pub start: Vec<f64>,
}

impl DiscountTable {
    pub fn new(alpha: f64, dt: f64, steps: usize) -> Self {
        DiscountTable {
            dt,
            mid: (0..steps)
                .map(|k| (-alpha * (k as f64 + 0.5) * dt).exp())
                .collect(),
            start: (0..steps).map(|k| (-alpha * k as f64 * dt).exp()).collect(),
        }
    }
}

fn check_lengths(path: &SamplePath, traj: &ControlTrajectory) -> Result<()> {
    if path.values.len() != traj.capacity.len() || path.dt != traj.dt {
        return Err(Error::LengthMismatch(format!(
            "path has {} points at dt {}, trajectory {} at dt {}",
            path.values.len(),
            path.dt,
            traj.capacity.len(),
            traj.dt
        )));
    }
    Ok(())
}

fn adjustment_charge(params: &ModelParams, dp: f64) -> f64 {
    if dp >= 0.0 {
        params.i_p * dp
    } else {
        -params.d_p * dp
    }
}

/// Midpoint (capacity, demand) on step `k`.
fn midpoint(path: &SamplePath, traj: &ControlTrajectory, k: usize) -> (f64, f64) {
    (
        0.5 * (traj.capacity[k] + traj.capacity[k + 1]),
        0.5 * (path.values[k] + path.values[k + 1]),
    )
}

/// Discounted rewards net of costs, including adjustment charges.
pub fn discounted_net_benefit(path: &SamplePath, traj: &ControlTrajectory, params: &ModelParams) -> Result<f64> {
    let table = DiscountTable::new(params.alpha, path.dt, path.steps());
    net_benefit_with(&table, path, traj, params)
}

pub fn net_benefit_with(
    table: &DiscountTable,
    path: &SamplePath,
    traj: &ControlTrajectory,
    params: &ModelParams,
) -> Result<f64> {
    check_lengths(path, traj)?;
    let mut total = 0.0;
    for k in 0..path.steps() {
        let (p, d) = midpoint(path, traj, k);
        let rate = params.r_p * p.min(d) - params.c_p * p + params.n_s() * (d - p).max(0.0);
        total += table.mid[k] * rate * table.dt;
        total -= table.start[k] * adjustment_charge(params, traj.capacity[k + 1] - traj.capacity[k]);
    }
    Ok(total)
}

/// Discounted overage/shortage cost plus adjustment charges.
pub fn discounted_cost_objective(path: &SamplePath, traj: &ControlTrajectory, params: &ModelParams) -> Result<f64> {
    let table = DiscountTable::new(params.alpha, path.dt, path.steps());
    cost_objective_with(&table, path, traj, params)
}

pub fn cost_objective_with(
    table: &DiscountTable,
    path: &SamplePath,
    traj: &ControlTrajectory,
    params: &ModelParams,
) -> Result<f64> {
    check_lengths(path, traj)?;
    let mut total = 0.0;
    for k in 0..path.steps() {
        let (p, d) = midpoint(path, traj, k);
        let x = p - d;
        let rate = if x > 0.0 {
            params.c_plus() * x
        } else {
            -params.c_minus() * x
        };
        total += table.mid[k] * rate * table.dt;
        total += table.start[k] * adjustment_charge(params, traj.capacity[k + 1] - traj.capacity[k]);
    }
    Ok(total)
}

/// Midpoint quadrature of the discounted demand over the path.
pub fn discounted_demand(path: &SamplePath, alpha: f64) -> f64 {
    let table = DiscountTable::new(alpha, path.dt, path.steps());
    path.values
        .windows(2)
        .zip(&table.mid)
        .map(|(w, f)| f * 0.5 * (w[0] + w[1]) * table.dt)
        .sum()
}

/// Discounted totals of each accounting term over one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Decomposition {
    /// `R_p min(P, D)`.
    pub primary_reward: f64,
    /// `C_p P`.
    pub primary_cost: f64,
    /// `(R_s - C_s) (D - P)^+`.
    pub secondary_net: f64,
    /// `C_+ X^+`.
    pub overage: f64,
    /// `C_- X^-`.
    pub shortage: f64,
    pub adjust_up: f64,
    pub adjust_down: f64,
}

impl Decomposition {
    pub fn net_benefit(&self) -> f64 {
        self.primary_reward - self.primary_cost + self.secondary_net - self.adjust_up - self.adjust_down
    }

    pub fn cost(&self) -> f64 {
        self.overage + self.shortage + self.adjust_up + self.adjust_down
    }

    fn fields(&self) -> [f64; 7] {
        [
            self.primary_reward,
            self.primary_cost,
            self.secondary_net,
            self.overage,
            self.shortage,
            self.adjust_up,
            self.adjust_down,
        ]
    }

    fn from_fields(f: [f64; 7]) -> Self {
        Decomposition {
            primary_reward: f[0],
            primary_cost: f[1],
            secondary_net: f[2],
            overage: f[3],
            shortage: f[4],
            adjust_up: f[5],
            adjust_down: f[6],
        }
    }
}

pub fn decompose(
    table: &DiscountTable,
    path: &SamplePath,
    traj: &ControlTrajectory,
    params: &ModelParams,
) -> Result<Decomposition> {
    check_lengths(path, traj)?;
    let mut out = Decomposition::default();
    for k in 0..path.steps() {
        let (p, d) = midpoint(path, traj, k);
        let w = table.mid[k] * table.dt;
        out.primary_reward += w * params.r_p * p.min(d);
        out.primary_cost += w * params.c_p * p;
        out.secondary_net += w * params.n_s() * (d - p).max(0.0);
        let x = p - d;
        if x > 0.0 {
            out.overage += w * params.c_plus() * x;
        } else {
            out.shortage -= w * params.c_minus() * x;
        }
        let dp = traj.capacity[k + 1] - traj.capacity[k];
        if dp >= 0.0 {
            out.adjust_up += table.start[k] * params.i_p * dp;
        } else {
            out.adjust_down -= table.start[k] * params.d_p * dp;
        }
    }
    Ok(out)
}

/// Compensated (Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sample mean and the half-width of its 95% normal confidence interval.
pub fn mean_and_half_width(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mut s = CompensatedSum::default();
    values.iter().for_each(|&v| s.add(v));
    let mean = s.value() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let mut ss = CompensatedSum::default();
    values.iter().for_each(|&v| ss.add((v - mean) * (v - mean)));
    let var = ss.value() / (n - 1.0);
    (mean, Z95 * (var / n).sqrt())
}

/// `(NB_opt - NB_alt) / NB_alt`.
pub fn relative_improvement(nb_opt: f64, nb_alt: f64) -> f64 {
    (nb_opt - nb_alt) / nb_alt
}

/// Per-path outcome of one policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathResult {
    pub path_id: u64,
    pub policy: PolicyKind,
    pub decomposition: Decomposition,
}

/// Runs every policy on every path of `cfg` (common random numbers) and
/// returns results grouped by path, in path order.
pub fn simulate_policies(
    pattern: &DemandPattern,
    cfg: &SimConfig,
    params: &ModelParams,
    x0: f64,
    policies: &[PolicyKind],
) -> Result<Vec<Vec<PathResult>>> {
    let params = ModelParams {
        sigma: cfg.sigma,
        ..*params
    };
    params.validate()?;
    let prepared = policies
        .iter()
        .map(|&k| PreparedPolicy::new(k, pattern, &params))
        .collect::<Result<Vec<_>>>()?;
    let table = DiscountTable::new(params.alpha, cfg.dt, cfg.steps());
    (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|id| {
            let path = generate_path(pattern, cfg, id);
            let p0 = path.values[0] + x0;
            policies
                .iter()
                .zip(&prepared)
                .map(|(&kind, pol)| {
                    let traj = pol.run(&path, pattern, cfg, &params, p0)?;
                    Ok(PathResult {
                        path_id: id,
                        policy: kind,
                        decomposition: decompose(&table, &path, &traj, &params)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySummary {
    pub policy: PolicyKind,
    pub mean_net_benefit: f64,
    pub ci_half_width: f64,
    pub mean_cost: f64,
    /// Path-averaged terms.
    pub decomposition: Decomposition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub n_paths: usize,
    pub summaries: Vec<PolicySummary>,
}

impl Comparison {
    pub fn summary(&self, policy: PolicyKind) -> Option<&PolicySummary> {
        self.summaries.iter().find(|s| s.policy == policy)
    }

    /// Relative improvement of the optimal policy over `policy`, if both ran.
    pub fn improvement_over(&self, policy: PolicyKind) -> Option<f64> {
        let opt = self.summary(PolicyKind::Optimal)?;
        let alt = self.summary(policy)?;
        Some(relative_improvement(opt.mean_net_benefit, alt.mean_net_benefit))
    }
}

/// Monte Carlo comparison under common random numbers. Aggregation runs
/// serially over path-ordered results, so the output does not depend on
/// the number of worker threads.
pub fn monte_carlo_compare(
    pattern: &DemandPattern,
    cfg: &SimConfig,
    params: &ModelParams,
    x0: f64,
    policies: &[PolicyKind],
) -> Result<Comparison> {
    let results = simulate_policies(pattern, cfg, params, x0, policies)?;
    let summaries = policies
        .iter()
        .enumerate()
        .map(|(j, &policy)| {
            let nb: Vec<f64> = results.iter().map(|r| r[j].decomposition.net_benefit()).collect();
            let (mean_net_benefit, ci_half_width) = mean_and_half_width(&nb);
            let cost: Vec<f64> = results.iter().map(|r| r[j].decomposition.cost()).collect();
            let (mean_cost, _) = mean_and_half_width(&cost);
            let mut sums = [CompensatedSum::default(); 7];
            for r in &results {
                for (s, v) in sums.iter_mut().zip(r[j].decomposition.fields()) {
                    s.add(v);
                }
            }
            let n = results.len() as f64;
            PolicySummary {
                policy,
                mean_net_benefit,
                ci_half_width,
                mean_cost,
                decomposition: Decomposition::from_fields(sums.map(|s| s.value() / n)),
            }
        })
        .collect();
    Ok(Comparison {
        n_paths: results.len(),
        summaries,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub sweep_var: String,
    pub value: f64,
    pub policy: String,
    pub mean_nb: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Improvement of the optimal policy over this row's policy; absent when
    /// the optimal policy was not part of the comparison.
    pub rel_improvement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvaluationReport {
    pub rows: Vec<ReportRow>,
}

pub const REPORT_HEADER: [&str; 7] = [
    "sweep_var",
    "value",
    "policy",
    "mean_nb",
    "ci_lo",
    "ci_hi",
    "rel_improvement",
];

impl EvaluationReport {
    pub fn push(&mut self, sweep_var: &str, value: f64, comparison: &Comparison) {
        for s in &comparison.summaries {
            self.rows.push(ReportRow {
                sweep_var: sweep_var.to_string(),
                value,
                policy: s.policy.to_string(),
                mean_nb: s.mean_net_benefit,
                ci_lo: s.mean_net_benefit - s.ci_half_width,
                ci_hi: s.mean_net_benefit + s.ci_half_width,
                rel_improvement: comparison.improvement_over(s.policy),
            });
        }
    }
}

pub fn emit_report<W: Write>(report: &EvaluationReport, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(REPORT_HEADER)?;
    for r in &report.rows {
        w.write_record([
            r.sweep_var.clone(),
            r.value.to_string(),
            r.policy.clone(),
            r.mean_nb.to_string(),
            r.ci_lo.to_string(),
            r.ci_hi.to_string(),
            r.rel_improvement.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_report<R: Read>(source: R) -> Result<EvaluationReport> {
    let mut reader = csv::Reader::from_reader(source);
    if reader.headers()?.iter().ne(REPORT_HEADER) {
        return Err(Error::Malformed("unexpected report header".into()));
    }
    let num = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::Malformed(format!("not a number: {s:?}")))
    };
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        rows.push(ReportRow {
            sweep_var: rec[0].to_string(),
            value: num(&rec[1])?,
            policy: rec[2].to_string(),
            mean_nb: num(&rec[3])?,
            ci_lo: num(&rec[4])?,
            ci_hi: num(&rec[5])?,
            rel_improvement: if rec[6].is_empty() {
                None
            } else {
                Some(num(&rec[6])?)
            },
        });
    }
    Ok(EvaluationReport { rows })
}
