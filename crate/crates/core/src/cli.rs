// SPDX-License-Identifier: Apache-2.0

//! Command-line front end.
//!
//! Settings come from the defaults, then the `--config` file, then flags.
//! Exit status is 0 on success, 1 on invalid input and 2 on a numerical
//! failure (including a failed `verify` check).

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{Config, KEYS, RESOURCE_KEYS};
use crate::contract::{evaluate_contract, lattice_divisions, optimize_contract, simplex_lattice};
use crate::demand::{generate_path, load_pattern, DemandPattern};
use crate::error::{Error, Result};
use crate::evaluate::{decompose, monte_carlo_compare, simulate_policies, DiscountTable, EvaluationReport};
use crate::model::{Model, ModelParams};
use crate::oracle::{default_domain, hjb_policy_iteration, instance_suite, DEFAULT_GRID_N};
use crate::policies::{PolicyKind, PreparedPolicy};
use crate::threshold_solver::{
    construct_value_function, solve, solve_zero_adjustment_delta, ThresholdPolicy, RESIDUAL_TOL,
};

#[derive(Debug, Parser)]
#[command(name = "hedgeband", version, about = "Optimal bounded-velocity threshold policies under Brownian demand")]
#[command(after_help = config_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the case tag, L, U and the defining-equation residuals.
    Thresholds(Common),
    /// Tabulate x, Y, Y', Y'' of the value function.
    Value {
        #[command(flatten)]
        common: Common,
        /// Number of grid points.
        #[arg(long, default_value_t = 201)]
        points: usize,
    },
    /// Simulate one policy and print per-path outcomes.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimFlags,
        /// optimal, offline-lp or cf.
        #[arg(long, default_value = "optimal")]
        policy: String,
        /// Also write every path's D and P to this file.
        #[arg(long)]
        trajectories: Option<PathBuf>,
    },
    /// Compare all policies on common paths, optionally over a sweep.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimFlags,
        /// VAR:START:END:COUNT, where VAR is a config key or `cov`
        /// (sigma divided by the pattern's mean level).
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Evaluate the contract lattice of a multi-resource config.
    Contract {
        #[command(flatten)]
        common: Common,
        /// Lattice spacing; must be 1/n with n >= 4.
        #[arg(long, default_value_t = 0.05)]
        grid_step: f64,
        /// Initial X(0) at which J_w is evaluated.
        #[arg(long)]
        x0: Option<f64>,
    },
    /// Run the invariant and oracle checks; one PASS/FAIL line each.
    Verify(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write output here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct SimFlags {
    /// CSV demand pattern with header `t,value` (hours). Default: 2 at 0 h,
    /// 7 at mid-horizon, 2 at the end.
    #[arg(long)]
    pattern: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    /// Step in seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Slot length in seconds.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    x0: Option<f64>,
}

fn config_help() -> String {
    let mut s = String::from("Config keys (key = value, one per line, # comments):\n");
    for (k, doc) in KEYS {
        s.push_str(&format!("  {k:<8} {doc}\n"));
    }
    s.push_str(&format!(
        "Contract resources: {} with suffix _1 .. _P; shared keys as above.\n",
        RESOURCE_KEYS.join(", ")
    ));
    s
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn load(common: &Common) -> Result<Config> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Error::InvalidParams("--threads must be positive".into()));
        }
        // Only the first call in a process takes effect.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &common.config {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn sink(common: &Common) -> Result<Box<dyn Write>> {
    Ok(match &common.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn apply_sim_flags(cfg: &mut Config, sim: &SimFlags) -> Result<DemandPattern> {
    if let Some(v) = sim.seed {
        cfg.seed = v;
    }
    if let Some(v) = sim.paths {
        cfg.paths = v;
    }
    if let Some(v) = sim.dt {
        cfg.dt_seconds = v;
    }
    if let Some(v) = sim.gamma {
        cfg.gamma_seconds = v;
    }
    if let Some(v) = sim.x0 {
        cfg.x0 = v;
    }
    match &sim.pattern {
        Some(p) => {
            let pattern = load_pattern(File::open(p)?)?;
            cfg.horizon_hours = pattern.horizon();
            Ok(pattern)
        }
        None => {
            let h = cfg.horizon_hours;
            DemandPattern::new(vec![0.0, 0.5 * h, h], vec![2.0, 7.0, 2.0])
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Thresholds(common) => {
            let cfg = load(&common)?;
            thresholds(&cfg, &mut sink(&common)?)
        }
        Command::Value { common, points } => {
            let cfg = load(&common)?;
            value(&cfg, points, &mut sink(&common)?)
        }
        Command::Simulate {
            common,
            sim,
            policy,
            trajectories,
        } => {
            let mut cfg = load(&common)?;
            let pattern = apply_sim_flags(&mut cfg, &sim)?;
            let kind: PolicyKind = policy.parse()?;
            simulate(&cfg, &pattern, kind, trajectories, &mut sink(&common)?)
        }
        Command::Compare { common, sim, sweep } => {
            let mut cfg = load(&common)?;
            let pattern = apply_sim_flags(&mut cfg, &sim)?;
            compare(&cfg, &pattern, sweep.as_deref(), &mut sink(&common)?)
        }
        Command::Contract { common, grid_step, x0 } => {
            let mut cfg = load(&common)?;
            if let Some(v) = x0 {
                cfg.x0 = v;
            }
            contract(&cfg, grid_step, &mut sink(&common)?)
        }
        Command::Verify(common) => {
            let cfg = load(&common)?;
            verify(&cfg, &mut sink(&common)?)
        }
    }
}

fn thresholds(cfg: &Config, out: &mut dyn Write) -> Result<i32> {
    let model = Model::new(cfg.params)?;
    let sol = solve(&model)?;
    let p = sol.policy;
    writeln!(out, "case={}", p.case)?;
    writeln!(out, "L={}", p.lower)?;
    writeln!(out, "U={}", p.upper)?;
    if p.case.is_case1() && cfg.params.i_p == 0.0 && cfg.params.d_p == 0.0 {
        writeln!(out, "delta={}", solve_zero_adjustment_delta(&model))?;
    }
    for (name, r) in &sol.residuals {
        writeln!(out, "residual_{name}={r:e}")?;
    }
    out.flush()?;
    Ok(0)
}

fn value(cfg: &Config, points: usize, out: &mut dyn Write) -> Result<i32> {
    if points < 2 {
        return Err(Error::InvalidParams("--points must be at least 2".into()));
    }
    let model = Model::new(cfg.params)?;
    let policy = solve(&model)?.policy;
    let y = construct_value_function(&model, &policy)?;
    let (lo, hi) = default_domain(&cfg.params, &policy);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "Y", "dY", "d2Y"])?;
    for i in 0..points {
        let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        let [v, d1, d2] = y.derivatives(x);
        w.write_record([x, v, d1, d2].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(0)
}

fn simulate(
    cfg: &Config,
    pattern: &DemandPattern,
    kind: PolicyKind,
    trajectories: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<i32> {
    let sim = cfg.sim_config()?;
    let results = simulate_policies(pattern, &sim, &cfg.params, cfg.x0, &[kind])?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["path_id", "policy", "objective", "net_benefit"])?;
    for r in results.iter().flatten() {
        w.write_record([
            r.path_id.to_string(),
            r.policy.to_string(),
            r.decomposition.cost().to_string(),
            r.decomposition.net_benefit().to_string(),
        ])?;
    }
    w.flush()?;
    if let Some(path) = trajectories {
        let params = ModelParams {
            sigma: sim.sigma,
            ..cfg.params
        };
        let policy = PreparedPolicy::new(kind, pattern, &params)?;
        let mut tw = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        tw.write_record(["path_id", "t", "D", "P"])?;
        for id in 0..sim.n_paths as u64 {
            let path = generate_path(pattern, &sim, id);
            let traj = policy.run(&path, pattern, &sim, &params, path.values[0] + cfg.x0)?;
            for (k, (d, p)) in path.values.iter().zip(&traj.capacity).enumerate() {
                tw.write_record([id.to_string(), sim.time(k).to_string(), d.to_string(), p.to_string()])?;
            }
        }
        tw.flush()?;
    }
    Ok(0)
}

/// `VAR:START:END:COUNT` as evenly spaced values, both ends included.
pub fn parse_sweep(spec: &str) -> Result<(String, Vec<f64>)> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Malformed(format!("sweep {spec:?} is not VAR:START:END:COUNT"));
    if parts.len() != 4 {
        return Err(bad());
    }
    let start: f64 = parts[1].parse().map_err(|_| bad())?;
    let end: f64 = parts[2].parse().map_err(|_| bad())?;
    let count: usize = parts[3].parse().map_err(|_| bad())?;
    if count == 0 {
        return Err(bad());
    }
    let values = if count == 1 {
        vec![start]
    } else {
        let m = (count - 1) as f64;
        (0..count)
            .map(|i| (start * (m - i as f64) + end * i as f64) / m)
            .collect()
    };
    Ok((parts[0].to_string(), values))
}

fn compare(cfg: &Config, pattern: &DemandPattern, sweep: Option<&str>, out: &mut dyn Write) -> Result<i32> {
    let (var, values) = match sweep {
        Some(s) => parse_sweep(s)?,
        None => ("sigma".to_string(), vec![cfg.params.sigma]),
    };
    let mut report = EvaluationReport::default();
    for v in values {
        let mut point = cfg.clone();
        if var == "cov" {
            point.params.sigma = v * pattern.mean_level();
        } else {
            point.set(&var, &v.to_string())?;
        }
        let sim = point.sim_config()?;
        let cmp = monte_carlo_compare(pattern, &sim, &point.params, point.x0, &PolicyKind::ALL)?;
        report.push(&var, v, &cmp);
    }
    crate::evaluate::emit_report(&report, out)?;
    Ok(0)
}

fn contract(cfg: &Config, grid_step: f64, out: &mut dyn Write) -> Result<i32> {
    let mp = cfg
        .multi_params()?
        .ok_or_else(|| Error::InvalidParams("config has no per-resource keys (R_p_1, ...)".into()))?;
    let n = lattice_divisions(grid_step)?;
    let (best, j) = optimize_contract(&mp, cfg.x0, grid_step)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=mp.resources()).map(|i| format!("w_{i}")).collect();
    header.extend(["L", "U", "J_w"].map(String::from));
    w.write_record(&header)?;
    for v in simplex_lattice(mp.resources(), n) {
        let Ok(e) = evaluate_contract(&mp, &v, cfg.x0) else {
            continue;
        };
        let mut row: Vec<String> = v.weights().iter().map(|x| x.to_string()).collect();
        row.extend([e.policy.lower, e.policy.upper, e.net_benefit].map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    eprintln!("best w = {:?}, J_w = {j}", best.weights());
    Ok(0)
}

struct Report<'a> {
    out: &'a mut dyn Write,
    failed: usize,
}

impl Report<'_> {
    fn check(&mut self, name: &str, ok: bool, detail: String) -> Result<()> {
        if !ok {
            self.failed += 1;
        }
        writeln!(self.out, "{} {name}: {detail}", if ok { "PASS" } else { "FAIL" })?;
        Ok(())
    }
}

/// Whether the analytic band and the HJB switching points agree within two
/// grid steps, and a description.
fn oracle_agreement(p: &ModelParams, pol: &ThresholdPolicy) -> Result<(bool, String)> {
    let sol = hjb_policy_iteration(p, default_domain(p, pol), DEFAULT_GRID_N, 0.0)?;
    let (l, u) = sol.switching_points(p.theta_l, p.theta_u);
    let h = sol.step();
    let near = |a: f64, b: f64| (a.is_infinite() && a == b) || (a - b).abs() <= 2.0 * h;
    Ok((
        near(pol.lower, l) && near(pol.upper, u),
        format!("analytic ({}, {}) vs grid ({l}, {u}), step {h:e}", pol.lower, pol.upper),
    ))
}

fn verify(cfg: &Config, out: &mut dyn Write) -> Result<i32> {
    let mut r = Report { out, failed: 0 };
    let p = cfg.params;
    let model = Model::new(p)?;
    let sol = solve(&model)?;
    let pol = sol.policy;
    let worst = sol.residuals.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
    r.check(
        "threshold equations",
        worst <= RESIDUAL_TOL,
        format!("{} L={} U={} max residual {worst:e}", pol.case, pol.lower, pol.upper),
    )?;

    let y = construct_value_function(&model, &pol)?;
    let checks = y.check(&model, &pol, 1000);
    let fails = checks.failures(1e-8);
    let detail = if fails.is_empty() {
        format!(
            "junction gaps {:e}/{:e}/{:e}, max HJB residual {:e}",
            checks.value_gap, checks.slope_gap, checks.smooth_fit_gap, checks.max_hjb_residual
        )
    } else {
        fails.join("; ")
    };
    r.check("value function", fails.is_empty(), detail)?;

    let mirrored = solve(&Model::new(p.mirrored())?)?.policy;
    let scale = pol.lower.abs().max(pol.upper.abs()).max(1.0);
    let sym = |a: f64, b: f64| a == b || (a - b).abs() <= 1e-8 * scale;
    r.check(
        "mirror symmetry",
        sym(mirrored.lower, -pol.upper) && sym(mirrored.upper, -pol.lower),
        format!("mirrored band ({}, {})", mirrored.lower, mirrored.upper),
    )?;

    let (ok, detail) = oracle_agreement(&p, &pol)?;
    r.check("HJB oracle", ok, detail)?;

    if pol.case.is_case1() {
        let free = ModelParams {
            i_p: 0.0,
            d_p: 0.0,
            ..p
        };
        let free_model = Model::new(free)?;
        let delta = solve_zero_adjustment_delta(&free_model);
        let band = solve(&free_model)?.policy;
        let ok = (band.lower - delta).abs() <= 1e-6 && (band.upper - delta).abs() <= 1e-6;
        r.check(
            "zero adjustment cost collapse",
            ok,
            format!("band ({}, {}) vs delta {delta}", band.lower, band.upper),
        )?;
    }

    let suite = instance_suite(cfg.seed, [4, 4, 3, 3, 3, 3]);
    let mut bad = Vec::new();
    for (i, (tag, q)) in suite.iter().enumerate() {
        let m = Model::new(*q)?;
        let qp = solve(&m)?.policy;
        let yq = construct_value_function(&m, &qp)?;
        let f = yq.check(&m, &qp, 1000).failures(1e-8);
        let (ok, _) = oracle_agreement(q, &qp)?;
        if !f.is_empty() || !ok || qp.case != *tag {
            bad.push(format!("#{i} {tag}"));
        }
    }
    r.check(
        "random instance suite",
        bad.is_empty(),
        format!("{} instances, failing: [{}]", suite.len(), bad.join(", ")),
    )?;

    // Reduction identity on a few short paths.
    let sim = crate::demand::SimConfig::new(cfg.dt_seconds, cfg.gamma_seconds, cfg.gamma_seconds / 3600.0, 8, cfg.seed, p.sigma)?;
    let pattern = DemandPattern::flat(4.5, sim.horizon())?;
    let table = DiscountTable::new(p.alpha, sim.dt, sim.steps());
    let policy = PreparedPolicy::new(PolicyKind::Optimal, &pattern, &p)?;
    let mut worst = 0.0f64;
    for id in 0..sim.n_paths as u64 {
        let path = generate_path(&pattern, &sim, id);
        let traj = policy.run(&path, &pattern, &sim, &p, path.values[0] + cfg.x0)?;
        let d = decompose(&table, &path, &traj, &p)?;
        let demand = crate::evaluate::discounted_demand(&path, p.alpha);
        let gap = d.net_benefit() + d.cost() - p.n_p() * demand;
        worst = worst.max(gap.abs() / (p.n_p() * demand.abs()).max(1.0));
    }
    r.check("reduction identity", worst <= 1e-8, format!("max relative gap {worst:e}"))?;

    r.out.flush()?;
    Ok(if r.failed == 0 { 0 } else { 2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_spec() {
        let (var, v) = parse_sweep("sigma:0.1:1.0:10").unwrap();
        assert_eq!(var, "sigma");
        assert_eq!(v.len(), 10);
        assert_eq!(v[0], 0.1);
        assert_eq!(v[9], 1.0);
        assert!((v[2] - 0.3).abs() < 1e-15);
        assert_eq!(parse_sweep("C_p:20:20:1").unwrap().1, vec![20.0]);
        assert!(parse_sweep("sigma:0.1:1.0").is_err());
        assert!(parse_sweep("sigma:0.1:1.0:0").is_err());
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(run(["hedgeband", "frobnicate"]), 1);
        assert_eq!(run(["hedgeband", "thresholds", "--bogus"]), 1);
        assert_eq!(run(["hedgeband", "--help"]), 0);
    }

    #[test]
    fn missing_config_file_is_a_validation_error() {
        assert_eq!(run(["hedgeband", "thresholds", "--config", "/nonexistent/x.cfg"]), 1);
    }
}
