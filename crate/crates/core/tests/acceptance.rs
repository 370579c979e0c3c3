// SPDX-License-Identifier: Apache-2.0

//! Acceptance criteria, one test each. Every test prints a single
//! `PASS`/`FAIL` line with its measured quantities before asserting.

use std::process::Command;

use hedgeband::contract::{
    aggregate_params, contract_net_benefit, expected_discounted_demand, simplex_lattice,
    solve_thresholds_for_contract, ContractVector, MultiParams,
};
use hedgeband::demand::{generate_path, DemandPattern, SimConfig};
use hedgeband::evaluate::{
    discounted_cost_objective, discounted_demand, discounted_net_benefit, monte_carlo_compare,
};
use hedgeband::oracle::{
    centred_grid, default_domain, hjb_policy_iteration, instance_suite, no_action_value,
    policy_grid_search, DEFAULT_GRID_N,
};
use hedgeband::policies::{drive, lp_objective, solve_offline_dp, solve_offline_simplex, PolicyKind};
use hedgeband::threshold_solver::{
    construct_value_function, solve, solve_zero_adjustment_delta, CaseTag,
};
use hedgeband::{Model, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SUITE_SEED: u64 = 20;
const SUITE_PER_TAG: [usize; 6] = [4, 4, 3, 3, 3, 3];

fn report(id: u32, ok: bool, detail: &str) {
    println!("{} criterion {id}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} failed: {detail}");
}

/// Sets `C_+` and `C_-` through the reward fields with `N_s = 1`.
fn with_costs(p: ModelParams, c_plus: f64, c_minus: f64) -> ModelParams {
    ModelParams {
        c_p: c_plus,
        r_p: c_plus + 1.0 + c_minus,
        r_s: 1.0,
        c_s: 0.0,
        ..p
    }
}

/// `b = 0, sigma^2 = 2, alpha = 1, theta = +-1`.
fn golden(c_plus: f64, c_minus: f64, i_p: f64, d_p: f64) -> ModelParams {
    let p = ModelParams {
        b: 0.0,
        sigma: 2f64.sqrt(),
        alpha: 1.0,
        theta_l: -1.0,
        theta_u: 1.0,
        r_p: 0.0,
        c_p: 0.0,
        r_s: 0.0,
        c_s: 0.0,
        i_p,
        d_p,
    };
    with_costs(p, c_plus, c_minus)
}

fn base() -> ModelParams {
    ModelParams {
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
    }
}

#[test]
fn criterion_1_closed_form_regression() {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let expected = 0.5f64.ln() / phi;
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for (cp, cm, want) in [(1.0, 1.0, 0.0), (3.0, 1.0, expected), (1.0, 3.0, -expected)] {
        let model = Model::new(golden(cp, cm, 0.0, 0.0)).unwrap();
        let delta = solve_zero_adjustment_delta(&model);
        let band = solve(&model).unwrap().policy;
        for v in [delta, band.lower, band.upper] {
            worst = worst.max((v - want).abs());
        }
        detail.push(format!("delta({cp},{cm})={delta:.7}"));
    }
    let case2 = solve(&Model::new(golden(1.0, 10.0, 0.0, 2.0)).unwrap()).unwrap().policy;
    let case3 = solve(&Model::new(golden(10.0, 1.0, 2.0, 0.0)).unwrap()).unwrap().policy;
    let one_sided = (case2.case == CaseTag::Case2 && case3.case == CaseTag::Case3)
        && (case2.lower - 0.8872).abs() <= 1e-4
        && (case3.upper + 0.8872).abs() <= 1e-4;
    detail.push(format!("Case2 L={:.6} Case3 U={:.6}", case2.lower, case3.upper));
    report(
        1,
        worst <= 1e-6 && one_sided,
        &format!("{}; max delta error {worst:e}", detail.join(", ")),
    );
}

#[test]
fn criterion_2_smooth_fit_and_hjb_suite() {
    let suite = instance_suite(SUITE_SEED, SUITE_PER_TAG);
    let mut failures = Vec::new();
    let mut worst_hjb = 0.0f64;
    for (i, (tag, p)) in suite.iter().enumerate() {
        let model = Model::new(*p).unwrap();
        let pol = solve(&model).unwrap().policy;
        let y = construct_value_function(&model, &pol).unwrap();
        let checks = y.check(&model, &pol, 1000);
        worst_hjb = worst_hjb.max(checks.max_hjb_residual);
        let f = checks.failures(1e-8);
        if pol.case != *tag || !f.is_empty() {
            failures.push(format!("#{i} {tag}: {}", f.join(", ")));
        }
    }
    report(
        2,
        failures.is_empty() && suite.len() == 20,
        &format!(
            "{} instances, max scaled HJB residual {worst_hjb:e}, failures [{}]",
            suite.len(),
            failures.join("; ")
        ),
    );
}

#[test]
fn criterion_3_oracle_agreement() {
    let suite = instance_suite(SUITE_SEED, SUITE_PER_TAG);
    let mut failures = Vec::new();
    let mut worst_steps = 0.0f64;
    let mut worst_case4 = 0.0f64;
    for (i, (tag, p)) in suite.iter().enumerate() {
        let pol = solve(&Model::new(*p).unwrap()).unwrap().policy;
        let sol = hjb_policy_iteration(p, default_domain(p, &pol), DEFAULT_GRID_N, 0.0).unwrap();
        let h = sol.step();
        let (l, u) = sol.switching_points(p.theta_l, p.theta_u);
        for (a, o) in [(pol.lower, l), (pol.upper, u)] {
            if a.is_infinite() || o.is_infinite() {
                if a != o {
                    failures.push(format!("#{i} {tag}: analytic {a} vs grid {o}"));
                }
                continue;
            }
            let steps = (a - o).abs() / h;
            worst_steps = worst_steps.max(steps);
            if steps > 2.0 {
                failures.push(format!("#{i} {tag}: analytic {a} vs grid {o} ({steps:.2} steps)"));
            }
        }
        if *tag == CaseTag::Case4 {
            for (&x, &v) in sol.grid.iter().zip(&sol.value) {
                let exact = no_action_value(p, x);
                worst_case4 = worst_case4.max(((v - exact) / exact).abs());
            }
        }
    }
    report(
        3,
        failures.is_empty() && worst_case4 <= 1e-3,
        &format!(
            "max threshold offset {worst_steps:.3} grid steps, Case4 max relative value error {worst_case4:e}, failures [{}]",
            failures.join("; ")
        ),
    );
}

#[test]
fn criterion_4_policy_optimality() {
    let p = base();
    let pol = solve(&Model::new(p).unwrap()).unwrap().policy;
    let cfg = SimConfig::new(2.0, 300.0, 24.0, 1000, 4, p.sigma).unwrap();
    let pattern = DemandPattern::flat(4.5, 24.0).unwrap();
    let spacing = (pol.upper - pol.lower) / 4.0;
    let lowers = centred_grid(pol.lower, spacing, 4);
    let uppers = centred_grid(pol.upper, spacing, 4);
    let gs = policy_grid_search(&pattern, &cfg, &p, 0.0, &lowers, &uppers).unwrap();
    let centre = gs.cell_index(4, 4);
    let best = gs.best();
    let (d, hw) = gs.paired_difference(centre, best);
    let beaten = gs.significantly_better_than(centre);
    let (bl, bu) = gs.bands(best);
    report(
        4,
        gs.indistinguishable_from_best(centre) && beaten.is_empty(),
        &format!(
            "analytic ({:.5}, {:.5}) mean cost {:.6}; grid best ({bl:.5}, {bu:.5}) mean {:.6}; analytic - best = {d:e} ± {hw:e}; {} cells significantly better",
            pol.lower,
            pol.upper,
            gs.mean_cost(centre),
            gs.mean_cost(best),
            beaten.len()
        ),
    );
}

/// Average Spearman rank correlation helper (no ties expected).
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    for (rank, &i) in idx.iter().enumerate() {
        r[i] = rank as f64;
    }
    r
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[test]
fn criterion_5_baseline_dominance() {
    let p = base();
    let pattern = DemandPattern::new(vec![0.0, 12.0, 24.0], vec![2.0, 7.0, 2.0]).unwrap();
    let mut cov = Vec::new();
    let mut lp = Vec::new();
    let mut cf = Vec::new();
    for i in 1..=10 {
        let sigma = i as f64 / 10.0;
        let cfg = SimConfig::new(2.0, 300.0, 24.0, 10_000, 5, sigma).unwrap();
        let cmp = monte_carlo_compare(&pattern, &cfg, &p, 0.0, &PolicyKind::ALL).unwrap();
        cov.push(sigma / pattern.mean_level());
        lp.push(cmp.improvement_over(PolicyKind::OfflineLp).unwrap());
        cf.push(cmp.improvement_over(PolicyKind::Cf).unwrap());
    }
    let (rho_lp, rho_cf) = (spearman(&cov, &lp), spearman(&cov, &cf));
    let nonneg = lp.iter().chain(&cf).all(|&v| v >= 0.0);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    report(
        5,
        nonneg && rho_lp > 0.9 && rho_cf > 0.9,
        &format!(
            "improvement over offline-lp [{}] (rho {rho_lp:.3}); over cf [{}] (rho {rho_cf:.3})",
            fmt(&lp),
            fmt(&cf)
        ),
    );
}

#[test]
fn criterion_6_reduction_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for id in 0..100u64 {
        let p = ModelParams {
            sigma: rng.random_range(0.1..2.0),
            alpha: rng.random_range(0.01..1.0),
            theta_l: -rng.random_range(0.5..10.0),
            theta_u: rng.random_range(0.5..10.0),
            i_p: rng.random_range(0.0..2.0),
            d_p: rng.random_range(0.0..2.0),
            ..with_costs(base(), rng.random_range(0.5..30.0), rng.random_range(0.5..10.0))
        };
        let cfg = SimConfig::new(30.0, 300.0, 2.0, 1, id, p.sigma).unwrap();
        let pattern = DemandPattern::new(vec![0.0, 1.0, 2.0], vec![2.0, 7.0, 3.0]).unwrap();
        let path = generate_path(&pattern, &cfg, id);
        let mut vr = ChaCha8Rng::seed_from_u64(1000 + id);
        let velocities: Vec<f64> = (0..path.steps())
            .map(|_| vr.random_range(p.theta_l..=p.theta_u))
            .collect();
        let traj = drive(&path, path.values[0] + rng.random_range(-1.0..1.0), p.theta_l, p.theta_u, |k, _, _| {
            velocities[k]
        });
        let nb = discounted_net_benefit(&path, &traj, &p).unwrap();
        let cost = discounted_cost_objective(&path, &traj, &p).unwrap();
        let demand = discounted_demand(&path, p.alpha);
        let scale = (p.n_p() * demand).abs().max(nb.abs()).max(cost.abs()).max(1.0);
        worst = worst.max((nb + cost - p.n_p() * demand).abs() / scale);
    }
    report(6, worst <= 1e-8, &format!("100 pairs, max scaled gap {worst:e}"));
}

/// Minimum LP objective over capacity moves restricted to multiples of 0.1.
fn brute_force(g: &[f64], p0: f64, moves: &[f64], p: &ModelParams) -> f64 {
    fn go(g: &[f64], prev: f64, moves: &[f64], p: &ModelParams, plan: &mut Vec<f64>, best: &mut f64, p0: f64) {
        if plan.len() == g.len() {
            *best = best.min(lp_objective(g, p0, plan, p));
            return;
        }
        for &m in moves {
            plan.push(prev + m);
            go(g, prev + m, moves, p, plan, best, p0);
            plan.pop();
        }
    }
    let mut best = f64::INFINITY;
    go(g, p0, moves, p, &mut Vec::new(), &mut best, p0);
    best
}

#[test]
fn criterion_7_offline_lp_exactness() {
    let worked = ModelParams {
        theta_l: -1.0,
        theta_u: 1.0,
        i_p: 0.0,
        d_p: 0.0,
        ..with_costs(base(), 2.0, 1.0)
    };
    let s = solve_offline_simplex(&[0.0, 10.0], 0.0, 1.0, &worked).unwrap();
    let worked_ok = (s.objective - 9.0).abs() <= 1e-12
        && s.capacity[0].abs() <= 1e-12
        && (s.capacity[1] - 1.0).abs() <= 1e-12;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    let mut worst_gap = f64::NEG_INFINITY;
    let mut dual_gap = 0.0f64;
    for _ in 0..50 {
        let slots = rng.random_range(1..=4);
        let g: Vec<f64> = (0..slots).map(|_| (rng.random_range(-20..=20) as f64) / 10.0).collect();
        let p0 = (rng.random_range(-10..=10) as f64) / 10.0;
        let tl = rng.random_range(3..=12);
        let tu = rng.random_range(3..=12);
        let p = ModelParams {
            theta_l: -(tl as f64) / 10.0,
            theta_u: tu as f64 / 10.0,
            i_p: rng.random_range(0.0..2.0),
            d_p: rng.random_range(0.0..2.0),
            ..with_costs(base(), rng.random_range(0.1..5.0), rng.random_range(0.1..5.0))
        };
        let moves: Vec<f64> = (-tl..=tu).map(|k| k as f64 / 10.0).collect();
        let lp = solve_offline_simplex(&g, p0, 1.0, &p).unwrap();
        let dp = solve_offline_dp(&g, p0, 1.0, &p);
        dual_gap = dual_gap.max((lp.objective - dp.objective).abs());
        let brute = brute_force(&g, p0, &moves, &p);
        worst_gap = worst_gap.max(lp.objective - brute);
        if lp.objective > brute + 1e-9 {
            violations += 1;
        }
    }
    report(
        7,
        worked_ok && violations == 0 && dual_gap <= 1e-9,
        &format!(
            "worked instance objective {} plan {:?}; 50 instances, max LP - brute force {worst_gap:e}, simplex/DP gap {dual_gap:e}",
            s.objective, s.capacity
        ),
    );
}

fn two_resource() -> MultiParams {
    MultiParams {
        r_p: vec![2010.0, 1210.0],
        c_p: vec![2000.0, 1200.0],
        i_p: vec![0.001, 0.001],
        d_p: vec![0.001, 0.001],
        theta_l: vec![-1000.0, -1000.0],
        theta_u: vec![1000.0, 1000.0],
        b: 0.0,
        sigma: 1.0,
        alpha: 0.02,
        r_s: 1.0,
        c_s: 0.0,
        d0: 96.9,
    }
}

/// Largest jump of `L`, `U` and `J_w(0)` between neighbouring lattice points
/// on the two-resource simplex with `n` divisions.
fn max_jumps(mp: &MultiParams, n: usize) -> [f64; 3] {
    let values: Vec<[f64; 3]> = simplex_lattice(2, n)
        .iter()
        .map(|w| {
            let pol = solve_thresholds_for_contract(mp, w).unwrap();
            [pol.lower, pol.upper, contract_net_benefit(mp, w, 0.0).unwrap()]
        })
        .collect();
    let mut out = [0.0f64; 3];
    for pair in values.windows(2) {
        for k in 0..3 {
            out[k] = out[k].max((pair[1][k] - pair[0][k]).abs());
        }
    }
    out
}

#[test]
fn criterion_8_contract_model() {
    let mp = two_resource();
    let vertex = ContractVector::new(vec![1.0, 0.0]).unwrap();
    let single = mp.resource(0);
    let single_model = Model::new(single).unwrap();
    let single_pol = solve(&single_model).unwrap().policy;
    let single_y = construct_value_function(&single_model, &single_pol).unwrap();
    let single_j = single.n_p() * expected_discounted_demand(mp.d0, mp.b, mp.alpha) - single_y.value(0.0);
    let embedding = aggregate_params(&mp, &vertex).unwrap() == single
        && solve_thresholds_for_contract(&mp, &vertex).unwrap() == single_pol
        && contract_net_benefit(&mp, &vertex, 0.0).unwrap().to_bits() == single_j.to_bits();

    let mixed = ContractVector::new(vec![0.7, 0.3]).unwrap();
    let agg = aggregate_params(&mp, &mixed).unwrap();
    let tag = solve_thresholds_for_contract(&mp, &mixed).unwrap().case;
    let instance = tag.is_case1() && (agg.c_minus() - 9.0).abs() <= 1e-12;

    let coarse = max_jumps(&mp, 64);
    let fine = max_jumps(&mp, 128);
    let ratios: Vec<f64> = (0..3).map(|k| fine[k] / coarse[k]).collect();
    let halves = ratios.iter().all(|&r| r <= 0.5);
    report(
        8,
        embedding && instance && halves,
        &format!(
            "embedding bit-identical: {embedding}; w=(0.7,0.3): {tag}, C_-(w)={}; max jumps of (L, U, J_w(0)) at step 1/64 {coarse:?}, at 1/128 {fine:?}, ratios {ratios:?} (required <= 0.5)",
            agg.c_minus()
        ),
    );
}

fn compare_output(threads: usize) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_hedgeband"))
        .args([
            "compare",
            "--paths",
            "64",
            "--seed",
            "9",
            "--sweep",
            "sigma:0.2:0.8:3",
            "--threads",
            &threads.to_string(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

#[test]
fn criterion_9_determinism() {
    let reference = compare_output(1);
    let runs: Vec<(usize, bool)> = [1, 2, 4, 7]
        .into_iter()
        .map(|t| (t, compare_output(t) == reference))
        .collect();
    let ok = runs.iter().all(|r| r.1) && reference.len() > 100;
    report(
        9,
        ok,
        &format!("{} bytes; identical per thread count: {runs:?}", reference.len()),
    );
}
