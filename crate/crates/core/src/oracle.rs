// SPDX-License-Identifier: Apache-2.0

//! Independent checks on the analytic solver.
//!
//! [`hjb_policy_iteration`] solves the discretized Bellman equation on a
//! truncated grid with no knowledge of the threshold equations; its policy
//! switches give an estimate of `(L, U)`. [`policy_grid_search`] ranks fixed
//! bands by simulated discounted cost under common random numbers.
//!
//! Controls are restricted to `{theta_l, 0, theta_u}`. The Bellman operator
//! is piecewise linear in the control, so its infimum over the interval is
//! attained there; the oracle therefore does not test bang-bang optimality
//! itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::demand::{generate_path, DemandPattern, SimConfig};
use crate::error::{Error, Result};
use crate::evaluate::{cost_objective_with, mean_and_half_width, DiscountTable};
use crate::model::{characteristic_roots, Model, ModelParams};
use crate::policies::OptimalController;
use crate::threshold_solver::{classify_case, CaseTag, ThresholdPolicy};

pub const DEFAULT_GRID_N: usize = 1001;
pub const MAX_POLICY_ITERATIONS: usize = 200;

/// Finite-difference solution on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HjbSolution {
    pub grid: Vec<f64>,
    pub value: Vec<f64>,
    /// Control chosen at each node, one of `theta_l`, `0`, `theta_u`.
    pub policy: Vec<f64>,
    pub iterations: usize,
}

impl HjbSolution {
    pub fn step(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    /// Switching points of the policy grid: `L` is the midpoint between the
    /// last node of the leftmost `theta_u` run and its neighbour, `U`
    /// likewise from the right for `theta_l`. Missing runs give infinities.
    pub fn switching_points(&self, theta_l: f64, theta_u: f64) -> (f64, f64) {
        let n = self.grid.len();
        let lower = match self.policy.iter().position(|&c| c != theta_u) {
            Some(0) => f64::NEG_INFINITY,
            Some(i) => 0.5 * (self.grid[i - 1] + self.grid[i]),
            None => f64::INFINITY,
        };
        let upper = match self.policy.iter().rposition(|&c| c != theta_l) {
            Some(i) if i == n - 1 => f64::INFINITY,
            Some(i) => 0.5 * (self.grid[i] + self.grid[i + 1]),
            None => f64::NEG_INFINITY,
        };
        (lower, upper)
    }
}

/// Grid covering the finite members of `{L, 0, U}` plus `5 sigma / sqrt(2 alpha)`
/// on each side.
pub fn default_domain(params: &ModelParams, estimate: &ThresholdPolicy) -> (f64, f64) {
    let finite: Vec<f64> = [estimate.lower, 0.0, estimate.upper]
        .into_iter()
        .filter(|v| v.is_finite())
        .collect();
    let pad = 5.0 * params.sigma / (2.0 * params.alpha).sqrt();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo - pad, hi + pad)
}

/// Off-diagonal weights `(a_minus, a_plus)` of the generator
/// `sigma^2/2 V'' + mu V'` at an interior node. The drift is differenced
/// centrally while that keeps both weights nonnegative and upwind otherwise.
fn weights(mu: f64, diff: f64, h: f64) -> (f64, f64) {
    let d = diff / (h * h);
    if mu.abs() * h <= 2.0 * diff {
        (d - mu / (2.0 * h), d + mu / (2.0 * h))
    } else if mu > 0.0 {
        (d, d + mu / h)
    } else {
        (d - mu / h, d)
    }
}

struct Stencil<'a> {
    p: &'a ModelParams,
    grid: &'a [f64],
    h: f64,
    diff: f64,
}

impl Stencil<'_> {
    fn running(&self, i: usize) -> f64 {
        let x = self.grid[i];
        if x > 0.0 {
            self.p.c_plus() * x
        } else {
            -self.p.c_minus() * x
        }
    }

    /// Far-field slope law `V' = g + y V` at an end node under control
    /// `theta`. Beyond every breakpoint the solution is an affine particular
    /// part plus the one exponential that decays outward, which this
    /// relation encodes exactly.
    fn far_field(&self, i: usize, theta: f64) -> (f64, f64) {
        let p = self.p;
        let x = self.grid[i];
        let c = if i == 0 { -p.c_minus() } else { p.c_plus() };
        let slope = c / p.alpha;
        let intercept = (c * (theta - p.b) / p.alpha + p.adjustment_rate(theta)) / p.alpha;
        let (y1, y2) = characteristic_roots(p.b, p.sigma, p.alpha, theta);
        let y = if i == 0 { y1 } else { y2 };
        (slope - y * (slope * x + intercept), y)
    }

    /// Row `(lower, diag, upper, rhs)` of `(alpha - L_theta) V = f_theta`.
    fn row(&self, i: usize, theta: f64) -> (f64, f64, f64, f64) {
        let n = self.grid.len();
        let mu = theta - self.p.b;
        let f = self.running(i) + self.p.adjustment_rate(theta);
        let alpha = self.p.alpha;
        let edge = 2.0 * self.diff / (self.h * self.h);
        // Ghost node from the far-field slope law.
        if i == 0 || i == n - 1 {
            let (g, y) = self.far_field(i, theta);
            let side = if i == 0 { -1.0 } else { 1.0 };
            let diag = alpha + edge - side * 2.0 * self.diff * y / self.h - mu * y;
            let rhs = f + mu * g + side * 2.0 * self.diff * g / self.h;
            return if i == 0 {
                (0.0, diag, -edge, rhs)
            } else {
                (-edge, diag, 0.0, rhs)
            };
        }
        let (am, ap) = weights(mu, self.diff, self.h);
        (-am, alpha + am + ap, -ap, f)
    }

    /// `L_theta V + f_theta` at node `i`.
    fn hamiltonian(&self, v: &[f64], i: usize, theta: f64) -> f64 {
        let (a, d, c, rhs) = self.row(i, theta);
        let left = if i > 0 { v[i - 1] } else { 0.0 };
        let right = if i + 1 < v.len() { v[i + 1] } else { 0.0 };
        // (alpha - L) V = rhs  <=>  L V + f = alpha V - (row . V - rhs).
        self.p.alpha * v[i] - (a * left + d * v[i] + c * right - rhs)
    }
}

/// Tridiagonal solve; the matrices here are strictly diagonally dominant.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / m;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Howard policy iteration for the Bellman equation on `[xmin, xmax]` with
/// `grid_n` nodes. At the ends the slope follows the outer-region law,
/// which tends to the asymptotic values `-C_-/alpha` and `C_+/alpha`. Stops when the policy repeats or the value moves by at
/// most `tol` in sup norm.
pub fn hjb_policy_iteration(
    params: &ModelParams,
    domain: (f64, f64),
    grid_n: usize,
    tol: f64,
) -> Result<HjbSolution> {
    params.validate()?;
    let (xmin, xmax) = domain;
    if grid_n < 3 || !(xmax > xmin) {
        return Err(Error::InvalidParams(format!(
            "HJB grid needs at least 3 nodes on a nonempty domain, got {grid_n} on [{xmin}, {xmax}]"
        )));
    }
    let h = (xmax - xmin) / (grid_n - 1) as f64;
    let grid: Vec<f64> = (0..grid_n).map(|i| xmin + h * i as f64).collect();
    let st = Stencil {
        p: params,
        grid: &grid,
        h,
        diff: 0.5 * params.sigma * params.sigma,
    };
    let controls = [0.0, params.theta_u, params.theta_l];
    let mut policy = vec![0.0; grid_n];
    let mut value: Vec<f64> = Vec::new();
    let (mut lo, mut di, mut up, mut rhs) = (
        vec![0.0; grid_n],
        vec![0.0; grid_n],
        vec![0.0; grid_n],
        vec![0.0; grid_n],
    );
    for iter in 1..=MAX_POLICY_ITERATIONS {
        for i in 0..grid_n {
            (lo[i], di[i], up[i], rhs[i]) = st.row(i, policy[i]);
        }
        let next = thomas(&lo, &di, &up, &rhs);
        let change = if value.is_empty() {
            f64::INFINITY
        } else {
            next.iter()
                .zip(&value)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        value = next;
        let mut changed = false;
        for i in 0..grid_n {
            let current = st.hamiltonian(&value, i, policy[i]);
            let scale = current.abs().max(1.0) * 1e-13;
            let mut best = (policy[i], current);
            for &th in &controls {
                let q = st.hamiltonian(&value, i, th);
                if q < best.1 - scale {
                    best = (th, q);
                }
            }
            if best.0 != policy[i] {
                policy[i] = best.0;
                changed = true;
            }
        }
        if !changed || change <= tol {
            return Ok(HjbSolution {
                grid,
                value,
                policy,
                iterations: iter,
            });
        }
    }
    Err(Error::NoConvergence(MAX_POLICY_ITERATIONS))
}

/// Value of the never-adjust policy, which is optimal when both adjustment
/// costs exceed the asymptotic slopes.
pub fn no_action_value(params: &ModelParams, x: f64) -> f64 {
    let (r1, r2) = characteristic_roots(params.b, params.sigma, params.alpha, 0.0);
    let (a, b, s2) = (params.alpha, params.b, params.sigma * params.sigma);
    let total = params.c_plus() + params.c_minus();
    if x < 0.0 {
        let coef = s2 * total * r2 * r2 / (2.0 * a * a * (r1 - r2));
        coef * (r1 * x).exp() - params.c_minus() * x / a + b * params.c_minus() / (a * a)
    } else {
        let coef = s2 * total * r1 * r1 / (2.0 * a * a * (r1 - r2));
        coef * (r2 * x).exp() + params.c_plus() * x / a - b * params.c_plus() / (a * a)
    }
}

/// A reproducible set of instances covering every case tag, `per_tag[i]`
/// of tag `CaseTag::ALL[i]`.
pub fn instance_suite(seed: u64, per_tag: [usize; 6]) -> Vec<(CaseTag, ModelParams)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (tag, &count) in CaseTag::ALL.iter().zip(&per_tag) {
        let mut found = 0;
        while found < count {
            let p = random_instance(&mut rng, *tag);
            let Ok(model) = Model::new(p) else { continue };
            if classify_case(&model) == *tag {
                out.push((*tag, p));
                found += 1;
            }
        }
    }
    out
}

fn random_instance(rng: &mut ChaCha8Rng, tag: CaseTag) -> ModelParams {
    let sigma = rng.random_range(0.2..2.0);
    let alpha = rng.random_range(0.05..1.0);
    let b = rng.random_range(-1.0..1.0);
    let c_plus = rng.random_range(0.5..5.0);
    let c_minus = rng.random_range(0.5..5.0);
    let theta_l = -rng.random_range(1.0..8.0);
    let theta_u = rng.random_range(1.0..8.0);
    // Adjustment costs as fractions of the asymptotic slopes; the tag decides
    // which side of one each fraction falls.
    let below = |rng: &mut ChaCha8Rng| rng.random_range(0.0..0.95);
    let above = |rng: &mut ChaCha8Rng| rng.random_range(1.0..2.0);
    let (fi, fd) = match tag {
        CaseTag::Case2 => (below(rng), above(rng)),
        CaseTag::Case3 => (above(rng), below(rng)),
        CaseTag::Case4 => (above(rng), above(rng)),
        _ => (below(rng), below(rng)),
    };
    ModelParams {
        b,
        sigma,
        alpha,
        theta_l,
        theta_u,
        r_p: c_plus + 1.0 + c_minus,
        c_p: c_plus,
        r_s: 1.0,
        c_s: 0.0,
        i_p: fi * c_minus / alpha,
        d_p: fd * c_plus / alpha,
    }
}

/// Mean discounted cost objective of fixed bands on common paths.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSearch {
    pub lowers: Vec<f64>,
    pub uppers: Vec<f64>,
    /// `costs[path][cell]`, cells in row-major `(lower, upper)` order.
    costs: Vec<Vec<f64>>,
    /// Cells with `lower <= upper`.
    valid: Vec<bool>,
}

/// One row of the grid-search table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub lower: f64,
    pub upper: f64,
    pub mean_cost: f64,
    /// Paired difference to the best cell and its 95% half-width.
    pub diff_to_best: f64,
    pub diff_half_width: f64,
    pub indistinguishable: bool,
}

impl GridSearch {
    fn cell_count(&self) -> usize {
        self.lowers.len() * self.uppers.len()
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        i * self.uppers.len() + j
    }

    pub fn bands(&self, cell: usize) -> (f64, f64) {
        (self.lowers[cell / self.uppers.len()], self.uppers[cell % self.uppers.len()])
    }

    pub fn mean_cost(&self, cell: usize) -> f64 {
        let v: Vec<f64> = self.costs.iter().map(|c| c[cell]).collect();
        mean_and_half_width(&v).0
    }

    /// Mean and 95% half-width of `cost[a] - cost[b]` over paths.
    pub fn paired_difference(&self, a: usize, b: usize) -> (f64, f64) {
        let v: Vec<f64> = self.costs.iter().map(|c| c[a] - c[b]).collect();
        mean_and_half_width(&v)
    }

    /// Valid cell with the lowest mean cost; ties go to the first.
    pub fn best(&self) -> usize {
        (0..self.cell_count())
            .filter(|&c| self.valid[c])
            .fold(None, |acc: Option<(usize, f64)>, c| {
                let m = self.mean_cost(c);
                match acc {
                    Some((_, bm)) if bm <= m => acc,
                    _ => Some((c, m)),
                }
            })
            .map(|(c, _)| c)
            .expect("grid has a valid cell")
    }

    /// Whether `cell` cannot be told apart from the best cell at 95%.
    pub fn indistinguishable_from_best(&self, cell: usize) -> bool {
        let (d, hw) = self.paired_difference(cell, self.best());
        d.abs() <= hw || d == 0.0
    }

    /// Valid cells whose mean cost is below `cell`'s at 95% confidence.
    pub fn significantly_better_than(&self, cell: usize) -> Vec<usize> {
        (0..self.cell_count())
            .filter(|&c| c != cell && self.valid[c])
            .filter(|&c| {
                let (d, hw) = self.paired_difference(c, cell);
                d + hw < 0.0
            })
            .collect()
    }

    pub fn table(&self) -> Vec<GridCell> {
        let best = self.best();
        (0..self.cell_count())
            .filter(|&c| self.valid[c])
            .map(|c| {
                let (lower, upper) = self.bands(c);
                let (d, hw) = self.paired_difference(c, best);
                GridCell {
                    lower,
                    upper,
                    mean_cost: self.mean_cost(c),
                    diff_to_best: d,
                    diff_half_width: hw,
                    indistinguishable: d.abs() <= hw || d == 0.0,
                }
            })
            .collect()
    }
}

/// Simulates every band `(lowers[i], uppers[j])` with `lowers[i] <= uppers[j]`
/// on the same `cfg.n_paths` paths, starting from `X(0) = x0`, and records the
/// discounted cost objective. The pattern's first segment sets the drift.
pub fn policy_grid_search(
    pattern: &DemandPattern,
    cfg: &SimConfig,
    params: &ModelParams,
    x0: f64,
    lowers: &[f64],
    uppers: &[f64],
) -> Result<GridSearch> {
    if pattern.segment_count() != 1 {
        return Err(Error::InvalidParams("grid search needs a constant-drift pattern".into()));
    }
    if lowers.is_empty() || uppers.is_empty() {
        return Err(Error::InvalidParams("grid search needs nonempty grids".into()));
    }
    let params = ModelParams {
        sigma: cfg.sigma,
        b: pattern.drifts()[0],
        ..*params
    };
    params.validate()?;
    let cells: Vec<(f64, f64)> = lowers
        .iter()
        .flat_map(|&l| uppers.iter().map(move |&u| (l, u)))
        .collect();
    let valid: Vec<bool> = cells.iter().map(|(l, u)| l <= u).collect();
    if !valid.iter().any(|&v| v) {
        return Err(Error::InvalidParams("no grid cell has lower <= upper".into()));
    }
    let controllers: Vec<OptimalController> = cells
        .iter()
        .map(|&(lower, upper)| {
            let band = ThresholdPolicy {
                lower,
                upper,
                case: CaseTag::Case1III,
            };
            OptimalController::with_bands(pattern, &params, vec![band])
        })
        .collect();
    let table = DiscountTable::new(params.alpha, cfg.dt, cfg.steps());
    let costs = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|id| {
            let path = generate_path(pattern, cfg, id);
            let p0 = path.values[0] + x0;
            controllers
                .iter()
                .zip(&valid)
                .map(|(c, &ok)| {
                    if !ok {
                        return Ok(f64::NAN);
                    }
                    cost_objective_with(&table, &path, &c.simulate(&path, p0), &params)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GridSearch {
        lowers: lowers.to_vec(),
        uppers: uppers.to_vec(),
        costs,
        valid,
    })
}

/// `centre + k * spacing` for `k = -half..=half`.
pub fn centred_grid(centre: f64, spacing: f64, half: usize) -> Vec<f64> {
    (-(half as i64)..=half as i64)
        .map(|k| centre + k as f64 * spacing)
        .collect()
}
