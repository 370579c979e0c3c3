// SPDX-License-Identifier: Apache-2.0

//! Clairvoyant slot-level linear program.
//!
//! Given the slot averages `g_1..g_n` of a realized path, choose slot
//! capacities `P_1..P_n` minimizing
//! `sum C_+ (P_i - g_i)^+ + C_- (g_i - P_i)^+ + I_p (dP_i)^+ + D_p (dP_i)^-`
//! with `theta_l gamma <= dP_i <= theta_u gamma`.
//!
//! Two exact solvers are provided. [`solve_offline_simplex`] is a dense
//! tableau simplex on the textbook reformulation; it is cubic-ish in the
//! number of slots and serves as the reference. [`solve_offline_dp`] runs
//! dynamic programming over convex piecewise-linear cost-to-come functions
//! and is what the simulator uses.

use crate::demand::{SamplePath, SimConfig};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::policies::{drive, ControlTrajectory};

const PIVOT_EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    /// `P_1 .. P_n`.
    pub capacity: Vec<f64>,
    pub objective: f64,
}

/// Trapezoid averages of the path over consecutive slots of
/// `steps_per_slot` steps.
pub fn slot_averages(path: &SamplePath, steps_per_slot: usize) -> Vec<f64> {
    path.values
        .windows(steps_per_slot + 1)
        .step_by(steps_per_slot)
        .map(|w| {
            let inner: f64 = w[1..steps_per_slot].iter().sum();
            (0.5 * (w[0] + w[steps_per_slot]) + inner) / steps_per_slot as f64
        })
        .collect()
}

/// LP objective of a given capacity sequence.
pub fn lp_objective(g: &[f64], p0: f64, capacity: &[f64], params: &ModelParams) -> f64 {
    let mut prev = p0;
    let mut total = 0.0;
    for (&gi, &pi) in g.iter().zip(capacity) {
        let dp = pi - prev;
        total += if pi >= gi {
            params.c_plus() * (pi - gi)
        } else {
            params.c_minus() * (gi - pi)
        };
        total += if dp >= 0.0 {
            params.i_p * dp
        } else {
            -params.d_p * dp
        };
        prev = pi;
    }
    total
}

/// Dense simplex with Bland's rule on
/// `min c x  s.t.  A x = b, x >= 0`, starting from a feasible basis whose
/// columns form an identity in `A` (and `b >= 0`).
struct Tableau {
    rows: usize,
    cols: usize,
    /// Row-major `rows x (cols + 1)`; the last column is the right-hand side.
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * (self.cols + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn minimize(&mut self, cost: &[f64]) -> Result<()> {
        let w = self.cols + 1;
        // Reduced costs c_j - c_B B^{-1} A_j, kept as an extra row.
        let mut z = cost.to_vec();
        z.push(0.0);
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..w {
                    z[j] -= cb * self.t[i * w + j];
                }
            }
        }
        let scale = cost.iter().fold(1.0f64, |m, c| m.max(c.abs()));
        for _ in 0..MAX_PIVOTS {
            let Some(enter) = (0..self.cols).find(|&j| z[j] < -PIVOT_EPS * scale) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, enter);
                if a > PIVOT_EPS {
                    let ratio = self.rhs(i) / a;
                    let better = match leave {
                        None => true,
                        Some((l, r)) => ratio < r || (ratio == r && self.basis[i] < self.basis[l]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let (row, _) = leave.ok_or_else(|| Error::InvalidParams("LP is unbounded".into()))?;
            self.pivot(row, enter, &mut z);
        }
        Err(Error::IterationCap(MAX_PIVOTS))
    }

    fn pivot(&mut self, row: usize, col: usize, z: &mut [f64]) {
        let w = self.cols + 1;
        let inv = 1.0 / self.t[row * w + col];
        for j in 0..w {
            self.t[row * w + j] *= inv;
        }
        self.t[row * w + col] = 1.0;
        let pivot_row: Vec<f64> = self.t[row * w..(row + 1) * w].to_vec();
        for i in 0..self.rows {
            if i == row {
                continue;
            }
            let f = self.t[i * w + col];
            if f != 0.0 {
                for j in 0..w {
                    self.t[i * w + j] -= f * pivot_row[j];
                }
                self.t[i * w + col] = 0.0;
            }
        }
        let f = z[col];
        if f != 0.0 {
            for j in 0..w {
                z[j] -= f * pivot_row[j];
            }
            z[col] = 0.0;
        }
        self.basis[row] = col;
    }

    fn solution(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.cols];
        for (i, &b) in self.basis.iter().enumerate() {
            x[b] = self.rhs(i);
        }
        x
    }
}

/// Exact LP optimum by simplex. Variables per slot are the increase `a_i`,
/// decrease `d_i`, overage `u_i` and shortage `v_i`, all nonnegative, with
/// `u_i - v_i - sum_{j<=i} (a_j - d_j) = P_0 - g_i` and the velocity caps as
/// slack rows.
pub fn solve_offline_simplex(g: &[f64], p0: f64, gamma: f64, params: &ModelParams) -> Result<LpSolution> {
    let n = g.len();
    let cols = 6 * n;
    let rows = 3 * n;
    let (ia, id, iu, iv, isa, isd) = (0, n, 2 * n, 3 * n, 4 * n, 5 * n);
    let w = cols + 1;
    let mut t = vec![0.0; rows * w];
    let mut basis = vec![0; rows];
    for i in 0..n {
        let rhs = p0 - g[i];
        let sign = if rhs >= 0.0 { 1.0 } else { -1.0 };
        let r = i * w;
        t[r + iu + i] = sign;
        t[r + iv + i] = -sign;
        for j in 0..=i {
            t[r + ia + j] = -sign;
            t[r + id + j] = sign;
        }
        t[r + cols] = sign * rhs;
        basis[i] = if sign > 0.0 { iu + i } else { iv + i };

        let r = (n + i) * w;
        t[r + ia + i] = 1.0;
        t[r + isa + i] = 1.0;
        t[r + cols] = params.theta_u * gamma;
        basis[n + i] = isa + i;

        let r = (2 * n + i) * w;
        t[r + id + i] = 1.0;
        t[r + isd + i] = 1.0;
        t[r + cols] = -params.theta_l * gamma;
        basis[2 * n + i] = isd + i;
    }
    let mut cost = vec![0.0; cols];
    for i in 0..n {
        cost[ia + i] = params.i_p;
        cost[id + i] = params.d_p;
        cost[iu + i] = params.c_plus();
        cost[iv + i] = params.c_minus();
    }
    let mut tab = Tableau {
        rows,
        cols,
        t,
        basis,
    };
    tab.minimize(&cost)?;
    let x = tab.solution();
    let objective = x.iter().zip(&cost).map(|(a, b)| a * b).sum();
    let mut p = p0;
    let capacity = (0..n)
        .map(|i| {
            p += x[ia + i] - x[id + i];
            p
        })
        .collect();
    Ok(LpSolution {
        capacity,
        objective,
    })
}

/// Convex piecewise-linear function on `[x0, x0 + sum lengths]`, stored as
/// its left value and `(length, slope)` pieces in increasing slope order.
#[derive(Debug, Clone)]
struct ConvexPwl {
    x0: f64,
    v0: f64,
    pieces: Vec<(f64, f64)>,
}

impl ConvexPwl {
    fn right(&self) -> f64 {
        self.x0 + self.pieces.iter().map(|p| p.0).sum::<f64>()
    }

    /// Leftmost point where the slope reaches `s`.
    fn crossing(&self, s: f64) -> f64 {
        self.x0 + self.pieces.iter().take_while(|p| p.1 < s).map(|p| p.0).sum::<f64>()
    }

    fn push(pieces: &mut Vec<(f64, f64)>, len: f64, slope: f64) {
        if len <= 0.0 {
            return;
        }
        match pieces.last_mut() {
            Some(last) if last.1 == slope => last.0 += len,
            _ => pieces.push((len, slope)),
        }
    }

    /// Infimal convolution with the adjustment cost of one slot.
    fn convolve_move(&self, down_len: f64, down_slope: f64, up_len: f64, up_slope: f64) -> Self {
        let extra = [(down_len, down_slope), (up_len, up_slope)];
        let mut pieces = Vec::with_capacity(self.pieces.len() + 2);
        let (mut i, mut j) = (0, 0);
        while i < self.pieces.len() || j < extra.len() {
            let take_own = j == extra.len() || (i < self.pieces.len() && self.pieces[i].1 <= extra[j].1);
            let (len, slope) = if take_own {
                i += 1;
                self.pieces[i - 1]
            } else {
                j += 1;
                extra[j - 1]
            };
            Self::push(&mut pieces, len, slope);
        }
        ConvexPwl {
            x0: self.x0 - down_len,
            v0: self.v0 + down_len * -down_slope,
            pieces,
        }
    }

    /// Adds `c_plus (x - g)^+ + c_minus (g - x)^+`.
    fn add_kink(&self, g: f64, c_plus: f64, c_minus: f64) -> Self {
        let mut pieces = Vec::with_capacity(self.pieces.len() + 1);
        let mut x = self.x0;
        for &(len, slope) in &self.pieces {
            let end = x + len;
            if end <= g {
                Self::push(&mut pieces, len, slope - c_minus);
            } else if x >= g {
                Self::push(&mut pieces, len, slope + c_plus);
            } else {
                Self::push(&mut pieces, g - x, slope - c_minus);
                Self::push(&mut pieces, end - g, slope + c_plus);
            }
            x = end;
        }
        let v0 = self.v0
            + if self.x0 >= g {
                c_plus * (self.x0 - g)
            } else {
                c_minus * (g - self.x0)
            };
        ConvexPwl {
            x0: self.x0,
            v0,
            pieces,
        }
    }

    fn minimum(&self) -> (f64, f64) {
        let mut x = self.x0;
        let mut v = self.v0;
        for &(len, slope) in &self.pieces {
            if slope >= 0.0 {
                break;
            }
            x += len;
            v += len * slope;
        }
        (x, v)
    }
}

/// Exact LP optimum by forward dynamic programming over convex
/// piecewise-linear cost-to-come functions, then backtracking.
///
/// The cost-to-come after slot `i` is the previous one convolved with the
/// adjustment cost (a merge of slope-sorted pieces) plus the slot's kink
/// at `g_i`. Backtracking only needs, per slot, where the previous function's
/// slope reaches `I_p` and `-D_p`: the best predecessor of `P_i` is `P_i`
/// clamped between those two points and into the reachable window.
pub fn solve_offline_dp(g: &[f64], p0: f64, gamma: f64, params: &ModelParams) -> LpSolution {
    let n = g.len();
    let down = -params.theta_l * gamma;
    let up = params.theta_u * gamma;
    let mut f = ConvexPwl {
        x0: p0,
        v0: 0.0,
        pieces: Vec::new(),
    };
    // Per slot: (domain lo, domain hi, slope reaches -D_p, slope reaches I_p)
    // of the cost-to-come before the slot.
    let mut marks = Vec::with_capacity(n);
    for &gi in g {
        marks.push((f.x0, f.right(), f.crossing(-params.d_p), f.crossing(params.i_p)));
        f = f
            .convolve_move(down, -params.d_p, up, params.i_p)
            .add_kink(gi, params.c_plus(), params.c_minus());
    }
    let (mut p, objective) = f.minimum();
    let mut capacity = vec![0.0; n];
    for i in (0..n).rev() {
        capacity[i] = p;
        let (lo, hi, at_down, at_up) = marks[i];
        // `max`/`min` rather than `clamp`: roundoff may cross the bounds.
        let best = p.min(at_up).max(at_down);
        p = best.min((p + down).min(hi)).max((p - up).max(lo));
    }
    LpSolution {
        capacity,
        objective,
    }
}

/// Solves the slot LP on the path's own slot averages and follows it online:
/// during slot `i` capacity moves toward `P_i` as fast as allowed, then holds.
pub fn offline_lp_solve(path: &SamplePath, cfg: &SimConfig, params: &ModelParams, p0: f64) -> Result<ControlTrajectory> {
    if path.steps() != cfg.steps() {
        return Err(Error::LengthMismatch(format!(
            "path has {} steps, configuration {}",
            path.steps(),
            cfg.steps()
        )));
    }
    let g = slot_averages(path, cfg.steps_per_slot);
    let plan = solve_offline_dp(&g, p0, cfg.gamma(), params);
    let dt = path.dt;
    Ok(drive(path, p0, params.theta_l, params.theta_u, |k, p, _| {
        (plan.capacity[k / cfg.steps_per_slot] - p) / dt
    }))
}
