// SPDX-License-Identifier: Apache-2.0

//! Case classification and the threshold equations for `[L, U]`.
//!
//! The adjustment costs relative to the running costs decide which side of
//! the band exists at all (cases 1 to 4). Within case 1 the band can sit
//! right of zero, left of zero, or straddle it; each layout has its own pair
//! of smooth-fit equations, reduced here to a one-dimensional root.

mod value_function;

pub use value_function::{
    construct_value_function, hjb_residual, hjb_residual_with, ExpTerm, PiecewiseValueFunction,
    Region, ValueFunctionChecks,
};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{Model, ModelParams};
use crate::rootfind::{find_root_expanding, DEFAULT_TOL};

/// Relative tolerance on the defining equations and the sign constraints.
pub const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CaseTag {
    /// Both thresholds finite, `0 <= L <= U`.
    Case1I,
    /// Both thresholds finite, `L <= U <= 0`.
    Case1II,
    /// Both thresholds finite, `L <= 0 <= U`.
    Case1III,
    /// Decreasing is too expensive to ever pay off: `U = +inf`.
    Case2,
    /// Increasing is too expensive to ever pay off: `L = -inf`.
    Case3,
    /// No action at all.
    Case4,
}

impl CaseTag {
    pub const ALL: [CaseTag; 6] = [
        CaseTag::Case1I,
        CaseTag::Case1II,
        CaseTag::Case1III,
        CaseTag::Case2,
        CaseTag::Case3,
        CaseTag::Case4,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseTag::Case1I => "Case1_I",
            CaseTag::Case1II => "Case1_II",
            CaseTag::Case1III => "Case1_III",
            CaseTag::Case2 => "Case2",
            CaseTag::Case3 => "Case3",
            CaseTag::Case4 => "Case4",
        }
    }

    pub fn is_case1(self) -> bool {
        matches!(self, CaseTag::Case1I | CaseTag::Case1II | CaseTag::Case1III)
    }
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaseTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CaseTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Malformed(format!("unknown case tag {s:?}")))
    }
}

/// The no-action band `[lower, upper]` of `X = P - D`. Missing sides are
/// stored as infinities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPolicy {
    pub lower: f64,
    pub upper: f64,
    pub case: CaseTag,
}

impl ThresholdPolicy {
    pub fn no_action() -> Self {
        ThresholdPolicy {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            case: CaseTag::Case4,
        }
    }
}

/// A solved policy with the residuals of the equations that defined it.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSolution {
    pub policy: ThresholdPolicy,
    pub residuals: Vec<(&'static str, f64)>,
}

impl ThresholdSolution {
    fn closed_form(policy: ThresholdPolicy) -> Self {
        ThresholdSolution {
            policy,
            residuals: Vec::new(),
        }
    }
}

pub fn classify_case(model: &Model) -> CaseTag {
    let p = &model.params;
    let (cp, cm, al) = (p.c_plus(), p.c_minus(), p.alpha);
    let decrease_cheap = p.d_p < cp / al;
    let increase_cheap = p.i_p < cm / al;
    match (decrease_cheap, increase_cheap) {
        (true, true) => classify_case1(model),
        (false, true) => CaseTag::Case2,
        (true, false) => CaseTag::Case3,
        (false, false) => CaseTag::Case4,
    }
}

fn classify_case1(model: &Model) -> CaseTag {
    let p = &model.params;
    let c = &model.coeffs;
    let rho = model.roots.ratio();
    let adj = p.i_p + p.d_p > 0.0;
    let gap = c.b3 - c.b2;
    let excess = c.b3 - c.b2 - c.b1;

    let right_strict =
        adj && 0.0 < gap && gap < c.b1 && (gap / c.b1).powf(rho) >= (c.j3 - c.j2) / c.j1;
    let right_wide = adj && c.b3 <= c.b2;
    let right_free = !adj && excess <= 0.0;
    if right_strict || right_wide || right_free {
        return CaseTag::Case1I;
    }

    let left_strict =
        adj && excess > 0.0 && ((c.b3 - c.b1) / c.b2).powf(rho) >= (c.j3 - c.j1) / c.j2;
    let left_free = !adj && excess >= 0.0;
    if left_strict || left_free {
        return CaseTag::Case1II;
    }
    CaseTag::Case1III
}

/// Classifies and dispatches to the matching case solver.
pub fn solve(model: &Model) -> Result<ThresholdSolution> {
    match classify_case(model) {
        CaseTag::Case1I | CaseTag::Case1II | CaseTag::Case1III => solve_case1(model),
        CaseTag::Case2 => Ok(solve_case2(model)),
        CaseTag::Case3 => Ok(solve_case3(model)),
        CaseTag::Case4 => Ok(solve_case4(model)),
    }
}

/// Validates `params` and returns just the policy.
pub fn solve_policy(params: &ModelParams) -> Result<ThresholdPolicy> {
    Ok(solve(&Model::new(*params)?)?.policy)
}

pub fn solve_case1(model: &Model) -> Result<ThresholdSolution> {
    match classify_case(model) {
        CaseTag::Case1I => solve_case1_right(model),
        CaseTag::Case1II => solve_case1_left(model),
        CaseTag::Case1III => solve_case1_straddle(model),
        other => Err(Error::ResidualCheck(format!(
            "case 1 solver called on a {other} instance"
        ))),
    }
}

fn relative(value: f64, scale: f64) -> f64 {
    value / scale.max(f64::MIN_POSITIVE)
}

/// Brings a threshold that misses its sign constraint by roundoff back onto
/// the boundary, or reports the violation.
fn enforce_sign(name: &str, value: f64, must_be_nonnegative: bool, scale: f64) -> Result<f64> {
    let violation = if must_be_nonnegative { -value } else { value };
    if violation <= 0.0 {
        Ok(value)
    } else if violation <= RESIDUAL_TOL * scale.max(1.0) {
        Ok(0.0)
    } else {
        let side = if must_be_nonnegative { ">= 0" } else { "<= 0" };
        Err(Error::ResidualCheck(format!("{name} = {value} is not {side}")))
    }
}

/// Solves `ln(arg) / rate` where `arg` must lie in `(0, 1]`; arguments above
/// one by at most 1e-10 are treated as one.
fn log_in_unit(name: &str, arg: f64, rate: f64) -> Result<f64> {
    if !(arg > 0.0) || arg > 1.0 + 1e-10 {
        return Err(Error::ResidualCheck(format!(
            "{name}: exponential argument {arg} outside (0, 1]"
        )));
    }
    Ok(arg.min(1.0).ln() / rate)
}

/// Band right of zero. With `y = e^{r1 (L - U)}` in `(0, 1]`,
/// `h(y) = B1 y + J1 y^{r2/r1} + A` vanishes; `L` then follows from the
/// smooth fit of the upper region at `L` in closed form for `e^{s2 L}`.
fn solve_case1_right(model: &Model) -> Result<ThresholdSolution> {
    let p = &model.params;
    let c = &model.coeffs;
    let r = &model.roots;
    let rho = r.ratio();
    let (cp, cm, al) = (p.c_plus(), p.c_minus(), p.alpha);

    // z = ln y; h is convex in y with h(0+) = +inf and h(1) <= 0.
    let h = |z: f64| c.b1 * z.exp() + c.j1 * (rho * z).exp() + c.a;
    let z = if p.i_p + p.d_p == 0.0 {
        0.0
    } else {
        find_root_expanding(h, 0.0, -1.0, DEFAULT_TOL)?
    };
    let (y, y_rho) = (z.exp(), (rho * z).exp());
    let h_res = relative(h(z), c.b1.abs() * y + c.j1.abs() * y_rho + c.a.abs());

    let num =
        (c.b1 * r.r2 * y + c.j1 * r.r1 * y_rho) / (r.r1 - r.r2) - (r.r1 + r.r2 - r.s1) * (al * p.i_p + cp);
    let den = (cp + cm) * r.s1;
    let lower = log_in_unit("L", num / den, r.s2)?;
    let upper = lower - z / r.r1;
    let fit_res = relative(den * (r.s2 * lower).exp() - num, den.abs() + num.abs());

    check_residuals(&[("h", h_res), ("lower_fit", fit_res)])?;
    let lower = enforce_sign("L", lower, true, 1.0)?;
    Ok(ThresholdSolution {
        policy: ThresholdPolicy {
            lower,
            upper: upper.max(lower),
            case: CaseTag::Case1I,
        },
        residuals: vec![("h", h_res), ("lower_fit", fit_res)],
    })
}

/// Band left of zero, the reflection of [`solve_case1_right`]: with
/// `y = e^{r1 (U - L)} >= 1`, `B2 y + J2 y^{r2/r1} + K = 0`, then `U` from a
/// closed form for `e^{t1 U}`.
fn solve_case1_left(model: &Model) -> Result<ThresholdSolution> {
    let p = &model.params;
    let c = &model.coeffs;
    let r = &model.roots;
    let rho = r.ratio();
    let (cp, cm, al) = (p.c_plus(), p.c_minus(), p.alpha);

    let hbar = |z: f64| c.b2 * z.exp() + c.j2 * (rho * z).exp() + c.k;
    let z = if p.i_p + p.d_p == 0.0 {
        0.0
    } else {
        find_root_expanding(hbar, 0.0, 1.0, DEFAULT_TOL)?
    };
    let (y, y_rho) = (z.exp(), (rho * z).exp());
    let h_res = relative(hbar(z), c.b2.abs() * y + c.j2.abs() * y_rho + c.k.abs());

    let num =
        (c.b2 * r.r2 * y + c.j2 * r.r1 * y_rho) / (r.r1 - r.r2) - (r.r1 + r.r2 - r.t2) * (al * p.d_p + cm);
    let den = (cp + cm) * r.t2;
    let upper = log_in_unit("U", num / den, r.t1)?;
    let lower = upper - z / r.r1;
    let fit_res = relative(den * (r.t1 * upper).exp() - num, den.abs() + num.abs());

    check_residuals(&[("hbar", h_res), ("upper_fit", fit_res)])?;
    let upper = enforce_sign("U", upper, false, 1.0)?;
    Ok(ThresholdSolution {
        policy: ThresholdPolicy {
            lower: lower.min(upper),
            upper,
            case: CaseTag::Case1II,
        },
        residuals: vec![("hbar", h_res), ("upper_fit", fit_res)],
    })
}

/// Band straddling zero: `B1 e^{-r1 U} + B2 e^{-r1 L} = B3` and
/// `J1 e^{-r2 U} + J2 e^{-r2 L} = J3`.
///
/// Eliminating `L` through the first equation leaves one equation in
/// `u = -r1 U`, bracketed by `U = +inf` (where it is positive) and the
/// smallest admissible `U` (where the case conditions make it negative).
/// Parametrizing by `U` rather than `e^{-r1 L}` keeps precision when `U` is
/// large.
fn solve_case1_straddle(model: &Model) -> Result<ThresholdSolution> {
    let c = &model.coeffs;
    let r = &model.roots;
    let rho = r.ratio();
    let gap = c.b3 - c.b2;
    if !(gap > 0.0) {
        return Err(Error::ResidualCheck(format!(
            "straddling band needs B3 > B2, got B3 - B2 = {gap}"
        )));
    }
    let u_max = if gap < c.b1 { (gap / c.b1).ln() } else { 0.0 };
    // e^{-r1 L} - 1 as a function of u.
    let q_minus_one = |u: f64| (gap - c.b1 * u.exp()) / c.b2;
    let phi = |u: f64| c.j1 * (rho * u).exp() + c.j2 * (rho * q_minus_one(u).ln_1p()).exp() - c.j3;
    let u = find_root_expanding(phi, u_max, -1.0, DEFAULT_TOL)?;

    let upper = -u / r.r1;
    let lower = -q_minus_one(u).ln_1p() / r.r1;
    let res_b = relative(
        c.b1 * (-r.r1 * upper).exp() + c.b2 * (-r.r1 * lower).exp() - c.b3,
        c.b3,
    );
    let res_j = relative(
        c.j1 * (-r.r2 * upper).exp() + c.j2 * (-r.r2 * lower).exp() - c.j3,
        c.j3,
    );
    let residuals = vec![("b_equation", res_b), ("j_equation", res_j)];
    check_residuals(&residuals)?;
    let lower = enforce_sign("L", lower, false, 1.0)?;
    let upper = enforce_sign("U", upper, true, 1.0)?;
    Ok(ThresholdSolution {
        policy: ThresholdPolicy {
            lower,
            upper,
            case: CaseTag::Case1III,
        },
        residuals,
    })
}

fn check_residuals(residuals: &[(&str, f64)]) -> Result<()> {
    for &(name, v) in residuals {
        if !(v.abs() <= RESIDUAL_TOL) {
            return Err(Error::ResidualCheck(format!("{name} residual {v:e}")));
        }
    }
    Ok(())
}

/// Common value of `L = U` when both adjustment costs vanish, keyed on the
/// sign of `B1 + B2 - B3`.
pub fn solve_zero_adjustment_delta(model: &Model) -> f64 {
    let p = &model.params;
    let c = &model.coeffs;
    let r = &model.roots;
    let (cp, cm) = (p.c_plus(), p.c_minus());
    let s = c.b1 + c.b2 - c.b3;
    if s > 0.0 {
        (cp / (cp + cm) * (r.s1 - r.t2) / r.s1).ln() / r.s2
    } else if s == 0.0 {
        0.0
    } else {
        (cm / (cp + cm) * (r.s1 - r.t2) / (-r.t2)).ln() / r.t1
    }
}

/// Only the increasing side exists: act at `theta_u` below `L`.
pub fn solve_case2(model: &Model) -> ThresholdSolution {
    let p = &model.params;
    let c = &model.coeffs;
    let r = &model.roots;
    let (cp, cm) = (p.c_plus(), p.c_minus());
    let lower = if c.b3 <= c.b2 {
        let arg = (p.alpha * p.i_p + cp) * (r.s1 - r.r2) / ((cp + cm) * r.s1);
        (arg.ln() / r.s2).max(0.0)
    } else {
        ((c.b3 / c.b2).ln() / -r.r1).min(0.0)
    };
    let mut sol = ThresholdSolution::closed_form(ThresholdPolicy {
        lower,
        upper: f64::INFINITY,
        case: CaseTag::Case2,
    });
    if c.b3 > c.b2 {
        let res = relative(c.b2 * (-r.r1 * lower).exp() - c.b3, c.b3);
        sol.residuals.push(("b_equation", res));
    }
    sol
}

/// Only the decreasing side exists: act at `theta_l` above `U`.
pub fn solve_case3(model: &Model) -> ThresholdSolution {
    let p = &model.params;
    let c = &model.coeffs;
    let r = &model.roots;
    let (cp, cm) = (p.c_plus(), p.c_minus());
    let upper = if c.j1 <= c.j3 {
        ((c.j3 / c.j1).ln() / -r.r2).max(0.0)
    } else {
        let arg = (p.alpha * p.d_p + cm) * (r.r1 - r.t2) / ((cp + cm) * -r.t2);
        (arg.ln() / r.t1).min(0.0)
    };
    let mut sol = ThresholdSolution::closed_form(ThresholdPolicy {
        lower: f64::NEG_INFINITY,
        upper,
        case: CaseTag::Case3,
    });
    if c.j1 <= c.j3 {
        let res = relative(c.j1 * (-r.r2 * upper).exp() - c.j3, c.j3);
        sol.residuals.push(("j_equation", res));
    }
    sol
}

pub fn solve_case4(_model: &Model) -> ThresholdSolution {
    ThresholdSolution::closed_form(ThresholdPolicy::no_action())
}
