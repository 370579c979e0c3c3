// SPDX-License-Identifier: Apache-2.0

//! Piecewise exponential-affine value function for a solved band.
//!
//! Between consecutive breakpoints in `{L, 0, U}` the control and the slope
//! of the running cost are constant, so the Bellman equation is a linear
//! second-order ODE. Each region carries its affine particular solution plus
//! the homogeneous exponentials; unbounded regions keep only the decaying
//! one. The free coefficients come from value and slope continuity at the
//! breakpoints, after which smooth fit at `L` and `U` is checked rather than
//! imposed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{characteristic_roots, Model, ModelParams};
use crate::threshold_solver::ThresholdPolicy;

const FIT_TOL: f64 = 1e-8;

/// `coef * exp(rate * (x - anchor))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpTerm {
    pub coef: f64,
    pub rate: f64,
    pub anchor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub start: f64,
    pub end: f64,
    /// Control applied throughout the region.
    pub theta: f64,
    pub slope: f64,
    pub intercept: f64,
    pub terms: Vec<ExpTerm>,
}

impl Region {
    fn derivatives(&self, x: f64) -> [f64; 3] {
        let mut out = [self.slope * x + self.intercept, self.slope, 0.0];
        for t in &self.terms {
            let e = t.coef * (t.rate * (x - t.anchor)).exp();
            out[0] += e;
            out[1] += t.rate * e;
            out[2] += t.rate * t.rate * e;
        }
        out
    }

    /// Sums of absolute summands of `Y` and `Y'` at `x`, the scale at which
    /// roundoff in [`Region::derivatives`] shows up.
    fn magnitudes(&self, x: f64) -> [f64; 2] {
        let mut out = [(self.slope * x).abs() + self.intercept.abs(), self.slope.abs()];
        for t in &self.terms {
            let e = (t.coef * (t.rate * (x - t.anchor)).exp()).abs();
            out[0] += e;
            out[1] += (t.rate * e).abs();
        }
        out
    }
}

/// Value and slope mismatch at the shared end of two adjacent regions, each
/// relative to `max(1, magnitude of the summands)`.
fn junction_gaps(left: &Region, right: &Region) -> [f64; 2] {
    let x = left.end;
    let (a, b) = (left.derivatives(x), right.derivatives(x));
    let (ma, mb) = (left.magnitudes(x), right.magnitudes(x));
    [0, 1].map(|i| (a[i] - b[i]).abs() / ma[i].max(mb[i]).max(1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseValueFunction {
    pub breakpoints: Vec<f64>,
    pub regions: Vec<Region>,
}

impl PiecewiseValueFunction {
    fn region(&self, x: f64) -> &Region {
        self.regions
            .iter()
            .find(|r| x < r.end)
            .unwrap_or_else(|| self.regions.last().expect("at least two regions"))
    }

    pub fn value(&self, x: f64) -> f64 {
        self.region(x).derivatives(x)[0]
    }

    pub fn slope(&self, x: f64) -> f64 {
        self.region(x).derivatives(x)[1]
    }

    pub fn curvature(&self, x: f64) -> f64 {
        self.region(x).derivatives(x)[2]
    }

    /// `[Y, Y', Y'']` at `x`. At a breakpoint the right-hand region is used.
    pub fn derivatives(&self, x: f64) -> [f64; 3] {
        self.region(x).derivatives(x)
    }

    /// Largest value and slope mismatch across breakpoints, each relative to
    /// `max(1, sum of absolute summands)`.
    pub fn continuity_gaps(&self) -> (f64, f64) {
        let mut gaps = (0.0f64, 0.0f64);
        for w in self.regions.windows(2) {
            let [v, d] = junction_gaps(&w[0], &w[1]);
            gaps.0 = gaps.0.max(v);
            gaps.1 = gaps.1.max(d);
        }
        gaps
    }

    /// Runs the full set of shape checks on `n` evenly spaced points covering
    /// the breakpoints plus `5 sigma / sqrt(2 alpha)` on either side.
    pub fn check(&self, model: &Model, policy: &ThresholdPolicy, n: usize) -> ValueFunctionChecks {
        let p = &model.params;
        let (lo, hi) = check_domain(p, policy);
        let slope_scale = slope_scale(p);
        let (value_gap, slope_gap) = self.continuity_gaps();
        let mut out = ValueFunctionChecks {
            value_gap,
            slope_gap,
            ..ValueFunctionChecks::default()
        };
        for i in 0..n {
            let x = lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
            if self
                .breakpoints
                .iter()
                .any(|b| (x - b).abs() <= 1e-12 * b.abs().max(1.0))
            {
                continue;
            }
            let [_, d1, d2] = self.derivatives(x);
            let scale = residual_scale(p, x);
            out.min_curvature = out.min_curvature.min(d2 / scale);
            out.max_hjb_residual = out
                .max_hjb_residual
                .max((hjb_residual(self, p, x) / scale).abs());
            let band = if x < policy.lower {
                d1 + p.i_p
            } else if x > policy.upper {
                p.d_p - d1
            } else {
                (-p.i_p - d1).max(d1 - p.d_p)
            };
            out.max_band_violation = out.max_band_violation.max(band / slope_scale);
        }
        let reach = 10.0 * [policy.lower, policy.upper, 1.0]
            .iter()
            .filter(|v| v.is_finite())
            .fold(1.0f64, |m, v| m.max(v.abs()));
        let bound = p.c_plus().max(p.c_minus()) / p.alpha;
        for x in [-reach, reach] {
            out.max_growth_ratio = out.max_growth_ratio.max(self.value(x).abs() / reach);
            out.max_far_slope_excess = out
                .max_far_slope_excess
                .max((self.slope(x).abs() - bound) / bound);
        }
        for (x, target) in [(policy.lower, -p.i_p), (policy.upper, p.d_p)] {
            if x.is_finite() {
                out.smooth_fit_gap = out
                    .smooth_fit_gap
                    .max((self.slope(x) - target).abs() / slope_scale);
            }
        }
        out
    }
}

/// Measured shape properties of a constructed value function. Every field is
/// already normalized, so a correct construction has all of them `<= 1e-8`
/// except `min_curvature` (which must be `>= -1e-8`) and `max_growth_ratio`
/// (which only has to be finite).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueFunctionChecks {
    pub value_gap: f64,
    pub slope_gap: f64,
    pub smooth_fit_gap: f64,
    pub min_curvature: f64,
    pub max_band_violation: f64,
    pub max_hjb_residual: f64,
    pub max_growth_ratio: f64,
    pub max_far_slope_excess: f64,
}

impl Default for ValueFunctionChecks {
    fn default() -> Self {
        ValueFunctionChecks {
            value_gap: 0.0,
            slope_gap: 0.0,
            smooth_fit_gap: 0.0,
            min_curvature: f64::INFINITY,
            max_band_violation: f64::NEG_INFINITY,
            max_hjb_residual: 0.0,
            max_growth_ratio: 0.0,
            max_far_slope_excess: f64::NEG_INFINITY,
        }
    }
}

impl ValueFunctionChecks {
    pub fn failures(&self, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        let mut need = |ok: bool, what: String| {
            if !ok {
                out.push(what);
            }
        };
        need(self.value_gap <= tol, format!("value gap {:e}", self.value_gap));
        need(self.slope_gap <= tol, format!("slope gap {:e}", self.slope_gap));
        need(
            self.smooth_fit_gap <= tol,
            format!("smooth fit gap {:e}", self.smooth_fit_gap),
        );
        need(
            self.min_curvature >= -tol,
            format!("curvature {:e}", self.min_curvature),
        );
        need(
            self.max_band_violation <= tol,
            format!("band violation {:e}", self.max_band_violation),
        );
        need(
            self.max_hjb_residual <= tol,
            format!("HJB residual {:e}", self.max_hjb_residual),
        );
        need(
            self.max_growth_ratio.is_finite(),
            format!("growth ratio {}", self.max_growth_ratio),
        );
        need(
            self.max_far_slope_excess <= tol,
            format!("far slope excess {:e}", self.max_far_slope_excess),
        );
        out
    }
}

/// Scale of `Y'`: the asymptotic slopes are `-C_-/alpha` and `C_+/alpha`.
fn slope_scale(p: &ModelParams) -> f64 {
    ((p.c_plus() + p.c_minus()) / p.alpha).max(1.0)
}

/// Scale of the Bellman residual at `x`.
pub(crate) fn residual_scale(p: &ModelParams, x: f64) -> f64 {
    (p.c_plus() + p.c_minus()).max(1.0) * x.abs().max(1.0)
}

fn check_domain(p: &ModelParams, policy: &ThresholdPolicy) -> (f64, f64) {
    let finite = [policy.lower, 0.0, policy.upper]
        .into_iter()
        .filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let w = 5.0 * p.sigma / (2.0 * p.alpha).sqrt();
    (lo - w, hi + w)
}

/// Running cost `C_+ x^+ + C_- x^-`.
fn running_cost(p: &ModelParams, x: f64) -> f64 {
    if x > 0.0 {
        p.c_plus() * x
    } else {
        -p.c_minus() * x
    }
}

/// Control-dependent part of the Bellman operator.
fn control_term(p: &ModelParams, slope: f64, theta: f64) -> f64 {
    if theta >= 0.0 {
        (slope + p.i_p) * theta
    } else {
        (slope - p.d_p) * theta
    }
}

/// Bellman residual with the infimum over `{theta_l, 0, theta_u}`.
pub fn hjb_residual(y: &PiecewiseValueFunction, p: &ModelParams, x: f64) -> f64 {
    let [v, d1, d2] = y.derivatives(x);
    let best = [p.theta_l, 0.0, p.theta_u]
        .into_iter()
        .map(|th| control_term(p, d1, th))
        .fold(f64::INFINITY, f64::min);
    -p.alpha * v + 0.5 * p.sigma * p.sigma * d2 - p.b * d1 + running_cost(p, x) + best
}

/// Bellman residual with a fixed control in place of the infimum; never
/// below [`hjb_residual`].
pub fn hjb_residual_with(y: &PiecewiseValueFunction, p: &ModelParams, x: f64, theta: f64) -> f64 {
    let [v, d1, d2] = y.derivatives(x);
    -p.alpha * v + 0.5 * p.sigma * p.sigma * d2 - p.b * d1
        + running_cost(p, x)
        + control_term(p, d1, theta)
}

pub fn construct_value_function(
    model: &Model,
    policy: &ThresholdPolicy,
) -> Result<PiecewiseValueFunction> {
    let p = &model.params;
    let mut breakpoints: Vec<f64> = [policy.lower, 0.0, policy.upper]
        .into_iter()
        .filter(|v| v.is_finite())
        .collect();
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();

    let n = breakpoints.len();
    let mut regions = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let start = if i == 0 { f64::NEG_INFINITY } else { breakpoints[i - 1] };
        let end = if i == n { f64::INFINITY } else { breakpoints[i] };
        // Representative interior point to read off control and cost slope.
        let probe = match (start.is_finite(), end.is_finite()) {
            (true, true) => 0.5 * (start + end),
            (false, true) => end - 1.0,
            (true, false) => start + 1.0,
            (false, false) => unreachable!("zero is always a breakpoint"),
        };
        let theta = if probe < policy.lower {
            p.theta_u
        } else if probe > policy.upper {
            p.theta_l
        } else {
            0.0
        };
        let c = if probe > 0.0 { p.c_plus() } else { -p.c_minus() };
        let slope = c / p.alpha;
        let intercept = (c * (theta - p.b) / p.alpha + p.adjustment_rate(theta)) / p.alpha;
        let (y1, y2) = characteristic_roots(p.b, p.sigma, p.alpha, theta);
        let mut terms = Vec::with_capacity(2);
        if end.is_finite() {
            terms.push(ExpTerm {
                coef: 0.0,
                rate: y1,
                anchor: end,
            });
        }
        if start.is_finite() {
            terms.push(ExpTerm {
                coef: 0.0,
                rate: y2,
                anchor: start,
            });
        }
        regions.push(Region {
            start,
            end,
            theta,
            slope,
            intercept,
            terms,
        });
    }

    // Unknowns are the exponential coefficients, in region order.
    let offsets: Vec<usize> = regions
        .iter()
        .scan(0, |acc, r| {
            let o = *acc;
            *acc += r.terms.len();
            Some(o)
        })
        .collect();
    let dim = 2 * n;
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    for (j, &x) in breakpoints.iter().enumerate() {
        for (side, sign) in [(j, 1.0), (j + 1, -1.0)] {
            let r = &regions[side];
            for (k, t) in r.terms.iter().enumerate() {
                let e = (t.rate * (x - t.anchor)).exp();
                a[(2 * j, offsets[side] + k)] += sign * e;
                a[(2 * j + 1, offsets[side] + k)] += sign * t.rate * e;
            }
            rhs[2 * j] -= sign * (r.slope * x + r.intercept);
            rhs[2 * j + 1] -= sign * r.slope;
        }
    }
    let coefs = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SmoothFit {
            breakpoint: breakpoints[0],
            detail: "singular continuity system".into(),
        })?;
    for (r, &o) in regions.iter_mut().zip(&offsets) {
        for (k, t) in r.terms.iter_mut().enumerate() {
            t.coef = coefs[o + k];
        }
    }

    let y = PiecewiseValueFunction {
        breakpoints,
        regions,
    };
    verify_fit(&y, p, policy)?;
    Ok(y)
}

fn verify_fit(y: &PiecewiseValueFunction, p: &ModelParams, policy: &ThresholdPolicy) -> Result<()> {
    for w in y.regions.windows(2) {
        let x = w[0].end;
        let gaps = junction_gaps(&w[0], &w[1]);
        for (what, gap) in [("value", gaps[0]), ("slope", gaps[1])] {
            if !(gap <= FIT_TOL) {
                return Err(Error::SmoothFit {
                    breakpoint: x,
                    detail: format!("{what} jumps by {gap:e} relative"),
                });
            }
        }
    }
    let scale = slope_scale(p);
    for (x, target) in [(policy.lower, -p.i_p), (policy.upper, p.d_p)] {
        if x.is_finite() {
            let d = y.slope(x);
            if !((d - target).abs() <= FIT_TOL * scale) {
                return Err(Error::SmoothFit {
                    breakpoint: x,
                    detail: format!("slope {d} where {target} is required"),
                });
            }
        }
    }
    Ok(())
}
