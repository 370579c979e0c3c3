// SPDX-License-Identifier: Apache-2.0

//! Single-resource model parameters and the constants derived from them.
//!
//! Every solver equation is phrased in terms of three root pairs (one per
//! control value `0`, `theta_u`, `theta_l`) and eight coefficient constants.
//! [`Model`] computes them once at construction.

use crate::error::{Error, Result};

/// Economic and dynamic parameters of the single-primary-resource problem.
///
/// Rates (`b`, `sigma`, `alpha`, `theta_*`) share one time unit; the CLI and
/// simulator use hours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Demand drift.
    pub b: f64,
    /// Demand volatility, per square-root time.
    pub sigma: f64,
    /// Discount rate.
    pub alpha: f64,
    /// Lower velocity bound on the primary capacity, negative.
    pub theta_l: f64,
    /// Upper velocity bound on the primary capacity, positive.
    pub theta_u: f64,
    pub r_p: f64,
    pub c_p: f64,
    pub r_s: f64,
    pub c_s: f64,
    /// Per-unit cost of increasing the primary capacity.
    pub i_p: f64,
    /// Per-unit cost of decreasing the primary capacity.
    pub d_p: f64,
}

impl ModelParams {
    /// Net benefit per unit of demand served by the primary resource.
    pub fn n_p(&self) -> f64 {
        self.r_p - self.c_p
    }

    pub fn n_s(&self) -> f64 {
        self.r_s - self.c_s
    }

    /// Overage cost rate.
    pub fn c_plus(&self) -> f64 {
        self.c_p
    }

    /// Shortage cost rate.
    pub fn c_minus(&self) -> f64 {
        self.n_p() - self.n_s()
    }

    /// Checks every invariant and reports the first one violated.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("b", self.b),
            ("sigma", self.sigma),
            ("alpha", self.alpha),
            ("theta_l", self.theta_l),
            ("theta_u", self.theta_u),
            ("R_p", self.r_p),
            ("C_p", self.c_p),
            ("R_s", self.r_s),
            ("C_s", self.c_s),
            ("I_p", self.i_p),
            ("D_p", self.d_p),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(invalid(format!("{name} must be finite")));
            }
        }
        if self.sigma <= 0.0 {
            return Err(invalid("sigma must be positive"));
        }
        if self.alpha <= 0.0 {
            return Err(invalid("alpha must be positive"));
        }
        if self.theta_l >= 0.0 {
            return Err(invalid("theta_l must be negative"));
        }
        if self.theta_u <= 0.0 {
            return Err(invalid("theta_u must be positive"));
        }
        if self.c_p < 0.0 {
            return Err(invalid("C_p must be nonnegative"));
        }
        if self.c_s < 0.0 {
            return Err(invalid("C_s must be nonnegative"));
        }
        if self.r_p <= self.c_p {
            return Err(invalid("R_p must exceed C_p"));
        }
        if self.r_s <= self.c_s {
            return Err(invalid("R_s must exceed C_s"));
        }
        if self.i_p < 0.0 {
            return Err(invalid("I_p must be nonnegative"));
        }
        if self.d_p < 0.0 {
            return Err(invalid("D_p must be nonnegative"));
        }
        if self.c_minus() <= 0.0 {
            return Err(invalid("C_minus must be positive (N_p <= N_s)"));
        }
        Ok(())
    }

    /// The reflected problem in `x -> -x`: overage and shortage swap, as do
    /// the adjustment costs and the velocity bounds, and the drift flips.
    /// Rewards are rebuilt with `N_s = 1` so that only `C_+`, `C_-` matter.
    pub fn mirrored(&self) -> ModelParams {
        let cp = self.c_minus();
        let cm = self.c_plus();
        ModelParams {
            b: -self.b,
            sigma: self.sigma,
            alpha: self.alpha,
            theta_l: -self.theta_u,
            theta_u: -self.theta_l,
            r_p: cp + 1.0 + cm,
            c_p: cp,
            r_s: 1.0,
            c_s: 0.0,
            i_p: self.d_p,
            d_p: self.i_p,
        }
    }

    /// Per-unit adjustment cost rate of moving at velocity `theta`.
    pub fn adjustment_rate(&self, theta: f64) -> f64 {
        if theta >= 0.0 {
            self.i_p * theta
        } else {
            -self.d_p * theta
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParams(msg.into())
}

/// Roots `(y1 > 0, y2 < 0)` of `(sigma^2/2) y^2 + (theta - b) y - alpha = 0`.
///
/// The root that does not suffer cancellation is computed directly and the
/// other one from the product `y1 * y2 = -2 alpha / sigma^2`.
pub fn characteristic_roots(b: f64, sigma: f64, alpha: f64, theta: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    let p = b - theta;
    let disc = (p * p + 2.0 * alpha * s2).sqrt();
    let product = -2.0 * alpha / s2;
    if p >= 0.0 {
        let y1 = (p + disc) / s2;
        (y1, product / y1)
    } else {
        let y2 = (p - disc) / s2;
        (product / y2, y2)
    }
}

/// Residual of the characteristic quadratic at `y`.
pub fn characteristic_residual(b: f64, sigma: f64, alpha: f64, theta: f64, y: f64) -> f64 {
    0.5 * sigma * sigma * y * y + (theta - b) * y - alpha
}

/// The six characteristic roots: `r` for no control, `s` for `theta_u`,
/// `t` for `theta_l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootConstants {
    pub r1: f64,
    pub r2: f64,
    pub s1: f64,
    pub s2: f64,
    pub t1: f64,
    pub t2: f64,
}

impl RootConstants {
    pub fn derive(params: &ModelParams) -> Self {
        let ModelParams {
            b, sigma, alpha, ..
        } = *params;
        let (r1, r2) = characteristic_roots(b, sigma, alpha, 0.0);
        let (s1, s2) = characteristic_roots(b, sigma, alpha, params.theta_u);
        let (t1, t2) = characteristic_roots(b, sigma, alpha, params.theta_l);
        RootConstants {
            r1,
            r2,
            s1,
            s2,
            t1,
            t2,
        }
    }

    /// `r2 / r1`, the exponent relating `e^{r2 z}` to `(e^{r1 z})`.
    pub fn ratio(&self) -> f64 {
        self.r2 / self.r1
    }
}

/// Coefficient constants shared by the threshold equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientConstants {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    pub a: f64,
    pub k: f64,
}

impl CoefficientConstants {
    pub fn derive(params: &ModelParams, roots: &RootConstants) -> Self {
        let cp = params.c_plus();
        let cm = params.c_minus();
        let al = params.alpha;
        let RootConstants {
            r1, r2, s1, t2, ..
        } = *roots;
        CoefficientConstants {
            b1: (cp - al * params.d_p) * (t2 - r2),
            b2: (cm - al * params.i_p) * (s1 - r2),
            b3: (cp + cm) * (-r2),
            j1: (cp - al * params.d_p) * (r1 - t2),
            j2: (cm - al * params.i_p) * (r1 - s1),
            j3: (cp + cm) * r1,
            a: (cp + al * params.i_p) * (r2 - r1),
            k: (cm + al * params.d_p) * (r2 - r1),
        }
    }
}

/// Validated parameters together with their cached derived constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    pub params: ModelParams,
    pub roots: RootConstants,
    pub coeffs: CoefficientConstants,
}

impl Model {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        let roots = RootConstants::derive(&params);
        let coeffs = CoefficientConstants::derive(&params, &roots);
        Ok(Model {
            params,
            roots,
            coeffs,
        })
    }

    /// Same model with a different drift (per-segment recalibration).
    pub fn with_drift(&self, b: f64) -> Result<Self> {
        Model::new(ModelParams { b, ..self.params })
    }

    /// Same model with a different volatility.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Model::new(ModelParams {
            sigma,
            ..self.params
        })
    }
}
