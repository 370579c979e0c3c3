// SPDX-License-Identifier: Apache-2.0

//! Several primary resources held in fixed proportions.
//!
//! A contract vector `w` on the simplex fixes the share of each primary
//! resource in the aggregate capacity. Rewards, costs and adjustment charges
//! aggregate linearly; the aggregate velocity window is the widest one that
//! keeps every resource inside its own bounds. The aggregate is an ordinary
//! single-resource problem.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Model, ModelParams};
use crate::threshold_solver::{construct_value_function, solve, ThresholdPolicy};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Per-resource economics and velocity bounds plus the shared demand and
/// secondary-resource parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiParams {
    pub r_p: Vec<f64>,
    pub c_p: Vec<f64>,
    pub i_p: Vec<f64>,
    pub d_p: Vec<f64>,
    pub theta_l: Vec<f64>,
    pub theta_u: Vec<f64>,
    pub b: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub r_s: f64,
    pub c_s: f64,
    /// Initial demand level, used by the net-benefit functional.
    pub d0: f64,
}

impl MultiParams {
    pub fn resources(&self) -> usize {
        self.r_p.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.r_p.len();
        if n == 0 {
            return Err(Error::InvalidParams("at least one primary resource is required".into()));
        }
        let lists = [
            ("C_p", &self.c_p),
            ("I_p", &self.i_p),
            ("D_p", &self.d_p),
            ("theta_l", &self.theta_l),
            ("theta_u", &self.theta_u),
        ];
        for (name, list) in lists {
            if list.len() != n {
                return Err(Error::LengthMismatch(format!(
                    "{name} has {} entries, R_p has {n}",
                    list.len()
                )));
            }
        }
        for i in 0..n {
            if !(self.r_p[i] > self.c_p[i]) {
                return Err(Error::InvalidParams(format!("R_p_{} must exceed C_p_{}", i + 1, i + 1)));
            }
            if !(self.theta_l[i] < 0.0) || !(self.theta_u[i] > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "resource {} needs theta_l < 0 < theta_u",
                    i + 1
                )));
            }
        }
        if !self.d0.is_finite() {
            return Err(Error::InvalidParams("D0 must be finite".into()));
        }
        Ok(())
    }

    /// The single-resource parameters of resource `i` (zero-based).
    pub fn resource(&self, i: usize) -> ModelParams {
        ModelParams {
            b: self.b,
            sigma: self.sigma,
            alpha: self.alpha,
            theta_l: self.theta_l[i],
            theta_u: self.theta_u[i],
            r_p: self.r_p[i],
            c_p: self.c_p[i],
            r_s: self.r_s,
            c_s: self.c_s,
            i_p: self.i_p[i],
            d_p: self.d_p[i],
        }
    }
}

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractVector {
    w: Vec<f64>,
}

impl ContractVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidParams("contract vector is empty".into()));
        }
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParams(format!("contract weights must be nonnegative: {w:?}")));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidParams(format!("contract weights sum to {total}, not 1")));
        }
        Ok(ContractVector { w })
    }

    /// Puts all capacity on resource `i` out of `n`.
    pub fn vertex(n: usize, i: usize) -> Self {
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        ContractVector { w }
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }
}

/// Aggregate single-resource parameters of contract `w`.
pub fn aggregate_params(mp: &MultiParams, w: &ContractVector) -> Result<ModelParams> {
    mp.validate()?;
    let n = mp.resources();
    if w.w.len() != n {
        return Err(Error::LengthMismatch(format!(
            "contract has {} weights for {n} resources",
            w.w.len()
        )));
    }
    let dot = |v: &[f64]| v.iter().zip(&w.w).fold(0.0, |acc, (x, wi)| acc + wi * x);
    // Zero-weight resources carry no capacity and so impose no rate limit.
    let mut theta_l = f64::NEG_INFINITY;
    let mut theta_u = f64::INFINITY;
    for i in (0..n).filter(|&i| w.w[i] > 0.0) {
        if !(mp.theta_l[i].is_finite() && mp.theta_u[i].is_finite()) {
            return Err(Error::InvalidParams(format!(
                "resource {} has weight {} but unbounded velocity",
                i + 1,
                w.w[i]
            )));
        }
        theta_l = theta_l.max(mp.theta_l[i] / w.w[i]);
        theta_u = theta_u.min(mp.theta_u[i] / w.w[i]);
    }
    if !(theta_l < 0.0 && theta_u > 0.0 && theta_l.is_finite() && theta_u.is_finite()) {
        return Err(Error::DegenerateVelocityWindow { theta_l, theta_u });
    }
    let params = ModelParams {
        b: mp.b,
        sigma: mp.sigma,
        alpha: mp.alpha,
        theta_l,
        theta_u,
        r_p: dot(&mp.r_p),
        c_p: dot(&mp.c_p),
        r_s: mp.r_s,
        c_s: mp.c_s,
        i_p: dot(&mp.i_p),
        d_p: dot(&mp.d_p),
    };
    if params.n_p() <= params.n_s() {
        return Err(Error::InvalidAggregateEconomics {
            n_p: params.n_p(),
            n_s: params.n_s(),
        });
    }
    params.validate()?;
    Ok(params)
}

pub fn solve_thresholds_for_contract(mp: &MultiParams, w: &ContractVector) -> Result<ThresholdPolicy> {
    let model = Model::new(aggregate_params(mp, w)?)?;
    Ok(solve(&model)?.policy)
}

/// `E[int_0^inf e^{-alpha t} D(t) dt]` for `D(t) = D0 + b t + sigma W(t)`.
pub fn expected_discounted_demand(d0: f64, b: f64, alpha: f64) -> f64 {
    d0 / alpha + b / (alpha * alpha)
}

/// Thresholds and net benefit of contract `w` started from `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractEvaluation {
    pub policy: ThresholdPolicy,
    pub net_benefit: f64,
}

pub fn evaluate_contract(mp: &MultiParams, w: &ContractVector, x: f64) -> Result<ContractEvaluation> {
    let params = aggregate_params(mp, w)?;
    let model = Model::new(params)?;
    let policy = solve(&model)?.policy;
    let y = construct_value_function(&model, &policy)?;
    let net_benefit = params.n_p() * expected_discounted_demand(mp.d0, mp.b, mp.alpha) - y.value(x);
    Ok(ContractEvaluation { policy, net_benefit })
}

/// Maximal expected discounted net benefit `J_w(x)`.
pub fn contract_net_benefit(mp: &MultiParams, w: &ContractVector, x: f64) -> Result<f64> {
    Ok(evaluate_contract(mp, w, x)?.net_benefit)
}

/// Lattice points `k / n` of the simplex in lexicographic order.
pub fn simplex_lattice(resources: usize, n: usize) -> Vec<ContractVector> {
    fn fill(prefix: &mut Vec<usize>, left: usize, slots: usize, n: usize, out: &mut Vec<ContractVector>) {
        if slots == 1 {
            prefix.push(left);
            out.push(ContractVector {
                w: prefix.iter().map(|&k| k as f64 / n as f64).collect(),
            });
            prefix.pop();
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            fill(prefix, left - k, slots - 1, n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if resources > 0 {
        fill(&mut Vec::with_capacity(resources), n, resources, n, &mut out);
    }
    out
}

/// Divisions per unit implied by `grid_step`, which must be `1/n`.
pub fn lattice_divisions(grid_step: f64) -> Result<usize> {
    if !(grid_step > 0.0 && grid_step <= 0.25) {
        return Err(Error::InvalidParams(format!("grid step must lie in (0, 1/4], got {grid_step}")));
    }
    let n = (1.0 / grid_step).round();
    if ((1.0 / grid_step) - n).abs() > 1e-9 * n {
        return Err(Error::InvalidParams(format!("grid step {grid_step} does not divide 1")));
    }
    Ok(n as usize)
}

/// Best lattice contract at `x`. Ties go to the lexicographically smallest
/// weight vector; points failing aggregate validation are skipped.
pub fn optimize_contract(mp: &MultiParams, x: f64, grid_step: f64) -> Result<(ContractVector, f64)> {
    mp.validate()?;
    let n = lattice_divisions(grid_step)?;
    let lattice = simplex_lattice(mp.resources(), n);
    let values: Vec<Result<f64>> = lattice
        .par_iter()
        .map(|w| contract_net_benefit(mp, w, x))
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match v {
            Ok(j) => {
                if best.is_none_or(|(_, b)| j > b) {
                    best = Some((i, j));
                }
            }
            Err(e) if e.is_numerical() => return Err(e),
            Err(_) => {}
        }
    }
    let (i, j) = best.ok_or(Error::NoFeasibleContract)?;
    Ok((lattice[i].clone(), j))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Two resources with equal net margin and the costs of the two-resource
    /// experiment.
    pub(crate) fn two_resource() -> MultiParams {
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

    fn w(v: &[f64]) -> ContractVector {
        ContractVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn vertex_embeds_single_resource_exactly() {
        let mp = two_resource();
        let agg = aggregate_params(&mp, &w(&[1.0, 0.0])).unwrap();
        assert_eq!(agg, mp.resource(0));
        let agg = aggregate_params(&mp, &w(&[0.0, 1.0])).unwrap();
        assert_eq!(agg, mp.resource(1));
        let single = solve(&Model::new(mp.resource(0)).unwrap()).unwrap().policy;
        assert_eq!(solve_thresholds_for_contract(&mp, &w(&[1.0, 0.0])).unwrap(), single);
    }

    #[test]
    fn two_resource_instance() {
        let mp = two_resource();
        let agg = aggregate_params(&mp, &w(&[0.7, 0.3])).unwrap();
        assert!((agg.c_minus() - 9.0).abs() < 1e-12);
        assert!((agg.theta_u - 1000.0 / 0.7).abs() < 1e-9);
        assert!((agg.theta_l + 1000.0 / 0.7).abs() < 1e-9);
        let pol = solve_thresholds_for_contract(&mp, &w(&[0.7, 0.3])).unwrap();
        assert!(pol.case.is_case1(), "{:?}", pol.case);
    }

    #[test]
    fn discounted_demand_closed_form() {
        assert_eq!(expected_discounted_demand(0.0, 0.0, 0.3), 0.0);
        assert_eq!(expected_discounted_demand(1.0, 0.0, 0.5), 2.0);
        assert!((expected_discounted_demand(4.5, 0.0, 0.02) - 225.0).abs() < 1e-9);
    }

    #[test]
    fn weights_are_validated() {
        assert!(ContractVector::new(vec![0.5, 0.4]).is_err());
        assert!(ContractVector::new(vec![1.2, -0.2]).is_err());
        assert!(ContractVector::new(vec![]).is_err());
        let mp = two_resource();
        assert!(matches!(
            aggregate_params(&mp, &w(&[1.0])),
            Err(Error::LengthMismatch(_))
        ));
    }

    #[test]
    fn weak_aggregate_margin_is_rejected() {
        let mut mp = two_resource();
        mp.r_s = 20.0;
        assert!(matches!(
            aggregate_params(&mp, &w(&[0.5, 0.5])),
            Err(Error::InvalidAggregateEconomics { .. })
        ));
        assert!(matches!(optimize_contract(&mp, 0.0, 0.25), Err(Error::NoFeasibleContract)));
    }

    #[test]
    fn lattice_is_lexicographic_and_complete() {
        let l = simplex_lattice(3, 4);
        assert_eq!(l.len(), 15);
        for pair in l.windows(2) {
            assert!(pair[0].weights() < pair[1].weights());
        }
        assert!(l.iter().all(|v| (v.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15));
        assert!(lattice_divisions(0.3).is_err());
        assert!(lattice_divisions(0.5).is_err());
        assert_eq!(lattice_divisions(0.05).unwrap(), 20);
    }

    #[test]
    fn dominating_resource_wins() {
        let mut mp = two_resource();
        mp.r_p = vec![30.0, 20.0];
        mp.c_p = vec![10.0, 12.0];
        mp.i_p = vec![0.5, 0.6];
        mp.d_p = vec![0.5, 0.6];
        mp.theta_l = vec![-10.0, -10.0];
        mp.theta_u = vec![10.0, 10.0];
        mp.d0 = 4.5;
        let (best, _) = optimize_contract(&mp, 0.0, 0.1).unwrap();
        assert_eq!(best.weights(), &[1.0, 0.0]);
    }

    #[test]
    fn symmetric_tie_goes_to_smallest_weights() {
        let mut mp = two_resource();
        mp.r_p = vec![30.0, 30.0];
        mp.c_p = vec![10.0, 10.0];
        mp.theta_l = vec![-10.0, -10.0];
        mp.theta_u = vec![10.0, 10.0];
        let (best, j) = optimize_contract(&mp, 0.0, 0.25).unwrap();
        // Both vertices (and every split) share the same economics; mixing
        // only widens the velocity window, so the value is symmetric in w.
        let mirror = ContractVector::new(best.weights().iter().rev().copied().collect()).unwrap();
        assert_eq!(contract_net_benefit(&mp, &mirror, 0.0).unwrap(), j);
        assert!(best.weights() <= mirror.weights());
    }

    #[test]
    fn costlier_resource_lowers_net_benefit() {
        let base = two_resource();
        let v = w(&[1.0, 0.0]);
        let mut last = contract_net_benefit(&base, &v, 0.0).unwrap();
        for bump in [1.0, 2.0, 4.0, 8.0] {
            let mut costlier = base.clone();
            costlier.c_p[0] += bump;
            let j = contract_net_benefit(&costlier, &v, 0.0).unwrap();
            assert!(j <= last, "C_p_1 + {bump}: {j} > {last}");
            last = j;
        }
    }

    #[test]
    fn parallel_search_matches_sequential() {
        let mp = two_resource();
        let (best, j) = optimize_contract(&mp, 0.0, 0.05).unwrap();
        let mut seq: Option<(ContractVector, f64)> = None;
        for v in simplex_lattice(2, 20) {
            let val = contract_net_benefit(&mp, &v, 0.0).unwrap();
            if seq.as_ref().is_none_or(|(_, b)| val > *b) {
                seq = Some((v, val));
            }
        }
        let (sw, sj) = seq.unwrap();
        assert_eq!(best, sw);
        assert_eq!(j, sj);
    }

    #[test]
    fn coarse_optimum_is_near_refined_one() {
        let mp = two_resource();
        let (coarse, _) = optimize_contract(&mp, 0.0, 0.05).unwrap();
        let (fine, _) = optimize_contract(&mp, 0.0, 0.01).unwrap();
        let dist = coarse
            .weights()
            .iter()
            .zip(fine.weights())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dist <= 0.05 + 1e-12, "{coarse:?} vs {fine:?}");
    }

    proptest! {
        #[test]
        fn aggregates_are_linear_in_w(a in 0.0..1.0f64, c in 0.0..1.0f64, s in 0.0..1.0f64) {
            let mp = two_resource();
            let wa = w(&[a, 1.0 - a]);
            let wc = w(&[c, 1.0 - c]);
            let mix = w(&[s * a + (1.0 - s) * c, 1.0 - (s * a + (1.0 - s) * c)]);
            let pa = aggregate_params(&mp, &wa).unwrap();
            let pc = aggregate_params(&mp, &wc).unwrap();
            let pm = aggregate_params(&mp, &mix).unwrap();
            let lerp = |x: f64, y: f64| s * x + (1.0 - s) * y;
            for (m, x, y) in [
                (pm.r_p, pa.r_p, pc.r_p),
                (pm.c_p, pa.c_p, pc.c_p),
                (pm.i_p, pa.i_p, pc.i_p),
                (pm.d_p, pa.d_p, pc.d_p),
            ] {
                prop_assert!((m - lerp(x, y)).abs() <= 1e-9 * m.abs().max(1.0));
            }
        }

        #[test]
        fn per_resource_velocities_stay_in_bounds(
            a in 0.0..1.0f64,
            l1 in -50.0..-0.1f64, l2 in -50.0..-0.1f64,
            u1 in 0.1..50.0f64, u2 in 0.1..50.0f64,
        ) {
            let mut mp = two_resource();
            mp.theta_l = vec![l1, l2];
            mp.theta_u = vec![u1, u2];
            let v = w(&[a, 1.0 - a]);
            let agg = aggregate_params(&mp, &v).unwrap();
            for i in 0..2 {
                let wi = v.weights()[i];
                if wi > 0.0 {
                    prop_assert!(wi * agg.theta_u <= mp.theta_u[i] * (1.0 + 1e-12));
                    prop_assert!(wi * agg.theta_l >= mp.theta_l[i] * (1.0 + 1e-12));
                }
            }
        }
    }
}
