//! Mis-selection bound quantities gamma, r, u and the inequality checks
//! built from them.
//!
//! All infima are grid infima, so gamma inherits O(h) discretization error;
//! reports carry the resolution alongside and the test suite gates on a
//! resolution-doubling stability check. Natural log of a numerically zero
//! probability is reported as -inf.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::ModelSpace;
use crate::num::{log_sum_exp, Kahan};
use crate::quasiposterior::QuasiPosterior;
use crate::risks::RiskPair;

const INEQ_TOL: f64 = 1e-9;
/// Slack when comparing risks against a threshold built from the same grid
/// values, so the minimizing cell is not excluded by rounding.
const GRID_EDGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    /// Grid inf of R over wrong models minus the global grid inf.
    pub gamma: f64,
    pub r: f64,
    pub u: f64,
    /// 2 * sup over cells of |R_n - R|.
    pub u_uniform: f64,
    pub r_upper: f64,
    /// ln pi(M0^c); -inf when the mis-selection mass underflows to zero.
    pub lhs_log_misselect: f64,
    /// -0.5 * lambda * (gamma - r - 2|u|).
    pub rhs_bound: f64,
    /// gamma > r + 2|u|, the regime where the bound says anything.
    pub bound_active: bool,
    /// Minimum of rhs - lhs over the per-model event-form comparisons
    /// ln pi(A) <= 0.5 ln phi(A) - lambda u.
    pub gibbslim_margin: f64,
    pub riskbd_checked: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
}

/// gamma: inf of the theoretical risk over cells of non-true models minus
/// the global inf; +inf when every model is true.
pub fn gap(pair: &RiskPair, space: &ModelSpace) -> Result<f64> {
    let mut global = f64::INFINITY;
    let mut wrong = f64::INFINITY;
    let true_ids = space.true_model_ids();
    for i in 0..space.total_cells() {
        let (j, theta) = space.cell(i);
        let r = pair.theoretical(j, &theta)?;
        global = global.min(r);
        if !true_ids.contains(&j) {
            wrong = wrong.min(r);
        }
    }
    Ok(wrong - global)
}

fn prior_log_masses(space: &ModelSpace) -> Vec<f64> {
    (0..space.total_cells()).map(|i| space.log_prior_cell_mass(i)).collect()
}

fn theoretical_cells(pair: &RiskPair, space: &ModelSpace) -> Result<Vec<f64>> {
    (0..space.total_cells())
        .map(|i| {
            let (j, theta) = space.cell(i);
            pair.theoretical(j, &theta)
        })
        .collect()
}

fn r_from_cells(theo: &[f64], log_prior: &[f64], lambda: f64) -> Result<f64> {
    let inf = theo.iter().copied().fold(f64::INFINITY, f64::min);
    let terms: Vec<f64> =
        theo.iter().zip(log_prior).map(|(&r, &lp)| lp - lambda * (r - inf)).collect();
    let lse = log_sum_exp(&terms);
    if !lse.is_finite() {
        return Err(Error::ZeroMass(" in r-term integral".into()));
    }
    // integrand <= 1 pointwise, so r >= 0 up to rounding
    Ok((-lse / lambda).max(0.0))
}

/// r = -lambda^{-1} ln integral of exp(-lambda (R - inf R)) d kappa.
pub fn r_term(pair: &RiskPair, space: &ModelSpace, lambda: f64) -> Result<f64> {
    r_from_cells(&theoretical_cells(pair, space)?, &prior_log_masses(space), lambda)
}

/// The default threshold grid {d ln(lambda)/lambda * 2^k : k = -2..=4}.
pub fn default_a_grid(space: &ModelSpace, lambda: f64) -> Vec<f64> {
    let d = space.max_free_dim().max(1) as f64;
    let mut base = d * lambda.ln() / lambda;
    if !(base > 0.0) {
        base = 1.0 / lambda;
    }
    (-2..=4).map(|k| base * (2.0f64).powi(k)).collect()
}

fn r_upper_from_cells(
    theo: &[f64],
    log_prior: &[f64],
    lambda: f64,
    a_grid: &[f64],
) -> Result<f64> {
    if a_grid.is_empty() || a_grid.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::Invalid("a_grid must be nonempty with positive entries".into()));
    }
    let inf = theo.iter().copied().fold(f64::INFINITY, f64::min);
    let mut best = f64::INFINITY;
    for &a in a_grid {
        let mut mass = Kahan::new();
        for (&r, &lp) in theo.iter().zip(log_prior) {
            if r - inf < a {
                mass.add(lp.exp());
            }
        }
        let m = mass.value();
        if m > 0.0 {
            best = best.min(a + (1.0 / m).ln() / lambda);
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::AllMassExcluded)
    }
}

/// inf over the threshold grid of a + lambda^{-1} ln(1 / kappa(R - inf R < a)).
pub fn r_upper(
    pair: &RiskPair,
    space: &ModelSpace,
    lambda: f64,
    a_grid: &[f64],
) -> Result<f64> {
    r_upper_from_cells(
        &theoretical_cells(pair, space)?,
        &prior_log_masses(space),
        lambda,
        a_grid,
    )
}

/// u = -(2 lambda)^{-1} ln integral of
/// exp(-2 lambda [(R_n - R) - phi(R_n - R)]) d phi; nonpositive by Jensen.
pub fn u_term(qp: &QuasiPosterior) -> Result<f64> {
    let phi_w = qp.phi.weights();
    let diff: Vec<f64> = qp
        .empirical_risks()
        .iter()
        .zip(qp.theoretical_risks())
        .map(|(a, b)| a - b)
        .collect();
    let mut mean = Kahan::new();
    for (&w, &d) in phi_w.iter().zip(&diff) {
        mean.add(w * d);
    }
    let m = mean.value();
    let terms: Vec<f64> = phi_w
        .iter()
        .zip(&diff)
        .map(|(&w, &d)| if w > 0.0 { w.ln() - 2.0 * qp.lambda * (d - m) } else { f64::NEG_INFINITY })
        .collect();
    let lse = log_sum_exp(&terms);
    if !lse.is_finite() {
        return Err(Error::ZeroMass(" in u-term integral".into()));
    }
    Ok((-lse / (2.0 * qp.lambda)).min(0.0))
}

/// 2 * sup over cells of |R_n - R| (grid version of the uniform u bound;
/// off-grid extremes of discontinuous risks are not seen).
pub fn u_uniform(qp: &QuasiPosterior) -> f64 {
    let sup = qp
        .empirical_risks()
        .iter()
        .zip(qp.theoretical_risks())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    2.0 * sup
}

/// pi mass of the event {R >= inf R + gamma_q} versus
/// exp(-0.5 lambda (gamma_q - r - 2|u|)); errors if the bound is violated
/// while nonvacuous.
pub fn riskbd_check(qp: &QuasiPosterior, gamma_q: f64) -> Result<InequalityCheck> {
    if !(gamma_q > 0.0) {
        return Err(Error::Invalid(format!("gamma_q must be positive, got {gamma_q}")));
    }
    let theo = qp.theoretical_risks();
    let inf = theo.iter().copied().fold(f64::INFINITY, f64::min);
    let mut lhs = Kahan::new();
    for (&w, &r) in qp.pi.weights().iter().zip(theo) {
        if r >= inf + gamma_q - GRID_EDGE_TOL {
            lhs.add(w);
        }
    }
    let lhs = lhs.value();
    let r = r_from_cells(theo, &prior_log_masses(qp.space()), qp.lambda)?;
    let u = u_term(qp)?;
    let rhs = (-0.5 * qp.lambda * (gamma_q - r - 2.0 * u.abs())).exp();
    if rhs <= 1.0 && lhs > rhs + INEQ_TOL {
        return Err(Error::Invalid(format!(
            "tail-mass bound violated: pi(R >= inf+{gamma_q}) = {lhs} > {rhs}"
        )));
    }
    Ok(InequalityCheck { lhs, rhs })
}

/// ln pi(h) versus 0.5 ln phi(h^2) - lambda u for a nonnegative cell
/// function h.
pub fn gibbslim_check<F>(qp: &QuasiPosterior, h: F) -> Result<InequalityCheck>
where
    F: Fn(usize, &[f64]) -> f64,
{
    let space = qp.space();
    let mut pi_h = Kahan::new();
    let mut phi_h2 = Kahan::new();
    for i in 0..space.total_cells() {
        let (j, theta) = space.cell(i);
        let v = h(j, &theta);
        if v < 0.0 {
            return Err(Error::Invalid("gibbslim_check needs h >= 0".into()));
        }
        pi_h.add(qp.pi.weights()[i] * v);
        phi_h2.add(qp.phi.weights()[i] * v * v);
    }
    let u = u_term(qp)?;
    let lhs = pi_h.value().ln();
    let rhs = 0.5 * phi_h2.value().ln() - qp.lambda * u;
    if lhs.is_finite() && lhs > rhs + INEQ_TOL {
        return Err(Error::Invalid(format!(
            "Gibbs comparison violated: ln pi(h) = {lhs} > {rhs}"
        )));
    }
    Ok(InequalityCheck { lhs, rhs })
}

/// The event form ln pi(M_j) <= 0.5 ln phi(M_j) - lambda u for the indicator
/// of each model; returns (model id, lhs, rhs) triples.
pub fn gibbslim_event_checks(qp: &QuasiPosterior) -> Result<Vec<(usize, f64, f64)>> {
    let u = u_term(qp)?;
    let pi_m = qp.pi.model_masses();
    let phi_m = qp.phi.model_masses();
    let mut out = Vec::with_capacity(pi_m.len());
    for (j, (&p, &q)) in pi_m.iter().zip(&phi_m).enumerate() {
        let lhs = p.ln();
        let rhs = 0.5 * q.ln() - qp.lambda * u;
        if lhs.is_finite() && lhs > rhs + INEQ_TOL {
            return Err(Error::Invalid(format!(
                "event-form Gibbs comparison violated on model {j}: {lhs} > {rhs}"
            )));
        }
        out.push((j, lhs, rhs));
    }
    Ok(out)
}

/// pi(M0^c) versus pi(R >= inf R + gamma): mis-selection mass is dominated
/// by the theoretical-risk tail mass.
pub fn msrisk_check(qp: &QuasiPosterior) -> Result<InequalityCheck> {
    let space = qp.space();
    let theo = qp.theoretical_risks();
    let inf = theo.iter().copied().fold(f64::INFINITY, f64::min);
    let gamma = gap_from_cells(theo, space);
    let lhs = qp.miss_probability();
    let mut rhs = Kahan::new();
    if gamma.is_finite() {
        for (&w, &r) in qp.pi.weights().iter().zip(theo) {
            if r >= inf + gamma - GRID_EDGE_TOL {
                rhs.add(w);
            }
        }
    }
    let rhs = rhs.value();
    if lhs > rhs + 1e-12 {
        return Err(Error::Invalid(format!(
            "mis-selection vs tail-mass comparison violated: {lhs} > {rhs}"
        )));
    }
    Ok(InequalityCheck { lhs, rhs })
}

fn gap_from_cells(theo: &[f64], space: &Arc<ModelSpace>) -> f64 {
    let true_ids = space.true_model_ids();
    let mut global = f64::INFINITY;
    let mut wrong = f64::INFINITY;
    for (i, &r) in theo.iter().enumerate() {
        global = global.min(r);
        if !true_ids.contains(&space.model_of(i)) {
            wrong = wrong.min(r);
        }
    }
    wrong - global
}

/// Computes every bound quantity for a built quasi-posterior and verifies
/// ln pi(M0^c) <= -0.5 lambda (gamma - r - 2|u|) together with the companion
/// inequalities. A violation is an implementation bug and is returned as an
/// error.
pub fn prop3_check(qp: &QuasiPosterior) -> Result<BoundReport> {
    let space = qp.space();
    let theo = qp.theoretical_risks();
    let log_prior = prior_log_masses(space);
    let gamma = gap_from_cells(theo, space);
    let r = r_from_cells(theo, &log_prior, qp.lambda)?;
    let a_grid = default_a_grid(space, qp.lambda);
    let r_up = r_upper_from_cells(theo, &log_prior, qp.lambda, &a_grid)?;
    if r > r_up + INEQ_TOL {
        return Err(Error::Invalid(format!("r = {r} exceeds its upper bound {r_up}")));
    }
    let u = u_term(qp)?;
    let u_unif = u_uniform(qp);
    if u.abs() > u_unif + INEQ_TOL {
        return Err(Error::Invalid(format!(
            "|u| = {} exceeds the uniform bound {u_unif}",
            u.abs()
        )));
    }
    let miss = qp.miss_probability();
    let lhs = if miss > 0.0 { miss.ln() } else { f64::NEG_INFINITY };
    let rhs = -0.5 * qp.lambda * (gamma - r - 2.0 * u.abs());
    if lhs.is_finite() && lhs > rhs + INEQ_TOL {
        return Err(Error::Invalid(format!(
            "mis-selection bound violated: ln pi(M0^c) = {lhs} > {rhs}"
        )));
    }
    let events = gibbslim_event_checks(qp)?;
    // a model with zero mass under both pi and phi is vacuous (-inf on
    // both sides); skip it rather than propagate NaN
    let margin = events
        .iter()
        .map(|&(_, l, rr)| rr - l)
        .filter(|m| !m.is_nan())
        .fold(f64::INFINITY, f64::min);
    let gamma_q = if gamma.is_finite() && gamma > 0.0 { 0.5 * gamma } else { 1.0 };
    riskbd_check(qp, gamma_q)?;
    msrisk_check(qp)?;
    Ok(BoundReport {
        gamma,
        r,
        u,
        u_uniform: u_unif,
        r_upper: r_up,
        lhs_log_misselect: lhs,
        rhs_bound: rhs,
        bound_active: gamma > r + 2.0 * u.abs(),
        gibbslim_margin: margin,
        riskbd_checked: true,
    })
}
