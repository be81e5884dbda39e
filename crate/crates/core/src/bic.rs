//! Exact per-model log marginals versus their BIC-style approximation with
//! general inverse-temperature lambda, plus the model-ratio rate
//! diagnostics.
//!
//! theta_hat is the grid argmin of the empirical risk (ties broken by lowest
//! canonical index); the approximation error being measured is O(1/lambda),
//! which absorbs the substitution of the empirical argmin for the limiting
//! one.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{Axis, ModelSpace, ParameterBox};
use crate::num::{kahan_sum, ols_slope};
use crate::quasiposterior::QuasiPosterior;
use crate::risks::{Dataset, RiskPair};

#[derive(Debug, Clone, Serialize)]
pub struct BicModelReport {
    pub model_id: usize,
    pub d_j: u32,
    pub theta_hat: Vec<f64>,
    /// -lambda^{-1} ln of the within-model marginal of exp(-lambda C_n)
    /// (model weight kappa_j excluded).
    pub exact_neg_log_marginal_over_lambda: f64,
    /// C_n(theta_hat) + ln(lambda)/(2 lambda) * d_j.
    pub bic_approx: f64,
    /// exact - bic_approx, signed.
    pub error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BicReport {
    pub per_model: Vec<BicModelReport>,
    /// ln(pi(M_j) / pi(M_ref)) indexed by model id; reference is the
    /// lowest-id true model.
    pub log_ratios: Vec<f64>,
    pub reference_model: usize,
    /// Two models attain the global inf with non-nested parameter spaces;
    /// the polynomial-rate reading of the ratios does not apply to them.
    pub nonnested_warning: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RatioRegime {
    WrongExponential,
    TruePolynomial,
    Reference,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelRatioDiagnostic {
    pub model_id: usize,
    pub log_ratio: f64,
    pub regime: RatioRegime,
}

/// Grid argmin of the empirical risk over model j; ties broken by lowest
/// canonical index.
pub fn theta_hat(
    space: &ModelSpace,
    pair: &RiskPair,
    dataset: &Dataset,
    j: usize,
) -> Result<Vec<f64>> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in space.cell_range(j) {
        let (_, theta) = space.cell(i);
        let v = pair.empirical(j, &theta, dataset)?;
        if best.as_ref().map_or(true, |(b, _)| v < *b) {
            best = Some((v, theta));
        }
    }
    Ok(best.expect("model has at least one cell").1)
}

/// -lambda^{-1} ln of the grid quadrature of exp(-lambda C_n) against the
/// within-model prior of model j (the model weight kappa_j is reported
/// separately by the caller).
pub fn exact_log_marginal(
    space: &ModelSpace,
    pair: &RiskPair,
    lambda: f64,
    dataset: &Dataset,
    j: usize,
) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Invalid(format!("lambda must be positive, got {lambda}")));
    }
    let model = space.model(j);
    let cc = model.domain.cell_count() as f64;
    let mut risks = Vec::with_capacity(model.domain.cell_count());
    for i in space.cell_range(j) {
        let (_, theta) = space.cell(i);
        risks.push(pair.empirical(j, &theta, dataset)?);
    }
    let min = risks.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::ZeroMass(format!(" in model-{j} marginal")));
    }
    // (1/cc) sum exp(-lambda (C - min)) written as 1 + mean of expm1 terms,
    // which stays accurate down to lambda ~ 0
    let excess = kahan_sum(risks.iter().map(|&r| (-lambda * (r - min)).exp_m1())) / cc;
    Ok(min - excess.ln_1p() / lambda)
}

/// C_n(theta_hat_j) + ln(lambda)/(2 lambda) * d_j.
pub fn bic_approx(
    space: &ModelSpace,
    pair: &RiskPair,
    lambda: f64,
    dataset: &Dataset,
    j: usize,
) -> Result<f64> {
    let th = theta_hat(space, pair, dataset, j)?;
    let d_j = space.model(j).domain.free_dim() as f64;
    Ok(pair.empirical(j, &th, dataset)? + lambda.ln() / (2.0 * lambda) * d_j)
}

fn contains_box(outer: &ParameterBox, inner: &ParameterBox) -> bool {
    if outer.ambient_dim() != inner.ambient_dim() {
        return false;
    }
    outer.axes().iter().zip(inner.axes()).all(|(o, i)| {
        let (ilo, ihi) = match *i {
            Axis::Pinned(v) => (v, v),
            Axis::Interval { lo, hi, .. } => (lo, hi),
        };
        match *o {
            Axis::Pinned(v) => ilo == v && ihi == v,
            Axis::Interval { lo, hi, .. } => lo <= ilo && ihi <= hi,
        }
    })
}

/// Full per-model comparison of exact log marginals with the BIC display,
/// plus the posterior log ratios against the reference true model.
pub fn bic_report(qp: &QuasiPosterior, pair: &RiskPair, dataset: &Dataset) -> Result<BicReport> {
    let space = qp.space();
    let reference = *space
        .true_model_ids()
        .iter()
        .next()
        .ok_or_else(|| Error::Invalid("no true model designated".into()))?;
    let masses = qp.pi.model_masses();
    if masses[reference] <= 0.0 {
        return Err(Error::ZeroMass(" on the reference model".into()));
    }
    let mut per_model = Vec::with_capacity(space.n_models());
    for model in space.models() {
        let j = model.id;
        let exact = exact_log_marginal(space, pair, qp.lambda, dataset, j)?;
        let bic = bic_approx(space, pair, qp.lambda, dataset, j)?;
        per_model.push(BicModelReport {
            model_id: j,
            d_j: model.domain.free_dim() as u32,
            theta_hat: theta_hat(space, pair, dataset, j)?,
            exact_neg_log_marginal_over_lambda: exact,
            bic_approx: bic,
            error: exact - bic,
        });
    }
    let log_ratios: Vec<f64> = masses
        .iter()
        .map(|&m| if m > 0.0 { m.ln() - masses[reference].ln() } else { f64::NEG_INFINITY })
        .collect();
    // nonnested caveat: another model matches the reference's best fit but
    // neither parameter space contains the other
    let theo = qp.theoretical_risks();
    let inf_of = |j: usize| {
        space.cell_range(j).map(|i| theo[i]).fold(f64::INFINITY, f64::min)
    };
    let global_inf = theo.iter().copied().fold(f64::INFINITY, f64::min);
    let ref_box = &space.model(reference).domain;
    let nonnested_warning = space.models().iter().any(|m| {
        m.id != reference
            && inf_of(m.id) <= global_inf + 1e-9
            && !contains_box(&m.domain, ref_box)
            && !contains_box(ref_box, &m.domain)
    });
    Ok(BicReport { per_model, log_ratios, reference_model: reference, nonnested_warning })
}

/// Regresses ln|exact - bic| for model 0 on ln(lambda); the approximation
/// error is O(1/lambda), so the slope should be near -1.
pub fn bic_rate_check(
    space: &ModelSpace,
    pair: &RiskPair,
    dataset: &Dataset,
    lambda_grid: &[f64],
) -> Result<f64> {
    if lambda_grid.len() < 4 {
        return Err(Error::Invalid("lambda_grid needs at least 4 points".into()));
    }
    let lo = lambda_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = lambda_grid.iter().copied().fold(0.0f64, f64::max);
    if !(lo > 0.0) || hi / lo < 8.0 {
        return Err(Error::Invalid("lambda_grid must span at least a factor of 8".into()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &lam in lambda_grid {
        let e = exact_log_marginal(space, pair, lam, dataset, 0)?
            - bic_approx(space, pair, lam, dataset, 0)?;
        if e.abs() < 1e-14 {
            return Err(Error::DegenerateFit(format!(
                "approximation error is numerically zero at lambda = {lam}"
            )));
        }
        xs.push(lam.ln());
        ys.push(e.abs().ln());
    }
    Ok(ols_slope(&xs, &ys))
}

fn refined_inf(pair: &RiskPair, j: usize, domain: &ParameterBox, factor: usize) -> Result<f64> {
    let axes: Vec<Axis> = domain
        .axes()
        .iter()
        .map(|ax| match *ax {
            Axis::Pinned(v) => Axis::Pinned(v),
            Axis::Interval { lo, hi, cells } => {
                Axis::Interval { lo, hi, cells: cells * factor }
            }
        })
        .collect();
    let fine = ParameterBox::new(axes)?;
    let mut inf = f64::INFINITY;
    for i in 0..fine.cell_count() {
        inf = inf.min(pair.theoretical(j, &fine.cell_center(i))?);
    }
    Ok(inf)
}

/// Richardson-extrapolated continuous inf of R over model j: the grid inf
/// converges at O(h^2) for smooth risks, so inf_2h and inf_h extrapolate to
/// inf_h + (inf_h - inf_2h) / 3.
fn extrapolated_inf(pair: &RiskPair, j: usize, domain: &ParameterBox) -> Result<f64> {
    let coarse = refined_inf(pair, j, domain, 1)?;
    let fine = refined_inf(pair, j, domain, 2)?;
    Ok(fine + (fine - coarse) / 3.0)
}

/// Classifies each model's posterior ratio regime from the theoretical risk:
/// a model whose (extrapolated) inf exceeds the global inf decays
/// exponentially in lambda; a model attaining the inf with extra free
/// dimensions decays polynomially.
pub fn model_ratio_diagnostics(
    qp: &QuasiPosterior,
    pair: &RiskPair,
) -> Result<Vec<ModelRatioDiagnostic>> {
    let space = qp.space();
    let reference = *space
        .true_model_ids()
        .iter()
        .next()
        .ok_or_else(|| Error::Invalid("no true model designated".into()))?;
    let masses = qp.pi.model_masses();
    if masses[reference] <= 0.0 {
        return Err(Error::ZeroMass(" on the reference model".into()));
    }
    let infs: Vec<f64> = space
        .models()
        .iter()
        .map(|m| extrapolated_inf(pair, m.id, &m.domain))
        .collect::<Result<_>>()?;
    let global_inf = infs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut out = Vec::with_capacity(space.n_models());
    for model in space.models() {
        let j = model.id;
        let regime = if j == reference {
            RatioRegime::Reference
        } else if infs[j] > global_inf + 1e-6 {
            RatioRegime::WrongExponential
        } else {
            RatioRegime::TruePolynomial
        };
        let log_ratio = if masses[j] > 0.0 {
            masses[j].ln() - masses[reference].ln()
        } else {
            f64::NEG_INFINITY
        };
        out.push(ModelRatioDiagnostic { model_id: j, log_ratio, regime });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{ids, Model, PriorDensity};
    use crate::num::median;
    use crate::quasiposterior::build;
    use crate::risks::{
        gaussian_nll_risk, generate_gaussian_location, GaussianDgp, Rows, XyRow,
    };
    use std::sync::Arc;

    fn box1(lo: f64, hi: f64, cells: usize) -> ParameterBox {
        ParameterBox::new(vec![Axis::Interval { lo, hi, cells }]).unwrap()
    }

    fn single_space(cells: usize) -> ModelSpace {
        ModelSpace::new(
            vec![Model {
                id: 0,
                domain: box1(-1.0, 1.0, cells),
                prior_weight: 1.0,
                prior: PriorDensity::Uniform,
            }],
            ids([0]),
        )
        .unwrap()
    }

    fn nested_space(cells: usize) -> Arc<ModelSpace> {
        Arc::new(
            ModelSpace::new(
                vec![
                    Model {
                        id: 0,
                        domain: ParameterBox::new(vec![Axis::Pinned(0.0)]).unwrap(),
                        prior_weight: 0.5,
                        prior: PriorDensity::Uniform,
                    },
                    Model {
                        id: 1,
                        domain: box1(-1.0, 1.0, cells),
                        prior_weight: 0.5,
                        prior: PriorDensity::Uniform,
                    },
                ],
                ids([0]),
            )
            .unwrap(),
        )
    }

    fn dummy_ds() -> Dataset {
        Dataset::new(0, "synthetic".into(), Rows::Xy(vec![XyRow { x: vec![1.0], y: 0.0 }]))
    }

    fn quad() -> RiskPair {
        RiskPair::deterministic("quad", |_, t: &[f64]| 0.5 * t[0] * t[0])
    }

    #[test]
    fn exact_marginal_examples() {
        let space = single_space(64);
        let ds = dummy_ds();
        // constant risk -> the constant
        let c = RiskPair::deterministic("c", |_, _| 1.25);
        assert!((exact_log_marginal(&space, &c, 100.0, &ds, 0).unwrap() - 1.25).abs() < 1e-12);
        // quadratic at lambda = 100: frozen quadrature oracle
        let e = exact_log_marginal(&space, &quad(), 100.0, &ds, 0).unwrap();
        assert!((e - 0.0207679374035).abs() < 1e-9, "exact {e}");
        // lambda -> 0: first-order expansion gives the prior mean of C_n
        let e0 = exact_log_marginal(&space, &quad(), 1e-12, &ds, 0).unwrap();
        let mean: f64 = space
            .cell_range(0)
            .map(|i| 0.5 * space.cell(i).1[0] * space.cell(i).1[0])
            .sum::<f64>()
            / 64.0;
        assert!((e0 - mean).abs() < 1e-6);
        // mean-value bounds
        let max = space
            .cell_range(0)
            .map(|i| 0.5 * space.cell(i).1[0] * space.cell(i).1[0])
            .fold(0.0f64, f64::max);
        assert!(e >= 0.0 && e <= max);
    }

    #[test]
    fn bic_approx_examples() {
        let ds = dummy_ds();
        // pinned-point model: just C_n at the point
        let space = nested_space(64);
        let b0 = bic_approx(&space, &quad(), 100.0, &ds, 0).unwrap();
        assert_eq!(b0, 0.0);
        // quadratic, d = 1, lambda = 100: frozen arithmetic oracle,
        // grid argmin sits half a cell off zero
        let s1 = single_space(64);
        let b1 = bic_approx(&s1, &quad(), 100.0, &ds, 0).unwrap();
        assert!((b1 - 0.0230258509299).abs() < 2e-4, "bic {b1}");
        let e1 = exact_log_marginal(&s1, &quad(), 100.0, &ds, 0).unwrap();
        assert!((e1 - b1).abs() < 0.004, "error {}", e1 - b1);
        // penalty term decreases when lambda doubles (lambda > e)
        let b2 = bic_approx(&s1, &quad(), 200.0, &ds, 0).unwrap();
        let pen1 = b1 - 0.5 * (2.0f64 / 64.0 / 2.0).powi(2);
        let pen2 = b2 - 0.5 * (2.0f64 / 64.0 / 2.0).powi(2);
        assert!(pen2 < pen1);
    }

    #[test]
    fn theta_hat_tie_breaks_low_index() {
        let space = single_space(8);
        let ds = dummy_ds();
        let flat = RiskPair::deterministic("flat", |_, _| 1.0);
        let th = theta_hat(&space, &flat, &ds, 0).unwrap();
        let (_, first) = space.cell(0);
        assert_eq!(th, first);
    }

    #[test]
    fn rate_check_slope_and_degenerate_path() {
        let ds = dummy_ds();
        let grid = [50.0, 100.0, 200.0, 400.0, 800.0];
        let s64 = single_space(64);
        let slope = bic_rate_check(&s64, &quad(), &ds, &grid).unwrap();
        assert!(slope <= -0.8 && slope >= -1.2, "slope {slope}");
        // doubling resolution moves the slope by < 0.1
        let s128 = single_space(128);
        let s256 = single_space(256);
        let a = bic_rate_check(&s128, &quad(), &ds, &grid).unwrap();
        let b = bic_rate_check(&s256, &quad(), &ds, &grid).unwrap();
        assert!((a - b).abs() < 0.1, "{a} vs {b}");
        // d = 0 constant risk: error identically zero
        let point = ModelSpace::new(
            vec![Model {
                id: 0,
                domain: ParameterBox::new(vec![Axis::Pinned(0.3)]).unwrap(),
                prior_weight: 1.0,
                prior: PriorDensity::Uniform,
            }],
            ids([0]),
        )
        .unwrap();
        let c = RiskPair::deterministic("c", |_, _| 2.0);
        assert!(matches!(
            bic_rate_check(&point, &c, &ds, &grid),
            Err(Error::DegenerateFit(_))
        ));
        // bad grids rejected
        assert!(bic_rate_check(&s64, &quad(), &ds, &[50.0, 100.0]).is_err());
        assert!(bic_rate_check(&s64, &quad(), &ds, &[50.0, 60.0, 70.0, 80.0]).is_err());
    }

    #[test]
    fn ratio_regimes_and_polynomial_slope() {
        let ds = dummy_ds();
        // true pinned model at the minimizer, over-complex model on top:
        // polynomial regime with slope -0.5 (d_j - d_0) = -0.5 in ln lambda
        let space = nested_space(64);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for lam in [50.0, 100.0, 200.0, 400.0, 800.0] {
            let qp = build(space.clone(), &quad(), lam, &ds).unwrap();
            let diag = model_ratio_diagnostics(&qp, &quad()).unwrap();
            assert_eq!(diag[0].regime, RatioRegime::Reference);
            assert_eq!(diag[0].log_ratio, 0.0);
            assert_eq!(diag[1].regime, RatioRegime::TruePolynomial);
            xs.push(lam.ln());
            ys.push(diag[1].log_ratio);
        }
        let slope = ols_slope(&xs, &ys);
        assert!((slope + 0.5).abs() < 0.1, "slope {slope}");
        // shifted minimizer: the pinned model is now wrong
        let shifted =
            RiskPair::deterministic("sq", |_, t: &[f64]| 0.5 * (t[0] - 0.4) * (t[0] - 0.4));
        let wrong_space = Arc::new(space.with_true_ids(ids([1])).unwrap());
        let qp = build(wrong_space, &shifted, 100.0, &ds).unwrap();
        let diag = model_ratio_diagnostics(&qp, &shifted).unwrap();
        assert_eq!(diag[0].regime, RatioRegime::WrongExponential);
        assert_eq!(diag[1].regime, RatioRegime::Reference);
        assert!(diag[0].log_ratio < 0.0);
    }

    #[test]
    fn wrong_model_ratio_decays_with_n() {
        // Gaussian location theta0 = 0.4, wrong pinned model at 0
        let space = Arc::new(nested_space(64).with_true_ids(ids([1])).unwrap());
        let pair = gaussian_nll_risk(1.0, GaussianDgp::location(0.4, 1.0)).unwrap();
        let ratio_at = |n: usize| -> f64 {
            let v: Vec<f64> = (0..10)
                .map(|s| {
                    let ds = generate_gaussian_location(n, 0.4, 1.0, s);
                    let qp = build(space.clone(), &pair, n as f64, &ds).unwrap();
                    model_ratio_diagnostics(&qp, &pair).unwrap()[0].log_ratio
                })
                .collect();
            median(&v)
        };
        let r1000 = ratio_at(1000);
        let r4000 = ratio_at(4000);
        assert!(r4000 < 2.0 * r1000, "{r4000} !< 2 * {r1000}");
        assert!(r1000 < 0.0);
    }

    #[test]
    fn nonnested_warning_fires() {
        let ds = dummy_ds();
        // two disjoint boxes both attaining the global inf of a flat risk
        let space = Arc::new(
            ModelSpace::new(
                vec![
                    Model {
                        id: 0,
                        domain: box1(-1.0, -0.25, 16),
                        prior_weight: 0.5,
                        prior: PriorDensity::Uniform,
                    },
                    Model {
                        id: 1,
                        domain: box1(0.25, 1.0, 16),
                        prior_weight: 0.5,
                        prior: PriorDensity::Uniform,
                    },
                ],
                ids([0]),
            )
            .unwrap(),
        );
        let flat = RiskPair::deterministic("flat", |_, _| 1.0);
        let qp = build(space, &flat, 50.0, &ds).unwrap();
        let rep = bic_report(&qp, &flat, &ds).unwrap();
        assert!(rep.nonnested_warning);
        assert_eq!(rep.reference_model, 0);
        assert_eq!(rep.log_ratios[0], 0.0);
        // nested spaces do not warn
        let qp2 = build(nested_space(16), &quad(), 50.0, &ds).unwrap();
        let rep2 = bic_report(&qp2, &quad(), &ds).unwrap();
        assert!(!rep2.nonnested_warning);
    }
}
