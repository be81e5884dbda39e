//! Empirical risks R_n(j, theta) paired with their theoretical counterparts
//! R(j, theta).
//!
//! Each pair carries an empirical risk evaluated on a dataset and a
//! deterministic theoretical risk (analytic, or a cached Monte Carlo oracle
//! with a fixed dedicated seed), plus an optional additive complexity
//! penalty gamma_pen * d_j applied identically to both sides.

use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::measure::ModelSpace;
use crate::num::kahan_sum;

// ---------------------------------------------------------------------------
// Datasets

#[derive(Debug, Clone, PartialEq)]
pub struct XyRow {
    pub x: Vec<f64>,
    pub y: f64,
}

/// Maximum-score row: predictors and the signed label z = -(2y - 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub x: [f64; 2],
    pub z: f64,
}

/// Interval-bound row (L_1, U_1, Y_1, L_2, U_2, Y_2).
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRow {
    pub l: [f64; 2],
    pub u: [f64; 2],
    pub y: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rows {
    Xy(Vec<XyRow>),
    Score(Vec<ScoreRow>),
    IntervalBounds(Vec<IntervalRow>),
}

/// A seeded dataset; regenerating with the same seed reproduces the rows
/// bit-exactly.
#[derive(Debug)]
pub struct Dataset {
    pub n: usize,
    pub seed: u64,
    pub generator_id: String,
    pub rows: Rows,
    xy_stats: OnceLock<XyStats>,
    iv_stats: OnceLock<IvStats>,
}

impl Clone for Dataset {
    fn clone(&self) -> Self {
        Dataset::new(self.seed, self.generator_id.clone(), self.rows.clone())
    }
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.seed == other.seed
            && self.generator_id == other.generator_id
            && self.rows == other.rows
    }
}

#[derive(Debug, Clone)]
struct XyStats {
    dim: usize,
    xtx: Vec<f64>, // dim x dim, row-major
    xty: Vec<f64>,
    yty: f64,
}

#[derive(Debug, Clone, Copy)]
struct IvStats {
    mean_uy: [f64; 2],
    mean_ly: [f64; 2],
}

impl Dataset {
    pub fn new(seed: u64, generator_id: String, rows: Rows) -> Self {
        let n = match &rows {
            Rows::Xy(r) => r.len(),
            Rows::Score(r) => r.len(),
            Rows::IntervalBounds(r) => r.len(),
        };
        Dataset { n, seed, generator_id, rows, xy_stats: OnceLock::new(), iv_stats: OnceLock::new() }
    }

    fn xy_stats(&self) -> Result<&XyStats> {
        let rows = match &self.rows {
            Rows::Xy(r) => r,
            _ => return Err(Error::SchemaMismatch("expected (x, y) rows".into())),
        };
        if rows.is_empty() {
            return Err(Error::SchemaMismatch("empty dataset".into()));
        }
        Ok(self.xy_stats.get_or_init(|| {
            let dim = rows[0].x.len();
            let mut xtx = vec![0.0; dim * dim];
            let mut xty = vec![0.0; dim];
            let mut yty = 0.0;
            for r in rows {
                for a in 0..dim {
                    for b in 0..dim {
                        xtx[a * dim + b] += r.x[a] * r.x[b];
                    }
                    xty[a] += r.x[a] * r.y;
                }
                yty += r.y * r.y;
            }
            XyStats { dim, xtx, xty, yty }
        }))
    }

    fn iv_stats(&self) -> Result<IvStats> {
        let rows = match &self.rows {
            Rows::IntervalBounds(r) => r,
            _ => return Err(Error::SchemaMismatch("expected interval-bound rows".into())),
        };
        if rows.is_empty() {
            return Err(Error::SchemaMismatch("empty dataset".into()));
        }
        Ok(*self.iv_stats.get_or_init(|| {
            let n = rows.len() as f64;
            let mut s = IvStats { mean_uy: [0.0; 2], mean_ly: [0.0; 2] };
            for j in 0..2 {
                s.mean_uy[j] = kahan_sum(rows.iter().map(|r| r.u[j] * r.y[j])) / n;
                s.mean_ly[j] = kahan_sum(rows.iter().map(|r| r.l[j] * r.y[j])) / n;
            }
            s
        }))
    }

    fn score_rows(&self) -> Result<&[ScoreRow]> {
        match &self.rows {
            Rows::Score(r) => Ok(r),
            _ => Err(Error::SchemaMismatch("expected (x, z) score rows".into())),
        }
    }
}

// ---------------------------------------------------------------------------
// Data-generating processes

fn rng_for(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Gaussian location/regression rows y = theta0' x + noise with x given by
/// the design sampler; the location case uses x = (1).
pub fn generate_gaussian_location(n: usize, theta0: f64, noise_sd: f64, seed: u64) -> Dataset {
    let mut rng = rng_for(seed);
    let normal = Normal::new(0.0, noise_sd).unwrap();
    let rows = (0..n)
        .map(|_| XyRow { x: vec![1.0], y: theta0 + normal.sample(&mut rng) })
        .collect();
    Dataset::new(seed, format!("gaussian-location(theta0={theta0},sd={noise_sd})"), Rows::Xy(rows))
}

/// Maximum-score rows: x uniform on [-1,1]^2, eps logistic(0,1),
/// y = 1[x1 + theta0*x2 + eps >= 0], stored as z = -(2y - 1).
pub fn generate_score(n: usize, theta0: f64, seed: u64) -> Dataset {
    let mut rng = rng_for(seed);
    let rows = (0..n)
        .map(|_| {
            let x1: f64 = rng.gen_range(-1.0..1.0);
            let x2: f64 = rng.gen_range(-1.0..1.0);
            let mut u: f64 = rng.gen();
            if u <= 0.0 {
                u = f64::MIN_POSITIVE;
            }
            let eps = (u / (1.0 - u)).ln();
            let y = x1 + theta0 * x2 + eps >= 0.0;
            ScoreRow { x: [x1, x2], z: if y { -1.0 } else { 1.0 } }
        })
        .collect();
    Dataset::new(seed, format!("max-score(theta0={theta0})"), Rows::Score(rows))
}

/// Population description for the interval-bound moment scenario.
#[derive(Debug, Clone, Copy)]
pub struct IntervalBoundPopulation {
    /// E L_j Y_j per coordinate.
    pub el: [f64; 2],
    /// E U_j Y_j per coordinate.
    pub eu: [f64; 2],
    /// Sampling spread of L_j.
    pub l_sd: f64,
}

impl Default for IntervalBoundPopulation {
    fn default() -> Self {
        // Identification region [0.3, 0.4] x [-0.2, 0.6].
        IntervalBoundPopulation { el: [0.3, -0.2], eu: [0.4, 0.6], l_sd: 0.05 }
    }
}

impl IntervalBoundPopulation {
    /// Population moments Em(theta) =
    /// (EU1Y1 - th1, EU2Y2 - th2, th1 - EL1Y1, th2 - EL2Y2).
    pub fn moments(&self, theta: &[f64]) -> Vec<f64> {
        vec![
            self.eu[0] - theta[0],
            self.eu[1] - theta[1],
            theta[0] - self.el[0],
            theta[1] - self.el[1],
        ]
    }

    /// Identification region as per-coordinate intervals [EL_j Y_j, EU_j Y_j].
    pub fn region(&self) -> [(f64, f64); 2] {
        [(self.el[0], self.eu[0]), (self.el[1], self.eu[1])]
    }
}

/// Interval-bound rows with Y_j = 1, L_j Gaussian around EL_j, and
/// U_j = L_j + (EU_j - EL_j) so U_j - L_j > 0 almost surely.
pub fn generate_interval_bounds(n: usize, pop: &IntervalBoundPopulation, seed: u64) -> Dataset {
    let mut rng = rng_for(seed);
    let normal = Normal::new(0.0, pop.l_sd).unwrap();
    let rows = (0..n)
        .map(|_| {
            let l0 = pop.el[0] + normal.sample(&mut rng);
            let l1 = pop.el[1] + normal.sample(&mut rng);
            IntervalRow {
                l: [l0, l1],
                u: [l0 + (pop.eu[0] - pop.el[0]), l1 + (pop.eu[1] - pop.el[1])],
                y: [1.0, 1.0],
            }
        })
        .collect();
    Dataset::new(seed, "interval-bounds".into(), Rows::IntervalBounds(rows))
}

// ---------------------------------------------------------------------------
// Risk pairs

/// How the theoretical risk is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TheoreticalTag {
    Analytic,
    MonteCarloOracle { m_oracle: usize },
}

#[derive(Debug, Clone)]
pub struct Penalty {
    pub gamma_pen: f64,
    /// Complexity d_j indexed by model id.
    pub complexity: Vec<u32>,
}

type EmpiricalFn = dyn Fn(usize, &[f64], &Dataset) -> Result<f64> + Send + Sync;
type TheoreticalFn = dyn Fn(usize, &[f64]) -> Result<f64> + Send + Sync;

/// An empirical risk and its deterministic theoretical counterpart.
#[derive(Clone)]
pub struct RiskPair {
    pub tag: String,
    pub theoretical_tag: TheoreticalTag,
    empirical: Arc<EmpiricalFn>,
    theoretical: Arc<TheoreticalFn>,
    pub penalty: Option<Penalty>,
}

impl std::fmt::Debug for RiskPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RiskPair")
            .field("tag", &self.tag)
            .field("theoretical_tag", &self.theoretical_tag)
            .field("penalty", &self.penalty)
            .finish()
    }
}

impl RiskPair {
    pub fn from_fns(
        tag: impl Into<String>,
        theoretical_tag: TheoreticalTag,
        empirical: Arc<EmpiricalFn>,
        theoretical: Arc<TheoreticalFn>,
    ) -> Self {
        RiskPair { tag: tag.into(), theoretical_tag, empirical, theoretical, penalty: None }
    }

    /// A pair whose empirical and theoretical risks are the same
    /// deterministic function; handy for synthetic checks.
    pub fn deterministic<F>(tag: impl Into<String>, f: F) -> Self
    where
        F: Fn(usize, &[f64]) -> f64 + Send + Sync + Clone + 'static,
    {
        let g = f.clone();
        RiskPair::from_fns(
            tag,
            TheoreticalTag::Analytic,
            Arc::new(move |j, t, _| Ok(f(j, t))),
            Arc::new(move |j, t| Ok(g(j, t))),
        )
    }

    fn penalty_term(&self, model_id: usize) -> f64 {
        match &self.penalty {
            Some(p) => p.gamma_pen * f64::from(p.complexity[model_id]),
            None => 0.0,
        }
    }

    /// R_n(j, theta) on the given dataset, penalty included.
    pub fn empirical(&self, model_id: usize, theta: &[f64], dataset: &Dataset) -> Result<f64> {
        Ok((self.empirical)(model_id, theta, dataset)? + self.penalty_term(model_id))
    }

    /// R(j, theta), penalty included.
    pub fn theoretical(&self, model_id: usize, theta: &[f64]) -> Result<f64> {
        Ok((self.theoretical)(model_id, theta)? + self.penalty_term(model_id))
    }
}

/// Adds the complexity term gamma_pen * d_j to both risks of a pair.
pub fn add_penalty(base: &RiskPair, gamma_pen: f64, complexity: Vec<u32>) -> Result<RiskPair> {
    if !(gamma_pen > 0.0) {
        return Err(Error::Invalid(format!("gamma_pen must be positive, got {gamma_pen}")));
    }
    let mut out = base.clone();
    out.tag = format!("{}+penalty({gamma_pen})", base.tag);
    out.penalty = Some(Penalty { gamma_pen, complexity });
    Ok(out)
}

/// max over all grid cells of |R_n - R| (any shared penalty cancels).
pub fn sup_risk_gap(pair: &RiskPair, dataset: &Dataset, space: &ModelSpace) -> Result<f64> {
    let mut sup = 0.0f64;
    for i in 0..space.total_cells() {
        let (j, theta) = space.cell(i);
        let gap = (pair.empirical(j, &theta, dataset)? - pair.theoretical(j, &theta)?).abs();
        sup = sup.max(gap);
    }
    Ok(sup)
}

// ---------------------------------------------------------------------------
// Gaussian negative log-likelihood risk

/// DGP parameters needed for the analytic theoretical Gaussian risk.
#[derive(Debug, Clone)]
pub struct GaussianDgp {
    pub theta0: Vec<f64>,
    pub noise_sd: f64,
    /// E[x x'] of the design, row-major dim x dim.
    pub design_second_moment: Vec<f64>,
}

impl GaussianDgp {
    pub fn location(theta0: f64, noise_sd: f64) -> Self {
        GaussianDgp { theta0: vec![theta0], noise_sd, design_second_moment: vec![1.0] }
    }
}

/// C_n(theta) = (2n sigma^2)^{-1} sum_i (y_i - theta' x_i)^2, paired with its
/// population expectation under the DGP.
pub fn gaussian_nll_risk(sigma: f64, dgp: GaussianDgp) -> Result<RiskPair> {
    if !(sigma > 0.0) {
        return Err(Error::Invalid(format!("sigma must be positive, got {sigma}")));
    }
    let sig2 = sigma * sigma;
    let emp = {
        move |_j: usize, theta: &[f64], ds: &Dataset| -> Result<f64> {
            let st = ds.xy_stats()?;
            if theta.len() != st.dim {
                return Err(Error::SchemaMismatch(format!(
                    "theta dim {} vs design dim {}",
                    theta.len(),
                    st.dim
                )));
            }
            let mut q = st.yty;
            for a in 0..st.dim {
                q -= 2.0 * theta[a] * st.xty[a];
                for b in 0..st.dim {
                    q += theta[a] * st.xtx[a * st.dim + b] * theta[b];
                }
            }
            Ok(q / (2.0 * ds.n as f64 * sig2))
        }
    };
    let theo = {
        let dgp = dgp.clone();
        move |_j: usize, theta: &[f64]| -> Result<f64> {
            let d = dgp.theta0.len();
            if theta.len() != d {
                return Err(Error::SchemaMismatch("theta dimension mismatch".into()));
            }
            let mut q = dgp.noise_sd * dgp.noise_sd;
            for a in 0..d {
                for b in 0..d {
                    q += (theta[a] - dgp.theta0[a])
                        * dgp.design_second_moment[a * d + b]
                        * (theta[b] - dgp.theta0[b]);
                }
            }
            Ok(q / (2.0 * sig2))
        }
    };
    Ok(RiskPair::from_fns(
        format!("gaussian-nll(sigma={sigma})"),
        TheoreticalTag::Analytic,
        Arc::new(emp),
        Arc::new(theo),
    ))
}

// ---------------------------------------------------------------------------
// Moment-inequality projection risk

/// Weight matrix for the moment projection distance.
#[derive(Debug, Clone)]
pub enum VMatrix {
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl VMatrix {
    pub fn identity(dim: usize) -> Self {
        VMatrix::Diagonal(vec![1.0; dim])
    }

    fn dim(&self) -> usize {
        match self {
            VMatrix::Diagonal(d) => d.len(),
            VMatrix::Full(m) => m.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            VMatrix::Diagonal(d) => {
                if d.iter().any(|&v| !(v > 0.0)) {
                    return Err(Error::NotPositiveDefinite);
                }
                Ok(())
            }
            VMatrix::Full(m) => {
                let d = m.len();
                if d > 8 {
                    return Err(Error::Invalid("full V limited to dimension <= 8".into()));
                }
                if m.iter().any(|row| row.len() != d) {
                    return Err(Error::Invalid("V must be square".into()));
                }
                // symmetric PD check through Cholesky
                let flat: Vec<f64> = m.iter().flatten().copied().collect();
                for a in 0..d {
                    for b in 0..d {
                        if (flat[a * d + b] - flat[b * d + a]).abs() > 1e-12 {
                            return Err(Error::Invalid("V must be symmetric".into()));
                        }
                    }
                }
                cholesky(&flat, d).map(|_| ())
            }
        }
    }

    fn inverse(&self) -> Result<Vec<f64>> {
        match self {
            VMatrix::Diagonal(d) => {
                let n = d.len();
                let mut inv = vec![0.0; n * n];
                for (i, &v) in d.iter().enumerate() {
                    inv[i * n + i] = 1.0 / v;
                }
                Ok(inv)
            }
            VMatrix::Full(m) => {
                let d = m.len();
                let flat: Vec<f64> = m.iter().flatten().copied().collect();
                invert_spd(&flat, d)
            }
        }
    }
}

fn cholesky(a: &[f64], d: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::NotPositiveDefinite);
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Ok(l)
}

fn invert_spd(a: &[f64], d: usize) -> Result<Vec<f64>> {
    let l = cholesky(a, d)?;
    let mut inv = vec![0.0; d * d];
    for col in 0..d {
        // forward solve L z = e_col
        let mut z = vec![0.0; d];
        for i in 0..d {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for k in 0..i {
                s -= l[i * d + k] * z[k];
            }
            z[i] = s / l[i * d + i];
        }
        // back solve L' w = z
        let mut w = vec![0.0; d];
        for i in (0..d).rev() {
            let mut s = z[i];
            for k in i + 1..d {
                s -= l[k * d + i] * w[k];
            }
            w[i] = s / l[i * d + i];
        }
        for i in 0..d {
            inv[i * d + col] = w[i];
        }
    }
    Ok(inv)
}

fn solve_dense(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let d = b.len();
    let mut m = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..d {
        let mut piv = col;
        for r in col + 1..d {
            if m[r * d + col].abs() > m[piv * d + col].abs() {
                piv = r;
            }
        }
        if m[piv * d + col].abs() < 1e-14 {
            return Err(Error::Invalid("singular system in projection".into()));
        }
        if piv != col {
            for c in 0..d {
                m.swap(col * d + c, piv * d + c);
            }
            rhs.swap(col, piv);
        }
        for r in col + 1..d {
            let f = m[r * d + col] / m[col * d + col];
            for c in col..d {
                m[r * d + c] -= f * m[col * d + c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let mut s = rhs[i];
        for k in i + 1..d {
            s -= m[i * d + k] * x[k];
        }
        x[i] = s / m[i * d + i];
    }
    Ok(x)
}

/// inf_{psi >= 0} (m - psi)' V^{-1} (m - psi) by primal active set.
///
/// For diagonal V this short-circuits to the closed form
/// sum_i min(m_i, 0)^2 / V_ii.
pub fn project_nonnegative(v: &VMatrix, m_bar: &[f64]) -> Result<f64> {
    v.validate()?;
    if m_bar.len() != v.dim() {
        return Err(Error::Invalid("moment vector dimension mismatch".into()));
    }
    if let VMatrix::Diagonal(diag) = v {
        return Ok(kahan_sum(
            m_bar.iter().zip(diag).map(|(&m, &vi)| {
                let neg = m.min(0.0);
                neg * neg / vi
            }),
        ));
    }
    let d = m_bar.len();
    let h = v.inverse()?;
    let hm: Vec<f64> = (0..d).map(|i| (0..d).map(|k| h[i * d + k] * m_bar[k]).sum()).collect();
    let max_iter = 1usize << d;
    let mut active = vec![false; d];
    for (i, &m) in m_bar.iter().enumerate() {
        active[i] = m < 0.0;
    }
    for _ in 0..max_iter {
        let free: Vec<usize> = (0..d).filter(|&i| !active[i]).collect();
        let mut psi = vec![0.0; d];
        if !free.is_empty() {
            let nf = free.len();
            let mut hff = vec![0.0; nf * nf];
            let mut rhs = vec![0.0; nf];
            for (a, &i) in free.iter().enumerate() {
                rhs[a] = hm[i];
                for (b, &k) in free.iter().enumerate() {
                    hff[a * nf + b] = h[i * d + k];
                }
            }
            let sol = solve_dense(&hff, &rhs)?;
            for (a, &i) in free.iter().enumerate() {
                psi[i] = sol[a];
            }
        }
        // infeasible free coordinate: pin the most negative one
        if let Some((worst, _)) = free
            .iter()
            .map(|&i| (i, psi[i]))
            .filter(|&(_, p)| p < -1e-12)
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        {
            active[worst] = true;
            continue;
        }
        for p in &mut psi {
            *p = p.max(0.0);
        }
        // multipliers on the active set: grad/2 = H(psi - m)
        let grad: Vec<f64> =
            (0..d).map(|i| (0..d).map(|k| h[i * d + k] * (psi[k] - m_bar[k])).sum()).collect();
        if let Some((worst, _)) = (0..d)
            .filter(|&i| active[i])
            .map(|i| (i, grad[i]))
            .filter(|&(_, g)| g < -1e-12)
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        {
            active[worst] = false;
            continue;
        }
        let mut val = 0.0;
        for i in 0..d {
            for k in 0..d {
                val += (m_bar[i] - psi[i]) * h[i * d + k] * (m_bar[k] - psi[k]);
            }
        }
        return Ok(val.max(0.0));
    }
    Err(Error::ProjectionNotConverged(max_iter))
}

/// Sample analogues of the interval-bound moments at theta.
pub fn interval_bound_moments(theta: &[f64], dataset: &Dataset) -> Result<Vec<f64>> {
    if theta.len() != 2 {
        return Err(Error::SchemaMismatch("interval-bound moments need a 2-d theta".into()));
    }
    let st = dataset.iv_stats()?;
    Ok(vec![
        st.mean_uy[0] - theta[0],
        st.mean_uy[1] - theta[1],
        theta[0] - st.mean_ly[0],
        theta[1] - st.mean_ly[1],
    ])
}

/// R_n(theta) = d^2(m_bar(theta), R^+) with sample interval-bound moments;
/// R(theta) the same functional of the population moments.
pub fn moment_inequality_risk(v: VMatrix, pop: IntervalBoundPopulation) -> Result<RiskPair> {
    v.validate()?;
    let v_emp = v.clone();
    let emp = move |_j: usize, theta: &[f64], ds: &Dataset| -> Result<f64> {
        let m = interval_bound_moments(theta, ds)?;
        project_nonnegative(&v_emp, &m)
    };
    let v_theo = v;
    let theo = move |_j: usize, theta: &[f64]| -> Result<f64> {
        project_nonnegative(&v_theo, &pop.moments(theta))
    };
    Ok(RiskPair::from_fns(
        "moment-inequality",
        TheoreticalTag::Analytic,
        Arc::new(emp),
        Arc::new(theo),
    ))
}

// ---------------------------------------------------------------------------
// Discontinuous indicator (maximum score) risk

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Antiderivative of 2F(t) - 1 for the logistic CDF F: 2 ln(1+e^t) - t.
fn score_antiderivative(t: f64) -> f64 {
    2.0 * softplus(t) - t
}

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut s = f(a) + f(b);
    for k in 1..panels {
        let w = if k % 2 == 0 { 2.0 } else { 4.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// Population risk C(theta) = -E[(2y-1) 1(x1 + theta*x2 >= 0)] for the
/// maximum-score DGP, via the closed-form inner integral over x1 and
/// piecewise quadrature over x2 (split at the clamp kinks x2 = +-1/theta).
pub fn indicator_population_risk(theta0: f64, theta: f64) -> f64 {
    let inner = |x2: f64| -> f64 {
        let lo = -theta * x2;
        if lo >= 1.0 {
            return 0.0;
        }
        let lo = lo.max(-1.0);
        score_antiderivative(1.0 + theta0 * x2) - score_antiderivative(lo + theta0 * x2)
    };
    let mut cuts = vec![-1.0, 1.0];
    if theta.abs() > 1.0 {
        for c in [-1.0 / theta, 1.0 / theta] {
            if c > -1.0 && c < 1.0 {
                cuts.push(c);
            }
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut total = 0.0;
    for w in cuts.windows(2) {
        if w[1] > w[0] {
            total += simpson(&inner, w[0], w[1], 512);
        }
    }
    -total / 4.0
}

fn indicator_empirical(theta: &[f64], ds: &Dataset) -> Result<f64> {
    if theta.len() != 1 {
        return Err(Error::SchemaMismatch("indicator risk expects a 1-d theta".into()));
    }
    let rows = ds.score_rows()?;
    let t = theta[0];
    let mut acc = crate::num::Kahan::new();
    for r in rows {
        if r.x[0] + t * r.x[1] >= 0.0 {
            acc.add(r.z);
        }
    }
    Ok(acc.value() / rows.len() as f64)
}

/// Indicator risk with the analytic population counterpart.
pub fn indicator_risk(theta0: f64) -> RiskPair {
    let theo = move |_j: usize, theta: &[f64]| -> Result<f64> {
        if theta.len() != 1 {
            return Err(Error::SchemaMismatch("indicator risk expects a 1-d theta".into()));
        }
        Ok(indicator_population_risk(theta0, theta[0]))
    };
    RiskPair::from_fns(
        format!("indicator(theta0={theta0})"),
        TheoreticalTag::Analytic,
        Arc::new(|_, t, ds| indicator_empirical(t, ds)),
        Arc::new(theo),
    )
}

/// Fixed dedicated seed for Monte Carlo theoretical-risk oracles.
pub const ORACLE_SEED: u64 = 0x0b5e_11ed_0ac1_e5ee;

/// Indicator risk whose theoretical side is a cached Monte Carlo oracle on
/// m_oracle simulated rows with a fixed dedicated seed.
pub fn indicator_risk_mc(theta0: f64, m_oracle: usize) -> RiskPair {
    let oracle = Arc::new(generate_score(m_oracle, theta0, ORACLE_SEED));
    let theo = move |_j: usize, theta: &[f64]| -> Result<f64> {
        indicator_empirical(theta, &oracle)
    };
    RiskPair::from_fns(
        format!("indicator-mc(theta0={theta0},m={m_oracle})"),
        TheoreticalTag::MonteCarloOracle { m_oracle },
        Arc::new(|_, t, ds| indicator_empirical(t, ds)),
        Arc::new(theo),
    )
}
