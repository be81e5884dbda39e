//! Five seeded experiment setups binding a data-generating process, a model
//! space, a risk pair, and an inverse-temperature rule, plus the
//! compatible-model analysis and mixture-true-model regrouping used for
//! partial identification.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{ids, Axis, GridMeasure, Model, ModelSpace, ParameterBox, PriorDensity};
use crate::quasiposterior::{build, QuasiPosterior};
use crate::risks::{
    add_penalty, gaussian_nll_risk, generate_gaussian_location, generate_interval_bounds,
    generate_score, indicator_risk, moment_inequality_risk, Dataset, GaussianDgp,
    IntervalBoundPopulation, RiskPair, VMatrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioId {
    #[serde(rename = "classical-nested")]
    ClassicalNested,
    #[serde(rename = "separated-spaces")]
    SeparatedSpaces,
    #[serde(rename = "penalized-nested")]
    PenalizedNested,
    #[serde(rename = "cubic-root")]
    CubicRoot,
    #[serde(rename = "partial-id")]
    PartialId,
}

impl ScenarioId {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "classical-nested" => Ok(ScenarioId::ClassicalNested),
            "separated-spaces" => Ok(ScenarioId::SeparatedSpaces),
            "penalized-nested" => Ok(ScenarioId::PenalizedNested),
            "cubic-root" => Ok(ScenarioId::CubicRoot),
            "partial-id" => Ok(ScenarioId::PartialId),
            other => Err(Error::UnknownScenario(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::ClassicalNested => "classical-nested",
            ScenarioId::SeparatedSpaces => "separated-spaces",
            ScenarioId::PenalizedNested => "penalized-nested",
            ScenarioId::CubicRoot => "cubic-root",
            ScenarioId::PartialId => "partial-id",
        }
    }

    pub fn all() -> [ScenarioId; 5] {
        [
            ScenarioId::ClassicalNested,
            ScenarioId::SeparatedSpaces,
            ScenarioId::PenalizedNested,
            ScenarioId::CubicRoot,
            ScenarioId::PartialId,
        ]
    }

    pub fn default_lambda_rule(self) -> &'static str {
        match self {
            ScenarioId::CubicRoot => "sqrt(n)",
            ScenarioId::PartialId => "0.5*n",
            _ => "n",
        }
    }
}

fn default_resolution() -> usize {
    64
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario_id: ScenarioId,
    pub n: usize,
    /// Inverse-temperature rule over n: "n", "0.5*n", "sqrt(n)", "n^0.6",
    /// "2*n^0.75", or a bare positive constant. Scenario default when absent.
    #[serde(default)]
    pub lambda_rule: Option<String>,
    pub seed: u64,
    #[serde(default = "default_resolution")]
    pub grid_resolution: usize,
    /// Numeric knobs: theta0, noise_sd, gamma_pen, tol_compat.
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
}

impl ScenarioConfig {
    pub fn new(scenario_id: ScenarioId, n: usize, seed: u64) -> Self {
        ScenarioConfig {
            scenario_id,
            n,
            lambda_rule: None,
            seed,
            grid_resolution: 64,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_override(mut self, key: &str, value: f64) -> Self {
        self.overrides.insert(key.to_string(), value);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::Invalid(format!("n must be >= 10, got {}", self.n)));
        }
        if self.grid_resolution < 8 {
            return Err(Error::Invalid(format!(
                "grid_resolution must be >= 8, got {}",
                self.grid_resolution
            )));
        }
        const KNOWN: [&str; 4] = ["theta0", "noise_sd", "gamma_pen", "tol_compat"];
        for k in self.overrides.keys() {
            if !KNOWN.contains(&k.as_str()) {
                return Err(Error::Invalid(format!("unknown override key: {k}")));
            }
        }
        Ok(())
    }

    fn get(&self, key: &str, default: f64) -> f64 {
        self.overrides.get(key).copied().unwrap_or(default)
    }

    pub fn lambda(&self) -> Result<f64> {
        let rule = self
            .lambda_rule
            .as_deref()
            .unwrap_or_else(|| self.scenario_id.default_lambda_rule());
        let lam = eval_lambda_rule(rule, self.n)?;
        if !(lam > 0.0) || !lam.is_finite() {
            return Err(Error::Invalid(format!(
                "lambda rule {rule:?} evaluates to {lam} at n = {}",
                self.n
            )));
        }
        Ok(lam)
    }
}

/// Evaluates "a*n^b" style rules: "n", "sqrt(n)", "0.5*n", "n^0.6",
/// "2*n^0.75", or a bare constant.
pub fn eval_lambda_rule(rule: &str, n: usize) -> Result<f64> {
    let s: String = rule.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || Error::Invalid(format!("cannot parse lambda rule {rule:?}"));
    let (coef, rest) = match s.split_once('*') {
        Some((a, rest)) => (a.parse::<f64>().map_err(|_| bad())?, rest.to_string()),
        None => (1.0, s),
    };
    let nf = n as f64;
    let base = if rest == "n" {
        nf
    } else if rest == "sqrt(n)" {
        nf.sqrt()
    } else if let Some(exp) = rest.strip_prefix("n^") {
        nf.powf(exp.parse::<f64>().map_err(|_| bad())?)
    } else if rest.is_empty() {
        1.0
    } else {
        rest.parse::<f64>().map_err(|_| bad())?
    };
    Ok(coef * base)
}

/// A fully bound scenario: everything needed to construct the
/// quasi-posterior.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub cfg: ScenarioConfig,
    pub space: Arc<ModelSpace>,
    pub pair: RiskPair,
    pub dataset: Dataset,
    pub lambda: f64,
}

impl Experiment {
    pub fn posterior(&self) -> Result<QuasiPosterior> {
        build(self.space.clone(), &self.pair, self.lambda, &self.dataset)
    }
}

fn interval(lo: f64, hi: f64, cells: usize) -> Axis {
    Axis::Interval { lo, hi, cells }
}

fn model(id: usize, axes: Vec<Axis>, weight: f64) -> Result<Model> {
    Ok(Model {
        id,
        domain: ParameterBox::new(axes)?,
        prior_weight: weight,
        prior: PriorDensity::Uniform,
    })
}

/// Deterministic construction of a scenario from its config.
pub fn make_scenario(cfg: &ScenarioConfig) -> Result<Experiment> {
    cfg.validate()?;
    let res = cfg.grid_resolution;
    let lambda = cfg.lambda()?;
    let noise_sd = cfg.get("noise_sd", 1.0);
    let (space, pair, dataset) = match cfg.scenario_id {
        ScenarioId::ClassicalNested => {
            let theta0 = cfg.get("theta0", 0.4);
            let truth = if theta0 == 0.0 { ids([0]) } else { ids([1]) };
            let space = ModelSpace::new(
                vec![
                    model(0, vec![Axis::Pinned(0.0)], 0.5)?,
                    model(1, vec![interval(-1.0, 1.0, res)], 0.5)?,
                ],
                truth,
            )?;
            let pair = gaussian_nll_risk(noise_sd, GaussianDgp::location(theta0, noise_sd))?;
            let ds = generate_gaussian_location(cfg.n, theta0, noise_sd, cfg.seed);
            (space, pair, ds)
        }
        ScenarioId::SeparatedSpaces => {
            let theta0 = cfg.get("theta0", -0.5);
            let space = ModelSpace::new(
                vec![
                    model(0, vec![interval(-1.0, -0.25, res)], 0.5)?,
                    model(1, vec![interval(0.25, 1.0, res)], 0.5)?,
                ],
                ids([0]),
            )?;
            let pair = gaussian_nll_risk(noise_sd, GaussianDgp::location(theta0, noise_sd))?;
            let ds = generate_gaussian_location(cfg.n, theta0, noise_sd, cfg.seed);
            (space, pair, ds)
        }
        ScenarioId::PenalizedNested => {
            let theta0 = cfg.get("theta0", 0.0);
            let gamma_pen = cfg.get("gamma_pen", 0.1);
            let space = ModelSpace::new(
                vec![
                    model(0, vec![Axis::Pinned(0.0)], 0.5)?,
                    model(1, vec![interval(-1.0, 1.0, res)], 0.5)?,
                ],
                ids([0]),
            )?;
            let base = gaussian_nll_risk(noise_sd, GaussianDgp::location(theta0, noise_sd))?;
            let pair = add_penalty(&base, gamma_pen, vec![0, 1])?;
            let ds = generate_gaussian_location(cfg.n, theta0, noise_sd, cfg.seed);
            (space, pair, ds)
        }
        ScenarioId::CubicRoot => {
            let theta0 = cfg.get("theta0", 0.5);
            let space = ModelSpace::new(
                vec![
                    model(0, vec![Axis::Pinned(-0.5)], 0.5)?,
                    model(1, vec![interval(-1.0, 2.0, res)], 0.5)?,
                ],
                ids([1]),
            )?;
            let pair = indicator_risk(theta0);
            let ds = generate_score(cfg.n, theta0, cfg.seed);
            (space, pair, ds)
        }
        ScenarioId::PartialId => {
            let space = partial_id_space(res)?;
            let pop = IntervalBoundPopulation::default();
            let pair = moment_inequality_risk(VMatrix::identity(4), pop)?;
            let ds = generate_interval_bounds(cfg.n, &pop, cfg.seed);
            (space, pair, ds)
        }
    };
    Ok(Experiment { cfg: cfg.clone(), space: Arc::new(space), pair, dataset, lambda })
}

/// The three partial-identification candidate spaces:
/// Theta_1 = {0} x [-1,1], Theta_2 = [-1,1]^2, Theta_3 = [-1,1] x {0}.
/// The full model Theta_2 is the initial designated truth.
fn partial_id_space(res: usize) -> Result<ModelSpace> {
    ModelSpace::new(
        vec![
            model(0, vec![Axis::Pinned(0.0), interval(-1.0, 1.0, res)], 1.0)?,
            model(1, vec![interval(-1.0, 1.0, res), interval(-1.0, 1.0, res)], 1.0)?,
            model(2, vec![interval(-1.0, 1.0, res), Axis::Pinned(0.0)], 1.0)?,
        ],
        ids([1]),
    )
}

/// Default compatibility tolerance: exact-zero infima are only approximate
/// on a grid with estimated moments.
pub const TOL_COMPAT_ANALYTIC: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct ModelCompatibility {
    pub model_id: usize,
    pub inf_theoretical_risk: f64,
    pub compatible: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompatibilityReport {
    pub per_model: Vec<ModelCompatibility>,
    /// II: models whose theoretical risk reaches 0 (within tolerance).
    pub compatible_set: BTreeSet<usize>,
    /// g: minimum inf R over incompatible models; None when every model is
    /// compatible.
    pub incompatible_gap: Option<f64>,
}

/// Cells of `domain` whose theoretical risk is at most tol_compat; local
/// cell indices in row-major order.
pub fn identification_region(
    pair: &RiskPair,
    model_id: usize,
    domain: &ParameterBox,
    tol_compat: f64,
) -> Result<BTreeSet<usize>> {
    let mut cells = BTreeSet::new();
    for i in 0..domain.cell_count() {
        if pair.theoretical(model_id, &domain.cell_center(i))? <= tol_compat {
            cells.insert(i);
        }
    }
    Ok(cells)
}

/// |A intersect B| / |A union B|; 1 when both are empty.
pub fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Classifies each model by whether its theoretical risk reaches zero.
pub fn compatibility_analysis(
    pair: &RiskPair,
    space: &ModelSpace,
    tol_compat: f64,
) -> Result<CompatibilityReport> {
    let mut per_model = Vec::with_capacity(space.n_models());
    let mut compatible_set = BTreeSet::new();
    let mut g = f64::INFINITY;
    for m in space.models() {
        let inf = space
            .cell_range(m.id)
            .map(|i| {
                let (j, theta) = space.cell(i);
                pair.theoretical(j, &theta)
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        let compatible = inf <= tol_compat;
        if compatible {
            compatible_set.insert(m.id);
        } else {
            g = g.min(inf);
        }
        per_model.push(ModelCompatibility {
            model_id: m.id,
            inf_theoretical_risk: inf,
            compatible,
        });
    }
    let incompatible_gap = if g.is_finite() { Some(g) } else { None };
    Ok(CompatibilityReport { per_model, compatible_set, incompatible_gap })
}

/// Redesignates the true model as the mixture over all compatible models:
/// true_model_ids becomes II, priors untouched (conditioning on the union
/// already weights the members by their prior masses).
pub fn regroup_mixture_true_model(
    space: &ModelSpace,
    report: &CompatibilityReport,
) -> Result<ModelSpace> {
    if report.compatible_set.is_empty() {
        return Err(Error::EmptyCompatibleSet);
    }
    space.with_true_ids(report.compatible_set.clone())
}

/// Predicted large-n limit of the quasi-posterior: the prior over the
/// compatible models truncated to the identification region and
/// renormalized.
pub fn limiting_posterior_target<F>(space: &Arc<ModelSpace>, in_region: F) -> Result<GridMeasure>
where
    F: Fn(&[f64]) -> bool,
{
    let true_ids = space.true_model_ids();
    let weights: Vec<f64> = (0..space.total_cells())
        .map(|i| {
            let (j, theta) = space.cell(i);
            if true_ids.contains(&j) && in_region(&theta) {
                space.log_prior_cell_mass(i).exp()
            } else {
                0.0
            }
        })
        .collect();
    GridMeasure::from_weights(space.clone(), weights)?.normalize()
}

/// Membership test for the analytic identification region
/// [0.3, 0.4] x [-0.2, 0.6].
pub fn default_region_membership() -> impl Fn(&[f64]) -> bool {
    let region = IntervalBoundPopulation::default().region();
    move |theta: &[f64]| {
        theta.len() == 2
            && (0..2).all(|k| region[k].0 <= theta[k] && theta[k] <= region[k].1)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleReport {
    /// MAP model under penalized selection; expected: the simplest
    /// compatible model Theta_3 (id 2).
    pub penalized_map: usize,
    /// A point of the identification region the selected model cannot
    /// represent.
    pub misses_truth_at: Vec<f64>,
    pub truth_in_region: bool,
    pub truth_in_selected_model: bool,
}

/// Penalized model selection on the partial-identification scenario: the
/// penalty drives the MAP to the simplest compatible model, whose pinned
/// second coordinate misses identified points like (0.35, 0.5).
pub fn counterexample_run(cfg: &ScenarioConfig) -> Result<CounterexampleReport> {
    if cfg.scenario_id != ScenarioId::PartialId {
        return Err(Error::Invalid(
            "counterexample_run requires the partial-id scenario".into(),
        ));
    }
    let exp = make_scenario(cfg)?;
    let gamma_pen = cfg.get("gamma_pen", 0.15);
    let penalized = add_penalty(&exp.pair, gamma_pen, vec![1, 2, 1])?;
    let tol = cfg.get("tol_compat", TOL_COMPAT_ANALYTIC);
    let compat = compatibility_analysis(&exp.pair, &exp.space, tol)?;
    let regrouped = Arc::new(regroup_mixture_true_model(&exp.space, &compat)?);
    let qp = build(regrouped.clone(), &penalized, exp.lambda, &exp.dataset)?;
    let map = qp.map_model();
    let truth = vec![0.35, 0.5];
    let in_region = default_region_membership()(&truth);
    let in_model = regrouped.model(map).domain.contains(&truth);
    Ok(CounterexampleReport {
        penalized_map: map,
        misses_truth_at: truth,
        truth_in_region: in_region,
        truth_in_selected_model: in_model,
    })
}
