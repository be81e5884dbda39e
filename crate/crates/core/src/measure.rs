//! Discretized probability measures over a finite union of parameter boxes.
//!
//! A model space is a finite list of models, each restricting the parameter
//! to a rectangular box; boxes are discretized into cells and measures are
//! vectors of nonnegative cell weights in a canonical order (model-major,
//! then row-major over the interval axes). Densities are evaluated at cell
//! centers and multiplied by cell volume, so every identity checked here
//! (conditioning, total variation, mixing, moments) is exact at the discrete
//! level; discretization error enters only through how faithfully a grid
//! represents a continuous scenario.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{kahan_sum, log_sum_exp, Kahan};

/// Default upper bound on the total number of grid cells in a model space.
pub const DEFAULT_CELL_BUDGET: usize = 1_000_000;

/// Tolerance within which a normalized measure's weights must sum to 1.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Weights below this are flushed to exact zero during normalization.
const WEIGHT_FLUSH: f64 = 1e-300;

/// One axis of a parameter box: a discretized interval or a pinned point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Axis {
    Interval { lo: f64, hi: f64, cells: usize },
    Pinned(f64),
}

impl Axis {
    fn validate(&self) -> Result<()> {
        match *self {
            Axis::Interval { lo, hi, cells } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::Invalid(format!(
                        "interval axis needs finite lo <= hi, got [{lo}, {hi}]"
                    )));
                }
                if cells == 0 {
                    return Err(Error::Invalid("interval axis needs cells >= 1".into()));
                }
                Ok(())
            }
            Axis::Pinned(v) if v.is_finite() => Ok(()),
            Axis::Pinned(v) => Err(Error::Invalid(format!("pinned axis value {v} not finite"))),
        }
    }

    fn cell_count(&self) -> usize {
        match *self {
            // A zero-width interval is a point no matter how many cells were
            // requested.
            Axis::Interval { lo, hi, cells } if hi > lo => cells,
            _ => 1,
        }
    }

    fn is_free(&self) -> bool {
        matches!(*self, Axis::Interval { lo, hi, .. } if hi > lo)
    }

    fn center(&self, i: usize) -> f64 {
        match *self {
            Axis::Interval { lo, hi, .. } if hi > lo => {
                let m = self.cell_count() as f64;
                lo + (i as f64 + 0.5) * (hi - lo) / m
            }
            Axis::Interval { lo, .. } => lo,
            Axis::Pinned(v) => v,
        }
    }

    fn contains(&self, x: f64) -> bool {
        match *self {
            Axis::Interval { lo, hi, .. } => lo <= x && x <= hi,
            Axis::Pinned(v) => x == v,
        }
    }
}

/// A rectangular parameter box with per-axis discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    axes: Vec<Axis>,
}

impl ParameterBox {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Invalid("parameter box needs at least one axis".into()));
        }
        for ax in &axes {
            ax.validate()?;
        }
        Ok(Self { axes })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    /// Number of coordinates, pinned axes included.
    pub fn ambient_dim(&self) -> usize {
        self.axes.len()
    }

    /// Number of free (positive-width interval) axes; the model dimension
    /// d_j used by complexity penalties and the BIC display.
    pub fn free_dim(&self) -> usize {
        self.axes.iter().filter(|a| a.is_free()).count()
    }

    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(Axis::cell_count).product()
    }

    /// Center coordinates of a local cell, row-major over the axes.
    pub fn cell_center(&self, local: usize) -> Vec<f64> {
        let mut idx = local;
        let mut strides = vec![1usize; self.axes.len()];
        for k in (0..self.axes.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.axes[k + 1].cell_count();
        }
        self.axes
            .iter()
            .zip(strides)
            .map(|(ax, s)| {
                let i = idx / s;
                idx %= s;
                ax.center(i)
            })
            .collect()
    }

    /// Local cell index containing a point, or None if outside the box.
    pub fn locate(&self, point: &[f64]) -> Option<usize> {
        if point.len() != self.axes.len() {
            return None;
        }
        let mut local = 0usize;
        for (ax, &x) in self.axes.iter().zip(point) {
            if !ax.contains(x) {
                return None;
            }
            let m = ax.cell_count();
            let i = match *ax {
                Axis::Interval { lo, hi, .. } if hi > lo => {
                    (((x - lo) / (hi - lo) * m as f64) as usize).min(m - 1)
                }
                _ => 0,
            };
            local = local * m + i;
        }
        Some(local)
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.axes.len()
            && self.axes.iter().zip(point).all(|(ax, &x)| ax.contains(x))
    }

    /// Euclidean minimal set distance to another box of the same ambient
    /// dimension.
    pub fn set_distance(&self, other: &ParameterBox) -> Result<f64> {
        if self.ambient_dim() != other.ambient_dim() {
            return Err(Error::DimensionMismatch);
        }
        let mut s = 0.0;
        for (a, b) in self.axes.iter().zip(&other.axes) {
            let (alo, ahi) = axis_range(a);
            let (blo, bhi) = axis_range(b);
            let gap = (blo - ahi).max(alo - bhi).max(0.0);
            s += gap * gap;
        }
        Ok(s.sqrt())
    }
}

fn axis_range(ax: &Axis) -> (f64, f64) {
    match *ax {
        Axis::Interval { lo, hi, .. } => (lo, hi),
        Axis::Pinned(v) => (v, v),
    }
}

/// Within-model prior density descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriorDensity {
    /// Uniform over the box; every cell gets mass 1/cell_count.
    Uniform,
}

impl PriorDensity {
    fn log_cell_mass(&self, domain: &ParameterBox, _local: usize) -> f64 {
        match self {
            PriorDensity::Uniform => -(domain.cell_count() as f64).ln(),
        }
    }
}

/// One candidate model: a box, a prior weight, and a within-model prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub id: usize,
    pub domain: ParameterBox,
    pub prior_weight: f64,
    pub prior: PriorDensity,
}

/// Finite model space with a designated (possibly mixture) true-model set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpace {
    models: Vec<Model>,
    true_model_ids: BTreeSet<usize>,
    #[serde(skip)]
    offsets: Vec<usize>,
    #[serde(skip)]
    total_cells: usize,
}

impl ModelSpace {
    pub fn new(models: Vec<Model>, true_model_ids: BTreeSet<usize>) -> Result<Self> {
        Self::with_budget(models, true_model_ids, DEFAULT_CELL_BUDGET)
    }

    pub fn with_budget(
        mut models: Vec<Model>,
        true_model_ids: BTreeSet<usize>,
        budget: usize,
    ) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::Invalid("model space needs at least one model".into()));
        }
        for (k, m) in models.iter().enumerate() {
            if m.id != k {
                return Err(Error::Invalid(format!(
                    "model ids must be contiguous from 0; slot {k} has id {}",
                    m.id
                )));
            }
            if !(m.prior_weight >= 0.0 && m.prior_weight.is_finite()) {
                return Err(Error::Invalid(format!(
                    "model {} has invalid prior weight {}",
                    m.id, m.prior_weight
                )));
            }
        }
        let total_weight = kahan_sum(models.iter().map(|m| m.prior_weight));
        if total_weight <= 0.0 {
            return Err(Error::ZeroMass(" (prior weights)".into()));
        }
        for m in &mut models {
            m.prior_weight /= total_weight;
        }
        if true_model_ids.is_empty() {
            return Err(Error::Invalid("true_model_ids must be nonempty".into()));
        }
        if let Some(&bad) = true_model_ids.iter().find(|&&id| id >= models.len()) {
            return Err(Error::Invalid(format!("true model id {bad} out of range")));
        }
        let mut offsets = Vec::with_capacity(models.len() + 1);
        let mut total = 0usize;
        offsets.push(0);
        for m in &models {
            total = total
                .checked_add(m.domain.cell_count())
                .ok_or(Error::BudgetExceeded { got: usize::MAX, budget })?;
            offsets.push(total);
        }
        if total > budget {
            return Err(Error::BudgetExceeded { got: total, budget });
        }
        Ok(Self { models, true_model_ids, offsets, total_cells: total })
    }

    pub fn models(&self) -> &[Model] {
        &self.models
    }

    pub fn model(&self, id: usize) -> &Model {
        &self.models[id]
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn true_model_ids(&self) -> &BTreeSet<usize> {
        &self.true_model_ids
    }

    /// Same models and grid, different true-model designation.
    pub fn with_true_ids(&self, true_model_ids: BTreeSet<usize>) -> Result<ModelSpace> {
        let mut out = self.clone();
        if true_model_ids.is_empty() {
            return Err(Error::Invalid("true_model_ids must be nonempty".into()));
        }
        if let Some(&bad) = true_model_ids.iter().find(|&&id| id >= self.models.len()) {
            return Err(Error::Invalid(format!("true model id {bad} out of range")));
        }
        out.true_model_ids = true_model_ids;
        Ok(out)
    }

    pub fn total_cells(&self) -> usize {
        self.total_cells
    }

    /// Global index range of a model's cells in the canonical order.
    pub fn cell_range(&self, model_id: usize) -> std::ops::Range<usize> {
        self.offsets[model_id]..self.offsets[model_id + 1]
    }

    /// Model owning a global cell index.
    pub fn model_of(&self, global: usize) -> usize {
        debug_assert!(global < self.total_cells);
        match self.offsets.binary_search(&global) {
            Ok(k) if k < self.models.len() => k,
            Ok(k) => k - 1,
            Err(k) => k - 1,
        }
    }

    /// (model_id, cell-center coordinates) for a global cell index.
    pub fn cell(&self, global: usize) -> (usize, Vec<f64>) {
        let j = self.model_of(global);
        let local = global - self.offsets[j];
        (j, self.models[j].domain.cell_center(local))
    }

    /// Shared ambient parameter dimension, or an error if models disagree.
    pub fn ambient_dim(&self) -> Result<usize> {
        let d = self.models[0].domain.ambient_dim();
        if self.models.iter().any(|m| m.domain.ambient_dim() != d) {
            return Err(Error::DimensionMismatch);
        }
        Ok(d)
    }

    /// Largest free dimension over the candidate models.
    pub fn max_free_dim(&self) -> usize {
        self.models.iter().map(|m| m.domain.free_dim()).max().unwrap_or(0)
    }

    /// Log prior mass of a global cell: ln kappa_j + ln nu(cell | j).
    pub fn log_prior_cell_mass(&self, global: usize) -> f64 {
        let j = self.model_of(global);
        let local = global - self.offsets[j];
        let m = &self.models[j];
        if m.prior_weight == 0.0 {
            f64::NEG_INFINITY
        } else {
            m.prior_weight.ln() + m.prior.log_cell_mass(&m.domain, local)
        }
    }
}

/// Convenience: build a set of model ids.
pub fn ids<const N: usize>(xs: [usize; N]) -> BTreeSet<usize> {
    xs.into_iter().collect()
}

/// A normalized (or raw) weight vector over the cells of a model space.
#[derive(Debug, Clone)]
pub struct GridMeasure {
    space: Arc<ModelSpace>,
    weights: Vec<f64>,
    normalized: bool,
}

impl GridMeasure {
    /// Raw (unnormalized) measure from nonnegative weights.
    pub fn from_weights(space: Arc<ModelSpace>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != space.total_cells() {
            return Err(Error::SupportMismatch);
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Invalid("weights must be nonnegative and finite".into()));
        }
        Ok(Self { space, weights, normalized: false })
    }

    /// Normalized measure from log weights, with max subtraction so that
    /// e^{-lambda R} style builds cannot underflow en masse.
    pub fn from_log_weights(space: Arc<ModelSpace>, log_weights: &[f64]) -> Result<Self> {
        if log_weights.len() != space.total_cells() {
            return Err(Error::SupportMismatch);
        }
        if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::Invalid("log weights must be finite or -inf".into()));
        }
        let lse = log_sum_exp(log_weights);
        if !lse.is_finite() {
            let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            return Err(Error::ZeroMass(format!(" (max log-weight {max})")));
        }
        let weights: Vec<f64> = log_weights.iter().map(|&lw| (lw - lse).exp()).collect();
        Self { space, weights, normalized: false }.normalize()
    }

    /// The normalized prior measure kappa on the space.
    pub fn prior(space: &Arc<ModelSpace>) -> GridMeasure {
        let logw: Vec<f64> =
            (0..space.total_cells()).map(|i| space.log_prior_cell_mass(i)).collect();
        // Prior weights were validated at space construction; this cannot
        // have zero mass.
        Self::from_log_weights(Arc::clone(space), &logw).expect("prior has positive mass")
    }

    pub fn space(&self) -> &Arc<ModelSpace> {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Rescale weights to total mass 1, flushing subnormal-scale weights.
    pub fn normalize(&self) -> Result<GridMeasure> {
        let total = kahan_sum(self.weights.iter().copied());
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::ZeroMass(format!(" (total {total})")));
        }
        let mut weights: Vec<f64> = self
            .weights
            .iter()
            .map(|&w| {
                let v = w / total;
                if v < WEIGHT_FLUSH {
                    0.0
                } else {
                    v
                }
            })
            .collect();
        // One corrective pass keeps the sum within the normalization
        // tolerance after flushing.
        let again = kahan_sum(weights.iter().copied());
        if (again - 1.0).abs() > NORMALIZATION_TOL {
            for w in &mut weights {
                *w /= again;
            }
        }
        Ok(GridMeasure { space: Arc::clone(&self.space), weights, normalized: true })
    }

    fn require_normalized(&self) -> Result<()> {
        if self.normalized {
            Ok(())
        } else {
            Err(Error::Invalid("measure must be normalized first".into()))
        }
    }

    /// pi(. | M in ids): weights outside the listed models zeroed and the
    /// rest renormalized.
    pub fn condition_on_models(&self, model_ids: &BTreeSet<usize>) -> Result<GridMeasure> {
        self.require_normalized()?;
        let mut weights = vec![0.0; self.weights.len()];
        for &j in model_ids {
            if j >= self.space.n_models() {
                return Err(Error::Invalid(format!("model id {j} out of range")));
            }
            let r = self.space.cell_range(j);
            weights[r.clone()].copy_from_slice(&self.weights[r]);
        }
        GridMeasure { space: Arc::clone(&self.space), weights, normalized: false }.normalize()
    }

    /// Total mass carried by the listed models.
    pub fn model_mass(&self, model_ids: &BTreeSet<usize>) -> f64 {
        let mut acc = Kahan::new();
        for &j in model_ids {
            for i in self.space.cell_range(j) {
                acc.add(self.weights[i]);
            }
        }
        acc.value()
    }

    /// Per-model masses in id order.
    pub fn model_masses(&self) -> Vec<f64> {
        (0..self.space.n_models())
            .map(|j| kahan_sum(self.space.cell_range(j).map(|i| self.weights[i])))
            .collect()
    }

    /// Mass of the complement of the listed models.
    pub fn complement_mass(&self, model_ids: &BTreeSet<usize>) -> f64 {
        let others: BTreeSet<usize> =
            (0..self.space.n_models()).filter(|j| !model_ids.contains(j)).collect();
        self.model_mass(&others)
    }

    /// Total variation distance: half the L1 distance between cell weights,
    /// which equals the sup over unions of grid cells.
    pub fn tv_distance(&self, other: &GridMeasure) -> Result<f64> {
        self.require_normalized()?;
        other.require_normalized()?;
        if !Arc::ptr_eq(&self.space, &other.space) && *self.space != *other.space {
            return Err(Error::SupportMismatch);
        }
        let mut acc = Kahan::new();
        for (p, q) in self.weights.iter().zip(&other.weights) {
            acc.add((p - q).abs());
        }
        Ok(0.5 * acc.value())
    }

    /// Weighted average of cell-center coordinates.
    pub fn mean(&self) -> Result<Vec<f64>> {
        self.require_normalized()?;
        let d = self.space.ambient_dim()?;
        let mut acc = vec![Kahan::new(); d];
        for i in 0..self.weights.len() {
            let w = self.weights[i];
            if w == 0.0 {
                continue;
            }
            let (_, theta) = self.space.cell(i);
            for (k, a) in acc.iter_mut().enumerate() {
                a.add(w * theta[k]);
            }
        }
        Ok(acc.into_iter().map(|a| a.value()).collect())
    }

    /// Expectation of a cell-indexed function h(model_id, theta).
    pub fn expectation<F>(&self, h: F) -> Result<f64>
    where
        F: Fn(usize, &[f64]) -> f64,
    {
        self.require_normalized()?;
        let mut acc = Kahan::new();
        for i in 0..self.weights.len() {
            let w = self.weights[i];
            if w == 0.0 {
                continue;
            }
            let (j, theta) = self.space.cell(i);
            acc.add(w * h(j, &theta));
        }
        let v = acc.value();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite)
        }
    }

    /// Mixture c*self + (1-c)*other on the same support.
    pub fn mix(&self, other: &GridMeasure, c: f64) -> Result<GridMeasure> {
        self.require_normalized()?;
        other.require_normalized()?;
        if *self.space != *other.space {
            return Err(Error::SupportMismatch);
        }
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::Invalid(format!("mixture weight {c} outside [0,1]")));
        }
        let weights =
            self.weights.iter().zip(&other.weights).map(|(p, q)| c * p + (1.0 - c) * q).collect();
        GridMeasure { space: Arc::clone(&self.space), weights, normalized: false }.normalize()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn point_space(n_models: usize, cells_each: usize) -> Arc<ModelSpace> {
        let models = (0..n_models)
            .map(|id| Model {
                id,
                domain: ParameterBox::new(vec![Axis::Interval {
                    lo: -1.0,
                    hi: 1.0,
                    cells: cells_each,
                }])
                .unwrap(),
                prior_weight: 1.0,
                prior: PriorDensity::Uniform,
            })
            .collect();
        Arc::new(ModelSpace::new(models, ids([0])).unwrap())
    }

    fn measure(space: &Arc<ModelSpace>, w: &[f64]) -> GridMeasure {
        GridMeasure::from_weights(Arc::clone(space), w.to_vec()).unwrap().normalize().unwrap()
    }

    #[test]
    fn normalize_preserves_ratios() {
        let s = point_space(1, 2);
        let m = measure(&s, &[2.0, 2.0]);
        assert_eq!(m.weights(), &[0.5, 0.5]);
        let s3 = point_space(1, 3);
        let m = measure(&s3, &[1.0, 0.0, 3.0]);
        assert_eq!(m.weights(), &[0.25, 0.0, 0.75]);
    }

    #[test]
    fn normalize_zero_mass_errors() {
        let s = point_space(1, 2);
        let raw = GridMeasure::from_weights(Arc::clone(&s), vec![0.0, 0.0]).unwrap();
        assert!(matches!(raw.normalize(), Err(Error::ZeroMass(_))));
    }

    #[test]
    fn condition_zeroes_and_renormalizes() {
        let s = point_space(2, 1);
        let m = measure(&s, &[0.9, 0.1]);
        let c = m.condition_on_models(&ids([0])).unwrap();
        assert_eq!(c.weights(), &[1.0, 0.0]);
        // conditioning on everything is the identity
        let all = m.condition_on_models(&ids([0, 1])).unwrap();
        assert!(m.tv_distance(&all).unwrap() < 1e-15);
        // three models, keep {1,2}
        let s3 = point_space(3, 1);
        let m3 = measure(&s3, &[0.7, 0.2, 0.1]);
        let c3 = m3.condition_on_models(&ids([1, 2])).unwrap();
        assert!((c3.weights()[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((c3.weights()[2] - 1.0 / 3.0).abs() < 1e-15);
        // conditioning on a zero-mass model errors
        assert!(matches!(
            measure(&s3, &[1.0, 1.0, 0.0]).condition_on_models(&ids([2])),
            Err(Error::ZeroMass(_))
        ));
    }

    #[test]
    fn model_mass_examples() {
        let s = point_space(2, 4);
        let m = GridMeasure::prior(&s);
        assert!((m.model_mass(&ids([0])) - 0.5).abs() < 1e-15);
        assert!((m.model_mass(&ids([0, 1])) - 1.0).abs() < 1e-15);
        let m = measure(&point_space(2, 1), &[0.9, 0.1]);
        assert!((m.model_mass(&ids([1])) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn tv_examples() {
        let s = point_space(1, 2);
        let p = measure(&s, &[0.7, 0.3]);
        let q = measure(&s, &[0.5, 0.5]);
        assert!((p.tv_distance(&q).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(p.tv_distance(&p).unwrap(), 0.0);
        let a = measure(&s, &[1.0, 0.0]);
        let b = measure(&s, &[0.0, 1.0]);
        assert_eq!(a.tv_distance(&b).unwrap(), 1.0);
        // different support errors
        let other = point_space(1, 3);
        let r = GridMeasure::prior(&other);
        assert!(matches!(p.tv_distance(&r), Err(Error::SupportMismatch)));
    }

    #[test]
    fn mean_examples() {
        // point mass at (0.3, 0.5)
        let b = ParameterBox::new(vec![Axis::Pinned(0.3), Axis::Pinned(0.5)]).unwrap();
        let s = Arc::new(
            ModelSpace::new(
                vec![Model { id: 0, domain: b, prior_weight: 1.0, prior: PriorDensity::Uniform }],
                ids([0]),
            )
            .unwrap(),
        );
        assert_eq!(GridMeasure::prior(&s).mean().unwrap(), vec![0.3, 0.5]);

        // uniform on symmetric box, even cell counts
        let b = ParameterBox::new(vec![
            Axis::Interval { lo: -1.0, hi: 1.0, cells: 8 },
            Axis::Interval { lo: -1.0, hi: 1.0, cells: 8 },
        ])
        .unwrap();
        let s = Arc::new(
            ModelSpace::new(
                vec![Model { id: 0, domain: b, prior_weight: 1.0, prior: PriorDensity::Uniform }],
                ids([0]),
            )
            .unwrap(),
        );
        let m = GridMeasure::prior(&s).mean().unwrap();
        assert!(m.iter().all(|x| x.abs() < 1e-12), "{m:?}");

        // mixture of two point masses
        let mk = |x: f64, y: f64, id: usize| Model {
            id,
            domain: ParameterBox::new(vec![Axis::Pinned(x), Axis::Pinned(y)]).unwrap(),
            prior_weight: 0.5,
            prior: PriorDensity::Uniform,
        };
        let s = Arc::new(ModelSpace::new(vec![mk(0.0, 0.0, 0), mk(1.0, 1.0, 1)], ids([0])).unwrap());
        assert_eq!(GridMeasure::prior(&s).mean().unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn expectation_examples() {
        let s = point_space(2, 1);
        let m = measure(&s, &[0.9, 0.1]);
        assert!((m.expectation(|_, _| 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(
            (m.expectation(|j, _| if j == 0 { 1.0 } else { 0.0 }).unwrap() - 0.9).abs() < 1e-15
        );
        let b = ParameterBox::new(vec![Axis::Pinned(0.3), Axis::Pinned(0.5)]).unwrap();
        let s = Arc::new(
            ModelSpace::new(
                vec![Model { id: 0, domain: b, prior_weight: 1.0, prior: PriorDensity::Uniform }],
                ids([0]),
            )
            .unwrap(),
        );
        assert_eq!(GridMeasure::prior(&s).expectation(|_, t| t[0]).unwrap(), 0.3);
    }

    #[test]
    fn cell_budget_enforced() {
        let b = ParameterBox::new(vec![
            Axis::Interval { lo: 0.0, hi: 1.0, cells: 100 },
            Axis::Interval { lo: 0.0, hi: 1.0, cells: 100 },
        ])
        .unwrap();
        assert_eq!(b.cell_count(), 10_000);
        let m = Model { id: 0, domain: b, prior_weight: 1.0, prior: PriorDensity::Uniform };
        assert!(matches!(
            ModelSpace::with_budget(vec![m], ids([0]), 9_999),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn canonical_indexing_round_trips() {
        let b = ParameterBox::new(vec![
            Axis::Interval { lo: 0.0, hi: 1.0, cells: 4 },
            Axis::Pinned(2.0),
            Axis::Interval { lo: -1.0, hi: 1.0, cells: 3 },
        ])
        .unwrap();
        assert_eq!(b.cell_count(), 12);
        for local in 0..12 {
            let c = b.cell_center(local);
            assert_eq!(b.locate(&c), Some(local));
        }
        assert_eq!(b.locate(&[2.0, 2.0, 0.0]), None);
        assert_eq!(b.locate(&[0.5, 1.9, 0.0]), None);
    }

    #[test]
    fn set_distance_between_boxes() {
        let a = ParameterBox::new(vec![Axis::Interval { lo: -1.0, hi: -0.25, cells: 4 }]).unwrap();
        let b = ParameterBox::new(vec![Axis::Interval { lo: 0.25, hi: 1.0, cells: 4 }]).unwrap();
        assert!((a.set_distance(&b).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(a.set_distance(&a).unwrap(), 0.0);
    }

    fn arb_weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, n).prop_filter("positive mass", |w| {
            w.iter().sum::<f64>() > 1e-6
        })
    }

    proptest! {
        // Prop 1 at full generality: tv(p, p(.|B)) = p(B^c) for every model set B.
        #[test]
        fn conditioning_tv_identity(w in arb_weights(12), keep in prop::collection::btree_set(0usize..3, 1..=3)) {
            let s = point_space(3, 4);
            let p = measure(&s, &w);
            prop_assume!(p.model_mass(&keep) > 1e-9);
            let cond = p.condition_on_models(&keep).unwrap();
            let tv = p.tv_distance(&cond).unwrap();
            let miss = p.complement_mass(&keep);
            prop_assert!((tv - miss).abs() <= 1e-12, "tv={tv} miss={miss}");
        }

        #[test]
        fn tv_is_a_metric(a in arb_weights(8), b in arb_weights(8), c in arb_weights(8)) {
            let s = point_space(2, 4);
            let (p, q, r) = (measure(&s, &a), measure(&s, &b), measure(&s, &c));
            let pq = p.tv_distance(&q).unwrap();
            let qp = q.tv_distance(&p).unwrap();
            prop_assert_eq!(pq, qp);
            prop_assert!(p.tv_distance(&p).unwrap() <= 1e-12);
            let pr = p.tv_distance(&r).unwrap();
            let rq = r.tv_distance(&q).unwrap();
            prop_assert!(pq <= pr + rq + 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&pq));
        }

        #[test]
        fn conditioning_is_idempotent(w in arb_weights(12)) {
            let s = point_space(3, 4);
            let p = measure(&s, &w);
            prop_assume!(p.model_mass(&ids([0, 2])) > 1e-9);
            let once = p.condition_on_models(&ids([0, 2])).unwrap();
            let twice = once.condition_on_models(&ids([0, 2])).unwrap();
            prop_assert!(once.tv_distance(&twice).unwrap() <= 1e-12);
        }

        #[test]
        fn mixture_mean_is_weighted_mean(a in arb_weights(8), b in arb_weights(8), c in 0.0f64..=1.0) {
            let s = point_space(2, 4);
            let (p, q) = (measure(&s, &a), measure(&s, &b));
            let mixed = p.mix(&q, c).unwrap();
            let mp = p.mean().unwrap()[0];
            let mq = q.mean().unwrap()[0];
            let mm = mixed.mean().unwrap()[0];
            prop_assert!((mm - (c * mp + (1.0 - c) * mq)).abs() <= 1e-12);
        }
    }
}
