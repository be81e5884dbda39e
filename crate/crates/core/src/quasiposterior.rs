//! Quasi-posterior pi ∝ exp(-lambda R_n) * prior on the grid, together with
//! its limiting companion phi ∝ exp(-lambda R) * prior, plus the oracle /
//! selection conditionals and the mean decompositions built from them.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measure::{Axis, GridMeasure, ModelSpace};
use crate::num::Kahan;
use crate::risks::{Dataset, RiskPair};

#[derive(Debug, Clone)]
pub struct QuasiPosterior {
    pub lambda: f64,
    /// exp(-lambda R_n) * prior, normalized.
    pub pi: GridMeasure,
    /// Limiting companion exp(-lambda R) * prior, normalized.
    pub phi: GridMeasure,
    pub risk_tag: String,
    space: Arc<ModelSpace>,
    empirical: Vec<f64>,
    theoretical: Vec<f64>,
}

/// Terms of E(theta) - E(theta|M0) = sum_{j not in M0} pi(M_j)
/// (E(theta|M_j) - E(theta|M0)).
#[derive(Debug, Clone)]
pub struct MeanDecomposition {
    pub lhs: Vec<f64>,
    pub rhs_total: Vec<f64>,
    /// (model id, pi(M_j) * (E(theta|M_j) - E(theta|M0))) for wrong models.
    pub rhs_per_model: Vec<(usize, Vec<f64>)>,
    /// Two-term form pi(M0^c) * (E(theta|M0^c) - E(theta|M0)).
    pub two_term: Vec<f64>,
    /// max component of |lhs - rhs_total|.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct MetropolisReport {
    pub model_prob_mcmc: Vec<f64>,
    pub tv_to_grid: f64,
    pub acceptance_rate: f64,
}

/// Builds pi and phi by evaluating both risks at every cell center in
/// parallel, then normalizing in log space over the canonical cell order.
pub fn build(
    space: Arc<ModelSpace>,
    pair: &RiskPair,
    lambda: f64,
    dataset: &Dataset,
) -> Result<QuasiPosterior> {
    if !(lambda > 0.0) {
        return Err(Error::Invalid(format!("lambda must be positive, got {lambda}")));
    }
    let total = space.total_cells();
    let risks: Vec<(f64, f64)> = (0..total)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let (j, theta) = space.cell(i);
            Ok((pair.empirical(j, &theta, dataset)?, pair.theoretical(j, &theta)?))
        })
        .collect::<Result<_>>()?;
    let empirical: Vec<f64> = risks.iter().map(|r| r.0).collect();
    let theoretical: Vec<f64> = risks.iter().map(|r| r.1).collect();
    let log_w = |r: &[f64]| -> Vec<f64> {
        (0..total).map(|i| -lambda * r[i] + space.log_prior_cell_mass(i)).collect()
    };
    let pi = GridMeasure::from_log_weights(space.clone(), &log_w(&empirical))?;
    let phi = GridMeasure::from_log_weights(space.clone(), &log_w(&theoretical))?;
    let qp = QuasiPosterior {
        lambda,
        pi,
        phi,
        risk_tag: pair.tag.clone(),
        space,
        empirical,
        theoretical,
    };
    qp.verify_proportionality()?;
    qp.verify_identities()?;
    Ok(qp)
}

impl QuasiPosterior {
    pub fn space(&self) -> &Arc<ModelSpace> {
        &self.space
    }

    /// Per-cell R_n values in canonical order (penalty included).
    pub fn empirical_risks(&self) -> &[f64] {
        &self.empirical
    }

    /// Per-cell R values in canonical order (penalty included).
    pub fn theoretical_risks(&self) -> &[f64] {
        &self.theoretical
    }

    /// Spot-checks log pi(cell) + lambda R_n(cell) - log prior(cell) is
    /// constant on a random sample of positive-weight cells.
    fn verify_proportionality(&self) -> Result<()> {
        let mut rng = ChaCha12Rng::seed_from_u64(0x9e37_79b9);
        let w = self.pi.weights();
        let mut anchor: Option<f64> = None;
        for _ in 0..64 {
            let i = rng.gen_range(0..w.len());
            if w[i] <= 0.0 {
                continue;
            }
            let c = w[i].ln() + self.lambda * self.empirical[i] - self.space.log_prior_cell_mass(i);
            match anchor {
                None => anchor = Some(c),
                Some(a) => {
                    if (c - a).abs() > 1e-8 * (1.0 + a.abs()) {
                        return Err(Error::Invalid(format!(
                            "cell weight not proportional to exp(-lambda R_n) * prior \
                             (log offsets {a} vs {c})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Identities checked on every build: the oracle TV identity, the
    /// pairwise TV bound, pi(MAP) >= pi(M0), and the mean decomposition.
    fn verify_identities(&self) -> Result<()> {
        let miss = self.pi.complement_mass(self.space.true_model_ids());
        if miss < 1.0 {
            let oracle = self.oracle_posterior()?;
            let tv = self.pi.tv_distance(&oracle)?;
            if (tv - miss).abs() > 1e-12 {
                return Err(Error::Invalid(format!(
                    "oracle TV identity violated: tv={tv}, 1-pi(M0)={miss}"
                )));
            }
            let sel = self.selection_posterior()?;
            let bound = 2.0 * miss + 1e-12;
            for (a, b) in
                [(&self.pi, &sel), (&self.pi, &oracle), (&sel, &oracle)]
            {
                let t = a.tv_distance(b)?;
                if t > bound {
                    return Err(Error::Invalid(format!(
                        "pairwise TV bound violated: {t} > 2(1-pi(M0)) = {}",
                        2.0 * miss
                    )));
                }
            }
            let map_mass = self.pi.model_mass(&self.map_group());
            if map_mass + 1e-15 < self.pi.model_mass(self.space.true_model_ids()) {
                return Err(Error::Invalid("pi(MAP) < pi(M0)".into()));
            }
            if self.space.ambient_dim().is_ok() {
                let dec = self.mean_decomposition()?;
                if dec.residual > 1e-10 {
                    return Err(Error::Invalid(format!(
                        "mean decomposition residual {} > 1e-10",
                        dec.residual
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn model_probability(&self, ids: &BTreeSet<usize>) -> f64 {
        self.pi.model_mass(ids)
    }

    /// 1 - pi(M0), the posterior probability of missing the true model.
    pub fn miss_probability(&self) -> f64 {
        self.pi.complement_mass(self.space.true_model_ids())
    }

    /// Argmax of the model masses, ties broken by lowest id.
    pub fn map_model(&self) -> usize {
        let masses = self.pi.model_masses();
        let mut best = 0usize;
        for (j, &m) in masses.iter().enumerate() {
            if m > masses[best] {
                best = j;
            }
        }
        best
    }

    /// pi conditioned on the true model set.
    pub fn oracle_posterior(&self) -> Result<GridMeasure> {
        self.pi.condition_on_models(self.space.true_model_ids())
    }

    /// Candidate sets for model selection: the designated true set is one
    /// candidate (a mixture model when it has several members) and every
    /// other model stands alone.
    fn selection_groups(&self) -> Vec<BTreeSet<usize>> {
        let true_ids = self.space.true_model_ids();
        let mut groups = vec![true_ids.clone()];
        for m in self.space.models() {
            if !true_ids.contains(&m.id) {
                groups.push(crate::measure::ids([m.id]));
            }
        }
        groups.sort_by_key(|g| *g.iter().next().unwrap());
        groups
    }

    /// The MAP selection group; ties broken by lowest member id.
    pub fn map_group(&self) -> BTreeSet<usize> {
        let groups = self.selection_groups();
        let mut best = 0usize;
        let mut best_mass = f64::NEG_INFINITY;
        for (k, g) in groups.iter().enumerate() {
            let mass = self.pi.model_mass(g);
            if mass > best_mass {
                best = k;
                best_mass = mass;
            }
        }
        groups[best].clone()
    }

    /// pi conditioned on the MAP selection (the MAP model, or the true
    /// mixture when that set wins).
    pub fn selection_posterior(&self) -> Result<GridMeasure> {
        self.pi.condition_on_models(&self.map_group())
    }

    pub fn mean_decomposition(&self) -> Result<MeanDecomposition> {
        let dim = self.space.ambient_dim()?;
        let true_ids = self.space.true_model_ids();
        let overall = self.pi.mean()?;
        let m0 = self.pi.condition_on_models(true_ids)?.mean()?;
        let masses = self.pi.model_masses();
        let lhs: Vec<f64> = overall.iter().zip(&m0).map(|(a, b)| a - b).collect();
        let mut rhs_per_model = Vec::new();
        let mut totals = vec![Kahan::new(); dim];
        for model in self.space.models() {
            let j = model.id;
            if true_ids.contains(&j) || masses[j] <= 0.0 {
                continue;
            }
            let mj = self.pi.condition_on_models(&crate::measure::ids([j]))?.mean()?;
            let term: Vec<f64> =
                mj.iter().zip(&m0).map(|(a, b)| masses[j] * (a - b)).collect();
            for (acc, &t) in totals.iter_mut().zip(&term) {
                acc.add(t);
            }
            rhs_per_model.push((j, term));
        }
        let rhs_total: Vec<f64> = totals.iter().map(Kahan::value).collect();
        let miss = self.pi.complement_mass(true_ids);
        let two_term = if miss > 0.0 {
            let comp: BTreeSet<usize> = self
                .space
                .models()
                .iter()
                .map(|m| m.id)
                .filter(|id| !true_ids.contains(id))
                .collect();
            let mc = self.pi.condition_on_models(&comp)?.mean()?;
            mc.iter().zip(&m0).map(|(a, b)| miss * (a - b)).collect()
        } else {
            vec![0.0; dim]
        };
        let residual = lhs
            .iter()
            .zip(&rhs_total)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        Ok(MeanDecomposition { lhs, rhs_total, rhs_per_model, two_term, residual })
    }

    /// Cross-validates the grid quadrature with a random-walk sampler whose
    /// states are grid cells: within-model moves take a Gaussian step in
    /// theta and snap to the containing cell (symmetric on a uniform grid);
    /// between-model jumps draw a uniform cell of a uniformly chosen other
    /// model. Three chains with consecutive seeds run in parallel and their
    /// post-burn-in histograms are pooled.
    pub fn metropolis_check(&self, steps: usize, seed: u64) -> Result<MetropolisReport> {
        if steps < 10_000 {
            return Err(Error::Invalid(format!("steps must be >= 10000, got {steps}")));
        }
        const CHAINS: u64 = 3;
        let chains: Vec<(Vec<u64>, u64, u64)> = (0..CHAINS)
            .into_par_iter()
            .map(|c| self.run_chain(steps, seed.wrapping_add(c), c as usize))
            .collect();
        let total_cells = self.space.total_cells();
        let mut hist = vec![0u64; total_cells];
        let mut accepted = 0u64;
        let mut proposed = 0u64;
        for (h, acc, prop) in &chains {
            for (a, b) in hist.iter_mut().zip(h) {
                *a += b;
            }
            accepted += acc;
            proposed += prop;
        }
        let rate = accepted as f64 / proposed as f64;
        if rate < 0.001 {
            return Err(Error::ChainNotMoved(rate));
        }
        let kept: u64 = hist.iter().sum();
        let w = self.pi.weights();
        let mut tv = Kahan::new();
        let mut model_prob = vec![0.0; self.space.n_models()];
        for (i, (&h, &p)) in hist.iter().zip(w).enumerate() {
            let f = h as f64 / kept as f64;
            tv.add((f - p).abs());
            model_prob[self.space.model_of(i)] += f;
        }
        Ok(MetropolisReport {
            model_prob_mcmc: model_prob,
            tv_to_grid: 0.5 * tv.value(),
            acceptance_rate: rate,
        })
    }

    fn run_chain(&self, steps: usize, seed: u64, chain_index: usize) -> (Vec<u64>, u64, u64) {
        let space = &self.space;
        let w = self.pi.weights();
        let n_models = space.n_models();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        // proposal scale per model/axis: 2.38 x posterior sd, floored at one
        // cell width
        let scales: Vec<Vec<f64>> = space
            .models()
            .iter()
            .map(|m| {
                let range = space.cell_range(m.id);
                let mass: f64 = w[range.clone()].iter().sum();
                m.domain
                    .axes()
                    .iter()
                    .enumerate()
                    .map(|(k, ax)| match *ax {
                        Axis::Pinned(_) => 0.0,
                        Axis::Interval { lo, hi, cells } => {
                            let width = (hi - lo) / cells.max(1) as f64;
                            if mass <= 0.0 {
                                return ((hi - lo) / 4.0).max(width);
                            }
                            let mut mean = 0.0;
                            for i in range.clone() {
                                mean += w[i] / mass * space.cell(i).1[k];
                            }
                            let mut var = 0.0;
                            for i in range.clone() {
                                let d = space.cell(i).1[k] - mean;
                                var += w[i] / mass * d * d;
                            }
                            (2.38 * var.sqrt()).max(width)
                        }
                    })
                    .collect()
            })
            .collect();
        // start at the heaviest cell of a round-robin model (global argmax
        // if that model carries no mass)
        let start_model = chain_index % n_models;
        let range = space.cell_range(start_model);
        let mut state = range.clone().max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
        if w[state] <= 0.0 {
            state = (0..w.len()).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
        }
        let burn = steps / 10;
        let mut hist = vec![0u64; space.total_cells()];
        let mut accepted = 0u64;
        let normal = Normal::new(0.0, 1.0).unwrap();
        for step in 0..steps {
            let (j, theta) = space.cell(state);
            let jump = n_models > 1 && rng.gen::<f64>() < 0.3;
            let (proposal, log_hastings) = if jump {
                let mut j2 = rng.gen_range(0..n_models - 1);
                if j2 >= j {
                    j2 += 1;
                }
                let r2 = space.cell_range(j2);
                let local = rng.gen_range(0..r2.len());
                let cand = r2.start + local;
                // q ratio = cell_count(j2) / cell_count(j)
                let lh = (r2.len() as f64).ln()
                    - (space.cell_range(j).len() as f64).ln();
                (Some(cand), lh)
            } else {
                let model = space.model(j);
                let mut t2 = theta.clone();
                for (k, ax) in model.domain.axes().iter().enumerate() {
                    if let Axis::Interval { .. } = ax {
                        t2[k] += scales[j][k] * normal.sample(&mut rng);
                    }
                }
                match model.domain.locate(&t2) {
                    Some(local) => (Some(space.cell_range(j).start + local), 0.0),
                    None => (None, 0.0),
                }
            };
            if let Some(cand) = proposal {
                let accept = if w[cand] <= 0.0 {
                    false
                } else if w[state] <= 0.0 {
                    true
                } else {
                    let log_alpha = w[cand].ln() - w[state].ln() + log_hastings;
                    log_alpha >= 0.0 || rng.gen::<f64>().ln() < log_alpha
                };
                if accept {
                    state = cand;
                    accepted += 1;
                }
            }
            if step >= burn {
                hist[state] += 1;
            }
        }
        (hist, accepted, steps as u64)
    }
}
