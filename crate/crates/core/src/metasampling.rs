//! Error histograms, meta-states and Gaussian-weighted majority sampling.
//!
//! A meta-state is the pair of `b`-bin histograms of the classification
//! errors `|F(x) - y|` on the training and validation sets. A sampler action
//! `mu` in [0, 1] centers a Gaussian over those errors; majority rows are then
//! drawn without replacement with probability proportional to the Gaussian
//! weight of their error.

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::learners::ProbabilisticClassifier;
use crate::metrics::{classification_errors, errors_from_probabilities};
use crate::seeding::{self, Rng};

/// Lower clamp on unnormalized Gaussian weights.
pub const WEIGHT_FLOOR: f64 = 1e-12;
pub const DEFAULT_BINS: usize = 5;
pub const DEFAULT_SIGMA: f64 = 0.2;

/// Histogram bin for an error in [0, 1]: bin `i` holds `[i/b, (i+1)/b)`,
/// and the last bin is closed at 1.
pub fn bin_index(error: f64, bins: usize) -> usize {
    let b = bins as f64;
    let mut i = ((error * b).floor() as usize).min(bins - 1);
    // Re-check against the exact boundary comparisons; the product can round
    // across a bin edge.
    while i > 0 && error < i as f64 / b {
        i -= 1;
    }
    while i + 1 < bins && error >= (i + 1) as f64 / b {
        i += 1;
    }
    i
}

pub fn error_histogram(errors: &[f64], bins: usize) -> Result<Vec<f64>> {
    if bins < 2 {
        return Err(Error::invalid("histogram needs at least 2 bins"));
    }
    if errors.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut counts = vec![0usize; bins];
    for &e in errors {
        if !(0.0..=1.0).contains(&e) {
            return Err(Error::invalid(format!("error {e} outside [0, 1]")));
        }
        counts[bin_index(e, bins)] += 1;
    }
    let n = errors.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Concatenated training and validation error histograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaState(Vec<f64>);

impl MetaState {
    pub fn from_histograms(train: &[f64], valid: &[f64]) -> Result<Self> {
        if train.len() != valid.len() || train.len() < 2 {
            return Err(Error::invalid("histogram halves must share a bin count >= 2"));
        }
        let mut v = train.to_vec();
        v.extend_from_slice(valid);
        Self::from_vec(v)
    }

    /// Validates that each half is a probability vector.
    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        if values.len() < 4 || !values.len().is_multiple_of(2) {
            return Err(Error::invalid("meta-state length must be 2b with b >= 2"));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("meta-state entries must lie in [0, 1]"));
        }
        let b = values.len() / 2;
        for half in [&values[..b], &values[b..]] {
            if (half.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid("meta-state halves must each sum to 1"));
            }
        }
        Ok(MetaState(values))
    }

    pub fn from_errors(train_errors: &[f64], valid_errors: &[f64], bins: usize) -> Result<Self> {
        Self::from_histograms(
            &error_histogram(train_errors, bins)?,
            &error_histogram(valid_errors, bins)?,
        )
    }

    pub fn bins(&self) -> usize {
        self.0.len() / 2
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn train_half(&self) -> &[f64] {
        &self.0[..self.bins()]
    }

    pub fn valid_half(&self) -> &[f64] {
        &self.0[self.bins()..]
    }
}

pub fn meta_state(
    model: &dyn ProbabilisticClassifier,
    train: &LabeledDataset,
    valid: &LabeledDataset,
    bins: usize,
) -> Result<MetaState> {
    MetaState::from_errors(
        &classification_errors(model, train)?,
        &classification_errors(model, valid)?,
        bins,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerParams {
    pub mu: f64,
    pub sigma: f64,
}

impl SamplerParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mu) {
            return Err(Error::invalid(format!("mu = {mu} outside [0, 1]")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma = {sigma} must be positive")));
        }
        Ok(Self { mu, sigma })
    }
}

/// Normal density with mean `mu` and deviation `sigma`, evaluated at `x`.
pub fn gaussian_weight(x: f64, params: &SamplerParams) -> f64 {
    let z = (x - params.mu) / params.sigma;
    (-0.5 * z * z).exp() / (params.sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Sampling weights over the given errors: Gaussian, floored, normalized.
pub fn sampling_weights(errors: &[f64], params: &SamplerParams) -> Vec<f64> {
    let raw: Vec<f64> = errors
        .iter()
        .map(|&e| gaussian_weight(e, params).max(WEIGHT_FLOOR))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Binary sum tree for repeated weighted draws without replacement.
#[derive(Debug, Clone)]
pub struct WeightedSampler {
    tree: Vec<f64>,
    leaves: usize,
    len: usize,
}

impl WeightedSampler {
    pub fn new(weights: &[f64]) -> Self {
        let leaves = weights.len().next_power_of_two().max(1);
        let mut tree = vec![0.0; 2 * leaves];
        tree[leaves..leaves + weights.len()].copy_from_slice(weights);
        for i in (1..leaves).rev() {
            tree[i] = tree[2 * i] + tree[2 * i + 1];
        }
        Self {
            tree,
            leaves,
            len: weights.len(),
        }
    }

    pub fn total(&self) -> f64 {
        self.tree[1]
    }

    fn set(&mut self, item: usize, weight: f64) {
        let mut i = item + self.leaves;
        self.tree[i] = weight;
        while i > 1 {
            i /= 2;
            self.tree[i] = self.tree[2 * i] + self.tree[2 * i + 1];
        }
    }

    /// Draws one item in proportion to the remaining weights and removes it.
    pub fn draw(&mut self, rng: &mut Rng) -> Option<usize> {
        if self.len == 0 || !(self.total() > 0.0) {
            return None;
        }
        let mut u = rng.random::<f64>() * self.total();
        let mut i = 1;
        while i < self.leaves {
            let (l, r) = (self.tree[2 * i], self.tree[2 * i + 1]);
            if (u < l && l > 0.0) || r <= 0.0 {
                i *= 2;
            } else {
                u -= l;
                i = 2 * i + 1;
            }
        }
        let item = i - self.leaves;
        self.set(item, 0.0);
        Some(item)
    }
}

/// Picks `m` positions of `errors` by sequential weighted draws without
/// replacement. Returned positions are in draw order.
pub fn weighted_draws(errors: &[f64], params: &SamplerParams, m: usize, rng: &mut Rng) -> Vec<usize> {
    let weights = sampling_weights(errors, params);
    let mut sampler = WeightedSampler::new(&weights);
    (0..m.min(errors.len()))
        .map_while(|_| sampler.draw(rng))
        .collect()
}

fn union_sorted(mut majority: Vec<usize>, minority: &[usize]) -> Vec<usize> {
    majority.extend_from_slice(minority);
    majority.sort_unstable();
    majority
}

/// Row indices of a meta-sampled balanced subset, given the current ensemble
/// probabilities on every training row.
pub fn meta_sample_indices(
    train: &LabeledDataset,
    probs: &[f64],
    params: &SamplerParams,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    train.require_both_classes()?;
    if probs.len() != train.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: train.n_rows(),
            got: probs.len(),
        });
    }
    let pos = train.minority_indices();
    let neg = train.majority_indices();
    if neg.len() <= pos.len() {
        return Ok((0..train.n_rows()).collect());
    }
    let neg_probs: Vec<f64> = neg.iter().map(|&i| probs[i]).collect();
    let errors = errors_from_probabilities(&neg_probs, &vec![0; neg.len()]);
    let picked = weighted_draws(&errors, params, pos.len(), rng);
    Ok(union_sorted(picked.into_iter().map(|j| neg[j]).collect(), &pos))
}

/// Balanced subset: `|P|` majority rows drawn by Gaussian error weights, plus
/// every minority row. Rows keep their training-set order.
pub fn meta_sample(
    train: &LabeledDataset,
    model: &dyn ProbabilisticClassifier,
    params: &SamplerParams,
    seed: u64,
) -> Result<LabeledDataset> {
    let probs = model.predict_all(train)?;
    let mut rng = seeding::rng(seed);
    let idx = meta_sample_indices(train, &probs, params, &mut rng)?;
    Ok(train.subset(&idx))
}

pub fn random_balanced_indices(train: &LabeledDataset, rng: &mut Rng) -> Result<Vec<usize>> {
    train.require_both_classes()?;
    let pos = train.minority_indices();
    let neg = train.majority_indices();
    let m = pos.len().min(neg.len());
    let picked = index::sample(rng, neg.len(), m).into_iter().map(|j| neg[j]).collect();
    Ok(union_sorted(picked, &pos))
}

/// Uniform under-sampling of the majority class down to `|P|` rows.
pub fn random_balanced_subset(train: &LabeledDataset, seed: u64) -> Result<LabeledDataset> {
    let mut rng = seeding::rng(seed);
    Ok(train.subset(&random_balanced_indices(train, &mut rng)?))
}
