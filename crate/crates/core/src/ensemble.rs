//! Cascade ensembles built by iterative meta-sampling.

use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::learners::{LearnerKind, ProbabilisticClassifier};
use crate::metasampling::{
    meta_sample_indices, random_balanced_indices, MetaState, SamplerParams, DEFAULT_BINS,
    DEFAULT_SIGMA,
};
use crate::metrics::{aucprc, errors_from_probabilities};
use crate::sac::MetaSampler;
use crate::seeding::{self, Rng, STREAM_ACTION, STREAM_MEMBER};

/// Averages member probabilities.
#[derive(Debug, Clone)]
pub struct EnsembleModel {
    members: Vec<Arc<dyn ProbabilisticClassifier>>,
}

impl EnsembleModel {
    pub fn new(members: Vec<Arc<dyn ProbabilisticClassifier>>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::invalid("an ensemble needs at least one member"));
        };
        let d = first.n_features();
        if members.iter().any(|m| m.n_features() != d) {
            return Err(Error::invalid("ensemble members disagree on feature count"));
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[Arc<dyn ProbabilisticClassifier>] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Incremental mean. Folding identical values returns that value exactly.
#[inline]
fn fold_mean(mean: f64, value: f64, count: usize) -> f64 {
    mean + (value - mean) / count as f64
}

#[inline]
fn clamp_unit(p: f64) -> f64 {
    p.clamp(0.0, 1.0)
}

impl ProbabilisticClassifier for EnsembleModel {
    fn n_features(&self) -> usize {
        self.members[0].n_features()
    }

    fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        let mut mean = 0.0;
        for (t, m) in self.members.iter().enumerate() {
            mean = clamp_unit(fold_mean(mean, m.predict_proba(row)?, t + 1));
        }
        Ok(mean)
    }
}

pub fn predict_ensemble(model: &EnsembleModel, row: &[f64]) -> Result<f64> {
    model.predict_proba(row)
}

/// Supplies the Gaussian center `mu` for each ensemble step.
pub trait ActionSource {
    fn next_action(&mut self, state: &MetaState) -> Result<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantActionSource(pub f64);

impl ActionSource for ConstantActionSource {
    fn next_action(&mut self, _: &MetaState) -> Result<f64> {
        Ok(self.0)
    }
}

pub fn constant_action_source(mu: f64) -> Result<ConstantActionSource> {
    SamplerParams::new(mu, 1.0)?;
    Ok(ConstantActionSource(mu))
}

/// Uniform `mu ~ U[0, 1)` regardless of state.
#[derive(Debug, Clone)]
pub struct RandomActionSource {
    rng: Rng,
}

impl ActionSource for RandomActionSource {
    fn next_action(&mut self, _: &MetaState) -> Result<f64> {
        Ok(self.rng.random::<f64>())
    }
}

pub fn random_action_source(seed: u64) -> RandomActionSource {
    RandomActionSource {
        rng: seeding::derived_rng(seed, STREAM_ACTION, 0),
    }
}

/// Queries a meta-sampler: its mean action, or a fresh policy sample when
/// built with [`PolicyActionSource::stochastic`].
#[derive(Debug, Clone)]
pub struct PolicyActionSource {
    sampler: MetaSampler,
    rng: Option<Rng>,
}

impl PolicyActionSource {
    pub fn deterministic(sampler: MetaSampler) -> Self {
        Self { sampler, rng: None }
    }

    pub fn stochastic(sampler: MetaSampler, seed: u64) -> Self {
        Self {
            sampler,
            rng: Some(seeding::derived_rng(seed, STREAM_ACTION, 1)),
        }
    }
}

impl ActionSource for PolicyActionSource {
    fn next_action(&mut self, state: &MetaState) -> Result<f64> {
        match &mut self.rng {
            Some(rng) => Ok(self.sampler.sample_action(state, rng)?.0),
            None => self.sampler.deterministic_action(state),
        }
    }
}

pub fn policy_action_source(sampler: MetaSampler) -> PolicyActionSource {
    PolicyActionSource::deterministic(sampler)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub k: usize,
    pub bins: usize,
    pub sigma: f64,
    pub learner: LearnerKind,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            k: 10,
            bins: DEFAULT_BINS,
            sigma: DEFAULT_SIGMA,
            learner: LearnerKind::Tree,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("ensemble size k must be at least 1"));
        }
        if self.bins < 2 {
            return Err(Error::invalid("histogram needs at least 2 bins"));
        }
        SamplerParams::new(0.5, self.sigma)?;
        Ok(())
    }
}

/// One meta-sampling step of an ensemble run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub state: MetaState,
    pub action: f64,
    pub valid_before: f64,
    pub valid_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub valid_before: f64,
    pub valid_after: f64,
}

impl StepOutcome {
    pub fn reward(&self) -> f64 {
        self.valid_after - self.valid_before
    }
}

/// Ensemble training as a stepwise environment.
///
/// Creating the environment fits member 1 on a random balanced subset; each
/// [`step`](Self::step) meta-samples with the given `mu` and adds one member.
/// Running means of member outputs on the training and validation rows are
/// cached, so a step costs one member evaluation per row.
pub struct EnsembleEnv<'a> {
    train: &'a LabeledDataset,
    valid: &'a LabeledDataset,
    config: EnsembleConfig,
    seed: u64,
    members: Vec<Arc<dyn ProbabilisticClassifier>>,
    train_probs: Vec<f64>,
    valid_probs: Vec<f64>,
    valid_score: f64,
    subset_counts: Vec<[usize; 2]>,
}

impl<'a> EnsembleEnv<'a> {
    pub fn new(
        train: &'a LabeledDataset,
        valid: &'a LabeledDataset,
        config: EnsembleConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        train.require_both_classes()?;
        valid.require_both_classes()?;
        if train.n_features() != valid.n_features() {
            return Err(Error::DimensionMismatch {
                expected: train.n_features(),
                got: valid.n_features(),
            });
        }
        let mut env = Self {
            train,
            valid,
            config,
            seed,
            members: Vec::with_capacity(config.k),
            train_probs: vec![0.0; train.n_rows()],
            valid_probs: vec![0.0; valid.n_rows()],
            valid_score: 0.0,
            subset_counts: Vec::with_capacity(config.k),
        };
        let mut rng = seeding::derived_rng(seed, STREAM_MEMBER, 0);
        let idx = random_balanced_indices(train, &mut rng)?;
        env.add_member(&idx)?;
        Ok(env)
    }

    fn add_member(&mut self, idx: &[usize]) -> Result<()> {
        let subset = self.train.subset(idx);
        self.subset_counts.push([subset.n_majority(), subset.n_minority()]);
        let member = self.config.learner.fit(&subset)?;
        let t = self.members.len() + 1;
        for (mean, row) in self.train_probs.iter_mut().zip(self.train.rows()) {
            *mean = clamp_unit(fold_mean(*mean, member.predict_proba(row)?, t));
        }
        for (mean, row) in self.valid_probs.iter_mut().zip(self.valid.rows()) {
            *mean = clamp_unit(fold_mean(*mean, member.predict_proba(row)?, t));
        }
        self.members.push(member);
        self.valid_score = aucprc(&self.valid_probs, self.valid.labels())?;
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn is_done(&self) -> bool {
        self.members.len() >= self.config.k
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.config
    }

    /// Validation AUCPRC of the current ensemble.
    pub fn valid_aucprc(&self) -> f64 {
        self.valid_score
    }

    /// `[majority, minority]` row counts of each member's training subset.
    pub fn member_subset_counts(&self) -> &[[usize; 2]] {
        &self.subset_counts
    }

    pub fn train_probabilities(&self) -> &[f64] {
        &self.train_probs
    }

    pub fn valid_probabilities(&self) -> &[f64] {
        &self.valid_probs
    }

    pub fn state(&self) -> Result<MetaState> {
        MetaState::from_errors(
            &errors_from_probabilities(&self.train_probs, self.train.labels()),
            &errors_from_probabilities(&self.valid_probs, self.valid.labels()),
            self.config.bins,
        )
    }

    pub fn step(&mut self, mu: f64) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::invalid("ensemble already has k members"));
        }
        let params = SamplerParams::new(mu, self.config.sigma)?;
        let t = self.members.len() as u64;
        let mut rng = seeding::derived_rng(self.seed, STREAM_MEMBER, t);
        let idx = meta_sample_indices(self.train, &self.train_probs, &params, &mut rng)?;
        let before = self.valid_score;
        self.add_member(&idx)?;
        Ok(StepOutcome {
            valid_before: before,
            valid_after: self.valid_score,
        })
    }

    pub fn into_model(self) -> EnsembleModel {
        EnsembleModel {
            members: self.members,
        }
    }
}

/// Trains a `k`-member cascade: member 1 on a random balanced subset, then
/// each further member on a subset meta-sampled from the current ensemble's
/// errors with the action supplied for the current meta-state.
pub fn train_ensemble(
    train: &LabeledDataset,
    valid: &LabeledDataset,
    actions: &mut dyn ActionSource,
    config: &EnsembleConfig,
    seed: u64,
) -> Result<(EnsembleModel, Vec<TraceStep>)> {
    let mut env = EnsembleEnv::new(train, valid, *config, seed)?;
    let mut trace = Vec::with_capacity(config.k.saturating_sub(1));
    while !env.is_done() {
        let state = env.state()?;
        let action = actions.next_action(&state)?;
        let out = env.step(action)?;
        trace.push(TraceStep {
            state,
            action,
            valid_before: out.valid_before,
            valid_after: out.valid_after,
        });
    }
    Ok((env.into_model(), trace))
}

/// Under-sampling bagging: every member sees an independent uniform balanced subset.
pub fn train_random_ensemble(
    train: &LabeledDataset,
    k: usize,
    learner: LearnerKind,
    seed: u64,
) -> Result<EnsembleModel> {
    if k == 0 {
        return Err(Error::invalid("ensemble size k must be at least 1"));
    }
    let members = (0..k as u64)
        .map(|t| {
            let mut rng = seeding::derived_rng(seed, STREAM_MEMBER, t);
            learner.fit(&train.subset(&random_balanced_indices(train, &mut rng)?))
        })
        .collect::<Result<Vec<_>>>()?;
    EnsembleModel::new(members)
}
