//! Per-seed experiment bodies. Each returns plain rows so commands, tests and
//! bindings can share them; nothing here touches the filesystem.

use std::borrow::Cow;

use mesa_core::dataset::{
    inject_flip_noise, make_toy, stratified_split, stratified_split_indices, Split, SplitSpec,
};
use mesa_core::ensemble::{
    constant_action_source, policy_action_source, random_action_source, train_ensemble,
    train_random_ensemble, ActionSource, EnsembleConfig, EnsembleModel,
};
use mesa_core::learners::ProbabilisticClassifier;
use mesa_core::metrics::aucprc;
use mesa_core::sac::{meta_train, MetaTrainOutput};
use mesa_core::{LabeledDataset, MetaSampler, SacConfig, Task};
use serde::Serialize;

use crate::config::{RunConfig, SplitFractions, ToyTask, TrainMode};
use crate::error::{CliError, Result};

/// Where a run's dataset comes from.
#[derive(Debug, Clone)]
pub enum TaskSource {
    /// Regenerated for every run seed.
    Toy(ToyTask),
    /// Fixed data; only the split varies with the seed.
    Data(LabeledDataset),
}

impl TaskSource {
    pub fn dataset(&self, seed: u64) -> Result<Cow<'_, LabeledDataset>> {
        Ok(match self {
            TaskSource::Toy(t) => Cow::Owned(make_toy(&t.spec(seed))?),
            TaskSource::Data(ds) => Cow::Borrowed(ds),
        })
    }

    pub fn split(&self, fractions: &SplitFractions, seed: u64) -> Result<Split> {
        let ds = self.dataset(seed)?;
        Ok(stratified_split(&ds, &fractions.spec(seed))?)
    }
}

/// Stratified subsample keeping `fraction` of each class, at least one row per class.
pub fn stratified_subset(ds: &LabeledDataset, fraction: f64, seed: u64) -> Result<LabeledDataset> {
    if fraction >= 1.0 {
        return Ok(ds.clone());
    }
    let rest = (1.0 - fraction) / 2.0;
    let spec = SplitSpec::new(fraction, rest, 1.0 - fraction - rest, seed)?;
    let [keep, _, _] = stratified_split_indices(ds, &spec)?;
    Ok(ds.subset(&keep))
}

pub fn test_aucprc(model: &EnsembleModel, test: &LabeledDataset) -> Result<f64> {
    Ok(aucprc(&model.predict_all(test)?, test.labels())?)
}

/// Meta-trains on one split, optionally on a stratified share of its
/// training part; the validation part is always used whole.
pub fn meta_train_split(split: &Split, sac: &SacConfig, subset_fraction: f64, seed: u64) -> Result<MetaTrainOutput> {
    let task = Task {
        train: stratified_subset(&split.train, subset_fraction, seed)?,
        valid: split.valid.clone(),
    };
    Ok(meta_train(&[task], sac, seed)?)
}

/// The untrained baseline policy: same architecture as a meta-trained
/// sampler, random initial weights.
pub fn untrained_sampler(config: &EnsembleConfig, hidden: usize, seed: u64) -> Result<MetaSampler> {
    Ok(MetaSampler::new(config.bins, config.sigma, hidden, seed)?)
}

/// Trains one ensemble on `train` (validation drives the meta-states).
pub fn fit_ensemble(
    train: &LabeledDataset,
    valid: &LabeledDataset,
    mode: TrainMode,
    sampler: Option<&MetaSampler>,
    config: &EnsembleConfig,
    run: &RunConfig,
    seed: u64,
) -> Result<EnsembleModel> {
    let mut source: Box<dyn ActionSource> = match mode {
        TrainMode::RandomSampling => {
            return Ok(train_random_ensemble(train, config.k, config.learner, seed)?);
        }
        TrainMode::Mesa => {
            let sampler = sampler.ok_or_else(|| CliError::config("mode mesa needs a sampler"))?;
            Box::new(policy_action_source(sampler.clone()))
        }
        TrainMode::RandomPolicy => {
            Box::new(policy_action_source(untrained_sampler(config, run.sac.hidden, seed)?))
        }
        TrainMode::UniformAction => Box::new(random_action_source(seed)),
        TrainMode::Constant => Box::new(constant_action_source(run.mu)?),
    };
    Ok(train_ensemble(train, valid, source.as_mut(), config, seed)?.0)
}

/// Ensemble settings for evaluation at size `k`, taking histogram bins and
/// sigma from the sampler when there is one.
pub fn ensemble_config(run: &RunConfig, k: usize, sampler: Option<&MetaSampler>) -> EnsembleConfig {
    let mut c = EnsembleConfig { k, ..run.sac.ensemble() };
    if let Some(s) = sampler {
        c.bins = s.bins();
        c.sigma = s.sigma();
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Score {
    pub seed: u64,
    pub k: usize,
    pub method: String,
    pub test_aucprc: f64,
}

/// One seed of the ablation: meta-train at size `k`, then compare the
/// trained policy, an untrained policy and uniform under-sampling on test.
pub fn ablation_run(task: &TaskSource, run: &RunConfig, k: usize, seed: u64) -> Result<Vec<Score>> {
    let split = task.split(&run.split, seed)?;
    let sac = SacConfig { k, ..run.sac };
    let trained = meta_train_split(&split, &sac, run.subset_fraction, seed)?.sampler;
    let config = ensemble_config(run, k, None);
    let mut out = Vec::new();
    for (mode, sampler) in [
        (TrainMode::Mesa, Some(&trained)),
        (TrainMode::RandomPolicy, None),
        (TrainMode::RandomSampling, None),
    ] {
        let model = fit_ensemble(&split.train, &split.valid, mode, sampler, &config, run, seed)?;
        out.push(Score {
            seed,
            k,
            method: mode.name().into(),
            test_aucprc: test_aucprc(&model, &split.test)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseScore {
    pub seed: u64,
    pub k: usize,
    pub noise_ratio: f64,
    pub method: String,
    pub test_aucprc: f64,
}

/// One seed and noise level: labels are flipped in the training split only,
/// validation and test stay clean.
pub fn noise_run(task: &TaskSource, run: &RunConfig, k: usize, ratio: f64, seed: u64) -> Result<Vec<NoiseScore>> {
    let mut split = task.split(&run.split, seed)?;
    split.train = inject_flip_noise(&split.train, ratio, seed)?;
    let sac = SacConfig { k, ..run.sac };
    let trained = meta_train_split(&split, &sac, run.subset_fraction, seed)?.sampler;
    let config = ensemble_config(run, k, None);
    let mut out = Vec::new();
    for (mode, sampler) in [(TrainMode::Mesa, Some(&trained)), (TrainMode::RandomSampling, None)] {
        let model = fit_ensemble(&split.train, &split.valid, mode, sampler, &config, run, seed)?;
        out.push(NoiseScore {
            seed,
            k,
            noise_ratio: ratio,
            method: mode.name().into(),
            test_aucprc: test_aucprc(&model, &split.test)?,
        });
    }
    Ok(out)
}

/// One seed of a transfer evaluation: the given sampler against an
/// untrained policy and, when supplied, a reference sampler.
pub fn transfer_run(
    task: &TaskSource,
    run: &RunConfig,
    sampler: &MetaSampler,
    reference: Option<&MetaSampler>,
    k: usize,
    seed: u64,
) -> Result<Vec<Score>> {
    let split = task.split(&run.split, seed)?;
    let config = ensemble_config(run, k, Some(sampler));
    let mut entries = vec![
        ("transfer", TrainMode::Mesa, Some(sampler), config),
        ("random-policy", TrainMode::RandomPolicy, None, config),
    ];
    if let Some(r) = reference {
        entries.push(("reference", TrainMode::Mesa, Some(r), ensemble_config(run, k, Some(r))));
    }
    entries
        .into_iter()
        .map(|(name, mode, s, c)| {
            let model = fit_ensemble(&split.train, &split.valid, mode, s, &c, run, seed)?;
            Ok(Score {
                seed,
                k,
                method: name.into(),
                test_aucprc: test_aucprc(&model, &split.test)?,
            })
        })
        .collect()
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
