use std::path::{Path, PathBuf};

use mesa_core::dataset::{LabelColumn, SplitSpec, ToySpec};
use mesa_core::SacConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Synthetic task parameters; the dataset seed comes from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyTask {
    pub n_majority: usize,
    pub n_minority: usize,
    pub overlap: f64,
}

impl Default for ToyTask {
    fn default() -> Self {
        let d = ToySpec::default();
        Self {
            n_majority: d.n_majority,
            n_minority: d.n_minority,
            overlap: d.overlap,
        }
    }
}

impl ToyTask {
    pub fn spec(&self, seed: u64) -> ToySpec {
        ToySpec {
            n_majority: self.n_majority,
            n_minority: self.n_minority,
            overlap: self.overlap,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.6,
            valid: 0.2,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    pub fn spec(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train,
            valid_fraction: self.valid,
            test_fraction: self.test,
            seed,
        }
    }
}

/// How `train` picks the action (the Gaussian center) at each ensemble step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    /// A meta-trained sampler loaded from `sampler`.
    #[default]
    Mesa,
    /// A freshly initialized, untrained sampler.
    RandomPolicy,
    /// Independent uniform actions.
    UniformAction,
    /// The constant action `mu`.
    Constant,
    /// Uniform balanced under-sampling for every member.
    RandomSampling,
}

impl TrainMode {
    pub fn name(&self) -> &'static str {
        match self {
            TrainMode::Mesa => "mesa",
            TrainMode::RandomPolicy => "random-policy",
            TrainMode::UniformAction => "uniform-action",
            TrainMode::Constant => "constant",
            TrainMode::RandomSampling => "random-sampling",
        }
    }
}

/// Everything a command depends on besides its input files. Serialized in
/// full into the comment row of every result CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    /// Dataset CSVs; when empty the synthetic task below is generated per seed.
    pub inputs: Vec<PathBuf>,
    pub label_column: LabelColumn,
    pub toy: ToyTask,
    pub split: SplitFractions,
    pub sac: SacConfig,
    /// Ensemble sizes evaluated by `train`, `ablation`, `noise-sweep` and `transfer`.
    pub k: Vec<usize>,
    pub noise_ratios: Vec<f64>,
    pub mode: TrainMode,
    pub mu: f64,
    pub sampler: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    /// Stratified share of the training split used for meta-training.
    pub subset_fraction: f64,
    /// Points per axis of the prediction grid written for 2-D data.
    pub grid_resolution: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            inputs: Vec::new(),
            label_column: LabelColumn::default(),
            toy: ToyTask::default(),
            split: SplitFractions::default(),
            sac: SacConfig::default(),
            k: vec![10],
            noise_ratios: vec![0.0, 0.1, 0.25, 0.4],
            mode: TrainMode::default(),
            mu: 0.5,
            sampler: None,
            reference: None,
            subset_fraction: 1.0,
            grid_resolution: 101,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(CliError::config("seed list is empty"));
        }
        if self.k.is_empty() || self.k.contains(&0) {
            return Err(CliError::config("k must list positive ensemble sizes"));
        }
        if self.noise_ratios.iter().any(|r| !(0.0..0.5).contains(r)) {
            return Err(CliError::config("noise ratios must lie in [0, 0.5)"));
        }
        if !(self.subset_fraction > 0.0 && self.subset_fraction <= 1.0) {
            return Err(CliError::config("subset_fraction must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(CliError::config("mu must lie in [0, 1]"));
        }
        if self.grid_resolution < 2 {
            return Err(CliError::config("grid_resolution must be at least 2"));
        }
        self.toy.spec(0).validate()?;
        self.split.spec(0).validate()?;
        self.sac.validate()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// Parses `0-9`, `1,4,7` or a mix such as `0-2,10`.
pub fn parse_seed_list(s: &str) -> std::result::Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((lo, hi)) => {
                let lo: u64 = lo.trim().parse().map_err(|_| format!("bad seed range {part:?}"))?;
                let hi: u64 = hi.trim().parse().map_err(|_| format!("bad seed range {part:?}"))?;
                if hi < lo {
                    return Err(format!("empty seed range {part:?}"));
                }
                out.extend(lo..=hi);
            }
            None => out.push(part.parse().map_err(|_| format!("bad seed {part:?}"))?),
        }
    }
    Ok(out)
}

pub fn parse_list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| format!("bad list item {p:?}")))
        .collect()
}
