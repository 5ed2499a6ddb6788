//! Command bodies: resolve inputs, run the experiments across seeds in
//! parallel, write result files into the output directory.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use mesa_core::dataset::{load_csv, make_toy, stratified_split, write_csv};
use mesa_core::learners::ProbabilisticClassifier;
use mesa_core::metrics::{aucprc, pr_curve};
use mesa_core::sac::{load_sampler, meta_train, serialize_sampler};
use mesa_core::{EnsembleModel, LabeledDataset, MetaSampler, Task};
use rayon::prelude::*;

use crate::config::{RunConfig, TrainMode};
use crate::error::{CliError, Result};
use crate::experiments::{
    ablation_run, ensemble_config, fit_ensemble, mean_std, noise_run, stratified_subset,
    transfer_run, NoiseScore, Score, TaskSource,
};
use crate::report::{create_with_config, num, write_table, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GenerateToy,
    MetaTrain,
    Train,
    Ablation,
    NoiseSweep,
    Transfer,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenerateToy => "generate-toy",
            Command::MetaTrain => "meta-train",
            Command::Train => "train",
            Command::Ablation => "ablation",
            Command::NoiseSweep => "noise-sweep",
            Command::Transfer => "transfer",
        }
    }
}

/// Validates `run`, prepares `out` and dispatches. Returns the files written.
pub fn run_command(command: Command, run: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    run.validate()?;
    std::fs::create_dir_all(out).map_err(|source| CliError::Write {
        path: out.to_path_buf(),
        source,
    })?;
    let ctx = Context {
        run,
        out,
        config_json: recorded_config(command, run),
    };
    match command {
        Command::GenerateToy => ctx.generate_toy(),
        Command::MetaTrain => ctx.meta_train(),
        Command::Train => ctx.train(),
        Command::Ablation => ctx.ablation(),
        Command::NoiseSweep => ctx.noise_sweep(),
        Command::Transfer => ctx.transfer(),
    }
}

/// The config row content: every field of `run` plus the command name.
pub fn recorded_config(command: Command, run: &RunConfig) -> String {
    let mut value = serde_json::to_value(run).expect("config serializes");
    value
        .as_object_mut()
        .expect("config is an object")
        .insert("command".into(), command.name().into());
    value.to_string()
}

fn read_sampler(path: &Path) -> Result<MetaSampler> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(load_sampler(&text)?)
}

struct Context<'a> {
    run: &'a RunConfig,
    out: &'a Path,
    config_json: String,
}

impl Context<'_> {
    fn path(&self, name: String) -> PathBuf {
        self.out.join(name)
    }

    fn table(&self, name: &str, table: &Table) -> Result<PathBuf> {
        let path = self.path(name.to_string());
        write_table(&path, &self.config_json, table)?;
        Ok(path)
    }

    /// The single task of an evaluation command.
    fn task(&self) -> Result<TaskSource> {
        match self.run.inputs.as_slice() {
            [] => Ok(TaskSource::Toy(self.run.toy)),
            [path] => Ok(TaskSource::Data(load_csv(path, &self.run.label_column)?)),
            _ => Err(CliError::config("this command takes at most one dataset")),
        }
    }

    fn tasks(&self) -> Result<Vec<TaskSource>> {
        if self.run.inputs.is_empty() {
            return Ok(vec![TaskSource::Toy(self.run.toy)]);
        }
        self.run
            .inputs
            .iter()
            .map(|p| Ok(TaskSource::Data(load_csv(p, &self.run.label_column)?)))
            .collect()
    }

    fn seed_k_jobs(&self) -> Vec<(u64, usize)> {
        self.run
            .seeds
            .iter()
            .flat_map(|&s| self.run.k.iter().map(move |&k| (s, k)))
            .collect()
    }

    fn generate_toy(&self) -> Result<Vec<PathBuf>> {
        let datasets = self
            .run
            .seeds
            .par_iter()
            .map(|&s| Ok((s, make_toy(&self.run.toy.spec(s))?)))
            .collect::<Result<Vec<_>>>()?;
        datasets
            .into_iter()
            .map(|(seed, ds)| {
                let path = self.path(format!("toy_seed{seed}.csv"));
                let mut w = create_with_config(&path, &self.config_json)?;
                write_csv(&ds, &mut w)?;
                w.flush().map_err(|source| CliError::Write {
                    path: path.clone(),
                    source,
                })?;
                Ok(path)
            })
            .collect()
    }

    fn meta_train(&self) -> Result<Vec<PathBuf>> {
        let sources = self.tasks()?;
        let run = self.run;
        let results = run
            .seeds
            .par_iter()
            .map(|&seed| {
                let tasks = sources
                    .iter()
                    .map(|t| {
                        let split = t.split(&run.split, seed)?;
                        Ok(Task {
                            train: stratified_subset(&split.train, run.subset_fraction, seed)?,
                            valid: split.valid,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((seed, meta_train(&tasks, &run.sac, seed)?))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut written = Vec::new();
        for (seed, output) in results {
            let path = self.path(format!("sampler_seed{seed}.json"));
            std::fs::write(&path, serialize_sampler(&output.sampler)?).map_err(|source| CliError::Write {
                path: path.clone(),
                source,
            })?;
            written.push(path);

            let mut log = Table::new(&["episode", "task", "step", "action", "reward", "valid_aucprc"]);
            for ep in &output.episodes {
                for st in &ep.steps {
                    log.push(vec![
                        ep.episode.to_string(),
                        ep.task.to_string(),
                        st.step.to_string(),
                        num(st.action),
                        num(st.reward),
                        num(st.valid_aucprc),
                    ]);
                }
            }
            written.push(self.table(&format!("training_log_seed{seed}.csv"), &log)?);

            let mut losses = Table::new(&["update", "q_loss", "v_loss", "policy_loss"]);
            for (i, l) in output.losses.iter().enumerate() {
                losses.push(vec![i.to_string(), num(l.q_loss), num(l.v_loss), num(l.policy_loss)]);
            }
            written.push(self.table(&format!("losses_seed{seed}.csv"), &losses)?);
        }
        Ok(written)
    }

    fn train(&self) -> Result<Vec<PathBuf>> {
        let task = self.task()?;
        let run = self.run;
        let sampler = match (run.mode, &run.sampler) {
            (TrainMode::Mesa, Some(p)) => Some(read_sampler(p)?),
            (TrainMode::Mesa, None) => return Err(CliError::config("mode mesa needs --sampler")),
            _ => None,
        };
        let results = self
            .seed_k_jobs()
            .par_iter()
            .map(|&(seed, k)| {
                let ds = task.dataset(seed)?;
                let split = stratified_split(&ds, &run.split.spec(seed))?;
                let config = ensemble_config(run, k, sampler.as_ref());
                let model = fit_ensemble(&split.train, &split.valid, run.mode, sampler.as_ref(), &config, run, seed)?;
                let valid = aucprc(&model.predict_all(&split.valid)?, split.valid.labels())?;
                let test_scores = model.predict_all(&split.test)?;
                let test = aucprc(&test_scores, split.test.labels())?;
                let curve = pr_curve(&test_scores, split.test.labels())?;
                let grid = if ds.n_features() == 2 {
                    Some(prediction_grid(&model, &ds, run.grid_resolution)?)
                } else {
                    None
                };
                Ok((seed, k, valid, test, curve, grid))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut written = Vec::new();
        let mut table = Table::new(&["seed", "k", "mode", "valid_aucprc", "test_aucprc"]);
        for (seed, k, valid, test, curve, grid) in results {
            table.push(vec![seed.to_string(), k.to_string(), run.mode.name().into(), num(valid), num(test)]);
            let mut pr = Table::new(&["recall", "precision"]);
            for p in &curve.points {
                pr.push(vec![num(p.recall), num(p.precision)]);
            }
            written.push(self.table(&format!("pr_curve_seed{seed}_k{k}.csv"), &pr)?);
            if let Some(grid) = grid {
                written.push(self.table(&format!("grid_seed{seed}_k{k}.csv"), &grid)?);
            }
        }
        written.insert(0, self.table("train_results.csv", &table)?);
        Ok(written)
    }

    fn ablation(&self) -> Result<Vec<PathBuf>> {
        let task = self.task()?;
        let scores: Vec<Score> = self
            .seed_k_jobs()
            .par_iter()
            .map(|&(seed, k)| ablation_run(&task, self.run, k, seed))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        let runs = score_table(&scores);
        let summary = summarize(&scores, "mesa_gain_pct", |cell, all| {
            let mesa = all.get("mesa").map(|v| mean_std(v).0)?;
            let own = mean_std(cell).0;
            Some(100.0 * (mesa - own) / own)
        });
        Ok(vec![self.table("ablation_runs.csv", &runs)?, self.table("ablation_summary.csv", &summary)?])
    }

    fn noise_sweep(&self) -> Result<Vec<PathBuf>> {
        let task = self.task()?;
        let jobs: Vec<(u64, usize, f64)> = self
            .seed_k_jobs()
            .into_iter()
            .flat_map(|(s, k)| self.run.noise_ratios.iter().map(move |&r| (s, k, r)))
            .collect();
        let scores: Vec<NoiseScore> = jobs
            .par_iter()
            .map(|&(seed, k, ratio)| noise_run(&task, self.run, k, ratio, seed))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();

        let mut runs = Table::new(&["seed", "k", "noise_ratio", "method", "test_aucprc"]);
        let mut groups: BTreeMap<(usize, u64, String), Vec<f64>> = BTreeMap::new();
        for s in &scores {
            runs.push(vec![s.seed.to_string(), s.k.to_string(), num(s.noise_ratio), s.method.clone(), num(s.test_aucprc)]);
            // Ratios lie in [0, 0.5), so their bit patterns sort like the values.
            groups
                .entry((s.k, s.noise_ratio.to_bits(), s.method.clone()))
                .or_default()
                .push(s.test_aucprc);
        }
        let mut summary = Table::new(&["k", "noise_ratio", "method", "mean", "std"]);
        for ((k, ratio, method), values) in &groups {
            let (m, sd) = mean_std(values);
            summary.push(vec![k.to_string(), num(f64::from_bits(*ratio)), method.clone(), num(m), num(sd)]);
        }
        Ok(vec![self.table("noise_runs.csv", &runs)?, self.table("noise_summary.csv", &summary)?])
    }

    fn transfer(&self) -> Result<Vec<PathBuf>> {
        let task = self.task()?;
        let path = self
            .run
            .sampler
            .as_ref()
            .ok_or_else(|| CliError::config("transfer needs --sampler"))?;
        let sampler = read_sampler(path)?;
        let reference = self.run.reference.as_deref().map(read_sampler).transpose()?;
        let scores: Vec<Score> = self
            .seed_k_jobs()
            .par_iter()
            .map(|&(seed, k)| transfer_run(&task, self.run, &sampler, reference.as_ref(), k, seed))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        let runs = score_table(&scores);
        let summary = summarize(&scores, "delta_vs_reference", |cell, all| {
            let reference = all.get("reference").map(|v| mean_std(v).0)?;
            Some(mean_std(cell).0 - reference)
        });
        Ok(vec![self.table("transfer_runs.csv", &runs)?, self.table("transfer_summary.csv", &summary)?])
    }
}

fn score_table(scores: &[Score]) -> Table {
    let mut t = Table::new(&["seed", "k", "method", "test_aucprc"]);
    for s in scores {
        t.push(vec![s.seed.to_string(), s.k.to_string(), s.method.clone(), num(s.test_aucprc)]);
    }
    t
}

/// Mean and std per (k, method) in first-seen method order, plus one derived
/// column computed from the cell's values and all cells of the same k.
fn summarize(
    scores: &[Score],
    extra: &str,
    derive: impl Fn(&[f64], &BTreeMap<String, Vec<f64>>) -> Option<f64>,
) -> Table {
    let mut by_k: BTreeMap<usize, (Vec<String>, BTreeMap<String, Vec<f64>>)> = BTreeMap::new();
    for s in scores {
        let (order, cells) = by_k.entry(s.k).or_default();
        if !cells.contains_key(&s.method) {
            order.push(s.method.clone());
        }
        cells.entry(s.method.clone()).or_default().push(s.test_aucprc);
    }
    let mut t = Table::new(&["k", "method", "mean", "std", extra]);
    for (k, (order, cells)) in &by_k {
        for method in order {
            let values = &cells[method];
            let (m, sd) = mean_std(values);
            let d = derive(values, cells).map(num).unwrap_or_default();
            t.push(vec![k.to_string(), method.clone(), num(m), num(sd), d]);
        }
    }
    t
}

/// Ensemble probabilities on a square grid spanning the data's bounding box
/// padded by 5% per side.
fn prediction_grid(model: &EnsembleModel, ds: &LabeledDataset, resolution: usize) -> Result<Table> {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for row in ds.rows() {
        for j in 0..2 {
            lo[j] = lo[j].min(row[j]);
            hi[j] = hi[j].max(row[j]);
        }
    }
    let axis = |j: usize| -> Vec<f64> {
        let pad = 0.05 * (hi[j] - lo[j]).max(1e-12);
        let (a, b) = (lo[j] - pad, hi[j] + pad);
        (0..resolution)
            .map(|i| a + (b - a) * i as f64 / (resolution - 1) as f64)
            .collect()
    };
    let (xs, ys) = (axis(0), axis(1));
    let mut t = Table::new(&["x0", "x1", "probability"]);
    for &y in &ys {
        for &x in &xs {
            t.push(vec![num(x), num(y), num(model.predict_proba(&[x, y])?)]);
        }
    }
    Ok(t)
}
