use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mesa_cli::config::{parse_list, parse_seed_list};
use mesa_cli::{run_command, CliError, Command, RunConfig, TrainMode};
use mesa_core::dataset::LabelColumn;
use mesa_core::LearnerKind;

/// A comma-separated list parsed as one argument value.
#[derive(Clone)]
struct List<T>(Vec<T>);

fn seeds(s: &str) -> Result<List<u64>, String> {
    parse_seed_list(s).map(List)
}

fn list<T: std::str::FromStr>(s: &str) -> Result<List<T>, String> {
    parse_list(s).map(List)
}

#[derive(Parser)]
#[command(name = "mesa", version, about = "Meta-sampler under-sampling ensembles for imbalanced data")]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seeds such as `0-9` or `1,4,7`.
    #[arg(long, global = true, value_parser = seeds)]
    seed: Option<List<u64>>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "mesa-out")]
    out: PathBuf,
    /// Base learner: tree or gnb.
    #[arg(long, global = true)]
    learner: Option<LearnerKind>,
    /// Label column name or zero-based index.
    #[arg(long, global = true)]
    label_column: Option<String>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset CSV; the configured synthetic task is used when omitted.
    input: Option<PathBuf>,
    /// Ensemble sizes, comma separated.
    #[arg(long, value_parser = list::<usize>)]
    k: Option<List<usize>>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the synthetic two-class task as CSV, one file per seed.
    GenerateToy {
        #[arg(long)]
        overlap: Option<f64>,
        #[arg(long)]
        n_majority: Option<usize>,
        #[arg(long)]
        n_minority: Option<usize>,
    },
    /// Meta-train a sampler on one or more task CSVs.
    MetaTrain {
        inputs: Vec<PathBuf>,
        /// Share of each training split used for meta-training.
        #[arg(long)]
        subset_fraction: Option<f64>,
    },
    /// Train ensembles under one action source and report test AUCPRC.
    Train {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long, value_enum)]
        mode: Option<TrainMode>,
        #[arg(long)]
        sampler: Option<PathBuf>,
        /// Action for `--mode constant`.
        #[arg(long)]
        mu: Option<f64>,
    },
    /// Trained policy vs untrained policy vs random under-sampling.
    Ablation {
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// MESA vs random under-sampling under label flip noise in the training split.
    NoiseSweep {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long, value_parser = list::<f64>)]
        ratios: Option<List<f64>>,
    },
    /// Apply a meta-trained sampler to another task without retraining.
    Transfer {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        sampler: Option<PathBuf>,
        /// Sampler meta-trained on the target task itself.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
}

fn apply_eval(run: &mut RunConfig, eval: EvalArgs) {
    if let Some(p) = eval.input {
        run.inputs = vec![p];
    }
    if let Some(k) = eval.k {
        run.k = k.0;
    }
}

fn resolve(cli: Cli) -> Result<(Command, RunConfig, PathBuf), CliError> {
    let mut run = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seeds) = cli.seed {
        run.seeds = seeds.0;
    }
    if let Some(learner) = cli.learner {
        run.sac.learner = learner;
    }
    if let Some(col) = cli.label_column {
        run.label_column = LabelColumn::parse(&col);
    }
    let command = match cli.command {
        Cmd::GenerateToy { overlap, n_majority, n_minority } => {
            run.toy.overlap = overlap.unwrap_or(run.toy.overlap);
            run.toy.n_majority = n_majority.unwrap_or(run.toy.n_majority);
            run.toy.n_minority = n_minority.unwrap_or(run.toy.n_minority);
            Command::GenerateToy
        }
        Cmd::MetaTrain { inputs, subset_fraction } => {
            if !inputs.is_empty() {
                run.inputs = inputs;
            }
            run.subset_fraction = subset_fraction.unwrap_or(run.subset_fraction);
            Command::MetaTrain
        }
        Cmd::Train { eval, mode, sampler, mu } => {
            apply_eval(&mut run, eval);
            run.mode = mode.unwrap_or(run.mode);
            run.sampler = sampler.or(run.sampler);
            run.mu = mu.unwrap_or(run.mu);
            Command::Train
        }
        Cmd::Ablation { eval } => {
            apply_eval(&mut run, eval);
            Command::Ablation
        }
        Cmd::NoiseSweep { eval, ratios } => {
            apply_eval(&mut run, eval);
            if let Some(r) = ratios {
                run.noise_ratios = r.0;
            }
            Command::NoiseSweep
        }
        Cmd::Transfer { eval, sampler, reference } => {
            apply_eval(&mut run, eval);
            run.sampler = sampler.or(run.sampler);
            run.reference = reference.or(run.reference);
            Command::Transfer
        }
    };
    Ok((command, run, cli.out))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = resolve(cli).and_then(|(command, run, out)| run_command(command, &run, &out));
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
