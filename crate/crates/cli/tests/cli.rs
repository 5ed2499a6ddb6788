use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mesa_cli::report::read_table;
use mesa_cli::RunConfig;
use mesa_core::dataset::{load_csv, LabelColumn};

const TINY: &str = r#"{
    "toy": {"n_majority": 200, "n_minority": 20},
    "k": [3],
    "sac": {"k": 3, "batch_size": 8, "replay_capacity": 50, "random_steps": 10, "gradient_steps": 20},
    "noise_ratios": [0.0, 0.25],
    "grid_resolution": 4
}"#;

fn mesa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mesa"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = mesa(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    mesa(dir, args).status.code().unwrap()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.json"), TINY).unwrap();
    dir
}

/// Runs every command once with the tiny config into `out`.
fn run_all(dir: &Path, out: &str) {
    let c = ["--config", "tiny.json", "--out", out];
    ok(dir, &[&["generate-toy", "--seed", "0-1"], &c[..]].concat());
    let toy = format!("{out}/toy_seed0.csv");
    let sampler = format!("{out}/sampler_seed5.json");
    ok(dir, &[&["meta-train", &toy, "--seed", "5"], &c[..]].concat());
    ok(dir, &[&["train", &toy, "--sampler", &sampler, "--seed", "0,1"], &c[..]].concat());
    ok(dir, &[&["ablation", "--seed", "0-1"], &c[..]].concat());
    ok(dir, &[&["noise-sweep", "--seed", "0"], &c[..]].concat());
    ok(
        dir,
        &[&["transfer", &toy, "--sampler", &sampler, "--reference", &sampler, "--seed", "2"], &c[..]].concat(),
    );
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn default_toy_has_paper_counts() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate-toy", "--out", "o"]);
    let ds = load_csv(dir.path().join("o/toy_seed0.csv"), &LabelColumn::default()).unwrap();
    assert_eq!(ds.n_rows(), 2200);
    assert_eq!(ds.n_minority(), 200);
    assert_eq!(ds.n_features(), 2);
}

#[test]
fn toy_generation_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["generate-toy", "--seed", "4,5", "--out", "a", "--n-majority", "50", "--n-minority", "5"]);
    ok(p, &["generate-toy", "--seed", "4", "--out", "b", "--n-majority", "50", "--n-minority", "5"]);
    // Skip the config row, which records the differing seed lists.
    let body = |f: &str| {
        let text = std::fs::read_to_string(p.join(f)).unwrap();
        text.split_once('\n').unwrap().1.to_string()
    };
    assert_eq!(body("a/toy_seed4.csv"), body("b/toy_seed4.csv"));
    assert_ne!(body("a/toy_seed4.csv"), body("a/toy_seed5.csv"));
}

#[test]
fn usage_and_config_errors_exit_1() {
    let dir = workspace();
    let p = dir.path();
    assert_eq!(code(p, &["generate-toy", "--overlap", "1.5", "--out", "o"]), 1);
    assert_eq!(code(p, &["bogus"]), 1);
    assert_eq!(code(p, &["ablation", "--k", "x"]), 1);
    std::fs::write(p.join("bad.json"), r#"{"seedz": [1]}"#).unwrap();
    assert_eq!(code(p, &["ablation", "--config", "bad.json"]), 1);
    assert_eq!(code(p, &["transfer", "--config", "tiny.json", "--out", "o"]), 1);
    assert_eq!(code(p, &["train", "--config", "tiny.json", "--out", "o"]), 1);
}

#[test]
fn every_command_rejects_an_empty_seed_list() {
    let dir = workspace();
    for cmd in ["generate-toy", "meta-train", "train", "ablation", "noise-sweep", "transfer"] {
        assert_eq!(code(dir.path(), &[cmd, "--config", "tiny.json", "--seed", "", "--out", "o"]), 1, "{cmd}");
    }
    assert!(!dir.path().join("o").exists());
}

#[test]
fn data_errors_exit_2() {
    let dir = workspace();
    let p = dir.path();
    let args = ["--config", "tiny.json", "--mode", "random-sampling", "--out", "o"];
    assert_eq!(code(p, &[&["train", "missing.csv"], &args[..]].concat()), 2);
    std::fs::write(p.join("one_class.csv"), "a,label\n1,0\n2,0\n3,0\n").unwrap();
    assert_eq!(code(p, &[&["train", "one_class.csv"], &args[..]].concat()), 2);
    std::fs::write(p.join("text.csv"), "a,label\nx,0\n2,1\n").unwrap();
    assert_eq!(code(p, &[&["train", "text.csv"], &args[..]].concat()), 2);
}

#[test]
fn divergent_training_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{"toy": {"n_majority": 200, "n_minority": 20},
        "sac": {"k": 3, "batch_size": 8, "replay_capacity": 50, "random_steps": 10,
                "gradient_steps": 40, "lr": 1e200, "lr_decay_ratio": 1.0}}"#;
    std::fs::write(dir.path().join("boom.json"), config).unwrap();
    assert_eq!(code(dir.path(), &["meta-train", "--config", "boom.json", "--out", "o"]), 3);
}

#[test]
fn outputs_are_byte_identical_across_reruns() {
    let dir = workspace();
    run_all(dir.path(), "first");
    run_all(dir.path(), "second");
    let a = files(&dir.path().join("first"));
    let b = files(&dir.path().join("second"));
    assert_eq!(a.len(), b.len());
    assert!(a.len() > 10);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.file_name(), y.file_name());
        let (bx, by) = (std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        // The recorded config mentions input paths under the output directory.
        let normalize = |s: Vec<u8>, dir: &str| String::from_utf8(s).unwrap().replace(dir, "OUT");
        assert_eq!(normalize(bx, "first/"), normalize(by, "second/"), "{x:?}");
    }
}

#[test]
fn result_tables_round_trip_with_config_and_schema() {
    let dir = workspace();
    run_all(dir.path(), "o");
    let expected: &[(&str, &[&str])] = &[
        ("training_log_seed5.csv", &["episode", "task", "step", "action", "reward", "valid_aucprc"]),
        ("losses_seed5.csv", &["update", "q_loss", "v_loss", "policy_loss"]),
        ("train_results.csv", &["seed", "k", "mode", "valid_aucprc", "test_aucprc"]),
        ("pr_curve_seed0_k3.csv", &["recall", "precision"]),
        ("grid_seed1_k3.csv", &["x0", "x1", "probability"]),
        ("ablation_runs.csv", &["seed", "k", "method", "test_aucprc"]),
        ("ablation_summary.csv", &["k", "method", "mean", "std", "mesa_gain_pct"]),
        ("noise_runs.csv", &["seed", "k", "noise_ratio", "method", "test_aucprc"]),
        ("noise_summary.csv", &["k", "noise_ratio", "method", "mean", "std"]),
        ("transfer_runs.csv", &["seed", "k", "method", "test_aucprc"]),
        ("transfer_summary.csv", &["k", "method", "mean", "std", "delta_vs_reference"]),
    ];
    for (name, columns) in expected {
        let (config, table) = read_table(&dir.path().join("o").join(name)).unwrap();
        assert_eq!(table.header, *columns, "{name}");
        assert!(!table.rows.is_empty(), "{name}");
        let mut value: serde_json::Value = serde_json::from_str(&config).unwrap();
        value.as_object_mut().unwrap().remove("command").unwrap();
        let run: RunConfig = serde_json::from_value(value).unwrap();
        assert_eq!(run.k, vec![3]);
        assert_eq!(run.sac.gradient_steps, 20);
    }
    let (_, grid) = read_table(&dir.path().join("o/grid_seed1_k3.csv")).unwrap();
    assert_eq!(grid.rows.len(), 16);
    let (_, results) = read_table(&dir.path().join("o/train_results.csv")).unwrap();
    for row in &results.rows {
        let auc: f64 = row[4].parse().unwrap();
        assert!((0.0..=1.0).contains(&auc));
    }
    let (_, summary) = read_table(&dir.path().join("o/ablation_summary.csv")).unwrap();
    let methods: Vec<&str> = summary.rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(methods, ["mesa", "random-policy", "random-sampling"]);
    assert_eq!(summary.rows[0][4], "0");
    let (_, transfer) = read_table(&dir.path().join("o/transfer_summary.csv")).unwrap();
    assert_eq!(transfer.rows[2][1], "reference");
    assert_eq!(transfer.rows[2][4], "0");
    let sampler = std::fs::read_to_string(dir.path().join("o/sampler_seed5.json")).unwrap();
    mesa_core::sac::load_sampler(&sampler).unwrap();
}
