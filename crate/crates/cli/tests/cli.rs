//! End-to-end tests of the `reident-ens` binary: every subcommand, the
//! artifact inventory, the exit-code contract, and determinism across
//! reruns, seeds, and thread counts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_reident-ens");

/// A tiny two-model synthetic experiment that runs in well under a second.
fn tiny_config(out_dir: &Path) -> String {
    format!(
        r#"
output_dir = "{}"

[dataset.synthetic]
subjects = 8
views_per_subject = 3
width = 32
height = 32
noise_sigma = 8.0
shift_max = 2
seed = 7

[settings]
k_folds = 3
max_rank = 5
seed = 11
correlation_trials = 2000
ensembles = ["concatenation", "majority_vote"]

[analysis]
correlation = true

[[sub_model]]
name = "brightness"
feature = {{ method = "brightness" }}
hidden = [12]
embedding_dim = 6
train = {{ epochs = 3, batch_size = 64 }}

[[sub_model]]
name = "avg_color"
feature = {{ method = "avg_color" }}
hidden = [12]
embedding_dim = 6
train = {{ epochs = 3, batch_size = 64 }}
"#,
        out_dir.display().to_string().replace('\\', "/")
    )
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("REIDENT_ENS_LOG", "error")
        .output()
        .expect("binary launches")
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn run_writes_the_complete_artifact_inventory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path(), &tiny_config(&out));

    let output = run(&["run", "--config", config.to_str().unwrap()]);
    assert_exit(&output, 0);
    assert!(
        output.stdout.is_empty(),
        "run must write data to files, not stdout: {:?}",
        String::from_utf8_lossy(&output.stdout)
    );

    for file in [
        "report.json",
        "report.txt",
        "run_manifest.json",
        "figures/cmc.csv",
        "figures/rank1.csv",
        "figures/per_rotation_rank1.csv",
        "figures/training_loss.csv",
        "figures/correlation.csv",
        "models/rotation_0/brightness.model",
        "models/rotation_1/avg_color.model",
        "transforms/rotation_0/concatenation.transform",
        "transforms/rotation_1/majority_vote.transform",
        "embeddings/rotation_0/brightness.csv",
        "embeddings/rotation_1/avg_color.csv",
    ] {
        assert!(out.join(file).is_file(), "missing artifact {file}");
    }

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["seed"], 11);
    assert!(report["dataset_hash"]
        .as_str()
        .unwrap()
        .starts_with("sha256:"));
    // The embedded config echoes every default so the report alone
    // documents what ran.
    assert_eq!(report["config"]["settings"]["k_folds"], 3);
    assert_eq!(report["config"]["sub_model"][0]["train"]["margin"], 1.0);
    assert_eq!(
        report["config"]["settings"]["ensemble_fit"]["accuracy_budget"],
        200
    );
    assert_eq!(report["evaluation"]["methods"].as_array().unwrap().len(), 4);
    assert!(report["evaluation"]["correlation"]["matrix"][0][0].as_f64().unwrap() > 0.99);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "run");
    assert_eq!(manifest["threads"], 1);
    let listed = manifest["artifacts"].as_array().unwrap();
    assert!(listed.iter().any(|a| a == "report.json"));
    assert!(listed.iter().any(|a| a == "embeddings/rotation_0/brightness.csv"));

    // An embedding dump holds one row per evaluation image with the
    // documented header.
    let dump = fs::read_to_string(out.join("embeddings/rotation_0/brightness.csv")).unwrap();
    let first = dump.lines().next().unwrap();
    assert_eq!(first, "subject_id,view_id,e0,e1,e2,e3,e4,e5");
}

#[test]
fn reruns_are_byte_identical_and_thread_count_is_irrelevant() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let out_c = dir.path().join("c");
    let config = write_config(dir.path(), &tiny_config(&out_a));
    let c = config.to_str().unwrap();

    assert_exit(&run(&["run", "--config", c, "--stable-output"]), 0);
    assert_exit(
        &run(&["run", "--config", c, "--out", out_b.to_str().unwrap(), "--stable-output"]),
        0,
    );
    assert_exit(
        &run(&[
            "run",
            "--config",
            c,
            "--out",
            out_c.to_str().unwrap(),
            "--threads",
            "4",
            "--stable-output",
        ]),
        0,
    );

    let a = fs::read(out_a.join("report.json")).unwrap();
    let b = fs::read(out_b.join("report.json")).unwrap();
    let c_bytes = fs::read(out_c.join("report.json")).unwrap();
    assert_eq!(a, b, "identical invocations must produce identical bytes");
    assert_eq!(a, c_bytes, "thread count must not change any result");
}

#[test]
fn seed_override_changes_results_and_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let config = write_config(dir.path(), &tiny_config(&out_a));
    let c = config.to_str().unwrap();

    assert_exit(&run(&["run", "--config", c, "--stable-output"]), 0);
    assert_exit(
        &run(&[
            "run", "--config", c, "--out", out_b.to_str().unwrap(), "--seed", "99",
            "--stable-output",
        ]),
        0,
    );

    let a: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_a.join("report.json")).unwrap()).unwrap();
    let b: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_b.join("report.json")).unwrap()).unwrap();
    assert_eq!(a["seed"], 11);
    assert_eq!(b["seed"], 99);
    assert_eq!(b["config"]["settings"]["seed"], 99, "override reaches the echo");
    assert_ne!(
        a["evaluation"]["methods"], b["evaluation"]["methods"],
        "another seed reshuffles folds and inits, so accuracies move"
    );
}

#[test]
fn compare_follows_the_exit_code_contract() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let config = write_config(dir.path(), &tiny_config(&out_a));
    let c = config.to_str().unwrap();
    assert_exit(&run(&["run", "--config", c, "--stable-output"]), 0);
    assert_exit(
        &run(&["run", "--config", c, "--out", out_b.to_str().unwrap(), "--seed", "99", "--stable-output"]),
        0,
    );
    let report_a = out_a.join("report.json");
    let report_b = out_b.join("report.json");
    let (ra, rb) = (report_a.to_str().unwrap(), report_b.to_str().unwrap());

    // A report against itself: no divergences, nothing on stdout, exit 0.
    let same = run(&["compare", ra, ra]);
    assert_exit(&same, 0);
    assert!(same.stdout.is_empty());

    // Different seeds diverge: every line names a (method, rank) cell.
    let diff = run(&["compare", ra, rb, "--tolerance", "0.001"]);
    assert_exit(&diff, 1);
    let stdout = String::from_utf8_lossy(&diff.stdout);
    assert!(stdout.lines().count() > 0);
    assert!(stdout.lines().all(|l| l.contains(" rank-")), "{stdout}");

    // A huge tolerance accepts everything.
    assert_exit(&run(&["compare", ra, rb, "--tolerance", "1.0"]), 0);

    // Structurally different reports are a usage error, not a divergence.
    let mut mangled: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_a).unwrap()).unwrap();
    mangled["evaluation"]["methods"][0]["name"] = "renamed".into();
    let mangled_path = dir.path().join("mangled.json");
    fs::write(&mangled_path, serde_json::to_string(&mangled).unwrap()).unwrap();
    let structural = run(&["compare", ra, mangled_path.to_str().unwrap()]);
    assert_exit(&structural, 2);
}

#[test]
fn config_mistakes_exit_2_with_a_pointed_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    // No sub-models at all.
    let empty = write_config(
        dir.path(),
        "[dataset.synthetic]\nsubjects = 6\nviews_per_subject = 3\n",
    );
    let output = run(&["run", "--config", empty.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_exit(&output, 2);
    assert!(
        String::from_utf8_lossy(&output.stderr).contains("at least one sub-model required"),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );

    // A typo in a key.
    let typo = tiny_config(&out).replace("k_folds", "k_fold");
    let typo_path = dir.path().join("typo.toml");
    fs::write(&typo_path, typo).unwrap();
    let output = run(&["run", "--config", typo_path.to_str().unwrap()]);
    assert_exit(&output, 2);
    assert!(String::from_utf8_lossy(&output.stderr).contains("k_fold"));

    // A config file that does not exist.
    let missing = dir.path().join("missing.toml");
    assert_exit(&run(&["run", "--config", missing.to_str().unwrap()]), 2);

    // No output directory anywhere.
    let no_out = tiny_config(&out).replace(&format!("output_dir = \"{}\"\n", out.display()), "");
    let no_out_path = dir.path().join("no_out.toml");
    fs::write(&no_out_path, no_out).unwrap();
    let output = run(&["run", "--config", no_out_path.to_str().unwrap()]);
    assert_exit(&output, 2);
    assert!(String::from_utf8_lossy(&output.stderr).contains("--out"));
}

#[test]
fn runtime_failures_exit_1_and_name_the_fold() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    // A weight-search budget below the number of sub-models fails during
    // ensemble fitting, not at validation: the budget itself is legal.
    let text = tiny_config(&out)
        .replace(
            "ensembles = [\"concatenation\", \"majority_vote\"]",
            "ensembles = [\"weighted_accuracy\"]",
        )
        + "\n[settings.ensemble_fit]\naccuracy_budget = 1\n";
    let config = write_config(dir.path(), &text);

    let output = run(&["run", "--config", config.to_str().unwrap()]);
    assert_exit(&output, 1);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("fold rotation"), "{stderr}");
    assert!(stderr.contains("weighted_accuracy"), "{stderr}");
}

#[test]
fn synth_run_round_trip_reproduces_the_in_memory_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    assert_exit(
        &run(&[
            "synth", "--out", corpus.to_str().unwrap(), "--subjects", "8", "--views", "3",
            "--width", "32", "--height", "32", "--seed", "7", "--noise-sigma", "8.0",
            "--shift-max", "2",
        ]),
        0,
    );
    assert!(corpus.join("manifest.csv").is_file());
    assert!(corpus.join("synthetic_params.json").is_file());
    assert_eq!(fs::read_dir(corpus.join("images")).unwrap().count(), 24);

    // Running from the PNG corpus must give exactly the same evaluation as
    // the in-memory synthetic corpus: PNG encoding is lossless.
    let out_mem = dir.path().join("mem");
    let out_png = dir.path().join("png");
    let config_mem = write_config(dir.path(), &tiny_config(&out_mem));
    let from_png = tiny_config(&out_png).replace(
        "[dataset.synthetic]\nsubjects = 8\nviews_per_subject = 3\nwidth = 32\nheight = 32\nnoise_sigma = 8.0\nshift_max = 2\nseed = 7",
        &format!("[dataset]\nmanifest = \"{}\"", corpus.join("manifest.csv").display()),
    );
    assert!(from_png.contains("[dataset]"), "replacement must have matched");
    let config_png_path = dir.path().join("config_png.toml");
    fs::write(&config_png_path, from_png).unwrap();

    assert_exit(&run(&["run", "--config", config_mem.to_str().unwrap(), "--stable-output"]), 0);
    assert_exit(&run(&["run", "--config", config_png_path.to_str().unwrap(), "--stable-output"]), 0);

    let mem: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_mem.join("report.json")).unwrap()).unwrap();
    let png: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_png.join("report.json")).unwrap()).unwrap();
    assert_eq!(
        mem["evaluation"], png["evaluation"],
        "decoding the PNGs must reproduce the generated corpus bit for bit"
    );
}

#[test]
fn correlate_reads_dumps_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path(), &tiny_config(&out));
    assert_exit(&run(&["run", "--config", config.to_str().unwrap()]), 0);

    let dump_a = out.join("embeddings/rotation_0/brightness.csv");
    let dump_b = out.join("embeddings/rotation_0/avg_color.csv");
    let corr_a = dir.path().join("corr_a");
    let corr_b = dir.path().join("corr_b");
    for target in [&corr_a, &corr_b] {
        assert_exit(
            &run(&[
                "correlate",
                dump_a.to_str().unwrap(),
                dump_b.to_str().unwrap(),
                "--out",
                target.to_str().unwrap(),
                "--trials",
                "2000",
                "--seed",
                "5",
            ]),
            0,
        );
    }
    let a = fs::read(corr_a.join("correlation.json")).unwrap();
    let b = fs::read(corr_b.join("correlation.json")).unwrap();
    assert_eq!(a, b, "same dumps, same seed, same matrix");

    let matrix: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(matrix["names"][0], "brightness");
    assert_eq!(matrix["matrix"][0][0], 1.0, "self-correlation is exact");
    assert_eq!(matrix["matrix"][0][1], matrix["matrix"][1][0], "symmetric");

    // One dump alone is a usage error.
    assert_exit(
        &run(&["correlate", dump_a.to_str().unwrap(), "--out", corr_a.to_str().unwrap()]),
        2,
    );

    // Dumps over different rows cannot be correlated.
    let rotated = out.join("embeddings/rotation_1/avg_color.csv");
    let mismatch = run(&[
        "correlate",
        dump_a.to_str().unwrap(),
        rotated.to_str().unwrap(),
        "--out",
        corr_a.to_str().unwrap(),
    ]);
    assert_exit(&mismatch, 2);
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("different rows"));
}

#[test]
fn ablate_adds_the_ablation_sections() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let text = tiny_config(&out)
        + "\n[analysis.size_sweep_placeholder]\n"; // replaced below
    let text = text.replace(
        "[analysis]\ncorrelation = true",
        "[analysis]\ncorrelation = true\nsize_sweep = [3, 6]\nsize_sweep_model = \"avg_color\"",
    );
    let text = text.replace("\n[analysis.size_sweep_placeholder]\n", "");
    let config = write_config(dir.path(), &text);

    assert_exit(&run(&["ablate", "--config", config.to_str().unwrap()]), 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let loo = &report["evaluation"]["leave_one_out"];
    assert_eq!(loo["ensemble"], "concatenation");
    assert_eq!(loo["deltas"].as_array().unwrap().len(), 2);
    let pairwise = &report["evaluation"]["pairwise_improvement"];
    assert_eq!(pairwise["names"].as_array().unwrap().len(), 2);
    let sweep = &report["evaluation"]["size_sweep"];
    assert_eq!(sweep["sizes"], serde_json::json!([3, 6]));
    assert_eq!(sweep["method"], "avg_color");
    assert!(out.join("figures/leave_one_out.csv").is_file());
    assert!(out.join("figures/size_sweep.csv").is_file());

    // Skipping the sweep leaves the section out.
    let out2 = dir.path().join("out2");
    assert_exit(
        &run(&[
            "ablate", "--config", config.to_str().unwrap(), "--out", out2.to_str().unwrap(),
            "--skip-size-sweep",
        ]),
        0,
    );
    let report2: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out2.join("report.json")).unwrap()).unwrap();
    assert!(report2["evaluation"]["size_sweep"].is_null());
}

#[test]
fn log_level_env_var_controls_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path(), &tiny_config(&out));

    let quiet = Command::new(BIN)
        .args(["run", "--config", config.to_str().unwrap(), "--stable-output"])
        .env("REIDENT_ENS_LOG", "error")
        .output()
        .unwrap();
    assert!(quiet.status.success());
    assert!(quiet.stderr.is_empty(), "{}", String::from_utf8_lossy(&quiet.stderr));

    let chatty = Command::new(BIN)
        .args(["run", "--config", config.to_str().unwrap(), "--stable-output"])
        .env("REIDENT_ENS_LOG", "info")
        .output()
        .unwrap();
    assert!(chatty.status.success());
    let stderr = String::from_utf8_lossy(&chatty.stderr);
    assert!(stderr.contains("dataset ready"), "{stderr}");
}
