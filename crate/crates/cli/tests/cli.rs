//! End-to-end tests of the `ancm` binary: every command, the exit-code
//! contract, and the bit-exact replay guarantees.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

/// The binary under test, with the seed environment cleared so tests are
/// hermetic; the env-fallback tests set it explicitly.
fn ancm(dir: &Path) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ancm"));
    cmd.current_dir(dir);
    cmd.env_remove("ANCM_SEED");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn assert_ok(output: &Output) {
    assert!(
        output.status.success(),
        "expected success, got {:?}\nstderr: {}",
        output.status.code(),
        stderr_of(output)
    );
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        stdout_of(output),
        stderr_of(output)
    );
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

fn read_text(dir: &Path, name: &str) -> String {
    String::from_utf8(read(dir, name)).expect("utf-8 artifact")
}

/// Trains the standard quick blobs run used across these tests.
fn train_blobs(dir: &Path, loss: &str, extra: &[&str], out_dir: &str) -> Output {
    let mut cmd = ancm(dir);
    cmd.args([
        "train",
        "--dataset",
        "blobs",
        "--preset",
        "toy2d",
        "--loss",
        loss,
        "--lr",
        "0.05",
        "--batch-size",
        "32",
        "--epochs",
        "12",
        "--seed",
        "5",
        "--out-dir",
        out_dir,
    ]);
    if loss != "softmax" {
        cmd.args(["--anchor-method", "polar2d"]);
    }
    cmd.args(extra);
    run(&mut cmd)
}

/// Parses one column of the train-log CSV for the final epoch.
fn last_log_field(log: &str, column: usize) -> f64 {
    let line = log.lines().last().expect("log has epochs");
    line.split(',').nth(column).expect("column").parse().expect("numeric field")
}

#[test]
fn gen_anchors_reports_the_polar_spacing() {
    let tmp = TempDir::new().unwrap();
    let out = run(ancm(tmp.path()).args(["gen-anchors", "--method", "polar2d", "--classes", "10"]));
    assert_ok(&out);
    assert!(
        stdout_of(&out).contains("min angle 36.000°"),
        "stdout: {}",
        stdout_of(&out)
    );
    let csv = read_text(tmp.path(), "anchors.csv");
    assert_eq!(csv.lines().count(), 11, "header plus one row per class");
    assert!(csv.starts_with("class,dim_0,dim_1\n"));
}

#[test]
fn orthonormal_with_too_many_classes_exits_2() {
    let tmp = TempDir::new().unwrap();
    let out = run(ancm(tmp.path()).args([
        "gen-anchors",
        "--method",
        "orthonormal",
        "--classes",
        "100",
        "--dim",
        "64",
    ]));
    assert_exit(&out, 2);
    assert!(stderr_of(&out).contains("classes <= dim"), "{}", stderr_of(&out));
}

#[test]
fn repulsion_runs_are_reproducible() {
    let tmp = TempDir::new().unwrap();
    for name in ["a.csv", "b.csv"] {
        let out = run(ancm(tmp.path()).args([
            "gen-anchors",
            "--method",
            "repulsion",
            "--classes",
            "100",
            "--dim",
            "64",
            "--seed",
            "7",
            "--iterations",
            "120",
            "--out",
            name,
        ]));
        assert_ok(&out);
    }
    assert_eq!(read(tmp.path(), "a.csv"), read(tmp.path(), "b.csv"));
}

#[test]
fn training_fits_separable_blobs() {
    let tmp = TempDir::new().unwrap();
    let out = train_blobs(tmp.path(), "encm", &[], "run");
    assert_ok(&out);

    for artifact in ["checkpoint.bin", "train_log.csv", "anchors.csv", "run_manifest.txt"] {
        assert!(tmp.path().join("run").join(artifact).exists(), "missing {artifact}");
    }

    let log = read_text(tmp.path(), "run/train_log.csv");
    let first_loss: f64 = log
        .lines()
        .nth(1)
        .and_then(|l| l.split(',').nth(1))
        .unwrap()
        .parse()
        .unwrap();
    let final_loss = last_log_field(&log, 1);
    let final_acc = last_log_field(&log, 2);
    assert!(
        final_loss < first_loss,
        "loss should trend down: first {first_loss}, last {final_loss}"
    );
    assert_eq!(final_acc, 1.0, "separable blobs should be memorized");
}

#[test]
fn identical_configs_produce_identical_artifacts() {
    let tmp = TempDir::new().unwrap();
    assert_ok(&train_blobs(tmp.path(), "cncm", &[], "one"));
    assert_ok(&train_blobs(tmp.path(), "cncm", &[], "two"));
    assert_eq!(read(tmp.path(), "one/train_log.csv"), read(tmp.path(), "two/train_log.csv"));
    assert_eq!(read(tmp.path(), "one/checkpoint.bin"), read(tmp.path(), "two/checkpoint.bin"));
}

#[test]
fn the_manifest_replays_a_run_bit_exactly() {
    let tmp = TempDir::new().unwrap();
    assert_ok(&train_blobs(tmp.path(), "encm", &["--spread", "0.15"], "original"));

    // Replay entirely from the written manifest, redirecting only the
    // output directory.
    let out = run(ancm(tmp.path()).args([
        "train",
        "--config",
        "original/run_manifest.txt",
        "--out-dir",
        "replayed",
    ]));
    assert_ok(&out);

    assert_eq!(
        read(tmp.path(), "original/checkpoint.bin"),
        read(tmp.path(), "replayed/checkpoint.bin")
    );
    assert_eq!(
        read(tmp.path(), "original/train_log.csv"),
        read(tmp.path(), "replayed/train_log.csv")
    );
    assert_eq!(
        read(tmp.path(), "original/anchors.csv"),
        read(tmp.path(), "replayed/anchors.csv")
    );
}

#[test]
fn softmax_with_anchor_settings_exits_2() {
    let tmp = TempDir::new().unwrap();
    let out = run(ancm(tmp.path()).args([
        "train",
        "--dataset",
        "blobs",
        "--preset",
        "toy2d",
        "--loss",
        "softmax",
        "--anchor-method",
        "polar2d",
    ]));
    assert_exit(&out, 2);
    assert!(
        stderr_of(&out).contains("forbids anchor settings"),
        "{}",
        stderr_of(&out)
    );
}

#[test]
fn divergence_aborts_with_exit_3() {
    let tmp = TempDir::new().unwrap();
    let out = run(ancm(tmp.path()).args([
        "train",
        "--dataset",
        "blobs",
        "--preset",
        "toy2d",
        "--loss",
        "encm",
        "--anchor-method",
        "polar2d",
        "--lr",
        "1e12",
        "--epochs",
        "3",
        "--out-dir",
        "blown",
    ]));
    assert_exit(&out, 3);
    assert!(stderr_of(&out).contains("non-finite loss"), "{}", stderr_of(&out));
}

#[test]
fn evaluating_a_fit_run_reports_zero_error() {
    let tmp = TempDir::new().unwrap();
    assert_ok(&train_blobs(tmp.path(), "encm", &[], "run"));

    let out = run(ancm(tmp.path()).args([
        "eval",
        "--checkpoint",
        "run/checkpoint.bin",
        "--config",
        "run/run_manifest.txt",
        "--split",
        "train",
    ]));
    assert_ok(&out);
    let text = stdout_of(&out);
    assert!(text.contains("error rate: 0.00%"), "{text}");
    assert!(text.contains("mean euclidean distance to own anchor"), "{text}");
    assert!(text.contains("mean angular distance to own anchor"), "{text}");
    assert!(tmp.path().join("run/eval_report.txt").exists());
}

#[test]
fn untrained_networks_score_near_chance() {
    // Ten balanced classes, zero training epochs: predictions come from a
    // randomly initialized network, so the error rate sits near 90%.
    // Averaged over seeds it must land within 10 points of chance.
    let tmp = TempDir::new().unwrap();
    let mut total = 0.0;
    let seeds = ["1", "2", "3", "4", "5"];
    for seed in seeds {
        let dir = format!("run-{seed}");
        let out = run(ancm(tmp.path()).args([
            "train",
            "--dataset",
            "blobs",
            "--preset",
            "toy2d",
            "--loss",
            "encm",
            "--anchor-method",
            "polar2d",
            "--classes",
            "10",
            "--per-class",
            "50",
            "--epochs",
            "0",
            "--seed",
            seed,
            "--out-dir",
            &dir,
        ]));
        assert_ok(&out);

        let eval = run(ancm(tmp.path()).args([
            "eval",
            "--checkpoint",
            &format!("{dir}/checkpoint.bin"),
            "--config",
            &format!("{dir}/run_manifest.txt"),
        ]));
        assert_ok(&eval);
        let text = stdout_of(&eval);
        let rate: f64 = text
            .lines()
            .find_map(|l| l.strip_prefix("error rate: "))
            .and_then(|l| l.strip_suffix('%'))
            .expect("error rate line")
            .parse()
            .expect("numeric rate");
        total += rate;
    }
    let mean = total / seeds.len() as f64;
    assert!(
        (80.0..=100.0).contains(&mean),
        "ten-class chance error should be near 90%, got mean {mean:.2}%"
    );
}

#[test]
fn mismatched_anchor_dimensions_exit_2() {
    let tmp = TempDir::new().unwrap();
    assert_ok(&train_blobs(tmp.path(), "encm", &[], "run"));
    let out = run(ancm(tmp.path()).args([
        "gen-anchors",
        "--method",
        "orthonormal",
        "--classes",
        "4",
        "--dim",
        "64",
        "--out",
        "wide.csv",
    ]));
    assert_ok(&out);

    let eval = run(ancm(tmp.path()).args([
        "eval",
        "--checkpoint",
        "run/checkpoint.bin",
        "--config",
        "run/run_manifest.txt",
        "--anchors",
        "wide.csv",
    ]));
    assert_exit(&eval, 2);
    assert!(stderr_of(&eval).contains("dimension mismatch"), "{}", stderr_of(&eval));
}

/// Parses `label,feat_0,feat_1` rows.
fn parse_features(csv: &str) -> Vec<(usize, Vec<f64>)> {
    csv.lines()
        .skip(1)
        .map(|line| {
            let mut fields = line.split(',');
            let label = fields.next().unwrap().parse().unwrap();
            (label, fields.map(|v| v.parse().unwrap()).collect())
        })
        .collect()
}

/// Parses `class,dim_0,...` rows into per-class anchor vectors.
fn parse_anchors(csv: &str) -> Vec<Vec<f64>> {
    let mut rows: Vec<(usize, Vec<f64>)> = csv
        .lines()
        .skip(1)
        .map(|line| {
            let mut fields = line.split(',');
            let class = fields.next().unwrap().parse().unwrap();
            (class, fields.map(|v| v.parse().unwrap()).collect())
        })
        .collect();
    rows.sort_by_key(|(class, _)| *class);
    rows.into_iter().map(|(_, v)| v).collect()
}

#[test]
fn exported_features_reproduce_the_eval_distance() {
    let tmp = TempDir::new().unwrap();
    assert_ok(&train_blobs(tmp.path(), "encm", &[], "run"));
    assert_ok(&run(ancm(tmp.path()).args([
        "eval",
        "--checkpoint",
        "run/checkpoint.bin",
        "--config",
        "run/run_manifest.txt",
    ])));
    let export = run(ancm(tmp.path()).args([
        "export-features",
        "--checkpoint",
        "run/checkpoint.bin",
        "--config",
        "run/run_manifest.txt",
        "--out",
        "features.csv",
    ]));
    assert_ok(&export);

    // Row count: 4 classes × 200 points.
    let csv = read_text(tmp.path(), "features.csv");
    assert_eq!(csv.lines().count(), 801, "header plus one row per sample");

    // Re-export must be byte-identical (evaluation mode is deterministic).
    assert_ok(&run(ancm(tmp.path()).args([
        "export-features",
        "--checkpoint",
        "run/checkpoint.bin",
        "--config",
        "run/run_manifest.txt",
        "--out",
        "features2.csv",
    ])));
    assert_eq!(read(tmp.path(), "features.csv"), read(tmp.path(), "features2.csv"));

    // Recomputing the mean own-anchor distance from the CSVs alone must
    // reproduce the eval report's number.
    let features = parse_features(&csv);
    let anchors = parse_anchors(&read_text(tmp.path(), "run/anchors.csv"));
    let mut total = 0.0;
    for (label, f) in &features {
        let a = &anchors[*label];
        let sq: f64 = f.iter().zip(a).map(|(x, y)| (x - y) * (x - y)).sum();
        total += sq.sqrt();
    }
    let recomputed = total / features.len() as f64;

    let report = read_text(tmp.path(), "run/eval_report.txt");
    let reported: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("mean euclidean distance to own anchor: "))
        .expect("distance line")
        .parse()
        .expect("numeric distance");
    assert!(
        (recomputed - reported).abs() < 1e-9,
        "recomputed {recomputed} vs reported {reported}"
    );
}

#[test]
fn plots_scale_anchors_for_display_only() {
    let tmp = TempDir::new().unwrap();
    assert_ok(&run(ancm(tmp.path()).args([
        "gen-anchors",
        "--method",
        "polar2d",
        "--classes",
        "2",
        "--out",
        "anchors.csv",
    ])));
    std::fs::write(
        tmp.path().join("features.csv"),
        "label,feat_0,feat_1\n0,0.9,0.1\n0,1.1,-0.1\n1,-0.95,0.05\n1,-1.05,0.0\n",
    )
    .unwrap();

    let plot = |out: &str| {
        run(ancm(tmp.path()).args([
            "plot",
            "--features",
            "features.csv",
            "--anchors",
            "anchors.csv",
            "--anchor-scale",
            "20",
            "--out",
            out,
        ]))
    };
    assert_ok(&plot("scatter.svg"));
    let svg = read_text(tmp.path(), "scatter.svg");

    // 4 point markers, 2 anchor stars.
    assert_eq!(svg.matches("<circle").count(), 4);
    assert_eq!(svg.matches("<path").count(), 2);

    // Star positions are exactly anchor_scale × the anchor rows.
    for anchor in parse_anchors(&read_text(tmp.path(), "anchors.csv")) {
        let expected = format!("translate({} {})", anchor[0] * 20.0, anchor[1] * 20.0);
        assert!(svg.contains(&expected), "missing {expected}");
    }

    // Determinism: identical inputs, identical bytes.
    assert_ok(&plot("scatter2.svg"));
    assert_eq!(read(tmp.path(), "scatter.svg"), read(tmp.path(), "scatter2.svg"));
}

#[test]
fn plotting_non_2d_features_exits_2() {
    let tmp = TempDir::new().unwrap();
    assert_ok(&run(ancm(tmp.path()).args([
        "gen-anchors",
        "--method",
        "polar2d",
        "--classes",
        "2",
        "--out",
        "anchors.csv",
    ])));
    std::fs::write(
        tmp.path().join("features.csv"),
        "label,feat_0,feat_1,feat_2\n0,1,2,3\n",
    )
    .unwrap();
    let out = run(ancm(tmp.path()).args([
        "plot",
        "--features",
        "features.csv",
        "--anchors",
        "anchors.csv",
    ]));
    assert_exit(&out, 2);
    assert!(
        stderr_of(&out).contains("2-dimensional feature layer"),
        "the error should point at 2-D exports: {}",
        stderr_of(&out)
    );
}

#[test]
fn the_seed_env_var_is_a_fallback_only() {
    let tmp = TempDir::new().unwrap();

    // No --seed: the environment supplies it.
    let mut cmd = ancm(tmp.path());
    cmd.env("ANCM_SEED", "123");
    cmd.args([
        "train",
        "--dataset",
        "blobs",
        "--preset",
        "toy2d",
        "--loss",
        "encm",
        "--anchor-method",
        "polar2d",
        "--epochs",
        "0",
        "--out-dir",
        "env-run",
    ]);
    assert_ok(&run(&mut cmd));
    let manifest = read_text(tmp.path(), "env-run/run_manifest.txt");
    assert!(manifest.contains("seed=123\n"), "{manifest}");

    // An explicit flag wins over the environment.
    let mut cmd = ancm(tmp.path());
    cmd.env("ANCM_SEED", "123");
    cmd.args([
        "train",
        "--dataset",
        "blobs",
        "--preset",
        "toy2d",
        "--loss",
        "encm",
        "--anchor-method",
        "polar2d",
        "--epochs",
        "0",
        "--seed",
        "7",
        "--out-dir",
        "flag-run",
    ]);
    assert_ok(&run(&mut cmd));
    let manifest = read_text(tmp.path(), "flag-run/run_manifest.txt");
    assert!(manifest.contains("seed=7\n"), "{manifest}");
}
