use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gogan_cli::complete::SummaryTable;
use gogan_cli::manifest::{file_sha256, RunManifest};
use gogan_cli::report::read_gap_trace;

const POINTS: &str = "\
[run]
seed = 11

[data]
kind = mixture
samples = 356

[model]
latent_dim = 4
generator_hidden = 16
critic_hidden = 16

[train]
stages = STAGES
epochs = 1
batch_size = 16
n_critic = 2
epsilon = 0.005
eval_samples = 32

[report]
stride = 3
";

const IMAGES: &str = "\
[run]
seed = 4

[data]
kind = procedural
samples = 200
image_size = 12

[model]
latent_dim = 4
generator_hidden = 16
critic_hidden = 16

[train]
stages = 2
epochs = 1
batch_size = 16
n_critic = 2
epsilon = 0.005

[completion]
fractions = 0.09, 0.25, 0.49
steps = 5
restarts = 1
test_images = 3
";

fn gogan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gogan"))
        .args(args)
        .env("GOGAN_LOG_LEVEL", "error")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn points_config(dir: &Path, stages: usize) -> PathBuf {
    write_config(
        dir,
        &format!("points{stages}.ini"),
        &POINTS.replace("STAGES", &stages.to_string()),
    )
}

fn run_ok(args: &[&str]) -> String {
    let out = gogan(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    gogan(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn minimal_points_run_writes_declared_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = points_config(dir.path(), 1);
    let out = dir.path().join("run");
    run_ok(&["train", "--config", s(&cfg), "--out", s(&out)]);
    for f in [
        "dataset.txt",
        "gap_trace_stage_1.csv",
        "ordering_report.txt",
        "manifest_train.txt",
        "checkpoints/chain.txt",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let trace = read_gap_trace(&out.join("gap_trace_stage_1.csv")).unwrap();
    assert_eq!(trace.len(), 10);
    assert!(fs::read_to_string(out.join("ordering_report.txt"))
        .unwrap()
        .contains("single stage"));
    let dataset = fs::read_to_string(out.join("dataset.txt")).unwrap();
    assert!(
        dataset.contains("count = 356") && dataset.contains("seed = 11"),
        "{dataset}"
    );
    run_ok(&["verify-manifest", "--out", s(&out)]);
}

#[test]
fn two_stage_run_writes_two_checkpoints_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = points_config(dir.path(), 2);
    let out = dir.path().join("run");
    run_ok(&["train", "--config", s(&cfg), "--out", s(&out)]);
    let stage_dirs: Vec<_> = fs::read_dir(out.join("checkpoints"))
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .collect();
    assert_eq!(stage_dirs.len(), 2);
    assert!(out.join("gap_trace_stage_2.csv").is_file());
    assert!(!out.join("gap_trace_stage_3.csv").exists());
    let report = fs::read_to_string(out.join("ordering_report.txt")).unwrap();
    assert!(report.contains("stages 1 -> 2") && report.contains("overall:"));
}

#[test]
fn same_config_and_seed_reproduce_gap_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = points_config(dir.path(), 2);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    run_ok(&["train", "--config", s(&cfg), "--out", s(&a)]);
    run_ok(&["train", "--config", s(&cfg), "--out", s(&b)]);
    run_ok(&["train", "--config", s(&cfg), "--out", s(&c), "--seed", "12"]);
    for k in 1..=2 {
        let name = format!("gap_trace_stage_{k}.csv");
        assert_eq!(
            file_sha256(&a.join(&name)).unwrap(),
            file_sha256(&b.join(&name)).unwrap()
        );
        assert_ne!(
            file_sha256(&a.join(&name)).unwrap(),
            file_sha256(&c.join(&name)).unwrap()
        );
    }
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = write_config(dir.path(), "bad.ini", "[train]\nepohcs = 3\n");
    assert_eq!(code(&["train", "--config", s(&bad_key)]), 2);
    let bad_path = write_config(dir.path(), "path.ini", "[data]\nkind = csv\npath = missing.csv\n");
    assert_eq!(code(&["train", "--config", s(&bad_path)]), 2);
    assert_eq!(code(&["train", "--config", s(&dir.path().join("absent.ini"))]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["train", "--workers", "lots"]), 2);
}

#[test]
fn diverging_training_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = POINTS
        .replace("STAGES", "1")
        .replace("epsilon = 0.005", "epsilon = 0.005\nlr = 1e300");
    let cfg = write_config(dir.path(), "nan.ini", &text);
    let out = gogan(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("run"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));
}

#[test]
fn completion_needs_checkpoints_and_test_images() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "img.ini", IMAGES);
    let out = dir.path().join("run");
    assert_eq!(code(&["complete", "--config", s(&cfg), "--out", s(&out)]), 2);
    run_ok(&["train", "--config", s(&cfg), "--out", s(&out)]);
    let zero = write_config(
        dir.path(),
        "zero.ini",
        &IMAGES.replace("test_images = 3", "test_images = 0"),
    );
    let res = gogan(&["complete", "--config", s(&zero), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("no test images"));
    assert!(!out.join("completion_summary.csv").exists());

    let points = points_config(dir.path(), 1);
    let prun = dir.path().join("prun");
    run_ok(&["train", "--config", s(&points), "--out", s(&prun)]);
    assert_eq!(code(&["complete", "--config", s(&points), "--out", s(&prun)]), 2);
}

#[test]
fn completion_summary_has_table_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "img.ini", IMAGES);
    let out = dir.path().join("run");
    run_ok(&["train", "--config", s(&cfg), "--out", s(&out)]);
    run_ok(&["complete", "--config", s(&cfg), "--out", s(&out), "--workers", "2"]);

    let table = SummaryTable::from_csv(&fs::read_to_string(out.join("completion_summary.csv")).unwrap()).unwrap();
    assert_eq!(table.fractions, vec![0.09, 0.25, 0.49]);
    let labels: Vec<(String, String)> = table.rows.iter().map(|r| (r.model.clone(), r.metric.clone())).collect();
    let want: Vec<(String, String)> = ["psnr", "ssim"]
        .iter()
        .flat_map(|m| ["occluded", "stage1", "stage2"].map(|model| (model.to_string(), m.to_string())))
        .collect();
    assert_eq!(labels, want);
    let baseline = table.get("occluded", "psnr").unwrap();
    assert!(baseline.windows(2).all(|w| w[1] < w[0]), "{baseline:?}");

    let rows = fs::read_to_string(out.join("completion_results.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 3 * 3 * 3);
    let images = fs::read_dir(out.join("completions")).unwrap().count();
    assert_eq!(images, 3 * 3 * 3);
    run_ok(&["verify-manifest", "--out", s(&out)]);

    // Worker count does not change any result.
    let serial = dir.path().join("serial");
    fs::create_dir_all(&serial).unwrap();
    run_ok(&[
        "complete",
        "--config",
        s(&cfg),
        "--out",
        s(&serial),
        "--checkpoints",
        s(&out.join("checkpoints")),
        "--workers",
        "1",
    ]);
    assert_eq!(fs::read_to_string(serial.join("completion_results.csv")).unwrap(), rows);
}

#[test]
fn theory_sweep_passes_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let stdout = run_ok(&["theory", "--out", s(&a)]);
    assert!(stdout.contains("overall: PASS"), "{stdout}");
    run_ok(&["theory", "--out", s(&b)]);
    for f in ["theory_sweep.csv", "theory_summary.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(a.join("theory_sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "index,beta,etas,phis,tgr,bound_margin,feasible");
    assert_eq!(lines[1], "0,1,0,0.5,0.5,0,true");
    assert_eq!(lines.len(), 1 + 1 + 1000 + 20);
    assert_eq!(lines.iter().filter(|l| l.ends_with(",false")).count(), 20);
    let summary = fs::read_to_string(a.join("theory_summary.txt")).unwrap();
    assert!(summary.contains("1001 feasible, 20 infeasible"), "{summary}");
}

#[test]
fn theory_reads_empirical_residuals_from_a_chain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = points_config(dir.path(), 2);
    let out = dir.path().join("run");
    run_ok(&["train", "--config", s(&cfg), "--out", s(&out)]);
    run_ok(&[
        "theory",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--checkpoints",
        s(&out.join("checkpoints")),
    ]);
    let text = fs::read_to_string(out.join("theory_empirical.txt")).unwrap();
    assert!(
        text.contains("transition 1:") && text.contains("residuals finite: true"),
        "{text}"
    );
    let residual: f64 = text
        .lines()
        .find(|l| l.starts_with("transition 1:"))
        .and_then(|l| l.rsplit("residual = ").next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(residual.is_finite());
}

#[test]
fn report_curves_summary_and_idempotence() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&["report", "--out", s(dir.path())]), 2);

    let cfg = points_config(dir.path(), 2);
    let out = dir.path().join("run");
    run_ok(&["train", "--config", s(&cfg), "--out", s(&out)]);
    run_ok(&["report", "--out", s(&out)]);
    let report = out.join("report");
    let summary = fs::read_to_string(report.join("summary.txt")).unwrap();
    for k in 1..=2 {
        let trace = read_gap_trace(&out.join(format!("gap_trace_stage_{k}.csv"))).unwrap();
        let curve = fs::read_to_string(report.join(format!("gap_curve_stage_{k}.csv"))).unwrap();
        assert_eq!(curve.lines().count() - 1, trace.len() / 3);
        let last = trace.last().unwrap().1;
        assert!(
            summary.contains(&format!("stage {k}: {} iterations, final gap {last},", trace.len())),
            "{summary}"
        );
    }

    let before: Vec<(PathBuf, Vec<u8>)> = fs::read_dir(&report)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    run_ok(&["report", "--out", s(&out)]);
    for (p, bytes) in before {
        assert_eq!(fs::read(&p).unwrap(), bytes, "{} changed", p.display());
    }
    run_ok(&["verify-manifest", "--out", s(&out)]);
}

#[test]
fn verify_manifest_flags_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = points_config(dir.path(), 1);
    let out = dir.path().join("run");
    run_ok(&["train", "--config", s(&cfg), "--out", s(&out)]);
    let m = RunManifest::read(&out.join("manifest_train.txt")).unwrap();
    assert!(m.files.iter().any(|f| f.path == "gap_trace_stage_1.csv"));
    assert!(m.config.contains("[train]") && m.config.contains("epsilon = 0.005"));
    assert!(m.phases.iter().any(|(name, _)| name == "train"));

    fs::write(out.join("gap_trace_stage_1.csv"), "iteration,stage,gamma\n").unwrap();
    assert_eq!(code(&["verify-manifest", "--out", s(&out)]), 1);
    assert_eq!(code(&["verify-manifest", "--out", s(&dir.path().join("nowhere"))]), 2);
}
