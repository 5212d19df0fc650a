use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::common::{gap_trace_name, write_text};
use crate::complete::{stage_model, SummaryTable, SUMMARY_CSV};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{manifest_name, RunManifest};
use crate::train::ORDERING_FILE;

pub const REPORT_DIR: &str = "report";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const METRIC_CURVE_FILE: &str = "metric_curve.csv";

pub fn gap_curve_name(stage: usize) -> String {
    format!("gap_curve_stage_{stage}.csv")
}

/// One logged `(iteration, gamma)` pair.
pub type GapPoint = (usize, f64);

pub fn read_gap_trace(path: &Path) -> CliResult<Vec<GapPoint>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |line: &str| CliError::Config(format!("malformed gap trace line {line:?} in {}", path.display()));
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|line| {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 3 {
                return Err(bad(line));
            }
            Ok((
                cells[0].parse().map_err(|_| bad(line))?,
                cells[2].parse().map_err(|_| bad(line))?,
            ))
        })
        .collect()
}

/// Means over consecutive non-overlapping blocks of `stride` entries; a
/// trailing partial block is dropped. Each row is tagged with the last
/// iteration of its block.
pub fn smooth(trace: &[GapPoint], stride: usize) -> Vec<GapPoint> {
    trace
        .chunks_exact(stride)
        .map(|block| {
            let mean = block.iter().map(|p| p.1).sum::<f64>() / stride as f64;
            (block[stride - 1].0, mean)
        })
        .collect()
}

pub struct ReportOutcome {
    pub curves: Vec<Vec<GapPoint>>,
    pub final_gaps: Vec<f64>,
    pub files: Vec<PathBuf>,
}

/// Reads a finished training run in `run_dir` and writes smoothed gap
/// curves, a metric curve when completion results exist, and a summary into
/// `run_dir/report`. Outputs depend only on the run's files.
pub fn run_report(run_dir: &Path) -> CliResult<ReportOutcome> {
    let manifest_path = run_dir.join(manifest_name("train"));
    if !manifest_path.is_file() {
        return Err(CliError::Config(format!(
            "{} has no training manifest; run `train` first",
            run_dir.display()
        )));
    }
    let train_manifest = RunManifest::read(&manifest_path)?;
    let cfg = ExperimentConfig::parse(&train_manifest.config, run_dir, false)?;
    let stride = cfg.report.stride;
    let mut manifest = RunManifest::new("report", train_manifest.config.clone());

    let mut traces = Vec::new();
    for k in 1..=cfg.train.stages {
        traces.push(read_gap_trace(&run_dir.join(gap_trace_name(k)))?);
    }
    let out = run_dir.join(REPORT_DIR);
    let mut files = Vec::new();
    let mut curves = Vec::new();
    let mut final_gaps = Vec::new();
    let mut summary = format!("stages: {}\nsmoothing stride: {stride}\n", traces.len());

    for (i, trace) in traces.iter().enumerate() {
        let k = i + 1;
        let curve = smooth(trace, stride);
        let mut csv = String::from("iteration,stage,gamma_mean\n");
        for (it, g) in &curve {
            let _ = writeln!(csv, "{it},{k},{g}");
        }
        let p = out.join(gap_curve_name(k));
        write_text(&p, &csv)?;
        files.push(p);
        let last = trace.last().map(|p| p.1).unwrap_or(f64::NAN);
        final_gaps.push(last);
        let _ = writeln!(
            summary,
            "stage {k}: {} iterations, final gap {last}, last smoothed gap {}",
            trace.len(),
            curve.last().map(|p| p.1.to_string()).unwrap_or_else(|| "n/a".into())
        );
        curves.push(curve);
    }

    if let Ok(text) = fs::read_to_string(run_dir.join(ORDERING_FILE)) {
        if let Some(line) = text.lines().find(|l| l.starts_with("overall:")) {
            let _ = writeln!(summary, "ordering {line}");
        }
    }

    let summary_csv = run_dir.join(SUMMARY_CSV);
    if summary_csv.is_file() {
        let text = fs::read_to_string(&summary_csv).map_err(|e| CliError::io(&summary_csv, e))?;
        let table = SummaryTable::from_csv(&text)?;
        let mut csv = String::from("stage,iteration,fraction,psnr,ssim\n");
        let mut iteration = 0;
        for (i, trace) in traces.iter().enumerate() {
            iteration += trace.len();
            let model = stage_model(i + 1);
            let (Some(psnr), Some(ssim)) = (table.get(&model, "psnr"), table.get(&model, "ssim")) else {
                continue;
            };
            for (j, f) in table.fractions.iter().enumerate() {
                let _ = writeln!(csv, "{},{iteration},{f},{},{}", i + 1, psnr[j], ssim[j]);
            }
        }
        let p = out.join(METRIC_CURVE_FILE);
        write_text(&p, &csv)?;
        files.push(p);
        summary += "\ncompletion (mean over test images)\n";
        summary += &table.to_text();
    }

    let p = out.join(SUMMARY_FILE);
    write_text(&p, &summary)?;
    files.push(p);
    for f in &files {
        manifest.add_file(run_dir, f)?;
    }
    manifest.write(run_dir)?;
    Ok(ReportOutcome {
        curves,
        final_gaps,
        files,
    })
}
