use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gogan_core::completion::{complete, make_center_mask, reference_score, CompletionResult, CompletionTask};
use gogan_core::data::{write_pgm, DataMode};
use gogan_core::gogan::GoganChain;
use rayon::prelude::*;

use crate::common::{derived_seed, percent_label, prepare_data, write_text};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

pub const RESULTS_FILE: &str = "completion_results.csv";
pub const SUMMARY_CSV: &str = "completion_summary.csv";
pub const SUMMARY_TXT: &str = "completion_summary.txt";
pub const IMAGE_DIR: &str = "completions";
pub const BASELINE_MODEL: &str = "occluded";

pub struct TaskOutcome {
    pub stage: usize,
    pub fraction: f64,
    pub image: usize,
    pub task: CompletionTask,
    pub result: CompletionResult,
}

pub struct BaselineScore {
    pub fraction: f64,
    pub image: usize,
    pub psnr: f64,
    pub ssim: f64,
}

/// Mean PSNR and SSIM per model and occlusion fraction. Rows list PSNR for
/// every model first, then SSIM in the same model order.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryTable {
    pub fractions: Vec<f64>,
    pub rows: Vec<SummaryRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub model: String,
    pub metric: String,
    pub values: Vec<f64>,
}

impl SummaryTable {
    pub fn get(&self, model: &str, metric: &str) -> Option<&[f64]> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.metric == metric)
            .map(|r| r.values.as_slice())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,metric");
        for f in &self.fractions {
            s += &format!(",{f}");
        }
        s.push('\n');
        for r in &self.rows {
            s += &format!("{},{}", r.model, r.metric);
            for v in &r.values {
                s += &format!(",{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> CliResult<Self> {
        let bad = || CliError::Config("malformed completion summary".into());
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or_else(bad)?.split(',').collect();
        if header.len() < 3 || header[0] != "model" || header[1] != "metric" {
            return Err(bad());
        }
        let fractions = header[2..]
            .iter()
            .map(|f| f.parse().map_err(|_| bad()))
            .collect::<CliResult<_>>()?;
        let rows = lines
            .filter(|l| !l.is_empty())
            .map(|l| {
                let cells: Vec<&str> = l.split(',').collect();
                if cells.len() != header.len() {
                    return Err(bad());
                }
                Ok(SummaryRow {
                    model: cells[0].to_string(),
                    metric: cells[1].to_string(),
                    values: cells[2..]
                        .iter()
                        .map(|v| v.parse().map_err(|_| bad()))
                        .collect::<CliResult<_>>()?,
                })
            })
            .collect::<CliResult<_>>()?;
        Ok(SummaryTable { fractions, rows })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:<10} {:<6}", "model", "metric");
        for f in &self.fractions {
            let _ = write!(s, " {:>10}", format!("{}%", percent_label(*f)));
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{:<10} {:<6}", r.model, r.metric);
            for v in &r.values {
                let cell = if r.metric == "psnr" {
                    format!("{v:.2}")
                } else {
                    format!("{v:.4}")
                };
                let _ = write!(s, " {cell:>10}");
            }
            s.push('\n');
        }
        s
    }
}

pub struct CompleteOutcome {
    pub tasks: Vec<TaskOutcome>,
    pub baseline: Vec<BaselineScore>,
    pub summary: SummaryTable,
    pub manifest: PathBuf,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

pub fn stage_model(stage: usize) -> String {
    format!("stage{stage}")
}

pub fn run_complete(cfg: &ExperimentConfig, checkpoints: &Path, out: &Path) -> CliResult<CompleteOutcome> {
    let mut manifest = RunManifest::new("complete", cfg.snapshot());
    let chain = manifest.time("load", || Ok(GoganChain::load(checkpoints)?))?;
    let data = manifest.time("data", || prepare_data(cfg))?;
    let DataMode::Images { height, width } = data.full.mode else {
        return Err(CliError::Config("completion needs image data".into()));
    };
    if chain.stage(1)?.critic.data_dim() != height * width {
        return Err(CliError::Config(format!(
            "checkpoints expect {} pixels, data has {height}x{width}",
            chain.stage(1)?.critic.data_dim()
        )));
    }
    let n_images = cfg.completion.test_images.min(data.test.len());
    if n_images == 0 {
        return Err(CliError::Config("no test images to complete".into()));
    }
    let ref_rows: Vec<usize> = (0..cfg.completion.reference_batch.min(data.train.len())).collect();
    let reference = data.train.samples.select_rows(&ref_rows)?;
    let ccfg = cfg.completion_config();
    let fractions = cfg.completion.fractions.clone();

    let mut jobs = Vec::new();
    for (fi, &fraction) in fractions.iter().enumerate() {
        let mask = make_center_mask(height, width, fraction)?;
        for image in 0..n_images {
            let task = CompletionTask::new(data.test.sample(image).to_vec(), mask.clone())?;
            let seed = derived_seed(cfg.seed, &format!("completion.f{fi}.img{image}"));
            jobs.push((fi, image, task, seed));
        }
    }
    let baseline = jobs
        .iter()
        .map(|(fi, image, task, _)| {
            let (psnr, ssim) = task.score(&task.occluded_baseline())?;
            Ok(BaselineScore {
                fraction: fractions[*fi],
                image: *image,
                psnr,
                ssim,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} workers: {e}", cfg.workers)))?;
    let mut tasks = Vec::new();
    manifest.time("complete", || {
        for stage in chain.stages() {
            let x_ref = reference_score(&stage.critic, &reference)?;
            log::info!(
                "stage {}: completing {} tasks (reference score {x_ref})",
                stage.index,
                jobs.len()
            );
            let results = pool.install(|| {
                jobs.par_iter()
                    .map(|(_, _, task, seed)| {
                        complete(task, &stage.generator, &stage.critic, &ccfg, x_ref, chain.prior, *seed)
                    })
                    .collect::<Vec<_>>()
            });
            for ((fi, image, task, _), r) in jobs.iter().zip(results) {
                tasks.push(TaskOutcome {
                    stage: stage.index,
                    fraction: fractions[*fi],
                    image: *image,
                    task: task.clone(),
                    result: r?,
                });
            }
        }
        Ok(())
    })?;

    let mut rows = Vec::new();
    for metric in ["psnr", "ssim"] {
        let pick = |p: f64, s: f64| if metric == "psnr" { p } else { s };
        rows.push(SummaryRow {
            model: BASELINE_MODEL.into(),
            metric: metric.into(),
            values: fractions
                .iter()
                .map(|&f| {
                    mean(
                        baseline
                            .iter()
                            .filter(|b| b.fraction == f)
                            .map(|b| pick(b.psnr, b.ssim)),
                    )
                })
                .collect(),
        });
        for stage in chain.stages() {
            rows.push(SummaryRow {
                model: stage_model(stage.index),
                metric: metric.into(),
                values: fractions
                    .iter()
                    .map(|&f| {
                        mean(
                            tasks
                                .iter()
                                .filter(|t| t.stage == stage.index && t.fraction == f)
                                .map(|t| pick(t.result.psnr, t.result.ssim)),
                        )
                    })
                    .collect(),
            });
        }
    }
    let summary = SummaryTable {
        fractions: fractions.clone(),
        rows,
    };

    let mut files = Vec::new();
    manifest.time("write", || {
        let mut csv = String::from("task,model,fraction,image,psnr,ssim,contextual,perceptual,total,restart\n");
        for (i, b) in baseline.iter().enumerate() {
            csv += &format!(
                "{i},{BASELINE_MODEL},{},{},{},{},,,,\n",
                b.fraction, b.image, b.psnr, b.ssim
            );
        }
        for (i, t) in tasks.iter().enumerate() {
            let r = &t.result;
            csv += &format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                baseline.len() + i,
                stage_model(t.stage),
                t.fraction,
                t.image,
                r.psnr,
                r.ssim,
                r.contextual,
                r.perceptual,
                r.total,
                r.restart
            );
        }
        for (name, text) in [
            (RESULTS_FILE, csv),
            (SUMMARY_CSV, summary.to_csv()),
            (SUMMARY_TXT, summary.to_text()),
        ] {
            let p = out.join(name);
            write_text(&p, &text)?;
            files.push(p);
        }
        if cfg.completion.write_images {
            let dir = out.join(IMAGE_DIR);
            std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
            for (b, (_, _, task, _)) in baseline.iter().zip(&jobs) {
                let p = dir.join(format!(
                    "{BASELINE_MODEL}_f{}_img{:03}.pgm",
                    percent_label(b.fraction),
                    b.image
                ));
                write_pgm(&p, height, width, &task.occluded_baseline())?;
                files.push(p);
            }
            for t in &tasks {
                let p = dir.join(format!(
                    "{}_f{}_img{:03}.pgm",
                    stage_model(t.stage),
                    percent_label(t.fraction),
                    t.image
                ));
                write_pgm(&p, height, width, &t.result.y_completed)?;
                files.push(p);
            }
        }
        Ok(())
    })?;
    for f in &files {
        manifest.add_file(out, f)?;
    }
    let manifest = manifest.write(out)?;
    Ok(CompleteOutcome {
        tasks,
        baseline,
        summary,
        manifest,
    })
}
