use std::path::{Path, PathBuf};

use gogan_core::gogan::{train_chain, verify_ordering, GoganChain, OrderingReport, TrainEvent};

use crate::common::{eval_batch, gap_trace_name, prepare_data, write_text};
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::manifest::RunManifest;

pub const DATASET_FILE: &str = "dataset.txt";
pub const ORDERING_FILE: &str = "ordering_report.txt";
pub const CHECKPOINT_DIR: &str = "checkpoints";

pub struct TrainOutcome {
    pub chain: GoganChain,
    pub ordering: Option<OrderingReport>,
    /// Largest critic weight magnitude seen after any critic update.
    pub max_critic_weight: f64,
    pub manifest: PathBuf,
}

/// `iteration,stage,gamma` rows with each gap in shortest round-trip form.
pub fn render_gap_trace(chain: &GoganChain, stage: usize) -> CliResult<String> {
    let mut s = String::from("iteration,stage,gamma\n");
    for r in chain.gap_trace(stage)? {
        s += &format!("{},{stage},{}\n", r.iteration, r.gamma);
    }
    Ok(s)
}

pub fn run_train(cfg: &ExperimentConfig, out: &Path) -> CliResult<TrainOutcome> {
    let mut manifest = RunManifest::new("train", cfg.snapshot());
    let data = manifest.time("data", || prepare_data(cfg))?;
    let arch = cfg.architecture(data.full.mode);
    let tcfg = cfg.train_config();
    log::info!(
        "training {} stage(s) on {} samples ({} held out)",
        cfg.train.stages,
        data.train.len(),
        data.test.len()
    );

    let mut max_critic_weight: f64 = 0.0;
    let chain = manifest.time("train", || {
        Ok(train_chain(
            &data.train,
            &arch,
            &tcfg,
            cfg.train.stages,
            &mut |e| match e {
                TrainEvent::CriticStep { critic, .. } => {
                    max_critic_weight = max_critic_weight.max(critic.params().max_abs());
                }
                TrainEvent::Gap {
                    stage,
                    iteration,
                    gamma,
                    ..
                } => {
                    log::debug!("stage {stage} iteration {iteration}: gap {gamma}");
                }
                TrainEvent::GeneratorStep { .. } => {}
            },
        )?)
    })?;

    let ordering = manifest.time("evaluate", || {
        if chain.len() < 2 {
            return Ok(None);
        }
        let (real, noise) = eval_batch(cfg, &data.test, arch.latent_dim, arch.prior)?;
        Ok(Some(verify_ordering(&chain, &real, &noise, cfg.train.ordering_slack)?))
    })?;

    let mut files = Vec::new();
    manifest.time("write", || {
        let ds = out.join(DATASET_FILE);
        write_text(
            &ds,
            &format!(
                "{}seed = {}\ntrain_fraction = {}\ntrain_count = {}\ntest_count = {}\n",
                data.full.manifest(),
                cfg.seed,
                cfg.data.train_fraction,
                data.train.len(),
                data.test.len()
            ),
        )?;
        files.push(ds);
        files.extend(chain.save(&out.join(CHECKPOINT_DIR))?);
        for k in 1..=chain.len() {
            let p = out.join(gap_trace_name(k));
            write_text(&p, &render_gap_trace(&chain, k)?)?;
            files.push(p);
        }
        let p = out.join(ORDERING_FILE);
        let text = match &ordering {
            Some(rep) => rep.to_string(),
            None => "single stage: ordering needs at least two stages\n".to_string(),
        };
        write_text(
            &p,
            &format!("{text}max |critic weight| after any update = {max_critic_weight}\n"),
        )?;
        files.push(p);
        Ok(())
    })?;
    for f in &files {
        manifest.add_file(out, f)?;
    }
    let manifest = manifest.write(out)?;
    if let Some(rep) = &ordering {
        log::info!("ordering check: {}", if rep.passed() { "PASS" } else { "FAIL" });
    }
    Ok(TrainOutcome {
        chain,
        ordering,
        max_critic_weight,
        manifest,
    })
}
