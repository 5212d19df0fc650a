//! Progressive training: stage 1 is a margin GAN; every later stage starts
//! from the previous stage's weights and adds a ranking hinge that pushes
//! its real scores above the frozen previous stage's fake scores.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gan::{
    check_margin, estimate_gap, generator_wgan_loss, mgan_critic_loss, Critic, Generator, Mlp, NoisePrior, OutputKind,
    PriorKind,
};
use crate::rng::substream;
use crate::tensor::{load_checkpoint, save_checkpoint, RmsProp, Tape, Tensor, Var};

/// Slack used when checking the score ordering of a trained chain.
pub const ORDERING_SLACK: f64 = 0.05;

/// Layer sizes and output conventions shared by every stage of a chain.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub latent_dim: usize,
    pub generator_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub data_dim: usize,
    pub output: OutputKind,
    pub leaky_slope: f64,
    pub prior: PriorKind,
}

impl Architecture {
    /// Latent 32, two hidden layers of 128 in both networks.
    pub fn dense(data_dim: usize, output: OutputKind) -> Self {
        Architecture {
            latent_dim: 32,
            generator_hidden: vec![128, 128],
            critic_hidden: vec![128, 128],
            data_dim,
            output,
            leaky_slope: 0.2,
            prior: PriorKind::Uniform,
        }
    }

    pub fn generator_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.latent_dim];
        s.extend(&self.generator_hidden);
        s.push(self.data_dim);
        s
    }

    pub fn critic_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.data_dim];
        s.extend(&self.critic_hidden);
        s.push(1);
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Critic updates per generator update.
    pub n_critic: usize,
    pub optimizer: RmsProp,
    /// Critic weights are clamped to `[-clip, clip]` after every update.
    pub clip: f64,
    pub epochs: usize,
    pub seed: u64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            n_critic: 5,
            optimizer: RmsProp::default(),
            clip: 0.01,
            epochs: 1,
            seed: 0,
            lambda1: 1.0,
            lambda2: 1.0,
            epsilon: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if self.n_critic == 0 || self.epochs == 0 {
            return Err(Error::Config("n_critic and epochs must be positive".into()));
        }
        self.optimizer.validate()?;
        if !(self.clip > 0.0) {
            return Err(Error::Config(format!("clip must be positive, got {}", self.clip)));
        }
        check_margin(self.epsilon)?;
        check_weights(self.lambda1, self.lambda2)
    }

    /// Generator updates per epoch: one per `n_critic` critic batches.
    pub fn iterations_per_epoch(&self, n_samples: usize) -> usize {
        (n_samples / (self.batch_size * self.n_critic)).max(1)
    }
}

fn check_weights(lambda1: f64, lambda2: f64) -> Result<()> {
    if !(lambda1 >= 0.0 && lambda2 >= 0.0) || !(lambda1 + lambda2).is_finite() {
        return Err(Error::Config(format!(
            "loss weights must be nonnegative, got {lambda1}, {lambda2}"
        )));
    }
    if lambda1 == 0.0 && lambda2 == 0.0 {
        return Err(Error::Config("loss weights cannot both be zero".into()));
    }
    Ok(())
}

/// One generator/critic pair of the chain.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    /// 1-based position in the chain.
    pub index: usize,
    pub generator: Generator,
    pub critic: Critic,
    pub epsilon: f64,
    pub frozen: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapRecord {
    pub iteration: usize,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GoganChain {
    stages: Vec<Stage>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub prior: PriorKind,
    gap_traces: Vec<Vec<GapRecord>>,
}

impl GoganChain {
    pub fn new(first: Stage, lambda1: f64, lambda2: f64, prior: PriorKind) -> Result<Self> {
        check_weights(lambda1, lambda2)?;
        check_margin(first.epsilon)?;
        if first.index != 1 {
            return Err(Error::Usage(format!(
                "first stage must have index 1, got {}",
                first.index
            )));
        }
        Ok(GoganChain {
            stages: vec![first],
            lambda1,
            lambda2,
            prior,
            gap_traces: vec![Vec::new()],
        })
    }

    /// Randomly initialised stage 1; critic weights start inside the clip box.
    pub fn init(arch: &Architecture, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = substream(cfg.seed, "stage1.init");
        let generator = Generator::new(
            Mlp::init(&arch.generator_sizes(), arch.leaky_slope, &mut rng)?,
            arch.output,
        );
        let mut critic = Critic::new(Mlp::init(&arch.critic_sizes(), arch.leaky_slope, &mut rng)?)?;
        critic.params_mut().clip(cfg.clip)?;
        let stage = Stage {
            index: 1,
            generator,
            critic,
            epsilon: cfg.epsilon,
            frozen: false,
        };
        GoganChain::new(stage, cfg.lambda1, cfg.lambda2, arch.prior)
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn epsilon(&self) -> f64 {
        self.stages[0].epsilon
    }

    /// Stage by 1-based index.
    pub fn stage(&self, index: usize) -> Result<&Stage> {
        index
            .checked_sub(1)
            .and_then(|i| self.stages.get(i))
            .ok_or_else(|| Error::Usage(format!("no stage {index} in a chain of {}", self.stages.len())))
    }

    pub fn gap_trace(&self, index: usize) -> Result<&[GapRecord]> {
        self.stage(index)?;
        Ok(&self.gap_traces[index - 1])
    }

    pub fn freeze(&mut self, index: usize) -> Result<()> {
        self.stage(index)?;
        self.stages[index - 1].frozen = true;
        Ok(())
    }

    /// Appends stage `k+1` as a copy of the frozen stage `k`.
    pub fn push_next_stage(&mut self) -> Result<()> {
        let last = self.stages.last().expect("chain is never empty");
        if !last.frozen {
            return Err(Error::Usage(format!(
                "stage {} must be frozen before stage {} is added",
                last.index,
                last.index + 1
            )));
        }
        let mut next = last.clone();
        next.index += 1;
        next.frozen = false;
        next.generator.net = Mlp::from_params(
            next.generator.net.sizes(),
            next.generator.net.slope(),
            last.generator.params().fresh_copy(),
        )?;
        next.critic.net = Mlp::from_params(
            next.critic.net.sizes(),
            next.critic.net.slope(),
            last.critic.params().fresh_copy(),
        )?;
        self.stages.push(next);
        self.gap_traces.push(Vec::new());
        Ok(())
    }

    /// Appends an already built stage. The current last stage must be
    /// frozen and the new one must continue the index sequence and share ε.
    pub fn push_stage(&mut self, stage: Stage) -> Result<()> {
        let last = self.stages.last().expect("chain is never empty");
        if !last.frozen {
            return Err(Error::Usage(format!("stage {} is not frozen", last.index)));
        }
        if stage.index != last.index + 1 {
            return Err(Error::Usage(format!(
                "expected stage {}, got {}",
                last.index + 1,
                stage.index
            )));
        }
        if stage.epsilon != last.epsilon {
            return Err(Error::Usage(format!(
                "stage {} has margin {}, chain uses {}",
                stage.index, stage.epsilon, last.epsilon
            )));
        }
        self.stages.push(stage);
        self.gap_traces.push(Vec::new());
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let chain_file = dir.join("chain.txt");
        let text = format!(
            "stages = {}\nlambda1 = {}\nlambda2 = {}\nepsilon = {}\nprior = {}\n",
            self.stages.len(),
            self.lambda1,
            self.lambda2,
            self.epsilon(),
            self.prior.name()
        );
        fs::write(&chain_file, text).map_err(|e| Error::io(&chain_file, e))?;
        written.push(chain_file);
        for s in &self.stages {
            let sdir = dir.join(format!("stage_{}", s.index));
            fs::create_dir_all(&sdir).map_err(|e| Error::io(&sdir, e))?;
            let extra = [
                ("stage".to_string(), s.index.to_string()),
                ("epsilon".to_string(), s.epsilon.to_string()),
                ("frozen".to_string(), s.frozen.to_string()),
            ];
            let mut gm = s.generator.checkpoint_meta();
            gm.extend(extra.iter().cloned());
            let (a, b) = save_checkpoint(&sdir.join("generator.ckpt"), s.generator.params(), &gm)?;
            written.extend([a, b]);
            let mut cm = s.critic.checkpoint_meta();
            cm.extend(extra.iter().cloned());
            let (a, b) = save_checkpoint(&sdir.join("critic.ckpt"), s.critic.params(), &cm)?;
            written.extend([a, b]);
        }
        Ok(written)
    }

    /// Loads a chain written by [`GoganChain::save`]. Gap traces are not
    /// part of a checkpoint and come back empty.
    pub fn load(dir: &Path) -> Result<Self> {
        let chain_file = dir.join("chain.txt");
        let text = fs::read_to_string(&chain_file).map_err(|e| Error::io(&chain_file, e))?;
        let mut kv = std::collections::HashMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad line in {}: {line:?}", chain_file.display())))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            kv.get(k)
                .ok_or_else(|| Error::Format(format!("{} is missing {k}", chain_file.display())))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|e| Error::Format(format!("bad {k} in {}: {e}", chain_file.display())))
        };
        let n: usize = get("stages")?
            .parse()
            .map_err(|e| Error::Format(format!("bad stage count: {e}")))?;
        let prior = PriorKind::parse(get("prior")?)?;
        let (lambda1, lambda2) = (num("lambda1")?, num("lambda2")?);
        let mut chain: Option<GoganChain> = None;
        for k in 1..=n {
            let sdir = dir.join(format!("stage_{k}"));
            let gck = load_checkpoint(&sdir.join("generator.ckpt"))?;
            let cck = load_checkpoint(&sdir.join("critic.ckpt"))?;
            let parse_meta = |key: &str| -> Result<String> { Ok(cck.meta(key)?.to_string()) };
            let stage = Stage {
                index: k,
                generator: Generator::from_checkpoint(&gck)?,
                critic: Critic::from_checkpoint(&cck)?,
                epsilon: parse_meta("epsilon")?
                    .parse()
                    .map_err(|e| Error::Format(format!("bad epsilon: {e}")))?,
                frozen: parse_meta("frozen")? == "true",
            };
            match chain.as_mut() {
                None => chain = Some(GoganChain::new(stage, lambda1, lambda2, prior)?),
                Some(c) => c.push_stage(stage)?,
            }
        }
        chain.ok_or_else(|| Error::Format(format!("{} lists no stages", chain_file.display())))
    }
}

/// Ranking hinge `(1/m) Σ max(0, prev_fake_i + 2ε − real_i)`. The previous
/// stage's scores enter as constants, so only the real-score path carries
/// gradient.
pub fn ranking_hinge(tape: &mut Tape, prev_fake_scores: &Tensor, real_scores: Var, epsilon: f64) -> Result<Var> {
    check_margin(epsilon)?;
    if prev_fake_scores.shape() != tape.value(real_scores).shape() {
        return Err(Error::Usage(format!(
            "ranking loss pairs samples by index; got {:?} vs {:?}",
            prev_fake_scores.shape(),
            tape.value(real_scores).shape()
        )));
    }
    let prev = tape.constant(prev_fake_scores.clone());
    let d = tape.sub(prev, real_scores)?;
    let d = tape.shift(d, 2.0 * epsilon)?;
    let h = tape.hinge(d)?;
    tape.mean(h)
}

/// Ranking loss against a frozen previous stage, scoring its generator's
/// output for the latent batch `z` with its own critic.
pub fn ranking_loss(tape: &mut Tape, prev: &Stage, z: &Tensor, real_scores: Var, epsilon: f64) -> Result<Var> {
    if !prev.frozen {
        return Err(Error::Usage(format!(
            "ranking against stage {} requires it to be frozen",
            prev.index
        )));
    }
    let prev_scores = prev.critic.score(&prev.generator.generate(z)?)?;
    ranking_hinge(tape, &prev_scores, real_scores, epsilon)
}

/// `λ₁·L_disc + λ₂·L_rank`.
pub fn gogan_total_loss(tape: &mut Tape, l_disc: Var, l_rank: Var, lambda1: f64, lambda2: f64) -> Result<Var> {
    check_weights(lambda1, lambda2)?;
    let a = tape.scale(l_disc, lambda1)?;
    let b = tape.scale(l_rank, lambda2)?;
    tape.add(a, b)
}

/// Progress notifications from [`train_stage`].
#[derive(Debug)]
pub enum TrainEvent<'a> {
    /// A critic update finished (clipping included).
    CriticStep {
        stage: usize,
        iteration: usize,
        step: usize,
        critic: &'a Critic,
        loss: f64,
    },
    /// All critic steps of an iteration are done and Γ was logged, computed
    /// from `real` and `fake` (the last critic batch) with `critic`.
    Gap {
        stage: usize,
        iteration: usize,
        gamma: f64,
        critic: &'a Critic,
        real: &'a Tensor,
        fake: &'a Tensor,
    },
    /// The generator update of an iteration finished.
    GeneratorStep { stage: usize, iteration: usize, loss: f64 },
}

fn numeric_context(stage: usize, iteration: usize, e: Error) -> Error {
    match e {
        Error::NonFinite { op } => {
            let op = format!("{op} (stage {stage}, iteration {iteration})");
            log::error!("training aborted: non-finite value from {op}");
            Error::NonFinite { op }
        }
        other => other,
    }
}

/// Trains stage `stage_idx` in place. Earlier stages must be frozen and are
/// only read. Each iteration runs `n_critic` critic updates (margin loss,
/// plus the ranking term from stage 2 on), each followed by clipping, logs Γ,
/// then runs one generator update.
pub fn train_stage(
    chain: &mut GoganChain,
    stage_idx: usize,
    data: &Dataset,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&TrainEvent),
) -> Result<()> {
    cfg.validate()?;
    chain.stage(stage_idx)?;
    if let Some(s) = chain.stages[..stage_idx - 1].iter().find(|s| !s.frozen) {
        return Err(Error::Usage(format!(
            "stage {} must be frozen before training stage {stage_idx}",
            s.index
        )));
    }
    if chain.stages[stage_idx - 1].frozen {
        return Err(Error::Usage(format!("stage {stage_idx} is frozen")));
    }
    let n = data.len();
    if n < cfg.batch_size {
        return Err(Error::Config(format!(
            "dataset of {n} samples is smaller than batch size {}",
            cfg.batch_size
        )));
    }
    if data.dim() != chain.stages[stage_idx - 1].critic.data_dim() {
        return Err(Error::Usage(format!(
            "data dimension {} does not match the critic input {}",
            data.dim(),
            chain.stages[stage_idx - 1].critic.data_dim()
        )));
    }

    let (lambda1, lambda2, prior) = (chain.lambda1, chain.lambda2, chain.prior);
    let (earlier, rest) = chain.stages.split_at_mut(stage_idx - 1);
    let prev = earlier.last();
    let stage = &mut rest[0];
    let trace = &mut chain.gap_traces[stage_idx - 1];
    trace.clear();

    let m = cfg.batch_size;
    let mut noise = NoisePrior::new(
        prior,
        stage.generator.latent_dim(),
        substream(cfg.seed, &format!("stage{stage_idx}.noise")),
    );
    let mut batch_rng = substream(cfg.seed, &format!("stage{stage_idx}.batches"));
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor;
    let iters = cfg.iterations_per_epoch(n);
    let mut iteration = 0;

    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut batch_rng);
        cursor = 0;
        for _ in 0..iters {
            iteration += 1;
            let ctx = |e| numeric_context(stage_idx, iteration, e);
            let mut last = None;
            for step in 1..=cfg.n_critic {
                if cursor + m > n {
                    order.shuffle(&mut batch_rng);
                    cursor = 0;
                }
                let real = data.samples.select_rows(&order[cursor..cursor + m])?;
                cursor += m;
                let z = noise.sample(m)?;
                let fake = stage.generator.generate(&z).map_err(ctx)?;

                let mut tape = Tape::new();
                let b = stage.critic.params().bind(&mut tape, true);
                let xr = tape.constant(real.clone());
                let xf = tape.constant(fake.clone());
                let sr = stage.critic.forward(&mut tape, &b, xr).map_err(ctx)?;
                let sf = stage.critic.forward(&mut tape, &b, xf).map_err(ctx)?;
                let l_disc = mgan_critic_loss(&mut tape, sf, sr, stage.epsilon).map_err(ctx)?;
                let loss = match prev {
                    None => l_disc,
                    Some(p) => {
                        let l_rank = ranking_loss(&mut tape, p, &z, sr, stage.epsilon).map_err(ctx)?;
                        gogan_total_loss(&mut tape, l_disc, l_rank, lambda1, lambda2).map_err(ctx)?
                    }
                };
                let grads = tape.backward(loss).map_err(ctx)?;
                let grads = b.gradients(&grads);
                let params = stage.critic.params_mut();
                params.rmsprop_step(&grads, &cfg.optimizer).map_err(ctx)?;
                params.clip(cfg.clip)?;
                observer(&TrainEvent::CriticStep {
                    stage: stage_idx,
                    iteration,
                    step,
                    critic: &stage.critic,
                    loss: tape.value(loss).item()?,
                });
                last = Some((real, fake));
            }

            let (real, fake) = last.expect("n_critic >= 1");
            let gamma = estimate_gap(&stage.critic, &real, &fake).map_err(ctx)?;
            trace.push(GapRecord { iteration, gamma });
            observer(&TrainEvent::Gap {
                stage: stage_idx,
                iteration,
                gamma,
                critic: &stage.critic,
                real: &real,
                fake: &fake,
            });

            let z = noise.sample(m)?;
            let mut tape = Tape::new();
            let gb = stage.generator.params().bind(&mut tape, true);
            let cb = stage.critic.params().bind(&mut tape, false);
            let zv = tape.constant(z);
            let x = stage.generator.forward(&mut tape, &gb, zv).map_err(ctx)?;
            let s = stage.critic.forward(&mut tape, &cb, x).map_err(ctx)?;
            let loss = generator_wgan_loss(&mut tape, s).map_err(ctx)?;
            let grads = tape.backward(loss).map_err(ctx)?;
            stage
                .generator
                .net
                .params_mut()
                .rmsprop_step(&gb.gradients(&grads), &cfg.optimizer)
                .map_err(ctx)?;
            observer(&TrainEvent::GeneratorStep {
                stage: stage_idx,
                iteration,
                loss: tape.value(loss).item()?,
            });
        }
    }
    log::info!(
        "stage {stage_idx}: {iteration} iterations, final gap {:.6}",
        trace.last().map(|r| r.gamma).unwrap_or(f64::NAN)
    );
    Ok(())
}

/// Trains `num_stages` stages in sequence with equal epochs each; stage `k`
/// starts from stage `k−1`'s weights and every stage is frozen when done.
pub fn train_chain(
    data: &Dataset,
    arch: &Architecture,
    cfg: &TrainConfig,
    num_stages: usize,
    observer: &mut dyn FnMut(&TrainEvent),
) -> Result<GoganChain> {
    if num_stages == 0 {
        return Err(Error::Config("at least one stage is required".into()));
    }
    if arch.data_dim != data.dim() {
        return Err(Error::Config(format!(
            "architecture data_dim {} does not match data dimension {}",
            arch.data_dim,
            data.dim()
        )));
    }
    let mut chain = GoganChain::init(arch, cfg)?;
    for k in 1..=num_stages {
        if k > 1 {
            chain.push_next_stage()?;
        }
        train_stage(&mut chain, k, data, cfg, observer)?;
        chain.freeze(k)?;
    }
    Ok(chain)
}

/// Mean-score ordering between stage `lower` and stage `lower + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairOrdering {
    pub lower: usize,
    /// Stage `lower+1` critic on real data.
    pub real_mean: f64,
    /// Stage `lower+1` critic on its own generator.
    pub fake_mean: f64,
    /// Stage `lower` critic on stage `lower` generator.
    pub prev_fake_mean: f64,
    pub margin_ok: bool,
    pub rank_ok: bool,
}

impl PairOrdering {
    pub fn from_means(
        lower: usize,
        real_mean: f64,
        fake_mean: f64,
        prev_fake_mean: f64,
        epsilon: f64,
        delta: f64,
    ) -> Self {
        let slack = 1.0 - delta;
        PairOrdering {
            lower,
            real_mean,
            fake_mean,
            prev_fake_mean,
            margin_ok: real_mean >= fake_mean + epsilon * slack,
            rank_ok: real_mean >= prev_fake_mean + 2.0 * epsilon * slack,
        }
    }

    pub fn passed(&self) -> bool {
        self.margin_ok && self.rank_ok
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrderingReport {
    pub epsilon: f64,
    pub delta: f64,
    pub pairs: Vec<PairOrdering>,
}

impl OrderingReport {
    pub fn passed(&self) -> bool {
        self.pairs.iter().all(PairOrdering::passed)
    }
}

impl fmt::Display for OrderingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "ordering report (epsilon = {}, slack = {})",
            self.epsilon, self.delta
        )?;
        for p in &self.pairs {
            let (i, j) = (p.lower, p.lower + 1);
            writeln!(f, "stages {i} -> {j}")?;
            writeln!(f, "  mean D{j}(x)       = {}", p.real_mean)?;
            writeln!(f, "  mean D{j}(G{j}(z))  = {}", p.fake_mean)?;
            writeln!(f, "  mean D{i}(G{i}(z))  = {}", p.prev_fake_mean)?;
            writeln!(
                f,
                "  margin  D{j}(x) >= D{j}(G{j}(z)) + eps*(1-slack): {}",
                if p.margin_ok { "ok" } else { "VIOLATED" }
            )?;
            writeln!(
                f,
                "  ranking D{j}(x) >= D{i}(G{i}(z)) + 2eps*(1-slack): {}",
                if p.rank_ok { "ok" } else { "VIOLATED" }
            )?;
        }
        writeln!(f, "overall: {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// Mean real and fake scores of every stage under its own critic.
pub(crate) fn stage_means(stage: &Stage, real: &Tensor, noise: &Tensor) -> Result<(f64, f64)> {
    let r = stage.critic.score(real)?.mean();
    let f = stage.critic.score(&stage.generator.generate(noise)?)?.mean();
    Ok((r, f))
}

/// Checks the margin and ranking constraints for each adjacent stage pair
/// on batch means, allowing a relative slack `delta` on the margins.
pub fn verify_ordering(
    chain: &GoganChain,
    eval_real: &Tensor,
    eval_noise: &Tensor,
    delta: f64,
) -> Result<OrderingReport> {
    if chain.len() < 2 {
        return Err(Error::Usage("ordering needs at least two stages".into()));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::Config(format!("slack must be in [0, 1), got {delta}")));
    }
    let means = chain
        .stages()
        .iter()
        .map(|s| stage_means(s, eval_real, eval_noise))
        .collect::<Result<Vec<_>>>()?;
    let eps = chain.epsilon();
    let pairs = (1..chain.len())
        .map(|i| {
            let (real, fake) = means[i];
            PairOrdering::from_means(i, real, fake, means[i - 1].1, eps, delta)
        })
        .collect();
    Ok(OrderingReport {
        epsilon: eps,
        delta,
        pairs,
    })
}
