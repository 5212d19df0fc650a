//! Experiment configuration: a sectioned `key = value` file.
//!
//! Every key has a default, so an empty file is a valid (if small) points
//! experiment. Unknown sections and keys are rejected, and data or
//! checkpoint paths must exist when the file is parsed. Relative paths are
//! resolved against the directory holding the config file.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gogan_core::completion::CompletionConfig;
use gogan_core::data::{DataMode, MixtureSpec};
use gogan_core::gan::{OutputKind, PriorKind};
use gogan_core::gogan::{Architecture, TrainConfig, ORDERING_SLACK};
use gogan_core::tensor::RmsProp;
use ini::Ini;

use crate::error::{CliError, CliResult};

const SECTIONS: [&str; 7] = ["run", "data", "model", "train", "completion", "theory", "report"];

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    /// Ring of equally weighted isotropic Gaussians.
    Mixture {
        modes: usize,
        radius: f64,
        sigma: f64,
        samples: usize,
    },
    Procedural {
        samples: usize,
        size: usize,
    },
    Csv(PathBuf),
    PgmDir(PathBuf),
}

impl DataSource {
    pub fn is_images(&self) -> bool {
        matches!(self, DataSource::Procedural { .. } | DataSource::PgmDir(_))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            DataSource::Mixture { .. } => "mixture",
            DataSource::Procedural { .. } => "procedural",
            DataSource::Csv(_) => "csv",
            DataSource::PgmDir(_) => "pgm",
        }
    }

    pub fn mixture_spec(&self) -> Option<MixtureSpec> {
        match *self {
            DataSource::Mixture {
                modes, radius, sigma, ..
            } => Some(MixtureSpec::ring(modes, radius, sigma)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSection {
    pub source: DataSource,
    pub train_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSection {
    pub latent_dim: usize,
    pub generator_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub leaky_slope: f64,
    pub prior: PriorKind,
    /// `None` picks `image` for image data and `linear` for points.
    pub output: Option<OutputKind>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSection {
    pub stages: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub n_critic: usize,
    pub lr: f64,
    pub decay: f64,
    pub eps_guard: f64,
    pub clip: f64,
    pub epsilon: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub eval_samples: usize,
    pub ordering_slack: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompletionSection {
    pub fractions: Vec<f64>,
    pub lambda: f64,
    pub steps: usize,
    pub lr_z: f64,
    pub restarts: usize,
    pub test_images: usize,
    pub reference_batch: usize,
    pub write_images: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TheorySection {
    pub configs: usize,
    pub max_transitions: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Extra configurations with one deliberately infeasible η.
    pub infeasible_probes: usize,
    pub chain: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportSection {
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub completion: CompletionSection,
    pub theory: TheorySection,
    pub report: ReportSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let c = CompletionConfig::default();
        ExperimentConfig {
            seed: 0,
            out: PathBuf::from("runs/default"),
            workers: 1,
            data: DataSection {
                source: DataSource::Mixture {
                    modes: 8,
                    radius: 2.0,
                    sigma: 0.02,
                    samples: 6400,
                },
                train_fraction: 0.9,
            },
            model: ModelSection {
                latent_dim: 32,
                generator_hidden: vec![128, 128],
                critic_hidden: vec![128, 128],
                leaky_slope: 0.2,
                prior: PriorKind::Uniform,
                output: None,
            },
            train: TrainSection {
                stages: 2,
                epochs: 20,
                batch_size: t.batch_size,
                n_critic: t.n_critic,
                lr: t.optimizer.lr,
                decay: t.optimizer.decay,
                eps_guard: t.optimizer.eps_guard,
                clip: t.clip,
                epsilon: t.epsilon,
                lambda1: t.lambda1,
                lambda2: t.lambda2,
                eval_samples: 1024,
                ordering_slack: ORDERING_SLACK,
            },
            completion: CompletionSection {
                fractions: vec![0.25, 0.49],
                lambda: c.lambda,
                steps: c.steps,
                lr_z: c.lr_z,
                restarts: c.restarts,
                test_images: 50,
                reference_batch: 64,
                write_images: true,
            },
            theory: TheorySection {
                configs: 1000,
                max_transitions: 8,
                beta_min: 0.01,
                beta_max: 10.0,
                infeasible_probes: 20,
                chain: None,
            },
            report: ReportSection { stride: 10 },
        }
    }
}

/// Key/value pairs still waiting to be consumed, keyed by `(section, key)`.
struct Entries {
    map: BTreeMap<(String, String), String>,
}

impl Entries {
    fn take<T: FromStr>(&mut self, section: &str, key: &str, slot: &mut T) -> CliResult<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(raw) = self.map.remove(&(section.to_string(), key.to_string())) {
            *slot = raw
                .parse()
                .map_err(|e| CliError::Config(format!("[{section}] {key} = {raw:?}: {e}")))?;
        }
        Ok(())
    }

    fn take_raw(&mut self, section: &str, key: &str) -> Option<String> {
        self.map.remove(&(section.to_string(), key.to_string()))
    }

    fn take_list<T: FromStr>(&mut self, section: &str, key: &str, slot: &mut Vec<T>) -> CliResult<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(raw) = self.take_raw(section, key) {
            *slot = parse_list(&raw).map_err(|e| CliError::Config(format!("[{section}] {key} = {raw:?}: {e}")))?;
        }
        Ok(())
    }
}

fn parse_list<T: FromStr>(raw: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',')
        .map(|s| s.trim().parse().map_err(|e: T::Err| e.to_string()))
        .collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn resolve(base: &Path, raw: &str) -> PathBuf {
    let p = PathBuf::from(raw);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn existing(base: &Path, raw: &str, what: &str, check: bool) -> CliResult<PathBuf> {
    let p = resolve(base, raw);
    if check && !p.exists() {
        return Err(CliError::Config(format!("{what} {} does not exist", p.display())));
    }
    Ok(p)
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, true)
    }

    /// Parses config text. With `check_paths`, referenced files must exist.
    pub fn parse(text: &str, base: &Path, check_paths: bool) -> CliResult<Self> {
        let ini = Ini::load_from_str_noescape(text)
            .map_err(|e| CliError::Config(format!("line {}: {}", e.line + 1, e.msg)))?;
        let mut map = BTreeMap::new();
        let mut seen = HashSet::new();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(CliError::Config(format!("key {k:?} appears before any [section]")));
                }
                continue;
            };
            if !SECTIONS.contains(&section) {
                return Err(CliError::Config(format!(
                    "unknown section [{section}] (expected one of {})",
                    SECTIONS.join(", ")
                )));
            }
            if !seen.insert(section.to_string()) {
                return Err(CliError::Config(format!("section [{section}] appears twice")));
            }
            for (k, v) in props.iter() {
                if map
                    .insert((section.to_string(), k.to_string()), v.trim().to_string())
                    .is_some()
                {
                    return Err(CliError::Config(format!("[{section}] {k} is set twice")));
                }
            }
        }
        let mut e = Entries { map };
        let mut cfg = ExperimentConfig::default();
        cfg.out = base.join(&cfg.out);

        e.take("run", "seed", &mut cfg.seed)?;
        if let Some(out) = e.take_raw("run", "out") {
            cfg.out = resolve(base, &out);
        }
        e.take("run", "workers", &mut cfg.workers)?;

        let kind = e.take_raw("data", "kind").unwrap_or_else(|| "mixture".into());
        cfg.data.source = match kind.as_str() {
            "mixture" => {
                let (mut modes, mut radius, mut sigma, mut samples) = (8usize, 2.0f64, 0.02f64, 6400usize);
                e.take("data", "modes", &mut modes)?;
                e.take("data", "radius", &mut radius)?;
                e.take("data", "sigma", &mut sigma)?;
                e.take("data", "samples", &mut samples)?;
                DataSource::Mixture {
                    modes,
                    radius,
                    sigma,
                    samples,
                }
            }
            "procedural" => {
                let (mut samples, mut size) = (2250usize, 16usize);
                e.take("data", "samples", &mut samples)?;
                e.take("data", "image_size", &mut size)?;
                DataSource::Procedural { samples, size }
            }
            "csv" | "pgm" => {
                let raw = e
                    .take_raw("data", "path")
                    .ok_or_else(|| CliError::Config(format!("[data] kind = {kind} needs a path")))?;
                let p = existing(base, &raw, "data path", check_paths)?;
                if kind == "csv" {
                    DataSource::Csv(p)
                } else {
                    DataSource::PgmDir(p)
                }
            }
            other => {
                return Err(CliError::Config(format!(
                    "unknown data kind {other:?} (mixture|procedural|csv|pgm)"
                )))
            }
        };
        e.take("data", "train_fraction", &mut cfg.data.train_fraction)?;

        let m = &mut cfg.model;
        e.take("model", "latent_dim", &mut m.latent_dim)?;
        e.take_list("model", "generator_hidden", &mut m.generator_hidden)?;
        e.take_list("model", "critic_hidden", &mut m.critic_hidden)?;
        e.take("model", "leaky_slope", &mut m.leaky_slope)?;
        if let Some(p) = e.take_raw("model", "prior") {
            m.prior = PriorKind::parse(&p)?;
        }
        if let Some(o) = e.take_raw("model", "output") {
            m.output = Some(OutputKind::parse(&o)?);
        }

        let t = &mut cfg.train;
        e.take("train", "stages", &mut t.stages)?;
        e.take("train", "epochs", &mut t.epochs)?;
        e.take("train", "batch_size", &mut t.batch_size)?;
        e.take("train", "n_critic", &mut t.n_critic)?;
        e.take("train", "lr", &mut t.lr)?;
        e.take("train", "decay", &mut t.decay)?;
        e.take("train", "eps_guard", &mut t.eps_guard)?;
        e.take("train", "clip", &mut t.clip)?;
        e.take("train", "epsilon", &mut t.epsilon)?;
        e.take("train", "lambda1", &mut t.lambda1)?;
        e.take("train", "lambda2", &mut t.lambda2)?;
        e.take("train", "eval_samples", &mut t.eval_samples)?;
        e.take("train", "ordering_slack", &mut t.ordering_slack)?;

        let c = &mut cfg.completion;
        e.take_list("completion", "fractions", &mut c.fractions)?;
        e.take("completion", "lambda", &mut c.lambda)?;
        e.take("completion", "steps", &mut c.steps)?;
        e.take("completion", "lr_z", &mut c.lr_z)?;
        e.take("completion", "restarts", &mut c.restarts)?;
        e.take("completion", "test_images", &mut c.test_images)?;
        e.take("completion", "reference_batch", &mut c.reference_batch)?;
        e.take("completion", "write_images", &mut c.write_images)?;

        let th = &mut cfg.theory;
        e.take("theory", "configs", &mut th.configs)?;
        e.take("theory", "max_transitions", &mut th.max_transitions)?;
        e.take("theory", "beta_min", &mut th.beta_min)?;
        e.take("theory", "beta_max", &mut th.beta_max)?;
        e.take("theory", "infeasible_probes", &mut th.infeasible_probes)?;
        if let Some(raw) = e.take_raw("theory", "chain") {
            th.chain = Some(existing(base, &raw, "checkpoint directory", check_paths)?);
        }

        e.take("report", "stride", &mut cfg.report.stride)?;

        if let Some(((s, k), _)) = e.map.into_iter().next() {
            return Err(CliError::Config(format!("unknown key [{s}] {k}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.workers == 0 {
            return bad("[run] workers must be at least 1".into());
        }
        match self.data.source {
            DataSource::Mixture { samples, .. } | DataSource::Procedural { samples, .. } if samples == 0 => {
                return bad("[data] samples must be positive".into())
            }
            _ => {}
        }
        if let Some(spec) = self.data.source.mixture_spec() {
            spec.validate()?;
        }
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return bad(format!(
                "[data] train_fraction must be in (0, 1), got {}",
                self.data.train_fraction
            ));
        }
        if self.model.latent_dim == 0
            || self.model.generator_hidden.contains(&0)
            || self.model.critic_hidden.contains(&0)
        {
            return bad("[model] layer sizes must be positive".into());
        }
        if !(self.model.leaky_slope > 0.0 && self.model.leaky_slope < 1.0) {
            return bad(format!(
                "[model] leaky_slope must be in (0, 1), got {}",
                self.model.leaky_slope
            ));
        }
        if self.train.stages == 0 {
            return bad("[train] stages must be at least 1".into());
        }
        if self.train.eval_samples == 0 {
            return bad("[train] eval_samples must be positive".into());
        }
        self.train_config().validate()?;
        if !(0.0..1.0).contains(&self.train.ordering_slack) {
            return bad(format!(
                "[train] ordering_slack must be in [0, 1), got {}",
                self.train.ordering_slack
            ));
        }
        let c = &self.completion;
        if c.fractions.is_empty() || c.fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return bad("[completion] fractions must be a non-empty list inside (0, 1)".into());
        }
        if c.reference_batch == 0 {
            return bad("[completion] reference_batch must be positive".into());
        }
        self.completion_config().validate()?;
        let th = &self.theory;
        if th.max_transitions == 0 || !(th.beta_min > 0.0 && th.beta_min <= th.beta_max && th.beta_max.is_finite()) {
            return bad("[theory] needs max_transitions >= 1 and 0 < beta_min <= beta_max".into());
        }
        if self.report.stride == 0 {
            return bad("[report] stride must be positive".into());
        }
        Ok(())
    }

    pub fn output_kind(&self) -> OutputKind {
        self.model.output.unwrap_or(if self.data.source.is_images() {
            OutputKind::Image
        } else {
            OutputKind::Linear
        })
    }

    pub fn architecture(&self, mode: DataMode) -> Architecture {
        Architecture {
            latent_dim: self.model.latent_dim,
            generator_hidden: self.model.generator_hidden.clone(),
            critic_hidden: self.model.critic_hidden.clone(),
            data_dim: mode.dim(),
            output: self.output_kind(),
            leaky_slope: self.model.leaky_slope,
            prior: self.model.prior,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            batch_size: t.batch_size,
            n_critic: t.n_critic,
            optimizer: RmsProp {
                lr: t.lr,
                decay: t.decay,
                eps_guard: t.eps_guard,
            },
            clip: t.clip,
            epochs: t.epochs,
            seed: self.seed,
            lambda1: t.lambda1,
            lambda2: t.lambda2,
            epsilon: t.epsilon,
        }
    }

    pub fn completion_config(&self) -> CompletionConfig {
        let c = &self.completion;
        CompletionConfig {
            lambda: c.lambda,
            steps: c.steps,
            lr_z: c.lr_z,
            restarts: c.restarts,
        }
    }

    /// Canonical text of every resolved value. Parsing it back gives an
    /// equal config.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(
            w,
            "[run]\nseed = {}\nout = {}\nworkers = {}\n",
            self.seed,
            self.out.display(),
            self.workers
        );
        let _ = writeln!(w, "[data]\nkind = {}", self.data.source.kind());
        match &self.data.source {
            DataSource::Mixture {
                modes,
                radius,
                sigma,
                samples,
            } => {
                let _ = writeln!(
                    w,
                    "modes = {modes}\nradius = {radius}\nsigma = {sigma}\nsamples = {samples}"
                );
            }
            DataSource::Procedural { samples, size } => {
                let _ = writeln!(w, "samples = {samples}\nimage_size = {size}");
            }
            DataSource::Csv(p) | DataSource::PgmDir(p) => {
                let _ = writeln!(w, "path = {}", p.display());
            }
        }
        let _ = writeln!(w, "train_fraction = {}\n", self.data.train_fraction);
        let m = &self.model;
        let _ = writeln!(
            w,
            "[model]\nlatent_dim = {}\ngenerator_hidden = {}\ncritic_hidden = {}\nleaky_slope = {}\nprior = {}",
            m.latent_dim,
            join(&m.generator_hidden),
            join(&m.critic_hidden),
            m.leaky_slope,
            m.prior.name()
        );
        if let Some(o) = m.output {
            let _ = writeln!(w, "output = {}", o.name());
        }
        let _ = writeln!(w);
        let t = &self.train;
        let _ = writeln!(
            w,
            "[train]\nstages = {}\nepochs = {}\nbatch_size = {}\nn_critic = {}\nlr = {}\ndecay = {}\neps_guard = {}\n\
             clip = {}\nepsilon = {}\nlambda1 = {}\nlambda2 = {}\neval_samples = {}\nordering_slack = {}\n",
            t.stages,
            t.epochs,
            t.batch_size,
            t.n_critic,
            t.lr,
            t.decay,
            t.eps_guard,
            t.clip,
            t.epsilon,
            t.lambda1,
            t.lambda2,
            t.eval_samples,
            t.ordering_slack
        );
        let c = &self.completion;
        let _ = writeln!(
            w,
            "[completion]\nfractions = {}\nlambda = {}\nsteps = {}\nlr_z = {}\nrestarts = {}\ntest_images = {}\n\
             reference_batch = {}\nwrite_images = {}\n",
            join(&c.fractions),
            c.lambda,
            c.steps,
            c.lr_z,
            c.restarts,
            c.test_images,
            c.reference_batch,
            c.write_images
        );
        let th = &self.theory;
        let _ = writeln!(
            w,
            "[theory]\nconfigs = {}\nmax_transitions = {}\nbeta_min = {}\nbeta_max = {}\ninfeasible_probes = {}",
            th.configs, th.max_transitions, th.beta_min, th.beta_max, th.infeasible_probes
        );
        if let Some(p) = &th.chain {
            let _ = writeln!(w, "chain = {}", p.display());
        }
        let _ = writeln!(w, "\n[report]\nstride = {}", self.report.stride);
        s
    }
}
