//! Completion of center-occluded images by gradient descent in latent space,
//! scored against the held-out ground truth.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gan::{Critic, Generator, PriorKind};
use crate::metrics::{psnr, ssim};
use crate::rng::substream;
use crate::tensor::{Bindings, Tape, Tensor, Var};

/// Pixel value written into the hole for the occluded baseline.
pub const BASELINE_FILL: f64 = 0.5;

/// Binary mask: 1 marks an observed pixel, 0 a missing one.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    height: usize,
    width: usize,
    /// Hole as `(row0, col0, rows, cols)`.
    hole: (usize, usize, usize, usize),
    values: Vec<f64>,
}

impl Mask {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn hole(&self) -> (usize, usize, usize, usize) {
        self.hole
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_observed(&self, i: usize) -> bool {
        self.values[i] == 1.0
    }

    /// Arbitrary binary mask; the hole bounding box is recorded as empty.
    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::Usage(format!(
                "mask has {} entries for a {height}×{width} image",
                values.len()
            )));
        }
        if values.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Domain("mask entries must be 0 or 1".into()));
        }
        Ok(Mask {
            height,
            width,
            hole: (0, 0, 0, 0),
            values,
        })
    }
}

/// Centered square hole with side `round(√fraction · side)` per dimension.
/// Odd leftovers put the hole one pixel toward the top-left.
pub fn make_center_mask(height: usize, width: usize, fraction: f64) -> Result<Mask> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Domain(format!(
            "occlusion fraction must lie in (0, 1), got {fraction}"
        )));
    }
    if height == 0 || width == 0 {
        return Err(Error::Usage("mask needs a non-empty image".into()));
    }
    let s = fraction.sqrt();
    let hr = (s * height as f64).round() as usize;
    let hc = (s * width as f64).round() as usize;
    let (r0, c0) = ((height - hr) / 2, (width - hc) / 2);
    let mut values = vec![1.0; height * width];
    for r in r0..r0 + hr {
        for c in c0..c0 + hc {
            values[r * width + c] = 0.0;
        }
    }
    Ok(Mask {
        height,
        width,
        hole: (r0, c0, hr, hc),
        values,
    })
}

/// A corrupted image together with the original it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct CompletionTask {
    pub y: Vec<f64>,
    pub mask: Mask,
    pub ground_truth: Vec<f64>,
}

impl CompletionTask {
    /// Zeroes the hole of `ground_truth` to form the corrupted input.
    pub fn new(ground_truth: Vec<f64>, mask: Mask) -> Result<Self> {
        if ground_truth.len() != mask.len() {
            return Err(Error::Usage(format!(
                "image has {} pixels, mask covers {}",
                ground_truth.len(),
                mask.len()
            )));
        }
        let y = ground_truth
            .iter()
            .zip(mask.values())
            .map(|(&g, &m)| if m == 1.0 { g } else { 0.0 })
            .collect();
        Ok(CompletionTask { y, mask, ground_truth })
    }

    /// Hole filled with [`BASELINE_FILL`].
    pub fn occluded_baseline(&self) -> Vec<f64> {
        let fill = vec![BASELINE_FILL; self.y.len()];
        compose_completion(&self.y, &self.mask, &fill).expect("sizes checked at construction")
    }

    /// PSNR and SSIM of `image` against the ground truth.
    pub fn score(&self, image: &[f64]) -> Result<(f64, f64)> {
        Ok((
            psnr(image, &self.ground_truth, 1.0)?,
            ssim(image, &self.ground_truth, self.mask.height(), self.mask.width())?,
        ))
    }
}

/// `M ⊙ y + (1 − M) ⊙ g`, taking observed pixels from `y` verbatim.
pub fn compose_completion(y: &[f64], mask: &Mask, generated: &[f64]) -> Result<Vec<f64>> {
    if y.len() != mask.len() || generated.len() != mask.len() {
        return Err(Error::Usage(format!(
            "compose: y has {}, mask {}, generated {} pixels",
            y.len(),
            mask.len(),
            generated.len()
        )));
    }
    Ok(mask
        .values()
        .iter()
        .zip(y.iter().zip(generated))
        .map(|(&m, (&a, &g))| if m == 1.0 { a } else { g })
        .collect())
}

/// `‖M ⊙ G(z) − M ⊙ y‖₁` where `gz` is a `1 × d` generator output on the tape.
pub fn contextual_loss(tape: &mut Tape, gz: Var, y: &[f64], mask: &Mask) -> Result<Var> {
    let shape = tape.value(gz).shape().to_vec();
    if shape != [1, mask.len()] || y.len() != mask.len() {
        return Err(Error::Usage(format!(
            "contextual loss: generator output {shape:?}, image {} pixels, mask {}",
            y.len(),
            mask.len()
        )));
    }
    let m = tape.constant(Tensor::matrix(1, mask.len(), mask.values().to_vec())?);
    let my: Vec<f64> = y.iter().zip(mask.values()).map(|(a, b)| a * b).collect();
    let my = tape.constant(Tensor::matrix(1, my.len(), my)?);
    let mg = tape.mul(gz, m)?;
    let d = tape.sub(mg, my)?;
    let d = tape.abs(d)?;
    tape.sum(d)
}

/// `x_ref_score − D(G(z))` for a single generated sample `gz`.
pub fn perceptual_loss(
    tape: &mut Tape,
    critic: &Critic,
    bindings: &Bindings,
    gz: Var,
    x_ref_score: f64,
) -> Result<Var> {
    if !x_ref_score.is_finite() {
        return Err(Error::NonFinite {
            op: "perceptual reference score".into(),
        });
    }
    let s = critic.forward(tape, bindings, gz)?;
    let s = tape.mean(s)?;
    let s = tape.scale(s, -1.0)?;
    tape.shift(s, x_ref_score)
}

/// Anchor for the perceptual term: mean critic score of a reference batch.
pub fn reference_score(critic: &Critic, batch: &Tensor) -> Result<f64> {
    Ok(critic.score(batch)?.mean())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompletionConfig {
    pub lambda: f64,
    pub steps: usize,
    pub lr_z: f64,
    pub restarts: usize,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        CompletionConfig {
            lambda: 0.1,
            steps: 1000,
            lr_z: 0.01,
            restarts: 3,
        }
    }
}

impl CompletionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("completion needs at least one step".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("completion needs at least one restart".into()));
        }
        if !(self.lr_z > 0.0) || !self.lr_z.is_finite() {
            return Err(Error::Config(format!(
                "latent learning rate must be positive, got {}",
                self.lr_z
            )));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!(
                "perceptual weight must be non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompletionResult {
    pub z_hat: Vec<f64>,
    pub y_completed: Vec<f64>,
    pub psnr: f64,
    pub ssim: f64,
    /// Total loss before each update.
    pub loss_trace: Vec<f64>,
    /// Losses at `z_hat`.
    pub contextual: f64,
    pub perceptual: f64,
    pub total: f64,
    /// Index of the winning restart.
    pub restart: usize,
}

struct Losses {
    contextual: f64,
    perceptual: f64,
    total: f64,
}

fn evaluate(
    z: &[f64],
    task: &CompletionTask,
    g: &Generator,
    d: &Critic,
    lambda: f64,
    x_ref: f64,
    want_grad: bool,
) -> Result<(Losses, Option<Vec<f64>>)> {
    let mut tape = Tape::new();
    let gb = g.params().bind(&mut tape, false);
    let db = d.params().bind(&mut tape, false);
    let zv = tape.leaf(Tensor::matrix(1, z.len(), z.to_vec())?);
    let gz = g.forward(&mut tape, &gb, zv)?;
    let lc = contextual_loss(&mut tape, gz, &task.y, &task.mask)?;
    let lp = perceptual_loss(&mut tape, d, &db, gz, x_ref)?;
    let lpw = tape.scale(lp, lambda)?;
    let total = tape.add(lc, lpw)?;
    let losses = Losses {
        contextual: tape.value(lc).item()?,
        perceptual: tape.value(lp).item()?,
        total: tape.value(total).item()?,
    };
    let grad = if want_grad {
        let grads = tape.backward(total)?;
        let gz = grads
            .get(zv)
            .ok_or_else(|| Error::Usage("latent gradient missing".into()))?;
        Some(gz.data().to_vec())
    } else {
        None
    };
    Ok((losses, grad))
}

fn initial_latent(kind: PriorKind, dim: usize, seed: u64, restart: usize) -> Vec<f64> {
    let mut rng = substream(seed, &format!("completion.restart{restart}"));
    match kind {
        PriorKind::Uniform => (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        PriorKind::StandardNormal => (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect(),
    }
}

struct Run {
    z: Vec<f64>,
    trace: Vec<f64>,
    final_losses: Losses,
}

fn descend(
    task: &CompletionTask,
    g: &Generator,
    d: &Critic,
    cfg: &CompletionConfig,
    x_ref: f64,
    prior: PriorKind,
    mut z: Vec<f64>,
) -> Result<Run> {
    let mut trace = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let (l, grad) = evaluate(&z, task, g, d, cfg.lambda, x_ref, true)?;
        trace.push(l.total);
        for (v, gv) in z.iter_mut().zip(grad.expect("gradient requested")) {
            *v -= cfg.lr_z * gv;
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                op: "latent update".into(),
            });
        }
        prior.project(&mut z);
    }
    let (final_losses, _) = evaluate(&z, task, g, d, cfg.lambda, x_ref, false)?;
    Ok(Run { z, trace, final_losses })
}

/// Minimizes `contextual + λ·perceptual` over `z` from `cfg.restarts` random
/// starts and keeps the one with the lowest final loss. Restarts that hit
/// non-finite values are dropped; if all do, the last such error is returned.
pub fn complete(
    task: &CompletionTask,
    g: &Generator,
    d: &Critic,
    cfg: &CompletionConfig,
    x_ref_score: f64,
    prior: PriorKind,
    seed: u64,
) -> Result<CompletionResult> {
    cfg.validate()?;
    if g.data_dim() != task.y.len() || d.data_dim() != task.y.len() {
        return Err(Error::Usage(format!(
            "models produce {}-pixel images and score {}-pixel inputs, task has {}",
            g.data_dim(),
            d.data_dim(),
            task.y.len()
        )));
    }
    let mut best: Option<(usize, Run)> = None;
    let mut last_err = None;
    for r in 0..cfg.restarts {
        let z0 = initial_latent(prior, g.latent_dim(), seed, r);
        match descend(task, g, d, cfg, x_ref_score, prior, z0) {
            Ok(run) => {
                if best
                    .as_ref()
                    .is_none_or(|(_, b)| run.final_losses.total < b.final_losses.total)
                {
                    best = Some((r, run));
                }
            }
            Err(e) if e.is_numeric() => {
                log::warn!("completion restart {r} diverged: {e}");
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    let Some((restart, run)) = best else {
        return Err(last_err.expect("at least one restart ran"));
    };
    let gz = g.generate(&Tensor::matrix(1, run.z.len(), run.z.clone())?)?;
    let y_completed = compose_completion(&task.y, &task.mask, gz.data())?;
    let (p, s) = task.score(&y_completed)?;
    Ok(CompletionResult {
        z_hat: run.z,
        y_completed,
        psnr: p,
        ssim: s,
        loss_trace: run.trace,
        contextual: run.final_losses.contextual,
        perceptual: run.final_losses.perceptual,
        total: run.final_losses.total,
        restart,
    })
}
