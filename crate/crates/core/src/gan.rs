//! Dense generator and critic networks, the Wasserstein and margin losses,
//! and the batch gap estimate.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Bindings, ParamSet, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorKind {
    /// Uniform on `[-1, 1]` per coordinate.
    Uniform,
    StandardNormal,
}

impl PriorKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(PriorKind::Uniform),
            "normal" => Ok(PriorKind::StandardNormal),
            _ => Err(Error::Config(format!("unknown prior {s:?} (uniform|normal)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PriorKind::Uniform => "uniform",
            PriorKind::StandardNormal => "normal",
        }
    }

    /// Clamps a latent vector back into the support of the prior.
    pub fn project(self, z: &mut [f64]) {
        if self == PriorKind::Uniform {
            for v in z {
                *v = v.clamp(-1.0, 1.0);
            }
        }
    }
}

/// Deterministic stream of latent batches.
#[derive(Clone, Debug)]
pub struct NoisePrior {
    kind: PriorKind,
    dim: usize,
    rng: Rng,
}

impl NoisePrior {
    pub fn new(kind: PriorKind, dim: usize, rng: Rng) -> Self {
        NoisePrior { kind, dim, rng }
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Draws an `m × dim` batch.
    pub fn sample(&mut self, m: usize) -> Result<Tensor> {
        if m == 0 {
            return Err(Error::Usage("noise batch size must be positive".into()));
        }
        let n = m * self.dim;
        let data: Vec<f64> = match self.kind {
            PriorKind::Uniform => (0..n).map(|_| self.rng.random_range(-1.0..=1.0)).collect(),
            PriorKind::StandardNormal => (0..n).map(|_| StandardNormal.sample(&mut self.rng)).collect(),
        };
        Tensor::matrix(m, self.dim, data)
    }
}

/// A stack of dense layers with leaky-ReLU between them and no activation
/// after the last one. Parameters are `layer{i}.weight` (in×out) and
/// `layer{i}.bias` (1×out).
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    slope: f64,
    params: ParamSet,
}

impl Mlp {
    /// Weights and biases drawn from `U(-1/√fan_in, 1/√fan_in)`.
    pub fn init(sizes: &[usize], slope: f64, rng: &mut Rng) -> Result<Self> {
        Self::build(sizes, slope, |fan_in, n| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
        })
    }

    pub fn zeros(sizes: &[usize], slope: f64) -> Result<Self> {
        Self::build(sizes, slope, |_, n| vec![0.0; n])
    }

    fn build(sizes: &[usize], slope: f64, mut fill: impl FnMut(usize, usize) -> Vec<f64>) -> Result<Self> {
        validate_arch(sizes, slope)?;
        let mut params = ParamSet::new();
        for (i, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            params.insert(
                format!("layer{i}.weight"),
                Tensor::matrix(fan_in, fan_out, fill(fan_in, fan_in * fan_out))?,
            )?;
            params.insert(
                format!("layer{i}.bias"),
                Tensor::matrix(1, fan_out, fill(fan_in, fan_out))?,
            )?;
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            slope,
            params,
        })
    }

    pub fn from_params(sizes: &[usize], slope: f64, params: ParamSet) -> Result<Self> {
        validate_arch(sizes, slope)?;
        let expected = 2 * (sizes.len() - 1);
        if params.len() != expected {
            return Err(Error::Format(format!(
                "expected {expected} parameters for layers {sizes:?}, got {}",
                params.len()
            )));
        }
        for (i, w) in sizes.windows(2).enumerate() {
            for (name, shape) in [
                (format!("layer{i}.weight"), [w[0], w[1]]),
                (format!("layer{i}.bias"), [1, w[1]]),
            ] {
                match params.get(&name) {
                    Some(t) if t.shape() == shape => {}
                    Some(t) => {
                        return Err(Error::Format(format!(
                            "{name} has shape {:?}, expected {shape:?}",
                            t.shape()
                        )))
                    }
                    None => return Err(Error::Format(format!("missing parameter {name}"))),
                }
            }
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            slope,
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn forward(&self, tape: &mut Tape, bindings: &Bindings, x: Var) -> Result<Var> {
        let (m, cols) = tape.value(x).dims2()?;
        if cols != self.input_dim() {
            return Err(Error::Usage(format!(
                "network expects {} input columns, got {cols}",
                self.input_dim()
            )));
        }
        let ones = tape.constant(Tensor::filled(vec![m, 1], 1.0)?);
        let layers = self.sizes.len() - 1;
        let mut h = x;
        for i in 0..layers {
            let w = bindings.var(&format!("layer{i}.weight"))?;
            let b = bindings.var(&format!("layer{i}.bias"))?;
            let xw = tape.matmul(h, w)?;
            let bias = tape.matmul(ones, b)?;
            h = tape.add(xw, bias)?;
            if i + 1 < layers {
                h = tape.leaky_relu(h, self.slope)?;
            }
        }
        Ok(h)
    }

    fn meta(&self) -> Vec<(String, String)> {
        let sizes: Vec<String> = self.sizes.iter().map(|s| s.to_string()).collect();
        vec![
            ("layers".into(), sizes.join(",")),
            ("leaky_slope".into(), self.slope.to_string()),
        ]
    }

    fn from_meta(ck: &crate::tensor::Checkpoint) -> Result<Self> {
        let sizes = ck
            .meta("layers")?
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(format!("bad layers entry: {e}")))?;
        let slope: f64 = ck
            .meta("leaky_slope")?
            .parse()
            .map_err(|e| Error::Format(format!("bad leaky_slope: {e}")))?;
        Mlp::from_params(&sizes, slope, ck.params.clone())
    }
}

fn validate_arch(sizes: &[usize], slope: f64) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
    }
    if !(slope > 0.0 && slope < 1.0) {
        return Err(Error::Config(format!("leaky_relu slope {slope} outside (0, 1)")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputKind {
    /// Unbounded output for point data.
    Linear,
    /// `tanh` output mapped to `[0, 1]` by `(t + 1) / 2`.
    Image,
}

impl OutputKind {
    pub fn name(self) -> &'static str {
        match self {
            OutputKind::Linear => "linear",
            OutputKind::Image => "image",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(OutputKind::Linear),
            "image" => Ok(OutputKind::Image),
            _ => Err(Error::Format(format!("unknown generator output {s:?}"))),
        }
    }
}

/// Maps latent vectors to data space.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub net: Mlp,
    pub output: OutputKind,
}

impl Generator {
    pub fn new(net: Mlp, output: OutputKind) -> Self {
        Generator { net, output }
    }

    pub fn latent_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn data_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn params(&self) -> &ParamSet {
        self.net.params()
    }

    pub fn forward(&self, tape: &mut Tape, bindings: &Bindings, z: Var) -> Result<Var> {
        let h = self.net.forward(tape, bindings, z)?;
        match self.output {
            OutputKind::Linear => Ok(h),
            OutputKind::Image => {
                let t = tape.tanh(h)?;
                let t = tape.shift(t, 1.0)?;
                tape.scale(t, 0.5)
            }
        }
    }

    /// Forward pass outside any training tape.
    pub fn generate(&self, z: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let b = self.params().bind(&mut tape, false);
        let zv = tape.constant(z.clone());
        let out = self.forward(&mut tape, &b, zv)?;
        Ok(tape.value(out).clone())
    }

    pub fn checkpoint_meta(&self) -> Vec<(String, String)> {
        let mut m = vec![("kind".to_string(), "generator".to_string())];
        m.extend(self.net.meta());
        m.push(("output".into(), self.output.name().into()));
        m
    }

    pub fn from_checkpoint(ck: &crate::tensor::Checkpoint) -> Result<Self> {
        if ck.meta("kind")? != "generator" {
            return Err(Error::Format("checkpoint does not hold a generator".into()));
        }
        let output = OutputKind::parse(ck.meta("output")?)?;
        Ok(Generator::new(Mlp::from_meta(ck)?, output))
    }
}

/// Scores samples with one unbounded real number each.
#[derive(Clone, Debug, PartialEq)]
pub struct Critic {
    pub net: Mlp,
}

impl Critic {
    pub fn new(net: Mlp) -> Result<Self> {
        if net.output_dim() != 1 {
            return Err(Error::Config(format!(
                "critic must output one score, got {}",
                net.output_dim()
            )));
        }
        Ok(Critic { net })
    }

    pub fn data_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn params(&self) -> &ParamSet {
        self.net.params()
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        self.net.params_mut()
    }

    /// `m × 1` scores on the tape.
    pub fn forward(&self, tape: &mut Tape, bindings: &Bindings, x: Var) -> Result<Var> {
        self.net.forward(tape, bindings, x)
    }

    /// Scores outside any training tape.
    pub fn score(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let b = self.params().bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let out = self.forward(&mut tape, &b, xv)?;
        Ok(tape.value(out).clone())
    }

    pub fn checkpoint_meta(&self) -> Vec<(String, String)> {
        let mut m = vec![("kind".to_string(), "critic".to_string())];
        m.extend(self.net.meta());
        m
    }

    pub fn from_checkpoint(ck: &crate::tensor::Checkpoint) -> Result<Self> {
        if ck.meta("kind")? != "critic" {
            return Err(Error::Format("checkpoint does not hold a critic".into()));
        }
        Critic::new(Mlp::from_meta(ck)?)
    }
}

/// `mean(fake) − mean(real)`: the Wasserstein critic objective to minimize.
pub fn wgan_critic_loss(tape: &mut Tape, scores_real: Var, scores_fake: Var) -> Result<Var> {
    let mf = tape.mean(scores_fake)?;
    let mr = tape.mean(scores_real)?;
    tape.sub(mf, mr)
}

/// `−mean(fake)`.
pub fn generator_wgan_loss(tape: &mut Tape, scores_fake: Var) -> Result<Var> {
    let mf = tape.mean(scores_fake)?;
    tape.scale(mf, -1.0)
}

/// Margin critic loss `(1/m) Σ max(0, fake_i + ε − real_i)` with samples
/// paired by batch index.
pub fn mgan_critic_loss(tape: &mut Tape, scores_fake: Var, scores_real: Var, epsilon: f64) -> Result<Var> {
    check_margin(epsilon)?;
    let (f, r) = (tape.value(scores_fake), tape.value(scores_real));
    if f.shape() != r.shape() {
        return Err(Error::Usage(format!(
            "margin loss pairs samples by index; got {:?} fake vs {:?} real scores",
            f.shape(),
            r.shape()
        )));
    }
    let d = tape.sub(scores_fake, scores_real)?;
    let d = tape.shift(d, epsilon)?;
    let h = tape.hinge(d)?;
    tape.mean(h)
}

pub(crate) fn check_margin(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Config(format!("margin must be positive, got {epsilon}")));
    }
    Ok(())
}

/// Batch gap Γ: mean critic score of the real batch minus that of the fake
/// batch. Pure evaluation; nothing is recorded on a training tape.
pub fn estimate_gap(critic: &Critic, batch_real: &Tensor, batch_fake: &Tensor) -> Result<f64> {
    let r = critic.score(batch_real)?;
    let f = critic.score(batch_fake)?;
    Ok(r.mean() - f.mean())
}
