//! Central finite-difference checks of the tape's gradients, for every
//! primitive op and for the composed training and completion objectives.

use rand::Rng as _;

use crate::completion::{contextual_loss, make_center_mask, perceptual_loss};
use crate::gan::{generator_wgan_loss, mgan_critic_loss, wgan_critic_loss, Critic, Generator, Mlp, OutputKind};
use crate::gogan::{gogan_total_loss, ranking_hinge};
use crate::rng::{substream, Rng};
use crate::tensor::{Bindings, ParamSet, Tape, Tensor, Var};
use crate::{Error, Result};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

type Make = Box<dyn Fn(&mut Rng) -> Result<Vec<Tensor>> + Send + Sync>;
type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var> + Send + Sync>;

/// A scalar function of some random input tensors.
pub struct GradCase {
    pub name: String,
    make: Make,
    build: Build,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseReport {
    pub name: String,
    pub instances: usize,
    /// Largest relative error over all instances.
    pub worst: f64,
}

impl CaseReport {
    pub fn passed(&self) -> bool {
        self.worst < FD_TOL
    }
}

impl GradCase {
    pub fn new(
        name: impl Into<String>,
        make: impl Fn(&mut Rng) -> Result<Vec<Tensor>> + Send + Sync + 'static,
        build: impl Fn(&mut Tape, &[Var]) -> Result<Var> + Send + Sync + 'static,
    ) -> Self {
        GradCase {
            name: name.into(),
            make: Box::new(make),
            build: Box::new(build),
        }
    }

    fn value(&self, inputs: &[Tensor]) -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = (self.build)(&mut tape, &vars)?;
        tape.value(out).item()
    }

    fn analytic(&self, inputs: &[Tensor]) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = (self.build)(&mut tape, &vars)?;
        let g = tape.backward(out)?;
        vars.iter()
            .map(|&v| {
                g.get(v)
                    .map(|t| t.data().to_vec())
                    .ok_or_else(|| Error::Usage(format!("{}: input has no gradient", self.name)))
            })
            .collect()
    }

    /// Compares tape and finite-difference gradients on `instances` fresh
    /// inputs drawn from the `seed`/name substream.
    pub fn run(&self, seed: u64, instances: usize) -> Result<CaseReport> {
        let mut rng = substream(seed, &self.name);
        let mut worst: f64 = 0.0;
        for _ in 0..instances {
            let inputs = (self.make)(&mut rng)?;
            let a = self.analytic(&inputs)?;
            let n = numeric_grad(&inputs, &|xs| self.value(xs))?;
            worst = worst.max(relative_error(&a, &n));
        }
        Ok(CaseReport {
            name: self.name.clone(),
            instances,
            worst,
        })
    }
}

/// Central differences of `f` with respect to every entry of every input.
pub fn numeric_grad(inputs: &[Tensor], f: &dyn Fn(&[Tensor]) -> Result<f64>) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        let mut g = Vec::with_capacity(inputs[k].len());
        for i in 0..inputs[k].len() {
            let eval = |delta: f64| {
                let mut xs = inputs.to_vec();
                let mut data = xs[k].data().to_vec();
                data[i] += delta;
                xs[k] = Tensor::new(xs[k].shape().to_vec(), data)?;
                f(&xs)
            };
            g.push((eval(FD_STEP)? - eval(-FD_STEP)?) / (2.0 * FD_STEP));
        }
        out.push(g);
    }
    Ok(out)
}

/// Norm-wise relative error `‖a − n‖ / max(‖a‖, ‖n‖)` over all inputs
/// flattened together. Two zero gradients count as exact agreement.
pub fn relative_error(analytic: &[Vec<f64>], numeric: &[Vec<f64>]) -> f64 {
    let a: Vec<f64> = analytic.iter().flatten().copied().collect();
    let n: Vec<f64> = numeric.iter().flatten().copied().collect();
    if a.len() != n.len() {
        return f64::INFINITY;
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff = a.iter().zip(&n).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = norm(&a).max(norm(&n));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn rand_tensor(rng: &mut Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Result<Tensor> {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect())
}

/// Entries at least `gap` away from zero, where the kinked ops are smooth.
fn rand_off_zero(rng: &mut Rng, rows: usize, cols: usize, gap: f64) -> Result<Tensor> {
    let data = (0..rows * cols)
        .map(|_| {
            let mag = rng.random_range(gap..1.0);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Tensor::matrix(rows, cols, data)
}

fn mlp_params(sizes: &[usize], rng: &mut Rng, scale: f64) -> Result<Vec<Tensor>> {
    let mut v = Vec::new();
    for w in sizes.windows(2) {
        v.push(rand_tensor(rng, w[0], w[1], -scale, scale)?);
        v.push(rand_tensor(rng, 1, w[1], -scale, scale)?);
    }
    Ok(v)
}

fn mlp(sizes: &[usize], tensors: &[Tensor]) -> Result<Mlp> {
    let mut p = ParamSet::new();
    for (i, pair) in tensors.chunks(2).enumerate() {
        p.insert(format!("layer{i}.weight"), pair[0].clone())?;
        p.insert(format!("layer{i}.bias"), pair[1].clone())?;
    }
    Mlp::from_params(sizes, 0.2, p)
}

/// Routes a network's parameters through the given tape variables.
fn bindings_for(vars: &[Var]) -> Bindings {
    (0..vars.len() / 2)
        .flat_map(|i| [format!("layer{i}.weight"), format!("layer{i}.bias")])
        .zip(vars.iter().copied())
        .collect()
}

/// Contracts an output with fixed random weights drawn from `key` so each
/// entry contributes a distinct coefficient.
fn readout(tape: &mut Tape, out: Var, seed: u64, key: &str) -> Result<Var> {
    let shape = tape.value(out).shape().to_vec();
    let mut r = substream(seed, key);
    let w = (0..tape.value(out).len()).map(|_| r.random_range(-1.0..1.0)).collect();
    let w = tape.constant(Tensor::new(shape, w)?);
    let p = tape.mul(out, w)?;
    tape.sum(p)
}

const ROWS: usize = 3;
const COLS: usize = 4;

fn unary(
    seed: u64,
    name: &str,
    input: fn(&mut Rng) -> Result<Tensor>,
    op: impl Fn(&mut Tape, Var) -> Result<Var> + Send + Sync + 'static,
) -> GradCase {
    let key = format!("{name}.readout");
    GradCase::new(
        name,
        move |rng| Ok(vec![input(rng)?]),
        move |tape, v| {
            let o = op(tape, v[0])?;
            readout(tape, o, seed, &key)
        },
    )
}

fn binary(
    seed: u64,
    name: &str,
    rhs: (usize, usize),
    op: impl Fn(&mut Tape, Var, Var) -> Result<Var> + Send + Sync + 'static,
) -> GradCase {
    let key = format!("{name}.readout");
    GradCase::new(
        name,
        move |rng| {
            Ok(vec![
                rand_tensor(rng, ROWS, COLS, -2.0, 2.0)?,
                rand_tensor(rng, rhs.0, rhs.1, -2.0, 2.0)?,
            ])
        },
        move |tape, v| {
            let o = op(tape, v[0], v[1])?;
            readout(tape, o, seed, &key)
        },
    )
}

const CRITIC: [usize; 4] = [2, 5, 4, 1];
const GENERATOR: [usize; 3] = [3, 5, 2];
const BATCH: usize = 4;
const CRITIC_PARAMS: usize = 2 * (CRITIC.len() - 1);
const MARGIN: f64 = 0.05;

fn critic_inputs(rng: &mut Rng) -> Result<Vec<Tensor>> {
    let mut v = mlp_params(&CRITIC, rng, 0.8)?;
    v.push(rand_tensor(rng, BATCH, 2, -1.5, 1.5)?);
    v.push(rand_tensor(rng, BATCH, 2, -1.5, 1.5)?);
    Ok(v)
}

/// Real and fake scores of a critic built from the leading inputs.
fn critic_scores(tape: &mut Tape, v: &[Var]) -> Result<(Var, Var)> {
    let params: Vec<Tensor> = v[..CRITIC_PARAMS].iter().map(|&p| tape.value(p).clone()).collect();
    let critic = Critic::new(mlp(&CRITIC, &params)?)?;
    let b = bindings_for(&v[..CRITIC_PARAMS]);
    let real = critic.forward(tape, &b, v[CRITIC_PARAMS])?;
    let fake = critic.forward(tape, &b, v[CRITIC_PARAMS + 1])?;
    Ok((real, fake))
}

const SIDE: usize = 12;
const LATENT: usize = 3;

fn completion_models(seed: u64, name: &str) -> Result<(Generator, Critic, Vec<f64>)> {
    let mut r = substream(seed, &format!("{name}.models"));
    let gs = [LATENT, 6, SIDE * SIDE];
    let ds = [SIDE * SIDE, 6, 1];
    let g = Generator::new(mlp(&gs, &mlp_params(&gs, &mut r, 0.8)?)?, OutputKind::Image);
    let d = Critic::new(mlp(&ds, &mlp_params(&ds, &mut r, 0.3)?)?)?;
    let y = (0..SIDE * SIDE).map(|_| r.random_range(0.0..1.0)).collect();
    Ok((g, d, y))
}

fn latent_input(rng: &mut Rng) -> Result<Vec<Tensor>> {
    Ok(vec![rand_tensor(rng, 1, LATENT, -1.0, 1.0)?])
}

/// Every primitive op plus the critic, generator, staged and completion
/// objectives.
pub fn standard_cases(seed: u64) -> Result<Vec<GradCase>> {
    let dense = |r: &mut Rng| rand_tensor(r, ROWS, COLS, -2.0, 2.0);
    let wide = |r: &mut Rng| rand_tensor(r, ROWS, COLS, -3.0, 3.0);
    let kinked = |r: &mut Rng| rand_off_zero(r, ROWS, COLS, 1e-3);
    let mut cases = vec![
        unary(seed, "scale", dense, |t, x| t.scale(x, -1.7)),
        unary(seed, "shift", dense, |t, x| t.shift(x, 0.3)),
        unary(seed, "leaky_relu", kinked, |t, x| t.leaky_relu(x, 0.2)),
        unary(seed, "tanh", wide, |t, x| t.tanh(x)),
        unary(seed, "hinge", kinked, |t, x| t.hinge(x)),
        unary(seed, "abs", kinked, |t, x| t.abs(x)),
        unary(seed, "sum", dense, |t, x| t.sum(x)),
        unary(seed, "mean", dense, |t, x| t.mean(x)),
        binary(seed, "add", (ROWS, COLS), |t, a, b| t.add(a, b)),
        binary(seed, "sub", (ROWS, COLS), |t, a, b| t.sub(a, b)),
        binary(seed, "mul", (ROWS, COLS), |t, a, b| t.mul(a, b)),
        binary(seed, "matmul", (COLS, 2), |t, a, b| t.matmul(a, b)),
        binary(seed, "add_scalar", (1, 1), |t, a, b| t.add(a, b)),
        binary(seed, "sub_scalar", (1, 1), |t, a, b| t.sub(a, b)),
        binary(seed, "mul_scalar", (1, 1), |t, a, b| t.mul(a, b)),
    ];

    cases.push(GradCase::new("wgan_critic", critic_inputs, |tape, v| {
        let (r, f) = critic_scores(tape, v)?;
        wgan_critic_loss(tape, r, f)
    }));
    cases.push(GradCase::new("mgan_critic", critic_inputs, |tape, v| {
        let (r, f) = critic_scores(tape, v)?;
        mgan_critic_loss(tape, f, r, MARGIN)
    }));
    let prev = rand_tensor(&mut substream(seed, "ranking.prev"), BATCH, 1, -0.3, 0.3)?;
    cases.push(GradCase::new("ranking", critic_inputs, move |tape, v| {
        let (r, _) = critic_scores(tape, v)?;
        ranking_hinge(tape, &prev, r, MARGIN)
    }));
    let prev = rand_tensor(&mut substream(seed, "total.prev"), BATCH, 1, -0.3, 0.3)?;
    cases.push(GradCase::new("total", critic_inputs, move |tape, v| {
        let (r, f) = critic_scores(tape, v)?;
        let d = mgan_critic_loss(tape, f, r, MARGIN)?;
        let k = ranking_hinge(tape, &prev, r, MARGIN)?;
        gogan_total_loss(tape, d, k, 0.7, 1.3)
    }));

    let critic = Critic::new(mlp(
        &CRITIC,
        &mlp_params(&CRITIC, &mut substream(seed, "generator.critic"), 0.8)?,
    )?)?;
    let gp = 2 * (GENERATOR.len() - 1);
    cases.push(GradCase::new(
        "generator_wgan",
        |rng| {
            let mut v = mlp_params(&GENERATOR, rng, 0.8)?;
            v.push(rand_tensor(rng, BATCH, GENERATOR[0], -1.0, 1.0)?);
            Ok(v)
        },
        move |tape, v| {
            let params: Vec<Tensor> = v[..gp].iter().map(|&p| tape.value(p).clone()).collect();
            let g = Generator::new(mlp(&GENERATOR, &params)?, OutputKind::Linear);
            let fake = g.forward(tape, &bindings_for(&v[..gp]), v[gp])?;
            let cb = critic.params().bind(tape, false);
            let s = critic.forward(tape, &cb, fake)?;
            generator_wgan_loss(tape, s)
        },
    ));

    let (g, _, y) = completion_models(seed, "contextual")?;
    let mask = make_center_mask(SIDE, SIDE, 0.25)?;
    cases.push(GradCase::new("contextual", latent_input, move |tape, v| {
        let gb = g.params().bind(tape, false);
        let gz = g.forward(tape, &gb, v[0])?;
        contextual_loss(tape, gz, &y, &mask)
    }));
    let (g, d, _) = completion_models(seed, "perceptual")?;
    cases.push(GradCase::new("perceptual", latent_input, move |tape, v| {
        let gb = g.params().bind(tape, false);
        let db = d.params().bind(tape, false);
        let gz = g.forward(tape, &gb, v[0])?;
        perceptual_loss(tape, &d, &db, gz, 0.25)
    }));
    let (g, d, y) = completion_models(seed, "completion_objective")?;
    let mask = make_center_mask(SIDE, SIDE, 0.49)?;
    cases.push(GradCase::new("completion_objective", latent_input, move |tape, v| {
        let gb = g.params().bind(tape, false);
        let db = d.params().bind(tape, false);
        let gz = g.forward(tape, &gb, v[0])?;
        let c = contextual_loss(tape, gz, &y, &mask)?;
        let p = perceptual_loss(tape, &d, &db, gz, 0.25)?;
        let p = tape.scale(p, 0.1)?;
        tape.add(c, p)
    }));
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_of_identical_gradients_is_zero() {
        let a = vec![vec![1.0, -2.0], vec![3.0]];
        assert_eq!(relative_error(&a, &a), 0.0);
        assert_eq!(relative_error(&[vec![0.0]], &[vec![0.0]]), 0.0);
        assert!(relative_error(&[vec![1.0]], &[vec![1.0, 2.0]]).is_infinite());
    }

    #[test]
    fn numeric_grad_of_a_quadratic() {
        let x = Tensor::matrix(1, 2, vec![1.5, -0.5]).unwrap();
        let g = numeric_grad(&[x], &|xs| Ok(xs[0].data().iter().map(|v| v * v).sum())).unwrap();
        assert!((g[0][0] - 3.0).abs() < 1e-8 && (g[0][1] + 1.0).abs() < 1e-8);
    }

    #[test]
    fn a_wrong_gradient_is_caught() {
        let case = GradCase::new(
            "stopped",
            |rng| Ok(vec![rand_tensor(rng, 2, 2, -1.0, 1.0)?]),
            |tape, v| {
                let x = tape.value(v[0]).clone();
                let c = tape.constant(x);
                let sq = tape.mul(c, v[0])?;
                tape.sum(sq)
            },
        );
        let r = case.run(1, 5).unwrap();
        assert!(!r.passed(), "half of the true gradient should fail, worst {}", r.worst);
    }
}
