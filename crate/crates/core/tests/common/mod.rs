#![allow(dead_code)]

use gogan_core::gan::{Critic, Generator, Mlp, OutputKind};
use gogan_core::rng::{substream, Rng};
use gogan_core::tensor::{ParamSet, Tensor};
use rand::Rng as _;

pub fn rng(name: &str) -> Rng {
    substream(20240601, name)
}

pub fn rand_tensor(rng: &mut Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Like `rand_tensor` but keeps every entry at least `gap` away from zero.
pub fn rand_tensor_off_zero(rng: &mut Rng, rows: usize, cols: usize, gap: f64) -> Tensor {
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
    Tensor::matrix(rows, cols, data).unwrap()
}

pub fn mlp_params(sizes: &[usize], rng: &mut Rng, scale: f64) -> Vec<Tensor> {
    let mut v = Vec::new();
    for w in sizes.windows(2) {
        v.push(rand_tensor(rng, w[0], w[1], -scale, scale));
        v.push(rand_tensor(rng, 1, w[1], -scale, scale));
    }
    v
}

pub fn param_set(tensors: &[Tensor]) -> ParamSet {
    let mut p = ParamSet::new();
    for (i, pair) in tensors.chunks(2).enumerate() {
        p.insert(format!("layer{i}.weight"), pair[0].clone()).unwrap();
        p.insert(format!("layer{i}.bias"), pair[1].clone()).unwrap();
    }
    p
}

pub fn critic_from(sizes: &[usize], tensors: &[Tensor]) -> Critic {
    Critic::new(Mlp::from_params(sizes, 0.2, param_set(tensors)).unwrap()).unwrap()
}

pub fn generator_from(sizes: &[usize], tensors: &[Tensor], output: OutputKind) -> Generator {
    Generator::new(Mlp::from_params(sizes, 0.2, param_set(tensors)).unwrap(), output)
}
