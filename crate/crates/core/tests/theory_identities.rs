mod common;

use common::rng;
use gogan_core::gan::{Critic, Generator, Mlp, OutputKind, PriorKind};
use gogan_core::gogan::{GoganChain, Stage};
use gogan_core::rng::Rng;
use gogan_core::tensor::{ParamSet, Tensor};
use gogan_core::theory::{empirical_geometry, phi_recursion};
use gogan_core::Error;
use rand::Rng as _;

const CONFIGS: usize = 1000;

/// A feasible random geometry: each η is a random fraction of the
/// previous φ, with occasional exact zeros and exact upper-edge values.
fn random_feasible(rng: &mut Rng) -> (f64, Vec<f64>) {
    let beta = rng.random_range(0.01..10.0);
    let n = rng.random_range(1..=8);
    let mut etas = Vec::with_capacity(n);
    let mut phi = beta;
    for _ in 0..n {
        let eta = match rng.random_range(0..10) {
            0 => 0.0,
            1 => phi,
            _ => rng.random_range(0.0..1.0) * phi,
        };
        etas.push(eta);
        phi = (phi - eta) / 2.0;
    }
    (beta, etas)
}

/// Straight loop over the recursion, kept separate from the library code.
fn oracle_phis(beta: f64, etas: &[f64]) -> Vec<f64> {
    let mut out = vec![];
    let mut last = beta;
    for e in etas {
        last = 0.5 * (last - e);
        out.push(last);
    }
    out
}

#[test]
fn recursion_matches_independent_loop() {
    let mut r = rng("theory.recursion");
    for _ in 0..CONFIGS {
        let (beta, etas) = random_feasible(&mut r);
        let g = phi_recursion(beta, &etas).unwrap();
        assert!(g.is_feasible());
        let want = oracle_phis(beta, &etas);
        assert_eq!(g.phis.len(), want.len());
        for (a, b) in g.phis.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn summation_equals_closed_form() {
    let mut r = rng("theory.closed_form");
    for _ in 0..CONFIGS {
        let (beta, etas) = random_feasible(&mut r);
        let g = phi_recursion(beta, &etas).unwrap();
        let phis = oracle_phis(beta, &etas);
        let oracle_sum: f64 = etas.iter().zip(&phis).map(|(e, p)| e + p).sum();
        let sum = g.tgr_sum().unwrap();
        let closed = g.tgr_closed_form().unwrap();
        assert!((sum - closed).abs() < 1e-12, "β={beta} η={etas:?}: {sum} vs {closed}");
        assert!((sum - oracle_sum).abs() < 1e-12);
    }
}

#[test]
fn half_bound_holds_and_is_tight_only_at_the_boundary() {
    let mut r = rng("theory.half_bound");
    for _ in 0..CONFIGS {
        let (beta, etas) = random_feasible(&mut r);
        let g = phi_recursion(beta, &etas).unwrap();
        let b = g.check_half_bound().unwrap();
        assert!(b.holds, "β={beta} η={etas:?} margin {}", b.margin);
        let tight = etas.len() == 1 && etas[0] == 0.0;
        if tight {
            assert_eq!(b.margin, 0.0);
        } else {
            assert!(b.margin > 0.0, "β={beta} η={etas:?}");
        }
        let two = g.tgr_prefix(1).unwrap();
        assert!((two - (beta / 2.0 + etas[0] / 2.0)).abs() < 1e-12);
    }
}

#[test]
fn reduction_grows_with_each_feasible_stage() {
    let mut r = rng("theory.monotone");
    for _ in 0..CONFIGS {
        let (beta, etas) = random_feasible(&mut r);
        let g = phi_recursion(beta, &etas).unwrap();
        for k in 1..etas.len() {
            if g.phis[k - 1] > 0.0 {
                assert!(g.tgr_prefix(k + 1).unwrap() > g.tgr_prefix(k).unwrap());
            }
        }
    }
}

#[test]
fn zero_etas_halve_geometrically() {
    for n in 1..12 {
        let g = phi_recursion(3.0, &vec![0.0; n]).unwrap();
        for (i, p) in g.phis.iter().enumerate() {
            assert_eq!(*p, 3.0 * 0.5f64.powi(i as i32 + 1));
        }
    }
}

#[test]
fn shrinking_an_eta_keeps_feasibility() {
    let mut r = rng("theory.shrink");
    for _ in 0..CONFIGS {
        let (beta, mut etas) = random_feasible(&mut r);
        let i = r.random_range(0..etas.len());
        etas[i] *= r.random_range(0.0..1.0);
        assert!(phi_recursion(beta, &etas).unwrap().is_feasible());
    }
}

fn linear_stage(index: usize, latent: usize, fake_out: f64, critic_bias: f64) -> Stage {
    let mut gp = ParamSet::new();
    gp.insert("layer0.weight", Tensor::zeros(vec![latent, 1]).unwrap())
        .unwrap();
    gp.insert("layer0.bias", Tensor::matrix(1, 1, vec![fake_out]).unwrap())
        .unwrap();
    let mut cp = ParamSet::new();
    cp.insert("layer0.weight", Tensor::matrix(1, 1, vec![1.0]).unwrap())
        .unwrap();
    cp.insert("layer0.bias", Tensor::matrix(1, 1, vec![critic_bias]).unwrap())
        .unwrap();
    Stage {
        index,
        generator: Generator::new(Mlp::from_params(&[latent, 1], 0.2, gp).unwrap(), OutputKind::Linear),
        critic: Critic::new(Mlp::from_params(&[1, 1], 0.2, cp).unwrap()).unwrap(),
        epsilon: 0.1,
        frozen: true,
    }
}

/// Stage `i` scores real data (all ones) at `R_i` and its own fakes at `F_i`.
fn constructed_chain(reals: &[f64], fakes: &[f64]) -> GoganChain {
    let stage = |i: usize| {
        let bias = reals[i] - 1.0;
        linear_stage(i + 1, 2, fakes[i] - bias, bias)
    };
    let mut chain = GoganChain::new(stage(0), 1.0, 1.0, PriorKind::Uniform).unwrap();
    for i in 1..reals.len() {
        chain.push_stage(stage(i)).unwrap();
    }
    chain
}

#[test]
fn equilibrium_fixture_has_zero_residuals() {
    let (beta, etas) = (1.0, [0.2, 0.1, 0.05]);
    let geo = phi_recursion(beta, &etas).unwrap();
    let mut reals = vec![1.0];
    let mut fakes = vec![0.0];
    for (e, p) in etas.iter().zip(&geo.phis) {
        reals.push(reals.last().unwrap() - e);
        fakes.push(fakes.last().unwrap() + p);
    }
    let chain = constructed_chain(&reals, &fakes);
    let real = Tensor::filled(vec![16, 1], 1.0).unwrap();
    let noise = Tensor::filled(vec![16, 2], 0.3).unwrap();
    let emp = empirical_geometry(&chain, &real, &noise).unwrap();
    assert!((emp.beta - beta).abs() < 1e-12);
    for i in 0..etas.len() {
        assert!((emp.etas[i] - etas[i]).abs() < 1e-12);
        assert!((emp.phis[i] - geo.phis[i]).abs() < 1e-12);
        assert!(emp.residuals[i].abs() < 1e-12);
    }
}

#[test]
fn off_equilibrium_fixture_reports_residuals() {
    let chain = constructed_chain(&[1.0, 1.1], &[0.0, 0.3]);
    let real = Tensor::filled(vec![4, 1], 1.0).unwrap();
    let noise = Tensor::filled(vec![4, 2], 0.0).unwrap();
    let emp = empirical_geometry(&chain, &real, &noise).unwrap();
    assert!((emp.etas[0] + 0.1).abs() < 1e-12);
    // φ̂₁ − (β̂ − η̂₁)/2 = 0.3 − (1 + 0.1)/2
    assert!((emp.residuals[0] + 0.25).abs() < 1e-12);
}

#[test]
fn single_stage_chain_is_rejected() {
    let chain = constructed_chain(&[1.0], &[0.0]);
    let real = Tensor::filled(vec![4, 1], 1.0).unwrap();
    let noise = Tensor::filled(vec![4, 2], 0.0).unwrap();
    assert!(matches!(
        empirical_geometry(&chain, &real, &noise),
        Err(Error::Usage(_))
    ));
}
