use gogan_core::data::{sample_gaussian_mixture, Dataset, MixtureSpec};
use gogan_core::gan::{estimate_gap, OutputKind, PriorKind};
use gogan_core::gogan::{
    ranking_loss, train_chain, train_stage, verify_ordering, Architecture, GoganChain, TrainConfig, TrainEvent,
};
use gogan_core::tensor::{Tape, Tensor};
use gogan_core::Error;

fn small_arch() -> Architecture {
    Architecture {
        latent_dim: 4,
        generator_hidden: vec![16],
        critic_hidden: vec![16],
        data_dim: 2,
        output: OutputKind::Linear,
        leaky_slope: 0.2,
        prior: PriorKind::Uniform,
    }
}

fn small_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 16,
        n_critic: 2,
        epochs: 3,
        seed,
        epsilon: 0.005,
        ..TrainConfig::default()
    }
}

fn ring(seed: u64) -> Dataset {
    sample_gaussian_mixture(&MixtureSpec::ring(8, 2.0, 0.02), 320, seed).unwrap()
}

#[test]
fn critic_weights_stay_clipped_after_every_update() {
    let cfg = small_cfg(1);
    let mut steps = 0;
    train_chain(&ring(1), &small_arch(), &cfg, 2, &mut |e| {
        if let TrainEvent::CriticStep { critic, .. } = e {
            assert!(critic.params().max_abs() <= cfg.clip);
            steps += 1;
        }
    })
    .unwrap();
    let iters = cfg.iterations_per_epoch(320) * cfg.epochs;
    assert_eq!(steps, 2 * iters * cfg.n_critic);
}

#[test]
fn logged_gap_equals_recomputed_estimate() {
    let mut seen = 0;
    train_chain(&ring(2), &small_arch(), &small_cfg(2), 2, &mut |e| {
        if let TrainEvent::Gap {
            gamma,
            critic,
            real,
            fake,
            ..
        } = e
        {
            assert_eq!(*gamma, estimate_gap(critic, real, fake).unwrap());
            seen += 1;
        }
    })
    .unwrap();
    assert!(seen > 0);
}

#[test]
fn gap_traces_cover_every_iteration() {
    let cfg = small_cfg(3);
    let chain = train_chain(&ring(3), &small_arch(), &cfg, 3, &mut |_| {}).unwrap();
    let iters = cfg.iterations_per_epoch(320) * cfg.epochs;
    for k in 1..=3 {
        let tr = chain.gap_trace(k).unwrap();
        assert_eq!(tr.len(), iters);
        assert!(tr.iter().all(|r| r.gamma.is_finite()));
        assert_eq!(
            tr.iter().map(|r| r.iteration).collect::<Vec<_>>(),
            (1..=iters).collect::<Vec<_>>()
        );
    }
}

#[test]
fn same_seed_gives_bitwise_identical_traces() {
    let run = || train_chain(&ring(4), &small_arch(), &small_cfg(4), 2, &mut |_| {}).unwrap();
    let (a, b) = (run(), run());
    for k in 1..=2 {
        let bits = |c: &GoganChain| {
            c.gap_trace(k)
                .unwrap()
                .iter()
                .map(|r| r.gamma.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
    }
    assert_eq!(a.stages(), b.stages());
    let c = train_chain(&ring(4), &small_arch(), &small_cfg(5), 2, &mut |_| {}).unwrap();
    assert_ne!(a.gap_trace(1).unwrap(), c.gap_trace(1).unwrap());
}

#[test]
fn single_stage_chain_is_a_plain_margin_run() {
    let (data, arch, cfg) = (ring(6), small_arch(), small_cfg(6));
    let chain = train_chain(&data, &arch, &cfg, 1, &mut |_| {}).unwrap();
    let mut plain = GoganChain::init(&arch, &cfg).unwrap();
    train_stage(&mut plain, 1, &data, &cfg, &mut |_| {}).unwrap();
    plain.freeze(1).unwrap();
    assert_eq!(chain, plain);
}

#[test]
fn next_stage_starts_from_previous_weights() {
    let (data, arch, cfg) = (ring(7), small_arch(), small_cfg(7));
    let mut chain = GoganChain::init(&arch, &cfg).unwrap();
    train_stage(&mut chain, 1, &data, &cfg, &mut |_| {}).unwrap();
    assert!(matches!(chain.push_next_stage(), Err(Error::Usage(_))));
    chain.freeze(1).unwrap();
    chain.push_next_stage().unwrap();
    let (s1, s2) = (chain.stage(1).unwrap(), chain.stage(2).unwrap());
    assert_eq!(s1.generator.params().checksum(), s2.generator.params().checksum());
    assert_eq!(s1.critic.params().checksum(), s2.critic.params().checksum());
    assert!(s1.frozen && !s2.frozen);
}

#[test]
fn training_later_stage_leaves_frozen_stage_untouched() {
    let (data, arch, cfg) = (ring(8), small_arch(), small_cfg(8));
    let mut chain = GoganChain::init(&arch, &cfg).unwrap();
    train_stage(&mut chain, 1, &data, &cfg, &mut |_| {}).unwrap();
    chain.freeze(1).unwrap();
    let before = (
        chain.stage(1).unwrap().generator.params().checksum(),
        chain.stage(1).unwrap().critic.params().checksum(),
    );
    chain.push_next_stage().unwrap();
    train_stage(&mut chain, 2, &data, &cfg, &mut |_| {}).unwrap();
    let after = (
        chain.stage(1).unwrap().generator.params().checksum(),
        chain.stage(1).unwrap().critic.params().checksum(),
    );
    assert_eq!(before, after);
    assert_ne!(
        chain.stage(2).unwrap().critic.params().checksum(),
        before.1,
        "stage 2 should have moved"
    );
}

#[test]
fn ranking_gradients_reach_only_the_current_critic() {
    let (data, arch, cfg) = (ring(9), small_arch(), small_cfg(9));
    let mut chain = train_chain(&data, &arch, &cfg, 1, &mut |_| {}).unwrap();
    chain.push_next_stage().unwrap();
    let prev = chain.stage(1).unwrap();
    let cur = chain.stage(2).unwrap();
    let mut tape = Tape::new();
    let b = cur.critic.params().bind(&mut tape, true);
    let real = tape.constant(data.samples.select_rows(&(0..16).collect::<Vec<_>>()).unwrap());
    let sr = cur.critic.forward(&mut tape, &b, real).unwrap();
    let z = Tensor::filled(vec![16, 4], 0.1).unwrap();
    let l = ranking_loss(&mut tape, prev, &z, sr, 0.05).unwrap();
    let grads = b.gradients(&tape.backward(l).unwrap());
    assert_eq!(grads.len(), cur.critic.params().len());
    assert!(
        tape.len() < 40,
        "previous stage must not be recorded: {} nodes",
        tape.len()
    );
}

#[test]
fn unfrozen_previous_stage_is_rejected() {
    let (data, arch, cfg) = (ring(10), small_arch(), small_cfg(10));
    let mut chain = GoganChain::init(&arch, &cfg).unwrap();
    let stage1 = chain.stage(1).unwrap().clone();
    let mut tape = Tape::new();
    let b = stage1.critic.params().bind(&mut tape, true);
    let real = tape.constant(data.samples.select_rows(&[0, 1]).unwrap());
    let sr = stage1.critic.forward(&mut tape, &b, real).unwrap();
    let z = Tensor::zeros(vec![2, 4]).unwrap();
    assert!(matches!(
        ranking_loss(&mut tape, &stage1, &z, sr, 0.1),
        Err(Error::Usage(_))
    ));
    assert!(matches!(
        train_stage(&mut chain, 2, &data, &cfg, &mut |_| {}),
        Err(Error::Usage(_))
    ));
}

#[test]
fn ordering_needs_two_stages() {
    let chain = train_chain(&ring(11), &small_arch(), &small_cfg(11), 1, &mut |_| {}).unwrap();
    let real = Tensor::zeros(vec![4, 2]).unwrap();
    let z = Tensor::zeros(vec![4, 4]).unwrap();
    assert!(matches!(verify_ordering(&chain, &real, &z, 0.05), Err(Error::Usage(_))));
}

#[test]
fn ordering_report_matches_direct_means() {
    let chain = train_chain(&ring(12), &small_arch(), &small_cfg(12), 2, &mut |_| {}).unwrap();
    let data = ring(99);
    let real = data.samples.select_rows(&(0..64).collect::<Vec<_>>()).unwrap();
    let z = Tensor::matrix(64, 4, (0..256).map(|i| ((i * 7) % 13) as f64 / 6.5 - 1.0).collect()).unwrap();
    let rep = verify_ordering(&chain, &real, &z, 0.05).unwrap();
    let (s1, s2) = (chain.stage(1).unwrap(), chain.stage(2).unwrap());
    let pair = &rep.pairs[0];
    let mean = |t: Tensor| t.data().iter().sum::<f64>() / t.len() as f64;
    let real2 = mean(s2.critic.score(&real).unwrap());
    let fake2 = mean(s2.critic.score(&s2.generator.generate(&z).unwrap()).unwrap());
    let fake1 = mean(s1.critic.score(&s1.generator.generate(&z).unwrap()).unwrap());
    assert!((pair.real_mean - real2).abs() < 1e-12);
    assert!((pair.fake_mean - fake2).abs() < 1e-12);
    assert!((pair.prev_fake_mean - fake1).abs() < 1e-12);
}

#[test]
fn chain_round_trips_through_checkpoints() {
    let chain = train_chain(&ring(13), &small_arch(), &small_cfg(13), 2, &mut |_| {}).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = chain.save(dir.path()).unwrap();
    assert!(files.iter().all(|f| f.exists()));
    let back = GoganChain::load(dir.path()).unwrap();
    assert_eq!(back.len(), chain.len());
    for (a, b) in back.stages().iter().zip(chain.stages()) {
        assert_eq!(a.generator.params().checksum(), b.generator.params().checksum());
        assert_eq!(a.critic.params().checksum(), b.critic.params().checksum());
        assert_eq!((a.index, a.frozen, a.epsilon), (b.index, b.frozen, b.epsilon));
    }
}
