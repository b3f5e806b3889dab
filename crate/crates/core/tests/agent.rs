use hems_core::agent::{
    actor_update, critic_targets, critic_update, evaluate, exploration_prob, select_with_prob,
    train, ActionScale, DdpgAgent, EpisodeLog, ReplayBuffer, TrainConfig, Transition, STATE_DIM,
};
use hems_core::env::HomeConfig;
use hems_core::nn::{Activation, Layer, Mlp, MlpSpec};
use hems_core::traces::{compute_norm_stats, gen_synthetic, SyntheticTraceSpec, TraceSet};
use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn traces(days: i64) -> TraceSet {
    gen_synthetic(&SyntheticTraceSpec {
        days,
        ..Default::default()
    })
    .unwrap()
}

fn tiny_config(episodes: usize) -> TrainConfig {
    TrainConfig {
        episodes,
        batch_size: 16,
        buffer_capacity: 200,
        actor_hidden: vec![8],
        critic_hidden: vec![8, 8],
        seed: 11,
        ..TrainConfig::desk_scale()
    }
}

fn random_batch(rng: &mut ChaCha8Rng, k: usize) -> Vec<Transition> {
    (0..k)
        .map(|_| Transition {
            state: std::array::from_fn(|_| rng.random()),
            action: [rng.random_range(-1.0..1.0), rng.random()],
            reward: rng.random_range(-2.0..0.0),
            next_state: std::array::from_fn(|_| rng.random()),
        })
        .collect()
}

fn zeroed(mut net: Mlp) -> Mlp {
    for l in net.layers_mut() {
        l.weights.fill(0.0);
        l.bias.fill(0.0);
    }
    net
}

#[test]
fn buffer_sampling_is_uniform() {
    let mut buf = ReplayBuffer::new(20);
    for i in 0..20 {
        buf.push(Transition {
            state: [0.0; STATE_DIM],
            action: [0.0, 0.0],
            reward: i as f64,
            next_state: [0.0; STATE_DIM],
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts = [0usize; 20];
    let draws = 20_000;
    for _ in 0..draws / 20 {
        for t in buf.sample(20, &mut rng).unwrap() {
            counts[t.reward as usize] += 1;
        }
    }
    let expected = draws as f64 / 20.0;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // 99th percentile of chi-square with 19 degrees of freedom
    assert!(chi2 < 36.191, "chi2 = {chi2}");
}

#[test]
fn buffer_underfull_and_exact_fill() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut buf = ReplayBuffer::new(10);
    let batch = random_batch(&mut rng, 4);
    for t in &batch {
        buf.push(*t);
    }
    assert!(buf.sample(5, &mut rng).is_err());
    for t in buf.sample(4, &mut rng).unwrap() {
        assert!(batch.contains(&t));
    }
}

#[test]
fn exploration_examples() {
    let cfg = TrainConfig::default();
    assert_eq!(exploration_prob(0, &cfg), 1.0);
    assert_eq!(exploration_prob(1000, &cfg), 1.0);
    // max(1 - 0.0005 * 1800, 0.1)
    assert!((exploration_prob(2800, &cfg) - 0.1).abs() < 1e-9);
    assert!((exploration_prob(1400, &cfg) - 0.8).abs() < 1e-9);
}

#[test]
fn action_selection_branches() {
    let home = HomeConfig::default();
    let scale = ActionScale::new(&home);
    let actor = Mlp::init(&TrainConfig::desk_scale().actor_spec(1)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = [0.3; STATE_DIM];
    let greedy = actor.predict_one(&s).unwrap();
    for _ in 0..100 {
        let a = select_with_prob(&actor, &s, 0.0, &mut rng, &scale).unwrap();
        assert!(!a.explored);
        assert_eq!(a.normalized.to_vec(), greedy);
        assert_eq!(a.raw.f, greedy[0] * 3.0);
        assert_eq!(a.raw.e, greedy[1] * 2.0);
    }
    for _ in 0..2000 {
        let a = select_with_prob(&actor, &s, 1.0, &mut rng, &scale).unwrap();
        assert!(a.explored);
        assert!(a.raw.f > -3.0 && a.raw.f < 3.0);
        assert!(a.raw.e > 0.0 && a.raw.e < 2.0);
    }
}

#[test]
fn critic_target_with_zero_gamma_is_reward() {
    let cfg = TrainConfig::desk_scale();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let batch = random_batch(&mut rng, 32);
    let ct = Mlp::init(&cfg.critic_spec(1)).unwrap();
    let at = Mlp::init(&cfg.actor_spec(2)).unwrap();
    let y = critic_targets(&ct, &at, &batch, 0.0).unwrap();
    let r: Vec<f64> = batch.iter().map(|t| t.reward).collect();
    assert_eq!(y.to_vec(), r);
}

#[test]
fn critic_target_reads_only_target_networks() {
    let cfg = TrainConfig::desk_scale();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let batch = random_batch(&mut rng, 32);
    let ct = zeroed(Mlp::init(&cfg.critic_spec(1)).unwrap());
    let at = zeroed(Mlp::init(&cfg.actor_spec(2)).unwrap());
    let r: Vec<f64> = batch.iter().map(|t| t.reward).collect();
    for seed in 0..3 {
        // online networks differ per iteration but cannot matter
        let mut critic = Mlp::init(&cfg.critic_spec(100 + seed)).unwrap();
        let y = critic_targets(&ct, &at, &batch, 0.995).unwrap();
        assert_eq!(y.to_vec(), r);
        let loss = critic_update(&mut critic, &ct, &at, &batch, &cfg).unwrap();
        let q = critic_q(&Mlp::init(&cfg.critic_spec(100 + seed)).unwrap(), &batch);
        let expected: f64 = q.iter().zip(&r).map(|(q, r)| (q - r).powi(2)).sum::<f64>() / 32.0;
        assert!((loss - expected).abs() < 1e-12);
    }
}

fn critic_q(critic: &Mlp, batch: &[Transition]) -> Vec<f64> {
    batch
        .iter()
        .map(|t| {
            let mut x = t.state.to_vec();
            x.extend(t.action);
            critic.predict_one(&x).unwrap()[0]
        })
        .collect()
}

#[test]
fn critic_loss_nonincreasing_on_replayed_batch() {
    let cfg = TrainConfig {
        critic_lr: 1e-4,
        ..TrainConfig::desk_scale()
    };
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = random_batch(&mut rng, 64);
        let mut critic = Mlp::init(&cfg.critic_spec(seed)).unwrap();
        let ct = critic.clone();
        let at = Mlp::init(&cfg.actor_spec(seed)).unwrap();
        let mut prev = critic_update(&mut critic, &ct, &at, &batch, &cfg).unwrap();
        for _ in 0..5 {
            let loss = critic_update(&mut critic, &ct, &at, &batch, &cfg).unwrap();
            assert!(loss <= prev, "seed {seed}: {loss} > {prev}");
            prev = loss;
        }
    }
}

#[test]
fn exact_critic_has_zero_loss_and_stays_put() {
    let cfg = TrainConfig {
        gamma: 0.0,
        ..TrainConfig::desk_scale()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut batch = random_batch(&mut rng, 16);
    for t in &mut batch {
        t.reward = 0.0;
    }
    let mut critic = zeroed(Mlp::init(&cfg.critic_spec(1)).unwrap());
    let before = critic.clone();
    let at = Mlp::init(&cfg.actor_spec(2)).unwrap();
    let loss = critic_update(&mut critic, &before, &at, &batch, &cfg).unwrap();
    assert_eq!(loss, 0.0);
    assert_eq!(critic.layers(), before.layers());
}

#[test]
fn constant_critic_leaves_actor_unchanged() {
    let cfg = TrainConfig::desk_scale();
    let mut critic = zeroed(Mlp::init(&cfg.critic_spec(1)).unwrap());
    let last = critic.layers().len() - 1;
    critic.layers_mut()[last].bias[0] = 3.5;
    let mut actor = Mlp::init(&cfg.actor_spec(2)).unwrap();
    let before = actor.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let batch = random_batch(&mut rng, 32);
    let q = actor_update(&mut actor, &critic, &batch, &cfg).unwrap();
    assert_eq!(q, 3.5);
    assert_eq!(actor.layers(), before.layers());
}

/// Critic `Q(s, a) = -|a_f - target|`, built from two rectifier units on the
/// battery-action input.
fn peaked_critic(target: f64) -> Mlp {
    let mut w1 = Array2::zeros((STATE_DIM + 2, 2));
    w1[[STATE_DIM, 0]] = 1.0;
    w1[[STATE_DIM, 1]] = -1.0;
    Mlp::from_layers(
        vec![
            Layer {
                weights: w1,
                bias: array![-target, target],
            },
            Layer {
                weights: array![[-1.0], [-1.0]],
                bias: Array1::zeros(1),
            },
        ],
        Activation::Relu,
        vec![Activation::Identity],
    )
    .unwrap()
}

#[test]
fn actor_drifts_toward_critic_peak() {
    let target = 0.4;
    let critic = peaked_critic(target);
    let cfg = TrainConfig {
        actor_lr: 1e-3,
        ..TrainConfig::desk_scale()
    };
    let mut actor = Mlp::init(&MlpSpec {
        layer_sizes: vec![STATE_DIM, 16, 2],
        hidden_activation: Activation::Relu,
        output_activations: vec![Activation::Tanh, Activation::Sigmoid],
        seed: 8,
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let batch = random_batch(&mut rng, 32);
    let gap = |actor: &Mlp| {
        batch
            .iter()
            .map(|t| (actor.predict_one(&t.state).unwrap()[0] - target).abs())
            .fold(0.0_f64, f64::max)
    };
    let start = gap(&actor);
    for _ in 0..3000 {
        actor_update(&mut actor, &critic, &batch, &cfg).unwrap();
    }
    let end = gap(&actor);
    assert!(start > 0.2, "starting gap {start}");
    assert!(end < 0.05, "gap {start} -> {end}");
}

#[test]
fn small_actor_step_does_not_lower_mean_q() {
    let base = TrainConfig::desk_scale();
    let cfg = TrainConfig {
        actor_lr: base.actor_lr / 10.0,
        ..base
    };
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = random_batch(&mut rng, 64);
        let critic = Mlp::init(&cfg.critic_spec(seed + 50)).unwrap();
        let mut actor = Mlp::init(&cfg.actor_spec(seed)).unwrap();
        let before = actor_update(&mut actor, &critic, &batch, &cfg).unwrap();
        let after = actor_update(&mut actor.clone(), &critic, &batch, &cfg).unwrap();
        assert!(after >= before, "seed {seed}: {after} < {before}");
    }
}

#[test]
fn learn_blends_targets_exactly() {
    let cfg = TrainConfig {
        tau: 0.01,
        ..tiny_config(1)
    };
    let mut agent = DdpgAgent::new(cfg.clone()).unwrap();
    // make targets differ from the online networks first
    agent.actor_target = Mlp::init(&cfg.actor_spec(99)).unwrap();
    agent.critic_target = Mlp::init(&cfg.critic_spec(98)).unwrap();
    let old_actor_t = agent.actor_target.clone();
    let old_critic_t = agent.critic_target.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    agent.learn(&random_batch(&mut rng, 16)).unwrap();
    for (new_t, old_t, online) in [
        (&agent.actor_target, &old_actor_t, &agent.actor),
        (&agent.critic_target, &old_critic_t, &agent.critic),
    ] {
        for ((n, o), on) in new_t
            .layers()
            .iter()
            .zip(old_t.layers())
            .zip(online.layers())
        {
            for ((a, b), c) in n.weights.iter().zip(&o.weights).zip(&on.weights) {
                assert_eq!(*a, 0.01 * c + 0.99 * b);
            }
        }
    }
}

#[test]
fn single_short_episode_makes_no_updates() {
    let tr = traces(2);
    let cfg = TrainConfig {
        episodes: 1,
        ..TrainConfig::desk_scale()
    };
    let report = train(&tr, &HomeConfig::default(), &cfg).unwrap();
    assert_eq!(report.updates, 0);
    assert_eq!(report.episode_rewards.len(), 1);
    let fresh = DdpgAgent::new(cfg).unwrap();
    assert_eq!(report.actor.layers(), fresh.actor.layers());
    assert_eq!(report.critic.layers(), fresh.critic.layers());
}

#[test]
fn training_is_deterministic() {
    let tr = traces(3);
    let home = HomeConfig::default().with_disturbance(1.8);
    let a = train(&tr, &home, &tiny_config(8)).unwrap();
    let b = train(&tr, &home, &tiny_config(8)).unwrap();
    assert_eq!(a.episode_rewards, b.episode_rewards);
    assert_eq!(a.actor.layers(), b.actor.layers());
    assert!(a.updates > 0);
    assert_eq!(a.moving_avg.len(), 8);
    let c = train(
        &tr,
        &home,
        &TrainConfig {
            seed: 12,
            ..tiny_config(8)
        },
    )
    .unwrap();
    assert_ne!(a.episode_rewards, c.episode_rewards);
}

#[test]
fn evaluation_is_noise_free_and_consistent() {
    let tr = traces(2);
    let home = HomeConfig::default();
    let report = train(&tr, &home, &tiny_config(4)).unwrap();
    let a = evaluate(&report.actor, &report.norm_stats, &tr, &home, 0, 48, 1).unwrap();
    let b = evaluate(&report.actor, &report.norm_stats, &tr, &home, 0, 48, 2).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.records.len(), 48);
    assert_eq!(EpisodeLog::from_records(a.records.clone()), a);
}

#[test]
fn zero_actor_gives_constant_action() {
    let tr = traces(2);
    let home = HomeConfig::default();
    let actor = zeroed(Mlp::init(&TrainConfig::desk_scale().actor_spec(0)).unwrap());
    let stats = compute_norm_stats(&tr, &home);
    let log = evaluate(&actor, &stats, &tr, &home, 0, 48, 0).unwrap();
    for r in &log.records {
        assert_eq!(r.f, 0.0);
        let expected_e = if r.indoor_f < home.t_min { 0.0 } else { 1.0 };
        assert_eq!(r.e, expected_e);
        assert_eq!(r.next_soc_kwh, home.b_0);
        assert!((r.g - (r.demand_kw + r.e - r.solar_kw)).abs() < 1e-12);
        assert_eq!(r.reward, -home.beta * (r.c1 + r.c2) - r.c3);
    }
}

#[test]
fn episode_log_csv_round_trip() {
    let tr = traces(1);
    let home = HomeConfig::default();
    let actor = Mlp::init(&TrainConfig::desk_scale().actor_spec(4)).unwrap();
    let stats = compute_norm_stats(&tr, &home);
    let log = evaluate(&actor, &stats, &tr, &home, 0, 24, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    log.write_csv(&path).unwrap();
    assert_eq!(EpisodeLog::read_csv(&path).unwrap(), log);
}
