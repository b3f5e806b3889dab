use hems_core::agent::TrainConfig;
use hems_core::nn::{Activation, Gradients, Layer, Mlp, MlpSpec};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

/// Weighted output sum, so the output gradient is `c`.
fn objective(net: &Mlp, x: &Array2<f64>, c: &Array2<f64>) -> f64 {
    (&net.predict(x.view()).unwrap() * c).sum()
}

fn close(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= 1e-6 || diff <= 1e-4 * analytic.abs().max(numeric.abs())
}

fn perturbed(net: &Mlp, layer: usize, idx: Option<(usize, usize)>, bias: usize, delta: f64) -> Mlp {
    let mut n = net.clone();
    let l = &mut n.layers_mut()[layer];
    match idx {
        Some(ij) => l.weights[ij] += delta,
        None => l.bias[bias] += delta,
    }
    n
}

fn check_net(net: &Mlp, x: &Array2<f64>, c: &Array2<f64>) -> Vec<String> {
    let (_, cache) = net.forward(x.view()).unwrap();
    let (g, dx): (Gradients, Array2<f64>) = net.backward(&cache, c.view()).unwrap();
    let mut bad = Vec::new();
    for (li, layer) in net.layers().iter().enumerate() {
        for ((i, j), _) in layer.weights.indexed_iter() {
            let num = (objective(&perturbed(net, li, Some((i, j)), 0, H), x, c)
                - objective(&perturbed(net, li, Some((i, j)), 0, -H), x, c))
                / (2.0 * H);
            if !close(g.weights[li][[i, j]], num) {
                bad.push(format!("w{li}[{i},{j}] {} vs {num}", g.weights[li][[i, j]]));
            }
        }
        for k in 0..layer.bias.len() {
            let num = (objective(&perturbed(net, li, None, k, H), x, c)
                - objective(&perturbed(net, li, None, k, -H), x, c))
                / (2.0 * H);
            if !close(g.biases[li][k], num) {
                bad.push(format!("b{li}[{k}] {} vs {num}", g.biases[li][k]));
            }
        }
    }
    for ((r, col), &a) in dx.indexed_iter() {
        let mut xp = x.clone();
        xp[[r, col]] += H;
        let mut xm = x.clone();
        xm[[r, col]] -= H;
        let num = (objective(net, &xp, c) - objective(net, &xm, c)) / (2.0 * H);
        if !close(a, num) {
            bad.push(format!("x[{r},{col}] {a} vs {num}"));
        }
    }
    bad
}

#[test]
fn finite_differences_two_hidden_layers() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for (seed, outputs) in [
        (1, vec![Activation::Tanh, Activation::Sigmoid]),
        (2, vec![Activation::Identity]),
        (3, vec![Activation::Tanh, Activation::Identity]),
    ] {
        let spec = MlpSpec {
            layer_sizes: vec![5, 8, 6, outputs.len()],
            hidden_activation: Activation::Relu,
            output_activations: outputs.clone(),
            seed,
        };
        let net = Mlp::init(&spec).unwrap();
        let x = Array2::from_shape_fn((3, 5), |_| rng.random_range(-1.0..1.0));
        let c = Array2::from_shape_fn((3, outputs.len()), |_| rng.random_range(-1.0..1.0));
        let bad = check_net(&net, &x, &c);
        assert!(bad.is_empty(), "seed {seed}: {bad:?}");
    }
}

#[test]
fn adam_first_step_hand_value() {
    // m1 = 0.1, v1 = 0.001; bias-corrected both are 1, so the step is
    // lr * 1 / (1 + 1e-8) = 0.00099999999
    let mut net = Mlp::from_layers(
        vec![Layer {
            weights: Array2::from_elem((1, 1), 0.5),
            bias: Array1::zeros(1),
        }],
        Activation::Relu,
        vec![Activation::Identity],
    )
    .unwrap();
    let g = Gradients {
        weights: vec![Array2::from_elem((1, 1), 1.0)],
        biases: vec![Array1::zeros(1)],
    };
    net.adam_update(&g, 0.001).unwrap();
    let moved = 0.5 - net.layers()[0].weights[[0, 0]];
    assert!((moved - 0.00099999999).abs() < 1e-12);
    assert_eq!(net.adam_steps(), 1);
}

#[test]
fn soft_updates_decay_geometrically() {
    let cfg = TrainConfig::desk_scale();
    let online = Mlp::init(&cfg.critic_spec(1)).unwrap();
    let mut target = Mlp::init(&cfg.critic_spec(2)).unwrap();
    let d0 = target.max_abs_diff(&online).unwrap();
    let tau = 0.001;
    for k in 1..=1000 {
        target.soft_update(&online, tau).unwrap();
        if k % 250 == 0 {
            let expected = d0 * (1.0 - tau).powi(k);
            let got = target.max_abs_diff(&online).unwrap();
            assert!(
                ((got - expected) / expected).abs() < 1e-9,
                "k={k}: {got} vs {expected}"
            );
        }
    }
}

#[test]
fn weight_file_round_trip() {
    let net = Mlp::init(&TrainConfig::desk_scale().actor_spec(3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("actor.txt");
    net.save(&path).unwrap();
    let back = Mlp::load(&path).unwrap();
    assert_eq!(back.layers(), net.layers());
    let x = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];
    assert_eq!(back.predict_one(&x).unwrap(), net.predict_one(&x).unwrap());
}

#[test]
fn reference_architectures_have_expected_shapes() {
    let cfg = TrainConfig::default();
    let actor = Mlp::init(&cfg.actor_spec(0)).unwrap();
    let shapes: Vec<_> = actor.layers().iter().map(|l| l.weights.dim()).collect();
    assert_eq!(shapes, vec![(7, 300), (300, 600), (600, 2)]);
    let critic = Mlp::init(&cfg.critic_spec(0)).unwrap();
    assert_eq!(critic.layers()[0].weights.dim(), (9, 300));
    assert_eq!(critic.layers().len(), 5);
    assert_eq!(critic.output_width(), 1);
}
