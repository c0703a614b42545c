use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajsynth::qpolicy::{
    softmax, ActMode, FeatureVector, Mlp, PolicyClassifier, PolicyFile, PolicyFormat, QNetwork, ReplayBuffer,
    ReplayTransition,
};
use trajsynth::{Action, GameKind};

fn random_features(rng: &mut impl Rng) -> FeatureVector {
    FeatureVector(std::array::from_fn(|_| rng.gen::<f64>()))
}

fn random_batch(rng: &mut impl Rng, n: usize) -> Vec<ReplayTransition> {
    (0..n)
        .map(|_| ReplayTransition {
            features: random_features(rng),
            action: rng.gen_range(0..4),
            reward: rng.gen_range(-1.0..1.0),
            next_features: random_features(rng),
            terminal: rng.gen_bool(0.3),
        })
        .collect()
}

/// TD loss written out directly from forward passes.
fn td_loss(net: &Mlp, target: &QNetwork, batch: &[ReplayTransition], gamma: f64) -> f64 {
    let n = batch.len() as f64;
    batch
        .iter()
        .map(|t| {
            let y = if t.terminal {
                t.reward
            } else {
                t.reward + gamma * target.q_values(&t.next_features).into_iter().fold(f64::MIN, f64::max)
            };
            let q = net.forward(t.features.as_slice())[t.action];
            (q - y).powi(2) / n
        })
        .sum()
}

fn xent_loss(net: &Mlp, batch: &[(FeatureVector, usize)]) -> f64 {
    let n = batch.len() as f64;
    batch
        .iter()
        .map(|(x, y)| -softmax(&net.forward(x.as_slice()))[*y].ln() / n)
        .sum()
}

fn central_differences(net: &Mlp, loss: impl Fn(&Mlp) -> f64) -> Vec<f64> {
    const H: f64 = 1e-5;
    let base = net.params();
    let mut probe = net.clone();
    (0..base.len())
        .map(|i| {
            let mut p = base.clone();
            p[i] = base[i] + H;
            probe.set_params(&p);
            let up = loss(&probe);
            p[i] = base[i] - H;
            probe.set_params(&p);
            let down = loss(&probe);
            (up - down) / (2.0 * H)
        })
        .collect()
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

#[test]
fn td_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = QNetwork::new(&[16, 12], &mut rng);
        let target = QNetwork::new(&[16, 12], &mut rng);
        let batch = random_batch(&mut rng, 6);
        let refs: Vec<&ReplayTransition> = batch.iter().collect();
        let (loss, grads) = net.td_loss_and_grad(&target, &refs, 0.9);
        assert!((loss - td_loss(net.mlp(), &target, &batch, 0.9)).abs() < 1e-12);
        let numeric = central_differences(net.mlp(), |m| td_loss(m, &target, &batch, 0.9));
        let err = relative_error(&grads.flatten(), &numeric);
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
    }
}

#[test]
fn td_gradient_single_hidden_unit() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = QNetwork::from_mlp(Mlp::new(&[5, 1, 4], &mut rng));
    let target = net.clone();
    let batch = random_batch(&mut rng, 1);
    let refs: Vec<&ReplayTransition> = batch.iter().collect();
    let (_, grads) = net.td_loss_and_grad(&target, &refs, 0.99);
    let numeric = central_differences(net.mlp(), |m| td_loss(m, &target, &batch, 0.99));
    assert!(relative_error(&grads.flatten(), &numeric) < 1e-4);
}

#[test]
fn classifier_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let clf = PolicyClassifier::new(&[16, 12], &mut rng);
        let batch: Vec<_> = (0..6).map(|_| (random_features(&mut rng), rng.gen_range(0..4))).collect();
        let (loss, grads) = clf.xent_loss_and_grad(&batch);
        assert!((loss - xent_loss(clf.mlp(), &batch)).abs() < 1e-12);
        let numeric = central_differences(clf.mlp(), |m| xent_loss(m, &batch));
        let err = relative_error(&grads.flatten(), &numeric);
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
    }
}

#[test]
fn default_topology_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let net = QNetwork::new(&[64, 64], &mut rng);
    let target = QNetwork::new(&[64, 64], &mut rng);
    let batch = random_batch(&mut rng, 4);
    let refs: Vec<&ReplayTransition> = batch.iter().collect();
    let (_, grads) = net.td_loss_and_grad(&target, &refs, 0.95);
    let numeric = central_differences(net.mlp(), |m| td_loss(m, &target, &batch, 0.95));
    assert!(relative_error(&grads.flatten(), &numeric) < 1e-4);
}

/// Pearson chi-square statistic against a uniform distribution over 4 cells.
fn chi_square_uniform(counts: &[usize; 4]) -> f64 {
    let n: usize = counts.iter().sum();
    let e = n as f64 / 4.0;
    counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
}

// Upper 1% point of chi-square with 3 degrees of freedom.
const CHI2_3DF_99: f64 = 11.344_866_730_144_373;

#[test]
fn epsilon_one_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = QNetwork::new(&[8], &mut rng);
    let x = FeatureVector([0.5; 5]);
    let mut counts = [0usize; 4];
    for _ in 0..10_000 {
        counts[trajsynth::qpolicy::act(&net, &x, 1.0, &mut rng).id()] += 1;
    }
    assert!(chi_square_uniform(&counts) < CHI2_3DF_99, "{counts:?}");
}

#[test]
fn uniform_classifier_samples_uniformly() {
    let clf = PolicyClassifier::from_mlp(Mlp::from_layers(vec![trajsynth::qpolicy::Dense::new(
        5,
        4,
        vec![0.0; 20],
        vec![0.0; 4],
    )]));
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = FeatureVector([0.1; 5]);
    let mut counts = [0usize; 4];
    for _ in 0..10_000 {
        counts[clf.act(&x, ActMode::Sample, &mut rng).id()] += 1;
    }
    assert!(chi_square_uniform(&counts) < CHI2_3DF_99, "{counts:?}");
    assert_eq!(clf.act(&x, ActMode::Greedy, &mut rng), Action::Up);
}

proptest! {
    #[test]
    fn classifier_outputs_distribution(seed in 0u64..500, x in proptest::array::uniform5(-10.0f64..10.0)) {
        let clf = PolicyClassifier::new(&[16, 16], &mut ChaCha8Rng::seed_from_u64(seed));
        let p = clf.probabilities(&FeatureVector(x));
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn replay_buffer_stress(capacity in 1usize..64, pushes in 0usize..300, batch in 1usize..40, seed in 0u64..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut buf = ReplayBuffer::new(capacity);
        for i in 0..pushes {
            buf.push(ReplayTransition {
                features: FeatureVector([0.0; 5]),
                action: 0,
                reward: i as f64,
                next_features: FeatureVector([0.0; 5]),
                terminal: false,
            });
            prop_assert!(buf.len() <= capacity);
        }
        prop_assert_eq!(buf.len(), pushes.min(capacity));
        if batch <= buf.len() {
            let sample = buf.sample(batch, &mut rng);
            let mut rewards: Vec<i64> = sample.iter().map(|t| t.reward as i64).collect();
            let oldest = pushes.saturating_sub(capacity) as i64;
            prop_assert!(rewards.iter().all(|&r| r >= oldest && r < pushes as i64));
            rewards.sort();
            rewards.dedup();
            prop_assert_eq!(rewards.len(), batch);
        }
    }

    #[test]
    fn policy_file_round_trip(seed in 0u64..200, clf_format in proptest::bool::ANY) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let file = PolicyFile {
            format: if clf_format { PolicyFormat::Clf } else { PolicyFormat::Qnet },
            map_id: "ab".repeat(32),
            game: GameKind::Ctfe,
            source: None,
            net: Mlp::new(&[5, 7, 3, 4], &mut rng),
        };
        let bytes = file.to_bytes();
        let back = PolicyFile::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        prop_assert_eq!(back.net.params(), file.net.params());
    }
}
