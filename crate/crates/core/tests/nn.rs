use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use teamalloc::datagen::{
    build_dataset, encode_features, label_instance, sample_instance, DatasetConfig, FeatureSchema,
    GraphSample, Normalization,
};
use teamalloc::nn::policy::LossWeights;
use teamalloc::nn::{checkpoint, evaluate, train, Policy, PolicyConfig, PolicyNet, TrainConfig};
use teamalloc::solver::SolveOptions;

fn policy(hidden: usize, seed: u64) -> Policy {
    let schema = FeatureSchema::current();
    let net = PolicyNet::new(PolicyConfig::for_schema(&schema, hidden), seed);
    Policy::new(net, Normalization::identity(&schema), schema).unwrap()
}

/// A sample whose labels are drawn uniformly from each robot's candidates.
fn random_labeled(seed: u64) -> GraphSample {
    let inst = sample_instance(seed, 3..=6, 3..=5).unwrap();
    let state = encode_features(&inst, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let label = (0..state.num_robots())
        .map(|r| {
            let c: Vec<usize> = state.candidates(r).collect();
            c[rng.random_range(0..c.len())]
        })
        .collect();
    GraphSample { state, label }
}

/// `|a − n| / max(|a|, |n|, 1e-6)` over every parameter entry.
fn worst_relative_gradient_error(p: &Policy, sample: &GraphSample, weights: &LossWeights) -> f64 {
    let (_, grads) = p.loss_and_gradients(&[sample], weights).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (k, g) in grads.iter().enumerate() {
        for idx in 0..g.len() {
            let (r, c) = (idx / g.ncols(), idx % g.ncols());
            let at = |delta: f64| {
                let mut q = p.clone();
                q.net.params[k].value[[r, c]] += delta;
                q.loss(&[sample], weights).unwrap().loss
            };
            let numeric = (at(h) - at(-h)) / (2.0 * h);
            let analytic = g[[r, c]];
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    worst
}

#[test]
fn gradients_match_central_differences() {
    let inst = sample_instance(21, 3..=3, 3..=3).unwrap();
    let sample = label_instance(&inst, &SolveOptions::default(), 21).unwrap().unwrap();
    let p = policy(8, 4);
    let worst = worst_relative_gradient_error(&p, &sample, &LossWeights::default());
    assert!(worst < 1e-4, "worst relative error {worst}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn masked_softmax_puts_no_mass_outside_candidates(seed in any::<u64>(), net_seed in any::<u64>()) {
        let sample = random_labeled(seed);
        let scores = policy(16, net_seed).score(&sample.state).unwrap();
        for (r, row) in scores.probabilities().iter().enumerate() {
            let mut total = 0.0;
            for (v, &p) in row.iter().enumerate() {
                if sample.state.candidate_mask[r][v] {
                    prop_assert!(p > 0.0 || scores.scores[r][v] < -700.0);
                    total += p;
                } else {
                    prop_assert_eq!(p, 0.0);
                }
            }
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(sample.state.candidate_mask[r][scores.argmax(r)]);
        }
    }

    #[test]
    fn top3_is_at_least_exact(seed in any::<u64>(), net_seed in any::<u64>()) {
        let samples: Vec<GraphSample> = (0..4).map(|k| random_labeled(seed.wrapping_add(k))).collect();
        let m = evaluate(&policy(8, net_seed), &samples, &LossWeights::default()).unwrap();
        prop_assert!(m.top3_acc >= m.exact_acc);
        prop_assert!((0.0..=1.0).contains(&m.exact_acc));
    }
}

fn tiny_dataset() -> teamalloc::datagen::Dataset {
    build_dataset(&DatasetConfig {
        num_samples: 80,
        teams_min: 3,
        teams_max: 4,
        robots_per_team_min: 3,
        robots_per_team_max: 3,
        seed: 3,
        ..DatasetConfig::default()
    })
    .unwrap()
}

fn tiny_train_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 16,
        hidden: 16,
        lr: 3e-3,
        seed: 11,
        ..TrainConfig::default()
    }
}

#[test]
fn training_loss_falls_and_runs_repeat_exactly() {
    let ds = tiny_dataset();
    let config = tiny_train_config(5);
    let a = train(&ds.train, &ds.val, &ds.manifest.normalization, &config).unwrap();
    assert_eq!(a.history.len(), 5);
    assert!(
        a.history[4].train_loss < a.history[0].train_loss,
        "{} -> {}",
        a.history[0].train_loss,
        a.history[4].train_loss
    );
    let b = train(&ds.train, &ds.val, &ds.manifest.normalization, &config).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.policy.net.params, b.policy.net.params);
    assert_eq!(a.best_epoch, b.best_epoch);
}

#[test]
fn checkpoint_round_trip_preserves_metrics() {
    let ds = tiny_dataset();
    let out = train(&ds.train, &ds.val, &ds.manifest.normalization, &tiny_train_config(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    checkpoint::save(&out.policy, &path).unwrap();
    let back = checkpoint::load(&path).unwrap();
    let w = LossWeights::default();
    assert_eq!(evaluate(&out.policy, &ds.test, &w).unwrap(), evaluate(&back, &ds.test, &w).unwrap());
    assert_eq!(back.net.params, out.policy.net.params);
}
