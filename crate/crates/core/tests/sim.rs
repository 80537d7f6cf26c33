use proptest::prelude::*;

use teamalloc::datagen::{sample_instance, FeatureSchema, Normalization};
use teamalloc::model::Assignment;
use teamalloc::nn::{Policy, PolicyConfig, PolicyNet};
use teamalloc::sim::{
    infer_step, run_episode, run_exact_iterative, EpisodeConfig, ExactPolicy, TerminalReason,
};
use teamalloc::solver::SolveOptions;
use teamalloc::Instance;

fn policy(seed: u64) -> Policy {
    let schema = FeatureSchema::current();
    let net = PolicyNet::new(PolicyConfig::for_schema(&schema, 16), seed);
    Policy::new(net, Normalization::identity(&schema), schema).unwrap()
}

fn check_episode(start: &Instance, log: &teamalloc::sim::EpisodeLog, max_steps: usize) {
    assert!(log.steps.len() <= max_steps);
    assert!(log.fire_increases().is_empty());
    for s in &log.steps {
        assert_eq!(s.assignment.len(), start.num_robots());
        start.problem.check(&Assignment::new(s.assignment.clone())).unwrap();
        assert!(s.seconds > 0.0);
        let mut seen = vec![false; start.num_robots()];
        for t in &s.accepted {
            assert!(!std::mem::replace(&mut seen[t.robot], true));
            assert_ne!(t.from, t.to);
            assert!(start.problem.graph.is_edge(t.from, t.to));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 40, ..ProptestConfig::default() })]

    #[test]
    fn infer_step_stays_inside_the_mask(seed in any::<u64>(), net in any::<u64>()) {
        let inst = sample_instance(seed, 3..=7, 3..=5).unwrap();
        let out = infer_step(&inst, &policy(net)).unwrap();
        let mask = inst.hamilton_mask();
        for t in &out.accepted {
            prop_assert!(mask.is_admissible(t.robot, t.to));
            prop_assert_eq!(inst.assignment.team(t.robot), t.from);
        }
        inst.problem.check(&out.assignment).unwrap();
    }

    #[test]
    fn policy_episodes_keep_every_invariant(seed in any::<u64>(), net in any::<u64>()) {
        let start = sample_instance(seed, 3..=5, 3..=4).unwrap();
        let mut inst = start.clone();
        let config = EpisodeConfig { max_steps: 30, ..EpisodeConfig::default() };
        let log = run_episode(&mut inst, &policy(net), &config).unwrap();
        check_episode(&start, &log, 30);
        if log.terminal == TerminalReason::MaxSteps {
            prop_assert_eq!(log.steps.len(), 30);
        }
    }

    #[test]
    fn all_stay_masks_end_after_one_step(seed in any::<u64>(), net in any::<u64>()) {
        let mut inst = sample_instance(seed, 3..=5, 3..=4).unwrap();
        // Without fighters no transfer has a benefit, so the mask is stay-only.
        for r in &mut inst.problem.robots {
            r.capability = vec![1, 0];
            r.capacity = 0.0;
        }
        let mask = inst.hamilton_mask();
        prop_assert_eq!(mask.move_count(&inst.assignment), 0);
        let log = run_episode(&mut inst, &policy(net), &EpisodeConfig::default()).unwrap();
        prop_assert_eq!(log.terminal, TerminalReason::NoTransfers);
        prop_assert_eq!(log.steps.len(), 1);
        prop_assert!(log.steps[0].accepted.is_empty());
    }
}

#[test]
fn exact_episodes_keep_every_invariant() {
    let opts = SolveOptions::default();
    for seed in 0..8 {
        let start = sample_instance(seed, 3..=4, 3..=3).unwrap();
        let mut inst = start.clone();
        let log = run_episode(&mut inst, &ExactPolicy { opts }, &EpisodeConfig::default()).unwrap();
        check_episode(&start, &log, 200);

        let mut inst = start.clone();
        let log = run_exact_iterative(&mut inst, &opts, 200).unwrap();
        check_episode(&start, &log, 200);
        assert!(matches!(log.terminal, TerminalReason::Converged | TerminalReason::MaxSteps));
    }
}
