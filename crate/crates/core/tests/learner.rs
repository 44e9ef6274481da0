use uob_reps_core::envsim::{random_layered_mdp, rollout, sample_episode, stream_rng, Adversary, MdpShape};
use uob_reps_core::learner::{estimate_losses, Learner, LearnerConfig, OmdLearner};
use uob_reps_core::mdp::{occupancy_from, LossMatrix};
use uob_reps_core::projection::feasibility_residual;
use uob_reps_testkit::instances::{random_kernel, random_policy, random_space};
use uob_reps_testkit::mean_stderr;

#[test]
fn sampled_actions_follow_the_policy() {
    let mut rng = stream_rng(1, 0);
    let kernel = random_layered_mdp(&MdpShape::canonical(), &mut rng).unwrap();
    let space = kernel.space().clone();
    let config = LearnerConfig::new(&space, 100, 0.1);
    let mut learner = OmdLearner::uob_reps(space.clone(), config, 4).unwrap();
    // move away from the uniform start
    let adv = Adversary::random_switching(space.clone(), 500, 4).unwrap();
    let mut env = stream_rng(4, 2);
    for t in 1..=20 {
        let l = adv.losses(t);
        let traj = rollout(&kernel, &l, &mut env, |x| learner.act(x));
        learner.update(&traj, &l).unwrap();
    }
    let policy = learner.policy().clone();
    let n = 100_000;
    for x in [0, 3] {
        let draws: Vec<usize> = (0..n).map(|_| learner.act(x)).collect();
        for a in 0..space.num_actions() {
            let hits: Vec<f64> = draws.iter().map(|&d| f64::from(u8::from(d == a))).collect();
            let (mean, se) = mean_stderr(&hits);
            assert!((mean - policy.prob(x, a)).abs() <= 3.0 * se, "x {x} a {a}: {mean}");
        }
    }
}

#[test]
fn importance_weights_with_exact_occupancy_are_unbiased() {
    let mut rng = stream_rng(2, 0);
    let space = random_space(&mut rng, 3, 3, 2);
    let kernel = random_kernel(&mut rng, &space);
    let policy = random_policy(&mut rng, &space);
    let values = (0..space.num_pairs()).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
    let losses = LossMatrix::new(&space, 1, values).unwrap();
    let q = occupancy_from(&kernel, &policy).marginal_xa();
    let n = 100_000;
    let mut samples = vec![Vec::with_capacity(n); space.num_pairs()];
    let mut sim = stream_rng(2, 9);
    for _ in 0..n {
        let traj = sample_episode(&kernel, &policy, &losses, &mut sim);
        let u: Vec<f64> = traj.steps.iter().map(|s| q[space.pair_index(s.state, s.action)]).collect();
        let est = estimate_losses(&space, &traj, &u, 0.0).unwrap();
        for (i, v) in est.values.iter().enumerate() {
            samples[i].push(*v);
        }
    }
    for (i, s) in samples.iter().enumerate() {
        let (mean, se) = mean_stderr(s);
        let truth = losses.as_slice()[i];
        assert!((mean - truth).abs() <= 3.0 * se.max(1e-12), "pair {i}: {mean} vs {truth}");
    }
}

#[test]
fn per_episode_invariants_hold_over_a_run() {
    let episodes = 3_000;
    let mut rng = stream_rng(3, 0);
    let kernel = random_layered_mdp(&MdpShape::canonical(), &mut rng).unwrap();
    let space = kernel.space().clone();
    let config = LearnerConfig::new(&space, episodes, 0.1);
    let mut learner = OmdLearner::uob_reps(space.clone(), config, 3).unwrap();
    let adv = Adversary::random_switching(space.clone(), 500, 3).unwrap();
    let mut env = stream_rng(3, 2);
    let horizon = space.horizon() as f64;
    let mut advances = 0;
    for t in 1..=episodes {
        let q_hat = learner.occupancy().unwrap().clone();
        let truth = occupancy_from(&kernel, learner.policy()).marginal_xa();
        let cs = learner.confidence_set().unwrap().clone();
        let good = cs.contains(&kernel);
        let l = adv.losses(t);
        let traj = rollout(&kernel, &l, &mut env, |x| learner.act(x));
        let info = learner.update(&traj, &l).unwrap();
        let est = info.loss_estimate.unwrap();
        assert!(est.values.iter().filter(|v| **v != 0.0).count() <= space.horizon());
        let weighted = q_hat.dot_pairs(&est.values);
        assert!(weighted <= horizon + 1e-9, "episode {t}: <q_hat, l_hat> = {weighted}");
        if good {
            for s in &traj.steps {
                let i = space.pair_index(s.state, s.action);
                assert!(est.values[i] <= s.loss / truth[i] + 1e-12);
            }
        }
        let next = learner.occupancy().unwrap();
        let cs = learner.confidence_set().unwrap();
        assert!(feasibility_residual(next, cs) <= 1e-6, "episode {t}");
        advances += usize::from(info.epoch_advanced);
    }
    assert_eq!(advances + 1, learner.epoch());
}

#[test]
fn zero_loss_episode_is_a_fixed_point_within_an_epoch() {
    let mut rng = stream_rng(8, 0);
    let kernel = random_layered_mdp(&MdpShape::canonical(), &mut rng).unwrap();
    let space = kernel.space().clone();
    let mut learner = OmdLearner::uob_reps(space.clone(), LearnerConfig::new(&space, 1000, 0.1), 8).unwrap();
    let adv = Adversary::random_switching(space.clone(), 500, 8).unwrap();
    let mut env = stream_rng(8, 2);
    let zero = LossMatrix::constant(&space, 0, 0.0).unwrap();
    let mut checked = 0;
    for t in 1..=300 {
        let l = if t % 2 == 0 { zero.clone() } else { adv.losses(t) };
        let before = learner.occupancy().unwrap().clone();
        let traj = rollout(&kernel, &l, &mut env, |x| learner.act(x));
        let info = learner.update(&traj, &l).unwrap();
        if t % 2 == 0 && !info.epoch_advanced {
            let after = learner.occupancy().unwrap();
            for (a, b) in before.as_slice().iter().zip(after.as_slice()) {
                assert!((a - b).abs() <= 1e-6);
            }
            checked += 1;
        }
    }
    assert!(checked > 100);
}

#[test]
fn constant_full_information_losses_leave_the_iterate_alone() {
    let mut rng = stream_rng(9, 0);
    let kernel = random_layered_mdp(&MdpShape::canonical(), &mut rng).unwrap();
    let space = kernel.space().clone();
    let mut learner = OmdLearner::full_information(space.clone(), LearnerConfig::new(&space, 1000, 0.1), 9).unwrap();
    let l = LossMatrix::constant(&space, 1, 0.6).unwrap();
    let mut env = stream_rng(9, 2);
    for _ in 0..50 {
        let before = learner.occupancy().unwrap().clone();
        let traj = rollout(&kernel, &l, &mut env, |x| learner.act(x));
        let info = learner.update(&traj, &l).unwrap();
        if !info.epoch_advanced {
            for (a, b) in before.as_slice().iter().zip(learner.occupancy().unwrap().as_slice()) {
                assert!((a - b).abs() <= 1e-6);
            }
        }
        assert!(feasibility_residual(learner.occupancy().unwrap(), learner.confidence_set().unwrap()) <= 1e-6);
    }
}

#[test]
fn identical_seeds_give_identical_runs() {
    let run = |seed: u64| -> Vec<Vec<f64>> {
        let mut rng = stream_rng(seed, 0);
        let kernel = random_layered_mdp(&MdpShape::canonical(), &mut rng).unwrap();
        let space = kernel.space().clone();
        let mut learner = OmdLearner::uob_reps(space.clone(), LearnerConfig::new(&space, 500, 0.1), seed).unwrap();
        let adv = Adversary::random_switching(space.clone(), 100, seed).unwrap();
        let mut env = stream_rng(seed, 2);
        (1..=200)
            .map(|t| {
                let l = adv.losses(t);
                let traj = rollout(&kernel, &l, &mut env, |x| learner.act(x));
                learner.update(&traj, &l).unwrap();
                learner.occupancy().unwrap().as_slice().to_vec()
            })
            .collect()
    };
    let a = run(21);
    assert_eq!(a, run(21));
    assert_ne!(a, run(22));
}
