//! Acceptance suite. Runs without the libtest harness so that the criteria
//! run one after another (their timings are not distorted by other tests)
//! and the PASS/FAIL lines are always printed. Exits nonzero if any
//! criterion failed.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use uob_reps::output::records_csv;
use uob_reps::runner::{loss_sequence, run_seed};
use uob_reps::{run_all, Comparator, ExperimentConfig, RunOutput, Setup};
use uob_reps_core::confidence::{ConfidenceSet, VisitCounters};
use uob_reps_core::envsim::{rollout, sample_episode, stream_rng};
use uob_reps_core::learner::{estimate_losses, Learner, LearnerConfig, OmdLearner};
use uob_reps_core::mdp::{occupancy_from, Policy, StateSpace};
use uob_reps_core::projection::{feasibility_residual, kl_divergence, project, ProjectionOptions};
use uob_reps_core::uob::{comp_uob_all, greedy_max};
use uob_reps_testkit::instances::{
    random_confidence_set, random_distribution, random_member, random_occupancy, random_policy, random_space, row_box,
};
use uob_reps_testkit::mean_stderr;
use uob_reps_testkit::oracles::{box_simplex_max, grid_uob, tiny_grid_min, tiny_primal_min, TINY_LAYERS};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn canonical_setup() -> Setup {
    ExperimentConfig::canonical(1, vec![0]).instantiate(Path::new(".")).unwrap()
}

fn greedy_matches_lp() -> Outcome {
    let mut rng = stream_rng(101, 0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=6);
        let f: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let p = random_distribution(&mut rng, n);
        let e: Vec<f64> = (0..n).map(|_| 0.5 * rng.random::<f64>()).collect();
        let (value, _) = greedy_max(&f, &p, &e).unwrap();
        let (lo, hi) = row_box(&p, &e);
        let lp = box_simplex_max(&f, &lo, &hi).unwrap();
        worst = worst.max((value - lp).abs());
    }
    outcome(worst <= 1e-9, format!("max |greedy - LP| = {worst:.3e} over 1000 rows"))
}

fn uob_optimism() -> Outcome {
    let mut violations = 0usize;
    let mut worst_grid = 0.0f64;
    for seed in 0..200 {
        let mut rng = stream_rng(seed, 202);
        let space = random_space(&mut rng, 3, 3, 2);
        let cs = random_confidence_set(&mut rng, &space, 0.3);
        let policy = random_policy(&mut rng, &space);
        let u = comp_uob_all(&policy, &cs).unwrap();
        for _ in 0..100 {
            let member = random_member(&mut rng, &cs);
            let q = occupancy_from(&member, &policy).marginal_xa();
            violations += u.iter().zip(&q).filter(|(u, q)| u < q).count();
        }
        for x in 0..space.terminal_state() {
            for a in 0..space.num_actions() {
                let (grid, _) = grid_uob(&policy, x, a, &cs, 0.01);
                worst_grid = worst_grid.max((u[space.pair_index(x, a)] - grid).abs());
            }
        }
    }
    outcome(
        violations == 0 && worst_grid <= 0.05,
        format!("{violations} bounds below a member occupancy; max |u - grid| = {worst_grid:.3e}"),
    )
}

fn projection_correctness() -> Outcome {
    // every episode of a long run
    let setup = canonical_setup();
    let kernel = &setup.kernel;
    let space = kernel.space().clone();
    let episodes = 10_000;
    let config = LearnerConfig::new(&space, episodes, 0.1);
    let mut learner = OmdLearner::uob_reps(space.clone(), config, 0).unwrap();
    let mut env = stream_rng(0, 2);
    let (mut worst_residual, mut worst_run_gap, mut unconverged) = (0.0f64, 0.0f64, 0usize);
    for t in 1..=episodes {
        let l = setup.adversary.losses(t);
        let traj = rollout(kernel, &l, &mut env, |x| learner.act(x));
        let info = learner.update(&traj, &l).unwrap();
        let report = info.projection.unwrap();
        unconverged += usize::from(!report.converged);
        worst_run_gap = worst_run_gap.max(report.duality_gap.abs());
        let residual = feasibility_residual(learner.occupancy().unwrap(), learner.confidence_set().unwrap());
        worst_residual = worst_residual.max(residual);
    }

    // tiny instances with a one-dimensional feasible set
    let opts = ProjectionOptions::default();
    let tiny = Arc::new(StateSpace::new(TINY_LAYERS.to_vec(), 1).unwrap());
    let (mut worst_grid, mut worst_primal, mut worst_gap) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..50 {
        let mut rng = stream_rng(seed, 303);
        let mut p_bar = vec![1.0; 4];
        p_bar[..2].copy_from_slice(&random_distribution(&mut rng, 2));
        let widths = (0..4).map(|_| rng.random_range(0.0..0.5)).collect();
        let cs = ConfidenceSet::from_parts(tiny.clone(), 2, p_bar, widths, 0.1, 100).unwrap();
        let base: Vec<f64> = (0..4).map(|_| rng.random_range(0.05..1.0)).collect();
        let (q, report, _) = project(&base, &cs, &opts, None).unwrap();
        unconverged += usize::from(!report.converged);
        let d = kl_divergence(q.as_slice(), &base);
        worst_grid = worst_grid.max((d - tiny_grid_min(&base, &cs, 0.001)).abs());
        worst_primal = worst_primal.max((d - tiny_primal_min(&base, &cs).1).abs());
        worst_gap = worst_gap.max(report.duality_gap.abs());
    }
    outcome(
        worst_residual <= 1e-6
            && worst_grid <= 1e-3
            && worst_primal <= 1e-6
            && worst_gap <= 1e-5
            && worst_run_gap <= 1e-5
            && unconverged == 0,
        format!(
            "run: max residual {worst_residual:.3e}, max gap {worst_run_gap:.3e}; tiny: grid {worst_grid:.3e}, \
             primal {worst_primal:.3e}, gap {worst_gap:.3e}; {unconverged} unconverged"
        ),
    )
}

fn occupancy_round_trip() -> Outcome {
    let mut rng = stream_rng(404, 0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let horizon = rng.random_range(1..=5);
        let actions = rng.random_range(1..=3);
        let space = random_space(&mut rng, horizon, 4, actions);
        let q = random_occupancy(&mut rng, &space);
        let back = occupancy_from(&q.induced_transition(), &q.induced_policy());
        for (a, b) in q.as_slice().iter().zip(back.as_slice()) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst <= 1e-10, format!("max |q - round trip| = {worst:.3e}"))
}

fn confidence_coverage() -> Outcome {
    let setup = canonical_setup();
    let kernel = &setup.kernel;
    let space = kernel.space().clone();
    let policy = Policy::uniform(space.clone());
    let (runs, episodes, delta) = (200u64, 2_000, 0.1);
    let mut covered = 0usize;
    let mut epochs = 0usize;
    for seed in 0..runs {
        let mut counters = VisitCounters::new(space.clone());
        let mut ok = ConfidenceSet::initial(space.clone(), delta, episodes).contains(kernel);
        let mut env = stream_rng(seed, 505);
        let losses = uob_reps_core::mdp::LossMatrix::constant(&space, 1, 0.0).unwrap();
        for _ in 0..episodes {
            let traj = sample_episode(kernel, &policy, &losses, &mut env);
            counters.record_trajectory(&traj).unwrap();
            if counters.should_advance(&traj) {
                ok &= counters.advance_epoch(delta, episodes).contains(kernel);
            }
        }
        epochs += counters.epoch();
        covered += usize::from(ok);
    }
    let rate = covered as f64 / runs as f64;
    outcome(
        rate >= 1.0 - 4.0 * delta,
        format!("all-epoch coverage {covered}/{runs} = {rate:.3}; mean epochs {:.1}", epochs as f64 / runs as f64),
    )
}

fn decomposition_identity() -> Outcome {
    let episodes = 2_000;
    let mut config = ExperimentConfig::canonical(episodes, vec![6]);
    config.expected_learner_loss = true;
    config.decomposition = true;
    let setup = config.instantiate(Path::new(".")).unwrap();
    let losses = loss_sequence(&setup, episodes);
    let comparator = Comparator::new(&setup, &losses);
    let run = run_seed(&config, &setup, &losses, &comparator, episodes, 6).unwrap();
    let worst = run
        .decomposition
        .iter()
        .zip(&run.records)
        .map(|(d, r)| (d.total() - (r.learner_loss - r.comparator_loss)).abs())
        .fold(0.0f64, f64::max);
    let complete = run.decomposition.len() == episodes;
    outcome(
        complete && worst <= 1e-9,
        format!("{} episodes; max |sum of terms - <q_t - q*, l_t>| = {worst:.3e}", run.decomposition.len()),
    )
}

fn mean_final_regret(config: &ExperimentConfig, setup: &Setup, episodes: usize) -> f64 {
    let finals: Vec<f64> = run_all(config, setup, episodes)
        .into_iter()
        .map(|r| r.map(|o: RunOutput| o.final_regret()).unwrap())
        .collect();
    mean_stderr(&finals).0
}

fn sublinear_regret() -> Outcome {
    let seeds: Vec<u64> = (0..10).collect();
    let config = ExperimentConfig::canonical(10_000, seeds);
    let setup = config.instantiate(Path::new(".")).unwrap();
    let short = mean_final_regret(&config, &setup, 2_500);
    let long = mean_final_regret(&config, &setup, 10_000);
    let mut uniform = config.clone();
    uniform.algorithm = "uniform".into();
    let baseline = mean_final_regret(&uniform, &setup, 10_000);
    let ratio = long / short;
    let relative = long / baseline;
    outcome(
        ratio <= 3.0 && relative <= 0.5,
        format!(
            "R(2500) = {short:.2}, R(10000) = {long:.2}, ratio {ratio:.3}; uniform R(10000) = {baseline:.2}, \
             relative {relative:.4}"
        ),
    )
}

fn estimator_optimism() -> Outcome {
    let setup = canonical_setup();
    let kernel = &setup.kernel;
    let space = kernel.space().clone();
    let horizon = 3_000;
    let config = LearnerConfig::new(&space, horizon, 0.1);
    let gamma = config.gamma;
    let mut learner = OmdLearner::uob_reps(space.clone(), config, 8).unwrap();
    let mut env = stream_rng(8, 2);
    let (mut checked, mut skipped, mut violations) = (0, 0, 0);
    let mut worst_margin = f64::NEG_INFINITY;
    for t in 1..=horizon {
        if matches!(t, 1 | 300 | 3_000) {
            let cs = learner.confidence_set().unwrap().clone();
            if !cs.contains(kernel) {
                skipped += 1;
            } else {
                checked += 1;
                let policy = learner.policy().clone();
                let losses = setup.adversary.losses(t);
                let u = comp_uob_all(&policy, &cs).unwrap();
                let n = 100_000;
                let mut sums = vec![0.0; space.num_pairs()];
                let mut squares = vec![0.0; space.num_pairs()];
                let mut sim = stream_rng(t as u64, 808);
                for _ in 0..n {
                    let traj = sample_episode(kernel, &policy, &losses, &mut sim);
                    let bounds: Vec<f64> = traj.steps.iter().map(|s| u[space.pair_index(s.state, s.action)]).collect();
                    let est = estimate_losses(&space, &traj, &bounds, gamma).unwrap();
                    for (i, v) in est.values.iter().enumerate() {
                        sums[i] += v;
                        squares[i] += v * v;
                    }
                }
                let n = n as f64;
                for i in 0..space.num_pairs() {
                    let mean = sums[i] / n;
                    let var = (squares[i] / n - mean * mean).max(0.0) * n / (n - 1.0);
                    let se = (var / n).sqrt();
                    let margin = mean - losses.as_slice()[i] - 3.0 * se;
                    worst_margin = worst_margin.max(margin);
                    violations += usize::from(margin > 0.0);
                }
            }
        }
        let l = setup.adversary.losses(t);
        let traj = rollout(kernel, &l, &mut env, |x| learner.act(x));
        learner.update(&traj, &l).unwrap();
    }
    outcome(
        violations == 0 && checked > 0,
        format!(
            "{checked} snapshots checked ({skipped} outside the good event); {violations} pairs above l + 3 SE; \
             largest mean - l - 3 SE = {worst_margin:.3e}"
        ),
    )
}

fn csv_determinism() -> Outcome {
    // in-process
    let config = ExperimentConfig::canonical(1_000, vec![0]);
    let setup = config.instantiate(Path::new(".")).unwrap();
    let losses = loss_sequence(&setup, 1_000);
    let comparator = Comparator::new(&setup, &losses);
    let mut same = true;
    for seed in [0, 1, 99] {
        let a = run_seed(&config, &setup, &losses, &comparator, 1_000, seed).unwrap();
        let b = run_seed(&config, &setup, &losses, &comparator, 1_000, seed).unwrap();
        same &= records_csv(&a) == records_csv(&b);
    }

    // through the command line, with several seeds running in parallel
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    fs::write(&path, serde_json::to_string(&ExperimentConfig::canonical(1_000, vec![0, 1, 2, 3])).unwrap()).unwrap();
    let mut outputs = Vec::new();
    for name in ["first", "second"] {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_uob-reps"))
            .args(["run", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .output()
            .unwrap()
            .status;
        same &= status.success();
        outputs.push(out);
    }
    let mut files = 0;
    for seed in 0..4 {
        let name = format!("uob-reps_T1000_seed{seed}.csv");
        match (fs::read(outputs[0].join(&name)), fs::read(outputs[1].join(&name))) {
            (Ok(a), Ok(b)) => {
                same &= a == b;
                files += 1;
            }
            _ => same = false,
        }
    }
    outcome(same && files == 4, format!("3 in-process runs and {files} CLI run files compared byte for byte"))
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);
    let criteria: [Criterion; 9] = [
        ("1 greedy row maximisation equals an exact LP", greedy_matches_lp, Some(Duration::from_secs(10))),
        ("2 upper occupancy bounds are optimistic and tight", uob_optimism, Some(Duration::from_secs(120))),
        ("3 projection is feasible and optimal", projection_correctness, Some(Duration::from_secs(300))),
        ("4 occupancy round trip", occupancy_round_trip, Some(Duration::from_secs(5))),
        ("5 confidence set coverage", confidence_coverage, Some(Duration::from_secs(180))),
        ("6 regret decomposition identity", decomposition_identity, None),
        ("7 sublinear regret shape", sublinear_regret, Some(Duration::from_secs(1200))),
        ("8 loss estimator optimism", estimator_optimism, Some(Duration::from_secs(120))),
        ("9 CSV determinism", csv_determinism, None),
    ];
    let mut failed = Vec::new();
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = budget.is_none_or(|b| elapsed <= b);
        let passed = result.passed && in_time;
        let limit = budget.map_or(String::new(), |b| format!(" (limit {}s)", b.as_secs()));
        println!(
            "{} criterion {name}: {} [{:.2}s{limit}]",
            if passed { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64()
        );
        if !passed {
            failed.push(name);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
