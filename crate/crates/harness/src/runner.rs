//! Runs the episode protocol for one or many seeds.

use rayon::prelude::*;
use uob_reps_core::envsim::{rollout, stream_rng, ENVIRONMENT_STREAM};
use uob_reps_core::learner::{build_learner, Algorithm, LearnerConfig};
use uob_reps_core::mdp::{occupancy_from, LossMatrix, OccupancyMeasure, Policy};
use uob_reps_core::regret::{best_in_hindsight, DecompositionSample};

use crate::config::{ExperimentConfig, Setup};

/// One row of a regret curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretRecord {
    pub t: usize,
    /// Epoch in force during episode `t`.
    pub epoch: usize,
    pub learner_loss: f64,
    /// `<q*, l_t>`.
    pub comparator_loss: f64,
    pub cum_regret: f64,
}

/// Confidence set as it stood from `first_episode` on.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSnapshot {
    pub epoch: usize,
    pub first_episode: usize,
    pub contains_truth: bool,
    pub p_bar: Vec<f64>,
    pub widths: Vec<f64>,
}

/// Best fixed policy for a loss sequence and its per-episode losses.
#[derive(Debug, Clone)]
pub struct Comparator {
    pub policy: Policy,
    pub occupancy: OccupancyMeasure,
    /// `min_pi sum_t <q^pi, l_t>`.
    pub value: f64,
}

impl Comparator {
    pub fn new(setup: &Setup, losses: &[LossMatrix]) -> Self {
        let space = setup.kernel.space();
        let mut cumulative = vec![0.0; space.num_pairs()];
        for l in losses {
            cumulative.iter_mut().zip(l.as_slice()).for_each(|(c, v)| *c += v);
        }
        let (policy, value) = best_in_hindsight(&setup.kernel, &cumulative).expect("cumulative losses match the space");
        let occupancy = occupancy_from(&setup.kernel, &policy);
        Self {
            policy,
            occupancy,
            value,
        }
    }
}

/// Everything recorded for one seed.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub seed: u64,
    pub algorithm: Algorithm,
    pub episodes: usize,
    pub eta: f64,
    pub gamma: f64,
    pub records: Vec<RegretRecord>,
    /// Per-episode terms, when requested and the learner has an iterate.
    pub decomposition: Vec<DecompositionSample>,
    pub confidence: Vec<EpochSnapshot>,
}

impl RunOutput {
    pub fn final_regret(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cum_regret)
    }
}

/// A seed whose run stopped early.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub seed: u64,
    pub episode: usize,
    pub error: uob_reps_core::Error,
}

/// Loss matrices of episodes `1..=episodes`.
pub fn loss_sequence(setup: &Setup, episodes: usize) -> Vec<LossMatrix> {
    (1..=episodes).map(|t| setup.adversary.losses(t)).collect()
}

/// Plays `episodes` episodes with one seed. `losses` must hold at least
/// that many matrices and `comparator` must be computed from them.
pub fn run_seed(
    config: &ExperimentConfig,
    setup: &Setup,
    losses: &[LossMatrix],
    comparator: &Comparator,
    episodes: usize,
    seed: u64,
) -> Result<RunOutput, RunFailure> {
    let algorithm = config.algorithm().expect("validated config");
    let kernel = &setup.kernel;
    let space = kernel.space().clone();
    let mut learner_config = LearnerConfig::new(&space, episodes, config.delta);
    learner_config.eta = config.eta.unwrap_or(learner_config.eta);
    learner_config.gamma = config.gamma.unwrap_or(learner_config.gamma);
    learner_config.projection = config.projection.options();
    let fail = |episode, error| RunFailure { seed, episode, error };
    let mut learner = build_learner(algorithm, space.clone(), learner_config, seed).map_err(|e| fail(0, e))?;
    let mut env = stream_rng(seed, ENVIRONMENT_STREAM);

    let mut records = Vec::with_capacity(episodes);
    let mut decomposition = Vec::new();
    let mut confidence = Vec::new();
    let mut snapshot = |learner: &dyn uob_reps_core::learner::Learner, first_episode: usize| {
        if let Some(cs) = learner.confidence_set() {
            confidence.push(EpochSnapshot {
                epoch: cs.epoch(),
                first_episode,
                contains_truth: cs.contains(kernel),
                p_bar: cs.p_bar().to_vec(),
                widths: cs.widths().to_vec(),
            });
        }
    };
    if config.dump_confidence {
        snapshot(learner.as_ref(), 1);
    }

    let mut cum_regret = 0.0;
    for (t, l) in (1..=episodes).zip(losses) {
        let need_truth = config.expected_learner_loss || config.decomposition;
        let q_true = need_truth.then(|| occupancy_from(kernel, learner.policy()));
        let q_hat = if config.decomposition {
            learner.occupancy().cloned()
        } else {
            None
        };
        let epoch = learner.epoch();
        let trajectory = rollout(kernel, l, &mut env, |x| learner.act(x));
        let learner_loss = match &q_true {
            Some(q) if config.expected_learner_loss => q.inner_product(l),
            _ => trajectory.total_loss(),
        };
        let info = learner.update(&trajectory, l).map_err(|e| fail(t, e))?;
        if let (Some(q_true), Some(q_hat)) = (&q_true, &q_hat) {
            let estimate = info.loss_estimate.as_ref().map_or(l.as_slice(), |e| &e.values[..]);
            decomposition.push(DecompositionSample::new(
                q_true,
                q_hat,
                &comparator.occupancy,
                l.as_slice(),
                estimate,
            ));
        }
        if config.dump_confidence && info.epoch_advanced {
            snapshot(learner.as_ref(), t + 1);
        }
        let comparator_loss = comparator.occupancy.inner_product(l);
        cum_regret += learner_loss - comparator_loss;
        records.push(RegretRecord {
            t,
            epoch,
            learner_loss,
            comparator_loss,
            cum_regret,
        });
    }
    Ok(RunOutput {
        seed,
        algorithm,
        episodes,
        eta: learner.eta(),
        gamma: learner.gamma(),
        records,
        decomposition,
        confidence,
    })
}

/// All seeds of `config` for a budget of `episodes`, in seed order.
/// Seeds run in parallel; each result is independent of the others.
pub fn run_all(config: &ExperimentConfig, setup: &Setup, episodes: usize) -> Vec<Result<RunOutput, RunFailure>> {
    let losses = loss_sequence(setup, episodes);
    let comparator = Comparator::new(setup, &losses);
    config
        .seeds
        .par_iter()
        .map(|&seed| run_seed(config, setup, &losses, &comparator, episodes, seed))
        .collect()
}
