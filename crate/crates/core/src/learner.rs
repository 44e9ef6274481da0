//! The UOB-REPS learner and its two baselines.
//!
//! Each episode the learner plays the policy induced by its occupancy measure
//! `q_t`, builds optimistic loss estimates
//! `l_t(x, a) / (u_t(x, a) + gamma)` on the visited pairs (with `u_t` the
//! upper occupancy bound under the current confidence set), updates its visit
//! counters, possibly starts a new epoch, and takes a mirror-descent step
//! projected onto the occupancy measures of the (possibly new) confidence set.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand_chacha::ChaCha8Rng;

use crate::confidence::{ConfidenceSet, VisitCounters};
use crate::envsim::{sample_index, stream_rng};
use crate::error::{structure, Error, Result};
use crate::math;
use crate::mdp::{LossMatrix, OccupancyMeasure, Policy, StateSpace, Trajectory};
use crate::projection::{project, unconstrained_step, DualVariables, ProjectionOptions, ProjectionReport};
use crate::uob::comp_uob;
use alloc::sync::Arc;

/// Random stream index used by learners.
pub const LEARNER_STREAM: u64 = 1;

/// `eta = gamma = sqrt(L ln(L |X| |A| / delta) / (T |X| |A|))`.
pub fn default_hyperparameters(
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    episodes: usize,
    delta: f64,
) -> (f64, f64) {
    let (l, xa) = (horizon as f64, (num_states * num_actions) as f64);
    let rate = math::sqrt(l * math::ln(l * xa / delta) / (episodes as f64 * xa));
    (rate, rate)
}

/// Learner selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Bandit feedback with upper-occupancy-bound estimators.
    UobReps,
    /// Same mirror descent, fed the full loss matrix.
    FullInfo,
    /// Uniform policy every episode.
    Uniform,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::UobReps => "uob-reps",
            Algorithm::FullInfo => "full-info",
            Algorithm::Uniform => "uniform",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uob-reps" => Ok(Algorithm::UobReps),
            "full-info" => Ok(Algorithm::FullInfo),
            "uniform" => Ok(Algorithm::Uniform),
            other => Err(structure(alloc::format!(
                "unknown algorithm {other:?} (expected uob-reps, full-info or uniform)"
            ))),
        }
    }
}

/// Hyperparameters of the mirror-descent learners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    /// Episode budget `T`.
    pub episodes: usize,
    pub delta: f64,
    pub eta: f64,
    pub gamma: f64,
    pub projection: ProjectionOptions,
}

impl LearnerConfig {
    /// Config with the default `eta = gamma` for this space and budget.
    pub fn new(space: &StateSpace, episodes: usize, delta: f64) -> Self {
        let (eta, gamma) = default_hyperparameters(
            space.horizon(),
            space.num_states(),
            space.num_actions(),
            episodes,
            delta,
        );
        Self {
            episodes,
            delta,
            eta,
            gamma,
            projection: ProjectionOptions::default(),
        }
    }
}

/// Loss estimate indexed by pair; nonzero only on visited pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEstimate {
    pub values: Vec<f64>,
}

/// `l(x_k, a_k) / (u_k + gamma)` on the visited pairs, zero elsewhere.
/// `bounds[k]` is the upper occupancy bound of step `k`.
pub fn estimate_losses(
    space: &StateSpace,
    trajectory: &Trajectory,
    bounds: &[f64],
    gamma: f64,
) -> Result<LossEstimate> {
    if bounds.len() != trajectory.steps.len() {
        return Err(structure("one occupancy bound per trajectory step is required"));
    }
    let mut values = vec![0.0; space.num_pairs()];
    for (step, &u) in trajectory.steps.iter().zip(bounds) {
        let denom = u + gamma;
        if !(denom > 0.0) {
            return Err(Error::ZeroDenominator {
                state: step.state,
                action: step.action,
            });
        }
        values[space.pair_index(step.state, step.action)] = step.loss / denom;
    }
    Ok(LossEstimate { values })
}

/// What happened during one learner update.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepInfo {
    /// Loss estimate fed to the mirror step (bandit learner only).
    pub loss_estimate: Option<LossEstimate>,
    /// Upper occupancy bounds of the visited pairs, in step order.
    pub bounds: Vec<f64>,
    pub epoch_advanced: bool,
    pub projection: Option<ProjectionReport>,
}

/// Common interface of the learners driven by the experiment loop.
pub trait Learner {
    fn algorithm(&self) -> Algorithm;
    /// Policy for the coming episode.
    fn policy(&self) -> &Policy;
    /// Samples an action in `x` from the current policy.
    fn act(&mut self, x: usize) -> usize;
    /// Consumes the episode's trajectory; `losses` is only read by
    /// full-information learners.
    fn update(&mut self, trajectory: &Trajectory, losses: &LossMatrix) -> Result<StepInfo>;
    /// Epoch of the coming episode.
    fn epoch(&self) -> usize;
    fn occupancy(&self) -> Option<&OccupancyMeasure> {
        None
    }
    fn confidence_set(&self) -> Option<&ConfidenceSet> {
        None
    }
    fn eta(&self) -> f64 {
        0.0
    }
    fn gamma(&self) -> f64 {
        0.0
    }
}

/// Mirror descent over occupancy measures with confidence-set projections.
///
/// With bandit feedback this is UOB-REPS; [`OmdLearner::full_information`]
/// gives the full-information comparator that uses the true losses.
#[derive(Debug, Clone)]
pub struct OmdLearner {
    space: Arc<StateSpace>,
    config: LearnerConfig,
    full_information: bool,
    episode: usize,
    q_hat: OccupancyMeasure,
    policy: Policy,
    counters: VisitCounters,
    cs: ConfidenceSet,
    rng: ChaCha8Rng,
    duals: Option<DualVariables>,
}

impl OmdLearner {
    /// UOB-REPS with bandit feedback.
    pub fn uob_reps(space: Arc<StateSpace>, config: LearnerConfig, seed: u64) -> Result<Self> {
        Self::build(space, config, seed, false)
    }

    /// Same update driven by the true loss matrix.
    pub fn full_information(space: Arc<StateSpace>, config: LearnerConfig, seed: u64) -> Result<Self> {
        Self::build(space, config, seed, true)
    }

    fn build(space: Arc<StateSpace>, config: LearnerConfig, seed: u64, full: bool) -> Result<Self> {
        if !(config.eta > 0.0) || !(config.gamma >= 0.0) {
            return Err(structure("eta must be positive and gamma nonnegative"));
        }
        if !(config.delta > 0.0 && config.delta < 1.0) || config.episodes == 0 {
            return Err(structure("delta must lie in (0, 1) and the budget must be positive"));
        }
        let q_hat = OccupancyMeasure::uniform(space.clone());
        let policy = q_hat.induced_policy();
        Ok(Self {
            counters: VisitCounters::new(space.clone()),
            cs: ConfidenceSet::initial(space.clone(), config.delta, config.episodes),
            rng: stream_rng(seed, LEARNER_STREAM),
            duals: None,
            episode: 1,
            full_information: full,
            space,
            config,
            q_hat,
            policy,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    /// Index of the coming episode (1-based).
    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn counters(&self) -> &VisitCounters {
        &self.counters
    }

    /// Upper occupancy bounds of the visited pairs under the current set.
    pub fn visited_bounds(&self, trajectory: &Trajectory) -> Result<Vec<f64>> {
        trajectory
            .steps
            .iter()
            .map(|s| comp_uob(&self.policy, s.state, s.action, &self.cs))
            .collect()
    }

    /// Bandit update with the optimistic estimator.
    pub fn step(&mut self, trajectory: &Trajectory) -> Result<StepInfo> {
        let bounds = self.visited_bounds(trajectory)?;
        let estimate = estimate_losses(&self.space, trajectory, &bounds, self.config.gamma)?;
        let mut info = self.advance(trajectory, &estimate.values)?;
        info.bounds = bounds;
        info.loss_estimate = Some(estimate);
        Ok(info)
    }

    /// Full-information update with the true losses.
    pub fn step_full_information(&mut self, trajectory: &Trajectory, losses: &LossMatrix) -> Result<StepInfo> {
        self.advance(trajectory, losses.as_slice())
    }

    fn advance(&mut self, trajectory: &Trajectory, losses: &[f64]) -> Result<StepInfo> {
        self.counters.record_trajectory(trajectory)?;
        let epoch_advanced = self.counters.should_advance(trajectory);
        if epoch_advanced {
            self.cs = self
                .counters
                .advance_epoch(self.config.delta, self.config.episodes);
            self.duals = None;
        }
        let tilde = unconstrained_step(&self.q_hat, losses, self.config.eta);
        let warm = if self.config.projection.warm_start {
            self.duals.as_ref()
        } else {
            None
        };
        let (q, report, duals) = project(&tilde, &self.cs, &self.config.projection, warm)?;
        if !report.converged {
            return Err(Error::ProjectionFailed {
                iterations: report.iterations,
                violation: report.max_violation,
            });
        }
        self.q_hat = q;
        self.policy = self.q_hat.induced_policy();
        self.duals = Some(duals);
        self.episode += 1;
        Ok(StepInfo {
            loss_estimate: None,
            bounds: Vec::new(),
            epoch_advanced,
            projection: Some(report),
        })
    }
}

impl Learner for OmdLearner {
    fn algorithm(&self) -> Algorithm {
        if self.full_information {
            Algorithm::FullInfo
        } else {
            Algorithm::UobReps
        }
    }

    fn policy(&self) -> &Policy {
        &self.policy
    }

    fn act(&mut self, x: usize) -> usize {
        sample_index(self.policy.row(x), &mut self.rng)
    }

    fn update(&mut self, trajectory: &Trajectory, losses: &LossMatrix) -> Result<StepInfo> {
        if self.full_information {
            self.step_full_information(trajectory, losses)
        } else {
            self.step(trajectory)
        }
    }

    fn epoch(&self) -> usize {
        self.cs.epoch()
    }

    fn occupancy(&self) -> Option<&OccupancyMeasure> {
        Some(&self.q_hat)
    }

    fn confidence_set(&self) -> Option<&ConfidenceSet> {
        Some(&self.cs)
    }

    fn eta(&self) -> f64 {
        self.config.eta
    }

    fn gamma(&self) -> f64 {
        self.config.gamma
    }
}

/// Plays the uniform policy forever.
#[derive(Debug, Clone)]
pub struct UniformLearner {
    policy: Policy,
    rng: ChaCha8Rng,
}

impl UniformLearner {
    pub fn new(space: Arc<StateSpace>, seed: u64) -> Self {
        Self {
            policy: Policy::uniform(space),
            rng: stream_rng(seed, LEARNER_STREAM),
        }
    }
}

impl Learner for UniformLearner {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Uniform
    }

    fn policy(&self) -> &Policy {
        &self.policy
    }

    fn act(&mut self, x: usize) -> usize {
        sample_index(self.policy.row(x), &mut self.rng)
    }

    fn update(&mut self, _trajectory: &Trajectory, _losses: &LossMatrix) -> Result<StepInfo> {
        Ok(StepInfo::default())
    }

    fn epoch(&self) -> usize {
        1
    }
}

/// Builds the learner named by `algorithm`.
pub fn build_learner(
    algorithm: Algorithm,
    space: Arc<StateSpace>,
    config: LearnerConfig,
    seed: u64,
) -> Result<alloc::boxed::Box<dyn Learner + Send>> {
    Ok(match algorithm {
        Algorithm::UobReps => alloc::boxed::Box::new(OmdLearner::uob_reps(space, config, seed)?),
        Algorithm::FullInfo => {
            alloc::boxed::Box::new(OmdLearner::full_information(space, config, seed)?)
        }
        Algorithm::Uniform => alloc::boxed::Box::new(UniformLearner::new(space, seed)),
    })
}
