//! Experiment configuration (JSON).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use uob_reps_core::envsim::{random_layered_mdp, stream_rng, Adversary, AdversaryKind, MdpShape, MDP_STREAM};
use uob_reps_core::learner::Algorithm;
use uob_reps_core::mdp::{StateSpace, TransitionKernel};
use uob_reps_core::projection::ProjectionOptions;

use crate::error::{HarnessError, Result};
use crate::mdp_file::{flatten_matrix, load_mdp};

/// Loss matrix written as rows of non-terminal states, columns of actions.
pub type Matrix = Vec<Vec<f64>>;

/// Where the true MDP comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MdpSource {
    /// MDP file, relative to the config file's directory.
    File(PathBuf),
    /// Random Dirichlet kernel of the given shape.
    Generated {
        layers: Vec<usize>,
        actions: usize,
        #[serde(default = "one")]
        concentration: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn one() -> f64 {
    1.0
}

/// Oblivious loss sequence. Matrices left out are drawn uniformly at random
/// from the adversary seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AdversarySpec {
    Switching {
        period: usize,
        #[serde(default)]
        first: Option<Matrix>,
        #[serde(default)]
        second: Option<Matrix>,
        #[serde(default)]
        seed: u64,
    },
    Stochastic {
        #[serde(default)]
        mean: Option<Matrix>,
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
    Corrupted {
        #[serde(default)]
        mean: Option<Matrix>,
        noise: f64,
        corrupted: Vec<usize>,
        #[serde(default)]
        seed: u64,
    },
    Fixed { losses: Vec<Matrix> },
}

/// Projection solver overrides; unset fields keep the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionSpec {
    pub max_iters: Option<usize>,
    pub tol_feas: Option<f64>,
    pub grad_tol: Option<f64>,
    pub gap_tol: Option<f64>,
    pub warm_start: Option<bool>,
}

impl ProjectionSpec {
    pub fn options(&self) -> ProjectionOptions {
        let d = ProjectionOptions::default();
        ProjectionOptions {
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            tol_feas: self.tol_feas.unwrap_or(d.tol_feas),
            grad_tol: self.grad_tol.unwrap_or(d.grad_tol),
            gap_tol: self.gap_tol.unwrap_or(d.gap_tol),
            warm_start: self.warm_start.unwrap_or(d.warm_start),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mdp: MdpSource,
    pub adversary: AdversarySpec,
    #[serde(default = "default_algorithm")]
    pub algorithm: String,
    /// Number of episodes `T`.
    pub episodes: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub projection: ProjectionSpec,
    /// Report `<q_t, l_t>` instead of the sampled episode loss.
    #[serde(default)]
    pub expected_learner_loss: bool,
    #[serde(default)]
    pub dump_confidence: bool,
    #[serde(default)]
    pub decomposition: bool,
}

fn default_algorithm() -> String {
    Algorithm::UobReps.as_str().to_string()
}

fn default_delta() -> f64 {
    0.1
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentConfig {
    /// Benchmark instance: layers (1, 5, 1), two actions, Dirichlet(1)
    /// rows, switching adversary with period 500.
    pub fn canonical(episodes: usize, seeds: Vec<u64>) -> Self {
        let shape = MdpShape::canonical();
        Self {
            mdp: MdpSource::Generated {
                layers: shape.layer_sizes,
                actions: shape.num_actions,
                concentration: shape.concentration,
                seed: 0,
            },
            adversary: AdversarySpec::Switching {
                period: 500,
                first: None,
                second: None,
                seed: 0,
            },
            algorithm: default_algorithm(),
            episodes,
            delta: default_delta(),
            eta: None,
            gamma: None,
            seeds,
            output: default_output(),
            projection: ProjectionSpec::default(),
            expected_learner_loss: false,
            dump_confidence: false,
            decomposition: false,
        }
    }

    pub fn from_json(src: &str) -> Result<Self> {
        serde_json::from_str(src).map_err(|e| HarnessError::config(format!("invalid config (line {}): {e}", e.line())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| HarnessError::unreadable(path, e))?;
        Self::from_json(&src).map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))
    }

    pub fn algorithm(&self) -> Result<Algorithm> {
        self.algorithm.parse().map_err(|e: uob_reps_core::Error| HarnessError::config(e.to_string()))
    }

    /// Checks the ranges that do not need the MDP.
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(HarnessError::config("episodes must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(HarnessError::config("delta must lie in (0, 1)"));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::config("seeds must not be empty"));
        }
        if self.eta.is_some_and(|e| !(e > 0.0)) || self.gamma.is_some_and(|g| !(g >= 0.0)) {
            return Err(HarnessError::config("eta must be positive and gamma nonnegative"));
        }
        self.algorithm()?;
        Ok(())
    }

    /// Builds the true kernel and the adversary. Relative MDP paths are
    /// resolved against `base_dir`.
    pub fn instantiate(&self, base_dir: &Path) -> Result<Setup> {
        self.validate()?;
        let kernel = match &self.mdp {
            MdpSource::File(p) => load_mdp(&base_dir.join(p))?.kernel,
            MdpSource::Generated {
                layers,
                actions,
                concentration,
                seed,
            } => {
                let shape = MdpShape {
                    layer_sizes: layers.clone(),
                    num_actions: *actions,
                    concentration: *concentration,
                };
                random_layered_mdp(&shape, &mut stream_rng(*seed, MDP_STREAM))?
            }
        };
        let adversary = build_adversary(&self.adversary, kernel.space())?;
        Ok(Setup { kernel, adversary })
    }
}

fn matrix_or_random(m: &Option<Matrix>, space: &StateSpace, seed: u64, stream: u64) -> Result<Vec<f64>> {
    match m {
        Some(rows) => flatten_matrix(space, rows),
        None => Ok(Adversary::random_matrix(space, seed, stream)),
    }
}

pub fn build_adversary(spec: &AdversarySpec, space: &Arc<StateSpace>) -> Result<Adversary> {
    let (kind, seed) = match spec {
        AdversarySpec::Switching {
            period,
            first,
            second,
            seed,
        } => (
            AdversaryKind::Switching {
                first: matrix_or_random(first, space, *seed, u64::MAX)?,
                second: matrix_or_random(second, space, *seed, u64::MAX - 1)?,
                period: *period,
            },
            *seed,
        ),
        AdversarySpec::Stochastic { mean, noise, seed } => (
            AdversaryKind::Stochastic {
                mean: matrix_or_random(mean, space, *seed, u64::MAX)?,
                noise: *noise,
            },
            *seed,
        ),
        AdversarySpec::Corrupted {
            mean,
            noise,
            corrupted,
            seed,
        } => (
            AdversaryKind::CorruptedStochastic {
                mean: matrix_or_random(mean, space, *seed, u64::MAX)?,
                noise: *noise,
                corrupted: corrupted.iter().copied().collect::<BTreeSet<_>>(),
            },
            *seed,
        ),
        AdversarySpec::Fixed { losses } => (
            AdversaryKind::FixedSequence {
                losses: losses.iter().map(|m| flatten_matrix(space, m)).collect::<Result<_>>()?,
            },
            0,
        ),
    };
    Ok(Adversary::new(space.clone(), kind, seed)?)
}

/// Ground truth of an experiment.
#[derive(Debug, Clone)]
pub struct Setup {
    pub kernel: TransitionKernel,
    pub adversary: Adversary,
}
