//! Ground-truth environment: episode sampling, random layered MDPs and
//! oblivious loss sequences.
//!
//! All randomness comes from ChaCha8 streams. A stream is identified by a
//! `(seed, stream)` pair, so independent consumers (environment, learner,
//! adversary episodes) never share state.

use alloc::collections::BTreeSet;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{structure, Result};
use crate::mdp::{LossMatrix, Policy, StateSpace, Step, TransitionKernel, Trajectory};

/// Stream used to generate random MDPs.
pub const MDP_STREAM: u64 = 0;
/// Stream driving environment transitions.
pub const ENVIRONMENT_STREAM: u64 = 2;
/// Episode `t` of a noisy adversary draws from stream `ADVERSARY_STREAMS + t`,
/// far away from the learner and environment streams.
pub const ADVERSARY_STREAMS: u64 = 1 << 32;

/// Named random stream `stream` of generator `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws an index from `probs` by inversion.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left `u` above the total; take the last positive entry
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Plays one episode under `kernel`, asking `act` for the action in each
/// visited state and reading losses from `losses`.
pub fn rollout<R, F>(
    kernel: &TransitionKernel,
    losses: &LossMatrix,
    env_rng: &mut R,
    mut act: F,
) -> Trajectory
where
    R: Rng + ?Sized,
    F: FnMut(usize) -> usize,
{
    let space = kernel.space();
    let mut steps = Vec::with_capacity(space.horizon());
    let mut x = space.initial_state();
    for _ in 0..space.horizon() {
        let a = act(x);
        steps.push(Step {
            state: x,
            action: a,
            loss: losses.get(space, x, a),
        });
        let next = sample_index(kernel.row(x, a), env_rng);
        x = space.layer(space.layer_of(x) + 1).start + next;
    }
    Trajectory {
        episode: losses.episode(),
        steps,
        terminal: x,
    }
}

/// Samples an episode with actions from `policy` and transitions from
/// `kernel`, both driven by `rng`.
pub fn sample_episode<R: Rng + ?Sized>(
    kernel: &TransitionKernel,
    policy: &Policy,
    losses: &LossMatrix,
    rng: &mut R,
) -> Trajectory {
    let space = kernel.space().clone();
    let mut steps = Vec::with_capacity(space.horizon());
    let mut x = space.initial_state();
    for _ in 0..space.horizon() {
        let a = sample_index(policy.row(x), rng);
        steps.push(Step {
            state: x,
            action: a,
            loss: losses.get(&space, x, a),
        });
        let next = sample_index(kernel.row(x, a), rng);
        x = space.layer(space.layer_of(x) + 1).start + next;
    }
    Trajectory {
        episode: losses.episode(),
        steps,
        terminal: x,
    }
}

/// Shape of a randomly generated layered MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpShape {
    /// `|X_0|, ..., |X_L|`; the first and last entries must be 1.
    pub layer_sizes: Vec<usize>,
    pub num_actions: usize,
    /// Symmetric Dirichlet concentration of each transition row.
    pub concentration: f64,
}

impl MdpShape {
    /// Two-step instance with five middle states and two actions.
    pub fn canonical() -> Self {
        Self {
            layer_sizes: vec![1, 5, 1],
            num_actions: 2,
            concentration: 1.0,
        }
    }
}

/// Random kernel whose rows are symmetric Dirichlet draws (normalised Gamma
/// variates).
pub fn random_layered_mdp<R: Rng + ?Sized>(shape: &MdpShape, rng: &mut R) -> Result<TransitionKernel> {
    if !(shape.concentration > 0.0) || !shape.concentration.is_finite() {
        return Err(structure("concentration must be positive and finite"));
    }
    let space = Arc::new(StateSpace::new(shape.layer_sizes.clone(), shape.num_actions)?);
    let gamma = Gamma::new(shape.concentration, 1.0)
        .map_err(|_| structure("invalid Gamma parameters"))?;
    let mut probs = vec![0.0; space.num_triples()];
    for x in 0..space.terminal_state() {
        for a in 0..space.num_actions() {
            let row = &mut probs[space.row(x, a)];
            loop {
                row.iter_mut().for_each(|v| *v = gamma.sample(rng));
                let sum: f64 = row.iter().sum();
                if sum > 0.0 && sum.is_finite() {
                    row.iter_mut().for_each(|v| *v /= sum);
                    break;
                }
            }
            // push the rounding error onto the largest entry
            let err = 1.0 - row.iter().sum::<f64>();
            let (imax, _) = row
                .iter()
                .enumerate()
                .fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
            row[imax] = (row[imax] + err).clamp(0.0, 1.0);
        }
    }
    TransitionKernel::new(space, probs)
}

/// Loss-sequence families. Matrices are indexed by pair.
#[derive(Debug, Clone, PartialEq)]
pub enum AdversaryKind {
    /// Replays the list, cycling if it is shorter than the horizon.
    FixedSequence { losses: Vec<Vec<f64>> },
    /// `clip(mean + N(0, noise^2), 0, 1)`.
    Stochastic { mean: Vec<f64>, noise: f64 },
    /// `first` for `period` episodes, then `second`, and so on.
    Switching {
        first: Vec<f64>,
        second: Vec<f64>,
        period: usize,
    },
    /// Stochastic, except that on `corrupted` episodes the loss is `1 - mean`.
    CorruptedStochastic {
        mean: Vec<f64>,
        noise: f64,
        corrupted: BTreeSet<usize>,
    },
}

/// Oblivious adversary: `losses(t)` depends only on the seed and `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adversary {
    space: Arc<StateSpace>,
    kind: AdversaryKind,
    seed: u64,
}

impl Adversary {
    pub fn new(space: Arc<StateSpace>, kind: AdversaryKind, seed: u64) -> Result<Self> {
        let n = space.num_pairs();
        let check = |m: &[f64]| -> Result<()> {
            if m.len() != n {
                return Err(structure("loss matrix does not match the state space"));
            }
            if m.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(structure("adversary losses must lie in [0, 1]"));
            }
            Ok(())
        };
        match &kind {
            AdversaryKind::FixedSequence { losses } => {
                if losses.is_empty() {
                    return Err(structure("fixed loss sequence is empty"));
                }
                losses.iter().try_for_each(|m| check(m))?;
            }
            AdversaryKind::Stochastic { mean, noise }
            | AdversaryKind::CorruptedStochastic { mean, noise, .. } => {
                check(mean)?;
                if !(*noise >= 0.0) || !noise.is_finite() {
                    return Err(structure("noise scale must be nonnegative"));
                }
            }
            AdversaryKind::Switching {
                first,
                second,
                period,
            } => {
                check(first)?;
                check(second)?;
                if *period == 0 {
                    return Err(structure("switching period must be positive"));
                }
            }
        }
        Ok(Self { space, kind, seed })
    }

    /// Uniform random loss matrix drawn from stream `stream` of `seed`.
    pub fn random_matrix(space: &StateSpace, seed: u64, stream: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, stream);
        (0..space.num_pairs()).map(|_| rng.random::<f64>()).collect()
    }

    /// Switching adversary between two uniformly random matrices.
    pub fn random_switching(space: Arc<StateSpace>, period: usize, seed: u64) -> Result<Self> {
        let first = Self::random_matrix(&space, seed, u64::MAX);
        let second = Self::random_matrix(&space, seed, u64::MAX - 1);
        Self::new(
            space,
            AdversaryKind::Switching {
                first,
                second,
                period,
            },
            seed,
        )
    }

    pub fn kind(&self) -> &AdversaryKind {
        &self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Loss matrix of episode `t` (1-based).
    pub fn losses(&self, t: usize) -> LossMatrix {
        let values = match &self.kind {
            AdversaryKind::FixedSequence { losses } => {
                losses[(t.max(1) - 1) % losses.len()].clone()
            }
            AdversaryKind::Stochastic { mean, noise } => self.noisy(mean, *noise, t),
            AdversaryKind::Switching {
                first,
                second,
                period,
            } => {
                if ((t.max(1) - 1) / period).is_multiple_of(2) {
                    first.clone()
                } else {
                    second.clone()
                }
            }
            AdversaryKind::CorruptedStochastic {
                mean,
                noise,
                corrupted,
            } => {
                if corrupted.contains(&t) {
                    mean.iter().map(|m| 1.0 - m).collect()
                } else {
                    self.noisy(mean, *noise, t)
                }
            }
        };
        LossMatrix::new(&self.space, t, values).expect("adversary losses are validated")
    }

    fn noisy(&self, mean: &[f64], noise: f64, t: usize) -> Vec<f64> {
        if noise == 0.0 {
            return mean.to_vec();
        }
        let mut rng = stream_rng(self.seed, ADVERSARY_STREAMS + t as u64);
        let normal = Normal::new(0.0, noise).expect("noise validated");
        mean.iter()
            .map(|&m| (m + normal.sample(&mut rng)).clamp(0.0, 1.0))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{occupancy_from, OCCUPANCY_TOL};

    #[test]
    fn deterministic_mdp_gives_unique_trajectory() {
        let space = Arc::new(StateSpace::new(vec![1, 2, 1], 2).unwrap());
        let p = TransitionKernel::new(
            space.clone(),
            vec![0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0],
        )
        .unwrap();
        let pi = Policy::new(space.clone(), vec![0.0, 1.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        let l = LossMatrix::new(&space, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        for seed in 0..5 {
            let t = sample_episode(&p, &pi, &l, &mut stream_rng(seed, 0));
            assert_eq!(t.episode, 3);
            assert_eq!(
                t.steps,
                vec![
                    Step { state: 0, action: 1, loss: 0.2 },
                    Step { state: 1, action: 0, loss: 0.3 },
                ]
            );
            assert_eq!(t.terminal, 3);
        }
    }

    #[test]
    fn episodes_are_reproducible() {
        let shape = MdpShape::canonical();
        let p = random_layered_mdp(&shape, &mut stream_rng(1, 0)).unwrap();
        let pi = Policy::uniform(p.space().clone());
        let l = LossMatrix::constant(p.space(), 1, 0.5).unwrap();
        let run = |seed| {
            let mut rng = stream_rng(seed, 1);
            (0..20)
                .map(|_| sample_episode(&p, &pi, &l, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn generated_mdps_are_valid_and_seeded() {
        let shape = MdpShape {
            layer_sizes: vec![1, 3, 4, 2, 1],
            num_actions: 3,
            concentration: 0.3,
        };
        let a = random_layered_mdp(&shape, &mut stream_rng(5, 0)).unwrap();
        let b = random_layered_mdp(&shape, &mut stream_rng(5, 0)).unwrap();
        assert_eq!(a, b);
        let q = occupancy_from(&a, &Policy::uniform(a.space().clone()));
        assert!(q.validate(OCCUPANCY_TOL).is_empty());
    }

    #[test]
    fn high_concentration_approaches_uniform() {
        let spread = |c: f64| {
            let shape = MdpShape {
                layer_sizes: vec![1, 4, 1],
                num_actions: 2,
                concentration: c,
            };
            let mut rng = stream_rng(3, 0);
            let mut total = 0.0;
            for _ in 0..50 {
                let p = random_layered_mdp(&shape, &mut rng).unwrap();
                let row = p.row(0, 0);
                let max = row.iter().copied().fold(0.0, f64::max);
                let min = row.iter().copied().fold(1.0, f64::min);
                total += max - min;
            }
            total / 50.0
        };
        assert!(spread(1e4) < 0.05);
        assert!(spread(1e4) < spread(1.0));
    }

    #[test]
    fn adversary_kinds() {
        let space = Arc::new(StateSpace::new(vec![1, 2, 1], 2).unwrap());
        let mean = vec![0.2, 0.4, 0.6, 0.8, 0.0, 1.0];
        let flat = Adversary::new(
            space.clone(),
            AdversaryKind::Stochastic { mean: mean.clone(), noise: 0.0 },
            1,
        )
        .unwrap();
        assert_eq!(flat.losses(1).as_slice(), flat.losses(99).as_slice());

        let sw = Adversary::random_switching(space.clone(), 10, 4).unwrap();
        assert_eq!(sw.losses(1).as_slice(), sw.losses(10).as_slice());
        assert_ne!(sw.losses(10).as_slice(), sw.losses(11).as_slice());
        assert_eq!(sw.losses(1).as_slice(), sw.losses(21).as_slice());
        let whole = Adversary::random_switching(space.clone(), 100, 4).unwrap();
        assert!((1..=100).all(|t| whole.losses(t).as_slice() == whole.losses(1).as_slice()));

        let corrupt = Adversary::new(
            space.clone(),
            AdversaryKind::CorruptedStochastic {
                mean: mean.clone(),
                noise: 0.0,
                corrupted: [3].into_iter().collect(),
            },
            2,
        )
        .unwrap();
        assert_eq!(corrupt.losses(2).as_slice(), &mean[..]);
        assert_eq!(corrupt.losses(3).as_slice(), &[0.8, 0.6, 0.4, 0.19999999999999996, 1.0, 0.0]);

        let seq = Adversary::new(
            space.clone(),
            AdversaryKind::FixedSequence { losses: vec![mean.clone(), vec![0.5; 6]] },
            0,
        )
        .unwrap();
        assert_eq!(seq.losses(3).as_slice(), &mean[..]);
        assert_eq!(seq.losses(4).as_slice(), &[0.5; 6]);
    }

    #[test]
    fn adversary_validation() {
        let space = Arc::new(StateSpace::new(vec![1, 2, 1], 2).unwrap());
        let bad = AdversaryKind::Stochastic { mean: vec![1.5; 6], noise: 0.1 };
        assert!(Adversary::new(space.clone(), bad, 0).is_err());
        let bad = AdversaryKind::Switching { first: vec![0.0; 6], second: vec![0.0; 6], period: 0 };
        assert!(Adversary::new(space, bad, 0).is_err());
    }
}
