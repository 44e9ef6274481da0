//! Best fixed policy in hindsight and the per-episode regret decomposition.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{structure, Result};
use crate::mdp::{OccupancyMeasure, Policy, TransitionKernel};

/// Deterministic policy minimising `sum_t <q^{P,pi}, l_t>` given the
/// pair-indexed cumulative losses, and its value.
///
/// Backward dynamic program; ties go to the smallest action id.
pub fn best_in_hindsight(kernel: &TransitionKernel, cumulative: &[f64]) -> Result<(Policy, f64)> {
    let space = kernel.space();
    if cumulative.len() != space.num_pairs() {
        return Err(structure("cumulative losses do not match the state space"));
    }
    let na = space.num_actions();
    let mut value = vec![0.0; space.num_states()];
    let mut actions = vec![0usize; space.terminal_state()];
    for k in (0..space.horizon()).rev() {
        let next = space.layer(k + 1);
        for x in space.layer(k) {
            let mut best = (0, f64::INFINITY);
            for a in 0..na {
                let future: f64 = kernel
                    .row(x, a)
                    .iter()
                    .zip(&value[next.clone()])
                    .map(|(p, v)| p * v)
                    .sum();
                let q = cumulative[space.pair_index(x, a)] + future;
                if q < best.1 {
                    best = (a, q);
                }
            }
            actions[x] = best.0;
            value[x] = best.1;
        }
    }
    let policy = Policy::deterministic(space.clone(), &actions)?;
    Ok((policy, value[space.initial_state()]))
}

/// The four terms of one episode's regret
/// `<q_t - q*, l_t> = error + bias1 + reg + bias2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DecompositionSample {
    /// `<q_t - q_hat_t, l_t>`: cost of not knowing the kernel.
    pub error: f64,
    /// `<q_hat_t, l_t - l_hat_t>`.
    pub bias1: f64,
    /// `<q_hat_t - q*, l_hat_t>`: the mirror-descent regret term.
    pub reg: f64,
    /// `<q*, l_hat_t - l_t>`.
    pub bias2: f64,
}

impl DecompositionSample {
    /// `q_true` is the learner's occupancy under the true kernel, `q_hat` the
    /// occupancy it optimises, `q_star` the comparator; losses are pair-indexed.
    pub fn new(
        q_true: &OccupancyMeasure,
        q_hat: &OccupancyMeasure,
        q_star: &OccupancyMeasure,
        losses: &[f64],
        estimate: &[f64],
    ) -> Self {
        let (t, h, s) = (q_true.marginal_xa(), q_hat.marginal_xa(), q_star.marginal_xa());
        let dot = |q: &[f64], l: &[f64]| -> f64 { q.iter().zip(l).map(|(a, b)| a * b).sum() };
        let diff = |u: &[f64], v: &[f64]| -> Vec<f64> { u.iter().zip(v).map(|(a, b)| a - b).collect() };
        Self {
            error: dot(&diff(&t, &h), losses),
            bias1: dot(&h, &diff(losses, estimate)),
            reg: dot(&diff(&h, &s), estimate),
            bias2: dot(&s, &diff(estimate, losses)),
        }
    }

    pub fn total(&self) -> f64 {
        self.error + self.bias1 + self.reg + self.bias2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{occupancy_from, StateSpace};
    use alloc::sync::Arc;

    fn kernel() -> TransitionKernel {
        let space = Arc::new(StateSpace::new(vec![1, 2, 1], 2).unwrap());
        TransitionKernel::new(space, vec![0.9, 0.1, 0.2, 0.8, 1.0, 1.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn zero_losses_pick_action_zero() {
        let p = kernel();
        let (pi, v) = best_in_hindsight(&p, &[0.0; 6]).unwrap();
        assert_eq!(v, 0.0);
        assert!((0..3).all(|x| pi.prob(x, 0) == 1.0));
    }

    #[test]
    fn hand_computed_value() {
        let p = kernel();
        // pairs: (0,0) (0,1) (1,0) (1,1) (2,0) (2,1)
        let l = [0.5, 0.6, 1.0, 0.3, 0.0, 2.0];
        let (pi, v) = best_in_hindsight(&p, &l).unwrap();
        // V(1) = 0.3, V(2) = 0; a=0: 0.5 + 0.9*0.3 = 0.77, a=1: 0.6 + 0.2*0.3 = 0.66
        assert!((v - 0.66).abs() < 1e-15);
        assert_eq!(pi.prob(0, 1), 1.0);
        assert_eq!(pi.prob(1, 1), 1.0);
        assert_eq!(pi.prob(2, 0), 1.0);
    }

    #[test]
    fn decomposition_sums_to_regret() {
        let p = kernel();
        let space = p.space().clone();
        let q_true = occupancy_from(&p, &Policy::uniform(space.clone()));
        let q_hat = OccupancyMeasure::uniform(space.clone());
        let q_star = occupancy_from(&p, &Policy::deterministic(space, &[1, 0, 1]).unwrap());
        let l = [0.5, 0.6, 1.0, 0.3, 0.0, 0.9];
        let lh = [0.0, 1.7, 0.0, 0.0, 2.5, 0.0];
        let d = DecompositionSample::new(&q_true, &q_hat, &q_star, &l, &lh);
        let direct: f64 = q_true
            .marginal_xa()
            .iter()
            .zip(q_star.marginal_xa())
            .zip(&l)
            .map(|((a, b), c)| (a - b) * c)
            .sum();
        assert!((d.total() - direct).abs() < 1e-12);
    }
}
