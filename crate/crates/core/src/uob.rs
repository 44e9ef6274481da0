//! Upper occupancy bounds.
//!
//! `u(x, a)` is the largest probability of visiting `(x, a)` under a policy
//! over every kernel of a confidence set. Because the set constrains each row
//! `P(·|x, a)` independently, it is computed by a backward dynamic program
//! whose per-row step is a small linear program solved greedily.

use alloc::vec;
use alloc::vec::Vec;

use crate::confidence::ConfidenceSet;
use crate::error::{structure, Result};
use crate::mdp::Policy;

/// Tolerance on `sum p_bar = 1` accepted by [`greedy_max`].
pub const DISTRIBUTION_TOL: f64 = 1e-9;

/// Indices sorting `values` ascending; ties keep index order.
fn ascending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    order
}

/// Maximises `sum_j p(j) f(j)` over distributions `p` with
/// `|p(j) - p_bar(j)| <= eps(j)`.
///
/// Returns the optimal value and an optimal `p`.
pub fn greedy_max(f: &[f64], p_bar: &[f64], eps: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = f.len();
    if n == 0 || p_bar.len() != n || eps.len() != n {
        return Err(structure("greedy_max inputs must be non-empty and of equal length"));
    }
    if eps.iter().any(|e| !(*e >= 0.0)) {
        return Err(structure("greedy_max widths must be nonnegative"));
    }
    if !is_distribution(p_bar) {
        return Err(structure("greedy_max centre is not a distribution"));
    }
    let order = ascending_order(f);
    let mut p = p_bar.to_vec();
    let mut slack = eps.to_vec();
    let value = redistribute(&order, f, &mut p, &mut slack);
    Ok((value, p))
}

fn is_distribution(p: &[f64]) -> bool {
    p.iter().all(|v| (0.0..=1.0).contains(v))
        && (p.iter().sum::<f64>() - 1.0).abs() <= DISTRIBUTION_TOL
}

/// Two-pointer sweep moving mass from low-`f` to high-`f` states.
/// `p` starts at the centre and `slack` at the widths; both are consumed.
fn redistribute(order: &[usize], f: &[f64], p: &mut [f64], slack: &mut [f64]) -> f64 {
    let (mut lo, mut hi) = (0, order.len() - 1);
    while lo < hi {
        let (down, up) = (order[lo], order[hi]);
        // maximum weight to decrease at `down` / increase at `up`
        let d_minus = p[down].min(slack[down]);
        let d_plus = (1.0 - p[up]).min(slack[up]);
        let moved = d_minus.min(d_plus);
        p[down] -= moved;
        p[up] += moved;
        if d_minus <= d_plus {
            slack[up] -= d_minus;
            lo += 1;
        } else {
            slack[down] -= d_plus;
            hi -= 1;
        }
    }
    p.iter().zip(f).map(|(p, f)| p * f).sum()
}

/// Same problem when the centre is not a distribution (rows of pairs never
/// visited before the epoch are all-zero): start from the lower box corner and
/// pour the missing mass into the highest-`f` states.
fn box_fill(order: &[usize], f: &[f64], p_bar: &[f64], eps: &[f64]) -> Result<f64> {
    let mut p: Vec<f64> = p_bar
        .iter()
        .zip(eps)
        .map(|(c, e)| (c - e).max(0.0))
        .collect();
    let mut missing = 1.0 - p.iter().sum::<f64>();
    if missing < -DISTRIBUTION_TOL {
        return Err(structure("confidence row admits no distribution"));
    }
    for &j in order.iter().rev() {
        if missing <= 0.0 {
            break;
        }
        let room = ((p_bar[j] + eps[j]).min(1.0) - p[j]).max(0.0);
        let add = room.min(missing);
        p[j] += add;
        missing -= add;
    }
    if missing > DISTRIBUTION_TOL {
        return Err(structure("confidence row admits no distribution"));
    }
    Ok(p.iter().zip(f).map(|(p, f)| p * f).sum())
}

/// `f` of the backward program for one target state.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachValues {
    pub target: usize,
    /// `f(x)` for every state id; entries beyond the target's layer are zero.
    pub f: Vec<f64>,
}

impl ReachValues {
    /// Maximum probability of reaching the target from the initial state.
    pub fn from_initial(&self) -> f64 {
        self.f[0]
    }
}

/// Backward dynamic program from the layer of `target` down to layer 0:
/// `f(x) = sum_a pi(a|x) max_{P(·|x,a)} sum_{x'} P(x'|x,a) f(x')`.
pub fn reach_values(policy: &Policy, target: usize, cs: &ConfidenceSet) -> Result<ReachValues> {
    let space = cs.space();
    if target >= space.terminal_state() {
        return Err(structure("target must be a non-terminal state"));
    }
    let mut f = vec![0.0; space.num_states()];
    f[target] = 1.0;
    let mut p = Vec::new();
    let mut slack = Vec::new();
    for k in (0..space.layer_of(target)).rev() {
        let next = space.layer(k + 1);
        let f_next = &f[next.clone()];
        if f_next.iter().all(|&v| v == 0.0) {
            // nothing downstream can reach the target
            continue;
        }
        let order = ascending_order(f_next);
        let f_next = f_next.to_vec();
        for x in space.layer(k) {
            let mut total = 0.0;
            for a in 0..space.num_actions() {
                let weight = policy.prob(x, a);
                if weight == 0.0 {
                    continue;
                }
                let p_bar = cs.p_bar_row(x, a);
                let eps = cs.width_row(x, a);
                let best = if is_distribution(p_bar) {
                    p.clear();
                    p.extend_from_slice(p_bar);
                    slack.clear();
                    slack.extend_from_slice(eps);
                    redistribute(&order, &f_next, &mut p, &mut slack)
                } else {
                    box_fill(&order, &f_next, p_bar, eps)?
                };
                total += weight * best;
            }
            f[x] = total;
        }
    }
    Ok(ReachValues { target, f })
}

/// Relative margin added to every bound. When the maximum is attained by a
/// forced path (singleton layers, layer 0) the bound and a member kernel's
/// forward occupancy agree in exact arithmetic, and summation order alone
/// would otherwise decide which one is larger.
const OUTWARD_ROUNDING: f64 = 32.0 * f64::EPSILON;

fn outward(u: f64) -> f64 {
    (u * (1.0 + OUTWARD_ROUNDING)).min(1.0)
}

/// Upper occupancy bound `u(x, a) = pi(a|x) f(x_0)`, rounded outward by a few
/// ulps so it dominates floating-point occupancies of every member kernel.
pub fn comp_uob(policy: &Policy, x: usize, a: usize, cs: &ConfidenceSet) -> Result<f64> {
    Ok(outward(policy.prob(x, a) * reach_values(policy, x, cs)?.from_initial()))
}

/// Upper occupancy bounds of every pair, indexed like
/// [`StateSpace::pair_index`](crate::mdp::StateSpace::pair_index).
pub fn comp_uob_all(policy: &Policy, cs: &ConfidenceSet) -> Result<Vec<f64>> {
    let space = cs.space();
    let mut out = vec![0.0; space.num_pairs()];
    for x in 0..space.terminal_state() {
        let reach = reach_values(policy, x, cs)?.from_initial();
        for a in 0..space.num_actions() {
            out[space.pair_index(x, a)] = outward(policy.prob(x, a) * reach);
        }
    }
    Ok(out)
}
