use std::sync::Arc;

use rand::Rng;
use uob_reps_core::confidence::ConfidenceSet;
use uob_reps_core::mdp::{occupancy_from, OccupancyMeasure, Policy, StateSpace, TransitionKernel};

/// Layer sizes `1, n_1, ..., n_{L-1}, 1` with each `n_k` uniform in
/// `1..=max_width`.
pub fn random_space<R: Rng>(rng: &mut R, horizon: usize, max_width: usize, actions: usize) -> Arc<StateSpace> {
    let mut sizes = vec![1];
    sizes.extend((1..horizon).map(|_| rng.random_range(1..=max_width)));
    sizes.push(1);
    Arc::new(StateSpace::new(sizes, actions).unwrap())
}

/// Flat Dirichlet draw of length `n`; every entry is strictly positive.
pub fn random_distribution<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln() + 1e-3).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    fix_sum(&mut v);
    v
}

/// Puts the rounding error of a near-distribution on its largest entry.
pub fn fix_sum(v: &mut [f64]) {
    let err = 1.0 - v.iter().sum::<f64>();
    let i = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
    v[i] += err;
}

pub fn random_kernel<R: Rng>(rng: &mut R, space: &Arc<StateSpace>) -> TransitionKernel {
    let mut probs = vec![0.0; space.num_triples()];
    for x in 0..space.terminal_state() {
        for a in 0..space.num_actions() {
            let row = space.row(x, a);
            let d = random_distribution(rng, row.len());
            probs[row].copy_from_slice(&d);
        }
    }
    TransitionKernel::new(space.clone(), probs).unwrap()
}

/// Policy with strictly positive action probabilities.
pub fn random_policy<R: Rng>(rng: &mut R, space: &Arc<StateSpace>) -> Policy {
    let na = space.num_actions();
    let mut probs = Vec::with_capacity(space.num_pairs());
    for _ in 0..space.terminal_state() {
        probs.extend(random_distribution(rng, na));
    }
    Policy::new(space.clone(), probs).unwrap()
}

/// Strictly positive valid occupancy measure.
pub fn random_occupancy<R: Rng>(rng: &mut R, space: &Arc<StateSpace>) -> OccupancyMeasure {
    occupancy_from(&random_kernel(rng, space), &random_policy(rng, space))
}

/// Random centre (a kernel) with independent widths uniform in `[0, max_width]`.
pub fn random_confidence_set<R: Rng>(rng: &mut R, space: &Arc<StateSpace>, max_width: f64) -> ConfidenceSet {
    let centre = random_kernel(rng, space);
    let widths = (0..space.num_triples()).map(|_| rng.random::<f64>() * max_width).collect();
    ConfidenceSet::from_parts(space.clone(), 2, centre.as_slice().to_vec(), widths, 0.1, 1000).unwrap()
}

/// Feasible box of one row: `[max(0, c - e), min(1, c + e)]`.
pub fn row_box(centre: &[f64], widths: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let lo = centre.iter().zip(widths).map(|(c, e)| (c - e).max(0.0)).collect();
    let hi = centre.iter().zip(widths).map(|(c, e)| (c + e).min(1.0)).collect();
    (lo, hi)
}

/// Random kernel inside `cs` (whose centre rows must be distributions): each
/// row moves from the centre towards a random distribution, stopping at a
/// uniformly random fraction of the way to the box boundary.
pub fn random_member<R: Rng>(rng: &mut R, cs: &ConfidenceSet) -> TransitionKernel {
    let space = cs.space();
    loop {
        let mut probs = cs.p_bar().to_vec();
        for x in 0..space.terminal_state() {
            for a in 0..space.num_actions() {
                let row = space.row(x, a);
                let c = cs.p_bar_row(x, a);
                let (lo, hi) = row_box(c, cs.width_row(x, a));
                let target = random_distribution(rng, row.len());
                let mut reach = 1.0f64;
                for j in 0..c.len() {
                    let d = target[j] - c[j];
                    if d > 0.0 {
                        reach = reach.min((hi[j] - c[j]) / d);
                    } else if d < 0.0 {
                        reach = reach.min((lo[j] - c[j]) / d);
                    }
                }
                let lambda = reach.max(0.0) * rng.random::<f64>();
                let mut p: Vec<f64> = c.iter().zip(&target).map(|(c, t)| c + lambda * (t - c)).collect();
                fix_sum(&mut p);
                probs[row].copy_from_slice(&p);
            }
        }
        if let Ok(k) = TransitionKernel::new(space.clone(), probs) {
            if cs.contains(&k) {
                return k;
            }
        }
    }
}
