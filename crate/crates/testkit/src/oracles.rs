//! Brute-force reference solutions.

use uob_reps_core::confidence::ConfidenceSet;
use uob_reps_core::mdp::{occupancy_from, Policy, StateSpace, TransitionKernel};

use crate::instances::row_box;

/// `max <f, p>` over distributions `p` with `lo <= p <= hi`, by enumerating
/// every vertex: all coordinates but one sit at a bound and the remaining
/// one absorbs the slack.
pub fn box_simplex_max(f: &[f64], lo: &[f64], hi: &[f64]) -> Option<f64> {
    let n = f.len();
    let mut best: Option<f64> = None;
    for free in 0..n {
        for mask in 0u32..(1 << (n - 1)) {
            let mut p = vec![0.0; n];
            let mut bit = 0;
            for j in 0..n {
                if j == free {
                    continue;
                }
                p[j] = if mask >> bit & 1 == 1 { hi[j] } else { lo[j] };
                bit += 1;
            }
            let rest: f64 = p.iter().sum();
            p[free] = 1.0 - rest;
            if p[free] < lo[free] - 1e-12 || p[free] > hi[free] + 1e-12 {
                continue;
            }
            let v: f64 = f.iter().zip(&p).map(|(a, b)| a * b).sum();
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
    }
    best
}

/// Best grid point of one row: all coordinates but one step from their
/// lower bound by `step` and also take their upper bound; the remaining one
/// closes the sum. Anchoring at the bounds keeps narrow boxes from
/// having no grid point at all.
pub fn grid_row_max(f: &[f64], lo: &[f64], hi: &[f64], step: f64) -> Option<(f64, Vec<f64>)> {
    let n = f.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut p = vec![0.0; n];
    #[allow(clippy::too_many_arguments)]
    fn walk(
        j: usize,
        used: f64,
        p: &mut Vec<f64>,
        f: &[f64],
        lo: &[f64],
        hi: &[f64],
        step: f64,
        best: &mut Option<(f64, Vec<f64>)>,
    ) {
        let n = f.len();
        if j == n - 1 {
            let last = 1.0 - used;
            if last < lo[j] - 1e-12 || last > hi[j] + 1e-12 {
                return;
            }
            p[j] = last.clamp(lo[j], hi[j]);
            let v: f64 = f.iter().zip(p.iter()).map(|(a, b)| a * b).sum();
            if best.as_ref().is_none_or(|b| v > b.0) {
                *best = Some((v, p.clone()));
            }
            return;
        }
        let steps = ((hi[j] - lo[j]) / step).floor() as usize;
        let points = (0..=steps).map(|k| lo[j] + k as f64 * step).chain(core::iter::once(hi[j]));
        for v in points {
            if used + v > 1.0 + 1e-12 {
                break;
            }
            p[j] = v;
            walk(j + 1, used + v, p, f, lo, hi, step, best);
        }
    }
    // close the sum on the widest box so narrow boxes are never the ones
    // that have to be hit exactly
    let last = (0..n).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
    let order: Vec<usize> = (0..n).filter(|&j| j != last).chain(core::iter::once(last)).collect();
    let pick = |v: &[f64]| order.iter().map(|&j| v[j]).collect::<Vec<f64>>();
    walk(0, 0.0, &mut p, &pick(f), &pick(lo), &pick(hi), step, &mut best);
    best.map(|(v, q)| {
        let mut out = vec![0.0; n];
        for (k, &j) in order.iter().enumerate() {
            out[j] = q[k];
        }
        (v, out)
    })
}

/// Grid-search upper occupancy bound of `(x, a)`: backward induction where
/// each row takes its best grid point (or the centre, if better). Returns
/// the value and the maximising kernel; rows the target cannot depend on
/// keep the centre.
pub fn grid_uob(policy: &Policy, x: usize, a: usize, cs: &ConfidenceSet, step: f64) -> (f64, TransitionKernel) {
    let space = cs.space();
    let mut probs = cs.p_bar().to_vec();
    let mut f = vec![0.0; space.num_states()];
    f[x] = policy.prob(x, a);
    let k = space.layer_of(x);
    for j in (0..k).rev() {
        let next = space.layer(j + 1);
        for y in space.layer(j) {
            let mut total = 0.0;
            for b in 0..space.num_actions() {
                let centre = cs.p_bar_row(y, b);
                let (lo, hi) = row_box(centre, cs.width_row(y, b));
                let fn_ = &f[next.clone()];
                let centre_value: f64 = centre.iter().zip(fn_).map(|(p, v)| p * v).sum();
                let (v, p) = match grid_row_max(fn_, &lo, &hi, step) {
                    Some((v, p)) if v > centre_value => (v, p),
                    _ => (centre_value, centre.to_vec()),
                };
                probs[space.row(y, b)].copy_from_slice(&p);
                total += policy.prob(y, b) * v;
            }
            f[y] = total;
        }
    }
    let kernel = TransitionKernel::new(space.clone(), probs).expect("grid kernel rows are distributions");
    (f[space.initial_state()], kernel)
}

/// Expected cumulative loss of the best deterministic policy, by trying
/// every action assignment.
pub fn brute_force_best(kernel: &TransitionKernel, cumulative: &[f64]) -> f64 {
    let space = kernel.space();
    let states = space.terminal_state();
    let na = space.num_actions();
    let mut actions = vec![0usize; states];
    let mut best = f64::INFINITY;
    loop {
        let pi = Policy::deterministic(space.clone(), &actions).unwrap();
        let q = occupancy_from(kernel, &pi).marginal_xa();
        let v: f64 = q.iter().zip(cumulative).map(|(a, b)| a * b).sum();
        best = best.min(v);
        // odometer increment
        let mut i = 0;
        while i < states {
            actions[i] += 1;
            if actions[i] < na {
                break;
            }
            actions[i] = 0;
            i += 1;
        }
        if i == states {
            return best;
        }
    }
}

/// Unnormalised KL divergence written out term by term.
pub fn divergence(q: &[f64], base: &[f64]) -> f64 {
    q.iter()
        .zip(base)
        .map(|(&a, &b)| if a > 0.0 { a * (a / b).ln() - a + b } else { b })
        .sum()
}

/// Layer sizes of the one-dimensional projection instance.
pub const TINY_LAYERS: [usize; 3] = [1, 2, 1];

/// On the `[1, 2, 1]`, single-action space every occupancy measure is
/// `(p, 1 - p, p, 1 - p)`.
pub fn tiny_measure(p: f64) -> [f64; 4] {
    [p, 1.0 - p, p, 1.0 - p]
}

/// Interval of `p` allowed by the transition bounds of the first row.
pub fn tiny_interval(cs: &ConfidenceSet) -> (f64, f64) {
    let (lo, hi) = row_box(cs.p_bar_row(0, 0), cs.width_row(0, 0));
    (lo[0].max(1.0 - hi[1]).max(0.0), hi[0].min(1.0 - lo[1]).min(1.0))
}

/// Smallest divergence over the grid `lo, lo + step, ...` plus `hi`.
pub fn tiny_grid_min(base: &[f64], cs: &ConfidenceSet, step: f64) -> f64 {
    let (lo, hi) = tiny_interval(cs);
    let mut best = divergence(&tiny_measure(hi), base);
    let mut p = lo;
    while p < hi {
        best = best.min(divergence(&tiny_measure(p), base));
        p += step;
    }
    best
}

/// Golden-section minimisation of the (convex) divergence over the interval.
pub fn tiny_primal_min(base: &[f64], cs: &ConfidenceSet) -> (f64, f64) {
    let (mut a, mut b) = tiny_interval(cs);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let obj = |p: f64| divergence(&tiny_measure(p), base);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (obj(c), obj(d));
    for _ in 0..200 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = obj(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = obj(d);
        }
    }
    let mut best = ((a + b) / 2.0, obj((a + b) / 2.0));
    let (lo, hi) = tiny_interval(cs);
    for p in [lo, hi] {
        let v = obj(p);
        if v < best.1 {
            best = (p, v);
        }
    }
    best
}

/// KL projection onto the occupancy polytope with no transition bounds, by
/// cyclic Bregman projections onto each layer normalisation and each flow
/// equality (both have closed forms).
pub fn flow_projection(space: &StateSpace, base: &[f64], tol: f64) -> Vec<f64> {
    let mut q = base.to_vec();
    let na = space.num_actions();
    let inflow_triples = |x: usize| -> Vec<usize> {
        let k = space.layer_of(x);
        let j = x - space.layer(k).start;
        let mut out = Vec::new();
        for y in space.layer(k - 1) {
            for a in 0..na {
                out.push(space.row(y, a).start + j);
            }
        }
        out
    };
    let states: Vec<(usize, Vec<usize>, std::ops::Range<usize>)> = (1..space.horizon())
        .flat_map(|k| space.layer(k))
        .map(|x| (x, inflow_triples(x), space.state_block(x)))
        .collect();
    for _ in 0..1_000_000 {
        for k in 0..space.horizon() {
            let r = space.layer_triples(k);
            let s: f64 = q[r.clone()].iter().sum();
            q[r].iter_mut().for_each(|v| *v /= s);
        }
        let mut worst: f64 = 0.0;
        for (_, ins, out) in &states {
            let i: f64 = ins.iter().map(|&t| q[t]).sum();
            let o: f64 = q[out.clone()].iter().sum();
            worst = worst.max((i - o).abs());
            let s = (i / o).sqrt();
            ins.iter().for_each(|&t| q[t] /= s);
            q[out.clone()].iter_mut().for_each(|v| *v *= s);
        }
        let layer_err = (0..space.horizon())
            .map(|k| (q[space.layer_triples(k)].iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max);
        if worst < tol && layer_err < tol {
            break;
        }
    }
    q
}
