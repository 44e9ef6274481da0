//! Mirror-descent update over occupancy measures.
//!
//! The update is split into a multiplicative step
//! `q~(x,a,x') = q(x,a,x') exp(-eta l(x,a))` and an unnormalised-KL projection
//! of `q~` onto the occupancy measures whose induced kernel lies in a
//! confidence set. The projection is solved through its dual
//!
//! ```text
//! min_{mu >= 0, beta}  F(mu, beta) = sum_k ln Z_k(mu, beta)
//! Z_k = sum_{(x,a,x') in layer k} q~(x,a,x') exp(B(x,a,x'))
//! B(x,a,x') = beta(x') - beta(x) + (mu- - mu+)(x,a,x')
//!           + sum_y mu+(x,a,y) (P(y|x,a) + eps) - mu-(x,a,y) (P(y|x,a) - eps)
//! ```
//!
//! with `beta(x_0) = beta(x_L) = 0`, and the primal is recovered as
//! `q(x,a,x') = q~(x,a,x') exp(B(x,a,x')) / Z_k`. The gradient of `F` is the
//! vector of constraint residuals of the recovered primal, so a stationary
//! point of the dual is a feasible, optimal projection.

use alloc::vec;
use alloc::vec::Vec;

use crate::confidence::ConfidenceSet;
use crate::error::{structure, Result};
use crate::math;
use crate::mdp::{OccupancyMeasure, StateSpace};

/// Solver settings for [`project`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionOptions {
    pub max_iters: usize,
    /// Absolute tolerance on every linear constraint residual.
    pub tol_feas: f64,
    /// Stop once the projected dual gradient is this small in sup-norm.
    pub grad_tol: f64,
    /// Stop once feasible and the complementary-slackness gap is this small.
    pub gap_tol: f64,
    /// Reuse the previous dual solution within an epoch.
    pub warm_start: bool,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            tol_feas: 1e-6,
            grad_tol: 1e-8,
            gap_tol: 1e-9,
            warm_start: true,
        }
    }
}

/// Dual variables: `beta` per state (zero at the first and last state) and
/// `mu_plus`, `mu_minus` per triple (nonnegative).
#[derive(Debug, Clone, PartialEq)]
pub struct DualVariables {
    pub beta: Vec<f64>,
    pub mu_plus: Vec<f64>,
    pub mu_minus: Vec<f64>,
}

impl DualVariables {
    pub fn zeros(space: &StateSpace) -> Self {
        Self {
            beta: vec![0.0; space.num_states()],
            mu_plus: vec![0.0; space.num_triples()],
            mu_minus: vec![0.0; space.num_triples()],
        }
    }

    fn from_flat(space: &StateSpace, theta: &[f64]) -> Self {
        let (ns, nt) = (space.num_states(), space.num_triples());
        Self {
            beta: theta[..ns].to_vec(),
            mu_plus: theta[ns..ns + nt].to_vec(),
            mu_minus: theta[ns + nt..].to_vec(),
        }
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut theta = self.beta.clone();
        theta.extend_from_slice(&self.mu_plus);
        theta.extend_from_slice(&self.mu_minus);
        theta
    }
}

/// Outcome of one projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionReport {
    pub iterations: usize,
    /// `sum_k ln Z_k` at the returned dual point.
    pub dual_objective: f64,
    /// Largest residual of flow conservation or of a transition bound.
    pub max_violation: f64,
    /// `D(q || q~)` minus the dual value `sum q~ - L - F`.
    pub duality_gap: f64,
    pub converged: bool,
}

/// `q~(x,a,x') = q(x,a,x') exp(-eta l(x,a))` with `l` indexed by pair.
pub fn unconstrained_step(q: &OccupancyMeasure, loss_estimate: &[f64], eta: f64) -> Vec<f64> {
    let space = q.space();
    let mut out = q.as_slice().to_vec();
    for x in 0..space.terminal_state() {
        for a in 0..space.num_actions() {
            let l = loss_estimate[space.pair_index(x, a)];
            if l != 0.0 {
                let scale = math::exp(-eta * l);
                out[space.row(x, a)].iter_mut().for_each(|v| *v *= scale);
            }
        }
    }
    out
}

/// Unnormalised KL divergence `sum q ln(q / q') - sum (q - q')`, with
/// `0 ln 0 = 0` and `+inf` when `q > 0` where `q' = 0`.
pub fn kl_divergence(q: &[f64], q_prime: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&a, &b) in q.iter().zip(q_prime) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            total += a * math::ln(a / b);
        }
        total -= a - b;
    }
    total
}

/// Dual problem data for one projection.
struct DualProblem<'a> {
    space: &'a StateSpace,
    log_base: Vec<f64>,
    upper: Vec<f64>,
    lower: Vec<f64>,
    /// Which coordinates of the flat dual vector may move.
    free: Vec<bool>,
    /// Which free coordinates are bounded below by zero.
    bounded: Vec<bool>,
}

struct Evaluation {
    value: f64,
    grad: Vec<f64>,
    q: Vec<f64>,
    shifted: Vec<f64>,
    row_mass: Vec<f64>,
}

impl<'a> DualProblem<'a> {
    fn new(space: &'a StateSpace, log_base: Vec<f64>, cs: &ConfidenceSet) -> Self {
        let (ns, nt) = (space.num_states(), space.num_triples());
        let upper: Vec<f64> = cs.p_bar().iter().zip(cs.widths()).map(|(p, e)| p + e).collect();
        let lower: Vec<f64> = cs.p_bar().iter().zip(cs.widths()).map(|(p, e)| p - e).collect();
        let mut free = vec![false; ns + 2 * nt];
        let mut bounded = vec![false; ns + 2 * nt];
        for k in 1..space.horizon() {
            for x in space.layer(k) {
                free[x] = true;
            }
        }
        for t in 0..nt {
            // q <= Q and q >= 0 always hold, so these bounds never bind
            free[ns + t] = upper[t] < 1.0;
            free[ns + nt + t] = lower[t] > 0.0;
            bounded[ns + t] = true;
            bounded[ns + nt + t] = true;
        }
        Self {
            space,
            log_base,
            upper,
            lower,
            free,
            bounded,
        }
    }

    fn dim(&self) -> usize {
        self.free.len()
    }

    fn new_evaluation(&self) -> Evaluation {
        Evaluation {
            value: 0.0,
            grad: vec![0.0; self.dim()],
            q: vec![0.0; self.space.num_triples()],
            shifted: vec![0.0; self.space.num_triples()],
            row_mass: vec![0.0; self.space.num_pairs()],
        }
    }

    /// Objective, gradient and recovered primal at `theta`.
    fn evaluate(&self, theta: &[f64], ev: &mut Evaluation) {
        let space = self.space;
        let (ns, nt) = (space.num_states(), space.num_triples());
        let beta = &theta[..ns];
        let mu_plus = &theta[ns..ns + nt];
        let mu_minus = &theta[ns + nt..];
        for x in 0..space.terminal_state() {
            let next_start = space.layer(space.layer_of(x) + 1).start;
            for a in 0..space.num_actions() {
                let row = space.row(x, a);
                let mut c = 0.0;
                for t in row.clone() {
                    c += mu_plus[t] * self.upper[t] - mu_minus[t] * self.lower[t];
                }
                for (j, t) in row.enumerate() {
                    ev.shifted[t] = self.log_base[t] + beta[next_start + j] - beta[x]
                        + mu_minus[t]
                        - mu_plus[t]
                        + c;
                }
            }
        }
        ev.value = 0.0;
        for k in 0..space.horizon() {
            let range = space.layer_triples(k);
            let lse = math::log_sum_exp(&ev.shifted[range.clone()]);
            ev.value += lse;
            for t in range {
                ev.q[t] = math::exp(ev.shifted[t] - lse);
            }
        }
        ev.grad.fill(0.0);
        for x in 0..space.terminal_state() {
            let next_start = space.layer(space.layer_of(x) + 1).start;
            for a in 0..space.num_actions() {
                let row = space.row(x, a);
                let mass: f64 = ev.q[row.clone()].iter().sum();
                ev.row_mass[space.pair_index(x, a)] = mass;
                for (j, t) in row.enumerate() {
                    let q = ev.q[t];
                    // d/d beta: inflow - outflow
                    ev.grad[next_start + j] += q;
                    ev.grad[x] -= q;
                    ev.grad[ns + t] = self.upper[t] * mass - q;
                    ev.grad[ns + nt + t] = q - self.lower[t] * mass;
                }
            }
        }
        ev.grad[0] = 0.0;
        ev.grad[space.terminal_state()] = 0.0;
    }

    /// Largest residual among the binding constraints (flow and active
    /// transition bounds).
    fn max_violation(&self, ev: &Evaluation) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim() {
            if !self.free[i] {
                continue;
            }
            let g = ev.grad[i];
            worst = worst.max(if self.bounded[i] { -g } else { g.abs() });
        }
        worst
    }

    fn projected_grad_norm(&self, theta: &[f64], grad: &[f64]) -> f64 {
        let mut norm: f64 = 0.0;
        for i in 0..self.dim() {
            if !self.free[i] {
                continue;
            }
            let step = if self.bounded[i] {
                theta[i] - (theta[i] - grad[i]).max(0.0)
            } else {
                grad[i]
            };
            norm = norm.max(step.abs());
        }
        norm
    }

    fn complementarity(&self, theta: &[f64], grad: &[f64]) -> f64 {
        theta.iter().zip(grad).map(|(t, g)| t * g).sum()
    }
}

/// Dual objective `sum_k ln Z_k` and its gradient for the projection of
/// `q~ = q exp(-eta l)` onto the occupancy polytope of `cs`.
///
/// The gradient has the same layout as the dual variables; entries for
/// `beta(x_0)` and `beta(x_L)` are zero.
pub fn dual_objective(
    duals: &DualVariables,
    q_hat: &OccupancyMeasure,
    loss_estimate: &[f64],
    eta: f64,
    cs: &ConfidenceSet,
) -> Result<(f64, DualVariables)> {
    let space = &**q_hat.space();
    let base = unconstrained_step(q_hat, loss_estimate, eta);
    let problem = DualProblem::new(space, log_weights(&base)?, cs);
    let theta = duals.to_flat();
    if theta.len() != problem.dim() {
        return Err(structure("dual variables do not match the state space"));
    }
    let mut ev = problem.new_evaluation();
    problem.evaluate(&theta, &mut ev);
    // report the full gradient, including coordinates of vacuous bounds
    Ok((ev.value, DualVariables::from_flat(space, &ev.grad)))
}

fn log_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = weights.iter().position(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(structure(alloc::format!(
            "projection input must be strictly positive (entry {i} = {})",
            weights[i]
        )));
    }
    Ok(weights.iter().map(|&w| math::ln(w)).collect())
}

/// KL projection of the positive triple weights `q_tilde` onto the occupancy
/// measures consistent with `cs`.
///
/// Returns the projected measure, a report and the dual solution (for warm
/// starts). Running out of iterations is reported through
/// `ProjectionReport::converged`, not as an error.
pub fn project(
    q_tilde: &[f64],
    cs: &ConfidenceSet,
    opts: &ProjectionOptions,
    warm_start: Option<&DualVariables>,
) -> Result<(OccupancyMeasure, ProjectionReport, DualVariables)> {
    let space = &**cs.space();
    if q_tilde.len() != space.num_triples() {
        return Err(structure("projection input does not match the state space"));
    }
    let problem = DualProblem::new(space, log_weights(q_tilde)?, cs);
    let n = problem.dim();
    let mut theta = match warm_start {
        Some(d) => {
            let t = d.to_flat();
            if t.len() != n {
                return Err(structure("warm start does not match the state space"));
            }
            t
        }
        None => vec![0.0; n],
    };
    for ((t, &free), &bounded) in theta.iter_mut().zip(&problem.free).zip(&problem.bounded) {
        if !free {
            *t = 0.0;
        } else if bounded {
            *t = t.max(0.0);
        }
    }

    let mut ev = problem.new_evaluation();
    let mut trial = problem.new_evaluation();
    problem.evaluate(&theta, &mut ev);
    let mut candidate = theta.clone();
    let mut prev_theta = theta.clone();
    let mut prev_grad = ev.grad.clone();
    let mut step = 1.0;
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let violation = problem.max_violation(&ev);
        let pg = problem.projected_grad_norm(&theta, &ev.grad);
        let gap = problem.complementarity(&theta, &ev.grad).abs();
        if pg <= opts.grad_tol
            || (violation <= 0.5 * opts.tol_feas && gap <= opts.gap_tol)
        {
            converged = violation <= opts.tol_feas;
            break;
        }
        if iterations >= opts.max_iters {
            break;
        }
        iterations += 1;

        // Barzilai-Borwein trial step after the first iteration
        if iterations > 1 {
            let mut ss = 0.0;
            let mut sy = 0.0;
            for i in 0..n {
                if problem.free[i] {
                    let s = theta[i] - prev_theta[i];
                    ss += s * s;
                    sy += s * (ev.grad[i] - prev_grad[i]);
                }
            }
            step = if sy > 0.0 { (ss / sy).clamp(1e-10, 1e10) } else { 1.0 };
        }
        prev_theta.copy_from_slice(&theta);
        prev_grad.copy_from_slice(&ev.grad);

        // Armijo backtracking along the projected path
        let mut accepted = false;
        for _ in 0..60 {
            let mut descent = 0.0;
            for i in 0..n {
                candidate[i] = if !problem.free[i] {
                    0.0
                } else {
                    let c = theta[i] - step * ev.grad[i];
                    if problem.bounded[i] {
                        c.max(0.0)
                    } else {
                        c
                    }
                };
                descent += ev.grad[i] * (candidate[i] - theta[i]);
            }
            problem.evaluate(&candidate, &mut trial);
            if trial.value <= ev.value + 1e-4 * descent {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no further decrease is representable in floating point
            converged = problem.max_violation(&ev) <= opts.tol_feas;
            break;
        }
        core::mem::swap(&mut theta, &mut candidate);
        core::mem::swap(&mut ev, &mut trial);
    }

    let max_violation = problem.max_violation(&ev);
    let q = OccupancyMeasure::from_values(cs.space().clone(), ev.q.clone())?;
    let total_base: f64 = q_tilde.iter().sum();
    let dual_value = total_base - space.horizon() as f64 - ev.value;
    let duality_gap = kl_divergence(q.as_slice(), q_tilde) - dual_value;
    let report = ProjectionReport {
        iterations,
        dual_objective: ev.value,
        max_violation,
        duality_gap,
        converged,
    };
    Ok((q, report, DualVariables::from_flat(space, &theta)))
}

/// Largest violation of flow conservation, layer normalisation or the
/// per-triple transition bounds of `cs` by `q`.
pub fn feasibility_residual(q: &OccupancyMeasure, cs: &ConfidenceSet) -> f64 {
    let space = q.space();
    let mut worst = q
        .validate(0.0)
        .iter()
        .map(|v| v.magnitude())
        .fold(0.0, f64::max);
    let values = q.as_slice();
    for x in 0..space.terminal_state() {
        for a in 0..space.num_actions() {
            let row = space.row(x, a);
            let mass: f64 = values[row.clone()].iter().sum();
            for t in row {
                let upper = (cs.p_bar()[t] + cs.widths()[t]) * mass;
                let lower = (cs.p_bar()[t] - cs.widths()[t]) * mass;
                worst = worst.max(values[t] - upper).max(lower - values[t]);
            }
        }
    }
    worst
}
