//! Layered (loop-free) MDP data model and occupancy-measure algebra.
//!
//! States are dense ids `0..n` ordered by layer, so layer `k` is a contiguous
//! id range. The initial state is `0` and the terminal state is `n - 1`.
//! Functions over triples `(x, a, x')` with `x` in layer `k` and `x'` in layer
//! `k + 1` are stored densely, one block per layer of shape
//! `|X_k| * |A| * |X_{k+1}|`, with `x'` varying fastest. Functions over pairs
//! `(x, a)` skip the terminal state and are indexed by `x * |A| + a`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{structure, Result};

/// Row sums of kernels and policies must be within this of one.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Default tolerance of [`OccupancyMeasure::validate`].
pub const OCCUPANCY_TOL: f64 = 1e-9;

/// Layer structure of a loop-free MDP together with its action count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    layer_sizes: Vec<usize>,
    layer_start: Vec<usize>,
    layer_of: Vec<usize>,
    triple_start: Vec<usize>,
    num_actions: usize,
}

impl StateSpace {
    /// Builds a space from layer sizes `|X_0|, ..., |X_L|`.
    ///
    /// The first and last layers must be singletons and `L >= 1`.
    pub fn new(layer_sizes: Vec<usize>, num_actions: usize) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(structure("a layered MDP needs at least two layers"));
        }
        if layer_sizes[0] != 1 || layer_sizes[layer_sizes.len() - 1] != 1 {
            return Err(structure("first and last layers must contain exactly one state"));
        }
        if let Some(k) = layer_sizes.iter().position(|&n| n == 0) {
            return Err(structure(alloc::format!("layer {k} is empty")));
        }
        if num_actions == 0 {
            return Err(structure("action space is empty"));
        }
        let mut layer_start = Vec::with_capacity(layer_sizes.len() + 1);
        let mut layer_of = Vec::new();
        let mut acc = 0;
        for (k, &n) in layer_sizes.iter().enumerate() {
            layer_start.push(acc);
            layer_of.extend(core::iter::repeat_n(k, n));
            acc += n;
        }
        layer_start.push(acc);
        let mut triple_start = Vec::with_capacity(layer_sizes.len());
        let mut acc = 0;
        for k in 0..layer_sizes.len() - 1 {
            triple_start.push(acc);
            acc += layer_sizes[k] * num_actions * layer_sizes[k + 1];
        }
        triple_start.push(acc);
        Ok(Self {
            layer_sizes,
            layer_start,
            layer_of,
            triple_start,
            num_actions,
        })
    }

    /// Horizon `L` (number of layers minus one).
    pub fn horizon(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn num_states(&self) -> usize {
        self.layer_of.len()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn layer_size(&self, k: usize) -> usize {
        self.layer_sizes[k]
    }

    /// State ids of layer `k`.
    pub fn layer(&self, k: usize) -> Range<usize> {
        self.layer_start[k]..self.layer_start[k + 1]
    }

    /// Layer index `k(x)`.
    pub fn layer_of(&self, x: usize) -> usize {
        self.layer_of[x]
    }

    pub fn initial_state(&self) -> usize {
        0
    }

    pub fn terminal_state(&self) -> usize {
        self.num_states() - 1
    }

    /// Number of `(x, a)` pairs with `x` non-terminal.
    pub fn num_pairs(&self) -> usize {
        (self.num_states() - 1) * self.num_actions
    }

    #[inline]
    pub fn pair_index(&self, x: usize, a: usize) -> usize {
        x * self.num_actions + a
    }

    pub fn num_triples(&self) -> usize {
        self.triple_start[self.horizon()]
    }

    /// Triple indices belonging to layer `k`.
    pub fn layer_triples(&self, k: usize) -> Range<usize> {
        self.triple_start[k]..self.triple_start[k + 1]
    }

    /// Triple indices of the row `(x, a, ·)`, ordered like `layer(k(x) + 1)`.
    #[inline]
    pub fn row(&self, x: usize, a: usize) -> Range<usize> {
        let k = self.layer_of[x];
        let next = self.layer_sizes[k + 1];
        let local = x - self.layer_start[k];
        let start = self.triple_start[k] + (local * self.num_actions + a) * next;
        start..start + next
    }

    /// Triple indices of all rows `(x, ·, ·)`.
    #[inline]
    pub fn state_block(&self, x: usize) -> Range<usize> {
        let k = self.layer_of[x];
        let next = self.layer_sizes[k + 1];
        let local = x - self.layer_start[k];
        let width = self.num_actions * next;
        let start = self.triple_start[k] + local * width;
        start..start + width
    }

    /// Index of `(x, a, x')`, or `None` if the triple is not between
    /// consecutive layers.
    pub fn triple_index(&self, x: usize, a: usize, next: usize) -> Option<usize> {
        if x >= self.num_states() || next >= self.num_states() || a >= self.num_actions {
            return None;
        }
        let k = self.layer_of[x];
        if k == self.horizon() || self.layer_of[next] != k + 1 {
            return None;
        }
        Some(self.row(x, a).start + (next - self.layer_start[k + 1]))
    }

    /// Decodes a triple index into `(x, a, x')`.
    pub fn triple(&self, index: usize) -> (usize, usize, usize) {
        let k = match self.triple_start.binary_search(&index) {
            Ok(k) => k,
            Err(k) => k - 1,
        };
        let next = self.layer_sizes[k + 1];
        let local = index - self.triple_start[k];
        let x_local = local / (self.num_actions * next);
        let rem = local % (self.num_actions * next);
        (
            self.layer_start[k] + x_local,
            rem / next,
            self.layer_start[k + 1] + rem % next,
        )
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(structure(alloc::format!(
            "{what} has {got} entries, expected {want}"
        )));
    }
    Ok(())
}

fn check_unit_interval(what: &str, values: &[f64]) -> Result<()> {
    if let Some(i) = values
        .iter()
        .position(|v| !(0.0..=1.0).contains(v) || v.is_nan())
    {
        return Err(structure(alloc::format!(
            "{what} entry {i} = {} is outside [0, 1]",
            values[i]
        )));
    }
    Ok(())
}

/// Transition kernel `P(x'|x, a)` over consecutive-layer triples.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    space: Arc<StateSpace>,
    probs: Vec<f64>,
}

impl TransitionKernel {
    /// Validates entries in `[0, 1]` and rows summing to one.
    pub fn new(space: Arc<StateSpace>, probs: Vec<f64>) -> Result<Self> {
        check_len("transition kernel", probs.len(), space.num_triples())?;
        check_unit_interval("transition kernel", &probs)?;
        for x in 0..space.terminal_state() {
            for a in 0..space.num_actions() {
                let sum: f64 = probs[space.row(x, a)].iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(structure(alloc::format!(
                        "transition row (state {x}, action {a}) sums to {sum}"
                    )));
                }
            }
        }
        Ok(Self { space, probs })
    }

    /// Uniform rows over the next layer.
    pub fn uniform(space: Arc<StateSpace>) -> Self {
        let mut probs = vec![0.0; space.num_triples()];
        for k in 0..space.horizon() {
            let p = 1.0 / space.layer_size(k + 1) as f64;
            probs[space.layer_triples(k)].fill(p);
        }
        Self { space, probs }
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn prob(&self, x: usize, a: usize, next: usize) -> f64 {
        self.space
            .triple_index(x, a, next)
            .map_or(0.0, |i| self.probs[i])
    }

    /// `P(·|x, a)` ordered like the next layer.
    pub fn row(&self, x: usize, a: usize) -> &[f64] {
        &self.probs[self.space.row(x, a)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }
}

/// Stochastic policy `pi(a|x)` for every non-terminal state.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    space: Arc<StateSpace>,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(space: Arc<StateSpace>, probs: Vec<f64>) -> Result<Self> {
        check_len("policy", probs.len(), space.num_pairs())?;
        check_unit_interval("policy", &probs)?;
        let na = space.num_actions();
        for (x, row) in probs.chunks(na).enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(structure(alloc::format!(
                    "policy row for state {x} sums to {sum}"
                )));
            }
        }
        Ok(Self { space, probs })
    }

    pub fn uniform(space: Arc<StateSpace>) -> Self {
        let p = 1.0 / space.num_actions() as f64;
        let probs = vec![p; space.num_pairs()];
        Self { space, probs }
    }

    /// Deterministic policy taking `actions[x]` in state `x`.
    pub fn deterministic(space: Arc<StateSpace>, actions: &[usize]) -> Result<Self> {
        check_len("action assignment", actions.len(), space.terminal_state())?;
        let na = space.num_actions();
        let mut probs = vec![0.0; space.num_pairs()];
        for (x, &a) in actions.iter().enumerate() {
            if a >= na {
                return Err(structure(alloc::format!("action {a} out of range")));
            }
            probs[x * na + a] = 1.0;
        }
        Ok(Self { space, probs })
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn prob(&self, x: usize, a: usize) -> f64 {
        self.probs[self.space.pair_index(x, a)]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        let na = self.space.num_actions();
        &self.probs[x * na..(x + 1) * na]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }
}

/// Loss function `l_t(x, a)` of one episode, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMatrix {
    episode: usize,
    values: Vec<f64>,
}

impl LossMatrix {
    pub fn new(space: &StateSpace, episode: usize, values: Vec<f64>) -> Result<Self> {
        check_len("loss matrix", values.len(), space.num_pairs())?;
        check_unit_interval("loss matrix", &values)?;
        Ok(Self { episode, values })
    }

    pub fn constant(space: &StateSpace, episode: usize, value: f64) -> Result<Self> {
        Self::new(space, episode, vec![value; space.num_pairs()])
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, space: &StateSpace, x: usize, a: usize) -> f64 {
        self.values[space.pair_index(x, a)]
    }
}

/// One step of an episode: state, chosen action and the observed loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub loss: f64,
}

/// The `L` steps of one episode. `steps[k].state` lies in layer `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub episode: usize,
    pub steps: Vec<Step>,
    /// The state reached after the last step (always the terminal state).
    pub terminal: usize,
}

impl Trajectory {
    /// Visited `(x_k, a_k, x_{k+1})` triples in layer order.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.steps.iter().enumerate().map(move |(k, s)| {
            let next = self
                .steps
                .get(k + 1)
                .map_or(self.terminal, |n| n.state);
            (s.state, s.action, next)
        })
    }

    /// Total realised loss of the episode.
    pub fn total_loss(&self) -> f64 {
        self.steps.iter().map(|s| s.loss).sum()
    }
}

/// A residual found by [`OccupancyMeasure::validate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Violation {
    /// Layer `k` does not carry unit mass; `residual = mass - 1`.
    LayerMass { layer: usize, residual: f64 },
    /// Inflow and outflow of `state` differ; `residual = outflow - inflow`.
    Flow { state: usize, residual: f64 },
    /// A negative entry at triple index `index`.
    Negative { index: usize, value: f64 },
}

impl Violation {
    pub fn magnitude(&self) -> f64 {
        match *self {
            Violation::LayerMass { residual, .. } | Violation::Flow { residual, .. } => {
                residual.abs()
            }
            Violation::Negative { value, .. } => -value,
        }
    }
}

/// Occupancy measure `q(x, a, x')`.
///
/// Construction does not validate; use [`OccupancyMeasure::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    space: Arc<StateSpace>,
    values: Vec<f64>,
}

impl OccupancyMeasure {
    pub fn from_values(space: Arc<StateSpace>, values: Vec<f64>) -> Result<Self> {
        check_len("occupancy measure", values.len(), space.num_triples())?;
        Ok(Self { space, values })
    }

    /// `1 / (|X_k| |A| |X_{k+1}|)` on every triple of layer `k`.
    pub fn uniform(space: Arc<StateSpace>) -> Self {
        let mut values = vec![0.0; space.num_triples()];
        for k in 0..space.horizon() {
            let range = space.layer_triples(k);
            let v = 1.0 / range.len() as f64;
            values[range].fill(v);
        }
        Self { space, values }
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, x: usize, a: usize, next: usize) -> f64 {
        self.space
            .triple_index(x, a, next)
            .map_or(0.0, |i| self.values[i])
    }

    /// Lists every violated layer-normalisation, flow-conservation or
    /// non-negativity constraint beyond `tol`.
    pub fn validate(&self, tol: f64) -> Vec<Violation> {
        let space = &*self.space;
        let mut out = Vec::new();
        for (index, &value) in self.values.iter().enumerate() {
            if value < -tol || value.is_nan() {
                out.push(Violation::Negative { index, value });
            }
        }
        for k in 0..space.horizon() {
            let mass: f64 = self.values[space.layer_triples(k)].iter().sum();
            if (mass - 1.0).abs() > tol || mass.is_nan() {
                out.push(Violation::LayerMass {
                    layer: k,
                    residual: mass - 1.0,
                });
            }
        }
        let inflow = self.inflow();
        for k in 1..space.horizon() {
            for x in space.layer(k) {
                let outflow: f64 = self.values[space.state_block(x)].iter().sum();
                let residual = outflow - inflow[x];
                if residual.abs() > tol || residual.is_nan() {
                    out.push(Violation::Flow { state: x, residual });
                }
            }
        }
        out
    }

    /// `sum_{x_prev, a} q(x_prev, a, x)` for every state.
    pub fn inflow(&self) -> Vec<f64> {
        let space = &*self.space;
        let mut inflow = vec![0.0; space.num_states()];
        for k in 0..space.horizon() {
            let next = space.layer(k + 1);
            for (i, &v) in self.values[space.layer_triples(k)].iter().enumerate() {
                inflow[next.start + i % next.len()] += v;
            }
        }
        inflow
    }

    /// `q(x, a) = sum_{x'} q(x, a, x')`, indexed by pair.
    pub fn marginal_xa(&self) -> Vec<f64> {
        let space = &*self.space;
        let mut out = vec![0.0; space.num_pairs()];
        for x in 0..space.terminal_state() {
            for a in 0..space.num_actions() {
                out[space.pair_index(x, a)] = self.values[space.row(x, a)].iter().sum();
            }
        }
        out
    }

    /// `q(x) = sum_a q(x, a)` for every non-terminal state.
    pub fn marginal_x(&self) -> Vec<f64> {
        let space = &*self.space;
        (0..space.terminal_state())
            .map(|x| self.values[space.state_block(x)].iter().sum())
            .collect()
    }

    /// `<q, l> = sum_{x, a} q(x, a) l(x, a)`.
    pub fn inner_product(&self, losses: &LossMatrix) -> f64 {
        self.dot_pairs(losses.as_slice())
    }

    /// Inner product with an arbitrary pair-indexed vector.
    pub fn dot_pairs(&self, pair_values: &[f64]) -> f64 {
        let space = &*self.space;
        let mut total = 0.0;
        for x in 0..space.terminal_state() {
            for a in 0..space.num_actions() {
                let v = pair_values[space.pair_index(x, a)];
                if v != 0.0 {
                    total += v * self.values[space.row(x, a)].iter().sum::<f64>();
                }
            }
        }
        total
    }

    /// `P^q(x'|x, a) = q(x, a, x') / sum_y q(x, a, y)`; uniform rows where the
    /// denominator vanishes.
    pub fn induced_transition(&self) -> TransitionKernel {
        let space = &*self.space;
        let mut probs = vec![0.0; space.num_triples()];
        for x in 0..space.terminal_state() {
            for a in 0..space.num_actions() {
                let range = space.row(x, a);
                let row = &self.values[range.clone()];
                let sum: f64 = row.iter().sum();
                let out = &mut probs[range];
                if sum > 0.0 {
                    for (o, &v) in out.iter_mut().zip(row) {
                        *o = v / sum;
                    }
                } else {
                    out.fill(1.0 / row.len() as f64);
                }
            }
        }
        TransitionKernel {
            space: self.space.clone(),
            probs,
        }
    }

    /// `pi^q(a|x) = q(x, a) / q(x)`; uniform where `q(x) = 0`.
    pub fn induced_policy(&self) -> Policy {
        let space = &*self.space;
        let na = space.num_actions();
        let mut probs = vec![0.0; space.num_pairs()];
        for x in 0..space.terminal_state() {
            let out = &mut probs[x * na..(x + 1) * na];
            for (a, o) in out.iter_mut().enumerate() {
                *o = self.values[space.row(x, a)].iter().sum();
            }
            let total: f64 = out.iter().sum();
            if total > 0.0 {
                out.iter_mut().for_each(|o| *o /= total);
            } else {
                out.fill(1.0 / na as f64);
            }
        }
        Policy {
            space: self.space.clone(),
            probs,
        }
    }
}

/// Forward occupancy recursion `q(x, a, x') = reach(x) pi(a|x) P(x'|x, a)`.
pub fn occupancy_from(kernel: &TransitionKernel, policy: &Policy) -> OccupancyMeasure {
    let space = kernel.space().clone();
    let mut values = vec![0.0; space.num_triples()];
    let mut reach = vec![0.0; space.num_states()];
    reach[space.initial_state()] = 1.0;
    for k in 0..space.horizon() {
        let next_layer = space.layer(k + 1);
        for x in space.layer(k) {
            let rx = reach[x];
            if rx == 0.0 {
                continue;
            }
            for a in 0..space.num_actions() {
                let w = rx * policy.prob(x, a);
                let range = space.row(x, a);
                for (j, i) in range.enumerate() {
                    let v = w * kernel.probs[i];
                    values[i] = v;
                    reach[next_layer.start + j] += v;
                }
            }
        }
    }
    OccupancyMeasure { space, values }
}
