//! Visit counters, the doubling-epoch schedule and per-triple Bernstein
//! confidence sets for the transition kernel.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{structure, Result};
use crate::math;
use crate::mdp::{StateSpace, TransitionKernel, Trajectory};

/// `ln(T |X| |A| / delta)`, the logarithmic factor shared by every width.
pub fn log_factor(space: &StateSpace, delta: f64, episodes: usize) -> f64 {
    let scale = episodes as f64 * space.num_states() as f64 * space.num_actions() as f64;
    math::ln(scale / delta)
}

/// Bernstein width for one triple before clipping:
/// `2 sqrt(p ln / max(1, N - 1)) + 14 ln / (3 max(1, N - 1))`.
pub fn raw_width(p_bar: f64, visits: u64, log_factor: f64) -> f64 {
    let denom = visits.saturating_sub(1).max(1) as f64;
    2.0 * math::sqrt(p_bar * log_factor / denom) + 14.0 * log_factor / (3.0 * denom)
}

/// [`raw_width`] clipped to `[0, 1]`.
pub fn width(p_bar: f64, visits: u64, log_factor: f64) -> f64 {
    raw_width(p_bar, visits, log_factor).clamp(0.0, 1.0)
}

/// Pair and triple visit counts together with the epoch bookkeeping.
///
/// `visits` is the running count and `epoch_start` its value when the current
/// epoch began.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitCounters {
    space: Arc<StateSpace>,
    visits: Vec<u64>,
    transitions: Vec<u64>,
    epoch_start: Vec<u64>,
    epoch_start_transitions: Vec<u64>,
    epoch: usize,
}

impl VisitCounters {
    pub fn new(space: Arc<StateSpace>) -> Self {
        Self {
            visits: vec![0; space.num_pairs()],
            transitions: vec![0; space.num_triples()],
            epoch_start: vec![0; space.num_pairs()],
            epoch_start_transitions: vec![0; space.num_triples()],
            epoch: 1,
            space,
        }
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// `N(x, a)`.
    pub fn visits(&self, x: usize, a: usize) -> u64 {
        self.visits[self.space.pair_index(x, a)]
    }

    /// `N(x, a)` frozen at the start of the current epoch.
    pub fn epoch_start_visits(&self, x: usize, a: usize) -> u64 {
        self.epoch_start[self.space.pair_index(x, a)]
    }

    /// `M(x, a, x')`.
    pub fn transitions(&self, x: usize, a: usize, next: usize) -> u64 {
        self.space
            .triple_index(x, a, next)
            .map_or(0, |i| self.transitions[i])
    }

    pub fn record_transition(&mut self, x: usize, a: usize, next: usize) -> Result<()> {
        let i = self.space.triple_index(x, a, next).ok_or_else(|| {
            structure(alloc::format!(
                "({x}, {a}, {next}) is not a consecutive-layer triple"
            ))
        })?;
        self.visits[self.space.pair_index(x, a)] += 1;
        self.transitions[i] += 1;
        Ok(())
    }

    pub fn record_trajectory(&mut self, trajectory: &Trajectory) -> Result<()> {
        for (x, a, next) in trajectory.transitions() {
            self.record_transition(x, a, next)?;
        }
        Ok(())
    }

    /// True iff some visited pair reached `max(1, 2 N_prev)` visits.
    /// Call after the trajectory has been recorded.
    pub fn should_advance(&self, trajectory: &Trajectory) -> bool {
        trajectory.steps.iter().any(|s| {
            let i = self.space.pair_index(s.state, s.action);
            self.visits[i] >= (2 * self.epoch_start[i]).max(1)
        })
    }

    /// Starts a new epoch and builds its confidence set.
    pub fn advance_epoch(&mut self, delta: f64, episodes: usize) -> ConfidenceSet {
        self.epoch += 1;
        self.epoch_start.copy_from_slice(&self.visits);
        self.epoch_start_transitions.copy_from_slice(&self.transitions);
        self.confidence_set(delta, episodes)
    }

    /// Confidence set built from the counts at the start of the current epoch.
    pub fn confidence_set(&self, delta: f64, episodes: usize) -> ConfidenceSet {
        let space = &*self.space;
        if self.epoch == 1 {
            return ConfidenceSet::initial(self.space.clone(), delta, episodes);
        }
        let log = log_factor(space, delta, episodes);
        let mut p_bar = vec![0.0; space.num_triples()];
        let mut widths = vec![0.0; space.num_triples()];
        for x in 0..space.terminal_state() {
            for a in 0..space.num_actions() {
                let n = self.epoch_start[space.pair_index(x, a)];
                for i in space.row(x, a) {
                    let p = self.epoch_start_transitions[i] as f64 / n.max(1) as f64;
                    p_bar[i] = p;
                    widths[i] = width(p, n, log);
                }
            }
        }
        ConfidenceSet {
            space: self.space.clone(),
            epoch: self.epoch,
            p_bar,
            widths,
            delta,
            episodes,
        }
    }

    /// Checks `sum_{x'} M(x, a, x') = N(x, a)` for every pair.
    pub fn is_consistent(&self) -> bool {
        let space = &*self.space;
        (0..space.terminal_state()).all(|x| {
            (0..space.num_actions()).all(|a| {
                let m: u64 = self.transitions[space.row(x, a)].iter().sum();
                let i = space.pair_index(x, a);
                m == self.visits[i] && self.visits[i] >= self.epoch_start[i]
            })
        })
    }
}

/// Confidence set `{P : |P(x'|x,a) - P_bar(x'|x,a)| <= eps(x'|x,a)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSet {
    space: Arc<StateSpace>,
    epoch: usize,
    p_bar: Vec<f64>,
    widths: Vec<f64>,
    delta: f64,
    episodes: usize,
}

impl ConfidenceSet {
    /// Epoch-1 set: uniform centre and unit widths, i.e. every kernel.
    pub fn initial(space: Arc<StateSpace>, delta: f64, episodes: usize) -> Self {
        let p_bar = TransitionKernel::uniform(space.clone()).as_slice().to_vec();
        let widths = vec![1.0; space.num_triples()];
        Self {
            space,
            epoch: 1,
            p_bar,
            widths,
            delta,
            episodes,
        }
    }

    /// Builds a set from explicit centre and widths.
    pub fn from_parts(
        space: Arc<StateSpace>,
        epoch: usize,
        p_bar: Vec<f64>,
        widths: Vec<f64>,
        delta: f64,
        episodes: usize,
    ) -> Result<Self> {
        let n = space.num_triples();
        if p_bar.len() != n || widths.len() != n {
            return Err(structure("confidence set arrays do not match the state space"));
        }
        if widths.iter().any(|w| !(*w >= 0.0)) {
            return Err(structure("confidence widths must be nonnegative"));
        }
        if p_bar.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(structure("empirical transition entries must lie in [0, 1]"));
        }
        Ok(Self {
            space,
            epoch,
            p_bar,
            widths,
            delta,
            episodes,
        })
    }

    /// Singleton set `{P}` (all widths zero).
    pub fn singleton(kernel: &TransitionKernel, delta: f64, episodes: usize) -> Self {
        Self {
            space: kernel.space().clone(),
            epoch: 1,
            p_bar: kernel.as_slice().to_vec(),
            widths: vec![0.0; kernel.as_slice().len()],
            delta,
            episodes,
        }
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn episodes(&self) -> usize {
        self.episodes
    }

    pub fn p_bar(&self) -> &[f64] {
        &self.p_bar
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn p_bar_row(&self, x: usize, a: usize) -> &[f64] {
        &self.p_bar[self.space.row(x, a)]
    }

    pub fn width_row(&self, x: usize, a: usize) -> &[f64] {
        &self.widths[self.space.row(x, a)]
    }

    /// True iff every entry of `kernel` lies within its width of the centre.
    pub fn contains(&self, kernel: &TransitionKernel) -> bool {
        kernel.as_slice().len() == self.p_bar.len()
            && kernel
                .as_slice()
                .iter()
                .zip(&self.p_bar)
                .zip(&self.widths)
                .all(|((p, c), w)| (p - c).abs() <= *w)
    }

    /// Same centre, widths replaced by `f(width)`.
    pub fn map_widths(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        out.widths.iter_mut().for_each(|w| *w = f(*w));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Step;

    fn space() -> Arc<StateSpace> {
        Arc::new(StateSpace::new(vec![1, 2, 1], 2).unwrap())
    }

    fn traj(steps: &[(usize, usize)]) -> Trajectory {
        Trajectory {
            episode: 1,
            steps: steps
                .iter()
                .map(|&(state, action)| Step { state, action, loss: 0.0 })
                .collect(),
            terminal: 3,
        }
    }

    #[test]
    fn counters_record_pairs_and_triples() {
        let mut c = VisitCounters::new(space());
        c.record_transition(0, 1, 1).unwrap();
        assert_eq!((c.visits(0, 1), c.transitions(0, 1, 1)), (1, 1));
        c.record_transition(0, 1, 1).unwrap();
        assert_eq!((c.visits(0, 1), c.transitions(0, 1, 1)), (2, 2));
        c.record_transition(0, 1, 2).unwrap();
        assert_eq!(c.visits(0, 1), 3);
        assert_eq!(c.transitions(0, 1, 2), 1);
        assert!(c.is_consistent());
        assert!(c.record_transition(0, 0, 3).is_err());
        assert!(c.record_transition(1, 0, 2).is_err());
    }

    #[test]
    fn first_episode_always_advances() {
        let mut c = VisitCounters::new(space());
        let t = traj(&[(0, 0), (1, 1)]);
        c.record_trajectory(&t).unwrap();
        assert!(c.should_advance(&t));
    }

    #[test]
    fn doubling_trigger() {
        let mut c = VisitCounters::new(space());
        for _ in 0..4 {
            c.record_transition(0, 0, 1).unwrap();
        }
        c.advance_epoch(0.1, 100);
        assert_eq!(c.epoch_start_visits(0, 0), 4);
        for _ in 0..3 {
            c.record_transition(0, 0, 1).unwrap();
        }
        let t = traj(&[(0, 0)]);
        assert!(!c.should_advance(&t), "7 < 8");
        c.record_transition(0, 0, 2).unwrap();
        assert!(c.should_advance(&t), "8 >= 8");
    }

    #[test]
    fn empirical_rows() {
        let mut c = VisitCounters::new(space());
        for next in [1, 1, 1, 2] {
            c.record_transition(0, 0, next).unwrap();
        }
        let cs = c.advance_epoch(0.1, 1000);
        assert_eq!(cs.epoch(), 2);
        assert_eq!(cs.p_bar_row(0, 0), &[0.75, 0.25]);
        assert_eq!(cs.p_bar_row(0, 1), &[0.0, 0.0]);
        // unvisited pair: 14/3 ln(T|X||A|/delta) clipped to 1
        assert_eq!(cs.width_row(0, 1), &[1.0, 1.0]);
    }

    #[test]
    fn width_zero_mean_term() {
        let log = 3.0;
        let w = width(0.0, 201, log);
        assert!((w - 14.0 * 3.0 / (3.0 * 200.0)).abs() < 1e-15);
        assert_eq!(width(0.0, 0, log), 1.0);
    }

    #[test]
    fn width_regression_value() {
        // T = 1000, |X| = 4, |A| = 2, delta = 0.1:
        // 2 sqrt(0.5 ln(80000) / 100) + (14/3) ln(80000) / 100 evaluated with
        // mpmath at 30 digits is 1.00203607459052145...
        let space = StateSpace::new(vec![1, 2, 1], 2).unwrap();
        let log = log_factor(&space, 0.1, 1000);
        assert!((log - libm::log(80000.0)).abs() < 1e-14);
        let w = raw_width(0.5, 101, log);
        assert!((w - 1.002_036_074_590_521_5).abs() < 1e-13, "{w}");
        assert_eq!(width(0.5, 101, log), 1.0);
    }

    #[test]
    fn width_shrinks_with_visits() {
        let log = libm::log(1e5);
        let mut prev = f64::INFINITY;
        for n in 0..5000u64 {
            let w = width(0.3, n, log);
            assert!(w <= prev);
            prev = w;
        }
        assert!(prev < 0.2);
    }

    #[test]
    fn contains_checks_every_triple() {
        let s = space();
        let p = TransitionKernel::uniform(s.clone());
        assert!(ConfidenceSet::initial(s.clone(), 0.1, 10).contains(&p));
        let cs = ConfidenceSet::singleton(&p, 0.1, 10);
        assert!(cs.contains(&p));
        let cs = cs.map_widths(|_| 0.1);
        let mut probs = p.as_slice().to_vec();
        probs[0] = 0.65;
        probs[1] = 0.35;
        let q = TransitionKernel::new(s, probs).unwrap();
        assert!(!cs.contains(&q));
    }
}
