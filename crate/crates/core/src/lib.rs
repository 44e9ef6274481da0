//! Online learning in loop-free episodic MDPs with adversarial losses, bandit
//! feedback and an unknown transition kernel.
//!
//! The crate is `no_std` (with `alloc`) and contains only the numerical core:
//!
//! - [`mdp`]: layered state spaces, kernels, policies and occupancy measures.
//! - [`confidence`]: visit counters, doubling epochs and per-triple Bernstein
//!   confidence sets.
//! - [`uob`]: upper occupancy bounds via backward dynamic programming over a
//!   greedy bounded-redistribution step.
//! - [`projection`]: the multiplicative mirror step and the KL projection onto
//!   the occupancy polytope of a confidence set, solved through its dual.
//! - [`learner`]: the UOB-REPS loop and two baselines.
//! - [`envsim`]: episode sampling, random MDPs and oblivious adversaries.
//! - [`regret`]: best-in-hindsight comparator and regret decomposition.
//!
//! File formats, configuration and the CLI live in the companion `uob-reps`
//! crate.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod confidence;
pub mod envsim;
mod error;
pub mod learner;
mod math;
pub mod mdp;
pub mod projection;
pub mod regret;
pub mod uob;

pub use error::{Error, Result};
