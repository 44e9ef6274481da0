//! JSON formats for layered MDPs and loss sequences.
//!
//! An MDP file lists the layers (sizes or state names), the actions (a
//! count or names) and the nonzero transition probabilities:
//!
//! ```json
//! {
//!   "layers": [["start"], ["left", "right"], ["goal"]],
//!   "actions": ["stay", "switch"],
//!   "transitions": [
//!     {"from": "start", "action": "stay", "to": "left", "p": 0.7},
//!     {"from": "start", "action": "stay", "to": "right", "p": 0.3}
//!   ]
//! }
//! ```
//!
//! States and actions may be referenced by name or by dense id (layer by
//! layer, starting at 0). Omitted transitions have probability zero.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use serde_json::value::RawValue;
use uob_reps_core::mdp::{StateSpace, TransitionKernel, ROW_SUM_TOL};

use crate::error::{HarnessError, Result};

#[derive(Deserialize)]
#[serde(untagged)]
enum Names {
    Count(usize),
    Names(Vec<String>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Ref {
    Id(usize),
    Name(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMdp<'a> {
    layers: Vec<Names>,
    actions: Names,
    #[serde(borrow)]
    transitions: Vec<&'a RawValue>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransition {
    from: Ref,
    action: Ref,
    to: Ref,
    p: f64,
}

/// A parsed MDP with display names for states and actions.
#[derive(Debug, Clone)]
pub struct MdpFile {
    pub kernel: TransitionKernel,
    pub state_names: Vec<String>,
    pub action_names: Vec<String>,
}

impl MdpFile {
    pub fn space(&self) -> &Arc<StateSpace> {
        self.kernel.space()
    }
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Byte offset of a borrowed slice inside `src`.
fn offset_in(src: &str, part: &str) -> usize {
    (part.as_ptr() as usize).saturating_sub(src.as_ptr() as usize)
}

fn resolve(r: &Ref, names: &HashMap<&str, usize>, count: usize, what: &str) -> std::result::Result<usize, String> {
    match r {
        Ref::Id(i) if *i < count => Ok(*i),
        Ref::Id(i) => Err(format!("{what} id {i} is out of range (there are {count})")),
        Ref::Name(n) => names.get(n.as_str()).copied().ok_or_else(|| format!("unknown {what} {n:?}")),
    }
}

/// Parses an MDP document; `path` is only used in error messages.
pub fn parse_mdp(src: &str, path: &Path) -> Result<MdpFile> {
    let at = |line: usize, message: String| HarnessError::Input {
        path: path.to_path_buf(),
        line,
        message,
    };
    let raw: RawMdp = serde_json::from_str(src).map_err(|e| at(e.line(), e.to_string()))?;
    let top = 1;

    let mut sizes = Vec::with_capacity(raw.layers.len());
    let mut state_names = Vec::new();
    for layer in &raw.layers {
        match layer {
            Names::Count(n) => {
                let start = state_names.len();
                state_names.extend((start..start + n).map(|i| format!("s{i}")));
                sizes.push(*n);
            }
            Names::Names(v) => {
                state_names.extend(v.iter().cloned());
                sizes.push(v.len());
            }
        }
    }
    let action_names: Vec<String> = match raw.actions {
        Names::Count(n) => (0..n).map(|i| format!("a{i}")).collect(),
        Names::Names(v) => v,
    };
    let space = StateSpace::new(sizes, action_names.len()).map_err(|e| at(top, format!("invalid layer structure: {e}")))?;
    let space = Arc::new(space);

    let state_index = unique_index(&state_names).map_err(|n| at(top, format!("duplicate state name {n:?}")))?;
    let action_index = unique_index(&action_names).map_err(|n| at(top, format!("duplicate action name {n:?}")))?;

    let mut probs = vec![0.0; space.num_triples()];
    let mut seen = vec![false; space.num_triples()];
    let mut row_line = vec![0usize; space.num_pairs()];
    for entry in &raw.transitions {
        let line = line_of(src, offset_in(src, entry.get()));
        let t: RawTransition =
            serde_json::from_str(entry.get()).map_err(|e| at(line + e.line() - 1, format!("bad transition entry: {e}")))?;
        let x = resolve(&t.from, &state_index, space.num_states(), "state").map_err(|m| at(line, m))?;
        let a = resolve(&t.action, &action_index, space.num_actions(), "action").map_err(|m| at(line, m))?;
        let y = resolve(&t.to, &state_index, space.num_states(), "state").map_err(|m| at(line, m))?;
        let Some(i) = space.triple_index(x, a, y) else {
            return Err(at(
                line,
                format!(
                    "transition {:?} -> {:?} does not go to the next layer (layers {} and {})",
                    state_names[x],
                    state_names[y],
                    space.layer_of(x),
                    space.layer_of(y)
                ),
            ));
        };
        if !(0.0..=1.0).contains(&t.p) {
            return Err(at(line, format!("probability {} is outside [0, 1]", t.p)));
        }
        if seen[i] {
            return Err(at(line, "duplicate transition entry".to_string()));
        }
        seen[i] = true;
        probs[i] = t.p;
        let pair = space.pair_index(x, a);
        if row_line[pair] == 0 {
            row_line[pair] = line;
        }
    }
    for x in 0..space.terminal_state() {
        for a in 0..space.num_actions() {
            let sum: f64 = probs[space.row(x, a)].iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                let line = row_line[space.pair_index(x, a)].max(top);
                return Err(at(
                    line,
                    format!(
                        "transition row (state {:?}, action {:?}) sums to {sum}; every row must sum to 1",
                        state_names[x], action_names[a]
                    ),
                ));
            }
        }
    }
    let kernel = TransitionKernel::new(space, probs).map_err(|e| at(top, e.to_string()))?;
    Ok(MdpFile {
        kernel,
        state_names,
        action_names,
    })
}

fn unique_index(names: &[String]) -> std::result::Result<HashMap<&str, usize>, String> {
    let mut index = HashMap::with_capacity(names.len());
    for (i, n) in names.iter().enumerate() {
        if index.insert(n.as_str(), i).is_some() {
            return Err(n.clone());
        }
    }
    Ok(index)
}

pub fn load_mdp(path: &Path) -> Result<MdpFile> {
    let src = std::fs::read_to_string(path).map_err(|e| HarnessError::unreadable(path, e))?;
    parse_mdp(&src, path)
}

/// Serialises a kernel in the id-based form of the MDP format.
pub fn mdp_to_json(kernel: &TransitionKernel) -> String {
    let space = kernel.space();
    let mut transitions = Vec::new();
    for i in 0..space.num_triples() {
        let p = kernel.as_slice()[i];
        if p != 0.0 {
            let (x, a, y) = space.triple(i);
            transitions.push(serde_json::json!({"from": x, "action": a, "to": y, "p": p}));
        }
    }
    let doc = serde_json::json!({
        "layers": space.layer_sizes(),
        "actions": space.num_actions(),
        "transitions": transitions,
    });
    serde_json::to_string_pretty(&doc).expect("JSON values always serialise")
}

/// Loss matrix given as one row per non-terminal state and one column per
/// action, flattened to pair order.
pub fn flatten_matrix(space: &StateSpace, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    if rows.len() != space.terminal_state() || rows.iter().any(|r| r.len() != space.num_actions()) {
        return Err(HarnessError::config(format!(
            "loss matrix must have {} rows of {} entries",
            space.terminal_state(),
            space.num_actions()
        )));
    }
    Ok(rows.iter().flatten().copied().collect())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLosses {
    #[serde(default)]
    episodes: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    cumulative: Option<Vec<Vec<f64>>>,
}

/// Cumulative pair-indexed losses from a loss file holding either
/// `"episodes"` (a list of matrices) or a precomputed `"cumulative"` matrix.
pub fn load_cumulative_losses(path: &Path, space: &StateSpace) -> Result<Vec<f64>> {
    let src = std::fs::read_to_string(path).map_err(|e| HarnessError::unreadable(path, e))?;
    let raw: RawLosses = serde_json::from_str(&src).map_err(|e| HarnessError::Input {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let mut total = vec![0.0; space.num_pairs()];
    for m in &raw.episodes {
        let flat = flatten_matrix(space, m)?;
        if flat.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(HarnessError::config("episode losses must lie in [0, 1]"));
        }
        total.iter_mut().zip(flat).for_each(|(t, v)| *t += v);
    }
    if let Some(c) = &raw.cumulative {
        let flat = flatten_matrix(space, c)?;
        total.iter_mut().zip(flat).for_each(|(t, v)| *t += v);
    }
    if raw.episodes.is_empty() && raw.cumulative.is_none() {
        return Err(HarnessError::config("loss file has neither \"episodes\" nor \"cumulative\""));
    }
    Ok(total)
}
