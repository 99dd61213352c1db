//! Explicit finite transition systems with their behavior-horizon
//! partitions and bisimulation checks.

mod behavior;
mod bisim;
mod partition;
pub mod random;

use std::collections::BTreeSet;

use thiserror::Error;

pub use behavior::{
    behaviors, output_behaviors, proceed, BehaviorDag, BehaviorId, BehaviorSet, OutputBehaviorSet,
};
pub use bisim::{
    are_isomorphic, check_bisimulation, classical_minimize, Counterexample, Violation,
};
pub use partition::{
    minimize_by_behavior, partition_by_horizon, quotient, HorizonTable, Minimization, Partition,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransitionError {
    #[error("state {0} is out of range")]
    StateOutOfRange(usize),
    #[error("input {0} is out of range")]
    InputOutOfRange(usize),
    #[error("output {0} is out of range")]
    OutputOutOfRange(usize),
    #[error("state {state} has two successors with output `{output}`")]
    NotOutputDeterministic { state: usize, output: String },
    #[error("class {class} mixes outputs")]
    OutputInconsistent { class: usize },
    #[error("partition covers {partition} states, system has {system}")]
    PartitionSize { partition: usize, system: usize },
}

/// `S = (X, U, →, Y, H)` with every index counted from zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteTransitionSystem {
    inputs: Vec<String>,
    outputs: Vec<String>,
    output_map: Vec<usize>,
    /// Sorted, deduplicated `(src, input, dst)` triples.
    transitions: Vec<(usize, usize, usize)>,
    succ: Vec<Vec<(usize, usize)>>,
}

impl FiniteTransitionSystem {
    pub fn new(
        inputs: Vec<String>,
        outputs: Vec<String>,
        output_map: Vec<usize>,
        transitions: impl IntoIterator<Item = (usize, usize, usize)>,
    ) -> Result<Self, TransitionError> {
        let n = output_map.len();
        if let Some(&o) = output_map.iter().find(|&&o| o >= outputs.len()) {
            return Err(TransitionError::OutputOutOfRange(o));
        }
        let mut ts: Vec<_> = transitions.into_iter().collect();
        for &(a, u, b) in &ts {
            if a >= n {
                return Err(TransitionError::StateOutOfRange(a));
            }
            if b >= n {
                return Err(TransitionError::StateOutOfRange(b));
            }
            if u >= inputs.len() {
                return Err(TransitionError::InputOutOfRange(u));
            }
        }
        ts.sort_unstable();
        ts.dedup();
        let mut succ = vec![Vec::new(); n];
        for &(a, u, b) in &ts {
            succ[a].push((u, b));
        }
        Ok(FiniteTransitionSystem {
            inputs,
            outputs,
            output_map,
            transitions: ts,
            succ,
        })
    }

    /// Builds a system from named parts; symbols are interned in first-use order.
    pub fn from_named(
        states: &[(&str, &str)],
        transitions: &[(&str, &str, &str)],
    ) -> Result<Self, TransitionError> {
        let mut outputs: Vec<String> = Vec::new();
        let mut output_map = Vec::new();
        for (_, y) in states {
            output_map.push(intern(&mut outputs, y));
        }
        let idx = |name: &str| {
            states
                .iter()
                .position(|(s, _)| *s == name)
                .ok_or(TransitionError::StateOutOfRange(usize::MAX))
        };
        let mut inputs = Vec::new();
        let mut ts = Vec::new();
        for (a, u, b) in transitions {
            ts.push((idx(a)?, intern(&mut inputs, u), idx(b)?));
        }
        Self::new(inputs, outputs, output_map, ts)
    }

    pub fn num_states(&self) -> usize {
        self.output_map.len()
    }

    pub fn inputs(&self) -> &[String] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn transitions(&self) -> &[(usize, usize, usize)] {
        &self.transitions
    }

    /// Output id `H(x)`.
    pub fn output(&self, x: usize) -> usize {
        self.output_map[x]
    }

    pub fn output_name(&self, x: usize) -> &str {
        &self.outputs[self.output_map[x]]
    }

    /// `(input, dst)` pairs leaving `x`, sorted.
    pub fn successors(&self, x: usize) -> &[(usize, usize)] {
        &self.succ[x]
    }

    /// Distinct successor states of `x`, sorted.
    pub fn successor_states(&self, x: usize) -> Vec<usize> {
        let set: BTreeSet<usize> = self.succ[x].iter().map(|&(_, b)| b).collect();
        set.into_iter().collect()
    }

    /// First `(state, output)` with two distinct successors sharing the output.
    pub fn output_nondeterminism(&self) -> Option<(usize, usize)> {
        for x in 0..self.num_states() {
            let mut seen: Vec<(usize, usize)> = Vec::new();
            for b in self.successor_states(x) {
                let y = self.output(b);
                if seen.iter().any(|&(yy, bb)| yy == y && bb != b) {
                    return Some((x, y));
                }
                seen.push((y, b));
            }
        }
        None
    }
}

fn intern(table: &mut Vec<String>, s: &str) -> usize {
    match table.iter().position(|t| t == s) {
        Some(i) => i,
        None => {
            table.push(s.to_string());
            table.len() - 1
        }
    }
}

/// No state has two distinct successors with equal outputs.
pub fn is_output_deterministic(s: &FiniteTransitionSystem) -> bool {
    s.output_nondeterminism().is_none()
}
