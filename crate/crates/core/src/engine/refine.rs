//! Behavior-horizon refinement over a sampled state set.
//!
//! Every state reached within `k` steps of the grid is interned in an arena.
//! Each round expands the newest layer (successor evaluation runs on the
//! rayon pool when [`Execution::Parallel`] is selected and the `parallel`
//! feature is on), then interns the results in frontier order so state ids
//! and partitions do not depend on scheduling.

use std::collections::HashMap;
use std::convert::Infallible;
use std::fmt::Debug;
use std::hash::Hash;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::mapped::{HybridState, MappedError, MappedSystem};
use crate::transition::{BehaviorDag, BehaviorId, FiniteTransitionSystem, Partition};

/// One transition of a sampled system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step<S> {
    pub input: String,
    pub output: usize,
    pub state: S,
}

/// A transition system whose successors are computed on demand.
pub trait SampledSystem: Sync {
    type State: Clone + Eq + Hash + Debug + Send + Sync;
    type Error: std::error::Error + Send + 'static;

    fn output(&self, s: &Self::State) -> usize;

    /// All transitions from `s`, one per distinct successor.
    fn transitions(&self, s: &Self::State) -> Result<Vec<Step<Self::State>>, Self::Error>;
}

impl SampledSystem for MappedSystem<'_> {
    type State = HybridState;
    type Error = MappedError;

    fn output(&self, s: &HybridState) -> usize {
        MappedSystem::output(self, s)
    }

    fn transitions(&self, s: &HybridState) -> Result<Vec<Step<HybridState>>, MappedError> {
        Ok(self
            .successors(s)?
            .into_iter()
            .map(|t| Step {
                input: t.input,
                output: t.output,
                state: t.state,
            })
            .collect())
    }
}

/// Explicit systems, labeling each distinct successor with its smallest input.
impl SampledSystem for FiniteTransitionSystem {
    type State = usize;
    type Error = Infallible;

    fn output(&self, s: &usize) -> usize {
        FiniteTransitionSystem::output(self, *s)
    }

    fn transitions(&self, s: &usize) -> Result<Vec<Step<usize>>, Infallible> {
        let mut out: Vec<Step<usize>> = Vec::new();
        for &(u, b) in self.successors(*s) {
            if out.iter().any(|t| t.state == b) {
                continue;
            }
            out.push(Step {
                input: self.inputs()[u].clone(),
                output: FiniteTransitionSystem::output(self, b),
                state: b,
            });
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon data parallelism; sequential when built without `parallel`.
    #[default]
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    /// `|Q_{k+1}| = |Q_k|` and the partitions coincide.
    FixedPoint,
    /// The fixed point puts every grid point in its own class, or `k`
    /// reached the grid size: the grid is too coarse.
    Exhausted,
    /// `k_max` reached first.
    Inconclusive,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::FixedPoint => "fixed-point",
            Status::Exhausted => "exhausted",
            Status::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, Error)]
#[error("successor of {state} at horizon {horizon} failed: {source}")]
pub struct RefineError<E: std::error::Error + 'static> {
    pub state: String,
    pub horizon: usize,
    pub source: E,
}

#[derive(Debug, Clone, Copy)]
pub struct RefineOptions {
    pub k_max: usize,
    /// Rounds forced past the fixed point, kept for stability checks.
    pub extra_rounds: usize,
    pub execution: Execution,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            k_max: 100,
            extra_rounds: 0,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RefinementTrace {
    /// `Q_0, Q_1, ...` up to `Q_{k+1}` (and any forced extra rounds).
    /// Without a fixed point `Q_{k+1}` is the finest partition computed.
    pub partitions: Vec<Partition>,
    /// Terminal horizon `k`.
    pub k: usize,
    pub status: Status,
    pub grid_size: usize,
}

impl RefinementTrace {
    pub fn class_counts(&self) -> Vec<usize> {
        self.partitions.iter().map(Partition::num_classes).collect()
    }

    /// `Q_k`.
    pub fn terminal(&self) -> &Partition {
        &self.partitions[self.k]
    }

    pub fn classes(&self) -> usize {
        self.terminal().num_classes()
    }
}

type Expansion<S> = Result<Vec<Step<<S as SampledSystem>::State>>, <S as SampledSystem>::Error>;

/// Arena of reached states with per-horizon behavior ids.
pub struct Refiner<'s, S: SampledSystem> {
    sys: &'s S,
    execution: Execution,
    states: Vec<S::State>,
    index: HashMap<S::State, usize>,
    depth: Vec<usize>,
    succ: Vec<Vec<(usize, usize)>>,
    inputs: Vec<String>,
    dag: BehaviorDag,
    /// `hs[x][j]` is `ℋ_j` of state `x`, defined for `j <= horizon - depth[x]`.
    hs: Vec<Vec<BehaviorId>>,
    grid: Vec<usize>,
    horizon: usize,
    frontier: Vec<usize>,
}

impl<'s, S: SampledSystem> Refiner<'s, S> {
    pub fn new(sys: &'s S, grid: &[S::State], execution: Execution) -> Self {
        let mut r = Refiner {
            sys,
            execution,
            states: Vec::new(),
            index: HashMap::new(),
            depth: Vec::new(),
            succ: Vec::new(),
            inputs: Vec::new(),
            dag: BehaviorDag::new(),
            hs: Vec::new(),
            grid: Vec::new(),
            horizon: 0,
            frontier: Vec::new(),
        };
        for s in grid {
            let (id, fresh) = r.intern(s.clone(), 0);
            if fresh {
                r.frontier.push(id);
            }
            r.grid.push(id);
        }
        r
    }

    fn intern(&mut self, s: S::State, depth: usize) -> (usize, bool) {
        if let Some(&id) = self.index.get(&s) {
            return (id, false);
        }
        let id = self.states.len();
        let leaf = self.dag.leaf(self.sys.output(&s));
        self.index.insert(s.clone(), id);
        self.states.push(s);
        self.depth.push(depth);
        self.succ.push(Vec::new());
        self.hs.push(vec![leaf]);
        (id, true)
    }

    fn input_id(&mut self, label: &str) -> usize {
        match self.inputs.iter().position(|i| i == label) {
            Some(i) => i,
            None => {
                self.inputs.push(label.to_string());
                self.inputs.len() - 1
            }
        }
    }

    /// Computes `ℋ_{horizon+1}` for the grid.
    pub fn advance(&mut self) -> Result<(), RefineError<S::Error>> {
        let results = self.expand_frontier();
        let next_depth = self.horizon + 1;
        let mut new_frontier = Vec::new();
        let frontier = std::mem::take(&mut self.frontier);
        for (&x, res) in frontier.iter().zip(results) {
            let steps = res.map_err(|source| RefineError {
                state: format!("{:?}", self.states[x]),
                horizon: self.horizon,
                source,
            })?;
            let mut out = Vec::with_capacity(steps.len());
            for st in steps {
                let u = self.input_id(&st.input);
                let (id, fresh) = self.intern(st.state, next_depth);
                if fresh {
                    new_frontier.push(id);
                }
                out.push((u, id));
            }
            self.succ[x] = out;
        }
        self.horizon = next_depth;
        self.frontier = new_frontier;

        // Deepest layers first so each state finds its successors' entries.
        let mut order: Vec<usize> = (0..self.states.len())
            .filter(|&x| self.depth[x] < self.horizon)
            .collect();
        order.sort_by_key(|&x| std::cmp::Reverse(self.depth[x]));
        for x in order {
            let j = self.horizon - self.depth[x];
            let children: Vec<BehaviorId> = self.succ[x]
                .iter()
                .map(|&(_, y)| self.hs[y][j - 1])
                .collect();
            let symbol = self.sys.output(&self.states[x]);
            let id = self.dag.extend(symbol, &children);
            debug_assert_eq!(self.hs[x].len(), j);
            self.hs[x].push(id);
        }
        Ok(())
    }

    fn expand_frontier(&self) -> Vec<Expansion<S>> {
        let eval = |&x: &usize| self.sys.transitions(&self.states[x]);
        match self.execution {
            #[cfg(feature = "parallel")]
            Execution::Parallel => self.frontier.par_iter().map(eval).collect(),
            _ => self.frontier.iter().map(eval).collect(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    /// Number of distinct states reached so far.
    pub fn arena_len(&self) -> usize {
        self.states.len()
    }

    pub fn dag(&self) -> &BehaviorDag {
        &self.dag
    }

    pub fn dag_mut(&mut self) -> &mut BehaviorDag {
        &mut self.dag
    }

    /// `ℋ_k` of every grid point, in grid order.
    pub fn grid_keys(&self, k: usize) -> Vec<BehaviorId> {
        assert!(k <= self.horizon, "horizon {k} not computed yet");
        self.grid.iter().map(|&x| self.hs[x][k]).collect()
    }

    pub fn partition(&self, k: usize) -> Partition {
        Partition::from_keys(k, &self.grid_keys(k))
    }

    /// Input label of the grid point's transition to a successor with output `y`.
    pub fn input_label(&self, grid_pos: usize, y: usize) -> Option<&str> {
        let x = self.grid[grid_pos];
        self.succ[x]
            .iter()
            .find(|&&(_, t)| self.sys.output(&self.states[t]) == y)
            .map(|&(u, _)| self.inputs[u].as_str())
    }

    /// Successor states of a grid point, as arena states.
    pub fn grid_successors(&self, grid_pos: usize) -> Vec<(&str, &S::State)> {
        let x = self.grid[grid_pos];
        self.succ[x]
            .iter()
            .map(|&(u, t)| (self.inputs[u].as_str(), &self.states[t]))
            .collect()
    }

    /// Refines until `|Q_{k+1}| = |Q_k|` with equal partitions, the grid is
    /// exhausted, or `k_max` is reached.
    pub fn run(&mut self, opts: &RefineOptions) -> Result<RefinementTrace, RefineError<S::Error>> {
        let n = self.grid.len();
        let mut partitions = vec![self.partition(0)];
        let mut k = 0;
        let status = loop {
            self.advance()?;
            let next = self.partition(k + 1);
            let fixed = next.num_classes() == partitions[k].num_classes()
                && next.same_classes(&partitions[k]);
            partitions.push(next);
            if fixed {
                break if n > 1 && partitions[k].num_classes() == n {
                    Status::Exhausted
                } else {
                    Status::FixedPoint
                };
            }
            // `Q_{k+1}` is always computed, so `k` stays the last checked horizon.
            if k + 1 >= n.max(1) {
                break Status::Exhausted;
            }
            if k + 1 >= opts.k_max {
                break Status::Inconclusive;
            }
            k += 1;
        };
        if status == Status::FixedPoint {
            for _ in 0..opts.extra_rounds {
                self.advance()?;
                partitions.push(self.partition(self.horizon));
            }
        }
        Ok(RefinementTrace {
            partitions,
            k,
            status,
            grid_size: n,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transition::minimize_by_behavior;

    fn ring() -> FiniteTransitionSystem {
        FiniteTransitionSystem::from_named(
            &[("a", "p"), ("b", "p"), ("c", "p"), ("d", "q")],
            &[("a", "u", "b"), ("b", "u", "c"), ("c", "u", "d")],
        )
        .unwrap()
    }

    #[test]
    fn matches_explicit_minimization() {
        let s = ring();
        let grid: Vec<usize> = (0..4).collect();
        let mut r = Refiner::new(&s, &grid, Execution::Sequential);
        let trace = r.run(&RefineOptions::default()).unwrap();
        let m = minimize_by_behavior(&s).unwrap();
        assert_eq!(trace.status, Status::Exhausted);
        assert_eq!(trace.k, m.k);
        assert_eq!(trace.terminal().class_map(), m.partition.class_map());
    }

    #[test]
    fn single_equilibrium_like_state() {
        let s = FiniteTransitionSystem::from_named(&[("a", "p")], &[("a", "*", "a")]).unwrap();
        let mut r = Refiner::new(&s, &[0], Execution::Sequential);
        let trace = r.run(&RefineOptions::default()).unwrap();
        assert_eq!(trace.status, Status::FixedPoint);
        assert_eq!(trace.k, 0);
        assert_eq!(trace.class_counts(), vec![1, 1]);
    }

    #[test]
    fn partial_grid_reaches_states_outside_it() {
        let s = ring();
        let mut r = Refiner::new(&s, &[0], Execution::Sequential);
        r.advance().unwrap();
        r.advance().unwrap();
        assert_eq!(r.arena_len(), 3);
        let set = r.dag().expand(r.grid_keys(2)[0]);
        assert_eq!(set.sequences(), &[vec![0, 0, 0]]);
    }

    #[test]
    fn k_max_is_inconclusive() {
        let s = ring();
        let grid: Vec<usize> = (0..4).collect();
        let mut r = Refiner::new(&s, &grid, Execution::Sequential);
        let trace = r
            .run(&RefineOptions {
                k_max: 1,
                ..RefineOptions::default()
            })
            .unwrap();
        assert_eq!(trace.status, Status::Inconclusive);
    }
}
