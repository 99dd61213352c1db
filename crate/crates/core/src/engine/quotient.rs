//! Quotient assembly from the terminal behavior sets, plus the checks that
//! relate it back to the sampled system.

use std::collections::HashMap;

use thiserror::Error;

use crate::transition::{
    are_isomorphic, check_bisimulation, BehaviorDag, BehaviorId, Counterexample,
    FiniteTransitionSystem,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuotientNode {
    pub id: usize,
    /// Output id shared by every sequence of the node's behavior set.
    pub output: usize,
    /// Grid index of the first sample with this behavior set.
    pub representative: usize,
    pub behavior: BehaviorId,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct QuotientEdge {
    pub src: usize,
    pub input: String,
    pub dst: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuotientGraph {
    pub k: usize,
    pub nodes: Vec<QuotientNode>,
    /// Sorted by `(src, input, dst)`.
    pub edges: Vec<QuotientEdge>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QuotientError {
    #[error("key lists have lengths {0} and {1}")]
    Length(usize, usize),
    #[error("truncated behavior set of sample {sample} is not a horizon-k set of the grid")]
    MissingSource { sample: usize },
    #[error("successor behavior set of sample {sample} for output {output} is not a horizon-k set of the grid; decrease eta")]
    MissingTarget { sample: usize, output: usize },
    #[error("no input label for sample {sample} and output {output}")]
    MissingLabel { sample: usize, output: usize },
}

impl QuotientGraph {
    pub fn num_states(&self) -> usize {
        self.nodes.len()
    }

    pub fn out_degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e.src == node).count()
    }

    /// Node whose behavior set is `id`.
    pub fn node_of(&self, id: BehaviorId) -> Option<usize> {
        self.nodes.iter().position(|n| n.behavior == id)
    }

    pub fn to_fts(&self) -> FiniteTransitionSystem {
        let mut inputs: Vec<String> = Vec::new();
        let mut ts = Vec::new();
        for e in &self.edges {
            let u = match inputs.iter().position(|i| *i == e.input) {
                Some(u) => u,
                None => {
                    inputs.push(e.input.clone());
                    inputs.len() - 1
                }
            };
            ts.push((e.src, u, e.dst));
        }
        let outs = self.nodes.iter().map(|n| n.output).collect();
        FiniteTransitionSystem::new(inputs, self.outputs.clone(), outs, ts)
            .expect("graph indices are valid")
    }

    /// Same shape, node outputs and edge inputs.
    pub fn isomorphic(&self, other: &QuotientGraph) -> bool {
        are_isomorphic(&self.to_fts(), &other.to_fts(), true)
    }
}

/// Builds the quotient from `ℋ_k` and `ℋ_{k+1}` of the grid (in grid order).
///
/// Nodes are the distinct horizon-`k` sets. For each distinct horizon-`k+1`
/// set and each next output `y`, the source node is the set truncated to `k`
/// transitions and the target node is the set of tails that continue with
/// `y`. `label(sample, y)` supplies the input of the representative's
/// transition.
pub fn build_quotient<L>(
    dag: &mut BehaviorDag,
    hk: &[BehaviorId],
    hk1: &[BehaviorId],
    k: usize,
    outputs: &[String],
    mut label: L,
) -> Result<QuotientGraph, QuotientError>
where
    L: FnMut(usize, usize) -> Option<String>,
{
    if hk.len() != hk1.len() {
        return Err(QuotientError::Length(hk.len(), hk1.len()));
    }
    let mut nodes: Vec<QuotientNode> = Vec::new();
    let mut node_of: HashMap<BehaviorId, usize> = HashMap::new();
    for (i, &h) in hk.iter().enumerate() {
        node_of.entry(h).or_insert_with(|| {
            nodes.push(QuotientNode {
                id: nodes.len(),
                output: dag.symbol(h),
                representative: i,
                behavior: h,
            });
            nodes.len() - 1
        });
    }
    let mut seen = HashMap::new();
    let mut edges = Vec::new();
    for (i, &h3) in hk1.iter().enumerate() {
        if seen.insert(h3, i).is_some() {
            continue;
        }
        let h1 = dag.truncate(h3, k);
        let src = *node_of
            .get(&h1)
            .ok_or(QuotientError::MissingSource { sample: i })?;
        for &h2 in dag.children(h3).to_vec().iter() {
            let y = dag.symbol(h2);
            let dst = *node_of.get(&h2).ok_or(QuotientError::MissingTarget {
                sample: i,
                output: y,
            })?;
            let input = label(i, y).ok_or(QuotientError::MissingLabel {
                sample: i,
                output: y,
            })?;
            edges.push(QuotientEdge { src, input, dst });
        }
    }
    edges.sort();
    edges.dedup();
    Ok(QuotientGraph {
        k,
        nodes,
        edges,
        outputs: outputs.to_vec(),
    })
}

/// The sampled system restricted to the grid: each sample steps to every
/// sample whose horizon-`k` set equals the tail set of its transition.
pub fn finite_restriction(
    dag: &BehaviorDag,
    hk: &[BehaviorId],
    hk1: &[BehaviorId],
    outputs: &[String],
    mut label: impl FnMut(usize, usize) -> Option<String>,
) -> FiniteTransitionSystem {
    let mut by_key: HashMap<BehaviorId, Vec<usize>> = HashMap::new();
    for (i, &h) in hk.iter().enumerate() {
        by_key.entry(h).or_default().push(i);
    }
    let mut inputs: Vec<String> = Vec::new();
    let mut ts = Vec::new();
    for (i, &h3) in hk1.iter().enumerate() {
        for &c in dag.children(h3) {
            let y = dag.symbol(c);
            let name = label(i, y).unwrap_or_default();
            let u = match inputs.iter().position(|x| *x == name) {
                Some(u) => u,
                None => {
                    inputs.push(name);
                    inputs.len() - 1
                }
            };
            for &j in by_key.get(&c).map(Vec::as_slice).unwrap_or(&[]) {
                ts.push((i, u, j));
            }
        }
    }
    let outs = hk.iter().map(|&h| dag.symbol(h)).collect();
    FiniteTransitionSystem::new(inputs, outputs.to_vec(), outs, ts).expect("indices are in range")
}

/// `Γ = {(r, [r])}` checked between the finite restriction and the quotient.
pub fn check_gamma(
    restriction: &FiniteTransitionSystem,
    quotient: &QuotientGraph,
    hk: &[BehaviorId],
) -> Result<(), Counterexample> {
    let gamma: Vec<(usize, usize)> = hk
        .iter()
        .enumerate()
        .map(|(i, &h)| (i, quotient.node_of(h).expect("every key has a node")))
        .collect();
    check_bisimulation(restriction, &quotient.to_fts(), &gamma)
}
