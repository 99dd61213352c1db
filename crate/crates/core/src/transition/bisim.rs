use std::collections::{BTreeSet, HashMap};
use std::fmt;

use petgraph::algo::is_isomorphic_matching;
use petgraph::graph::DiGraph;

use super::partition::{quotient, Partition};
use super::FiniteTransitionSystem;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// The output alphabets differ.
    OutputSets,
    /// A related pair has different outputs.
    Output,
    /// A transition of the left state has no related match on the right.
    Forth { successor: usize },
    /// A transition of the right state has no related match on the left.
    Back { successor: usize },
    /// A related index does not name a state.
    OutOfRange,
}

/// First related pair violating the bisimulation conditions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub pair: Option<(usize, usize)>,
    pub violation: Violation,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pair {
            Some((a, b)) => write!(f, "pair ({a}, {b}): {:?}", self.violation),
            None => write!(f, "{:?}", self.violation),
        }
    }
}

/// Checks that `relation` is a bisimulation relation between `a` and `b`:
/// equal outputs for every pair, and every transition on one side is matched
/// by a transition on the other side into a related pair. Input labels are
/// not compared.
pub fn check_bisimulation(
    a: &FiniteTransitionSystem,
    b: &FiniteTransitionSystem,
    relation: &[(usize, usize)],
) -> Result<(), Counterexample> {
    let ya: BTreeSet<&String> = a.outputs().iter().collect();
    let yb: BTreeSet<&String> = b.outputs().iter().collect();
    if ya != yb {
        return Err(Counterexample {
            pair: None,
            violation: Violation::OutputSets,
        });
    }
    let rel: BTreeSet<(usize, usize)> = relation.iter().copied().collect();
    for &(xa, xb) in relation {
        let fail = |violation| {
            Err(Counterexample {
                pair: Some((xa, xb)),
                violation,
            })
        };
        if xa >= a.num_states() || xb >= b.num_states() {
            return fail(Violation::OutOfRange);
        }
        if a.output_name(xa) != b.output_name(xb) {
            return fail(Violation::Output);
        }
        let sa = a.successor_states(xa);
        let sb = b.successor_states(xb);
        if let Some(&s) = sa
            .iter()
            .find(|&&s| !sb.iter().any(|&t| rel.contains(&(s, t))))
        {
            return fail(Violation::Forth { successor: s });
        }
        if let Some(&t) = sb
            .iter()
            .find(|&&t| !sa.iter().any(|&s| rel.contains(&(s, t))))
        {
            return fail(Violation::Back { successor: t });
        }
    }
    Ok(())
}

/// Coarsest bisimulation by splitter-based refinement: start from the output
/// partition and split blocks by the predecessor sets of splitter blocks
/// until no block splits. Returns the partition and the quotient.
pub fn classical_minimize(s: &FiniteTransitionSystem) -> (Partition, FiniteTransitionSystem) {
    let n = s.num_states();
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(x, _, y) in s.transitions() {
        pred[y].push(x);
    }
    let mut block: Vec<usize> = (0..n).map(|x| s.output(x)).collect();
    let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); s.outputs().len()];
    for x in 0..n {
        blocks[block[x]].push(x);
    }
    blocks.retain(|b| !b.is_empty());
    for (i, b) in blocks.iter().enumerate() {
        for &x in b {
            block[x] = i;
        }
    }
    let mut queue: Vec<usize> = (0..blocks.len()).collect();
    while let Some(splitter) = queue.pop() {
        let mut hit = vec![false; n];
        for &y in &blocks[splitter] {
            for &x in &pred[y] {
                hit[x] = true;
            }
        }
        let touched: BTreeSet<usize> = (0..n).filter(|&x| hit[x]).map(|x| block[x]).collect();
        for b in touched {
            let (inside, outside): (Vec<usize>, Vec<usize>) =
                blocks[b].iter().partition(|&&x| hit[x]);
            if outside.is_empty() {
                continue;
            }
            let new = blocks.len();
            for &x in &outside {
                block[x] = new;
            }
            blocks[b] = inside;
            blocks.push(outside);
            // Both halves may now split their predecessors differently.
            if !queue.contains(&b) {
                queue.push(b);
            }
            queue.push(new);
        }
    }
    let p = Partition::from_keys(0, &block);
    let q = quotient(s, &p).expect("output partition respects outputs");
    (p, q)
}

/// Graph isomorphism preserving output names, and input labels when
/// `match_inputs` is set.
pub fn are_isomorphic(
    a: &FiniteTransitionSystem,
    b: &FiniteTransitionSystem,
    match_inputs: bool,
) -> bool {
    fn graph(s: &FiniteTransitionSystem) -> DiGraph<String, String> {
        let mut g = DiGraph::new();
        let nodes: Vec<_> = (0..s.num_states())
            .map(|x| g.add_node(s.output_name(x).to_string()))
            .collect();
        for &(x, u, y) in s.transitions() {
            g.add_edge(nodes[x], nodes[y], s.inputs()[u].clone());
        }
        g
    }
    if a.num_states() != b.num_states() || a.transitions().len() != b.transitions().len() {
        return false;
    }
    fn count(s: &FiniteTransitionSystem) -> HashMap<&str, usize> {
        let mut m = HashMap::new();
        for x in 0..s.num_states() {
            *m.entry(s.output_name(x)).or_default() += 1;
        }
        m
    }
    if count(a) != count(b) {
        return false;
    }
    is_isomorphic_matching(
        &graph(a),
        &graph(b),
        |x, y| x == y,
        |x, y| !match_inputs || x == y,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transition::minimize_by_behavior;

    fn sample() -> FiniteTransitionSystem {
        FiniteTransitionSystem::from_named(
            &[("a", "p"), ("b", "q"), ("c", "p")],
            &[("a", "u", "b"), ("b", "u", "c"), ("c", "u", "c")],
        )
        .unwrap()
    }

    #[test]
    fn identity_relation_is_bisimulation() {
        let s = sample();
        let id: Vec<_> = (0..3).map(|x| (x, x)).collect();
        assert_eq!(check_bisimulation(&s, &s, &id), Ok(()));
    }

    #[test]
    fn unequal_outputs_are_reported() {
        let s = sample();
        let err = check_bisimulation(&s, &s, &[(0, 1)]).unwrap_err();
        assert_eq!(err.pair, Some((0, 1)));
        assert_eq!(err.violation, Violation::Output);
    }

    #[test]
    fn missing_match_is_reported() {
        let s = sample();
        let err = check_bisimulation(&s, &s, &[(0, 2)]).unwrap_err();
        assert_eq!(err.violation, Violation::Forth { successor: 1 });
    }

    #[test]
    fn quotient_relation_holds() {
        let s = sample();
        let m = minimize_by_behavior(&s).unwrap();
        let gamma: Vec<_> = (0..3).map(|x| (x, m.partition.class_of(x))).collect();
        assert_eq!(check_bisimulation(&s, &m.quotient, &gamma), Ok(()));
    }

    #[test]
    fn classical_on_minimal_and_duplicated() {
        let s = sample();
        let (_, q) = classical_minimize(&s);
        assert_eq!(q.num_states(), 3);
        // disjoint union of two copies halves back to three states
        let mut ts: Vec<_> = s.transitions().to_vec();
        ts.extend(s.transitions().iter().map(|&(a, u, b)| (a + 3, u, b + 3)));
        let outs: Vec<usize> = (0..6).map(|x| s.output(x % 3)).collect();
        let double =
            FiniteTransitionSystem::new(s.inputs().to_vec(), s.outputs().to_vec(), outs, ts)
                .unwrap();
        let (p, q) = classical_minimize(&double);
        assert_eq!(q.num_states(), 3);
        assert_eq!(p.class_of(0), p.class_of(3));
        assert!(are_isomorphic(
            &q,
            &minimize_by_behavior(&double).unwrap().quotient,
            true
        ));
    }

    #[test]
    fn isomorphism_respects_labels() {
        let a = FiniteTransitionSystem::from_named(&[("x", "p"), ("y", "q")], &[("x", "u", "y")])
            .unwrap();
        let b = FiniteTransitionSystem::from_named(&[("y", "q"), ("x", "p")], &[("x", "u", "y")])
            .unwrap();
        let c = FiniteTransitionSystem::from_named(&[("x", "p"), ("y", "q")], &[("x", "v", "y")])
            .unwrap();
        assert!(are_isomorphic(&a, &b, true));
        assert!(!are_isomorphic(&a, &c, true));
        assert!(are_isomorphic(&a, &c, false));
    }
}
