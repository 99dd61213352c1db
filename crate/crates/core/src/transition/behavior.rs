//! Internal behaviors `B_n(S, r)`, their output projections `ℋ_n(S, r)`, and a
//! hash-consed prefix-tree representation of output behavior sets.
//!
//! Explicit sequence sets grow exponentially with the horizon. [`BehaviorDag`]
//! stores each set as a prefix tree whose nodes are shared, so that two sets
//! are equal exactly when their ids are equal.

use std::collections::{BTreeMap, HashMap};

use super::FiniteTransitionSystem;

/// `B_n(S, r)`: state sequences of `n` transitions from `r`, plus maximal
/// shorter ones. Sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BehaviorSet {
    pub origin: usize,
    pub horizon: usize,
    pub sequences: Vec<Vec<usize>>,
}

/// `ℋ_n(S, r) = H(B_n(S, r))`: sorted, deduplicated output sequences.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OutputBehaviorSet {
    sequences: Vec<Vec<usize>>,
}

impl OutputBehaviorSet {
    pub fn new(mut sequences: Vec<Vec<usize>>) -> Self {
        sequences.sort();
        sequences.dedup();
        OutputBehaviorSet { sequences }
    }

    pub fn sequences(&self) -> &[Vec<usize>] {
        &self.sequences
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// The shared first symbol, if the set is non-empty.
    pub fn first_symbol(&self) -> Option<usize> {
        self.sequences.first().and_then(|s| s.first().copied())
    }

    /// Each sequence cut to at most `k` transitions.
    pub fn truncate(&self, k: usize) -> OutputBehaviorSet {
        OutputBehaviorSet::new(
            self.sequences
                .iter()
                .map(|s| s[..s.len().min(k + 1)].to_vec())
                .collect(),
        )
    }

    /// Tails `b_{1:|b|}` of the sequences whose second symbol is `y`.
    pub fn suffixes(&self, y: usize) -> OutputBehaviorSet {
        OutputBehaviorSet::new(
            self.sequences
                .iter()
                .filter(|s| s.get(1) == Some(&y))
                .map(|s| s[1..].to_vec())
                .collect(),
        )
    }
}

/// One `proceed` round: behaviors shorter than `k` transitions or ending in
/// a state without successors are kept; those of exactly `k` transitions are
/// extended by every successor of their last state.
pub fn proceed<F>(current: &[Vec<usize>], k: usize, mut successors: F) -> Vec<Vec<usize>>
where
    F: FnMut(usize) -> Vec<usize>,
{
    let mut out = Vec::new();
    for b in current {
        let last = *b.last().expect("behaviors are non-empty");
        if b.len() - 1 < k {
            out.push(b.clone());
            continue;
        }
        let next = successors(last);
        if next.is_empty() {
            out.push(b.clone());
            continue;
        }
        for s in next {
            let mut e = b.clone();
            e.push(s);
            out.push(e);
        }
    }
    out.sort();
    out.dedup();
    out
}

/// `B_n(S, r)` by repeated breadth-first extension.
pub fn behaviors(s: &FiniteTransitionSystem, r: usize, n: usize) -> BehaviorSet {
    let mut seqs = vec![vec![r]];
    for k in 0..n {
        seqs = proceed(&seqs, k, |x| s.successor_states(x));
    }
    BehaviorSet {
        origin: r,
        horizon: n,
        sequences: seqs,
    }
}

/// `ℋ_n(S, r)`.
pub fn output_behaviors(s: &FiniteTransitionSystem, r: usize, n: usize) -> OutputBehaviorSet {
    let b = behaviors(s, r, n);
    OutputBehaviorSet::new(
        b.sequences
            .iter()
            .map(|seq| seq.iter().map(|&x| s.output(x)).collect())
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BehaviorId(u32);

impl BehaviorId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Node {
    symbol: usize,
    /// The sequence ending at this node belongs to the set.
    terminal: bool,
    /// One child per distinct next symbol, sorted by symbol.
    children: Vec<BehaviorId>,
}

/// Hash-consed prefix trees of output sequences.
#[derive(Debug, Default, Clone)]
pub struct BehaviorDag {
    nodes: Vec<Node>,
    index: HashMap<Node, BehaviorId>,
    merges: HashMap<Vec<BehaviorId>, BehaviorId>,
    truncations: HashMap<(BehaviorId, usize), BehaviorId>,
}

impl BehaviorDag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn intern(&mut self, node: Node) -> BehaviorId {
        if let Some(&id) = self.index.get(&node) {
            return id;
        }
        let id = BehaviorId(u32::try_from(self.nodes.len()).expect("behavior table overflow"));
        self.nodes.push(node.clone());
        self.index.insert(node, id);
        id
    }

    /// `{⟨symbol⟩}`.
    pub fn leaf(&mut self, symbol: usize) -> BehaviorId {
        self.intern(Node {
            symbol,
            terminal: true,
            children: Vec::new(),
        })
    }

    /// `symbol · (∪ successors)`, or `{⟨symbol⟩}` when there are none.
    pub fn extend(&mut self, symbol: usize, successors: &[BehaviorId]) -> BehaviorId {
        if successors.is_empty() {
            return self.leaf(symbol);
        }
        let children = self.group_children(successors);
        self.intern(Node {
            symbol,
            terminal: false,
            children,
        })
    }

    /// Merges ids sharing a first symbol so each symbol has one child.
    fn group_children(&mut self, ids: &[BehaviorId]) -> Vec<BehaviorId> {
        let mut groups: BTreeMap<usize, Vec<BehaviorId>> = BTreeMap::new();
        for &id in ids {
            groups.entry(self.symbol(id)).or_default().push(id);
        }
        groups.into_values().map(|g| self.merge(g)).collect()
    }

    /// Union of sets that share their first symbol.
    fn merge(&mut self, mut ids: Vec<BehaviorId>) -> BehaviorId {
        ids.sort_unstable();
        ids.dedup();
        if ids.len() == 1 {
            return ids[0];
        }
        if let Some(&id) = self.merges.get(&ids) {
            return id;
        }
        let symbol = self.symbol(ids[0]);
        let terminal = ids.iter().any(|&i| self.nodes[i.index()].terminal);
        let grandchildren: Vec<BehaviorId> = ids
            .iter()
            .flat_map(|&i| self.nodes[i.index()].children.clone())
            .collect();
        let children = self.group_children(&grandchildren);
        let id = self.intern(Node {
            symbol,
            terminal,
            children,
        });
        self.merges.insert(ids, id);
        id
    }

    pub fn symbol(&self, id: BehaviorId) -> usize {
        self.nodes[id.index()].symbol
    }

    pub fn children(&self, id: BehaviorId) -> &[BehaviorId] {
        &self.nodes[id.index()].children
    }

    /// Set of tails after the first symbol whose next symbol is `y`.
    pub fn child(&self, id: BehaviorId, y: usize) -> Option<BehaviorId> {
        self.children(id)
            .iter()
            .copied()
            .find(|&c| self.symbol(c) == y)
    }

    /// Every sequence cut to at most `k` transitions.
    pub fn truncate(&mut self, id: BehaviorId, k: usize) -> BehaviorId {
        if let Some(&t) = self.truncations.get(&(id, k)) {
            return t;
        }
        let node = self.nodes[id.index()].clone();
        let t = if k == 0 || node.children.is_empty() {
            self.leaf(node.symbol)
        } else {
            let children: Vec<BehaviorId> = node
                .children
                .iter()
                .map(|&c| self.truncate(c, k - 1))
                .collect();
            self.intern(Node {
                symbol: node.symbol,
                terminal: node.terminal,
                children,
            })
        };
        self.truncations.insert((id, k), t);
        t
    }

    /// Number of sequences in the set.
    pub fn count(&self, id: BehaviorId) -> u128 {
        let n = &self.nodes[id.index()];
        u128::from(n.terminal) + n.children.iter().map(|&c| self.count(c)).sum::<u128>()
    }

    /// Explicit sequence set. Exponential in the horizon; meant for small sets.
    pub fn expand(&self, id: BehaviorId) -> OutputBehaviorSet {
        let mut out = Vec::new();
        let mut path = Vec::new();
        self.walk(id, &mut path, &mut out);
        OutputBehaviorSet::new(out)
    }

    fn walk(&self, id: BehaviorId, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let n = &self.nodes[id.index()];
        path.push(n.symbol);
        if n.terminal {
            out.push(path.clone());
        }
        for &c in &n.children {
            self.walk(c, path, out);
        }
        path.pop();
    }

    /// Interns an explicit set. Returns `None` for empty sets or sets whose
    /// sequences do not share a first symbol.
    pub fn insert(&mut self, set: &OutputBehaviorSet) -> Option<BehaviorId> {
        let first = set.first_symbol()?;
        if set.sequences().iter().any(|s| s[0] != first) {
            return None;
        }
        Some(self.insert_rec(set.sequences()))
    }

    fn insert_rec(&mut self, seqs: &[Vec<usize>]) -> BehaviorId {
        let symbol = seqs[0][0];
        let terminal = seqs.iter().any(|s| s.len() == 1);
        let mut groups: BTreeMap<usize, Vec<Vec<usize>>> = BTreeMap::new();
        for s in seqs.iter().filter(|s| s.len() > 1) {
            groups.entry(s[1]).or_default().push(s[1..].to_vec());
        }
        let children = groups.into_values().map(|g| self.insert_rec(&g)).collect();
        self.intern(Node {
            symbol,
            terminal,
            children,
        })
    }
}
