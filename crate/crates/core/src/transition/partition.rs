use std::collections::HashMap;
use std::hash::Hash;

use super::behavior::{BehaviorDag, BehaviorId, OutputBehaviorSet};
use super::{FiniteTransitionSystem, TransitionError};

/// Equivalence classes over `0..n`, numbered by first member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub horizon: usize,
    class_of: Vec<usize>,
    classes: Vec<Vec<usize>>,
}

impl Partition {
    /// Groups indices by equal keys. Class ids follow first appearance, so
    /// equal partitions have equal `class_of` vectors.
    pub fn from_keys<K: Eq + Hash>(horizon: usize, keys: &[K]) -> Self {
        let mut ids: HashMap<&K, usize> = HashMap::new();
        let mut class_of = Vec::with_capacity(keys.len());
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for (i, k) in keys.iter().enumerate() {
            let next = classes.len();
            let c = *ids.entry(k).or_insert(next);
            if c == next {
                classes.push(Vec::new());
            }
            classes[c].push(i);
            class_of.push(c);
        }
        Partition {
            horizon,
            class_of,
            classes,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.class_of.len()
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn class_of(&self, x: usize) -> usize {
        self.class_of[x]
    }

    pub fn class_map(&self) -> &[usize] {
        &self.class_of
    }

    /// Every class of `self` lies inside one class of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.num_elements() == coarser.num_elements()
            && self.classes.iter().all(|c| {
                let k = coarser.class_of(c[0]);
                c.iter().all(|&x| coarser.class_of(x) == k)
            })
    }

    /// Same set of classes, ignoring the horizon.
    pub fn same_classes(&self, other: &Partition) -> bool {
        self.class_of == other.class_of
    }
}

/// Per-state `ℋ_k` ids for every horizon computed so far.
#[derive(Debug, Clone)]
pub struct HorizonTable<'a> {
    system: &'a FiniteTransitionSystem,
    dag: BehaviorDag,
    levels: Vec<Vec<BehaviorId>>,
}

impl<'a> HorizonTable<'a> {
    pub fn new(system: &'a FiniteTransitionSystem) -> Self {
        let mut dag = BehaviorDag::new();
        let level0 = (0..system.num_states())
            .map(|x| dag.leaf(system.output(x)))
            .collect();
        HorizonTable {
            system,
            dag,
            levels: vec![level0],
        }
    }

    /// Largest horizon available.
    pub fn horizon(&self) -> usize {
        self.levels.len() - 1
    }

    /// Computes `ℋ_{k+1}` from `ℋ_k` for every state.
    pub fn advance(&mut self) {
        let prev = self.levels.last().expect("level 0 exists").clone();
        let s = self.system;
        let next = (0..s.num_states())
            .map(|x| {
                let succ: Vec<BehaviorId> =
                    s.successor_states(x).iter().map(|&b| prev[b]).collect();
                self.dag.extend(s.output(x), &succ)
            })
            .collect();
        self.levels.push(next);
    }

    pub fn ensure(&mut self, k: usize) {
        while self.horizon() < k {
            self.advance();
        }
    }

    pub fn key(&self, k: usize, x: usize) -> BehaviorId {
        self.levels[k][x]
    }

    pub fn dag(&self) -> &BehaviorDag {
        &self.dag
    }

    /// `ℋ_k(S, x)` as an explicit set.
    pub fn behavior_set(&self, k: usize, x: usize) -> OutputBehaviorSet {
        self.dag.expand(self.levels[k][x])
    }

    /// `Q_k`, grouping states by equal `ℋ_k`.
    pub fn partition(&mut self, k: usize) -> Partition {
        self.ensure(k);
        Partition::from_keys(k, &self.levels[k])
    }

    /// `ℋ_k` of any member of `class`.
    pub fn class_key(&self, p: &Partition, class: usize) -> OutputBehaviorSet {
        self.behavior_set(p.horizon, p.classes()[class][0])
    }
}

/// `Q_k(S)`: states with equal output behavior sets at horizon `k`.
pub fn partition_by_horizon(s: &FiniteTransitionSystem, k: usize) -> Partition {
    HorizonTable::new(s).partition(k)
}

#[derive(Debug, Clone)]
pub struct Minimization {
    /// Smallest `k` with `|Q_{k+1}| = |Q_k|`.
    pub k: usize,
    pub partition: Partition,
    pub quotient: FiniteTransitionSystem,
    /// `Q_0 ..= Q_{k+1}`.
    pub trace: Vec<Partition>,
}

/// Refines `Q_k` until the class count stops growing and returns `S/Q_k`.
pub fn minimize_by_behavior(s: &FiniteTransitionSystem) -> Result<Minimization, TransitionError> {
    if let Some((state, y)) = s.output_nondeterminism() {
        return Err(TransitionError::NotOutputDeterministic {
            state,
            output: s.outputs()[y].clone(),
        });
    }
    let mut table = HorizonTable::new(s);
    let mut trace = vec![table.partition(0)];
    let mut k = 0;
    loop {
        let next = table.partition(k + 1);
        let cur = &trace[k];
        let fixed = next.num_classes() == cur.num_classes() && next.same_classes(cur);
        trace.push(next);
        if fixed {
            break;
        }
        k += 1;
    }
    let partition = trace[k].clone();
    let quotient = quotient(s, &partition)?;
    Ok(Minimization {
        k,
        partition,
        quotient,
        trace,
    })
}

/// `S/Q`: one state per class, a transition whenever some member has one.
pub fn quotient(
    s: &FiniteTransitionSystem,
    p: &Partition,
) -> Result<FiniteTransitionSystem, TransitionError> {
    if p.num_elements() != s.num_states() {
        return Err(TransitionError::PartitionSize {
            partition: p.num_elements(),
            system: s.num_states(),
        });
    }
    let mut outputs = Vec::with_capacity(p.num_classes());
    for (c, members) in p.classes().iter().enumerate() {
        let y = s.output(members[0]);
        if members.iter().any(|&x| s.output(x) != y) {
            return Err(TransitionError::OutputInconsistent { class: c });
        }
        outputs.push(y);
    }
    let ts = s
        .transitions()
        .iter()
        .map(|&(a, u, b)| (p.class_of(a), u, p.class_of(b)));
    FiniteTransitionSystem::new(s.inputs().to_vec(), s.outputs().to_vec(), outputs, ts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_self_loop() {
        let s = FiniteTransitionSystem::from_named(&[("a", "p")], &[("a", "u", "a")]).unwrap();
        let m = minimize_by_behavior(&s).unwrap();
        assert_eq!(m.k, 0);
        assert_eq!(m.partition.num_classes(), 1);
        assert_eq!(m.quotient, s);
    }

    #[test]
    fn horizon_zero_groups_by_output() {
        let s =
            FiniteTransitionSystem::from_named(&[("a", "p"), ("b", "p"), ("c", "q")], &[]).unwrap();
        assert_eq!(partition_by_horizon(&s, 0).num_classes(), 2);
        let same =
            FiniteTransitionSystem::from_named(&[("a", "p"), ("b", "p")], &[("a", "u", "b")])
                .unwrap();
        assert_eq!(partition_by_horizon(&same, 0).num_classes(), 1);
        assert_eq!(partition_by_horizon(&same, 1).num_classes(), 2);
    }

    #[test]
    fn bisimilar_branches_merge() {
        let s = FiniteTransitionSystem::from_named(
            &[
                ("r", "p"),
                ("a1", "q"),
                ("b1", "z"),
                ("a2", "q"),
                ("b2", "z"),
                ("r2", "p"),
            ],
            &[
                ("r", "u", "a1"),
                ("a1", "u", "b1"),
                ("r2", "v", "a2"),
                ("a2", "u", "b2"),
            ],
        )
        .unwrap();
        let m = minimize_by_behavior(&s).unwrap();
        assert_eq!(m.quotient.num_states(), 3);
        assert_eq!(m.partition.class_of(0), m.partition.class_of(5));
    }

    #[test]
    fn quotient_examples() {
        let s = FiniteTransitionSystem::from_named(
            &[("a", "p"), ("b", "p")],
            &[("a", "u", "b"), ("b", "v", "a")],
        )
        .unwrap();
        let identity = Partition::from_keys(0, &[0, 1]);
        assert_eq!(quotient(&s, &identity).unwrap(), s);
        let one = quotient(&s, &Partition::from_keys(0, &[0, 0])).unwrap();
        assert_eq!(one.num_states(), 1);
        assert_eq!(one.transitions(), &[(0, 0, 0), (0, 1, 0)]);

        let mixed = FiniteTransitionSystem::from_named(&[("a", "p"), ("b", "q")], &[]).unwrap();
        assert!(matches!(
            quotient(&mixed, &Partition::from_keys(0, &[0, 0])),
            Err(TransitionError::OutputInconsistent { class: 0 })
        ));
    }

    #[test]
    fn rejects_output_nondeterminism() {
        let s = FiniteTransitionSystem::from_named(
            &[("a", "p"), ("b", "q"), ("c", "q")],
            &[("a", "u", "b"), ("a", "v", "c")],
        )
        .unwrap();
        assert!(matches!(
            minimize_by_behavior(&s),
            Err(TransitionError::NotOutputDeterministic { state: 0, .. })
        ));
    }
}
