mod common;

use common::{engine_quotient, refine_fts, unlabeled};
use hybisim::engine::{Execution, Status};
use hybisim::transition::random::{random_output_deterministic, RandomSpec};
use hybisim::transition::{
    are_isomorphic, check_bisimulation, classical_minimize, minimize_by_behavior,
    FiniteTransitionSystem,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn systems(seed: u64, n: usize) -> Vec<FiniteTransitionSystem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| random_output_deterministic(&mut rng, &RandomSpec::default()))
        .collect()
}

#[test]
fn sampled_refiner_reproduces_explicit_trace() {
    for s in systems(1, 150) {
        let m = minimize_by_behavior(&s).unwrap();
        let (trace, _) = refine_fts(&s, 0, Execution::Sequential);
        assert_eq!(trace.k, m.k);
        assert_eq!(trace.partitions.len(), m.trace.len());
        for (a, b) in trace.partitions.iter().zip(&m.trace) {
            assert!(a.same_classes(b));
        }
        assert_ne!(trace.status, Status::Inconclusive);
    }
}

#[test]
fn parallel_and_sequential_agree() {
    for s in systems(2, 60) {
        let (a, _) = refine_fts(&s, 2, Execution::Sequential);
        let (b, _) = refine_fts(&s, 2, Execution::Parallel);
        assert_eq!(a.k, b.k);
        assert!(a
            .partitions
            .iter()
            .zip(&b.partitions)
            .all(|(x, y)| x.same_classes(y)));
    }
}

#[test]
fn engine_quotient_matches_explicit_quotient() {
    for s in systems(3, 150) {
        let (q, gamma_ok) = engine_quotient(&s);
        assert!(gamma_ok);
        let m = minimize_by_behavior(&s).unwrap();
        assert!(are_isomorphic(
            &unlabeled(&q),
            &unlabeled(&m.quotient),
            false
        ));
    }
}

#[test]
fn behavior_and_classical_minimization_agree() {
    for s in systems(4, 150) {
        let m = minimize_by_behavior(&s).unwrap();
        let (p, q) = classical_minimize(&s);
        assert_eq!(m.quotient.num_states(), q.num_states());
        let rel: Vec<(usize, usize)> = (0..s.num_states())
            .map(|x| (m.partition.class_of(x), p.class_of(x)))
            .collect();
        check_bisimulation(&m.quotient, &q, &rel).unwrap();
        assert!(are_isomorphic(&m.quotient, &q, true));
    }
}

#[test]
fn refinement_is_monotone_and_stays_fixed() {
    for s in systems(5, 100) {
        let (trace, _) = refine_fts(&s, 3, Execution::Sequential);
        for w in trace.partitions.windows(2) {
            assert!(w[1].refines(&w[0]));
            assert!(w[1].num_classes() >= w[0].num_classes());
        }
        for extra in &trace.partitions[trace.k..] {
            assert!(extra.same_classes(trace.terminal()));
        }
    }
}
