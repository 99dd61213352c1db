//! Random output-deterministic systems for property tests and benchmarks.

use rand::Rng;

use super::FiniteTransitionSystem;

#[derive(Debug, Clone, Copy)]
pub struct RandomSpec {
    pub max_states: usize,
    pub max_inputs: usize,
    pub max_outputs: usize,
    /// Probability that a state has a successor for a given output.
    pub edge_prob: f64,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec {
            max_states: 15,
            max_inputs: 3,
            max_outputs: 4,
            edge_prob: 0.5,
        }
    }
}

/// Draws a system where each state has at most one successor per output
/// symbol, reached through one or more random input labels. Sinks occur.
pub fn random_output_deterministic<R: Rng>(
    rng: &mut R,
    shape: &RandomSpec,
) -> FiniteTransitionSystem {
    let n = rng.random_range(1..=shape.max_states);
    let ni = rng.random_range(1..=shape.max_inputs);
    let no = rng.random_range(1..=shape.max_outputs);
    let output_map: Vec<usize> = (0..n).map(|_| rng.random_range(0..no)).collect();
    let mut by_output: Vec<Vec<usize>> = vec![Vec::new(); no];
    for (x, &y) in output_map.iter().enumerate() {
        by_output[y].push(x);
    }
    let mut ts = Vec::new();
    for x in 0..n {
        for targets in by_output.iter().filter(|t| !t.is_empty()) {
            if !rng.random_bool(shape.edge_prob) {
                continue;
            }
            let dst = targets[rng.random_range(0..targets.len())];
            let first = rng.random_range(0..ni);
            ts.push((x, first, dst));
            if ni > 1 && rng.random_bool(0.2) {
                ts.push((x, rng.random_range(0..ni), dst));
            }
        }
    }
    let inputs = (0..ni).map(|i| format!("u{i}")).collect();
    let outputs = (0..no).map(|i| format!("y{i}")).collect();
    FiniteTransitionSystem::new(inputs, outputs, output_map, ts).expect("indices are in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transition::is_output_deterministic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_systems_are_output_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let s = random_output_deterministic(&mut rng, &RandomSpec::default());
            assert!(is_output_deterministic(&s));
            assert!(s.num_states() <= 15 && s.inputs().len() <= 3 && s.outputs().len() <= 4);
        }
    }
}
