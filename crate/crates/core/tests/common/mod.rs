#![allow(dead_code)]

use hybisim::engine::{
    build_quotient, check_gamma, finite_restriction, Execution, RefineOptions, RefinementTrace,
    Refiner,
};
use hybisim::transition::FiniteTransitionSystem;
use rand::Rng;

/// Closed-form heater trajectory from `(a, b)` with input `u`.
pub fn heater(u: f64, a: f64, b: f64, t: f64) -> [f64; 2] {
    let e = (-t).exp();
    [u + (a - u) * e, u + ((a - u) * t + (b - u)) * e]
}

/// Signed distance-like violation of the safe region.
fn safe_violation(p: [f64; 2]) -> f64 {
    [
        (p[0] - p[1]).abs() - 0.25,
        -p[0],
        p[0] - 1.0,
        -p[1],
        p[1] - 1.0,
    ]
    .into_iter()
    .fold(f64::NEG_INFINITY, f64::max)
}

/// First time the closed-form trajectory leaves the safe region, with the
/// exit point. Scans at `1e-3` and bisects to machine precision.
pub fn heater_exit(u: f64, a: f64, b: f64, t_max: f64) -> Option<(f64, [f64; 2])> {
    let dt = 1e-3;
    let mut t0 = 0.0;
    while t0 < t_max {
        let t1 = t0 + dt;
        if safe_violation(heater(u, a, b, t1)) > 0.0 {
            let (mut lo, mut hi) = (t0, t1);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if safe_violation(heater(u, a, b, mid)) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some((lo, heater(u, a, b, lo)));
        }
        t0 = t1;
    }
    None
}

/// Uniform point of the safe region, kept `margin` away from its boundary.
pub fn random_safe_start<R: Rng>(rng: &mut R, margin: f64) -> [f64; 2] {
    loop {
        let p = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        if safe_violation(p) < -margin {
            return p;
        }
    }
}

/// Collapses all input labels and duplicate edges.
pub fn unlabeled(s: &FiniteTransitionSystem) -> FiniteTransitionSystem {
    let mut ts: Vec<(usize, usize, usize)> =
        s.transitions().iter().map(|&(a, _, b)| (a, 0, b)).collect();
    ts.sort();
    ts.dedup();
    let outs = (0..s.num_states()).map(|x| s.output(x)).collect();
    FiniteTransitionSystem::new(vec!["_".into()], s.outputs().to_vec(), outs, ts).unwrap()
}

/// Runs the sampled-state refiner over every state of an explicit system.
pub fn refine_fts(
    s: &FiniteTransitionSystem,
    extra_rounds: usize,
    execution: Execution,
) -> (RefinementTrace, Refiner<'_, FiniteTransitionSystem>) {
    let grid: Vec<usize> = (0..s.num_states()).collect();
    let mut r = Refiner::new(s, &grid, execution);
    let trace = r
        .run(&RefineOptions {
            extra_rounds,
            execution,
            ..RefineOptions::default()
        })
        .unwrap();
    (trace, r)
}

/// Engine quotient of an explicit system plus the result of the `Γ` check.
pub fn engine_quotient(s: &FiniteTransitionSystem) -> (FiniteTransitionSystem, bool) {
    let (trace, mut r) = refine_fts(s, 0, Execution::Sequential);
    let hk = r.grid_keys(trace.k);
    let hk1 = r.grid_keys(trace.k + 1);
    let labels: Vec<Vec<(usize, String)>> = (0..s.num_states())
        .map(|i| {
            r.grid_successors(i)
                .into_iter()
                .map(|(u, &t)| (s.output(t), u.to_string()))
                .collect()
        })
        .collect();
    let label = |i: usize, y: usize| {
        labels[i]
            .iter()
            .find(|(o, _)| *o == y)
            .map(|(_, u)| u.clone())
    };
    let q = build_quotient(r.dag_mut(), &hk, &hk1, trace.k, s.outputs(), label).unwrap();
    let restriction = finite_restriction(r.dag(), &hk, &hk1, s.outputs(), label);
    let ok = check_gamma(&restriction, &q, &hk).is_ok();
    (q.to_fts(), ok)
}
