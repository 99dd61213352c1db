//! Grid sampling and behavior-horizon refinement for hybrid automata.
//!
//! [`bisimulate`] runs the whole pipeline at one grid resolution and
//! [`eta_sweep`] repeats it at shrinking resolutions to judge stability.

mod grid;
mod quotient;
mod refine;
mod sweep;

use thiserror::Error;

pub use grid::{sample_grid, sample_grid_with, state_distance, GridError, Provenance, SampleGrid};
pub use quotient::{
    build_quotient, check_gamma, finite_restriction, QuotientEdge, QuotientError, QuotientGraph,
    QuotientNode,
};
pub use refine::{
    Execution, RefineError, RefineOptions, RefinementTrace, Refiner, SampledSystem, Status, Step,
};
pub use sweep::{eta_sweep, SweepReport, SweepRound};

use crate::flow::{FlowConfig, FlowError};
use crate::mapped::{HybridState, MappedError, MappedSystem};
use crate::model::HybridAutomaton;
use crate::transition::{BehaviorId, Counterexample, FiniteTransitionSystem};

#[derive(Debug, Clone, Copy)]
pub struct BisimOptions {
    pub eta: f64,
    /// Lattice pitch; `None` means equal to `eta`.
    pub spacing: Option<f64>,
    pub flow: FlowConfig,
    pub refine: RefineOptions,
}

impl BisimOptions {
    pub fn new(eta: f64) -> Self {
        BisimOptions {
            eta,
            spacing: None,
            flow: FlowConfig::default(),
            refine: RefineOptions::default(),
        }
    }

    pub fn spacing(&self) -> f64 {
        self.spacing.unwrap_or(self.eta)
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("eta must be finite and positive, got {0}")]
    Eta(f64),
    #[error("sweep needs a factor in (0, 1) and at least 2 rounds")]
    Sweep,
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Refine(#[from] RefineError<MappedError>),
}

/// Everything one run produces.
#[derive(Debug, Clone)]
pub struct Bisimulation {
    pub eta: f64,
    pub model_digest: String,
    pub grid: SampleGrid,
    pub trace: RefinementTrace,
    /// Missing when the terminal sets do not close up over the grid.
    pub quotient: Option<QuotientGraph>,
    /// Why the quotient could not be assembled.
    pub quotient_error: Option<QuotientError>,
    pub status: Status,
    /// `Γ` violation found between the grid restriction and the quotient,
    /// checked at fixed points only.
    pub gamma: Option<Counterexample>,
    /// `ℋ_k` and `ℋ_{k+1}` per grid point, ids into `dag`.
    pub hk: Vec<BehaviorId>,
    pub hk1: Vec<BehaviorId>,
    pub dag: crate::transition::BehaviorDag,
    pub restriction: FiniteTransitionSystem,
}

impl Bisimulation {
    pub fn classes(&self) -> usize {
        self.trace.classes()
    }

    pub fn k(&self) -> usize {
        self.trace.k
    }

    /// Terminal class of every grid point.
    pub fn class_of(&self, i: usize) -> usize {
        self.trace.terminal().class_of(i)
    }

    /// Node of the quotient holding grid point `i`.
    pub fn node_of(&self, i: usize) -> Option<usize> {
        self.quotient.as_ref()?.node_of(self.hk[i])
    }
}

pub fn bisimulate(h: &HybridAutomaton, opts: &BisimOptions) -> Result<Bisimulation, EngineError> {
    if !(opts.eta.is_finite() && opts.eta > 0.0) {
        return Err(EngineError::Eta(opts.eta));
    }
    opts.flow.validate()?;
    let sys = MappedSystem::new(h, opts.flow);
    let mut grid = sample_grid_with(&sys, opts.spacing())?;
    grid.eta = opts.eta;
    log::info!("grid of {} points at eta {}", grid.len(), opts.eta);
    let mut refiner = Refiner::new(&sys, &grid.points, opts.refine.execution);
    let trace = refiner.run(&opts.refine)?;
    let k = trace.k;
    log::info!(
        "refinement {} at k={} with {} classes",
        trace.status.as_str(),
        k,
        trace.classes()
    );

    let hk = refiner.grid_keys(k);
    let hk1 = refiner.grid_keys(k + 1);
    let outputs = h.outputs.clone();
    let labels: Vec<Vec<(usize, String)>> = (0..grid.len())
        .map(|i| {
            refiner
                .grid_successors(i)
                .into_iter()
                .map(|(u, s)| (sys.output(s), u.to_string()))
                .collect()
        })
        .collect();
    let label = |i: usize, y: usize| {
        labels[i]
            .iter()
            .find(|(o, _)| *o == y)
            .map(|(_, u)| u.clone())
    };
    let built = build_quotient(refiner.dag_mut(), &hk, &hk1, k, &outputs, label);
    let dag = refiner.dag().clone();
    let restriction = finite_restriction(&dag, &hk, &hk1, &outputs, label);
    let mut status = trace.status;
    let (quotient, quotient_error) = match built {
        Ok(q) => (Some(q), None),
        Err(e) => {
            log::debug!("quotient assembly failed: {e}");
            if status == Status::FixedPoint {
                status = Status::Exhausted;
            }
            (None, Some(e))
        }
    };
    // Only a fixed point promises a bisimulation.
    let gamma = quotient
        .as_ref()
        .filter(|_| status == Status::FixedPoint)
        .and_then(|q| check_gamma(&restriction, q, &hk).err());
    Ok(Bisimulation {
        eta: opts.eta,
        model_digest: h.digest().to_string(),
        grid,
        trace,
        quotient,
        quotient_error,
        status,
        gamma,
        hk,
        hk1,
        dag,
        restriction,
    })
}

/// Recomputes the behavior set of every quotient representative from a
/// fresh refiner and returns the nodes whose set differs.
pub fn verify_representatives(
    h: &HybridAutomaton,
    run: &Bisimulation,
    flow: &FlowConfig,
) -> Result<Vec<usize>, EngineError> {
    let Some(q) = &run.quotient else {
        return Ok(Vec::new());
    };
    let sys = MappedSystem::new(h, *flow);
    let reps: Vec<HybridState> = q
        .nodes
        .iter()
        .map(|n| run.grid.points[n.representative].clone())
        .collect();
    let mut fresh = Refiner::new(&sys, &reps, Execution::Sequential);
    for _ in 0..run.k() {
        fresh.advance()?;
    }
    let keys = fresh.grid_keys(run.k());
    Ok(q.nodes
        .iter()
        .zip(keys)
        .filter(|(n, key)| fresh.dag().expand(*key) != run.dag.expand(n.behavior))
        .map(|(n, _)| n.id)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::thermostat;

    #[test]
    fn thermostat_has_twelve_classes() {
        let h = thermostat();
        let run = bisimulate(&h, &BisimOptions::new(0.05 * 2f64.sqrt())).unwrap();
        assert_eq!(run.grid.len(), 68);
        assert_eq!(run.status, Status::FixedPoint);
        assert_eq!(run.trace.class_counts(), vec![4, 6, 10, 12, 12]);
        assert_eq!(run.k(), 3);
        let q = run.quotient.as_ref().unwrap();
        assert_eq!(q.num_states(), 12);
        for n in &q.nodes {
            let want = match run.grid.provenance[n.representative] {
                Provenance::Guard { .. } => 2,
                Provenance::Equilibrium => 1,
            };
            assert_eq!(q.out_degree(n.id), want, "node {}", n.id);
        }
        assert!(run.gamma.is_none(), "{:?}", run.gamma);
        assert!(verify_representatives(&h, &run, &FlowConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn rejects_bad_eta() {
        assert!(matches!(
            bisimulate(&thermostat(), &BisimOptions::new(-1.0)),
            Err(EngineError::Eta(_))
        ));
    }
}
