use serde::Serialize;

use super::{bisimulate, BisimOptions, Bisimulation, EngineError, GridError, Status};
use crate::model::HybridAutomaton;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRound {
    pub eta: f64,
    pub grid_size: usize,
    pub k: usize,
    pub classes: usize,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rounds: Vec<SweepRound>,
    /// Last two rounds reached a fixed point with equal class counts and
    /// isomorphic quotients.
    pub stable: bool,
}

impl SweepReport {
    pub fn status_str(&self) -> &'static str {
        if self.stable {
            "stable"
        } else {
            "inconclusive"
        }
    }
}

/// Runs [`bisimulate`] at `eta0 * factor^i` for `i < rounds`, scaling the
/// lattice pitch by the same factor. Returns the last run with the report.
pub fn eta_sweep(
    h: &HybridAutomaton,
    eta0: f64,
    factor: f64,
    rounds: usize,
    opts: &BisimOptions,
) -> Result<(Option<Bisimulation>, SweepReport), EngineError> {
    if !(factor > 0.0 && factor < 1.0) || rounds < 2 {
        return Err(EngineError::Sweep);
    }
    let ratio = opts.spacing() / opts.eta;
    let mut report = Vec::with_capacity(rounds);
    let mut last: Vec<Option<Bisimulation>> = Vec::new();
    for i in 0..rounds {
        let eta = eta0 * factor.powi(i as i32);
        let round_opts = BisimOptions {
            eta,
            spacing: Some(eta * ratio),
            ..*opts
        };
        match bisimulate(h, &round_opts) {
            Ok(run) => {
                report.push(SweepRound {
                    eta,
                    grid_size: run.grid.len(),
                    k: run.k(),
                    classes: run.classes(),
                    status: run.status,
                });
                last.push(Some(run));
            }
            // A lattice too coarse to hit a guard counts as an exhausted round.
            Err(EngineError::Grid(e @ GridError::NoPoints { .. })) => {
                log::warn!("eta {eta}: {e}");
                report.push(SweepRound {
                    eta,
                    grid_size: 0,
                    k: 0,
                    classes: 0,
                    status: Status::Exhausted,
                });
                last.push(None);
            }
            Err(e) => return Err(e),
        }
        if last.len() > 2 {
            last.remove(0);
        }
    }
    let stable = match (&last[0], &last[1]) {
        (Some(a), Some(b)) => {
            a.status == Status::FixedPoint
                && b.status == Status::FixedPoint
                && a.classes() == b.classes()
                && match (&a.quotient, &b.quotient) {
                    (Some(qa), Some(qb)) => qa.isomorphic(qb),
                    _ => false,
                }
        }
        _ => false,
    };
    Ok((
        last.pop().flatten(),
        SweepReport {
            rounds: report,
            stable,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    #[test]
    fn argument_checks() {
        let h = crate::model::thermostat();
        let o = BisimOptions::new(0.1);
        assert!(matches!(
            eta_sweep(&h, 0.1, 1.0, 3, &o),
            Err(EngineError::Sweep)
        ));
        assert!(matches!(
            eta_sweep(&h, 0.1, 0.5, 1, &o),
            Err(EngineError::Sweep)
        ));
    }

    #[test]
    fn two_equal_rounds_are_stable() {
        // one mode with an attracting equilibrium and nothing else
        let h = parse_model("vars x\nmode A output a\n  flow x' = -x\n  invariant -1 <= x <= 1\n")
            .unwrap();
        let (run, rep) = eta_sweep(&h, 0.5, 0.5, 2, &BisimOptions::new(0.5)).unwrap();
        assert!(rep.stable);
        assert_eq!(rep.rounds.len(), 2);
        assert_eq!(run.unwrap().classes(), 1);
    }
}
