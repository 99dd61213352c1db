use thiserror::Error;

use crate::flow::FlowConfig;
use crate::mapped::{HybridState, MappedError, MappedSystem};
use crate::model::{EdgeId, HybridAutomaton, ModeId};
use crate::polytope::{dist, GeometryError};

/// Where a grid point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Guard { edge: EdgeId, component: usize },
    Equilibrium,
}

/// Finite sample `ℜ` of mapped-system states.
#[derive(Debug, Clone)]
pub struct SampleGrid {
    /// Ball radius the grid is meant to resolve.
    pub eta: f64,
    /// Lattice pitch in state-space units.
    pub spacing: f64,
    pub points: Vec<HybridState>,
    pub provenance: Vec<Provenance>,
}

impl SampleGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("spacing must be finite and positive, got {0}")]
    Spacing(f64),
    #[error("guard of edge {edge} has a {dim}-dimensional section; sampling supports at most 2")]
    GuardDimension { edge: String, dim: usize },
    #[error("guard of edge {edge}: {source}")]
    Geometry { edge: String, source: GeometryError },
    #[error("no grid point on the guard of edge {edge}; decrease the spacing")]
    NoPoints { edge: String },
    #[error("points have dimensions {0} and {1}")]
    Dimension(usize, usize),
    #[error(transparent)]
    Mapped(#[from] MappedError),
}

/// Samples every guard component on a lattice of pitch `spacing` and adds
/// every equilibrium of every mode. Points that are not mapped-system states
/// are dropped. `η` is recorded equal to the pitch.
pub fn sample_grid(
    h: &HybridAutomaton,
    spacing: f64,
    cfg: &FlowConfig,
) -> Result<SampleGrid, GridError> {
    sample_grid_with(&MappedSystem::new(h, *cfg), spacing)
}

pub fn sample_grid_with(sys: &MappedSystem<'_>, spacing: f64) -> Result<SampleGrid, GridError> {
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(GridError::Spacing(spacing));
    }
    let h = sys.automaton();
    let mut points: Vec<HybridState> = Vec::new();
    let mut provenance = Vec::new();
    let mut push = |s: HybridState, p: Provenance, points: &mut Vec<HybridState>| {
        let dup = points
            .iter()
            .any(|q| q.mode == s.mode && dist(&q.point, &s.point) <= 1e-12);
        if !dup {
            points.push(s);
            provenance.push(p);
        }
    };
    for (ei, e) in h.edges.iter().enumerate() {
        let mut any = false;
        for (ci, comp) in e.guard.components().iter().enumerate() {
            let dim = comp.section_dim();
            if dim > 2 {
                return Err(GridError::GuardDimension {
                    edge: e.label().to_string(),
                    dim,
                });
            }
            let pts = comp
                .lattice(spacing)
                .map_err(|source| GridError::Geometry {
                    edge: e.label().to_string(),
                    source,
                })?;
            for p in pts {
                let s = HybridState::new(e.source, p);
                match sys.classify(&s) {
                    Ok(_) => {
                        any = true;
                        push(
                            s,
                            Provenance::Guard {
                                edge: EdgeId(ei),
                                component: ci,
                            },
                            &mut points,
                        );
                    }
                    Err(err) => log::debug!("dropping grid point {s}: {err}"),
                }
            }
        }
        if !any {
            return Err(GridError::NoPoints {
                edge: e.label().to_string(),
            });
        }
    }
    for mi in 0..h.modes.len() {
        for eq in sys.equilibria(ModeId(mi)) {
            let s = HybridState::new(ModeId(mi), eq.clone());
            if sys.classify(&s).is_ok() {
                push(s, Provenance::Equilibrium, &mut points);
            }
        }
    }
    Ok(SampleGrid {
        eta: spacing,
        spacing,
        points,
        provenance,
    })
}

/// Euclidean distance within a mode, infinite across modes.
pub fn state_distance(r: &HybridState, s: &HybridState) -> Result<f64, GridError> {
    if r.point.len() != s.point.len() {
        return Err(GridError::Dimension(r.point.len(), s.point.len()));
    }
    if r.mode != s.mode {
        return Ok(f64::INFINITY);
    }
    Ok(dist(&r.point, &s.point))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_model, thermostat};

    #[test]
    fn distances() {
        let a = HybridState::new(ModeId(0), vec![0.0, 0.0]);
        let b = HybridState::new(ModeId(0), vec![3.0, 4.0]);
        let c = HybridState::new(ModeId(1), vec![0.0, 0.0]);
        assert_eq!(state_distance(&a, &b).unwrap(), 5.0);
        assert_eq!(state_distance(&a, &c).unwrap(), f64::INFINITY);
        assert_eq!(state_distance(&a, &a).unwrap(), 0.0);
        assert!(state_distance(&a, &HybridState::new(ModeId(0), vec![1.0])).is_err());
    }

    #[test]
    fn thermostat_grid() {
        let h = thermostat();
        let eta = 0.05 * 2f64.sqrt();
        let g = sample_grid(&h, eta, &FlowConfig::default()).unwrap();
        assert_eq!(g.len(), 68);
        let eqs = g
            .provenance
            .iter()
            .filter(|p| **p == Provenance::Equilibrium)
            .count();
        assert_eq!(eqs, 2);
        // consecutive samples along the OFF_safe guard are at most `eta` apart
        let off = h.mode_id("OFF_safe").unwrap();
        let seg: Vec<_> = g
            .points
            .iter()
            .filter(|s| s.mode == off && s.point != [0.0, 0.0])
            .collect();
        assert_eq!(seg.len(), 11);
        assert!(seg
            .windows(2)
            .all(|w| dist(&w[0].point, &w[1].point) <= eta + 1e-12));
    }

    #[test]
    fn point_guard_gives_one_point() {
        let h = parse_model(
            "vars x y\nmode A output a\n  flow x' = 1\n  flow y' = 0\n  invariant 0 <= x <= 1; 0 <= y <= 1\nmode B output b\n  flow x' = 0\n  flow y' = 1\n  invariant 0 <= x <= 2; 0 <= y <= 1\nedge A -> B input u\n  guard x = 1; y = 0.5\n",
        )
        .unwrap();
        let g = sample_grid(&h, 0.1, &FlowConfig::default()).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.points[0].point, vec![1.0, 0.5]);
        assert!(matches!(
            sample_grid(&h, 0.0, &FlowConfig::default()),
            Err(GridError::Spacing(_))
        ));
    }
}
