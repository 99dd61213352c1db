//! The event-sampled transition system of a hybrid automaton.
//!
//! States are pre-jump guard points plus the points where the flow stops. The
//! successor of a guard point for output `y` takes the enabled jump whose
//! target mode outputs `y`, applies its reset, and flows in the target mode
//! until the flow exits the invariant or settles at an equilibrium.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use thiserror::Error;

use crate::expr::ExprError;
use crate::flow::{
    exits_immediately, polish_equilibrium, transverse, FlowConfig, FlowError, FlowKind,
};
use crate::model::{EdgeId, HybridAutomaton, ModeId, VectorField};
use crate::polytope::{dist, norm, PolytopeUnion};

/// Input label of equilibrium self-loops.
pub const EQUILIBRIUM_INPUT: &str = "*";

/// `(x, ξ)`. Equality and hashing are bit-exact on the point.
#[derive(Debug, Clone)]
pub struct HybridState {
    pub mode: ModeId,
    pub point: Vec<f64>,
}

impl HybridState {
    pub fn new(mode: ModeId, point: Vec<f64>) -> Self {
        HybridState { mode, point }
    }
}

impl PartialEq for HybridState {
    fn eq(&self, other: &Self) -> bool {
        self.mode == other.mode
            && self.point.len() == other.point.len()
            && self
                .point
                .iter()
                .zip(&other.point)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Eq for HybridState {}

impl Hash for HybridState {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.mode.hash(state);
        for v in &self.point {
            v.to_bits().hash(state);
        }
    }
}

impl Ord for HybridState {
    fn cmp(&self, other: &Self) -> Ordering {
        self.mode.cmp(&other.mode).then_with(|| {
            for (a, b) in self.point.iter().zip(&other.point) {
                match a.total_cmp(b) {
                    Ordering::Equal => continue,
                    o => return o,
                }
            }
            self.point.len().cmp(&other.point.len())
        })
    }
}

impl PartialOrd for HybridState {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StateClass {
    /// Pre-jump state; the enabled edges in model order.
    GuardPoint {
        edges: Vec<EdgeId>,
    },
    Equilibrium,
    /// The flow exits at once and no guard is enabled.
    Blocking,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MappedError {
    #[error("point {point:?} is outside the invariant of mode {mode}")]
    OutsideInvariant { mode: String, point: Vec<f64> },
    #[error("point {point:?} of mode {mode} is an interior point (no guard, no equilibrium, flow continues)")]
    Interior { mode: String, point: Vec<f64> },
    #[error("reset of edge {edge} maps {from:?} to {to:?}, outside the target invariant")]
    LandingOutside {
        edge: String,
        from: Vec<f64>,
        to: Vec<f64>,
    },
    #[error("flow in mode {mode} from {start:?} neither exits nor settles within t_max")]
    Timeout { mode: String, start: Vec<f64> },
    #[error("integration escaped the invariant of mode {mode} from {start:?}")]
    Escaped { mode: String, start: Vec<f64> },
    #[error("state {mode} {point:?} has jumps to different modes with output `{output}`")]
    OutputNondeterminism {
        mode: String,
        point: Vec<f64>,
        output: String,
    },
    #[error("reset of edge {edge}: {source}")]
    Reset { edge: String, source: ExprError },
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// One mapped-system transition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    /// Input symbol of the jump, or [`EQUILIBRIUM_INPUT`].
    pub input: String,
    /// Output id of the successor.
    pub output: usize,
    pub state: HybridState,
}

/// Lazily evaluated mapped system of an automaton under a flow configuration.
#[derive(Debug, Clone)]
pub struct MappedSystem<'a> {
    h: &'a HybridAutomaton,
    cfg: FlowConfig,
    equilibria: Vec<Vec<Vec<f64>>>,
}

/// Probes per axis for the equilibrium search.
const EQ_PROBES: usize = 9;

impl<'a> MappedSystem<'a> {
    pub fn new(h: &'a HybridAutomaton, cfg: FlowConfig) -> Self {
        let equilibria = h
            .modes
            .iter()
            .map(|m| find_equilibria(&m.field, &m.invariant, EQ_PROBES))
            .collect();
        MappedSystem { h, cfg, equilibria }
    }

    pub fn automaton(&self) -> &'a HybridAutomaton {
        self.h
    }

    pub fn config(&self) -> &FlowConfig {
        &self.cfg
    }

    /// Equilibria of a mode's field inside its invariant, canonical order.
    pub fn equilibria(&self, mode: ModeId) -> &[Vec<f64>] {
        &self.equilibria[mode.0]
    }

    pub fn output(&self, s: &HybridState) -> usize {
        self.h.mode_output(s.mode)
    }

    fn membership_tol(&self) -> f64 {
        10.0 * self.cfg.event_tol
    }

    pub fn classify(&self, s: &HybridState) -> Result<StateClass, MappedError> {
        let mode = self.h.mode(s.mode);
        let tol = self.membership_tol();
        if !mode.invariant.contains(&s.point, tol) {
            return Err(MappedError::OutsideInvariant {
                mode: mode.name.clone(),
                point: s.point.clone(),
            });
        }
        let edges: Vec<EdgeId> = self
            .h
            .edges_from(s.mode)
            .filter(|(_, e)| e.guard.contains(&s.point, tol))
            .map(|(id, _)| id)
            .collect();
        if !edges.is_empty() {
            return Ok(StateClass::GuardPoint { edges });
        }
        let f = mode
            .field
            .eval(&s.point)
            .map_err(|source| FlowError::Field {
                point: s.point.clone(),
                source,
            })?;
        if norm(&f) <= self.cfg.eq_tol {
            return Ok(StateClass::Equilibrium);
        }
        if exits_immediately(&mode.field, &mode.invariant, &s.point, &self.cfg)? {
            return Ok(StateClass::Blocking);
        }
        // Tangential exits have no first-order outward rate.
        if on_boundary(&mode.invariant, &s.point, self.cfg.event_tol) {
            if let FlowKind::Exit { time, .. } =
                transverse(&mode.field, &mode.invariant, &s.point, &self.cfg)?.kind
            {
                if time <= self.cfg.step {
                    return Ok(StateClass::Blocking);
                }
            }
        }
        Err(MappedError::Interior {
            mode: mode.name.clone(),
            point: s.point.clone(),
        })
    }

    /// `ϕ(s, y)`: the unique successor whose output is `y`, if any.
    pub fn successor(&self, s: &HybridState, y: usize) -> Result<Option<Transition>, MappedError> {
        match self.classify(s)? {
            StateClass::Equilibrium => Ok((y == self.output(s)).then(|| Transition {
                input: EQUILIBRIUM_INPUT.to_string(),
                output: y,
                state: s.clone(),
            })),
            StateClass::Blocking => Ok(None),
            StateClass::GuardPoint { edges } => self.jump_successor(s, &edges, y),
        }
    }

    fn jump_successor(
        &self,
        s: &HybridState,
        edges: &[EdgeId],
        y: usize,
    ) -> Result<Option<Transition>, MappedError> {
        let mut found: Option<Transition> = None;
        for &eid in edges {
            let edge = self.h.edge(eid);
            if self.h.mode_output(edge.target) != y {
                continue;
            }
            let state = self.jump_and_flow(s, eid)?;
            match &found {
                None => {
                    found = Some(Transition {
                        input: edge.input.clone(),
                        output: y,
                        state,
                    })
                }
                Some(t) if t.state == state => {}
                Some(_) => {
                    return Err(MappedError::OutputNondeterminism {
                        mode: self.h.mode(s.mode).name.clone(),
                        point: s.point.clone(),
                        output: self.h.outputs[y].clone(),
                    })
                }
            }
        }
        Ok(found)
    }

    fn jump_and_flow(&self, s: &HybridState, eid: EdgeId) -> Result<HybridState, MappedError> {
        let edge = self.h.edge(eid);
        let target = self.h.mode(edge.target);
        let landed = edge
            .reset
            .eval(&s.point)
            .map_err(|source| MappedError::Reset {
                edge: edge.label().to_string(),
                source,
            })?;
        if !target.invariant.contains(&landed, self.membership_tol()) {
            return Err(MappedError::LandingOutside {
                edge: edge.label().to_string(),
                from: s.point.clone(),
                to: landed,
            });
        }
        let r = transverse(&target.field, &target.invariant, &landed, &self.cfg)?;
        match r.kind {
            FlowKind::Exit { point, .. } => Ok(HybridState::new(edge.target, point)),
            FlowKind::Equilibrium { point, .. } => Ok(HybridState::new(
                edge.target,
                self.settle(edge.target, point),
            )),
            FlowKind::Timeout { .. } => Err(MappedError::Timeout {
                mode: target.name.clone(),
                start: landed,
            }),
            FlowKind::Escaped { .. } => Err(MappedError::Escaped {
                mode: target.name.clone(),
                start: landed,
            }),
        }
    }

    /// Newton-polishes a near-equilibrium and snaps it to a known
    /// equilibrium so that converging flows reach one canonical state.
    fn settle(&self, mode: ModeId, point: Vec<f64>) -> Vec<f64> {
        let m = self.h.mode(mode);
        let root = polish_equilibrium(&m.field, &point, 1e-12).unwrap_or_else(|| point.clone());
        let snap = (1e3 * self.cfg.eq_tol).max(1e-9);
        self.equilibria[mode.0]
            .iter()
            .find(|e| dist(e, &root) <= snap)
            .cloned()
            .unwrap_or(root)
    }

    /// All transitions from `s`, ordered by output id.
    pub fn successors(&self, s: &HybridState) -> Result<Vec<Transition>, MappedError> {
        let mut out = Vec::new();
        match self.classify(s)? {
            StateClass::Equilibrium => out.push(Transition {
                input: EQUILIBRIUM_INPUT.to_string(),
                output: self.output(s),
                state: s.clone(),
            }),
            StateClass::Blocking => {}
            StateClass::GuardPoint { edges } => {
                let mut ys: Vec<usize> = edges
                    .iter()
                    .map(|&e| self.h.mode_output(self.h.edge(e).target))
                    .collect();
                ys.sort_unstable();
                ys.dedup();
                for y in ys {
                    out.extend(self.jump_successor(s, &edges, y)?);
                }
            }
        }
        Ok(out)
    }

    /// Outputs `y` for which `ϕ(s, y)` exists.
    pub fn enabled_outputs(&self, s: &HybridState) -> Result<Vec<usize>, MappedError> {
        Ok(self.successors(s)?.into_iter().map(|t| t.output).collect())
    }
}

fn on_boundary(region: &PolytopeUnion, p: &[f64], tol: f64) -> bool {
    region.contains(p, tol) && region.components().iter().all(|c| c.violation(p) >= -tol)
}

/// Zeros of `field` inside `region`, found by Newton from a lattice of
/// `probes` points per axis over the region's bounding box.
pub fn find_equilibria<F: VectorField + ?Sized>(
    field: &F,
    region: &PolytopeUnion,
    probes: usize,
) -> Vec<Vec<f64>> {
    let Some((lo, hi)) = region.bounding_box() else {
        return Vec::new();
    };
    let n = lo.len();
    let probes = probes.max(2);
    let mut found: Vec<Vec<f64>> = Vec::new();
    let total = probes.pow(n as u32);
    for idx in 0..total {
        let mut rem = idx;
        let guess: Vec<f64> = (0..n)
            .map(|d| {
                let i = rem % probes;
                rem /= probes;
                lo[d] + (hi[d] - lo[d]) * i as f64 / (probes - 1) as f64
            })
            .collect();
        let Some(root) = polish_equilibrium(field, &guess, 1e-12) else {
            continue;
        };
        if !region.contains(&root, 1e-9) {
            continue;
        }
        if !found.iter().any(|e| dist(e, &root) <= 1e-7) {
            found.push(root);
        }
    }
    found.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    found
}

/// Free-function form of [`MappedSystem::classify`].
pub fn classify(
    h: &HybridAutomaton,
    s: &HybridState,
    cfg: &FlowConfig,
) -> Result<StateClass, MappedError> {
    MappedSystem::new(h, *cfg).classify(s)
}

/// Free-function form of [`MappedSystem::successor`].
pub fn successor(
    h: &HybridAutomaton,
    s: &HybridState,
    y: usize,
    cfg: &FlowConfig,
) -> Result<Option<Transition>, MappedError> {
    MappedSystem::new(h, *cfg).successor(s, y)
}

/// Free-function form of [`MappedSystem::enabled_outputs`].
pub fn enabled_outputs(
    h: &HybridAutomaton,
    s: &HybridState,
    cfg: &FlowConfig,
) -> Result<Vec<usize>, MappedError> {
    MappedSystem::new(h, *cfg).enabled_outputs(s)
}

impl fmt::Display for HybridState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}(", self.mode.0)?;
        for (i, v) in self.point.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_model, thermostat};

    fn st(h: &HybridAutomaton, mode: &str, p: [f64; 2]) -> HybridState {
        HybridState::new(h.mode_id(mode).unwrap(), p.to_vec())
    }

    #[test]
    fn classification() {
        let h = thermostat();
        let m = MappedSystem::new(&h, FlowConfig::default());
        match m.classify(&st(&h, "OFF_safe", [0.5, 0.75])).unwrap() {
            StateClass::GuardPoint { edges } => assert_eq!(edges.len(), 2),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            m.classify(&st(&h, "ON_safe", [1.0, 1.0])).unwrap(),
            StateClass::Equilibrium
        );
        assert!(matches!(
            m.classify(&st(&h, "ON_safe", [0.5, 0.5])),
            Err(MappedError::Interior { .. })
        ));
        assert!(matches!(
            m.classify(&st(&h, "ON_safe", [1.0, 0.0])),
            Err(MappedError::OutsideInvariant { .. })
        ));
    }

    #[test]
    fn blocking_point() {
        let h = parse_model(
            "vars x\nmode A output a\n  flow x' = 1\n  invariant 0 <= x <= 1\nmode B output b\n  flow x' = 1\n  invariant 0 <= x <= 2\n",
        )
        .unwrap();
        let m = MappedSystem::new(&h, FlowConfig::default());
        assert_eq!(
            m.classify(&HybridState::new(ModeId(0), vec![1.0])).unwrap(),
            StateClass::Blocking
        );
        assert!(m
            .enabled_outputs(&HybridState::new(ModeId(0), vec![1.0]))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn equilibrium_self_loop() {
        let h = thermostat();
        let m = MappedSystem::new(&h, FlowConfig::default());
        let s = st(&h, "ON_safe", [1.0, 1.0]);
        let own = m.output(&s);
        let t = m.successor(&s, own).unwrap().unwrap();
        assert_eq!(t.state, s);
        assert_eq!(t.input, EQUILIBRIUM_INPUT);
        let other = h.output_id("OFF_safe").unwrap();
        assert_eq!(m.successor(&s, other).unwrap(), None);
        assert_eq!(m.enabled_outputs(&s).unwrap(), vec![own]);
    }

    #[test]
    fn equilibria_are_found() {
        let h = thermostat();
        let m = MappedSystem::new(&h, FlowConfig::default());
        assert_eq!(
            m.equilibria(h.mode_id("OFF_safe").unwrap()),
            &[vec![0.0, 0.0]]
        );
        let on = m.equilibria(h.mode_id("ON_safe").unwrap());
        assert_eq!(on.len(), 1);
        assert!(dist(&on[0], &[1.0, 1.0]) < 1e-12);
        assert!(m.equilibria(h.mode_id("ON_unsafe").unwrap()).is_empty());
    }

    #[test]
    fn immediate_jump_chain() {
        // OFF_safe exit point; ON flow in the upper triangle leaves at once
        let h = thermostat();
        let m = MappedSystem::new(&h, FlowConfig::default());
        let s = st(&h, "OFF_safe", [0.5, 0.75]);
        let y = h.output_id("ON_unsafe").unwrap();
        let t = m.successor(&s, y).unwrap().unwrap();
        assert_eq!(t.input, "ON");
        assert_eq!(t.state.mode, h.mode_id("ON_unsafe").unwrap());
        assert!(dist(&t.state.point, &[0.5, 0.75]) < 1e-12);
        assert_eq!(m.enabled_outputs(&s).unwrap().len(), 2);
    }

    #[test]
    fn successor_matches_closed_form() {
        let h = thermostat();
        let m = MappedSystem::new(&h, FlowConfig::default());
        let s = st(&h, "OFF_safe", [0.5, 0.75]);
        let y = h.output_id("OFF_unsafe").unwrap();
        let t = m.successor(&s, y).unwrap().unwrap();
        // OFF flow: T1 = a e^{-t}, T2 = (a t + b) e^{-t}; re-entry at T2 - T1 = 0.25
        let g = |t: f64| (0.5 * t + 0.75) * (-t).exp() - 0.5 * (-t).exp() - 0.25;
        let (mut lo, mut hi) = (0.5, 10.0);
        assert!(g(lo) > 0.0 && g(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let expect = [0.5 * (-lo).exp(), (0.5 * lo + 0.75) * (-lo).exp()];
        assert_eq!(t.state.mode, h.mode_id("OFF_unsafe").unwrap());
        assert!(
            dist(&t.state.point, &expect) < 1e-6,
            "{:?} vs {expect:?}",
            t.state.point
        );
        assert!(h
            .mode(t.state.mode)
            .invariant
            .contains(&t.state.point, 1e-9));
        // deterministic and itself a mapped-system state
        assert_eq!(m.successor(&s, y).unwrap().unwrap(), t);
        assert!(matches!(
            m.classify(&t.state).unwrap(),
            StateClass::GuardPoint { .. }
        ));
    }

    #[test]
    fn convergence_reaches_canonical_equilibrium() {
        // ON flow from the ON_unsafe lower guard near (0.9, 0.65) converges to (1, 1)
        let h = thermostat();
        let m = MappedSystem::new(&h, FlowConfig::default());
        let s = st(&h, "ON_unsafe", [0.9, 0.65]);
        let y = h.output_id("ON_safe").unwrap();
        let t = m.successor(&s, y).unwrap().unwrap();
        let on = h.mode_id("ON_safe").unwrap();
        assert_eq!(t.state, HybridState::new(on, m.equilibria(on)[0].clone()));
    }
}
