//! Sampling checks of the modelling assumptions the mapped system relies on.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::flow::{exits_immediately, FlowConfig};
use crate::model::{HybridAutomaton, VectorField};
use crate::polytope::PolytopeUnion;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiagnosticKind {
    /// A strict `<` or `>` makes a set non-closed.
    NotClosed,
    /// A guard point from which the source flow does not exit at once.
    JumpNotAtExit,
    GuardOutsideInvariant,
    /// Two jumps from one mode reach different modes with the same output.
    OutputNondeterminism,
    /// The field or reset could not be evaluated at a sample.
    Evaluation,
}

impl DiagnosticKind {
    pub fn name(self) -> &'static str {
        match self {
            DiagnosticKind::NotClosed => "not-closed",
            DiagnosticKind::JumpNotAtExit => "jump-not-at-exit",
            DiagnosticKind::GuardOutsideInvariant => "guard-outside-invariant",
            DiagnosticKind::OutputNondeterminism => "output-nondeterminism",
            DiagnosticKind::Evaluation => "evaluation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub mode: Option<String>,
    pub edge: Option<String>,
    pub witness: Option<Vec<f64>>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind.name())?;
        if let Some(m) = &self.mode {
            write!(f, " mode {m}")?;
        }
        if let Some(e) = &self.edge {
            write!(f, " edge {e}")?;
        }
        if let Some(w) = &self.witness {
            write!(f, " at {w:?}")?;
        }
        write!(f, ": {}", self.message)
    }
}

/// Checks closedness of all sets, jumps only at exit points, guards inside
/// source invariants, and output determinism of the mode graph. Guard checks
/// use every guard vertex plus `probes` random points per guard component,
/// drawn from a generator seeded with `seed`.
pub fn validate_assumptions(
    h: &HybridAutomaton,
    probes: usize,
    seed: u64,
    cfg: &FlowConfig,
) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for m in &h.modes {
        if m.invariant.has_strict_constraints() {
            out.push(Diagnostic {
                kind: DiagnosticKind::NotClosed,
                mode: Some(m.name.clone()),
                edge: None,
                witness: None,
                message: "invariant uses a strict inequality".into(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for e in &h.edges {
        let src = h.mode(e.source);
        let diag = |kind, witness: Option<Vec<f64>>, message: String| Diagnostic {
            kind,
            mode: None,
            edge: Some(e.label().to_string()),
            witness,
            message,
        };
        if e.guard.has_strict_constraints() {
            out.push(diag(
                DiagnosticKind::NotClosed,
                None,
                "guard uses a strict inequality".into(),
            ));
        }
        let samples = guard_samples(&e.guard, probes, &mut rng);
        if let Some(p) = samples.iter().find(|p| !src.invariant.contains(p, 1e-9)) {
            out.push(diag(
                DiagnosticKind::GuardOutsideInvariant,
                Some(p.clone()),
                format!("guard point is outside the invariant of {}", src.name),
            ));
        }
        for p in &samples {
            match jump_at_exit(&src.field, &src.invariant, p, cfg) {
                Ok(true) => {}
                Ok(false) => {
                    out.push(diag(
                        DiagnosticKind::JumpNotAtExit,
                        Some(p.clone()),
                        format!("the flow of {} does not leave its invariant here", src.name),
                    ));
                    break;
                }
                Err(msg) => {
                    out.push(diag(DiagnosticKind::Evaluation, Some(p.clone()), msg));
                    break;
                }
            }
        }
        if let Some(p) = samples.iter().find(|p| e.reset.eval(p).is_err()) {
            out.push(diag(
                DiagnosticKind::Evaluation,
                Some(p.clone()),
                "reset cannot be evaluated".into(),
            ));
        }
    }
    for (mi, m) in h.modes.iter().enumerate() {
        let edges: Vec<_> = h
            .edges_from(crate::model::ModeId(mi))
            .map(|(_, e)| e)
            .collect();
        for (i, a) in edges.iter().enumerate() {
            if let Some(b) = edges[i + 1..].iter().find(|b| {
                b.target != a.target && h.mode_output(b.target) == h.mode_output(a.target)
            }) {
                out.push(Diagnostic {
                    kind: DiagnosticKind::OutputNondeterminism,
                    mode: Some(m.name.clone()),
                    edge: Some(format!("{} / {}", a.label(), b.label())),
                    witness: None,
                    message: format!(
                        "both targets output `{}`",
                        h.outputs[h.mode_output(a.target)]
                    ),
                });
            }
        }
    }
    out
}

fn guard_samples(guard: &PolytopeUnion, probes: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut pts = Vec::new();
    for c in guard.components() {
        if let Ok(v) = c.vertices() {
            pts.extend(v);
        }
        for _ in 0..probes {
            if let Some(p) = c.random_point(rng) {
                pts.push(p);
            }
        }
    }
    pts
}

/// `Ψ(ξ) = ξ`. Points where the outward rate vanishes on an active face are
/// accepted as limits of exit points.
fn jump_at_exit<F: VectorField + ?Sized>(
    field: &F,
    region: &PolytopeUnion,
    p: &[f64],
    cfg: &FlowConfig,
) -> Result<bool, String> {
    if exits_immediately(field, region, p, cfg).map_err(|e| e.to_string())? {
        return Ok(true);
    }
    let f = field.eval(p).map_err(|e| e.to_string())?;
    let tangent = region
        .components()
        .iter()
        .filter(|c| c.contains(p, cfg.event_tol))
        .all(|c| {
            c.constraints()
                .iter()
                .any(|k| k.violation(p) >= -cfg.event_tol && k.outward_rate(&f) >= -cfg.event_tol)
        });
    Ok(tangent && region.contains(p, cfg.event_tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_model, thermostat};

    #[test]
    fn thermostat_is_clean() {
        let d = validate_assumptions(&thermostat(), 20, 1, &FlowConfig::default());
        assert!(d.is_empty(), "{d:#?}");
    }

    #[test]
    fn interior_guard_is_reported() {
        let h = parse_model(
            "vars x\nmode A output a\n  flow x' = 1\n  invariant 0 <= x <= 1\nmode B output b\n  flow x' = -1\n  invariant 0 <= x <= 1\nedge A -> B input go\n  guard x = 0.5\n",
        )
        .unwrap();
        let d = validate_assumptions(&h, 5, 1, &FlowConfig::default());
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, DiagnosticKind::JumpNotAtExit);
        assert_eq!(d[0].edge.as_deref(), Some("A -> B"));
        assert_eq!(d[0].witness, Some(vec![0.5]));
    }

    #[test]
    fn output_nondeterminism_and_strictness() {
        let h = parse_model(
            "vars x\nmode A output a\n  flow x' = 1\n  invariant 0 <= x < 1\nmode B output b\n  flow x' = 1\n  invariant 0 <= x <= 1\nmode C output b\n  flow x' = 1\n  invariant 0 <= x <= 1\nedge A -> B input u\n  guard x = 1\nedge A -> C input v\n  guard x = 1\n",
        )
        .unwrap();
        let d = validate_assumptions(&h, 3, 9, &FlowConfig::default());
        let kinds: Vec<_> = d.iter().map(|d| d.kind).collect();
        assert!(kinds.contains(&DiagnosticKind::NotClosed));
        assert!(kinds.contains(&DiagnosticKind::OutputNondeterminism));
    }

    #[test]
    fn deterministic_for_a_seed() {
        let h = thermostat();
        let cfg = FlowConfig::default();
        assert_eq!(
            validate_assumptions(&h, 10, 3, &cfg),
            validate_assumptions(&h, 10, 3, &cfg)
        );
    }
}
