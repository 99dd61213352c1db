//! JSON and DOT renderings of quotient graphs.
//!
//! Key order follows struct field order and floats use the shortest
//! representation that parses back to the same bits, so equal runs give
//! byte-identical files.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::engine::Bisimulation;
use crate::model::HybridAutomaton;
use crate::transition::FiniteTransitionSystem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub k: usize,
    pub eta: f64,
    pub grid_size: usize,
    pub model_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representative {
    pub mode: String,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDoc {
    pub id: usize,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub representative: Option<Representative>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionDoc {
    pub src: usize,
    pub input: String,
    pub dst: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotientDoc {
    pub metadata: Metadata,
    pub states: Vec<StateDoc>,
    pub transitions: Vec<TransitionDoc>,
}

impl QuotientDoc {
    /// `None` when the run produced no quotient.
    pub fn from_run(h: &HybridAutomaton, run: &Bisimulation) -> Option<Self> {
        let q = run.quotient.as_ref()?;
        Some(QuotientDoc {
            metadata: Metadata {
                k: q.k,
                eta: run.eta,
                grid_size: run.grid.len(),
                model_digest: run.model_digest.clone(),
            },
            states: q
                .nodes
                .iter()
                .map(|n| {
                    let r = &run.grid.points[n.representative];
                    StateDoc {
                        id: n.id,
                        output: q.outputs[n.output].clone(),
                        representative: Some(Representative {
                            mode: h.mode(r.mode).name.clone(),
                            point: r.point.clone(),
                        }),
                    }
                })
                .collect(),
            transitions: q
                .edges
                .iter()
                .map(|e| TransitionDoc {
                    src: e.src,
                    input: e.input.clone(),
                    dst: e.dst,
                })
                .collect(),
        })
    }

    /// Explicit systems have no representatives; `k` and `eta` are zero.
    pub fn from_fts(s: &FiniteTransitionSystem, digest: &str) -> Self {
        let mut transitions: Vec<TransitionDoc> = s
            .transitions()
            .iter()
            .map(|&(a, u, b)| TransitionDoc {
                src: a,
                input: s.inputs()[u].clone(),
                dst: b,
            })
            .collect();
        transitions.sort_by(|x, y| (x.src, &x.input, x.dst).cmp(&(y.src, &y.input, y.dst)));
        QuotientDoc {
            metadata: Metadata {
                k: 0,
                eta: 0.0,
                grid_size: s.num_states(),
                model_digest: digest.to_string(),
            },
            states: (0..s.num_states())
                .map(|x| StateDoc {
                    id: x,
                    output: s.output_name(x).to_string(),
                    representative: None,
                })
                .collect(),
            transitions,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain data serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph quotient {\n  node [shape=box];\n");
        for st in &self.states {
            let _ = writeln!(
                out,
                "  n{} [label=\"{} #{}\"];",
                st.id,
                escape(&st.output),
                st.id
            );
        }
        for t in &self.transitions {
            let _ = writeln!(
                out,
                "  n{} -> n{} [label=\"{}\"];",
                t.src,
                t.dst,
                escape(&t.input)
            );
        }
        out.push_str("}\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
