//! Hybrid automaton data model and the line-oriented model file loader.
//!
//! ```text
//! # comment
//! vars T1 T2
//! const k = 0.5                      # global constant
//! mode OFF_safe output OFF_safe
//!   const u = 0                      # mode-scoped constant
//!   flow T1' = -T1 + u
//!   flow T2' = -T2 + T1
//!   invariant 0 <= T1 <= 1; 0 <= T2 <= 1; abs(T1 - T2) <= 0.25
//! edge OFF_safe -> ON_unsafe input ON
//!   guard T2 - T1 = 0.25; T1 >= 0.25; T1 <= 0.75
//!   reset T1 = T1                    # omitted resets are the identity
//! ```
//!
//! Each `invariant` (or `guard`) line is one convex component; several lines
//! form their union.

use std::collections::HashMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::constraint::parse_constraint_with;
use crate::expr::{parse_expr, CompiledExpr, Expr, ExprError, Func};
use crate::polytope::{ConvexPolytope, PolytopeUnion, VERTEX_TOL};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Expr { line: usize, source: ExprError },
    #[error("line {line}: undeclared variable `{name}`")]
    UndeclaredVariable { line: usize, name: String },
    #[error("line {line}: duplicate mode `{name}`")]
    DuplicateMode { line: usize, name: String },
    #[error("line {line}: edge `{edge}` references unknown mode `{name}`")]
    UnknownMode {
        line: usize,
        edge: String,
        name: String,
    },
    #[error("line {line}: {msg}")]
    DimensionMismatch { line: usize, msg: String },
    #[error("line {line}: abs() is not allowed in {what} (fields and resets must be smooth)")]
    NonSmooth { line: usize, what: &'static str },
    #[error("edge `{edge}` has an empty guard component")]
    EmptyGuard { edge: String },
    #[error("mode `{mode}` has an empty invariant component")]
    EmptyInvariant { mode: String },
    #[error("edge `{edge}`: guard point {point:?} lies outside the source invariant")]
    GuardOutsideInvariant { edge: String, point: Vec<f64> },
    #[error("model declares no modes")]
    NoModes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeId(pub usize);

/// Compiled vector field `dξ/dt = f(ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    components: Vec<CompiledExpr>,
}

impl Field {
    pub fn new(exprs: &[Expr], vars: &[String]) -> Result<Self, ExprError> {
        Ok(Field {
            components: exprs
                .iter()
                .map(|e| e.compile(vars))
                .collect::<Result<_, _>>()?,
        })
    }
}

/// Anything that can be integrated by the flow engine.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;
    fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), ExprError>;

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>, ExprError> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }
}

impl VectorField for Field {
    fn dim(&self) -> usize {
        self.components.len()
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), ExprError> {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval(x)?;
        }
        Ok(())
    }
}

/// Closure-backed field, handy for hand-coded reference dynamics.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f }
    }
}

impl<F> VectorField for FnField<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), ExprError> {
        (self.f)(x, out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(ExprError::NonFinite(f64::NAN))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mode {
    pub name: String,
    pub output: String,
    pub field_exprs: Vec<Expr>,
    pub field: Field,
    pub invariant: PolytopeUnion,
}

#[derive(Debug, Clone)]
pub struct JumpEdge {
    pub source: ModeId,
    pub input: String,
    pub target: ModeId,
    pub guard: PolytopeUnion,
    pub reset_exprs: Vec<Expr>,
    pub reset: Field,
    pub(crate) label: String,
}

impl JumpEdge {
    /// `source -> target` as written in the model file.
    pub fn label(&self) -> &str {
        &self.label
    }
}

#[derive(Debug, Clone)]
pub struct HybridAutomaton {
    pub variables: Vec<String>,
    pub modes: Vec<Mode>,
    pub edges: Vec<JumpEdge>,
    /// Input symbols in first-use order.
    pub inputs: Vec<String>,
    /// Output symbols in first-use order; output ids index this list.
    pub outputs: Vec<String>,
    mode_outputs: Vec<usize>,
    digest: String,
}

impl HybridAutomaton {
    pub fn dim(&self) -> usize {
        self.variables.len()
    }

    pub fn mode(&self, id: ModeId) -> &Mode {
        &self.modes[id.0]
    }

    pub fn edge(&self, id: EdgeId) -> &JumpEdge {
        &self.edges[id.0]
    }

    pub fn mode_id(&self, name: &str) -> Option<ModeId> {
        self.modes.iter().position(|m| m.name == name).map(ModeId)
    }

    pub fn output_id(&self, symbol: &str) -> Option<usize> {
        self.outputs.iter().position(|o| o == symbol)
    }

    /// Output id of a mode (the symbolic output is a function of the mode).
    pub fn mode_output(&self, id: ModeId) -> usize {
        self.mode_outputs[id.0]
    }

    pub fn edges_from(&self, id: ModeId) -> impl Iterator<Item = (EdgeId, &JumpEdge)> {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.source == id)
            .map(|(i, e)| (EdgeId(i), e))
    }

    /// Hex SHA-256 of the source text the automaton was parsed from.
    pub fn digest(&self) -> &str {
        &self.digest
    }
}

impl fmt::Display for HybridAutomaton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} modes, {} edges, {} continuous variables",
            self.modes.len(),
            self.edges.len(),
            self.dim()
        )
    }
}

struct RawMode {
    line: usize,
    name: String,
    output: String,
    consts: HashMap<String, f64>,
    flows: Vec<(usize, String, Expr)>,
    invariant: Vec<(usize, String)>,
}

struct RawEdge {
    line: usize,
    source: String,
    target: String,
    input: String,
    guard: Vec<(usize, String)>,
    resets: Vec<(usize, String, Expr)>,
}

enum Block {
    None,
    Mode(RawMode),
    Edge(RawEdge),
}

/// Parses and links a model file.
pub fn parse_model(text: &str) -> Result<HybridAutomaton, ModelError> {
    let mut vars: Option<Vec<String>> = None;
    let mut globals: HashMap<String, f64> = HashMap::new();
    let mut modes: Vec<RawMode> = Vec::new();
    let mut edges: Vec<RawEdge> = Vec::new();
    let mut block = Block::None;

    let flush = |block: &mut Block, modes: &mut Vec<RawMode>, edges: &mut Vec<RawEdge>| {
        match std::mem::replace(block, Block::None) {
            Block::Mode(m) => modes.push(m),
            Block::Edge(e) => edges.push(e),
            Block::None => {}
        }
    };

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (kw, rest) = match content.split_once(char::is_whitespace) {
            Some((k, r)) => (k, r.trim()),
            None => (content, ""),
        };
        let syntax = |msg: String| ModelError::Syntax { line, msg };
        match kw {
            "vars" => {
                if vars.is_some() {
                    return Err(syntax("duplicate `vars` line".into()));
                }
                let names: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
                if names.is_empty() {
                    return Err(syntax("`vars` needs at least one name".into()));
                }
                for n in &names {
                    if !is_ident(n) {
                        return Err(syntax(format!("invalid variable name `{n}`")));
                    }
                }
                vars = Some(names);
            }
            "const" => {
                let (name, value) = rest
                    .split_once('=')
                    .ok_or_else(|| syntax("expected `const <name> = <value>`".into()))?;
                let name = name.trim();
                if !is_ident(name) {
                    return Err(syntax(format!("invalid constant name `{name}`")));
                }
                let scope = match &block {
                    Block::Mode(m) => Some(&m.consts),
                    _ => None,
                };
                let mut env = globals.clone();
                if let Some(s) = scope {
                    env.extend(s.iter().map(|(k, v)| (k.clone(), *v)));
                }
                let v = parse_expr(value.trim())
                    .and_then(|e| e.eval(&env))
                    .map_err(|source| ModelError::Expr { line, source })?;
                match &mut block {
                    Block::Mode(m) => {
                        m.consts.insert(name.to_string(), v);
                    }
                    _ => {
                        flush(&mut block, &mut modes, &mut edges);
                        globals.insert(name.to_string(), v);
                    }
                }
            }
            "mode" => {
                flush(&mut block, &mut modes, &mut edges);
                let parts: Vec<&str> = rest.split_whitespace().collect();
                let (name, output) = match parts.as_slice() {
                    [name] => (name.to_string(), name.to_string()),
                    [name, "output", out] => (name.to_string(), out.to_string()),
                    _ => return Err(syntax("expected `mode <name> [output <symbol>]`".into())),
                };
                if !is_ident(&name) {
                    return Err(syntax(format!("invalid mode name `{name}`")));
                }
                block = Block::Mode(RawMode {
                    line,
                    name,
                    output,
                    consts: HashMap::new(),
                    flows: Vec::new(),
                    invariant: Vec::new(),
                });
            }
            "edge" => {
                flush(&mut block, &mut modes, &mut edges);
                let parts: Vec<&str> = rest.split_whitespace().collect();
                let (source, target, input) = match parts.as_slice() {
                    [s, "->", t, "input", u] => (s.to_string(), t.to_string(), u.to_string()),
                    _ => {
                        return Err(syntax(
                            "expected `edge <src> -> <dst> input <symbol>`".into(),
                        ))
                    }
                };
                block = Block::Edge(RawEdge {
                    line,
                    source,
                    target,
                    input,
                    guard: Vec::new(),
                    resets: Vec::new(),
                });
            }
            "flow" => {
                let Block::Mode(m) = &mut block else {
                    return Err(syntax("`flow` outside a mode block".into()));
                };
                let (lhs, rhs) = rest
                    .split_once('=')
                    .ok_or_else(|| syntax("expected `flow <var>' = <expr>`".into()))?;
                let var = lhs
                    .trim()
                    .strip_suffix('\'')
                    .ok_or_else(|| syntax("flow target must be written `<var>'`".into()))?
                    .trim()
                    .to_string();
                let e =
                    parse_expr(rhs.trim()).map_err(|source| ModelError::Expr { line, source })?;
                m.flows.push((line, var, e));
            }
            "invariant" => {
                let Block::Mode(m) = &mut block else {
                    return Err(syntax("`invariant` outside a mode block".into()));
                };
                m.invariant.push((line, rest.to_string()));
            }
            "guard" => {
                let Block::Edge(e) = &mut block else {
                    return Err(syntax("`guard` outside an edge block".into()));
                };
                e.guard.push((line, rest.to_string()));
            }
            "reset" => {
                let Block::Edge(ed) = &mut block else {
                    return Err(syntax("`reset` outside an edge block".into()));
                };
                let (lhs, rhs) = rest
                    .split_once('=')
                    .ok_or_else(|| syntax("expected `reset <var> = <expr>`".into()))?;
                let e =
                    parse_expr(rhs.trim()).map_err(|source| ModelError::Expr { line, source })?;
                ed.resets.push((line, lhs.trim().to_string(), e));
            }
            other => return Err(syntax(format!("unknown keyword `{other}`"))),
        }
    }
    flush(&mut block, &mut modes, &mut edges);

    let vars = vars.ok_or(ModelError::Syntax {
        line: 1,
        msg: "missing `vars` line".into(),
    })?;
    if modes.is_empty() {
        return Err(ModelError::NoModes);
    }
    link(text, vars, globals, modes, edges)
}

fn link(
    text: &str,
    vars: Vec<String>,
    globals: HashMap<String, f64>,
    raw_modes: Vec<RawMode>,
    raw_edges: Vec<RawEdge>,
) -> Result<HybridAutomaton, ModelError> {
    let n = vars.len();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut modes = Vec::with_capacity(raw_modes.len());
    let mut outputs: Vec<String> = Vec::new();
    let mut mode_outputs = Vec::new();

    for m in raw_modes {
        if modes.iter().any(|x: &Mode| x.name == m.name) {
            return Err(ModelError::DuplicateMode {
                line: m.line,
                name: m.name,
            });
        }
        let mut env = globals.clone();
        env.extend(m.consts.iter().map(|(k, v)| (k.clone(), *v)));
        let mut field: Vec<Option<Expr>> = vec![None; n];
        for (line, var, e) in &m.flows {
            let i = vars
                .iter()
                .position(|v| v == var)
                .ok_or(ModelError::UndeclaredVariable {
                    line: *line,
                    name: var.clone(),
                })?;
            if field[i].is_some() {
                return Err(ModelError::DimensionMismatch {
                    line: *line,
                    msg: format!("duplicate flow for `{var}` in mode `{}`", m.name),
                });
            }
            let e = e.substitute(&env);
            check_vars(&e, &vars, *line)?;
            if e.uses_function(Func::Abs) {
                return Err(ModelError::NonSmooth {
                    line: *line,
                    what: "vector fields",
                });
            }
            field[i] = Some(e);
        }
        let field_exprs: Vec<Expr> = field
            .into_iter()
            .enumerate()
            .map(|(i, e)| {
                e.ok_or_else(|| ModelError::DimensionMismatch {
                    line: m.line,
                    msg: format!("mode `{}` has no flow for `{}`", m.name, vars[i]),
                })
            })
            .collect::<Result<_, _>>()?;
        let compiled = Field::new(&field_exprs, &vars).map_err(|source| ModelError::Expr {
            line: m.line,
            source,
        })?;
        let invariant = if m.invariant.is_empty() {
            PolytopeUnion::new(n, vec![ConvexPolytope::new(n, Vec::new())])
        } else {
            parse_union(&m.invariant, &vars, &env)?
        };
        for c in invariant.components() {
            if !c.is_nonempty(&mut rng, 2000) {
                return Err(ModelError::EmptyInvariant {
                    mode: m.name.clone(),
                });
            }
        }
        let oid = match outputs.iter().position(|o| *o == m.output) {
            Some(i) => i,
            None => {
                outputs.push(m.output.clone());
                outputs.len() - 1
            }
        };
        mode_outputs.push(oid);
        modes.push(Mode {
            name: m.name,
            output: m.output,
            field_exprs,
            field: compiled,
            invariant,
        });
    }

    let mut edges = Vec::with_capacity(raw_edges.len());
    let mut inputs: Vec<String> = Vec::new();
    for e in raw_edges {
        let label = format!("{} -> {}", e.source, e.target);
        let find = |name: &str| {
            modes
                .iter()
                .position(|m| m.name == name)
                .map(ModeId)
                .ok_or_else(|| ModelError::UnknownMode {
                    line: e.line,
                    edge: label.clone(),
                    name: name.to_string(),
                })
        };
        let source = find(&e.source)?;
        let target = find(&e.target)?;
        if e.guard.is_empty() {
            return Err(ModelError::EmptyGuard { edge: label });
        }
        let guard = parse_union(&e.guard, &vars, &globals)?;
        for c in guard.components() {
            if !c.is_nonempty(&mut rng, 2000) {
                return Err(ModelError::EmptyGuard { edge: label });
            }
            // guard ⊆ source invariant, checked on the guard's vertices
            if let Ok(verts) = c.vertices() {
                for v in verts {
                    if !modes[source.0].invariant.contains(&v, 1e3 * VERTEX_TOL) {
                        return Err(ModelError::GuardOutsideInvariant {
                            edge: label,
                            point: v,
                        });
                    }
                }
            }
        }
        let mut reset: Vec<Expr> = vars.iter().map(|v| Expr::Var(v.clone())).collect();
        let mut seen = vec![false; n];
        for (line, var, expr) in &e.resets {
            let i = vars
                .iter()
                .position(|v| v == var)
                .ok_or(ModelError::UndeclaredVariable {
                    line: *line,
                    name: var.clone(),
                })?;
            if seen[i] {
                return Err(ModelError::DimensionMismatch {
                    line: *line,
                    msg: format!("duplicate reset for `{var}` on edge `{label}`"),
                });
            }
            seen[i] = true;
            let expr = expr.substitute(&globals);
            check_vars(&expr, &vars, *line)?;
            if expr.uses_function(Func::Abs) {
                return Err(ModelError::NonSmooth {
                    line: *line,
                    what: "reset maps",
                });
            }
            reset[i] = expr;
        }
        let compiled = Field::new(&reset, &vars).map_err(|source| ModelError::Expr {
            line: e.line,
            source,
        })?;
        if !inputs.contains(&e.input) {
            inputs.push(e.input.clone());
        }
        edges.push(JumpEdge {
            source,
            input: e.input,
            target,
            guard,
            reset_exprs: reset,
            reset: compiled,
            label,
        });
    }

    let digest = hex::encode(Sha256::digest(text.as_bytes()));
    Ok(HybridAutomaton {
        variables: vars,
        modes,
        edges,
        inputs,
        outputs,
        mode_outputs,
        digest,
    })
}

fn parse_union(
    lines: &[(usize, String)],
    vars: &[String],
    consts: &HashMap<String, f64>,
) -> Result<PolytopeUnion, ModelError> {
    let n = vars.len();
    let mut comps = Vec::new();
    for (line, text) in lines {
        let mut cs = Vec::new();
        for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let parsed =
                parse_constraint_with(part, vars, consts).map_err(|source| match source {
                    ExprError::UnknownVariable(name) => {
                        ModelError::UndeclaredVariable { line: *line, name }
                    }
                    source => ModelError::Expr {
                        line: *line,
                        source,
                    },
                })?;
            cs.extend(parsed);
        }
        if cs.is_empty() {
            return Err(ModelError::Syntax {
                line: *line,
                msg: "empty constraint list".into(),
            });
        }
        comps.push(ConvexPolytope::new(n, cs));
    }
    Ok(PolytopeUnion::new(n, comps))
}

fn check_vars(e: &Expr, vars: &[String], line: usize) -> Result<(), ModelError> {
    for v in e.variables() {
        if !vars.iter().any(|x| x == v) {
            return Err(ModelError::UndeclaredVariable {
                line,
                name: v.to_string(),
            });
        }
    }
    Ok(())
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// The two-room heater model shipped with the crate.
pub const THERMOSTAT_MODEL: &str = include_str!("../models/thermostat.hds");

pub fn thermostat() -> HybridAutomaton {
    parse_model(THERMOSTAT_MODEL).expect("bundled thermostat model parses")
}
