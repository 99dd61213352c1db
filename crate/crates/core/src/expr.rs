//! Arithmetic expressions used for vector fields, reset maps and constraints.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := atom ('^' integer)?
//! atom   := number | ident | ident '(' expr ')' | '(' expr ')' | '-' atom
//! ```
//!
//! Unary minus applies to an atom, so `-x^2` reads as `(-x)^2`. Exponents are
//! non-negative integer literals, which keeps every expression total and
//! smooth away from divisions.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown function `{name}` at position {pos}")]
    UnknownFunction { name: String, pos: usize },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite result ({0})")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    fn apply(self, a: f64, b: f64) -> Result<f64, ExprError> {
        match self {
            BinOp::Add => Ok(a + b),
            BinOp::Sub => Ok(a - b),
            BinOp::Mul => Ok(a * b),
            BinOp::Div => {
                if b == 0.0 {
                    Err(ExprError::DivisionByZero)
                } else {
                    Ok(a / b)
                }
            }
        }
    }
}

/// Elementary functions accepted by the parser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Sqrt,
    Abs,
}

impl Func {
    pub const ALL: [Func; 5] = [Func::Exp, Func::Sin, Func::Cos, Func::Sqrt, Func::Abs];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Exp => x.exp(),
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Sqrt => x.sqrt(),
            Func::Abs => x.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(e: Expr) -> Expr {
        Expr::Neg(Box::new(e))
    }

    pub fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn pow(base: Expr, exp: u32) -> Expr {
        Expr::Pow(Box::new(base), exp)
    }

    pub fn call(f: Func, arg: Expr) -> Expr {
        Expr::Call(f, Box::new(arg))
    }

    /// Evaluates against a name → value map.
    pub fn eval(&self, env: &HashMap<String, f64>) -> Result<f64, ExprError> {
        self.eval_with(&|name| env.get(name).copied())
    }

    pub fn eval_with(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64, ExprError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(name) => {
                lookup(name).ok_or_else(|| ExprError::UnknownVariable(name.clone()))?
            }
            Expr::Neg(e) => -e.eval_with(lookup)?,
            Expr::Binary(op, a, b) => op.apply(a.eval_with(lookup)?, b.eval_with(lookup)?)?,
            Expr::Pow(base, n) => base.eval_with(lookup)?.powi(*n as i32),
            Expr::Call(f, arg) => f.apply(arg.eval_with(lookup)?),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::NonFinite(v))
        }
    }

    /// Visits every variable name in the tree, left to right.
    pub fn variables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(n) => out.push(n),
            Expr::Neg(e) | Expr::Pow(e, _) | Expr::Call(_, e) => e.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn uses_function(&self, f: Func) -> bool {
        match self {
            Expr::Num(_) | Expr::Var(_) => false,
            Expr::Neg(e) | Expr::Pow(e, _) => e.uses_function(f),
            Expr::Call(g, e) => *g == f || e.uses_function(f),
            Expr::Binary(_, a, b) => a.uses_function(f) || b.uses_function(f),
        }
    }

    /// Replaces variables found in `consts` by their literal values.
    pub fn substitute(&self, consts: &HashMap<String, f64>) -> Expr {
        match self {
            Expr::Num(v) => Expr::Num(*v),
            Expr::Var(n) => match consts.get(n) {
                Some(v) => Expr::Num(*v),
                None => Expr::Var(n.clone()),
            },
            Expr::Neg(e) => Expr::neg(e.substitute(consts)),
            Expr::Binary(op, a, b) => Expr::binary(*op, a.substitute(consts), b.substitute(consts)),
            Expr::Pow(e, n) => Expr::pow(e.substitute(consts), *n),
            Expr::Call(f, e) => Expr::call(*f, e.substitute(consts)),
        }
    }

    /// Resolves variable names to positions in `vars`.
    pub fn compile(&self, vars: &[String]) -> Result<CompiledExpr, ExprError> {
        Ok(CompiledExpr {
            root: Node::build(self, vars)?,
        })
    }

    /// Decomposes the expression as `coeffs · x + constant` when it is affine
    /// in `vars`; returns `None` otherwise.
    pub fn affine_form(&self, vars: &[String]) -> Result<Option<(Vec<f64>, f64)>, ExprError> {
        let n = vars.len();
        let r = match self {
            Expr::Num(v) => Some((vec![0.0; n], *v)),
            Expr::Var(name) => {
                let i = vars
                    .iter()
                    .position(|v| v == name)
                    .ok_or_else(|| ExprError::UnknownVariable(name.clone()))?;
                let mut c = vec![0.0; n];
                c[i] = 1.0;
                Some((c, 0.0))
            }
            Expr::Neg(e) => e
                .affine_form(vars)?
                .map(|(c, k)| (c.into_iter().map(|x| -x).collect(), -k)),
            Expr::Binary(op, a, b) => {
                let (Some((ca, ka)), Some((cb, kb))) = (a.affine_form(vars)?, b.affine_form(vars)?)
                else {
                    return Ok(None);
                };
                let a_const = ca.iter().all(|x| *x == 0.0);
                let b_const = cb.iter().all(|x| *x == 0.0);
                match op {
                    BinOp::Add => Some((zip_with(&ca, &cb, |x, y| x + y), ka + kb)),
                    BinOp::Sub => Some((zip_with(&ca, &cb, |x, y| x - y), ka - kb)),
                    BinOp::Mul if b_const => Some((ca.iter().map(|x| x * kb).collect(), ka * kb)),
                    BinOp::Mul if a_const => Some((cb.iter().map(|x| x * ka).collect(), ka * kb)),
                    BinOp::Div if b_const => {
                        if kb == 0.0 {
                            return Err(ExprError::DivisionByZero);
                        }
                        Some((ca.iter().map(|x| x / kb).collect(), ka / kb))
                    }
                    _ => None,
                }
            }
            Expr::Pow(e, p) => match (e.affine_form(vars)?, p) {
                (_, 0) => Some((vec![0.0; n], 1.0)),
                (Some(form), 1) => Some(form),
                (Some((c, k)), p) if c.iter().all(|x| *x == 0.0) => Some((c, k.powi(*p as i32))),
                _ => None,
            },
            Expr::Call(f, e) => match e.affine_form(vars)? {
                Some((c, k)) if c.iter().all(|x| *x == 0.0) => Some((c, f.apply(k))),
                _ => None,
            },
        };
        Ok(r)
    }
}

fn zip_with(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect()
}

/// Expression with variables resolved to slot indices, for hot-loop evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledExpr {
    root: Node,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Pow(Box<Node>, u32),
    Call(Func, Box<Node>),
}

impl Node {
    fn build(e: &Expr, vars: &[String]) -> Result<Node, ExprError> {
        Ok(match e {
            Expr::Num(v) => Node::Num(*v),
            Expr::Var(name) => Node::Var(
                vars.iter()
                    .position(|v| v == name)
                    .ok_or_else(|| ExprError::UnknownVariable(name.clone()))?,
            ),
            Expr::Neg(e) => Node::Neg(Box::new(Node::build(e, vars)?)),
            Expr::Binary(op, a, b) => Node::Binary(
                *op,
                Box::new(Node::build(a, vars)?),
                Box::new(Node::build(b, vars)?),
            ),
            Expr::Pow(e, n) => Node::Pow(Box::new(Node::build(e, vars)?), *n),
            Expr::Call(f, e) => Node::Call(*f, Box::new(Node::build(e, vars)?)),
        })
    }

    /// Same rule as the tree walk: every intermediate must be finite.
    fn eval(&self, x: &[f64]) -> Result<f64, ExprError> {
        let v = match self {
            Node::Num(v) => *v,
            Node::Var(i) => x[*i],
            Node::Neg(e) => -e.eval(x)?,
            Node::Binary(op, a, b) => op.apply(a.eval(x)?, b.eval(x)?)?,
            Node::Pow(e, n) => e.eval(x)?.powi(*n as i32),
            Node::Call(f, e) => f.apply(e.eval(x)?),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::NonFinite(v))
        }
    }
}

impl CompiledExpr {
    pub fn eval(&self, x: &[f64]) -> Result<f64, ExprError> {
        self.root.eval(x)
    }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Le,
    Ge,
    Lt,
    Gt,
    Eq,
}

pub(crate) fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '<' | '>' | '=' => {
                let next_eq = bytes.get(i + 1) == Some(&b'=');
                let t = match (c, next_eq) {
                    ('<', true) => Tok::Le,
                    ('>', true) => Tok::Ge,
                    ('=', true) => Tok::Eq,
                    ('<', false) => Tok::Lt,
                    ('>', false) => Tok::Gt,
                    _ => Tok::Eq,
                };
                i += if next_eq { 2 } else { 1 };
                out.push((t, start));
                continue;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_digit() || bytes[j] == b'.') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        while k < bytes.len() && bytes[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let s = &text[i..j];
                let v: f64 = s.parse().map_err(|_| ExprError::Syntax {
                    pos: start,
                    msg: format!("malformed number `{s}`"),
                })?;
                i = j;
                out.push((Tok::Num(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                let s = text[i..j].to_string();
                i = j;
                out.push((Tok::Ident(s), start));
                continue;
            }
            other => {
                return Err(ExprError::Syntax {
                    pos: start,
                    msg: format!("unexpected character `{other}`"),
                })
            }
        };
        out.push((tok, start));
        i += 1;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

pub(crate) struct Parser<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    pub(crate) fn new(toks: &'a [(Tok, usize)], end: usize) -> Self {
        Parser { toks, pos: 0, end }
    }

    pub(crate) fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    pub(crate) fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(_, p)| *p).unwrap_or(self.end)
    }

    pub(crate) fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    pub(crate) fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn error(&self, msg: impl Into<String>) -> ExprError {
        ExprError::Syntax {
            pos: self.offset(),
            msg: msg.into(),
        }
    }

    pub(crate) fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(&Tok::Caret) {
            self.bump();
            match self.peek() {
                Some(Tok::Num(v)) if v.fract() == 0.0 && *v >= 0.0 && *v <= u32::MAX as f64 => {
                    let n = *v as u32;
                    self.bump();
                    Ok(Expr::pow(base, n))
                }
                _ => Err(self.error("exponent must be a non-negative integer literal")),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let start = self.offset();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::Minus) => Ok(Expr::neg(self.atom()?)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if self.peek() == Some(&Tok::LParen) {
                    let f = Func::from_name(&name).ok_or(ExprError::UnknownFunction {
                        name: name.clone(),
                        pos: start,
                    })?;
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    Ok(Expr::call(f, arg))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Some(_) => {
                self.pos -= 1;
                Err(self.error("expected a number, variable, function call or `(`"))
            }
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        if self.peek() == Some(&Tok::RParen) {
            self.bump();
            Ok(())
        } else {
            Err(self.error("expected `)`"))
        }
    }
}

/// Parses a complete expression.
pub fn parse_expr(text: &str) -> Result<Expr, ExprError> {
    if text.trim().is_empty() {
        return Err(ExprError::Syntax {
            pos: 0,
            msg: "empty expression".into(),
        });
    }
    let toks = lex(text)?;
    let mut p = Parser::new(&toks, text.len());
    let e = p.expr()?;
    if !p.at_end() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

/// Renders an expression with the minimum parentheses needed to re-parse it
/// into the same tree.
pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(e, 0, &mut s);
    s
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_expr(self))
    }
}

// Context levels: 0 = anywhere, 1/2 = operand of +-/ */ (same level needs
// parens on the right), 3 = must be an atom.
fn write_expr(e: &Expr, min_prec: u8, out: &mut String) {
    match e {
        Expr::Binary(op, a, b) => {
            let p = op.precedence();
            let paren = p < min_prec;
            if paren {
                out.push('(');
            }
            write_expr(a, p, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            write_expr(b, p + 1, out);
            if paren {
                out.push(')');
            }
        }
        Expr::Pow(base, n) => {
            // a power is a factor: safe under any binary context, but not as
            // an atom (operand of unary minus or another power)
            let paren = min_prec > 3;
            if paren {
                out.push('(');
            }
            write_expr(base, 4, out);
            out.push('^');
            out.push_str(&n.to_string());
            if paren {
                out.push(')');
            }
        }
        Expr::Neg(inner) => {
            out.push('-');
            write_expr(inner, 4, out);
        }
        Expr::Num(v) => {
            if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) {
                out.push_str(&format!("(-{})", -v));
            } else {
                out.push_str(&format!("{v}"));
            }
        }
        Expr::Var(n) => out.push_str(n),
        Expr::Call(f, arg) => {
            out.push_str(f.name());
            out.push('(');
            write_expr(arg, 0, out);
            out.push(')');
        }
    }
}
