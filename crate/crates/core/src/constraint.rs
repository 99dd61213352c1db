//! Affine constraints `a · x (≤|=|≥) b` parsed from relational expressions.

use std::collections::HashMap;
use std::fmt;

use crate::expr::{lex, Expr, ExprError, Func, Parser, Tok};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

/// `coeffs · x (relation) offset`.
///
/// `strict` records that the source used `<` or `>`; such constraints are
/// treated as their closure everywhere and reported by model validation.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstraint {
    pub coeffs: Vec<f64>,
    pub offset: f64,
    pub relation: Relation,
    pub strict: bool,
}

impl AffineConstraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, offset: f64) -> Result<Self, ExprError> {
        if coeffs.iter().all(|c| *c == 0.0) {
            return Err(ExprError::Syntax {
                pos: 0,
                msg: "constraint has no nonzero coefficient".into(),
            });
        }
        Ok(AffineConstraint {
            coeffs,
            offset,
            relation,
            strict: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn lhs(&self, p: &[f64]) -> f64 {
        self.coeffs.iter().zip(p).map(|(a, x)| a * x).sum()
    }

    /// Signed violation: positive outside, non-positive inside. Equalities
    /// use the absolute residual.
    pub fn violation(&self, p: &[f64]) -> f64 {
        let r = self.lhs(p) - self.offset;
        match self.relation {
            Relation::Le => r,
            Relation::Ge => -r,
            Relation::Eq => r.abs(),
        }
    }

    /// Rewrites `≥` as `≤` by negation; equalities are unchanged.
    pub fn normalized(&self) -> AffineConstraint {
        match self.relation {
            Relation::Ge => AffineConstraint {
                coeffs: self.coeffs.iter().map(|c| -c).collect(),
                offset: -self.offset,
                relation: Relation::Le,
                strict: self.strict,
            },
            _ => self.clone(),
        }
    }

    /// Rate at which the violation grows when moving with velocity `v`.
    /// For an equality the rate is `|a · v|`.
    pub fn outward_rate(&self, v: &[f64]) -> f64 {
        let r = self.lhs(v);
        match self.relation {
            Relation::Le => r,
            Relation::Ge => -r,
            Relation::Eq => r.abs(),
        }
    }
}

impl fmt::Display for AffineConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            if !first {
                write!(f, " {} ", if *c < 0.0 { "-" } else { "+" })?;
            } else if *c < 0.0 {
                write!(f, "-")?;
            }
            write!(f, "{}*x{}", c.abs(), i)?;
            first = false;
        }
        let rel = match (self.relation, self.strict) {
            (Relation::Le, true) => "<",
            (Relation::Ge, true) => ">",
            (r, _) => r.symbol(),
        };
        write!(f, " {} {}", rel, self.offset)
    }
}

/// Parses one constraint statement over `vars`.
///
/// Accepts chains such as `0 <= T1 <= 1` (one constraint per relation) and
/// `abs(L) <= c`, which expands to `L <= c` and `-L <= c`.
pub fn parse_constraint(text: &str, vars: &[String]) -> Result<Vec<AffineConstraint>, ExprError> {
    parse_constraint_with(text, vars, &HashMap::new())
}

/// As [`parse_constraint`], with named constants substituted before the
/// affine decomposition.
pub fn parse_constraint_with(
    text: &str,
    vars: &[String],
    consts: &HashMap<String, f64>,
) -> Result<Vec<AffineConstraint>, ExprError> {
    let toks = lex(text)?;
    let mut p = Parser::new(&toks, text.len());
    let mut sides = vec![p.expr()?.substitute(consts)];
    let mut rels = Vec::new();
    while let Some(t) = p.peek() {
        let rel = match t {
            Tok::Le => (Relation::Le, false),
            Tok::Lt => (Relation::Le, true),
            Tok::Ge => (Relation::Ge, false),
            Tok::Gt => (Relation::Ge, true),
            Tok::Eq => (Relation::Eq, false),
            _ => {
                return Err(ExprError::Syntax {
                    pos: p.offset(),
                    msg: "expected a relation (<=, >=, =)".into(),
                })
            }
        };
        p.bump();
        rels.push(rel);
        sides.push(p.expr()?.substitute(consts));
    }
    if rels.is_empty() {
        return Err(ExprError::Syntax {
            pos: text.len(),
            msg: "constraint needs a relation".into(),
        });
    }
    let mut out = Vec::new();
    for (i, (rel, strict)) in rels.into_iter().enumerate() {
        out.extend(relation_to_constraints(
            &sides[i],
            rel,
            strict,
            &sides[i + 1],
            vars,
        )?);
    }
    Ok(out)
}

fn relation_to_constraints(
    lhs: &Expr,
    rel: Relation,
    strict: bool,
    rhs: &Expr,
    vars: &[String],
) -> Result<Vec<AffineConstraint>, ExprError> {
    // abs(L) <= c  and  c >= abs(L)
    let abs_side = match (lhs, rel, rhs) {
        (Expr::Call(Func::Abs, inner), Relation::Le, other) => Some((inner.as_ref(), other)),
        (other, Relation::Ge, Expr::Call(Func::Abs, inner)) => Some((inner.as_ref(), other)),
        _ => None,
    };
    if let Some((inner, bound)) = abs_side {
        let (c, k) = affine(inner, vars)?;
        let (cb, kb) = affine(bound, vars)?;
        if cb.iter().any(|x| *x != 0.0) {
            return Err(non_affine("abs() bound must be constant"));
        }
        let neg: Vec<f64> = c.iter().map(|x| -x).collect();
        let mut a = AffineConstraint::new(c, Relation::Le, kb - k)?;
        let mut b = AffineConstraint::new(neg, Relation::Le, kb + k)?;
        a.strict = strict;
        b.strict = strict;
        return Ok(vec![a, b]);
    }
    if lhs.uses_function(Func::Abs) || rhs.uses_function(Func::Abs) {
        return Err(non_affine(
            "abs() is only supported as `abs(affine) <= constant`; write non-convex sets as separate components",
        ));
    }
    let (cl, kl) = affine(lhs, vars)?;
    let (cr, kr) = affine(rhs, vars)?;
    let coeffs: Vec<f64> = cl.iter().zip(&cr).map(|(a, b)| a - b).collect();
    let mut c = AffineConstraint::new(coeffs, rel, kr - kl)?;
    c.strict = strict;
    Ok(vec![c])
}

fn affine(e: &Expr, vars: &[String]) -> Result<(Vec<f64>, f64), ExprError> {
    e.affine_form(vars)?
        .ok_or_else(|| non_affine(&format!("`{e}` is not affine in the state variables")))
}

fn non_affine(msg: &str) -> ExprError {
    ExprError::Syntax {
        pos: 0,
        msg: msg.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars() -> Vec<String> {
        vec!["T1".into(), "T2".into()]
    }

    #[test]
    fn simple_and_chained() {
        let c = parse_constraint("T1 - T2 <= 0.25", &vars()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].coeffs, vec![1.0, -1.0]);
        assert_eq!(c[0].offset, 0.25);
        assert_eq!(c[0].relation, Relation::Le);

        let c = parse_constraint("0 <= T1 <= 1", &vars()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].relation, Relation::Le);
        assert_eq!(c[0].coeffs, vec![-1.0, 0.0]);
        assert_eq!(c[0].offset, 0.0);
        assert_eq!(c[1].coeffs, vec![1.0, 0.0]);
        assert_eq!(c[1].offset, 1.0);
    }

    #[test]
    fn absolute_value_band() {
        let c = parse_constraint("abs(T1 - T2) <= 0.25", &vars()).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.iter().all(|c| c.violation(&[0.5, 0.5]) <= 0.0));
        assert!(c.iter().any(|c| c.violation(&[1.0, 0.0]) > 0.0));
        assert!(parse_constraint("abs(T1 - T2) >= 0.25", &vars()).is_err());
    }

    #[test]
    fn strict_and_errors() {
        let c = parse_constraint("T1 < 1", &vars()).unwrap();
        assert!(c[0].strict);
        assert!(parse_constraint("T1*T2 <= 1", &vars()).is_err());
        assert!(parse_constraint("T1 + 1", &vars()).is_err());
        assert!(parse_constraint("0 <= 1", &vars()).is_err());
        assert!(parse_constraint("T3 <= 1", &vars()).is_err());
    }

    #[test]
    fn equality_violation_is_absolute() {
        let c = &parse_constraint("T1 - T2 = 0.25", &vars()).unwrap()[0];
        assert_eq!(c.violation(&[0.5, 0.25]), 0.0);
        assert!(c.violation(&[0.5, 0.5]) > 0.0);
        assert!(c.violation(&[0.5, 0.0]) > 0.0);
    }
}
