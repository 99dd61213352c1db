//! Convex polytopes given by affine constraints, and finite unions of them.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::constraint::{AffineConstraint, Relation};

/// Feasibility slack used when classifying candidate vertices.
pub const VERTEX_TOL: f64 = 1e-9;
const MAX_VERTEX_COMBINATIONS: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("set is empty")]
    Empty,
    #[error("set is unbounded")]
    Unbounded,
    #[error("affine section of dimension {0} is not supported (maximum 2)")]
    DimensionTooHigh(usize),
    #[error("vertex enumeration needs more than {MAX_VERTEX_COMBINATIONS} candidate systems")]
    TooManyCombinations,
}

/// Intersection of affine constraints (relations `≤` and `=` after
/// normalization).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolytope {
    dim: usize,
    constraints: Vec<AffineConstraint>,
}

impl ConvexPolytope {
    pub fn new(dim: usize, constraints: Vec<AffineConstraint>) -> Self {
        assert!(
            constraints.iter().all(|c| c.dim() == dim),
            "constraint dimension mismatch"
        );
        ConvexPolytope {
            dim,
            constraints: constraints
                .iter()
                .map(AffineConstraint::normalized)
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constraints(&self) -> &[AffineConstraint] {
        &self.constraints
    }

    /// Largest constraint violation; `-inf` for the unconstrained space.
    pub fn violation(&self, p: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.violation(p))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        self.violation(p) <= tol
    }

    fn equalities(&self) -> Vec<&AffineConstraint> {
        self.constraints
            .iter()
            .filter(|c| c.relation == Relation::Eq)
            .collect()
    }

    fn inequalities(&self) -> Vec<&AffineConstraint> {
        self.constraints
            .iter()
            .filter(|c| c.relation != Relation::Eq)
            .collect()
    }

    /// Vertices (basic feasible points) of the polytope. Empty for an empty
    /// polytope and for polytopes containing a line.
    pub fn vertices(&self) -> Result<Vec<Vec<f64>>, GeometryError> {
        let n = self.dim;
        let eqs = independent_rows(&self.equalities());
        let ineqs = self.inequalities();
        if eqs.len() > n {
            return Ok(Vec::new());
        }
        let need = n - eqs.len();
        if binomial(ineqs.len(), need) > MAX_VERTEX_COMBINATIONS {
            return Err(GeometryError::TooManyCombinations);
        }
        let mut out: Vec<Vec<f64>> = Vec::new();
        for combo in Combinations::new(ineqs.len(), need) {
            let rows: Vec<&AffineConstraint> = eqs
                .iter()
                .copied()
                .chain(combo.iter().map(|&i| ineqs[i]))
                .collect();
            let a = DMatrix::from_fn(n, n, |r, c| rows[r].coeffs[c]);
            let b = DVector::from_fn(n, |r, _| rows[r].offset);
            let Some(x) = a.lu().solve(&b) else { continue };
            let x: Vec<f64> = x.iter().copied().collect();
            if x.iter().any(|v| !v.is_finite()) {
                continue;
            }
            if self.violation(&x) <= VERTEX_TOL * (1.0 + norm(&x))
                && !out.iter().any(|v| dist(v, &x) <= VERTEX_TOL)
            {
                out.push(x);
            }
        }
        Ok(out)
    }

    /// Feasibility by vertex enumeration, falling back to random probing for
    /// polytopes without vertices.
    pub fn is_nonempty<R: Rng>(&self, rng: &mut R, probes: usize) -> bool {
        if self.constraints.is_empty() {
            return true;
        }
        if let Ok(v) = self.vertices() {
            if !v.is_empty() {
                return true;
            }
        }
        // polytopes containing a line have no vertex; probe around the
        // equality section
        let section = self.section_frame();
        for scale in [1.0, 1e3] {
            for _ in 0..probes {
                let mut p = section.origin.clone();
                for b in &section.basis {
                    let s: f64 = rng.random_range(-scale..scale);
                    axpy(&mut p, s, b);
                }
                if self.contains(&p, VERTEX_TOL) {
                    return true;
                }
            }
        }
        false
    }

    /// Affine hull of the equality constraints: an origin plus an
    /// orthonormal basis of the solution directions.
    pub fn section_frame(&self) -> SectionFrame {
        let eqs = independent_rows(&self.equalities());
        let n = self.dim;
        let rows: Vec<Vec<f64>> = eqs.iter().map(|c| c.coeffs.clone()).collect();
        let origin = if rows.is_empty() {
            vec![0.0; n]
        } else {
            let a = DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c]);
            let b = DVector::from_fn(rows.len(), |r, _| eqs[r].offset);
            let aat = &a * a.transpose();
            let y = aat
                .lu()
                .solve(&b)
                .unwrap_or_else(|| DVector::zeros(rows.len()));
            (a.transpose() * y).iter().copied().collect()
        };
        // orthonormal row space, then complete with unit vectors
        let mut ortho: Vec<Vec<f64>> = Vec::new();
        for r in &rows {
            if let Some(q) = gram_schmidt(r, &ortho) {
                ortho.push(q);
            }
        }
        let mut basis = Vec::new();
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            let all: Vec<Vec<f64>> = ortho.iter().chain(basis.iter()).cloned().collect();
            if let Some(mut q) = gram_schmidt(&e, &all) {
                if let Some(first) = q.iter().find(|x| x.abs() > 1e-12) {
                    if *first < 0.0 {
                        q.iter_mut().for_each(|x| *x = -*x);
                    }
                }
                basis.push(q);
            }
            if ortho.len() + basis.len() == n {
                break;
            }
        }
        SectionFrame { origin, basis }
    }

    /// Dimension of the affine hull of the equality constraints.
    pub fn section_dim(&self) -> usize {
        self.dim - independent_rows(&self.equalities()).len()
    }

    /// Parameter interval of a one-dimensional section, exact from the
    /// inequality constraints.
    fn segment_interval(&self, frame: &SectionFrame) -> Result<(f64, f64), GeometryError> {
        let dir = &frame.basis[0];
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for c in self.inequalities() {
            let rate = dot(&c.coeffs, dir);
            let slack = c.offset - dot(&c.coeffs, &frame.origin);
            if rate.abs() < 1e-14 {
                if slack < -VERTEX_TOL {
                    return Err(GeometryError::Empty);
                }
            } else if rate > 0.0 {
                hi = hi.min(slack / rate);
            } else {
                lo = lo.max(slack / rate);
            }
        }
        if !lo.is_finite() || !hi.is_finite() {
            return Err(GeometryError::Unbounded);
        }
        if lo > hi + VERTEX_TOL {
            return Err(GeometryError::Empty);
        }
        Ok((lo, hi.max(lo)))
    }

    /// Points of the polytope on a lattice of pitch `spacing`, including its
    /// vertices. Supports sections of dimension at most 2.
    ///
    /// A segment of length `L` is cut into `ceil(L / spacing)` equal pieces,
    /// so consecutive points are never more than `spacing` apart.
    pub fn lattice(&self, spacing: f64) -> Result<Vec<Vec<f64>>, GeometryError> {
        assert!(spacing > 0.0);
        let frame = self.section_frame();
        match frame.basis.len() {
            0 => {
                if self.contains(&frame.origin, VERTEX_TOL) {
                    Ok(vec![frame.origin])
                } else {
                    Err(GeometryError::Empty)
                }
            }
            1 => {
                self.segment_interval(&frame)?;
                let mut ends = self.vertices()?;
                if ends.is_empty() {
                    return Err(GeometryError::Empty);
                }
                ends.sort_by(|a, b| {
                    let sa = frame.param(a)[0];
                    let sb = frame.param(b)[0];
                    sa.total_cmp(&sb)
                });
                let first = ends[0].clone();
                let last = ends[ends.len() - 1].clone();
                let length = dist(&first, &last);
                let pieces = ((length / spacing) - 1e-6).ceil().max(0.0) as usize;
                if pieces == 0 {
                    return Ok(vec![first]);
                }
                let delta: Vec<f64> = last.iter().zip(&first).map(|(b, a)| b - a).collect();
                let mut pts = Vec::with_capacity(pieces + 1);
                for i in 0..=pieces {
                    if i == pieces {
                        pts.push(last.clone());
                    } else {
                        let s = i as f64 / pieces as f64;
                        pts.push(first.iter().zip(&delta).map(|(a, d)| a + s * d).collect());
                    }
                }
                Ok(pts)
            }
            2 => {
                if !self.bounded_in_plane(&frame) {
                    return Err(GeometryError::Unbounded);
                }
                let verts = self.vertices()?;
                if verts.is_empty() {
                    return Err(GeometryError::Empty);
                }
                let params: Vec<Vec<f64>> = verts.iter().map(|v| frame.param(v)).collect();
                let (lo, hi) = param_box(&params);
                let mut pts = verts.clone();
                let nu = ((hi[0] - lo[0]) / spacing + 1e-6).floor() as usize;
                let nv = ((hi[1] - lo[1]) / spacing + 1e-6).floor() as usize;
                for i in 0..=nu {
                    for j in 0..=nv {
                        let p =
                            frame.point(&[lo[0] + i as f64 * spacing, lo[1] + j as f64 * spacing]);
                        if self.contains(&p, VERTEX_TOL)
                            && !pts.iter().any(|q| dist(q, &p) <= VERTEX_TOL)
                        {
                            pts.push(p);
                        }
                    }
                }
                Ok(pts)
            }
            d => Err(GeometryError::DimensionTooHigh(d)),
        }
    }

    fn bounded_in_plane(&self, frame: &SectionFrame) -> bool {
        // bounded iff the projected inequality normals positively span the plane
        let mut angles: Vec<f64> = self
            .inequalities()
            .iter()
            .filter_map(|c| {
                let u = dot(&c.coeffs, &frame.basis[0]);
                let v = dot(&c.coeffs, &frame.basis[1]);
                (u.hypot(v) > 1e-12).then(|| v.atan2(u))
            })
            .collect();
        if angles.len() < 3 {
            return false;
        }
        angles.sort_by(f64::total_cmp);
        let mut max_gap = angles[0] + std::f64::consts::TAU - angles[angles.len() - 1];
        for w in angles.windows(2) {
            max_gap = max_gap.max(w[1] - w[0]);
        }
        max_gap < std::f64::consts::PI - 1e-12
    }

    /// Uniform random point of the polytope by rejection sampling in the
    /// bounding box of its vertices within the equality section.
    pub fn random_point<R: Rng>(&self, rng: &mut R) -> Option<Vec<f64>> {
        let frame = self.section_frame();
        if frame.basis.is_empty() {
            return self
                .contains(&frame.origin, VERTEX_TOL)
                .then_some(frame.origin);
        }
        let verts = self.vertices().ok()?;
        if verts.is_empty() {
            return None;
        }
        let params: Vec<Vec<f64>> = verts.iter().map(|v| frame.param(v)).collect();
        let (lo, hi) = param_box(&params);
        for _ in 0..10_000 {
            let s: Vec<f64> = lo
                .iter()
                .zip(&hi)
                .map(|(a, b)| if b > a { rng.random_range(*a..*b) } else { *a })
                .collect();
            let p = frame.point(&s);
            if self.contains(&p, VERTEX_TOL) {
                return Some(p);
            }
        }
        None
    }
}

/// Origin and orthonormal basis of an affine subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionFrame {
    pub origin: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
}

impl SectionFrame {
    pub fn param(&self, p: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = p.iter().zip(&self.origin).map(|(a, b)| a - b).collect();
        self.basis.iter().map(|b| dot(b, &d)).collect()
    }

    pub fn point(&self, s: &[f64]) -> Vec<f64> {
        let mut p = self.origin.clone();
        for (si, b) in s.iter().zip(&self.basis) {
            axpy(&mut p, *si, b);
        }
        p
    }
}

/// Finite union of convex polytopes. Houses invariants and guards.
#[derive(Debug, Clone, PartialEq)]
pub struct PolytopeUnion {
    dim: usize,
    components: Vec<ConvexPolytope>,
}

impl PolytopeUnion {
    pub fn new(dim: usize, components: Vec<ConvexPolytope>) -> Self {
        assert!(components.iter().all(|c| c.dim() == dim));
        PolytopeUnion { dim, components }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[ConvexPolytope] {
        &self.components
    }

    /// Smallest component violation; `+inf` for the empty union.
    pub fn violation(&self, p: &[f64]) -> f64 {
        self.components
            .iter()
            .map(|c| c.violation(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        self.components.iter().any(|c| c.contains(p, tol))
    }

    pub fn has_strict_constraints(&self) -> bool {
        self.components
            .iter()
            .any(|c| c.constraints.iter().any(|k| k.strict))
    }

    /// Axis-aligned bounding box of all component vertices.
    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let verts: Vec<Vec<f64>> = self
            .components
            .iter()
            .filter_map(|c| c.vertices().ok())
            .flatten()
            .collect();
        if verts.is_empty() {
            return None;
        }
        Some(param_box(&verts))
    }
}

/// True iff some convex component of `set` satisfies every constraint within
/// `tol` (equalities as `|a·p - b| <= tol`).
pub fn membership(p: &[f64], set: &PolytopeUnion, tol: f64) -> bool {
    assert_eq!(p.len(), set.dim(), "point dimension mismatch");
    set.contains(p, tol)
}

// ---------------------------------------------------------------------------
// small linear algebra helpers
// ---------------------------------------------------------------------------

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn gram_schmidt(v: &[f64], ortho: &[Vec<f64>]) -> Option<Vec<f64>> {
    let mut w = v.to_vec();
    // two passes for numerical stability
    for _ in 0..2 {
        for q in ortho {
            let c = dot(&w, q);
            axpy(&mut w, -c, q);
        }
    }
    let n = norm(&w);
    (n > 1e-9 * norm(v).max(1.0)).then(|| w.iter().map(|x| x / n).collect())
}

fn independent_rows<'a>(rows: &[&'a AffineConstraint]) -> Vec<&'a AffineConstraint> {
    let mut ortho: Vec<Vec<f64>> = Vec::new();
    let mut out = Vec::new();
    for r in rows {
        if let Some(q) = gram_schmidt(&r.coeffs, &ortho) {
            ortho.push(q);
            out.push(*r);
        }
    }
    out
}

fn param_box(points: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = points[0].len();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in points {
        for i in 0..d {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    (lo, hi)
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: usize = 1;
    for i in 0..k {
        r = r.saturating_mul(n - i) / (i + 1);
    }
    r
}

struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            idx: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}
