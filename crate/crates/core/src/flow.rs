//! Flows of a smooth field restricted to a closed set: transverse time and
//! point, the transition function, and equilibrium detection.
//!
//! Integration is classical fixed-step RK4. A step whose end point leaves the
//! region by more than `event_tol` brackets a boundary crossing, which is then
//! bisected (re-integrating a single RK4 sub-step from the bracket start) down
//! to floating-point resolution.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::ExprError;
use crate::model::VectorField;
use crate::polytope::{norm, PolytopeUnion};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("vector field evaluation failed at {point:?}: {source}")]
    Field { point: Vec<f64>, source: ExprError },
    #[error("invalid flow configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: field has {field}, point has {point}")]
    Dimension { field: usize, point: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Base RK4 step (time units).
    pub step: f64,
    /// Boundary localization tolerance (state-space units).
    pub event_tol: f64,
    /// Equilibrium threshold on the field norm.
    pub eq_tol: f64,
    /// Horizon after which the flow is declared never to exit.
    pub t_max: f64,
    #[serde(default)]
    pub record_trajectory: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            step: 1e-3,
            event_tol: 1e-9,
            eq_tol: 1e-6,
            t_max: 50.0,
            record_trajectory: false,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        for (name, v) in [
            ("step", self.step),
            ("event_tol", self.event_tol),
            ("eq_tol", self.eq_tol),
            ("t_max", self.t_max),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(FlowError::Config(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// A constraint of one convex component: `(component, constraint)`.
pub type Face = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub enum FlowKind {
    /// The flow reaches the boundary with an outward field.
    Exit {
        point: Vec<f64>,
        time: f64,
        faces: Vec<Face>,
    },
    /// `‖f‖ <= eq_tol` before `t_max`.
    Equilibrium { point: Vec<f64>, time: f64 },
    /// Neither exit nor equilibrium within `t_max`.
    Timeout { point: Vec<f64> },
    /// The integrator left the region without a resolvable crossing.
    Escaped { point: Vec<f64>, time: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub kind: FlowKind,
    pub trajectory: Option<Vec<(f64, Vec<f64>)>>,
}

/// Result of the transition function.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowPoint {
    At(Vec<f64>),
    /// The flow left the region before the requested time.
    Exited,
}

struct Rk4<'a, F: VectorField + ?Sized> {
    field: &'a F,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl<'a, F: VectorField + ?Sized> Rk4<'a, F> {
    fn new(field: &'a F) -> Self {
        let n = field.dim();
        Rk4 {
            field,
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
        }
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<(), FlowError> {
        self.field
            .eval_into(x, out)
            .map_err(|source| FlowError::Field {
                point: x.to_vec(),
                source,
            })
    }

    fn step(&mut self, x: &[f64], h: f64, out: &mut [f64]) -> Result<(), FlowError> {
        let n = x.len();
        let [k1, k2, k3, k4] = &mut self.k;
        self.field
            .eval_into(x, k1)
            .map_err(|source| FlowError::Field {
                point: x.to_vec(),
                source,
            })?;
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        eval_field(self.field, &self.tmp, k2)?;
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        eval_field(self.field, &self.tmp, k3)?;
        for i in 0..n {
            self.tmp[i] = x[i] + h * k3[i];
        }
        eval_field(self.field, &self.tmp, k4)?;
        for i in 0..n {
            out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        Ok(())
    }
}

fn eval_field<F: VectorField + ?Sized>(
    field: &F,
    x: &[f64],
    out: &mut [f64],
) -> Result<(), FlowError> {
    field.eval_into(x, out).map_err(|source| FlowError::Field {
        point: x.to_vec(),
        source,
    })
}

/// Active faces with a strictly outward field, per component containing `p`.
/// Returns `None` when some component containing `p` keeps the flow inside to
/// first order.
fn outward_faces(
    region: &PolytopeUnion,
    p: &[f64],
    f: &[f64],
    cfg: &FlowConfig,
) -> Option<Vec<Face>> {
    let mut faces = Vec::new();
    let mut any = false;
    for (ci, comp) in region.components().iter().enumerate() {
        if !comp.contains(p, cfg.event_tol) {
            continue;
        }
        any = true;
        let leaving: Vec<Face> = comp
            .constraints()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.violation(p) >= -cfg.event_tol && c.outward_rate(f) > cfg.event_tol)
            .map(|(k, _)| (ci, k))
            .collect();
        if leaving.is_empty() {
            return None;
        }
        faces.extend(leaving);
    }
    any.then_some(faces)
}

fn faces_at(region: &PolytopeUnion, p: &[f64], cfg: &FlowConfig) -> Vec<Face> {
    let mut faces = Vec::new();
    for (ci, comp) in region.components().iter().enumerate() {
        if !comp.contains(p, cfg.event_tol) {
            continue;
        }
        for (k, c) in comp.constraints().iter().enumerate() {
            if c.violation(p).abs() <= cfg.event_tol {
                faces.push((ci, k));
            }
        }
    }
    faces
}

/// Integrates `dξ/dt = f(ξ)` from `start` inside `region` until the flow
/// exits, settles at an equilibrium, or `t_max` elapses.
pub fn transverse<F: VectorField + ?Sized>(
    field: &F,
    region: &PolytopeUnion,
    start: &[f64],
    cfg: &FlowConfig,
) -> Result<FlowResult, FlowError> {
    cfg.validate()?;
    if field.dim() != start.len() {
        return Err(FlowError::Dimension {
            field: field.dim(),
            point: start.len(),
        });
    }
    let mut traj = cfg.record_trajectory.then(|| vec![(0.0, start.to_vec())]);
    let done = |kind: FlowKind, traj: Option<Vec<(f64, Vec<f64>)>>| {
        Ok(FlowResult {
            kind,
            trajectory: traj,
        })
    };

    if region.violation(start) > cfg.event_tol {
        return done(
            FlowKind::Escaped {
                point: start.to_vec(),
                time: 0.0,
            },
            traj,
        );
    }
    let mut rk = Rk4::new(field);
    let n = start.len();
    let mut f = vec![0.0; n];
    rk.eval(start, &mut f)?;
    if norm(&f) <= cfg.eq_tol {
        return done(
            FlowKind::Equilibrium {
                point: start.to_vec(),
                time: 0.0,
            },
            traj,
        );
    }
    if let Some(faces) = outward_faces(region, start, &f, cfg) {
        return done(
            FlowKind::Exit {
                point: start.to_vec(),
                time: 0.0,
                faces,
            },
            traj,
        );
    }

    let mut p = start.to_vec();
    let mut q = vec![0.0; n];
    let mut t = 0.0;
    let steps = (cfg.t_max / cfg.step).ceil() as u64;
    for i in 0..steps {
        let h = cfg.step;
        rk.step(&p, h, &mut q)?;
        if region.violation(&q) > cfg.event_tol {
            let (tau, point) = if region.violation(&p) > 0.0 {
                (0.0, p.clone())
            } else {
                locate_crossing(&mut rk, region, &p, h)?
            };
            let time = t + tau;
            if region.violation(&point) > 10.0 * cfg.event_tol {
                return done(FlowKind::Escaped { point, time }, traj);
            }
            if let Some(tr) = traj.as_mut() {
                tr.push((time, point.clone()));
            }
            let faces = faces_at(region, &point, cfg);
            return done(FlowKind::Exit { point, time, faces }, traj);
        }
        std::mem::swap(&mut p, &mut q);
        t = (i + 1) as f64 * cfg.step;
        if let Some(tr) = traj.as_mut() {
            tr.push((t, p.clone()));
        }
        rk.eval(&p, &mut f)?;
        if norm(&f) <= cfg.eq_tol {
            return done(FlowKind::Equilibrium { point: p, time: t }, traj);
        }
    }
    done(FlowKind::Timeout { point: p }, traj)
}

/// Bisects the sub-step length in `(0, h]` at which the region violation
/// becomes positive. Returns the sub-step and the first point past the
/// boundary.
fn locate_crossing<F: VectorField + ?Sized>(
    rk: &mut Rk4<'_, F>,
    region: &PolytopeUnion,
    p: &[f64],
    h: f64,
) -> Result<(f64, Vec<f64>), FlowError> {
    let mut lo = 0.0;
    let mut hi = h;
    let mut out = vec![0.0; p.len()];
    let mut hi_point = vec![0.0; p.len()];
    rk.step(p, hi, &mut hi_point)?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        rk.step(p, mid, &mut out)?;
        if region.violation(&out) > 0.0 {
            hi = mid;
            hi_point.copy_from_slice(&out);
        } else {
            lo = mid;
        }
    }
    Ok((hi, hi_point))
}

/// Transition function: the flow at time `t`, or [`FlowPoint::Exited`] when
/// the flow leaves the region before `t`.
pub fn flow_at<F: VectorField + ?Sized>(
    field: &F,
    region: &PolytopeUnion,
    start: &[f64],
    t: f64,
    cfg: &FlowConfig,
) -> Result<FlowPoint, FlowError> {
    cfg.validate()?;
    if t.is_nan() || t < 0.0 {
        return Err(FlowError::Config(format!(
            "time must be non-negative, got {t}"
        )));
    }
    if field.dim() != start.len() {
        return Err(FlowError::Dimension {
            field: field.dim(),
            point: start.len(),
        });
    }
    if t == 0.0 {
        return Ok(FlowPoint::At(start.to_vec()));
    }
    if region.violation(start) > cfg.event_tol {
        return Ok(FlowPoint::Exited);
    }
    let mut rk = Rk4::new(field);
    let n = start.len();
    let mut f = vec![0.0; n];
    rk.eval(start, &mut f)?;
    if norm(&f) > 0.0 && outward_faces(region, start, &f, cfg).is_some() {
        return Ok(FlowPoint::Exited);
    }
    let steps = (t / cfg.step).ceil().max(1.0) as u64;
    let h = t / steps as f64;
    let mut p = start.to_vec();
    let mut q = vec![0.0; n];
    for _ in 0..steps {
        rk.step(&p, h, &mut q)?;
        if region.violation(&q) > cfg.event_tol {
            return Ok(FlowPoint::Exited);
        }
        std::mem::swap(&mut p, &mut q);
    }
    Ok(FlowPoint::At(p))
}

/// The field at `p` leaves every component of `region` that contains `p`
/// through an active face, so the flow exits at time zero.
pub fn exits_immediately<F: VectorField + ?Sized>(
    field: &F,
    region: &PolytopeUnion,
    p: &[f64],
    cfg: &FlowConfig,
) -> Result<bool, FlowError> {
    let f = field.eval(p).map_err(|source| FlowError::Field {
        point: p.to_vec(),
        source,
    })?;
    Ok(outward_faces(region, p, &f, cfg).is_some())
}

/// `‖f(p)‖ <= eq_tol`.
pub fn is_equilibrium<F: VectorField + ?Sized>(
    field: &F,
    p: &[f64],
    eq_tol: f64,
) -> Result<bool, FlowError> {
    let f = field.eval(p).map_err(|source| FlowError::Field {
        point: p.to_vec(),
        source,
    })?;
    Ok(norm(&f) <= eq_tol)
}

/// Newton iteration on `f(x) = 0` with a central-difference Jacobian.
/// Returns the root when the final residual is at most `tol`.
pub fn polish_equilibrium<F: VectorField + ?Sized>(
    field: &F,
    guess: &[f64],
    tol: f64,
) -> Option<Vec<f64>> {
    let n = guess.len();
    let mut x = guess.to_vec();
    let mut fx = field.eval(&x).ok()?;
    for _ in 0..50 {
        if norm(&fx) <= 1e-15 {
            break;
        }
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let h = 1e-6 * x[j].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fp = field.eval(&xp).ok()?;
            let fm = field.eval(&xm).ok()?;
            for i in 0..n {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let rhs = DVector::from_iterator(n, fx.iter().map(|v| -v));
        let dx = jac.lu().solve(&rhs)?;
        let mut next: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + d).collect();
        let mut fnext = field.eval(&next).ok()?;
        // damp until the residual does not grow
        let mut damp = 1.0;
        while norm(&fnext) > norm(&fx) && damp > 1e-6 {
            damp *= 0.5;
            next = x.iter().zip(dx.iter()).map(|(a, d)| a + damp * d).collect();
            fnext = field.eval(&next).ok()?;
        }
        let moved = dx.norm() * damp;
        x = next;
        fx = fnext;
        if moved <= 1e-16 * (1.0 + norm(&x)) {
            break;
        }
    }
    (norm(&fx) <= tol).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::parse_constraint;
    use crate::model::{thermostat, FnField};
    use crate::polytope::ConvexPolytope;

    fn interval(lo: f64, hi: f64) -> PolytopeUnion {
        let vars = vec!["x".to_string()];
        let cs = parse_constraint(&format!("{lo} <= x <= {hi}"), &vars).unwrap();
        PolytopeUnion::new(1, vec![ConvexPolytope::new(1, cs)])
    }

    fn relax() -> FnField<impl Fn(&[f64], &mut [f64]) + Sync> {
        FnField::new(1, |x: &[f64], out: &mut [f64]| out[0] = -x[0] + 1.0)
    }

    #[test]
    fn exit_time_of_relaxation() {
        let r = transverse(
            &relax(),
            &interval(0.0, 0.5),
            &[0.0],
            &FlowConfig::default(),
        )
        .unwrap();
        match r.kind {
            FlowKind::Exit { point, time, .. } => {
                // oracle: 1 - e^{-t} = 0.5
                assert!((time - 2f64.ln()).abs() < 1e-6, "{time}");
                assert!((point[0] - 0.5).abs() < 1e-6);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn transition_function_matches_closed_form() {
        let cfg = FlowConfig::default();
        let region = interval(0.0, 0.5);
        assert_eq!(
            flow_at(&relax(), &region, &[0.0], 0.0, &cfg).unwrap(),
            FlowPoint::At(vec![0.0])
        );
        match flow_at(&relax(), &region, &[0.0], 0.3, &cfg).unwrap() {
            FlowPoint::At(p) => assert!((p[0] - (1.0 - (-0.3f64).exp())).abs() < 1e-6),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            flow_at(&relax(), &region, &[0.0], 1.0, &cfg).unwrap(),
            FlowPoint::Exited
        );
    }

    #[test]
    fn equilibrium_at_start() {
        let h = thermostat();
        let off = h.mode(h.mode_id("OFF_safe").unwrap());
        let r = transverse(
            &off.field,
            &off.invariant,
            &[0.0, 0.0],
            &FlowConfig::default(),
        )
        .unwrap();
        assert_eq!(
            r.kind,
            FlowKind::Equilibrium {
                point: vec![0.0, 0.0],
                time: 0.0
            }
        );
    }

    #[test]
    fn exit_at_start_on_outward_boundary() {
        let r = transverse(
            &relax(),
            &interval(0.0, 0.5),
            &[0.5],
            &FlowConfig::default(),
        )
        .unwrap();
        match r.kind {
            FlowKind::Exit { point, time, faces } => {
                assert_eq!(time, 0.0);
                assert_eq!(point, vec![0.5]);
                assert_eq!(faces.len(), 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn equilibrium_predicate() {
        let h = thermostat();
        let on = &h.mode(h.mode_id("ON_safe").unwrap()).field;
        let off = &h.mode(h.mode_id("OFF_safe").unwrap()).field;
        assert!(is_equilibrium(on, &[1.0, 1.0], 1e-6).unwrap());
        assert!(is_equilibrium(off, &[0.0, 0.0], 1e-6).unwrap());
        assert!(!is_equilibrium(on, &[0.5, 0.5], 1e-6).unwrap());
    }

    #[test]
    fn timeout_and_escape() {
        // rotation never leaves the disk-like box and never settles
        let rot = FnField::new(2, |x: &[f64], o: &mut [f64]| {
            o[0] = -x[1];
            o[1] = x[0];
        });
        let vars = vec!["x".to_string(), "y".to_string()];
        let cs = parse_constraint("-2 <= x <= 2", &vars)
            .unwrap()
            .into_iter()
            .chain(parse_constraint("-2 <= y <= 2", &vars).unwrap())
            .collect();
        let square = PolytopeUnion::new(2, vec![ConvexPolytope::new(2, cs)]);
        let cfg = FlowConfig {
            t_max: 5.0,
            ..FlowConfig::default()
        };
        assert!(matches!(
            transverse(&rot, &square, &[1.0, 0.0], &cfg).unwrap().kind,
            FlowKind::Timeout { .. }
        ));
        assert!(matches!(
            transverse(&rot, &square, &[3.0, 0.0], &cfg).unwrap().kind,
            FlowKind::Escaped { .. }
        ));
    }

    #[test]
    fn field_errors_propagate() {
        let bad = FnField::new(1, |x: &[f64], o: &mut [f64]| o[0] = 1.0 / (x[0] - 0.25));
        let err =
            transverse(&bad, &interval(0.0, 0.5), &[0.25], &FlowConfig::default()).unwrap_err();
        assert!(matches!(err, FlowError::Field { .. }));
        let cfg = FlowConfig {
            step: 0.0,
            ..FlowConfig::default()
        };
        assert!(matches!(
            transverse(&relax(), &interval(0.0, 0.5), &[0.0], &cfg),
            Err(FlowError::Config(_))
        ));
    }

    #[test]
    fn newton_polish_finds_linear_root() {
        let h = thermostat();
        let on = &h.mode(h.mode_id("ON_safe").unwrap()).field;
        let root = polish_equilibrium(on, &[0.3, 0.9], 1e-12).unwrap();
        assert!((root[0] - 1.0).abs() < 1e-12 && (root[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trajectory_recording() {
        let cfg = FlowConfig {
            record_trajectory: true,
            ..FlowConfig::default()
        };
        let r = transverse(&relax(), &interval(0.0, 0.5), &[0.0], &cfg).unwrap();
        let tr = r.trajectory.unwrap();
        assert!(tr.len() > 600);
        assert!(tr.windows(2).all(|w| w[0].0 < w[1].0));
    }
}
