mod common;

use common::{heater, heater_exit, random_safe_start};
use hybisim::flow::{flow_at, transverse, FlowConfig, FlowKind, FlowPoint};
use hybisim::model::{thermostat, FnField, VectorField};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn exits_match_closed_form_in_both_heater_modes() {
    let h = thermostat();
    let cfg = FlowConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut exits = 0;
    for (name, u) in [("OFF_safe", 0.0), ("ON_safe", 1.0)] {
        let mode = h.mode(h.mode_id(name).unwrap());
        for _ in 0..100 {
            let [a, b] = random_safe_start(&mut rng, 1e-3);
            let got = transverse(&mode.field, &mode.invariant, &[a, b], &cfg).unwrap();
            match (heater_exit(u, a, b, cfg.t_max), got.kind) {
                (Some((t, p)), FlowKind::Exit { point, time, .. }) => {
                    exits += 1;
                    assert!(
                        (time - t).abs() <= 1e-6,
                        "{name} from ({a}, {b}): time {time} vs {t}"
                    );
                    assert!((point[0] - p[0]).abs() <= 1e-6 && (point[1] - p[1]).abs() <= 1e-6);
                }
                (None, FlowKind::Equilibrium { point, .. }) => {
                    assert!((point[0] - u).abs() < 1e-3 && (point[1] - u).abs() < 1e-3);
                }
                (want, got) => panic!("{name} from ({a}, {b}): expected {want:?}, got {got:?}"),
            }
        }
    }
    assert!(exits >= 50, "only {exits} exits");
}

#[test]
fn flow_map_matches_closed_form() {
    let f = FnField::new(2, |x: &[f64], out: &mut [f64]| {
        out[0] = -x[0] + 1.0;
        out[1] = -x[1] + x[0];
    });
    let h = thermostat();
    let region = &h.mode(h.mode_id("ON_safe").unwrap()).invariant;
    let cfg = FlowConfig::default();
    for t in [0.0, 0.05, 0.1, 0.2] {
        match flow_at(&f, region, &[0.5, 0.5], t, &cfg).unwrap() {
            FlowPoint::At(p) => {
                let want = heater(1.0, 0.5, 0.5, t);
                assert!(
                    (p[0] - want[0]).abs() < 1e-9 && (p[1] - want[1]).abs() < 1e-9,
                    "t={t}"
                );
            }
            FlowPoint::Exited => panic!("left R_S at t={t}"),
        }
    }
}

#[test]
fn exit_points_are_transverse_and_reproducible() {
    let h = thermostat();
    let cfg = FlowConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for name in ["OFF_safe", "ON_safe"] {
        let mode = h.mode(h.mode_id(name).unwrap());
        for _ in 0..40 {
            let start = random_safe_start(&mut rng, 1e-3);
            let a = transverse(&mode.field, &mode.invariant, &start, &cfg).unwrap();
            let b = transverse(&mode.field, &mode.invariant, &start, &cfg).unwrap();
            assert_eq!(format!("{:?}", a.kind), format!("{:?}", b.kind));
            if let FlowKind::Exit { point, .. } = a.kind {
                assert!(mode.invariant.contains(&point, cfg.event_tol));
                let f = mode.field.eval(&point).unwrap();
                let probe: Vec<f64> = point.iter().zip(&f).map(|(p, v)| p + cfg.step * v).collect();
                assert!(!mode.invariant.contains(&probe, cfg.event_tol));
            }
        }
    }
}

#[test]
fn halving_the_step_converges() {
    let h = thermostat();
    let mode = h.mode(h.mode_id("OFF_safe").unwrap());
    let start = [0.6, 0.7];
    let time = |step: f64| {
        let cfg = FlowConfig {
            step,
            ..FlowConfig::default()
        };
        match transverse(&mode.field, &mode.invariant, &start, &cfg).unwrap().kind {
            FlowKind::Exit { time, .. } => time,
            other => panic!("{other:?}"),
        }
    };
    let exact = heater_exit(0.0, start[0], start[1], 50.0).unwrap().0;
    let times: Vec<f64> = [0.1, 0.05, 0.025].into_iter().map(time).collect();
    let d1 = (times[1] - times[0]).abs();
    let d2 = (times[2] - times[1]).abs();
    assert!(d2 <= 10.0 * d1.max(1e-12), "{times:?}");
    assert!((times[2] - exact).abs() < 1e-6);
}
