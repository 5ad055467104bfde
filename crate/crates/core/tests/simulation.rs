mod common;

use common::{normalized_pair_row, pose};
use ecomerge::engine::EventKind;
use ecomerge::geometry::Road;
use ecomerge::harness::run_paired;
use ecomerge::metrics::system_metrics;
use ecomerge::scenario::{lbs_to_kg, HOMOGENEOUS_MASS_LBS};
use ecomerge::{run, sample_scenario, ControllerKind, EngineParams, MonteCarloConfig};

fn h(a: ([f64; 2], [f64; 2]), b: ([f64; 2], [f64; 2]), reach: f64) -> f64 {
    let dx = a.0[0] - b.0[0];
    let dy = a.0[1] - b.0[1];
    dx * dx + dy * dy - reach * reach
}

#[test]
fn injections_respect_inflated_barrier() {
    let cfg = MonteCarloConfig::nominal();
    let beta = cfg.barrier.beta;
    for seed in 0..1000 {
        let sc = sample_scenario(&cfg, seed).unwrap();
        for road in Road::ALL {
            let on: Vec<_> = sc.on_road(road).collect();
            assert_eq!(on.len(), 10);
            for w in on.windows(2) {
                let (p, f) = (w[0], w[1]);
                assert!(f.injection_time >= p.injection_time);
                // predecessor has cruised for the entry delay
                let sp = -200.0 + p.desired_speed * (f.injection_time - p.injection_time);
                let merge = road == Road::Merge;
                let angle = sc.layout.merge_angle_rad;
                let val = h(pose(merge, sp, angle), pose(merge, -200.0, angle), (1.0 + beta) * (p.radius + f.radius));
                assert!(val >= -1e-6, "seed {seed}: h = {val}");
            }
        }
    }
}

#[test]
fn homogeneous_config_fixes_mass() {
    let mut cfg = MonteCarloConfig::nominal();
    cfg.homogeneous_mass_lbs = Some(HOMOGENEOUS_MASS_LBS);
    let sc = sample_scenario(&cfg, 3).unwrap();
    let m = lbs_to_kg(HOMOGENEOUS_MASS_LBS).unwrap();
    assert!(sc.vehicles.iter().all(|v| (v.mass - m).abs() < 1e-9));
    let r0 = sc.vehicles[0].radius;
    assert!(sc.vehicles.iter().all(|v| v.radius == r0));
}

#[test]
fn runs_are_repeatable_and_paired() {
    let cfg = MonteCarloConfig::nominal();
    let a = run_paired(&cfg, 4).unwrap();
    let b = run_paired(&cfg, 4).unwrap();
    // diagnostics carry wall times, so compare the recorded states
    for (x, y) in [(&a.ccbf, &b.ccbf), (&a.fifo, &b.fifo)] {
        assert_eq!(x.trace.samples, y.trace.samples);
        assert_eq!(x.trace.events, y.trace.events);
        assert_eq!(x.h0_min, y.h0_min);
    }
    // both controllers see every vehicle enter
    for out in [&a.ccbf, &a.fifo] {
        let entered = out.trace.events.iter().filter(|e| e.kind == EventKind::Injection).count();
        assert_eq!(entered, a.scenario.vehicles.len());
        assert!(out.completed);
    }
}

#[test]
fn centralized_commands_satisfy_pair_rows() {
    // rows rebuilt from the recorded trace, independent of the controller
    let cfg = MonteCarloConfig::nominal();
    let params = EngineParams::from_config(&cfg);
    for seed in [1, 2, 7] {
        let sc = sample_scenario(&cfg, seed).unwrap();
        let out = run(&sc, ControllerKind::Ccbf, &params).unwrap();
        let mut checked = 0;
        for d in out.trace.diagnostics.iter().filter(|d| !d.relaxed && !d.fallback) {
            let at: Vec<_> = out.trace.samples.iter().filter(|s| s.k == d.k && s.in_cz).collect();
            for i in 0..at.len() {
                for j in i + 1..at.len() {
                    let (a, b) = (at[i], at[j]);
                    let angle = sc.layout.merge_angle_rad;
                    let v = normalized_pair_row(
                        pose(a.road == Road::Merge, a.s, angle),
                        pose(b.road == Road::Merge, b.s, angle),
                        sc.vehicles[a.id].radius,
                        sc.vehicles[b.id].radius,
                        a.u,
                        b.u,
                        cfg.barrier.beta,
                        cfg.barrier.lambda,
                    );
                    assert!(v >= -1e-6, "seed {seed} k {} pair {} {}: {v}", d.k, a.id, b.id);
                    checked += 1;
                }
            }
        }
        assert!(checked > 1000);
    }
}

#[test]
fn lone_cruiser_loses_only_road_load() {
    let cfg = MonteCarloConfig::nominal();
    let mut sc = sample_scenario(&cfg, 9).unwrap();
    sc.vehicles.truncate(1);
    let v = sc.vehicles[0].clone();
    for kind in ControllerKind::ALL {
        let out = run(&sc, kind, &EngineParams::from_config(&cfg)).unwrap();
        let m = system_metrics(&out.trace, &sc).unwrap();
        let f = v.dyno_a + v.dyno_b * v.desired_speed + v.dyno_c * v.desired_speed.powi(2);
        // J/m to Wh/km
        assert!((m.tel - f / 3.6).abs() < 1e-6 * f, "{kind}: {} vs {}", m.tel, f / 3.6);
        assert!(m.pake.abs() < 1e-9);
        assert!(m.be.abs() < 1e-9);
        assert!((m.avg_velocity - v.desired_speed).abs() < 1e-12);
    }
}
