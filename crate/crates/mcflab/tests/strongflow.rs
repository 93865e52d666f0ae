use mcflab::geom::V2;
use mcflab::scenes;
use mcflab::strongflow::{redistribute, run, step, FlowParams, Status};
use std::f64::consts::{PI, TAU};

fn mean_radius(nodes: &[V2]) -> f64 {
    nodes.iter().map(|p| p.norm()).sum::<f64>() / nodes.len() as f64
}

#[test]
fn shrinking_circle_follows_radius_law() {
    let net = scenes::circle(1.0, 256, V2::ZERO);
    let h = TAU / 256.0;
    let params = FlowParams { snapshot_stride: 100, ..FlowParams::for_spacing(h, 0.01) };
    let traj = run(&net, 0.3, 1e-4, &params).unwrap();
    assert_eq!(traj.status, Status::Finished);
    let mut worst: f64 = 0.0;
    let mut prev = f64::INFINITY;
    for s in &traj.snapshots {
        let r = mean_radius(&s.curves[0].nodes);
        let exact = (1.0 - 2.0 * s.t).sqrt();
        worst = worst.max((r - exact).abs() / exact);
        assert!(r < prev);
        prev = r;
    }
    assert!(worst < 1e-3, "relative radius error {worst}");
}

#[test]
fn static_triod_does_not_move() {
    let net = scenes::triod(0.05, 1.0, None);
    let params = FlowParams::for_spacing(0.05, 0.01);
    let traj = run(&net, 0.1, 1e-4, &params).unwrap();
    let last = traj.snapshots.last().unwrap();
    for (a, b) in last.curves.iter().zip(&net.curves) {
        for (p, q) in a.nodes.iter().zip(&b.nodes) {
            assert!((*p - *q).norm() < 1e-10);
        }
    }
}

#[test]
fn lens_area_rate_matches_turning_angle() {
    let h = 0.02;
    let net = scenes::lens(0.5, 1.5, h);
    let dt = 0.2 * net.min_spacing().powi(2);
    let params = FlowParams { snapshot_stride: 10, ..FlowParams::for_spacing(h, 0.01) };
    let traj = run(&net, 0.04, dt, &params).unwrap();
    let pts: Vec<(f64, f64)> = traj.snapshots.iter().map(|s| (s.t, scenes::lens_area(s))).collect();
    let n = pts.len() as f64;
    let (mt, ma) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mt) * (p.1 - ma)).sum::<f64>() / pts.iter().map(|p| (p.0 - mt).powi(2)).sum::<f64>();
    let expect = -4.0 * PI / 3.0;
    assert!(((slope - expect) / expect).abs() < 0.02, "slope {slope}");
    for w in traj.energies.windows(2) {
        assert!(w[1].1 < w[0].1);
    }
}

#[test]
fn redistribute_uniform_circle_is_identity() {
    let net = scenes::circle(1.0, 64, V2::ZERO);
    let c = redistribute(&net.curves[0], None);
    for (p, q) in c.nodes.iter().zip(&net.curves[0].nodes) {
        assert!((*p - *q).norm() < 1e-12);
    }
}

#[test]
fn step_rejects_large_dt() {
    let net = scenes::circle(1.0, 64, V2::ZERO);
    assert!(step(&net, 1.0, &FlowParams::for_spacing(0.1, 0.01)).is_err());
}
