use mcflab::entropy::{gronwall_fit, relative_entropy, GronwallFit};
use mcflab::experiments::line_fit;
use mcflab::geom::V2;
use mcflab::netcalib::Calibration;
use mcflab::network::{signed_distance, Network};
use mcflab::scenes;
use mcflab::tensions::{embed_l2, junction_frame, sector_angle, validate_admissible, SurfaceTensions};
use mcflab::weakmbo::{extract_interfaces, mbo_step, rasterize, shift_network, GridSpec, PhaseGrid};
use proptest::prelude::*;
use std::f64::consts::TAU;

fn three_phase(a: f64, b: f64, c: f64) -> SurfaceTensions {
    SurfaceTensions::from_rows(&[vec![0.0, a, b], vec![a, 0.0, c], vec![b, c, 0.0]]).unwrap()
}

/// Tensions that satisfy the strict triangle inequality.
fn triangle() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.5f64..1.5, 0.5f64..1.5, 0.1f64..0.9).prop_map(|(a, b, t)| {
        let (lo, hi) = ((a - b).abs(), a + b);
        (a, b, lo + (hi - lo) * (0.1 + 0.8 * t))
    })
}

fn random_grid(cells: Vec<u8>, n: usize, phases: usize) -> PhaseGrid {
    let spec = GridSpec { nx: n, ny: n, h: 1.0 / n as f64, origin: V2::ZERO };
    let mut g = PhaseGrid::uniform(spec, phases, 0);
    g.cells = cells.into_iter().map(|c| c % phases as u8).collect();
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn relabelling_phases_keeps_admissibility((a, b, c) in triangle(), perm in Just([0usize, 1, 2]).prop_shuffle()) {
        let s = three_phase(a, b, c);
        let p = s.permuted(&perm);
        prop_assert_eq!(validate_admissible(&s).pass, validate_admissible(&p).pass);
        let e = embed_l2(&p).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!((e.dist(i, j) - p.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn junction_sectors_follow_the_law_of_sines((a, b, c) in triangle(), rot in 0.0f64..TAU) {
        let s = three_phase(a, b, c);
        let f = junction_frame(&s, [0, 1, 2], V2::polar(1.0, rot)).unwrap();
        prop_assert!((f.sectors.iter().sum::<f64>() - TAU).abs() < 1e-12);
        prop_assert!(f.herring_residual() < 1e-12);
        // The sector of phase i faces the interface between the other two.
        let ratio = |i: usize, j: usize, k: usize| sector_angle(&s, i, j, k).sin() / s.get(j, k);
        let r0 = ratio(0, 1, 2);
        prop_assert!((ratio(1, 2, 0) - r0).abs() < 1e-10);
        prop_assert!((ratio(2, 0, 1) - r0).abs() < 1e-10);
    }

    #[test]
    fn threshold_step_commutes_with_relabelling(cells in prop::collection::vec(0u8..3, 24 * 24), perm in Just([0usize, 1, 2]).prop_shuffle()) {
        let sigma = three_phase(1.0, 0.8, 1.2);
        let g = random_grid(cells, 24, 3);
        let dt = 4.0 * g.h * g.h;
        let mut relabelled = g.clone();
        // Phase `perm[i]` of the original becomes phase `i`.
        let mut inv = [0u8; 3];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i as u8;
        }
        for c in &mut relabelled.cells {
            *c = inv[*c as usize];
        }
        let a = mbo_step(&g, dt, &sigma).unwrap();
        let b = mbo_step(&relabelled, dt, &sigma.permuted(&perm)).unwrap();
        let mismatched = a.cells.iter().zip(&b.cells).filter(|(x, y)| inv[**x as usize] != **y).count();
        prop_assert_eq!(mismatched, 0);
    }

    #[test]
    fn threshold_step_commutes_with_quarter_turns(cells in prop::collection::vec(0u8..3, 20 * 20)) {
        let sigma = SurfaceTensions::equal(3);
        let n = 20;
        let g = random_grid(cells, n, 3);
        let turn = |g: &PhaseGrid| {
            let mut r = g.clone();
            for j in 0..n {
                for i in 0..n {
                    r.cells[i * n + (n - 1 - j)] = g.cells[j * n + i];
                }
            }
            r
        };
        let dt = 4.0 * g.h * g.h;
        let a = turn(&mbo_step(&g, dt, &sigma).unwrap());
        let b = mbo_step(&turn(&g), dt, &sigma).unwrap();
        let mismatched = a.cells.iter().zip(&b.cells).filter(|(x, y)| x != y).count();
        prop_assert_eq!(mismatched, 0);
    }

    #[test]
    fn gronwall_recovers_exact_exponentials(c in -5.0f64..5.0, e0 in 1e-6f64..10.0) {
        let t: Vec<f64> = (0..21).map(|k| 0.01 * k as f64).collect();
        let e: Vec<f64> = t.iter().map(|t| e0 * (c * t).exp()).collect();
        match gronwall_fit(&t, &e) {
            GronwallFit::Exponential { c: fit, log_e0, envelope_holds, .. } => {
                prop_assert!((fit - c).abs() < 1e-9);
                prop_assert!((log_e0 - e0.ln()).abs() < 1e-9);
                prop_assert!(envelope_holds);
            }
            other => prop_assert!(false, "unexpected fit {:?}", other),
        }
    }

    #[test]
    fn line_fit_is_exact_on_lines(a in -10.0f64..10.0, b in -10.0f64..10.0) {
        let pts: Vec<(f64, f64)> = (0..7).map(|k| (k as f64 * 0.3, a * k as f64 * 0.3 + b)).collect();
        let (sa, sb, _) = line_fit(&pts).unwrap();
        prop_assert!((sa - a).abs() < 1e-9 && (sb - b).abs() < 1e-9);
    }

    #[test]
    fn circle_signed_distance_matches_radius(r in 0.05f64..2.5, phi in 0.0f64..TAU) {
        let net = scenes::circle(1.0, 512, V2::ZERO);
        let g = &net.geometry()[0];
        let d = signed_distance(g, V2::polar(r, phi), 10.0).unwrap();
        // Chords sit inside the circle by at most R(1 − cos(π/N)).
        prop_assert!((d.abs() - (r - 1.0).abs()).abs() < 2e-5);
    }

    #[test]
    fn partition_and_frame_identity_hold_at_random_points((a, b, c) in triangle(), x in -0.9f64..0.9, y in -0.9f64..0.9) {
        let net = scenes::triod(0.02, 1.0, Some(three_phase(a, b, c)));
        let cal = Calibration::build(&net, None, None).unwrap();
        let s = cal.eval(V2::new(x, y));
        prop_assert!(s.eta_sum() <= 1.0 + 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    let lhs = s.pair(i, j) * net.sigma.get(i, j);
                    prop_assert!((lhs - (s.xi_phase[i] - s.xi_phase[j])).norm() < 1e-12);
                    prop_assert!(s.pair(i, j).norm() <= 1.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn network_json_round_trips(r in 0.2f64..3.0, n in 8usize..64, cx in -1.0f64..1.0) {
        let net = scenes::circle(r, n, V2::new(cx, 0.0));
        let back = Network::from_json(&net.to_json()).unwrap();
        prop_assert_eq!(net, back);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn relative_entropy_is_between_zero_and_the_energy(dx in -0.1f64..0.1, dy in -0.1f64..0.1) {
        let net = scenes::circle(0.6, 128, V2::ZERO);
        let cal = Calibration::build(&net, None, None).unwrap();
        let g = rasterize(&shift_network(&net, V2::new(dx, dy)), GridSpec::covering(net.bbox(), 0.02, 0.3), 0.1).unwrap();
        let soup = extract_interfaces(&g);
        let e = relative_entropy(&soup, &cal);
        prop_assert!(e >= 0.0);
        prop_assert!(e <= 2.0 * soup.energy(&net.sigma));
    }
}

#[test]
fn uniform_grid_is_stationary_and_has_no_interfaces() {
    let spec = GridSpec { nx: 16, ny: 16, h: 0.1, origin: V2::ZERO };
    let g = PhaseGrid::uniform(spec, 3, 2);
    let next = mbo_step(&g, 0.04, &SurfaceTensions::equal(3)).unwrap();
    assert_eq!(g.cells, next.cells);
    assert!(extract_interfaces(&next).segments.is_empty());
}

#[test]
fn inadmissible_tensions_are_reported() {
    let s = three_phase(1.0, 1.0, 3.0);
    assert!(!validate_admissible(&s).pass);
}
