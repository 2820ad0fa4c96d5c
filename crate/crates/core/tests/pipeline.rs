//! Solver, verifier and iteration behaviour on small solved fields.

use wolfflab_core::suite::MeasureKind;
use wolfflab_core::verifier::{dyadic_radii, select_sample_points, theorem_radius};
use wolfflab_core::{
    check_proposition, check_theorem_i, check_theorem_ii, make_params, run_iteration, solve_ibvp, sup_norm_on_window,
    EstimateOptions, GridField, GridSpec, IterationOptions, IterationParams, Point, ProblemParams, RadialProfile,
    RadonMeasure,
};

fn solved(n: usize, p: f64, kind: MeasureKind, nx: usize, nt: usize) -> (GridField, RadonMeasure, ProblemParams) {
    let params = make_params(n, p, 1e-6, None, None).unwrap();
    let m = kind.build(n, 1.0).unwrap();
    let g = GridSpec::new(n, nx, nt, 1.0, 1.0).unwrap();
    (solve_ibvp(&m, &params, &g).unwrap(), m, params)
}

#[test]
fn regularization_halvings_form_a_cauchy_sequence() {
    for (n, nx, nt, p) in [(1, 129, 128, 1.5), (1, 129, 128, 1.2), (2, 33, 32, 1.6)] {
        let g = GridSpec::new(n, nx, nt, 1.0, 1.0).unwrap();
        let m = RadonMeasure::dirac(Point::origin(n), 1.0, 1.0).unwrap();
        let sups: Vec<f64> = (0..4)
            .map(|i| {
                let params = make_params(n, p, 1e-2 * 0.5f64.powi(i), None, None).unwrap();
                sup_norm_on_window(&solve_ibvp(&m, &params, &g).unwrap(), 0.0, 1.0)
            })
            .collect();
        let steps: Vec<f64> = sups.windows(2).map(|w| w[1] - w[0]).collect();
        let sign = steps[0].signum();
        for (i, d) in steps.iter().enumerate() {
            assert_eq!(d.signum(), sign, "n={n} p={p}: not monotone {sups:?}");
            assert!(d.abs() <= 0.1 * sups[i], "n={n} p={p}: step {d} too large in {sups:?}");
            if i > 0 {
                assert!(d.abs() <= steps[i - 1].abs(), "n={n} p={p}: steps grow {steps:?}");
            }
        }
    }
}

#[test]
fn nonnegative_data_gives_nonnegative_solutions() {
    let params = make_params(1, 1.4, 1e-6, None, None).unwrap();
    let g = GridSpec::new(1, 97, 64, 1.0, 1.0).unwrap();
    let measures = [
        RadonMeasure::dirac(Point::new(&[0.6]), 2.0, 1.0).unwrap(),
        RadonMeasure::empty(1, 1.0)
            .unwrap()
            .with_radial(Point::origin(1), RadialProfile::shell(0.1, 0.3, 5.0))
            .unwrap(),
        RadonMeasure::uniform(1, 0.01, 1.0).unwrap(),
        RadonMeasure::empty(1, 1.0).unwrap(),
    ];
    for m in &measures {
        let u = solve_ibvp(m, &params, &g).unwrap();
        let min = u.values().iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-12, "min {min}");
    }
}

#[test]
fn ratios_do_not_depend_on_the_wolff_tolerance() {
    for (n, p, kind, nx, nt) in [(1, 1.5, MeasureKind::TwoAtom, 129, 128), (2, 1.6, MeasureKind::Annular, 33, 32)] {
        let (u, m, params) = solved(n, p, kind, nx, nt);
        let samples = select_sample_points(u.grid(), 6, 4.0, 3).unwrap();
        for s in &samples {
            let radii = dyadic_radii(theorem_radius(u.grid(), &params, s), 5);
            let at = |tol: f64| {
                let o = EstimateOptions {
                    wolff_tol: tol,
                    window_scale: None,
                };
                (
                    check_theorem_i(&u, &m, &params, s, &radii, &o).unwrap().gamma_emp,
                    check_theorem_ii(&u, &m, &params, s, &radii, &o).unwrap().gamma_emp,
                )
            };
            let (a, b) = (at(1e-6), at(1e-9));
            for (x, y) in [(a.0, b.0), (a.1, b.1)] {
                assert!(x.is_finite() && y.is_finite());
                assert!((x - y).abs() <= 1e-3 * y.abs(), "{kind:?} {s:?}: {x} vs {y}");
            }
        }
        let p6 = check_proposition(&u, &m, &params, 1e-6).unwrap().estimate.gamma_emp;
        let p9 = check_proposition(&u, &m, &params, 1e-9).unwrap().estimate.gamma_emp;
        assert!((p6 - p9).abs() <= 1e-3 * p9.abs(), "{p6} vs {p9}");
    }
}

#[test]
fn iteration_invariants_hold_on_solved_fields() {
    for (n, p, kind, nx, nt) in [
        (1, 1.5, MeasureKind::Dirac, 129, 128),
        (1, 1.2, MeasureKind::Annular, 129, 128),
        (2, 1.8, MeasureKind::TwoAtom, 33, 32),
    ] {
        let (u, m, params) = solved(n, p, kind, nx, nt);
        for (xs, t0) in [(0.0, 0.5), (0.2, 0.4), (-0.35, 0.6)] {
            let x0 = Point::origin(n).shifted(0, xs);
            let it = IterationParams::fit(&u, &params, &x0, t0, &IterationOptions::default()).unwrap();
            let sum = run_iteration(&u, &it, &params, &m).unwrap();
            let inv = sum.invariants(&params);
            assert!(inv.all(), "{kind:?} at {xs}: {inv:?}");
            assert!(sum.consistent, "{kind:?} at {xs}: u {} vs l {}", sum.u_at_point, sum.l_limit);
            let levels = &sum.state.levels;
            assert!(levels.windows(2).all(|w| w[0] <= w[1]));
            assert!(sum.tail_bound.is_finite() && sum.l_limit >= sum.l_last);
        }
    }
}
