//! Acceptance suite: every documented exit criterion of the toolkit runs
//! here at its stated tolerance and prints one pass/fail line.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use shadowlab::bridge::{lift_solution_to_pseudo, orbit_residual_trace};
use shadowlab::cocycle::{
    brute_force_oracle, estimate_gain, fit_growth, solve_min_sup, Cocycle, GrowthClass,
    MinSupProblem,
};
use shadowlab::dichotomy::{
    bounded_response_check, detect, detect_half, first_window_above, product_growth_bound,
    transversality_check, trichotomy_1d, DetectParams, Half, Span, TrichotomyCase,
};
use shadowlab::maps::{build_circle_cubic, CatMap, CircleCubic, CircleCubicParams, HenonMap,
    PlanarContraction, SmoothMap};
use shadowlab::pseudo::{
    check_backward_accumulation, check_backward_tracking, check_hover_radius,
    estimate_holder_exponent, ExponentConfig, NoiseKind, SolverChoice, WindowRule,
};
use shadowlab::stats::geometric_grid;

fn circle() -> CircleCubic {
    build_circle_cubic(CircleCubicParams::default()).unwrap()
}

fn verdict(name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {}: {} ({})",
        name,
        if pass { "PASS" } else { "FAIL" },
        detail
    );
    assert!(pass, "criterion {} failed: {}", name, detail);
}

#[test]
fn criterion_01_circle_long_window_exponent() {
    let map = circle();
    let config = ExponentConfig {
        d_grid: geometric_grid(1e-6, 1e-3, 8),
        window: WindowRule::Scaled {
            c: 10.0,
            omega: 2.0 / 3.0,
        },
        trials: 32,
        noise: NoiseKind::AdversarialOutward,
        seed: 0x01_2024,
        solver: SolverChoice::Auto,
        max_window: 200_000,
    };
    let start = std::time::Instant::now();
    let est = estimate_holder_exponent(&map, &config).unwrap();
    let elapsed = start.elapsed();
    let pass = est.theta >= 0.28 && est.theta <= 0.38 && elapsed.as_secs() < 300;
    verdict(
        "01 circle long-window exponent",
        pass,
        &format!(
            "theta = {:.4} +- {:.4}, target [0.28, 0.38], {:.1?}",
            est.theta, est.stderr, elapsed
        ),
    );
}

#[test]
fn criterion_02_circle_finite_window_exponent() {
    let map = circle();
    let config = ExponentConfig {
        d_grid: geometric_grid(1e-6, 1e-3, 8),
        window: WindowRule::Scaled { c: 1.0, omega: 0.5 },
        trials: 32,
        noise: NoiseKind::AdversarialOutward,
        seed: 0x02_2024,
        solver: SolverChoice::Auto,
        max_window: 200_000,
    };
    let start = std::time::Instant::now();
    let est = estimate_holder_exponent(&map, &config).unwrap();
    let elapsed = start.elapsed();
    let pass = est.theta >= 0.45 && est.theta <= 0.55 && elapsed.as_secs() < 300;
    verdict(
        "02 circle finite-window exponent",
        pass,
        &format!(
            "theta = {:.4} +- {:.4}, target [0.45, 0.55], {:.1?}",
            est.theta, est.stderr, elapsed
        ),
    );
}

#[test]
fn criterion_03_circle_tracking_bounds() {
    let map = circle();
    let a = check_backward_tracking(&map, 1000, 0x03_01).unwrap();
    let b = check_hover_radius(&map, 1000, 0x03_02).unwrap();
    let c = check_backward_accumulation(&map, 1000, 0x03_03).unwrap();
    let pass = a.violations == 0 && b.violations == 0 && c.violations == 0;
    verdict(
        "03 circle tracking bounds",
        pass,
        &format!(
            "backward-tracking {}/{} (worst {:.3}), hover {}/{} (worst {:.3}), accumulation {}/{} (worst {:.3})",
            a.violations, a.samples, a.worst_ratio,
            b.violations, b.samples, b.worst_ratio,
            c.violations, c.samples, c.worst_ratio
        ),
    );
}

#[test]
fn criterion_04_cat_map_lipschitz_contrast() {
    let config = ExponentConfig {
        d_grid: geometric_grid(1e-6, 1e-3, 8),
        window: WindowRule::Scaled { c: 1.0, omega: 0.5 },
        trials: 32,
        noise: NoiseKind::UniformBall,
        seed: 0x04_2024,
        solver: SolverChoice::Newton,
        max_window: 200_000,
    };
    let est = estimate_holder_exponent(&CatMap, &config).unwrap();
    let pass = est.theta >= 0.9 && est.theta <= 1.05;
    verdict(
        "04 cat-map Lipschitz contrast",
        pass,
        &format!("theta = {:.4} +- {:.4}, target [0.9, 1.05]", est.theta, est.stderr),
    );
}

#[test]
fn criterion_05_min_sup_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x05_2024);
    let start = std::time::Instant::now();
    let mut worst = 0.0f64;
    for case in 0..200 {
        let m = 1 + case % 2;
        let n = 2 + (case * 7) % 11;
        let mats: Vec<DMatrix<f64>> = (0..n)
            .map(|_| loop {
                let cand = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-2.0f64..2.0));
                let svd = cand.clone().svd(false, false);
                let smin = svd.singular_values[svd.singular_values.len() - 1];
                if smin > 0.2 {
                    break cand;
                }
            })
            .collect();
        let cocycle = Cocycle::new(m, 0, mats).unwrap();
        let forcing: Vec<DVector<f64>> = (0..n)
            .map(|_| {
                let v = DVector::from_fn(m, |_, _| rng.gen_range(-1.0f64..1.0));
                let norm = v.norm().max(1e-9);
                v / norm
            })
            .collect();
        let problem = MinSupProblem::new(&cocycle, 0, n, forcing).unwrap();
        let solver = solve_min_sup(&problem).unwrap().sup;
        let oracle = brute_force_oracle(&problem, 1e-10).unwrap();
        worst = worst.max((solver - oracle).abs());
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-6 && elapsed.as_secs() < 120;
    verdict(
        "05 min-sup oracle equivalence",
        pass,
        &format!("worst |solver - oracle| = {:.2e} over 200 instances, {:.1?}", worst, elapsed),
    );
}

#[test]
fn criterion_06_closed_form_gains() {
    let mut detail = String::new();
    let mut pass = true;
    for n in [4usize, 10, 50] {
        let c = Cocycle::scalar(&vec![1.0; n], 0).unwrap();
        let g = estimate_gain(&c, 0, n, 24, 0x06_01).unwrap().gain;
        let err = (g - n as f64 / 2.0).abs();
        pass &= err <= 1e-6;
        detail.push_str(&format!("identity N={}: {:.8} (err {:.1e}); ", n, g, err));
    }
    for n in [50usize, 100, 200] {
        let c = Cocycle::scalar(&vec![2.0; n], 0).unwrap();
        let g = estimate_gain(&c, 0, n, 24, 0x06_02).unwrap().gain;
        pass &= g <= 1.0 + 1e-6;
        detail.push_str(&format!("doubling N={}: {:.8}; ", n, g));
    }
    verdict("06 closed-form response gains", pass, detail.trim_end());
}

#[test]
fn criterion_07_growth_classification() {
    let grid = [10usize, 20, 40, 80, 160];
    let ident = Cocycle::scalar(&vec![1.0; 160], 0).unwrap();
    let fit_id = fit_growth(&ident, 0, &grid, 16, 0x07_01).unwrap();
    let cat = Cocycle::constant(CatMap::matrix(), 0, 160).unwrap();
    let fit_cat = fit_growth(&cat, 0, &grid, 16, 0x07_02).unwrap();
    let doubling = Cocycle::scalar(&vec![2.0; 160], 0).unwrap();
    let fit_dbl = fit_growth(&doubling, 0, &grid, 16, 0x07_03).unwrap();
    let pass = (0.9..=1.1).contains(&fit_id.exponent)
        && fit_cat.exponent < 0.1
        && fit_dbl.exponent < 0.1
        && fit_id.class == GrowthClass::LinearOrWorse
        && fit_cat.class == GrowthClass::BoundedResponse;
    verdict(
        "07 growth-exponent classification",
        pass,
        &format!(
            "identity {:.3} (target [0.9, 1.1]), cat {:.3} (< 0.1), doubling {:.3} (< 0.1)",
            fit_id.exponent, fit_cat.exponent, fit_dbl.exponent
        ),
    );
}

#[test]
fn criterion_08_dichotomy_detection_and_transversality() {
    let params = DetectParams::default();
    let mut pass = true;
    let mut detail = String::new();

    let diag = Cocycle::constant(
        DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0]),
        -60,
        120,
    )
    .unwrap();
    let s = detect(&diag, Half::Forward, &params).unwrap().unwrap();
    let diag_ok = (s.rate - 0.5).abs() / 0.5 <= 0.02;
    pass &= diag_ok;
    detail.push_str(&format!("diag rate {:.4} (2% of 0.5); ", s.rate));

    let cat = Cocycle::constant(CatMap::matrix(), -60, 120).unwrap();
    let s = detect(&cat, Half::Forward, &params).unwrap().unwrap();
    let expected = (3.0 - 5.0f64.sqrt()) / 2.0;
    let cat_ok = (s.rate - expected).abs() / expected <= 0.05;
    pass &= cat_ok;
    detail.push_str(&format!("cat rate {:.4} (5% of {:.4}); ", s.rate, expected));

    let ident = Cocycle::constant(DMatrix::identity(2, 2), -60, 120).unwrap();
    let none_ok = detect(&ident, Half::Forward, &params).unwrap().is_none();
    pass &= none_ok;
    detail.push_str(&format!("identity none = {}; ", none_ok));

    // Transversality on both hyperbolic cases.
    for (name, c) in [("cat", &cat), ("diag", &diag)] {
        let f = detect_half(c, Half::Forward, &params).unwrap().unwrap();
        let b = detect_half(c, Half::Backward, &params).unwrap().unwrap();
        let t = transversality_check(&f, &b).unwrap();
        pass &= t.pass;
        detail.push_str(&format!("{} transversal = {}; ", name, t.pass));
    }

    // The bounded-response / splitting-plus-transversality equivalence on
    // the four catalog cocycles.
    let doubling = Cocycle::scalar(&vec![2.0; 120], -60).unwrap();
    let mixed_factors: Vec<f64> = (0..120).map(|i| if i < 60 { 0.5 } else { 2.0 }).collect();
    let mixed = Cocycle::scalar(&mixed_factors, -60).unwrap();
    let table: [(&str, &Cocycle, bool); 4] = [
        ("cat", &cat, true),
        ("identity", &ident, false),
        ("doubling", &doubling, true),
        ("contract-then-expand", &mixed, false),
    ];
    for (name, c, expect_bounded) in table {
        let fwd = detect_half(c, Half::Forward, &params).unwrap();
        let bwd = detect_half(c, Half::Backward, &params).unwrap();
        let split_ok = match (&fwd, &bwd) {
            (Some(f), Some(b)) => transversality_check(f, b).unwrap().pass,
            _ => false,
        };
        let growth = bounded_response_check(c, Span::Centered, 8, 0x08_11).unwrap();
        let bounded = growth.slope < 0.1;
        pass &= split_ok == expect_bounded && bounded == expect_bounded;
        detail.push_str(&format!(
            "{}: splitting+transversality {} / bounded {} (slope {:.3}); ",
            name, split_ok, bounded, growth.slope
        ));
    }

    verdict("08 dichotomy detection", pass, detail.trim_end());
}

#[test]
fn criterion_09_trichotomy_and_growth_bound() {
    let mut pass = true;
    let mut detail = String::new();

    let exp = Cocycle::scalar(&[2.0; 16], 0).unwrap();
    let c1 = trichotomy_1d(&exp, 2).unwrap();
    pass &= c1 == TrichotomyCase::Expanding;
    let con = Cocycle::scalar(&[0.5; 16], 0).unwrap();
    let c2 = trichotomy_1d(&con, 2).unwrap();
    pass &= c2 == TrichotomyCase::Contracting;
    let mixed_factors: Vec<f64> = (0..40).map(|i| if i < 20 { 2.0 } else { 0.5 }).collect();
    let mixed = Cocycle::scalar(&mixed_factors, -20).unwrap();
    let c3 = trichotomy_1d(&mixed, 6).unwrap();
    let mixed_ok = matches!(
        c3,
        TrichotomyCase::Mixed { expand_at, contract_at } if expand_at < contract_at
    );
    pass &= mixed_ok;
    detail.push_str(&format!("cases: {:?}, {:?}, mixed ordered = {}; ", c1, c2, mixed_ok));

    let finite = first_window_above(1.0, 0.5, 2.0, 1_000_000).unwrap();
    pass &= finite.is_some();
    let g100 = product_growth_bound(1.0, 0.5, 100).unwrap();
    pass &= g100 > 2.0;
    let none = first_window_above(1.0, 1.0, 2.0, 1_000_000).unwrap();
    pass &= none.is_none();
    detail.push_str(&format!(
        "finder(exp 1/2) = {:?}, bound(100) = {:.2}, finder(exp 1) = {:?}",
        finite, g100, none
    ));

    verdict("09 trichotomy and growth bound", pass, &detail);
}

fn lift_and_residual_sweep(map: &dyn SmoothMap, seed: u64, runs: usize) -> (usize, usize, f64) {
    let space = map.space();
    let _m = space.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lift_violations = 0usize;
    let mut residual_violations = 0usize;
    let mut worst = 0.0f64;
    for run in 0..runs {
        // Lift: displacement sequences solving the recursion under random
        // unit forcing along the orbit (the bound quantifies over these).
        let p0 = map.typical_point(&mut rng);
        let len = 8 + run % 17;
        let vs = match shadowlab::bridge::random_lift_displacement(
            map,
            &p0,
            len,
            seed ^ (run as u64).wrapping_mul(0x9e37_79b9),
        ) {
            Ok(vs) => vs,
            Err(_) => {
                lift_violations += 1;
                continue;
            }
        };
        let max_v = vs.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-9);
        // Keep (d · max|v|)² < d and the displacement inside the chart.
        let d_cap =
            (0.25 * space.injectivity_radius().min(1.0) / max_v).min(1.0 / (max_v * max_v)) * 0.5;
        let d = rng.gen_range(1e-8f64..1e-4).min(d_cap);
        match lift_solution_to_pseudo(map, &p0, &vs, d) {
            Ok(lift) => {
                if lift.measured_defect > lift.defect_bound {
                    lift_violations += 1;
                }
            }
            Err(_) => lift_violations += 1,
        }

        // Residual: an exact orbit close to a base orbit.
        let p0 = map.typical_point(&mut rng);
        let off_scale = 10f64.powf(rng.gen_range(-8.0..-4.0));
        let off = space.random_ball_vector(&mut rng, off_scale);
        let x0 = space.exp(&p0, &off);
        let mut base = vec![p0];
        let mut orbit = vec![x0];
        for _ in 0..40 {
            let nb = map.eval(base.last().unwrap());
            let no = map.eval(orbit.last().unwrap());
            if space.dist(&nb, &no) > 0.3 * space.injectivity_radius().min(1.0)
                || (!space.is_compact() && no.norm() > map.plane_bound())
            {
                break;
            }
            base.push(nb);
            orbit.push(no);
        }
        if base.len() < 3 {
            continue;
        }
        match orbit_residual_trace(map, &base, &orbit) {
            Ok(trace) => {
                if trace.worst_ratio.is_finite() {
                    worst = worst.max(trace.worst_ratio);
                    if trace.worst_ratio > 1.0 {
                        residual_violations += 1;
                    }
                } else if trace.max_residual > 1e-11 {
                    residual_violations += 1;
                }
            }
            Err(_) => residual_violations += 1,
        }
    }
    (lift_violations, residual_violations, worst)
}

#[test]
fn criterion_10_lift_and_residual_bounds() {
    let mut pass = true;
    let mut detail = String::new();
    let maps: Vec<Box<dyn SmoothMap>> = vec![
        Box::new(circle()),
        Box::new(CatMap),
        Box::new(PlanarContraction),
        Box::new(HenonMap::default()),
    ];
    for map in &maps {
        let (lifts, residuals, worst) = lift_and_residual_sweep(map.as_ref(), 0x10_2024, 1000);
        pass &= lifts == 0 && residuals == 0;
        detail.push_str(&format!(
            "{}: lift {}/1000, residual {}/1000 (worst ratio {:.3}); ",
            map.name(),
            lifts,
            residuals,
            worst
        ));
    }
    verdict("10 lift and residual bounds", pass, detail.trim_end());
}

#[test]
fn criterion_11_henon_finite_window_survey() {
    let map = HenonMap::default();
    let d_grid = vec![1e-10, 1e-9, 1e-8, 1e-7, 1e-6];
    let config = ExponentConfig {
        d_grid: d_grid.clone(),
        window: WindowRule::Scaled { c: 1.0, omega: 0.5 },
        trials: 4,
        noise: NoiseKind::UniformBall,
        seed: 0x11_2024,
        solver: SolverChoice::Newton,
        max_window: 100_000,
    };
    // Exploratory: the pipeline must complete and emit the table; no
    // tolerance is asserted on the distances themselves.
    let est = estimate_holder_exponent(&map, &config).unwrap();
    let csv = shadowlab::report::cells_csv(&est.cells, "henon-survey");
    let out = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("henon_finite_window.csv");
    std::fs::write(&out, &csv).unwrap();
    println!("henon distance-vs-defect table ({} cells):", est.cells.len());
    for c in &est.cells {
        println!(
            "  d={:.1e} n={} worst_eps={:.3e} ok={} failed={} (eps/sqrt(d) = {:.2})",
            c.d,
            c.n,
            c.worst_eps,
            c.ok_trials,
            c.failed_trials,
            c.worst_eps / c.d.sqrt()
        );
    }
    let pass = est.cells.len() == d_grid.len();
    verdict(
        "11 henon finite-window survey",
        pass,
        &format!(
            "{} cells emitted to {:?}, fitted slope {:.3} (exploratory, not gated)",
            est.cells.len(),
            out,
            est.theta
        ),
    );
}
