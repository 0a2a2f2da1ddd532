//! Acceptance suite: eleven end-to-end checks against closed-form and
//! fine-grid oracles, one test per criterion, each printing a single
//! pass/fail line. All tolerances are pinned here.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use causalcone::catalog::{build_spacetime, square_cell_grid};
use causalcone::curve::{
    canonicalize, h_arclength_reparam, hausdorff_distance, is_causal, sup_distance, CausalCurve,
    Orientation,
};
use causalcone::error::CausalityError;
use causalcone::geom::{
    cone_precedes, metric_delta, BoxRegion, ChartDomain, ConeOrder, MetricField, SamplingSpec,
    SymForm,
};
use causalcone::ladder::{
    check_causality, check_cauchy_surface, check_global_hyperbolicity, convex_combine,
    simplicity_trials, build_stable_widening, CauchySurfaceSpec, ChiField, RungVerdict,
    RungWitness,
};
use causalcone::limit::{extract_limit_curve, verify_usc, zigzag_family, ExtractMode};
use causalcone::reach::{
    cauchy_development, future_reach, imprisonment_bound, past_reach, default_horizon,
    DevelopmentSide, Grid, ImprisonmentVerdict, ReachMode,
};
use causalcone::solver::time_separation;

const SQRT2: f64 = std::f64::consts::SQRT_2;
const SEED: u64 = 20260823;

fn no_params() -> BTreeMap<String, f64> {
    BTreeMap::new()
}

fn minkowski_on(bounds: Vec<(f64, f64)>) -> MetricField {
    MetricField::minkowski(Arc::new(ChartDomain::new_box(bounds).unwrap()))
}

fn pass(n: usize, what: &str) {
    println!("criterion {n}: pass — {what}");
}

#[test]
fn criterion_01_minkowski_time_separation() {
    let g = build_spacetime("minkowski2d", &no_params()).unwrap();
    let started = Instant::now();
    let (tau, curve) = time_separation(&[0.0, 0.0], &[2.0, 1.0], &g, 64, 8, SEED).unwrap();
    let elapsed = started.elapsed();
    let expect = 3.0f64.sqrt();
    assert!(
        (tau - expect).abs() <= 0.01 * expect,
        "tau {tau} not within 1% of {expect}"
    );
    let chord = canonicalize(
        &CausalCurve::segment(g.domain.clone(), vec![0.0, 0.0], vec![2.0, 1.0], Orientation::Future).unwrap(),
    )
    .unwrap();
    let rho = sup_distance(&curve, &chord).unwrap();
    assert!(rho <= 0.02, "maximizer is {rho} from the chord (allowed 0.02)");
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, budget 5 s");
    pass(1, "tau within 1% of sqrt(3), maximizer within 0.02 of the chord, under 5 s");
}

#[test]
fn criterion_02_reach_sandwich() {
    // Square chart so exact null grid steps exist at 256^2.
    let g = build_spacetime("minkowski2d", &no_params()).unwrap();
    let started = Instant::now();
    let grid = Grid::over_domain(&g.domain, 256, 3).unwrap();
    let horizon = default_horizon(&g);
    let over = future_reach(&[0.0, 0.0], &g, &grid, ReachMode::Over, horizon).unwrap();
    let under = future_reach(&[0.0, 0.0], &g, &grid, ReachMode::Under, horizon).unwrap();
    let cell = grid.min_cell();
    // Distance from a point to the boundary of { t >= |x| }.
    let cone_boundary_dist = |t: f64, x: f64| -> f64 {
        if t + x.abs() >= 0.0 {
            (t - x.abs()).abs() / SQRT2
        } else {
            (t * t + x * x).sqrt()
        }
    };
    let allowed = 2.0 * SQRT2 * cell + 1e-12;
    for f in 0..grid.len() {
        let c = grid.center(&grid.unflat(f));
        let analytic = c[0] >= c[1].abs();
        let in_under = under.cells[f];
        let in_over = over.cells[f];
        // Sandwich: under ⊆ analytic ⊆ over, mismatches only near the cone.
        if (in_under && !analytic) || (analytic && !in_over) || (in_over && !analytic) || (analytic && !in_under) {
            let d = cone_boundary_dist(c[0], c[1]);
            assert!(
                d <= allowed,
                "cell at ({}, {}) mismatched {} from the cone boundary (allowed {allowed})",
                c[0],
                c[1],
                d
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}, budget 10 s");
    pass(2, "256^2 under/over reach sandwich tight to 2 cells around the cone, under 10 s");
}

#[test]
fn criterion_03_usc_suite() {
    let g = build_spacetime("minkowski2d", &no_params()).unwrap();
    let domain = g.domain.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut checked = 0usize;

    // 850 null-zigzag families with varied geometry.
    for i in 0..850 {
        let v_run = 0.6 + 1.2 * rng.gen::<f64>();
        let legs = 2 + (i % 7);
        let family = zigzag_family(domain.clone(), v_run, 10, legs).unwrap();
        let limit = canonicalize(
            &CausalCurve::segment(
                domain.clone(),
                vec![0.0, 0.0],
                vec![v_run / 2.0, v_run / 2.0],
                Orientation::Future,
            )
            .unwrap(),
        )
        .unwrap();
        let lip = family.iter().map(|c| c.lipschitz()).fold(0.0f64, f64::max);
        let tol = 1e-6 + 1e-9 * lip; // noise floor plus a quadrature allowance
        let outcome = verify_usc(&g, &family, &limit, tol).unwrap();
        assert!(outcome.holds(), "zigzag family {i} broke upper semi-continuity");
        checked += 1;
    }

    // 100 widened-maximizer families: maximizers under a shrinking widening
    // ladder converge to the unwidened maximizer.
    for i in 0..100 {
        let p = vec![-0.5 + rng.gen::<f64>(), -0.5 + rng.gen::<f64>()];
        let dt = 0.6 + 0.6 * rng.gen::<f64>();
        let dx = (2.0 * rng.gen::<f64>() - 1.0) * 0.7 * dt;
        let q = vec![p[0] + dt, p[1] + dx];
        let (_, limit) = time_separation(&p, &q, &g, 4, 1, SEED + i).unwrap();
        let family: Vec<CausalCurve> = (0..6)
            .map(|k| {
                let wider = g.widen(0.4 * 0.5f64.powi(k));
                time_separation(&p, &q, &wider, 4, 1, SEED + i).unwrap().1
            })
            .collect();
        let tol = 1e-6 + 1e-9 * limit.lipschitz();
        let outcome = verify_usc(&g, &family, &limit, tol).unwrap();
        assert!(outcome.holds(), "widened-maximizer family {i} broke upper semi-continuity");
        checked += 1;
    }

    // 50 solver-refinement families: iterates at doubling segment counts.
    for i in 0..50 {
        let p = vec![-0.5 + rng.gen::<f64>(), -0.5 + rng.gen::<f64>()];
        let dt = 0.6 + 0.6 * rng.gen::<f64>();
        let dx = (2.0 * rng.gen::<f64>() - 1.0) * 0.7 * dt;
        let q = vec![p[0] + dt, p[1] + dx];
        let family: Vec<CausalCurve> = [4usize, 8, 16, 32]
            .iter()
            .map(|&n| time_separation(&p, &q, &g, n, 1, SEED + i).unwrap().1)
            .collect();
        let limit = family.last().unwrap().clone();
        let tol = 1e-6 + 1e-9 * limit.lipschitz();
        let outcome = verify_usc(&g, &family, &limit, tol).unwrap();
        assert!(outcome.holds(), "solver-iterate family {i} broke upper semi-continuity");
        checked += 1;
    }

    assert_eq!(checked, 1000);
    pass(3, "upper semi-continuity held on 1000/1000 generated convergent families");
}

#[test]
fn criterion_04_limit_curve_extraction() {
    let g = build_spacetime("minkowski2d", &no_params()).unwrap();
    let family = zigzag_family(g.domain.clone(), 2.0, 64, 6).unwrap();
    // On [0,1] the canonical Lipschitz constant is the h-length.
    let lip = family.iter().map(|c| c.h_length()).fold(0.0f64, f64::max);
    let result = extract_limit_curve(&g, &family, ExtractMode::FixedInterval, lip * 1.01, 1e-9).unwrap();
    let diagonal = canonicalize(
        &CausalCurve::segment(g.domain.clone(), vec![0.0, 0.0], vec![1.0, 1.0], Orientation::Future).unwrap(),
    )
    .unwrap();
    let rho = sup_distance(&result.limit, &diagonal).unwrap();
    assert!(rho <= 1e-3, "limit is {rho} from the diagonal (allowed 1e-3)");
    for eps in [0.1, 0.01, 0.001] {
        let v = is_causal(&result.limit, &g.widen(eps), 1e-9, 8).unwrap();
        assert!(v.is_causal(), "limit not causal under widening {eps}");
    }
    pass(4, "zigzag limit within 1e-3 of the diagonal and causal under all widenings");
}

#[test]
fn criterion_05_delta_and_cone_algebra() {
    let eta = minkowski_on(vec![(-1.0, 1.0), (-1.0, 1.0)]);
    let spec = SamplingSpec { points_per_axis: 5, directions: 1000 };
    for eps in [0.01, 0.1, 0.5] {
        let wider = eta.widen(eps);
        let d = metric_delta(&eta, &wider, None, &spec).unwrap();
        assert!(
            (d.sampled - eps).abs() <= 1e-9,
            "delta(eta, widen(eta, {eps})) sampled as {} (allowed 1e-9 off)",
            d.sampled
        );
        let order = cone_precedes(&eta, &wider, None, 128).unwrap();
        assert_eq!(order, ConeOrder::StrictlyPrecedes, "widen({eps}) not strictly wider");
    }
    match eta.narrow(1.0) {
        Err(CausalityError::SignatureCollapse { .. }) => {}
        other => panic!("narrow(eta, 1.0) should collapse the signature, got {other:?}"),
    }
    pass(5, "delta equals epsilon to 1e-9, widening strictly precedes, narrow(1.0) collapses");
}

#[test]
fn criterion_06_ladder_verdicts() {
    // minkowski2d: everything passes.
    let mink = build_spacetime("minkowski2d", &no_params()).unwrap();
    let grid = square_cell_grid(&mink, 12.0, 3).unwrap();
    let report = check_global_hyperbolicity(&mink, &grid, 8, SEED).unwrap();
    assert!(report.passed(), "flat chart should pass every rung: {report:?}");

    // ctc_cylinder: causality fails with a verifiable closed witness.
    let ctc = build_spacetime("ctc_cylinder", &no_params()).unwrap();
    let ctc_grid = square_cell_grid(&ctc, 24.0, 3).unwrap();
    match check_causality(&ctc, &ctc_grid).unwrap() {
        RungVerdict::Fail(RungWitness::ClosedCurve(w)) => {
            assert!(is_causal(&w, &ctc, 1e-9, 8).unwrap().is_causal(), "witness must be causal");
            // Closed on the cylinder: endpoint displacement is a whole number
            // of time periods with no spatial drift.
            let dt = w.end()[0] - w.start()[0];
            let dx = w.end()[1] - w.start()[1];
            assert!((dt - dt.round()).abs() < 1e-9 && dt.round().abs() >= 1.0 && dx.abs() < 1e-9);
        }
        other => panic!("expected a closed-curve causality failure, got {other:?}"),
    }

    // punctured chart, S = {t = 0}: Cauchy-surface fail with a witness that
    // never crosses the surface.
    let punct = build_spacetime("punctured_minkowski", &no_params()).unwrap();
    let punct_grid = square_cell_grid(&punct, 12.0, 3).unwrap();
    let spec = CauchySurfaceSpec::from_fn(|x: &[f64]| x[0], 0.0);
    match check_cauchy_surface(&spec, &punct, 40, &punct_grid, SEED).unwrap() {
        RungVerdict::Fail(RungWitness::Curve(w)) => {
            assert!(is_causal(&w, &punct, 1e-6, 4).unwrap().is_causal(), "witness must be causal");
            let signs: Vec<f64> = w.vertices.iter().map(|v| v[0]).collect();
            assert!(
                signs.iter().all(|&t| t > 0.0) || signs.iter().all(|&t| t < 0.0),
                "witness crosses t = 0"
            );
        }
        other => panic!("expected a non-crossing curve witness, got {other:?}"),
    }

    // slit chart: simplicity failure, cross-checked on a refined grid for
    // 200 sampled (p, approaching, q) triples.
    let slit = build_spacetime("slit_minkowski", &no_params()).unwrap();
    let base_grid = square_cell_grid(&slit, 12.0, 3).unwrap();
    let fine_grid = square_cell_grid(&slit, 24.0, 3).unwrap();
    let horizon = default_horizon(&slit);
    let mut triples: Vec<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> = Vec::new();
    let mut round = 0u64;
    while triples.len() < 200 {
        let trials = simplicity_trials(&slit, &base_grid, 60, SEED + round).unwrap();
        for t in &trials {
            for (q, approaching) in &t.witnesses {
                triples.push((t.p.clone(), q.clone(), approaching.clone()));
            }
        }
        round += 1;
        assert!(round < 60, "not enough simplicity witnesses found");
    }
    triples.truncate(200);
    let mut agree = 0usize;
    for (p, q, approaching) in &triples {
        // Refined oracle: forward if the witness looks future-directed.
        let future = q[0] >= p[0];
        let reach = if future {
            future_reach(p, &slit, &fine_grid, ReachMode::Over, horizon).unwrap()
        } else {
            past_reach(p, &slit, &fine_grid, ReachMode::Over, horizon).unwrap()
        };
        let q_unreachable = !reach.contains_point(q);
        let approached = approaching.iter().any(|a| reach.contains_point(a));
        if q_unreachable && approached {
            agree += 1;
        }
    }
    assert_eq!(agree, triples.len(), "refined-grid oracle agreed on {agree}/200 witnesses");
    pass(6, "ladder verdicts match the four catalog oracles, 200/200 slit witnesses confirmed");
}

#[test]
fn criterion_07_convex_combination() {
    let domain = Arc::new(ChartDomain::new_box(vec![(-1.0, 1.0), (-1.0, 1.0)]).unwrap());
    // The degenerate pair: both Lorentzian, cones at right angles.
    let g1 = MetricField::minkowski(domain.clone());
    let g2 = MetricField::constant(domain.clone(), SymForm::from_diag(&[1.0, -1.0]), "flipped");
    match convex_combine(&g1, &g2, &ChiField::constant(0.5)) {
        Err(CausalityError::ConeOrderViolation { .. }) => {}
        other => panic!("the degenerate pair must be refused, got {other:?}"),
    }

    // 100 cone-ordered random pairs combine to Lorentzian fields everywhere.
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for i in 0..100 {
        // Random Lorentzian form: pull Minkowski back along a near-identity map.
        let a = [
            1.0 + 0.3 * (rng.gen::<f64>() - 0.5),
            0.3 * (rng.gen::<f64>() - 0.5),
            0.3 * (rng.gen::<f64>() - 0.5),
            1.0 + 0.3 * (rng.gen::<f64>() - 0.5),
        ];
        let m = SymForm::minkowski(2);
        let col0 = [a[0], a[2]];
        let col1 = [a[1], a[3]];
        let form = SymForm::from_rows(
            2,
            vec![m.quad(&col0), m.eval(&col0, &col1), m.eval(&col0, &col1), m.quad(&col1)],
        );
        let narrow_field = MetricField::constant(domain.clone(), form, "random");
        let wide_field = narrow_field.widen(0.05 + 0.45 * rng.gen::<f64>());
        let cx = rng.gen::<f64>() - 0.5;
        let ct = rng.gen::<f64>() - 0.5;
        let chi = ChiField::from_fn(
            move |x: &[f64]| (-2.0 * ((x[0] - ct).powi(2) + (x[1] - cx).powi(2))).exp(),
            4.0,
        );
        let combined = convex_combine(&narrow_field, &wide_field, &chi)
            .unwrap_or_else(|e| panic!("pair {i} refused: {e}"));
        combined.validate(9, 1e-12).unwrap_or_else(|e| panic!("pair {i} not Lorentzian: {e}"));
    }
    pass(7, "degenerate pair refused, 100/100 ordered pairs combined Lorentzian");
}

#[test]
fn criterion_08_stable_widening() {
    let ladder = [0.4, 0.2, 0.1, 0.05];
    for (id, cells, stencil) in [("minkowski2d", 12.0, 3usize), ("bubble_metric", 48.0, 2)] {
        let g = build_spacetime(id, &no_params()).unwrap();
        let sw = build_stable_widening(&g, 4, &ladder).unwrap();
        assert!(sw.strictly_wider, "{id}: base cones must strictly precede the widened field");
        for c in &sw.shell_checks {
            assert!(c.weak_ok && c.strict_ok, "{id}: shell {} order failed", c.shell);
        }
        let grid = square_cell_grid(&sw.field, cells, stencil).unwrap();
        let report = check_global_hyperbolicity(&sw.field, &grid, 4, SEED).unwrap();
        assert!(report.passed(), "{id}: widened field should stay globally hyperbolic: {report:?}");
    }
    pass(8, "stable widenings ordered correctly on both slabs and still globally hyperbolic");
}

#[test]
fn criterion_09_cauchy_development() {
    let g = minkowski_on(vec![(-2.0, 2.0), (-2.0, 2.0)]);
    let grid = Grid::over_domain(&g.domain, 256, 3).unwrap();
    let s = vec![BoxRegion::new(vec![0.0, -1.0], vec![0.0, 1.0])];
    let dev = cauchy_development(&s, &g, &grid, DevelopmentSide::Future).unwrap();
    let cell = grid.min_cell();
    let allowed = SQRT2 * cell + 1e-12; // one cell, measured across the diagonal
    for f in 0..grid.len() {
        let c = grid.center(&grid.unflat(f));
        let (t, x) = (c[0], c[1]);
        let analytic = t >= 0.0 && x.abs() + t <= 1.0;
        if dev.cells[f] != analytic {
            let d = t.abs().min((1.0 - t - x.abs()).abs() / SQRT2);
            assert!(
                d <= allowed,
                "development mismatch at ({t}, {x}), {d} from the analytic boundary"
            );
        }
    }
    pass(9, "future development matches the analytic triangle to one cell at 256^2");
}

#[test]
fn criterion_10_imprisonment_bound() {
    // Chart equals K so the grid resolution pins the tolerance.
    let g = minkowski_on(vec![(0.0, 1.0), (-1.0, 1.0)]);
    let grid = Grid::new(vec![(0.0, 1.0), (-1.0, 1.0)], vec![256, 512], vec![false, false], 3).unwrap();
    let k = BoxRegion::new(vec![0.0, -1.0], vec![1.0, 1.0]);
    match imprisonment_bound(&k, &g, &grid).unwrap() {
        ImprisonmentVerdict::Bounded(c) => {
            let lo = SQRT2 * (1.0 - 2.0 / 256.0);
            let hi = SQRT2 * (1.0 + 2.0 / 256.0);
            assert!(c >= lo && c <= hi, "bound {c} outside [{lo}, {hi}]");
        }
        other => panic!("expected a bounded verdict, got {other:?}"),
    }

    let ctc = build_spacetime("ctc_cylinder", &no_params()).unwrap();
    let ctc_grid = square_cell_grid(&ctc, 32.0, 3).unwrap();
    let k_all = BoxRegion::new(vec![0.0, -1.0], vec![1.0, 1.0]);
    match imprisonment_bound(&k_all, &ctc, &ctc_grid).unwrap() {
        ImprisonmentVerdict::EvidenceUnbounded(w) => {
            assert!(is_causal(&w, &ctc, 1e-9, 8).unwrap().is_causal(), "cycle witness must be causal");
        }
        other => panic!("expected unbounded evidence on the closed cylinder, got {other:?}"),
    }
    pass(10, "h-length bound sqrt(2) reproduced within 2/grid; cylinder cycle witness confirmed");
}

#[test]
fn criterion_11_curve_algebra() {
    let domain = Arc::new(ChartDomain::new_box(vec![(-2.0, 3.0), (-2.0, 3.0)]).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let random_curve = |rng: &mut ChaCha8Rng| -> CausalCurve {
        let n = 4 + (rng.gen::<u64>() % 6) as usize;
        let mut vertices = Vec::with_capacity(n);
        let mut t = -1.0 + rng.gen::<f64>();
        let mut x = -1.0 + 2.0 * rng.gen::<f64>();
        for _ in 0..n {
            vertices.push(vec![t, x]);
            t += 0.05 + 0.3 * rng.gen::<f64>();
            x += (2.0 * rng.gen::<f64>() - 1.0) * 0.4;
            // Reflect at the walls so every vertex stays in the chart.
            if x > 1.9 {
                x = 3.8 - x;
            } else if x < -1.9 {
                x = -3.8 - x;
            }
        }
        CausalCurve::from_vertices(domain.clone(), vertices, Orientation::Future).unwrap()
    };
    for i in 0..1000 {
        let a = canonicalize(&random_curve(&mut rng)).unwrap();
        let b = canonicalize(&random_curve(&mut rng)).unwrap();

        // Canonicalization is idempotent.
        let again = canonicalize(&a).unwrap();
        for (pa, pb) in a.params.iter().zip(again.params.iter()) {
            assert!((pa - pb).abs() <= 1e-12, "pair {i}: canonical parameters moved");
        }
        for (va, vb) in a.vertices.iter().zip(again.vertices.iter()) {
            for (ca, cb) in va.iter().zip(vb.iter()) {
                assert!((ca - cb).abs() <= 1e-12, "pair {i}: canonical vertices moved");
            }
        }

        // Constant h-speed across segments, to 1e-9 relative.
        let total = a.h_length();
        for s in 0..a.segment_count() {
            let seg = a.domain.dist_h(&a.vertices[s], &a.vertices[s + 1]);
            let speed = seg / (a.params[s + 1] - a.params[s]);
            assert!(
                (speed - total).abs() <= 1e-9 * total,
                "pair {i}: segment {s} speed {speed} vs h-length {total}"
            );
        }

        // Hausdorff never exceeds the sup metric.
        let rho = sup_distance(&a, &b).unwrap();
        let d = hausdorff_distance(&a, &b);
        assert!(d <= rho + 1e-12, "pair {i}: hausdorff {d} > sup {rho}");

        // Reparametrization leaves the image, hence d, unchanged.
        let re = h_arclength_reparam(&a).unwrap();
        assert!(hausdorff_distance(&a, &re) <= 1e-12, "pair {i}: reparametrization moved the image");
    }
    pass(11, "canonicalization idempotent, constant speed, d <= rho on 1000 pairs, reparam-invariant");
}
