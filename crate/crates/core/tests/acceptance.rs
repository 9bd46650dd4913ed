//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fail.
//!
//! Run alone with `cargo test -p conformal-mms --test acceptance`.

use std::f64::consts::PI;
use std::process::ExitCode;

use conformal_mms::curvature::{curvature_bound, ricci_lower_bound_check};
use conformal_mms::formulas::{angle, ricci_n, ricci_special_case_nw, transformed_angle, transformed_hessian, transformed_ricci_n};
use conformal_mms::fractal::{
    approx_distance, fractal_weight, gap_bound_check, measure_diameter_bounds, random_exterior_pairs, FractalGrid, FractalParams,
};
use conformal_mms::oracle::{christoffel_hessian, conformal_hs_sq, gauss_curvature_2d, smooth_conformal_ricci, Differentiator};
use conformal_mms::verify::{verify_identity, Identity, VerifySetup};
use conformal_mms::{
    build_grid_space, conformal_transform, ConformalPair, FieldExpr, Geometry, MaskedField, Rect, RicciParams, ScalarField, SmoothField,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Check);

fn fail(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn max_gap(a: &MaskedField, b: &MaskedField) -> f64 {
    a.zip_with(b, |x, y| (x - y).abs()).max_abs()
}

/// Prediction vs direct at 64² and 128²: relative error at 128² and the
/// refinement ratio, plus the smooth closed form at 128².
fn refinement(identity: Identity, setup: &VerifySetup, exact: impl Fn(&[f64]) -> f64) -> Result<(f64, f64, f64), String> {
    let coarse = verify_identity(identity, setup, 64).map_err(fail)?;
    let fine = verify_identity(identity, setup, 128).map_err(fail)?;
    let ratio = coarse.report.max_abs_err / fine.report.max_abs_err;
    let mut oracle_err = 0.0f64;
    let mut scale = 0.0f64;
    for (i, p) in fine.prediction.iter_valid() {
        let e = exact(&fine.coords[i]);
        oracle_err = oracle_err.max((p - e).abs());
        scale = scale.max(e.abs());
    }
    Ok((fine.report.max_rel_err, ratio, oracle_err / scale))
}

fn c1_gradient() -> Check {
    let setup = VerifySetup::default_for(Identity::Gradient);
    // e^{-x} |(cos x, 1)|
    let (rel, ratio, oracle) = refinement(Identity::Gradient, &setup, |p| (-p[0]).exp() * (p[0].cos().powi(2) + 1.0).sqrt())?;
    Ok((rel <= 0.05 && ratio >= 2.0, format!("rel err {rel:.3e} at 128², ratio {ratio:.2}, vs closed form {oracle:.3e}")))
}

fn c2_laplacian() -> Check {
    let setup = VerifySetup::default_for(Identity::Laplacian);
    // e^{-2x}(2 - 2·2x) for f = x², w = x, v = 0
    let (rel, ratio, oracle) = refinement(Identity::Laplacian, &setup, |p| (-2.0 * p[0]).exp() * (2.0 - 4.0 * p[0]))?;
    let constant = VerifySetup { w: FieldExpr::Const(0.7), ..setup };
    let c = verify_identity(Identity::Laplacian, &constant, 64).map_err(fail)?;
    let exact = c.report.max_rel_err <= 1e-12;
    Ok((
        rel <= 0.05 && ratio >= 2.0 && exact,
        format!("rel err {rel:.3e} at 128², ratio {ratio:.2}, vs closed form {oracle:.3e}; constant w rel err {:.1e}", c.report.max_rel_err),
    ))
}

fn c3_angle() -> Check {
    let space = build_grid_space(40, 40, Rect::symmetric(1.0)).map_err(fail)?;
    let geo = Geometry::new(space).map_err(fail)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let f = geo.space().sample(&FieldExpr::random_smooth(&mut rng, 2, 4)).map_err(fail)?;
    let g = geo.space().sample(&FieldExpr::random_smooth(&mut rng, 2, 4)).map_err(fail)?;
    let w = geo.space().sample(&FieldExpr::random_smooth(&mut rng, 2, 4).scaled(2.0)).map_err(fail)?;
    let pair = ConformalPair::new(w.clone(), ScalarField::zeros(w.len())).map_err(fail)?;
    let (x, y) = (geo.gradient(&f), geo.gradient(&g));
    let s = w.map(|w| (-2.0 * w).exp());
    let before = angle(&x, &y);
    let after = transformed_angle(&pair, &x.scale_by(&s), &y.scale_by(&s)).map_err(fail)?;
    let (mut count, mut worst, mut worst_oracle) = (0usize, 0.0f64, 0.0f64);
    for (i, a) in after.iter_valid() {
        if count == 1000 {
            break;
        }
        let Some(b) = before.get(i) else { continue };
        let (u, v) = (x.get(i).unwrap(), y.get(i).unwrap());
        let oracle = (u[0] * v[1] - u[1] * v[0]).abs().atan2(u[0] * v[0] + u[1] * v[1]);
        worst = worst.max((a - b).abs());
        worst_oracle = worst_oracle.max((a - oracle).abs());
        count += 1;
    }
    Ok((count == 1000 && worst <= 1e-12 && worst_oracle <= 1e-12, format!("{count} pairs, max |∠'-∠| {worst:.1e}, vs atan2 {worst_oracle:.1e}")))
}

fn c4_hessian() -> Check {
    let base = build_grid_space(128, 128, Rect::unit()).map_err(fail)?;
    let (fx, wy) = (FieldExpr::x(), FieldExpr::y());
    let f = base.sample(&fx).map_err(fail)?;
    let w = base.sample(&wy).map_err(fail)?;
    let pair = ConformalPair::new(w.clone(), ScalarField::zeros(w.len())).map_err(fail)?;
    let direct = Geometry::new(conformal_transform(&base, &pair).map_err(fail)?).map_err(fail)?;
    let hs = direct.hessian(&f).map_scalar(|_, m| m.hs_sq());
    let diff = Differentiator::default();
    let (mut err, mut scale) = (0.0f64, 0.0f64);
    for (i, h) in hs.iter_valid() {
        let p = base.coord(i).unwrap();
        let oracle = conformal_hs_sq(&wy, &christoffel_hessian(&wy, &fx, p, &diff), p);
        let closed = 2.0 * (-4.0 * p[1]).exp();
        if (oracle - closed).abs() > 1e-12 * closed {
            return Err(format!("oracle disagrees with 2e^(-4y) at node {i}"));
        }
        err = err.max((h - oracle).abs());
        scale = scale.max(oracle);
    }
    let rel = err / scale;
    let geo = Geometry::new(base).map_err(fail)?;
    let th = transformed_hessian(&geo, &pair, &f).map_err(fail)?;
    let mut trace_err = 0.0f64;
    for (i, t) in th.trace.iter_valid() {
        let m = th.hessian.get(i).unwrap();
        trace_err = trace_err.max((t - m.trace()).abs() / m.trace().abs().max(1.0));
    }
    Ok((rel <= 0.05 && trace_err <= 1e-12, format!("HS² rel err {rel:.3e} at 128², trace identity {trace_err:.1e}")))
}

fn c5_stereographic_oracle() -> Check {
    let w = FieldExpr::Stereographic;
    let diff = Differentiator::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let r2: f64 = p[0] * p[0] + p[1] * p[1];
        // g' = e^{2w} δ = 4/(1+r²)² δ
        let g = 4.0 / (1.0 + r2).powi(2);
        if ((2.0 * w.value(&p)).exp() - g).abs() > 1e-12 * g {
            return Err("metric factor mismatch".into());
        }
        let ric = smooth_conformal_ricci(&w, 2, &p, &diff).map_err(fail)?;
        for a in 0..2 {
            for b in 0..2 {
                let want = if a == b { g } else { 0.0 };
                worst = worst.max((ric[(a, b)] - want).abs() / g);
            }
        }
        worst = worst.max((gauss_curvature_2d(&w, &p, &diff).map_err(fail)? - 1.0).abs());
    }
    Ok((worst <= 1e-8, format!("max |Ricci' - g'| / g' over 100 points {worst:.1e}")))
}

fn c6_curvature_bound() -> Check {
    let flat = Geometry::new(build_grid_space(32, 32, Rect::unit()).map_err(fail)?).map_err(fail)?;
    let mut exact = true;
    for (c, n, k) in [(0.7, 2.0, 1.0), (-0.4, 3.0, 2.5), (1.3, 5.5, -1.0)] {
        let b = curvature_bound(&flat, &ScalarField::constant(flat.node_count(), c), n, k).map_err(fail)?;
        exact &= b.k_prime == (-2.0 * c).exp() * k;
    }
    let sphere = build_grid_space(200, 200, Rect::symmetric(1.0)).map_err(fail)?;
    let w = sphere.sample(&FieldExpr::Stereographic).map_err(fail)?;
    let geo = Geometry::new(sphere).map_err(fail)?;
    let k = curvature_bound(&geo, &w, 2.0, 0.0).map_err(fail)?.k_prime;
    Ok((exact && (0.98..=1.02).contains(&k), format!("constant w exact: {exact}; stereographic K' {k:.6} at 200²")))
}

fn c7_general_vs_volume_matched() -> Check {
    let geo = Geometry::new(build_grid_space(48, 48, Rect::symmetric(1.0)).map_err(fail)?).map_err(fail)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let n_prime = rng.gen_range(2.5..6.0);
        let f = geo.space().sample(&FieldExpr::random_smooth(&mut rng, 2, 4)).map_err(fail)?;
        let w = geo.space().sample(&FieldExpr::random_smooth(&mut rng, 2, 3).scaled(0.5)).map_err(fail)?;
        let params = RicciParams::new(n_prime, 0.0);
        let general = transformed_ricci_n(&geo, &ConformalPair::volume_matched(w.clone(), n_prime), &params, &f).map_err(fail)?;
        let special = ricci_special_case_nw(&geo, &w, &params, &f).map_err(fail)?;
        worst = worst.max(max_gap(&general, &special) / general.max_abs().max(1.0));
    }
    Ok((worst <= 1e-10, format!("10 random (f, w, N), max scaled gap {worst:.1e}")))
}

fn c8_ricci_flat() -> Check {
    let geo = Geometry::new(build_grid_space(128, 128, Rect::unit()).map_err(fail)?).map_err(fail)?;
    let f = geo.space().sample(&"r2".parse::<FieldExpr>().map_err(fail)?).map_err(fail)?;
    // |H_f|² = |2 δ|² = 8
    let scale = 8.0;
    let mut detail = Vec::new();
    let mut ok = true;
    for n in [2.0, 3.0] {
        let r = ricci_n(&geo, &RicciParams::new(n, 0.0), &f).map_err(fail)?;
        let rel = r.max_abs() / scale;
        ok &= rel <= 0.05;
        detail.push(format!("N={n}: {rel:.1e}"));
    }
    Ok((ok, format!("max |Ricci_N| / |H_f|² ({})", detail.join(", "))))
}

fn c9_ball_series() -> Check {
    let mut ok = true;
    for depth in 0..=10 {
        ok &= measure_diameter_bounds(&FractalParams::new(0.1, 0.5, depth).map_err(fail)?).passed();
    }
    let r = measure_diameter_bounds(&FractalParams::new(0.1, 0.5, 10).map_err(fail)?);
    // Σ 4ⁿ π (ε 8⁻ⁿ)² and Σ 4ⁿ 2 ε 8⁻ⁿ through n = 10
    let series_m: f64 = (0..=10).map(|n| 4f64.powi(n) * PI * (0.1 * 8f64.powi(-n)).powi(2)).sum();
    let series_d: f64 = (0..=10).map(|n| 4f64.powi(n) * 0.2 * 8f64.powi(-n)).sum();
    ok &= r.measure_total < 0.06284 && r.diam_sum <= 0.4;
    ok &= (r.measure_total - series_m).abs() <= 1e-15 && (r.diam_sum - series_d).abs() <= 1e-15;
    Ok((ok, format!("measure {:.6e}, diameter {:.6e}, exact check through depth 10: {}", r.measure_total, r.diam_sum, r.exact_ok)))
}

/// `d_2((-0.9,-0.9), (0.9,0.9))` on the default fractal grid.
const D2_128: f64 = 2.615_979_144_263_759;
const D2_256: f64 = 2.627_004_917_785_949;

fn c10_fractal_gaps() -> Check {
    let params = FractalParams::new(0.1, 0.5, 3).map_err(fail)?;
    let pairs = random_exterior_pairs(&params, 3, 10, 2024);
    let mut ok = true;
    let mut detail = Vec::new();
    for r in [128, 256] {
        for level in [1, 2] {
            let g = gap_bound_check(&params, level, &pairs, r).map_err(fail)?;
            ok &= g.passed;
            detail.push(format!("{level}->{} @{r}: gap {:.1e} <= {:.3e}", level + 1, g.max_gap, g.bound));
        }
    }
    let (x, y) = ([-0.9, -0.9], [0.9, 0.9]);
    for (r, frozen) in [(128usize, D2_128), (256, D2_256)] {
        let d = approx_distance(&params, 2, x, y, r).map_err(fail)?;
        let grid = FractalGrid::new(r).map_err(fail)?;
        let (a, b) = (grid.space().coord(grid.nearest(x)).unwrap().to_vec(), grid.space().coord(grid.nearest(y)).unwrap().to_vec());
        let euclid = (b[0] - a[0]).hypot(b[1] - a[1]);
        // trapezoid integral of e^{w_2} along the straight diagonal through nodes
        let steps = ((b[0] - a[0]) / grid.spacing()).round() as usize;
        let h = (b[0] - a[0]) / steps as f64;
        let wt = |k: usize| fractal_weight(&params, [a[0] + k as f64 * h, a[1] + k as f64 * h], 2).map(f64::exp);
        let mut straight = 0.0;
        for k in 0..steps {
            straight += 0.5 * (wt(k).map_err(fail)? + wt(k + 1).map_err(fail)?) * h * 2f64.sqrt();
        }
        ok &= (d - frozen).abs() <= 1e-12 * frozen && d >= euclid && d <= straight + 1e-12;
        detail.push(format!("d_2 @{r} = {d:.6} in [{euclid:.4}, {straight:.4}]"));
    }
    Ok((ok, detail.join("; ")))
}

fn c11_bochner() -> Check {
    let geo = Geometry::new(build_grid_space(128, 128, Rect::unit()).map_err(fail)?).map_err(fail)?;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut cases = vec![(geo.space().sample(&"r2".parse::<FieldExpr>().map_err(fail)?).map_err(fail)?, 2.0)];
    for _ in 0..3 {
        cases.push((geo.space().sample(&FieldExpr::random_smooth(&mut rng, 2, 4)).map_err(fail)?, 3.0));
    }
    let mut ok = true;
    let mut worst = f64::INFINITY;
    for (f, n) in &cases {
        let r = ricci_lower_bound_check(&geo, &RicciParams::new(*n, 0.0), f).map_err(fail)?;
        ok &= r.passes(0.05);
        worst = worst.min(r.ricci_margin.min(r.bochner_margin) / r.scale);
    }
    Ok((ok, format!("{} fields, worst margin / scale {worst:.2e}", cases.len())))
}

fn main() -> ExitCode {
    let criteria: &[Criterion] = &[
        ("gradient identity", c1_gradient),
        ("laplacian identity", c2_laplacian),
        ("angle preservation", c3_angle),
        ("hessian formula", c4_hessian),
        ("classical conformal ricci", c5_stereographic_oracle),
        ("curvature bound", c6_curvature_bound),
        ("general vs volume-matched ricci", c7_general_vs_volume_matched),
        ("N-ricci flatness", c8_ricci_flat),
        ("fractal measure and diameter", c9_ball_series),
        ("fractal distance gaps", c10_fractal_gaps),
        ("bochner sanity", c11_bochner),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        println!("{} {:>2} {name}: {detail}", if ok { "PASS" } else { "FAIL" }, k + 1);
        failed += usize::from(!ok);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
