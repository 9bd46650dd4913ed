use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use conformal_mms::curvature::{curvature_bound, curvature_bound_general, default_probes};
use conformal_mms::fractal::{gap_bound_check, measure_diameter_bounds, random_exterior_pairs, FractalParams, GapReport, SeriesReport};
use conformal_mms::oracle::{conformal_curvature_density, gauss_curvature_2d, smooth_conformal_ricci, Differentiator};
use conformal_mms::verify::{summarize, verify_identity, Identity, RefinementReport, VerifySetup};
use conformal_mms::{conformal_transform, geodesic_distance, io, ConformalPair, FieldExpr, Geometry, SmoothField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::inputs::{parse_expr, Preset};
use crate::{CurvatureArgs, FractalArgs, OracleArgs, TransformArgs, VerifyArgs};

fn out_dir(dir: &Path) -> Result<&Path> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn create(path: PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json<T: Serialize>(path: PathBuf, value: &T) -> Result<()> {
    fs::write(&path, io::to_canonical(value)?).with_context(|| format!("writing {}", path.display()))
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn transform(args: TransformArgs) -> Result<bool> {
    let loaded = args.space.load()?;
    let pair = ConformalPair::new(loaded.w.values, loaded.v.values)?;
    let transformed = conformal_transform(&loaded.space, &pair)?;
    let dir = out_dir(&args.out.out)?;
    io::write_space(&transformed, &dir.join("space.json"))?;
    let geo = geodesic_distance(&transformed, args.source)?;
    let rows = geo.distances.iter().enumerate().map(|(j, &d)| (args.source, j, d));
    io::write_distance_csv(create(dir.join("distances.csv"))?, rows)?;
    println!(
        "transformed {} ({} nodes, {} edges) -> {}",
        loaded.label,
        transformed.node_count(),
        transformed.edges().len(),
        dir.join("space.json").display()
    );
    if !geo.unreachable.is_empty() {
        println!("{} node(s) unreachable from source {}", geo.unreachable.len(), args.source);
    }
    Ok(true)
}

pub fn verify(args: VerifyArgs) -> Result<bool> {
    ensure!(args.tol > 0.0, "--tol must be positive");
    ensure!(!args.resolution.is_empty() && args.resolution.iter().all(|&r| r >= 2), "resolutions must be at least 2");
    let identities: Vec<Identity> = if args.identity.is_empty() {
        Identity::ALL.to_vec()
    } else {
        args.identity.iter().map(|s| s.parse::<Identity>()).collect::<Result<_, _>>()?
    };
    let dir = out_dir(&args.out.out)?;
    let mut all = true;
    for id in identities {
        let mut setup = VerifySetup::default_for(id);
        for (slot, spec) in [(&mut setup.w, &args.w), (&mut setup.v, &args.v), (&mut setup.f, &args.f), (&mut setup.g, &args.g)] {
            if let Some(s) = spec {
                *slot = parse_expr(s)?;
            }
        }
        let mut reports = Vec::with_capacity(args.resolution.len());
        let mut finest = None;
        for &r in &args.resolution {
            let c = verify_identity(id, &setup, r).with_context(|| format!("{id} at resolution {r}"))?;
            reports.push(c.report.clone());
            finest = Some(c);
        }
        let summary: RefinementReport = summarize(id, reports, args.tol);
        write_json(dir.join(format!("verify_{id}.json")), &summary)?;
        io::write_comparison_csv(create(dir.join(format!("verify_{id}.csv")))?, finest.as_ref().unwrap())?;
        let last = summary.reports.last().unwrap();
        let ratios: Vec<String> = summary.error_ratios.iter().map(|r| r.map_or("exact".into(), |r| format!("{r:.2}"))).collect();
        println!(
            "{} {id}: max_abs_err={:.3e} max_rel_err={:.3e} at {} ratios=[{}]",
            verdict(summary.passed),
            last.max_abs_err,
            last.max_rel_err,
            last.resolution,
            ratios.join(", ")
        );
        all &= summary.passed;
    }
    Ok(all)
}

#[derive(Serialize)]
struct CurvatureReport {
    space: String,
    mode: &'static str,
    n: f64,
    k: f64,
    k_prime: f64,
    node: usize,
    coords: Option<Vec<f64>>,
    /// Smooth bound over the same nodes, when `w` has a closed form.
    oracle_k_prime: Option<f64>,
    probes: Option<usize>,
    passed: bool,
}

pub fn curvature(args: CurvatureArgs) -> Result<bool> {
    ensure!(args.tol > 0.0, "--tol must be positive");
    let loaded = args.space.load()?;
    let label = loaded.label.clone();
    let geo = Geometry::new(loaded.space)?;
    let report = if args.general {
        let pair = ConformalPair::new(loaded.w.values, loaded.v.values)?;
        let probes = default_probes(&geo, args.seed, args.probes)?;
        let b = curvature_bound_general(&geo, &pair, args.n, args.k, &probes)?;
        CurvatureReport {
            space: label,
            mode: "general",
            n: args.n,
            k: args.k,
            k_prime: b.k_prime,
            node: b.node,
            coords: geo.space().coord(b.node).map(<[f64]>::to_vec),
            oracle_k_prime: None,
            probes: Some(b.probes_used),
            passed: b.k_prime.is_finite(),
        }
    } else {
        let b = curvature_bound(&geo, &loaded.w.values, args.n, args.k)?;
        let flat_grid = geo.space().grid().is_some();
        let oracle = match (&loaded.w.expr, flat_grid) {
            (Some(w), true) => {
                let diff = Differentiator::default();
                b.per_node
                    .iter_valid()
                    .map(|(i, _)| conformal_curvature_density(w, args.n, args.k, geo.space().coord(i).unwrap(), &diff))
                    .min_by(f64::total_cmp)
            }
            _ => None,
        };
        let passed = oracle.map_or(b.k_prime.is_finite(), |o| (b.k_prime - o).abs() <= args.tol * o.abs().max(1.0));
        CurvatureReport {
            space: label,
            mode: "conformal",
            n: args.n,
            k: args.k,
            k_prime: b.k_prime,
            node: b.node,
            coords: geo.space().coord(b.node).map(<[f64]>::to_vec),
            oracle_k_prime: oracle,
            probes: None,
            passed,
        }
    };
    let dir = out_dir(&args.out.out)?;
    write_json(dir.join("curvature.json"), &report)?;
    match report.oracle_k_prime {
        Some(o) => println!("{} K' = {:.10e} (smooth {:.10e}) at node {}", verdict(report.passed), report.k_prime, o, report.node),
        None => println!("{} K' = {:.10e} at node {}", verdict(report.passed), report.k_prime, report.node),
    }
    Ok(report.passed)
}

#[derive(Serialize)]
struct FractalSummary {
    eps: f64,
    gamma: f64,
    depth: usize,
    disjoint_through: Option<usize>,
    seed: u64,
    series: SeriesReport,
    gaps: Vec<GapReport>,
    passed: bool,
}

pub fn fractal(args: FractalArgs) -> Result<bool> {
    ensure!(args.from < args.depth, "--from must be below --depth");
    ensure!(args.pairs > 0, "--pairs must be positive");
    ensure!(args.resolution.iter().all(|&r| r >= 2), "resolutions must be at least 2");
    let series = measure_diameter_bounds(&FractalParams::new(args.eps, args.gamma, args.series_depth.max(args.depth))?);
    let params = FractalParams::new(args.eps, args.gamma, args.depth)?;
    params.require_disjoint(args.depth)?;
    let pairs = random_exterior_pairs(&params, args.depth, args.pairs, args.seed);
    let mut gaps = Vec::new();
    for &r in &args.resolution {
        for level in args.from..args.depth {
            gaps.push(gap_bound_check(&params, level, &pairs, r).with_context(|| format!("gap {level} -> {} at resolution {r}", level + 1))?);
        }
    }
    let dir = out_dir(&args.out.out)?;
    {
        let mut w = create(dir.join("fractal_gaps.csv"))?;
        use std::io::Write;
        writeln!(w, "pair,resolution,N,d_N,d_N1,gap,bound")?;
        for g in &gaps {
            for (k, p) in g.pairs.iter().enumerate() {
                writeln!(w, "{k},{},{},{:.16e},{:.16e},{:.16e},{:.16e}", g.resolution, g.level, p.d_n, p.d_next, p.gap, g.bound)?;
            }
        }
        w.flush()?;
    }
    let passed = series.passed() && gaps.iter().all(|g| g.passed);
    println!(
        "{} series: measure {:.6e} < {:.6e}, diameter {:.6e} <= {:.6e}, exact {}",
        verdict(series.passed()),
        series.measure_total,
        series.measure_bound,
        series.diam_sum,
        series.diam_bound,
        series.exact_ok
    );
    for g in &gaps {
        println!(
            "{} gap {} -> {} at {}: max {:.4e} <= {:.4e}, monotone {}, sandwich {}, {} node(s) reweighted",
            verdict(g.passed),
            g.level,
            g.level + 1,
            g.resolution,
            g.max_gap,
            g.bound,
            g.monotone,
            g.sandwich.within_bounds,
            g.changed_nodes
        );
    }
    let summary = FractalSummary {
        eps: args.eps,
        gamma: args.gamma,
        depth: args.depth,
        disjoint_through: params.disjoint_through(),
        seed: args.seed,
        series,
        gaps,
        passed,
    };
    write_json(dir.join("fractal_summary.json"), &summary)?;
    Ok(passed)
}

#[derive(Serialize)]
struct OraclePoint {
    point: Vec<f64>,
    /// Coordinate Ricci tensor, row-major.
    ricci: Vec<Vec<f64>>,
    metric_factor: f64,
    gauss: Option<f64>,
    /// `max |Ricci - K e^{2w} δ| / e^{2w}` when `K` is given.
    defect: Option<f64>,
}

#[derive(Serialize)]
struct OracleReport {
    w: String,
    dim: usize,
    seed: u64,
    k: Option<f64>,
    tol: f64,
    max_defect: Option<f64>,
    points: Vec<OraclePoint>,
    passed: bool,
}

pub fn oracle(args: OracleArgs) -> Result<bool> {
    ensure!(args.tol > 0.0, "--tol must be positive");
    let (w, k) = match (&args.w, args.preset) {
        (Some(s), _) => (parse_expr(s)?, args.k),
        (None, Some(Preset::StereographicSphere)) => (FieldExpr::Stereographic, args.k.or(Some(1.0))),
        (None, Some(Preset::Flat) | None) => (FieldExpr::zero(), args.k.or(Some(0.0))),
        (None, Some(Preset::FractalDefault)) => bail!("the fractal weight has no closed form; pass --w"),
    };
    let diff = Differentiator::default();
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut points = Vec::with_capacity(args.points);
    for _ in 0..args.points {
        let p: Vec<f64> = (0..args.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ricci = smooth_conformal_ricci(&w, args.dim, &p, &diff)?;
        let metric_factor = (2.0 * w.value(&p)).exp();
        let gauss = if args.dim == 2 { Some(gauss_curvature_2d(&w, &p, &diff)?) } else { None };
        let defect = k.map(|k| {
            let mut d = 0.0f64;
            for a in 0..args.dim {
                for b in 0..args.dim {
                    let want = if a == b { k * metric_factor } else { 0.0 };
                    d = d.max((ricci[(a, b)] - want).abs());
                }
            }
            d / metric_factor
        });
        let rows = (0..args.dim).map(|a| (0..args.dim).map(|b| ricci[(a, b)]).collect()).collect();
        points.push(OraclePoint { point: p, ricci: rows, metric_factor, gauss, defect });
    }
    let max_defect = k.map(|_| points.iter().filter_map(|p| p.defect).fold(0.0f64, f64::max));
    let passed = max_defect.is_none_or(|d| d <= args.tol);
    let report = OracleReport { w: w.to_string(), dim: args.dim, seed: args.seed, k, tol: args.tol, max_defect, points, passed };
    let dir = out_dir(&args.out.out)?;
    write_json(dir.join("oracle.json"), &report)?;
    match max_defect {
        Some(d) => println!("{} Ricci = {} g at {} points: max defect {:.3e}", verdict(passed), k.unwrap(), report.points.len(), d),
        None => println!("evaluated Ricci at {} points", report.points.len()),
    }
    Ok(passed)
}
