//! A conformal weight with logarithmic poles at every dyadic square centre.
//!
//! Squares `A_n^k` subdivide `[-1,1]²`; children are listed in the order
//! upper-right, upper-left, lower-left, lower-right. Around each centre
//! `x_n^k` sits a ball of radius `ε_n ≤ ε 8^{-n}` carrying
//! `f_{k,n}(x) = γ ln max(ε_n / |x - x_n^k|, 1)`, and `w_N = Σ_{n ≤ N} f_{k,n}`.
//!
//! Every ball lies inside its own square (`ε_n < 2^{-n}`), so a point only
//! sees the balls of the squares that contain it, one per level.

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{ConformalPair, ScalarField};
use crate::space::{
    build_grid, conformal_transform, distance_sandwich_check, geodesic_distance, geodesic_distances, DiscreteMms, GridLayout, GridShape, Rect,
    SandwichReport, Stencil,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FractalParams {
    eps: f64,
    gamma: f64,
    /// `ε_n` for `n = 0..=depth`.
    schedule: Vec<f64>,
    /// Largest `N ≤ depth` with all balls of levels `≤ N` pairwise disjoint.
    disjoint_through: Option<usize>,
}

impl FractalParams {
    /// Default schedule `ε_n = ε 8^{-n}`.
    pub fn new(eps: f64, gamma: f64, depth: usize) -> Result<Self> {
        let schedule = (0..=depth).map(|n| eps * 8f64.powi(-(n as i32))).collect();
        Self::with_schedule(eps, gamma, schedule)
    }

    pub fn with_schedule(eps: f64, gamma: f64, schedule: Vec<f64>) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.25) {
            return Err(Error::InvalidFractal(format!("need 0 < ε < 1/4, got {eps}")));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidFractal(format!("need 0 < γ < 1, got {gamma}")));
        }
        if schedule.is_empty() {
            return Err(Error::InvalidFractal("schedule must cover level 0".into()));
        }
        for (n, &e) in schedule.iter().enumerate() {
            let cap = eps * 8f64.powi(-(n as i32));
            if !(e > 0.0 && e <= cap) {
                return Err(Error::InvalidFractal(format!("ε_{n} = {e} violates 0 < ε_n ≤ ε 8^-n = {cap}")));
            }
        }
        let mut p = Self { eps, gamma, schedule, disjoint_through: None };
        p.disjoint_through = p.scan_disjointness();
        Ok(p)
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn depth(&self) -> usize {
        self.schedule.len() - 1
    }

    pub fn eps_n(&self, n: usize) -> f64 {
        self.schedule[n]
    }

    pub fn schedule(&self) -> &[f64] {
        &self.schedule
    }

    pub fn disjoint_through(&self) -> Option<usize> {
        self.disjoint_through
    }

    /// Balls of non-nested squares at levels `m < n` are at least
    /// `2^{-m} > ε_m + ε_n` apart, so only ancestors need checking.
    fn scan_disjointness(&self) -> Option<usize> {
        let mut ok_through = None;
        let mut level = vec![SquareNode { center: [0.0, 0.0], half: 1.0, ancestors: Vec::new() }];
        for n in 0..=self.depth() {
            let r = self.eps_n(n);
            let clash = level.iter().any(|sq| sq.ancestors.iter().enumerate().any(|(m, a)| dist(sq.center, *a) < r + self.eps_n(m)));
            if clash {
                log::warn!("balls at level {n} meet balls of coarser levels; weights limited to level {}", n.saturating_sub(1));
                return ok_through;
            }
            ok_through = Some(n);
            if n < self.depth() {
                level = level.iter().flat_map(SquareNode::children).collect();
            }
        }
        ok_through
    }

    /// Fails unless balls up to `level` are pairwise disjoint.
    pub fn require_disjoint(&self, level: usize) -> Result<()> {
        if level > self.depth() {
            return Err(Error::InvalidFractal(format!("level {level} exceeds depth {}", self.depth())));
        }
        match self.disjoint_through {
            Some(n) if n >= level => Ok(()),
            _ => Err(Error::InvalidFractal(format!(
                "balls overlap coarser levels at level {} (need disjointness through level {level})",
                self.disjoint_through.map_or(0, |n| n + 1)
            ))),
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[derive(Debug, Clone)]
struct SquareNode {
    center: [f64; 2],
    half: f64,
    ancestors: Vec<[f64; 2]>,
}

impl SquareNode {
    fn children(&self) -> impl Iterator<Item = SquareNode> + '_ {
        CHILD_SIGNS.iter().map(move |&(sx, sy)| {
            let q = 0.5 * self.half;
            let mut ancestors = self.ancestors.clone();
            ancestors.push(self.center);
            SquareNode { center: [self.center[0] + sx * q, self.center[1] + sy * q], half: q, ancestors }
        })
    }
}

/// UR, UL, DL, DR.
const CHILD_SIGNS: [(f64, f64); 4] = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];

/// Axis-aligned square by centre and half side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Square {
    pub center: [f64; 2],
    pub half: f64,
}

impl Square {
    pub fn children(&self) -> [Square; 4] {
        let q = 0.5 * self.half;
        CHILD_SIGNS.map(|(sx, sy)| Square { center: [self.center[0] + sx * q, self.center[1] + sy * q], half: q })
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (p[0] - self.center[0]).abs() <= self.half && (p[1] - self.center[1]).abs() <= self.half
    }
}

/// All squares `A_n^k` for `n ≤ depth`, level by level in index order.
#[derive(Debug, Clone)]
pub struct SquareHierarchy {
    levels: Vec<Vec<Square>>,
}

impl SquareHierarchy {
    pub fn new(depth: usize) -> Self {
        let mut levels = vec![vec![Square { center: [0.0, 0.0], half: 1.0 }]];
        for _ in 0..depth {
            let next = levels.last().unwrap().iter().flat_map(Square::children).collect();
            levels.push(next);
        }
        Self { levels }
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, n: usize) -> &[Square] {
        &self.levels[n]
    }
}

/// The `4ⁿ` centres `x_n^k` in index order.
pub fn enumerate_centers(params: &FractalParams, n: usize) -> Result<Vec<[f64; 2]>> {
    if n > params.depth() {
        return Err(Error::InvalidFractal(format!("level {n} exceeds depth {}", params.depth())));
    }
    Ok(SquareHierarchy::new(n).level(n).iter().map(|s| s.center).collect())
}

/// Index `k` (0-based) of the level-`n` square holding `p`, and its centre.
fn locate(p: [f64; 2], n: usize) -> (usize, [f64; 2]) {
    let mut sq = Square { center: [0.0, 0.0], half: 1.0 };
    let mut k = 0usize;
    for _ in 0..n {
        let (child, next) = locate_child(&sq, p);
        k = 4 * k + child;
        sq = next;
    }
    (k, sq.center)
}

fn term(gamma: f64, eps_n: f64, r: f64) -> f64 {
    if r >= eps_n {
        0.0
    } else {
        gamma * (eps_n / r).ln()
    }
}

/// `w_N(x)`. Exactly at a centre inside its ball the weight is `+∞`.
pub fn fractal_weight(params: &FractalParams, x: [f64; 2], level: usize) -> Result<f64> {
    params.require_disjoint(level)?;
    Ok(weight_unchecked(params, x, level))
}

fn weight_unchecked(params: &FractalParams, x: [f64; 2], level: usize) -> f64 {
    let mut sq = Square { center: [0.0, 0.0], half: 1.0 };
    let mut total = 0.0;
    for n in 0..=level {
        if n > 0 {
            sq = locate_child(&sq, x).1;
        }
        let r = dist(x, sq.center);
        if r == 0.0 {
            log::warn!("fractal weight evaluated at centre ({}, {}) of level {n}", x[0], x[1]);
            return f64::INFINITY;
        }
        total += term(params.gamma, params.eps_n(n), r);
    }
    total
}

/// Points on a shared edge go to the upper/right child.
fn locate_child(sq: &Square, p: [f64; 2]) -> (usize, Square) {
    let right = p[0] >= sq.center[0];
    let up = p[1] >= sq.center[1];
    let i = match (right, up) {
        (true, true) => 0,
        (false, true) => 1,
        (false, false) => 2,
        (true, false) => 3,
    };
    (i, sq.children()[i])
}

/// Whether `x` lies in some ball of level `≤ level` (closed balls).
pub fn in_balls(params: &FractalParams, x: [f64; 2], level: usize) -> bool {
    (0..=level.min(params.depth())).any(|n| dist(x, locate(x, n).1) <= params.eps_n(n))
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesReport {
    /// `Σ 4ⁿ π ε_n²`.
    pub measure_total: f64,
    /// `Σ 4ⁿ 2 ε_n`.
    pub diam_sum: f64,
    /// `2 π ε²`.
    pub measure_bound: f64,
    /// `4 ε`.
    pub diam_bound: f64,
    pub partial_measure: Vec<f64>,
    pub partial_diam: Vec<f64>,
    pub measure_ok: bool,
    pub diam_ok: bool,
    pub partial_sums_increasing: bool,
    /// Both bounds verified in exact rational arithmetic on the stored
    /// floating-point `ε` and `ε_n` (π cancels from the measure bound).
    pub exact_ok: bool,
}

impl SeriesReport {
    pub fn passed(&self) -> bool {
        self.measure_ok && self.diam_ok && self.partial_sums_increasing && self.exact_ok
    }
}

fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite schedule value")
}

pub fn measure_diameter_bounds(params: &FractalParams) -> SeriesReport {
    let mut partial_measure = Vec::with_capacity(params.schedule.len());
    let mut partial_diam = Vec::with_capacity(params.schedule.len());
    let (mut m, mut d) = (0.0, 0.0);
    let mut exact_m = BigRational::zero();
    let mut exact_d = BigRational::zero();
    for (n, &e) in params.schedule.iter().enumerate() {
        let count = 4f64.powi(n as i32);
        m += count * PI * e * e;
        d += count * 2.0 * e;
        partial_measure.push(m);
        partial_diam.push(d);
        let c = BigRational::from_integer(BigInt::from(4u8).pow(n as u32));
        let er = rational(e);
        exact_m += &c * &er * &er;
        exact_d += c * BigRational::from_u8(2).unwrap() * er;
    }
    let eps = rational(params.eps);
    let exact_ok = exact_m < BigRational::from_u8(2).unwrap() * &eps * &eps && exact_d <= BigRational::from_u8(4).unwrap() * eps;
    let increasing = |v: &[f64]| v.windows(2).all(|p| p[1] > p[0]);
    let measure_bound = 2.0 * PI * params.eps * params.eps;
    let diam_bound = 4.0 * params.eps;
    SeriesReport {
        measure_total: m,
        diam_sum: d,
        measure_bound,
        diam_bound,
        measure_ok: partial_measure.iter().all(|&x| x < measure_bound),
        diam_ok: partial_diam.iter().all(|&x| x <= diam_bound),
        partial_sums_increasing: increasing(&partial_measure) && increasing(&partial_diam),
        exact_ok,
        partial_measure,
        partial_diam,
    }
}

/// Cell-centred Moore grid on `[-1,1]²`. With a power-of-two resolution
/// above `2^level` no node coincides with a centre of level `≤ level`.
#[derive(Debug, Clone)]
pub struct FractalGrid {
    shape: GridShape,
    base: DiscreteMms,
}

impl FractalGrid {
    pub fn new(resolution: usize) -> Result<Self> {
        let shape =
            GridShape { nx: resolution, ny: resolution, bounds: Rect::symmetric(1.0), layout: GridLayout::CellCentered, stencil: Stencil::Moore };
        Ok(Self { base: build_grid(shape)?, shape })
    }

    pub fn spacing(&self) -> f64 {
        self.shape.spacing().0
    }

    pub fn space(&self) -> &DiscreteMms {
        &self.base
    }

    pub fn nearest(&self, p: [f64; 2]) -> usize {
        self.shape.nearest(p)
    }

    /// `w_level` sampled at the nodes; fails if a node sits on a centre.
    pub fn weight(&self, params: &FractalParams, level: usize) -> Result<ScalarField> {
        params.require_disjoint(level)?;
        let w = self.base.sample_fn(|p| weight_unchecked(params, [p[0], p[1]], level))?;
        if let Some(i) = w.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidGrid(format!("grid node {i} coincides with a ball centre; use a power-of-two resolution above 2^{level}")));
        }
        Ok(w)
    }

    /// The grid with edge lengths `∫ e^{w_level}` by the trapezoid rule.
    pub fn weighted(&self, params: &FractalParams, level: usize) -> Result<DiscreteMms> {
        let w = self.weight(params, level)?;
        let n = w.len();
        conformal_transform(&self.base, &ConformalPair::new(w, ScalarField::zeros(n))?)
    }
}

/// `d_N(x, y)` on a `resolution²` grid, endpoints snapped to the nearest node.
pub fn approx_distance(params: &FractalParams, level: usize, x: [f64; 2], y: [f64; 2], resolution: usize) -> Result<f64> {
    let grid = FractalGrid::new(resolution)?;
    let space = grid.weighted(params, level)?;
    Ok(geodesic_distance(&space, grid.nearest(x))?.distances[grid.nearest(y)])
}

/// `count` seeded points in `[-0.95, 0.95]²` outside every ball up to `level`.
pub fn random_exterior_points(params: &FractalParams, level: usize, count: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = [rng.gen_range(-0.95..0.95), rng.gen_range(-0.95..0.95)];
        if !in_balls(params, p, level) {
            out.push(p);
        }
    }
    out
}

/// Seeded pairs of exterior points.
pub fn random_exterior_pairs(params: &FractalParams, level: usize, count: usize, seed: u64) -> Vec<([f64; 2], [f64; 2])> {
    let pts = random_exterior_points(params, level, 2 * count, seed);
    pts.chunks(2).map(|c| (c[0], c[1])).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PairGap {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub d_n: f64,
    pub d_next: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    /// `N`; gaps are `d_{N+1} - d_N`.
    pub level: usize,
    pub resolution: usize,
    pub pairs: Vec<PairGap>,
    pub max_gap: f64,
    /// `π ε 2^{-(N+1)} + 2ε/(1-γ) 8^{-(N+1)} + h`.
    pub bound: f64,
    pub grid_tol: f64,
    /// Nodes where `w_{N+1} ≠ w_N`; zero when the new balls fall between nodes.
    pub changed_nodes: usize,
    /// `bound - max_gap`.
    pub margin: f64,
    pub monotone: bool,
    pub sandwich: SandwichReport,
    pub passed: bool,
}

/// Compares `d_N` and `d_{N+1}` on the same grid for exterior pairs.
pub fn gap_bound_check(params: &FractalParams, level: usize, pairs: &[([f64; 2], [f64; 2])], resolution: usize) -> Result<GapReport> {
    let next = level + 1;
    params.require_disjoint(next)?;
    if let Some(p) = pairs.iter().flat_map(|(a, b)| [a, b]).find(|p| in_balls(params, **p, next)) {
        return Err(Error::InvalidFractal(format!("sample point ({}, {}) lies inside a ball of level ≤ {next}", p[0], p[1])));
    }
    let grid = FractalGrid::new(resolution)?;
    let w_n = grid.weight(params, level)?;
    let w_next = grid.weight(params, next)?;
    let zero = ScalarField::zeros(w_n.len());
    let s_n = conformal_transform(grid.space(), &ConformalPair::new(w_n.clone(), zero.clone())?)?;
    let s_next = conformal_transform(grid.space(), &ConformalPair::new(w_next.clone(), zero)?)?;
    let nodes: Vec<(usize, usize)> = pairs.iter().map(|(a, b)| (grid.nearest(*a), grid.nearest(*b))).collect();
    let mut sources: Vec<usize> = nodes.iter().map(|p| p.0).collect();
    sources.sort_unstable();
    sources.dedup();
    let g_n = geodesic_distances(&s_n, &sources)?;
    let g_next = geodesic_distances(&s_next, &sources)?;
    let mut out = Vec::with_capacity(pairs.len());
    for ((x, y), (a, b)) in pairs.iter().zip(&nodes) {
        let k = sources.binary_search(a).unwrap();
        let (d_n, d_next) = (g_n[k].distances[*b], g_next[k].distances[*b]);
        out.push(PairGap { x: *x, y: *y, d_n, d_next, gap: d_next - d_n });
    }
    let grid_tol = grid.spacing();
    let e = params.eps;
    let bound = PI * e * 0.5f64.powi(next as i32) + 2.0 * e / (1.0 - params.gamma) * 8f64.powi(-(next as i32)) + grid_tol;
    let max_gap = out.iter().fold(0.0f64, |m, p| m.max(p.gap));
    let monotone = out.iter().all(|p| p.d_next >= p.d_n);
    let sandwich = distance_sandwich_check(grid.space(), &w_n, &w_next, &nodes)?;
    let changed_nodes = w_n.iter().zip(w_next.iter()).filter(|(a, b)| a != b).count();
    let passed = monotone && max_gap <= bound && sandwich.within_bounds;
    Ok(GapReport { level, resolution, pairs: out, max_gap, bound, grid_tol, changed_nodes, margin: bound - max_gap, monotone, sandwich, passed })
}

#[derive(Debug, Clone, Serialize)]
pub struct RadialReport {
    pub level: usize,
    pub index: usize,
    pub center: [f64; 2],
    pub eps_n: f64,
    /// Grid distance from the node nearest the centre to the ball boundary.
    pub measured: f64,
    /// `ε_n / (1 - γ)`.
    pub analytic: f64,
    /// `e^{w(source)} h`.
    pub tol: f64,
    pub passed: bool,
}

/// Distance out of one ball on a local vertex grid of side `3 ε_n` with an
/// even node count, so the centre is not a node.
pub fn radial_bound_check(params: &FractalParams, n: usize, k: usize, resolution: usize) -> Result<RadialReport> {
    params.require_disjoint(n)?;
    let centers = enumerate_centers(params, n)?;
    let center = *centers.get(k).ok_or(Error::NodeOutOfRange { index: k, count: centers.len() })?;
    let eps_n = params.eps_n(n);
    let half = 1.5 * eps_n;
    // ancestors' balls must stay clear of the window
    for m in 0..n {
        let a = locate(center, m).1;
        if dist(a, center) < params.eps_n(m) + half * std::f64::consts::SQRT_2 {
            return Err(Error::InvalidFractal(format!("ball ({n}, {k}) is not isolated from level {m}")));
        }
    }
    let res = if resolution.is_multiple_of(2) { resolution } else { resolution + 1 };
    let shape = GridShape {
        nx: res,
        ny: res,
        bounds: Rect::new(center[0] - half, center[0] + half, center[1] - half, center[1] + half),
        layout: GridLayout::Vertex,
        stencil: Stencil::Moore,
    };
    let base = build_grid(shape)?;
    let w = base.sample_fn(|p| weight_unchecked(params, [p[0], p[1]], n))?;
    let space = conformal_transform(&base, &ConformalPair::new(w.clone(), ScalarField::zeros(w.len()))?)?;
    let src = shape.nearest(center);
    let d = geodesic_distance(&space, src)?.distances;
    let measured = (0..base.node_count())
        .filter(|&i| {
            let p = base.coord(i).unwrap();
            dist([p[0], p[1]], center) >= eps_n
        })
        .map(|i| d[i])
        .fold(f64::INFINITY, f64::min);
    let analytic = eps_n / (1.0 - params.gamma);
    let tol = w[src].exp() * shape.spacing().0;
    Ok(RadialReport { level: n, index: k, center, eps_n, measured, analytic, tol, passed: measured <= analytic + tol })
}
