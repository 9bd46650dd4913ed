//! Discrete metric measure spaces and their conformal transforms.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{ConformalPair, ScalarField};
use crate::smooth::SmoothField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub length: f64,
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn unit() -> Self {
        Self::new(0.0, 1.0, 0.0, 1.0)
    }

    pub fn symmetric(half: f64) -> Self {
        Self::new(-half, half, -half, half)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }
}

/// Where grid nodes sit inside the bounding rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridLayout {
    /// Nodes on the corners; the outermost nodes lie on the boundary.
    Vertex,
    /// Nodes at cell centres, half a cell inside the boundary.
    CellCentered,
}

/// Neighbour set of a grid node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stencil {
    /// 4 axis neighbours.
    Axis,
    /// 8 neighbours including diagonals.
    Moore,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridShape {
    pub nx: usize,
    pub ny: usize,
    pub bounds: Rect,
    pub layout: GridLayout,
    pub stencil: Stencil,
}

impl GridShape {
    pub fn spacing(&self) -> (f64, f64) {
        match self.layout {
            GridLayout::Vertex => (self.bounds.width() / (self.nx - 1) as f64, self.bounds.height() / (self.ny - 1) as f64),
            GridLayout::CellCentered => (self.bounds.width() / self.nx as f64, self.bounds.height() / self.ny as f64),
        }
    }

    pub fn node(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn point(&self, ix: usize, iy: usize) -> [f64; 2] {
        let (hx, hy) = self.spacing();
        let off = match self.layout {
            GridLayout::Vertex => 0.0,
            GridLayout::CellCentered => 0.5,
        };
        [self.bounds.x0 + (ix as f64 + off) * hx, self.bounds.y0 + (iy as f64 + off) * hy]
    }

    /// Grid node closest to `p` (clamped to the grid).
    pub fn nearest(&self, p: [f64; 2]) -> usize {
        let (hx, hy) = self.spacing();
        let off = match self.layout {
            GridLayout::Vertex => 0.0,
            GridLayout::CellCentered => 0.5,
        };
        let fx = ((p[0] - self.bounds.x0) / hx - off).round().clamp(0.0, (self.nx - 1) as f64) as usize;
        let fy = ((p[1] - self.bounds.y0) / hy - off).round().clamp(0.0, (self.ny - 1) as f64) as usize;
        self.node(fx, fy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMms {
    coord_dim: usize,
    coords: Option<Vec<f64>>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, f64)>>,
    measure: Vec<f64>,
    dim_loc: Vec<usize>,
    components: usize,
    grid: Option<GridShape>,
}

impl DiscreteMms {
    /// Builds a space from an edge list. Each undirected edge may be listed
    /// once or in both directions; a repeated pair must carry the same length.
    ///
    /// `coords`, when given, is `(dimension, flat row-major coordinates)`.
    /// A disconnected graph is accepted and flagged (see [`Self::is_connected`]).
    pub fn new(
        coords: Option<(usize, Vec<f64>)>,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
        measure: Vec<f64>,
        dim_loc: Vec<usize>,
    ) -> Result<Self> {
        let n = measure.len();
        if n == 0 {
            return Err(Error::InvalidSpace("space has no nodes".into()));
        }
        if dim_loc.len() != n {
            return Err(Error::SizeMismatch { expected: n, found: dim_loc.len() });
        }
        for (i, &m) in measure.iter().enumerate() {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::InvalidSpace(format!("measure at node {i} must be positive and finite, got {m}")));
            }
        }
        if let Some(i) = dim_loc.iter().position(|&d| d == 0) {
            return Err(Error::InvalidSpace(format!("dim_loc at node {i} must be positive")));
        }
        let (coord_dim, coords) = match coords {
            Some((d, c)) => {
                if c.len() != d * n {
                    return Err(Error::InvalidSpace(format!("expected {} coordinates ({n} nodes × dim {d}), got {}", d * n, c.len())));
                }
                (d, Some(c))
            }
            None => (0, None),
        };

        let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, j, length) in edges {
            for idx in [i, j] {
                if idx >= n {
                    return Err(Error::NodeOutOfRange { index: idx, count: n });
                }
            }
            if i == j {
                return Err(Error::InvalidSpace(format!("self loop at node {i}")));
            }
            if !(length > 0.0 && length.is_finite()) {
                return Err(Error::InvalidSpace(format!("edge ({i},{j}) length must be positive and finite, got {length}")));
            }
            match adjacency[i].iter().find(|(k, _)| *k == j) {
                Some(&(_, existing)) if existing != length => {
                    return Err(Error::InvalidSpace(format!("edge ({i},{j}) listed with lengths {existing} and {length}")));
                }
                Some(_) => {}
                None => {
                    adjacency[i].push((j, length));
                    adjacency[j].push((i, length));
                }
            }
        }
        for row in &mut adjacency {
            row.sort_by_key(|(k, _)| *k);
        }
        let mut edges = Vec::new();
        for (i, row) in adjacency.iter().enumerate() {
            for &(j, length) in row {
                if i < j {
                    edges.push(Edge { i, j, length });
                }
            }
        }
        let components = count_components(&adjacency);
        if components > 1 {
            log::warn!("space is disconnected ({components} components)");
        }
        Ok(Self { coord_dim, coords, edges, adjacency, measure, dim_loc, components, grid: None })
    }

    pub fn node_count(&self) -> usize {
        self.measure.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    pub fn dim_loc(&self) -> &[usize] {
        &self.dim_loc
    }

    pub fn max_dim(&self) -> usize {
        self.dim_loc.iter().copied().max().unwrap_or(0)
    }

    pub fn coord_dim(&self) -> usize {
        self.coord_dim
    }

    pub fn coord(&self, i: usize) -> Option<&[f64]> {
        self.coords.as_ref().map(|c| &c[i * self.coord_dim..(i + 1) * self.coord_dim])
    }

    pub fn has_coords(&self) -> bool {
        self.coords.is_some()
    }

    pub fn grid(&self) -> Option<&GridShape> {
        self.grid.as_ref()
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn is_connected(&self) -> bool {
        self.components == 1
    }

    /// Coordinate function `x_k` as a field. Requires coordinates.
    pub fn coordinate_field(&self, k: usize) -> Option<ScalarField> {
        let c = self.coords.as_ref()?;
        (k < self.coord_dim).then(|| ScalarField::new((0..self.node_count()).map(|i| c[i * self.coord_dim + k]).collect()))
    }

    /// Samples `f` at node coordinates. Nodes without coordinates are an error.
    pub fn sample(&self, f: &dyn SmoothField) -> Result<ScalarField> {
        if self.coords.is_none() {
            return Err(Error::InvalidSpace("space has no coordinates to sample a field on".into()));
        }
        Ok(ScalarField::new((0..self.node_count()).map(|i| f.value(self.coord(i).unwrap())).collect()))
    }

    pub fn sample_fn(&self, f: impl Fn(&[f64]) -> f64) -> Result<ScalarField> {
        self.sample(&crate::smooth::FnField(f))
    }

    /// Nodes within `hops - 1` graph steps of a degree-deficient node.
    /// `collar_mask(0)` keeps everything; `collar_mask(1)` drops nodes whose
    /// degree is below the maximum; each extra hop peels one more layer.
    pub fn interior_mask(&self, hops: usize) -> Vec<bool> {
        let n = self.node_count();
        if hops == 0 {
            return vec![true; n];
        }
        let full = self.max_degree();
        let mut depth = vec![usize::MAX; n];
        let mut queue = VecDeque::new();
        for i in 0..n {
            if self.degree(i) < full {
                depth[i] = 0;
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            if depth[i] + 1 >= hops {
                continue;
            }
            for &(j, _) in &self.adjacency[i] {
                if depth[j] == usize::MAX {
                    depth[j] = depth[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        depth.iter().map(|&d| d == usize::MAX).collect()
    }

    fn with_grid(mut self, grid: GridShape) -> Self {
        self.grid = Some(grid);
        self
    }
}

fn count_components(adj: &[Vec<(usize, f64)>]) -> usize {
    let mut seen = vec![false; adj.len()];
    let mut count = 0;
    for s in 0..adj.len() {
        if seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(i) = stack.pop() {
            for &(j, _) in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    count
}

/// Regular `nx × ny` vertex grid on `bounds` with 4-neighbour edges. Node
/// measure is the area of the node's dual cell; `dim_loc = 2`.
pub fn build_grid_space(nx: usize, ny: usize, bounds: Rect) -> Result<DiscreteMms> {
    build_grid(GridShape { nx, ny, bounds, layout: GridLayout::Vertex, stencil: Stencil::Axis })
}

pub fn build_grid(shape: GridShape) -> Result<DiscreteMms> {
    let GridShape { nx, ny, bounds, layout, stencil } = shape;
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidGrid(format!("need nx, ny >= 2, got {nx} x {ny}")));
    }
    if !(bounds.width() > 0.0 && bounds.height() > 0.0) || !(bounds.width() * bounds.height()).is_finite() {
        return Err(Error::InvalidGrid(format!("degenerate bounds {bounds:?}")));
    }
    let (hx, hy) = shape.spacing();
    let n = nx * ny;
    let mut coords = Vec::with_capacity(2 * n);
    let mut measure = Vec::with_capacity(n);
    for iy in 0..ny {
        for ix in 0..nx {
            let p = shape.point(ix, iy);
            coords.extend_from_slice(&p);
            let wx = match layout {
                GridLayout::Vertex if ix == 0 || ix == nx - 1 => 0.5 * hx,
                _ => hx,
            };
            let wy = match layout {
                GridLayout::Vertex if iy == 0 || iy == ny - 1 => 0.5 * hy,
                _ => hy,
            };
            measure.push(wx * wy);
        }
    }
    let diag = hx.hypot(hy);
    let mut edges = Vec::with_capacity(4 * n);
    for iy in 0..ny {
        for ix in 0..nx {
            let a = shape.node(ix, iy);
            if ix + 1 < nx {
                edges.push((a, shape.node(ix + 1, iy), hx));
            }
            if iy + 1 < ny {
                edges.push((a, shape.node(ix, iy + 1), hy));
            }
            if stencil == Stencil::Moore && iy + 1 < ny {
                if ix + 1 < nx {
                    edges.push((a, shape.node(ix + 1, iy + 1), diag));
                }
                if ix > 0 {
                    edges.push((a, shape.node(ix - 1, iy + 1), diag));
                }
            }
        }
    }
    Ok(DiscreteMms::new(Some((2, coords)), edges, measure, vec![2; n])?.with_grid(shape))
}

/// Uniform path graph with `n` nodes on `[a, b]`; `dim_loc = 1`.
pub fn build_line_space(n: usize, a: f64, b: f64) -> Result<DiscreteMms> {
    if n < 2 {
        return Err(Error::InvalidGrid(format!("need n >= 2, got {n}")));
    }
    if !(b > a) {
        return Err(Error::InvalidGrid(format!("degenerate interval [{a}, {b}]")));
    }
    let h = (b - a) / (n - 1) as f64;
    let coords = (0..n).map(|i| a + i as f64 * h).collect();
    let measure = (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h }).collect();
    let edges = (0..n - 1).map(|i| (i, i + 1, h));
    DiscreteMms::new(Some((1, coords)), edges, measure, vec![1; n])
}

/// `(X, e^w d, e^v m)`: every edge length becomes `ℓ (e^{w_i} + e^{w_j}) / 2`
/// (trapezoid rule for `∫ e^w` along the edge) and every node mass `e^{v_i} m_i`.
pub fn conformal_transform(space: &DiscreteMms, pair: &ConformalPair) -> Result<DiscreteMms> {
    let n = space.node_count();
    pair.w.check_len(n)?;
    pair.v.check_len(n)?;
    let ew = pair.w.exp();
    let adjacency: Vec<Vec<(usize, f64)>> =
        space.adjacency.iter().enumerate().map(|(i, row)| row.iter().map(|&(j, l)| (j, l * 0.5 * (ew[i] + ew[j]))).collect()).collect();
    let edges = space.edges.iter().map(|e| Edge { length: e.length * 0.5 * (ew[e.i] + ew[e.j]), ..*e }).collect();
    let measure = space.measure.iter().zip(pair.v.iter()).map(|(m, v)| m * v.exp()).collect();
    Ok(DiscreteMms {
        coord_dim: space.coord_dim,
        coords: space.coords.clone(),
        edges,
        adjacency,
        measure,
        dim_loc: space.dim_loc.clone(),
        components: space.components,
        grid: space.grid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, ties to the smaller node index
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geodesic {
    pub source: usize,
    pub distances: ScalarField,
    /// Nodes with infinite distance.
    pub unreachable: Vec<usize>,
}

/// Single-source shortest-path distances over edge lengths.
pub fn geodesic_distance(space: &DiscreteMms, source: usize) -> Result<Geodesic> {
    let n = space.node_count();
    if source >= n {
        return Err(Error::NodeOutOfRange { index: source, count: n });
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapItem { dist: 0.0, node: source });
    while let Some(HeapItem { dist: d, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        for &(j, l) in space.neighbors(node) {
            let nd = d + l;
            if nd < dist[j] {
                dist[j] = nd;
                heap.push(HeapItem { dist: nd, node: j });
            }
        }
    }
    let unreachable: Vec<usize> = (0..n).filter(|&i| dist[i].is_infinite()).collect();
    if !unreachable.is_empty() {
        log::warn!("{} node(s) unreachable from source {source}", unreachable.len());
    }
    Ok(Geodesic { source, distances: ScalarField::new(dist), unreachable })
}

/// Distances from several sources; runs sources in parallel when the
/// `parallel` feature is on.
pub fn geodesic_distances(space: &DiscreteMms, sources: &[usize]) -> Result<Vec<Geodesic>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        sources.par_iter().map(|&s| geodesic_distance(space, s)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        sources.iter().map(|&s| geodesic_distance(space, s)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    /// `sup |w1 - w2|` over the nodes.
    pub eps_hat: f64,
    pub pairs: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `max |ln(d1/d2)|`; must not exceed `eps_hat`.
    pub max_log_ratio: f64,
    pub within_bounds: bool,
}

/// Checks `e^{-ε} ≤ d_{w1}(a,b) / d_{w2}(a,b) ≤ e^{ε}` with `ε = sup|w1 - w2|`
/// on the sampled pairs (measure left unchanged).
pub fn distance_sandwich_check(space: &DiscreteMms, w1: &ScalarField, w2: &ScalarField, sample_pairs: &[(usize, usize)]) -> Result<SandwichReport> {
    let n = space.node_count();
    w1.check_len(n)?;
    w2.check_len(n)?;
    let eps_hat = w1.iter().zip(w2.iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let zero = ScalarField::zeros(n);
    let s1 = conformal_transform(space, &ConformalPair { w: w1.clone(), v: zero.clone() })?;
    let s2 = conformal_transform(space, &ConformalPair { w: w2.clone(), v: zero })?;

    let mut sources: Vec<usize> = sample_pairs.iter().map(|p| p.0).collect();
    sources.sort_unstable();
    sources.dedup();
    let g1 = geodesic_distances(&s1, &sources)?;
    let g2 = geodesic_distances(&s2, &sources)?;

    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = 0.0f64;
    let mut max_log = 0.0f64;
    let mut counted = 0;
    for &(a, b) in sample_pairs {
        if b >= n {
            return Err(Error::NodeOutOfRange { index: b, count: n });
        }
        let k = sources.binary_search(&a).unwrap();
        let (d1, d2) = (g1[k].distances[b], g2[k].distances[b]);
        if a == b || !d1.is_finite() || !d2.is_finite() {
            continue;
        }
        let r = d1 / d2;
        min_ratio = min_ratio.min(r);
        max_ratio = max_ratio.max(r);
        max_log = max_log.max(r.ln().abs());
        counted += 1;
    }
    if counted == 0 {
        min_ratio = 1.0;
        max_ratio = 1.0;
    }
    // rounding slack for sums of many edges
    let within_bounds = max_log <= eps_hat + 1e-12 * (1.0 + eps_hat);
    Ok(SandwichReport { eps_hat, pairs: counted, min_ratio, max_ratio, max_log_ratio: max_log, within_bounds })
}
