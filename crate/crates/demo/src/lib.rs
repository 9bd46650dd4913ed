//! Browser bindings. Every map is a row-major `resolution²` array with
//! `NaN` where the quantity is undefined.

use conformal_mms::curvature::curvature_bound;
use conformal_mms::fractal::{FractalGrid, FractalParams};
use conformal_mms::{build_grid_space, conformal_transform, geodesic_distance, ConformalPair, FieldExpr, Geometry, Rect, ScalarField};
use wasm_bindgen::prelude::*;

const MAX_RESOLUTION: usize = 400;

#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Map {
    resolution: usize,
    values: Vec<f64>,
    /// Headline scalar: distance to the target, or `K'`.
    summary: f64,
}

#[wasm_bindgen]
impl Map {
    #[wasm_bindgen(getter)]
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn summary(&self) -> f64 {
        self.summary
    }

    /// Smallest and largest finite value.
    pub fn range(&self) -> Vec<f64> {
        let (lo, hi) = self.values.iter().filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        vec![lo, hi]
    }
}

type Res<T> = std::result::Result<T, String>;

fn check_resolution(r: usize) -> Res<()> {
    if (2..=MAX_RESOLUTION).contains(&r) {
        Ok(())
    } else {
        Err(format!("resolution must be in 2..={MAX_RESOLUTION}, got {r}"))
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Distance from `source` on the unit square with lengths scaled by `e^w`.
/// `summary` is the distance to `target`.
pub fn geodesic_map(resolution: usize, w: &str, source: [f64; 2], target: [f64; 2]) -> Res<Map> {
    check_resolution(resolution)?;
    let w: FieldExpr = w.parse().map_err(err)?;
    let space = build_grid_space(resolution, resolution, Rect::unit()).map_err(err)?;
    let shape = *space.grid().expect("grid space");
    let ws = space.sample(&w).map_err(err)?;
    let pair = ConformalPair::new(ws, ScalarField::zeros(space.node_count())).map_err(err)?;
    let t = conformal_transform(&space, &pair).map_err(err)?;
    let d = geodesic_distance(&t, shape.nearest(source)).map_err(err)?.distances;
    Ok(Map { resolution, summary: d[shape.nearest(target)], values: d.into_values() })
}

/// Fractal weight `w_level` on `[-1, 1]²`, or the distance from `source`
/// under it when `distances` is set (then `summary` is the distance to `target`).
pub fn fractal_map(resolution: usize, eps: f64, gamma: f64, level: usize, distances: bool, source: [f64; 2], target: [f64; 2]) -> Res<Map> {
    check_resolution(resolution)?;
    let params = FractalParams::new(eps, gamma, level).map_err(err)?;
    let grid = FractalGrid::new(resolution).map_err(err)?;
    if !distances {
        let w = grid.weight(&params, level).map_err(err)?;
        let summary = w.sup_norm();
        return Ok(Map { resolution, values: w.into_values(), summary });
    }
    let space = grid.weighted(&params, level).map_err(err)?;
    let d = geodesic_distance(&space, grid.nearest(source)).map_err(err)?.distances;
    Ok(Map { resolution, summary: d[grid.nearest(target)], values: d.into_values() })
}

/// Pointwise curvature bound of `e^{2w} δ` on `[-1, 1]²` with
/// reference curvature `k`; `summary` is the infimum `K'`.
pub fn curvature_map(resolution: usize, w: &str, n: f64, k: f64) -> Res<Map> {
    check_resolution(resolution)?;
    let w: FieldExpr = w.parse().map_err(err)?;
    let space = build_grid_space(resolution, resolution, Rect::symmetric(1.0)).map_err(err)?;
    let ws = space.sample(&w).map_err(err)?;
    let geo = Geometry::new(space).map_err(err)?;
    let b = curvature_bound(&geo, &ws, n, k).map_err(err)?;
    let values = (0..b.per_node.len()).map(|i| b.per_node.get(i).unwrap_or(f64::NAN)).collect();
    Ok(Map { resolution, values, summary: b.k_prime })
}

fn js(r: Res<Map>) -> Result<Map, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = geodesicMap)]
pub fn geodesic_map_js(resolution: usize, w: &str, sx: f64, sy: f64, tx: f64, ty: f64) -> Result<Map, JsError> {
    js(geodesic_map(resolution, w, [sx, sy], [tx, ty]))
}

#[wasm_bindgen(js_name = fractalMap)]
#[allow(clippy::too_many_arguments)]
pub fn fractal_map_js(
    resolution: usize,
    eps: f64,
    gamma: f64,
    level: usize,
    distances: bool,
    sx: f64,
    sy: f64,
    tx: f64,
    ty: f64,
) -> Result<Map, JsError> {
    js(fractal_map(resolution, eps, gamma, level, distances, [sx, sy], [tx, ty]))
}

#[wasm_bindgen(js_name = curvatureMap)]
pub fn curvature_map_js(resolution: usize, w: &str, n: f64, k: f64) -> Result<Map, JsError> {
    js(curvature_map(resolution, w, n, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_distance_along_axis() {
        let m = geodesic_map(11, "0", [0.0, 0.0], [1.0, 0.0]).unwrap();
        assert_eq!(m.values.len(), 121);
        assert!((m.summary - 1.0).abs() < 1e-12);
        assert_eq!(m.values[0], 0.0);
    }

    #[test]
    fn weight_scales_distance() {
        let m = geodesic_map(11, "0.5", [0.0, 0.0], [1.0, 0.0]).unwrap();
        assert!((m.summary - 0.5f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn fractal_weight_and_distance() {
        let w = fractal_map(64, 0.1, 0.5, 1, false, [0.0; 2], [0.0; 2]).unwrap();
        assert!(w.values.iter().all(|&x| x >= 0.0 && x.is_finite()));
        assert!(w.summary > 0.0);
        let d = fractal_map(64, 0.1, 0.5, 1, true, [-0.9, -0.9], [0.9, 0.9]).unwrap();
        let flat = fractal_map(64, 0.1, 0.5, 0, true, [-0.9, -0.9], [0.9, 0.9]).unwrap();
        assert!(d.summary >= flat.summary);
        assert!(fractal_map(64, 0.1, 0.5, 4, false, [0.0; 2], [0.0; 2]).is_err());
    }

    #[test]
    fn sphere_curvature_is_one() {
        let m = curvature_map(81, "stereographic", 2.0, 0.0).unwrap();
        assert!((m.summary - 1.0).abs() < 5e-3, "{}", m.summary);
        assert!(m.values.iter().any(|v| v.is_nan()));
        let [lo, hi] = m.range()[..] else { unreachable!() };
        assert!(lo <= hi);
    }

    #[test]
    fn bad_input_is_reported() {
        assert!(geodesic_map(1, "0", [0.0; 2], [0.0; 2]).unwrap_err().contains("resolution"));
        assert!(curvature_map(16, "x^3", 2.0, 0.0).is_err());
    }
}
