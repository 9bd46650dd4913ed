//! Smooth conformal geometry on flat coordinate domains.
//!
//! Independent of the discrete pipeline: derivatives come from the field's
//! closed form when it has one and from central differences otherwise.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::smooth::SmoothField;

/// Default central-difference step, relative to the domain scale.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Differentiator {
    pub h_fd: f64,
    /// Ignore analytic derivatives.
    pub force_fd: bool,
}

impl Default for Differentiator {
    fn default() -> Self {
        Self { h_fd: DEFAULT_FD_STEP, force_fd: false }
    }
}

impl Differentiator {
    pub fn with_scale(scale: f64) -> Self {
        Self { h_fd: DEFAULT_FD_STEP * scale, force_fd: false }
    }

    pub fn finite_difference(h_fd: f64) -> Self {
        Self { h_fd, force_fd: true }
    }

    pub fn gradient(&self, f: &dyn SmoothField, p: &[f64]) -> DVector<f64> {
        if !self.force_fd {
            if let Some(g) = f.gradient(p) {
                return DVector::from_vec(g);
            }
        }
        let h = self.h_fd;
        DVector::from_fn(p.len(), |i, _| (f.value(&shift(p, &[(i, h)])) - f.value(&shift(p, &[(i, -h)]))) / (2.0 * h))
    }

    pub fn hessian(&self, f: &dyn SmoothField, p: &[f64]) -> DMatrix<f64> {
        if !self.force_fd {
            if let Some(h) = f.hessian(p) {
                return h;
            }
        }
        let h = self.h_fd;
        let n = p.len();
        let f0 = f.value(p);
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = (f.value(&shift(p, &[(i, h)])) - 2.0 * f0 + f.value(&shift(p, &[(i, -h)]))) / (h * h);
            for j in i + 1..n {
                let v = (f.value(&shift(p, &[(i, h), (j, h)])) - f.value(&shift(p, &[(i, h), (j, -h)])) - f.value(&shift(p, &[(i, -h), (j, h)]))
                    + f.value(&shift(p, &[(i, -h), (j, -h)])))
                    / (4.0 * h * h);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }
}

fn shift(p: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut q = p.to_vec();
    for &(i, d) in moves {
        q[i] += d;
    }
    q
}

/// Ricci tensor of `e^{2w} δ` on flat `ℝⁿ` at `p`:
/// `-(n-2)(∂²w - ∂w ⊗ ∂w) + (-Δw - (n-2)|∂w|²) δ`.
pub fn smooth_conformal_ricci(w: &dyn SmoothField, n: usize, p: &[f64], diff: &Differentiator) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("dimension n = {n} must be at least 2")));
    }
    if p.len() != n {
        return Err(Error::SizeMismatch { expected: n, found: p.len() });
    }
    let g = diff.gradient(w, p);
    let h = diff.hessian(w, p);
    let c = n as f64 - 2.0;
    let iso = -h.trace() - c * g.norm_squared();
    let mut r = (&h - &g * g.transpose()) * (-c);
    for i in 0..n {
        r[(i, i)] += iso;
    }
    Ok(r)
}

/// Coordinate Hessian of `f` for the metric `e^{2w} δ`:
/// `∂²f - ∂w ⊗ ∂f - ∂f ⊗ ∂w + ⟨∂w, ∂f⟩ δ`.
pub fn christoffel_hessian(w: &dyn SmoothField, f: &dyn SmoothField, p: &[f64], diff: &Differentiator) -> DMatrix<f64> {
    let gw = diff.gradient(w, p);
    let gf = diff.gradient(f, p);
    let mut m = diff.hessian(f, p) - &gw * gf.transpose() - &gf * gw.transpose();
    let s = gw.dot(&gf);
    for i in 0..p.len() {
        m[(i, i)] += s;
    }
    m
}

/// `|A|²` for a coordinate bilinear form of `e^{2w} δ`, i.e. `e^{-4w} Σ A_ij²`.
pub fn conformal_hs_sq(w: &dyn SmoothField, a: &DMatrix<f64>, p: &[f64]) -> f64 {
    (-4.0 * w.value(p)).exp() * a.norm_squared()
}

/// `K = -e^{-2w} Δw`.
pub fn gauss_curvature_2d(w: &dyn SmoothField, p: &[f64], diff: &Differentiator) -> Result<f64> {
    if p.len() != 2 {
        return Err(Error::SizeMismatch { expected: 2, found: p.len() });
    }
    Ok(-(-2.0 * w.value(p)).exp() * diff.hessian(w, p).trace())
}

/// Pointwise curvature bound for `e^{2w} δ` on flat `ℝⁿ` with reference
/// curvature `K`: `e^{-2w}[K - Δw - (N-2)|∂w|² - (N-2)λ]`, where `λ` is the
/// largest eigenvalue of `∂²w - ∂w ⊗ ∂w` for `N ≥ 2` and the smallest otherwise.
pub fn conformal_curvature_density(w: &dyn SmoothField, n: f64, k: f64, p: &[f64], diff: &Differentiator) -> f64 {
    let g = diff.gradient(w, p);
    let h = diff.hessian(w, p);
    let m = &h - &g * g.transpose();
    let eig = m.symmetric_eigenvalues();
    let lambda = if n >= 2.0 { eig.max() } else { eig.min() };
    (-2.0 * w.value(p)).exp() * (k - h.trace() - (n - 2.0) * g.norm_squared() - (n - 2.0) * lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smooth::{FieldExpr, FnField};

    fn e(s: &str) -> FieldExpr {
        s.parse().unwrap()
    }

    const PTS: [[f64; 2]; 4] = [[0.0, 0.0], [0.3, -0.7], [1.5, 0.2], [-2.0, 1.0]];

    #[test]
    fn flat_weight_gives_zero() {
        let d = Differentiator::default();
        for p in PTS {
            assert_eq!(smooth_conformal_ricci(&FieldExpr::zero(), 2, &p, &d).unwrap().norm(), 0.0);
            assert_eq!(gauss_curvature_2d(&FieldExpr::zero(), &p, &d).unwrap(), 0.0);
            assert_eq!(gauss_curvature_2d(&FieldExpr::Const(3.0), &p, &d).unwrap(), 0.0);
        }
    }

    #[test]
    fn two_dimensions_is_gauss_times_metric() {
        let d = Differentiator::default();
        let w = e("0.3*sinx + xy + 0.1*y^2");
        for p in PTS {
            let r = smooth_conformal_ricci(&w, 2, &p, &d).unwrap();
            let k = gauss_curvature_2d(&w, &p, &d).unwrap();
            let want = DMatrix::<f64>::identity(2, 2) * (k * (2.0 * w.value(&p)).exp());
            assert!((r - want).norm() < 1e-10);
        }
    }

    #[test]
    fn stereographic_is_unit_sphere() {
        let d = Differentiator::default();
        for p in PTS {
            assert!((gauss_curvature_2d(&FieldExpr::Stereographic, &p, &d).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn ricci_is_symmetric() {
        let w = FnField(|p: &[f64]| (p[0] * p[1]).sin() + p[2] * p[0]);
        let r = smooth_conformal_ricci(&w, 3, &[0.2, -0.4, 0.9], &Differentiator::default()).unwrap();
        assert_eq!(r.clone(), r.transpose());
        assert!(smooth_conformal_ricci(&w, 1, &[0.0], &Differentiator::default()).is_err());
        assert!(smooth_conformal_ricci(&w, 3, &[0.0, 1.0], &Differentiator::default()).is_err());
    }

    #[test]
    fn hessian_f_x_w_y() {
        let h = christoffel_hessian(&e("y"), &e("x"), &[0.4, 0.3], &Differentiator::default());
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]));
        assert!((conformal_hs_sq(&e("y"), &h, &[0.4, 0.3]) - 2.0 * (-1.2f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn radial_mixed_entries_vanish_on_axes() {
        let h = christoffel_hessian(&FieldExpr::Stereographic, &e("r2"), &[0.7, 0.0], &Differentiator::default());
        assert!(h[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn curvature_density_two_dimensions_is_gauss() {
        let d = Differentiator::default();
        let w = e("0.3*sinx + xy");
        for p in PTS {
            let k = gauss_curvature_2d(&w, &p, &d).unwrap() + 0.7 * (-2.0 * w.value(&p)).exp();
            assert!((conformal_curvature_density(&w, 2.0, 0.7, &p, &d) - k).abs() < 1e-12);
        }
        assert_eq!(conformal_curvature_density(&FieldExpr::Const(0.5), 3.0, 2.0, &[0.1, 0.2], &d), (-1.0f64).exp() * 2.0);
    }

    #[test]
    fn finite_differences_second_order() {
        let w = e("sinx + 0.5*xy + siny");
        let p = [0.4, -0.3];
        let exact_g = Differentiator::default().gradient(&w, &p);
        let exact_h = Differentiator::default().hessian(&w, &p);
        let gerr = |h: f64| (Differentiator::finite_difference(h).gradient(&w, &p) - &exact_g).norm();
        let herr = |h: f64| (Differentiator::finite_difference(h).hessian(&w, &p) - &exact_h).norm();
        assert!(gerr(1e-2) / gerr(5e-3) >= 3.5);
        assert!(herr(4e-2) / herr(2e-2) >= 3.5);
        assert!(gerr(DEFAULT_FD_STEP) < 1e-8);
        let fd = smooth_conformal_ricci(&w, 2, &p, &Differentiator::finite_difference(1e-3)).unwrap();
        let an = smooth_conformal_ricci(&w, 2, &p, &Differentiator::default()).unwrap();
        assert!((fd - an).norm() < 1e-5);
    }
}
