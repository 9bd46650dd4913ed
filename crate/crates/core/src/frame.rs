//! Γ-orthonormal local frames and bilinear fields.
//!
//! The frame at a node is built from the gradients of the coordinate
//! functions, orthonormalised in the Γ inner product. A frame vector is
//! stored through its coefficients on `∇x_1, …, ∇x_d`, so
//! `⟨∇f, e_a⟩ = Σ_k T_ak Γ(f, x_k)`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::calculus::{DirichletForm, SECOND_ORDER_COLLAR};
use crate::error::{Error, Result};
use crate::field::{MaskedField, ScalarField};
use crate::space::DiscreteMms;

/// Symmetric matrix in frame coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Mirrors the upper triangle, so the result is exactly symmetric.
    pub fn from_upper(m: DMatrix<f64>) -> Self {
        let mut m = m;
        let n = m.nrows();
        for a in 0..n {
            for b in 0..a {
                m[(a, b)] = m[(b, a)];
            }
        }
        Self(m)
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        Self::from_upper(DMatrix::from_fn(dim, dim, |a, b| if a <= b { f(a, b) } else { 0.0 }))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.0[(a, b)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// `⟨S, S⟩_HS`.
    pub fn hs_sq(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    pub fn hs_inner(&self, other: &SymMatrix) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn apply(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += self.0[(a, b)] * x[a] * y[b];
            }
        }
        s
    }

    pub fn max_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.0.clone()).eigenvalues.max()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.0.clone()).eigenvalues.min()
    }

    /// Row-major entries.
    pub fn row_major(&self) -> Vec<f64> {
        let n = self.dim();
        (0..n * n).map(|k| self.0[(k / n, k % n)]).collect()
    }
}

/// Per-node symmetric matrices; `None` marks an excluded node.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearField {
    entries: Vec<Option<SymMatrix>>,
}

impl BilinearField {
    pub fn new(entries: Vec<Option<SymMatrix>>) -> Self {
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&SymMatrix> {
        self.entries[i].as_ref()
    }

    pub fn entries(&self) -> &[Option<SymMatrix>] {
        &self.entries
    }

    pub fn mask(&self) -> Vec<bool> {
        self.entries.iter().map(Option::is_some).collect()
    }

    pub fn excluded(&self) -> Vec<usize> {
        self.entries.iter().enumerate().filter(|(_, e)| e.is_none()).map(|(i, _)| i).collect()
    }

    pub fn map_scalar(&self, f: impl Fn(usize, &SymMatrix) -> f64) -> MaskedField {
        let mask = self.mask();
        MaskedField::from_fn(mask, |i| f(i, self.entries[i].as_ref().unwrap()))
    }

    /// `B(X, Y)` at every node where all three are defined.
    pub fn apply(&self, x: &VectorField, y: &VectorField) -> MaskedField {
        let mask: Vec<bool> = (0..self.len()).map(|i| self.entries[i].is_some() && x.get(i).is_some() && y.get(i).is_some()).collect();
        MaskedField::from_fn(mask, |i| self.entries[i].as_ref().unwrap().apply(x.get(i).unwrap(), y.get(i).unwrap()))
    }
}

/// Frobenius norm of the frame matrix, `|B|_HS`.
pub fn hs_norm(b: &BilinearField) -> MaskedField {
    b.map_scalar(|_, m| m.hs_sq().sqrt())
}

/// `tr B = ⟨B, Id⟩_HS`.
pub fn trace(b: &BilinearField) -> MaskedField {
    b.map_scalar(|_, m| m.trace())
}

/// Frame coefficients of a vector field; `None` where no frame exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    coeffs: Vec<Option<Vec<f64>>>,
}

impl VectorField {
    pub fn new(coeffs: Vec<Option<Vec<f64>>>) -> Self {
        Self { coeffs }
    }

    /// The same coefficient vector at every node.
    pub fn uniform(len: usize, c: Vec<f64>) -> Self {
        Self { coeffs: vec![Some(c); len] }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&[f64]> {
        self.coeffs[i].as_deref()
    }

    /// Frame inner product `⟨X, Y⟩`.
    pub fn inner(&self, other: &VectorField) -> MaskedField {
        let mask: Vec<bool> = (0..self.len()).map(|i| self.coeffs[i].is_some() && other.coeffs[i].is_some()).collect();
        MaskedField::from_fn(mask, |i| dot(self.get(i).unwrap(), other.get(i).unwrap()))
    }

    pub fn scale_by(&self, s: &ScalarField) -> VectorField {
        VectorField { coeffs: self.coeffs.iter().enumerate().map(|(i, c)| c.as_ref().map(|c| c.iter().map(|x| x * s[i]).collect())).collect() }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
pub struct LocalFrame {
    coord_fields: Vec<ScalarField>,
    /// `Γ(x_k, x_l)` for `k ≤ l`, indexed by `gram_index(k, l)`.
    coord_gram: Vec<ScalarField>,
    /// Per node: `dim_loc × coord_dim` row-major transformation `T`.
    transform: Vec<Option<Vec<f64>>>,
    dims: Vec<usize>,
}

fn gram_index(d: usize, k: usize, l: usize) -> usize {
    let (k, l) = if k <= l { (k, l) } else { (l, k) };
    k * d - k * (k + 1) / 2 + l
}

impl LocalFrame {
    /// Gram–Schmidt of `∇x_1, …, ∇x_d` in the Γ inner product, keeping the
    /// first `dim_loc` independent directions at each node. A node where
    /// fewer than `dim_loc` directions survive has no frame.
    pub fn coordinate(form: &DirichletForm) -> Result<Self> {
        let space = form.space();
        if !space.has_coords() {
            return Err(Error::InvalidSpace("a coordinate frame needs node coordinates".into()));
        }
        let d = space.coord_dim();
        let coord_fields: Vec<ScalarField> = (0..d).map(|k| space.coordinate_field(k).unwrap()).collect();
        let mut coord_gram = Vec::with_capacity(d * (d + 1) / 2);
        for k in 0..d {
            for l in k..d {
                coord_gram.push(form.gamma(&coord_fields[k], &coord_fields[l]));
            }
        }
        let n = space.node_count();
        let mut transform = Vec::with_capacity(n);
        let mut missing = 0usize;
        for i in 0..n {
            let gram = DMatrix::from_fn(d, d, |k, l| coord_gram[gram_index(d, k, l)][i]);
            let want = space.dim_loc()[i];
            let scale = gram.diagonal().iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
            let ip = |a: &[f64], b: &[f64]| -> f64 {
                let mut s = 0.0;
                for k in 0..d {
                    for l in 0..d {
                        s += a[k] * gram[(k, l)] * b[l];
                    }
                }
                s
            };
            let mut basis: Vec<Vec<f64>> = Vec::with_capacity(want);
            for k in 0..d {
                if basis.len() == want {
                    break;
                }
                let mut u = vec![0.0; d];
                u[k] = 1.0;
                for b in &basis {
                    let p = ip(&u, b);
                    for (uc, bc) in u.iter_mut().zip(b) {
                        *uc -= p * bc;
                    }
                }
                let norm2 = ip(&u, &u);
                if norm2 <= 1e-12 * scale {
                    continue;
                }
                let inv = 1.0 / norm2.sqrt();
                basis.push(u.into_iter().map(|x| x * inv).collect());
            }
            if basis.len() == want {
                transform.push(Some(basis.concat()));
            } else {
                missing += 1;
                transform.push(None);
            }
        }
        if missing > 0 {
            log::warn!("no frame at {missing} node(s)");
        }
        Ok(Self { coord_fields, coord_gram, transform, dims: space.dim_loc().to_vec() })
    }

    pub fn coord_dim(&self) -> usize {
        self.coord_fields.len()
    }

    pub fn has_frame(&self, i: usize) -> bool {
        self.transform[i].is_some()
    }

    pub fn mask(&self) -> Vec<bool> {
        self.transform.iter().map(Option::is_some).collect()
    }

    pub fn dim(&self, i: usize) -> usize {
        self.dims[i]
    }

    pub fn transform(&self, i: usize) -> Option<&[f64]> {
        self.transform[i].as_deref()
    }

    fn coord_gram(&self, k: usize, l: usize) -> &ScalarField {
        &self.coord_gram[gram_index(self.coord_dim(), k, l)]
    }

    /// Largest `|⟨e_a, e_b⟩ - δ_ab|` over framed nodes.
    pub fn orthonormality_defect(&self) -> f64 {
        let d = self.coord_dim();
        let mut worst = 0.0f64;
        for (i, t) in self.transform.iter().enumerate() {
            let Some(t) = t else { continue };
            let m = self.dims[i];
            for a in 0..m {
                for b in 0..m {
                    let mut s = 0.0;
                    for k in 0..d {
                        for l in 0..d {
                            s += t[a * d + k] * self.coord_gram(k, l)[i] * t[b * d + l];
                        }
                    }
                    let target = if a == b { 1.0 } else { 0.0 };
                    worst = worst.max((s - target).abs());
                }
            }
        }
        worst
    }

    /// Frame coefficients `f_a = ⟨∇f, e_a⟩`.
    pub fn gradient(&self, form: &DirichletForm, f: &ScalarField) -> VectorField {
        let d = self.coord_dim();
        let dirs: Vec<ScalarField> = self.coord_fields.iter().map(|x| form.gamma(f, x)).collect();
        VectorField::new(
            self.transform
                .iter()
                .enumerate()
                .map(|(i, t)| t.as_ref().map(|t| (0..self.dims[i]).map(|a| (0..d).map(|k| t[a * d + k] * dirs[k][i]).sum()).collect()))
                .collect(),
        )
    }

    /// The frame vector `e_a` as coefficients (the unit vector).
    pub fn unit(&self, a: usize) -> VectorField {
        VectorField::new(
            (0..self.transform.len())
                .map(|i| {
                    self.transform[i].as_ref().filter(|_| a < self.dims[i]).map(|_| {
                        let mut v = vec![0.0; self.dims[i]];
                        v[a] = 1.0;
                        v
                    })
                })
                .collect(),
        )
    }
}

/// A Dirichlet form together with its coordinate frame.
#[derive(Debug, Clone)]
pub struct Geometry {
    form: DirichletForm,
    frame: LocalFrame,
}

impl Geometry {
    pub fn new(space: DiscreteMms) -> Result<Self> {
        let form = DirichletForm::new(space);
        let frame = LocalFrame::coordinate(&form)?;
        Ok(Self { form, frame })
    }

    pub fn form(&self) -> &DirichletForm {
        &self.form
    }

    pub fn frame(&self) -> &LocalFrame {
        &self.frame
    }

    pub fn space(&self) -> &DiscreteMms {
        self.form.space()
    }

    pub fn node_count(&self) -> usize {
        self.form.node_count()
    }

    pub fn gradient(&self, f: &ScalarField) -> VectorField {
        self.frame.gradient(&self.form, f)
    }

    pub fn hessian(&self, f: &ScalarField) -> BilinearField {
        hessian(&self.form, &self.frame, f)
    }
}

/// `H_f` in the frame, from
/// `2 H_f(∇g, ∇h) = Γ(g, Γ(f,h)) + Γ(h, Γ(f,g)) - Γ(f, Γ(g,h))`
/// with `g, h` the coordinate functions. Nodes in the second-order boundary
/// collar or without a frame are excluded.
pub fn hessian(form: &DirichletForm, frame: &LocalFrame, f: &ScalarField) -> BilinearField {
    let d = frame.coord_dim();
    let xs = &frame.coord_fields;
    let grad_dirs: Vec<ScalarField> = xs.iter().map(|x| form.gamma(f, x)).collect();
    let mut coord_hess: Vec<ScalarField> = Vec::with_capacity(d * (d + 1) / 2);
    for k in 0..d {
        for l in k..d {
            let a = form.gamma(&xs[k], &grad_dirs[l]);
            let b = form.gamma(&xs[l], &grad_dirs[k]);
            let c = form.gamma(f, frame.coord_gram(k, l));
            coord_hess.push(ScalarField::new((0..f.len()).map(|i| 0.5 * (a[i] + b[i] - c[i])).collect()));
        }
    }
    let interior = form.interior(SECOND_ORDER_COLLAR);
    let entries = (0..f.len())
        .map(|i| {
            let t = frame.transform(i)?;
            if !interior[i] {
                return None;
            }
            let m = frame.dim(i);
            Some(SymMatrix::from_fn(m, |a, b| {
                let mut s = 0.0;
                for k in 0..d {
                    for l in 0..d {
                        s += t[a * d + k] * t[b * d + l] * coord_hess[gram_index(d, k, l)][i];
                    }
                }
                s
            }))
        })
        .collect();
    BilinearField::new(entries)
}
