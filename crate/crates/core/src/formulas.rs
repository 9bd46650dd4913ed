//! Conformal transformation rules.
//!
//! Each function predicts a quantity of `M' = (X, e^w d, e^v m)` from
//! quantities computed on `M`. Scalar outputs are densities with respect to
//! `m' = e^v m`, so a factor written `e^{v-4w}` against `m` appears here as
//! `e^{-4w}`. Matrices are expressed in the frame `e'_a = e^{-w} e_a`, which
//! is orthonormal for `M'`.
//!
//! Notation inside this module: `u = v - 2w`, `f_a` and `w_a` are frame
//! coefficients of `∇f` and `∇w`, and `⟨w,f⟩ = Σ_a w_a f_a`.

use serde::{Deserialize, Serialize};

use crate::calculus::{DirichletForm, SECOND_ORDER_COLLAR};
use crate::error::{Error, Result};
use crate::field::{ConformalPair, MaskedField, ScalarField};
use crate::frame::{dot, BilinearField, Geometry, SymMatrix, VectorField};
use crate::space::DiscreteMms;

/// Relative tolerance on `|tr H_f - Δf|` at `N' = dim_loc` nodes.
pub const DEFAULT_SINGULAR_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RicciParams {
    pub n_prime: f64,
    pub k: f64,
    /// Scaled by `max(|Δf|, |tr H_f|, 1)` at each node.
    pub singular_tol: f64,
}

impl RicciParams {
    pub fn new(n_prime: f64, k: f64) -> Self {
        Self { n_prime, k, singular_tol: DEFAULT_SINGULAR_TOL }
    }

    pub fn with_singular_tol(mut self, tol: f64) -> Self {
        self.singular_tol = tol;
        self
    }

    /// `N' ≥ dim_loc` at every node.
    pub fn validate(&self, space: &DiscreteMms) -> Result<()> {
        if !self.n_prime.is_finite() || !self.k.is_finite() {
            return Err(Error::InvalidParameter(format!("N' = {} and K = {} must be finite", self.n_prime, self.k)));
        }
        if !(self.singular_tol > 0.0) {
            return Err(Error::InvalidParameter(format!("singular tolerance must be positive, got {}", self.singular_tol)));
        }
        match space.dim_loc().iter().position(|&d| self.n_prime < d as f64) {
            Some(node) => Err(Error::DimensionTooSmall { n_prime: self.n_prime, dim_loc: space.dim_loc()[node], node }),
            None => Ok(()),
        }
    }

    fn is_singular(&self, dim: usize) -> bool {
        self.n_prime == dim as f64
    }
}

fn check_fields(n: usize, pair: &ConformalPair, fields: &[&ScalarField]) -> Result<()> {
    pair.w.check_len(n)?;
    pair.v.check_len(n)?;
    fields.iter().try_for_each(|f| f.check_len(n))
}

fn exponent_weight(w: &ScalarField, c: f64) -> ScalarField {
    w.map(|x| (c * x).exp())
}

/// `|Df|_{M'} = e^{-w} |Df|`.
pub fn transformed_gradient_norm(form: &DirichletForm, pair: &ConformalPair, f: &ScalarField) -> Result<ScalarField> {
    check_fields(form.node_count(), pair, &[f])?;
    Ok(form.weak_gradient_norm(f).zip_map(&pair.w, |g, w| (-w).exp() * g))
}

/// `Δ'f = e^{-2w} (Δf + Γ(v - 2w, f))`.
pub fn transformed_laplacian(form: &DirichletForm, pair: &ConformalPair, f: &ScalarField) -> Result<ScalarField> {
    check_fields(form.node_count(), pair, &[f])?;
    let u = &pair.v - &pair.w.scale(2.0);
    let lap = form.laplacian(f);
    let drift = form.gamma(&u, f);
    let e = exponent_weight(&pair.w, -2.0);
    Ok(ScalarField::new((0..f.len()).map(|i| e[i] * (lap[i] + drift[i])).collect()))
}

/// `⟨X, Y⟩_{M'} = e^{2w} ⟨X, Y⟩` for vectors given in the frame of `M`.
pub fn transformed_inner_product(pair: &ConformalPair, x: &VectorField, y: &VectorField) -> Result<MaskedField> {
    pair.w.check_len(x.len())?;
    pair.w.check_len(y.len())?;
    Ok(x.inner(y).map(|i, v| (2.0 * pair.w[i]).exp() * v))
}

/// Angle between `X` and `Y` in the frame metric. Nodes where either vector
/// vanishes are excluded.
pub fn angle(x: &VectorField, y: &VectorField) -> MaskedField {
    angle_in_metric(x, y, |_| 1.0)
}

/// Angle between `X` and `Y` measured with `⟨·,·⟩_{M'} = e^{2w} ⟨·,·⟩`.
pub fn transformed_angle(pair: &ConformalPair, x: &VectorField, y: &VectorField) -> Result<MaskedField> {
    pair.w.check_len(x.len())?;
    let g = exponent_weight(&pair.w, 2.0);
    Ok(angle_in_metric(x, y, |i| g[i]))
}

/// `2 atan2(|u - v|, |u + v|)` on unit vectors, accurate near 0 and π.
fn angle_in_metric(x: &VectorField, y: &VectorField, metric: impl Fn(usize) -> f64) -> MaskedField {
    let mut degenerate = 0usize;
    let mask: Vec<bool> = (0..x.len())
        .map(|i| match (x.get(i), y.get(i)) {
            (Some(a), Some(b)) => {
                let ok = dot(a, a) > 0.0 && dot(b, b) > 0.0;
                degenerate += usize::from(!ok);
                ok
            }
            _ => false,
        })
        .collect();
    if degenerate > 0 {
        log::warn!("angle undefined at {degenerate} node(s) with a zero vector");
    }
    MaskedField::from_fn(mask, |i| {
        let (a, b) = (x.get(i).unwrap(), y.get(i).unwrap());
        let g = metric(i);
        let na = (g * dot(a, a)).sqrt();
        let nb = (g * dot(b, b)).sqrt();
        let (mut diff, mut sum) = (0.0, 0.0);
        for (p, q) in a.iter().zip(b) {
            let (p, q) = (p / na, q / nb);
            diff += (p - q) * (p - q);
            sum += (p + q) * (p + q);
        }
        2.0 * (g * diff).sqrt().atan2((g * sum).sqrt())
    })
}

#[derive(Debug, Clone)]
pub struct TransformedHessian {
    /// `H'_f` in the frame `e'_a`.
    pub hessian: BilinearField,
    /// `e^{-4w}(|H|² + 2|∇f|²|∇w|² + (d-2)⟨w,f⟩² - 4 H(∇w,∇f) + 2⟨w,f⟩ tr H)`.
    pub hs_sq: MaskedField,
    /// `e^{-2w}(tr H + (d-2)⟨w,f⟩)`.
    pub trace: MaskedField,
}

impl TransformedHessian {
    /// Largest relative gap between the closed forms and the HS² and trace
    /// of the entrywise matrix.
    pub fn consistency_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, m) in self.hessian.entries().iter().enumerate() {
            let Some(m) = m else { continue };
            let (a, b) = (m.hs_sq(), self.hs_sq.values()[i]);
            worst = worst.max((a - b).abs() / a.abs().max(1.0));
            let (a, b) = (m.trace(), self.trace.values()[i]);
            worst = worst.max((a - b).abs() / a.abs().max(1.0));
        }
        worst
    }
}

/// `(H'_f)_ab = e^{-2w}(H_ab - w_a f_b - w_b f_a + ⟨w,f⟩ δ_ab)`.
pub fn transformed_hessian(geo: &Geometry, pair: &ConformalPair, f: &ScalarField) -> Result<TransformedHessian> {
    check_fields(geo.node_count(), pair, &[f])?;
    let h = geo.hessian(f);
    let gf = geo.gradient(f);
    let gw = geo.gradient(&pair.w);
    let n = f.len();
    let mut entries = Vec::with_capacity(n);
    let mut hs_sq = vec![f64::NAN; n];
    let mut trace = vec![f64::NAN; n];
    for i in 0..n {
        let (Some(hm), Some(fa), Some(wa)) = (h.get(i), gf.get(i), gw.get(i)) else {
            entries.push(None);
            continue;
        };
        let d = hm.dim();
        let s = dot(wa, fa);
        let e2 = (-2.0 * pair.w[i]).exp();
        entries.push(Some(SymMatrix::from_fn(d, |a, b| {
            let diag = if a == b { s } else { 0.0 };
            e2 * (hm.get(a, b) - wa[a] * fa[b] - wa[b] * fa[a] + diag)
        })));
        let dm2 = d as f64 - 2.0;
        let tr = hm.trace();
        hs_sq[i] = e2 * e2 * (hm.hs_sq() + 2.0 * dot(fa, fa) * dot(wa, wa) + dm2 * s * s - 4.0 * hm.apply(wa, fa) + 2.0 * s * tr);
        trace[i] = e2 * (tr + dm2 * s);
    }
    let hessian = BilinearField::new(entries);
    let mask = hessian.mask();
    Ok(TransformedHessian { hs_sq: MaskedField::new(hs_sq, mask.clone()), trace: MaskedField::new(trace, mask), hessian })
}

/// `∇'X : (Y ⊗ Z)` for `X = ∇g`:
/// `H_g(Y,Z) - ⟨Y,∇w⟩⟨X,Z⟩ - ⟨Z,∇w⟩⟨X,Y⟩ + ⟨X,∇w⟩⟨Y,Z⟩`,
/// with `Y, Z` given in the frame of `M`.
pub fn transformed_covariant_derivative(
    geo: &Geometry,
    pair: &ConformalPair,
    g: &ScalarField,
    y: &VectorField,
    z: &VectorField,
) -> Result<MaskedField> {
    check_fields(geo.node_count(), pair, &[g])?;
    let n = g.len();
    if y.len() != n || z.len() != n {
        return Err(Error::SizeMismatch { expected: n, found: y.len().min(z.len()) });
    }
    let h = geo.hessian(g);
    let x = geo.gradient(g);
    let gw = geo.gradient(&pair.w);
    let mask: Vec<bool> =
        (0..n).map(|i| h.get(i).is_some() && x.get(i).is_some() && gw.get(i).is_some() && y.get(i).is_some() && z.get(i).is_some()).collect();
    Ok(MaskedField::from_fn(mask, |i| {
        let (xa, wa, ya, za) = (x.get(i).unwrap(), gw.get(i).unwrap(), y.get(i).unwrap(), z.get(i).unwrap());
        h.get(i).unwrap().apply(ya, za) - dot(ya, wa) * dot(xa, za) - dot(za, wa) * dot(xa, ya) + dot(xa, wa) * dot(ya, za)
    }))
}

/// Γ₂ of `M'`:
/// `e^{-4w}[Γ₂(f) + 2Γ(f)Γ(w) - Δw Γ(f) - 2Γ(w,Γ(f)) - Γ(f)Γ(u,w)
///  + ½Γ(u,Γ(f)) - Γ(f,Γ(f,u)) + 2Γ(f,w)Δf + 2Γ(w,f)Γ(u,f)]`.
pub fn transformed_gamma2(form: &DirichletForm, pair: &ConformalPair, f: &ScalarField) -> Result<MaskedField> {
    check_fields(form.node_count(), pair, &[f])?;
    let w = &pair.w;
    let u = &pair.v - &w.scale(2.0);
    let g2 = form.gamma2_raw(f);
    let gf = form.gamma_sq(f);
    let gw = form.gamma_sq(w);
    let lap_w = form.laplacian(w);
    let lap_f = form.laplacian(f);
    let w_gf = form.gamma(w, &gf);
    let u_w = form.gamma(&u, w);
    let u_gf = form.gamma(&u, &gf);
    let f_fu = form.gamma(f, &form.gamma(f, &u));
    let fw = form.gamma(f, w);
    let uf = form.gamma(&u, f);
    let e = exponent_weight(w, -4.0);
    Ok(MaskedField::from_fn(form.interior(SECOND_ORDER_COLLAR), |i| {
        e[i] * (g2[i] + 2.0 * gf[i] * gw[i] - lap_w[i] * gf[i] - 2.0 * w_gf[i] - gf[i] * u_w[i] + 0.5 * u_gf[i] - f_fu[i]
            + 2.0 * fw[i] * lap_f[i]
            + 2.0 * fw[i] * uf[i])
    }))
}

fn singular_scale(lap: f64, trace: f64) -> f64 {
    lap.abs().max(trace.abs()).max(1.0)
}

/// Γ₂, Hessian and Laplacian of `f` on `M`, shared by the Ricci formulas.
struct SourceTerms {
    gamma2: MaskedField,
    hess: BilinearField,
    lap: ScalarField,
}

impl SourceTerms {
    fn new(geo: &Geometry, f: &ScalarField) -> Self {
        Self { gamma2: geo.form().gamma2(f), hess: geo.hessian(f), lap: geo.form().laplacian(f) }
    }

    fn mask(&self) -> Vec<bool> {
        (0..self.lap.len()).map(|i| self.gamma2.is_valid(i) && self.hess.get(i).is_some()).collect()
    }

    /// `Γ₂ - |H|² - (tr H - Δf)²/(N - d)`; `Err(())` at an unresolved singular node.
    fn ricci(&self, params: &RicciParams, i: usize) -> std::result::Result<f64, ()> {
        let h = self.hess.get(i).expect("masked node");
        let y = h.trace() - self.lap[i];
        let d = h.dim();
        let dim_term = if params.is_singular(d) {
            if y.abs() > params.singular_tol * singular_scale(self.lap[i], h.trace()) {
                return Err(());
            }
            0.0
        } else {
            y * y / (params.n_prime - d as f64)
        };
        Ok(self.gamma2.values()[i] - h.hs_sq() - dim_term)
    }
}

fn singular_error(nodes: Vec<usize>, params: &RicciParams) -> Error {
    log::error!("N' = dim_loc singularity unresolved at {} node(s)", nodes.len());
    Error::Singular { nodes, tol: params.singular_tol }
}

/// `Ricci_N(∇f,∇f)` density: `Γ₂(f) - |H_f|² - (tr H_f - Δf)²/(N - dim_loc)`.
/// At `N = dim_loc` the last term is dropped when `|tr H_f - Δf|` is within
/// tolerance and the node is reported as singular otherwise.
pub fn ricci_n(geo: &Geometry, params: &RicciParams, f: &ScalarField) -> Result<MaskedField> {
    params.validate(geo.space())?;
    f.check_len(geo.node_count())?;
    let terms = SourceTerms::new(geo, f);
    let mask = terms.mask();
    let mut values = vec![f64::NAN; f.len()];
    let mut singular = Vec::new();
    for i in (0..f.len()).filter(|&i| mask[i]) {
        match terms.ricci(params, i) {
            Ok(v) => values[i] = v,
            Err(()) => singular.push(i),
        }
    }
    if !singular.is_empty() {
        return Err(singular_error(singular, params));
    }
    Ok(MaskedField::new(values, mask))
}

/// `Ricci_{N'}` on `M` and the correction `Corr` with
/// `Ricci'_{N'}(∇'f,∇'f) = e^{-4w}(Ricci_{N'}(∇f,∇f) + Corr)` as densities.
#[derive(Debug, Clone)]
pub struct RicciCorrection {
    pub source: MaskedField,
    pub correction: MaskedField,
}

/// `Corr = R + S` with `Y = Δf - tr H`, `Z = (2-d)Γ(f,w) + Γ(u,f)`,
/// `R = 2Γ(w,f)Y + 2Γ(w,f)Γ(u,f) - (d-2)Γ(w,f)² - H_u(∇f,∇f) - Γ(f)(Γ(u,w) + Δw)`
/// and `S = -(Z² + 2YZ)/(N' - d)`. At `N' = d` the term `S` is dropped when
/// both `Y` and `Y + Z` are within tolerance.
pub fn ricci_correction(geo: &Geometry, pair: &ConformalPair, params: &RicciParams, f: &ScalarField) -> Result<RicciCorrection> {
    params.validate(geo.space())?;
    check_fields(geo.node_count(), pair, &[f])?;
    let form = geo.form();
    let w = &pair.w;
    let u = &pair.v - &w.scale(2.0);
    let terms = SourceTerms::new(geo, f);
    let hu = geo.hessian(&u);
    let fa = geo.gradient(f);
    let wf = form.gamma(w, f);
    let uf = form.gamma(&u, f);
    let uw = form.gamma(&u, w);
    let gf = form.gamma_sq(f);
    let lap_w = form.laplacian(w);
    let n = f.len();
    let mask: Vec<bool> = terms.mask().into_iter().enumerate().map(|(i, ok)| ok && hu.get(i).is_some() && fa.get(i).is_some()).collect();
    let mut source = vec![f64::NAN; n];
    let mut correction = vec![f64::NAN; n];
    let mut singular = Vec::new();
    for i in (0..n).filter(|&i| mask[i]) {
        let Ok(ric) = terms.ricci(params, i) else {
            singular.push(i);
            continue;
        };
        let h = terms.hess.get(i).unwrap();
        let d = h.dim() as f64;
        let y = terms.lap[i] - h.trace();
        let z = (2.0 - d) * wf[i] + uf[i];
        let fai = fa.get(i).unwrap();
        let r = 2.0 * wf[i] * y + 2.0 * wf[i] * uf[i] - (d - 2.0) * wf[i] * wf[i] - hu.get(i).unwrap().apply(fai, fai) - gf[i] * (uw[i] + lap_w[i]);
        let s = if params.is_singular(h.dim()) {
            if (y + z).abs() > params.singular_tol * singular_scale(terms.lap[i], h.trace()) {
                singular.push(i);
                continue;
            }
            0.0
        } else {
            -(z * z + 2.0 * y * z) / (params.n_prime - d)
        };
        source[i] = ric;
        correction[i] = r + s;
    }
    if !singular.is_empty() {
        return Err(singular_error(singular, params));
    }
    Ok(RicciCorrection { source: MaskedField::new(source, mask.clone()), correction: MaskedField::new(correction, mask) })
}

/// `Ricci'_{N'}(∇'f,∇'f)` density w.r.t. `m'`: `e^{-4w}(Ricci_{N'} + Corr)`.
pub fn transformed_ricci_n(geo: &Geometry, pair: &ConformalPair, params: &RicciParams, f: &ScalarField) -> Result<MaskedField> {
    let rc = ricci_correction(geo, pair, params, f)?;
    Ok(rc.source.zip_with(&rc.correction, |a, b| a + b).map(|i, x| (-4.0 * pair.w[i]).exp() * x))
}

/// The `v = N w` reduction:
/// `e^{-4w}(Ricci_N + [-Δw - (N-2)Γ(w)]Γ(f) - (N-2)[H_w(∇f,∇f) - Γ(w,f)²])`.
pub fn ricci_special_case_nw(geo: &Geometry, w: &ScalarField, params: &RicciParams, f: &ScalarField) -> Result<MaskedField> {
    w.check_len(geo.node_count())?;
    let form = geo.form();
    let ric = ricci_n(geo, params, f)?;
    let hw = geo.hessian(w);
    let fa = geo.gradient(f);
    let lap_w = form.laplacian(w);
    let gw = form.gamma_sq(w);
    let gf = form.gamma_sq(f);
    let wf = form.gamma(w, f);
    let nm2 = params.n_prime - 2.0;
    let mask: Vec<bool> = (0..w.len()).map(|i| ric.is_valid(i) && hw.get(i).is_some() && fa.get(i).is_some()).collect();
    Ok(MaskedField::from_fn(mask, |i| {
        let fai = fa.get(i).unwrap();
        let bracket = ric.values()[i] + (-lap_w[i] - nm2 * gw[i]) * gf[i] - nm2 * (hw.get(i).unwrap().apply(fai, fai) - wf[i] * wf[i]);
        (-4.0 * w[i]).exp() * bracket
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smooth::FieldExpr;
    use crate::space::{build_grid_space, build_line_space, Rect};
    use proptest::prelude::*;

    fn geo(n: usize) -> Geometry {
        Geometry::new(build_grid_space(n, n, Rect::unit()).unwrap()).unwrap()
    }

    fn sample(g: &Geometry, e: &str) -> ScalarField {
        g.space().sample(&e.parse::<FieldExpr>().unwrap()).unwrap()
    }

    fn max_gap(a: &MaskedField, b: &MaskedField) -> f64 {
        a.zip_with(b, |x, y| (x - y).abs()).max_abs()
    }

    #[test]
    fn gradient_norm_trivial_cases() {
        let g = geo(9);
        let f = sample(&g, "sinx+y");
        let plain = g.form().weak_gradient_norm(&f);
        let n = f.len();
        let id = transformed_gradient_norm(g.form(), &ConformalPair::identity(n), &f).unwrap();
        assert_eq!(id, plain);
        let ln2 = ConformalPair::new(ScalarField::constant(n, 2f64.ln()), ScalarField::zeros(n)).unwrap();
        let half = transformed_gradient_norm(g.form(), &ln2, &f).unwrap();
        for i in 0..n {
            assert!((half[i] - 0.5 * plain[i]).abs() <= 1e-15 * plain[i].max(1.0));
        }
    }

    #[test]
    fn laplacian_constant_weights_exact() {
        let g = geo(9);
        let f = sample(&g, "sinx+y+xy");
        let n = f.len();
        let lap = g.form().laplacian(&f);
        let w = ScalarField::constant(n, 0.3);
        for v in [ScalarField::constant(n, -1.1), w.scale(2.0)] {
            let p = ConformalPair::new(w.clone(), v).unwrap();
            let got = transformed_laplacian(g.form(), &p, &f).unwrap();
            for i in 0..n {
                assert_eq!(got[i], (-0.6f64).exp() * lap[i]);
            }
        }
    }

    #[test]
    fn laplacian_on_line_matches_closed_form() {
        // f = x², w = x, v = 0: e^{-2x}(2 - 4x)
        let form = DirichletForm::new(build_line_space(201, 0.0, 1.0).unwrap());
        let sp = form.space();
        let f = sp.sample_fn(|p| p[0] * p[0]).unwrap();
        let w = sp.coordinate_field(0).unwrap();
        let p = ConformalPair::new(w, ScalarField::zeros(f.len())).unwrap();
        let got = transformed_laplacian(&form, &p, &f).unwrap();
        let mask = form.interior(crate::calculus::FIRST_ORDER_COLLAR);
        for i in (0..f.len()).filter(|&i| mask[i]) {
            let x = sp.coord(i).unwrap()[0];
            assert!((got[i] - (-2.0 * x).exp() * (2.0 - 4.0 * x)).abs() < 1e-9);
        }
    }

    #[test]
    fn angle_examples() {
        let n = 4;
        let ex = VectorField::uniform(n, vec![1.0, 0.0]);
        let ey = VectorField::uniform(n, vec![0.0, 1.0]);
        let p = ConformalPair::new(ScalarField::new(vec![0.0, 1.0, -2.0, 5.0]), ScalarField::zeros(n)).unwrap();
        for (_, a) in transformed_angle(&p, &ex, &ex).unwrap().iter_valid() {
            assert_eq!(a, 0.0);
        }
        for (_, a) in transformed_angle(&p, &ex, &ey).unwrap().iter_valid() {
            assert!((a - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        }
        let zero = VectorField::uniform(n, vec![0.0, 0.0]);
        assert_eq!(angle(&zero, &ex).valid_count(), 0);
    }

    #[test]
    fn hessian_closed_forms_consistent() {
        let g = geo(20);
        let f = sample(&g, "sinx + xy + 0.3*y^2");
        let n = f.len();
        let w = sample(&g, "0.5*x + 0.2*siny");
        let th = transformed_hessian(&g, &ConformalPair::new(w, ScalarField::zeros(n)).unwrap(), &f).unwrap();
        assert!(th.hessian.mask().iter().any(|&b| b));
        assert!(th.consistency_defect() < 1e-10);
        // d = 2: tr H' = e^{-2w} tr H
        let h = g.hessian(&f);
        for (i, t) in th.trace.iter_valid() {
            let want = (-2.0 * th_w(&g, i)).exp() * h.get(i).unwrap().trace();
            assert!((t - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    fn th_w(g: &Geometry, i: usize) -> f64 {
        let p = g.space().coord(i).unwrap();
        0.5 * p[0] + 0.2 * p[1].sin()
    }

    #[test]
    fn hessian_trivial_cases() {
        let g = geo(12);
        let f = sample(&g, "sinx + xy");
        let n = f.len();
        let th = transformed_hessian(&g, &ConformalPair::identity(n), &f).unwrap();
        assert_eq!(th.hessian, g.hessian(&f));
        let c = ScalarField::constant(n, 2.0);
        let w = sample(&g, "x");
        let tc = transformed_hessian(&g, &ConformalPair::new(w, ScalarField::zeros(n)).unwrap(), &c).unwrap();
        assert_eq!(tc.hs_sq.max_abs(), 0.0);
        assert_eq!(tc.trace.max_abs(), 0.0);
    }

    #[test]
    fn hessian_f_x_w_y_limit() {
        let g = geo(64);
        let f = sample(&g, "x");
        let w = sample(&g, "y");
        let n = f.len();
        let th = transformed_hessian(&g, &ConformalPair::new(w.clone(), ScalarField::zeros(n)).unwrap(), &f).unwrap();
        for (i, v) in th.hs_sq.iter_valid() {
            let want = 2.0 * (-4.0 * w[i]).exp();
            assert!((v - want).abs() <= 1e-6 * want, "{v} vs {want}");
        }
        assert!(th.trace.max_abs() < 1e-9);
    }

    #[test]
    fn covariant_examples() {
        let g = geo(24);
        let n = g.node_count();
        let yf = sample(&g, "y");
        let ex = VectorField::uniform(n, vec![1.0, 0.0]);
        let p = ConformalPair::new(yf.clone(), ScalarField::zeros(n)).unwrap();
        let c = transformed_covariant_derivative(&g, &p, &yf, &ex, &ex).unwrap();
        for (_, v) in c.iter_valid() {
            assert!((v - 1.0).abs() < 1e-9);
        }
        // w = 0 reproduces H_g(Y, Z)
        let gfield = sample(&g, "sinx + xy");
        let ey = VectorField::uniform(n, vec![0.0, 1.0]);
        let c0 = transformed_covariant_derivative(&g, &ConformalPair::identity(n), &gfield, &ex, &ey).unwrap();
        assert_eq!(c0, g.hessian(&gfield).apply(&ex, &ey));
    }

    #[test]
    fn gamma2_trivial_cases() {
        let g = geo(14);
        let f = sample(&g, "sinx + xy");
        let n = f.len();
        let base = g.form().gamma2(&f);
        let id = transformed_gamma2(g.form(), &ConformalPair::identity(n), &f).unwrap();
        assert!(max_gap(&id, &base) <= 1e-12 * base.max_abs());
        let p = ConformalPair::new(ScalarField::constant(n, 0.4), ScalarField::zeros(n)).unwrap();
        let scaled = transformed_gamma2(g.form(), &p, &f).unwrap();
        let want = base.map(|_, v| (-1.6f64).exp() * v);
        assert!(max_gap(&scaled, &want) <= 1e-12 * base.max_abs());
    }

    #[test]
    fn ricci_parameter_errors() {
        let g = geo(10);
        let f = sample(&g, "sinx");
        assert!(matches!(ricci_n(&g, &RicciParams::new(1.5, 0.0), &f), Err(Error::DimensionTooSmall { .. })));
        assert!(matches!(ricci_n(&g, &RicciParams::new(2.0, 0.0), &f), Err(Error::Singular { .. })));
        assert!(ricci_n(&g, &RicciParams::new(2.0, 0.0).with_singular_tol(1e-2), &f).is_ok());
        assert!(ricci_n(&g, &RicciParams::new(2.0, 0.0).with_singular_tol(0.0), &f).is_err());
    }

    #[test]
    fn ricci_flat_quadratic_exact() {
        let g = geo(16);
        let f = sample(&g, "r2 + xy");
        let c = sample(&g, "const:3");
        for n in [2.0, 3.0, 7.5] {
            let p = RicciParams::new(n, 0.0);
            assert!(ricci_n(&g, &p, &f).unwrap().max_abs() < 1e-8);
            assert_eq!(ricci_n(&g, &p, &c).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn transformed_ricci_identity_is_bitwise() {
        let g = geo(16);
        let f = sample(&g, "sinx + 0.3*xy");
        let p = RicciParams::new(3.0, 0.0);
        let a = ricci_n(&g, &p, &f).unwrap();
        let b = transformed_ricci_n(&g, &ConformalPair::identity(f.len()), &p, &f).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn special_case_n2_is_minus_laplacian() {
        let g = geo(16);
        let f = sample(&g, "r2");
        let w = sample(&g, "0.3*sinx + 0.2*y^2");
        let p = RicciParams::new(2.0, 0.0);
        let got = ricci_special_case_nw(&g, &w, &p, &f).unwrap();
        let ric = ricci_n(&g, &p, &f).unwrap();
        let (lw, gf) = (g.form().laplacian(&w), g.form().gamma_sq(&f));
        for (i, v) in got.iter_valid() {
            let want = (-4.0 * w[i]).exp() * (ric.values()[i] - lw[i] * gf[i]);
            assert!((v - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn laplacian_composition(
            a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, d in -1.0f64..1.0,
        ) {
            let g = geo(10);
            let sp = g.space();
            let f = sample(&g, "sinx + xy");
            let w1 = sp.sample_fn(|p| a * p[0] + 0.3 * p[1] * p[1]).unwrap();
            let v1 = sp.sample_fn(|p| b * p[1]).unwrap();
            let w2 = sp.sample_fn(|p| c * (p[0] * p[1])).unwrap();
            let v2 = sp.sample_fn(|p| d * p[0] * p[0]).unwrap();
            let p1 = ConformalPair::new(w1.clone(), v1.clone()).unwrap();
            let once = transformed_laplacian(g.form(), &ConformalPair::new(&w1 + &w2, &v1 + &v2).unwrap(), &f).unwrap();
            // second step on M' at formula level, with Γ' = e^{-2w₁}Γ
            let lap1 = transformed_laplacian(g.form(), &p1, &f).unwrap();
            let u2 = &v2 - &w2.scale(2.0);
            let g1 = g.form().gamma(&u2, &f);
            for i in 0..f.len() {
                let twice = (-2.0 * w2[i]).exp() * (lap1[i] + (-2.0 * w1[i]).exp() * g1[i]);
                prop_assert!((twice - once[i]).abs() <= 1e-12 * once[i].abs().max(1.0));
            }
        }

        #[test]
        fn angle_invariant(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 16;
            let mut vec2 = || VectorField::new((0..n).map(|_| Some(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])).collect());
            let (x, y) = (vec2(), vec2());
            let w = ScalarField::new((0..n).map(|i| (i as f64 * 0.37).sin() * 3.0).collect());
            let p = ConformalPair::new(w, ScalarField::zeros(n)).unwrap();
            let a = angle(&x, &y);
            let b = transformed_angle(&p, &x, &y).unwrap();
            prop_assert!(max_gap(&a, &b) <= 1e-12);
        }

        #[test]
        fn general_formula_matches_volume_matched(n_prime in 2.5f64..6.0, a in -0.5f64..0.5, seed in 0u64..50) {
            use rand::SeedableRng;
            let g = geo(14);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let f = g.space().sample(&FieldExpr::random_smooth(&mut rng, 2, 3)).unwrap();
            let w = g.space().sample_fn(|p| a * p[0] + 0.2 * (p[1] * 2.0).sin()).unwrap();
            let params = RicciParams::new(n_prime, 0.0);
            let pair = ConformalPair::volume_matched(w.clone(), n_prime);
            let general = transformed_ricci_n(&g, &pair, &params, &f).unwrap();
            let special = ricci_special_case_nw(&g, &w, &params, &f).unwrap();
            let scale = general.max_abs().max(1.0);
            prop_assert!(max_gap(&general, &special) <= 1e-10 * scale);
        }
    }
}
