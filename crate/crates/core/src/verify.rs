//! Prediction versus direct recomputation.
//!
//! For each identity the closed-form prediction on `M` is compared with the
//! same quantity assembled from scratch on `conformal_transform(M, (w, v))`.
//! The two share the node set, so errors are taken node by node over the
//! nodes where both are defined.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::calculus::FIRST_ORDER_COLLAR;
use crate::error::{Error, Result};
use crate::field::{ConformalPair, MaskedField, ScalarField};
use crate::formulas::{
    angle, transformed_angle, transformed_covariant_derivative, transformed_gamma2, transformed_gradient_norm, transformed_hessian,
    transformed_inner_product, transformed_laplacian, transformed_ricci_n, RicciParams,
};
use crate::frame::{Geometry, VectorField};
use crate::smooth::FieldExpr;
use crate::space::{build_grid_space, conformal_transform, Rect};

/// Errors below this are treated as exact agreement.
pub const EXACT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Identity {
    Gradient,
    Laplacian,
    InnerProduct,
    Angle,
    Hessian,
    Covariant,
    Gamma2,
    Ricci,
}

impl Identity {
    pub const ALL: [Identity; 8] = [
        Identity::Gradient,
        Identity::Laplacian,
        Identity::InnerProduct,
        Identity::Angle,
        Identity::Hessian,
        Identity::Covariant,
        Identity::Gamma2,
        Identity::Ricci,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Identity::Gradient => "gradient",
            Identity::Laplacian => "laplacian",
            Identity::InnerProduct => "inner_product",
            Identity::Angle => "angle",
            Identity::Hessian => "hessian",
            Identity::Covariant => "covariant",
            Identity::Gamma2 => "gamma2",
            Identity::Ricci => "ricci",
        }
    }

    /// The angle check is algebraic and must hold at every resolution.
    pub fn is_exact(self) -> bool {
        self == Identity::Angle
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Identity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Identity::ALL.into_iter().find(|i| i.name() == s).ok_or_else(|| {
            Error::InvalidParameter(format!("unknown identity '{s}' (expected one of {})", Identity::ALL.map(Identity::name).join(", ")))
        })
    }
}

/// Fields and domain for one verification run. `g` is the second function
/// for two-argument identities; `y`, `z` are constant frame vectors.
#[derive(Debug, Clone)]
pub struct VerifySetup {
    pub bounds: Rect,
    pub w: FieldExpr,
    pub v: FieldExpr,
    pub f: FieldExpr,
    pub g: FieldExpr,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub n_prime: f64,
}

fn expr(s: &str) -> FieldExpr {
    s.parse().expect("built-in expression")
}

impl VerifySetup {
    pub fn default_for(identity: Identity) -> Self {
        let base = VerifySetup {
            bounds: Rect::unit(),
            w: expr("x"),
            v: FieldExpr::zero(),
            f: expr("sinx + y"),
            g: expr("xy"),
            y: vec![1.0, 0.0],
            z: vec![1.0, 0.0],
            n_prime: 3.0,
        };
        match identity {
            Identity::Gradient | Identity::InnerProduct => base,
            Identity::Laplacian => VerifySetup { f: expr("x^2"), ..base },
            Identity::Angle => VerifySetup { w: expr("x + 0.5*siny"), g: expr("xy + x^2"), ..base },
            Identity::Hessian => VerifySetup { w: expr("y"), f: expr("x"), ..base },
            Identity::Covariant => VerifySetup { w: expr("y"), g: expr("y"), ..base },
            Identity::Gamma2 | Identity::Ricci => VerifySetup { w: expr("0.5*x"), v: expr("0.25*y"), ..base },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub identity: Identity,
    pub resolution: usize,
    pub max_abs_err: f64,
    /// `max_abs_err / max |direct|` over compared nodes.
    pub max_rel_err: f64,
    pub nodes_excluded: usize,
}

/// Per-node prediction and direct value behind an [`IdentityReport`].
#[derive(Debug, Clone)]
pub struct Comparison {
    pub report: IdentityReport,
    pub prediction: MaskedField,
    pub direct: MaskedField,
    pub coords: Vec<[f64; 2]>,
}

fn compare(identity: Identity, resolution: usize, prediction: MaskedField, direct: MaskedField, coords: Vec<[f64; 2]>) -> Result<Comparison> {
    let both = prediction.zip_with(&direct, |a, b| a - b);
    if both.valid_count() == 0 {
        return Err(Error::EmptyInterior);
    }
    let max_abs_err = both.max_abs();
    let reference = direct.restrict(both.mask()).max_abs();
    let max_rel_err = if reference > 0.0 { max_abs_err / reference } else { max_abs_err };
    let report = IdentityReport { identity, resolution, max_abs_err, max_rel_err, nodes_excluded: both.len() - both.valid_count() };
    Ok(Comparison { report, prediction, direct, coords })
}

fn full(f: ScalarField, mask: Vec<bool>) -> MaskedField {
    MaskedField::new(f.into_values(), mask)
}

/// Runs one identity on a `resolution × resolution` grid.
pub fn verify_identity(identity: Identity, setup: &VerifySetup, resolution: usize) -> Result<Comparison> {
    let space = build_grid_space(resolution, resolution, setup.bounds)?;
    let coords = (0..space.node_count()).map(|i| {
        let p = space.coord(i).unwrap();
        [p[0], p[1]]
    });
    let coords: Vec<[f64; 2]> = coords.collect();
    let pair = ConformalPair::new(space.sample(&setup.w)?, space.sample(&setup.v)?)?;
    let f = space.sample(&setup.f)?;
    let g = space.sample(&setup.g)?;
    let transformed = conformal_transform(&space, &pair)?;
    let geo = Geometry::new(space)?;
    let geo_t = Geometry::new(transformed)?;
    let (form, form_t) = (geo.form(), geo_t.form());
    let first = form.interior(FIRST_ORDER_COLLAR);
    let n = f.len();
    let (prediction, direct) = match identity {
        Identity::Gradient => (full(transformed_gradient_norm(form, &pair, &f)?, first.clone()), full(form_t.weak_gradient_norm(&f), first)),
        Identity::Laplacian => (full(transformed_laplacian(form, &pair, &f)?, first.clone()), full(form_t.laplacian(&f), first)),
        Identity::InnerProduct => {
            let s = pair.w.map(|w| (-2.0 * w).exp());
            let pred = transformed_inner_product(&pair, &geo.gradient(&f).scale_by(&s), &geo.gradient(&g).scale_by(&s))?;
            (pred.restrict(&first), full(form_t.gamma(&f, &g), first))
        }
        Identity::Angle => {
            // ∇'f = e^{-2w}∇f measured with ⟨·,·⟩' = e^{2w}⟨·,·⟩
            let (x, y) = (geo.gradient(&f), geo.gradient(&g));
            let s = pair.w.map(|w| (-2.0 * w).exp());
            (transformed_angle(&pair, &x.scale_by(&s), &y.scale_by(&s))?, angle(&x, &y))
        }
        Identity::Hessian => {
            let th = transformed_hessian(&geo, &pair, &f)?;
            (th.hs_sq, geo_t.hessian(&f).map_scalar(|_, m| m.hs_sq()))
        }
        Identity::Covariant => {
            let (y, z) = (VectorField::uniform(n, setup.y.clone()), VectorField::uniform(n, setup.z.clone()));
            let pred = transformed_covariant_derivative(&geo, &pair, &g, &y, &z)?;
            // Y = Σ Y_a e_a = Σ e^w Y_a e'_a
            let ew = pair.w.exp();
            let direct = geo_t.hessian(&g).apply(&y.scale_by(&ew), &z.scale_by(&ew));
            (pred, direct)
        }
        Identity::Gamma2 => (transformed_gamma2(form, &pair, &f)?, form_t.gamma2(&f)),
        Identity::Ricci => {
            let params = RicciParams::new(setup.n_prime, 0.0);
            (transformed_ricci_n(&geo, &pair, &params, &f)?, crate::formulas::ricci_n(&geo_t, &params, &f)?)
        }
    };
    compare(identity, resolution, prediction, direct, coords)
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinementReport {
    pub identity: Identity,
    pub reports: Vec<IdentityReport>,
    /// `err(r_k) / err(r_{k+1})`; `None` when both errors are below the exact floor.
    pub error_ratios: Vec<Option<f64>>,
    pub passed: bool,
}

/// Runs `identity` at each resolution. Passing means: exact identities stay
/// below [`EXACT_FLOOR`]; others reach `rel_tol` at the finest resolution and
/// the error at least halves between consecutive resolutions.
pub fn verify_refinement(identity: Identity, setup: &VerifySetup, resolutions: &[usize], rel_tol: f64) -> Result<RefinementReport> {
    if resolutions.is_empty() {
        return Err(Error::InvalidParameter("at least one resolution is required".into()));
    }
    let reports = resolutions.iter().map(|&r| verify_identity(identity, setup, r).map(|c| c.report)).collect::<Result<Vec<_>>>()?;
    Ok(summarize(identity, reports, rel_tol))
}

/// Pass/fail and error ratios for reports ordered from coarse to fine.
pub fn summarize(identity: Identity, reports: Vec<IdentityReport>, rel_tol: f64) -> RefinementReport {
    assert!(!reports.is_empty(), "summarize needs at least one report");
    let error_ratios: Vec<Option<f64>> = reports
        .windows(2)
        .map(|p| if p[0].max_abs_err < EXACT_FLOOR && p[1].max_abs_err < EXACT_FLOOR { None } else { Some(p[0].max_abs_err / p[1].max_abs_err) })
        .collect();
    let passed = if identity.is_exact() {
        reports.iter().all(|r| r.max_abs_err <= EXACT_FLOOR)
    } else {
        let last = reports.last().unwrap();
        (last.max_rel_err <= rel_tol || last.max_abs_err < EXACT_FLOOR) && error_ratios.iter().all(|r| r.is_none_or(|r| r >= 2.0))
    };
    RefinementReport { identity, reports, error_ratios, passed }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for id in Identity::ALL {
            assert_eq!(id.name().parse::<Identity>().unwrap(), id);
        }
        assert!(matches!("curl".parse::<Identity>(), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn zero_weight_is_exact() {
        for id in Identity::ALL {
            let setup = VerifySetup { w: FieldExpr::zero(), v: FieldExpr::zero(), ..VerifySetup::default_for(id) };
            let c = verify_identity(id, &setup, 12).unwrap();
            assert!(c.report.max_abs_err <= EXACT_FLOOR * c.direct.max_abs().max(1.0), "{id}: {:?}", c.report);
        }
    }

    #[test]
    fn every_identity_converges() {
        for id in Identity::ALL {
            let r = verify_refinement(id, &VerifySetup::default_for(id), &[24, 48], 0.2).unwrap();
            assert!(r.passed, "{id}: {r:?}");
        }
    }
}
