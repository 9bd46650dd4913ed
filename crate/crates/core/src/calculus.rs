//! Dirichlet-form calculus on a discrete metric measure space.
//!
//! For conductances `c_ij` and node masses `m_i`:
//!
//! ```text
//! Γ(f,g)(i) = 1/(2 m_i) Σ_j c_ij (f_j - f_i)(g_j - g_i)
//! Δf(i)     = 1/m_i     Σ_j c_ij (f_j - f_i)
//! Γ₂(f)     = ½ ΔΓ(f) - Γ(f, Δf)
//! ```
//!
//! Integration by parts `Σ φ Δf m = -Σ Γ(φ,f) m` and the Leibniz rule
//! `Δ(fg) = fΔg + gΔf + 2Γ(f,g)` hold exactly; the chain rule only in the
//! refinement limit.

use crate::field::{MaskedField, ScalarField};
use crate::space::DiscreteMms;

/// Boundary layers excluded from Γ and Δ. A conductance reads both end
/// masses, so a node next to a half-cell boundary node is already skewed.
pub const FIRST_ORDER_COLLAR: usize = 2;
/// Boundary layers excluded from Γ-of-Γ quantities (Γ₂, Hessian).
pub const SECOND_ORDER_COLLAR: usize = 3;

#[derive(Debug, Clone)]
pub struct DirichletForm {
    space: DiscreteMms,
    conductance: Vec<Vec<(usize, f64)>>,
}

impl DirichletForm {
    /// Measure-weighted conductances
    /// `c_ij = (m_i + m_j) / (2 ℓ_ij²) · 2 dim / deg`, with `dim` and `deg`
    /// the largest local dimension and degree. On a uniform axis grid this is
    /// the five-point finite-volume Laplacian; on a conformally transformed
    /// grid it is the Cheeger form of `(X, e^w d, e^v m)`.
    pub fn new(space: DiscreteMms) -> Self {
        let scale = 2.0 * space.max_dim() as f64 / space.max_degree().max(1) as f64;
        let m = space.measure();
        let conductance =
            (0..space.node_count()).map(|i| space.neighbors(i).iter().map(|&(j, l)| (j, scale * 0.5 * (m[i] + m[j]) / (l * l))).collect()).collect();
        Self { space, conductance }
    }

    pub fn space(&self) -> &DiscreteMms {
        &self.space
    }

    pub fn node_count(&self) -> usize {
        self.space.node_count()
    }

    pub fn conductances(&self, i: usize) -> &[(usize, f64)] {
        &self.conductance[i]
    }

    pub fn interior(&self, hops: usize) -> Vec<bool> {
        self.space.interior_mask(hops)
    }

    /// Carré du champ `Γ(f, g)`.
    pub fn gamma(&self, f: &ScalarField, g: &ScalarField) -> ScalarField {
        let m = self.space.measure();
        ScalarField::new(
            (0..self.node_count())
                .map(|i| {
                    let s: f64 = self.conductance[i].iter().map(|&(j, c)| c * ((f[j] - f[i]) * (g[j] - g[i]))).sum();
                    0.5 * s / m[i]
                })
                .collect(),
        )
    }

    pub fn gamma_sq(&self, f: &ScalarField) -> ScalarField {
        self.gamma(f, f)
    }

    pub fn laplacian(&self, f: &ScalarField) -> ScalarField {
        let m = self.space.measure();
        ScalarField::new((0..self.node_count()).map(|i| self.conductance[i].iter().map(|&(j, c)| c * (f[j] - f[i])).sum::<f64>() / m[i]).collect())
    }

    /// `|Df| = √Γ(f)`.
    pub fn weak_gradient_norm(&self, f: &ScalarField) -> ScalarField {
        self.gamma_sq(f).map(f64::sqrt)
    }

    /// Full-node `½ ΔΓ(f) - Γ(f, Δf)`, boundary nodes included.
    pub fn gamma2_raw(&self, f: &ScalarField) -> ScalarField {
        let lap_gamma = self.laplacian(&self.gamma_sq(f));
        let gamma_lap = self.gamma(f, &self.laplacian(f));
        lap_gamma.zip_map(&gamma_lap, |a, b| 0.5 * a - b)
    }

    /// `Γ₂(f)` density on interior nodes.
    pub fn gamma2(&self, f: &ScalarField) -> MaskedField {
        MaskedField::new(self.gamma2_raw(f).into_values(), self.interior(SECOND_ORDER_COLLAR))
    }

    /// Both sides of integration by parts: `(Σ φ Δf m, -Σ Γ(φ,f) m)`.
    pub fn integration_by_parts(&self, phi: &ScalarField, f: &ScalarField) -> (f64, f64) {
        let m = self.space.measure();
        let lap = self.laplacian(f);
        let gam = self.gamma(phi, f);
        let lhs = (0..self.node_count()).map(|i| phi[i] * lap[i] * m[i]).sum();
        let rhs = -(0..self.node_count()).map(|i| gam[i] * m[i]).sum::<f64>();
        (lhs, rhs)
    }
}
