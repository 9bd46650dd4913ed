//! Lower Ricci bounds for a transformed space.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{ConformalPair, MaskedField, ScalarField};
use crate::formulas::{ricci_correction, ricci_n, RicciParams};
use crate::frame::{Geometry, SymMatrix};
use crate::smooth::FieldExpr;

/// Random smooth fields added to the default probe family.
pub const DEFAULT_RANDOM_PROBES: usize = 8;

/// Probes with `Γ(f)` at or below this value are skipped at a node.
const MIN_PROBE_ENERGY: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct CurvatureBound {
    pub k_prime: f64,
    /// Node attaining the infimum.
    pub node: usize,
    #[serde(skip)]
    pub per_node: MaskedField,
}

fn infimum(per_node: MaskedField) -> Result<CurvatureBound> {
    let (node, k_prime) = per_node.min_valid().ok_or(Error::EmptyInterior)?;
    Ok(CurvatureBound { k_prime, node, per_node })
}

/// `K' = inf_x e^{-2w}[K - Δw - (N-2)Γ(w) - (N-2)λ]` over interior nodes, where
/// `λ` is the extreme eigenvalue of the frame matrix of `H_w - ∇w ⊗ ∇w`
/// (largest for `N ≥ 2`, smallest otherwise). This is the pointwise supremum
/// of the Rayleigh quotient `(H_w(∇f,∇f) - Γ(w,f)²)/Γ(f)` over `∇f`.
pub fn curvature_bound(geo: &Geometry, w: &ScalarField, n: f64, k: f64) -> Result<CurvatureBound> {
    RicciParams::new(n, k).validate(geo.space())?;
    w.check_len(geo.node_count())?;
    let form = geo.form();
    let hw = geo.hessian(w);
    let gw = geo.gradient(w);
    let lap = form.laplacian(w);
    let gam = form.gamma_sq(w);
    let mask: Vec<bool> = (0..w.len()).map(|i| hw.get(i).is_some() && gw.get(i).is_some()).collect();
    let per_node = MaskedField::from_fn(mask, |i| {
        let h = hw.get(i).unwrap();
        let wa = gw.get(i).unwrap();
        let m = SymMatrix::from_fn(h.dim(), |a, b| h.get(a, b) - wa[a] * wa[b]);
        let lambda = if n >= 2.0 { m.max_eigenvalue() } else { m.min_eigenvalue() };
        (-2.0 * w[i]).exp() * (k - lap[i] - (n - 2.0) * gam[i] - (n - 2.0) * lambda)
    });
    infimum(per_node)
}

#[derive(Debug, Clone, Serialize)]
pub struct GeneralBound {
    pub k_prime: f64,
    pub node: usize,
    /// Index of the probe attaining the infimum at `node`.
    pub probe: usize,
    pub probes_used: usize,
    /// Always true: the value is an infimum over the supplied probes only.
    pub probe_based: bool,
    #[serde(skip)]
    pub per_node: MaskedField,
}

/// `K' = inf_x e^{-2w}[K + min_f Corr_f / Γ(f)]`, where `Corr_f` is the
/// difference `e^{4w-v} Ricci'_{N'}(∇'f,∇'f) - Ricci_{N'}(∇f,∇f)` as a
/// density, minimised over the probe family at every node.
pub fn curvature_bound_general(geo: &Geometry, pair: &ConformalPair, n_prime: f64, k: f64, probes: &[ScalarField]) -> Result<GeneralBound> {
    if probes.is_empty() {
        return Err(Error::EmptyProbeSet);
    }
    let dim_max = geo.space().max_dim();
    if !(n_prime > dim_max as f64) {
        return Err(Error::InvalidParameter(format!("N' = {n_prime} must exceed the largest local dimension {dim_max}")));
    }
    let params = RicciParams::new(n_prime, k);
    let n = geo.node_count();
    let mut best = vec![(f64::INFINITY, usize::MAX); n];
    for (p, f) in probes.iter().enumerate() {
        let corr = ricci_correction(geo, pair, &params, f)?.correction;
        let gf = geo.form().gamma_sq(f);
        for (i, c) in corr.iter_valid() {
            if gf[i] > MIN_PROBE_ENERGY {
                let q = c / gf[i];
                if q < best[i].0 {
                    best[i] = (q, p);
                }
            }
        }
    }
    let mask: Vec<bool> = best.iter().map(|b| b.1 != usize::MAX).collect();
    let per_node = MaskedField::from_fn(mask, |i| (-2.0 * pair.w[i]).exp() * (k + best[i].0));
    let (node, k_prime) = per_node.min_valid().ok_or(Error::EmptyInterior)?;
    Ok(GeneralBound { k_prime, node, probe: best[node].1, probes_used: probes.len(), probe_based: true, per_node })
}

/// Coordinate functions, their pairwise products, and `random` seeded
/// smooth fields, sampled on the space.
pub fn default_probes(geo: &Geometry, seed: u64, random: usize) -> Result<Vec<ScalarField>> {
    let space = geo.space();
    let d = space.coord_dim();
    let mut probes = Vec::new();
    for k in 0..d {
        probes.push(space.coordinate_field(k).ok_or_else(|| Error::InvalidSpace("probes need coordinates".into()))?);
    }
    for k in 0..d {
        for l in k..d {
            probes.push(space.sample_fn(|p| p[k] * p[l])?);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random {
        probes.push(space.sample(&FieldExpr::random_smooth(&mut rng, d, 4))?);
    }
    Ok(probes)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BochnerReport {
    /// `min (Ricci_N - K Γ(f))`.
    pub ricci_margin: f64,
    /// `min (Γ₂ - (Δf)²/N - Ricci_N)`.
    pub bochner_margin: f64,
    /// `max(|Γ₂|, |H_f|², (Δf)²/N)` over the evaluated nodes.
    pub scale: f64,
    pub nodes: usize,
}

impl BochnerReport {
    /// Both margins at least `-rel_tol · scale`.
    pub fn passes(&self, rel_tol: f64) -> bool {
        let floor = -rel_tol * self.scale;
        self.ricci_margin >= floor && self.bochner_margin >= floor
    }
}

pub fn ricci_lower_bound_check(geo: &Geometry, params: &RicciParams, f: &ScalarField) -> Result<BochnerReport> {
    let ric = ricci_n(geo, params, f)?;
    let form = geo.form();
    let g2 = form.gamma2(f);
    let gf = form.gamma_sq(f);
    let lap = form.laplacian(f);
    let h = geo.hessian(f);
    let mut report = BochnerReport { ricci_margin: f64::INFINITY, bochner_margin: f64::INFINITY, scale: 0.0, nodes: 0 };
    for (i, r) in ric.iter_valid() {
        let g = g2.values()[i];
        let l2n = lap[i] * lap[i] / params.n_prime;
        report.ricci_margin = report.ricci_margin.min(r - params.k * gf[i]);
        report.bochner_margin = report.bochner_margin.min(g - l2n - r);
        report.scale = report.scale.max(g.abs()).max(h.get(i).unwrap().hs_sq()).max(l2n);
        report.nodes += 1;
    }
    if report.nodes == 0 {
        return Err(Error::EmptyInterior);
    }
    Ok(report)
}
