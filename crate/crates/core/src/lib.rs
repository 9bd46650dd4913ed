//! Conformal transformations of discrete metric measure spaces.
//!
//! A space is a weighted graph with node masses. The pair `(w, v)` rescales
//! lengths by `e^w` and masses by `e^v`; this crate computes the resulting
//! calculus (Γ, Δ, Hessian, Γ₂, Ricci) both directly on the transformed space
//! and through closed-form transformation rules, and compares the two.

pub mod calculus;
pub mod curvature;
pub mod error;
pub mod field;
pub mod formulas;
pub mod fractal;
pub mod frame;
pub mod io;
pub mod oracle;
pub mod smooth;
pub mod space;
pub mod verify;

pub use calculus::DirichletForm;
pub use error::{Error, Result};
pub use field::{ConformalPair, MaskedField, ScalarField};
pub use formulas::RicciParams;
pub use frame::{hessian, hs_norm, trace, BilinearField, Geometry, LocalFrame, SymMatrix, VectorField};
pub use smooth::{FieldExpr, SmoothField};
pub use space::{
    build_grid, build_grid_space, build_line_space, conformal_transform, geodesic_distance, geodesic_distances, DiscreteMms, GridShape, Rect,
};
