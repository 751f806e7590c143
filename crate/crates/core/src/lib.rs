//! Operator-splitting finite element solver for the time-dependent radiative
//! transfer equation
//!
//! ```text
//! ∂u/∂t + s·∇u + σ_τ u − σ_s ∫ Φ(s, s′) u(s′) ds′ = f    in (0, T] × Ω × S²
//! ```
//!
//! on the unit cube Ω with homogeneous inflow data. Each backward Euler step
//! is split in two: an angular step (absorption and scattering, DG(0) on a
//! geodesic sphere mesh, one dense solve per spatial node) followed by a
//! transport step (SUPG-stabilized P1 on a tetrahedral mesh, one sparse solve
//! per discrete direction).
//!
//! Module map:
//!
//! * [`angular_mesh`]: spherical triangulation and DG(0) cells.
//! * [`spatial_mesh`]: tetrahedral mesh of the unit cube and inflow classification.
//! * [`scattering`]: phase functions, angular matrices, the angular system.
//! * [`transport_assembly`]: direction-independent matrix components and loads.
//! * [`linalg`]: CSR storage, ILU(0)/BiCGSTAB, dense LU.
//! * [`solver`]: the split time loop and a monolithic reference scheme.
//! * [`verification`]: manufactured solutions, error norms, convergence tables.
//! * [`config`]: run configuration and parameter validation.
//! * [`checks`]: the invariant suite behind `rtsplit check`.

// Index loops mirror the element formulas; negated comparisons reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod angular_mesh;
pub mod checks;
pub mod config;
mod error;
pub mod geometry;
pub mod linalg;
mod par;
pub mod quadrature;
pub mod scattering;
pub mod solver;
pub mod spatial_mesh;
pub mod transport_assembly;
pub mod verification;

pub use error::{Error, Result};
pub use geometry::Vec3;
