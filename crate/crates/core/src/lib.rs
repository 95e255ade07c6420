//! Linearly implicit finite-difference solvers for quasi-linear
//! partial differential-algebraic equations
//!
//! ```text
//! A u_t + B u_xx + C[u] u_x + D u = f(t, x),   x in (0, 1),
//! ```
//!
//! with constant `A`, `B`, `D` and a convection matrix linear in `u`. The
//! crate provides the system and grid types, the block-tridiagonal
//! discretization, the full and the split (fractional-step) time stepping
//! schemes, a numerical time-index check, stability diagnostics, and the
//! four-component plasma model used as the reference application.

pub mod discretization;
pub mod error;
pub mod format;
pub mod index;
pub mod linalg;
pub mod model;
pub mod plasma;
pub mod splitting;
pub mod stability;

pub use discretization::{
    assemble_g, assemble_qh, boundary_values, build_ctilde, build_p, build_ptilde,
    laplacian_spectrum, DiffScheme, Difference, DiscreteOperator, LaplacianSpectrum, Stencil,
};
pub use error::{Error, Result};
pub use linalg::{BandedLu, BlockTridiag};
pub use model::{
    check_compatibility, BoundaryEntry, BoundaryKind, BoundarySpec, Closure,
    CompatibilityReport, ConvectionTensor, DataClass, InitialSpec, PdaeSystem, Side,
    SourceTerm, SpaceGrid, StateField, TimeGrid, DEFAULT_COMPATIBILITY_TOL,
};
