//! Stokes flow in planar domains with small holes.
//!
//! Mixed P2/P1 finite elements, Lebesgue norms by quadrature, epsilon sweeps for
//! the uniform and blow-up estimates, and the restriction and Bogovskii operators
//! on periodically perforated squares.

pub mod bogovskii;
pub mod error;
pub mod experiments;
pub mod expr;
pub mod fem;
pub mod field;
pub mod geometry;
pub mod mesh;
pub mod meshgen;
pub mod norms;
pub mod perforated;
pub mod quadrature;
pub mod restriction;
pub mod sparse;

pub use error::{LabError, Result};
pub use expr::Expr;
pub use geometry::{DomainSpec, HoleKind, HoleShape, OuterShape};
pub use mesh::{EdgeTag, Point, RegionTag, TriMesh};
pub use fem::{Dirichlet, DivData, Source, StokesSolution, StokesSolver};
pub use field::{ScalarField, Tensor, TensorField, Vec2, VectorField};
pub use norms::{conjugate, sobolev_star, LebesgueExponent, NormReport};
