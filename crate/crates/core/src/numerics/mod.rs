//! Quadrature, spatial grids and interpolation used by the backward solver.

mod grid;
mod interp;
mod quadrature;

pub use grid::{build_grid, GridRule, SpatialGrid};
pub use interp::Interpolant;
pub use quadrature::{gauss_hermite, normal_moment, QuadratureRule, MAX_ORDER};
