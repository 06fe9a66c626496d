//! Small dense linear algebra: singular values, singular subspaces,
//! exterior powers and Grassmannian distances.

pub mod matrix;
pub mod subspace;
pub mod svd;
pub mod wedge;

pub use matrix::{dot, norm, Matrix};
pub use subspace::{grassmann_distance, kappa, Subspace};
pub use svd::{
    log2_singular_values, relative_gap, singular_values, svd, svd_subspace, ProductSvd, Svd,
    DEFAULT_GAP_TOL,
};
pub use wedge::{binomial, multi_indices, plucker, wedge, wedge_power, WedgeVector};
