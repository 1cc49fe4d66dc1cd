//! Gaussian perturbed lattices: simulation, exact second-order theory,
//! nonparametric estimation, minimum contrast fitting and hyperuniformity
//! diagnostics.

pub mod curve;
pub mod envelope;
pub mod error;
pub mod estimators;
pub mod field;
pub mod fit;
pub mod geometry;
pub mod ktheory;
pub mod neighbors;
pub mod quadrature;
pub mod seed;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
pub use geometry::{crop, dual_lattice, lattice_points_in_ball, BoxWindow, Lattice, PointPattern};
pub use seed::SeedSpec;
pub use special::{bessel_j, gauss_charfn_sq, jr_hat, jr_kernel, noncentral_chisq_cdf, KernelJr};
