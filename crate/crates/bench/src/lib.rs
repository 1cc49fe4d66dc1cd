//! Shared fixtures for the benchmarks.

use perlat::field::CovarianceModel;
use perlat::sim::{simulate, PerturbedLatticeSpec};
use perlat::{BoxWindow, PointPattern, SeedSpec};

/// One iid realization in the cube `[0, side]^3`.
pub fn iid_pattern(sigma: f64, side: f64, seed: u64) -> PointPattern {
    let spec = PerturbedLatticeSpec::new(
        CovarianceModel::iid(3, sigma).expect("valid sigma"),
        BoxWindow::cube(3, side).expect("valid window"),
        SeedSpec::new(seed, 0),
    );
    simulate(&spec).expect("simulation succeeds")
}

pub fn radius_grid(end: f64, step: f64) -> Vec<f64> {
    perlat::curve::uniform_grid(0.0, end, step).expect("valid grid")
}
