//! Smoothing, Galerkin coarsening, multigrid cycles and dense oracles.

mod cycle;
mod dense;
mod galerkin;
mod smoother;
mod spectral;

pub use cycle::{
    asymptotic_factor, asymptotic_factor_from, solve_cycle, AsymptoticRun, CycleConfig, CycleKind,
    CycleSolver, GridHierarchy,
};
pub use dense::{
    dense_coarse_correction, dense_error_propagation, dense_smoother, DenseLu, DEFAULT_DENSE_CAP,
};
pub use galerkin::galerkin;
pub use smoother::{gauss_seidel, gauss_seidel_in_place};
pub use spectral::{
    spectral_radius, spectral_radius_dense, spectral_radius_power, two_grid_spectral_radius,
    PowerOptions, SpectralEstimate,
};
