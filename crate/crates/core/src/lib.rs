//! Multigrid solvers for 2D variable-coefficient diffusion with
//! operator-dependent (Black-Box) and learned prolongation.
//!
//! The crate is organised bottom-up:
//!
//! * [`problem`] samples diffusion fields and assembles the bilinear
//!   finite-element 9-point stencils.
//! * [`operator`] holds the stencil operator type and its dense assembly.
//! * [`prolong`] builds prolongation maps with the bilinear sparsity pattern.
//! * [`multigrid`] has the Gauss-Seidel smoother, Galerkin coarsening,
//!   two-grid/V/W cycles and dense error-propagation oracles.
//! * [`fourier`] is the block Fourier machinery used to evaluate the
//!   two-grid Frobenius loss on block-periodic problems.
//! * [`train`] is the prolongation network, its reverse-mode gradient, Adam
//!   and the three-stage curriculum.
//! * [`experiments`] runs the convergence experiments and writes CSV output.

pub mod error;
pub mod experiments;
pub mod fourier;
pub mod multigrid;
pub mod operator;
pub mod problem;
pub mod prolong;
pub mod train;

pub use error::{Error, Result};
pub use multigrid::{CycleConfig, CycleKind, GridHierarchy};
pub use operator::{Stencil, StencilOperator};
pub use problem::{BoundaryKind, BoundarySpec, DiffusionField, ProblemDistribution};
pub use prolong::{Builder, ProlongationMap};
pub use train::{MlpModel, TrainConfig};

/// Seedable generator used everywhere randomness is needed.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate's generator from a seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
