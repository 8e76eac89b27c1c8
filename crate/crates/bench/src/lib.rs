//! Fixtures shared by the kernel benchmarks.

use learnmg::fourier::check::random_core;
use learnmg::problem::{discretize, sample_field};
use learnmg::{
    BoundarySpec, Builder, CycleConfig, GridHierarchy, MlpModel, ProblemDistribution, ProlongationMap, Result,
    StencilOperator,
};

/// Dirichlet operator on a `grid`-cell square with lognormal coefficients.
pub fn dirichlet_operator(grid: usize, seed: u64) -> Result<StencilOperator> {
    let field = sample_field(&ProblemDistribution::default(), grid, seed)?;
    discretize(&field, &BoundarySpec::dirichlet())
}

/// A Dirichlet operator together with its Black-Box prolongation.
pub fn blackbox_pair(grid: usize, seed: u64) -> Result<(StencilOperator, ProlongationMap)> {
    let a = dirichlet_operator(grid, seed)?;
    let p = learnmg::prolong::build_prolongation(&a, Builder::BlackBox)?;
    Ok((a, p))
}

/// Full Black-Box hierarchy for `cfg`.
pub fn hierarchy(grid: usize, seed: u64, cfg: &CycleConfig) -> Result<GridHierarchy> {
    GridHierarchy::for_config(dirichlet_operator(grid, seed)?, Builder::BlackBox, cfg)
}

/// Periodic `c x c` core and its bilinear prolongation.
pub fn periodic_core(c: usize, seed: u64) -> Result<(StencilOperator, ProlongationMap)> {
    random_core(c, seed, Builder::Bilinear)
}

/// Randomly initialised network of the default shape.
pub fn default_model(seed: u64) -> Result<MlpModel> {
    MlpModel::new(8, 64, seed)
}

/// Deterministic right-hand side of length `n`.
pub fn ramp(n: usize) -> Vec<f64> {
    (0..n).map(|i| ((i * 7919) % 101) as f64 / 101.0 - 0.5).collect()
}
