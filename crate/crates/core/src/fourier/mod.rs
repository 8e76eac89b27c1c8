//! Block Fourier analysis of block-periodic problems.
//!
//! [`transform`] has the one-dimensional `W` transform, dense block
//! diagonalization and the fast per-mode blocks. [`symbols`] builds the
//! two-dimensional per-mode symbols of `A`, the Gauss-Seidel smoother, `P`
//! and the two-grid matrix, and sums the Frobenius loss over modes.
//! [`oracle`] holds dense reference computations and [`check`] the
//! equivalence suite run by the command line.

pub mod check;
mod grad;
pub mod oracle;
pub mod symbols;
pub mod transform;

pub use grad::frobenius_loss_grad;
pub use symbols::{
    frobenius_loss, max_mode_spectral_radius, mode_symbols_2d, per_mode_frobenius, prolongation_symbol,
    stencil_symbol, write_mode_csv, FourierModeSet, ModeFrobenius, ModeSymbols,
};
pub use transform::{block_diagonalize_dense, band_mode_blocks, w_matrix, BandRows, CMatrix};

#[cfg(test)]
mod tests;
