//! Dense-versus-fast equivalence suite for the Fourier machinery.

use num_complex::Complex64;
use serde::Serialize;

use super::oracle::{dense_frobenius_loss, deflated_two_grid, extract_mode_block, off_block_max, tile_operator, tile_prolongation, transform_2d};
use super::symbols::{max_mode_spectral_radius_signed, per_mode_frobenius_signed, prolongation_symbol_signed, stencil_symbol_signed, FourierModeSet};
use super::transform::{block_diagonalize_dense, band_mode_blocks_signed, transform_dense, w_matrix, BandRows, CMatrix};
use crate::error::Result;
use crate::multigrid::{spectral_radius_dense, CycleConfig};
use crate::operator::StencilOperator;
use crate::problem::{discretize, sample_field, BoundarySpec, ProblemDistribution};
use crate::prolong::{build_prolongation, Builder, ProlongationMap};

#[derive(Debug, Clone, Copy)]
pub struct CheckOptions {
    /// Seeds for the loss equivalence check.
    pub loss_seeds: u64,
    pub seed: u64,
    /// Conjugate the phases of the fast paths (negative control).
    pub corrupt_phase: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            loss_seeds: 20,
            seed: 0,
            corrupt_phase: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub config: String,
    pub deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub results: Vec<CheckResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn max_deviation(&self) -> f64 {
        self.results.iter().fold(0.0, |a, r| a.max(r.deviation))
    }

    fn push(&mut self, name: &str, config: String, deviation: f64, tolerance: f64) {
        self.results.push(CheckResult {
            name: name.into(),
            config,
            deviation,
            tolerance,
            // NaN deviations fail.
            passed: deviation < tolerance,
        });
    }
}

fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).norm()))
}

fn random_c<R: rand::Rng>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

/// Random block-circulant matrix with block size `k` (no band limit).
pub fn random_block_circulant<R: rand::Rng>(n: usize, k: usize, rng: &mut R) -> CMatrix {
    let gen: Vec<Vec<Complex64>> = (0..k).map(|_| (0..n).map(|_| random_c(rng)).collect()).collect();
    CMatrix::from_fn(n, n, |l, j| gen[l % k][(j + n - l) % n])
}

/// Random band data with `alpha = beta = 1`.
pub fn random_band<R: rand::Rng>(n: usize, k: usize, rng: &mut R) -> Result<BandRows> {
    let rows = (0..k).map(|_| (0..3).map(|_| random_c(rng)).collect()).collect();
    BandRows::new(n, k, 1, 1, rows)
}

/// A log-normal periodic core of side `c` with its Black-Box or bilinear
/// prolongation core.
pub fn random_core(c: usize, seed: u64, builder: Builder<'_>) -> Result<(StencilOperator, ProlongationMap)> {
    let field = sample_field(&ProblemDistribution::default(), c, seed)?;
    let a = discretize(&field, &BoundarySpec::periodic())?;
    let p = build_prolongation(&a, builder)?;
    Ok((a, p))
}

pub fn run_suite(opts: &CheckOptions) -> Result<CheckReport> {
    let sign = if opts.corrupt_phase { 1.0 } else { -1.0 };
    let mut rng = crate::rng_from_seed(opts.seed);
    let mut report = CheckReport { results: Vec::new() };

    for (n, k) in [(12, 3), (16, 4)] {
        let w = w_matrix(n, k)?;
        let b = (n / k) as f64;
        let gram = w.adjoint() * &w / Complex64::new(b, 0.0);
        let dev = max_abs_diff(&gram, &CMatrix::identity(n, n));
        report.push("unitarity", format!("n={n} k={k}"), dev, 1e-12);

        let kmat = random_block_circulant(n, k, &mut rng);
        let t = transform_dense(&kmat, k)?;
        let mut off = 0.0f64;
        for bi in 0..n / k {
            for bj in 0..n / k {
                if bi != bj {
                    off = t.view((bi * k, bj * k), (k, k)).iter().fold(off, |a, z| a.max(z.norm()));
                }
            }
        }
        report.push("block-diagonalization", format!("n={n} k={k}"), off, 1e-10);
    }

    for (n, k) in [(8, 4), (12, 3), (16, 4)] {
        let band = random_band(n, k, &mut rng)?;
        let dense = block_diagonalize_dense(&band.to_dense(), k)?;
        let fast = band_mode_blocks_signed(&band, sign);
        let dev = dense.iter().zip(&fast).fold(0.0f64, |a, (x, y)| a.max(max_abs_diff(x, y)));
        report.push("fast-blocks-1d", format!("n={n} k={k}"), dev, 1e-10);
    }

    let cfg = CycleConfig::default();
    for (n, c) in [(8, 4), (16, 4)] {
        let (acore, pcore) = random_core(c, opts.seed.wrapping_add(n as u64), Builder::BlackBox)?;
        let a = tile_operator(&acore, n)?;
        let p = tile_prolongation(&pcore, &a)?;
        let ta = transform_2d(&a.to_dense(), n, c)?;
        let tl = transform_2d(&a.lower_part().to_dense(), n, c)?;
        let tp = transform_2d(&p.to_dense(), n, c)?;
        let mut dev = off_block_max(&ta, n, c, false)
            .max(off_block_max(&tl, n, c, false))
            .max(off_block_max(&tp, n, c, true));
        for mode in FourierModeSet::new(n, c)?.all_modes() {
            dev = dev
                .max(max_abs_diff(&extract_mode_block(&ta, n, c, mode, false), &stencil_symbol_signed(&acore, mode, n, sign)))
                .max(max_abs_diff(
                    &extract_mode_block(&tl, n, c, mode, false),
                    &stencil_symbol_signed(&acore.lower_part(), mode, n, sign),
                ))
                .max(max_abs_diff(
                    &extract_mode_block(&tp, n, c, mode, true),
                    &prolongation_symbol_signed(&pcore, mode, n, sign),
                ));
        }
        report.push("fast-blocks-2d", format!("n={n} c={c}"), dev, 1e-10);
    }

    let (n, c) = (8, 4);
    let mut worst_loss = 0.0f64;
    let mut worst_rho = 0.0f64;
    for k in 0..opts.loss_seeds {
        let seed = opts.seed.wrapping_mul(1000).wrapping_add(k);
        let builder = if k % 2 == 0 { Builder::BlackBox } else { Builder::Bilinear };
        let (acore, pcore) = random_core(c, seed, builder)?;
        let fast: f64 = per_mode_frobenius_signed(&acore, &pcore, n, &cfg, sign)?
            .iter()
            .map(|m| m.frob2)
            .sum();
        let dense = dense_frobenius_loss(&acore, &pcore, n, &cfg)?;
        worst_loss = worst_loss.max((fast - dense).abs() / dense.abs().max(f64::MIN_POSITIVE));
        if k < 5 {
            let rho_fast = max_mode_spectral_radius_signed(&acore, &pcore, n, &cfg, sign)?;
            let rho_dense = spectral_radius_dense(&deflated_two_grid(&acore, &pcore, n, &cfg)?).unwrap_or(f64::NAN);
            worst_rho = worst_rho.max((rho_fast - rho_dense).abs());
        }
    }
    report.push("loss-equivalence", format!("n={n} c={c} seeds={}", opts.loss_seeds), worst_loss, 1e-6);
    if opts.loss_seeds > 0 {
        report.push("spectral-consistency", format!("n={n} c={c}"), worst_rho, 1e-6);
    }
    Ok(report)
}
