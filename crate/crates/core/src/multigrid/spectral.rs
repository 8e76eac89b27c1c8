//! Spectral radius by dense Schur decomposition or by power iteration.

use nalgebra::{DMatrix, Schur};
use rand_distr::{Distribution, StandardNormal};

use super::{CycleConfig, CycleKind, CycleSolver, GridHierarchy};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    pub rho: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct PowerOptions {
    /// Relative change of the estimate treated as converged.
    pub tol: f64,
    pub max_iter: usize,
    /// Consecutive iterations the change must stay below `tol`.
    pub patience: usize,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions {
            tol: 1e-8,
            max_iter: 10_000,
            patience: 5,
            seed: 0x5eed,
        }
    }
}

/// Largest eigenvalue modulus from the real Schur form.
pub fn spectral_radius_dense(m: &DMatrix<f64>) -> Option<f64> {
    assert!(m.is_square(), "spectral radius of a non-square matrix");
    if m.nrows() == 0 {
        return Some(0.0);
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 100 * m.nrows().max(10))?;
    Some(
        schur
            .complex_eigenvalues()
            .iter()
            .fold(0.0f64, |acc, z| acc.max(z.norm())),
    )
}

/// Power iteration with a two-term extrapolation.
///
/// Each step fits `M^2 x ~ a M x + b x` in the least-squares sense; the roots
/// of `t^2 - a t - b` recover a dominant real eigenvalue, a `+-` pair, or a
/// complex-conjugate pair alike. A vanishing iterate (nilpotent part)
/// returns 0.
pub fn spectral_radius_power<F>(mut apply: F, dim: usize, opts: PowerOptions) -> SpectralEstimate
where
    F: FnMut(&[f64], &mut [f64]),
{
    if dim == 0 {
        return SpectralEstimate {
            rho: 0.0,
            converged: true,
            iterations: 0,
        };
    }
    let mut rng = crate::rng_from_seed(opts.seed);
    let mut x: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut y = vec![0.0; dim];
    let mut z = vec![0.0; dim];
    normalize(&mut x);
    apply(&x, &mut y);

    let mut prev = f64::NAN;
    let mut calm = 0;
    let mut rho = 0.0;
    for it in 1..=opts.max_iter {
        let ny = norm(&y);
        if ny == 0.0 || !ny.is_finite() {
            return SpectralEstimate {
                rho: if ny == 0.0 { 0.0 } else { f64::NAN },
                converged: ny == 0.0,
                iterations: it,
            };
        }
        apply(&y, &mut z);
        rho = two_term_estimate(&x, &y, &z);
        if (rho - prev).abs() <= opts.tol * rho.max(f64::MIN_POSITIVE) {
            calm += 1;
            if calm >= opts.patience {
                return SpectralEstimate {
                    rho,
                    converged: true,
                    iterations: it,
                };
            }
        } else {
            calm = 0;
        }
        prev = rho;
        // Advance: x <- y / |y|, y <- z / |y|.
        let inv = 1.0 / ny;
        for k in 0..dim {
            x[k] = y[k] * inv;
            y[k] = z[k] * inv;
        }
    }
    SpectralEstimate {
        rho,
        converged: false,
        iterations: opts.max_iter,
    }
}

fn two_term_estimate(x: &[f64], y: &[f64], z: &[f64]) -> f64 {
    let (xx, xy, yy) = (dot(x, x), dot(x, y), dot(y, y));
    let (zx, zy) = (dot(z, x), dot(z, y));
    let det = yy * xx - xy * xy;
    if det <= 1e-12 * yy * xx {
        // y is parallel to x: single real dominant eigenvalue.
        return (xy / xx).abs().max((zy / yy).abs());
    }
    let a = (zy * xx - zx * xy) / det;
    let b = (yy * zx - xy * zy) / det;
    let disc = a * a + 4.0 * b;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        ((a + sq) / 2.0).abs().max(((a - sq) / 2.0).abs())
    } else {
        (-b).sqrt()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: &mut [f64]) {
    let n = norm(a);
    a.iter_mut().for_each(|v| *v /= n);
}

/// Spectral radius of a dense matrix: Schur decomposition, falling back to
/// power iteration if it does not converge.
pub fn spectral_radius(m: &DMatrix<f64>) -> SpectralEstimate {
    if let Some(rho) = spectral_radius_dense(m) {
        return SpectralEstimate {
            rho,
            converged: true,
            iterations: 0,
        };
    }
    spectral_radius_power(
        |x, y| {
            let v = m * nalgebra::DVector::from_column_slice(x);
            y.copy_from_slice(v.as_slice());
        },
        m.nrows(),
        PowerOptions::default(),
    )
}

/// `rho(M)` of the two-grid cycle on the finest level of `h`, with `M`
/// applied matrix-free (one homogeneous two-grid cycle per application).
pub fn two_grid_spectral_radius(h: &GridHierarchy, cfg: &CycleConfig, opts: PowerOptions) -> Result<SpectralEstimate> {
    let cfg = CycleConfig {
        kind: CycleKind::TwoGrid,
        ..*cfg
    };
    let solver = CycleSolver::new(h, &cfg)?;
    let a = h.operator(0);
    let active = a.active_indices();
    let zero = vec![0.0; a.len()];
    let mut full = vec![0.0; a.len()];
    let est = spectral_radius_power(
        |x, y| {
            for (k, &i) in active.iter().enumerate() {
                full[i] = x[k];
            }
            solver
                .cycle(&mut full, &zero)
                .expect("cycle on validated hierarchy");
            for (k, &i) in active.iter().enumerate() {
                y[k] = full[i];
            }
        },
        active.len(),
        opts,
    );
    Ok(est)
}
