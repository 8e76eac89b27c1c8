//! The `W` transform and block diagonalization of block-circulant matrices
//! in one dimension.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{invalid, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Off-diagonal block mass tolerated by [`block_diagonalize_dense`].
pub const OFF_BLOCK_TOL: f64 = 1e-10;

/// `e^{-i 2 pi t / n}` with `t` reduced modulo `n` first, so large exponents
/// keep full accuracy.
pub(crate) fn unit_phase(t: i64, n: usize, sign: f64) -> Complex64 {
    let r = t.rem_euclid(n as i64) as f64;
    Complex64::from_polar(1.0, sign * 2.0 * std::f64::consts::PI * r / n as f64)
}

fn check_block(n: usize, k: usize) -> Result<usize> {
    if k == 0 || n == 0 || n % k != 0 {
        return Err(invalid(format!("block size {k} does not divide {n}")));
    }
    Ok(n / k)
}

/// Unnormalized `n x n` transform for block size `k`:
/// `W[l, j] = delta(l mod k, j mod k) e^{-i 2 pi s l / n}` with `s = j / k`.
/// `W / sqrt(b)` is unitary, `b = n / k`.
pub fn w_matrix(n: usize, k: usize) -> Result<CMatrix> {
    check_block(n, k)?;
    Ok(CMatrix::from_fn(n, n, |l, j| {
        if l % k == j % k {
            unit_phase(((j / k) * l) as i64, n, -1.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

/// First `(row, col)` where `K` differs from its shift by `k` along the
/// diagonal, if any.
pub fn block_circulant_violation(kmat: &CMatrix, k: usize, tol: f64) -> Option<(usize, usize)> {
    let n = kmat.nrows();
    for l in 0..n {
        for j in 0..n {
            let shifted = kmat[((l + n - k) % n, (j + n - k) % n)];
            if (kmat[(l, j)] - shifted).norm() > tol {
                return Some((l, j));
            }
        }
    }
    None
}

/// `(1/b) W* K W`, the full transformed matrix.
pub fn transform_dense(kmat: &CMatrix, k: usize) -> Result<CMatrix> {
    let n = kmat.nrows();
    if kmat.ncols() != n {
        return Err(invalid("matrix must be square"));
    }
    let b = check_block(n, k)?;
    let w = w_matrix(n, k)?;
    Ok(w.adjoint() * kmat * w / Complex64::new(b as f64, 0.0))
}

/// Diagonal `k x k` blocks of `(1/b) W* K W` for block-circulant `K`, one per
/// mode `s = 0..b`.
pub fn block_diagonalize_dense(kmat: &CMatrix, k: usize) -> Result<Vec<CMatrix>> {
    let n = kmat.nrows();
    check_block(n, k)?;
    if let Some((l, j)) = block_circulant_violation(kmat, k, 1e-12) {
        return Err(invalid(format!("matrix is not block-circulant at ({l}, {j})")));
    }
    let t = transform_dense(kmat, k)?;
    let b = n / k;
    let mut worst = 0.0f64;
    for bi in 0..b {
        for bj in 0..b {
            if bi == bj {
                continue;
            }
            let blk = t.view((bi * k, bj * k), (k, k));
            worst = blk.iter().fold(worst, |acc, z| acc.max(z.norm()));
        }
    }
    if worst >= OFF_BLOCK_TOL {
        return Err(crate::Error::Internal(format!(
            "off-diagonal block entry {worst:.3e} after block diagonalization"
        )));
    }
    Ok((0..b).map(|s| t.view((s * k, s * k), (k, k)).into_owned()).collect())
}

/// Band data of an `n x n` block-circulant matrix with block size `k` that
/// is band-limited modulo `n`: row `l0 < k` holds `K[l0, l0 + m]` for
/// `m = -alpha..=beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandRows {
    pub n: usize,
    pub k: usize,
    pub alpha: usize,
    pub beta: usize,
    /// `rows[l0][m + alpha]`.
    pub rows: Vec<Vec<Complex64>>,
}

impl BandRows {
    pub fn new(n: usize, k: usize, alpha: usize, beta: usize, rows: Vec<Vec<Complex64>>) -> Result<Self> {
        check_block(n, k)?;
        if alpha + beta + 1 > k {
            return Err(invalid(format!(
                "band of width {} does not fit in blocks of size {k}",
                alpha + beta + 1
            )));
        }
        if rows.len() != k || rows.iter().any(|r| r.len() != alpha + beta + 1) {
            return Err(invalid("band rows have the wrong shape"));
        }
        Ok(BandRows {
            n,
            k,
            alpha,
            beta,
            rows,
        })
    }

    /// The full block-circulant matrix.
    pub fn to_dense(&self) -> CMatrix {
        let n = self.n;
        let mut m = CMatrix::zeros(n, n);
        for l in 0..n {
            let row = &self.rows[l % self.k];
            for (t, &v) in row.iter().enumerate() {
                let j = (l as i64 + t as i64 - self.alpha as i64).rem_euclid(n as i64) as usize;
                m[(l, j)] += v;
            }
        }
        m
    }
}

/// Per-mode blocks straight from the band data:
/// `Khat^(s)[l0, (l0 + m) mod k] = e^{-i 2 pi s m / n} K[l0, l0 + m]`.
pub fn band_mode_blocks(band: &BandRows) -> Vec<CMatrix> {
    band_mode_blocks_signed(band, -1.0)
}

pub(crate) fn band_mode_blocks_signed(band: &BandRows, sign: f64) -> Vec<CMatrix> {
    let (n, k) = (band.n, band.k);
    (0..n / k)
        .map(|s| {
            let mut blk = CMatrix::zeros(k, k);
            for (l0, row) in band.rows.iter().enumerate() {
                for (t, &v) in row.iter().enumerate() {
                    let m = t as i64 - band.alpha as i64;
                    let col = (l0 as i64 + m).rem_euclid(k as i64) as usize;
                    blk[(l0, col)] += unit_phase(s as i64 * m, n, sign) * v;
                }
            }
            blk
        })
        .collect()
}
