//! Dense reference computations for the Fourier machinery.
//!
//! Everything here works on the full `n x n` periodic problem tiled from
//! the cores and never touches the `W` transform, so it can check the
//! per-mode symbols independently.

use nalgebra::DMatrix;

use super::symbols::{check_core, FourierModeSet};
use super::transform::{w_matrix, CMatrix};
use crate::error::{invalid, Error, Result};
use crate::multigrid::CycleConfig;
use crate::operator::{Stencil, StencilOperator};
use crate::problem::BoundaryKind;
use crate::prolong::ProlongationMap;

/// The periodic operator of side `n` whose stencils repeat `core`.
pub fn tile_operator(core: &StencilOperator, n: usize) -> Result<StencilOperator> {
    let c = core.side();
    if core.kind() != BoundaryKind::Periodic || n % c != 0 {
        return Err(invalid("tiling needs a periodic core whose side divides n"));
    }
    let stencils: Vec<Stencil> = (0..n * n).map(|i| *core.stencil((i / n) % c, (i % n) % c)).collect();
    StencilOperator::from_stencils(n, BoundaryKind::Periodic, stencils, None)
}

/// The prolongation on the tiled operator `a` whose columns repeat `pcore`.
pub fn tile_prolongation(pcore: &ProlongationMap, a: &StencilOperator) -> Result<ProlongationMap> {
    let cc = pcore.coarse_side();
    let ns = a.side() / 2;
    let cols: Vec<Stencil> = (0..ns * ns).map(|j| *pcore.col((j / ns) % cc * cc + (j % ns) % cc)).collect();
    ProlongationMap::from_col_stencils(a, cols)
}

/// Projector onto grid functions that repeat with period `k` on a periodic
/// grid of side `side`: the average over congruent positions.
pub fn zero_mode_projector(side: usize, k: usize) -> DMatrix<f64> {
    let b = (side / k).pow(2) as f64;
    DMatrix::from_fn(side * side, side * side, |u, v| {
        let (ur, uc, vr, vc) = (u / side, u % side, v / side, v % side);
        if ur % k == vr % k && uc % k == vc % k {
            1.0 / b
        } else {
            0.0
        }
    })
}

/// Dense two-grid matrix with the circulant smoother convention, with the
/// zero mode projected out on both sides:
/// `(I - Z) S C' S (I - Z)` where `C' = I - P (A_c + Z_c)^{-1} (I - Z_c) P^T A`.
pub fn deflated_two_grid(
    acore: &StencilOperator,
    pcore: &ProlongationMap,
    n: usize,
    cfg: &CycleConfig,
) -> Result<DMatrix<f64>> {
    let set = FourierModeSet::new(n, acore.side())?;
    check_core(acore, pcore, &set)?;
    let c = set.c();
    let a = tile_operator(acore, n)?;
    let p = tile_prolongation(pcore, &a)?;
    let ad = a.to_dense();
    let pd = p.to_dense();
    let ld = a.lower_part().to_dense();
    let dim = ad.nrows();
    let eye = DMatrix::<f64>::identity(dim, dim);
    let s = &eye
        - ld.lu()
            .solve(&ad)
            .ok_or_else(|| Error::SingularSolve("circulant smoother".into()))?;
    let z = zero_mode_projector(n, c);
    let zc = zero_mode_projector(n / 2, c / 2);
    let ac = pd.transpose() * &ad * &pd;
    let nc = ac.nrows();
    let rhs = (DMatrix::<f64>::identity(nc, nc) - &zc) * pd.transpose() * &ad;
    let corr = (ac + &zc)
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSolve("deflated coarse operator".into()))?;
    let cmat = &eye - &pd * corr;
    let mut m = cmat;
    for _ in 0..cfg.pre_sweeps {
        m = &m * &s;
    }
    for _ in 0..cfg.post_sweeps {
        m = &s * &m;
    }
    let defl = &eye - &z;
    Ok(&defl * m * &defl)
}

/// `||M||_F^2` of [`deflated_two_grid`].
pub fn dense_frobenius_loss(acore: &StencilOperator, pcore: &ProlongationMap, n: usize, cfg: &CycleConfig) -> Result<f64> {
    Ok(deflated_two_grid(acore, pcore, n, cfg)?.norm_squared())
}

/// Two-dimensional transform `W2[(ly, lx), (jy, jx)] = W[ly, jy] W[lx, jx]`
/// for a grid of side `side` and block side `k`.
pub fn w_matrix_2d(side: usize, k: usize) -> Result<CMatrix> {
    let w = w_matrix(side, k)?;
    Ok(CMatrix::from_fn(side * side, side * side, |l, j| {
        w[(l / side, j / side)] * w[(l % side, j % side)]
    }))
}

/// Indices of mode `(s1, s2)`'s block in the transformed basis.
pub fn mode_indices(side: usize, k: usize, mode: (usize, usize)) -> Vec<usize> {
    let mut out = Vec::with_capacity(k * k);
    for r in 0..k {
        for q in 0..k {
            out.push((r + k * mode.0) * side + (q + k * mode.1));
        }
    }
    out
}

/// `W_f* K W_c / b` for a real `fine x coarse` (or square) matrix.
pub fn transform_2d(kmat: &DMatrix<f64>, n: usize, c: usize) -> Result<CMatrix> {
    let wf = w_matrix_2d(n, c)?;
    let b = (n / c).pow(2) as f64;
    let kc = kmat.map(|v| num_complex::Complex64::new(v, 0.0));
    let wc = if kmat.ncols() == kmat.nrows() {
        wf.clone()
    } else {
        w_matrix_2d(n / 2, c / 2)?
    };
    Ok(wf.adjoint() * kc * wc / num_complex::Complex64::new(b, 0.0))
}

/// Mode block of a transformed matrix; `coarse_cols` selects the coarse
/// indexing for the columns.
pub fn extract_mode_block(t: &CMatrix, n: usize, c: usize, mode: (usize, usize), coarse_cols: bool) -> CMatrix {
    let rows = mode_indices(n, c, mode);
    let cols = if coarse_cols {
        mode_indices(n / 2, c / 2, mode)
    } else {
        rows.clone()
    };
    CMatrix::from_fn(rows.len(), cols.len(), |i, j| t[(rows[i], cols[j])])
}

/// Largest entry of `t` outside the mode blocks.
pub fn off_block_max(t: &CMatrix, n: usize, c: usize, coarse_cols: bool) -> f64 {
    let m = n / c;
    let (ck, cside) = if coarse_cols { (c / 2, n / 2) } else { (c, n) };
    let mode_of = |idx: usize, side: usize, k: usize| ((idx / side) / k, (idx % side) / k);
    let mut worst = 0.0f64;
    for i in 0..t.nrows() {
        for j in 0..t.ncols() {
            let (mi, mj) = (mode_of(i, n, c), mode_of(j, cside, ck));
            debug_assert!(mi.0 < m && mj.0 < m);
            if mi != mj {
                worst = worst.max(t[(i, j)].norm());
            }
        }
    }
    worst
}
