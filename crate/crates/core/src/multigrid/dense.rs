//! Dense reference constructions of `S`, `C` and `M`.

use nalgebra::{DMatrix, DVector, LU};

use super::CycleConfig;
use crate::error::{Error, Result};
use crate::operator::StencilOperator;
use crate::prolong::ProlongationMap;

/// Largest unknown count for which dense matrices are formed by default.
pub const DEFAULT_DENSE_CAP: usize = 4096;

/// Pivot ratio below which an LU factorization is treated as singular.
const SINGULAR_PIVOT_RATIO: f64 = 1e-13;

/// LU factorization with an explicit singularity check.
#[derive(Debug, Clone)]
pub struct DenseLu {
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl DenseLu {
    pub fn new(m: DMatrix<f64>, what: &str) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::SingularSolve(format!("{what} is empty")));
        }
        let lu = m.lu();
        let diag = lu.u().diagonal();
        let max = diag.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let min = diag.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
        if !(max > 0.0) || !min.is_finite() || min <= SINGULAR_PIVOT_RATIO * max {
            return Err(Error::SingularSolve(format!(
                "{what} has pivot ratio {:.3e}",
                if max > 0.0 { min / max } else { 0.0 }
            )));
        }
        Ok(DenseLu { lu })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.lu.solve(b).expect("checked nonsingular")
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.lu.solve(b).expect("checked nonsingular")
    }

    pub fn dim(&self) -> usize {
        self.lu.l().nrows()
    }
}

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        return Err(Error::DenseCapExceeded { size: n, cap });
    }
    Ok(())
}

/// Gauss-Seidel error propagation `S = I - L^{-1} A` with `L` the lower
/// triangle (diagonal included) of the dense matrix in lexicographic order.
pub fn dense_smoother(a: &StencilOperator, cap: usize) -> Result<DMatrix<f64>> {
    check_cap(a.active_count(), cap)?;
    let ad = a.to_dense();
    Ok(smoother_from_dense(&ad))
}

pub(crate) fn smoother_from_dense(ad: &DMatrix<f64>) -> DMatrix<f64> {
    let n = ad.nrows();
    let l = ad.lower_triangle();
    let linv_a = l
        .solve_lower_triangular(ad)
        .expect("Gauss-Seidel needs a nonzero diagonal");
    DMatrix::identity(n, n) - linv_a
}

/// Coarse-grid correction `C = I - P (P^T A P)^{-1} P^T A`.
pub fn dense_coarse_correction(a: &StencilOperator, p: &ProlongationMap, cap: usize) -> Result<DMatrix<f64>> {
    check_cap(a.active_count(), cap)?;
    let ad = a.to_dense();
    let pd = p.to_dense();
    coarse_correction_from_dense(&ad, &pd)
}

pub(crate) fn coarse_correction_from_dense(ad: &DMatrix<f64>, pd: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = ad.nrows();
    let pta = pd.transpose() * ad;
    let ac = &pta * pd;
    let lu = DenseLu::new(ac, "P^T A P")?;
    Ok(DMatrix::identity(n, n) - pd * lu.solve_mat(&pta))
}

/// Two-grid error propagation `M = S^{s2} C S^{s1}` formed densely.
pub fn dense_error_propagation(
    a: &StencilOperator,
    p: &ProlongationMap,
    cfg: &CycleConfig,
    cap: usize,
) -> Result<DMatrix<f64>> {
    check_cap(a.active_count(), cap)?;
    let ad = a.to_dense();
    let pd = p.to_dense();
    let c = coarse_correction_from_dense(&ad, &pd)?;
    let s = smoother_from_dense(&ad);
    let mut m = c;
    for _ in 0..cfg.pre_sweeps {
        m = &m * &s;
    }
    for _ in 0..cfg.post_sweeps {
        m = &s * &m;
    }
    Ok(m)
}
