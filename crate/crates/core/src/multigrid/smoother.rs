use crate::error::{Error, Result};
use crate::operator::StencilOperator;

/// Lexicographic Gauss-Seidel: `sweeps` in-place passes over the active
/// vertices in row-major order, each vertex using the already-updated values
/// of its predecessors.
pub fn gauss_seidel(a: &StencilOperator, u: &[f64], f: &[f64], sweeps: usize) -> Result<Vec<f64>> {
    let mut out = u.to_vec();
    gauss_seidel_in_place(a, &mut out, f, sweeps)?;
    Ok(out)
}

pub fn gauss_seidel_in_place(a: &StencilOperator, u: &mut [f64], f: &[f64], sweeps: usize) -> Result<()> {
    a.check_len(u.len())?;
    a.check_len(f.len())?;
    let n = a.side();
    for _ in 0..sweeps {
        for r in 0..n {
            for c in 0..n {
                let idx = r * n + c;
                if !a.is_active(idx) {
                    continue;
                }
                let diag = a.stencils()[idx].center();
                if diag == 0.0 {
                    return Err(Error::DegenerateStencil {
                        at: (r, c),
                        reason: "zero diagonal in Gauss-Seidel".into(),
                    });
                }
                let res = f[idx] - a.row_dot(r, c, u);
                u[idx] += res / diag;
            }
        }
    }
    Ok(())
}
