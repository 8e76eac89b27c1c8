use crate::error::{Error, Result};
use crate::operator::{Stencil, StencilOperator, OFFSETS};
use crate::prolong::ProlongationMap;

/// Galerkin coarse operator `P^T A P`, again as a 3x3 stencil operator on the
/// coarse grid.
///
/// Each coarse column is formed locally: `P e_j` lives on the 3x3 fine window
/// around coarse point `j`, `A P e_j` on the 5x5 window, and only coarse
/// points at most one coarse step away overlap it. Values are accumulated
/// per grid index, so couplings that alias on small periodic grids add up
/// exactly as in the dense product.
pub fn galerkin(a: &StencilOperator, p: &ProlongationMap) -> Result<StencilOperator> {
    if p.fine_side() != a.side() || p.kind() != a.kind() {
        return Err(Error::DimensionMismatch {
            expected: a.side(),
            got: p.fine_side(),
        });
    }
    let geom = p.geometry();
    let cs = p.coarse_side();
    let fs = a.side();
    let mut coarse = vec![Stencil::ZERO; cs * cs];
    let mut pe = vec![0.0; a.len()];
    let mut ape = vec![0.0; a.len()];
    let mut window = Vec::with_capacity(25);
    let mut seen = Vec::with_capacity(9);

    for j in 0..cs * cs {
        if !p.coarse_is_active(j) {
            continue;
        }
        let (fr, fc) = geom.fine_of((j / cs, j % cs));
        for (dy, dx) in OFFSETS {
            if let Some(v) = p.fine_target(fr, fc, dy, dx) {
                pe[v] += p.col(j).get(dy, dx);
            }
        }
        window.clear();
        for qy in -2isize..=2 {
            for qx in -2isize..=2 {
                if let Some(v) = geom.fine_at(fr, fc, qy, qx) {
                    if a.is_active(v) && !window.contains(&v) {
                        window.push(v);
                    }
                }
            }
        }
        for &v in &window {
            ape[v] = a.row_dot(v / fs, v % fs, &pe);
        }
        // Row i = j + D of P^T (A P e_j) is coarse stencil entry of i at -D.
        seen.clear();
        for (dy, dx) in OFFSETS {
            let Some(i) = geom.coarse_at(fr as isize + 2 * dy, fc as isize + 2 * dx) else {
                continue;
            };
            if !p.coarse_is_active(i) || seen.contains(&i) {
                continue;
            }
            seen.push(i);
            let (ir, ic) = geom.fine_of((i / cs, i % cs));
            let mut acc = 0.0;
            for (ey, ex) in OFFSETS {
                if let Some(v) = p.fine_target(ir, ic, ey, ex) {
                    acc += p.col(i).get(ey, ex) * ape[v];
                }
            }
            coarse[i].add(-dy, -dx, acc);
        }
        for (dy, dx) in OFFSETS {
            if let Some(v) = p.fine_target(fr, fc, dy, dx) {
                pe[v] = 0.0;
            }
        }
        for &v in &window {
            ape[v] = 0.0;
        }
    }
    StencilOperator::from_stencils(cs, a.kind(), coarse, p.coarse_mask())
        .map_err(|e| Error::Internal(format!("Galerkin product left the 9-point pattern: {e}")))
}
