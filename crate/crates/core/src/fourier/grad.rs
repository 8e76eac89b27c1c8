//! Reverse-mode gradient of the Fourier loss with respect to the entries of
//! the prolongation core.
//!
//! Complex adjoints use `G = dL/dRe Z + i dL/dIm Z`, so `dL = Re tr(G* dZ)`.

use num_complex::Complex64;
use rayon::prelude::*;

use super::symbols::{assemble_mode, check_core, frob2, p_row, phase_of, FourierModeSet, TwoGridSymbol};
use super::transform::CMatrix;
use crate::error::Result;
use crate::multigrid::CycleConfig;
use crate::operator::{Stencil, StencilOperator, OFFSETS};
use crate::prolong::ProlongationMap;

/// Loss and `dL / d(pcore column stencil entries)`, one stencil per coarse
/// core point.
pub fn frobenius_loss_grad(
    acore: &StencilOperator,
    pcore: &ProlongationMap,
    n: usize,
    cfg: &CycleConfig,
) -> Result<(f64, Vec<Stencil>)> {
    let set = FourierModeSet::new(n, acore.side())?;
    check_core(acore, pcore, &set)?;
    let per_mode: Vec<(f64, Vec<Stencil>)> = set
        .modes()
        .into_par_iter()
        .map(|mode| {
            let t = assemble_mode(acore, pcore, mode, n, cfg, -1.0)?;
            let gx = adjoint_of_x(&t);
            Ok((frob2(&t.m), pull_back(pcore, &gx, mode, n)))
        })
        .collect::<Result<_>>()?;
    let mut loss = 0.0;
    let mut grad = vec![Stencil::ZERO; pcore.coarse_len()];
    for (l, g) in per_mode {
        loss += l;
        for (acc, gj) in grad.iter_mut().zip(&g) {
            for (dy, dx) in OFFSETS {
                acc.add(dy, dx, gj.get(dy, dx));
            }
        }
    }
    Ok((loss, grad))
}

/// Adjoint of `X = P(s)` for `L = ||S^{s2} (I - X B X* A) S^{s1}||_F^2`,
/// `B = (X* A X)^{-1}`.
fn adjoint_of_x(t: &TwoGridSymbol) -> CMatrix {
    let two = Complex64::new(2.0, 0.0);
    let g_m = &t.m * two;
    let g_c = t.s_post.adjoint() * g_m * t.s_pre.adjoint();
    // C = I - X (B R)
    let mut g_x = -(&g_c * t.br.adjoint());
    let g_br = -(t.x.adjoint() * &g_c);
    let g_b = &g_br * t.r.adjoint();
    let g_r = t.b.adjoint() * &g_br;
    // R = X* A
    g_x += &t.ahat * g_r.adjoint();
    // B = Ac^{-1}, Ac = X* A X
    let g_ac = -(t.b.adjoint() * g_b * t.b.adjoint());
    let ax = &t.ahat * &t.x;
    g_x += &ax * g_ac.adjoint();
    g_x += t.ahat.adjoint() * &t.x * &g_ac;
    g_x
}

/// Real gradient of the column entries from the adjoint of `P(s)`.
fn pull_back(pcore: &ProlongationMap, g_x: &CMatrix, mode: (usize, usize), n: usize) -> Vec<Stencil> {
    let c = pcore.fine_side();
    let cc = pcore.coarse_side();
    (0..cc * cc)
        .map(|j| {
            let (fr, fq) = (2 * (j / cc), 2 * (j % cc));
            let mut g = Stencil::ZERO;
            for (dy, dx) in OFFSETS {
                let row = p_row(c, fr, fq, dy, dx);
                let ph = phase_of(mode, dy, dx, n, 1.0);
                g.set(dy, dx, (g_x[(row, j)].conj() * ph).re);
            }
            g
        })
        .collect()
}
