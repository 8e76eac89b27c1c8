//! Per-mode Fourier symbols of the two-grid cycle on block-periodic
//! problems.
//!
//! The fine grid has `n x n` vertices tiled by `c x c` blocks; vertex `(r, q)`
//! of a block has local index `r * c + q`. Mode `(s1, s2)` pairs `s1` with
//! the row direction and `s2` with the column direction. A coupling from a
//! vertex to the neighbour at unwrapped displacement `(dy, dx)` picks up the
//! phase `e^{-i 2 pi (s1 dy + s2 dx) / n}`: the fast band blocks applied once
//! per dimension.

use std::io::Write;

use nalgebra::Dyn;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::transform::{unit_phase, CMatrix};
use crate::error::{invalid, Error, Result};
use crate::multigrid::CycleConfig;
use crate::operator::{StencilOperator, OFFSETS};
use crate::problem::BoundaryKind;
use crate::prolong::ProlongationMap;

/// Pivot ratio below which a per-mode system counts as singular.
pub const MODE_SINGULAR_RATIO: f64 = 1e-12;

/// Modes `(s1, s2)`, `s_i in 0..n/c`, with an exclusion list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FourierModeSet {
    n: usize,
    c: usize,
    excluded: Vec<(usize, usize)>,
}

impl FourierModeSet {
    /// Mode set for fine side `n` and block side `c`, excluding `(0, 0)`.
    pub fn new(n: usize, c: usize) -> Result<Self> {
        if c < 4 || c % 2 != 0 {
            return Err(invalid(format!("block side must be even and >= 4, got {c}")));
        }
        if n % c != 0 {
            return Err(invalid(format!("block side {c} does not divide {n}")));
        }
        Ok(FourierModeSet {
            n,
            c,
            excluded: vec![(0, 0)],
        })
    }

    pub fn with_excluded(mut self, excluded: Vec<(usize, usize)>) -> Self {
        self.excluded = excluded;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn c(&self) -> usize {
        self.c
    }

    /// Number of blocks `b = (n / c)^2`.
    pub fn blocks(&self) -> usize {
        (self.n / self.c).pow(2)
    }

    pub fn excluded(&self) -> &[(usize, usize)] {
        &self.excluded
    }

    pub fn all_modes(&self) -> Vec<(usize, usize)> {
        let m = self.n / self.c;
        (0..m).flat_map(|s1| (0..m).map(move |s2| (s1, s2))).collect()
    }

    /// Non-excluded modes in row-major order.
    pub fn modes(&self) -> Vec<(usize, usize)> {
        self.all_modes()
            .into_iter()
            .filter(|m| !self.excluded.contains(m))
            .collect()
    }
}

/// Symbols of one mode.
#[derive(Debug, Clone)]
pub struct ModeSymbols {
    pub mode: (usize, usize),
    pub ahat: CMatrix,
    /// Symbol of the lexicographically lower stencil part.
    pub lhat: CMatrix,
    pub shat: CMatrix,
    pub phat: CMatrix,
    pub mhat: CMatrix,
}

/// Checks that `acore` and `pcore` describe one periodic `c x c` block.
pub(crate) fn check_core(acore: &StencilOperator, pcore: &ProlongationMap, set: &FourierModeSet) -> Result<()> {
    if acore.kind() != BoundaryKind::Periodic || pcore.kind() != BoundaryKind::Periodic {
        return Err(invalid("Fourier analysis needs periodic cores"));
    }
    if acore.side() != set.c() || pcore.fine_side() != set.c() {
        return Err(invalid(format!(
            "core sides ({}, {}) do not match block side {}",
            acore.side(),
            pcore.fine_side(),
            set.c()
        )));
    }
    Ok(())
}

pub(crate) fn phase_of(mode: (usize, usize), dy: isize, dx: isize, n: usize, sign: f64) -> Complex64 {
    unit_phase(mode.0 as i64 * dy as i64 + mode.1 as i64 * dx as i64, n, sign)
}

/// Symbol of a periodic stencil core: `c^2 x c^2`.
pub fn stencil_symbol(core: &StencilOperator, mode: (usize, usize), n: usize) -> CMatrix {
    stencil_symbol_signed(core, mode, n, -1.0)
}

pub(crate) fn stencil_symbol_signed(core: &StencilOperator, mode: (usize, usize), n: usize, sign: f64) -> CMatrix {
    let c = core.side();
    let mut m = CMatrix::zeros(c * c, c * c);
    for r in 0..c {
        for q in 0..c {
            let s = core.stencil(r, q);
            for (dy, dx) in OFFSETS {
                let v = s.get(dy, dx);
                if v == 0.0 {
                    continue;
                }
                let col = core.neighbor(r, q, dy, dx).expect("periodic neighbour");
                m[(r * c + q, col)] += phase_of(mode, dy, dx, n, sign) * v;
            }
        }
    }
    m
}

/// Symbol of `P`: `c^2 x (c/2)^2`, the mode block of `W_f* P W_c / b`.
pub fn prolongation_symbol(pcore: &ProlongationMap, mode: (usize, usize), n: usize) -> CMatrix {
    prolongation_symbol_signed(pcore, mode, n, -1.0)
}

pub(crate) fn prolongation_symbol_signed(pcore: &ProlongationMap, mode: (usize, usize), n: usize, sign: f64) -> CMatrix {
    let c = pcore.fine_side();
    let cc = pcore.coarse_side();
    let mut m = CMatrix::zeros(c * c, cc * cc);
    for j in 0..cc * cc {
        let (fr, fq) = (2 * (j / cc), 2 * (j % cc));
        let col = pcore.col(j);
        for (dy, dx) in OFFSETS {
            let w = col.get(dy, dx);
            if w == 0.0 {
                continue;
            }
            let row = p_row(c, fr, fq, dy, dx);
            // Coarse point to fine point is displacement -d in the fine
            // frame of the coarse transform, hence the opposite sign.
            m[(row, j)] += phase_of(mode, dy, dx, n, -sign) * w;
        }
    }
    m
}

pub(crate) fn p_row(c: usize, fr: usize, fq: usize, dy: isize, dx: isize) -> usize {
    let r = (fr as isize + dy).rem_euclid(c as isize) as usize;
    let q = (fq as isize + dx).rem_euclid(c as isize) as usize;
    r * c + q
}

pub(crate) struct Lu {
    lu: nalgebra::LU<Complex64, Dyn, Dyn>,
}

impl Lu {
    pub fn new(m: CMatrix, mode: (usize, usize), what: &str) -> Result<Self> {
        let lu = m.lu();
        let diag = lu.u().diagonal();
        let max = diag.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        let min = diag.iter().fold(f64::INFINITY, |a, z| a.min(z.norm()));
        if !(max > 0.0) || !(min > MODE_SINGULAR_RATIO * max) || !min.is_finite() {
            return Err(Error::DegenerateMode {
                mode,
                reason: format!("{what} is singular"),
            });
        }
        Ok(Lu { lu })
    }

    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        self.lu.solve(b).expect("checked nonsingular")
    }

    pub fn inverse(&self) -> CMatrix {
        self.lu.try_inverse().expect("checked nonsingular")
    }
}

/// Intermediate products of one mode's two-grid symbol, kept for the
/// reverse pass.
pub(crate) struct TwoGridSymbol {
    pub ahat: CMatrix,
    pub lhat: CMatrix,
    pub shat: CMatrix,
    pub x: CMatrix,
    /// `(X* A X)^{-1}`.
    pub b: CMatrix,
    /// `X* A`.
    pub r: CMatrix,
    /// `B R`.
    pub br: CMatrix,
    pub m: CMatrix,
    pub s_pre: CMatrix,
    pub s_post: CMatrix,
}

pub(crate) fn matrix_power(s: &CMatrix, k: usize) -> CMatrix {
    let mut out = CMatrix::identity(s.nrows(), s.ncols());
    for _ in 0..k {
        out = &out * s;
    }
    out
}

/// `sign` is the phase sign used for the symbols of `A` and `L`; anything
/// but `-1` yields deliberately wrong symbols (negative control).
pub(crate) fn assemble_mode(
    acore: &StencilOperator,
    pcore: &ProlongationMap,
    mode: (usize, usize),
    n: usize,
    cfg: &CycleConfig,
    sign: f64,
) -> Result<TwoGridSymbol> {
    let ahat = stencil_symbol_signed(acore, mode, n, sign);
    let lhat = stencil_symbol_signed(&acore.lower_part(), mode, n, sign);
    let x = prolongation_symbol_signed(pcore, mode, n, -1.0);
    let dim = ahat.nrows();
    let l_lu = Lu::new(lhat.clone(), mode, "smoother symbol")?;
    let shat = CMatrix::identity(dim, dim) - l_lu.solve(&ahat);
    let r = x.adjoint() * &ahat;
    let ac = &r * &x;
    let b = Lu::new(ac, mode, "coarse symbol")?.inverse();
    let br = &b * &r;
    let cmat = CMatrix::identity(dim, dim) - &x * &br;
    let s_pre = matrix_power(&shat, cfg.pre_sweeps);
    let s_post = matrix_power(&shat, cfg.post_sweeps);
    let m = &s_post * cmat * &s_pre;
    if !m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::DegenerateMode {
            mode,
            reason: "non-finite two-grid symbol".into(),
        });
    }
    Ok(TwoGridSymbol {
        ahat,
        lhat,
        shat,
        x,
        b,
        r,
        br,
        m,
        s_pre,
        s_post,
    })
}

/// All symbols of one mode, `M(s) = S^{s2} (I - P (P* A P)^{-1} P* A) S^{s1}`.
pub fn mode_symbols_2d(
    acore: &StencilOperator,
    pcore: &ProlongationMap,
    mode: (usize, usize),
    n: usize,
    cfg: &CycleConfig,
) -> Result<ModeSymbols> {
    let set = FourierModeSet::new(n, acore.side())?;
    check_core(acore, pcore, &set)?;
    let t = assemble_mode(acore, pcore, mode, n, cfg, -1.0)?;
    Ok(ModeSymbols {
        mode,
        ahat: t.ahat,
        lhat: t.lhat,
        shat: t.shat,
        phat: t.x,
        mhat: t.m,
    })
}

pub(crate) fn frob2(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// `||M(s)||_F^2` for every non-excluded mode, in row-major mode order.
pub fn per_mode_frobenius(
    acore: &StencilOperator,
    pcore: &ProlongationMap,
    n: usize,
    cfg: &CycleConfig,
) -> Result<Vec<ModeFrobenius>> {
    per_mode_frobenius_signed(acore, pcore, n, cfg, -1.0)
}

pub(crate) fn per_mode_frobenius_signed(
    acore: &StencilOperator,
    pcore: &ProlongationMap,
    n: usize,
    cfg: &CycleConfig,
    sign: f64,
) -> Result<Vec<ModeFrobenius>> {
    let set = FourierModeSet::new(n, acore.side())?;
    check_core(acore, pcore, &set)?;
    set.modes()
        .into_par_iter()
        .map(|mode| {
            let t = assemble_mode(acore, pcore, mode, n, cfg, sign)?;
            Ok(ModeFrobenius {
                s1: mode.0,
                s2: mode.1,
                frob2: frob2(&t.m),
            })
        })
        .collect()
}

/// One row of the per-mode dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeFrobenius {
    pub s1: usize,
    pub s2: usize,
    pub frob2: f64,
}

/// `||M||_F^2` summed over the non-excluded modes of the block-periodic
/// problem of fine side `n` built from `acore` and `pcore`.
pub fn frobenius_loss(acore: &StencilOperator, pcore: &ProlongationMap, n: usize, cfg: &CycleConfig) -> Result<f64> {
    Ok(per_mode_frobenius(acore, pcore, n, cfg)?
        .iter()
        .map(|m| m.frob2)
        .sum())
}

/// Largest `rho(M(s))` over the non-excluded modes.
pub fn max_mode_spectral_radius(
    acore: &StencilOperator,
    pcore: &ProlongationMap,
    n: usize,
    cfg: &CycleConfig,
) -> Result<f64> {
    max_mode_spectral_radius_signed(acore, pcore, n, cfg, -1.0)
}

pub(crate) fn max_mode_spectral_radius_signed(
    acore: &StencilOperator,
    pcore: &ProlongationMap,
    n: usize,
    cfg: &CycleConfig,
    sign: f64,
) -> Result<f64> {
    let set = FourierModeSet::new(n, acore.side())?;
    check_core(acore, pcore, &set)?;
    let mut rho = 0.0f64;
    for mode in set.modes() {
        let t = assemble_mode(acore, pcore, mode, n, cfg, sign)?;
        let ev = nalgebra::Schur::new(t.m)
            .eigenvalues()
            .ok_or_else(|| Error::Internal("complex Schur form did not yield eigenvalues".into()))?;
        rho = ev.iter().fold(rho, |a, z| a.max(z.norm()));
    }
    Ok(rho)
}

/// Writes the per-mode dump as CSV with columns `s1, s2, frob2`.
pub fn write_mode_csv<W: Write>(rows: &[ModeFrobenius], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
