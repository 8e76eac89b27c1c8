use nalgebra::DMatrix;
use serde::Serialize;

use super::require_kind_side;
use crate::error::{Error, Result};
use crate::operator::{position_map, Stencil, StencilOperator, OFFSETS};
use crate::problem::BoundaryKind;

/// Fine/coarse index bookkeeping shared by P and the Galerkin product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Geometry {
    pub fine_side: usize,
    pub coarse_side: usize,
    pub kind: BoundaryKind,
    /// Fine index of coarse index 0 (0 periodic, 1 Dirichlet).
    pub offset: usize,
}

impl Geometry {
    pub fn of(a: &StencilOperator) -> Result<Self> {
        Self::new(a.side(), a.kind())
    }

    pub fn new(fine_side: usize, kind: BoundaryKind) -> Result<Self> {
        let coarse_side = require_kind_side(kind, fine_side)?;
        Ok(Geometry {
            fine_side,
            coarse_side,
            kind,
            offset: usize::from(kind == BoundaryKind::Dirichlet),
        })
    }

    pub fn fine_of(&self, (cr, cc): (usize, usize)) -> (usize, usize) {
        (2 * cr + self.offset, 2 * cc + self.offset)
    }

    /// Coarse index of the coarse point sitting at (possibly unwrapped) fine
    /// position `(fr, fc)`, or `None` if there is no coarse point there.
    pub fn coarse_at(&self, fr: isize, fc: isize) -> Option<usize> {
        let (rr, cc) = (fr - self.offset as isize, fc - self.offset as isize);
        if rr.rem_euclid(2) != 0 || cc.rem_euclid(2) != 0 {
            return None;
        }
        let (r, c) = (rr.div_euclid(2), cc.div_euclid(2));
        let n = self.coarse_side as isize;
        match self.kind {
            BoundaryKind::Periodic => Some((r.rem_euclid(n) * n + c.rem_euclid(n)) as usize),
            BoundaryKind::Dirichlet => {
                (r >= 0 && c >= 0 && r < n && c < n).then(|| (r * n + c) as usize)
            }
        }
    }

    /// Fine index at offset `(dy, dx)` from fine `(fr, fc)` with the wrap rule
    /// (no mask check).
    pub fn fine_at(&self, fr: usize, fc: usize, dy: isize, dx: isize) -> Option<usize> {
        let n = self.fine_side as isize;
        let (r, c) = (fr as isize + dy, fc as isize + dx);
        match self.kind {
            BoundaryKind::Periodic => Some((r.rem_euclid(n) * n + c.rem_euclid(n)) as usize),
            BoundaryKind::Dirichlet => (r >= 0 && c >= 0 && r < n && c < n).then(|| (r * n + c) as usize),
        }
    }

    pub fn coarse_active(&self, a: &StencilOperator, j: usize) -> bool {
        let (fr, fc) = self.fine_of((j / self.coarse_side, j % self.coarse_side));
        a.is_active(fr * self.fine_side + fc)
    }
}

/// How a fine vertex is interpolated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FineRole {
    /// Coincides with the given coarse point.
    Coincident(usize),
    /// Lies between two coarse points. `contributors` holds the west (south)
    /// and east (north) coarse points with the offset from each coarse point
    /// to this fine vertex; `None` where the coarse point is eliminated.
    Edge {
        horizontal: bool,
        contributors: [Option<(usize, (isize, isize))>; 2],
    },
    /// Has four diagonal coarse neighbours, given with the offset from this
    /// fine vertex to each.
    Corner {
        contributors: [Option<(usize, (isize, isize))>; 4],
    },
}

/// Sparse prolongation stored column-wise: one 3x3 weight stencil per coarse
/// point giving its contribution to the nine fine vertices around it.
#[derive(Debug, Clone, PartialEq)]
pub struct ProlongationMap {
    geom: Geometry,
    col_stencils: Vec<Stencil>,
    coarse_active: Vec<bool>,
    fine_active: Option<Vec<bool>>,
    normalized: bool,
}

impl ProlongationMap {
    /// A map for `a`'s grid with only the unit coincident weights set.
    pub fn empty_for(a: &StencilOperator) -> Result<Self> {
        let geom = Geometry::of(a)?;
        let cs = geom.coarse_side;
        let coarse_active: Vec<bool> = (0..cs * cs).map(|j| geom.coarse_active(a, j)).collect();
        let col_stencils = coarse_active
            .iter()
            .map(|&act| {
                let mut s = Stencil::ZERO;
                if act {
                    s.set(0, 0, 1.0);
                }
                s
            })
            .collect();
        Ok(ProlongationMap {
            geom,
            col_stencils,
            coarse_active,
            fine_active: a.mask().map(|m| m.to_vec()),
            normalized: false,
        })
    }

    /// Builds a map from explicit column stencils on the grid of `a`.
    ///
    /// Centre weights must be 1; weights toward eliminated fine vertices must be 0.
    pub fn from_col_stencils(a: &StencilOperator, col_stencils: Vec<Stencil>) -> Result<Self> {
        let mut p = Self::empty_for(a)?;
        if col_stencils.len() != p.coarse_len() {
            return Err(Error::DimensionMismatch {
                expected: p.coarse_len(),
                got: col_stencils.len(),
            });
        }
        for (j, s) in col_stencils.iter().enumerate() {
            if !p.coarse_active[j] {
                if *s != Stencil::ZERO {
                    return Err(crate::error::invalid(format!("inactive coarse point {j} has weights")));
                }
                continue;
            }
            if s.center() != 1.0 {
                return Err(crate::error::invalid(format!("coarse point {j} centre weight is not 1")));
            }
            let (fr, fc) = p.geom.fine_of((j / p.coarse_side(), j % p.coarse_side()));
            for (dy, dx) in OFFSETS {
                if s.get(dy, dx) != 0.0 && p.fine_target(fr, fc, dy, dx).is_none() {
                    return Err(crate::error::invalid(format!(
                        "coarse point {j} has weight toward missing fine vertex ({dy}, {dx})"
                    )));
                }
            }
        }
        p.col_stencils = col_stencils;
        Ok(p)
    }

    pub fn fine_side(&self) -> usize {
        self.geom.fine_side
    }

    pub fn coarse_side(&self) -> usize {
        self.geom.coarse_side
    }

    pub fn kind(&self) -> BoundaryKind {
        self.geom.kind
    }

    pub fn fine_len(&self) -> usize {
        self.geom.fine_side * self.geom.fine_side
    }

    pub fn coarse_len(&self) -> usize {
        self.geom.coarse_side * self.geom.coarse_side
    }

    pub fn col_stencils(&self) -> &[Stencil] {
        &self.col_stencils
    }

    pub fn col(&self, j: usize) -> &Stencil {
        &self.col_stencils[j]
    }

    pub(crate) fn col_mut(&mut self, j: usize) -> &mut Stencil {
        &mut self.col_stencils[j]
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub(crate) fn set_normalized(&mut self, v: bool) {
        self.normalized = v;
    }

    pub(crate) fn geometry(&self) -> Geometry {
        self.geom
    }

    pub fn coarse_is_active(&self, j: usize) -> bool {
        self.coarse_active[j]
    }

    /// Coarse activity mask, `None` when every coarse point is active.
    pub fn coarse_mask(&self) -> Option<Vec<bool>> {
        self.fine_active.as_ref().map(|_| self.coarse_active.clone())
    }

    pub fn fine_active(&self, idx: usize) -> bool {
        self.fine_active.as_ref().is_none_or(|m| m[idx])
    }

    /// Fine vertex that coarse point at fine `(fr, fc)` reaches with offset
    /// `(dy, dx)`, if it exists and is active.
    pub(crate) fn fine_target(&self, fr: usize, fc: usize, dy: isize, dx: isize) -> Option<usize> {
        self.geom
            .fine_at(fr, fc, dy, dx)
            .filter(|&i| self.fine_active(i))
    }

    fn active_coarse_at(&self, fr: isize, fc: isize) -> Option<usize> {
        self.geom.coarse_at(fr, fc).filter(|&j| self.coarse_active[j])
    }

    /// Role of fine vertex `(r, c)`.
    pub fn role(&self, r: usize, c: usize) -> FineRole {
        let o = self.geom.offset as isize;
        let (ri, ci) = (r as isize, c as isize);
        let odd_r = (ri - o).rem_euclid(2) == 1;
        let odd_c = (ci - o).rem_euclid(2) == 1;
        match (odd_r, odd_c) {
            (false, false) => FineRole::Coincident(self.geom.coarse_at(ri, ci).expect("even position")),
            (false, true) => FineRole::Edge {
                horizontal: true,
                contributors: [
                    self.active_coarse_at(ri, ci - 1).map(|j| (j, (0, 1))),
                    self.active_coarse_at(ri, ci + 1).map(|j| (j, (0, -1))),
                ],
            },
            (true, false) => FineRole::Edge {
                horizontal: false,
                contributors: [
                    self.active_coarse_at(ri - 1, ci).map(|j| (j, (1, 0))),
                    self.active_coarse_at(ri + 1, ci).map(|j| (j, (-1, 0))),
                ],
            },
            (true, true) => {
                let mut contributors = [None; 4];
                for (k, (ey, ex)) in [(-1, -1), (-1, 1), (1, -1), (1, 1)].into_iter().enumerate() {
                    contributors[k] = self.active_coarse_at(ri + ey, ci + ex).map(|j| (j, (ey, ex)));
                }
                FineRole::Corner { contributors }
            }
        }
    }

    /// `P x`: coarse grid vector to fine grid vector.
    pub fn interpolate(&self, coarse: &[f64]) -> Result<Vec<f64>> {
        if coarse.len() != self.coarse_len() {
            return Err(Error::DimensionMismatch {
                expected: self.coarse_len(),
                got: coarse.len(),
            });
        }
        let mut fine = vec![0.0; self.fine_len()];
        self.interpolate_add(coarse, &mut fine);
        Ok(fine)
    }

    /// `fine += P x`.
    pub(crate) fn interpolate_add(&self, coarse: &[f64], fine: &mut [f64]) {
        let cs = self.coarse_side();
        for j in 0..self.coarse_len() {
            if !self.coarse_active[j] || coarse[j] == 0.0 {
                continue;
            }
            let (fr, fc) = self.geom.fine_of((j / cs, j % cs));
            let s = &self.col_stencils[j];
            for (dy, dx) in OFFSETS {
                let w = s.get(dy, dx);
                if w != 0.0 {
                    if let Some(i) = self.fine_target(fr, fc, dy, dx) {
                        fine[i] += w * coarse[j];
                    }
                }
            }
        }
    }

    /// `P^T y`: fine grid vector to coarse grid vector.
    pub fn restrict(&self, fine: &[f64]) -> Result<Vec<f64>> {
        if fine.len() != self.fine_len() {
            return Err(Error::DimensionMismatch {
                expected: self.fine_len(),
                got: fine.len(),
            });
        }
        let cs = self.coarse_side();
        let mut out = vec![0.0; self.coarse_len()];
        for (j, o) in out.iter_mut().enumerate() {
            if !self.coarse_active[j] {
                continue;
            }
            let (fr, fc) = self.geom.fine_of((j / cs, j % cs));
            let s = &self.col_stencils[j];
            let mut acc = 0.0;
            for (dy, dx) in OFFSETS {
                let w = s.get(dy, dx);
                if w != 0.0 {
                    if let Some(i) = self.fine_target(fr, fc, dy, dx) {
                        acc += w * fine[i];
                    }
                }
            }
            *o = acc;
        }
        Ok(out)
    }

    /// Dense `P` over active fine rows and active coarse columns.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let fine_act: Vec<usize> = (0..self.fine_len()).filter(|&i| self.fine_active(i)).collect();
        let coarse_act: Vec<usize> = (0..self.coarse_len()).filter(|&j| self.coarse_active[j]).collect();
        let fpos = position_map(self.fine_len(), &fine_act);
        let cs = self.coarse_side();
        let mut m = DMatrix::zeros(fine_act.len(), coarse_act.len());
        for (col, &j) in coarse_act.iter().enumerate() {
            let (fr, fc) = self.geom.fine_of((j / cs, j % cs));
            for (dy, dx) in OFFSETS {
                if let Some(i) = self.fine_target(fr, fc, dy, dx) {
                    m[(fpos[i], col)] += self.col_stencils[j].get(dy, dx);
                }
            }
        }
        m
    }

    /// JSON dump `{fineSide, coarseSide, colStencils}`.
    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        #[serde(rename_all = "camelCase")]
        struct Dump<'a> {
            fine_side: usize,
            coarse_side: usize,
            col_stencils: &'a [Stencil],
        }
        serde_json::to_value(Dump {
            fine_side: self.fine_side(),
            coarse_side: self.coarse_side(),
            col_stencils: &self.col_stencils,
        })
        .expect("plain data serializes")
    }
}
