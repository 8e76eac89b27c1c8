//! Prolongation maps with the bilinear sparsity pattern.
//!
//! Coarse points sit on the fine vertices whose indices (counted from the
//! boundary on Dirichlet grids) are both even. Each coarse point contributes
//! to the fine vertex it coincides with (weight 1) and to its eight fine
//! neighbours. Fine vertices fall into three roles:
//!
//! * coincident points, copied from their coarse point;
//! * edge points, between two coarse points along a grid line, whose two
//!   weights come from the chosen [`Builder`] and are normalized to sum to 1;
//! * corner points, with four diagonal coarse neighbours, whose weights are
//!   chosen so that every prolonged function satisfies `A u = 0` there.

mod blackbox;
mod map;

pub use blackbox::{blackbox_weights, collapse_horizontal_edge, collapse_vertical_edge};
pub use map::{FineRole, ProlongationMap};

use crate::error::{Error, Result};
use crate::operator::{Stencil, StencilOperator};
use crate::problem::BoundaryKind;
use crate::train::MlpModel;

/// Rows whose weight sum is below this are not normalized.
pub const ROW_SUM_EPS: f64 = 1e-12;

/// The four edge weights one coarse point gives its nearest fine neighbours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeWeights {
    pub north: f64,
    pub south: f64,
    pub west: f64,
    pub east: f64,
}

impl EdgeWeights {
    pub const BILINEAR: EdgeWeights = EdgeWeights {
        north: 0.5,
        south: 0.5,
        west: 0.5,
        east: 0.5,
    };

    pub fn to_array(self) -> [f64; 4] {
        [self.north, self.south, self.west, self.east]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        EdgeWeights {
            north: a[0],
            south: a[1],
            west: a[2],
            east: a[3],
        }
    }

    /// Weight toward the fine neighbour at unit offset `(dy, dx)`.
    pub fn toward(&self, dy: isize, dx: isize) -> f64 {
        match (dy, dx) {
            (1, 0) => self.north,
            (-1, 0) => self.south,
            (0, -1) => self.west,
            (0, 1) => self.east,
            _ => panic!("({dy}, {dx}) is not an edge offset"),
        }
    }
}

/// The five 3x3 stencils around a coarse point, in the order
/// `[centre, north, south, west, east]`, each flattened in visual row-major
/// order (`nw, n, ne, w, c, e, sw, s, se`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalStencilPatch(pub [f64; PATCH_LEN]);

/// Entries in a patch: five 3x3 stencils.
pub const PATCH_LEN: usize = 45;

/// Patch neighbour order.
pub const PATCH_OFFSETS: [(isize, isize); 5] = [(0, 0), (1, 0), (-1, 0), (0, -1), (0, 1)];

impl LocalStencilPatch {
    pub fn from_stencils(stencils: [&Stencil; 5]) -> Self {
        let mut out = [0.0; PATCH_LEN];
        for (k, s) in stencils.iter().enumerate() {
            out[9 * k..9 * k + 9].copy_from_slice(&s.flatten());
        }
        LocalStencilPatch(out)
    }

    /// Stencil `k` of the patch (0 = centre, 1 = north, 2 = south, 3 = west, 4 = east).
    pub fn stencil(&self, k: usize) -> Stencil {
        Stencil::from_flat(&self.0[9 * k..9 * k + 9])
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.0;
        out.iter_mut().for_each(|v| *v *= alpha);
        LocalStencilPatch(out)
    }

    /// The patch divided by the centre stencil's diagonal entry.
    pub fn normalized_input(&self) -> Result<[f64; PATCH_LEN]> {
        let d = self.0[4];
        if !(d.abs() > 1e-300) || !d.is_finite() {
            return Err(Error::NonFinite("patch centre for input normalization".into()));
        }
        let mut out = self.0;
        out.iter_mut().for_each(|v| *v /= d);
        Ok(out)
    }
}

/// Reads the stencils of the fine vertex under coarse point `coarse` and of
/// its four axis neighbours.
///
/// Fails with [`Error::BoundaryCase`] when a neighbour is eliminated.
pub fn extract_patch(a: &StencilOperator, coarse: (usize, usize)) -> Result<LocalStencilPatch> {
    let geom = map::Geometry::of(a)?;
    let (fr, fc) = geom.fine_of(coarse);
    if fr >= a.side() || fc >= a.side() || !a.is_active(fr * a.side() + fc) {
        return Err(Error::BoundaryCase(coarse));
    }
    let mut stencils = [&Stencil::ZERO; 5];
    for (k, (dy, dx)) in PATCH_OFFSETS.iter().enumerate() {
        let idx = a
            .neighbor(fr, fc, *dy, *dx)
            .ok_or(Error::BoundaryCase(coarse))?;
        stencils[k] = &a.stencils()[idx];
    }
    Ok(LocalStencilPatch::from_stencils(stencils))
}

/// How the four edge weights of each coarse point are obtained.
#[derive(Debug, Clone, Copy)]
pub enum Builder<'a> {
    /// Constant weights 1/2.
    Bilinear,
    /// Operator-dependent collapse weights.
    BlackBox,
    /// Weights predicted by a trained network from the local patch.
    Learned(&'a MlpModel),
}

impl Builder<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Builder::Bilinear => "bilinear",
            Builder::BlackBox => "blackbox",
            Builder::Learned(_) => "learned",
        }
    }
}

/// Raw (unnormalized) edge weights per coarse point, `None` where the
/// builder could not produce any (missing neighbours).
pub fn raw_edge_weights(a: &StencilOperator, builder: Builder<'_>) -> Result<Vec<Option<EdgeWeights>>> {
    let geom = map::Geometry::of(a)?;
    let cs = geom.coarse_side;
    let mut raw = vec![None; cs * cs];
    match builder {
        Builder::Bilinear => {
            for (j, w) in raw.iter_mut().enumerate() {
                if geom.coarse_active(a, j) {
                    *w = Some(EdgeWeights::BILINEAR);
                }
            }
        }
        Builder::BlackBox => {
            for (j, w) in raw.iter_mut().enumerate() {
                if !geom.coarse_active(a, j) {
                    continue;
                }
                if let Ok(patch) = extract_patch(a, (j / cs, j % cs)) {
                    *w = Some(blackbox_weights(&patch).map_err(|e| at_coarse(e, (j / cs, j % cs)))?);
                }
            }
        }
        Builder::Learned(model) => {
            let mut idx = Vec::new();
            let mut inputs = Vec::new();
            for j in 0..cs * cs {
                if !geom.coarse_active(a, j) {
                    continue;
                }
                if let Ok(patch) = extract_patch(a, (j / cs, j % cs)) {
                    idx.push(j);
                    inputs.push(model.prepare_input(&patch)?);
                }
            }
            let out = model.forward_batch(&inputs)?;
            for (j, o) in idx.into_iter().zip(out) {
                raw[j] = Some(EdgeWeights::from_array(o));
            }
        }
    }
    Ok(raw)
}

fn at_coarse(e: Error, coarse: (usize, usize)) -> Error {
    match e {
        Error::DegenerateStencil { reason, .. } => Error::DegenerateStencil { at: coarse, reason },
        other => other,
    }
}

/// Builds `P` for operator `a`: edge weights from `builder`, row
/// normalization, Black-Box fallback on rows that cannot be normalized
/// (boundary-truncated rows or vanishing sums), then corner completion.
pub fn build_prolongation(a: &StencilOperator, builder: Builder<'_>) -> Result<ProlongationMap> {
    let raw = raw_edge_weights(a, builder)?;
    assemble_from_raw(a, &raw)
}

/// The tail of [`build_prolongation`] given per-coarse-point raw weights.
pub fn assemble_from_raw(a: &StencilOperator, raw: &[Option<EdgeWeights>]) -> Result<ProlongationMap> {
    let mut p = ProlongationMap::empty_for(a)?;
    if raw.len() != p.coarse_len() {
        return Err(Error::DimensionMismatch {
            expected: p.coarse_len(),
            got: raw.len(),
        });
    }
    let side = a.side();
    for r in 0..side {
        for c in 0..side {
            if !a.is_active(r * side + c) {
                continue;
            }
            let FineRole::Edge { contributors, .. } = p.role(r, c) else {
                continue;
            };
            let normalized = match contributors {
                [Some((j1, d1)), Some((j2, d2))] => match (raw[j1], raw[j2]) {
                    (Some(w1), Some(w2)) => {
                        // d is the offset from the coarse point to this fine point.
                        let (v1, v2) = (w1.toward(d1.0, d1.1), w2.toward(d2.0, d2.1));
                        let s = v1 + v2;
                        if s.abs() > ROW_SUM_EPS && s.is_finite() {
                            p.col_mut(j1).set(d1.0, d1.1, v1 / s);
                            p.col_mut(j2).set(d2.0, d2.1, v2 / s);
                            true
                        } else {
                            false
                        }
                    }
                    _ => false,
                },
                _ => false,
            };
            if !normalized {
                blackbox_fallback_row(a, &mut p, r, c)?;
            }
        }
    }
    p.set_normalized(true);
    complete_corners(a, &mut p)?;
    Ok(p)
}

/// Writes plain collapse weights into the edge row at fine `(r, c)`.
fn blackbox_fallback_row(a: &StencilOperator, p: &mut ProlongationMap, r: usize, c: usize) -> Result<()> {
    let FineRole::Edge { horizontal, contributors } = p.role(r, c) else {
        return Ok(());
    };
    let s = a.stencil(r, c);
    let (first, second) = if horizontal {
        collapse_horizontal_edge(s)
    } else {
        collapse_vertical_edge(s)
    }
    .map_err(|e| at_fine(e, (r, c)))?;
    // contributors[0] is the west/south one, contributors[1] the east/north one.
    if let Some((j, d)) = contributors[0] {
        p.col_mut(j).set(d.0, d.1, first);
    }
    if let Some((j, d)) = contributors[1] {
        p.col_mut(j).set(d.0, d.1, second);
    }
    Ok(())
}

fn at_fine(e: Error, fine: (usize, usize)) -> Error {
    match e {
        Error::DegenerateStencil { reason, .. } => Error::DegenerateStencil { at: fine, reason },
        other => other,
    }
}

/// Divides every edge row of `p` by its weight sum.
///
/// Coincident rows already sum to one. Corner rows are left alone: they are
/// completed afterwards from the normalized edges.
pub fn normalize_rows(mut p: ProlongationMap) -> Result<ProlongationMap> {
    let side = p.fine_side();
    for r in 0..side {
        for c in 0..side {
            if !p.fine_active(r * side + c) {
                continue;
            }
            let FineRole::Edge { contributors, .. } = p.role(r, c) else {
                continue;
            };
            let present: Vec<(usize, (isize, isize))> = contributors.iter().flatten().copied().collect();
            if present.is_empty() {
                continue;
            }
            let s: f64 = present.iter().map(|&(j, d)| p.col(j).get(d.0, d.1)).sum();
            if !(s.abs() > ROW_SUM_EPS) || !s.is_finite() {
                return Err(Error::FallbackNeeded((r, c)));
            }
            for (j, d) in present {
                let v = p.col(j).get(d.0, d.1);
                p.col_mut(j).set(d.0, d.1, v / s);
            }
        }
    }
    p.set_normalized(true);
    Ok(p)
}

/// Sets the corner weights of every column so that `A (P e_j)` vanishes at
/// all corner fine points.
pub fn complete_corners(a: &StencilOperator, p: &mut ProlongationMap) -> Result<()> {
    let side = a.side();
    for r in 0..side {
        for c in 0..side {
            if !a.is_active(r * side + c) {
                continue;
            }
            let FineRole::Corner { contributors } = p.role(r, c) else {
                continue;
            };
            let s = a.stencil(r, c);
            let diag = s.center();
            if diag.abs() < 1e-300 {
                return Err(Error::DegenerateStencil {
                    at: (r, c),
                    reason: "zero diagonal at corner point".into(),
                });
            }
            for (j, (ey, ex)) in contributors.into_iter().flatten() {
                // (ey, ex): offset from this corner point to coarse point j.
                let col = p.col(j);
                let acc = s.get(ey, ex) + s.get(ey, 0) * col.get(0, -ex) + s.get(0, ex) * col.get(-ey, 0);
                p.col_mut(j).set(-ey, -ex, -acc / diag);
            }
        }
    }
    Ok(())
}

pub(crate) fn require_kind_side(kind: BoundaryKind, side: usize) -> Result<usize> {
    match kind {
        BoundaryKind::Periodic if side >= 4 && side % 2 == 0 => Ok(side / 2),
        BoundaryKind::Dirichlet if side >= 3 && side % 2 == 1 => Ok((side - 1) / 2),
        _ => Err(crate::error::invalid(format!(
            "{kind:?} grid of side {side} cannot be coarsened"
        ))),
    }
}

#[cfg(test)]
mod tests;
