//! Stencil operators on square vertex grids.
//!
//! Vertices are stored row-major, `idx = r * side + c`, with the row index `r`
//! increasing northward and the column index `c` increasing eastward. The
//! lexicographic (Gauss-Seidel) order is therefore south-to-north,
//! west-to-east, and a vertex's lexicographic predecessors are its southern
//! row of neighbours plus its western neighbour.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::problem::BoundaryKind;

/// The nine offsets `(dy, dx)` of a 3x3 stencil in visual row-major order
/// (north row first).
pub const OFFSETS: [(isize, isize); 9] = [
    (1, -1),
    (1, 0),
    (1, 1),
    (0, -1),
    (0, 0),
    (0, 1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
];

/// A 3x3 set of coefficients coupling a vertex to itself and its eight
/// neighbours.
///
/// Storage is visual: row 0 is the northern row, column 0 the western column.
/// Use [`Stencil::get`] with `(dy, dx)` offsets rather than raw indices.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Stencil(pub [[f64; 3]; 3]);

impl Stencil {
    pub const ZERO: Stencil = Stencil([[0.0; 3]; 3]);

    #[inline]
    pub fn get(&self, dy: isize, dx: isize) -> f64 {
        self.0[(1 - dy) as usize][(dx + 1) as usize]
    }

    #[inline]
    pub fn set(&mut self, dy: isize, dx: isize, v: f64) {
        self.0[(1 - dy) as usize][(dx + 1) as usize] = v;
    }

    #[inline]
    pub fn add(&mut self, dy: isize, dx: isize, v: f64) {
        self.0[(1 - dy) as usize][(dx + 1) as usize] += v;
    }

    pub fn center(&self) -> f64 {
        self.get(0, 0)
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().flatten().sum()
    }

    pub fn scaled(&self, alpha: f64) -> Stencil {
        let mut out = *self;
        out.0.iter_mut().flatten().for_each(|v| *v *= alpha);
        out
    }

    /// Entries in visual row-major order (nw, n, ne, w, c, e, sw, s, se).
    pub fn flatten(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for (k, (dy, dx)) in OFFSETS.iter().enumerate() {
            out[k] = self.get(*dy, *dx);
        }
        out
    }

    pub fn from_flat(v: &[f64]) -> Stencil {
        let mut s = Stencil::ZERO;
        for (k, (dy, dx)) in OFFSETS.iter().enumerate() {
            s.set(*dy, *dx, v[k]);
        }
        s
    }

    /// Keeps only the lexicographically lower part: the centre, the western
    /// neighbour and the whole southern row.
    pub fn lower_part(&self) -> Stencil {
        let mut out = Stencil::ZERO;
        for (dy, dx) in OFFSETS {
            if is_lexicographic_lower(dy, dx) {
                out.set(dy, dx, self.get(dy, dx));
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

/// True for offsets that precede (or equal) the centre in lexicographic order.
#[inline]
pub fn is_lexicographic_lower(dy: isize, dx: isize) -> bool {
    dy < 0 || (dy == 0 && dx <= 0)
}

/// Sparse matrix given as one 3x3 stencil per grid vertex.
///
/// Periodic operators wrap neighbour indices. Dirichlet operators have no
/// rows for eliminated vertices; stencil entries that would reference a
/// vertex outside the grid or outside the active mask are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilOperator {
    side: usize,
    kind: BoundaryKind,
    stencils: Vec<Stencil>,
    active: Option<Vec<bool>>,
}

impl StencilOperator {
    /// Builds an operator from explicit stencils.
    ///
    /// For Dirichlet operators every nonzero stencil entry must point at an
    /// active vertex inside the grid. Inactive vertices must have zero stencils.
    pub fn from_stencils(
        side: usize,
        kind: BoundaryKind,
        stencils: Vec<Stencil>,
        active: Option<Vec<bool>>,
    ) -> Result<Self> {
        if side == 0 {
            return Err(invalid("operator side must be positive"));
        }
        if stencils.len() != side * side {
            return Err(Error::DimensionMismatch {
                expected: side * side,
                got: stencils.len(),
            });
        }
        if let Some(mask) = &active {
            if mask.len() != side * side {
                return Err(Error::DimensionMismatch {
                    expected: side * side,
                    got: mask.len(),
                });
            }
            if kind == BoundaryKind::Periodic {
                return Err(invalid("a domain mask requires Dirichlet boundaries"));
            }
        }
        let op = StencilOperator {
            side,
            kind,
            stencils,
            active,
        };
        for r in 0..side {
            for c in 0..side {
                let idx = r * side + c;
                let s = &op.stencils[idx];
                if !s.is_finite() {
                    return Err(Error::NonFinite(format!("stencil at ({r}, {c})")));
                }
                if !op.is_active(idx) {
                    if *s != Stencil::ZERO {
                        return Err(invalid(format!("inactive vertex ({r}, {c}) has a stencil")));
                    }
                    continue;
                }
                for (dy, dx) in OFFSETS {
                    if s.get(dy, dx) != 0.0 && op.neighbor(r, c, dy, dx).is_none() {
                        return Err(invalid(format!(
                            "stencil at ({r}, {c}) references missing neighbour ({dy}, {dx})"
                        )));
                    }
                }
            }
        }
        Ok(op)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn kind(&self) -> BoundaryKind {
        self.kind
    }

    /// Number of grid positions (active or not).
    pub fn len(&self) -> usize {
        self.side * self.side
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stencils(&self) -> &[Stencil] {
        &self.stencils
    }

    pub fn stencil(&self, r: usize, c: usize) -> &Stencil {
        &self.stencils[r * self.side + c]
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.active.as_deref()
    }

    #[inline]
    pub fn is_active(&self, idx: usize) -> bool {
        self.active.as_ref().is_none_or(|m| m[idx])
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_active(i)).collect()
    }

    pub fn active_count(&self) -> usize {
        match &self.active {
            None => self.len(),
            Some(m) => m.iter().filter(|&&a| a).count(),
        }
    }

    /// Grid position at offset `(dy, dx)` from `(r, c)` with the operator's
    /// wrap rule, or `None` when it is outside the grid or inactive.
    #[inline]
    pub fn neighbor(&self, r: usize, c: usize, dy: isize, dx: isize) -> Option<usize> {
        let n = self.side as isize;
        let (rr, cc) = (r as isize + dy, c as isize + dx);
        match self.kind {
            BoundaryKind::Periodic => Some((rr.rem_euclid(n) * n + cc.rem_euclid(n)) as usize),
            BoundaryKind::Dirichlet => {
                if rr < 0 || cc < 0 || rr >= n || cc >= n {
                    return None;
                }
                let idx = (rr * n + cc) as usize;
                self.is_active(idx).then_some(idx)
            }
        }
    }

    /// Matrix-vector product `A u` on the full grid vector.
    ///
    /// Entries of `u` at inactive vertices are ignored; the result is zero there.
    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u.len())?;
        let mut out = vec![0.0; self.len()];
        self.apply_into(u, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        let n = self.side;
        for r in 0..n {
            for c in 0..n {
                let idx = r * n + c;
                if !self.is_active(idx) {
                    out[idx] = 0.0;
                    continue;
                }
                out[idx] = self.row_dot(r, c, u);
            }
        }
    }

    /// `sum_j A[idx, j] u[j]` for the row at `(r, c)`.
    #[inline]
    pub(crate) fn row_dot(&self, r: usize, c: usize, u: &[f64]) -> f64 {
        let s = &self.stencils[r * self.side + c];
        let n = self.side;
        // Fast path for rows away from the wrap/boundary.
        if r >= 1 && c >= 1 && r + 1 < n && c + 1 < n && self.active.is_none() {
            let up = (r + 1) * n + c;
            let mid = r * n + c;
            let dn = (r - 1) * n + c;
            return s.0[0][0] * u[up - 1]
                + s.0[0][1] * u[up]
                + s.0[0][2] * u[up + 1]
                + s.0[1][0] * u[mid - 1]
                + s.0[1][1] * u[mid]
                + s.0[1][2] * u[mid + 1]
                + s.0[2][0] * u[dn - 1]
                + s.0[2][1] * u[dn]
                + s.0[2][2] * u[dn + 1];
        }
        let mut acc = 0.0;
        for (dy, dx) in OFFSETS {
            let a = s.get(dy, dx);
            if a != 0.0 {
                if let Some(j) = self.neighbor(r, c, dy, dx) {
                    acc += a * u[j];
                }
            }
        }
        acc
    }

    pub(crate) fn check_len(&self, got: usize) -> Result<()> {
        if got != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got,
            });
        }
        Ok(())
    }

    /// Dense matrix over the active unknowns (in increasing grid order).
    ///
    /// Entries that alias on tiny periodic grids are summed, matching `apply`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let act = self.active_indices();
        let pos = position_map(self.len(), &act);
        let mut m = DMatrix::zeros(act.len(), act.len());
        for (row, &idx) in act.iter().enumerate() {
            let (r, c) = (idx / self.side, idx % self.side);
            let s = &self.stencils[idx];
            for (dy, dx) in OFFSETS {
                if let Some(j) = self.neighbor(r, c, dy, dx) {
                    m[(row, pos[j])] += s.get(dy, dx);
                }
            }
        }
        m
    }

    /// The operator built from each stencil's lexicographically lower part.
    ///
    /// On periodic grids this keeps wrap-around couplings, so it is the
    /// block-circulant Gauss-Seidel splitting used by Fourier analysis rather
    /// than the true lower triangle of the matrix.
    pub fn lower_part(&self) -> StencilOperator {
        StencilOperator {
            side: self.side,
            kind: self.kind,
            stencils: self.stencils.iter().map(|s| s.lower_part()).collect(),
            active: self.active.clone(),
        }
    }

    /// Entrywise scaling by `alpha`.
    pub fn scaled(&self, alpha: f64) -> StencilOperator {
        StencilOperator {
            side: self.side,
            kind: self.kind,
            stencils: self.stencils.iter().map(|s| s.scaled(alpha)).collect(),
            active: self.active.clone(),
        }
    }

    /// Restricts a full grid vector to the active unknowns.
    pub fn gather(&self, u: &[f64]) -> Vec<f64> {
        (0..self.len())
            .filter(|&i| self.is_active(i))
            .map(|i| u[i])
            .collect()
    }

    /// Expands an active-unknown vector to a full grid vector (zeros elsewhere).
    pub fn scatter(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (k, i) in (0..self.len()).filter(|&i| self.is_active(i)).enumerate() {
            out[i] = v[k];
        }
        out
    }
}

/// Maps grid positions to their index among `active` (usize::MAX if inactive).
pub(crate) fn position_map(len: usize, active: &[usize]) -> Vec<usize> {
    let mut pos = vec![usize::MAX; len];
    for (k, &i) in active.iter().enumerate() {
        pos[i] = k;
    }
    pos
}
