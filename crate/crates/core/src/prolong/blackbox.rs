//! Black-Box collapse weights.
//!
//! For a fine point between two coarse points on a horizontal grid line the
//! stencil is collapsed vertically: each of its three columns is summed,
//! giving `(cw, cc, ce)`, and the west and east coarse points receive
//! weights `-cw / cc` and `-ce / cc`. Vertical edges collapse rows instead.

use super::{EdgeWeights, LocalStencilPatch};
use crate::error::{Error, Result};
use crate::operator::Stencil;

const COLLAPSE_EPS: f64 = 1e-14;

fn degenerate(which: &str) -> Error {
    Error::DegenerateStencil {
        at: (0, 0),
        reason: format!("{which} collapse has a vanishing centre"),
    }
}

/// `(west, east)` weights of the edge point with stencil `s`.
pub fn collapse_horizontal_edge(s: &Stencil) -> Result<(f64, f64)> {
    let col = |dx| s.get(1, dx) + s.get(0, dx) + s.get(-1, dx);
    let cc = col(0);
    if cc.abs() < COLLAPSE_EPS {
        return Err(degenerate("horizontal"));
    }
    Ok((-col(-1) / cc, -col(1) / cc))
}

/// `(south, north)` weights of the edge point with stencil `s`.
pub fn collapse_vertical_edge(s: &Stencil) -> Result<(f64, f64)> {
    let row = |dy| s.get(dy, -1) + s.get(dy, 0) + s.get(dy, 1);
    let rc = row(0);
    if rc.abs() < COLLAPSE_EPS {
        return Err(degenerate("vertical"));
    }
    Ok((-row(-1) / rc, -row(1) / rc))
}

/// Black-Box weights of a coarse point toward its four edge neighbours.
///
/// The coarse point is the west contributor of its east neighbour, the east
/// contributor of its west neighbour, and so on.
pub fn blackbox_weights(patch: &LocalStencilPatch) -> Result<EdgeWeights> {
    let north = collapse_vertical_edge(&patch.stencil(1))?.0;
    let south = collapse_vertical_edge(&patch.stencil(2))?.1;
    let west = collapse_horizontal_edge(&patch.stencil(3))?.1;
    let east = collapse_horizontal_edge(&patch.stencil(4))?.0;
    Ok(EdgeWeights {
        north,
        south,
        west,
        east,
    })
}
