//! Grid hierarchies and the two-grid / V / W cycles.

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dense::DenseLu;
use super::galerkin::galerkin;
use super::smoother::gauss_seidel_in_place;
use crate::error::{invalid, Error, Result};
use crate::operator::StencilOperator;
use crate::prolong::{build_prolongation, Builder, ProlongationMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CycleKind {
    /// Exact solve on the first coarse level.
    TwoGrid,
    V,
    W,
}

impl CycleKind {
    pub fn name(self) -> &'static str {
        match self {
            CycleKind::TwoGrid => "two-grid",
            CycleKind::V => "v",
            CycleKind::W => "w",
        }
    }
}

impl std::str::FromStr for CycleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "two-grid" | "twogrid" | "tg" => Ok(CycleKind::TwoGrid),
            "v" => Ok(CycleKind::V),
            "w" => Ok(CycleKind::W),
            other => Err(invalid(format!("unknown cycle kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CycleConfig {
    pub pre_sweeps: usize,
    pub post_sweeps: usize,
    pub kind: CycleKind,
    /// Coarsening stops once a level has at most this many vertices per side.
    pub coarsest_side: usize,
    pub max_levels: Option<usize>,
}

impl Default for CycleConfig {
    fn default() -> Self {
        CycleConfig {
            pre_sweeps: 1,
            post_sweeps: 1,
            kind: CycleKind::TwoGrid,
            coarsest_side: 3,
            max_levels: None,
        }
    }
}

impl CycleConfig {
    pub fn with_kind(kind: CycleKind) -> Self {
        CycleConfig {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pre_sweeps + self.post_sweeps == 0 {
            return Err(invalid("cycle needs at least one smoothing sweep"));
        }
        if self.max_levels == Some(0) || self.max_levels == Some(1) {
            return Err(invalid("a hierarchy needs at least two levels"));
        }
        Ok(())
    }

    /// Levels to build for this configuration.
    pub fn level_cap(&self) -> Option<usize> {
        match self.kind {
            CycleKind::TwoGrid => Some(2),
            _ => self.max_levels,
        }
    }
}

/// Operators from finest to coarsest with the prolongations between them.
#[derive(Debug, Clone)]
pub struct GridHierarchy {
    ops: Vec<StencilOperator>,
    prolongs: Vec<ProlongationMap>,
}

impl GridHierarchy {
    /// Coarsens `a` with `builder` at every level until the side drops to
    /// `coarsest_side`, the grid can no longer be halved, or `max_levels`
    /// levels exist.
    pub fn build(
        a: StencilOperator,
        builder: Builder<'_>,
        max_levels: Option<usize>,
        coarsest_side: usize,
    ) -> Result<Self> {
        let cap = max_levels.unwrap_or(usize::MAX);
        if cap < 2 {
            return Err(invalid("a hierarchy needs at least two levels"));
        }
        let mut ops = vec![a];
        let mut prolongs = Vec::new();
        while ops.len() < cap {
            let fine = ops.last().expect("nonempty");
            if ops.len() > 1 && fine.side() <= coarsest_side {
                break;
            }
            if crate::prolong::require_kind_side(fine.kind(), fine.side()).is_err() {
                break;
            }
            let p = build_prolongation(fine, builder)?;
            let coarse = galerkin(fine, &p)?;
            prolongs.push(p);
            ops.push(coarse);
        }
        if ops.len() < 2 {
            return Err(invalid(format!(
                "grid of side {} cannot be coarsened",
                ops[0].side()
            )));
        }
        Ok(GridHierarchy { ops, prolongs })
    }

    /// Hierarchy for `cfg`: two levels for a two-grid cycle, otherwise as
    /// deep as `cfg` allows.
    pub fn for_config(a: StencilOperator, builder: Builder<'_>, cfg: &CycleConfig) -> Result<Self> {
        cfg.validate()?;
        Self::build(a, builder, cfg.level_cap(), cfg.coarsest_side)
    }

    /// Two-level hierarchy with a caller-supplied `P`.
    pub fn two_level(a: StencilOperator, p: ProlongationMap) -> Result<Self> {
        if p.fine_side() != a.side() || p.kind() != a.kind() {
            return Err(invalid("prolongation does not match the operator"));
        }
        let coarse = galerkin(&a, &p)?;
        Ok(GridHierarchy {
            ops: vec![a, coarse],
            prolongs: vec![p],
        })
    }

    pub fn levels(&self) -> usize {
        self.ops.len()
    }

    pub fn operator(&self, level: usize) -> &StencilOperator {
        &self.ops[level]
    }

    pub fn prolongation(&self, level: usize) -> &ProlongationMap {
        &self.prolongs[level]
    }

    pub fn sides(&self) -> Vec<usize> {
        self.ops.iter().map(StencilOperator::side).collect()
    }
}

/// A hierarchy bound to a cycle configuration with the bottom level
/// factorized.
#[derive(Debug)]
pub struct CycleSolver<'h> {
    h: &'h GridHierarchy,
    cfg: CycleConfig,
    bottom: usize,
    bottom_lu: Option<DenseLu>,
    bottom_active: Vec<usize>,
}

impl<'h> CycleSolver<'h> {
    pub fn new(h: &'h GridHierarchy, cfg: &CycleConfig) -> Result<Self> {
        cfg.validate()?;
        let bottom = match cfg.kind {
            CycleKind::TwoGrid => 1,
            _ => h.levels() - 1,
        };
        let op = h.operator(bottom);
        let bottom_active = op.active_indices();
        let bottom_lu = if bottom_active.is_empty() {
            None
        } else {
            Some(DenseLu::new(op.to_dense(), "coarsest operator")?)
        };
        Ok(CycleSolver {
            h,
            cfg: *cfg,
            bottom,
            bottom_lu,
            bottom_active,
        })
    }

    pub fn config(&self) -> &CycleConfig {
        &self.cfg
    }

    /// One cycle on the finest level, in place.
    pub fn cycle(&self, u: &mut [f64], f: &[f64]) -> Result<()> {
        let a = self.h.operator(0);
        a.check_len(u.len())?;
        a.check_len(f.len())?;
        self.cycle_level(0, u, f)
    }

    fn cycle_level(&self, level: usize, u: &mut [f64], f: &[f64]) -> Result<()> {
        if level == self.bottom {
            self.exact(u, f);
            return Ok(());
        }
        let a = self.h.operator(level);
        let p = self.h.prolongation(level);
        gauss_seidel_in_place(a, u, f, self.cfg.pre_sweeps)?;
        let mut r = vec![0.0; a.len()];
        a.apply_into(u, &mut r);
        for (ri, fi) in r.iter_mut().zip(f) {
            *ri = fi - *ri;
        }
        let fc = p.restrict(&r)?;
        let mut ec = vec![0.0; p.coarse_len()];
        let visits = match self.cfg.kind {
            CycleKind::W if level + 1 < self.bottom => 2,
            _ => 1,
        };
        for _ in 0..visits {
            self.cycle_level(level + 1, &mut ec, &fc)?;
        }
        p.interpolate_add(&ec, u);
        gauss_seidel_in_place(a, u, f, self.cfg.post_sweeps)
    }

    fn exact(&self, u: &mut [f64], f: &[f64]) {
        let Some(lu) = &self.bottom_lu else {
            return;
        };
        let rhs = DVector::from_iterator(self.bottom_active.len(), self.bottom_active.iter().map(|&i| f[i]));
        let x = lu.solve(&rhs);
        for (k, &i) in self.bottom_active.iter().enumerate() {
            u[i] = x[k];
        }
    }
}

/// One multigrid cycle from `u0` on `A u = f`.
pub fn solve_cycle(h: &GridHierarchy, f: &[f64], u0: &[f64], cfg: &CycleConfig) -> Result<Vec<f64>> {
    let solver = CycleSolver::new(h, cfg)?;
    let mut u = u0.to_vec();
    solver.cycle(&mut u, f)?;
    Ok(u)
}

/// Per-cycle error reduction on the homogeneous problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticRun {
    pub factors: Vec<f64>,
    /// Factor of the final cycle.
    pub asymptotic: f64,
    /// Set when the run stopped early on an overflowing or vanishing norm.
    pub flagged: bool,
}

/// Runs `cycles` cycles on `A u = 0` from a standard normal `u0` drawn with
/// `seed` on the active vertices.
pub fn asymptotic_factor(h: &GridHierarchy, cfg: &CycleConfig, seed: u64, cycles: usize) -> Result<AsymptoticRun> {
    let a = h.operator(0);
    let mut rng = crate::rng_from_seed(seed);
    let u0: Vec<f64> = (0..a.len())
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut rng);
            if a.is_active(i) {
                z
            } else {
                0.0
            }
        })
        .collect();
    asymptotic_factor_from(h, cfg, u0, cycles)
}

pub fn asymptotic_factor_from(h: &GridHierarchy, cfg: &CycleConfig, mut u: Vec<f64>, cycles: usize) -> Result<AsymptoticRun> {
    let a = h.operator(0);
    a.check_len(u.len())?;
    if cycles == 0 {
        return Err(invalid("need at least one cycle"));
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut prev = norm(&u);
    if prev == 0.0 {
        return Err(invalid("initial error is zero"));
    }
    let solver = CycleSolver::new(h, cfg)?;
    let zero = vec![0.0; a.len()];
    let mut factors = Vec::with_capacity(cycles);
    let mut flagged = false;
    for _ in 0..cycles {
        solver.cycle(&mut u, &zero)?;
        let cur = norm(&u);
        if !cur.is_finite() || cur < 1e-250 {
            flagged = true;
            break;
        }
        factors.push(cur / prev);
        prev = cur;
    }
    let asymptotic = factors.last().copied().unwrap_or(f64::NAN);
    Ok(AsymptoticRun {
        factors,
        asymptotic,
        flagged,
    })
}
