//! Diffusion-coefficient fields and their bilinear finite-element discretization.
//!
//! A field holds one coefficient per cell of an `n x n` cell grid, stored
//! row-major with the row index increasing northward. Unknowns live on the
//! vertices. With periodic boundaries there are `n x n` distinct vertices;
//! vertex `(r, c)` is the south-west corner of cell `(r, c)`. With Dirichlet
//! boundaries the boundary vertices are eliminated and the `(n-1) x (n-1)`
//! interior vertices are numbered from zero, so local vertex `(r, c)` is
//! global vertex `(r + 1, c + 1)`.
//!
//! Stencils are assembled multiplied by `h^2`, so an operator built from
//! `g` is independent of the mesh size and a diagonal shift `sigma` is the
//! dimensionless quantity `eps * h^2`.

use rand_distr::{Distribution, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operator::{Stencil, StencilOperator, OFFSETS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Periodic,
    Dirichlet,
}

/// Cell-centred diffusion coefficients on an `n x n` cell grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawField")]
pub struct DiffusionField {
    n: usize,
    seed: u64,
    g: Vec<f64>,
}

#[derive(Deserialize)]
struct RawField {
    n: usize,
    seed: u64,
    g: Vec<f64>,
}

impl TryFrom<RawField> for DiffusionField {
    type Error = Error;

    fn try_from(raw: RawField) -> Result<Self> {
        DiffusionField::new(raw.n, raw.g, raw.seed)
    }
}

impl DiffusionField {
    pub fn new(n: usize, g: Vec<f64>, seed: u64) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(invalid(format!("cell count {n} must be even and at least 2")));
        }
        if g.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: g.len(),
            });
        }
        if let Some(bad) = g.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid(format!(
                "coefficient {} at cell {bad} is not strictly positive",
                g[bad]
            )));
        }
        Ok(DiffusionField { n, seed, g })
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(n, vec![value; n * n], 0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn values(&self) -> &[f64] {
        &self.g
    }

    /// Coefficient of cell `(i, j)` (row, column).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.g[i * self.n + j]
    }

    fn get_wrapped(&self, i: isize, j: isize) -> f64 {
        let n = self.n as isize;
        self.g[(i.rem_euclid(n) * n + j.rem_euclid(n)) as usize]
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        Self::new(self.n, self.g.iter().map(|v| v * alpha).collect(), self.seed)
    }
}

/// Distribution of the per-cell coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProblemDistribution {
    /// `g = exp(z)`, `z ~ N(mean, std^2)`.
    LogNormal { mean: f64, std: f64 },
    /// `g ~ U(0, 1)`, open interval.
    Uniform01,
}

impl Default for ProblemDistribution {
    fn default() -> Self {
        ProblemDistribution::LogNormal { mean: 0.0, std: 1.0 }
    }
}

impl ProblemDistribution {
    pub fn lognormal(mean: f64, std: f64) -> Result<Self> {
        let d = ProblemDistribution::LogNormal { mean, std };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ProblemDistribution::LogNormal { mean, std } => {
                if !(std > 0.0 && std.is_finite() && mean.is_finite()) {
                    return Err(invalid(format!("log-normal parameters ({mean}, {std}) invalid")));
                }
            }
            ProblemDistribution::Uniform01 => {}
        }
        Ok(())
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ProblemDistribution::LogNormal { mean, std } => {
                let z: f64 = rng.sample(StandardNormal);
                (mean + std * z).exp()
            }
            ProblemDistribution::Uniform01 => Open01.sample(rng),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProblemDistribution::LogNormal { .. } => "lognormal",
            ProblemDistribution::Uniform01 => "uniform01",
        }
    }
}

/// Draws an `n x n` field, deterministic in `seed`.
pub fn sample_field(dist: &ProblemDistribution, n: usize, seed: u64) -> Result<DiffusionField> {
    dist.validate()?;
    if n < 2 || n % 2 != 0 {
        return Err(invalid(format!("cell count {n} must be even and at least 2")));
    }
    let mut rng = crate::rng_from_seed(seed);
    let g = (0..n * n).map(|_| dist.sample(&mut rng)).collect();
    DiffusionField::new(n, g, seed)
}

/// Tiles an `n x n` field with copies of `core`.
pub fn tile_block_periodic(core: &DiffusionField, n: usize) -> Result<DiffusionField> {
    let c = core.n();
    if n == 0 || n % c != 0 {
        return Err(invalid(format!("core side {c} does not divide {n}")));
    }
    let g = (0..n * n)
        .map(|idx| core.get((idx / n) % c, (idx % n) % c))
        .collect();
    DiffusionField::new(n, g, core.seed())
}

/// Boundary treatment for [`discretize`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    kind: BoundaryKind,
    domain_mask: Option<Vec<bool>>,
    sigma: f64,
}

impl BoundarySpec {
    pub fn periodic() -> Self {
        BoundarySpec {
            kind: BoundaryKind::Periodic,
            domain_mask: None,
            sigma: 0.0,
        }
    }

    pub fn dirichlet() -> Self {
        BoundarySpec {
            kind: BoundaryKind::Dirichlet,
            domain_mask: None,
            sigma: 0.0,
        }
    }

    pub fn new(kind: BoundaryKind) -> Self {
        match kind {
            BoundaryKind::Periodic => Self::periodic(),
            BoundaryKind::Dirichlet => Self::dirichlet(),
        }
    }

    /// Adds the dimensionless diagonal shift `eps * h^2`.
    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(invalid(format!("diagonal shift {sigma} must be finite and >= 0")));
        }
        self.sigma = sigma;
        Ok(self)
    }

    /// Restricts the unknowns to `mask` (row-major over interior vertices).
    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if self.kind != BoundaryKind::Dirichlet {
            return Err(invalid("a domain mask requires Dirichlet boundaries"));
        }
        self.domain_mask = Some(mask);
        Ok(self)
    }

    pub fn kind(&self) -> BoundaryKind {
        self.kind
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn domain_mask(&self) -> Option<&[bool]> {
        self.domain_mask.as_deref()
    }
}

/// The bilinear finite-element stencil of a vertex, scaled by `h^2`, from the
/// coefficients of its four surrounding cells, plus `sigma` on the diagonal.
pub fn vertex_stencil(g_nw: f64, g_ne: f64, g_se: f64, g_sw: f64, sigma: f64) -> Stencil {
    let mut s = Stencil::ZERO;
    s.set(1, -1, -g_nw / 3.0);
    s.set(1, 1, -g_ne / 3.0);
    s.set(-1, 1, -g_se / 3.0);
    s.set(-1, -1, -g_sw / 3.0);
    s.set(1, 0, -(g_nw + g_ne) / 6.0);
    s.set(0, 1, -(g_ne + g_se) / 6.0);
    s.set(-1, 0, -(g_se + g_sw) / 6.0);
    s.set(0, -1, -(g_sw + g_nw) / 6.0);
    s.set(0, 0, 2.0 * (g_nw + g_ne + g_se + g_sw) / 3.0 + sigma);
    s
}

/// Assembles the 9-point operator of `field` under `bc`.
pub fn discretize(field: &DiffusionField, bc: &BoundarySpec) -> Result<StencilOperator> {
    let n = field.n();
    match bc.kind {
        BoundaryKind::Periodic => {
            let mut stencils = Vec::with_capacity(n * n);
            for r in 0..n as isize {
                for c in 0..n as isize {
                    stencils.push(vertex_stencil(
                        field.get_wrapped(r, c - 1),
                        field.get_wrapped(r, c),
                        field.get_wrapped(r - 1, c),
                        field.get_wrapped(r - 1, c - 1),
                        bc.sigma,
                    ));
                }
            }
            StencilOperator::from_stencils(n, BoundaryKind::Periodic, stencils, None)
        }
        BoundaryKind::Dirichlet => {
            let side = n - 1;
            if let Some(mask) = &bc.domain_mask {
                if mask.len() != side * side {
                    return Err(Error::DimensionMismatch {
                        expected: side * side,
                        got: mask.len(),
                    });
                }
            }
            let active = |r: isize, c: isize| -> bool {
                if r < 0 || c < 0 || r >= side as isize || c >= side as isize {
                    return false;
                }
                bc.domain_mask
                    .as_ref()
                    .is_none_or(|m| m[r as usize * side + c as usize])
            };
            let mut stencils = Vec::with_capacity(side * side);
            for r in 0..side {
                for c in 0..side {
                    let (ri, ci) = (r as isize, c as isize);
                    if !active(ri, ci) {
                        stencils.push(Stencil::ZERO);
                        continue;
                    }
                    let mut s = vertex_stencil(
                        field.get(r + 1, c),
                        field.get(r + 1, c + 1),
                        field.get(r, c + 1),
                        field.get(r, c),
                        bc.sigma,
                    );
                    for (dy, dx) in OFFSETS {
                        if (dy, dx) != (0, 0) && !active(ri + dy, ci + dx) {
                            s.set(dy, dx, 0.0);
                        }
                    }
                    stencils.push(s);
                }
            }
            StencilOperator::from_stencils(
                side,
                BoundaryKind::Dirichlet,
                stencils,
                bc.domain_mask.clone(),
            )
        }
    }
}

/// Dirichlet boundary whose unknowns are the interior vertices inside a disk.
///
/// The disk is centred on the interior vertex grid and spans
/// `diameter_vertices` lattice points along its axes: a vertex is an unknown
/// when its distance from the centre is at most `(diameter_vertices - 1) / 2`.
/// All other vertices are eliminated with zero Dirichlet values.
pub fn mask_disk(field: &DiffusionField, diameter_vertices: usize) -> Result<BoundarySpec> {
    let side = field.n() - 1;
    if diameter_vertices == 0 || diameter_vertices > side {
        return Err(invalid(format!(
            "disk diameter {diameter_vertices} does not fit the {side}-vertex grid"
        )));
    }
    let center = (side as f64 - 1.0) / 2.0;
    let radius = (diameter_vertices as f64 - 1.0) / 2.0;
    let mask = (0..side * side)
        .map(|idx| {
            let (r, c) = ((idx / side) as f64, (idx % side) as f64);
            let d2 = (r - center).powi(2) + (c - center).powi(2);
            d2 <= radius * radius + 1e-9
        })
        .collect();
    BoundarySpec::dirichlet().with_mask(mask)
}
