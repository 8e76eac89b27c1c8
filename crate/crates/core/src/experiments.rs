//! Convergence experiments on Dirichlet problems and their CSV output.
//!
//! Every experiment draws instance `k` from seed `spec.seed + k`, so all
//! builders see identical operators. Grid sizes count cells per side: grid
//! 64 has 63 x 63 interior unknowns.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fourier::check::{run_suite, CheckOptions, CheckReport};
use crate::multigrid::{
    asymptotic_factor, dense_error_propagation, spectral_radius_dense, two_grid_spectral_radius, CycleConfig,
    CycleKind, GridHierarchy, PowerOptions, DEFAULT_DENSE_CAP,
};
use crate::problem::{discretize, mask_disk, sample_field, BoundarySpec, ProblemDistribution};
use crate::prolong::{build_prolongation, Builder};
use crate::train::MlpModel;

/// Unknown count up to which spectral radii come from a dense eigensolve.
pub const DENSE_SPECTRAL_LIMIT: usize = 400;

/// Consecutive cycles with factor above one that flag a run as divergent.
pub const DIVERGENCE_RUN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ExperimentKind {
    Spectral,
    Cycles,
    Success,
    Disk,
    EpsSweep,
    FourierCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuilderKind {
    Bilinear,
    Blackbox,
    Learned,
}

impl BuilderKind {
    pub fn name(self) -> &'static str {
        match self {
            BuilderKind::Bilinear => "bilinear",
            BuilderKind::Blackbox => "blackbox",
            BuilderKind::Learned => "learned",
        }
    }

    pub fn resolve(self, model: Option<&MlpModel>) -> Result<Builder<'_>> {
        match self {
            BuilderKind::Bilinear => Ok(Builder::Bilinear),
            BuilderKind::Blackbox => Ok(Builder::BlackBox),
            BuilderKind::Learned => model
                .map(Builder::Learned)
                .ok_or_else(|| invalid("the learned builder needs a model")),
        }
    }
}

impl std::str::FromStr for BuilderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bilinear" => Ok(BuilderKind::Bilinear),
            "blackbox" | "black-box" => Ok(BuilderKind::Blackbox),
            "learned" | "network" => Ok(BuilderKind::Learned),
            other => Err(invalid(format!("unknown builder {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Cells per side.
    pub grid_sides: Vec<usize>,
    pub cycle_kinds: Vec<CycleKind>,
    pub cycles: usize,
    pub instance_count: usize,
    pub distribution: ProblemDistribution,
    pub builders: Vec<BuilderKind>,
    pub model_path: Option<PathBuf>,
    pub seed: u64,
    pub output_path: Option<PathBuf>,
    /// Diagonal shift `eps h^2` for every operator.
    pub sigma: f64,
    /// Shifts swept by the eps-sweep experiment.
    pub sigmas: Vec<f64>,
    /// Disk diameter in lattice points; defaults to the interior side.
    pub disk_diameter: Option<usize>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            kind: ExperimentKind::Spectral,
            grid_sides: vec![64],
            cycle_kinds: vec![CycleKind::TwoGrid],
            cycles: 40,
            instance_count: 100,
            distribution: ProblemDistribution::default(),
            builders: vec![BuilderKind::Blackbox],
            model_path: None,
            seed: 0,
            output_path: None,
            sigma: 0.0,
            sigmas: vec![1e-8, 1e-6, 1e-4, 1e-2],
            disk_diameter: None,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.instance_count == 0 {
            return Err(invalid("instance count must be at least 1"));
        }
        if self.builders.is_empty() {
            return Err(invalid("at least one builder is required"));
        }
        if self.grid_sides.is_empty() || self.cycle_kinds.is_empty() {
            return Err(invalid("grid sides and cycle kinds must be nonempty"));
        }
        if let Some(&g) = self.grid_sides.iter().find(|&&g| g < 4 || g % 2 != 0) {
            return Err(invalid(format!("grid {g} must be even and at least 4")));
        }
        if self.cycles == 0 {
            return Err(invalid("cycles must be positive"));
        }
        if !(self.sigma >= 0.0) || self.sigmas.iter().any(|s| !(*s >= 0.0)) {
            return Err(invalid("diagonal shifts must be nonnegative"));
        }
        self.distribution.validate()
    }

    fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.instance_count as u64).map(move |k| self.seed.wrapping_add(k))
    }
}

/// One instance run with one builder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentRecord {
    pub seed: u64,
    pub grid: usize,
    pub builder: String,
    pub cycle: String,
    pub sigma: f64,
    pub factors: Vec<f64>,
    pub asymptotic: Option<f64>,
    pub spectral_radius: Option<f64>,
    pub wall_time_ms: f64,
    pub flagged: bool,
    pub flag: Option<String>,
}

impl ExperimentRecord {
    fn new(seed: u64, grid: usize, builder: &str, cycle: CycleKind, sigma: f64) -> Self {
        ExperimentRecord {
            seed,
            grid,
            builder: builder.into(),
            cycle: cycle.name().into(),
            sigma,
            factors: Vec::new(),
            asymptotic: None,
            spectral_radius: None,
            wall_time_ms: 0.0,
            flagged: false,
            flag: None,
        }
    }

    fn flag(&mut self, why: impl Into<String>) {
        self.flagged = true;
        self.flag = Some(why.into());
    }

    /// The per-instance value: spectral radius or asymptotic factor.
    pub fn value(&self) -> Option<f64> {
        self.spectral_radius.or(self.asymptotic)
    }
}

/// Problem geometry of one instance.
#[derive(Debug, Clone, Copy)]
enum Domain {
    Square,
    Disk(usize),
}

fn operator_for(spec: &ExperimentSpec, seed: u64, grid: usize, sigma: f64, domain: Domain) -> Result<crate::StencilOperator> {
    let field = sample_field(&spec.distribution, grid, seed)?;
    let bc = match domain {
        Domain::Square => BoundarySpec::dirichlet(),
        Domain::Disk(d) => mask_disk(&field, d)?,
    }
    .with_sigma(sigma)?;
    discretize(&field, &bc)
}

fn flaggable(e: &Error) -> bool {
    matches!(
        e,
        Error::SingularSolve(_) | Error::DegenerateStencil { .. } | Error::NonFinite(_) | Error::FallbackNeeded(_)
    )
}

/// Spectral radius of the two-grid matrix.
fn spectral_record(
    spec: &ExperimentSpec,
    seed: u64,
    grid: usize,
    builder: BuilderKind,
    model: Option<&MlpModel>,
) -> Result<ExperimentRecord> {
    let start = Instant::now();
    let mut rec = ExperimentRecord::new(seed, grid, builder.name(), CycleKind::TwoGrid, spec.sigma);
    let a = operator_for(spec, seed, grid, spec.sigma, Domain::Square)?;
    let cfg = CycleConfig::default();
    let b = builder.resolve(model)?;
    let outcome = (|| -> Result<(f64, bool)> {
        if a.active_count() <= DENSE_SPECTRAL_LIMIT {
            let p = build_prolongation(&a, b)?;
            let m = dense_error_propagation(&a, &p, &cfg, DEFAULT_DENSE_CAP)?;
            let rho = spectral_radius_dense(&m).ok_or_else(|| Error::SingularSolve("Schur iteration".into()))?;
            Ok((rho, true))
        } else {
            let h = GridHierarchy::for_config(a.clone(), b, &cfg)?;
            let est = two_grid_spectral_radius(&h, &cfg, PowerOptions { seed, ..PowerOptions::default() })?;
            Ok((est.rho, est.converged))
        }
    })();
    match outcome {
        Ok((rho, converged)) => {
            rec.spectral_radius = Some(rho);
            if !converged {
                rec.flag("power iteration did not converge");
            }
        }
        Err(e) if flaggable(&e) => rec.flag(e.to_string()),
        Err(e) => return Err(e),
    }
    rec.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(rec)
}

/// Homogeneous cycling from a random initial error.
#[allow(clippy::too_many_arguments)]
fn cycle_record(
    spec: &ExperimentSpec,
    seed: u64,
    grid: usize,
    builder: BuilderKind,
    kind: CycleKind,
    sigma: f64,
    domain: Domain,
    model: Option<&MlpModel>,
) -> Result<ExperimentRecord> {
    let start = Instant::now();
    let mut rec = ExperimentRecord::new(seed, grid, builder.name(), kind, sigma);
    let a = operator_for(spec, seed, grid, sigma, domain)?;
    let cfg = CycleConfig::with_kind(kind);
    let b = builder.resolve(model)?;
    let outcome = GridHierarchy::for_config(a, b, &cfg).and_then(|h| asymptotic_factor(&h, &cfg, seed ^ 0x5eed, spec.cycles));
    match outcome {
        Ok(run) => {
            if run.flagged {
                rec.flag("error norm overflowed or vanished");
            }
            let mut streak = 0;
            for &f in &run.factors {
                streak = if f > 1.0 { streak + 1 } else { 0 };
                if streak >= DIVERGENCE_RUN {
                    rec.flag("diverged");
                    break;
                }
            }
            rec.asymptotic = run.factors.last().copied();
            rec.factors = run.factors;
        }
        Err(e) if flaggable(&e) => rec.flag(e.to_string()),
        Err(e) => return Err(e),
    }
    rec.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(rec)
}

fn collect_ordered<F>(jobs: Vec<(u64, usize, BuilderKind, CycleKind, f64)>, f: F) -> Result<Vec<ExperimentRecord>>
where
    F: Fn(u64, usize, BuilderKind, CycleKind, f64) -> Result<ExperimentRecord> + Sync,
{
    jobs.into_par_iter()
        .map(|(seed, grid, b, k, sigma)| f(seed, grid, b, k, sigma))
        .collect()
}

fn jobs(spec: &ExperimentSpec, cycles: &[CycleKind], sigmas: &[f64]) -> Vec<(u64, usize, BuilderKind, CycleKind, f64)> {
    let mut out = Vec::new();
    for &sigma in sigmas {
        for &grid in &spec.grid_sides {
            for &kind in cycles {
                for &b in &spec.builders {
                    for seed in spec.seeds() {
                        out.push((seed, grid, b, kind, sigma));
                    }
                }
            }
        }
    }
    out
}

/// Two-grid spectral radius for each instance and builder.
pub fn run_spectral(spec: &ExperimentSpec, model: Option<&MlpModel>) -> Result<Vec<ExperimentRecord>> {
    spec.validate()?;
    collect_ordered(jobs(spec, &[CycleKind::TwoGrid], &[spec.sigma]), |seed, grid, b, _, _| {
        spectral_record(spec, seed, grid, b, model)
    })
}

/// `spec.cycles` cycles per instance, builder and cycle kind.
pub fn run_cycles(spec: &ExperimentSpec, model: Option<&MlpModel>) -> Result<Vec<ExperimentRecord>> {
    spec.validate()?;
    collect_ordered(jobs(spec, &spec.cycle_kinds, &[spec.sigma]), |seed, grid, b, k, sigma| {
        cycle_record(spec, seed, grid, b, k, sigma, Domain::Square, model)
    })
}

/// Cycles on the disk inscribed in each grid.
pub fn run_disk(spec: &ExperimentSpec, model: Option<&MlpModel>) -> Result<Vec<ExperimentRecord>> {
    spec.validate()?;
    collect_ordered(jobs(spec, &spec.cycle_kinds, &[spec.sigma]), |seed, grid, b, k, sigma| {
        let d = spec.disk_diameter.unwrap_or(grid - 1);
        cycle_record(spec, seed, grid, b, k, sigma, Domain::Disk(d), model)
    })
}

/// Cycles for every shift in `spec.sigmas`.
pub fn run_eps_sweep(spec: &ExperimentSpec, model: Option<&MlpModel>) -> Result<Vec<ExperimentRecord>> {
    spec.validate()?;
    collect_ordered(jobs(spec, &spec.cycle_kinds, &spec.sigmas), |seed, grid, b, k, sigma| {
        cycle_record(spec, seed, grid, b, k, sigma, Domain::Square, model)
    })
}

/// Success of `challenger` over `baseline` for one (grid, cycle, sigma).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SuccessRow {
    pub grid: usize,
    pub cycle: String,
    pub sigma: f64,
    pub challenger: String,
    pub baseline: String,
    pub pairs: usize,
    pub wins: usize,
    pub rate: f64,
}

type Key = (usize, String, u64);

fn key(r: &ExperimentRecord) -> Key {
    (r.grid, r.cycle.clone(), r.sigma.to_bits())
}

/// Fraction of paired instances where `challenger`'s value is strictly
/// below `baseline`'s. Both builders must cover the same seeds.
pub fn success_rates(records: &[ExperimentRecord], challenger: &str, baseline: &str) -> Result<Vec<SuccessRow>> {
    let mut groups: Vec<Key> = Vec::new();
    for r in records {
        if (r.builder == challenger || r.builder == baseline) && !groups.contains(&key(r)) {
            groups.push(key(r));
        }
    }
    let mut out = Vec::new();
    for g in groups {
        let pick = |name: &str| -> Vec<&ExperimentRecord> {
            let mut v: Vec<&ExperimentRecord> = records.iter().filter(|r| r.builder == name && key(r) == g).collect();
            v.sort_by_key(|r| r.seed);
            v
        };
        let (ch, bl) = (pick(challenger), pick(baseline));
        let seeds = |v: &[&ExperimentRecord]| v.iter().map(|r| r.seed).collect::<Vec<_>>();
        if seeds(&ch) != seeds(&bl) {
            return Err(invalid(format!(
                "builders {challenger} and {baseline} were run on different seeds"
            )));
        }
        let mut pairs = 0;
        let mut wins = 0;
        for (c, b) in ch.iter().zip(&bl) {
            if c.flagged || b.flagged {
                continue;
            }
            if let (Some(x), Some(y)) = (c.value(), b.value()) {
                pairs += 1;
                if x < y {
                    wins += 1;
                }
            }
        }
        out.push(SuccessRow {
            grid: g.0,
            cycle: g.1,
            sigma: f64::from_bits(g.2),
            challenger: challenger.into(),
            baseline: baseline.into(),
            pairs,
            wins,
            rate: if pairs > 0 { wins as f64 / pairs as f64 } else { f64::NAN },
        });
    }
    Ok(out)
}

/// Mean and standard deviation of the per-instance value for one
/// (builder, grid, cycle, sigma); flagged records are excluded and counted.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SummaryRow {
    pub builder: String,
    pub grid: usize,
    pub cycle: String,
    pub sigma: f64,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub success_rate: Option<f64>,
    pub count: usize,
    pub flagged: usize,
}

pub fn summarize(records: &[ExperimentRecord]) -> Vec<SummaryRow> {
    let mut groups: Vec<(String, Key)> = Vec::new();
    for r in records {
        let g = (r.builder.clone(), key(r));
        if !groups.contains(&g) {
            groups.push(g);
        }
    }
    let has_baseline = records.iter().any(|r| r.builder == "blackbox");
    let success = if has_baseline {
        success_rates(records, "learned", "blackbox").unwrap_or_default()
    } else {
        Vec::new()
    };
    groups
        .into_iter()
        .map(|(builder, g)| {
            let members: Vec<&ExperimentRecord> = records.iter().filter(|r| r.builder == builder && key(r) == g).collect();
            let mut vals: Vec<f64> = members.iter().filter(|r| !r.flagged).filter_map(|r| r.value()).collect();
            let count = vals.len();
            let mean = vals.iter().sum::<f64>() / count as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
            vals.sort_by(f64::total_cmp);
            let median = if count == 0 {
                f64::NAN
            } else if count % 2 == 1 {
                vals[count / 2]
            } else {
                0.5 * (vals[count / 2 - 1] + vals[count / 2])
            };
            let success_rate = if builder == "learned" {
                success
                    .iter()
                    .find(|s| (s.grid, s.cycle.clone(), s.sigma.to_bits()) == g)
                    .map(|s| s.rate)
            } else {
                None
            };
            SummaryRow {
                builder,
                grid: g.0,
                cycle: g.1,
                sigma: f64::from_bits(g.2),
                mean,
                std: var.sqrt(),
                median,
                success_rate,
                count,
                flagged: members.len() - count,
            }
        })
        .collect()
}

#[derive(Serialize)]
struct LongRow<'a> {
    seed: u64,
    grid: usize,
    builder: &'a str,
    cycle: &'a str,
    k: usize,
    factor: f64,
}

/// Long-form CSV `seed, grid, builder, cycle, k, factor`: one row per cycle,
/// or a single `k = 0` row holding the spectral radius.
pub fn write_long_csv<W: Write>(records: &[ExperimentRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        if let Some(rho) = r.spectral_radius {
            w.serialize(LongRow {
                seed: r.seed,
                grid: r.grid,
                builder: &r.builder,
                cycle: &r.cycle,
                k: 0,
                factor: rho,
            })?;
            continue;
        }
        for (k, &f) in r.factors.iter().enumerate() {
            w.serialize(LongRow {
                seed: r.seed,
                grid: r.grid,
                builder: &r.builder,
                cycle: &r.cycle,
                k: k + 1,
                factor: f,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SummaryCsvRow<'a> {
    builder: &'a str,
    grid: usize,
    cycle: &'a str,
    mean: f64,
    std: f64,
    success_rate: Option<f64>,
}

/// Summary CSV `builder, grid, cycle, mean, std, successRate`.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(SummaryCsvRow {
            builder: &r.builder,
            grid: r.grid,
            cycle: &r.cycle,
            mean: r.mean,
            std: r.std,
            success_rate: r.success_rate,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Success-rate CSV `grid, cycle, sigma, challenger, baseline, pairs, wins, rate`.
pub fn write_success_csv<W: Write>(rows: &[SuccessRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the dense-versus-fast Fourier equivalence suite.
pub fn run_fourier_check(spec: &ExperimentSpec, corrupt_phase: bool) -> Result<CheckReport> {
    run_suite(&CheckOptions {
        seed: spec.seed,
        corrupt_phase,
        ..CheckOptions::default()
    })
}

/// Check report CSV `name, config, deviation, tolerance, passed`.
pub fn write_check_csv<W: Write>(report: &CheckReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in &report.results {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
