//! `learnmg` command-line driver.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use learnmg::experiments::{
    self, run_cycles, run_disk, run_eps_sweep, run_fourier_check, run_spectral, success_rates, summarize,
    BuilderKind, ExperimentKind, ExperimentRecord, ExperimentSpec,
};
use learnmg::train::{run_curriculum_with, write_log_csv};
use learnmg::{CycleKind, MlpModel, ProblemDistribution, TrainConfig};

#[derive(Parser)]
#[command(name = "learnmg", version, about = "Multigrid prolongation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a prolongation network with the three-stage curriculum.
    Train(TrainArgs),
    /// Two-grid spectral radius per instance.
    Spectral(Common),
    /// Multigrid cycle convergence traces.
    Cycles(Common),
    /// Success rate of the learned builder over Black-Box.
    Success(Common),
    /// Cycles on a disk-shaped domain.
    Disk(Common),
    /// Cycles for a list of diagonal shifts.
    EpsSweep(Common),
    /// Dense-versus-fast Fourier equivalence checks.
    FourierCheck(FourierArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CycleArg {
    V,
    W,
    TwoGrid,
}

impl From<CycleArg> for CycleKind {
    fn from(c: CycleArg) -> Self {
        match c {
            CycleArg::V => CycleKind::V,
            CycleArg::W => CycleKind::W,
            CycleArg::TwoGrid => CycleKind::TwoGrid,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DistArg {
    Lognormal,
    Uniform01,
}

impl From<DistArg> for ProblemDistribution {
    fn from(d: DistArg) -> Self {
        match d {
            DistArg::Lognormal => ProblemDistribution::default(),
            DistArg::Uniform01 => ProblemDistribution::Uniform01,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BuilderArg {
    Bilinear,
    Blackbox,
    Learned,
}

impl From<BuilderArg> for BuilderKind {
    fn from(b: BuilderArg) -> Self {
        match b {
            BuilderArg::Bilinear => BuilderKind::Bilinear,
            BuilderArg::Blackbox => BuilderKind::Blackbox,
            BuilderArg::Learned => BuilderKind::Learned,
        }
    }
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Trained model (JSON) for the learned builder.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Cells per side; repeat or separate with commas.
    #[arg(long, value_delimiter = ',')]
    grid: Vec<usize>,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long, value_enum, value_delimiter = ',')]
    cycle: Vec<CycleArg>,
    #[arg(long, value_enum)]
    dist: Option<DistArg>,
    #[arg(long, value_enum, value_delimiter = ',')]
    builders: Vec<BuilderArg>,
    /// Cycles per instance.
    #[arg(long)]
    cycles: Option<usize>,
    /// Diagonal shift eps h^2 (eps-sweep: comma-separated list).
    #[arg(long, value_delimiter = ',')]
    sigma: Vec<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training configuration (JSON); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Where to write the model; defaults to `<out>/model.json`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum)]
    dist: Option<DistArg>,
    /// Start from the small smoke configuration.
    #[arg(long)]
    smoke: bool,
    /// Fixed learning rate instead of a sampled one.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    stages: Option<usize>,
    /// Instances per stage.
    #[arg(long)]
    stage_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    sigma_shift: Option<f64>,
    /// Print one line per optimizer step.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct FourierArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Conjugate the fast-path phases; the suite must then fail.
    #[arg(long)]
    corrupt_phase: bool,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Spectral(c) => experiment(ExperimentKind::Spectral, c),
        Command::Cycles(c) => experiment(ExperimentKind::Cycles, c),
        Command::Success(c) => experiment(ExperimentKind::Success, c),
        Command::Disk(c) => experiment(ExperimentKind::Disk, c),
        Command::EpsSweep(c) => experiment(ExperimentKind::EpsSweep, c),
        Command::FourierCheck(a) => fourier_check(a),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn train(a: TrainArgs) -> Result<ExitCode> {
    let mut cfg = match (&a.config, a.smoke) {
        (Some(p), _) => read_json(p)?,
        (None, true) => TrainConfig::smoke(),
        (None, false) => TrainConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(d) = a.dist {
        cfg.distribution = d.into();
    }
    if let Some(lr) = a.lr {
        cfg.learning_rate = Some(lr);
    }
    if let Some(s) = a.stages {
        cfg.stages = s;
    }
    if let Some(n) = a.stage_size {
        cfg.stage_sizes = [n; 3];
    }
    if let Some(e) = a.epochs {
        cfg.epochs_per_stage = e;
    }
    if let Some(s) = a.sigma_shift {
        cfg.sigma_shift = s;
    }
    cfg.validate()?;
    fs::create_dir_all(&a.out)?;
    let verbose = a.verbose;
    let mut last_epoch = (0, 0);
    let mut epoch_sum = 0.0;
    let mut epoch_steps = 0usize;
    let outcome = run_curriculum_with(&cfg, |row| {
        if verbose {
            println!("stage {} epoch {} step {} loss {:.6e}", row.stage, row.epoch, row.step, row.loss);
        }
        if (row.stage, row.epoch) != last_epoch && epoch_steps > 0 {
            println!(
                "stage {} epoch {}: mean loss {:.6e}",
                last_epoch.0,
                last_epoch.1,
                epoch_sum / epoch_steps as f64
            );
            epoch_sum = 0.0;
            epoch_steps = 0;
        }
        last_epoch = (row.stage, row.epoch);
        if row.loss.is_finite() {
            epoch_sum += row.loss;
            epoch_steps += 1;
        }
    })?;
    if epoch_steps > 0 {
        println!(
            "stage {} epoch {}: mean loss {:.6e}",
            last_epoch.0,
            last_epoch.1,
            epoch_sum / epoch_steps as f64
        );
    }
    let model_path = a.model.unwrap_or_else(|| a.out.join("model.json"));
    outcome.model.save(&model_path)?;
    write_log_csv(&outcome.log, create(&a.out.join("train_log.csv"))?)?;
    println!("learning rate {:.3e}; model written to {}", outcome.lr, model_path.display());
    Ok(ExitCode::SUCCESS)
}

fn fourier_check(a: FourierArgs) -> Result<ExitCode> {
    let spec = ExperimentSpec {
        kind: ExperimentKind::FourierCheck,
        seed: a.seed.unwrap_or(0),
        ..ExperimentSpec::default()
    };
    let report = run_fourier_check(&spec, a.corrupt_phase)?;
    for r in &report.results {
        println!(
            "{} {:<22} {:<24} deviation {:.3e} (tol {:.0e})",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.config,
            r.deviation,
            r.tolerance
        );
    }
    println!("max deviation {:.3e}", report.max_deviation());
    fs::create_dir_all(&a.out)?;
    experiments::write_check_csv(&report, create(&a.out.join("fourier_check.csv"))?)?;
    if report.passed() {
        println!("all checks passed");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("fourier check FAILED");
        Ok(ExitCode::FAILURE)
    }
}

fn defaults(kind: ExperimentKind) -> ExperimentSpec {
    let base = ExperimentSpec {
        kind,
        ..ExperimentSpec::default()
    };
    match kind {
        ExperimentKind::Spectral => ExperimentSpec {
            builders: vec![BuilderKind::Bilinear, BuilderKind::Blackbox],
            ..base
        },
        ExperimentKind::Cycles | ExperimentKind::Success => ExperimentSpec {
            cycle_kinds: vec![CycleKind::V, CycleKind::W],
            ..base
        },
        ExperimentKind::Disk => ExperimentSpec {
            cycle_kinds: vec![CycleKind::V, CycleKind::W],
            ..base
        },
        ExperimentKind::EpsSweep => ExperimentSpec {
            grid_sides: vec![256],
            cycle_kinds: vec![CycleKind::V, CycleKind::W],
            ..base
        },
        ExperimentKind::FourierCheck => base,
    }
}

fn build_spec(kind: ExperimentKind, c: &Common) -> Result<ExperimentSpec> {
    let mut spec = match &c.config {
        Some(p) => {
            let s: ExperimentSpec = read_json(p)?;
            ExperimentSpec { kind, ..s }
        }
        None => defaults(kind),
    };
    if let Some(s) = c.seed {
        spec.seed = s;
    }
    if !c.grid.is_empty() {
        spec.grid_sides = c.grid.clone();
    }
    if let Some(n) = c.instances {
        spec.instance_count = n;
    }
    if !c.cycle.is_empty() {
        spec.cycle_kinds = c.cycle.iter().map(|&k| k.into()).collect();
    }
    if let Some(d) = c.dist {
        spec.distribution = d.into();
    }
    if let Some(n) = c.cycles {
        spec.cycles = n;
    }
    if let Some(m) = &c.model {
        spec.model_path = Some(m.clone());
    }
    if !c.sigma.is_empty() {
        if kind == ExperimentKind::EpsSweep {
            spec.sigmas = c.sigma.clone();
        } else {
            spec.sigma = c.sigma[0];
        }
    }
    if !c.builders.is_empty() {
        spec.builders = c.builders.iter().map(|&b| b.into()).collect();
    } else if kind == ExperimentKind::Success {
        spec.builders = vec![BuilderKind::Blackbox, BuilderKind::Learned];
    } else if spec.model_path.is_some() && !spec.builders.contains(&BuilderKind::Learned) {
        spec.builders.push(BuilderKind::Learned);
    }
    if c.out != Path::new("out") || spec.output_path.is_none() {
        spec.output_path = Some(c.out.clone());
    }
    if kind == ExperimentKind::Success
        && !(spec.builders.contains(&BuilderKind::Learned) && spec.builders.contains(&BuilderKind::Blackbox))
    {
        bail!("the success experiment compares the learned and blackbox builders");
    }
    spec.validate()?;
    Ok(spec)
}

fn experiment(kind: ExperimentKind, c: Common) -> Result<ExitCode> {
    let spec = build_spec(kind, &c)?;
    let model = match &spec.model_path {
        Some(p) => Some(MlpModel::load(p).with_context(|| format!("loading model {}", p.display()))?),
        None => None,
    };
    if spec.builders.contains(&BuilderKind::Learned) && model.is_none() {
        bail!("the learned builder needs --model");
    }
    let records = match kind {
        ExperimentKind::Spectral => run_spectral(&spec, model.as_ref())?,
        ExperimentKind::Cycles | ExperimentKind::Success => run_cycles(&spec, model.as_ref())?,
        ExperimentKind::Disk => run_disk(&spec, model.as_ref())?,
        ExperimentKind::EpsSweep => run_eps_sweep(&spec, model.as_ref())?,
        ExperimentKind::FourierCheck => unreachable!(),
    };
    let out = spec.output_path.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out)?;
    let stem = match kind {
        ExperimentKind::Spectral => "spectral",
        ExperimentKind::Cycles => "cycles",
        ExperimentKind::Success => "success",
        ExperimentKind::Disk => "disk",
        ExperimentKind::EpsSweep => "eps_sweep",
        ExperimentKind::FourierCheck => unreachable!(),
    };
    if kind == ExperimentKind::EpsSweep {
        for &sigma in &spec.sigmas {
            let part: Vec<ExperimentRecord> = records.iter().filter(|r| r.sigma == sigma).cloned().collect();
            write_outputs(&out, &format!("{stem}_sigma{sigma:e}"), &part)?;
        }
    } else {
        write_outputs(&out, stem, &records)?;
    }
    serde_json::to_writer_pretty(create(&out.join(format!("{stem}_records.json")))?, &records)?;
    if spec.builders.contains(&BuilderKind::Learned) && spec.builders.contains(&BuilderKind::Blackbox) {
        let rows = success_rates(&records, "learned", "blackbox")?;
        experiments::write_success_csv(&rows, create(&out.join(format!("{stem}_success.csv")))?)?;
        for r in &rows {
            println!(
                "success learned vs blackbox: grid {} {} sigma {:e}: {}/{} = {:.1}%",
                r.grid,
                r.cycle,
                r.sigma,
                r.wins,
                r.pairs,
                100.0 * r.rate
            );
        }
    }
    println!("outputs written to {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn write_outputs(out: &Path, stem: &str, records: &[ExperimentRecord]) -> Result<()> {
    let summary = summarize(records);
    for s in &summary {
        println!(
            "{:<9} grid {:>5} {:<8} sigma {:<7e} mean {:.4} std {:.4} median {:.4} ({} ok, {} flagged)",
            s.builder, s.grid, s.cycle, s.sigma, s.mean, s.std, s.median, s.count, s.flagged
        );
    }
    experiments::write_long_csv(records, create(&out.join(format!("{stem}_long.csv")))?)?;
    experiments::write_summary_csv(&summary, create(&out.join(format!("{stem}_summary.csv")))?)?;
    serde_json::to_writer_pretty(create(&out.join(format!("{stem}_summary.json")))?, &summary)?;
    Ok(())
}
