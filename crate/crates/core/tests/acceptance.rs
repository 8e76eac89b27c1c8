//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when a gated criterion fails. Target criteria are reported but
//! never gate.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::Rng as _;

use learnmg::experiments::{run_cycles, run_disk, run_spectral, success_rates, summarize, BuilderKind, ExperimentKind, ExperimentRecord, ExperimentSpec};
use learnmg::fourier::check::{run_suite, CheckOptions, CheckReport};
use learnmg::multigrid::{dense_coarse_correction, dense_error_propagation, solve_cycle, DEFAULT_DENSE_CAP};
use learnmg::problem::{discretize, sample_field};
use learnmg::prolong::build_prolongation;
use learnmg::train::{batch_loss, loss_and_grad, run_curriculum, TrainInstance};
use learnmg::{BoundarySpec, Builder, CycleConfig, CycleKind, DiffusionField, GridHierarchy, MlpModel, ProblemDistribution, TrainConfig};

struct Line {
    name: &'static str,
    gated: bool,
    passed: bool,
    detail: String,
}

fn line(name: &'static str, passed: bool, detail: String) -> Line {
    Line { name, gated: true, passed, detail }
}

fn target(name: &'static str, passed: bool, detail: String) -> Line {
    Line { name, gated: false, passed, detail }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn worst(report: &CheckReport, name: &str) -> (f64, bool) {
    let rows: Vec<_> = report.results.iter().filter(|r| r.name == name).collect();
    let dev = rows.iter().fold(0.0f64, |a, r| a.max(r.deviation));
    (dev, !rows.is_empty() && rows.iter().all(|r| r.passed))
}

fn fourier() -> Vec<Line> {
    let (report, took) = timed(|| run_suite(&CheckOptions { loss_seeds: 0, ..CheckOptions::default() }).unwrap());
    let (u, u_ok) = worst(&report, "unitarity");
    let (b, b_ok) = worst(&report, "block-diagonalization");
    let (t1, t1_ok) = worst(&report, "fast-blocks-1d");
    let (t2, t2_ok) = worst(&report, "fast-blocks-2d");

    let (loss, loss_took) = timed(|| run_suite(&CheckOptions { loss_seeds: 20, seed: 1, ..CheckOptions::default() }).unwrap());
    let (l, l_ok) = worst(&loss, "loss-equivalence");
    vec![
        line(
            "W unitarity and block diagonalization (12,3),(16,4)",
            u_ok && b_ok && b < 1e-10 && took < Duration::from_secs(1),
            format!("unitarity {u:.1e}, off-block {b:.1e}, {took:.2?}"),
        ),
        line(
            "fast mode blocks match dense transform (1D and 2D)",
            t1_ok && t2_ok && t1.max(t2) < 1e-10,
            format!("1D {t1:.1e}, 2D {t2:.1e}"),
        ),
        line(
            "Fourier loss matches dense Frobenius norm, 20 seeds n=8 c=4",
            l_ok && l < 1e-6 && loss_took < Duration::from_secs(10),
            format!("max relative {l:.1e}, {loss_took:.2?}"),
        ),
    ]
}

fn random_vec(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = learnmg::rng_from_seed(seed);
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn multigrid() -> Vec<Line> {
    let cfg = CycleConfig::default();
    let mut cycle_dev = 0.0f64;
    let mut proj_dev = 0.0f64;
    for grid in [4, 6, 8] {
        for seed in 0..10u64 {
            for builder in [Builder::Bilinear, Builder::BlackBox] {
                let field = sample_field(&ProblemDistribution::default(), grid, seed).unwrap();
                let a = discretize(&field, &BoundarySpec::dirichlet()).unwrap();
                let h = GridHierarchy::for_config(a.clone(), builder, &cfg).unwrap();
                let p = h.prolongation(0);
                let m = dense_error_propagation(&a, p, &cfg, DEFAULT_DENSE_CAP).unwrap();
                let e = random_vec(a.len(), seed + 99);
                let out = solve_cycle(&h, &vec![0.0; a.len()], &e, &cfg).unwrap();
                let want = &m * DVector::from_vec(e);
                cycle_dev = cycle_dev.max((DVector::from_vec(out) - want).amax());
                let c = dense_coarse_correction(&a, p, DEFAULT_DENSE_CAP).unwrap();
                proj_dev = proj_dev.max((&c * &c - &c).amax()).max((&c * p.to_dense()).amax());
            }
        }
    }

    let mut const_dev = 0.0f64;
    for seed in 0..10u64 {
        let field = sample_field(&ProblemDistribution::default(), 16, seed).unwrap();
        let a = discretize(&field, &BoundarySpec::periodic()).unwrap();
        for builder in [Builder::Bilinear, Builder::BlackBox] {
            let p = build_prolongation(&a, builder).unwrap().to_dense();
            let ones = DVector::from_element(p.ncols(), 1.0);
            const_dev = const_dev.max((p * ones).add_scalar(-1.0).amax());
        }
    }

    // Bilinear weights: 1/2 on edge points, 1/4 on cell centers.
    let mut bb_dev = 0.0f64;
    for (g, bc) in [(2.5, BoundarySpec::dirichlet()), (0.7, BoundarySpec::periodic())] {
        let a = discretize(&DiffusionField::constant(16, g).unwrap(), &bc).unwrap();
        let bb = build_prolongation(&a, Builder::BlackBox).unwrap().to_dense();
        let side = if bc == BoundarySpec::dirichlet() { 15 } else { 16 };
        let off = if side == 15 { 1 } else { 0 };
        let csides = if side == 15 { 7 } else { 8 };
        for j in 0..csides * csides {
            let (cy, cx) = (j / csides, j % csides);
            let (fy, fx) = (2 * cy + off, 2 * cx + off);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let y = (fy as i64 + dy).rem_euclid(16) as usize;
                    let x = (fx as i64 + dx).rem_euclid(16) as usize;
                    if y >= side || x >= side {
                        continue;
                    }
                    let want = 1.0 / (1 << (dy.abs() + dx.abs())) as f64;
                    bb_dev = bb_dev.max((bb[(y * side + x, j)] - want).abs());
                }
            }
        }
        let total: f64 = bb.iter().sum();
        let expect = (csides * csides) as f64 * 4.0;
        bb_dev = bb_dev.max((total - expect).abs());
    }

    vec![
        line(
            "two-grid cycle equals dense M e on grids up to 8",
            cycle_dev < 1e-10,
            format!("max deviation {cycle_dev:.1e} over 60 instances"),
        ),
        line(
            "coarse correction is a projection annihilating P",
            proj_dev < 1e-10,
            format!("max |C^2 - C|, |CP| = {proj_dev:.1e}"),
        ),
        line("prolongation preserves constants (periodic)", const_dev < 1e-10, format!("max |P1 - 1| = {const_dev:.1e}")),
        line(
            "Black-Box on constant coefficients gives weights 1/2, 1/4",
            bb_dev < 1e-12,
            format!("max deviation {bb_dev:.1e}"),
        ),
    ]
}

fn mean_of(records: &[ExperimentRecord], builder: &str, cycle: &str) -> (f64, f64, usize, usize) {
    summarize(records)
        .into_iter()
        .find(|r| r.builder == builder && r.cycle == cycle)
        .map(|r| (r.mean, r.std, r.count, r.flagged))
        .unwrap_or((f64::NAN, f64::NAN, 0, 0))
}

fn desk_model() -> Option<(PathBuf, MlpModel)> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models/desk.json");
    MlpModel::load(&path).ok().map(|m| (path, m))
}

fn reproduction(model: Option<&MlpModel>) -> Vec<Line> {
    let mut out = Vec::new();

    let mut spec = ExperimentSpec {
        kind: ExperimentKind::Spectral,
        grid_sides: vec![64],
        instance_count: 100,
        builders: vec![BuilderKind::Bilinear, BuilderKind::Blackbox],
        ..ExperimentSpec::default()
    };
    if model.is_some() {
        spec.builders.push(BuilderKind::Learned);
    }
    let (spectral, took) = timed(|| run_spectral(&spec, model).unwrap());
    let (bb, bb_std, bb_n, bb_flag) = mean_of(&spectral, "blackbox", "two-grid");
    let (bl, _, _, _) = mean_of(&spectral, "bilinear", "two-grid");
    out.push(line(
        "Black-Box two-grid spectral radius at 64, 100 seeds, in [0.10, 0.20]",
        (0.10..=0.20).contains(&bb) && bb_n + bb_flag == 100,
        format!("{bb:.4} +- {bb_std:.4} ({bb_n} ok, {bb_flag} flagged; bilinear {bl:.4}), {took:.1?}"),
    ));

    let spec = ExperimentSpec {
        kind: ExperimentKind::Cycles,
        grid_sides: vec![256],
        cycle_kinds: vec![CycleKind::W],
        instance_count: 5,
        builders: vec![BuilderKind::Blackbox],
        ..ExperimentSpec::default()
    };
    let (w256, took) = timed(|| run_cycles(&spec, None).unwrap());
    let (w, w_std, _, _) = mean_of(&w256, "blackbox", "w");
    out.push(line(
        "Black-Box W-cycle asymptotic factor at 256 in [0.15, 0.25]",
        (0.15..=0.25).contains(&w),
        format!("{w:.4} +- {w_std:.4} over 5 seeds, {took:.1?}"),
    ));

    let mut spec = ExperimentSpec {
        kind: ExperimentKind::Disk,
        grid_sides: vec![64],
        cycle_kinds: vec![CycleKind::V, CycleKind::W],
        instance_count: 100,
        builders: vec![BuilderKind::Blackbox],
        ..ExperimentSpec::default()
    };
    if model.is_some() {
        spec.builders.push(BuilderKind::Learned);
    } else {
        spec.builders.push(BuilderKind::Bilinear);
    }
    let (disk, took) = timed(|| run_disk(&spec, model).unwrap());
    let (dw, dw_std, _, _) = mean_of(&disk, "blackbox", "w");
    let (dv, _, _, _) = mean_of(&disk, "blackbox", "v");
    let other = spec.builders[1].name();
    let (ow, _, on, _) = mean_of(&disk, other, "w");
    out.push(line(
        "disk experiment, both builders; Black-Box W factor in [0.12, 0.22]",
        (0.12..=0.22).contains(&dw) && on > 0,
        format!("Black-Box W {dw:.4} +- {dw_std:.4}, V {dv:.4}; {other} W {ow:.4}, {took:.1?}"),
    ));

    if let Some(m) = model {
        let (learned, _, _, _) = mean_of(&spectral, "learned", "two-grid");
        out.push(target(
            "learned spectral radius at 64 below Black-Box",
            learned < bb,
            format!("learned {learned:.4} vs Black-Box {bb:.4}"),
        ));
        let spec = ExperimentSpec {
            kind: ExperimentKind::Success,
            grid_sides: vec![64],
            cycle_kinds: vec![CycleKind::W],
            instance_count: 100,
            builders: vec![BuilderKind::Blackbox, BuilderKind::Learned],
            ..ExperimentSpec::default()
        };
        let recs = run_cycles(&spec, Some(m)).unwrap();
        let rate = success_rates(&recs, "learned", "blackbox").unwrap()[0].rate;
        out.push(target(
            "learned W-cycle success rate at 64 at least 70%",
            rate >= 0.70,
            format!("{:.0}% over 100 paired seeds", 100.0 * rate),
        ));
    }
    out
}

fn learning() -> Vec<Line> {
    let mut model = MlpModel::new(4, 16, 3).unwrap();
    let mut rng = learnmg::rng_from_seed(4);
    let noisy: Vec<f64> = model.params().iter().map(|v| v + 0.05 * rng.random_range(-1.0..1.0)).collect();
    model.set_params(&noisy).unwrap();
    let batch: Vec<TrainInstance> = (0..2)
        .map(|s| {
            let field = sample_field(&ProblemDistribution::default(), 4, 50 + s).unwrap();
            TrainInstance::new(discretize(&field, &BoundarySpec::periodic()).unwrap(), 8).unwrap()
        })
        .collect();
    let cfg = CycleConfig::default();
    let lg = loss_and_grad(&model, &batch, &cfg).unwrap();
    let p0 = model.params();
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < 20 {
        let i = rng.random_range(0..p0.len());
        if lg.grad[i].abs() < 1e-8 {
            continue;
        }
        let eval = |v: f64| {
            let mut p = p0.clone();
            p[i] = v;
            let mut m = model.clone();
            m.set_params(&p).unwrap();
            batch_loss(&m, &batch, &cfg).unwrap().0
        };
        let fd = (eval(p0[i] + h) - eval(p0[i] - h)) / (2.0 * h);
        worst = worst.max((lg.grad[i] - fd).abs() / fd.abs());
        checked += 1;
    }

    let smoke = TrainConfig { stages: 1, ..TrainConfig::smoke() };
    let (outcome, took) = timed(|| run_curriculum(&smoke).unwrap());
    let epoch_mean = |e: usize| {
        let v: Vec<f64> = outcome.log.iter().filter(|r| r.stage == 1 && r.epoch == e).map(|r| r.loss).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let last = outcome.log.iter().map(|r| r.epoch).max().unwrap_or(1);
    let (first, trailing) = (epoch_mean(1), epoch_mean(last));

    vec![
        line(
            "loss gradient matches central differences (n=8, c=4)",
            worst < 1e-4,
            format!("max relative error {worst:.1e} over 20 parameters"),
        ),
        line(
            "smoke training decreases stage-1 loss",
            trailing < first,
            format!("epoch 1 mean {first:.4} -> epoch {last} mean {trailing:.4} (lr {:.2e}), {took:.1?}", outcome.lr),
        ),
    ]
}

fn main() {
    // Ignore libtest flags such as --nocapture or a test-name filter.
    let model = desk_model();
    if let Some((path, _)) = &model {
        println!("using trained model {}", path.display());
    } else {
        println!("no trained model found; target criteria skipped");
    }
    let mut lines = Vec::new();
    lines.extend(fourier());
    lines.extend(multigrid());
    lines.extend(learning());
    lines.extend(reproduction(model.as_ref().map(|(_, m)| m)));

    let mut failed = 0;
    for l in &lines {
        let status = if l.passed { "PASS" } else { "FAIL" };
        let kind = if l.gated { "" } else { " [target]" };
        println!("{status}{kind} {}: {}", l.name, l.detail);
        if l.gated && !l.passed {
            failed += 1;
        }
    }
    println!(
        "{} gated criteria, {failed} failed; {} targets",
        lines.iter().filter(|l| l.gated).count(),
        lines.iter().filter(|l| !l.gated).count()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
