//! The three-stage training curriculum.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::loss::{batch_loss, loss_and_grad, TrainInstance};
use super::mlp::MlpModel;
use crate::error::{invalid, Result};
use crate::multigrid::{galerkin, CycleConfig};
use crate::operator::StencilOperator;
use crate::problem::{discretize, sample_field, BoundarySpec, ProblemDistribution};
use crate::prolong::{build_prolongation, Builder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct TrainConfig {
    /// Instances generated for each stage.
    pub stage_sizes: [usize; 3],
    pub epochs_per_stage: usize,
    pub block_side: usize,
    /// Fine sides of the tiled problems in stages 1, 2 and 3. Stage 2 also
    /// samples its non-periodic fields on a grid of this side.
    pub stage_grid_sides: [usize; 3],
    /// How many stages to run (1 to 3).
    pub stages: usize,
    pub batch_size: usize,
    /// The learning rate is `10^{-U(lo, hi)}`.
    pub lr_exponent_range: [f64; 2],
    /// Overrides the sampled learning rate.
    pub learning_rate: Option<f64>,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Diagonal shift `eps h^2` added to every training operator.
    pub sigma_shift: f64,
    pub depth: usize,
    pub width: usize,
    pub distribution: ProblemDistribution,
    pub input_normalization: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stage_sizes: [2048; 3],
            epochs_per_stage: 2,
            block_side: 8,
            stage_grid_sides: [16, 16, 32],
            stages: 3,
            batch_size: 32,
            lr_exponent_range: [4.0, 6.0],
            learning_rate: None,
            adam: AdamConfig::default(),
            seed: 0,
            sigma_shift: 0.0,
            depth: 8,
            width: 64,
            distribution: ProblemDistribution::default(),
            input_normalization: true,
        }
    }
}

impl TrainConfig {
    /// Small configuration for smoke runs and tests.
    pub fn smoke() -> Self {
        TrainConfig {
            stage_sizes: [64; 3],
            depth: 4,
            width: 32,
            batch_size: 16,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.block_side;
        if c < 4 || c % 2 != 0 {
            return Err(invalid(format!("block side must be even and >= 4, got {c}")));
        }
        if !(1..=3).contains(&self.stages) {
            return Err(invalid("stages must be 1, 2 or 3"));
        }
        if self.stage_grid_sides.iter().any(|&s| s % c != 0) {
            return Err(invalid("stage grid sides must be multiples of the block side"));
        }
        if self.stage_grid_sides[1] != 2 * c {
            return Err(invalid("stage 2 fields must coarsen to one block"));
        }
        if self.batch_size == 0 || self.epochs_per_stage == 0 || self.stage_sizes.contains(&0) {
            return Err(invalid("batch size, epochs and stage sizes must be positive"));
        }
        let [lo, hi] = self.lr_exponent_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(invalid("bad learning-rate exponent range"));
        }
        if self.learning_rate.is_some_and(|lr| !(lr > 0.0 && lr.is_finite())) {
            return Err(invalid("learning rate must be positive"));
        }
        if !(self.sigma_shift >= 0.0 && self.sigma_shift.is_finite()) {
            return Err(invalid("sigma shift must be nonnegative"));
        }
        self.distribution.validate()
    }
}

/// One optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LogRow {
    pub stage: usize,
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub degenerate_count: usize,
}

pub fn write_log_csv<W: Write>(rows: &[LogRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Trained model, its training log and the learning rate used.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub log: Vec<LogRow>,
    pub lr: f64,
}

/// Sub-seeds derived from the run seed, one per stream.
fn stream_seed(seed: u64, stream: u64, k: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(k)
}

fn periodic_bc(cfg: &TrainConfig) -> Result<BoundarySpec> {
    BoundarySpec::periodic().with_sigma(cfg.sigma_shift)
}

/// Stage-1 instances: `c x c` cores from the distribution tiled to `n`.
pub fn fine_core_instances(cfg: &TrainConfig, count: usize, n: usize, stream: u64) -> Result<Vec<TrainInstance>> {
    let bc = periodic_bc(cfg)?;
    (0..count)
        .map(|k| {
            let field = sample_field(&cfg.distribution, cfg.block_side, stream_seed(cfg.seed, stream, k as u64))?;
            TrainInstance::new(discretize(&field, &bc)?, n)
        })
        .collect()
}

/// Galerkin-coarsened cores: non-periodic fields of side `2c`, coarsened
/// with the model's prolongation to one `c x c` core each.
pub fn coarse_cores(model: &MlpModel, cfg: &TrainConfig, count: usize, stream: u64) -> Result<Vec<StencilOperator>> {
    let bc = periodic_bc(cfg)?;
    let side = 2 * cfg.block_side;
    (0..count)
        .map(|k| {
            let field = sample_field(&cfg.distribution, side, stream_seed(cfg.seed, stream, k as u64))?;
            let a = discretize(&field, &bc)?;
            let p = build_prolongation(&a, Builder::Learned(model))?;
            galerkin(&a, &p)
        })
        .collect()
}

/// Runs the curriculum, calling `on_row` after every optimizer step.
pub fn run_curriculum_with(cfg: &TrainConfig, mut on_row: impl FnMut(&LogRow)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut model = MlpModel::new(cfg.depth, cfg.width, stream_seed(cfg.seed, 0, 0))?;
    model.metadata.input_normalization = cfg.input_normalization;
    let mut rng = crate::rng_from_seed(stream_seed(cfg.seed, 1, 0));
    let lr = match cfg.learning_rate {
        Some(lr) => lr,
        None => {
            let [lo, hi] = cfg.lr_exponent_range;
            let e = if lo < hi { rng.random_range(lo..hi) } else { lo };
            10f64.powf(-e)
        }
    };
    let cycle = CycleConfig::default();
    let mut adam = Adam::new(model.param_count(), cfg.adam);
    let mut params = model.params();
    let mut log = Vec::new();
    let mut step = 0;

    let stage1 = fine_core_instances(cfg, cfg.stage_sizes[0], cfg.stage_grid_sides[0], 10)?;
    let mut coarse: Vec<StencilOperator> = Vec::new();
    for stage in 1..=cfg.stages {
        let data: Vec<TrainInstance> = match stage {
            1 => stage1.clone(),
            2 => {
                coarse = coarse_cores(&model, cfg, cfg.stage_sizes[1], 20)?;
                let n = cfg.stage_grid_sides[1];
                let mut d = stage1.clone();
                for core in &coarse {
                    d.push(TrainInstance::new(core.clone(), n)?);
                }
                d
            }
            _ => {
                let n = cfg.stage_grid_sides[2];
                let take = cfg.stage_sizes[2];
                if coarse.len() < take {
                    let more = coarse_cores(&model, cfg, take - coarse.len(), 30)?;
                    coarse.extend(more);
                }
                coarse[..take]
                    .iter()
                    .map(|c| TrainInstance::new(c.clone(), n))
                    .collect::<Result<_>>()?
            }
        };
        let mut order: Vec<usize> = (0..data.len()).collect();
        for epoch in 1..=cfg.epochs_per_stage {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<TrainInstance> = chunk.iter().map(|&i| data[i].clone()).collect();
                let lg = loss_and_grad(&model, &batch, &cycle)?;
                if adam.step(&mut params, &lg.grad, lr) {
                    model.set_params(&params)?;
                }
                step += 1;
                let row = LogRow {
                    stage,
                    epoch,
                    step,
                    loss: lg.loss,
                    lr,
                    degenerate_count: lg.degenerate,
                };
                on_row(&row);
                log.push(row);
            }
        }
        model.metadata.stages_completed = stage;
    }
    model.metadata.train_seed = Some(cfg.seed);
    model.metadata.epochs_per_stage = cfg.epochs_per_stage;
    model.metadata.sigma_shift = cfg.sigma_shift;
    model.metadata.distribution = Some(cfg.distribution.name().to_string());
    model.metadata.block_side = Some(cfg.block_side);
    model.metadata.final_loss = log.last().map(|r| r.loss);
    Ok(TrainOutcome { model, log, lr })
}

pub fn run_curriculum(cfg: &TrainConfig) -> Result<TrainOutcome> {
    run_curriculum_with(cfg, |_| {})
}

/// Mean loss of `model` over `data` (evaluation helper).
pub fn evaluate(model: &MlpModel, data: &[TrainInstance]) -> Result<f64> {
    Ok(batch_loss(model, data, &CycleConfig::default())?.0)
}
