//! Batch loss and its parameter gradient.

use rayon::prelude::*;

use super::mlp::{ForwardCache, MlpModel, OUTPUT_DIM};
use crate::error::{invalid, Error, Result};
use crate::fourier::{frobenius_loss, frobenius_loss_grad};
use crate::multigrid::CycleConfig;
use crate::operator::{Stencil, StencilOperator};
use crate::prolong::{complete_corners, extract_patch, FineRole, ProlongationMap, ROW_SUM_EPS};

/// A block-periodic training problem: a periodic `c x c` stencil core tiled
/// to fine side `n`.
#[derive(Debug, Clone)]
pub struct TrainInstance {
    pub core: StencilOperator,
    pub n: usize,
}

impl TrainInstance {
    pub fn new(core: StencilOperator, n: usize) -> Result<Self> {
        crate::fourier::FourierModeSet::new(n, core.side())?;
        if core.kind() != crate::problem::BoundaryKind::Periodic {
            return Err(invalid("training instances must be periodic"));
        }
        Ok(TrainInstance { core, n })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    /// Mean loss over the instances that were not degenerate.
    pub loss: f64,
    pub grad: Vec<f64>,
    pub used: usize,
    pub degenerate: usize,
}

/// Index of an edge direction in the network output `(n, s, w, e)`.
fn output_index(d: (isize, isize)) -> usize {
    match d {
        (1, 0) => 0,
        (-1, 0) => 1,
        (0, -1) => 2,
        (0, 1) => 3,
        _ => unreachable!("not an edge offset"),
    }
}

struct Forward {
    p: ProlongationMap,
    raw: Vec<[f64; OUTPUT_DIM]>,
    caches: Vec<ForwardCache>,
}

/// The network's prolongation on a periodic core, keeping what the reverse
/// pass needs. Edge rows whose raw sum vanishes make the instance
/// degenerate (no Black-Box fallback during training).
fn forward_core(model: &MlpModel, core: &StencilOperator) -> Result<Forward> {
    let mut p = ProlongationMap::empty_for(core)?;
    let cs = p.coarse_side();
    let mut raw = Vec::with_capacity(cs * cs);
    let mut caches = Vec::with_capacity(cs * cs);
    for j in 0..cs * cs {
        let patch = extract_patch(core, (j / cs, j % cs))?;
        let (out, cache) = model.forward_cached(&model.prepare_input(&patch)?)?;
        raw.push(out);
        caches.push(cache);
    }
    let side = core.side();
    for r in 0..side {
        for c in 0..side {
            let FineRole::Edge { contributors, .. } = p.role(r, c) else {
                continue;
            };
            let [Some((j1, d1)), Some((j2, d2))] = contributors else {
                return Err(Error::Internal("periodic edge row without two contributors".into()));
            };
            let (v1, v2) = (raw[j1][output_index(d1)], raw[j2][output_index(d2)]);
            let s = v1 + v2;
            if !(s.abs() > ROW_SUM_EPS) || !s.is_finite() {
                return Err(Error::FallbackNeeded((r, c)));
            }
            p.col_mut(j1).set(d1.0, d1.1, v1 / s);
            p.col_mut(j2).set(d2.0, d2.1, v2 / s);
        }
    }
    p.set_normalized(true);
    complete_corners(core, &mut p)?;
    Ok(Forward { p, raw, caches })
}

/// Network prolongation on a periodic core (the training-time forward map).
pub fn core_prolongation(model: &MlpModel, core: &StencilOperator) -> Result<ProlongationMap> {
    Ok(forward_core(model, core)?.p)
}

/// Fourier loss of the network's prolongation on one instance.
pub fn instance_loss(model: &MlpModel, inst: &TrainInstance, cfg: &CycleConfig) -> Result<f64> {
    let f = forward_core(model, &inst.core)?;
    frobenius_loss(&inst.core, &f.p, inst.n, cfg)
}

/// Gradient of the loss with respect to the raw network outputs, given the
/// gradient with respect to the final column entries of `P`.
fn raw_output_grad(core: &StencilOperator, f: &Forward, g_p: &[Stencil]) -> Vec<[f64; OUTPUT_DIM]> {
    let side = core.side();
    let mut g_edge: Vec<Stencil> = g_p.to_vec();
    // Corner weights are linear in the edge weights of the same column.
    for r in 0..side {
        for c in 0..side {
            let FineRole::Corner { contributors } = f.p.role(r, c) else {
                continue;
            };
            let s = core.stencil(r, c);
            let diag = s.center();
            for (j, (ey, ex)) in contributors.into_iter().flatten() {
                let g = g_p[j].get(-ey, -ex);
                g_edge[j].add(0, -ex, -g * s.get(ey, 0) / diag);
                g_edge[j].add(-ey, 0, -g * s.get(0, ex) / diag);
            }
        }
    }
    let mut g_raw = vec![[0.0; OUTPUT_DIM]; f.raw.len()];
    for r in 0..side {
        for c in 0..side {
            let FineRole::Edge { contributors, .. } = f.p.role(r, c) else {
                continue;
            };
            let [Some((j1, d1)), Some((j2, d2))] = contributors else {
                continue;
            };
            let (k1, k2) = (output_index(d1), output_index(d2));
            let (v1, v2) = (f.raw[j1][k1], f.raw[j2][k2]);
            let s2 = (v1 + v2) * (v1 + v2);
            let (e1, e2) = (g_edge[j1].get(d1.0, d1.1), g_edge[j2].get(d2.0, d2.1));
            g_raw[j1][k1] += (e1 - e2) * v2 / s2;
            g_raw[j2][k2] += (e2 - e1) * v1 / s2;
        }
    }
    g_raw
}

/// Loss of one instance and its parameter gradient.
pub fn instance_loss_grad(model: &MlpModel, inst: &TrainInstance, cfg: &CycleConfig) -> Result<(f64, Vec<f64>)> {
    let f = forward_core(model, &inst.core)?;
    let (loss, g_p) = frobenius_loss_grad(&inst.core, &f.p, inst.n, cfg)?;
    let g_raw = raw_output_grad(&inst.core, &f, &g_p);
    let mut grad = vec![0.0; model.param_count()];
    for (cache, g) in f.caches.iter().zip(&g_raw) {
        model.backward(cache, g, &mut grad);
    }
    Ok((loss, grad))
}

fn is_degenerate(e: &Error) -> bool {
    matches!(
        e,
        Error::DegenerateMode { .. } | Error::FallbackNeeded(_) | Error::DegenerateStencil { .. } | Error::NonFinite(_)
    )
}

/// Mean loss and gradient over `batch`; degenerate instances are dropped
/// and counted.
pub fn loss_and_grad(model: &MlpModel, batch: &[TrainInstance], cfg: &CycleConfig) -> Result<LossGrad> {
    let results: Vec<Result<(f64, Vec<f64>)>> = batch
        .par_iter()
        .map(|inst| instance_loss_grad(model, inst, cfg))
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; model.param_count()];
    let (mut used, mut degenerate) = (0, 0);
    for r in results {
        match r {
            Ok((l, g)) if l.is_finite() && g.iter().all(|v| v.is_finite()) => {
                loss += l;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
                used += 1;
            }
            Ok(_) => degenerate += 1,
            Err(e) if is_degenerate(&e) => degenerate += 1,
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(Error::DegenerateMode {
            mode: (0, 0),
            reason: format!("all {degenerate} instances in the batch are degenerate"),
        });
    }
    let inv = 1.0 / used as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok(LossGrad {
        loss: loss * inv,
        grad,
        used,
        degenerate,
    })
}

/// Mean loss only.
pub fn batch_loss(model: &MlpModel, batch: &[TrainInstance], cfg: &CycleConfig) -> Result<(f64, usize)> {
    let results: Vec<Result<f64>> = batch.par_iter().map(|i| instance_loss(model, i, cfg)).collect();
    let (mut sum, mut used, mut degenerate) = (0.0, 0usize, 0usize);
    for r in results {
        match r {
            Ok(l) if l.is_finite() => {
                sum += l;
                used += 1;
            }
            Ok(_) => degenerate += 1,
            Err(e) if is_degenerate(&e) => degenerate += 1,
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(invalid("every instance is degenerate"));
    }
    Ok((sum / used as f64, degenerate))
}
