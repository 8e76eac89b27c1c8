//! Residual fully connected network mapping a 45-entry stencil patch to four
//! edge weights.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::prolong::{LocalStencilPatch, PATCH_LEN};

pub const INPUT_DIM: usize = PATCH_LEN;
pub const OUTPUT_DIM: usize = 4;
pub const MODEL_VERSION: u32 = 1;

/// Added to the network output so a zero network yields bilinear weights.
pub const OUTPUT_BIAS: f64 = 0.5;

/// Dense layer `y = W x + b` with `W` stored row-major (`out x in`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLayer", into = "RawLayer")]
pub struct Layer {
    rows: usize,
    cols: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawLayer {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl TryFrom<RawLayer> for Layer {
    type Error = Error;

    fn try_from(raw: RawLayer) -> Result<Self> {
        let rows = raw.w.len();
        let cols = raw.w.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 || raw.w.iter().any(|r| r.len() != cols) || raw.b.len() != rows {
            return Err(invalid("malformed layer"));
        }
        Ok(Layer {
            rows,
            cols,
            w: raw.w.concat(),
            b: raw.b,
        })
    }
}

impl From<Layer> for RawLayer {
    fn from(l: Layer) -> Self {
        RawLayer {
            w: l.w.chunks(l.cols).map(<[f64]>::to_vec).collect(),
            b: l.b,
        }
    }
}

impl Layer {
    fn zeros(rows: usize, cols: usize) -> Self {
        Layer {
            rows,
            cols,
            w: vec![0.0; rows * cols],
            b: vec![0.0; rows],
        }
    }

    fn he<R: rand::Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let std = (2.0 / cols as f64).sqrt();
        let mut l = Self::zeros(rows, cols);
        for w in &mut l.w {
            let z: f64 = StandardNormal.sample(rng);
            *w = std * z;
        }
        l
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn bias(&self) -> &[f64] {
        &self.b
    }

    fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    fn forward(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let row = &self.w[i * self.cols..(i + 1) * self.cols];
            *yi = self.b[i] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// Accumulates `dW += dy x^T`, `db += dy` into `g` (same flat layout as
    /// the parameters) and writes `dx = W^T dy`.
    fn backward(&self, x: &[f64], dy: &[f64], g: &mut [f64], dx: &mut [f64]) {
        let (gw, gb) = g.split_at_mut(self.w.len());
        dx.iter_mut().for_each(|v| *v = 0.0);
        for (i, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            gb[i] += d;
            let row = &self.w[i * self.cols..(i + 1) * self.cols];
            let grow = &mut gw[i * self.cols..(i + 1) * self.cols];
            for k in 0..self.cols {
                grow[k] += d * x[k];
                dx[k] += d * row[k];
            }
        }
    }
}

/// Provenance stored alongside the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, rename_all = "camelCase")]
pub struct ModelMetadata {
    /// Divide each input patch by its central diagonal entry.
    pub input_normalization: bool,
    pub init_seed: u64,
    pub train_seed: Option<u64>,
    pub stages_completed: usize,
    pub epochs_per_stage: usize,
    pub sigma_shift: f64,
    pub distribution: Option<String>,
    pub block_side: Option<usize>,
    pub final_loss: Option<f64>,
}

/// `h0 = relu(W0 x + b0)`, then residual blocks
/// `h <- h + W2 relu(W1 h + b1) + b2`, then `w = 1/2 + Wout h + bout`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub version: u32,
    pub depth: usize,
    pub width: usize,
    pub activation: String,
    layers: Vec<Layer>,
    pub metadata: ModelMetadata,
}

/// Activations of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    x: [f64; INPUT_DIM],
    /// `hs[0]` is the input-layer pre-activation; `hs[k]` for `k >= 1` the
    /// hidden state entering residual block `k - 1` (the last one feeds the
    /// output layer).
    hs: Vec<Vec<f64>>,
    /// Pre-activations inside each residual block.
    inner: Vec<Vec<f64>>,
}

impl MlpModel {
    /// Network with `depth` linear layers: input, `(depth - 2) / 2` residual
    /// blocks, output. Residual-branch output layers and the output layer
    /// start at zero, the rest are He-initialized.
    pub fn new(depth: usize, width: usize, seed: u64) -> Result<Self> {
        if depth < 2 || depth % 2 != 0 {
            return Err(invalid(format!("depth must be even and >= 2, got {depth}")));
        }
        if width == 0 {
            return Err(invalid("width must be positive"));
        }
        let mut rng = crate::rng_from_seed(seed);
        let mut layers = vec![Layer::he(width, INPUT_DIM, &mut rng)];
        for _ in 0..(depth - 2) / 2 {
            layers.push(Layer::he(width, width, &mut rng));
            layers.push(Layer::zeros(width, width));
        }
        layers.push(Layer::zeros(OUTPUT_DIM, width));
        Ok(MlpModel {
            version: MODEL_VERSION,
            depth,
            width,
            activation: "relu".into(),
            layers,
            metadata: ModelMetadata {
                input_normalization: true,
                init_seed: seed,
                ..ModelMetadata::default()
            },
        })
    }

    /// All parameters zero: always outputs the bilinear weights.
    pub fn zeroed(depth: usize, width: usize) -> Result<Self> {
        let mut m = Self::new(depth, width, 0)?;
        let n = m.param_count();
        m.set_params(&vec![0.0; n])?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let blocks = self.depth.checked_sub(2).map(|d| d / 2);
        let ok_shape = self.depth >= 2
            && self.depth % 2 == 0
            && self.layers.len() == self.depth
            && self.activation == "relu"
            && blocks.is_some();
        if !ok_shape {
            return Err(invalid("model depth/activation inconsistent with layers"));
        }
        let w = self.width;
        for (k, l) in self.layers.iter().enumerate() {
            let expect = if k == 0 {
                (w, INPUT_DIM)
            } else if k + 1 == self.layers.len() {
                (OUTPUT_DIM, w)
            } else {
                (w, w)
            };
            if (l.rows, l.cols) != expect {
                return Err(invalid(format!("layer {k} has shape {}x{}", l.rows, l.cols)));
            }
            if !l.w.iter().chain(&l.b).all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("layer {k} parameters")));
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    fn blocks(&self) -> usize {
        (self.depth - 2) / 2
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: p.len(),
            });
        }
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&p[at..at + nw]);
            at += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&p[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    /// Patch as fed to the network (optionally divided by its center entry).
    pub fn prepare_input(&self, patch: &LocalStencilPatch) -> Result<[f64; INPUT_DIM]> {
        if self.metadata.input_normalization {
            patch.normalized_input()
        } else {
            Ok(patch.0)
        }
    }

    /// Edge weights `(north, south, west, east)` for one prepared input.
    pub fn forward(&self, x: &[f64; INPUT_DIM]) -> Result<[f64; OUTPUT_DIM]> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_batch(&self, xs: &[[f64; INPUT_DIM]]) -> Result<Vec<[f64; OUTPUT_DIM]>> {
        xs.iter().map(|x| self.forward(x)).collect()
    }

    pub fn forward_cached(&self, x: &[f64; INPUT_DIM]) -> Result<([f64; OUTPUT_DIM], ForwardCache)> {
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        let w = self.width;
        let mut hs = Vec::with_capacity(self.blocks() + 2);
        let mut inner = Vec::with_capacity(self.blocks());
        let mut z0 = vec![0.0; w];
        self.layers[0].forward(x, &mut z0);
        let mut h: Vec<f64> = z0.iter().map(|v| v.max(0.0)).collect();
        hs.push(z0);
        let mut a = vec![0.0; w];
        let mut r = vec![0.0; w];
        let mut branch = vec![0.0; w];
        for k in 0..self.blocks() {
            self.layers[1 + 2 * k].forward(&h, &mut a);
            for (ri, ai) in r.iter_mut().zip(&a) {
                *ri = ai.max(0.0);
            }
            self.layers[2 + 2 * k].forward(&r, &mut branch);
            hs.push(h.clone());
            inner.push(a.clone());
            for (hi, bi) in h.iter_mut().zip(&branch) {
                *hi += bi;
            }
        }
        let mut out = [0.0; OUTPUT_DIM];
        self.layers.last().expect("output layer").forward(&h, &mut out);
        hs.push(h);
        for o in &mut out {
            *o += OUTPUT_BIAS;
        }
        if !out.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok((out, ForwardCache { x: *x, hs, inner }))
    }

    /// Adds the parameter gradient of `dout . output` to `grad` (flat layout
    /// of [`MlpModel::params`]).
    pub fn backward(&self, cache: &ForwardCache, dout: &[f64; OUTPUT_DIM], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.param_count());
        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |acc, l| {
                let at = *acc;
                *acc += l.param_count();
                Some(at)
            })
            .collect();
        let nl = self.layers.len();
        let w = self.width;
        let span = |k: usize| offsets[k]..offsets[k] + self.layers[k].param_count();

        let mut dh = vec![0.0; w];
                self.layers[nl - 1].backward(&cache.hs[self.blocks() + 1], dout, &mut grad[span(nl - 1)], &mut dh);

        let mut dr = vec![0.0; w];
        let mut da = vec![0.0; w];
        let mut dprev = vec![0.0; w];
        let mut r = vec![0.0; w];
        for k in (0..self.blocks()).rev() {
            let h_in = &cache.hs[k + 1];
            let a = &cache.inner[k];
            for (ri, ai) in r.iter_mut().zip(a) {
                *ri = ai.max(0.0);
            }
                        self.layers[2 + 2 * k].backward(&r, &dh, &mut grad[span(2 + 2 * k)], &mut dr);
            for i in 0..w {
                da[i] = if a[i] > 0.0 { dr[i] } else { 0.0 };
            }
                        self.layers[1 + 2 * k].backward(h_in, &da, &mut grad[span(1 + 2 * k)], &mut dprev);
            for i in 0..w {
                dh[i] += dprev[i];
            }
        }
        let z0 = &cache.hs[0];
        for i in 0..w {
            if z0[i] <= 0.0 {
                dh[i] = 0.0;
            }
        }
        let mut dx = vec![0.0; INPUT_DIM];
                self.layers[0].backward(&cache.x, &dh, &mut grad[span(0)], &mut dx);
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let m: MlpModel = serde_json::from_str(s)?;
        if m.version != MODEL_VERSION {
            return Err(invalid(format!("unsupported model version {}", m.version)));
        }
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}
