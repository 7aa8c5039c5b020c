//! The trainable projection head: `z = normalize(W2 · relu(W1 · x + b1) + b2)`,
//! with a hand-derived backward pass and PRJ1 persistence.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embed::{read_bytes, read_magic, read_u32};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::seed::rng_from_seed;

pub const PRJ1_MAGIC: [u8; 4] = *b"PRJ1";
pub const PRJ1_VERSION: u32 = 1;

/// Below this norm the head output has no usable direction.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadDims {
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
}

impl HeadDims {
    pub fn new(in_dim: usize, hidden_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, hidden_dim, out_dim }
    }

    /// 768 -> 768 -> 256.
    pub fn bert_base() -> Self {
        Self::new(768, 768, 256)
    }
}

/// Head parameters. Matrices are row-major: `w1` is `hidden x in`, `w2` is
/// `out x hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionWeights {
    pub dims: HeadDims,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl ProjectionWeights {
    pub fn zeros(dims: HeadDims) -> Self {
        Self {
            dims,
            w1: vec![0.0; dims.hidden_dim * dims.in_dim],
            b1: vec![0.0; dims.hidden_dim],
            w2: vec![0.0; dims.out_dim * dims.hidden_dim],
            b2: vec![0.0; dims.out_dim],
        }
    }

    /// Parameter blocks in a fixed order: W1, b1, W2, b2.
    pub fn blocks(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    fn check(&self) -> Result<()> {
        let d = self.dims;
        let expect = [d.hidden_dim * d.in_dim, d.hidden_dim, d.out_dim * d.hidden_dim, d.out_dim];
        for (block, want) in self.blocks().iter().zip(expect) {
            if block.len() != want {
                return Err(Error::DimMismatch { expected: want, got: block.len() });
            }
        }
        if self.blocks().iter().any(|b| b.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidData("non-finite weight".into()));
        }
        Ok(())
    }
}

/// Glorot-uniform matrices, zero biases.
pub fn init_weights(dims: HeadDims, seed: u64) -> Result<ProjectionWeights> {
    if dims.in_dim == 0 || dims.hidden_dim == 0 || dims.out_dim == 0 {
        return Err(Error::InvalidArgument(format!("head dims must be positive: {dims:?}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut w = ProjectionWeights::zeros(dims);
    let bound1 = (6.0 / (dims.in_dim + dims.hidden_dim) as f64).sqrt();
    w.w1.iter_mut().for_each(|v| *v = rng.random_range(-bound1..=bound1));
    let bound2 = (6.0 / (dims.hidden_dim + dims.out_dim) as f64).sqrt();
    w.w2.iter_mut().for_each(|v| *v = rng.random_range(-bound2..=bound2));
    Ok(w)
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    pub pre_activation: Vec<f64>,
    pub hidden: Vec<f64>,
    pub pre_norm: Vec<f64>,
    pub output: Vec<f64>,
    pub pre_norm_norm: f64,
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    b.iter().enumerate().map(|(r, bias)| dot(&w[r * cols..(r + 1) * cols], x) + bias).collect()
}

pub fn forward(w: &ProjectionWeights, x: &[f64]) -> Result<ForwardTrace> {
    if x.len() != w.dims.in_dim {
        return Err(Error::DimMismatch { expected: w.dims.in_dim, got: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite head input".into()));
    }
    let pre_activation = affine(&w.w1, &w.b1, x);
    let hidden: Vec<f64> = pre_activation.iter().map(|&v| v.max(0.0)).collect();
    let pre_norm = affine(&w.w2, &w.b2, &hidden);
    let pre_norm_norm = norm(&pre_norm);
    if !(pre_norm_norm >= DEGENERATE_NORM) {
        return Err(Error::DegenerateNorm);
    }
    let output = pre_norm.iter().map(|v| v / pre_norm_norm).collect();
    Ok(ForwardTrace { input: x.to_vec(), pre_activation, hidden, pre_norm, output, pre_norm_norm })
}

/// Gradients for every parameter block, shaped like [`ProjectionWeights`].
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl HeadGradients {
    pub fn zeros(dims: HeadDims) -> Self {
        let z = ProjectionWeights::zeros(dims);
        Self { w1: z.w1, b1: z.b1, w2: z.w2, b2: z.b2 }
    }

    pub fn blocks(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn accumulate(&mut self, other: &HeadGradients) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for block in self.blocks_mut() {
            block.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// L2 norm over all blocks together.
    pub fn global_norm(&self) -> f64 {
        self.blocks().iter().flat_map(|b| b.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Pulls a gradient on the unit output back to the pre-normalization vector:
/// `(I - z zᵀ) g / ‖y‖`.
pub fn normalization_backward(trace: &ForwardTrace, grad_z: &[f64]) -> Vec<f64> {
    let radial = dot(&trace.output, grad_z);
    grad_z
        .iter()
        .zip(&trace.output)
        .map(|(g, z)| (g - radial * z) / trace.pre_norm_norm)
        .collect()
}

/// Backward pass starting from a gradient on the pre-normalization output `y`.
/// Returns parameter gradients and the gradient on the input.
pub fn backward_from_pre_norm(
    trace: &ForwardTrace,
    w: &ProjectionWeights,
    grad_y: &[f64],
) -> (HeadGradients, Vec<f64>) {
    let mut grads = HeadGradients::zeros(w.dims);
    let grad_x = accumulate_backward(trace, w, grad_y, &mut grads);
    (grads, grad_x)
}

/// Like [`backward_from_pre_norm`] but adds the parameter gradients into
/// `grads`, so a batch can be reduced without per-row allocations.
pub fn accumulate_backward(
    trace: &ForwardTrace,
    w: &ProjectionWeights,
    grad_y: &[f64],
    grads: &mut HeadGradients,
) -> Vec<f64> {
    let HeadDims { in_dim, hidden_dim, out_dim } = w.dims;

    grads.b2.iter_mut().zip(grad_y).for_each(|(d, g)| *d += g);
    for o in 0..out_dim {
        let g = grad_y[o];
        let row = &mut grads.w2[o * hidden_dim..(o + 1) * hidden_dim];
        row.iter_mut().zip(&trace.hidden).for_each(|(d, h)| *d += g * h);
    }

    // relu'(0) = 0
    let mut grad_pre = vec![0.0; hidden_dim];
    for o in 0..out_dim {
        let g = grad_y[o];
        let row = &w.w2[o * hidden_dim..(o + 1) * hidden_dim];
        grad_pre.iter_mut().zip(row).for_each(|(d, wv)| *d += g * wv);
    }
    for (d, &a) in grad_pre.iter_mut().zip(&trace.pre_activation) {
        if a <= 0.0 {
            *d = 0.0;
        }
    }

    grads.b1.iter_mut().zip(&grad_pre).for_each(|(d, g)| *d += g);
    let mut grad_x = vec![0.0; in_dim];
    for h in 0..hidden_dim {
        let g = grad_pre[h];
        if g == 0.0 {
            continue;
        }
        let w_row = &w.w1[h * in_dim..(h + 1) * in_dim];
        let d_row = &mut grads.w1[h * in_dim..(h + 1) * in_dim];
        for i in 0..in_dim {
            d_row[i] += g * trace.input[i];
            grad_x[i] += g * w_row[i];
        }
    }
    grad_x
}

/// Full backward pass from a gradient on the unit-norm output `z`.
pub fn backward(trace: &ForwardTrace, w: &ProjectionWeights, grad_z: &[f64]) -> (HeadGradients, Vec<f64>) {
    backward_from_pre_norm(trace, w, &normalization_backward(trace, grad_z))
}

/// Training metadata stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub tau: f64,
    pub lambda: f64,
    pub seed: u64,
    pub epochs: usize,
    pub encoder_width: usize,
}

pub fn save_weights(path: impl AsRef<Path>, w: &ProjectionWeights, meta: &ModelMeta) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    encode_weights(&mut out, w, meta)?;
    out.flush()?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<(ProjectionWeights, ModelMeta)> {
    decode_weights(&mut BufReader::new(File::open(path)?))
}

pub fn encode_weights(out: &mut impl Write, w: &ProjectionWeights, meta: &ModelMeta) -> Result<()> {
    w.check()?;
    out.write_all(&PRJ1_MAGIC)?;
    out.write_all(&PRJ1_VERSION.to_le_bytes())?;
    for d in [w.dims.in_dim, w.dims.hidden_dim, w.dims.out_dim] {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for block in w.blocks() {
        for v in block {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    let meta_json = serde_json::to_vec(meta)?;
    out.write_all(&(meta_json.len() as u32).to_le_bytes())?;
    out.write_all(&meta_json)?;
    Ok(())
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let raw = read_bytes(r, n * 8)?;
    Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn decode_weights(r: &mut impl Read) -> Result<(ProjectionWeights, ModelMeta)> {
    read_magic(r, PRJ1_MAGIC)?;
    let version = read_u32(r)?;
    if version != PRJ1_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dims = HeadDims::new(read_u32(r)? as usize, read_u32(r)? as usize, read_u32(r)? as usize);
    let w = ProjectionWeights {
        dims,
        w1: read_f64s(r, dims.hidden_dim * dims.in_dim)?,
        b1: read_f64s(r, dims.hidden_dim)?,
        w2: read_f64s(r, dims.out_dim * dims.hidden_dim)?,
        b2: read_f64s(r, dims.out_dim)?,
    };
    let meta_len = read_u32(r)? as usize;
    let meta: ModelMeta = serde_json::from_slice(&read_bytes(r, meta_len)?)?;
    if meta.encoder_width != dims.in_dim {
        return Err(Error::DimMismatch { expected: dims.in_dim, got: meta.encoder_width });
    }
    w.check()?;
    Ok((w, meta))
}
