//! Contrastive and isotropy objectives with analytic gradients.
//!
//! The contrastive term is the supervised multi-positive NT-Xent loss with the
//! positives summed inside the logarithm:
//!
//! ```text
//! L_a = -log( Σ_{p∈P(a)} exp(z_a·z_p / τ) / Σ_{k≠a} exp(z_a·z_k / τ) )
//! ```
//!
//! where `P(a)` holds every other row carrying the same label as `a`. Rows are
//! unit vectors, so `z_a·z_k` is their cosine similarity. The denominator runs
//! over every `k ≠ a`, positives included.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};

/// Tolerance on row norms accepted by [`ViewBatch::new`].
pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;

pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// `2B` embeddings from `B` view pairs: rows `2i` and `2i+1` are the two views
/// of sample `i`.
#[derive(Debug, Clone)]
pub struct ViewBatch {
    z: Matrix,
    pre_norm: Matrix,
    labels: Vec<String>,
}

impl ViewBatch {
    pub fn new(z: Matrix, pre_norm: Matrix, labels: Vec<String>) -> Result<Self> {
        let rows = z.rows();
        if rows < 2 || rows % 2 != 0 {
            return Err(Error::ShapeMismatch(format!("a view batch needs an even number (≥2) of rows, got {rows}")));
        }
        if pre_norm.rows() != rows || pre_norm.cols() != z.cols() || labels.len() != rows {
            return Err(Error::ShapeMismatch("embeddings, pre-norm outputs and labels disagree".into()));
        }
        for (i, row) in z.row_iter().enumerate() {
            if (norm(row) - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::InvalidArgument(format!("row {i} is not unit-norm")));
            }
        }
        for pair in labels.chunks_exact(2) {
            if pair[0] != pair[1] {
                return Err(Error::InvalidArgument(format!(
                    "paired views carry different labels `{}` and `{}`",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(Self { z, pre_norm, labels })
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }

    pub fn pre_norm(&self) -> &Matrix {
        &self.pre_norm
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub contrastive: f64,
    pub isotropy: f64,
    pub total: f64,
    pub anchors_used: usize,
}

fn check_inputs<L>(z: &Matrix, labels: &[L], tau: f64) -> Result<()> {
    if !(tau > 0.0) {
        return Err(Error::BadTemperature(tau));
    }
    if z.rows() < 2 || labels.len() != z.rows() {
        return Err(Error::ShapeMismatch(format!("{} rows with {} labels", z.rows(), labels.len())));
    }
    Ok(())
}

fn scaled_logits(z: &Matrix, tau: f64) -> Matrix {
    let n = z.rows();
    let mut logits = Matrix::zeros(n, n);
    for a in 0..n {
        for k in 0..n {
            if k != a {
                logits[(a, k)] = dot(z.row(a), z.row(k)) / tau;
            }
        }
    }
    logits
}

/// Loss of anchor `a` and `dL_a/dlogit_ak` for every `k`, or `None` when the
/// anchor has no positive. Both log-sum-exps are shifted by their own max.
fn anchor_term<L: PartialEq>(logits: &Matrix, labels: &[L], a: usize) -> Option<(f64, Vec<f64>)> {
    let n = labels.len();
    let is_pos = |k: usize| k != a && labels[k] == labels[a];
    if !(0..n).any(is_pos) {
        return None;
    }
    let row = logits.row(a);
    let others = || (0..n).filter(|&k| k != a);
    let max_all = others().map(|k| row[k]).fold(f64::NEG_INFINITY, f64::max);
    let max_pos = others().filter(|&k| is_pos(k)).map(|k| row[k]).fold(f64::NEG_INFINITY, f64::max);
    let sum_all: f64 = others().map(|k| (row[k] - max_all).exp()).sum();
    let sum_pos: f64 = others().filter(|&k| is_pos(k)).map(|k| (row[k] - max_pos).exp()).sum();

    let loss = (max_all + sum_all.ln()) - (max_pos + sum_pos.ln());
    let mut coeff = vec![0.0; n];
    for k in others() {
        coeff[k] = (row[k] - max_all).exp() / sum_all;
        if is_pos(k) {
            coeff[k] -= (row[k] - max_pos).exp() / sum_pos;
        }
    }
    Some((loss, coeff))
}

/// Per-anchor contrastive losses; `None` for anchors without positives.
pub fn ntxent_anchor_losses<L: PartialEq>(z: &Matrix, labels: &[L], tau: f64) -> Result<Vec<Option<f64>>> {
    check_inputs(z, labels, tau)?;
    let logits = scaled_logits(z, tau);
    Ok((0..z.rows()).map(|a| anchor_term(&logits, labels, a).map(|(l, _)| l)).collect())
}

/// Supervised NT-Xent over rows of `z`, averaged over anchors that have at
/// least one positive. Returns the loss and its gradient w.r.t. `z`.
pub fn ntxent_loss<L: PartialEq>(z: &Matrix, labels: &[L], tau: f64) -> Result<(f64, Matrix)> {
    check_inputs(z, labels, tau)?;
    let n = z.rows();
    let logits = scaled_logits(z, tau);

    let mut total = 0.0;
    let mut terms = Vec::with_capacity(n);
    for a in 0..n {
        if let Some((loss, coeff)) = anchor_term(&logits, labels, a) {
            total += loss;
            terms.push((a, coeff));
        }
    }
    if terms.is_empty() {
        return Err(Error::NoValidAnchors);
    }

    let anchors = terms.len() as f64;
    let scale = 1.0 / (anchors * tau);
    let mut grad = Matrix::zeros(n, z.cols());
    for (a, coeff) in &terms {
        for (k, &c) in coeff.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for d in 0..z.cols() {
                grad[(*a, d)] += c * z[(k, d)] * scale;
                grad[(k, d)] += c * z[(*a, d)] * scale;
            }
        }
    }
    Ok((total / anchors, grad))
}

/// Pushes per-dimension batch statistics of `y` toward zero mean and unit
/// (population) variance:
/// `(1/D) Σ_d μ_d² + (1/D) Σ_d (σ²_d − 1)²`.
pub fn isotropy_loss(y: &Matrix) -> Result<(f64, Matrix)> {
    let (n, d) = (y.rows(), y.cols());
    if n < 2 || d == 0 {
        return Err(Error::ShapeMismatch(format!("isotropy loss needs ≥2 rows and ≥1 column, got {n}x{d}")));
    }
    let nf = n as f64;
    let df = d as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(n, d);
    for c in 0..d {
        let mean = (0..n).map(|r| y[(r, c)]).sum::<f64>() / nf;
        let var = (0..n).map(|r| (y[(r, c)] - mean).powi(2)).sum::<f64>() / nf;
        loss += (mean * mean + (var - 1.0).powi(2)) / df;
        for r in 0..n {
            grad[(r, c)] = 2.0 / (df * nf) * (mean + 2.0 * (var - 1.0) * (y[(r, c)] - mean));
        }
    }
    Ok((loss, grad))
}

/// Loss value plus the two gradient streams: `grad_z` attaches at the unit
/// outputs, `grad_pre_norm` (already multiplied by λ) at the pre-normalization
/// outputs.
#[derive(Debug, Clone)]
pub struct CombinedLoss {
    pub breakdown: LossBreakdown,
    pub grad_z: Matrix,
    pub grad_pre_norm: Matrix,
}

pub fn combined_loss(batch: &ViewBatch, tau: f64, lambda: f64) -> Result<CombinedLoss> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be non-negative, got {lambda}")));
    }
    let (contrastive, grad_z) = ntxent_loss(&batch.z, &batch.labels, tau)?;
    let (isotropy, mut grad_pre_norm) = isotropy_loss(&batch.pre_norm)?;
    grad_pre_norm.as_mut_slice().iter_mut().for_each(|g| *g *= lambda);
    let anchors_used = anchor_count(&batch.labels);
    Ok(CombinedLoss {
        breakdown: LossBreakdown { contrastive, isotropy, total: contrastive + lambda * isotropy, anchors_used },
        grad_z,
        grad_pre_norm,
    })
}

fn anchor_count<L: PartialEq>(labels: &[L]) -> usize {
    (0..labels.len())
        .filter(|&a| (0..labels.len()).any(|k| k != a && labels[k] == labels[a]))
        .count()
}
