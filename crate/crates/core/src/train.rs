//! Training loop for the projection head: AdamW with decoupled weight decay,
//! linear warmup then linear decay, global-norm gradient clipping.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_text, AugmentProfile, SynonymLexicon};
use crate::catalog::{CourseKey, CourseRecord, StatementRecord};
use crate::embed::EmbeddingSource;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{
    accumulate_backward, forward, init_weights, normalization_backward, HeadDims, HeadGradients, ModelMeta,
    ProjectionWeights,
};
use crate::objective::{combined_loss, LossBreakdown, ViewBatch};
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub tau: f64,
    pub lambda: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_max: f64,
    /// `None` means 10% of the total step count.
    pub warmup_steps: Option<usize>,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
    pub seed: u64,
    /// `None` means the encoder width.
    pub hidden_dim: Option<usize>,
    pub out_dim: usize,
    /// Augmented variants per course in the view bank.
    pub view_bank_size: usize,
    pub heavy: AugmentProfile,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            tau: 0.05,
            lambda: 0.1,
            batch_size: 32,
            epochs: 20,
            lr_max: 2e-4,
            warmup_steps: None,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 1.0,
            seed: 0,
            hidden_dim: None,
            out_dim: 256,
            view_bank_size: 4,
            heavy: AugmentProfile::heavy(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.tau > 0.0) {
            return Err(Error::BadTemperature(self.tau));
        }
        if !(self.lambda >= 0.0) {
            return fail(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if self.batch_size == 0 {
            return fail("batch size must be at least 1".into());
        }
        if !(self.clip_norm > 0.0) {
            return fail(format!("clip norm must be positive, got {}", self.clip_norm));
        }
        if !(self.lr_max >= 0.0) || !(self.weight_decay >= 0.0) {
            return fail("learning rate and weight decay must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return fail("invalid Adam moments or epsilon".into());
        }
        if self.view_bank_size < 2 {
            return fail("the view bank needs at least 2 variants per course".into());
        }
        if self.out_dim == 0 || self.hidden_dim == Some(0) {
            return fail("head dimensions must be positive".into());
        }
        self.heavy.validate()
    }

    pub fn head_dims(&self, encoder_width: usize) -> HeadDims {
        HeadDims::new(encoder_width, self.hidden_dim.unwrap_or(encoder_width), self.out_dim)
    }

    pub fn warmup_for(&self, total_steps: usize) -> usize {
        self.warmup_steps.unwrap_or(total_steps / 10)
    }

    pub fn meta(&self, encoder_width: usize) -> ModelMeta {
        ModelMeta {
            tau: self.tau,
            lambda: self.lambda,
            seed: self.seed,
            epochs: self.epochs,
            encoder_width,
        }
    }
}

/// Linear warmup to `lr_max` over `warmup` steps, then linear decay to zero at
/// `total` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub lr_max: f64,
    pub warmup: usize,
    pub total: usize,
}

impl LrSchedule {
    pub fn new(lr_max: f64, warmup: usize, total: usize) -> Result<Self> {
        if warmup > total {
            return Err(Error::InvalidArgument(format!("warmup {warmup} exceeds {total} total steps")));
        }
        Ok(Self { lr_max, warmup, total })
    }

    pub fn at(&self, step: usize) -> f64 {
        if step < self.warmup {
            return self.lr_max * (step + 1) as f64 / self.warmup as f64;
        }
        if step >= self.total {
            return 0.0;
        }
        self.lr_max * (self.total - step) as f64 / (self.total - self.warmup) as f64
    }
}

/// Adam moments for every parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: HeadGradients,
    pub v: HeadGradients,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(dims: HeadDims) -> Self {
        Self { m: HeadGradients::zeros(dims), v: HeadGradients::zeros(dims), t: 0 }
    }
}

/// One AdamW update. Weight decay is decoupled and applies to W1 and W2 only.
pub fn adamw_step(
    weights: &mut ProjectionWeights,
    grads: &HeadGradients,
    state: &mut OptimizerState,
    lr: f64,
    config: &TrainingConfig,
) -> Result<()> {
    let shapes_match = weights
        .blocks()
        .iter()
        .zip(grads.blocks())
        .zip(state.m.blocks())
        .zip(state.v.blocks())
        .all(|(((w, g), m), v)| w.len() == g.len() && g.len() == m.len() && m.len() == v.len());
    if !shapes_match {
        return Err(Error::ShapeMismatch("weights, gradients and optimizer state differ".into()));
    }

    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);

    let decays = [true, false, true, false];
    let blocks = weights.blocks_mut();
    let ms = state.m.blocks_mut();
    let vs = state.v.blocks_mut();
    for ((((theta, g), m), v), decay) in blocks.into_iter().zip(grads.blocks()).zip(ms).zip(vs).zip(decays) {
        let wd = if decay { config.weight_decay } else { 0.0 };
        for i in 0..theta.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            theta[i] -= lr * (m_hat / (v_hat.sqrt() + config.eps) + wd * theta[i]);
        }
    }
    Ok(())
}

/// Rescales `grads` so their global L2 norm is at most `clip_norm`. Returns
/// the norm before clipping.
pub fn clip_gradients(grads: &mut HeadGradients, clip_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > clip_norm {
        grads.scale(clip_norm / norm);
    }
    norm
}

/// Id under which the `k`-th augmented variant of a course is encoded.
pub fn variant_id(key: &CourseKey, k: usize) -> String {
    format!("{key}#aug{k}")
}

/// Texts the trainer will request from the embedding source, as `(id, text)`.
/// An external exporter encodes exactly these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub text: String,
}

/// `K` heavy augmentations of each course text, seeded by course and index.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewBank {
    variants: BTreeMap<CourseKey, Vec<String>>,
}

impl ViewBank {
    pub fn generate(
        courses: &[CourseRecord],
        heavy: &AugmentProfile,
        lexicon: &SynonymLexicon,
        size: usize,
        seed: u64,
    ) -> Result<Self> {
        let bank_seed = derive_seed(seed, "view-bank", 0);
        let mut variants = BTreeMap::new();
        for course in courses {
            let key = course.key();
            let texts = (0..size)
                .map(|k| {
                    augment_text(&course.text_for_encoder, heavy, lexicon, derive_seed(bank_seed, key.as_str(), k as u64))
                })
                .collect::<Result<Vec<_>>>()?;
            variants.insert(key, texts);
        }
        Ok(Self { variants })
    }

    pub fn variants(&self, key: &CourseKey) -> Option<&[String]> {
        self.variants.get(key).map(Vec::as_slice)
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        self.variants
            .iter()
            .flat_map(|(key, texts)| {
                texts.iter().enumerate().map(|(k, text)| ManifestEntry { id: variant_id(key, k), text: text.clone() })
            })
            .collect()
    }
}

/// Every `(id, text)` a full train/evaluate cycle asks the encoder for.
pub fn export_manifest(
    courses: &[CourseRecord],
    statements: &[StatementRecord],
    bank: &ViewBank,
) -> Vec<ManifestEntry> {
    let mut out: Vec<ManifestEntry> = courses
        .iter()
        .map(|c| ManifestEntry { id: c.key().to_string(), text: c.text_for_encoder.clone() })
        .collect();
    out.extend(statements.iter().map(|s| ManifestEntry { id: s.id.clone(), text: s.text.clone() }));
    out.extend(bank.manifest());
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub contrastive: f64,
    pub isotropy: f64,
    pub total: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainingConfig,
    pub dims: HeadDims,
    pub pairs_per_epoch: usize,
    pub total_steps: usize,
    pub epochs: Vec<EpochLoss>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights_path: Option<String>,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: ProjectionWeights,
    pub report: TrainReport,
}

/// Head weights before any update; the untrained baseline uses these.
pub fn initial_weights(config: &TrainingConfig, encoder_width: usize) -> Result<ProjectionWeights> {
    init_weights(config.head_dims(encoder_width), derive_seed(config.seed, "init", 0))
}

/// One side of a view pair: an index into the pooled feature table.
#[derive(Debug, Clone, Copy)]
struct PairRows {
    a: usize,
    b: usize,
    label: usize,
}

struct Features {
    pooled: Vec<Vec<f64>>,
    labels: Vec<String>,
    /// (course label index, statement feature indices, variant feature indices)
    courses: Vec<(usize, Vec<usize>, Vec<usize>)>,
}

fn pool_features(
    courses: &[CourseRecord],
    statements: &[StatementRecord],
    bank: &ViewBank,
    source: &EmbeddingSource,
) -> Result<Features> {
    let mut pooled = Vec::new();
    let mut push = |id: &str, text: &str| -> Result<usize> {
        pooled.push(source.pooled(id, text)?);
        Ok(pooled.len() - 1)
    };
    let mut labels = Vec::new();
    let mut per_course = Vec::new();
    for course in courses {
        let key = course.key();
        let stmts = statements
            .iter()
            .filter(|s| s.contrastive_label == key)
            .map(|s| push(&s.id, &s.text))
            .collect::<Result<Vec<_>>>()?;
        let variants = bank
            .variants(&key)
            .ok_or_else(|| Error::MissingEmbedding(variant_id(&key, 0)))?
            .iter()
            .enumerate()
            .map(|(k, text)| push(&variant_id(&key, k), text))
            .collect::<Result<Vec<_>>>()?;
        labels.push(key.to_string());
        per_course.push((labels.len() - 1, stmts, variants));
    }
    Ok(Features { pooled, labels, courses: per_course })
}

/// Samples one epoch of view pairs from the bank and shuffles them.
fn epoch_pairs(features: &Features, epoch_seed: u64) -> Vec<PairRows> {
    let mut pairs = Vec::new();
    for (label, stmts, variants) in &features.courses {
        let key = &features.labels[*label];
        let mut rng = rng_from_seed(derive_seed(epoch_seed, key, 0));
        if stmts.is_empty() {
            let i = rng.random_range(0..variants.len());
            let mut j = rng.random_range(0..variants.len() - 1);
            if j >= i {
                j += 1;
            }
            pairs.push(PairRows { a: variants[i], b: variants[j], label: *label });
        } else {
            for &s in stmts {
                let v = variants[rng.random_range(0..variants.len())];
                pairs.push(PairRows { a: s, b: v, label: *label });
            }
        }
    }
    pairs.shuffle(&mut rng_from_seed(derive_seed(epoch_seed, "shuffle", 0)));
    pairs
}

/// Combined loss of a batch of encoder features and its gradient with respect
/// to every head parameter. Rows sharing a label are positives.
pub fn batch_gradients(
    weights: &ProjectionWeights,
    inputs: &[&[f64]],
    labels: &[String],
    tau: f64,
    lambda: f64,
) -> Result<(LossBreakdown, HeadGradients)> {
    let traces = inputs.iter().map(|x| forward(weights, x)).collect::<Result<Vec<_>>>()?;
    let z = Matrix::from_rows(&traces.iter().map(|t| t.output.as_slice()).collect::<Vec<_>>())?;
    let y = Matrix::from_rows(&traces.iter().map(|t| t.pre_norm.as_slice()).collect::<Vec<_>>())?;
    let view_batch = ViewBatch::new(z, y, labels.to_vec())?;
    let loss = combined_loss(&view_batch, tau, lambda)?;

    let mut grads = HeadGradients::zeros(weights.dims);
    for (r, trace) in traces.iter().enumerate() {
        let mut grad_y = normalization_backward(trace, loss.grad_z.row(r));
        grad_y.iter_mut().zip(loss.grad_pre_norm.row(r)).for_each(|(g, iso)| *g += iso);
        accumulate_backward(trace, weights, &grad_y, &mut grads);
    }
    Ok((loss.breakdown, grads))
}

/// One optimization step on a batch of pairs. Returns the loss breakdown.
fn train_step(
    weights: &mut ProjectionWeights,
    state: &mut OptimizerState,
    features: &Features,
    batch: &[PairRows],
    lr: f64,
    config: &TrainingConfig,
) -> Result<LossBreakdown> {
    let mut inputs = Vec::with_capacity(batch.len() * 2);
    let mut labels = Vec::with_capacity(batch.len() * 2);
    for pair in batch {
        for row in [pair.a, pair.b] {
            inputs.push(features.pooled[row].as_slice());
            labels.push(features.labels[pair.label].clone());
        }
    }
    let (loss, mut grads) = batch_gradients(weights, &inputs, &labels, config.tau, config.lambda)?;
    clip_gradients(&mut grads, config.clip_norm);
    adamw_step(weights, &grads, state, lr, config)?;
    Ok(loss)
}

/// Trains the head on `courses` and the training statements.
///
/// Features for the statements and for a bank of `view_bank_size` augmented
/// variants per course are pooled once up front; each epoch samples fresh
/// pairs from them, shuffles, and walks mini-batches of `batch_size` pairs
/// (the last partial batch is kept).
pub fn train(
    courses: &[CourseRecord],
    train_statements: &[StatementRecord],
    source: &EmbeddingSource,
    lexicon: &SynonymLexicon,
    config: &TrainingConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if courses.is_empty() {
        return Err(Error::EmptyInput);
    }
    let started = Instant::now();
    let width = source.width();
    let mut weights = initial_weights(config, width)?;
    let dims = weights.dims;

    let bank = ViewBank::generate(courses, &config.heavy, lexicon, config.view_bank_size, config.seed)?;
    let features = pool_features(courses, train_statements, &bank, source)?;
    let pairs_per_epoch = features.courses.iter().map(|(_, s, _)| s.len().max(1)).sum::<usize>();
    let steps_per_epoch = pairs_per_epoch.div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.epochs;
    let schedule = LrSchedule::new(config.lr_max, config.warmup_for(total_steps), total_steps)?;

    let mut state = OptimizerState::new(dims);
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0usize;
    for epoch in 0..config.epochs {
        let pairs = epoch_pairs(&features, derive_seed(config.seed, "epoch", epoch as u64));
        let mut sums = (0.0, 0.0, 0.0);
        let mut steps = 0;
        for batch in pairs.chunks(config.batch_size) {
            let loss = train_step(&mut weights, &mut state, &features, batch, schedule.at(step), config)?;
            if !loss.total.is_finite() {
                return Err(Error::InvalidData(format!("non-finite loss at step {step}")));
            }
            sums.0 += loss.contrastive;
            sums.1 += loss.isotropy;
            sums.2 += loss.total;
            steps += 1;
            step += 1;
        }
        let n = steps as f64;
        history.push(EpochLoss {
            epoch,
            contrastive: sums.0 / n,
            isotropy: sums.1 / n,
            total: sums.2 / n,
            steps,
        });
    }

    Ok(TrainOutcome {
        weights,
        report: TrainReport {
            config: config.clone(),
            dims,
            pairs_per_epoch,
            total_steps,
            epochs: history,
            weights_path: None,
            wall_time_secs: started.elapsed().as_secs_f64(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TrainingConfig {
        TrainingConfig { weight_decay: 0.0, ..TrainingConfig::default() }
    }

    #[test]
    fn schedule_examples() {
        let s = LrSchedule::new(1e-3, 10, 100).unwrap();
        assert!((s.at(4) - 5e-4).abs() < 1e-18);
        assert_eq!(s.at(10), 1e-3);
        assert_eq!(s.at(100), 0.0);
        assert!(s.at(99) > 0.0);
        assert!((0..=100).all(|k| s.at(k) >= 0.0 && s.at(k) <= 1e-3));
        assert!(LrSchedule::new(1e-3, 11, 10).is_err());
        let no_warmup = LrSchedule::new(1e-3, 0, 10).unwrap();
        assert_eq!(no_warmup.at(0), 1e-3);
    }

    fn scalar_head() -> ProjectionWeights {
        ProjectionWeights::zeros(HeadDims::new(1, 1, 1))
    }

    #[test]
    fn adamw_zero_gradient_is_fixed_point() {
        let mut w = init_weights(HeadDims::new(3, 4, 2), 1).unwrap();
        let before = w.clone();
        let mut state = OptimizerState::new(w.dims);
        let zero = HeadGradients::zeros(w.dims);
        adamw_step(&mut w, &zero, &mut state, 1e-2, &cfg()).unwrap();
        assert_eq!(w, before);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn adamw_first_step_moves_by_lr() {
        let mut w = scalar_head();
        let mut g = HeadGradients::zeros(w.dims);
        g.w1[0] = 1.0;
        let mut state = OptimizerState::new(w.dims);
        let lr = 1e-3;
        adamw_step(&mut w, &g, &mut state, lr, &cfg()).unwrap();
        assert!((w.w1[0] - (-lr / (1.0 + 1e-8))).abs() < 1e-18);
    }

    #[test]
    fn adamw_decay_is_decoupled_and_skips_biases() {
        let mut w = scalar_head();
        w.w1[0] = 1.0;
        w.b1[0] = 1.0;
        let config = TrainingConfig { weight_decay: 0.1, ..cfg() };
        let mut state = OptimizerState::new(w.dims);
        let zero = HeadGradients::zeros(w.dims);
        adamw_step(&mut w, &zero, &mut state, 0.01, &config).unwrap();
        assert!((w.w1[0] - (1.0 - 0.01 * 0.1)).abs() < 1e-15);
        assert_eq!(w.b1[0], 1.0);
    }

    #[test]
    fn adamw_shape_mismatch() {
        let mut w = scalar_head();
        let g = HeadGradients::zeros(HeadDims::new(2, 1, 1));
        let mut state = OptimizerState::new(w.dims);
        assert!(matches!(adamw_step(&mut w, &g, &mut state, 0.1, &cfg()), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn clipping_examples() {
        let dims = HeadDims::new(1, 1, 2);
        let mut g = HeadGradients::zeros(dims);
        g.b2 = vec![0.3, 0.4];
        let before = g.clone();
        assert_eq!(clip_gradients(&mut g, 1.0), 0.5);
        assert_eq!(g, before);

        g.b2 = vec![3.0, 4.0];
        clip_gradients(&mut g, 1.0);
        assert!((g.b2[0] - 0.6).abs() < 1e-15 && (g.b2[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(TrainingConfig::default().validate().is_ok());
        assert!(TrainingConfig { tau: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainingConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainingConfig { clip_norm: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainingConfig { view_bank_size: 1, ..Default::default() }.validate().is_err());
    }
}
