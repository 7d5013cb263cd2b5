//! Conditional tabular GAN: loss terms, training-by-sampling and
//! generation.
//!
//! Every loss function returns its value together with the gradient with
//! respect to its inputs, so the training loop is plain chain-rule plumbing
//! through [`Mlp::backward`].

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::math::{argmax, ln, ln_1p, sqrt};
use crate::model::Table;
use crate::neural::{Activation, AdamConfig, AdamState, BlockKind, Gradients, Matrix, Mlp, NeuralError, OutputBlock};
use crate::transform::{decode_rows, ColumnEncoder, DiscreteBlock, EncodeError, EncodedMatrix, Segment, TableEncoder};
use crate::{seeded_rng, SeededRng};

/// Scores are clamped to `[SCORE_CLAMP, 1 − SCORE_CLAMP]` before taking logs.
pub const SCORE_CLAMP: f64 = 1e-7;
/// Additive smoothing for marginal KL terms.
pub const KL_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    /// Sigmoid discriminator with the minimax log loss.
    Vanilla,
    /// Linear critic with gradient penalty.
    WganGp,
}

/// How category counts become the condition sampling distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionPmf {
    /// Proportional to `ln(1 + count)`.
    Log,
    /// Proportional to `count`.
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub loss: LossVariant,
    pub conditional: bool,
    pub condition_pmf: ConditionPmf,
    pub kl_penalty: bool,
    pub info_loss: bool,
    pub info_delta_mean: f64,
    pub info_delta_sd: f64,
    pub classifier_loss: bool,
    /// Gradient penalty weight.
    pub lambda: f64,
    pub noise_dim: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// Generator steps per epoch; defaults to `rows / batch_size`.
    pub steps_per_epoch: Option<usize>,
    pub critic_steps: usize,
    pub label_smoothing: bool,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            loss: LossVariant::WganGp,
            conditional: true,
            condition_pmf: ConditionPmf::Log,
            kl_penalty: false,
            info_loss: false,
            info_delta_mean: 0.0,
            info_delta_sd: 0.0,
            classifier_loss: false,
            lambda: 10.0,
            noise_dim: 64,
            batch_size: 128,
            epochs: 300,
            steps_per_epoch: None,
            critic_steps: 5,
            label_smoothing: false,
            generator_hidden: vec![256, 256],
            discriminator_hidden: vec![256, 256],
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GanError {
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("training needs at least {required} rows, got {rows}")]
    InsufficientRows { rows: usize, required: usize },
    #[error("non-finite {term} at epoch {epoch}")]
    NonFinite { epoch: usize, term: &'static str },
    #[error("no discrete column to condition on")]
    NoDiscreteColumns,
    #[error("unknown condition {column}={category}")]
    UnknownCondition { column: String, category: String },
    #[error("model was trained without conditioning")]
    NotConditional,
    #[error("row count must be positive")]
    ZeroRows,
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

/// A chosen `(discrete column, category)` pair, both 0-based; `block` indexes
/// the encoder's discrete columns, not the schema.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub block: usize,
    pub category: usize,
}

/// Concatenated per-column masks with exactly one entry set.
#[derive(Clone, Debug, PartialEq)]
pub struct CondVector {
    pub condition: Condition,
    pub vector: Vec<f64>,
}

fn block_starts(blocks: &[DiscreteBlock]) -> Vec<usize> {
    let mut at = 0;
    blocks
        .iter()
        .map(|b| {
            let s = at;
            at += b.categories;
            s
        })
        .collect()
}

pub fn cond_width(blocks: &[DiscreteBlock]) -> usize {
    blocks.iter().map(|b| b.categories).sum()
}

/// Mask vector for `condition`.
pub fn cond_vector(blocks: &[DiscreteBlock], condition: Condition) -> CondVector {
    let mut vector = vec![0.0; cond_width(blocks)];
    vector[block_starts(blocks)[condition.block] + condition.category] = 1.0;
    CondVector { condition, vector }
}

fn cond_matrix(blocks: &[DiscreteBlock], conditions: &[Condition]) -> Matrix {
    let starts = block_starts(blocks);
    let mut m = Matrix::zeros(conditions.len(), cond_width(blocks));
    for (r, c) in conditions.iter().enumerate() {
        m.set(r, starts[c.block] + c.category, 1.0);
    }
    m
}

fn draw_weighted<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Picks a discrete column uniformly, then a category with probability
/// proportional to `ln(1 + count)` (or `count`). `counts[i][j]` is the
/// frequency of category `j` in discrete column `i`.
pub fn sample_condition<R: Rng>(
    encoder: &TableEncoder,
    counts: &[Vec<usize>],
    pmf: ConditionPmf,
    rng: &mut R,
) -> Result<CondVector, GanError> {
    let blocks = encoder.discrete_blocks();
    let c = draw_condition(counts, pmf, rng)?;
    Ok(cond_vector(&blocks, c))
}

fn draw_condition<R: Rng>(counts: &[Vec<usize>], pmf: ConditionPmf, rng: &mut R) -> Result<Condition, GanError> {
    if counts.is_empty() {
        return Err(GanError::NoDiscreteColumns);
    }
    let block = rng.gen_range(0..counts.len());
    let weights: Vec<f64> = counts[block]
        .iter()
        .map(|&n| match pmf {
            ConditionPmf::Log => ln_1p(n as f64),
            ConditionPmf::Raw => n as f64,
        })
        .collect();
    Ok(Condition { block, category: draw_weighted(&weights, rng) })
}

/// Value and gradients of a discriminator loss with respect to the scores.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorLoss {
    pub value: f64,
    pub real_grad: Matrix,
    pub fake_grad: Matrix,
}

fn clamp_score(s: f64) -> (f64, bool) {
    let c = s.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
    (c, c != s)
}

/// Vanilla: `−[mean ln D(x) + mean ln(1 − D(G(z)))]`.
/// WGAN: `mean D(G(z)) − mean D(x)`; the gradient penalty is separate, see
/// [`gradient_penalty`].
pub fn discriminator_loss(variant: LossVariant, real: &Matrix, fake: &Matrix) -> DiscriminatorLoss {
    let (nr, nf) = (real.rows() as f64, fake.rows() as f64);
    let mut real_grad = Matrix::zeros(real.rows(), real.cols());
    let mut fake_grad = Matrix::zeros(fake.rows(), fake.cols());
    let mut value = 0.0;
    match variant {
        LossVariant::Vanilla => {
            for (g, &s) in real_grad.data_mut().iter_mut().zip(real.data()) {
                let (c, clamped) = clamp_score(s);
                value -= ln(c) / nr;
                *g = if clamped { 0.0 } else { -1.0 / (nr * c) };
            }
            for (g, &s) in fake_grad.data_mut().iter_mut().zip(fake.data()) {
                let (c, clamped) = clamp_score(s);
                value -= ln(1.0 - c) / nf;
                *g = if clamped { 0.0 } else { 1.0 / (nf * (1.0 - c)) };
            }
        }
        LossVariant::WganGp => {
            for (g, &s) in real_grad.data_mut().iter_mut().zip(real.data()) {
                value -= s / nr;
                *g = -1.0 / nr;
            }
            for (g, &s) in fake_grad.data_mut().iter_mut().zip(fake.data()) {
                value += s / nf;
                *g = 1.0 / nf;
            }
        }
    }
    DiscriminatorLoss { value, real_grad, fake_grad }
}

/// Non-saturating generator term: `−mean ln D(G(z))`, or `−mean D(G(z))`
/// for a critic.
pub fn generator_adversarial_loss(variant: LossVariant, fake: &Matrix) -> (f64, Matrix) {
    let n = fake.rows() as f64;
    let mut grad = Matrix::zeros(fake.rows(), fake.cols());
    let mut value = 0.0;
    for (g, &s) in grad.data_mut().iter_mut().zip(fake.data()) {
        match variant {
            LossVariant::Vanilla => {
                let (c, clamped) = clamp_score(s);
                value -= ln(c) / n;
                *g = if clamped { 0.0 } else { -1.0 / (n * c) };
            }
            LossVariant::WganGp => {
                value -= s / n;
                *g = -1.0 / n;
            }
        }
    }
    (value, grad)
}

/// Row-wise `ε·real + (1 − ε)·fake`.
pub fn interpolate(real: &Matrix, fake: &Matrix, eps: &[f64]) -> Matrix {
    Matrix::from_fn(real.rows(), real.cols(), |r, c| eps[r] * real.get(r, c) + (1.0 - eps[r]) * fake.get(r, c))
}

/// `λ·mean_rows (‖∇ₓ D(x)‖₂ − 1)²` at the given points, with its gradient
/// with respect to the critic parameters.
pub fn gradient_penalty(critic: &Mlp, points: &Matrix, lambda: f64) -> Result<(f64, Gradients), NeuralError> {
    let acts = critic.forward(points)?;
    let ones = Matrix::filled(points.rows(), critic.output_width(), 1.0);
    let tape = critic.input_gradient(&acts, &ones)?;
    let n = points.rows() as f64;
    let mut value = 0.0;
    let mut g_bar = Matrix::zeros(points.rows(), points.cols());
    for r in 0..points.rows() {
        let row = tape.grad.row(r);
        let norm = sqrt(row.iter().map(|v| v * v).sum::<f64>());
        value += lambda * (norm - 1.0) * (norm - 1.0) / n;
        if norm > 0.0 {
            let scale = 2.0 * lambda * (norm - 1.0) / (n * norm);
            for (o, v) in g_bar.row_mut(r).iter_mut().zip(row) {
                *o = scale * v;
            }
        }
    }
    let grads = critic.input_gradient_backward(&acts, &tape, &g_bar)?;
    Ok((value, grads))
}

/// `Σ_segments KL(p_gen ‖ p_real)` between batch-mean distributions, each
/// entry smoothed by [`KL_EPS`]. Only `gen` receives a gradient.
pub fn kl_marginal_loss(gen: &Matrix, real: &Matrix, segments: &[Segment]) -> (f64, Matrix) {
    let p_gen = gen.column_means();
    let p_real = real.column_means();
    let n = gen.rows() as f64;
    let mut value = 0.0;
    let mut col_grad = vec![0.0; gen.cols()];
    for s in segments {
        for k in s.offset..s.offset + s.len {
            let (p, q) = (p_gen[k] + KL_EPS, p_real[k] + KL_EPS);
            let l = ln(p / q);
            value += p * l;
            col_grad[k] = (l + 1.0) / n;
        }
    }
    let grad = Matrix::from_fn(gen.rows(), gen.cols(), |_, c| col_grad[c]);
    (value, grad)
}

fn mean_and_sd(m: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let mean = m.column_means();
    let n = m.rows() as f64;
    let mut var = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        for ((v, x), mu) in var.iter_mut().zip(m.row(r)).zip(&mean) {
            *v += (x - mu) * (x - mu);
        }
    }
    (mean, var.into_iter().map(|v| sqrt(v / n)).collect())
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
}

/// `max(0, ‖μ_real − μ_fake‖ − δ_mean) + max(0, ‖σ_real − σ_fake‖ − δ_sd)`
/// over feature columns; the gradient is with respect to `fake`.
pub fn info_loss(real: &Matrix, fake: &Matrix, delta_mean: f64, delta_sd: f64) -> (f64, Matrix) {
    let (mu_r, sd_r) = mean_and_sd(real);
    let (mu_f, sd_f) = mean_and_sd(fake);
    let l_mean = l2(&mu_r, &mu_f);
    let l_sd = l2(&sd_r, &sd_f);
    let n = fake.rows() as f64;
    let mut grad = Matrix::zeros(fake.rows(), fake.cols());
    if l_mean > delta_mean && l_mean > 0.0 {
        for r in 0..fake.rows() {
            for (c, g) in grad.row_mut(r).iter_mut().enumerate() {
                *g += (mu_f[c] - mu_r[c]) / (l_mean * n);
            }
        }
    }
    if l_sd > delta_sd && l_sd > 0.0 {
        for r in 0..fake.rows() {
            let x = fake.row(r).to_vec();
            for (c, g) in grad.row_mut(r).iter_mut().enumerate() {
                if sd_f[c] > 0.0 {
                    *g += (sd_f[c] - sd_r[c]) / l_sd * (x[c] - mu_f[c]) / (n * sd_f[c]);
                }
            }
        }
    }
    let value = (l_mean - delta_mean).max(0.0) + (l_sd - delta_sd).max(0.0);
    (value, grad)
}

/// Mean over rows of `−ln p`, where `p` is the generated probability of the
/// conditioned category.
pub fn conditional_cross_entropy(gen: &Matrix, conditions: &[Condition], blocks: &[DiscreteBlock]) -> (f64, Matrix) {
    let n = gen.rows() as f64;
    let mut grad = Matrix::zeros(gen.rows(), gen.cols());
    let mut value = 0.0;
    for (r, c) in conditions.iter().enumerate() {
        let pos = blocks[c.block].offset + c.category;
        let p = gen.get(r, pos).max(1e-300);
        value -= ln(p) / n;
        grad.set(r, pos, -1.0 / (n * p));
    }
    (value, grad)
}

/// Mean over rows of `Σ_k |label_k − predicted_k|`; returns gradients for
/// both arguments.
pub fn classifier_disagreement(labels: &Matrix, predicted: &Matrix) -> (f64, Matrix, Matrix) {
    let n = labels.rows() as f64;
    let mut g_label = Matrix::zeros(labels.rows(), labels.cols());
    let mut g_pred = Matrix::zeros(labels.rows(), labels.cols());
    let mut value = 0.0;
    for i in 0..labels.data().len() {
        let d = labels.data()[i] - predicted.data()[i];
        value += d.abs() / n;
        let s = if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        };
        g_label.data_mut()[i] = s / n;
        g_pred.data_mut()[i] = -s / n;
    }
    (value, g_label, g_pred)
}

/// Mean cross-entropy of softmax outputs against integer targets.
pub fn classifier_cross_entropy(predicted: &Matrix, targets: &[usize]) -> (f64, Matrix) {
    let n = predicted.rows() as f64;
    let mut grad = Matrix::zeros(predicted.rows(), predicted.cols());
    let mut value = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        let p = predicted.get(r, t).max(1e-300);
        value -= ln(p) / n;
        grad.set(r, t, -1.0 / (n * p));
    }
    (value, grad)
}

fn normal_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Copy of `m` without columns `start..start + len`.
fn without_columns(m: &Matrix, start: usize, len: usize) -> Matrix {
    let cols = m.cols() - len;
    Matrix::from_fn(m.rows(), cols, |r, c| if c < start { m.get(r, c) } else { m.get(r, c + len) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub epoch: usize,
    pub term: String,
    pub value: f64,
}

/// Position of the classifier target block in the encoded row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetBlock {
    pub offset: usize,
    pub width: usize,
    pub categories: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanModel {
    pub config: GanConfig,
    pub encoder: TableEncoder,
    pub generator: Mlp,
    pub discriminator: Mlp,
    pub classifier: Option<Mlp>,
    pub target: Option<TargetBlock>,
    /// Category counts per discrete column of the training data.
    pub condition_counts: Vec<Vec<usize>>,
    pub log: Vec<LogEntry>,
}

/// Category of every row in every discrete column (`None` for null).
fn category_index(encoder: &TableEncoder, data: &Matrix) -> Vec<Vec<Option<usize>>> {
    encoder
        .discrete_blocks()
        .iter()
        .map(|b| {
            let width = encoder.layout()[b.column].width;
            (0..data.rows())
                .map(|r| {
                    let k = argmax(&data.row(r)[b.offset..b.offset + width]);
                    (k < b.categories).then_some(k)
                })
                .collect()
        })
        .collect()
}

fn target_block(encoder: &TableEncoder) -> Result<TargetBlock, GanError> {
    let t = encoder.schema().target_index().ok_or(GanError::Config("classifier loss needs a target column"))?;
    match &encoder.columns()[t] {
        ColumnEncoder::Discrete { tokens, .. } => {
            let slice = &encoder.layout()[t];
            Ok(TargetBlock { offset: slice.offset, width: slice.width, categories: tokens.len() })
        }
        _ => Err(GanError::Config("classifier target must be categorical")),
    }
}

struct Trainer<'a> {
    cfg: &'a GanConfig,
    encoder: &'a TableEncoder,
    data: &'a Matrix,
    rng: SeededRng,
    blocks: Vec<DiscreteBlock>,
    segments: Vec<Segment>,
    /// `rows_by_category[block][category]`
    rows_by_category: Vec<Vec<Vec<usize>>>,
    counts: Vec<Vec<usize>>,
    target: Option<TargetBlock>,
    generator: Mlp,
    discriminator: Mlp,
    classifier: Option<Mlp>,
    opt_g: AdamState,
    opt_d: AdamState,
    opt_c: Option<AdamState>,
    epoch: usize,
}

struct Batch {
    real: Matrix,
    conditions: Vec<Condition>,
    cond: Matrix,
}

fn finite(value: f64, epoch: usize, term: &'static str) -> Result<f64, GanError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(GanError::NonFinite { epoch, term })
    }
}

impl Trainer<'_> {
    fn sample_batch(&mut self) -> Result<Batch, GanError> {
        let b = self.cfg.batch_size;
        if !self.cfg.conditional {
            let rows: Vec<usize> = (0..b).map(|_| self.rng.gen_range(0..self.data.rows())).collect();
            return Ok(Batch { real: self.data.select_rows(&rows), conditions: Vec::new(), cond: Matrix::zeros(b, 0) });
        }
        let mut conditions = Vec::with_capacity(b);
        let mut rows = Vec::with_capacity(b);
        for _ in 0..b {
            let c = draw_condition(&self.counts, self.cfg.condition_pmf, &mut self.rng)?;
            let pool = &self.rows_by_category[c.block][c.category];
            rows.push(pool[self.rng.gen_range(0..pool.len())]);
            conditions.push(c);
        }
        let cond = cond_matrix(&self.blocks, &conditions);
        Ok(Batch { real: self.data.select_rows(&rows), conditions, cond })
    }

    fn smooth_labels(&mut self, real: &mut Matrix) {
        for (enc, slice) in self.encoder.columns().iter().zip(self.encoder.layout()) {
            if let ColumnEncoder::Discrete { gamma, .. } = enc {
                if *gamma <= 0.0 {
                    continue;
                }
                for r in 0..real.rows() {
                    for v in &mut real.row_mut(r)[slice.offset..slice.offset + slice.width] {
                        *v = (*v + self.rng.gen_range(0.0..*gamma)) / (1.0 + gamma);
                    }
                }
            }
        }
    }

    fn generate_fake(&mut self, cond: &Matrix) -> Result<(crate::neural::Activations, Matrix), GanError> {
        let z = normal_matrix(&mut self.rng, cond.rows(), self.cfg.noise_dim);
        let input = z.hcat(cond)?;
        let acts = self.generator.forward(&input)?;
        let out = acts.output().clone();
        Ok((acts, out))
    }

    fn critic_step(&mut self, sums: &mut Sums) -> Result<(), GanError> {
        let mut batch = self.sample_batch()?;
        if self.cfg.label_smoothing {
            self.smooth_labels(&mut batch.real);
        }
        let (_, fake) = self.generate_fake(&batch.cond)?;
        let real_in = batch.real.hcat(&batch.cond)?;
        let fake_in = fake.hcat(&batch.cond)?;
        let ar = self.discriminator.forward(&real_in)?;
        let af = self.discriminator.forward(&fake_in)?;
        let loss = discriminator_loss(self.cfg.loss, ar.output(), af.output());
        sums.add("discriminator", finite(loss.value, self.epoch, "discriminator")?);
        let mut grads = self.discriminator.backward(&ar, &loss.real_grad)?.grads;
        grads.add_assign(&self.discriminator.backward(&af, &loss.fake_grad)?.grads);
        if self.cfg.loss == LossVariant::WganGp && self.cfg.lambda > 0.0 {
            let eps: Vec<f64> = (0..real_in.rows()).map(|_| self.rng.gen::<f64>()).collect();
            let points = interpolate(&real_in, &fake_in, &eps);
            let (gp, gp_grads) = gradient_penalty(&self.discriminator, &points, self.cfg.lambda)?;
            sums.add("gradient_penalty", finite(gp, self.epoch, "gradient_penalty")?);
            grads.add_assign(&gp_grads);
        }
        self.opt_d.step(&mut self.discriminator, &grads).map_err(|_| GanError::NonFinite {
            epoch: self.epoch,
            term: "discriminator_gradient",
        })
    }

    fn generator_step(&mut self, sums: &mut Sums) -> Result<(), GanError> {
        let batch = self.sample_batch()?;
        let (g_acts, fake) = self.generate_fake(&batch.cond)?;
        let width = self.encoder.width();
        let d_acts = self.discriminator.forward(&fake.hcat(&batch.cond)?)?;
        let (adv, adv_grad) = generator_adversarial_loss(self.cfg.loss, d_acts.output());
        sums.add("generator", finite(adv, self.epoch, "generator")?);

        let depth = self.discriminator.layers().len();
        let mut info_grad = None;
        if self.cfg.info_loss {
            let real_acts = self.discriminator.forward(&batch.real.hcat(&batch.cond)?)?;
            let (v, g) = info_loss(
                real_acts.penultimate(),
                d_acts.penultimate(),
                self.cfg.info_delta_mean,
                self.cfg.info_delta_sd,
            );
            sums.add("info", finite(v, self.epoch, "info")?);
            info_grad = Some(g);
        }
        let mut taps: Vec<Option<&Matrix>> = vec![None; depth];
        taps[depth - 1] = Some(&adv_grad);
        if let Some(g) = &info_grad {
            taps[depth - 2] = Some(g);
        }
        let through_d = self.discriminator.backward_taps(&d_acts, &taps)?;
        let mut out_grad = through_d.input_grad.columns(0, width);

        if self.cfg.kl_penalty {
            let (v, g) = kl_marginal_loss(&fake, &batch.real, &self.segments);
            sums.add("kl", finite(v, self.epoch, "kl")?);
            out_grad.add_assign(&g);
        }
        if self.cfg.conditional {
            let (v, g) = conditional_cross_entropy(&fake, &batch.conditions, &self.blocks);
            sums.add("conditional", finite(v, self.epoch, "conditional")?);
            out_grad.add_assign(&g);
        }
        if let (Some(c), Some(t)) = (&self.classifier, self.target) {
            let features = without_columns(&fake, t.offset, t.width);
            let c_acts = c.forward(&features)?;
            let labels = fake.columns(t.offset, t.categories);
            let (v, g_label, g_pred) = classifier_disagreement(&labels, c_acts.output());
            sums.add("classifier", finite(v, self.epoch, "classifier")?);
            let g_features = c.backward(&c_acts, &g_pred)?.input_grad;
            for r in 0..fake.rows() {
                let row = out_grad.row_mut(r);
                for (c, g) in g_features.row(r).iter().enumerate() {
                    let pos = if c < t.offset { c } else { c + t.width };
                    row[pos] += g;
                }
                for (k, g) in g_label.row(r).iter().enumerate() {
                    row[t.offset + k] += g;
                }
            }
        }
        let grads = self.generator.backward(&g_acts, &out_grad)?.grads;
        self.opt_g
            .step(&mut self.generator, &grads)
            .map_err(|_| GanError::NonFinite { epoch: self.epoch, term: "generator_gradient" })?;

        if self.classifier.is_some() {
            self.classifier_step(sums)?;
        }
        Ok(())
    }

    fn classifier_step(&mut self, sums: &mut Sums) -> Result<(), GanError> {
        let t = self.target.expect("classifier implies target");
        let rows: Vec<usize> = (0..self.cfg.batch_size).map(|_| self.rng.gen_range(0..self.data.rows())).collect();
        let real = self.data.select_rows(&rows);
        let targets: Vec<usize> =
            (0..real.rows()).map(|r| argmax(&real.row(r)[t.offset..t.offset + t.categories])).collect();
        let c = self.classifier.as_mut().expect("checked");
        let acts = c.forward(&without_columns(&real, t.offset, t.width))?;
        let (v, g) = classifier_cross_entropy(acts.output(), &targets);
        sums.add("classifier_fit", finite(v, self.epoch, "classifier_fit")?);
        let grads = c.backward(&acts, &g)?.grads;
        self.opt_c
            .as_mut()
            .expect("classifier optimizer")
            .step(c, &grads)
            .map_err(|_| GanError::NonFinite { epoch: self.epoch, term: "classifier_gradient" })
    }
}

/// Running per-term sums for one epoch, in first-seen order.
#[derive(Default)]
struct Sums {
    terms: Vec<(&'static str, f64, usize)>,
}

impl Sums {
    fn add(&mut self, term: &'static str, value: f64) {
        match self.terms.iter_mut().find(|(t, _, _)| *t == term) {
            Some(e) => {
                e.1 += value;
                e.2 += 1;
            }
            None => self.terms.push((term, value, 1)),
        }
    }
}

fn check_config(cfg: &GanConfig) -> Result<(), GanError> {
    if !(cfg.lambda >= 0.0 && cfg.lambda.is_finite()) {
        return Err(GanError::Config("lambda must be non-negative"));
    }
    if cfg.batch_size == 0 || cfg.noise_dim == 0 || cfg.critic_steps == 0 {
        return Err(GanError::Config("batch size, noise dimension and critic steps must be positive"));
    }
    if cfg.info_loss && cfg.discriminator_hidden.is_empty() {
        return Err(GanError::Config("info loss needs a hidden discriminator layer"));
    }
    if !(cfg.info_delta_mean >= 0.0 && cfg.info_delta_sd >= 0.0) {
        return Err(GanError::Config("info thresholds must be non-negative"));
    }
    Ok(())
}

/// Trains generator and discriminator on encoded rows.
pub fn train(cfg: &GanConfig, encoder: &TableEncoder, data: &EncodedMatrix) -> Result<GanModel, GanError> {
    check_config(cfg)?;
    let data = &data.matrix;
    if data.cols() != encoder.width() {
        return Err(EncodeError::Width { expected: encoder.width(), found: data.cols() }.into());
    }
    let required = 2 * cfg.batch_size;
    if data.rows() < required {
        return Err(GanError::InsufficientRows { rows: data.rows(), required });
    }
    let blocks = encoder.discrete_blocks();
    if cfg.conditional && blocks.is_empty() {
        return Err(GanError::NoDiscreteColumns);
    }
    let target = if cfg.classifier_loss { Some(target_block(encoder)?) } else { None };

    let categories = category_index(encoder, data);
    let mut rows_by_category: Vec<Vec<Vec<usize>>> =
        blocks.iter().map(|b| vec![Vec::new(); b.categories]).collect();
    for (bi, col) in categories.iter().enumerate() {
        for (r, k) in col.iter().enumerate() {
            if let Some(k) = k {
                rows_by_category[bi][*k].push(r);
            }
        }
    }
    let counts: Vec<Vec<usize>> = rows_by_category.iter().map(|b| b.iter().map(Vec::len).collect()).collect();
    let c_width = if cfg.conditional { cond_width(&blocks) } else { 0 };

    let mut rng = seeded_rng(cfg.seed);
    let width = encoder.width();
    let g_sizes: Vec<usize> = core::iter::once(cfg.noise_dim + c_width)
        .chain(cfg.generator_hidden.iter().copied())
        .chain(core::iter::once(width))
        .collect();
    let generator = Mlp::new(&g_sizes, Activation::LeakyRelu, Activation::Blockwise(encoder.output_blocks()), &mut rng)?;
    let d_sizes: Vec<usize> = core::iter::once(width + c_width)
        .chain(cfg.discriminator_hidden.iter().copied())
        .chain(core::iter::once(1))
        .collect();
    let d_out = match cfg.loss {
        LossVariant::Vanilla => Activation::Sigmoid,
        LossVariant::WganGp => Activation::Linear,
    };
    let discriminator = Mlp::new(&d_sizes, Activation::LeakyRelu, d_out, &mut rng)?;
    let classifier = match target {
        Some(t) => {
            let mut sizes = vec![width - t.width];
            sizes.extend(cfg.discriminator_hidden.iter().copied());
            sizes.push(t.categories);
            let softmax = Activation::Blockwise(vec![OutputBlock { kind: BlockKind::Softmax, start: 0, len: t.categories }]);
            Some(Mlp::new(&sizes, Activation::LeakyRelu, softmax, &mut rng)?)
        }
        None => None,
    };
    let opt_g = AdamState::new(&generator, cfg.adam);
    let opt_d = AdamState::new(&discriminator, cfg.adam);
    let opt_c = classifier.as_ref().map(|c| AdamState::new(c, cfg.adam));

    let mut t = Trainer {
        cfg,
        encoder,
        data,
        rng,
        segments: encoder.probability_segments(),
        blocks,
        rows_by_category,
        counts: counts.clone(),
        target,
        generator,
        discriminator,
        classifier,
        opt_g,
        opt_d,
        opt_c,
        epoch: 0,
    };
    let steps = cfg.steps_per_epoch.unwrap_or(data.rows() / cfg.batch_size).max(1);
    let mut log = Vec::new();
    for epoch in 0..cfg.epochs {
        t.epoch = epoch;
        let mut sums = Sums::default();
        for _ in 0..steps {
            for _ in 0..cfg.critic_steps {
                t.critic_step(&mut sums)?;
            }
            t.generator_step(&mut sums)?;
        }
        for (term, total, count) in sums.terms {
            log.push(LogEntry { epoch, term: term.to_string(), value: total / count as f64 });
        }
    }
    Ok(GanModel {
        config: cfg.clone(),
        encoder: encoder.clone(),
        generator: t.generator,
        discriminator: t.discriminator,
        classifier: t.classifier,
        target,
        condition_counts: counts,
        log,
    })
}

const GENERATION_CHUNK: usize = 1024;

impl GanModel {
    /// Resolves a `(column name, category token)` pair.
    pub fn condition(&self, column: &str, category: &str) -> Result<Condition, GanError> {
        let unknown = || GanError::UnknownCondition { column: column.to_string(), category: category.to_string() };
        let idx = self.encoder.schema().index_of(column).ok_or_else(unknown)?;
        let block = self.encoder.discrete_blocks().iter().position(|b| b.column == idx).ok_or_else(unknown)?;
        match &self.encoder.columns()[idx] {
            ColumnEncoder::Discrete { tokens, .. } => {
                let category = tokens.iter().position(|t| t == category).ok_or_else(unknown)?;
                Ok(Condition { block, category })
            }
            _ => Err(unknown()),
        }
    }

    /// Raw generator output for `n` rows.
    pub fn generate_encoded(&self, n: usize, condition: Option<Condition>, seed: u64) -> Result<Matrix, GanError> {
        if n == 0 {
            return Err(GanError::ZeroRows);
        }
        if condition.is_some() && !self.config.conditional {
            return Err(GanError::NotConditional);
        }
        let blocks = self.encoder.discrete_blocks();
        let mut rng = seeded_rng(seed);
        let mut data = Vec::with_capacity(n * self.encoder.width());
        let mut done = 0;
        while done < n {
            let rows = (n - done).min(GENERATION_CHUNK);
            let z = normal_matrix(&mut rng, rows, self.config.noise_dim);
            let input = if self.config.conditional {
                let conditions: Vec<Condition> = match condition {
                    Some(c) => vec![c; rows],
                    None => (0..rows)
                        .map(|_| draw_condition(&self.condition_counts, ConditionPmf::Raw, &mut rng))
                        .collect::<Result<_, _>>()?,
                };
                z.hcat(&cond_matrix(&blocks, &conditions))?
            } else {
                z
            };
            data.extend_from_slice(self.generator.predict(&input)?.data());
            done += rows;
        }
        Ok(Matrix::from_vec(n, self.encoder.width(), data)?)
    }
}

/// Draws `n` rows, optionally conditioned on `(column, category)`, and
/// decodes them.
pub fn generate(model: &GanModel, n: usize, condition: Option<(&str, &str)>, seed: u64) -> Result<Table, GanError> {
    let cond = condition.map(|(c, v)| model.condition(c, v)).transpose()?;
    let matrix = model.generate_encoded(n, cond, seed)?;
    Ok(decode_rows(&model.encoder, &EncodedMatrix { matrix, source_rows: n })?)
}
