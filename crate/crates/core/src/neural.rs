//! Minimal fully-connected network kernel with manual reverse-mode
//! differentiation and Adam.
//!
//! Besides the usual backward pass, [`Mlp::input_gradient`] and
//! [`Mlp::input_gradient_backward`] differentiate a function of the input
//! gradient with respect to the parameters. The Wasserstein critic's gradient
//! penalty needs exactly that.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math::{exp, sqrt, tanh};
use crate::seeded_rng;

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NeuralError {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape { context: &'static str, expected: String, found: String },
    #[error("non-finite gradient in layer {layer} {block}")]
    NonFiniteGradient { layer: usize, block: &'static str },
    #[error("unsupported: {0}")]
    Unsupported(&'static str),
    #[error("invalid layout: {0}")]
    Layout(&'static str),
}

fn shape_err(context: &'static str, expected: (usize, usize), found: (usize, usize)) -> NeuralError {
    NeuralError::Shape {
        context,
        expected: format!("{}x{}", expected.0, expected.1),
        found: format!("{}x{}", found.0, found.1),
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    #[serde(with = "f64_block")]
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NeuralError> {
        if data.len() != rows * cols {
            return Err(shape_err("from_vec", (rows, cols), (data.len(), 1)));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NeuralError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(shape_err("from_rows", (rows.len(), cols), (rows.len(), r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { rows: rows.len(), cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self · other`
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, NeuralError> {
        if self.cols != other.rows {
            return Err(shape_err("matmul", (self.cols, other.cols), other.shape()));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for (k, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix, NeuralError> {
        if self.rows != other.rows {
            return Err(shape_err("t_matmul", (other.rows, self.cols), self.shape()));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let b_row = other.row(r);
            for (i, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix, NeuralError> {
        if self.cols != other.cols {
            return Err(shape_err("matmul_t", (self.rows, other.cols), self.shape()));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for r in 0..self.rows {
            let a_row = self.row(r);
            for j in 0..other.rows {
                out.data[r * other.rows + j] = dot(a_row, other.row(j));
            }
        }
        Ok(out)
    }

    /// Column-wise concatenation.
    pub fn hcat(&self, other: &Matrix) -> Result<Matrix, NeuralError> {
        if self.rows != other.rows {
            return Err(shape_err("hcat", (self.rows, other.cols), other.shape()));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Matrix { rows: self.rows, cols, data })
    }

    /// Copy of columns `start..start + len`.
    pub fn columns(&self, start: usize, len: usize) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * len);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..start + len]);
        }
        Matrix { rows: self.rows, cols: len, data }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Matrix { rows: rows.len(), cols: self.cols, data }
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        let n = self.rows as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Serializes `f64` slices as base64 of their little-endian bytes, which
/// round-trips bit-exactly.
pub mod f64_block {
    use alloc::string::String;
    use alloc::vec::Vec;
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut bytes = Vec::with_capacity(values.len() * 8);
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = STANDARD.decode(text.as_bytes()).map_err(de::Error::custom)?;
        if bytes.len() % 8 != 0 {
            return Err(de::Error::custom("parameter block length is not a multiple of 8"));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Tanh,
    Softmax,
}

/// One slice of a blockwise output activation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputBlock {
    pub kind: BlockKind,
    pub start: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "blocks", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// Negative slope [`LEAKY_SLOPE`].
    LeakyRelu,
    Tanh,
    Sigmoid,
    Linear,
    /// Tanh on some slices, softmax on the others; the slices partition the
    /// layer output in order.
    Blockwise(Vec<OutputBlock>),
}

impl Activation {
    fn check_width(&self, width: usize) -> Result<(), NeuralError> {
        if let Activation::Blockwise(blocks) = self {
            let mut next = 0;
            for b in blocks {
                if b.start != next || b.len == 0 {
                    return Err(NeuralError::Layout("blocks must be contiguous and non-empty"));
                }
                next += b.len;
            }
            if next != width {
                return Err(NeuralError::Layout("blocks must cover the layer width"));
            }
        }
        Ok(())
    }

    fn apply(&self, pre: &Matrix) -> Matrix {
        let mut out = pre.clone();
        match self {
            Activation::Relu => out.data.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::LeakyRelu => out.data.iter_mut().for_each(|v| {
                if *v < 0.0 {
                    *v *= LEAKY_SLOPE
                }
            }),
            Activation::Tanh => out.data.iter_mut().for_each(|v| *v = tanh(*v)),
            Activation::Sigmoid => out.data.iter_mut().for_each(|v| *v = crate::math::sigmoid(*v)),
            Activation::Linear => {}
            Activation::Blockwise(blocks) => {
                for r in 0..out.rows {
                    let row = out.row_mut(r);
                    for b in blocks {
                        let s = &mut row[b.start..b.start + b.len];
                        match b.kind {
                            BlockKind::Tanh => s.iter_mut().for_each(|v| *v = tanh(*v)),
                            BlockKind::Softmax => softmax_in_place(s),
                        }
                    }
                }
            }
        }
        out
    }

    /// Gradient with respect to the pre-activation given the gradient with
    /// respect to the output.
    fn backprop(&self, pre: &Matrix, post: &Matrix, grad: &Matrix) -> Matrix {
        let mut out = grad.clone();
        match self {
            Activation::Relu => {
                for (g, a) in out.data.iter_mut().zip(&pre.data) {
                    if *a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::LeakyRelu => {
                for (g, a) in out.data.iter_mut().zip(&pre.data) {
                    if *a < 0.0 {
                        *g *= LEAKY_SLOPE;
                    }
                }
            }
            Activation::Tanh => {
                for (g, y) in out.data.iter_mut().zip(&post.data) {
                    *g *= 1.0 - y * y;
                }
            }
            Activation::Sigmoid => {
                for (g, y) in out.data.iter_mut().zip(&post.data) {
                    *g *= y * (1.0 - y);
                }
            }
            Activation::Linear => {}
            Activation::Blockwise(blocks) => {
                for r in 0..out.rows {
                    let y = post.row(r);
                    let g_row = out.row_mut(r);
                    for b in blocks {
                        let range = b.start..b.start + b.len;
                        match b.kind {
                            BlockKind::Tanh => {
                                for (g, y) in g_row[range.clone()].iter_mut().zip(&y[range]) {
                                    *g *= 1.0 - y * y;
                                }
                            }
                            BlockKind::Softmax => {
                                let ys = &y[range.clone()];
                                let inner = dot(&g_row[range.clone()], ys);
                                for (g, y) in g_row[range].iter_mut().zip(ys) {
                                    *g = y * (*g - inner);
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Elementwise `f'(a)` and `f''(a)` expressed through the output.
    fn derivatives(&self, pre: f64, post: f64) -> Result<(f64, f64), NeuralError> {
        Ok(match self {
            Activation::Relu => (if pre > 0.0 { 1.0 } else { 0.0 }, 0.0),
            Activation::LeakyRelu => (if pre < 0.0 { LEAKY_SLOPE } else { 1.0 }, 0.0),
            Activation::Tanh => (1.0 - post * post, -2.0 * post * (1.0 - post * post)),
            Activation::Sigmoid => (post * (1.0 - post), post * (1.0 - post) * (1.0 - 2.0 * post)),
            Activation::Linear => (1.0, 0.0),
            Activation::Blockwise(_) => {
                return Err(NeuralError::Unsupported("second derivatives of blockwise activations"))
            }
        })
    }
}

fn softmax_in_place(s: &mut [f64]) {
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in s.iter_mut() {
        *v = exp(*v - max);
        total += *v;
    }
    s.iter_mut().for_each(|v| *v /= total);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `inputs × outputs`
    pub weights: Matrix,
    #[serde(with = "f64_block")]
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn inputs(&self) -> usize {
        self.weights.rows
    }

    pub fn outputs(&self) -> usize {
        self.weights.cols
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Everything the forward pass produced, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Activations {
    pub input: Matrix,
    pub pre: Vec<Matrix>,
    pub post: Vec<Matrix>,
}

impl Activations {
    pub fn output(&self) -> &Matrix {
        self.post.last().unwrap_or(&self.input)
    }

    /// Output of the layer before the last one.
    pub fn penultimate(&self) -> &Matrix {
        let n = self.post.len();
        if n >= 2 {
            &self.post[n - 2]
        } else {
            &self.input
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Parameter gradients, shaped like the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad { weights: Matrix::zeros(l.inputs(), l.outputs()), bias: vec![0.0; l.outputs()] })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.add_assign(&b.weights);
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.scale(s);
            l.bias.iter_mut().for_each(|b| *b *= s);
        }
    }

    /// Flattened in [`Mlp::param`] order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn check_finite(&self) -> Result<(), NeuralError> {
        for (i, l) in self.layers.iter().enumerate() {
            if !l.weights.is_finite() {
                return Err(NeuralError::NonFiniteGradient { layer: i, block: "weights" });
            }
            if l.bias.iter().any(|b| !b.is_finite()) {
                return Err(NeuralError::NonFiniteGradient { layer: i, block: "bias" });
            }
        }
        Ok(())
    }
}

/// Result of a backward pass.
#[derive(Clone, Debug)]
pub struct Backward {
    pub grads: Gradients,
    /// Gradient with respect to the network input.
    pub input_grad: Matrix,
}

/// Intermediate values of the input-gradient pass, kept so the pass itself
/// can be differentiated.
#[derive(Clone, Debug)]
pub struct InputGradient {
    pub grad: Matrix,
    /// Gradient with respect to each layer's output.
    post_grads: Vec<Matrix>,
    /// Gradient with respect to each layer's pre-activation.
    deltas: Vec<Matrix>,
}

impl Mlp {
    /// Builds a network with `sizes = [input, hidden.., output]`, He-style
    /// uniform weights and zero biases.
    pub fn new<R: Rng>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self, NeuralError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(NeuralError::Layout("need at least input and output sizes, all positive"));
        }
        let gain = sqrt(2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE));
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (i, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = gain * sqrt(3.0 / fan_in as f64);
            let weights = Matrix::from_fn(fan_in, fan_out, |_, _| rng.gen_range(-bound..bound));
            let activation = if i + 2 == sizes.len() { output.clone() } else { hidden.clone() };
            activation.check_width(fan_out)?;
            layers.push(Layer { weights, bias: vec![0.0; fan_out], activation });
        }
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, NeuralError> {
        if layers.is_empty() {
            return Err(NeuralError::Layout("no layers"));
        }
        for w in layers.windows(2) {
            if w[0].outputs() != w[1].inputs() {
                return Err(shape_err("layer chain", (w[0].outputs(), 0), (w[1].inputs(), 0)));
            }
        }
        for l in &layers {
            if l.bias.len() != l.outputs() {
                return Err(shape_err("bias", (1, l.outputs()), (1, l.bias.len())));
            }
            l.activation.check_width(l.outputs())?;
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.inputs() * l.outputs() + l.outputs()).sum()
    }

    fn locate(&self, mut index: usize) -> (usize, bool, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            let w = l.inputs() * l.outputs();
            if index < w {
                return (li, true, index);
            }
            index -= w;
            if index < l.outputs() {
                return (li, false, index);
            }
            index -= l.outputs();
        }
        panic!("parameter index out of range");
    }

    /// Parameter by flat index: each layer's weights (row-major) then bias.
    pub fn param(&self, index: usize) -> f64 {
        let (l, is_w, i) = self.locate(index);
        if is_w {
            self.layers[l].weights.data[i]
        } else {
            self.layers[l].bias[i]
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (l, is_w, i) = self.locate(index);
        if is_w {
            self.layers[l].weights.data[i] = value;
        } else {
            self.layers[l].bias[i] = value;
        }
    }

    pub fn forward(&self, input: &Matrix) -> Result<Activations, NeuralError> {
        if input.cols != self.input_width() {
            return Err(shape_err("forward input", (input.rows, self.input_width()), input.shape()));
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let h = post.last().unwrap_or(input);
            let mut a = h.matmul(&layer.weights)?;
            for r in 0..a.rows {
                for (v, b) in a.row_mut(r).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            let y = layer.activation.apply(&a);
            pre.push(a);
            post.push(y);
        }
        Ok(Activations { input: input.clone(), pre, post })
    }

    /// Output only.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix, NeuralError> {
        let mut acts = self.forward(input)?;
        Ok(acts.post.pop().unwrap_or_else(|| input.clone()))
    }

    pub fn backward(&self, acts: &Activations, output_grad: &Matrix) -> Result<Backward, NeuralError> {
        let mut taps: Vec<Option<&Matrix>> = vec![None; self.layers.len()];
        *taps.last_mut().expect("non-empty network") = Some(output_grad);
        self.backward_taps(acts, &taps)
    }

    /// Backward pass with gradients injected at any layer output; `taps[l]`
    /// is the gradient with respect to the output of layer `l`.
    pub fn backward_taps(&self, acts: &Activations, taps: &[Option<&Matrix>]) -> Result<Backward, NeuralError> {
        let depth = self.layers.len();
        if taps.len() != depth {
            return Err(NeuralError::Layout("one tap slot per layer"));
        }
        let batch = acts.input.rows;
        let mut grads = Gradients::zeros_like(self);
        let mut carried: Option<Matrix> = None;
        for l in (0..depth).rev() {
            let layer = &self.layers[l];
            let mut g = carried.take().unwrap_or_else(|| Matrix::zeros(batch, layer.outputs()));
            if let Some(t) = taps[l] {
                if t.shape() != g.shape() {
                    return Err(shape_err("backward tap", g.shape(), t.shape()));
                }
                g.add_assign(t);
            }
            let delta = layer.activation.backprop(&acts.pre[l], &acts.post[l], &g);
            let h = if l == 0 { &acts.input } else { &acts.post[l - 1] };
            grads.layers[l].weights = h.t_matmul(&delta)?;
            grads.layers[l].bias = column_sums(&delta);
            carried = Some(delta.matmul_t(&layer.weights)?);
        }
        Ok(Backward { grads, input_grad: carried.expect("non-empty network") })
    }

    /// Gradient of `Σ upstream ⊙ output` with respect to the input, keeping
    /// the intermediates for [`Mlp::input_gradient_backward`].
    pub fn input_gradient(&self, acts: &Activations, upstream: &Matrix) -> Result<InputGradient, NeuralError> {
        let depth = self.layers.len();
        if upstream.shape() != acts.output().shape() {
            return Err(shape_err("input_gradient upstream", acts.output().shape(), upstream.shape()));
        }
        let mut post_grads = vec![Matrix::zeros(0, 0); depth];
        let mut deltas = vec![Matrix::zeros(0, 0); depth];
        let mut g = upstream.clone();
        for l in (0..depth).rev() {
            let layer = &self.layers[l];
            let delta = layer.activation.backprop(&acts.pre[l], &acts.post[l], &g);
            let next = delta.matmul_t(&layer.weights)?;
            post_grads[l] = g;
            deltas[l] = delta;
            g = next;
        }
        Ok(InputGradient { grad: g, post_grads, deltas })
    }

    /// Parameter gradient of a scalar `φ(input_grad)` given `∂φ/∂input_grad`.
    ///
    /// The upstream used for the input gradient is held constant. Only
    /// elementwise activations are supported.
    pub fn input_gradient_backward(
        &self,
        acts: &Activations,
        tape: &InputGradient,
        grad_of_input_grad: &Matrix,
    ) -> Result<Gradients, NeuralError> {
        let depth = self.layers.len();
        if grad_of_input_grad.shape() != tape.grad.shape() {
            return Err(shape_err("input_gradient_backward", tape.grad.shape(), grad_of_input_grad.shape()));
        }
        let mut grads = Gradients::zeros_like(self);
        // Adjoints injected at each pre-activation through f''.
        let mut extra: Vec<Option<Matrix>> = vec![None; depth];
        let mut g_bar = grad_of_input_grad.clone();
        for l in 0..depth {
            let layer = &self.layers[l];
            // gin_l = delta_l · Wᵀ
            grads.layers[l].weights = g_bar.t_matmul(&tape.deltas[l])?;
            let delta_bar = g_bar.matmul(&layer.weights)?;
            // delta_l = post_grad_l ⊙ f'(a_l)
            let (rows, cols) = delta_bar.shape();
            let mut post_bar = Matrix::zeros(rows, cols);
            let mut pre_bar = Matrix::zeros(rows, cols);
            let mut any_second = false;
            for i in 0..rows * cols {
                let (d1, d2) = layer.activation.derivatives(acts.pre[l].data[i], acts.post[l].data[i])?;
                post_bar.data[i] = delta_bar.data[i] * d1;
                if d2 != 0.0 {
                    pre_bar.data[i] = delta_bar.data[i] * tape.post_grads[l].data[i] * d2;
                    any_second = true;
                }
            }
            if any_second {
                extra[l] = Some(pre_bar);
            }
            g_bar = post_bar;
        }
        if extra.iter().all(Option::is_none) {
            return Ok(grads);
        }
        // Push the pre-activation adjoints back through the forward graph.
        let mut carried: Option<Matrix> = None;
        for l in (0..depth).rev() {
            let layer = &self.layers[l];
            let mut a_bar = match carried.take() {
                Some(g) => layer.activation.backprop(&acts.pre[l], &acts.post[l], &g),
                None => Matrix::zeros(acts.input.rows, layer.outputs()),
            };
            if let Some(e) = &extra[l] {
                a_bar.add_assign(e);
            }
            let h = if l == 0 { &acts.input } else { &acts.post[l - 1] };
            grads.layers[l].weights.add_assign(&h.t_matmul(&a_bar)?);
            for (b, s) in grads.layers[l].bias.iter_mut().zip(column_sums(&a_bar)) {
                *b += s;
            }
            if l > 0 {
                carried = Some(a_bar.matmul_t(&layer.weights)?);
            }
        }
        Ok(grads)
    }
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols];
    for r in 0..m.rows {
        for (o, v) in out.iter_mut().zip(m.row(r)) {
            *o += v;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 2e-4, beta1: 0.5, beta2: 0.9, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Gradients,
    second: Gradients,
}

impl AdamState {
    pub fn new(net: &Mlp, config: AdamConfig) -> Self {
        AdamState { config, step: 0, first: Gradients::zeros_like(net), second: Gradients::zeros_like(net) }
    }

    /// One bias-corrected Adam update. Rejects non-finite gradients before
    /// touching any parameter.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<(), NeuralError> {
        if grads.layers.len() != net.layers.len() {
            return Err(NeuralError::Layout("gradient depth differs from network"));
        }
        for (g, layer) in grads.layers.iter().zip(&net.layers) {
            if g.weights.shape() != layer.weights.shape() || g.bias.len() != layer.bias.len() {
                return Err(shape_err("adam gradient", layer.weights.shape(), g.weights.shape()));
            }
        }
        grads.check_finite()?;
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - libm::pow(beta1, t as f64);
        let c2 = 1.0 - libm::pow(beta2, t as f64);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (sqrt(v_hat) + eps);
        };
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let g = &grads.layers[l];
            let m = &mut self.first.layers[l];
            let v = &mut self.second.layers[l];
            for i in 0..layer.weights.data.len() {
                update(&mut layer.weights.data[i], g.weights.data[i], &mut m.weights.data[i], &mut v.weights.data[i]);
            }
            for i in 0..layer.bias.len() {
                update(&mut layer.bias[i], g.bias[i], &mut m.bias[i], &mut v.bias[i]);
            }
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(state: &mut AdamState, net: &mut Mlp, grads: &Gradients) -> Result<(), NeuralError> {
    state.step(net, grads)
}

/// Largest relative deviation between `analytic` and central differences of
/// `loss` over at most `max_params` parameters (all of them when the network
/// is small enough, otherwise a seeded sample).
///
/// Deviation is `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn check_gradients(
    net: &mut Mlp,
    analytic: &Gradients,
    eps: f64,
    max_params: usize,
    seed: u64,
    mut loss: impl FnMut(&Mlp) -> f64,
) -> f64 {
    let flat = analytic.flat();
    let count = net.param_count();
    let indices: Vec<usize> = if count <= max_params {
        (0..count).collect()
    } else {
        let mut rng = seeded_rng(seed);
        let mut v = index::sample(&mut rng, count, max_params).into_vec();
        v.sort_unstable();
        v
    };
    let mut worst = 0.0f64;
    for i in indices {
        let original = net.param(i);
        net.set_param(i, original + eps);
        let plus = loss(net);
        net.set_param(i, original - eps);
        let minus = loss(net);
        net.set_param(i, original);
        let numeric = (plus - minus) / (2.0 * eps);
        let a = flat[i];
        let dev = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(dev);
    }
    worst
}

/// Checks [`Mlp::backward`] for `loss(output) -> (value, ∂value/∂output)` at
/// `input`, sampling at most 200 parameters.
pub fn grad_check(
    net: &Mlp,
    input: &Matrix,
    loss: &dyn Fn(&Matrix) -> (f64, Matrix),
    eps: f64,
) -> Result<f64, NeuralError> {
    let acts = net.forward(input)?;
    let (_, out_grad) = loss(acts.output());
    let analytic = net.backward(&acts, &out_grad)?.grads;
    let mut probe = net.clone();
    Ok(check_gradients(&mut probe, &analytic, eps, 200, 0x5eed, |n| {
        n.predict(input).map(|o| loss(&o).0).unwrap_or(f64::NAN)
    }))
}
