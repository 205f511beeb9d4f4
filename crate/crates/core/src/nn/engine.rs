//! Forward and backward passes in f64 over a network's f32 weights.

use rand::Rng as _;

use super::model::{LayerKind, NetworkModel, Padding, Shape};
use crate::error::{invalid, Result};
use crate::exec::{self, Execution};
use crate::rng;

/// Probabilities are clamped into `[LOSS_EPSILON, 1 - LOSS_EPSILON]`.
pub const LOSS_EPSILON: f64 = 1e-12;

/// Samples per work unit in batched passes; fixed so reductions do not
/// depend on the thread count.
pub const CHUNK_SIZE: usize = 16;

/// f64 working copy of a model's weights and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Params {
    pub fn from_model(model: &NetworkModel) -> Self {
        let layers = model.layers();
        Self {
            weights: layers.iter().map(|l| l.weights.iter().map(|&v| v as f64).collect()).collect(),
            bias: layers.iter().map(|l| l.bias.iter().map(|&v| v as f64).collect()).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weights: self.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            bias: self.bias.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Params) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights).chain(self.bias.iter_mut().zip(&other.bias)) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.weights.iter_mut().chain(self.bias.iter_mut()) {
            for x in v.iter_mut() {
                *x *= s;
            }
        }
    }
}

/// Mode of a forward pass. Training mode samples dropout masks from the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Infer,
    Train { dropout_seed: u64 },
}

struct Trace {
    /// `acts[i]` is the output of layer `i`.
    acts: Vec<Vec<f64>>,
    cols: Vec<Vec<f64>>,
    masks: Vec<Vec<f64>>,
}

fn conv_geometry(kind: &LayerKind) -> (usize, usize, usize, usize) {
    match *kind {
        LayerKind::Conv2d { kernel_h, kernel_w, padding, .. } => {
            let (ph, pw) = match padding {
                Padding::Same => (kernel_h / 2, kernel_w / 2),
                Padding::Valid => (0, 0),
            };
            (kernel_h, kernel_w, ph, pw)
        }
        _ => unreachable!(),
    }
}

fn im2col(x: &[f64], input: Shape, out: Shape, kh: usize, kw: usize, ph: usize, pw: usize) -> Vec<f64> {
    let hw = out.h * out.w;
    let mut cols = vec![0.0; input.c * kh * kw * hw];
    for c in 0..input.c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = ((c * kh + ki) * kw + kj) * hw;
                for oy in 0..out.h {
                    let iy = oy + ki;
                    if iy < ph || iy - ph >= input.h {
                        continue;
                    }
                    let iy = iy - ph;
                    for ox in 0..out.w {
                        let ix = ox + kj;
                        if ix < pw || ix - pw >= input.w {
                            continue;
                        }
                        cols[row + oy * out.w + ox] = x[(c * input.h + iy) * input.w + ix - pw];
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], input: Shape, out: Shape, kh: usize, kw: usize, ph: usize, pw: usize) -> Vec<f64> {
    let hw = out.h * out.w;
    let mut dx = vec![0.0; input.len()];
    for c in 0..input.c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = ((c * kh + ki) * kw + kj) * hw;
                for oy in 0..out.h {
                    let iy = oy + ki;
                    if iy < ph || iy - ph >= input.h {
                        continue;
                    }
                    let iy = iy - ph;
                    for ox in 0..out.w {
                        let ix = ox + kj;
                        if ix < pw || ix - pw >= input.w {
                            continue;
                        }
                        dx[(c * input.h + iy) * input.w + ix - pw] += cols[row + oy * out.w + ox];
                    }
                }
            }
        }
    }
    dx
}

/// Row-major `C (m×n) = A·B + beta·C` with explicit strides for A and B.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the caller sizes a, b and c for the given dimensions and strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn dense(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    b.iter()
        .enumerate()
        .map(|(u, &bias)| bias + w[u * n..(u + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

fn standardize(x: &mut [f64], shape: Shape) {
    let plane = shape.h * shape.w;
    for ch in x.chunks_mut(plane) {
        let mean = ch.iter().sum::<f64>() / plane as f64;
        let var = ch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / plane as f64;
        let sd = var.sqrt();
        for v in ch.iter_mut() {
            *v = if sd > 1e-12 { (*v - mean) / sd } else { 0.0 };
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn forward_trace(model: &NetworkModel, params: &Params, x: &[f32], mode: Mode) -> Trace {
    let layers = model.layers();
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
    let mut cols = vec![Vec::new(); layers.len()];
    let mut masks = vec![Vec::new(); layers.len()];
    let mut drop_rng = match mode {
        Mode::Train { dropout_seed } => Some(rng::rng_from_seed(dropout_seed)),
        Mode::Infer => None,
    };
    for (i, layer) in layers.iter().enumerate() {
        let out = match layer.kind {
            LayerKind::Input { standardize: z, .. } => {
                let mut v: Vec<f64> = x.iter().map(|&a| a as f64).collect();
                if z {
                    standardize(&mut v, layer.output_shape);
                }
                v
            }
            LayerKind::Conv2d { filters, .. } => {
                let (kh, kw, ph, pw) = conv_geometry(&layer.kind);
                let inp = layer.input_shape;
                let out = layer.output_shape;
                let c = im2col(&acts[i - 1], inp, out, kh, kw, ph, pw);
                let fan = inp.c * kh * kw;
                let hw = out.h * out.w;
                let mut y = vec![0.0; filters * hw];
                for (f, row) in y.chunks_mut(hw).enumerate() {
                    row.fill(params.bias[i][f]);
                }
                gemm(filters, fan, hw, &params.weights[i], (fan as isize, 1), &c, (hw as isize, 1), 1.0, &mut y);
                cols[i] = c;
                y
            }
            LayerKind::Relu => acts[i - 1].iter().map(|&v| v.max(0.0)).collect(),
            LayerKind::FullyConnected { dropout, .. } => {
                let mut y = dense(&params.weights[i], &params.bias[i], &acts[i - 1]);
                if let Some(r) = drop_rng.as_mut() {
                    masks[i] = dropout_mask(r, y.len(), dropout);
                    y.iter_mut().zip(&masks[i]).for_each(|(v, m)| *v *= m);
                }
                y
            }
            LayerKind::Dropout { rate } => {
                let mut y = acts[i - 1].clone();
                if let Some(r) = drop_rng.as_mut() {
                    masks[i] = dropout_mask(r, y.len(), rate);
                    y.iter_mut().zip(&masks[i]).for_each(|(v, m)| *v *= m);
                }
                y
            }
            LayerKind::Softmax { .. } => softmax(&dense(&params.weights[i], &params.bias[i], &acts[i - 1])),
            LayerKind::ClassificationOutput { .. } => acts[i - 1].clone(),
        };
        acts.push(out);
    }
    Trace { acts, cols, masks }
}

fn dropout_mask(r: &mut rng::Rng, n: usize, rate: f32) -> Vec<f64> {
    let rate = rate as f64;
    if rate <= 0.0 {
        return vec![1.0; n];
    }
    let keep = 1.0 / (1.0 - rate);
    (0..n).map(|_| if r.random::<f64>() < rate { 0.0 } else { keep }).collect()
}

fn check_input(model: &NetworkModel, x: &[f32]) -> Result<()> {
    let want = model.input_shape().len();
    if x.len() != want {
        return invalid(format!("input has {} values, the network expects {want}", x.len()));
    }
    Ok(())
}

/// Class probabilities for one input.
pub fn forward(model: &NetworkModel, x: &[f32], mode: Mode) -> Result<Vec<f64>> {
    check_input(model, x)?;
    let params = Params::from_model(model);
    Ok(forward_with(model, &params, x, mode))
}

pub fn forward_with(model: &NetworkModel, params: &Params, x: &[f32], mode: Mode) -> Vec<f64> {
    forward_trace(model, params, x, mode).acts.pop().unwrap()
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Inference over many inputs, in input order.
pub fn predict_batch(model: &NetworkModel, inputs: &[&[f32]], exec: Execution) -> Result<Vec<Vec<f64>>> {
    for x in inputs {
        check_input(model, x)?;
    }
    let params = Params::from_model(model);
    Ok(exec::map_slice(exec, inputs, |x| forward_with(model, &params, x, Mode::Infer)))
}

/// Per-sample cross-entropy including the off-class `(1-χ)ln(1-η)` terms.
pub fn sample_loss(probs: &[f64], label: usize) -> f64 {
    let total: f64 = probs.iter().sum();
    probs
        .iter()
        .enumerate()
        .map(|(c, &p)| {
            if c == label {
                -p.clamp(LOSS_EPSILON, 1.0 - LOSS_EPSILON).ln()
            } else {
                -(total - p).clamp(LOSS_EPSILON, 1.0 - LOSS_EPSILON).ln()
            }
        })
        .sum()
}

/// Batch-mean cross-entropy.
pub fn cross_entropy_loss(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if probs.len() != labels.len() || probs.is_empty() {
        return invalid("loss needs equally many (and at least one) probability vectors and labels");
    }
    let mut s = 0.0;
    for (p, &l) in probs.iter().zip(labels) {
        if l >= p.len() {
            return invalid(format!("label {l} outside {} classes", p.len()));
        }
        s += sample_loss(p, l);
    }
    Ok(s / probs.len() as f64)
}

/// Gradient of `sample_loss` with respect to the softmax logits.
pub fn logit_gradient(probs: &[f64], label: usize) -> Vec<f64> {
    let total: f64 = probs.iter().sum();
    let w: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(c, &p)| {
            if c == label {
                if p <= LOSS_EPSILON || p >= 1.0 - LOSS_EPSILON {
                    0.0
                } else {
                    -1.0 / p
                }
            } else {
                let q = total - p;
                if q <= LOSS_EPSILON || q >= 1.0 - LOSS_EPSILON {
                    0.0
                } else {
                    1.0 / q
                }
            }
        })
        .collect();
    let mean: f64 = w.iter().zip(probs).map(|(a, b)| a * b).sum();
    probs.iter().zip(&w).map(|(p, wc)| p * (wc - mean)).collect()
}

/// Lowest layer index whose parameters receive gradients, if any.
fn first_trainable(model: &NetworkModel, respect_frozen: bool) -> Option<usize> {
    model.layers().iter().position(|l| l.kind.has_weights() && !(respect_frozen && l.frozen))
}

/// Adds one sample's gradient into `grads`; returns its loss and the
/// predicted class.
fn accumulate_sample(
    model: &NetworkModel,
    params: &Params,
    x: &[f32],
    label: usize,
    mode: Mode,
    stop: usize,
    grads: &mut Params,
) -> (f64, usize) {
    let layers = model.layers();
    let trace = forward_trace(model, params, x, mode);
    let probs = trace.acts.last().unwrap();
    let loss = sample_loss(probs, label);
    let predicted = argmax(probs);
    let n = layers.len();
    let mut delta = logit_gradient(probs, label);
    // Start below the classification layer (which carries no parameters).
    for i in (stop..n - 1).rev() {
        let layer = &layers[i];
        let input = &trace.acts[i - 1];
        let need_dx = i > stop;
        delta = match layer.kind {
            LayerKind::Softmax { .. } | LayerKind::FullyConnected { .. } => {
                if matches!(layer.kind, LayerKind::FullyConnected { .. }) && !trace.masks[i].is_empty() {
                    delta.iter_mut().zip(&trace.masks[i]).for_each(|(d, m)| *d *= m);
                }
                let nin = input.len();
                let w = &params.weights[i];
                let gw = &mut grads.weights[i];
                for (u, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    grads.bias[i][u] += d;
                    for (g, &xv) in gw[u * nin..(u + 1) * nin].iter_mut().zip(input) {
                        *g += d * xv;
                    }
                }
                if need_dx {
                    let mut dx = vec![0.0; nin];
                    for (u, &d) in delta.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        for (o, &wv) in dx.iter_mut().zip(&w[u * nin..(u + 1) * nin]) {
                            *o += d * wv;
                        }
                    }
                    dx
                } else {
                    Vec::new()
                }
            }
            LayerKind::Relu => delta.iter().zip(input).map(|(d, &v)| if v > 0.0 { *d } else { 0.0 }).collect(),
            LayerKind::Dropout { .. } => {
                if !trace.masks[i].is_empty() {
                    delta.iter_mut().zip(&trace.masks[i]).for_each(|(d, m)| *d *= m);
                }
                delta
            }
            LayerKind::Conv2d { filters, .. } => {
                let (kh, kw, ph, pw) = conv_geometry(&layer.kind);
                let inp = layer.input_shape;
                let out = layer.output_shape;
                let fan = inp.c * kh * kw;
                let hw = out.h * out.w;
                for (f, row) in delta.chunks(hw).enumerate() {
                    grads.bias[i][f] += row.iter().sum::<f64>();
                }
                // dW (F×fan) += dY (F×HW) · colsᵀ
                gemm(
                    filters,
                    hw,
                    fan,
                    &delta,
                    (hw as isize, 1),
                    &trace.cols[i],
                    (1, hw as isize),
                    1.0,
                    &mut grads.weights[i],
                );
                if need_dx {
                    // dcols (fan×HW) = Wᵀ (fan×F) · dY
                    let mut dcols = vec![0.0; fan * hw];
                    gemm(
                        fan,
                        filters,
                        hw,
                        &params.weights[i],
                        (1, fan as isize),
                        &delta,
                        (hw as isize, 1),
                        0.0,
                        &mut dcols,
                    );
                    col2im(&dcols, inp, out, kh, kw, ph, pw)
                } else {
                    Vec::new()
                }
            }
            LayerKind::Input { .. } | LayerKind::ClassificationOutput { .. } => unreachable!(),
        };
    }
    (loss, predicted)
}

/// Mean gradient, mean loss and training accuracy over a mini-batch.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub grads: Params,
    pub loss: f64,
    pub correct: usize,
}

/// Averaged gradient over `(input, label)` pairs. `dropout_seeds` supplies
/// one seed per sample for training-mode masks; `None` disables dropout.
/// Frozen layers receive zero gradients and backpropagation stops at the
/// lowest trainable layer.
pub fn batch_gradient(
    model: &NetworkModel,
    params: &Params,
    batch: &[(&[f32], usize)],
    dropout_seeds: Option<&[u64]>,
    exec: Execution,
) -> Result<BatchGradient> {
    if batch.is_empty() {
        return invalid("empty batch");
    }
    let classes = model.classes();
    for (x, l) in batch {
        check_input(model, x)?;
        if *l >= classes {
            return invalid(format!("label {l} outside {classes} classes"));
        }
    }
    if let Some(s) = dropout_seeds {
        if s.len() != batch.len() {
            return invalid("one dropout seed per sample is required");
        }
    }
    let Some(stop) = first_trainable(model, true) else {
        // Nothing to train: report the loss with an all-zero gradient.
        let mut loss = 0.0;
        let mut correct = 0;
        for (x, l) in batch {
            let p = forward_with(model, params, x, Mode::Infer);
            loss += sample_loss(&p, *l);
            correct += usize::from(argmax(&p) == *l);
        }
        return Ok(BatchGradient { grads: params.zeros_like(), loss: loss / batch.len() as f64, correct });
    };
    let chunks = batch.len().div_ceil(CHUNK_SIZE);
    let partial = exec::map_range(exec, chunks, |c| {
        let mut g = params.zeros_like();
        let mut loss = 0.0;
        let mut correct = 0;
        let lo = c * CHUNK_SIZE;
        let hi = (lo + CHUNK_SIZE).min(batch.len());
        for j in lo..hi {
            let mode = match dropout_seeds {
                Some(s) => Mode::Train { dropout_seed: s[j] },
                None => Mode::Infer,
            };
            let (l, p) = accumulate_sample(model, params, batch[j].0, batch[j].1, mode, stop, &mut g);
            loss += l;
            correct += usize::from(p == batch[j].1);
        }
        (g, loss, correct)
    });
    let mut iter = partial.into_iter();
    let (mut grads, mut loss, mut correct) = iter.next().unwrap();
    for (g, l, c) in iter {
        grads.add_assign(&g);
        loss += l;
        correct += c;
    }
    let inv = 1.0 / batch.len() as f64;
    grads.scale(inv);
    for (i, layer) in model.layers().iter().enumerate() {
        if layer.frozen {
            grads.weights[i].iter_mut().for_each(|v| *v = 0.0);
            grads.bias[i].iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Ok(BatchGradient { grads, loss: loss * inv, correct })
}

fn param_mut(p: &mut Params, bias: bool, layer: usize, k: usize) -> &mut f64 {
    if bias {
        &mut p.bias[layer][k]
    } else {
        &mut p.weights[layer][k]
    }
}

/// Outcome of a finite-difference gradient comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub compared: usize,
}

/// Compares backpropagated gradients of the single-sample loss with central
/// differences of step `h`, in f64 with dropout disabled and every layer
/// treated as trainable.
pub fn gradient_check(model: &NetworkModel, x: &[f32], label: usize, h: f64) -> Result<GradientCheck> {
    check_input(model, x)?;
    if label >= model.classes() {
        return invalid(format!("label {label} outside {} classes", model.classes()));
    }
    let params = Params::from_model(model);
    let Some(stop) = first_trainable(model, false) else {
        return Ok(GradientCheck { max_relative_error: 0.0, compared: 0 });
    };
    let mut grads = params.zeros_like();
    accumulate_sample(model, &params, x, label, Mode::Infer, stop, &mut grads);
    let loss_at = |p: &Params| sample_loss(&forward_with(model, p, x, Mode::Infer), label);
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    let mut probe = params.clone();
    for i in 0..params.weights.len() {
        for (bias, n) in [(false, params.weights[i].len()), (true, params.bias[i].len())] {
            for k in 0..n {
                let orig = *param_mut(&mut probe, bias, i, k);
                *param_mut(&mut probe, bias, i, k) = orig + h;
                let up = loss_at(&probe);
                *param_mut(&mut probe, bias, i, k) = orig - h;
                let down = loss_at(&probe);
                *param_mut(&mut probe, bias, i, k) = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = *param_mut(&mut grads, bias, i, k);
                if numeric.abs() < 1e-8 && analytic.abs() < 1e-8 {
                    continue;
                }
                compared += 1;
                worst = worst.max((numeric - analytic).abs() / numeric.abs().max(analytic.abs()));
            }
        }
    }
    Ok(GradientCheck { max_relative_error: worst, compared })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{build_selector_cnn, CnnSettings};

    fn input_kind(c: usize, h: usize, w: usize) -> LayerKind {
        LayerKind::Input { channels: c, height: h, width: w, standardize: false }
    }

    #[test]
    fn relu_and_uniform_softmax() {
        let mut net =
            build_selector_cnn(4, 5, &CnnSettings { conv_filters: 2, fc_units: 3, ..Default::default() }, 2).unwrap();
        for l in net.layers_mut() {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        let p = forward(&net, &[1.0; 48], Mode::Infer).unwrap();
        for v in &p {
            assert!((v - 0.2).abs() < 1e-15);
        }
        assert!(forward(&net, &[1.0; 47], Mode::Infer).is_err());
    }

    #[test]
    fn one_by_one_conv_is_multiply_add() {
        let kinds = [
            input_kind(1, 1, 1),
            LayerKind::Conv2d { filters: 1, kernel_h: 1, kernel_w: 1, padding: Padding::Same },
            LayerKind::Softmax { units: 2 },
            LayerKind::ClassificationOutput { classes: 2 },
        ];
        let mut net = NetworkModel::from_kinds(&kinds, 0).unwrap();
        net.layers_mut()[1].weights = vec![3.0];
        net.layers_mut()[1].bias = vec![-0.5];
        net.layers_mut()[2].weights = vec![1.0, 0.0];
        net.layers_mut()[2].bias = vec![0.0, 0.0];
        // conv: 3·2 − 0.5 = 5.5; logits (5.5, 0)
        let p = forward(&net, &[2.0], Mode::Infer).unwrap();
        let want = 1.0 / (1.0 + (-5.5f64).exp());
        assert!((p[0] - want).abs() < 1e-15);
    }

    #[test]
    fn same_padding_hand_example() {
        // 3×3 all-ones kernel on a 3×3 ramp; the corner sums its 2×2 window.
        let kinds = [
            input_kind(1, 3, 3),
            LayerKind::Conv2d { filters: 1, kernel_h: 3, kernel_w: 3, padding: Padding::Same },
            LayerKind::Softmax { units: 2 },
            LayerKind::ClassificationOutput { classes: 2 },
        ];
        let mut net = NetworkModel::from_kinds(&kinds, 0).unwrap();
        net.layers_mut()[1].weights = vec![1.0; 9];
        let params = Params::from_model(&net);
        let x: Vec<f32> = (1..=9).map(|v| v as f32).collect();
        let t = forward_trace(&net, &params, &x, Mode::Infer);
        assert_eq!(t.acts[1], vec![12.0, 21.0, 16.0, 27.0, 45.0, 33.0, 24.0, 39.0, 28.0]);
    }

    #[test]
    fn loss_values() {
        assert!((sample_loss(&[0.5, 0.5], 1) - 4f64.ln()).abs() < 1e-12);
        assert!(sample_loss(&[0.0, 1.0, 0.0], 1) < 3e-12 * 3.0);
        let one = cross_entropy_loss(&[vec![0.2, 0.8]], &[0]).unwrap();
        let two = cross_entropy_loss(&[vec![0.2, 0.8], vec![0.2, 0.8]], &[0, 0]).unwrap();
        assert_eq!(one, two);
        assert!(cross_entropy_loss(&[], &[]).is_err());
    }

    #[test]
    fn logit_gradient_matches_differences() {
        let z = [0.3, -1.2, 0.7, 0.1];
        let g = logit_gradient(&softmax(&z), 2);
        for j in 0..4 {
            let mut up = z;
            let mut dn = z;
            up[j] += 1e-6;
            dn[j] -= 1e-6;
            let num = (sample_loss(&softmax(&up), 2) - sample_loss(&softmax(&dn), 2)) / 2e-6;
            assert!((num - g[j]).abs() < 1e-7, "{j}: {num} vs {}", g[j]);
        }
    }

    #[test]
    fn inference_is_repeatable_and_training_masks_vary_by_seed() {
        let net =
            build_selector_cnn(3, 3, &CnnSettings { conv_filters: 2, fc_units: 8, ..Default::default() }, 5).unwrap();
        let x: Vec<f32> = (0..27).map(|v| (v as f32 * 0.37).sin()).collect();
        assert_eq!(forward(&net, &x, Mode::Infer).unwrap(), forward(&net, &x, Mode::Infer).unwrap());
        let a = forward(&net, &x, Mode::Train { dropout_seed: 1 }).unwrap();
        let b = forward(&net, &x, Mode::Train { dropout_seed: 1 }).unwrap();
        let c = forward(&net, &x, Mode::Train { dropout_seed: 2 }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn tiny_gradient_check() {
        let mut net =
            build_selector_cnn(3, 2, &CnnSettings { conv_filters: 1, fc_units: 4, ..Default::default() }, 11).unwrap();
        // Positive biases keep the single-filter ReLU chain away from its kink.
        for l in net.layers_mut() {
            l.bias.iter_mut().for_each(|b| *b = 0.3);
        }
        let x: Vec<f32> = (0..27).map(|v| ((v * 7 % 11) as f32 - 5.0) / 3.0).collect();
        let r = gradient_check(&net, &x, 1, 1e-5).unwrap();
        assert!(r.compared > 0);
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }

    #[test]
    fn sequential_and_parallel_batches_agree() {
        let net =
            build_selector_cnn(3, 3, &CnnSettings { conv_filters: 2, fc_units: 6, ..Default::default() }, 3).unwrap();
        let data: Vec<Vec<f32>> =
            (0..40).map(|s| (0..27).map(|v| ((s * 31 + v * 7) % 13) as f32 / 13.0).collect()).collect();
        let batch: Vec<(&[f32], usize)> = data.iter().enumerate().map(|(i, x)| (x.as_slice(), i % 3)).collect();
        let seeds: Vec<u64> = (0..40).collect();
        let p = Params::from_model(&net);
        let a = batch_gradient(&net, &p, &batch, Some(&seeds), Execution::Sequential).unwrap();
        let b = batch_gradient(&net, &p, &batch, Some(&seeds), Execution::Parallel).unwrap();
        assert_eq!(a.grads, b.grads);
        assert_eq!(a.loss, b.loss);
    }
}
