use std::fmt;

use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero-filled, output size equals input size (odd kernels only).
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerKind {
    /// `standardize` z-scores every channel of each sample before use.
    Input {
        channels: usize,
        height: usize,
        width: usize,
        standardize: bool,
    },
    Conv2d {
        filters: usize,
        kernel_h: usize,
        kernel_w: usize,
        padding: Padding,
    },
    Relu,
    /// Dense layer; `dropout` is an inverted-dropout rate on its outputs.
    FullyConnected {
        units: usize,
        dropout: f32,
    },
    Dropout {
        rate: f32,
    },
    /// Dense projection to `units` logits followed by softmax.
    Softmax {
        units: usize,
    },
    ClassificationOutput {
        classes: usize,
    },
}

impl LayerKind {
    pub fn has_weights(&self) -> bool {
        matches!(self, LayerKind::Conv2d { .. } | LayerKind::FullyConnected { .. } | LayerKind::Softmax { .. })
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerKind::Input { channels, height, width, .. } => write!(f, "input {height}x{width}x{channels}"),
            LayerKind::Conv2d { filters, kernel_h, kernel_w, .. } => write!(f, "conv {filters}@{kernel_h}x{kernel_w}"),
            LayerKind::Relu => write!(f, "relu"),
            LayerKind::FullyConnected { units, dropout } => write!(f, "fc {units} (dropout {dropout})"),
            LayerKind::Dropout { rate } => write!(f, "dropout {rate}"),
            LayerKind::Softmax { units } => write!(f, "softmax {units}"),
            LayerKind::ClassificationOutput { classes } => write!(f, "classification {classes}"),
        }
    }
}

/// (channels, height, width); dense outputs are `(units, 1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    pub input_shape: Shape,
    pub output_shape: Shape,
    /// Conv: `[filters][in_c][kh][kw]`; dense: `[units][inputs]`.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
    pub frozen: bool,
}

impl Layer {
    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Number of weights (excluding biases) and the fan-in used for init.
    fn weight_layout(kind: &LayerKind, input: Shape) -> (usize, usize, usize) {
        match *kind {
            LayerKind::Conv2d { filters, kernel_h, kernel_w, .. } => {
                let fan_in = input.c * kernel_h * kernel_w;
                (filters * fan_in, filters, fan_in)
            }
            LayerKind::FullyConnected { units, .. } | LayerKind::Softmax { units } => {
                (units * input.len(), units, input.len())
            }
            _ => (0, 0, 1),
        }
    }
}

pub(crate) fn output_shape(kind: &LayerKind, input: Shape) -> Result<Shape> {
    Ok(match *kind {
        LayerKind::Input { channels, height, width, .. } => Shape::new(channels, height, width),
        LayerKind::Conv2d { filters, kernel_h, kernel_w, padding } => match padding {
            Padding::Same => {
                if kernel_h % 2 == 0 || kernel_w % 2 == 0 {
                    return invalid("same padding needs odd kernel sizes");
                }
                Shape::new(filters, input.h, input.w)
            }
            Padding::Valid => {
                if kernel_h > input.h || kernel_w > input.w {
                    return invalid("valid convolution kernel larger than its input");
                }
                Shape::new(filters, input.h - kernel_h + 1, input.w - kernel_w + 1)
            }
        },
        LayerKind::Relu | LayerKind::Dropout { .. } => input,
        LayerKind::FullyConnected { units, .. } | LayerKind::Softmax { units } => Shape::new(units, 1, 1),
        LayerKind::ClassificationOutput { classes } => {
            if classes != input.len() {
                return invalid(format!("classification layer expects {} classes, got {classes}", input.len()));
            }
            input
        }
    })
}

/// Ordered layer stack with f32 weights and per-layer freeze flags.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    layers: Vec<Layer>,
    trained: bool,
}

impl NetworkModel {
    /// Builds a stack from layer kinds; weights He-initialized, biases zero.
    pub fn from_kinds(kinds: &[LayerKind], seed: u64) -> Result<Self> {
        let mut layers = Vec::with_capacity(kinds.len());
        let mut shape = Shape::new(0, 0, 0);
        for (i, kind) in kinds.iter().enumerate() {
            if i == 0 && !matches!(kind, LayerKind::Input { .. }) {
                return invalid("the first layer must be an input layer");
            }
            if i > 0 && matches!(kind, LayerKind::Input { .. }) {
                return invalid("input layer may only appear first");
            }
            let out = output_shape(kind, shape)?;
            if out.is_empty() {
                return invalid(format!("layer {} ({kind}) has an empty output", i + 1));
            }
            let (nw, nb, fan_in) = Layer::weight_layout(kind, shape);
            let std = (2.0 / fan_in as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            let mut rng = rng::rng_for(seed, &[i as u64]);
            let weights = (0..nw).map(|_| normal.sample(&mut rng) as f32).collect();
            layers.push(Layer {
                kind: *kind,
                input_shape: shape,
                output_shape: out,
                weights,
                bias: vec![0.0; nb],
                frozen: false,
            });
            shape = out;
        }
        let n = layers.len();
        if n < 3
            || !matches!(layers[n - 1].kind, LayerKind::ClassificationOutput { .. })
            || !matches!(layers[n - 2].kind, LayerKind::Softmax { .. })
        {
            return invalid("the stack must end with a softmax layer followed by a classification layer");
        }
        if layers[..n - 2]
            .iter()
            .any(|l| matches!(l.kind, LayerKind::Softmax { .. } | LayerKind::ClassificationOutput { .. }))
        {
            return invalid("softmax and classification layers may only close the stack");
        }
        Ok(Self { layers, trained: false })
    }

    pub(crate) fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let kinds: Vec<LayerKind> = layers.iter().map(|l| l.kind).collect();
        let mut model = Self::from_kinds(&kinds, 0)?;
        for (dst, src) in model.layers.iter_mut().zip(layers) {
            if dst.weights.len() != src.weights.len() || dst.bias.len() != src.bias.len() {
                return invalid("weight tensor sizes do not match layer shapes");
            }
            dst.weights = src.weights;
            dst.bias = src.bias;
            dst.frozen = src.frozen;
        }
        model.trained = true;
        Ok(model)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Layer by 1-based position.
    pub fn layer(&self, position: usize) -> &Layer {
        &self.layers[position - 1]
    }

    /// Shape of one input sample (the input layer's output).
    #[allow(clippy::misnamed_getters)]
    pub fn input_shape(&self) -> Shape {
        self.layers[0].output_shape
    }

    pub fn classes(&self) -> usize {
        self.layers.last().unwrap().output_shape.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::parameter_count).sum()
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub(crate) fn mark_trained(&mut self) {
        self.trained = true;
    }

    pub fn set_frozen(&mut self, position: usize, frozen: bool) {
        self.layers[position - 1].frozen = frozen;
    }

    /// FNV-1a over the bit patterns of one layer's weights and biases.
    pub fn layer_hash(&self, position: usize) -> u64 {
        let l = self.layer(position);
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in l.weights.iter().chain(&l.bias) {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// Width settings of the selection CNN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnnSettings {
    pub conv_filters: usize,
    pub fc_units: usize,
    pub dropout: f32,
    pub standardize: bool,
}

impl Default for CnnSettings {
    fn default() -> Self {
        Self { conv_filters: 256, fc_units: 1024, dropout: 0.5, standardize: false }
    }
}

/// The 15-layer selection network: input, four 3×3 same-padded conv+ReLU
/// pairs (layers 2–9), two dense+dropout+ReLU pairs (10–13), softmax over the
/// classes (14) and the classification output (15).
pub fn build_selector_cnn(m: usize, classes: usize, settings: &CnnSettings, seed: u64) -> Result<NetworkModel> {
    if m < 3 {
        return invalid(format!("input side {m} is below 3"));
    }
    if classes < 2 {
        return invalid(format!("a classifier needs at least 2 classes, got {classes}"));
    }
    let conv = LayerKind::Conv2d { filters: settings.conv_filters, kernel_h: 3, kernel_w: 3, padding: Padding::Same };
    let fc = LayerKind::FullyConnected { units: settings.fc_units, dropout: settings.dropout };
    let kinds = [
        LayerKind::Input { channels: 3, height: m, width: m, standardize: settings.standardize },
        conv,
        LayerKind::Relu,
        conv,
        LayerKind::Relu,
        conv,
        LayerKind::Relu,
        conv,
        LayerKind::Relu,
        fc,
        LayerKind::Relu,
        fc,
        LayerKind::Relu,
        LayerKind::Softmax { units: classes },
        LayerKind::ClassificationOutput { classes },
    ];
    NetworkModel::from_kinds(&kinds, seed)
}

/// Copies a trained source network for a new geometry: every convolutional
/// layer is frozen, dense layers keep their weights and stay trainable, and
/// the softmax head is re-initialized when the class count changes.
pub fn make_transfer_model(source: &NetworkModel, target_classes: usize, seed: u64) -> Result<NetworkModel> {
    if target_classes < 2 {
        return invalid(format!("a classifier needs at least 2 classes, got {target_classes}"));
    }
    if !source.is_trained() {
        log::warn!("transferring from a source network that has not been trained");
    }
    let mut model = source.clone();
    for layer in model.layers.iter_mut() {
        if matches!(layer.kind, LayerKind::Conv2d { .. }) {
            layer.frozen = true;
        }
    }
    if target_classes != source.classes() {
        let n = model.layers.len();
        let head_input = model.layers[n - 2].input_shape;
        let fresh = NetworkModel::from_kinds(
            &[
                LayerKind::Input {
                    channels: head_input.c,
                    height: head_input.h,
                    width: head_input.w,
                    standardize: false,
                },
                LayerKind::Softmax { units: target_classes },
                LayerKind::ClassificationOutput { classes: target_classes },
            ],
            rng::derive_seed(seed, &[0x4ead]),
        )?;
        let mut head = fresh.layers[1].clone();
        head.input_shape = head_input;
        model.layers[n - 2] = head;
        let out = &mut model.layers[n - 1];
        out.kind = LayerKind::ClassificationOutput { classes: target_classes };
        out.input_shape = Shape::new(target_classes, 1, 1);
        out.output_shape = out.input_shape;
    }
    Ok(model)
}

/// Multiply–accumulate counts of the convolutional and dense layers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlopEstimate {
    /// Σ D_x D_y b_x b_y N_in N_out over convolutional layers.
    pub conv_ops: u64,
    /// Σ D₁ D₂ N over dense hidden layers (softmax head excluded).
    pub fc_ops: u64,
    /// Σ D_x D_y b_x b_y N_out², the order-of-magnitude form that treats every
    /// convolution as full width.
    pub conv_ops_uniform: u64,
}

pub fn flop_estimate(model: &NetworkModel) -> FlopEstimate {
    let mut est = FlopEstimate::default();
    for l in &model.layers {
        match l.kind {
            LayerKind::Conv2d { filters, kernel_h, kernel_w, .. } => {
                let spatial = (l.output_shape.h * l.output_shape.w * kernel_h * kernel_w) as u64;
                est.conv_ops += spatial * (l.input_shape.c * filters) as u64;
                est.conv_ops_uniform += spatial * (filters * filters) as u64;
            }
            LayerKind::FullyConnected { units, .. } => {
                est.fc_ops += (l.input_shape.len() * units) as u64;
            }
            _ => {}
        }
    }
    est
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selector_cnn_shapes() {
        let net = build_selector_cnn(16, 11, &CnnSettings::default(), 0).unwrap();
        assert_eq!(net.layers().len(), 15);
        assert_eq!(net.layer(10).input_shape.len(), 256 * 16 * 16);
        for p in [2, 4, 6, 8] {
            assert_eq!(net.layer(p).output_shape, Shape::new(256, 16, 16));
        }
        assert_eq!(net.layer(14).output_shape.len(), 11);
        assert!(matches!(net.layer(15).kind, LayerKind::ClassificationOutput { classes: 11 }));
        assert!(build_selector_cnn(16, 1, &CnnSettings::default(), 0).is_err());
        assert!(build_selector_cnn(2, 4, &CnnSettings::default(), 0).is_err());
    }

    #[test]
    fn tiny_parameter_count_by_hand() {
        let s = CnnSettings { conv_filters: 1, fc_units: 2, dropout: 0.5, standardize: false };
        let net = build_selector_cnn(3, 2, &s, 0).unwrap();
        // conv 3→1: 27+1, three conv 1→1: 3×(9+1), fc 9→2: 18+2, fc 2→2: 4+2, head 2→2: 4+2
        assert_eq!(net.parameter_count(), 28 + 30 + 20 + 6 + 6);
    }

    #[test]
    fn reference_complexity_terms() {
        let s = CnnSettings { fc_units: 512, ..Default::default() };
        let est = flop_estimate(&build_selector_cnn(16, 11, &s, 0).unwrap());
        assert_eq!(est.conv_ops_uniform, 603_979_776);
        assert_eq!(est.conv_ops, 256 * 9 * 256 * (3 + 3 * 256));
        assert_eq!(est.fc_ops, 512 * 256 * 16 * 16 + 512 * 512);
        assert_eq!(est.fc_ops, 33_816_576);
    }

    #[test]
    fn stack_validation() {
        let input = LayerKind::Input { channels: 1, height: 2, width: 2, standardize: false };
        assert!(NetworkModel::from_kinds(&[input, LayerKind::Relu], 0).is_err());
        assert!(NetworkModel::from_kinds(
            &[input, LayerKind::Softmax { units: 2 }, LayerKind::ClassificationOutput { classes: 3 }],
            0
        )
        .is_err());
        let even = LayerKind::Conv2d { filters: 1, kernel_h: 2, kernel_w: 2, padding: Padding::Same };
        assert!(NetworkModel::from_kinds(
            &[input, even, LayerKind::Softmax { units: 2 }, LayerKind::ClassificationOutput { classes: 2 }],
            0
        )
        .is_err());
    }

    #[test]
    fn transfer_same_width_only_flips_freeze_flags() {
        let s = CnnSettings { conv_filters: 2, fc_units: 4, ..Default::default() };
        let src = build_selector_cnn(4, 3, &s, 1).unwrap();
        let tl = make_transfer_model(&src, 3, 9).unwrap();
        for (p, (a, b)) in src.layers().iter().zip(tl.layers()).enumerate() {
            assert_eq!(a.weights, b.weights);
            assert_eq!(a.bias, b.bias);
            assert_eq!(b.frozen, [2, 4, 6, 8].contains(&(p + 1)));
        }
    }

    #[test]
    fn transfer_reshapes_head() {
        let s = CnnSettings { conv_filters: 2, fc_units: 4, ..Default::default() };
        let src = build_selector_cnn(4, 11, &s, 1).unwrap();
        let tl = make_transfer_model(&src, 16, 9).unwrap();
        assert_eq!(tl.classes(), 16);
        assert_eq!(tl.layer(14).weights.len(), 16 * 4);
        assert_eq!(tl.layer(10).weights, src.layer(10).weights);
        assert_eq!(tl.layer(12).weights, src.layer(12).weights);
        assert!(!tl.layer(10).frozen && !tl.layer(12).frozen && !tl.layer(14).frozen);
        assert!(make_transfer_model(&src, 1, 0).is_err());
    }
}
