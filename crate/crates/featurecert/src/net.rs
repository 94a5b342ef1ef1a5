//! Feed-forward ReLU classifiers: representation, inference, JSON model format.
//!
//! A [`Network`] is an ordered list of layers (dense, 2-D convolution, ReLU)
//! mapping an input vector to one score per class. Convolutions are lowered to
//! an equivalent dense matrix at load time; at the scales this crate targets
//! the dense form is both simpler and faster than a sliding-window kernel.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::{CertError, Result};

/// Affine layer: `y = W x + b` with `W` of shape `(out, in)`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(CertError::Dimension(format!(
                "dense layer: {} weight rows but {} bias entries",
                weights.nrows(),
                bias.len()
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn out_size(&self) -> usize {
        self.weights.nrows()
    }

    pub fn in_size(&self) -> usize {
        self.weights.ncols()
    }
}

/// 2-D convolution parameters (zero padding, unit dilation).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConvParams {
    pub in_channels: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub out_channels: usize,
    pub kernel_height: usize,
    pub kernel_width: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvParams {
    pub fn out_height(&self) -> usize {
        (self.in_height + 2 * self.padding - self.kernel_height) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.in_width + 2 * self.padding - self.kernel_width) / self.stride + 1
    }

    pub fn in_size(&self) -> usize {
        self.in_channels * self.in_height * self.in_width
    }

    pub fn out_size(&self) -> usize {
        self.out_channels * self.out_height() * self.out_width()
    }

    fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(CertError::Model("conv stride must be positive".into()));
        }
        if self.kernel_height > self.in_height + 2 * self.padding
            || self.kernel_width > self.in_width + 2 * self.padding
        {
            return Err(CertError::Model("conv kernel larger than padded input".into()));
        }
        Ok(())
    }
}

/// One network layer.
#[derive(Debug, Clone)]
pub enum Layer {
    Dense(DenseLayer),
    /// Convolution kept with its parameters plus the lowered dense form.
    Conv { params: ConvParams, lowered: DenseLayer, kernel: Vec<f64> },
    Relu,
}

impl Layer {
    /// Output size given the input size, or an error on mismatch.
    fn out_size(&self, in_size: usize) -> Result<usize> {
        match self {
            Layer::Dense(d) => {
                if d.in_size() != in_size {
                    return Err(CertError::Dimension(format!(
                        "dense layer expects input {}, got {}",
                        d.in_size(),
                        in_size
                    )));
                }
                Ok(d.out_size())
            }
            Layer::Conv { params, .. } => {
                if params.in_size() != in_size {
                    return Err(CertError::Dimension(format!(
                        "conv layer expects input {}, got {}",
                        params.in_size(),
                        in_size
                    )));
                }
                Ok(params.out_size())
            }
            Layer::Relu => Ok(in_size),
        }
    }

    /// The affine form of this layer, if it is affine.
    pub fn as_affine(&self) -> Option<&DenseLayer> {
        match self {
            Layer::Dense(d) => Some(d),
            Layer::Conv { lowered, .. } => Some(lowered),
            Layer::Relu => None,
        }
    }
}

/// Lower a convolution to its dense matrix: input and output are laid out
/// channel-major (`[c][h][w]` flattened).
fn lower_conv(params: &ConvParams, kernel: &[f64], bias: &[f64]) -> Result<DenseLayer> {
    params.validate()?;
    let expected = params.out_channels * params.in_channels * params.kernel_height * params.kernel_width;
    if kernel.len() != expected {
        return Err(CertError::Dimension(format!(
            "conv kernel has {} weights, expected {}",
            kernel.len(),
            expected
        )));
    }
    if bias.len() != params.out_channels {
        return Err(CertError::Dimension(format!(
            "conv bias has {} entries, expected {}",
            bias.len(),
            params.out_channels
        )));
    }
    let (oh, ow) = (params.out_height(), params.out_width());
    let mut weights = Array2::<f64>::zeros((params.out_size(), params.in_size()));
    let mut full_bias = Array1::<f64>::zeros(params.out_size());
    for oc in 0..params.out_channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = (oc * oh + oy) * ow + ox;
                full_bias[row] = bias[oc];
                for ic in 0..params.in_channels {
                    for ky in 0..params.kernel_height {
                        for kx in 0..params.kernel_width {
                            let iy = (oy * params.stride + ky) as isize - params.padding as isize;
                            let ix = (ox * params.stride + kx) as isize - params.padding as isize;
                            if iy < 0 || ix < 0 || iy >= params.in_height as isize || ix >= params.in_width as isize {
                                continue;
                            }
                            let col = (ic * params.in_height + iy as usize) * params.in_width + ix as usize;
                            let k = ((oc * params.in_channels + ic) * params.kernel_height + ky)
                                * params.kernel_width
                                + kx;
                            weights[(row, col)] = kernel[k];
                        }
                    }
                }
            }
        }
    }
    DenseLayer::new(weights, full_bias)
}

/// A feed-forward classifier.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
    input_dim: usize,
    num_classes: usize,
}

impl Network {
    /// Build and validate: consecutive layer dimensions must agree, the final
    /// output size must equal `num_classes`, and all parameters must be finite.
    pub fn new(layers: Vec<Layer>, input_dim: usize, num_classes: usize) -> Result<Self> {
        if input_dim == 0 || num_classes == 0 {
            return Err(CertError::Model("input_dim and num_classes must be positive".into()));
        }
        let mut size = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            size = layer
                .out_size(size)
                .map_err(|e| CertError::Dimension(format!("layer {i}: {e}")))?;
            if let Some(aff) = layer.as_affine() {
                let finite = aff.weights.iter().all(|w| w.is_finite())
                    && aff.bias.iter().all(|b| b.is_finite());
                if !finite {
                    return Err(CertError::Model(format!("layer {i}: non-finite parameter")));
                }
            }
        }
        if size != num_classes {
            return Err(CertError::Dimension(format!(
                "final layer outputs {size}, expected {num_classes} classes"
            )));
        }
        Ok(Self { layers, input_dim, num_classes })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Concrete inference: the class score vector `o(x)`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(CertError::Dimension(format!(
                "input has {} entries, network expects {}",
                x.len(),
                self.input_dim
            )));
        }
        let mut cur = Array1::from(x.to_vec());
        for layer in &self.layers {
            cur = match layer {
                Layer::Relu => cur.mapv(|v| v.max(0.0)),
                _ => {
                    let aff = layer.as_affine().expect("affine layer");
                    aff.weights.dot(&cur) + &aff.bias
                }
            };
        }
        Ok(cur.to_vec())
    }

    /// Argmax class; ties break toward the lowest index.
    pub fn classify(&self, x: &[f64]) -> Result<usize> {
        let scores = self.forward(x)?;
        Ok(argmax(&scores))
    }

    /// Margin of class `label` over the best other class: `o_j − max_{j'≠j} o_{j'}`.
    /// Negative means `x` is not classified as `label`.
    pub fn concrete_sensitivity(&self, x: &[f64], label: usize) -> Result<f64> {
        let scores = self.forward(x)?;
        if label >= scores.len() {
            return Err(CertError::Contract(format!(
                "label {label} out of range for {} classes",
                scores.len()
            )));
        }
        Ok(score_margin(&scores, label))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let model: ModelFile = serde_json::from_str(s)?;
        model.into_network()
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let data = std::fs::read_to_string(path)?;
        Self::from_json_str(&data)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from_network(self))?)
    }

    pub fn to_json_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}

/// Argmax with lowest-index tie-break.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Margin of `scores[label]` over the best other entry.
pub fn score_margin(scores: &[f64], label: usize) -> f64 {
    let other = scores
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != label)
        .map(|(_, &s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    scores[label] - other
}

/// A labeled input for the harness: entries in `[0,1]` plus the true class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledInput {
    pub x: Vec<f64>,
    pub label: usize,
}

impl LabeledInput {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let data = std::fs::read_to_string(path)?;
        // Either {"x": [...], "label": n} or a bare array (label derived later).
        if let Ok(v) = serde_json::from_str::<Self>(&data) {
            return Ok(v);
        }
        let x: Vec<f64> = serde_json::from_str(&data)?;
        Ok(Self { x, label: 0 })
    }
}

// --- JSON model schema ------------------------------------------------------
//
// {
//   "input_dim": d, "num_classes": c,
//   "layers": [
//     {"kind": "dense", "weights": [row-major out*in], "bias": [out]},
//     {"kind": "conv", "weights": [oc*ic*kh*kw], "bias": [oc], "conv_params": {...}},
//     {"kind": "relu"}
//   ]
// }

#[derive(Serialize, Deserialize)]
struct LayerFile {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    conv_params: Option<ConvParams>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    input_dim: usize,
    num_classes: usize,
    layers: Vec<LayerFile>,
}

impl ModelFile {
    fn into_network(self) -> Result<Network> {
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut in_size = self.input_dim;
        for (i, lf) in self.layers.into_iter().enumerate() {
            let layer = match lf.kind.as_str() {
                "relu" => Layer::Relu,
                "dense" => {
                    let w = lf
                        .weights
                        .ok_or_else(|| CertError::Model(format!("layer {i}: dense without weights")))?;
                    let b = lf
                        .bias
                        .ok_or_else(|| CertError::Model(format!("layer {i}: dense without bias")))?;
                    let out = b.len();
                    if out == 0 || w.len() % out != 0 {
                        return Err(CertError::Dimension(format!(
                            "layer {i}: {} weights not divisible into {} rows",
                            w.len(),
                            out
                        )));
                    }
                    let cols = w.len() / out;
                    let weights = Array2::from_shape_vec((out, cols), w)
                        .map_err(|e| CertError::Model(format!("layer {i}: {e}")))?;
                    Layer::Dense(DenseLayer::new(weights, Array1::from(b))?)
                }
                "conv" => {
                    let params = lf
                        .conv_params
                        .ok_or_else(|| CertError::Model(format!("layer {i}: conv without conv_params")))?;
                    let kernel = lf
                        .weights
                        .ok_or_else(|| CertError::Model(format!("layer {i}: conv without weights")))?;
                    let bias = lf
                        .bias
                        .ok_or_else(|| CertError::Model(format!("layer {i}: conv without bias")))?;
                    let lowered = lower_conv(&params, &kernel, &bias)?;
                    Layer::Conv { params, lowered, kernel }
                }
                other => return Err(CertError::Model(format!("layer {i}: unknown kind {other:?}"))),
            };
            in_size = layer.out_size(in_size).map_err(|e| CertError::Dimension(format!("layer {i}: {e}")))?;
            layers.push(layer);
        }
        let _ = in_size;
        Network::new(layers, self.input_dim, self.num_classes)
    }

    fn from_network(net: &Network) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|layer| match layer {
                Layer::Relu => LayerFile { kind: "relu".into(), weights: None, bias: None, conv_params: None },
                Layer::Dense(d) => LayerFile {
                    kind: "dense".into(),
                    weights: Some(d.weights.iter().copied().collect()),
                    bias: Some(d.bias.to_vec()),
                    conv_params: None,
                },
                Layer::Conv { params, lowered, kernel } => LayerFile {
                    kind: "conv".into(),
                    weights: Some(kernel.clone()),
                    bias: Some(lowered.bias.iter().take(params.out_channels).copied().collect()),
                    conv_params: Some(params.clone()),
                },
            })
            .collect();
        ModelFile { input_dim: net.input_dim, num_classes: net.num_classes, layers }
    }
}

// Conv bias serialization above relies on the lowered bias repeating each
// channel bias contiguously, which holds because rows are emitted channel-major.

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn dense(w: Array2<f64>, b: Array1<f64>) -> Layer {
        Layer::Dense(DenseLayer::new(w, b).unwrap())
    }

    #[test]
    fn forward_identity_dense() {
        let net = Network::new(
            vec![dense(array![[1.0, 0.0], [0.0, 1.0]], array![0.0, 0.0])],
            2,
            2,
        )
        .unwrap();
        assert_eq!(net.forward(&[0.3, 0.7]).unwrap(), vec![0.3, 0.7]);
    }

    #[test]
    fn forward_dense_then_relu() {
        // Pre-activation 1 - i1 + i2 at [0.6, 0.6] is exactly 1.0.
        let net = Network::new(
            vec![dense(array![[-1.0, 1.0]], array![1.0]), Layer::Relu],
            2,
            1,
        )
        .unwrap();
        assert_eq!(net.forward(&[0.6, 0.6]).unwrap(), vec![1.0]);
    }

    /// Independent oracle: plain nested-loop matrix arithmetic.
    fn naive_forward(layers: &[(Vec<Vec<f64>>, Vec<f64>, bool)], x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for (w, b, relu) in layers {
            let mut next = vec![0.0; b.len()];
            for (r, row) in w.iter().enumerate() {
                let mut acc = b[r];
                for (c, wv) in row.iter().enumerate() {
                    acc += wv * cur[c];
                }
                next[r] = acc;
            }
            if *relu {
                for v in &mut next {
                    *v = v.max(0.0);
                }
            }
            cur = next;
        }
        cur
    }

    #[test]
    fn forward_matches_naive_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let dims = [4usize, 6, 5, 3];
        let mut layers = Vec::new();
        let mut spec = Vec::new();
        for i in 0..3 {
            let (inp, out) = (dims[i], dims[i + 1]);
            let w: Vec<Vec<f64>> = (0..out)
                .map(|_| (0..inp).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let b: Vec<f64> = (0..out).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let flat: Vec<f64> = w.iter().flatten().copied().collect();
            layers.push(dense(
                Array2::from_shape_vec((out, inp), flat).unwrap(),
                Array1::from(b.clone()),
            ));
            let relu = i < 2;
            if relu {
                layers.push(Layer::Relu);
            }
            spec.push((w, b, relu));
        }
        let net = Network::new(layers, 4, 3).unwrap();
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
        let got = net.forward(&x).unwrap();
        let want = naive_forward(&spec, &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }

    #[test]
    fn classify_tie_break() {
        assert_eq!(argmax(&[2.0, 1.0, 0.0]), 0);
        assert_eq!(argmax(&[1.0, 1.0, 0.0]), 0);
    }

    #[test]
    fn sensitivity_values() {
        assert_eq!(score_margin(&[2.0, 1.0, 0.0], 0), 1.0);
        assert_eq!(score_margin(&[0.0, 5.0], 0), -5.0);
    }

    #[test]
    fn sensitivity_of_argmax_nonnegative() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let scores: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            assert!(score_margin(&scores, argmax(&scores)) >= 0.0);
        }
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let net = Network::new(
            vec![dense(array![[1.0, 0.0], [0.0, 1.0]], array![0.0, 0.0])],
            2,
            2,
        )
        .unwrap();
        assert!(net.forward(&[1.0]).is_err());
        assert!(Network::new(
            vec![dense(array![[1.0, 0.0]], array![0.0])],
            2,
            2
        )
        .is_err());
    }

    #[test]
    fn rejects_non_finite_weights() {
        let err = Network::new(
            vec![dense(array![[f64::NAN, 0.0]], array![0.0])],
            2,
            1,
        );
        assert!(err.is_err());
    }

    #[test]
    fn json_round_trip() {
        let net = Network::new(
            vec![
                dense(array![[0.5, -1.5], [2.0, 0.0]], array![0.1, -0.2]),
                Layer::Relu,
                dense(array![[1.0, 1.0]], array![0.0]),
            ],
            2,
            1,
        )
        .unwrap();
        let s = net.to_json_string().unwrap();
        let back = Network::from_json_str(&s).unwrap();
        let x = [0.25, 0.75];
        assert_eq!(net.forward(&x).unwrap(), back.forward(&x).unwrap());
    }

    #[test]
    fn conv_lowering_matches_direct_convolution() {
        // 1 input channel 3x3, 1 output channel, 2x2 kernel, stride 1, no padding.
        let params = ConvParams {
            in_channels: 1,
            in_height: 3,
            in_width: 3,
            out_channels: 1,
            kernel_height: 2,
            kernel_width: 2,
            stride: 1,
            padding: 0,
        };
        let kernel = vec![1.0, 2.0, 3.0, 4.0];
        let lowered = lower_conv(&params, &kernel, &[0.5]).unwrap();
        let x: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let y = lowered.weights.dot(&Array1::from(x.clone())) + &lowered.bias;
        // Direct 2x2 correlation at each of the four positions.
        let direct = |r: usize, c: usize| {
            0.5 + x[r * 3 + c] * 1.0
                + x[r * 3 + c + 1] * 2.0
                + x[(r + 1) * 3 + c] * 3.0
                + x[(r + 1) * 3 + c + 1] * 4.0
        };
        let want = [direct(0, 0), direct(0, 1), direct(1, 0), direct(1, 1)];
        for (g, w) in y.iter().zip(want.iter()) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_padding_shapes() {
        let params = ConvParams {
            in_channels: 2,
            in_height: 4,
            in_width: 4,
            out_channels: 3,
            kernel_height: 3,
            kernel_width: 3,
            stride: 1,
            padding: 1,
        };
        assert_eq!(params.out_height(), 4);
        assert_eq!(params.out_width(), 4);
        assert_eq!(params.out_size(), 48);
        let kernel = vec![0.1; 3 * 2 * 3 * 3];
        let lowered = lower_conv(&params, &kernel, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(lowered.weights.nrows(), 48);
        assert_eq!(lowered.weights.ncols(), 32);
    }
}
