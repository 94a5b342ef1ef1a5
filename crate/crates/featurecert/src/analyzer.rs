//! Sound, incomplete box analyzer: interval bounds via per-neuron linear
//! relaxation with full back-substitution.
//!
//! Every neuron carries symbolic lower/upper bounds over the previous layer.
//! Affine layers are exact; an unstable ReLU (`l̂ < 0 < û`) gets the secant
//! upper bound `n ≤ û·(n̂ − l̂)/(û − l̂)` and a lower bound of either `0` or
//! `n̂` (the smaller-area choice by default). Concrete bounds for each layer
//! are obtained by substituting symbolic bounds all the way back to the input
//! box; the first substitution target is the feature encoding's pixel
//! enclosure, so the analysis sees the offset box, not a pixel box.

use ndarray::{Array1, Array2};
use serde::Serialize;
use std::time::Instant;

use crate::encode::{encode_region, EncodedRegion};
use crate::feature::{perturb, FeatureSpec};
use crate::net::{Layer, Network};
use crate::{CertError, Result};

/// How the lower bound of an unstable ReLU is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RelaxationRule {
    /// `n ≥ 0` when `û ≤ −l̂`, else `n ≥ n̂` (minimizes relaxation area).
    #[default]
    AreaHeuristic,
    /// Always `n ≥ 0`.
    LowerZero,
    /// Always `n ≥ n̂`.
    LowerIdentity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Robust,
    NonRobust,
    Unknown,
}

/// Per-layer concrete bounds, for diagnostics and the `bounds` CLI dump.
#[derive(Debug, Clone, Serialize)]
pub struct LayerBoundsDump {
    pub index: usize,
    pub kind: String,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Secant slope/intercept per neuron for ReLU layers.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relu_upper_slope: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relu_upper_bias: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct AnalysisResult {
    /// Sound per-class output bounds `(l_j, u_j)`.
    pub output_bounds: Vec<(f64, f64)>,
    pub verdict: Verdict,
    /// Abstract sensitivity `l_label − max_{j≠label} u_j` for the queried label.
    pub sensitivity: f64,
    /// Wall-clock seconds spent in bound propagation.
    pub elapsed: f64,
    /// Deterministic work measure (multiply-accumulate count).
    pub work: u64,
    pub unstable_count: usize,
    pub layer_bounds: Option<Vec<LayerBoundsDump>>,
}

/// `l_j − max_{j'≠j} u_{j'}`; positive implies verified robust.
pub fn abstract_sensitivity(output_bounds: &[(f64, f64)], label: usize) -> f64 {
    let best_other = output_bounds
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != label)
        .map(|(_, &(_, u))| u)
        .fold(f64::NEG_INFINITY, f64::max);
    output_bounds[label].0 - best_other
}

/// Symbolic bounds of one layer over its input layer.
enum SymBounds {
    Affine { w: Array2<f64>, b: Array1<f64> },
    Relu { lo_slope: Vec<f64>, hi_slope: Vec<f64>, hi_bias: Vec<f64> },
}

/// An affine expression pair over some layer's outputs, being pushed back
/// toward the input box.
struct BackSub {
    lo_w: Array2<f64>,
    lo_b: Array1<f64>,
    hi_w: Array2<f64>,
    hi_b: Array1<f64>,
}

impl BackSub {
    fn exact(w: &Array2<f64>, b: &Array1<f64>) -> Self {
        BackSub { lo_w: w.clone(), lo_b: b.clone(), hi_w: w.clone(), hi_b: b.clone() }
    }

    /// Substitute through an exact affine layer: no sign analysis required.
    fn through_affine(&mut self, w: &Array2<f64>, b: &Array1<f64>, work: &mut u64) {
        *work += (self.lo_w.nrows() * self.lo_w.ncols() * w.ncols() * 2) as u64;
        self.lo_b = &self.lo_b + &self.lo_w.dot(b);
        self.lo_w = self.lo_w.dot(w);
        self.hi_b = &self.hi_b + &self.hi_w.dot(b);
        self.hi_w = self.hi_w.dot(w);
    }

    /// Substitute through a ReLU layer's diagonal relaxation.
    fn through_relu(&mut self, lo_slope: &[f64], hi_slope: &[f64], hi_bias: &[f64], work: &mut u64) {
        let (rows, cols) = (self.lo_w.nrows(), self.lo_w.ncols());
        *work += (rows * cols * 2) as u64;
        for r in 0..rows {
            for c in 0..cols {
                let lw = self.lo_w[(r, c)];
                self.lo_w[(r, c)] = if lw >= 0.0 {
                    lw * lo_slope[c]
                } else {
                    self.lo_b[r] += lw * hi_bias[c];
                    lw * hi_slope[c]
                };
                let hw = self.hi_w[(r, c)];
                self.hi_w[(r, c)] = if hw >= 0.0 {
                    self.hi_b[r] += hw * hi_bias[c];
                    hw * hi_slope[c]
                } else {
                    hw * lo_slope[c]
                };
            }
        }
    }

    /// Substitute through the encoding's pixel enclosure (lower ≠ upper).
    fn through_enclosure(&mut self, enc: &EncodedRegion, work: &mut u64) {
        let split = |w: &Array2<f64>, b: &Array1<f64>, a_lo: &Array2<f64>, c_lo: &Array1<f64>, a_hi: &Array2<f64>, c_hi: &Array1<f64>| {
            let pos = w.mapv(|v| v.max(0.0));
            let neg = w.mapv(|v| v.min(0.0));
            let new_w = pos.dot(a_lo) + neg.dot(a_hi);
            let new_b = b + &pos.dot(c_lo) + neg.dot(c_hi);
            (new_w, new_b)
        };
        *work += (self.lo_w.nrows() * self.lo_w.ncols() * enc.offset_dim() * 4) as u64;
        let (lw, lb) = split(&self.lo_w, &self.lo_b, &enc.lower_coeffs, &enc.lower_const, &enc.upper_coeffs, &enc.upper_const);
        let (hw, hb) = split(&self.hi_w, &self.hi_b, &enc.upper_coeffs, &enc.upper_const, &enc.lower_coeffs, &enc.lower_const);
        self.lo_w = lw;
        self.lo_b = lb;
        self.hi_w = hw;
        self.hi_b = hb;
    }

    /// Final evaluation over the offset box.
    fn concretize(&self, box_lo: &[f64], box_hi: &[f64]) -> (Array1<f64>, Array1<f64>) {
        let rows = self.lo_w.nrows();
        let mut lo = self.lo_b.clone();
        let mut hi = self.hi_b.clone();
        for r in 0..rows {
            for j in 0..box_lo.len() {
                let lw = self.lo_w[(r, j)];
                lo[r] += if lw >= 0.0 { lw * box_lo[j] } else { lw * box_hi[j] };
                let hw = self.hi_w[(r, j)];
                hi[r] += if hw >= 0.0 { hw * box_hi[j] } else { hw * box_lo[j] };
            }
        }
        (lo, hi)
    }
}

/// Bound-propagation output before any robustness interpretation.
pub struct RegionBounds {
    pub output_lower: Vec<f64>,
    pub output_upper: Vec<f64>,
    pub unstable_count: usize,
    pub work: u64,
    pub layer_bounds: Option<Vec<LayerBoundsDump>>,
}

#[derive(Debug, Clone, Default)]
pub struct Analyzer {
    pub relaxation: RelaxationRule,
    pub record_layer_bounds: bool,
}

impl Analyzer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Propagate bounds for `net` over the encoded input region.
    pub fn region_bounds(&self, net: &Network, enc: &EncodedRegion) -> Result<RegionBounds> {
        if enc.pixel_count() != net.input_dim() {
            return Err(CertError::Dimension(format!(
                "encoding provides {} pixels, network expects {}",
                enc.pixel_count(),
                net.input_dim()
            )));
        }
        let mut work: u64 = 0;
        let mut sym: Vec<SymBounds> = Vec::with_capacity(net.layers().len());
        let mut concrete: Vec<(Array1<f64>, Array1<f64>)> = Vec::with_capacity(net.layers().len());
        let mut unstable = 0usize;
        let mut dumps = Vec::new();

        // Concrete pixel bounds, needed if the first layer is a ReLU.
        let pixel_bounds: (Array1<f64>, Array1<f64>) = {
            let d = enc.pixel_count();
            let mut lo = Array1::zeros(d);
            let mut hi = Array1::zeros(d);
            for p in 0..d {
                let (l, u) = enc.pixel_hull(p);
                lo[p] = l;
                hi[p] = u;
            }
            (lo, hi)
        };

        for (i, layer) in net.layers().iter().enumerate() {
            let (s, bounds) = match layer {
                Layer::Relu => {
                    let (in_lo, in_hi) = if i == 0 { &pixel_bounds } else { &concrete[i - 1] };
                    let n = in_lo.len();
                    let mut lo_slope = vec![0.0; n];
                    let mut hi_slope = vec![0.0; n];
                    let mut hi_bias = vec![0.0; n];
                    let mut out_lo = Array1::zeros(n);
                    let mut out_hi = Array1::zeros(n);
                    for k in 0..n {
                        let (l, u) = (in_lo[k], in_hi[k]);
                        if u <= 0.0 {
                            // stable off: both bounds are the zero function
                        } else if l >= 0.0 {
                            lo_slope[k] = 1.0;
                            hi_slope[k] = 1.0;
                        } else {
                            unstable += 1;
                            let slope = u / (u - l);
                            hi_slope[k] = slope;
                            hi_bias[k] = -u * l / (u - l);
                            lo_slope[k] = match self.relaxation {
                                RelaxationRule::AreaHeuristic => {
                                    if u <= -l {
                                        0.0
                                    } else {
                                        1.0
                                    }
                                }
                                RelaxationRule::LowerZero => 0.0,
                                RelaxationRule::LowerIdentity => 1.0,
                            };
                        }
                        out_lo[k] = l.max(0.0);
                        out_hi[k] = u.max(0.0);
                    }
                    if self.record_layer_bounds {
                        dumps.push(LayerBoundsDump {
                            index: i,
                            kind: "relu".into(),
                            lower: out_lo.to_vec(),
                            upper: out_hi.to_vec(),
                            relu_upper_slope: Some(hi_slope.clone()),
                            relu_upper_bias: Some(hi_bias.clone()),
                        });
                    }
                    (SymBounds::Relu { lo_slope, hi_slope, hi_bias }, (out_lo, out_hi))
                }
                _ => {
                    let aff = layer.as_affine().expect("affine layer");
                    // Full back-substitution of this layer's map to the box.
                    let mut expr = BackSub::exact(&aff.weights, &aff.bias);
                    for j in (0..i).rev() {
                        match &sym[j] {
                            SymBounds::Affine { w, b } => expr.through_affine(w, b, &mut work),
                            SymBounds::Relu { lo_slope, hi_slope, hi_bias } => {
                                expr.through_relu(lo_slope, hi_slope, hi_bias, &mut work)
                            }
                        }
                    }
                    expr.through_enclosure(enc, &mut work);
                    let (lo, hi) = expr.concretize(&enc.box_lo, &enc.box_hi);
                    if self.record_layer_bounds {
                        dumps.push(LayerBoundsDump {
                            index: i,
                            kind: if matches!(layer, Layer::Conv { .. }) { "conv".into() } else { "dense".into() },
                            lower: lo.to_vec(),
                            upper: hi.to_vec(),
                            relu_upper_slope: None,
                            relu_upper_bias: None,
                        });
                    }
                    (
                        SymBounds::Affine { w: aff.weights.clone(), b: aff.bias.clone() },
                        (lo, hi),
                    )
                }
            };
            sym.push(s);
            concrete.push(bounds);
        }

        let (out_lo, out_hi) = match concrete.last() {
            Some((lo, hi)) => (lo.to_vec(), hi.to_vec()),
            None => (pixel_bounds.0.to_vec(), pixel_bounds.1.to_vec()),
        };
        Ok(RegionBounds {
            output_lower: out_lo,
            output_upper: out_hi,
            unstable_count: unstable,
            work,
            layer_bounds: if self.record_layer_bounds { Some(dumps) } else { None },
        })
    }

    /// Analyze the network over a plain input box.
    pub fn analyze(&self, net: &Network, box_lo: &[f64], box_hi: &[f64], label: usize) -> Result<AnalysisResult> {
        if box_lo.len() != net.input_dim() || box_hi.len() != net.input_dim() {
            return Err(CertError::Dimension(format!(
                "box has {} dims, network expects {}",
                box_lo.len(),
                net.input_dim()
            )));
        }
        for j in 0..box_lo.len() {
            if !(box_lo[j] <= box_hi[j]) {
                return Err(CertError::Contract(format!("empty box in dimension {j}")));
            }
        }
        let enc = EncodedRegion::identity(box_lo, box_hi);
        let witnesses = corner_points(box_lo, box_hi, 10);
        self.run(net, &enc, label, witnesses.into_iter())
    }

    /// Analyze the feature neighborhood reachable with offsets in
    /// `∏ [lo_i, hi_i]` from the base image `x`.
    pub fn analyze_feature_region(
        &self,
        net: &Network,
        x: &[f64],
        features: &[FeatureSpec],
        lo: &[f64],
        hi: &[f64],
        label: usize,
    ) -> Result<AnalysisResult> {
        let enc = encode_region(x, features, lo, hi)?;
        let corners = corner_points(lo, hi, 12);
        let mut witnesses = Vec::with_capacity(corners.len());
        for t in corners {
            witnesses.push(perturb(x, features, &t)?);
        }
        self.run(net, &enc, label, witnesses.into_iter())
    }

    fn run(
        &self,
        net: &Network,
        enc: &EncodedRegion,
        label: usize,
        witnesses: impl Iterator<Item = Vec<f64>>,
    ) -> Result<AnalysisResult> {
        if label >= net.num_classes() {
            return Err(CertError::Contract(format!(
                "label {label} out of range for {} classes",
                net.num_classes()
            )));
        }
        let start = Instant::now();
        let rb = self.region_bounds(net, enc)?;
        let elapsed = start.elapsed().as_secs_f64();
        let output_bounds: Vec<(f64, f64)> = rb
            .output_lower
            .iter()
            .zip(&rb.output_upper)
            .map(|(&l, &u)| (l, u))
            .collect();
        let sensitivity = abstract_sensitivity(&output_bounds, label);
        let verdict = if sensitivity > 0.0 {
            Verdict::Robust
        } else {
            let mut verdict = Verdict::Unknown;
            for w in witnesses {
                if net.classify(&w)? != label {
                    verdict = Verdict::NonRobust;
                    break;
                }
            }
            verdict
        };
        Ok(AnalysisResult {
            output_bounds,
            verdict,
            sensitivity,
            elapsed,
            work: rb.work,
            unstable_count: rb.unstable_count,
            layer_bounds: rb.layer_bounds,
        })
    }

    /// Number of unstable ReLU neurons over a plain input box.
    pub fn count_unstable(&self, net: &Network, box_lo: &[f64], box_hi: &[f64]) -> Result<usize> {
        let enc = EncodedRegion::identity(box_lo, box_hi);
        Ok(self.region_bounds(net, &enc)?.unstable_count)
    }
}

/// Box center plus all corners when the dimension is small enough.
fn corner_points(lo: &[f64], hi: &[f64], max_corner_dim: usize) -> Vec<Vec<f64>> {
    let d = lo.len();
    let center: Vec<f64> = lo.iter().zip(hi).map(|(&l, &h)| 0.5 * (l + h)).collect();
    let mut pts = vec![center];
    if d <= max_corner_dim {
        for mask in 0..(1usize << d) {
            let p: Vec<f64> = (0..d).map(|j| if mask >> j & 1 == 1 { hi[j] } else { lo[j] }).collect();
            pts.push(p);
        }
    }
    pts
}
