//! Sound enclosures of feature neighborhoods for the box analyzer.
//!
//! A verification step analyzes the set of images reachable by offsets `t` in
//! a box `∏ [lo_i, hi_i]` (absolute offsets from the original image, composed
//! in feature order). The encoder produces, per pixel, a pair of affine
//! functions of `t` that bracket every reachable pixel value. The analyzer
//! treats this pair as the symbolic bounds of a prepended input layer, so the
//! pixel dependencies imposed by the feature survive into the analysis instead
//! of collapsing to an axis-aligned pixel box.
//!
//! Exactness by construction:
//! - a single affine feature whose clip never activates on the box encodes as
//!   one dense layer (lower = upper);
//! - clipping kinks get chord/line relaxations per pixel;
//! - the bilinear term of contrast-after-brightness gets a McCormick-style
//!   relaxation;
//! - HSL features encode as per-pixel channel ranges found by evaluating the
//!   piecewise-linear channel transform at the box endpoints and every
//!   interior breakpoint. They are supported only as the sole feature.

use ndarray::{Array1, Array2};

use crate::feature::{hsl_breakpoints, hsl_channel_at, FeatureKind, FeatureSpec};
use crate::net::DenseLayer;
use crate::{CertError, Result};

/// Per-pixel affine bounds in the offset variables over an offset box.
#[derive(Debug, Clone)]
pub struct EncodedRegion {
    /// Box lower corner, one entry per feature.
    pub box_lo: Vec<f64>,
    /// Box upper corner.
    pub box_hi: Vec<f64>,
    /// `(d × T)` coefficients of the pixel lower bounds.
    pub lower_coeffs: Array2<f64>,
    pub lower_const: Array1<f64>,
    pub upper_coeffs: Array2<f64>,
    pub upper_const: Array1<f64>,
}

impl EncodedRegion {
    pub fn pixel_count(&self) -> usize {
        self.lower_const.len()
    }

    pub fn offset_dim(&self) -> usize {
        self.box_lo.len()
    }

    /// True when the enclosure is a single affine map (lower equals upper).
    pub fn is_exact(&self) -> bool {
        self.lower_coeffs == self.upper_coeffs && self.lower_const == self.upper_const
    }

    /// The dense prefix layer `pixels = W t + c` when the enclosure is exact.
    pub fn as_dense_prefix(&self) -> Option<DenseLayer> {
        if self.is_exact() {
            Some(DenseLayer { weights: self.lower_coeffs.clone(), bias: self.lower_const.clone() })
        } else {
            None
        }
    }

    /// Evaluate the lower/upper bound of one pixel at a concrete offset vector.
    pub fn bounds_at(&self, pixel: usize, t: &[f64]) -> (f64, f64) {
        let mut lo = self.lower_const[pixel];
        let mut hi = self.upper_const[pixel];
        for j in 0..t.len() {
            lo += self.lower_coeffs[(pixel, j)] * t[j];
            hi += self.upper_coeffs[(pixel, j)] * t[j];
        }
        (lo, hi)
    }

    /// Interval hull of one pixel over the whole box.
    pub fn pixel_hull(&self, pixel: usize) -> (f64, f64) {
        (
            affine_min(self.lower_coeffs.row(pixel).as_slice().unwrap(), self.lower_const[pixel], &self.box_lo, &self.box_hi),
            affine_max(self.upper_coeffs.row(pixel).as_slice().unwrap(), self.upper_const[pixel], &self.box_lo, &self.box_hi),
        )
    }

    /// [`Self::pixel_hull`] intersected with `[0, 1]`. Valid for feature
    /// encodings, whose pixels are clipped image values; plain identity boxes
    /// may lie outside the image range and must use the raw hull.
    pub fn image_hull(&self, pixel: usize) -> (f64, f64) {
        let (lo, hi) = self.pixel_hull(pixel);
        (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0))
    }

    /// Identity encoding of a plain input box (`pixel_i = t_i`).
    pub fn identity(box_lo: &[f64], box_hi: &[f64]) -> Self {
        let d = box_lo.len();
        EncodedRegion {
            box_lo: box_lo.to_vec(),
            box_hi: box_hi.to_vec(),
            lower_coeffs: Array2::eye(d),
            lower_const: Array1::zeros(d),
            upper_coeffs: Array2::eye(d),
            upper_const: Array1::zeros(d),
        }
    }
}

fn affine_min(w: &[f64], c: f64, lo: &[f64], hi: &[f64]) -> f64 {
    let mut acc = c;
    for (j, &wj) in w.iter().enumerate() {
        acc += if wj >= 0.0 { wj * lo[j] } else { wj * hi[j] };
    }
    acc
}

fn affine_max(w: &[f64], c: f64, lo: &[f64], hi: &[f64]) -> f64 {
    let mut acc = c;
    for (j, &wj) in w.iter().enumerate() {
        acc += if wj >= 0.0 { wj * hi[j] } else { wj * lo[j] };
    }
    acc
}

/// Encode the step neighborhood with all offsets in `[0, delta]`.
pub fn encode_neighborhood(x0: &[f64], features: &[FeatureSpec], delta: f64) -> Result<EncodedRegion> {
    if delta <= 0.0 {
        return Err(CertError::Contract(format!("diameter must be positive, got {delta}")));
    }
    let t = features.len();
    encode_region(x0, features, &vec![0.0; t], &vec![delta; t])
}

/// Encode the images reachable with offsets in `∏ [lo_i, hi_i]`, composing the
/// features in order from the base image `x`.
pub fn encode_region(x: &[f64], features: &[FeatureSpec], lo: &[f64], hi: &[f64]) -> Result<EncodedRegion> {
    let t = features.len();
    if t == 0 {
        return Err(CertError::Contract("no features to encode".into()));
    }
    if lo.len() != t || hi.len() != t {
        return Err(CertError::Dimension(format!(
            "box has {}/{} entries for {} features",
            lo.len(),
            hi.len(),
            t
        )));
    }
    for j in 0..t {
        if !(0.0 <= lo[j] && lo[j] <= hi[j]) {
            return Err(CertError::Contract(format!(
                "offset box [{}, {}] for feature {} is not within [0, ∞)",
                lo[j], hi[j], features[j].kind
            )));
        }
    }
    let has_rgb = features.iter().any(|f| f.kind.is_rgb());
    if has_rgb && t > 1 {
        return Err(CertError::UnsupportedFeatures(
            "hue/saturation/lightness are supported only as the sole feature".into(),
        ));
    }

    let d = x.len();
    if has_rgb {
        let f = &features[0];
        if d % 3 != 0 {
            return Err(CertError::Contract(format!(
                "{} needs an RGB image (length divisible by 3), got length {d}",
                f.kind
            )));
        }
        return Ok(encode_hsl(x, f.kind, lo[0], hi[0]));
    }

    // Affine pipeline: start from the constant base image, apply each feature
    // stage, relax clipping after every stage.
    let mut enc = EncodedRegion {
        box_lo: lo.to_vec(),
        box_hi: hi.to_vec(),
        lower_coeffs: Array2::zeros((d, t)),
        lower_const: Array1::from(x.to_vec()),
        upper_coeffs: Array2::zeros((d, t)),
        upper_const: Array1::from(x.to_vec()),
    };
    for (j, f) in features.iter().enumerate() {
        match f.kind {
            FeatureKind::Brightness => {
                for p in 0..d {
                    enc.lower_coeffs[(p, j)] += 1.0;
                    enc.upper_coeffs[(p, j)] += 1.0;
                }
            }
            FeatureKind::Contrast => apply_contrast_stage(&mut enc, j),
            _ => unreachable!("rgb features handled above"),
        }
        relax_clip_stage(&mut enc);
    }
    Ok(enc)
}

/// `pixel ← pixel + t_j·(pixel − 0.5)`, with the bilinear part bounded by a
/// McCormick envelope over `pixel ∈ [pl, pu]`, `t_j ∈ [a, b]`.
fn apply_contrast_stage(enc: &mut EncodedRegion, j: usize) {
    let (a, b) = (enc.box_lo[j], enc.box_hi[j]);
    let t_dim = enc.box_lo.len();
    let center: Vec<f64> = (0..t_dim).map(|k| 0.5 * (enc.box_lo[k] + enc.box_hi[k])).collect();
    for p in 0..enc.pixel_count() {
        // inputs of this stage are already-clipped image values
        let (pl, pu) = enc.image_hull(p);
        let lo_row: Vec<f64> = enc.lower_coeffs.row(p).to_vec();
        let lo_c = enc.lower_const[p];
        let hi_row: Vec<f64> = enc.upper_coeffs.row(p).to_vec();
        let hi_c = enc.upper_const[p];

        // Lower bound of pixel·t_j: both candidates have nonnegative pixel
        // coefficient (a, b ≥ 0), so the pixel lower bound substitutes in.
        //   c1 = pl·t + a·pixel − a·pl      c2 = pu·t + b·pixel − pu·b
        let cand = |p_coef: f64, t_coef: f64, konst: f64, row: &[f64], c: f64| {
            let mut w: Vec<f64> = row.iter().map(|v| v * p_coef).collect();
            w[j] += t_coef;
            (w, c * p_coef + konst)
        };
        let (l1w, l1c) = cand(a, pl, -a * pl, &lo_row, lo_c);
        let (l2w, l2c) = cand(b, pu, -pu * b, &lo_row, lo_c);
        let pick_lo = eval_at(&l1w, l1c, &center) >= eval_at(&l2w, l2c, &center);
        let (plw, plc) = if pick_lo { (l1w, l1c) } else { (l2w, l2c) };

        //   c3 = pu·t + a·pixel − a·pu      c4 = pl·t + b·pixel − pl·b
        let (u1w, u1c) = cand(a, pu, -a * pu, &hi_row, hi_c);
        let (u2w, u2c) = cand(b, pl, -pl * b, &hi_row, hi_c);
        let pick_hi = eval_at(&u1w, u1c, &center) <= eval_at(&u2w, u2c, &center);
        let (puw, puc) = if pick_hi { (u1w, u1c) } else { (u2w, u2c) };

        // pixel + product − 0.5·t_j
        for k in 0..t_dim {
            enc.lower_coeffs[(p, k)] = lo_row[k] + plw[k];
            enc.upper_coeffs[(p, k)] = hi_row[k] + puw[k];
        }
        enc.lower_coeffs[(p, j)] -= 0.5;
        enc.upper_coeffs[(p, j)] -= 0.5;
        enc.lower_const[p] = lo_c + plc;
        enc.upper_const[p] = hi_c + puc;
    }
}

fn eval_at(w: &[f64], c: f64, t: &[f64]) -> f64 {
    c + w.iter().zip(t).map(|(a, b)| a * b).sum::<f64>()
}

/// Replace each pixel's bounds with sound affine bounds of `clip(pixel)`.
fn relax_clip_stage(enc: &mut EncodedRegion) {
    let t_dim = enc.box_lo.len();
    let center: Vec<f64> = (0..t_dim).map(|k| 0.5 * (enc.box_lo[k] + enc.box_hi[k])).collect();
    for p in 0..enc.pixel_count() {
        // lower bound: clip is monotone, so relax clip∘L using L's own range
        let (lw, lc) = {
            let row: Vec<f64> = enc.lower_coeffs.row(p).to_vec();
            let c = enc.lower_const[p];
            let el = affine_min(&row, c, &enc.box_lo, &enc.box_hi);
            let eu = affine_max(&row, c, &enc.box_lo, &enc.box_hi);
            clip_lower(&row, c, el, eu, &center)
        };
        let (uw, uc) = {
            let row: Vec<f64> = enc.upper_coeffs.row(p).to_vec();
            let c = enc.upper_const[p];
            let el = affine_min(&row, c, &enc.box_lo, &enc.box_hi);
            let eu = affine_max(&row, c, &enc.box_lo, &enc.box_hi);
            clip_upper(&row, c, el, eu, &center)
        };
        for k in 0..t_dim {
            enc.lower_coeffs[(p, k)] = lw[k];
            enc.upper_coeffs[(p, k)] = uw[k];
        }
        enc.lower_const[p] = lc;
        enc.upper_const[p] = uc;
    }
}

fn constant(dim: usize, v: f64) -> (Vec<f64>, f64) {
    (vec![0.0; dim], v)
}

/// Affine lower bound of `clip(e(t))` where `e` is affine with range `[el, eu]`.
fn clip_lower(w: &[f64], c: f64, el: f64, eu: f64, center: &[f64]) -> (Vec<f64>, f64) {
    let dim = w.len();
    if eu <= 0.0 {
        return constant(dim, 0.0);
    }
    if el >= 1.0 {
        return constant(dim, 1.0);
    }
    if el >= 0.0 && eu <= 1.0 {
        return (w.to_vec(), c);
    }
    if eu - el < 1e-300 {
        return constant(dim, el.clamp(0.0, 1.0));
    }
    if el >= 0.0 {
        // concave min(s, 1): chord from (el, el) to (eu, 1)
        let slope = (1.0 - el) / (eu - el);
        let wv: Vec<f64> = w.iter().map(|v| v * slope).collect();
        return (wv, c * slope + el * (1.0 - slope));
    }
    if eu <= 1.0 {
        // convex max(s, 0): both 0 and s are valid lower bounds
        let zero = constant(dim, 0.0);
        return if eval_at(w, c, center) >= 0.0 { (w.to_vec(), c) } else { zero };
    }
    // spans both kinks: clip(s) ≥ s − (eu − 1) and clip(s) ≥ 0
    let shifted = (w.to_vec(), c - (eu - 1.0));
    if eval_at(&shifted.0, shifted.1, center) >= 0.0 {
        shifted
    } else {
        constant(dim, 0.0)
    }
}

/// Affine upper bound of `clip(e(t))`.
fn clip_upper(w: &[f64], c: f64, el: f64, eu: f64, center: &[f64]) -> (Vec<f64>, f64) {
    let dim = w.len();
    if eu <= 0.0 {
        return constant(dim, 0.0);
    }
    if el >= 1.0 {
        return constant(dim, 1.0);
    }
    if el >= 0.0 && eu <= 1.0 {
        return (w.to_vec(), c);
    }
    if eu - el < 1e-300 {
        return constant(dim, el.clamp(0.0, 1.0));
    }
    if el >= 0.0 {
        // concave min(s, 1): both s and 1 are valid upper bounds
        let one = constant(dim, 1.0);
        return if eval_at(w, c, center) <= 1.0 { (w.to_vec(), c) } else { one };
    }
    if eu <= 1.0 {
        // convex max(s, 0): chord from (el, 0) to (eu, eu)
        let slope = eu / (eu - el);
        let wv: Vec<f64> = w.iter().map(|v| v * slope).collect();
        return (wv, (c - el) * slope);
    }
    // spans both kinks: clip(s) ≤ s − el and clip(s) ≤ 1
    let shifted = (w.to_vec(), c - el);
    if eval_at(&shifted.0, shifted.1, center) <= 1.0 {
        shifted
    } else {
        constant(dim, 1.0)
    }
}

/// Exact per-pixel channel ranges for a single HSL feature over `t ∈ [a, b]`.
fn encode_hsl(x: &[f64], kind: FeatureKind, a: f64, b: f64) -> EncodedRegion {
    let d = x.len();
    let mut lower = Array1::zeros(d);
    let mut upper = Array1::zeros(d);
    for (pix, px) in x.chunks_exact(3).enumerate() {
        let mut candidates = vec![a, b];
        candidates.extend(hsl_breakpoints(kind, px[0], px[1], px[2], a, b));
        for chan in 0..3 {
            let mut min_v = f64::INFINITY;
            let mut max_v = f64::NEG_INFINITY;
            for &t in &candidates {
                let v = hsl_channel_at(kind, px[0], px[1], px[2], t, chan);
                min_v = min_v.min(v);
                max_v = max_v.max(v);
            }
            lower[pix * 3 + chan] = min_v;
            upper[pix * 3 + chan] = max_v;
        }
    }
    EncodedRegion {
        box_lo: vec![a],
        box_hi: vec![b],
        lower_coeffs: Array2::zeros((d, 1)),
        lower_const: lower,
        upper_coeffs: Array2::zeros((d, 1)),
        upper_const: upper,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature::perturb;

    fn spec(kind: FeatureKind, d: f64) -> FeatureSpec {
        FeatureSpec::new(kind, d).unwrap()
    }

    /// Every grid perturbation must sit inside the enclosure at its own offsets.
    fn assert_grid_contained(x: &[f64], features: &[FeatureSpec], enc: &EncodedRegion, per_dim: usize) {
        let t_dim = features.len();
        let mut idx = vec![0usize; t_dim];
        loop {
            let t: Vec<f64> = (0..t_dim)
                .map(|j| {
                    enc.box_lo[j] + (enc.box_hi[j] - enc.box_lo[j]) * idx[j] as f64 / (per_dim - 1) as f64
                })
                .collect();
            let y = perturb(x, features, &t).unwrap();
            for (p, &v) in y.iter().enumerate() {
                let (lo, hi) = enc.bounds_at(p, &t);
                assert!(
                    lo - 1e-9 <= v && v <= hi + 1e-9,
                    "pixel {p} = {v} outside [{lo}, {hi}] at t={t:?}"
                );
            }
            // advance the grid index
            let mut j = 0;
            loop {
                if j == t_dim {
                    return;
                }
                idx[j] += 1;
                if idx[j] < per_dim {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
        }
    }

    #[test]
    fn brightness_without_saturation_is_one_dense_layer() {
        let x = vec![0.1, 0.3, 0.5];
        let enc = encode_neighborhood(&x, &[spec(FeatureKind::Brightness, 0.2)], 0.2).unwrap();
        assert!(enc.is_exact());
        let prefix = enc.as_dense_prefix().unwrap();
        assert_eq!(prefix.weights.shape(), [3, 1]);
        for p in 0..3 {
            assert_eq!(prefix.weights[(p, 0)], 1.0);
            assert_eq!(prefix.bias[p], x[p]);
        }
        assert_eq!(enc.box_lo, vec![0.0]);
        assert_eq!(enc.box_hi, vec![0.2]);
        assert_grid_contained(&x, &[spec(FeatureKind::Brightness, 0.2)], &enc, 128);
    }

    #[test]
    fn brightness_with_saturation_stays_sound() {
        let x = vec![0.05, 0.5, 0.92, 0.999];
        let f = [spec(FeatureKind::Brightness, 0.3)];
        let enc = encode_neighborhood(&x, &f, 0.3).unwrap();
        assert!(!enc.is_exact());
        assert_grid_contained(&x, &f, &enc, 128);
    }

    #[test]
    fn contrast_sound_with_both_clips() {
        let x = vec![0.02, 0.35, 0.5, 0.73, 0.98];
        let f = [spec(FeatureKind::Contrast, 1.5)];
        let enc = encode_neighborhood(&x, &f, 1.5).unwrap();
        assert_grid_contained(&x, &f, &enc, 128);
    }

    #[test]
    fn brightness_contrast_pair_grid_containment() {
        let x = vec![0.12, 0.4, 0.58, 0.86, 0.97, 0.03];
        let f = [spec(FeatureKind::Brightness, 0.25), spec(FeatureKind::Contrast, 0.25)];
        let enc = encode_region(&x, &f, &[0.0, 0.0], &[0.25, 0.25]).unwrap();
        assert_grid_contained(&x, &f, &enc, 33);
        // and from a non-zero anchor, as the scheduler uses it
        let enc = encode_region(&x, &f, &[0.1, 0.05], &[0.2, 0.15]).unwrap();
        let mut shifted = f.clone();
        shifted[0].target_diameter = 0.2;
        shifted[1].target_diameter = 0.15;
        assert_grid_contained(&x, &shifted, &enc, 33);
    }

    #[test]
    fn saturation_rgb_grid_containment() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let x: Vec<f64> = (0..12).map(|_| rng.gen::<f64>()).collect();
        for kind in [FeatureKind::Saturation, FeatureKind::Hue, FeatureKind::Lightness] {
            let d = if kind == FeatureKind::Hue { 2.5 } else { 0.4 };
            let f = [spec(kind, d)];
            let enc = encode_neighborhood(&x, &f, d).unwrap();
            assert_grid_contained(&x, &f, &enc, 1000);
        }
    }

    #[test]
    fn monotone_nesting_of_hulls() {
        // Concretizations live in image space, so hulls compare after the
        // [0,1] cut that every real pixel satisfies.
        let x = vec![0.2, 0.45, 0.7, 0.93];
        for kind in [
            FeatureKind::Brightness,
            FeatureKind::Contrast,
            FeatureKind::Saturation,
            FeatureKind::Lightness,
            FeatureKind::Hue,
        ] {
            let xs: Vec<f64> = if kind.is_rgb() { x[..3].to_vec() } else { x.clone() };
            let small = encode_neighborhood(&xs, &[spec(kind, 0.1)], 0.1).unwrap();
            let large = encode_neighborhood(&xs, &[spec(kind, 0.3)], 0.3).unwrap();
            for p in 0..xs.len() {
                let (sl, sh) = small.image_hull(p);
                let (ll, lh) = large.image_hull(p);
                assert!(ll <= sl + 1e-12 && sh <= lh + 1e-12, "{kind} pixel {p}");
            }
        }
    }

    #[test]
    fn hsl_multi_feature_rejected() {
        let x = vec![0.2, 0.3, 0.4];
        let f = [spec(FeatureKind::Hue, 0.5), spec(FeatureKind::Brightness, 0.1)];
        let err = encode_region(&x, &f, &[0.0, 0.0], &[0.5, 0.1]);
        assert!(matches!(err, Err(CertError::UnsupportedFeatures(_))));
    }

    #[test]
    fn hsl_needs_rgb_length() {
        let x = vec![0.2, 0.3];
        let err = encode_neighborhood(&x, &[spec(FeatureKind::Saturation, 0.2)], 0.2);
        assert!(err.is_err());
    }
}
