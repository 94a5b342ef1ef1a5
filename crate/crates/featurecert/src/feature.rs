//! Semantic feature perturbations and their composition.
//!
//! A feature is a function `f(x, t)` mapping an image and a scalar offset to a
//! perturbed image, with `f(x, 0) = x`. Images are flat vectors in `[0,1]`;
//! RGB images interleave channels per pixel (`r, g, b, r, g, b, ...`).
//!
//! Definitions used here (the usual ones):
//! - brightness: `clip(x + t)`
//! - contrast:   `clip((1 + t)(x − 0.5) + 0.5)`
//! - hue/saturation/lightness: convert RGB→HSL, shift the channel, convert
//!   back. Hue offsets are in radians (a full wheel is `2π`); saturation and
//!   lightness shifts are clipped to the channel range.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::{CertError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Brightness,
    Contrast,
    Hue,
    Saturation,
    Lightness,
}

impl FeatureKind {
    pub fn is_rgb(self) -> bool {
        matches!(self, FeatureKind::Hue | FeatureKind::Saturation | FeatureKind::Lightness)
    }

    /// Default search range for adversarial-diameter grid search.
    pub fn default_max_range(self) -> f64 {
        match self {
            FeatureKind::Hue => std::f64::consts::TAU,
            _ => 1.0,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "brightness" => Ok(FeatureKind::Brightness),
            "contrast" => Ok(FeatureKind::Contrast),
            "hue" => Ok(FeatureKind::Hue),
            "saturation" => Ok(FeatureKind::Saturation),
            "lightness" => Ok(FeatureKind::Lightness),
            other => Err(CertError::Contract(format!("unknown feature {other:?}"))),
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FeatureKind::Brightness => "brightness",
            FeatureKind::Contrast => "contrast",
            FeatureKind::Hue => "hue",
            FeatureKind::Saturation => "saturation",
            FeatureKind::Lightness => "lightness",
        };
        f.write_str(s)
    }
}

/// A feature together with its target diameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub kind: FeatureKind,
    pub target_diameter: f64,
}

impl FeatureSpec {
    pub fn new(kind: FeatureKind, target_diameter: f64) -> Result<Self> {
        if !(target_diameter >= 0.0) {
            return Err(CertError::Contract(format!(
                "target diameter must be nonnegative, got {target_diameter}"
            )));
        }
        Ok(Self { kind, target_diameter })
    }
}

fn clip01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Apply one feature at offset `t` to a whole image.
pub fn apply_feature(kind: FeatureKind, x: &[f64], t: f64) -> Result<Vec<f64>> {
    if t == 0.0 {
        return Ok(x.to_vec());
    }
    match kind {
        FeatureKind::Brightness => Ok(x.iter().map(|&p| clip01(p + t)).collect()),
        FeatureKind::Contrast => Ok(x.iter().map(|&p| clip01((1.0 + t) * (p - 0.5) + 0.5)).collect()),
        FeatureKind::Hue | FeatureKind::Saturation | FeatureKind::Lightness => {
            if x.len() % 3 != 0 {
                return Err(CertError::Contract(format!(
                    "{kind} needs an RGB image (length divisible by 3), got length {}",
                    x.len()
                )));
            }
            let mut out = Vec::with_capacity(x.len());
            for px in x.chunks_exact(3) {
                let (h, s, l) = rgb_to_hsl(px[0], px[1], px[2]);
                let (h, s, l) = match kind {
                    FeatureKind::Hue => ((h + t / std::f64::consts::TAU).rem_euclid(1.0), s, l),
                    FeatureKind::Saturation => (h, clip01(s + t), l),
                    FeatureKind::Lightness => (h, s, clip01(l + t)),
                    _ => unreachable!(),
                };
                let (r, g, b) = hsl_to_rgb(h, s, l);
                out.push(clip01(r));
                out.push(clip01(g));
                out.push(clip01(b));
            }
            Ok(out)
        }
    }
}

/// Compose the features in order: `f_T(... f_2(f_1(x, t_1), t_2) ..., t_T)`.
/// Each offset must lie in `[0, target_diameter]`.
pub fn perturb(x: &[f64], features: &[FeatureSpec], offsets: &[f64]) -> Result<Vec<f64>> {
    if offsets.len() != features.len() {
        return Err(CertError::Contract(format!(
            "{} offsets for {} features",
            offsets.len(),
            features.len()
        )));
    }
    for (f, &t) in features.iter().zip(offsets) {
        // tiny slack: offsets are sums of step diameters and accumulate rounding
        if !(t >= 0.0 && t <= f.target_diameter + 1e-9) {
            return Err(CertError::Contract(format!(
                "offset {t} out of [0, {}] for {}",
                f.target_diameter, f.kind
            )));
        }
    }
    let mut cur = x.to_vec();
    for (f, &t) in features.iter().zip(offsets) {
        cur = apply_feature(f.kind, &cur, t)?;
    }
    Ok(cur)
}

// --- RGB <-> HSL -------------------------------------------------------------
//
// All channels normalized to [0,1]; hue wraps on [0,1).

pub fn rgb_to_hsl(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let l = (max + min) / 2.0;
    if delta == 0.0 {
        return (0.0, 0.0, l);
    }
    let s = delta / (1.0 - (2.0 * l - 1.0).abs());
    let h = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    ((h / 6.0).rem_euclid(1.0), s, l)
}

pub fn hsl_to_rgb(h: f64, s: f64, l: f64) -> (f64, f64, f64) {
    let h = h.rem_euclid(1.0);
    let c = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let hp = h * 6.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r1, g1, b1) = match hp as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    (r1 + m, g1 + m, b1 + m)
}

/// The value of pixel channel `chan` after applying `kind` at offset `t` to
/// the RGB pixel `(r, g, b)`. Used by the encoder's per-channel range search.
pub(crate) fn hsl_channel_at(
    kind: FeatureKind,
    r: f64,
    g: f64,
    b: f64,
    t: f64,
    chan: usize,
) -> f64 {
    let (h, s, l) = rgb_to_hsl(r, g, b);
    let (h, s, l) = match kind {
        FeatureKind::Hue => ((h + t / std::f64::consts::TAU).rem_euclid(1.0), s, l),
        FeatureKind::Saturation => (h, clip01(s + t), l),
        FeatureKind::Lightness => (h, s, clip01(l + t)),
        _ => unreachable!("affine features do not use the HSL path"),
    };
    let rgb = hsl_to_rgb(h, s, l);
    let v = match chan {
        0 => rgb.0,
        1 => rgb.1,
        _ => rgb.2,
    };
    clip01(v)
}

/// Offsets `t` in `(lo, hi)` where the channel transform can change slope:
/// sextant crossings for hue, clip boundaries for saturation/lightness.
pub(crate) fn hsl_breakpoints(kind: FeatureKind, r: f64, g: f64, b: f64, lo: f64, hi: f64) -> Vec<f64> {
    let (h, s, l) = rgb_to_hsl(r, g, b);
    let mut pts = Vec::new();
    match kind {
        FeatureKind::Hue => {
            // h + t/τ crosses k/6 at t = τ·((k/6 − h) mod 1) + τ·n
            let tau = std::f64::consts::TAU;
            for k in 0..6 {
                let mut t = (k as f64 / 6.0 - h).rem_euclid(1.0) * tau;
                while t < lo {
                    t += tau;
                }
                while t < hi {
                    if t > lo {
                        pts.push(t);
                    }
                    t += tau;
                }
            }
        }
        FeatureKind::Saturation => {
            let t = 1.0 - s;
            if t > lo && t < hi {
                pts.push(t);
            }
        }
        FeatureKind::Lightness => {
            for target in [0.5, 1.0] {
                let t = target - l;
                if t > lo && t < hi {
                    pts.push(t);
                }
            }
        }
        _ => {}
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts
}
