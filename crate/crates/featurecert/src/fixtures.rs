//! Deterministic model and input generators for tests, examples, and the CLI.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::{Path, PathBuf};

use crate::feature::{FeatureKind, FeatureSpec};
use crate::net::{DenseLayer, Layer, LabeledInput, Network};
use crate::Result;

fn dense(w: Vec<Vec<f64>>, b: Vec<f64>) -> Layer {
    let rows = w.len();
    let cols = w[0].len();
    let flat: Vec<f64> = w.into_iter().flatten().collect();
    Layer::Dense(
        DenseLayer::new(Array2::from_shape_vec((rows, cols), flat).unwrap(), Array1::from(b))
            .unwrap(),
    )
}

/// A 2-input, three-hidden-layer ReLU net whose linear-relaxation sensitivity
/// over the box `[0.6, 0.6+δ]²` (class 1, zero-based) is piecewise linear:
///
/// - `2.8`           for δ ∈ [0, 1)    (all ReLUs stable)
/// - `3.8 − δ`       for δ ∈ [1, 2)    (one unstable neuron)
/// - `6.2 − 2.2 δ`   for δ ∈ [2, 2.5]  (two unstable neurons)
///
/// The first hidden layer computes `1 − i₁ + i₂` in its second neuron, which
/// goes unstable exactly at δ = 1; a second neuron two layers in goes unstable
/// at δ = 2. Stable pass-through neurons carry the signals needed for the
/// margin to cancel all input dependence while every ReLU stays stable.
pub fn appendix_family_net() -> Network {
    // Output bounds are computed per class, so both outputs are built to be
    // input-independent in exact arithmetic: o2 = n2 + n3 = 4 and
    // o1 = n2 + n3 + 1.2·n5 − 2.8 = 1.2 exactly while every ReLU is stable.
    // Once n2 (= ReLU(1 − i1 + i2)) destabilizes, only o1's upper bound grows,
    // through the secant relaxation; n5 (= ReLU(n3 − 5)) adds a second slope.
    let layers = vec![
        // n1 = i1 + i2, n2 = 1 - i1 + i2, n3 = i1 - i2 + 3
        dense(
            vec![vec![1.0, 1.0], vec![-1.0, 1.0], vec![1.0, -1.0]],
            vec![0.0, 1.0, 3.0],
        ),
        Layer::Relu,
        // n4 = n3, n5 = n3 - 5, n6 = n2 + n3
        dense(
            vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]],
            vec![0.0, -5.0, 0.0],
        ),
        Layer::Relu,
        // n7 = n5 + 1, n8 = n6, n9 = n4
        dense(
            vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]],
            vec![1.0, 0.0, 0.0],
        ),
        Layer::Relu,
        // o1 = 1.2 n7 + n8 - 4, o2 = n8
        dense(vec![vec![1.2, 1.0, 0.0], vec![0.0, 1.0, 0.0]], vec![-4.0, 0.0]),
    ];
    Network::new(layers, 2, 2).unwrap()
}

/// Reference sensitivity of [`appendix_family_net`] over `[0.6, 0.6+δ]²`.
pub fn appendix_family_sensitivity(delta: f64) -> f64 {
    if delta < 1.0 {
        2.8
    } else if delta < 2.0 {
        3.8 - delta
    } else {
        6.2 - 2.2 * delta
    }
}

/// A 1-input net that is robust on the whole brightness range `[0, 0.3]` from
/// `x = [0.1]`, yet the analyzer fails on the full range and succeeds on both
/// halves: o1 = h2 − h1 − 0.3 = −ReLU(0.3 − p) has exact maximum 0, but with
/// h1 spanning zero and `û ≤ −l̂` the relaxed lower bound of h1 drops to zero
/// and o1's upper bound inflates past the constant margin of o2. Splitting
/// once makes h1 stable (left half) or flips its relaxation to the exact
/// identity branch (right half), and both halves verify.
pub fn spurious_root_net() -> Network {
    let layers = vec![
        // h1 = p - 0.3, h2 = p
        dense(vec![vec![1.0], vec![1.0]], vec![-0.3, 0.0]),
        Layer::Relu,
        // o1 = h2 - h1 - 0.3, o2 = 0.05
        dense(vec![vec![-1.0, 1.0], vec![0.0, 0.0]], vec![-0.3, 0.05]),
    ];
    Network::new(layers, 1, 2).unwrap()
}

/// Base input and target diameter for the [`spurious_root_net`] scenario.
pub fn spurious_root_scenario() -> (Vec<f64>, FeatureSpec) {
    (vec![0.1], FeatureSpec::new(FeatureKind::Brightness, 0.3).unwrap())
}

/// A classifier whose brightness robustness frontier from `x` is planted at a
/// known offset: the margin of the true class is exactly `frontier − t` along
/// `t`, entirely through stable computations, so the analyzer is exact and
/// every strategy should certify right up to `frontier`.
///
/// `x` entries must leave headroom: `x_i + frontier ≤ 1`.
pub fn planted_frontier_net(x: &[f64], frontier: f64) -> Network {
    let d = x.len();
    let inv = 1.0 / d as f64;
    let mean: f64 = x.iter().sum::<f64>() * inv;
    let layers = vec![
        // h_i = p_i + 1 (stable on for p >= -1)
        dense((0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(), vec![1.0; d]),
        Layer::Relu,
        // o0 = mean(h) - 1 = mean(p), o1 = frontier + mean(x)
        dense(vec![vec![inv; d], vec![0.0; d]], vec![-1.0, frontier + mean]),
    ];
    Network::new(layers, d, 2).unwrap()
}

/// Like [`planted_frontier_net`] but with one genuinely unstable neuron, so
/// the analyzer's frontier sits strictly below the concrete decision boundary.
/// The unstable neuron `ReLU(mean(p) − kink)` joins the margin with weight
/// `−w`, steepening the certified slope once `t` crosses `kink − mean(x)`.
pub fn planted_relu_frontier_net(x: &[f64], frontier: f64, kink: f64, w: f64) -> Network {
    let d = x.len();
    let inv = 1.0 / d as f64;
    let mean: f64 = x.iter().sum::<f64>() * inv;
    let layers = vec![
        // h_i = p_i + 1 for the stable mean path, u = mean(p) - kink
        dense(
            (0..d)
                .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .chain(std::iter::once(vec![inv; d]))
                .collect(),
            (0..d).map(|_| 1.0).chain(std::iter::once(-kink)).collect(),
        ),
        Layer::Relu,
        // o0 = mean(h) - 1 + w·u, o1 = frontier + mean(x)
        dense(
            vec![
                (0..d).map(|_| inv).chain(std::iter::once(w)).collect(),
                vec![0.0; d + 1],
            ],
            vec![-1.0, frontier + mean],
        ),
    ];
    Network::new(layers, d, 2).unwrap()
}

/// Random fully-connected ReLU net with the given layer widths. Weights are
/// scaled so activations stay O(1) and margins are not degenerate.
pub fn random_net(rng: &mut ChaCha8Rng, dims: &[usize]) -> Network {
    assert!(dims.len() >= 2);
    let mut layers = Vec::new();
    for i in 0..dims.len() - 1 {
        let (nin, nout) = (dims[i], dims[i + 1]);
        let scale = (2.0 / nin as f64).sqrt();
        let w: Vec<f64> = (0..nin * nout).map(|_| rng.gen_range(-scale..scale)).collect();
        let b: Vec<f64> = (0..nout).map(|_| rng.gen_range(-0.1..0.1)).collect();
        layers.push(Layer::Dense(
            DenseLayer::new(Array2::from_shape_vec((nout, nin), w).unwrap(), Array1::from(b)).unwrap(),
        ));
        if i + 2 < dims.len() {
            layers.push(Layer::Relu);
        }
    }
    Network::new(layers, dims[0], *dims.last().unwrap()).unwrap()
}

/// Random image with entries in `[lo, hi]`.
pub fn random_image(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(lo..hi)).collect()
}

#[derive(Serialize)]
struct Manifest {
    seed: u64,
    models: Vec<String>,
    inputs: Vec<String>,
}

/// Write the bundled fixture set: the piecewise-sensitivity net, the
/// spurious-root scenario, planted-frontier classifiers, and synthetic
/// grayscale/RGB inputs. Output is deterministic in `seed`.
pub fn generate_fixtures(seed: u64, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut written = Vec::new();
    let mut models = Vec::new();
    let mut inputs = Vec::new();

    let mut save_net = |name: &str, net: &Network, written: &mut Vec<PathBuf>| -> Result<()> {
        let path = dir.join(name);
        net.to_json_file(&path)?;
        models.push(name.to_string());
        written.push(path);
        Ok(())
    };

    save_net("appendix_family.json", &appendix_family_net(), &mut written)?;
    save_net("spurious_root.json", &spurious_root_net(), &mut written)?;

    let gray = random_image(&mut rng, 16, 0.1, 0.6);
    let planted = planted_frontier_net(&gray, 0.3);
    save_net("planted_030.json", &planted, &mut written)?;
    let relu_planted = planted_relu_frontier_net(&gray, 0.3, gray.iter().sum::<f64>() / 16.0 + 0.1, 0.5);
    save_net("planted_relu_030.json", &relu_planted, &mut written)?;

    let toy = random_net(&mut rng, &[16, 24, 16, 3]);
    save_net("toy_fc.json", &toy, &mut written)?;
    let toy_rgb = random_net(&mut rng, &[12, 24, 3]);
    save_net("toy_rgb_fc.json", &toy_rgb, &mut written)?;

    let mut save_input = |name: &str, x: Vec<f64>, label: usize, written: &mut Vec<PathBuf>| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, serde_json::to_string_pretty(&LabeledInput { x, label })?)?;
        inputs.push(name.to_string());
        written.push(path);
        Ok(())
    };

    let toy_label = toy.classify(&gray)?;
    save_input("input_gray16.json", gray.clone(), toy_label, &mut written)?;
    let rgb = random_image(&mut rng, 12, 0.15, 0.85);
    let rgb_label = toy_rgb.classify(&rgb)?;
    save_input("input_rgb12.json", rgb, rgb_label, &mut written)?;
    save_input("input_planted.json", gray, 1, &mut written)?;
    save_input("input_spurious.json", vec![0.1], 1, &mut written)?;

    let manifest = Manifest { seed, models, inputs };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn appendix_net_center_classification() {
        let net = appendix_family_net();
        let x = [0.6, 0.6];
        assert_eq!(net.classify(&x).unwrap(), 1);
        let s = net.concrete_sensitivity(&x, 1).unwrap();
        assert!((s - 2.8).abs() < 1e-12, "sensitivity {s}");
    }

    #[test]
    fn appendix_net_prelayer_structure() {
        // The second first-layer neuron computes 1 - i1 + i2.
        let net = appendix_family_net();
        if let Layer::Dense(d) = &net.layers()[0] {
            assert_eq!(d.weights[(1, 0)], -1.0);
            assert_eq!(d.weights[(1, 1)], 1.0);
            assert_eq!(d.bias[1], 1.0);
        } else {
            panic!("first layer should be dense");
        }
    }

    #[test]
    fn planted_frontier_margin_is_linear() {
        let x = vec![0.2, 0.4, 0.3, 0.1];
        let net = planted_frontier_net(&x, 0.25);
        for t in [0.0, 0.1, 0.2, 0.24, 0.26, 0.3] {
            let p: Vec<f64> = x.iter().map(|v| v + t).collect();
            let m = net.concrete_sensitivity(&p, 1).unwrap();
            assert!((m - (0.25 - t)).abs() < 1e-12);
        }
    }

    #[test]
    fn fixtures_deterministic() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let w1 = generate_fixtures(0, dir1.path()).unwrap();
        let w2 = generate_fixtures(0, dir2.path()).unwrap();
        assert_eq!(w1.len(), w2.len());
        for (a, b) in w1.iter().zip(&w2) {
            assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), "{a:?}");
        }
    }
}
