//! Grid-search minimal adversarial feature diameters for every feature on a
//! small random RGB classifier, the quantity certified diameters are
//! measured against.
//!
//! ```bash
//! cargo run --release --example adversarial_search
//! ```

use featurecert::feature::FeatureKind;
use featurecert::fixtures::{random_image, random_net};
use featurecert::harness::find_adv_diameter;
use rand::SeedableRng;

fn main() -> featurecert::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let net = random_net(&mut rng, &[12, 20, 12, 4]);
    let x = random_image(&mut rng, 12, 0.2, 0.8);
    println!("label: {}", net.classify(&x)?);
    println!("{:<12} {:>12} {:>12}", "feature", "max range", "delta_adv");
    for kind in [
        FeatureKind::Brightness,
        FeatureKind::Contrast,
        FeatureKind::Hue,
        FeatureKind::Saturation,
        FeatureKind::Lightness,
    ] {
        let range = kind.default_max_range();
        let adv = find_adv_diameter(&net, &x, kind, range)?;
        let shown = if adv.is_finite() { format!("{adv:.5}") } else { "none found".into() };
        println!("{:<12} {:>12.4} {:>12}", kind.to_string(), range, shown);
    }
    Ok(())
}
