//! Certify a brightness-and-contrast neighborhood: the scheduler covers the
//! rectangle with adaptively sized squares, feature by feature, and returns
//! the diameter array of the best certified rectangle.
//!
//! ```bash
//! cargo run --release --example verify_two_features
//! ```

use featurecert::feature::{FeatureKind, FeatureSpec};
use featurecert::fixtures::{random_image, random_net};
use featurecert::harness::{find_adv_diameter, soundness_violations};
use featurecert::scheduler::{verify_multi_feature_net, SchedulerConfig};
use rand::SeedableRng;

fn main() -> featurecert::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
    let net = random_net(&mut rng, &[10, 16, 12, 3]);
    let x = random_image(&mut rng, 10, 0.25, 0.75);

    // target each feature's own adversarial diameter (capped for the demo)
    let adv_b = find_adv_diameter(&net, &x, FeatureKind::Brightness, 1.0)?.min(0.2);
    let adv_c = find_adv_diameter(&net, &x, FeatureKind::Contrast, 1.0)?.min(0.2);
    println!("targets: brightness {adv_b:.4}, contrast {adv_c:.4}");

    let features = vec![
        FeatureSpec::new(FeatureKind::Brightness, adv_b)?,
        FeatureSpec::new(FeatureKind::Contrast, adv_c)?,
    ];
    let cfg = SchedulerConfig::for_delta_min(1e-3, 3);
    let (ds, report) = verify_multi_feature_net(&net, &x, &features, &cfg)?;

    println!(
        "certified rectangle: brightness {:.4} × contrast {:.4} ({} steps, {} failures)",
        ds[0],
        ds[1],
        report.step_count(),
        report.failures
    );
    let violations = soundness_violations(&net, &x, &features, &ds, 20_000, 7)?;
    println!("soundness: {violations} misclassified samples out of 20000 inside the rectangle");
    Ok(())
}
