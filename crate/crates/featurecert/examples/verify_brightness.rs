//! Certify a brightness neighborhood with the adaptive scheduler.
//!
//! The model has its decision boundary planted at offset 0.3, so the run
//! should certify almost exactly up to there and stop with one precision-floor
//! failure at the frontier.
//!
//! ```bash
//! cargo run --release --example verify_brightness
//! ```

use featurecert::feature::{FeatureKind, FeatureSpec};
use featurecert::fixtures::planted_frontier_net;
use featurecert::scheduler::{verify_single_feature_net, SchedulerConfig};

fn main() -> featurecert::Result<()> {
    let x = vec![0.25, 0.4, 0.1, 0.3, 0.2, 0.35, 0.15, 0.05];
    let net = planted_frontier_net(&x, 0.3);
    let feature = FeatureSpec::new(FeatureKind::Brightness, 0.4)?;
    let cfg = SchedulerConfig::default();

    let (certified, report) = verify_single_feature_net(&net, &x, &feature, &cfg)?;

    println!("step  offset      delta       verdict   sensitivity");
    for s in &report.steps {
        println!(
            "{:>4}  {:<10.6}  {:<10.3e}  {:<8}  {:+.5}",
            s.step, s.offsets[0], s.delta, s.verdict, s.sensitivity
        );
    }
    println!();
    println!("certified diameter: {certified:.6} (frontier planted at 0.3)");
    println!(
        "steps: {}  failures: {}  analyzer: {:.4}s  overhead: {:.4}s",
        report.step_count(),
        report.failures,
        report.analyzer_seconds,
        report.overhead_seconds
    );
    Ok(())
}
