//! Trace the scheduler's protocol on a synthetic analyzer: two predetermined
//! initialization steps, then regression-predicted diameters that ride the
//! sensitivity boundary while maximizing predicted velocity.
//!
//! ```bash
//! cargo run --release --example synthetic_scheduler
//! ```

use featurecert::scheduler::{simulate_with_cost_model, SchedulerConfig};

fn main() -> featurecert::Result<()> {
    // sensitivity decays exponentially in the diameter; cost grows with it
    let frontier = 0.4;
    let sensitivity = move |lo: &[f64], hi: &[f64]| {
        let delta = hi[0] - lo[0];
        (frontier - hi[0]) - 0.3 * ((6.0 * delta as f64).exp() - 1.0)
    };
    let cost = |lo: &[f64], hi: &[f64]| 2e-3 * (12.0 * (hi[0] - lo[0]) as f64).exp();

    let cfg = SchedulerConfig::default();
    let (ds, report) = simulate_with_cost_model(vec![0.5], sensitivity, cost, &cfg)?;

    println!("step  kind       offset     delta      verdict    charged [s]");
    for s in &report.steps {
        let kind = if s.predicted_delta.is_none() { "init" } else { "predicted" };
        println!(
            "{:>4}  {:<9}  {:<9.6}  {:<9.3e}  {:<9}  {:.3e}",
            s.step, kind, s.offsets[0], s.delta, s.verdict, s.charged_seconds
        );
    }
    println!();
    println!(
        "certified {:.5} of target 0.5 in {} steps ({} failures), charged {:.4}s",
        ds[0],
        report.step_count(),
        report.failures,
        report.charged_seconds
    );
    Ok(())
}
