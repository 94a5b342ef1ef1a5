//! Inspect the box analyzer on the bundled piecewise-sensitivity network:
//! the abstract sensitivity over `[0.6, 0.6+δ]²` is exactly 2.8 while all
//! ReLUs are stable, then loses one linear slope per destabilized neuron.
//!
//! ```bash
//! cargo run --release --example analyzer_bounds
//! ```

use featurecert::analyzer::Analyzer;
use featurecert::fixtures::{appendix_family_net, appendix_family_sensitivity};

fn main() -> featurecert::Result<()> {
    let net = appendix_family_net();
    let analyzer = Analyzer::new();

    println!("delta   unstable   sensitivity   reference");
    for i in 1..=10 {
        let d = 0.25 * i as f64;
        let res = analyzer.analyze(&net, &[0.6, 0.6], &[0.6 + d, 0.6 + d], 1)?;
        println!(
            "{:>5.2}   {:>8}   {:>11.6}   {:>9.6}",
            d,
            res.unstable_count,
            res.sensitivity,
            appendix_family_sensitivity(d)
        );
    }

    // per-layer bounds at the first instability onset
    let detailed = Analyzer { record_layer_bounds: true, ..Analyzer::new() };
    let res = detailed.analyze(&net, &[0.6, 0.6], &[2.1, 2.1], 1)?;
    println!("\nper-layer bounds at δ = 1.5:");
    for layer in res.layer_bounds.unwrap() {
        let pairs: Vec<String> = layer
            .lower
            .iter()
            .zip(&layer.upper)
            .map(|(l, u)| format!("[{l:.3}, {u:.3}]"))
            .collect();
        println!("  layer {:>2} ({:<5}): {}", layer.index, layer.kind, pairs.join(" "));
    }
    Ok(())
}
