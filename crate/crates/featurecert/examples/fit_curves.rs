//! Fit the sensitivity and velocity models to sampled points and solve the
//! constrained step-size problem, showing what one scheduler iteration does
//! with its examples.
//!
//! ```bash
//! cargo run --release --example fit_curves
//! ```

use featurecert::predictor::{fit_sensitivity, fit_velocity, solve_step_diameter, SensitivityModel};

fn main() -> featurecert::Result<()> {
    // sensitivity samples from S(δ) = 2 − exp(5δ): root at ln(2)/5 ≈ 0.1386
    let sens_points: Vec<(f64, f64)> = [0.0, 0.02, 0.06, 0.11]
        .iter()
        .map(|&d| (d, 2.0 - (5.0f64 * d).exp()))
        .collect();
    let sens = fit_sensitivity(&sens_points)?;
    match sens.model {
        SensitivityModel::Exponential { alpha, beta, gamma } => {
            println!("sensitivity fit: {alpha:.4} + {beta:.4}·exp({gamma:.4}·δ)  (residual {:.2e})", sens.residual)
        }
        SensitivityModel::Linear { intercept, slope } => {
            println!("sensitivity fit: line {intercept:.4} + {slope:.4}·δ")
        }
    }
    if let Some(root) = sens.model.positive_root() {
        println!("predicted feasibility boundary: δ = {root:.5} (true {:.5})", 2.0f64.ln() / 5.0);
    }

    // velocity samples from V(δ) = 12·δ·exp(−8δ), 1% multiplicative noise
    let vel_points: Vec<(f64, f64)> = [0.01, 0.04, 0.09, 0.13]
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let noise = 1.0 + 0.01 * if i % 2 == 0 { 1.0 } else { -1.0 };
            (d, 12.0 * d * (-8.0f64 * d).exp() * noise)
        })
        .collect();
    let vel = fit_velocity(&vel_points)?;
    println!("velocity fit: {:.4}·δ·exp(−{:.4}·δ)  (true 12·δ·exp(−8·δ))", vel.alpha, vel.beta);

    let delta = solve_step_diameter(&sens.model, vel.beta, 0.5, 1e-5);
    println!(
        "next step: δ = {delta:.5}  (velocity peak {:.5}, boundary pulled inward)",
        1.0 / vel.beta
    );
    Ok(())
}
