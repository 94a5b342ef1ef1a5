//! Command-line interface: verify feature neighborhoods, generate fixtures,
//! search for adversarial diameters, and dump analyzer bounds.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use featurecert::analyzer::Analyzer;
use featurecert::fixtures::generate_fixtures;
use featurecert::harness::{
    find_adv_diameter, run_experiment, FeatureRequest, RunConfig, Strategy,
};
use featurecert::feature::FeatureKind;
use featurecert::net::{LabeledInput, Network};
use featurecert::scheduler::SchedulerConfig;

#[derive(Parser)]
#[command(version, about = "Certify network robustness over semantic feature neighborhoods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more splitting strategies on a model/input/feature problem.
    Verify(VerifyArgs),
    /// Write the bundled deterministic model and input fixtures.
    Fixtures {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid-search the minimal adversarial diameter of a feature.
    Adv {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Feature name (brightness, contrast, hue, saturation, lightness).
        #[arg(long)]
        feature: String,
        /// Search range; defaults to 1.0 (2π for hue).
        #[arg(long)]
        max_range: Option<f64>,
    },
    /// Dump per-layer analyzer bounds over an input box as JSON.
    Bounds {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Box radius around the input, per dimension.
        #[arg(long, default_value_t = 0.01)]
        radius: f64,
    },
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// `name`, `name:DIAMETER`, or `name:auto` (repeatable, at most twice).
    #[arg(long = "feature", required = true)]
    features: Vec<String>,
    /// adaptive (alias: veep), bab, uniform, greedy-sim, or all.
    #[arg(long, default_value = "adaptive")]
    strategy: String,
    #[arg(long, default_value_t = 1e-5)]
    delta_min: f64,
    /// Prediction window size.
    #[arg(long, default_value_t = 3)]
    m: usize,
    /// Wall-clock timeout in seconds.
    #[arg(long, default_value_t = f64::INFINITY)]
    timeout: f64,
    #[arg(long)]
    out: PathBuf,
    /// Uniform splitting cell edge; estimated when omitted.
    #[arg(long)]
    split_size: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record time-to-ratio progress curves (single feature only).
    #[arg(long, default_value_t = false)]
    progress_curve: bool,
    /// Fit velocities against wall-clock time instead of the work clock.
    #[arg(long, default_value_t = false)]
    wall_clock_velocity: bool,
    /// Samples for the post-run soundness check.
    #[arg(long, default_value_t = 10_000)]
    soundness_samples: usize,
}

fn run(cli: Cli) -> featurecert::Result<i32> {
    match cli.command {
        Command::Verify(args) => {
            let features = args
                .features
                .iter()
                .map(|s| FeatureRequest::parse(s))
                .collect::<featurecert::Result<Vec<_>>>()?;
            let strategies = if args.strategy == "all" {
                vec![Strategy::Adaptive, Strategy::Bab, Strategy::Uniform]
            } else {
                vec![Strategy::parse(&args.strategy)?]
            };
            let mut scheduler = SchedulerConfig::for_delta_min(args.delta_min, args.m);
            scheduler.global_timeout = args.timeout;
            scheduler.velocity_from_wall_clock = args.wall_clock_velocity;
            let cfg = RunConfig {
                model_path: args.model,
                input_path: args.input,
                features,
                strategies,
                scheduler,
                split_size: args.split_size,
                out_dir: args.out,
                seed: args.seed,
                progress_curve: args.progress_curve,
                soundness_samples: args.soundness_samples,
            };
            run_experiment(&cfg)
        }
        Command::Fixtures { seed, out } => {
            let written = generate_fixtures(seed, &out)?;
            for p in written {
                println!("{}", p.display());
            }
            Ok(0)
        }
        Command::Adv { model, input, feature, max_range } => {
            let net = Network::from_json_file(&model)?;
            let x = LabeledInput::from_json_file(&input)?.x;
            let kind = FeatureKind::parse(&feature)?;
            let range = max_range.unwrap_or_else(|| kind.default_max_range());
            let adv = find_adv_diameter(&net, &x, kind, range)?;
            println!("{adv}");
            Ok(0)
        }
        Command::Bounds { model, input, radius } => {
            let net = Network::from_json_file(&model)?;
            let x = LabeledInput::from_json_file(&input)?.x;
            let lo: Vec<f64> = x.iter().map(|v| v - radius).collect();
            let hi: Vec<f64> = x.iter().map(|v| v + radius).collect();
            let analyzer = Analyzer { record_layer_bounds: true, ..Analyzer::new() };
            let label = net.classify(&x)?;
            let res = analyzer.analyze(&net, &lo, &hi, label)?;
            let dump = serde_json::json!({
                "label": label,
                "verdict": res.verdict,
                "sensitivity": res.sensitivity,
                "unstable_count": res.unstable_count,
                "output_bounds": res.output_bounds,
                "layers": res.layer_bounds,
            });
            println!("{}", serde_json::to_string_pretty(&dump)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
