//! Experiment harness behind the command-line interface: loads models and
//! inputs, finds minimal adversarial diameters by grid search, runs the
//! requested strategies, and writes the CSV/JSONL reports.

use std::path::PathBuf;

use crate::baselines::{bab_verify, estimate_split_size, greedy_oracle_verify, uniform_verify};
use crate::feature::{perturb, FeatureKind, FeatureSpec};
use crate::net::{LabeledInput, Network};
use crate::region::{compute_certified_vertices, RegionStep};
use crate::report::{append_summary_rows, RunReport, SummaryRow};
use crate::scheduler::{verify_multi_feature, NetOracle, SchedulerConfig};
use crate::{CertError, Result};

/// Target diameter request: a fixed value or the adversarial diameter.
#[derive(Debug, Clone, Copy)]
pub enum DiameterSpec {
    Auto,
    Value(f64),
}

#[derive(Debug, Clone)]
pub struct FeatureRequest {
    pub kind: FeatureKind,
    pub diameter: DiameterSpec,
}

impl FeatureRequest {
    /// Parse `name`, `name:0.25`, or `name:auto`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, diam) = match s.split_once(':') {
            Some((n, d)) => (n, d),
            None => (s, "auto"),
        };
        let kind = FeatureKind::parse(name)?;
        let diameter = if diam == "auto" {
            DiameterSpec::Auto
        } else {
            let v: f64 = diam
                .parse()
                .map_err(|_| CertError::Contract(format!("bad diameter {diam:?} for {name}")))?;
            if !(v > 0.0) {
                return Err(CertError::Contract(format!("diameter must be positive, got {v}")));
            }
            DiameterSpec::Value(v)
        };
        Ok(FeatureRequest { kind, diameter })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Adaptive,
    Bab,
    Uniform,
    GreedySim,
}

impl Strategy {
    /// `veep` is accepted as an alias of the adaptive strategy.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "adaptive" | "veep" => Ok(Strategy::Adaptive),
            "bab" => Ok(Strategy::Bab),
            "uniform" => Ok(Strategy::Uniform),
            "greedy-sim" => Ok(Strategy::GreedySim),
            other => Err(CertError::Contract(format!("unknown strategy {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Adaptive => "adaptive",
            Strategy::Bab => "bab",
            Strategy::Uniform => "uniform",
            Strategy::GreedySim => "greedy-sim",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model_path: PathBuf,
    pub input_path: PathBuf,
    pub features: Vec<FeatureRequest>,
    pub strategies: Vec<Strategy>,
    pub scheduler: SchedulerConfig,
    /// Uniform split size; estimated from the model when absent.
    pub split_size: Option<f64>,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Record the time to certify each ratio of the adversarial diameter.
    pub progress_curve: bool,
    /// Samples for the post-run soundness check.
    pub soundness_samples: usize,
}

/// Smallest feature offset that flips the classification, by coarse-to-fine
/// grid search: 1000 points over the search range, then three refinement
/// rounds of 10× around the first flip. Infinity when no flip is found.
pub fn find_adv_diameter(net: &Network, x: &[f64], kind: FeatureKind, max_range: f64) -> Result<f64> {
    let label = net.classify(x)?;
    let spec = FeatureSpec::new(kind, max_range)?;
    let flips = |t: f64| -> Result<bool> {
        let p = perturb(x, std::slice::from_ref(&spec), &[t])?;
        Ok(net.classify(&p)? != label)
    };
    let mut lo = 0.0f64;
    let mut hi = max_range;
    let mut found = false;
    for round in 0..4 {
        let n = if round == 0 { 1000 } else { 10 };
        let step = (hi - lo) / n as f64;
        let mut flip_at = None;
        for i in 1..=n {
            let t = lo + step * i as f64;
            if flips(t.min(max_range))? {
                flip_at = Some(t);
                break;
            }
        }
        match flip_at {
            Some(t) => {
                found = true;
                hi = t;
                lo = t - step;
            }
            None => break,
        }
    }
    if found {
        Ok(hi)
    } else {
        Ok(f64::INFINITY)
    }
}

/// Fraction of random samples inside `∏ [0, ds_i]` that are misclassified;
/// zero is the expected value for a sound run.
pub fn soundness_violations(
    net: &Network,
    x: &[f64],
    features: &[FeatureSpec],
    ds: &[f64],
    samples: usize,
    seed: u64,
) -> Result<usize> {
    use rand::{Rng, SeedableRng};
    let label = net.classify(x)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    for _ in 0..samples {
        let t: Vec<f64> = ds.iter().map(|&d| rng.gen_range(0.0..=d.max(0.0))).collect();
        let p = perturb(x, features, &t)?;
        if net.classify(&p)? != label {
            violations += 1;
        }
    }
    Ok(violations)
}

/// Ratios at which progress toward the adversarial diameter is recorded.
pub const PROGRESS_RATIOS: [f64; 11] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.98];

/// Charged seconds until each ratio of `delta_adv` was certified, replayed
/// from the step log. Single-feature runs only.
pub fn progress_curve(report: &RunReport, target: f64, delta_adv: f64) -> Vec<(f64, Option<f64>)> {
    let mut steps: Vec<RegionStep> = Vec::new();
    let mut charged = 0.0;
    let mut reached: Vec<Option<f64>> = vec![None; PROGRESS_RATIOS.len()];
    for s in &report.steps {
        charged += s.charged_seconds;
        steps.push(RegionStep::cube(&s.offsets, s.delta, s.verdict == "robust", s.advancing));
        if let Ok(fd) = compute_certified_vertices(&steps, &[target]) {
            for (k, &r) in PROGRESS_RATIOS.iter().enumerate() {
                if reached[k].is_none() && fd.ds[0] >= r * delta_adv {
                    reached[k] = Some(charged);
                }
            }
        }
    }
    PROGRESS_RATIOS.iter().copied().zip(reached).collect()
}

fn resolve_targets(
    net: &Network,
    x: &[f64],
    requests: &[FeatureRequest],
) -> Result<(Vec<FeatureSpec>, Vec<f64>)> {
    let mut specs = Vec::with_capacity(requests.len());
    let mut adv = Vec::with_capacity(requests.len());
    for req in requests {
        let max_range = req.kind.default_max_range();
        let delta_adv = find_adv_diameter(net, x, req.kind, max_range)?;
        let target = match req.diameter {
            DiameterSpec::Value(v) => v,
            DiameterSpec::Auto => {
                if delta_adv.is_finite() {
                    delta_adv
                } else {
                    max_range
                }
            }
        };
        specs.push(FeatureSpec::new(req.kind, target)?);
        adv.push(delta_adv);
    }
    Ok((specs, adv))
}

/// Run the configured experiment; returns the process exit code
/// (0 complete, 2 timed out on any strategy).
pub fn run_experiment(cfg: &RunConfig) -> Result<i32> {
    let net = Network::from_json_file(&cfg.model_path)?;
    let input = LabeledInput::from_json_file(&cfg.input_path)?;
    let x = &input.x;
    if x.len() != net.input_dim() {
        return Err(CertError::Dimension(format!(
            "input has {} entries, model expects {}",
            x.len(),
            net.input_dim()
        )));
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let label = net.classify(x)?;
    let (features, delta_adv) = resolve_targets(&net, x, &cfg.features)?;
    let targets: Vec<f64> = features.iter().map(|f| f.target_diameter).collect();
    println!(
        "model {} input {} label {label} features {:?} targets {targets:?} delta_adv {delta_adv:?}",
        cfg.model_path.display(),
        cfg.input_path.display(),
        features.iter().map(|f| f.kind.to_string()).collect::<Vec<_>>(),
    );

    let mut exit = 0;
    let mut rows = Vec::new();
    for &strategy in &cfg.strategies {
        let mut oracle = NetOracle::new(&net, x, &features, label);
        let report: RunReport = match strategy {
            Strategy::Adaptive => verify_multi_feature(&mut oracle, &cfg.scheduler)?.1,
            Strategy::Bab => bab_verify(&mut oracle, &cfg.scheduler)?.1,
            Strategy::Uniform => {
                let split = match cfg.split_size {
                    Some(s) => s,
                    None => estimate_split_size(&mut oracle, &cfg.scheduler)?,
                };
                println!("uniform split size: {split}");
                uniform_verify(&mut oracle, split, &cfg.scheduler)?.1
            }
            Strategy::GreedySim => greedy_oracle_verify(&mut oracle, &cfg.scheduler)?.1,
        };
        if report.timed_out {
            exit = 2;
        }

        let violations = soundness_violations(&net, x, &features, &report.ds, cfg.soundness_samples, cfg.seed)?;
        println!(
            "{}: ds {:?} steps {} failures {} analyzer {:.3}s charged {:.3e}s soundness {} violations / {} samples",
            strategy.name(),
            report.ds,
            report.step_count(),
            report.failures,
            report.analyzer_seconds,
            report.charged_seconds,
            violations,
            cfg.soundness_samples,
        );
        if violations > 0 {
            return Err(CertError::Contract(format!(
                "soundness check failed: {violations} misclassified samples inside the certified region"
            )));
        }

        report.write_step_log(cfg.out_dir.join(format!("steps_{}.jsonl", strategy.name())))?;
        if cfg.progress_curve {
            if features.len() == 1 && delta_adv[0].is_finite() {
                let curve = progress_curve(&report, targets[0], delta_adv[0]);
                let mut out = String::from("ratio,charged_seconds\n");
                for (r, t) in curve {
                    out.push_str(&format!(
                        "{r},{}\n",
                        t.map(|v| format!("{v}")).unwrap_or_else(|| "".into())
                    ));
                }
                std::fs::write(cfg.out_dir.join(format!("progress_{}.csv", strategy.name())), out)?;
            } else {
                println!("progress curve skipped: needs one feature with a finite adversarial diameter");
            }
        }

        rows.push(SummaryRow {
            model: cfg.model_path.display().to_string(),
            input: cfg.input_path.display().to_string(),
            strategy: strategy.name().to_string(),
            features: features.iter().map(|f| f.kind.to_string()).collect(),
            delta_bar: targets.clone(),
            delta_adv: delta_adv.clone(),
            ds: report.ds.clone(),
            steps: report.step_count(),
            failures: report.failures,
            analyzer_seconds: report.analyzer_seconds,
            overhead_seconds: report.overhead_seconds,
            exit: if report.timed_out { 2 } else { 0 },
        });
    }
    append_summary_rows(cfg.out_dir.join("summary.csv"), &rows)?;
    Ok(exit)
}
