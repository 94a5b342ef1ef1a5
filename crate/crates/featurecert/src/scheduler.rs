//! The adaptive verification loops.
//!
//! A run is a sequence of verification steps. Each step perturbs the base
//! image to the current anchor, reads the concrete sensitivity there for
//! free, fits the velocity and sensitivity models to recent examples, solves
//! for the diameter that maximizes velocity inside the feasible region,
//! applies the failure corrections, and submits one hyper-cube to the
//! analyzer. Successes grow the certified region; failures shrink the next
//! prediction, down to the precision floor `δ_MIN`, which marks the
//! robustness frontier.
//!
//! The loops run against a [`RegionOracle`], so the same code drives the real
//! analyzer and the synthetic cost models used for protocol tests and
//! baseline comparisons.

use std::time::Instant;

use crate::analyzer::{Analyzer, Verdict};
use crate::feature::{perturb, FeatureSpec};
use crate::net::Network;
use crate::predictor::{
    assemble_examples, fit_sensitivity, fit_velocity, solve_step_diameter, SensitivityModel,
    StepExample, StepRecord, VelocityFit,
};
use crate::region::{
    compute_certified_vertices, compute_next_offsets, refine_offsets_for_prediction,
    update_diameters, OffsetState, RegionStep, GEOM_TOL,
};
use crate::report::{FitLog, RegionSnapshot, RunReport, StepLog};
use crate::{CertError, Result};

/// Seconds per unit of analyzer work. Velocities are computed against this
/// deterministic clock by default so runs are reproducible; wall-clock
/// velocities are available per configuration.
pub const WORK_SECONDS_PER_UNIT: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct SchedulerConfig {
    /// Precision floor: a failure at this diameter is the frontier.
    pub delta_min: f64,
    /// Window size; `m − 1` recent examples feed each prediction.
    pub m: usize,
    /// Diameters of the predetermined initialization steps (`m − 1` of them).
    pub init_diameters: Vec<f64>,
    /// Relative failure-shrink: each prediction is reduced by
    /// `max(shrink_factor·δ, delta_min)` before submission.
    pub shrink_factor: f64,
    /// Per-call analyzer budget in wall seconds; an over-budget call counts
    /// as a failed step.
    pub per_call_budget: f64,
    /// Whole-run wall-clock timeout in seconds.
    pub global_timeout: f64,
    /// Use measured wall time for velocities instead of the work clock.
    pub velocity_from_wall_clock: bool,
    /// Attach region snapshots to step logs.
    pub record_regions: bool,
    /// Engineering guard against runaway loops.
    pub max_steps: usize,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            delta_min: 1e-5,
            m: 3,
            init_diameters: vec![1e-4, 1e-3],
            shrink_factor: 0.05,
            per_call_budget: f64::INFINITY,
            global_timeout: f64::INFINITY,
            velocity_from_wall_clock: false,
            record_regions: false,
            max_steps: 1_000_000,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_min > 0.0) {
            return Err(CertError::Contract("delta_min must be positive".into()));
        }
        if self.m < 2 {
            return Err(CertError::Contract("m must be at least 2".into()));
        }
        if self.init_diameters.len() != self.m - 1 {
            return Err(CertError::Contract(format!(
                "init_diameters has {} entries, need m − 1 = {}",
                self.init_diameters.len(),
                self.m - 1
            )));
        }
        if !self.init_diameters.windows(2).all(|w| w[0] < w[1]) {
            return Err(CertError::Contract("init_diameters must be strictly increasing".into()));
        }
        if self.init_diameters[0] < self.delta_min {
            return Err(CertError::Contract("init diameters must not undercut delta_min".into()));
        }
        if !(self.shrink_factor > 0.0) {
            return Err(CertError::Contract("shrink_factor must be positive".into()));
        }
        Ok(())
    }

    /// Defaults adjusted for a chosen precision floor and window size: the
    /// initialization diameters spread one decade per slot starting at
    /// `max(1e-4, 10·delta_min)`.
    pub fn for_delta_min(delta_min: f64, m: usize) -> Self {
        let first = (10.0 * delta_min).max(1e-4);
        SchedulerConfig {
            delta_min,
            m,
            init_diameters: (0..m.saturating_sub(1))
                .map(|i| first * 10f64.powi(i as i32))
                .collect(),
            ..SchedulerConfig::default()
        }
    }

    /// Initialization diameters scaled down for small targets, floored at
    /// `delta_min`. The defaults assume targets around 1e-2 or larger.
    pub fn scaled_init_diameters(&self, target: f64) -> Vec<f64> {
        let scale = if target < 1e-2 { target / 1e-2 } else { 1.0 };
        self.init_diameters
            .iter()
            .map(|d| (d * scale).max(self.delta_min))
            .collect()
    }
}

/// Outcome of one analyzer call on a box.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    /// Abstract sensitivity of the box for the defended label.
    pub sensitivity: f64,
    pub verdict: Verdict,
    /// Deterministic charged seconds.
    pub charged_seconds: f64,
    /// Measured wall seconds.
    pub wall_seconds: f64,
}

impl StepOutcome {
    pub fn robust(&self) -> bool {
        matches!(self.verdict, Verdict::Robust)
    }
}

/// What the scheduler needs from an analysis backend.
pub trait RegionOracle {
    fn dims(&self) -> usize;
    fn targets(&self) -> &[f64];
    /// Concrete sensitivity of the perturbation at `offsets` (a single
    /// inference, no analysis).
    fn base_sensitivity(&mut self, offsets: &[f64]) -> Result<f64>;
    /// Analyze the offset box `∏ [lo_i, hi_i]`.
    fn analyze_box(&mut self, lo: &[f64], hi: &[f64]) -> Result<StepOutcome>;
}

/// The real backend: a network, a base image, and the box analyzer.
pub struct NetOracle<'a> {
    pub net: &'a Network,
    pub x: &'a [f64],
    pub features: &'a [FeatureSpec],
    pub label: usize,
    pub analyzer: Analyzer,
    targets: Vec<f64>,
}

impl<'a> NetOracle<'a> {
    pub fn new(net: &'a Network, x: &'a [f64], features: &'a [FeatureSpec], label: usize) -> Self {
        let targets = features.iter().map(|f| f.target_diameter).collect();
        NetOracle { net, x, features, label, analyzer: Analyzer::new(), targets }
    }
}

impl RegionOracle for NetOracle<'_> {
    fn dims(&self) -> usize {
        self.features.len()
    }

    fn targets(&self) -> &[f64] {
        &self.targets
    }

    fn base_sensitivity(&mut self, offsets: &[f64]) -> Result<f64> {
        let p = perturb(self.x, self.features, offsets)?;
        self.net.concrete_sensitivity(&p, self.label)
    }

    fn analyze_box(&mut self, lo: &[f64], hi: &[f64]) -> Result<StepOutcome> {
        let res = self.analyzer.analyze_feature_region(self.net, self.x, self.features, lo, hi, self.label)?;
        Ok(StepOutcome {
            sensitivity: res.sensitivity,
            verdict: res.verdict,
            charged_seconds: res.work as f64 * WORK_SECONDS_PER_UNIT,
            wall_seconds: res.elapsed,
        })
    }
}

/// Synthetic backend driven by closures: sensitivity and charged cost as
/// functions of the analyzed box. Failures report `Unknown` (no witness).
pub struct SyntheticOracle<S, C>
where
    S: FnMut(&[f64], &[f64]) -> f64,
    C: FnMut(&[f64], &[f64]) -> f64,
{
    pub targets: Vec<f64>,
    pub sensitivity: S,
    pub cost: C,
}

impl<S, C> RegionOracle for SyntheticOracle<S, C>
where
    S: FnMut(&[f64], &[f64]) -> f64,
    C: FnMut(&[f64], &[f64]) -> f64,
{
    fn dims(&self) -> usize {
        self.targets.len()
    }

    fn targets(&self) -> &[f64] {
        &self.targets
    }

    fn base_sensitivity(&mut self, offsets: &[f64]) -> Result<f64> {
        Ok((self.sensitivity)(offsets, offsets))
    }

    fn analyze_box(&mut self, lo: &[f64], hi: &[f64]) -> Result<StepOutcome> {
        let s = (self.sensitivity)(lo, hi);
        let cost = (self.cost)(lo, hi).max(1e-12);
        Ok(StepOutcome {
            sensitivity: s,
            verdict: if s > 0.0 { Verdict::Robust } else { Verdict::Unknown },
            charged_seconds: cost,
            wall_seconds: 0.0,
        })
    }
}

/// The three corrections applied to a predicted diameter.
///
/// 1. If any of the last `m` steps failed at a diameter smaller than the
///    prediction, fall back to the minimum of the last verified diameter (if
///    any) and the smallest recently failed one.
/// 2. Subtract the shrink constant `max(shrink_factor·δ, δ_MIN)`.
/// 3. Never go below `δ_MIN`, and never past the remaining distance.
///
/// A prediction the solver already capped at the remaining distance takes the
/// remainder exactly (the target is a hard stop, so the overshoot margin the
/// subtraction buys is pointless and would strand slivers below the target).
pub fn apply_corrections(
    predicted: f64,
    recent: &[StepRecord],
    last_verified: Option<f64>,
    remaining: f64,
    cfg: &SchedulerConfig,
) -> f64 {
    let mut delta = predicted;
    let recent_window = &recent[recent.len().saturating_sub(cfg.m)..];
    let failed_smaller: Option<f64> = recent_window
        .iter()
        .filter(|r| r.example.velocity == 0.0 && r.example.delta < predicted)
        .map(|r| r.example.delta)
        .fold(None, |acc, d| Some(acc.map_or(d, |a: f64| a.min(d))));
    if let Some(failed) = failed_smaller {
        delta = match last_verified {
            Some(v) => v.min(failed),
            None => failed,
        };
    } else if predicted >= remaining {
        return remaining;
    }
    delta -= (cfg.shrink_factor * delta).max(cfg.delta_min);
    delta = delta.max(cfg.delta_min);
    delta.min(remaining)
}

/// Internal driver shared by the single- and multi-feature entry points.
/// `multi` only changes example assembly (the extra closest example).
fn run_scheduler(oracle: &mut dyn RegionOracle, cfg: &SchedulerConfig, multi: bool) -> Result<(Vec<f64>, RunReport)> {
    cfg.validate()?;
    let t = oracle.dims();
    if t == 0 || t > 2 {
        return Err(CertError::Contract(format!("scheduler supports 1 or 2 features, got {t}")));
    }
    let targets = oracle.targets().to_vec();
    for (i, &d) in targets.iter().enumerate() {
        if !(d >= cfg.delta_min) {
            return Err(CertError::Contract(format!(
                "target diameter {d} of feature {i} is below delta_min"
            )));
        }
    }
    let mut report = RunReport::new("adaptive", t);
    let run_start = Instant::now();

    let min_target = targets.iter().copied().fold(f64::INFINITY, f64::min);
    let init_diameters = cfg.scaled_init_diameters(min_target);

    let mut history: Vec<StepRecord> = Vec::new();
    let mut region_steps: Vec<RegionStep> = Vec::new();
    let mut state = OffsetState::new(t);
    let mut ds = vec![0.0; t];
    let mut count_min = 0usize;
    let mut offsets = vec![0.0; t];
    let mut advancing = 0usize;
    let mut vertices: Vec<Vec<Vec<f64>>> = vec![Vec::new(); t];
    let mut last_verified: Option<f64> = None;
    let mut last_vel: Option<VelocityFit> = None;
    let mut overhead_clock = Instant::now();

    loop {
        // termination per the main loop guard
        let all_reached = ds.iter().zip(&targets).all(|(&d, &b)| d >= b - GEOM_TOL);
        if all_reached || count_min >= t {
            break;
        }
        if report.steps.len() >= cfg.max_steps {
            report.timed_out = true;
            break;
        }
        if run_start.elapsed().as_secs_f64() > cfg.global_timeout {
            report.timed_out = true;
            break;
        }

        let remaining = (targets[advancing] - offsets[advancing]).max(0.0);
        if remaining <= GEOM_TOL {
            // anchor sits on the target; treat like a floor failure to move on
            count_min += 1;
            let next = compute_next_offsets(&region_steps, &targets, &mut state, cfg.delta_min)?;
            offsets = next.offsets;
            advancing = next.advancing;
            continue;
        }

        let mut s0 = oracle.base_sensitivity(&offsets)?;

        // diameter: predetermined during initialization, predicted afterwards;
        // an anchor within the precision floor of its target closes the
        // feature with one sliver
        let (mut delta, predicted_raw, fits) = if remaining <= cfg.delta_min {
            (remaining, None, None)
        } else if history.len() < cfg.m - 1 {
            let idx = history.len();
            let mut d = init_diameters[idx];
            if let Some(last) = history.last() {
                if last.is_init && last.example.velocity == 0.0 {
                    // halve a failed initialization diameter and retry
                    d = (last.example.delta / 2.0).max(cfg.delta_min);
                }
            }
            (d.min(remaining).max(cfg.delta_min), None, None)
        } else {
            let assembled = assemble_examples(&history, s0, &offsets, advancing, cfg.m, multi);
            let sens_fit = fit_sensitivity(&assembled.sens_points)?;
            // the curvature β_V is unidentifiable from a single distinct
            // diameter; keep the previous estimate rather than defaulting to
            // a linear (maximally optimistic) velocity
            let mut distinct: Vec<f64> = assembled.vel_points.iter().map(|p| p.0).collect();
            distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
            distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            let vel_fit = match distinct.len() {
                0 => last_vel.unwrap_or(VelocityFit { alpha: 1.0, beta: 0.0, residual: 0.0 }),
                1 => {
                    let (d, v) = *assembled.vel_points.last().unwrap();
                    let beta = last_vel.map_or(0.0, |f| f.beta);
                    VelocityFit { alpha: v / (d * (-beta * d).exp()), beta, residual: 0.0 }
                }
                _ => fit_velocity(&assembled.vel_points)?,
            };
            last_vel = Some(vel_fit);
            let raw = solve_step_diameter(&sens_fit.model, vel_fit.beta, remaining, cfg.delta_min);
            let corrected = apply_corrections(raw, &history, last_verified, remaining, cfg);
            let fit_log = FitLog {
                sens: match sens_fit.model {
                    SensitivityModel::Exponential { alpha, beta, gamma } => (alpha, beta, gamma),
                    SensitivityModel::Linear { intercept, slope } => (intercept, slope, 0.0),
                },
                sens_linear: matches!(sens_fit.model, SensitivityModel::Linear { .. }),
                vel: (vel_fit.alpha, vel_fit.beta),
            };
            (corrected, Some(raw), Some(fit_log))
        };

        // close an uncovered seam below the new box (no-op for one feature)
        let refined = refine_offsets_for_prediction(&offsets, delta, &vertices, advancing);
        if refined != offsets {
            offsets = refined;
            s0 = oracle.base_sensitivity(&offsets)?;
            delta = delta.min((targets[advancing] - offsets[advancing]).max(cfg.delta_min));
        }

        // the cube is clamped at each feature's target: certification past a
        // target is never needed and the perturbation is only defined up to it
        let lo = offsets.clone();
        let hi: Vec<f64> = offsets
            .iter()
            .zip(&targets)
            .map(|(o, &b)| (o + delta).min(b))
            .collect();
        report.overhead_seconds += overhead_clock.elapsed().as_secs_f64();
        let outcome = oracle.analyze_box(&lo, &hi)?;
        overhead_clock = Instant::now();

        let mut robust = outcome.robust();
        if outcome.wall_seconds > cfg.per_call_budget {
            robust = false;
        }
        let charged = outcome.charged_seconds.max(1e-12);
        let clock = if cfg.velocity_from_wall_clock { outcome.wall_seconds.max(1e-12) } else { charged };
        let velocity = if robust { delta / clock } else { 0.0 };

        let is_init = history.len() < cfg.m - 1;
        report.analyzer_seconds += outcome.wall_seconds;
        report.charged_seconds += outcome.charged_seconds;
        if is_init {
            report.init_analyzer_seconds += outcome.wall_seconds;
        }
        if !robust {
            report.failures += 1;
        } else {
            last_verified = Some(delta);
        }

        history.push(StepRecord {
            example: StepExample {
                delta,
                sensitivity: outcome.sensitivity,
                velocity,
                base_sensitivity: s0,
                offsets: offsets.clone(),
            },
            advancing,
            is_init,
        });
        region_steps.push(RegionStep::cube(&offsets, delta, robust, advancing));

        let next = compute_next_offsets(&region_steps, &targets, &mut state, cfg.delta_min)?;
        let frontier = compute_certified_vertices(&region_steps, &targets)?;
        vertices = frontier.vertices.clone();
        update_diameters(&mut ds, &frontier.ds);
        count_min = if !robust && delta <= cfg.delta_min + GEOM_TOL { count_min + 1 } else { 0 };

        report.steps.push(StepLog {
            step: report.steps.len(),
            offsets: offsets.clone(),
            advancing,
            predicted_delta: predicted_raw,
            delta,
            verdict: format!("{:?}", if robust { Verdict::Robust } else { outcome.verdict }).to_lowercase(),
            sensitivity: outcome.sensitivity,
            base_sensitivity: s0,
            velocity,
            analyzer_seconds: outcome.wall_seconds,
            charged_seconds: outcome.charged_seconds,
            fits,
            region: cfg.record_regions.then(|| RegionSnapshot {
                ds: frontier.ds.clone(),
                vertices: frontier.vertices.clone(),
                cubes: region_steps.clone(),
            }),
        });

        offsets = next.offsets;
        advancing = next.advancing;
    }

    report.overhead_seconds += overhead_clock.elapsed().as_secs_f64();
    report.ds = ds.clone();
    Ok((ds, report))
}

/// Certify the largest diameter of a single feature neighborhood, up to the
/// precision floor. Returns the certified diameter and the run report.
pub fn verify_single_feature(oracle: &mut dyn RegionOracle, cfg: &SchedulerConfig) -> Result<(f64, RunReport)> {
    if oracle.dims() != 1 {
        return Err(CertError::Contract(format!(
            "single-feature verification got {} features",
            oracle.dims()
        )));
    }
    let (ds, report) = run_scheduler(oracle, cfg, false)?;
    Ok((ds[0], report))
}

/// Certify the maximal diameters of a one- or two-feature neighborhood.
pub fn verify_multi_feature(oracle: &mut dyn RegionOracle, cfg: &SchedulerConfig) -> Result<(Vec<f64>, RunReport)> {
    let multi = oracle.dims() > 1;
    run_scheduler(oracle, cfg, multi)
}

/// Convenience entry points over the real analyzer.
pub fn verify_single_feature_net(
    net: &Network,
    x: &[f64],
    feature: &FeatureSpec,
    cfg: &SchedulerConfig,
) -> Result<(f64, RunReport)> {
    let label = net.classify(x)?;
    let features = [feature.clone()];
    let mut oracle = NetOracle::new(net, x, &features, label);
    verify_single_feature(&mut oracle, cfg)
}

pub fn verify_multi_feature_net(
    net: &Network,
    x: &[f64],
    features: &[FeatureSpec],
    cfg: &SchedulerConfig,
) -> Result<(Vec<f64>, RunReport)> {
    let label = net.classify(x)?;
    let mut oracle = NetOracle::new(net, x, features, label);
    verify_multi_feature(&mut oracle, cfg)
}

/// Run the scheduler against synthetic sensitivity and cost oracles.
pub fn simulate_with_cost_model<S, C>(
    targets: Vec<f64>,
    sensitivity: S,
    cost: C,
    cfg: &SchedulerConfig,
) -> Result<(Vec<f64>, RunReport)>
where
    S: FnMut(&[f64], &[f64]) -> f64,
    C: FnMut(&[f64], &[f64]) -> f64,
{
    let mut oracle = SyntheticOracle { targets, sensitivity, cost };
    verify_multi_feature(&mut oracle, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SchedulerConfig {
        SchedulerConfig::default()
    }

    /// Synthetic single-feature problem with a sensitivity frontier at
    /// `frontier` and analyzer slack `loss·δ`: S(box) = frontier − hi − loss·δ.
    fn frontier_oracle(
        target: f64,
        frontier: f64,
        loss: f64,
        beta_cost: f64,
    ) -> SyntheticOracle<impl FnMut(&[f64], &[f64]) -> f64, impl FnMut(&[f64], &[f64]) -> f64> {
        SyntheticOracle {
            targets: vec![target],
            sensitivity: move |lo: &[f64], hi: &[f64]| frontier - hi[0] - loss * (hi[0] - lo[0]),
            cost: move |lo: &[f64], hi: &[f64]| 1e-3 * (beta_cost * (hi[0] - lo[0])).exp(),
        }
    }

    #[test]
    fn trivially_robust_finishes_within_init_budget() {
        // target below the first two (scaled) init diameters: ≤ m steps
        let mut oracle = SyntheticOracle {
            targets: vec![1e-4],
            sensitivity: |_: &[f64], _: &[f64]| 5.0,
            cost: |_: &[f64], _: &[f64]| 1e-3,
        };
        let (dx, rep) = verify_single_feature(&mut oracle, &cfg()).unwrap();
        assert!((dx - 1e-4).abs() < 1e-12);
        assert!(rep.step_count() <= 3, "{} steps", rep.step_count());
        assert_eq!(rep.failures, 0);
    }

    #[test]
    fn planted_frontier_reached_to_precision() {
        let c = cfg();
        let mut oracle = frontier_oracle(1.0, 0.35, 0.0, 0.0);
        let (dx, rep) = verify_single_feature(&mut oracle, &c).unwrap();
        assert!(dx <= 0.35 + 1e-9, "overshot: {dx}");
        assert!(dx >= 0.35 - 10.0 * c.delta_min, "undershot: {dx}");
        // the frontier step fails at the precision floor
        let last = rep.steps.last().unwrap();
        assert_eq!(last.verdict, "unknown");
        assert!(last.delta <= c.delta_min + 1e-12);
    }

    #[test]
    fn always_failing_oracle_terminates_with_zero() {
        let mut oracle = SyntheticOracle {
            targets: vec![0.5],
            sensitivity: |_: &[f64], _: &[f64]| -1.0,
            cost: |_: &[f64], _: &[f64]| 1e-3,
        };
        let (dx, rep) = verify_single_feature(&mut oracle, &cfg()).unwrap();
        assert_eq!(dx, 0.0);
        assert!(rep.failures > 0);
        // halving from the first init diameter to the floor is a short run
        assert!(rep.step_count() < 40, "{} steps", rep.step_count());
    }

    #[test]
    fn protocol_uses_init_diameters_then_prediction() {
        let c = cfg();
        let mut oracle = frontier_oracle(1.0, 0.9, 0.05, 2.0);
        let (_, rep) = verify_single_feature(&mut oracle, &c).unwrap();
        // first two steps are the scaled predetermined diameters
        assert!(rep.steps[0].predicted_delta.is_none());
        assert!(rep.steps[1].predicted_delta.is_none());
        assert_eq!(rep.steps[0].delta, 1e-4);
        assert_eq!(rep.steps[1].delta, 1e-3);
        // the third step is regression-predicted
        assert!(rep.steps[2].predicted_delta.is_some());
        assert!(rep.steps[2].delta > rep.steps[1].delta);
    }

    #[test]
    fn corrections_follow_spec_cases() {
        let c = cfg();
        let rec = |delta: f64, failed: bool| StepRecord {
            example: StepExample {
                delta,
                sensitivity: if failed { -0.1 } else { 0.1 },
                velocity: if failed { 0.0 } else { 1.0 },
                base_sensitivity: 0.5,
                offsets: vec![0.0],
            },
            advancing: 0,
            is_init: false,
        };
        // recent failure below the prediction pulls it down
        let hist = vec![rec(0.03, true)];
        let got = apply_corrections(0.05, &hist, Some(0.02), 1.0, &c);
        let base = 0.02f64;
        assert!((got - (base - (0.05 * base).max(c.delta_min))).abs() < 1e-12);
        // no failures: subtract the constant only
        let hist = vec![rec(0.03, false)];
        let got = apply_corrections(0.05, &hist, Some(0.03), 1.0, &c);
        assert!((got - (0.05 - 0.05 * 0.05)).abs() < 1e-12);
        // floor at delta_min
        let got = apply_corrections(1.2e-5, &[], None, 1.0, &c);
        assert_eq!(got, c.delta_min);
        // a prediction capped by the target takes the remainder exactly
        let got = apply_corrections(0.5, &[], None, 0.01, &c);
        assert_eq!(got, 0.01);
    }

    #[test]
    fn two_feature_robust_everywhere_returns_full_rectangle() {
        let c = cfg();
        let mut oracle = SyntheticOracle {
            targets: vec![0.04, 0.04],
            sensitivity: |_: &[f64], _: &[f64]| 3.0,
            cost: |_: &[f64], _: &[f64]| 1e-3,
        };
        let (ds, rep) = verify_multi_feature(&mut oracle, &c).unwrap();
        assert!((ds[0] - 0.04).abs() < 1e-9, "{ds:?}");
        assert!((ds[1] - 0.04).abs() < 1e-9, "{ds:?}");
        assert_eq!(rep.failures, 0);
    }

    #[test]
    fn two_feature_frontier_is_sound_and_covered() {
        // robust exactly when hi stays inside the wedge x + y < 0.5; a coarse
        // precision floor keeps the frontier crawl short
        let mut c = cfg();
        c.delta_min = 2e-3;
        c.init_diameters = vec![2e-3, 4e-3];
        let mut oracle = SyntheticOracle {
            targets: vec![0.4, 0.4],
            sensitivity: |_: &[f64], hi: &[f64]| 0.5 - hi[0] - hi[1],
            cost: |_: &[f64], _: &[f64]| 1e-3,
        };
        let (ds, _rep) = verify_multi_feature(&mut oracle, &c).unwrap();
        // certified rectangle must stay inside the wedge
        assert!(ds[0] + ds[1] <= 0.5 + 1e-9, "{ds:?}");
        assert!(ds[0] > 0.0 && ds[1] > 0.0, "{ds:?}");
    }

    #[test]
    fn degenerate_multi_equals_single() {
        // identical analyze-call sequences on shared synthetic problems
        for seed in 0..20u64 {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let frontier: f64 = rng.gen_range(0.05..0.5);
            let loss: f64 = rng.gen_range(0.0..0.5);
            let beta: f64 = rng.gen_range(0.0..20.0);
            let target: f64 = rng.gen_range(0.3..1.0);
            let c = cfg();
            let mut o1 = frontier_oracle(target, frontier, loss, beta);
            let (d1, r1) = verify_single_feature(&mut o1, &c).unwrap();
            let mut o2 = frontier_oracle(target, frontier, loss, beta);
            let (d2, r2) = verify_multi_feature(&mut o2, &c).unwrap();
            assert_eq!(d1, d2[0], "seed {seed}");
            assert_eq!(r1.step_count(), r2.step_count(), "seed {seed}");
            for (a, b) in r1.steps.iter().zip(&r2.steps) {
                assert_eq!(a.offsets, b.offsets, "seed {seed}");
                assert_eq!(a.delta, b.delta, "seed {seed}");
                assert_eq!(a.verdict, b.verdict, "seed {seed}");
            }
        }
    }

    #[test]
    fn termination_bound_on_successes() {
        let c = cfg();
        let mut oracle = frontier_oracle(0.3, 0.25, 0.1, 5.0);
        let (_, rep) = verify_single_feature(&mut oracle, &c).unwrap();
        let successes = rep.steps.iter().filter(|s| s.verdict == "robust").count();
        assert!((successes as f64) <= 0.3 / c.delta_min);
        // consecutive failure runs are finite: every failure shrinks delta
        let mut prev_failed: Option<f64> = None;
        for s in &rep.steps {
            if s.verdict != "robust" {
                if let Some(p) = prev_failed {
                    assert!(s.delta < p + 1e-15, "failure did not shrink: {} after {}", s.delta, p);
                }
                prev_failed = Some(s.delta);
            } else {
                prev_failed = None;
            }
        }
    }

    #[test]
    fn analyzed_cubes_respect_floor_and_targets() {
        let c = cfg();
        let mut oracle = frontier_oracle(0.2, 0.15, 0.2, 10.0);
        let (_, rep) = verify_single_feature(&mut oracle, &c).unwrap();
        for s in &rep.steps {
            assert!(
                s.delta >= c.delta_min - 1e-15
                    || (s.offsets[0] + s.delta - 0.2).abs() < 1e-9,
                "delta {} below floor",
                s.delta
            );
            assert!(s.offsets[0] >= 0.0 && s.offsets[0] < 0.2);
        }
    }

    #[test]
    fn global_timeout_flags_report() {
        let mut c = cfg();
        c.global_timeout = 0.0;
        let mut oracle = frontier_oracle(1.0, 0.9, 0.0, 0.0);
        let (_, rep) = verify_single_feature(&mut oracle, &c).unwrap();
        assert!(rep.timed_out);
    }
}
