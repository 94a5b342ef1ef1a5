//! Run reports: per-step logs, totals, and the summary CSV schema.

use serde::Serialize;
use std::io::Write;
use std::path::Path;

use crate::region::RegionStep;
use crate::Result;

/// Fitted model parameters recorded per predicted step.
#[derive(Debug, Clone, Serialize)]
pub struct FitLog {
    /// `(α_S, β_S, γ_S)` or, for the linear fallback, `(intercept, slope, 0)`.
    pub sens: (f64, f64, f64),
    pub sens_linear: bool,
    /// `(α_V, β_V)`.
    pub vel: (f64, f64),
}

/// Snapshot of the certified region after a step.
#[derive(Debug, Clone, Serialize)]
pub struct RegionSnapshot {
    pub ds: Vec<f64>,
    pub vertices: Vec<Vec<Vec<f64>>>,
    pub cubes: Vec<RegionStep>,
}

/// One verification step, one JSON line in the step log.
#[derive(Debug, Clone, Serialize)]
pub struct StepLog {
    pub step: usize,
    pub offsets: Vec<f64>,
    pub advancing: usize,
    /// Raw prediction before corrections; absent for initialization steps.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_delta: Option<f64>,
    /// Diameter actually submitted to the analyzer.
    pub delta: f64,
    pub verdict: String,
    pub sensitivity: f64,
    pub base_sensitivity: f64,
    pub velocity: f64,
    /// Wall-clock seconds of the analyzer call.
    pub analyzer_seconds: f64,
    /// Deterministic charged seconds (work-derived or synthetic cost).
    pub charged_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fits: Option<FitLog>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionSnapshot>,
}

/// Full record of one strategy run.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub strategy: String,
    pub ds: Vec<f64>,
    pub steps: Vec<StepLog>,
    pub failures: usize,
    /// Wall-clock analyzer time, all calls.
    pub analyzer_seconds: f64,
    /// Deterministic charged analyzer time.
    pub charged_seconds: f64,
    /// Wall-clock time outside the analyzer (inference, fitting, geometry).
    pub overhead_seconds: f64,
    /// Wall-clock analyzer time of the initialization steps.
    pub init_analyzer_seconds: f64,
    pub timed_out: bool,
}

impl RunReport {
    pub fn new(strategy: &str, dims: usize) -> Self {
        RunReport {
            strategy: strategy.to_string(),
            ds: vec![0.0; dims],
            steps: Vec::new(),
            failures: 0,
            analyzer_seconds: 0.0,
            charged_seconds: 0.0,
            overhead_seconds: 0.0,
            init_analyzer_seconds: 0.0,
            timed_out: false,
        }
    }

    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    /// One JSON object per step, one per line.
    pub fn write_step_log(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        for s in &self.steps {
            serde_json::to_writer(&mut f, s)?;
            writeln!(f)?;
        }
        Ok(())
    }

    pub fn summary(&self) -> StrategyResult {
        StrategyResult {
            ds: self.ds.clone(),
            steps: self.step_count(),
            failures: self.failures,
            analyzer_seconds: self.analyzer_seconds,
            charged_seconds: self.charged_seconds,
            timed_out: self.timed_out,
        }
    }
}

/// Compact outcome of a splitting strategy, for comparisons.
#[derive(Debug, Clone, Serialize)]
pub struct StrategyResult {
    pub ds: Vec<f64>,
    pub steps: usize,
    pub failures: usize,
    pub analyzer_seconds: f64,
    pub charged_seconds: f64,
    pub timed_out: bool,
}

/// One row of the summary CSV. Column order is fixed:
/// `model,input,strategy,features,delta_bar,delta_adv,ds,pct_of_adv,steps,failures,analyzer_seconds,overhead_seconds,exit`
/// Multi-feature fields join per-feature values with `;`.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub model: String,
    pub input: String,
    pub strategy: String,
    pub features: Vec<String>,
    pub delta_bar: Vec<f64>,
    pub delta_adv: Vec<f64>,
    pub ds: Vec<f64>,
    pub steps: usize,
    pub failures: usize,
    pub analyzer_seconds: f64,
    pub overhead_seconds: f64,
    pub exit: i32,
}

pub const SUMMARY_HEADER: &str =
    "model,input,strategy,features,delta_bar,delta_adv,ds,pct_of_adv,steps,failures,analyzer_seconds,overhead_seconds,exit";

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn join_nums(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";")
}

impl SummaryRow {
    pub fn pct_of_adv(&self) -> Vec<f64> {
        self.ds
            .iter()
            .zip(&self.delta_adv)
            .map(|(&d, &a)| if a.is_finite() && a > 0.0 { 100.0 * d / a } else { f64::NAN })
            .collect()
    }

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{:.6},{:.6},{}",
            csv_field(&self.model),
            csv_field(&self.input),
            csv_field(&self.strategy),
            csv_field(&self.features.join(";")),
            join_nums(&self.delta_bar),
            join_nums(&self.delta_adv),
            join_nums(&self.ds),
            join_nums(&self.pct_of_adv()),
            self.steps,
            self.failures,
            self.analyzer_seconds,
            self.overhead_seconds,
            self.exit,
        )
    }
}

/// Append rows to a CSV file, writing the header when the file is new.
pub fn append_summary_rows(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let path = path.as_ref();
    let new = !path.exists();
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    if new {
        writeln!(f, "{SUMMARY_HEADER}")?;
    }
    for r in rows {
        writeln!(f, "{}", r.to_csv_line())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_row_shape() {
        let row = SummaryRow {
            model: "m.json".into(),
            input: "x.json".into(),
            strategy: "adaptive".into(),
            features: vec!["brightness".into(), "contrast".into()],
            delta_bar: vec![0.1, 0.1],
            delta_adv: vec![0.2, f64::INFINITY],
            ds: vec![0.1, 0.05],
            steps: 12,
            failures: 1,
            analyzer_seconds: 0.5,
            overhead_seconds: 0.1,
            exit: 0,
        };
        let line = row.to_csv_line();
        assert_eq!(line.split(',').count(), SUMMARY_HEADER.split(',').count());
        assert!(line.contains("brightness;contrast"));
        let pct = row.pct_of_adv();
        assert!((pct[0] - 50.0).abs() < 1e-12);
        assert!(pct[1].is_nan());
    }

    #[test]
    fn step_log_is_json_lines() {
        let mut rep = RunReport::new("adaptive", 1);
        rep.steps.push(StepLog {
            step: 0,
            offsets: vec![0.0],
            advancing: 0,
            predicted_delta: None,
            delta: 1e-4,
            verdict: "robust".into(),
            sensitivity: 1.0,
            base_sensitivity: 1.1,
            velocity: 10.0,
            analyzer_seconds: 0.01,
            charged_seconds: 0.01,
            fits: None,
            region: None,
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("steps.jsonl");
        rep.write_step_log(&path).unwrap();
        let data = std::fs::read_to_string(&path).unwrap();
        assert_eq!(data.lines().count(), 1);
        let v: serde_json::Value = serde_json::from_str(data.lines().next().unwrap()).unwrap();
        assert_eq!(v["verdict"], "robust");
    }
}
