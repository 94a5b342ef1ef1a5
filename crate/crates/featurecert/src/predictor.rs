//! Parametric models of the analyzer's behavior and the step-size solver.
//!
//! Sensitivity follows `S(δ) = α + β·exp(γ·δ)` and proof velocity follows
//! `V(δ) = α_V·δ·exp(−β_V·δ)` with `β_V ≥ 0`. Each step fits both models to a
//! handful of examples from previous steps and picks the next diameter by
//! maximizing predicted velocity subject to predicted sensitivity staying
//! positive.

use crate::{CertError, Result};

/// One verification step's regression datum.
#[derive(Debug, Clone)]
pub struct StepExample {
    /// Diameter submitted to the analyzer.
    pub delta: f64,
    /// Abstract sensitivity the analyzer reported for the step's cube.
    pub sensitivity: f64,
    /// Certified diameter per second; zero when the step failed.
    pub velocity: f64,
    /// Concrete sensitivity of the step's base point.
    pub base_sensitivity: f64,
    /// Offsets of the cube's anchor.
    pub offsets: Vec<f64>,
}

/// A step example plus scheduling metadata.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub example: StepExample,
    /// Which feature this step was advancing.
    pub advancing: usize,
    /// Whether this was one of the predetermined initialization steps.
    pub is_init: bool,
}

/// Fitted sensitivity curve. The linear form is the `γ → 0` limit used when
/// the exponential is not identifiable from the data.
#[derive(Debug, Clone, Copy)]
pub enum SensitivityModel {
    Exponential { alpha: f64, beta: f64, gamma: f64 },
    Linear { intercept: f64, slope: f64 },
}

impl SensitivityModel {
    pub fn eval(&self, d: f64) -> f64 {
        match *self {
            SensitivityModel::Exponential { alpha, beta, gamma } => alpha + beta * exp_capped(gamma * d),
            SensitivityModel::Linear { intercept, slope } => intercept + slope * d,
        }
    }

    /// Strictly decreasing in δ?
    pub fn is_decreasing(&self) -> bool {
        match *self {
            SensitivityModel::Exponential { beta, gamma, .. } => beta * gamma < 0.0,
            SensitivityModel::Linear { slope, .. } => slope < 0.0,
        }
    }

    /// The positive zero crossing, when one exists.
    pub fn positive_root(&self) -> Option<f64> {
        match *self {
            SensitivityModel::Exponential { alpha, beta, gamma } => {
                if beta == 0.0 || gamma == 0.0 {
                    return None;
                }
                let ratio = -alpha / beta;
                if ratio <= 0.0 {
                    return None;
                }
                let root = ratio.ln() / gamma;
                (root > 0.0).then_some(root)
            }
            SensitivityModel::Linear { intercept, slope } => {
                if slope == 0.0 {
                    return None;
                }
                let root = -intercept / slope;
                (root > 0.0).then_some(root)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SensitivityFit {
    pub model: SensitivityModel,
    /// Sum of squared errors over the fit points.
    pub residual: f64,
    /// True when the exponential was unidentifiable and a fallback was used.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct VelocityFit {
    pub alpha: f64,
    /// Clamped to be nonnegative.
    pub beta: f64,
    pub residual: f64,
}

impl VelocityFit {
    pub fn eval(&self, d: f64) -> f64 {
        self.alpha * d * exp_capped(-self.beta * d)
    }
}

fn exp_capped(x: f64) -> f64 {
    x.clamp(-700.0, 700.0).exp()
}

fn sens_residual(points: &[(f64, f64)], model: &SensitivityModel) -> f64 {
    points.iter().map(|&(d, s)| (model.eval(d) - s).powi(2)).sum()
}

/// Least-squares line through the points.
fn fit_line(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return (sy / n, 0.0);
    }
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / n;
    (intercept, slope)
}

/// For fixed γ, the best (α, β) is a 2×2 linear least-squares problem.
fn profile_alpha_beta(points: &[(f64, f64)], gamma: f64) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    let se: f64 = points.iter().map(|p| exp_capped(gamma * p.0)).sum();
    let see: f64 = points.iter().map(|p| exp_capped(gamma * p.0).powi(2)).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sey: f64 = points.iter().map(|p| exp_capped(gamma * p.0) * p.1).sum();
    let det = n * see - se * se;
    if det.abs() < 1e-12 * (n * see).max(1.0) {
        return None;
    }
    let beta = (n * sey - se * sy) / det;
    let alpha = (sy - beta * se) / n;
    Some((alpha, beta))
}

/// Damped Gauss–Newton on (α, β, γ), capped at 200 iterations.
fn refine_exponential(points: &[(f64, f64)], mut alpha: f64, mut beta: f64, mut gamma: f64) -> (f64, f64, f64) {
    let mut lambda = 1e-3;
    let mut best = (alpha, beta, gamma);
    let mut best_res = sens_residual(points, &SensitivityModel::Exponential { alpha, beta, gamma });
    for _ in 0..200 {
        // normal equations J^T J + λ diag, J^T r for r_i = model - s_i
        let mut jtj = [[0.0f64; 3]; 3];
        let mut jtr = [0.0f64; 3];
        for &(d, s) in points {
            let e = exp_capped(gamma * d);
            let r = alpha + beta * e - s;
            let j = [1.0, e, beta * d * e];
            for a in 0..3 {
                for b in 0..3 {
                    jtj[a][b] += j[a] * j[b];
                }
                jtr[a] += j[a] * r;
            }
        }
        let mut m = jtj;
        for a in 0..3 {
            m[a][a] += lambda * (1.0 + jtj[a][a]);
        }
        let Some(step) = solve3(&m, &jtr) else { break };
        let cand = (alpha - step[0], beta - step[1], gamma - step[2]);
        let res = sens_residual(
            points,
            &SensitivityModel::Exponential { alpha: cand.0, beta: cand.1, gamma: cand.2 },
        );
        if res.is_finite() && res < best_res {
            best_res = res;
            best = cand;
            (alpha, beta, gamma) = cand;
            lambda = (lambda * 0.3).max(1e-12);
            let norm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-10 || best_res < 1e-24 {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    best
}

fn solve3(m: &[[f64; 3]; 3], rhs: &[f64; 3]) -> Option<[f64; 3]> {
    let mut a = *m;
    let mut b = *rhs;
    for col in 0..3 {
        let mut piv = col;
        for r in col + 1..3 {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..3 {
            if r == col {
                continue;
            }
            let f = a[r][col] / a[col][col];
            for c in col..3 {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    Some([b[0] / a[0][0], b[1] / a[1][1], b[2] / a[2][2]])
}

/// Exact 3-point interpolation: the increment ratio pins γ by bisection, then
/// (α, β) follow. Returns None when the increments are not compatible with a
/// monotone exponential.
fn interpolate_three(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let (d0, s0) = p[0];
    let (d1, s1) = p[1];
    let (d2, s2) = p[2];
    let lo_inc = s1 - s0;
    let hi_inc = s2 - s1;
    if lo_inc.abs() < 1e-14 || hi_inc.abs() < 1e-14 {
        return None;
    }
    let target = hi_inc / lo_inc;
    if target <= 0.0 {
        return None;
    }
    let ratio = |g: f64| {
        (exp_capped(g * d2) - exp_capped(g * d1)) / (exp_capped(g * d1) - exp_capped(g * d0))
    };
    // ratio(γ) is increasing in γ with limit (d2−d1)/(d1−d0) at γ = 0
    let span = d2 - d0;
    let (mut lo, mut hi) = (-600.0 / span, 600.0 / span);
    if ratio(lo) > target || ratio(hi) < target {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let gamma = 0.5 * (lo + hi);
    if gamma.abs() * span < 1e-7 {
        // numerically a straight line
        return None;
    }
    let beta = lo_inc / (exp_capped(gamma * d1) - exp_capped(gamma * d0));
    let alpha = s0 - beta * exp_capped(gamma * d0);
    if alpha.is_finite() && beta.is_finite() {
        Some((alpha, beta, gamma))
    } else {
        None
    }
}

/// Fit `S(δ) = α + β·exp(γ·δ)` to at least three points.
///
/// Three points with distinct δ are interpolated exactly when the data admits
/// it; otherwise (and for four or more points) a multi-start damped
/// Gauss–Newton minimizes the squared error. Data indistinguishable from a
/// line falls back to the linear model.
pub fn fit_sensitivity(points: &[(f64, f64)]) -> Result<SensitivityFit> {
    if points.len() < 3 {
        return Err(CertError::Contract(format!(
            "sensitivity fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    if distinct.len() < 3 {
        // not enough information for three parameters
        let (intercept, slope) = fit_line(points);
        let model = SensitivityModel::Linear { intercept, slope };
        return Ok(SensitivityFit { residual: sens_residual(points, &model), model, degenerate: true });
    }

    let smin = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let smax = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if smax - smin < 1e-12 * (1.0 + smax.abs()) {
        // horizontal line: α carries the level, β = 0
        let level = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
        let model = SensitivityModel::Exponential { alpha: level, beta: 0.0, gamma: 0.0 };
        return Ok(SensitivityFit { residual: sens_residual(points, &model), model, degenerate: false });
    }

    if points.len() == 3 {
        if let Some((alpha, beta, gamma)) = interpolate_three(points) {
            let model = SensitivityModel::Exponential { alpha, beta, gamma };
            return Ok(SensitivityFit { residual: sens_residual(points, &model), model, degenerate: false });
        }
    }

    // multi-start profiled least squares + Gauss–Newton polish
    let span: f64 = distinct.last().unwrap() - distinct.first().unwrap();
    let mut best: Option<(f64, (f64, f64, f64))> = None;
    for &g0 in &[-100.0, -10.0, -1.0, -0.1, 0.1, 1.0, 10.0, 100.0] {
        let gamma0 = g0 / span.max(1e-12);
        let Some((a0, b0)) = profile_alpha_beta(points, gamma0) else { continue };
        let (a, b, g) = refine_exponential(points, a0, b0, gamma0);
        let res = sens_residual(points, &SensitivityModel::Exponential { alpha: a, beta: b, gamma: g });
        if res.is_finite() && best.as_ref().is_none_or(|(r, _)| res < *r) {
            best = Some((res, (a, b, g)));
        }
        if res < 1e-20 {
            break;
        }
    }
    let (intercept, slope) = fit_line(points);
    let line = SensitivityModel::Linear { intercept, slope };
    let line_res = sens_residual(points, &line);
    match best {
        Some((res, (alpha, beta, gamma))) if res <= line_res + 1e-18 => Ok(SensitivityFit {
            model: SensitivityModel::Exponential { alpha, beta, gamma },
            residual: res,
            degenerate: false,
        }),
        _ => Ok(SensitivityFit { model: line, residual: line_res, degenerate: true }),
    }
}

/// Fit `V(δ) = α·δ·exp(−β·δ)` to positive-velocity points; `β` clamps to 0.
pub fn fit_velocity(points: &[(f64, f64)]) -> Result<VelocityFit> {
    if points.len() < 2 {
        return Err(CertError::Contract(format!(
            "velocity fit needs at least 2 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(d, v)| d <= 0.0 || v <= 0.0) {
        return Err(CertError::Contract("velocity fit needs positive diameters and velocities".into()));
    }
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let residual_of = |alpha: f64, beta: f64| -> f64 {
        points.iter().map(|&(d, v)| (alpha * d * exp_capped(-beta * d) - v).powi(2)).sum()
    };
    let through_origin = || {
        let num: f64 = points.iter().map(|&(d, v)| d * v).sum();
        let den: f64 = points.iter().map(|&(d, _)| d * d).sum();
        num / den
    };
    if distinct.len() < 2 {
        let alpha = through_origin();
        return Ok(VelocityFit { alpha, beta: 0.0, residual: residual_of(alpha, 0.0) });
    }

    // log-linear: ln(V/δ) = ln α − β δ
    let logs: Vec<(f64, f64)> = points.iter().map(|&(d, v)| (d, (v / d).ln())).collect();
    let (intercept, slope) = fit_line(&logs);
    let (mut alpha, mut beta) = (intercept.exp(), -slope);

    // polish in V space
    let mut lambda = 1e-3;
    for _ in 0..100 {
        let mut jtj = [[0.0f64; 2]; 2];
        let mut jtr = [0.0f64; 2];
        for &(d, v) in points {
            let e = exp_capped(-beta * d);
            let r = alpha * d * e - v;
            let j = [d * e, -alpha * d * d * e];
            for a in 0..2 {
                for b in 0..2 {
                    jtj[a][b] += j[a] * j[b];
                }
                jtr[a] += j[a] * r;
            }
        }
        let det = (jtj[0][0] + lambda) * (jtj[1][1] + lambda) - jtj[0][1] * jtj[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let da = ((jtj[1][1] + lambda) * jtr[0] - jtj[0][1] * jtr[1]) / det;
        let db = (-jtj[1][0] * jtr[0] + (jtj[0][0] + lambda) * jtr[1]) / det;
        let cand = (alpha - da, beta - db);
        if residual_of(cand.0, cand.1) < residual_of(alpha, beta) {
            (alpha, beta) = cand;
            lambda = (lambda * 0.3).max(1e-12);
            if da.abs() + db.abs() < 1e-12 {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    if beta < 0.0 {
        beta = 0.0;
        alpha = through_origin();
    }
    Ok(VelocityFit { alpha, beta, residual: residual_of(alpha, beta) })
}

/// Diameter of the next step: maximize predicted velocity subject to the
/// predicted sensitivity staying strictly positive, clamped to
/// `[δ_MIN, remaining]`. The sensitivity zero crossing is pulled inward by
/// `max(10⁻³·δ_S, δ_MIN)` so the chosen point is strictly feasible.
///
/// The model is monotone in δ, so the feasible set is one interval: it ends at
/// the root when sensitivity decreases, starts past it when sensitivity grows,
/// and is the whole range when no positive root interferes. Infeasible
/// everywhere returns `δ_MIN` and leaves the failure handling to the caller.
pub fn solve_step_diameter(
    sens: &SensitivityModel,
    velocity_beta: f64,
    remaining: f64,
    delta_min: f64,
) -> f64 {
    debug_assert!(velocity_beta >= 0.0);
    debug_assert!(remaining >= delta_min);
    let mut feas_lo = delta_min;
    let mut feas_hi = remaining;
    match sens.positive_root() {
        Some(root) => {
            let shift = (1e-3 * root).max(delta_min);
            if sens.is_decreasing() {
                if sens.eval(delta_min) <= 0.0 {
                    return delta_min;
                }
                feas_hi = (root - shift).min(remaining);
            } else if sens.eval(delta_min) <= 0.0 {
                // positive only past the root
                if sens.eval(remaining) <= 0.0 {
                    return delta_min;
                }
                feas_lo = (root + shift).min(remaining);
            }
        }
        None => {
            if sens.eval(delta_min) <= 0.0 && sens.eval(remaining) <= 0.0 {
                return delta_min;
            }
        }
    }
    if feas_hi < feas_lo {
        feas_hi = feas_lo;
    }
    // V(δ) = α δ e^{−βδ} is unimodal with its peak at 1/β (or at +∞ for β = 0)
    let v_peak = if velocity_beta > 0.0 { 1.0 / velocity_beta } else { f64::INFINITY };
    v_peak.clamp(feas_lo, feas_hi).max(delta_min)
}

/// Regression point sets assembled from the step history.
#[derive(Debug, Clone, Default)]
pub struct Assembled {
    pub sens_points: Vec<(f64, f64)>,
    pub vel_points: Vec<(f64, f64)>,
}

/// Build the regression examples for the next step.
///
/// The first sensitivity point is `(0, S₀)` for free from concrete inference.
/// The last `m − 1` steps supply the rest, each sensitivity aligned by
/// `S₀_now − S₀_then`. In multi-feature mode only steps advancing the same
/// feature count as recent; gaps are filled with the examples closest in
/// offset space, and one extra closest example is always added.
pub fn assemble_examples(
    history: &[StepRecord],
    s0_now: f64,
    current_offsets: &[f64],
    advancing: usize,
    m: usize,
    multi: bool,
) -> Assembled {
    let mut selected: Vec<usize> = Vec::new();
    if multi {
        for (i, rec) in history.iter().enumerate().rev() {
            if selected.len() >= m - 1 {
                break;
            }
            if rec.advancing == advancing {
                selected.push(i);
            }
        }
        let dist = |i: usize| -> f64 {
            history[i]
                .example
                .offsets
                .iter()
                .zip(current_offsets)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        };
        let mut by_distance: Vec<usize> = (0..history.len()).collect();
        by_distance.sort_by(|&a, &b| dist(a).partial_cmp(&dist(b)).unwrap().then(b.cmp(&a)));
        // fill missing recents, then one extra closest example
        let want = m; // m−1 recents plus the closest
        for &i in &by_distance {
            if selected.len() >= want {
                break;
            }
            if !selected.contains(&i) {
                selected.push(i);
            }
        }
    } else {
        let take = (m - 1).min(history.len());
        selected.extend(history.len() - take..history.len());
    }

    let mut out = Assembled::default();
    out.sens_points.push((0.0, s0_now));
    for &i in &selected {
        let e = &history[i].example;
        out.sens_points.push((e.delta, e.sensitivity + (s0_now - e.base_sensitivity)));
        if e.velocity > 0.0 {
            out.vel_points.push((e.delta, e.velocity));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exp_points(alpha: f64, beta: f64, gamma: f64, ds: &[f64]) -> Vec<(f64, f64)> {
        ds.iter().map(|&d| (d, alpha + beta * (gamma * d).exp())).collect()
    }

    #[test]
    fn recovers_exact_exponential() {
        let pts = exp_points(2.0, -1.0, 5.0, &[0.0, 0.1, 0.2]);
        let fit = fit_sensitivity(&pts).unwrap();
        let SensitivityModel::Exponential { alpha, beta, gamma } = fit.model else {
            panic!("expected exponential fit");
        };
        assert!((alpha - 2.0).abs() / 2.0 < 0.01, "alpha {alpha}");
        assert!((beta + 1.0).abs() < 0.01, "beta {beta}");
        assert!((gamma - 5.0).abs() / 5.0 < 0.01, "gamma {gamma}");
    }

    #[test]
    fn horizontal_line_becomes_constant() {
        let pts = vec![(0.0, 1.7), (0.05, 1.7), (0.2, 1.7)];
        let fit = fit_sensitivity(&pts).unwrap();
        let SensitivityModel::Exponential { alpha, beta, .. } = fit.model else {
            panic!("expected exponential form");
        };
        assert!((alpha - 1.7).abs() < 1e-9);
        assert_eq!(beta, 0.0);
        assert!((fit.model.eval(0.123) - 1.7).abs() < 1e-9);
    }

    #[test]
    fn piecewise_linear_data_fits_within_tolerance() {
        // samples from the two-piece curve {2.8 on [0,1), 3.8−δ on [1,2)}
        let pts = vec![(0.0, 2.8), (0.5, 2.8), (1.2, 2.6), (1.8, 2.0)];
        let fit = fit_sensitivity(&pts).unwrap();
        for &(d, s) in &pts {
            assert!((fit.model.eval(d) - s).abs() < 0.15, "off by {} at {d}", (fit.model.eval(d) - s).abs());
        }
    }

    #[test]
    fn duplicate_deltas_fall_back_to_line() {
        let pts = vec![(0.1, 1.0), (0.1, 1.1), (0.2, 0.8)];
        let fit = fit_sensitivity(&pts).unwrap();
        assert!(fit.degenerate);
        assert!(matches!(fit.model, SensitivityModel::Linear { .. }));
    }

    #[test]
    fn noiseless_recovery_over_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut failures = 0;
        for _ in 0..200 {
            let alpha: f64 = rng.gen_range(-3.0..3.0);
            let beta: f64 = rng.gen_range(0.3..3.0) * if rng.gen_bool(0.5) { -1.0 } else { 1.0 };
            let gamma: f64 = rng.gen_range(0.5..40.0) * if rng.gen_bool(0.5) { -1.0 } else { 1.0 };
            let ds = [0.0, 0.04, 0.11, 0.2];
            let pts = exp_points(alpha, beta, gamma, &ds);
            let fit = fit_sensitivity(&pts).unwrap();
            // parameter recovery can be ill-posed when γ·δ is tiny; check the curve
            let ok = ds.iter().all(|&d| {
                let want = alpha + beta * (gamma * d).exp();
                (fit.model.eval(d) - want).abs() <= 0.01 * (1.0 + want.abs())
            });
            if !ok {
                failures += 1;
            }
        }
        assert_eq!(failures, 0);
    }

    #[test]
    fn velocity_exact_recovery() {
        let pts: Vec<(f64, f64)> = [0.02, 0.07, 0.15]
            .iter()
            .map(|&d| (d, 10.0 * d * (-3.0f64 * d).exp()))
            .collect();
        let fit = fit_velocity(&pts).unwrap();
        assert!((fit.alpha - 10.0).abs() / 10.0 < 0.01, "alpha {}", fit.alpha);
        assert!((fit.beta - 3.0).abs() / 3.0 < 0.01, "beta {}", fit.beta);
    }

    #[test]
    fn velocity_linear_two_points() {
        let pts = vec![(0.1, 0.5), (0.2, 1.0)];
        let fit = fit_velocity(&pts).unwrap();
        assert!(fit.beta.abs() < 1e-9);
        assert!((fit.alpha - 5.0).abs() < 1e-9);
    }

    #[test]
    fn velocity_noisy_recovery_within_ten_percent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut alpha_errs = Vec::new();
        let mut beta_errs = Vec::new();
        for _ in 0..100 {
            let pts: Vec<(f64, f64)> = [0.02, 0.05, 0.1, 0.18]
                .iter()
                .map(|&d| {
                    let noise = 1.0 + 0.01 * rng.gen_range(-1.0..1.0);
                    (d, 10.0 * d * (-3.0f64 * d).exp() * noise)
                })
                .collect();
            let fit = fit_velocity(&pts).unwrap();
            alpha_errs.push(((fit.alpha - 10.0) / 10.0).abs());
            beta_errs.push(((fit.beta - 3.0) / 3.0).abs());
        }
        alpha_errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        beta_errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(alpha_errs[50] < 0.10, "median alpha error {}", alpha_errs[50]);
        assert!(beta_errs[50] < 0.10, "median beta error {}", beta_errs[50]);
    }

    #[test]
    fn velocity_rejects_nonpositive() {
        assert!(fit_velocity(&[(0.1, 0.0), (0.2, 0.0)]).is_err());
        assert!(fit_velocity(&[(0.1, 1.0)]).is_err());
    }

    #[test]
    fn solver_spec_cases() {
        let dmin = 1e-5;
        // unconstrained optimum feasible
        let s = SensitivityModel::Exponential { alpha: 2.0, beta: -1.0, gamma: 1.0 };
        assert!((solve_step_diameter(&s, 2.0, 10.0, dmin) - 0.5).abs() < 1e-12);
        // optimum infeasible: boundary minus the inward shift
        let root = 2.0f64.ln();
        let want = root - (1e-3 * root).max(dmin);
        assert!((solve_step_diameter(&s, 1.0, 10.0, dmin) - want).abs() < 1e-12);
        // linear velocity and globally positive sensitivity: take everything
        let s_pos = SensitivityModel::Exponential { alpha: 2.0, beta: 1.0, gamma: 1.0 };
        assert_eq!(solve_step_diameter(&s_pos, 0.0, 0.7, dmin), 0.7);
        // infeasible everywhere: precision floor
        let s_neg = SensitivityModel::Exponential { alpha: -1.0, beta: -1.0, gamma: 1.0 };
        assert_eq!(solve_step_diameter(&s_neg, 0.0, 0.7, dmin), dmin);
    }

    #[test]
    fn solver_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dmin = 1e-5;
        for _ in 0..300 {
            let alpha: f64 = rng.gen_range(-1.0..3.0);
            let beta: f64 = rng.gen_range(-3.0..3.0);
            let gamma: f64 = rng.gen_range(-30.0..30.0);
            let vbeta: f64 = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.5..40.0) };
            let remaining: f64 = rng.gen_range(0.01..0.5);
            let sens = SensitivityModel::Exponential { alpha, beta, gamma };
            let got = solve_step_diameter(&sens, vbeta, remaining, dmin);
            assert!(got >= dmin && got <= remaining);
            // grid oracle over the true constrained objective
            let n = 10_000;
            let vel = |d: f64| d * (-vbeta * d).exp();
            let mut best: Option<f64> = None;
            for i in 0..=n {
                let d = dmin + (remaining - dmin) * i as f64 / n as f64;
                if sens.eval(d) > 0.0 && best.map_or(true, |b| vel(d) > vel(b)) {
                    best = Some(d);
                }
            }
            let grid_step = (remaining - dmin) / n as f64;
            match best {
                None => assert_eq!(got, dmin),
                Some(b) => {
                    let root = sens.positive_root().unwrap_or(f64::INFINITY);
                    let shift = if root.is_finite() { (1e-3 * root).max(dmin) } else { 0.0 };
                    assert!(
                        (got - b).abs() <= grid_step + shift + 1e-12,
                        "got {got}, grid {b}, step {grid_step}, shift {shift} (α={alpha} β={beta} γ={gamma} vβ={vbeta} rem={remaining})"
                    );
                }
            }
        }
    }

    fn record(delta: f64, s: f64, v: f64, s0: f64, offsets: Vec<f64>, advancing: usize) -> StepRecord {
        StepRecord {
            example: StepExample {
                delta,
                sensitivity: s,
                velocity: v,
                base_sensitivity: s0,
                offsets,
            },
            advancing,
            is_init: false,
        }
    }

    #[test]
    fn assembly_matches_protocol_shape() {
        // two init steps with diameters 1e-4 and 1e-3, then predict at S₀ = 1.52
        let history = vec![
            record(1e-4, 1.50, 12.0, 1.55, vec![0.0], 0),
            record(1e-3, 1.45, 80.0, 1.53, vec![1e-4], 0),
        ];
        let a = assemble_examples(&history, 1.52, &[1.1e-3], 0, 3, false);
        assert_eq!(a.sens_points[0], (0.0, 1.52));
        assert_eq!(a.sens_points.len(), 3);
        assert!((a.sens_points[1].1 - (1.50 + 1.52 - 1.55)).abs() < 1e-12);
        assert!((a.sens_points[2].1 - (1.45 + 1.52 - 1.53)).abs() < 1e-12);
        assert_eq!(a.vel_points, vec![(1e-4, 12.0), (1e-3, 80.0)]);
    }

    #[test]
    fn assembly_alignment_identity() {
        let history = vec![record(0.01, 1.0, 5.0, 1.3, vec![0.0], 0)];
        let a = assemble_examples(&history, 1.3, &[0.01], 0, 2, false);
        assert_eq!(a.sens_points[1], (0.01, 1.0));
    }

    #[test]
    fn assembly_multi_uses_closest_when_no_same_feature_steps() {
        // all history advanced feature 0; predicting the first step of feature 1
        let history = vec![
            record(0.02, 1.0, 5.0, 1.2, vec![0.00, 0.0], 0),
            record(0.02, 0.9, 5.0, 1.1, vec![0.02, 0.0], 0),
            record(0.02, 0.8, 5.0, 1.0, vec![0.04, 0.0], 0),
        ];
        let a = assemble_examples(&history, 1.15, &[0.0, 0.02], 1, 3, true);
        // all three slots filled by closest examples: (0,S0) plus 3 points
        assert_eq!(a.sens_points.len(), 4);
        // the closest is the one at offsets (0, 0)
        assert!((a.sens_points[1].1 - (1.0 + 1.15 - 1.2)).abs() < 1e-12 || a.sens_points.iter().any(|p| (p.1 - (1.0 + 1.15 - 1.2)).abs() < 1e-12));
    }
}
