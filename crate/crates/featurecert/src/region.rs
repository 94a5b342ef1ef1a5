//! Geometry of the certified region.
//!
//! Every verification step contributes an axis-aligned box in offset space
//! (hyper-cubes for the adaptive scheduler, rectangles for the splitting
//! baselines). The union of successful boxes grows from the origin; this
//! module tracks its frontier: per feature, the outer corner vertices of the
//! staircase boundary, the certified diameter array `ds`, and the anchor of
//! the next step.
//!
//! Supported dimensionality is 1 and 2; the data model is generic in `T` but
//! the frontier computation is not.

use serde::Serialize;

use crate::{CertError, Result};

/// Face-adjacency comparisons treat offsets within this absolute tolerance as
/// touching; offsets are sums of predicted diameters and accumulate rounding.
pub const GEOM_TOL: f64 = 1e-12;

/// One analyzed box in offset space.
#[derive(Debug, Clone, Serialize)]
pub struct RegionStep {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub success: bool,
    /// Feature this step was advancing (scheduling metadata).
    pub advancing: usize,
}

impl RegionStep {
    pub fn cube(offsets: &[f64], delta: f64, success: bool, advancing: usize) -> Self {
        RegionStep {
            lo: offsets.to_vec(),
            hi: offsets.iter().map(|o| o + delta).collect(),
            success,
            advancing,
        }
    }

    pub fn width(&self, dim: usize) -> f64 {
        self.hi[dim] - self.lo[dim]
    }
}

/// Frontier vertices and current diameters of the certified union.
#[derive(Debug, Clone, Serialize)]
pub struct FrontierData {
    /// `vertices[i]` is the vertex list bounding feature i's frontier.
    pub vertices: Vec<Vec<Vec<f64>>>,
    /// Largest `a` per feature such that the slab `∏_{j<i}[0,ds_j] × [0,a]`
    /// is covered by successful boxes, capped at the target diameters.
    pub ds: Vec<f64>,
}

/// Contiguous coverage of `[0, r]` by the intervals, starting from zero.
fn interval_reach(mut spans: Vec<(f64, f64)>) -> f64 {
    spans.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut reach = 0.0f64;
    for (lo, hi) in spans {
        if lo > reach + GEOM_TOL {
            break;
        }
        reach = reach.max(hi);
    }
    reach
}

/// Compute the frontier vertices `BV_1..BV_T` and the diameter array.
pub fn compute_certified_vertices(steps: &[RegionStep], targets: &[f64]) -> Result<FrontierData> {
    let t = targets.len();
    let empty = FrontierData { vertices: vec![Vec::new(); t], ds: vec![0.0; t] };
    let succ: Vec<&RegionStep> = steps.iter().filter(|s| s.success).collect();
    if succ.is_empty() {
        return Ok(empty);
    }
    match t {
        1 => {
            let reach = interval_reach(succ.iter().map(|s| (s.lo[0], s.hi[0])).collect());
            let ds0 = reach.min(targets[0]);
            let vertices = if reach > 0.0 { vec![vec![vec![ds0]]] } else { vec![Vec::new()] };
            Ok(FrontierData { vertices, ds: vec![ds0] })
        }
        2 => {
            // strip decomposition of the covered first-axis extent
            let reach0 = interval_reach(succ.iter().map(|s| (s.lo[0], s.hi[0])).collect());
            let extent0 = reach0.min(targets[0]);
            if reach0 <= 0.0 {
                return Ok(empty);
            }
            let mut cuts: Vec<f64> = vec![0.0, extent0];
            for s in &succ {
                for &c in &[s.lo[0], s.hi[0]] {
                    if c > GEOM_TOL && c < extent0 - GEOM_TOL {
                        cuts.push(c);
                    }
                }
            }
            cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            cuts.dedup_by(|a, b| (*a - *b).abs() <= GEOM_TOL);
            // contiguous coverage height per strip
            let mut heights: Vec<f64> = Vec::new();
            let mut strip_bounds: Vec<(f64, f64)> = Vec::new();
            for w in cuts.windows(2) {
                let (a, b) = (w[0], w[1]);
                let spans: Vec<(f64, f64)> = succ
                    .iter()
                    .filter(|s| s.lo[0] <= a + GEOM_TOL && s.hi[0] >= b - GEOM_TOL)
                    .map(|s| (s.lo[1], s.hi[1]))
                    .collect();
                heights.push(interval_reach(spans).min(targets[1]));
                strip_bounds.push((a, b));
            }
            if heights.is_empty() {
                // degenerate zero-width region at the origin
                let spans: Vec<(f64, f64)> = succ
                    .iter()
                    .filter(|s| s.lo[0] <= GEOM_TOL)
                    .map(|s| (s.lo[1], s.hi[1]))
                    .collect();
                heights.push(interval_reach(spans).min(targets[1]));
                strip_bounds.push((0.0, 0.0));
            }

            // the bounded rectangle maximal in Euclidean norm: sweep prefix
            // extents, pairing each with the minimum height so far
            let mut best = (0usize, 0.0f64, 0.0f64); // (last strip index, ds0, ds1)
            let mut hmin = f64::INFINITY;
            for (k, &(_, b)) in strip_bounds.iter().enumerate() {
                hmin = hmin.min(heights[k]);
                let cand = (b.min(targets[0]), hmin.max(0.0));
                if cand.0 * cand.0 + cand.1 * cand.1 > best.1 * best.1 + best.2 * best.2 {
                    best = (k, cand.0, cand.1);
                }
            }
            let (kend, ds0, ds1) = best;

            // feature-2 vertices: outer corners of the height step function
            // over the chosen extent, merging collinear flats
            let strips = &strip_bounds[..=kend];
            let mut bv2: Vec<Vec<f64>> = Vec::new();
            for (k, &(a, b)) in strips.iter().enumerate() {
                let h = heights[k];
                let same_left = k > 0 && (heights[k - 1] - h).abs() <= GEOM_TOL;
                let same_right = k + 1 < strips.len() && (heights[k + 1] - h).abs() <= GEOM_TOL;
                if !same_left {
                    bv2.push(vec![a, h]);
                }
                if !same_right {
                    bv2.push(vec![b.min(targets[0]), h]);
                }
            }
            // feature-1 vertices: the right frontier edge of the rectangle's
            // extent, from the bottom up to the covered height there
            let right_h = heights[kend];
            let bv1 = vec![vec![ds0, 0.0], vec![ds0, right_h]];
            Ok(FrontierData { vertices: vec![bv1, bv2], ds: vec![ds0, ds1] })
        }
        _ => Err(CertError::Contract(format!("frontier geometry supports 1 or 2 features, got {t}"))),
    }
}

/// `ds ← ds_curr` only when the Euclidean norm strictly increases.
pub fn update_diameters(ds: &mut [f64], ds_curr: &[f64]) -> bool {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    if norm(ds_curr) > norm(ds) {
        ds.copy_from_slice(ds_curr);
        true
    } else {
        false
    }
}

/// Scan-start indices, finish flag, and the first precision-floor failure.
#[derive(Debug, Clone)]
pub struct OffsetState {
    pub start_index: Vec<usize>,
    pub finish: bool,
    pub min_fail: Option<usize>,
}

impl OffsetState {
    pub fn new(t: usize) -> Self {
        OffsetState { start_index: vec![0; t], finish: false, min_fail: None }
    }
}

/// The next step's anchor offsets and the feature it advances.
#[derive(Debug, Clone, PartialEq)]
pub struct NextOffsets {
    pub offsets: Vec<f64>,
    pub advancing: usize,
}

/// Anchor of the next verification step.
///
/// Follows the feature-by-feature order: retry the same anchor after a failure
/// above the precision floor; move to the next feature after a failure at the
/// floor; otherwise scan, from the least feature that has not reached its
/// target, for the earliest not-yet-consumed example, and anchor at its
/// advanced face. Selecting an example for feature `f` consumes every current
/// example for features `≤ f`, so rows march monotonically; seams between
/// rows of unequal cube sizes are closed by
/// [`refine_offsets_for_prediction`]. When no feature remains the state
/// finishes and the first floor-failing anchor is replayed until the caller's
/// consecutive-failure counter terminates the run.
pub fn compute_next_offsets(
    steps: &[RegionStep],
    targets: &[f64],
    state: &mut OffsetState,
    delta_min: f64,
) -> Result<NextOffsets> {
    let t = targets.len();
    if steps.is_empty() {
        return Ok(NextOffsets { offsets: vec![0.0; t], advancing: 0 });
    }
    let last_idx = steps.len() - 1;
    let last = &steps[last_idx];
    let fallback = |state: &OffsetState| {
        let idx = state.min_fail.unwrap_or(last_idx);
        NextOffsets { offsets: steps[idx].lo.clone(), advancing: steps[idx].advancing }
    };
    if state.finish {
        return Ok(fallback(state));
    }

    let mut i_f = 0usize;
    if !last.success {
        if last.width(last.advancing) > delta_min + GEOM_TOL {
            // a smaller prediction at the same anchor comes next
            return Ok(NextOffsets { offsets: last.lo.clone(), advancing: last.advancing });
        }
        i_f = (last.advancing + 1).min(t - 1);
        if state.min_fail.is_none() {
            state.min_fail = Some(last_idx);
        }
    }

    for f in i_f..t {
        let found = (state.start_index[f]..steps.len()).find(|&i| {
            let e = &steps[i];
            e.success && e.hi[f] < targets[f] - GEOM_TOL
        });
        if let Some(idx) = found {
            let e = &steps[idx];
            let mut offsets = e.lo.clone();
            offsets[f] = e.hi[f];
            // consume all current examples for this and the preceding features
            for g in 0..=f {
                state.start_index[g] = steps.len();
            }
            return Ok(NextOffsets { offsets, advancing: f });
        }
    }

    state.finish = true;
    Ok(fallback(state))
}

/// Lower the anchor's succeeding offsets onto nearby frontier vertices so the
/// new box leaves no uncovered sliver below it. For each feature `i` from the
/// advancing one up, take the lowest vertex of `BV_i` whose advancing
/// coordinate falls inside the step's window and adopt its `i`-th coordinate
/// when that is lower.
pub fn refine_offsets_for_prediction(
    offsets: &[f64],
    delta: f64,
    vertices: &[Vec<Vec<f64>>],
    advancing: usize,
) -> Vec<f64> {
    let mut out = offsets.to_vec();
    let (w_lo, w_hi) = (offsets[advancing], offsets[advancing] + delta);
    for i in advancing..out.len() {
        let candidate = vertices
            .get(i)
            .into_iter()
            .flatten()
            .filter(|v| v[advancing] > w_lo + GEOM_TOL && v[advancing] <= w_hi + GEOM_TOL)
            .map(|v| v[i])
            .fold(f64::INFINITY, f64::min);
        if candidate < out[i] {
            out[i] = candidate;
        }
    }
    out
}

/// Every point of a `per_dim`-per-axis grid over `∏ [0, extent_i]` lies in a
/// successful box. Used as the coverage oracle in tests and reports.
pub fn grid_fully_covered(steps: &[RegionStep], extent: &[f64], per_dim: usize) -> bool {
    let t = extent.len();
    let succ: Vec<&RegionStep> = steps.iter().filter(|s| s.success).collect();
    let mut idx = vec![0usize; t];
    loop {
        let p: Vec<f64> = (0..t)
            .map(|j| extent[j] * idx[j] as f64 / (per_dim - 1) as f64)
            .collect();
        let covered = succ
            .iter()
            .any(|s| (0..t).all(|j| s.lo[j] <= p[j] + GEOM_TOL && p[j] <= s.hi[j] + GEOM_TOL));
        if !covered {
            return false;
        }
        let mut j = 0;
        loop {
            if j == t {
                return true;
            }
            idx[j] += 1;
            if idx[j] < per_dim {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}
