//! Pull-back construction and the statistical test protocols.
//!
//! The pull-back realizes the limit "start time → −∞" on a fixed noise
//! realization: the solution is evaluated at a fixed anchor time t from
//! successively earlier starts t − kτ, all reading the same increments, and
//! the Cauchy gaps between consecutive endpoint states identify the random
//! periodic solution. Distributional statements are probed with empirical
//! Wasserstein distances over ensembles of independent streams; pathwise
//! statements reduce to bit-exact identities of the discrete flow.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::delay::{DelayModel, SegmentState};
use crate::error::{Error, Result};
use crate::noise::NoiseGrid;
use crate::sde::{simulate_endpoint, SdeModel};

/// A model that can be driven from s to t on a noise grid. The state is the
/// full Markov state (a point for plain SDEs, a segment for delay models).
pub trait Evolve: Sync {
    type State: Clone + Send + Sync;

    fn evolve(&self, s: f64, t: f64, init: &Self::State, w: &NoiseGrid) -> Result<Self::State>;
    /// Distance in the model's own norm.
    fn distance(&self, a: &Self::State, b: &Self::State) -> f64;
    /// Norm of a state (distance to the zero state).
    fn state_norm(&self, a: &Self::State) -> f64;
    /// Finite-dimensional observation: the current point.
    fn observe(&self, a: &Self::State) -> Vec<f64>;
    fn dim(&self) -> usize;
    fn period(&self) -> f64;
}

impl Evolve for SdeModel {
    type State = Vec<f64>;

    fn evolve(&self, s: f64, t: f64, init: &Self::State, w: &NoiseGrid) -> Result<Self::State> {
        simulate_endpoint(self, s, t, init, w)
    }

    fn distance(&self, a: &Self::State, b: &Self::State) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }

    fn state_norm(&self, a: &Self::State) -> f64 {
        a.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn observe(&self, a: &Self::State) -> Vec<f64> {
        a.clone()
    }

    fn dim(&self) -> usize {
        SdeModel::dim(self)
    }
    fn period(&self) -> f64 {
        SdeModel::period(self)
    }
}

impl Evolve for DelayModel {
    type State = SegmentState;

    fn evolve(&self, s: f64, t: f64, init: &Self::State, w: &NoiseGrid) -> Result<Self::State> {
        let mut out = crate::delay::simulate_delay(self, s, t, init, w, &[t])?;
        Ok(out.segments.pop().expect("one output time requested"))
    }

    fn distance(&self, a: &Self::State, b: &Self::State) -> f64 {
        a.distance(b)
    }

    fn state_norm(&self, a: &Self::State) -> f64 {
        a.norm()
    }

    fn observe(&self, a: &Self::State) -> Vec<f64> {
        a.at_lag_steps(0).to_vec()
    }

    fn dim(&self) -> usize {
        DelayModel::dim(self)
    }
    fn period(&self) -> f64 {
        DelayModel::period(self)
    }
}

/// Result of a pull-back sweep on one noise realization.
#[derive(Debug, Clone)]
pub struct PullbackResult<S> {
    pub anchor: f64,
    pub periods: usize,
    /// Endpoint state at the anchor started k = 1..K periods earlier.
    pub endpoint_states: Vec<S>,
    /// Model-norm distances between consecutive endpoint states (length K−1).
    pub cauchy_gaps: Vec<f64>,
    /// Least-squares geometric ratio of the positive gaps; `None` when fewer
    /// than two gaps are positive (frozen dynamics).
    pub fitted_ratio: Option<f64>,
}

/// Evaluates the solution at `t` from starts t − kτ, k = 1..K, on one noise
/// realization. The noise must cover [t − Kτ, t].
pub fn pullback<M: Evolve>(
    model: &M,
    t: f64,
    xi: &M::State,
    periods: usize,
    w: &NoiseGrid,
) -> Result<PullbackResult<M::State>> {
    if periods < 2 {
        return Err(Error::Argument(format!("pull-back depth must be >= 2, got {periods}")));
    }
    let tau = model.period();
    let mut endpoint_states = Vec::with_capacity(periods);
    for k in 1..=periods {
        let s = t - k as f64 * tau;
        endpoint_states.push(model.evolve(s, t, xi, w)?);
    }
    let cauchy_gaps: Vec<f64> = endpoint_states
        .windows(2)
        .map(|pair| model.distance(&pair[1], &pair[0]))
        .collect();
    let fitted_ratio = fit_geometric_ratio(&cauchy_gaps);
    Ok(PullbackResult { anchor: t, periods, endpoint_states, cauchy_gaps, fitted_ratio })
}

/// Least-squares slope of ln(gaps) against the gap index, exponentiated.
fn fit_geometric_ratio(gaps: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = gaps
        .iter()
        .enumerate()
        .filter(|(_, &g)| g > 0.0)
        .map(|(i, &g)| (i as f64, g.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    Some(least_squares_slope(&pts).exp())
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Smallest pull-back depth with decay^K below `target`, clamped to [2, cap].
pub fn default_pullback_depth(per_period_decay: f64, target: f64, cap: usize) -> usize {
    if per_period_decay <= 0.0 {
        return cap;
    }
    let k = (-target.ln() / per_period_decay).ceil() as usize;
    k.clamp(2, cap)
}

/// How an empirical 1-Wasserstein value was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum W1Method {
    Sorted1d,
    ExactAssignment,
    Sliced64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct W1Estimate {
    pub value: f64,
    pub method: W1Method,
}

/// Threshold below which the exact assignment is used in dimension > 1.
const ASSIGNMENT_LIMIT: usize = 256;
/// Number of fixed quasi-random directions for the sliced estimator.
const SLICED_DIRECTIONS: usize = 64;

/// Empirical 1-Wasserstein distance between two equally sized samples:
/// exact sorted pairing in d = 1, exact optimal assignment for n ≤ 256 in
/// d > 1, sliced approximation with 64 fixed directions beyond that.
pub fn empirical_w1(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<W1Estimate> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Argument(format!(
            "samples must be nonempty and equally sized (got {} / {})",
            a.len(),
            b.len()
        )));
    }
    let d = a[0].len();
    if a.iter().chain(b.iter()).any(|x| x.len() != d) {
        return Err(Error::Argument("inconsistent sample dimensions".into()));
    }
    let n = a.len();
    if d == 1 {
        let xs: Vec<f64> = a.iter().map(|v| v[0]).collect();
        let ys: Vec<f64> = b.iter().map(|v| v[0]).collect();
        return Ok(W1Estimate { value: w1_sorted_1d(&xs, &ys), method: W1Method::Sorted1d });
    }
    if n <= ASSIGNMENT_LIMIT {
        let mut cost = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                cost[i * n + j] =
                    a[i].iter().zip(&b[j]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            }
        }
        let (_, total) = min_cost_assignment(&cost, n);
        return Ok(W1Estimate { value: total / n as f64, method: W1Method::ExactAssignment });
    }
    let dirs = sliced_directions(d, SLICED_DIRECTIONS);
    let mut acc = 0.0;
    for dir in &dirs {
        let xs: Vec<f64> = a.iter().map(|v| dot(v, dir)).collect();
        let ys: Vec<f64> = b.iter().map(|v| dot(v, dir)).collect();
        acc += w1_sorted_1d(&xs, &ys);
    }
    Ok(W1Estimate { value: acc / dirs.len() as f64, method: W1Method::Sliced64 })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn w1_sorted_1d(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    xs.iter().zip(&ys).map(|(x, y)| (x - y).abs()).sum::<f64>() / xs.len() as f64
}

/// Minimum-cost perfect assignment via shortest augmenting paths with
/// potentials (O(n³)). Returns (row → column map, total cost).
pub fn min_cost_assignment(cost: &[f64], n: usize) -> (Vec<usize>, f64) {
    let inf = f64::INFINITY;
    let mut u = vec![0.0_f64; n + 1];
    let mut v = vec![0.0_f64; n + 1];
    let mut matched = vec![0_usize; n + 1]; // column -> row (1-based, 0 = free)
    let mut way = vec![0_usize; n + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0_usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0_usize; n];
    for j in 1..=n {
        row_to_col[matched[j] - 1] = j - 1;
    }
    let total = (0..n).map(|i| cost[i * n + row_to_col[i]]).sum();
    (row_to_col, total)
}

/// Fixed quasi-random unit directions from a Kronecker (additive recurrence)
/// sequence pushed through Box–Muller and normalized.
fn sliced_directions(dim: usize, m: usize) -> Vec<Vec<f64>> {
    // Generalized golden ratio for the R_d sequence.
    let mut gamma = 1.5_f64;
    for _ in 0..64 {
        gamma = (1.0 + gamma).powf(1.0 / (dim as f64 + 1.0));
    }
    let alphas: Vec<f64> = (1..=dim + dim % 2).map(|j| (1.0 / gamma.powi(j as i32)) % 1.0).collect();
    let mut dirs = Vec::with_capacity(m);
    for k in 0..m {
        let u: Vec<f64> = alphas
            .iter()
            .map(|&a| {
                let x = (0.5 + a * (k + 1) as f64) % 1.0;
                x.clamp(1e-12, 1.0 - 1e-12)
            })
            .collect();
        let mut g = Vec::with_capacity(dim);
        for pair in u.chunks(2) {
            let r = (-2.0 * pair[0].ln()).sqrt();
            let phi = std::f64::consts::TAU * pair[1];
            g.push(r * phi.cos());
            if g.len() < dim {
                g.push(r * phi.sin());
            }
        }
        g.truncate(dim);
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            for x in &mut g {
                *x /= norm;
            }
        } else {
            g = (0..dim).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
        }
        dirs.push(g);
    }
    dirs
}

/// φ-cost distance of coupled pairs: mean of φ(|aᵢ − bᵢ|) over the pairing
/// the caller already holds. Upper-bound semantics: the pairs are a coupling,
/// not the optimal one.
pub fn w_phi_coupled(
    metric: &crate::coupling::CouplingMetric,
    a: &[Vec<f64>],
    b: &[Vec<f64>],
) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Argument("paired samples must be nonempty and equally sized".into()));
    }
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let r = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        acc += metric.phi(r)?;
    }
    Ok(acc / a.len() as f64)
}

/// Contraction-rate fit over an ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractionFit {
    /// Least-squares slope of ln E\[observable\] per period.
    pub slope_per_period: f64,
    /// 95% percentile bootstrap interval for the slope.
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// (periods elapsed, ln ensemble mean) actually used by the fit.
    pub points: Vec<(f64, f64)>,
    pub n_runs: usize,
    pub resamples: usize,
}

/// Fits ln E\[series\] against periods elapsed. `series[run][mark]` holds the
/// per-run observable at `period_marks[mark]`; marks whose ensemble mean is
/// not positive (everything coupled) are dropped. Errors when fewer than two
/// marks survive.
pub fn contraction_fit(
    series: &[Vec<f64>],
    period_marks: &[f64],
    resamples: usize,
    seed: u64,
) -> Result<ContractionFit> {
    let n_runs = series.len();
    if n_runs < 2 {
        return Err(Error::Argument("contraction fit needs at least two runs".into()));
    }
    let n_marks = period_marks.len();
    if series.iter().any(|row| row.len() != n_marks) {
        return Err(Error::Argument("series rows must match the period marks".into()));
    }
    let fit_slope = |weights: Option<&[usize]>| -> Option<f64> {
        let mut pts = Vec::with_capacity(n_marks);
        for j in 0..n_marks {
            let mean = match weights {
                None => series.iter().map(|row| row[j]).sum::<f64>() / n_runs as f64,
                Some(idx) => idx.iter().map(|&i| series[i][j]).sum::<f64>() / idx.len() as f64,
            };
            if mean > 0.0 {
                pts.push((period_marks[j], mean.ln()));
            }
        }
        if pts.len() < 2 || (pts[pts.len() - 1].0 - pts[0].0).abs() < 1e-12 {
            None
        } else {
            Some(least_squares_slope(&pts))
        }
    };
    let slope = fit_slope(None).ok_or_else(|| {
        Error::DegenerateFit(
            "fewer than two period marks with positive ensemble mean (all runs coupled or zero)"
                .into(),
        )
    })?;

    // Percentile bootstrap over run indices, deterministic in `seed`.
    let mut slopes = Vec::with_capacity(resamples);
    let mut draw_state = seed ^ 0x9E37_79B9_7F4A_7C15;
    let mut next_u64 = move || {
        draw_state = draw_state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = draw_state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    let mut idx = vec![0_usize; n_runs];
    for _ in 0..resamples {
        for slot in idx.iter_mut() {
            *slot = (next_u64() % n_runs as u64) as usize;
        }
        if let Some(s) = fit_slope(Some(&idx)) {
            slopes.push(s);
        }
    }
    let (ci_lower, ci_upper) = if slopes.len() >= 20 {
        slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lo = ((slopes.len() as f64) * 0.025).floor() as usize;
        let hi = (((slopes.len() as f64) * 0.975).ceil() as usize).min(slopes.len()) - 1;
        (slopes[lo], slopes[hi])
    } else {
        (slope, slope)
    };

    let mut points = Vec::new();
    for j in 0..n_marks {
        let mean = series.iter().map(|row| row[j]).sum::<f64>() / n_runs as f64;
        if mean > 0.0 {
            points.push((period_marks[j], mean.ln()));
        }
    }
    Ok(ContractionFit { slope_per_period: slope, ci_lower, ci_upper, points, n_runs, resamples })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeriodicityMode {
    Distributional,
    Pathwise,
}

/// Outcome of a periodicity test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodicityReport {
    pub mode: PeriodicityMode,
    /// Empirical W₁ between the two laws (distributional) or the maximum
    /// pathwise identity discrepancy (pathwise, must be exactly 0).
    pub statistic: f64,
    /// Monte Carlo noise floor (2·σ̂/√N) for distributional mode; 0 for the
    /// pathwise identity.
    pub resolution: f64,
    pub pass: bool,
    /// Pull-back depth used.
    pub depth: usize,
    pub ensemble: usize,
    pub w1_method: Option<W1Method>,
    /// Pathwise mode: distance between depth-K and depth-(K+1) approximants.
    pub limit_gap: Option<f64>,
    /// Pathwise mode: fitted geometric ratio of the pull-back gaps.
    pub fitted_ratio: Option<f64>,
}

/// Distributional periodicity: compares the laws of the pull-back
/// approximants at `t` and `t + shift` over N independent streams. The
/// periodic solution passes with shift = τ; a deliberate τ/2 shift probes the
/// test's power.
#[allow(clippy::too_many_arguments)]
pub fn distributional_periodicity_test<M: Evolve>(
    model: &M,
    t: f64,
    xi: &M::State,
    depth: usize,
    ensemble: usize,
    shift: f64,
    step: f64,
    seed: u64,
) -> Result<PeriodicityReport> {
    if ensemble < 2 {
        return Err(Error::Argument("need at least 2 ensemble members".into()));
    }
    let tau = model.period();
    let span = depth as f64 * tau;
    let lo = (t - span).min(t + shift - span);
    let hi = t.max(t + shift);
    let len = ((hi - lo) / step).round() as usize + 2;

    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..ensemble)
        .into_par_iter()
        .map(|i| -> Result<(Vec<f64>, Vec<f64>)> {
            let w = NoiseGrid::new(seed, i as u64, lo, step, len, model.dim())?;
            let at_t = model.evolve(t - span, t, xi, &w)?;
            let at_shifted = model.evolve(t + shift - span, t + shift, xi, &w)?;
            Ok((model.observe(&at_t), model.observe(&at_shifted)))
        })
        .collect::<Result<Vec<_>>>()?;

    let a: Vec<Vec<f64>> = pairs.iter().map(|p| p.0.clone()).collect();
    let b: Vec<Vec<f64>> = pairs.iter().map(|p| p.1.clone()).collect();
    let est = empirical_w1(&a, &b)?;
    let resolution = 2.0 * pooled_std(&a, &b) / (ensemble as f64).sqrt();
    Ok(PeriodicityReport {
        mode: PeriodicityMode::Distributional,
        statistic: est.value,
        resolution,
        pass: est.value <= 3.0 * resolution,
        depth,
        ensemble,
        w1_method: Some(est.method),
        limit_gap: None,
        fitted_ratio: None,
    })
}

fn pooled_std(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let d = a[0].len();
    let n = (a.len() + b.len()) as f64;
    let mut var_sum = 0.0;
    for k in 0..d {
        let mean =
            (a.iter().map(|v| v[k]).sum::<f64>() + b.iter().map(|v| v[k]).sum::<f64>()) / n;
        let ss: f64 = a
            .iter()
            .map(|v| (v[k] - mean) * (v[k] - mean))
            .chain(b.iter().map(|v| (v[k] - mean) * (v[k] - mean)))
            .sum();
        var_sum += ss / (n - 1.0);
    }
    var_sum.sqrt()
}

/// Pathwise periodicity for functional models. Statistic (a): the segment
/// computed at t + τ from depth K must equal, bit for bit, the segment at t
/// computed on the τ-shifted noise. Statistic (b): the model-norm gap between
/// the depth-K and depth-(K+1) approximants, with the fitted pull-back ratio.
pub fn pathwise_periodicity_test(
    model: &DelayModel,
    t: f64,
    xi: &SegmentState,
    depth: usize,
    step: f64,
    seed: u64,
    stream: u64,
) -> Result<PeriodicityReport> {
    let tau = model.period();
    let span = (depth + 1) as f64 * tau;
    let lo = t - span;
    let len = ((t + tau - lo) / step).round() as usize + 2;
    let w = NoiseGrid::new(seed, stream, lo, step, len, Evolve::dim(model))?;

    // (a) identity: simulate(s+τ → t+τ, ω) vs simulate(s → t, θ_τ ω).
    let left = model.evolve(t + tau - depth as f64 * tau, t + tau, xi, &w)?;
    let shifted = w.wiener_shift(tau)?;
    let right = model.evolve(t - depth as f64 * tau, t, xi, &shifted)?;
    let statistic = left
        .values
        .iter()
        .zip(&right.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0_f64, f64::max);

    // (b) limit: one more period of pull-back on the same noise.
    let pb = pullback(model, t, xi, depth + 1, &w)?;
    let limit_gap = *pb.cauchy_gaps.last().unwrap();

    Ok(PeriodicityReport {
        mode: PeriodicityMode::Pathwise,
        statistic,
        resolution: 0.0,
        pass: statistic == 0.0,
        depth,
        ensemble: 1,
        w1_method: None,
        limit_gap: Some(limit_gap),
        fitted_ratio: pb.fitted_ratio,
    })
}

/// Mean-square probe along a horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentProbe {
    /// (probe time, E‖X_t‖², standard error).
    pub probes: Vec<(f64, f64, f64)>,
    pub max_mean_square: f64,
    /// Raised when the last-quarter mean exceeds the first-quarter mean by
    /// more than 3 combined standard errors.
    pub trend_flag: bool,
}

/// Ensemble estimate of E‖X_t‖² at `n_probes` times across [s, s + horizon].
#[allow(clippy::too_many_arguments)]
pub fn moment_probe<M: Evolve>(
    model: &M,
    s: f64,
    horizon: f64,
    xi: &M::State,
    ensemble: usize,
    n_probes: usize,
    step: f64,
    seed: u64,
) -> Result<MomentProbe> {
    if ensemble == 0 || n_probes < 4 {
        return Err(Error::Argument("need ensemble >= 1 and at least 4 probe times".into()));
    }
    let total_steps = ((horizon / step).round() as i64).max(1);
    let probe_steps: Vec<i64> =
        (1..=n_probes).map(|j| total_steps * j as i64 / n_probes as i64).collect();
    let len = total_steps as usize + 2;

    let samples: Vec<Vec<f64>> = (0..ensemble)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let w = NoiseGrid::new(seed, i as u64, s, step, len, model.dim())?;
            let mut state = xi.clone();
            let mut prev = s;
            let mut out = Vec::with_capacity(probe_steps.len());
            for &ps in &probe_steps {
                let t = s + ps as f64 * step;
                state = model.evolve(prev, t, &state, &w)?;
                prev = t;
                let nrm = model.state_norm(&state);
                out.push(nrm * nrm);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut probes = Vec::with_capacity(probe_steps.len());
    for (j, &ps) in probe_steps.iter().enumerate() {
        let t = s + ps as f64 * step;
        let mean = samples.iter().map(|row| row[j]).sum::<f64>() / ensemble as f64;
        let var = samples.iter().map(|row| (row[j] - mean) * (row[j] - mean)).sum::<f64>()
            / (ensemble as f64 - 1.0).max(1.0);
        probes.push((t, mean, (var / ensemble as f64).sqrt()));
    }
    let max_mean_square = probes.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);

    let quarter = (probes.len() / 4).max(1);
    let first = &probes[..quarter];
    let last = &probes[probes.len() - quarter..];
    let mean_of = |xs: &[(f64, f64, f64)]| xs.iter().map(|p| p.1).sum::<f64>() / xs.len() as f64;
    let se_of = |xs: &[(f64, f64, f64)]| {
        (xs.iter().map(|p| p.2 * p.2).sum::<f64>()).sqrt() / xs.len() as f64
    };
    let diff = mean_of(last) - mean_of(first);
    let se = (se_of(first).powi(2) + se_of(last).powi(2)).sqrt();
    let trend_flag = diff > 3.0 * se;

    Ok(MomentProbe { probes, max_mean_square, trend_flag })
}
