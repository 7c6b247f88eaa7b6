//! Functional SDEs with finite or infinite memory.
//!
//! The Markov state is a path segment on a step grid: the last r₀/h + 1
//! points (finite lag) or H/h + 1 points (infinite lag truncated at horizon
//! H with e^{−α₀H} below the truncation tolerance). Drift and diffusion are
//! functionals of the current segment; integration is explicit
//! Euler–Maruyama over a linear history buffer, so resuming from a returned
//! segment reproduces the unsplit run bit for bit.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::noise::NoiseGrid;
use crate::rates::guarded_multiple;
use crate::sde::{time_to_index, DIVERGENCE_LIMIT};

/// Norm carried by a segment: uniform over the window, or weighted by
/// e^{α₀θ} for the infinite-memory class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentNorm {
    Sup,
    Weighted { alpha0: f64 },
}

/// A solution path segment: values at grid times anchor − k·h, k = 0..m,
/// stored oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentState {
    pub anchor_index: i64,
    pub step: f64,
    pub dim: usize,
    /// Row-major (m+1 × dim), chronological (row m is the anchor time).
    pub values: Vec<f64>,
    pub norm_kind: SegmentNorm,
}

impl SegmentState {
    pub fn new(
        anchor_index: i64,
        step: f64,
        dim: usize,
        values: Vec<f64>,
        norm_kind: SegmentNorm,
    ) -> Result<Self> {
        if dim == 0 || values.is_empty() || !values.len().is_multiple_of(dim) {
            return Err(Error::Config("segment values must be a nonempty multiple of dim".into()));
        }
        if !(step > 0.0) {
            return Err(Error::Config("segment step must be positive".into()));
        }
        Ok(Self { anchor_index, step, dim, values, norm_kind })
    }

    /// Constant segment ξ(θ) ≡ value over a window of m steps.
    pub fn constant(
        anchor_index: i64,
        step: f64,
        window_steps: usize,
        value: &[f64],
        norm_kind: SegmentNorm,
    ) -> Result<Self> {
        let dim = value.len();
        let mut values = Vec::with_capacity((window_steps + 1) * dim);
        for _ in 0..=window_steps {
            values.extend_from_slice(value);
        }
        Self::new(anchor_index, step, dim, values, norm_kind)
    }

    /// Window length in steps (m).
    pub fn window_steps(&self) -> usize {
        self.values.len() / self.dim - 1
    }

    pub fn anchor_time(&self) -> f64 {
        self.anchor_index as f64 * self.step
    }

    /// Value at lag k·h behind the anchor.
    pub fn at_lag_steps(&self, k: usize) -> &[f64] {
        let m = self.window_steps();
        let row = m - k;
        &self.values[row * self.dim..(row + 1) * self.dim]
    }

    /// Segment norm in the carried [`SegmentNorm`].
    pub fn norm(&self) -> f64 {
        let m = self.window_steps();
        let mut best = 0.0_f64;
        for row in 0..=m {
            let v = &self.values[row * self.dim..(row + 1) * self.dim];
            let mag = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let weighted = match self.norm_kind {
                SegmentNorm::Sup => mag,
                SegmentNorm::Weighted { alpha0 } => {
                    let theta = -((m - row) as f64) * self.step;
                    (alpha0 * theta).exp() * mag
                }
            };
            best = best.max(weighted);
        }
        best
    }

    /// Norm of the difference of two aligned segments.
    pub fn distance(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.values.len(), other.values.len());
        let m = self.window_steps();
        let mut best = 0.0_f64;
        for row in 0..=m {
            let a = &self.values[row * self.dim..(row + 1) * self.dim];
            let b = &other.values[row * self.dim..(row + 1) * self.dim];
            let mag = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            let weighted = match self.norm_kind {
                SegmentNorm::Sup => mag,
                SegmentNorm::Weighted { alpha0 } => {
                    let theta = -((m - row) as f64) * self.step;
                    (alpha0 * theta).exp() * mag
                }
            };
            best = best.max(weighted);
        }
        best
    }
}

/// Borrowed window handed to drift/diffusion functionals during integration.
pub struct SegmentView<'a> {
    values: &'a [f64],
    dim: usize,
    step: f64,
}

impl<'a> SegmentView<'a> {
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn step(&self) -> f64 {
        self.step
    }
    pub fn window_steps(&self) -> usize {
        self.values.len() / self.dim - 1
    }

    /// ξ(0), the newest point.
    pub fn newest(&self) -> &[f64] {
        let m = self.window_steps();
        &self.values[m * self.dim..(m + 1) * self.dim]
    }

    /// ξ(−k·h).
    pub fn at_lag_steps(&self, k: usize) -> &[f64] {
        let row = self.window_steps() - k;
        &self.values[row * self.dim..(row + 1) * self.dim]
    }

    /// ξ(θ) for θ ≤ 0 on the step grid within the window.
    pub fn at_theta(&self, theta: f64) -> Result<&[f64]> {
        if theta > 0.0 {
            return Err(Error::Domain(format!("segment lookback needs theta <= 0, got {theta}")));
        }
        let k = guarded_multiple(-theta, self.step)
            .ok_or_else(|| Error::Alignment(format!("theta {theta} is not on the step grid")))?;
        if k as usize > self.window_steps() {
            return Err(Error::Alignment(format!(
                "theta {theta} reaches beyond the segment window"
            )));
        }
        Ok(self.at_lag_steps(k as usize))
    }
}

/// Memory structure of a [`DelayModel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Memory {
    Finite { r0: f64 },
    /// Truncated infinite memory: the window keeps [t−H, t] and the dropped
    /// tail's weighted-norm contribution is bounded by e^{−α₀H}·sup|X|.
    Infinite { alpha0: f64, horizon: f64, truncation_tol: f64 },
}

impl Memory {
    /// Window length in time units.
    pub fn window(&self) -> f64 {
        match self {
            Memory::Finite { r0 } => *r0,
            Memory::Infinite { horizon, .. } => *horizon,
        }
    }

    pub fn norm_kind(&self) -> SegmentNorm {
        match self {
            Memory::Finite { .. } => SegmentNorm::Sup,
            Memory::Infinite { alpha0, .. } => SegmentNorm::Weighted { alpha0: *alpha0 },
        }
    }
}

/// Default truncation horizon: smallest grid multiple with e^{−α₀H} < tol.
pub fn default_horizon(alpha0: f64, step: f64, tol: f64) -> f64 {
    ((-tol.ln() / alpha0 / step).ceil()) * step
}

pub type DelayDriftFn = Arc<dyn Fn(f64, &SegmentView, &mut [f64]) + Send + Sync>;
pub type DelayDiffusionFn = Arc<dyn Fn(f64, &SegmentView, &mut [f64]) + Send + Sync>;

/// Diffusion functional; `Full` writes a row-major d×d matrix.
#[derive(Clone)]
pub enum DelayDiffusion {
    Zero,
    Full(DelayDiffusionFn),
}

/// A time-periodic functional SDE.
#[derive(Clone)]
pub struct DelayModel {
    dim: usize,
    period: f64,
    memory: Memory,
    drift: DelayDriftFn,
    diffusion: DelayDiffusion,
}

impl DelayModel {
    pub fn new(
        dim: usize,
        period: f64,
        memory: Memory,
        drift: DelayDriftFn,
        diffusion: DelayDiffusion,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        if !(period > 0.0) {
            return Err(Error::Config(format!("period must be positive, got {period}")));
        }
        match memory {
            Memory::Finite { r0 } => {
                if !(r0 > 0.0) {
                    return Err(Error::Config(format!("finite memory needs r0 > 0, got {r0}")));
                }
            }
            Memory::Infinite { alpha0, horizon, truncation_tol } => {
                if !(alpha0 > 0.0) || !(horizon > 0.0) || !(truncation_tol > 0.0) {
                    return Err(Error::Config(
                        "infinite memory needs alpha0, horizon, truncation_tol > 0".into(),
                    ));
                }
                if (-alpha0 * horizon).exp() >= truncation_tol {
                    return Err(Error::Config(format!(
                        "horizon {horizon} leaves weighted tail e^(-a0 H) = {} above the truncation tolerance {truncation_tol}",
                        (-alpha0 * horizon).exp()
                    )));
                }
            }
        }
        Ok(Self { dim, period, memory, drift, diffusion })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn period(&self) -> f64 {
        self.period
    }
    pub fn memory(&self) -> Memory {
        self.memory
    }
    pub fn norm_kind(&self) -> SegmentNorm {
        self.memory.norm_kind()
    }

    /// Samples coefficient periodicity on a concrete segment: values at
    /// (t, ξ) and (t + τ, ξ) must agree within rounding. Called at
    /// integration setup where the real grid is known.
    fn validate_periodicity_on(&self, view: &SegmentView) -> Result<()> {
        let d = self.dim;
        let mut b0 = vec![0.0; d];
        let mut b1 = vec![0.0; d];
        let mut s0 = vec![0.0; d * d];
        let mut s1 = vec![0.0; d * d];
        for i in 0..4 {
            let t = self.period * (i as f64 + 0.41) / 4.0;
            (self.drift)(t, view, &mut b0);
            (self.drift)(t + self.period, view, &mut b1);
            for k in 0..d {
                if (b0[k] - b1[k]).abs() > 1e-12 * (1.0 + b0[k].abs()) {
                    return Err(Error::Config("delay drift is not periodic in t".into()));
                }
            }
            if let DelayDiffusion::Full(sigma) = &self.diffusion {
                sigma(t, view, &mut s0);
                sigma(t + self.period, view, &mut s1);
                for k in 0..d * d {
                    if (s0[k] - s1[k]).abs() > 1e-12 * (1.0 + s0[k].abs()) {
                        return Err(Error::Config("delay diffusion is not periodic in t".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Window length in steps for grid step `h`, validating divisibility.
    pub fn window_steps(&self, h: f64) -> Result<usize> {
        let win = self.memory.window();
        match guarded_multiple(win, h) {
            Some(k) if k > 0 => Ok(k as usize),
            _ => Err(Error::Alignment(format!(
                "step {h} does not divide the memory window {win}"
            ))),
        }
    }
}

/// Output of a delay run: segments at the requested times plus the
/// truncation bound for infinite memory.
#[derive(Debug, Clone)]
pub struct DelayOutput {
    pub segments: Vec<SegmentState>,
    /// e^{−α₀H} · sup over the run of |X|, for infinite memory.
    pub truncation_bound: Option<f64>,
    pub sup_state_norm: f64,
}

struct DelayStepper<'m> {
    model: &'m DelayModel,
    history: Vec<f64>,
    m: usize,
    i_s: i64,
    spp: i64,
    h: f64,
    sup_norm: f64,
    b: Vec<f64>,
    sig: Vec<f64>,
    dw: Vec<f64>,
}

impl<'m> DelayStepper<'m> {
    fn new(model: &'m DelayModel, s: f64, xi: &SegmentState, w: &NoiseGrid) -> Result<Self> {
        let h = w.step();
        if xi.step != h {
            return Err(Error::Alignment(format!(
                "segment step {} differs from noise step {h}",
                xi.step
            )));
        }
        let m = model.window_steps(h)?;
        if xi.window_steps() != m {
            return Err(Error::Alignment(format!(
                "segment window {} steps, model needs {m}",
                xi.window_steps()
            )));
        }
        if xi.dim != model.dim {
            return Err(Error::Config("segment dimension mismatch".into()));
        }
        let spp = guarded_multiple(model.period, h).filter(|&k| k > 0).ok_or_else(|| {
            Error::Alignment(format!("step {h} does not divide the period {}", model.period))
        })?;
        let i_s = time_to_index(s, h)?;
        let d = model.dim;
        model.validate_periodicity_on(&SegmentView { values: &xi.values, dim: d, step: h })?;
        let mut sup_norm = 0.0_f64;
        for row in 0..=m {
            let v = &xi.values[row * d..(row + 1) * d];
            sup_norm = sup_norm.max(v.iter().map(|x| x * x).sum::<f64>().sqrt());
        }
        Ok(Self {
            model,
            history: xi.values.clone(),
            m,
            i_s,
            spp,
            h,
            sup_norm,
            b: vec![0.0; d],
            sig: vec![0.0; d * d],
            dw: vec![0.0; d],
        })
    }

    /// Advances one step; `rel` is the relative step already completed count.
    fn step(&mut self, rel: usize, w: &NoiseGrid) -> Result<()> {
        let d = self.model.dim;
        let n = self.i_s + rel as i64;
        let phase = n.rem_euclid(self.spp);
        let t_phase = phase as f64 * self.h;
        let window = &self.history[rel * d..(rel + self.m + 1) * d];
        let view = SegmentView { values: window, dim: d, step: self.h };
        (self.model.drift)(t_phase, &view, &mut self.b);
        let newest: Vec<f64> = view.newest().to_vec();
        let mut next = vec![0.0; d];
        match &self.model.diffusion {
            DelayDiffusion::Zero => {
                for k in 0..d {
                    next[k] = newest[k] + self.b[k] * self.h;
                }
            }
            DelayDiffusion::Full(sigma) => {
                sigma(t_phase, &view, &mut self.sig);
                w.increment_into(n, &mut self.dw);
                for k in 0..d {
                    let mut diff = 0.0;
                    for j in 0..d {
                        diff += self.sig[k * d + j] * self.dw[j];
                    }
                    next[k] = newest[k] + self.b[k] * self.h + diff;
                }
            }
        }
        let mag2 = next.iter().map(|x| x * x).sum::<f64>();
        if !mag2.is_finite() || mag2 > DIVERGENCE_LIMIT * DIVERGENCE_LIMIT {
            return Err(Error::Divergence {
                step: rel + 1,
                time: (n + 1) as f64 * self.h,
                magnitude: mag2.sqrt(),
            });
        }
        self.sup_norm = self.sup_norm.max(mag2.sqrt());
        self.history.extend_from_slice(&next);
        Ok(())
    }

    fn segment_at(&self, rel: usize) -> SegmentState {
        let d = self.model.dim;
        SegmentState {
            anchor_index: self.i_s + rel as i64,
            step: self.h,
            dim: d,
            values: self.history[rel * d..(rel + self.m + 1) * d].to_vec(),
            norm_kind: self.model.norm_kind(),
        }
    }

    fn difference_norm(&self, other: &Self, rel: usize) -> f64 {
        let d = self.model.dim;
        let a = &self.history[rel * d..(rel + self.m + 1) * d];
        let b = &other.history[rel * d..(rel + self.m + 1) * d];
        let mut best = 0.0_f64;
        for row in 0..=self.m {
            let mut mag2 = 0.0;
            for k in 0..d {
                let diff = a[row * d + k] - b[row * d + k];
                mag2 += diff * diff;
            }
            let mag = mag2.sqrt();
            let weighted = match self.model.norm_kind() {
                SegmentNorm::Sup => mag,
                SegmentNorm::Weighted { alpha0 } => {
                    (alpha0 * (-((self.m - row) as f64) * self.h)).exp() * mag
                }
            };
            best = best.max(weighted);
        }
        best
    }
}

/// Integrates the functional SDE from s to t starting from segment `xi`
/// (re-anchored at s), returning segments at the requested output times.
pub fn simulate_delay(
    model: &DelayModel,
    s: f64,
    t: f64,
    xi: &SegmentState,
    w: &NoiseGrid,
    output_times: &[f64],
) -> Result<DelayOutput> {
    if t < s {
        return Err(Error::Domain(format!("need t >= s, got s={s}, t={t}")));
    }
    let mut stepper = DelayStepper::new(model, s, xi, w)?;
    let h = stepper.h;
    let i_s = stepper.i_s;
    let i_t = time_to_index(t, h)?;
    w.check_covers(i_s, i_t)?;
    let n_steps = (i_t - i_s) as usize;

    let mut marks: Vec<usize> = Vec::with_capacity(output_times.len());
    for &ot in output_times {
        let idx = time_to_index(ot, h)?;
        if idx < i_s || idx > i_t {
            return Err(Error::Alignment(format!("output time {ot} outside [{s}, {t}]")));
        }
        marks.push((idx - i_s) as usize);
    }

    for rel in 0..n_steps {
        stepper.step(rel, w)?;
    }
    let segments = marks.iter().map(|&rel| stepper.segment_at(rel)).collect();
    let truncation_bound = match model.memory() {
        Memory::Infinite { alpha0, horizon, .. } => {
            Some((-alpha0 * horizon).exp() * stepper.sup_norm)
        }
        Memory::Finite { .. } => None,
    };
    Ok(DelayOutput { segments, truncation_bound, sup_state_norm: stepper.sup_norm })
}

/// A synchronously coupled pair of functional solutions (same increments).
#[derive(Debug, Clone)]
pub struct CoupledDelayRun {
    pub start_index: i64,
    pub step: f64,
    /// (relative step, ‖X_t − Y_t‖ in the model norm) at the recorded marks.
    pub lambda_norms: Vec<(usize, f64)>,
    pub final_first: SegmentState,
    pub final_second: SegmentState,
}

impl CoupledDelayRun {
    pub fn times(&self) -> Vec<f64> {
        self.lambda_norms.iter().map(|&(k, _)| (self.start_index + k as i64) as f64 * self.step).collect()
    }
}

/// Drives two copies of the model with the same noise, recording the segment
/// distance every `stride` steps (plus the final step).
pub fn simulate_delay_coupled(
    model: &DelayModel,
    s: f64,
    t: f64,
    xi: &SegmentState,
    eta: &SegmentState,
    w: &NoiseGrid,
    stride: usize,
) -> Result<CoupledDelayRun> {
    if t < s {
        return Err(Error::Domain(format!("need t >= s, got s={s}, t={t}")));
    }
    let stride = stride.max(1);
    let mut a = DelayStepper::new(model, s, xi, w)?;
    let mut b = DelayStepper::new(model, s, eta, w)?;
    let h = a.h;
    let i_s = a.i_s;
    let i_t = time_to_index(t, h)?;
    w.check_covers(i_s, i_t)?;
    let n_steps = (i_t - i_s) as usize;

    let mut lambda_norms = Vec::new();
    for rel in 0..=n_steps {
        if rel % stride == 0 || rel == n_steps {
            lambda_norms.push((rel, a.difference_norm(&b, rel)));
        }
        if rel < n_steps {
            a.step(rel, w)?;
            b.step(rel, w)?;
        }
    }
    Ok(CoupledDelayRun {
        start_index: i_s,
        step: h,
        lambda_norms,
        final_first: a.segment_at(n_steps),
        final_second: b.segment_at(n_steps),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pure_delay_model() -> DelayModel {
        // dX = −X(t − 1) dt, no noise.
        DelayModel::new(
            1,
            1.0,
            Memory::Finite { r0: 1.0 },
            Arc::new(|_t, seg: &SegmentView, out: &mut [f64]| {
                out[0] = -seg.at_theta(-1.0).unwrap()[0];
            }),
            DelayDiffusion::Zero,
        )
        .unwrap()
    }

    #[test]
    fn pure_delay_matches_method_of_steps() {
        let model = pure_delay_model();
        let h = 0.01;
        let w = NoiseGrid::new(1, 0, 0.0, h, 100, 1).unwrap();
        let xi = SegmentState::constant(0, h, 100, &[1.0], SegmentNorm::Sup).unwrap();
        let out = simulate_delay(&model, 0.0, 1.0, &xi, &w, &[1.0]).unwrap();
        let seg = &out.segments[0];
        // Closed form on [0, 1]: X(u) = 1 − u.
        for k in 0..=100 {
            let u = k as f64 * h;
            let x = seg.values[k]; // chronological from t = 0
            assert!((x - (1.0 - u)).abs() <= 5.0 * h, "X({u}) = {x}");
        }
    }

    #[test]
    fn frozen_dynamics_stay_put() {
        let model = DelayModel::new(
            1,
            1.0,
            Memory::Finite { r0: 0.5 },
            Arc::new(|_t, _seg: &SegmentView, out: &mut [f64]| out[0] = 0.0),
            DelayDiffusion::Zero,
        )
        .unwrap();
        let h = 0.25;
        let w = NoiseGrid::new(1, 0, 0.0, h, 64, 1).unwrap();
        let xi = SegmentState::constant(0, h, 2, &[3.25], SegmentNorm::Sup).unwrap();
        let out = simulate_delay(&model, 0.0, 8.0, &xi, &w, &[8.0]).unwrap();
        assert!(out.segments[0].values.iter().all(|&v| v == 3.25));
    }

    #[test]
    fn semi_flow_split_is_bit_exact() {
        // Noisy linear delay model; splitting at the midpoint must reproduce
        // the straight-through run exactly.
        let model = DelayModel::new(
            1,
            1.0,
            Memory::Finite { r0: 0.5 },
            Arc::new(|_t, seg: &SegmentView, out: &mut [f64]| {
                out[0] = -2.0 * seg.newest()[0] + 0.5 * seg.at_theta(-0.5).unwrap()[0];
            }),
            DelayDiffusion::Full(Arc::new(|_t, seg: &SegmentView, out: &mut [f64]| {
                out[0] = 0.3 * seg.newest()[0] + 0.1;
            })),
        )
        .unwrap();
        let h = 0.125;
        let w = NoiseGrid::new(42, 3, 0.0, h, 128, 1).unwrap();
        let xi = SegmentState::constant(0, h, 4, &[1.0], SegmentNorm::Sup).unwrap();
        let straight = simulate_delay(&model, 0.0, 8.0, &xi, &w, &[8.0]).unwrap();
        let first = simulate_delay(&model, 0.0, 4.0, &xi, &w, &[4.0]).unwrap();
        let second = simulate_delay(&model, 4.0, 8.0, &first.segments[0], &w, &[8.0]).unwrap();
        let a = &straight.segments[0].values;
        let b = &second.segments[0].values;
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn synchronous_coupling_identical_starts() {
        let model = pure_delay_model();
        let h = 0.125;
        let w = NoiseGrid::new(9, 0, 0.0, h, 64, 1).unwrap();
        let xi = SegmentState::constant(0, h, 8, &[2.0], SegmentNorm::Sup).unwrap();
        let run = simulate_delay_coupled(&model, 0.0, 4.0, &xi, &xi, &w, 4).unwrap();
        assert!(run.lambda_norms.iter().all(|&(_, n)| n == 0.0));
    }

    #[test]
    fn synchronous_linear_recursion_is_deterministic() {
        // b(t, ξ) = λ₁/2 · ξ(0) with σ = c·ξ(0): the difference follows
        // Λ_{k+1} = Λ_k (1 + λ₁h/2 + c ΔW_k), deterministic given the noise.
        let lam1 = -1.6;
        let c = 0.4;
        let model = DelayModel::new(
            1,
            1.0,
            Memory::Finite { r0: 0.5 },
            Arc::new(move |_t, seg: &SegmentView, out: &mut [f64]| {
                out[0] = 0.5 * lam1 * seg.newest()[0];
            }),
            DelayDiffusion::Full(Arc::new(move |_t, seg: &SegmentView, out: &mut [f64]| {
                out[0] = c * seg.newest()[0];
            })),
        )
        .unwrap();
        let h = 0.0625;
        let w = NoiseGrid::new(17, 1, 0.0, h, 64, 1).unwrap();
        let xi = SegmentState::constant(0, h, 8, &[1.0], SegmentNorm::Sup).unwrap();
        let eta = SegmentState::constant(0, h, 8, &[-1.0], SegmentNorm::Sup).unwrap();
        let run = simulate_delay_coupled(&model, 0.0, 2.0, &xi, &eta, &w, 32).unwrap();
        // The recorded norm is the sup of |Λ| over the trailing window,
        // reproducible from the scalar recursion.
        let mut lambda = vec![2.0_f64];
        for k in 0..32 {
            let last = *lambda.last().unwrap();
            lambda.push(last * (1.0 + 0.5 * lam1 * h + c * w.increment(k, 0)));
        }
        let expect = lambda[32 - 8..].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let (_, endpoint) = run.lambda_norms.last().unwrap();
        assert!((endpoint - expect).abs() < 1e-12, "{endpoint} vs {expect}");
    }

    #[test]
    fn deterministic_linear_decay_matches_product_formula() {
        // σ ≡ 0: |Λ(t)| = |Λ(s)| ∏ (1 + λ₁(t_k) h / 2) ≈ e^{½∫λ₁}.
        let lam1 = -1.0;
        let model = DelayModel::new(
            1,
            1.0,
            Memory::Finite { r0: 0.5 },
            Arc::new(move |_t, seg: &SegmentView, out: &mut [f64]| {
                out[0] = 0.5 * lam1 * seg.newest()[0];
            }),
            DelayDiffusion::Zero,
        )
        .unwrap();
        let h = 1e-3;
        let w = NoiseGrid::new(3, 0, 0.0, h, 1000, 1).unwrap();
        let xi = SegmentState::constant(0, h, 500, &[1.0], SegmentNorm::Sup).unwrap();
        let eta = SegmentState::constant(0, h, 500, &[0.0], SegmentNorm::Sup).unwrap();
        let run = simulate_delay_coupled(&model, 0.0, 1.0, &xi, &eta, &w, 1000).unwrap();
        // Endpoint value decays like e^{λ₁/2}; the sup over the trailing
        // window lags behind by up to r₀ worth of decay.
        let (_, endpoint) = run.lambda_norms.last().unwrap();
        let lo = (0.5_f64 * lam1 * 1.0).exp();
        let hi = (0.5_f64 * lam1 * 0.5).exp();
        assert!(*endpoint >= lo * (1.0 - 2e-2) && *endpoint <= hi * (1.0 + 2e-2), "‖Λ‖ = {endpoint}");
    }

    #[test]
    fn weighted_norm_cancels_exponential_history() {
        let h = 0.5;
        let alpha0 = 1.0;
        let m = 6;
        let mut values = Vec::new();
        for row in 0..=m {
            let theta = -((m - row) as f64) * h;
            values.push((-alpha0 * theta).exp());
        }
        let seg = SegmentState::new(0, h, 1, values, SegmentNorm::Weighted { alpha0 }).unwrap();
        assert!((seg.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_norm_hand_computed_three_points() {
        // Frozen dynamics: after k steps the initial window slides back by
        // k·h, so each history point is discounted by e^{−α₀·age}.
        let h = 1.0;
        let alpha0 = 0.5;
        let seg = SegmentState::new(
            0,
            h,
            1,
            vec![4.0, 0.1, 0.2],
            SegmentNorm::Weighted { alpha0 },
        )
        .unwrap();
        // Weighted values: 4e^{-1}, 0.1e^{-0.5}, 0.2.
        let expect = (4.0 * (-1.0_f64).exp()).max(0.1 * (-0.5_f64).exp()).max(0.2);
        assert!((seg.norm() - expect).abs() < 1e-15);
    }

    #[test]
    fn infinite_memory_semi_flow_split_is_bit_exact() {
        let h = 0.25;
        let horizon = default_horizon(1.5, h, 1e-8);
        let model = DelayModel::new(
            1,
            1.0,
            Memory::Infinite { alpha0: 1.5, horizon, truncation_tol: 1e-8 },
            Arc::new(|_t, seg: &SegmentView, out: &mut [f64]| {
                out[0] = -seg.newest()[0] + 0.2 * seg.at_theta(-0.5).unwrap()[0];
            }),
            DelayDiffusion::Full(Arc::new(|_t, seg: &SegmentView, out: &mut [f64]| {
                out[0] = 0.3 * seg.newest()[0] + 0.1;
            })),
        )
        .unwrap();
        let m = model.window_steps(h).unwrap();
        let w = NoiseGrid::new(77, 0, 0.0, h, 64, 1).unwrap();
        let xi = SegmentState::constant(0, h, m, &[1.0], model.norm_kind()).unwrap();
        let straight = simulate_delay(&model, 0.0, 10.0, &xi, &w, &[10.0]).unwrap();
        let first = simulate_delay(&model, 0.0, 5.0, &xi, &w, &[5.0]).unwrap();
        let second = simulate_delay(&model, 5.0, 10.0, &first.segments[0], &w, &[10.0]).unwrap();
        for (a, b) in straight.segments[0].values.iter().zip(&second.segments[0].values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn infinite_memory_horizon_must_cover_tolerance() {
        let r = DelayModel::new(
            1,
            1.0,
            Memory::Infinite { alpha0: 1.0, horizon: 2.0, truncation_tol: 1e-8 },
            Arc::new(|_t, _s: &SegmentView, out: &mut [f64]| out[0] = 0.0),
            DelayDiffusion::Zero,
        );
        assert!(r.is_err());
        let h = default_horizon(1.0, 0.5, 1e-8);
        assert!((-h).exp() < 1e-8);
        assert!(guarded_multiple(h, 0.5).is_some());
    }

    #[test]
    fn truncation_bound_reported_for_infinite_memory() {
        let h = 0.25;
        let horizon = default_horizon(2.0, h, 1e-8);
        let model = DelayModel::new(
            1,
            1.0,
            Memory::Infinite { alpha0: 2.0, horizon, truncation_tol: 1e-8 },
            Arc::new(|_t, seg: &SegmentView, out: &mut [f64]| out[0] = -seg.newest()[0]),
            DelayDiffusion::Full(Arc::new(|_t, _s: &SegmentView, out: &mut [f64]| out[0] = 0.5)),
        )
        .unwrap();
        let m = model.window_steps(h).unwrap();
        let w = NoiseGrid::new(11, 0, 0.0, h, 64, 1).unwrap();
        let xi =
            SegmentState::constant(0, h, m, &[1.0], SegmentNorm::Weighted { alpha0: 2.0 }).unwrap();
        let out = simulate_delay(&model, 0.0, 8.0, &xi, &w, &[8.0]).unwrap();
        let bound = out.truncation_bound.unwrap();
        assert!(bound > 0.0 && bound <= 1e-8 * out.sup_state_norm * (1.0 + 1e-12));
    }

    #[test]
    fn doubling_horizon_changes_weighted_norm_within_tail_bound() {
        let h = 0.25;
        let alpha0 = 2.0;
        let tol = 1e-8;
        let horizon = default_horizon(alpha0, h, tol);
        let make = |hor: f64| {
            DelayModel::new(
                1,
                1.0,
                Memory::Infinite { alpha0, horizon: hor, truncation_tol: tol },
                Arc::new(|_t, seg: &SegmentView, out: &mut [f64]| out[0] = -seg.newest()[0]),
                DelayDiffusion::Full(Arc::new(|_t, _s: &SegmentView, out: &mut [f64]| out[0] = 0.4)),
            )
            .unwrap()
        };
        let m1 = make(horizon);
        let m2 = make(2.0 * horizon);
        let w = NoiseGrid::new(23, 0, 0.0, h, 64, 1).unwrap();
        let xi1 = SegmentState::constant(0, h, m1.window_steps(h).unwrap(), &[1.0], SegmentNorm::Weighted { alpha0 })
            .unwrap();
        let xi2 = SegmentState::constant(0, h, m2.window_steps(h).unwrap(), &[1.0], SegmentNorm::Weighted { alpha0 })
            .unwrap();
        let o1 = simulate_delay(&m1, 0.0, 8.0, &xi1, &w, &[8.0]).unwrap();
        let o2 = simulate_delay(&m2, 0.0, 8.0, &xi2, &w, &[8.0]).unwrap();
        let n1 = o1.segments[0].norm();
        let n2 = o2.segments[0].norm();
        let sup = o1.sup_state_norm.max(o2.sup_state_norm);
        assert!((n1 - n2).abs() < 2.0 * tol * sup, "{n1} vs {n2}");
    }

    #[test]
    fn segment_grid_mismatch_rejected() {
        let model = pure_delay_model();
        let w = NoiseGrid::new(1, 0, 0.0, 0.01, 200, 1).unwrap();
        let xi = SegmentState::constant(0, 0.02, 50, &[1.0], SegmentNorm::Sup).unwrap();
        assert!(matches!(
            simulate_delay(&model, 0.0, 1.0, &xi, &w, &[1.0]),
            Err(Error::Alignment(_))
        ));
    }
}
