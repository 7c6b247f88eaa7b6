//! Seeded, grid-discretized two-sided Brownian increments.
//!
//! Increments are never stored: increment i (absolute grid index, i64) is
//! regenerated on demand from a counter-based generator keyed by
//! (seed, stream, absolute index, component). Keying by absolute index makes
//! the Wiener shift `(θ_t ω)(s) = ω(t+s) − ω(t)` an exact integer index
//! translation, so shift composition and the group identity θ₀ = id hold
//! bit for bit.

use crate::error::{Error, Result};
use crate::rates::guarded_multiple;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stateless uniform draw in (0, 1] for a (seed, stream, counter) triple.
#[inline]
fn draw_unit(seed_base: u64, ctr: u64) -> f64 {
    let bits = mix64(seed_base.wrapping_add(ctr.wrapping_mul(GOLDEN)));
    ((bits >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0) // 2^-53
}

/// One standard normal per (index, component) via Box–Muller on two counter
/// draws. Stateless, so any increment can be regenerated independently.
#[inline]
fn draw_normal(seed_base: u64, ctr: u64) -> f64 {
    let u1 = draw_unit(seed_base, ctr);
    let u2 = draw_unit(seed_base, ctr.wrapping_add(1));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// A lazily generated d-dimensional Brownian increment grid.
///
/// The grid covers `length` increments starting at `origin_index` (in units
/// of `step`); `shift` is the accumulated Wiener-shift offset applied when
/// increments are read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoiseGrid {
    seed: u64,
    stream: u64,
    seed_base: u64,
    step_bits: u64,
    origin_index: i64,
    length: i64,
    dim: usize,
    shift: i64,
}

/// Components per index are sub-keyed in the low counter bits; this caps the
/// state dimension.
pub const MAX_DIM: usize = 127;

impl NoiseGrid {
    /// Creates a grid of `length` increments of variance `step` per component
    /// starting at time `origin` (which must sit on the step grid).
    pub fn new(seed: u64, stream: u64, origin: f64, step: f64, length: usize, dim: usize) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::Config(format!("noise step must be positive, got {step}")));
        }
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Config(format!("dimension must be in 1..={MAX_DIM}, got {dim}")));
        }
        let origin_index = guarded_multiple(origin, step).ok_or_else(|| {
            Error::Alignment(format!("origin {origin} is not a multiple of step {step}"))
        })?;
        Ok(Self {
            seed,
            stream,
            seed_base: mix64(seed ^ mix64(stream.wrapping_mul(GOLDEN))),
            step_bits: step.to_bits(),
            origin_index,
            length: length as i64,
            dim,
            shift: 0,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn stream(&self) -> u64 {
        self.stream
    }
    pub fn step(&self) -> f64 {
        f64::from_bits(self.step_bits)
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.length as usize
    }
    pub fn is_empty(&self) -> bool {
        self.length == 0
    }
    /// First covered absolute grid index.
    pub fn origin_index(&self) -> i64 {
        self.origin_index
    }
    pub fn origin(&self) -> f64 {
        self.origin_index as f64 * self.step()
    }

    /// Checks that increments for absolute indices [first, last) are covered.
    pub fn check_covers(&self, first: i64, last: i64) -> Result<()> {
        if first < self.origin_index || last > self.origin_index + self.length {
            return Err(Error::Alignment(format!(
                "noise grid covers indices [{}, {}) but [{}, {}) were requested",
                self.origin_index,
                self.origin_index + self.length,
                first,
                last
            )));
        }
        Ok(())
    }

    /// Writes the increment for absolute grid index `index` into `out`
    /// (one N(0, step) draw per component).
    pub fn increment_into(&self, index: i64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        let keyed = index + self.shift;
        let sqrt_h = self.step().sqrt();
        // Two counter slots per component (Box–Muller pair).
        let base_ctr = (keyed as u64) << 8;
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = draw_normal(self.seed_base, base_ctr | ((j as u64) << 1)) * sqrt_h;
        }
    }

    /// Convenience scalar access for component `j` of increment `index`.
    pub fn increment(&self, index: i64, j: usize) -> f64 {
        let keyed = index + self.shift;
        let base_ctr = (keyed as u64) << 8;
        draw_normal(self.seed_base, base_ctr | ((j as u64) << 1)) * self.step().sqrt()
    }

    /// The Wiener shift θ_t as a view: increment i of the result equals
    /// increment i + t/step of `self`. The shift must sit on the step grid.
    pub fn wiener_shift(&self, shift: f64) -> Result<Self> {
        let k = guarded_multiple(shift, self.step()).ok_or_else(|| {
            Error::Alignment(format!("shift {shift} is not a multiple of step {}", self.step()))
        })?;
        Ok(self.wiener_shift_steps(k))
    }

    /// Integer-step variant of [`wiener_shift`](Self::wiener_shift).
    pub fn wiener_shift_steps(&self, steps: i64) -> Self {
        let mut out = self.clone();
        out.shift += steps;
        out.origin_index -= steps;
        out
    }

    /// Sample moments over the first `n` increments of component 0, used by
    /// the distributional smoke test.
    pub fn sample_moments(&self, n: usize) -> (f64, f64) {
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for i in 0..n {
            let v = self.increment(self.origin_index + i as i64, 0);
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / n as f64;
        (mean, sum2 / n as f64 - mean * mean)
    }
}
