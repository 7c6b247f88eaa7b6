//! τ-periodic rate functions with exact integrals.
//!
//! Two representations are supported, both admitting closed-form
//! antiderivatives: trigonometric polynomials and piecewise constants. The
//! integral over an arbitrary span [s, t] is computed by the periodic
//! decomposition
//!
//! ```text
//! ∫_s^t f = ⌊(t−s)/τ⌋ ∫_0^τ f + ∫_a^b f,   a = s − ⌊s/τ⌋τ,  b = t − (⌊s/τ⌋+⌊(t−s)/τ⌋)τ,
//! ```
//!
//! so whole periods contribute the one-period integral exactly and only a
//! sub-period remainder window is evaluated through the antiderivative.

use std::f64::consts::TAU as TWO_PI;

use crate::error::{Error, Result};

/// Absolute slack when deciding whether a ratio is an integer.
pub const FLOOR_GUARD: f64 = 1e-12;

/// Floor with a half-ulp style guard: ratios within [`FLOOR_GUARD`] of an
/// integer are snapped to it, so spans of exactly k periods yield k.
pub fn guarded_floor(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= FLOOR_GUARD {
        r
    } else {
        x.floor()
    }
}

/// Checks that `x` is an integer multiple of `step` within the guard and
/// returns the multiplier.
pub fn guarded_multiple(x: f64, step: f64) -> Option<i64> {
    if step <= 0.0 {
        return None;
    }
    let q = x / step;
    let r = q.round();
    if (q - r).abs() <= 1e-9 * q.abs().max(1.0) {
        Some(r as i64)
    } else {
        None
    }
}

/// Declared sign behaviour of a rate, validated on a dense one-period grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignClass {
    Signed,
    Nonnegative,
    StrictlyPositive,
}

/// One harmonic of a trig polynomial: `cos_coef·cos(2πk t/τ) + sin_coef·sin(2πk t/τ)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrigTerm {
    pub k: u32,
    pub cos_coef: f64,
    pub sin_coef: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RateForm {
    /// `constant + Σ_k cos_coef·cos(2πk t/τ) + sin_coef·sin(2πk t/τ)`
    Trig { constant: f64, terms: Vec<TrigTerm> },
    /// Right-open steps on \[0, τ): piece j holds on `[breaks[j], breaks[j+1])`.
    /// `breaks[0]` must be 0 and breaks must be strictly increasing below τ.
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
}

/// A τ-periodic scalar rate function with exact integral arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicRate {
    period: f64,
    form: RateForm,
    sign_class: SignClass,
}

/// Grid size used for sign validation and sup-norm scans.
const SCAN_GRID: usize = 10_000;

impl PeriodicRate {
    pub fn new(period: f64, form: RateForm, sign_class: SignClass) -> Result<Self> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::Config(format!("period must be positive, got {period}")));
        }
        match &form {
            RateForm::Trig { constant, terms } => {
                if !constant.is_finite() {
                    return Err(Error::Config("trig constant must be finite".into()));
                }
                for t in terms {
                    if t.k == 0 {
                        return Err(Error::Config(
                            "trig term with k = 0 is not allowed; fold it into the constant".into(),
                        ));
                    }
                    if !t.cos_coef.is_finite() || !t.sin_coef.is_finite() {
                        return Err(Error::Config("trig coefficients must be finite".into()));
                    }
                }
            }
            RateForm::Piecewise { breaks, values } => {
                if breaks.is_empty() || breaks.len() != values.len() {
                    return Err(Error::Config(format!(
                        "piecewise form needs equally many breaks and values (got {} / {})",
                        breaks.len(),
                        values.len()
                    )));
                }
                if breaks[0] != 0.0 {
                    return Err(Error::Config("first breakpoint must be 0".into()));
                }
                for w in breaks.windows(2) {
                    if !(w[1] > w[0]) {
                        return Err(Error::Config("breakpoints must be strictly increasing".into()));
                    }
                }
                if *breaks.last().unwrap() >= period {
                    return Err(Error::Config("breakpoints must lie in [0, period)".into()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config("piecewise values must be finite".into()));
                }
            }
        }
        let rate = Self { period, form, sign_class };
        rate.validate_sign_class()?;
        Ok(rate)
    }

    /// Constant rate `c` (trig form with no harmonics).
    pub fn constant(period: f64, c: f64) -> Result<Self> {
        let class = if c > 0.0 {
            SignClass::StrictlyPositive
        } else if c >= 0.0 {
            SignClass::Nonnegative
        } else {
            SignClass::Signed
        };
        Self::new(period, RateForm::Trig { constant: c, terms: vec![] }, class)
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn form(&self) -> &RateForm {
        &self.form
    }

    pub fn sign_class(&self) -> SignClass {
        self.sign_class
    }

    /// Returns a rate shifted by the scalar `c` (same harmonics / steps).
    pub fn shifted(&self, c: f64, sign_class: SignClass) -> Result<Self> {
        let form = match &self.form {
            RateForm::Trig { constant, terms } => {
                RateForm::Trig { constant: constant + c, terms: terms.clone() }
            }
            RateForm::Piecewise { breaks, values } => RateForm::Piecewise {
                breaks: breaks.clone(),
                values: values.iter().map(|v| v + c).collect(),
            },
        };
        Self::new(self.period, form, sign_class)
    }

    fn validate_sign_class(&self) -> Result<()> {
        let min = match self.sign_class {
            SignClass::Signed => return Ok(()),
            _ => self.min_one_period(),
        };
        match self.sign_class {
            SignClass::Nonnegative if min < 0.0 => Err(Error::Config(format!(
                "rate declared nonnegative but attains {min:.6e} on one period"
            ))),
            SignClass::StrictlyPositive if min <= 0.0 => Err(Error::Config(format!(
                "rate declared strictly positive but attains {min:.6e} on one period"
            ))),
            _ => Ok(()),
        }
    }

    /// Evaluates f(t) with exact modular reduction (valid for negative t).
    pub fn eval(&self, t: f64) -> f64 {
        self.eval_reduced(t.rem_euclid(self.period))
    }

    /// Evaluates at a phase already reduced into [0, τ).
    fn eval_reduced(&self, u: f64) -> f64 {
        match &self.form {
            RateForm::Trig { constant, terms } => {
                let mut acc = *constant;
                for term in terms {
                    let arg = TWO_PI * term.k as f64 * u / self.period;
                    acc += term.cos_coef * arg.cos() + term.sin_coef * arg.sin();
                }
                acc
            }
            RateForm::Piecewise { breaks, values } => {
                // Last piece whose breakpoint is <= u.
                let idx = match breaks.binary_search_by(|b| b.partial_cmp(&u).unwrap()) {
                    Ok(i) => i,
                    Err(i) => i.saturating_sub(1),
                };
                values[idx]
            }
        }
    }

    /// Exact antiderivative of the periodic extension, with F(0) = 0.
    pub fn antiderivative(&self, t: f64) -> f64 {
        let n = guarded_floor(t / self.period);
        let u = t - n * self.period;
        n * self.period_integral() + self.in_period_antiderivative(u)
    }

    /// Antiderivative restricted to one period, G(u) = ∫_0^u f, u ∈ [0, τ].
    fn in_period_antiderivative(&self, u: f64) -> f64 {
        match &self.form {
            RateForm::Trig { constant, terms } => {
                let mut acc = constant * u;
                for term in terms {
                    let w = TWO_PI * term.k as f64 / self.period;
                    let arg = w * u;
                    // ∫ cos = sin/w, ∫ sin = (1−cos)/w so G(0) = 0 termwise.
                    acc += term.cos_coef * arg.sin() / w + term.sin_coef * (1.0 - arg.cos()) / w;
                }
                acc
            }
            RateForm::Piecewise { breaks, values } => {
                let mut acc = 0.0;
                for j in 0..breaks.len() {
                    let lo = breaks[j];
                    let hi = if j + 1 < breaks.len() { breaks[j + 1] } else { self.period };
                    if u <= lo {
                        break;
                    }
                    acc += values[j] * (u.min(hi) - lo);
                }
                acc
            }
        }
    }

    /// ∫_0^τ f(u) du, exactly (oscillatory terms vanish over a full period).
    pub fn period_integral(&self) -> f64 {
        match &self.form {
            RateForm::Trig { constant, .. } => constant * self.period,
            RateForm::Piecewise { breaks, values } => {
                let mut acc = 0.0;
                for j in 0..breaks.len() {
                    let hi = if j + 1 < breaks.len() { breaks[j + 1] } else { self.period };
                    acc += values[j] * (hi - breaks[j]);
                }
                acc
            }
        }
    }

    /// ∫_s^t f(u) du via the periodic decomposition; requires t ≥ s.
    pub fn integrate(&self, s: f64, t: f64) -> Result<f64> {
        if t < s {
            return Err(Error::Domain(format!("integrate needs t >= s (got s={s}, t={t})")));
        }
        Ok(self.integrate_unchecked(s, t))
    }

    /// Same as [`integrate`](Self::integrate) but accepts any argument order,
    /// with ∫_s^t = −∫_t^s. Used by the certificate grid searches.
    pub fn integrate_signed(&self, s: f64, t: f64) -> f64 {
        if t >= s {
            self.integrate_unchecked(s, t)
        } else {
            -self.integrate_unchecked(t, s)
        }
    }

    fn integrate_unchecked(&self, s: f64, t: f64) -> f64 {
        let tau = self.period;
        let whole = guarded_floor((t - s) / tau);
        let base = guarded_floor(s / tau);
        let a = s - base * tau;
        let b = t - (base + whole) * tau;
        whole * self.period_integral() + (self.antiderivative(b) - self.antiderivative(a))
    }

    /// max |f| over [0, τ]: exact for piecewise, dense grid plus golden-section
    /// refinement for trig.
    pub fn sup_abs_one_period(&self) -> f64 {
        match &self.form {
            RateForm::Piecewise { values, .. } => {
                values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
            }
            RateForm::Trig { .. } => {
                let f = |u: f64| self.eval_reduced(u).abs();
                self.refined_extremum(f).1
            }
        }
    }

    /// min f over [0, τ] (same scan machinery, used for sign validation).
    pub fn min_one_period(&self) -> f64 {
        match &self.form {
            RateForm::Piecewise { values, .. } => {
                values.iter().fold(f64::INFINITY, |m, v| m.min(*v))
            }
            RateForm::Trig { .. } => {
                let f = |u: f64| -self.eval_reduced(u);
                -self.refined_extremum(f).1
            }
        }
    }

    /// Maximizes `f` over [0, τ]: grid scan then golden-section around the
    /// best grid point. Returns (argmax, max).
    fn refined_extremum<F: Fn(f64) -> f64>(&self, f: F) -> (f64, f64) {
        let tau = self.period;
        let n = SCAN_GRID;
        let mut best_i = 0usize;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=n {
            let u = tau * i as f64 / n as f64;
            let v = f(u);
            if v > best {
                best = v;
                best_i = i;
            }
        }
        let step = tau / n as f64;
        let lo = (tau * best_i as f64 / n as f64 - step).max(0.0);
        let hi = (tau * best_i as f64 / n as f64 + step).min(tau);
        let (x, v) = golden_max(&f, lo, hi, 1e-10 * tau);
        if v > best {
            (x, v)
        } else {
            (tau * best_i as f64 / n as f64, best)
        }
    }
}

/// Golden-section maximization on [lo, hi] to bracket width `tol`.
pub(crate) fn golden_max<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    let mid = 0.5 * (lo + hi);
    (mid, f(mid))
}
