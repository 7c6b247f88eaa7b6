//! Contraction-hypothesis constants and inequality checks.
//!
//! The three model classes each come with a set of scalar conditions built
//! from one-period integrals of the rate functions:
//!
//! * finite-delay: the window extrema `c_*`, `c^*` over sub-period spans of
//!   λ₁, the decay integral `ell`, and the constant-rate corollary;
//! * infinite-delay: the nonnegativity condition on λ₁ + 2α₀, the decay
//!   integral with weight (1 + 2χ²) on λ₃, and the weighted supremum
//!   `lambda_weight`;
//! * reflection coupling: a sampled check of the long-distance dissipativity
//!   inequality for a concrete drift.
//!
//! Every check is reported as (name, passed, margin), with the margin stored
//! as the raw quantity whose sign decides the check; the direction is part of
//! the check's definition (see [`Check`]).

use serde::{Deserialize, Serialize};

use crate::coupling::CouplingMetric;
use crate::error::{Error, Result};
use crate::rates::{golden_max, PeriodicRate, SignClass};

/// Optimal upper constant of the Burkholder–Davis–Gundy inequality for
/// continuous martingales at exponent 1. Stored, not computed.
pub const BDG_CHI: f64 = 1.30693;

/// Returns the stored BDG constant χ.
pub fn bdg_chi() -> f64 {
    BDG_CHI
}

/// The rate triple (λ₁ signed, λ₂ ≥ 0, λ₃ ≥ 0) sharing one period.
#[derive(Debug, Clone)]
pub struct RateTriple {
    pub lambda1: PeriodicRate,
    pub lambda2: PeriodicRate,
    pub lambda3: PeriodicRate,
}

impl RateTriple {
    pub fn new(lambda1: PeriodicRate, lambda2: PeriodicRate, lambda3: PeriodicRate) -> Result<Self> {
        let tau = lambda1.period();
        if lambda2.period() != tau || lambda3.period() != tau {
            return Err(Error::Config(format!(
                "rate periods differ: {} / {} / {}",
                tau,
                lambda2.period(),
                lambda3.period()
            )));
        }
        for (name, rate) in [("lambda2", &lambda2), ("lambda3", &lambda3)] {
            if rate.sign_class() == SignClass::Signed {
                return Err(Error::Config(format!("{name} must be declared nonnegative")));
            }
        }
        Ok(Self { lambda1, lambda2, lambda3 })
    }

    pub fn period(&self) -> f64 {
        self.lambda1.period()
    }

    /// Constant rates -λ₁ᶜ, λ₂ᶜ, λ₃ᶜ (the corollary setting).
    pub fn constants(tau: f64, lambda1c: f64, lambda2c: f64, lambda3c: f64) -> Result<Self> {
        Self::new(
            PeriodicRate::constant(tau, -lambda1c)?,
            PeriodicRate::constant(tau, lambda2c)?,
            PeriodicRate::constant(tau, lambda3c)?,
        )
    }
}

/// Long-distance dissipativity parameters: contraction of strength K₂ beyond
/// radius L, expansion at most K₁ inside, both modulated by α(t) > 0.
#[derive(Debug, Clone)]
pub struct HHParams {
    pub k1: f64,
    pub k2: f64,
    pub l: f64,
    pub alpha: PeriodicRate,
}

impl HHParams {
    pub fn new(k1: f64, k2: f64, l: f64, alpha: PeriodicRate) -> Result<Self> {
        if !(k2 > 0.0) {
            return Err(Error::Config(format!("K2 must be > 0, got {k2}")));
        }
        if k1 < 0.0 || l < 0.0 {
            return Err(Error::Config(format!("K1 and L must be >= 0, got {k1}, {l}")));
        }
        if alpha.sign_class() != SignClass::StrictlyPositive {
            return Err(Error::Config("alpha must be declared strictly positive".into()));
        }
        Ok(Self { k1, k2, l, alpha })
    }
}

/// One named inequality check. `margin` is the raw decided quantity; whether
/// large or small margins are good depends on the check:
///
/// * `BB1`  passes iff margin ≥ 0        (margin = ∫(λ₁+2α₀))
/// * `Bstar` passes iff margin < 0       (margin = ∫(λ₁+λ₂+(1+2χ²)λ₃))
/// * `WE`   passes iff margin < 0        (margin = ell)
/// * `EW`   passes iff margin > 0        (margin = λ₁ − 2e^{λ₁r₀}(λ₂+λ₃+2λ₃χ²e^{λ₁r₀}))
/// * `HH`   passes iff margin ≤ 0        (margin = max sampled violation)
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateKind {
    Reflection,
    FiniteDelay,
    InfiniteDelay,
}

/// Machine-readable certificate: all computed constants plus pass/fail of
/// each hypothesis. Fields not applicable to the kind are null.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub input_digest: String,
    pub kind: CertificateKind,
    /// Window infimum c_* of ∫_{u+θ}^u λ₁ (delay kinds).
    pub c_star: Option<f64>,
    /// Window supremum c^* (delay kinds).
    pub c_upper_star: Option<f64>,
    /// One-period decay integral; contraction requires ell < 0 (finite delay).
    pub ell: Option<f64>,
    /// Weighted-history supremum (infinite delay), ≥ 0 when defined.
    pub lambda_weight: Option<f64>,
    /// inf φ′ of the attached coupling metric (reflection kind).
    pub metric_c_star: Option<f64>,
    /// sup φ′ of the attached coupling metric (reflection kind).
    pub metric_c_upper_star: Option<f64>,
    pub checks: Vec<Check>,
    /// Predicted contraction exponent per period, positive iff contracting:
    /// −ell for delay kinds, (1/C^*)∫₀^τ α for reflection coupling.
    pub per_period_decay: f64,
    /// Sign convention notes for downstream consumers.
    pub decay_convention: String,
}

const DECAY_CONVENTION: &str = "per_period_decay > 0 means contraction; equals -ell for delay \
     kinds (ell is the signed one-period integral, required < 0) and (1/C_upper_star) * \
     integral_0^tau alpha for reflection coupling";

impl Certificate {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Resolution of the 2-D extremizations in the window/weight computations.
#[derive(Debug, Clone, Copy)]
pub struct GridResolution {
    /// Points per axis (the grid has points+1 nodes including both ends).
    pub points: usize,
    /// Alternating per-axis golden-section refinement rounds around the
    /// grid optimum.
    pub refine_rounds: usize,
}

impl Default for GridResolution {
    fn default() -> Self {
        Self { points: 400, refine_rounds: 2 }
    }
}

/// (c_*, c^*): extrema over u ∈ [0, τ], θ ∈ [−r₀, 0] of ∫_{u+θ}^u λ₁.
pub fn c_window_bounds(lambda1: &PeriodicRate, r0: f64, grid: GridResolution) -> Result<(f64, f64)> {
    if !(r0 > 0.0) {
        return Err(Error::Domain(format!("r0 must be > 0, got {r0}")));
    }
    let tau = lambda1.period();
    let value = |u: f64, theta: f64| lambda1.antiderivative(u) - lambda1.antiderivative(u + theta);

    let n = grid.points;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut argmin = (0.0, 0.0);
    let mut argmax = (0.0, 0.0);
    for i in 0..=n {
        let u = tau * i as f64 / n as f64;
        for j in 0..=n {
            let theta = -r0 + r0 * j as f64 / n as f64;
            let v = value(u, theta);
            if v < min {
                min = v;
                argmin = (u, theta);
            }
            if v > max {
                max = v;
                argmax = (u, theta);
            }
        }
    }
    let du = tau / n as f64;
    let dt = r0 / n as f64;
    let neg = |u: f64, theta: f64| -value(u, theta);
    min = -refine_2d(&neg, argmin, (du, dt), (0.0, tau), (-r0, 0.0), grid.refine_rounds, -min);
    max = refine_2d(&value, argmax, (du, dt), (0.0, tau), (-r0, 0.0), grid.refine_rounds, max);

    // θ = 0 contributes 0, so the window always straddles it; anything else
    // indicates the grid failed to resolve the extrema.
    let scale = 1e-9 * (1.0 + min.abs().max(max.abs()));
    if min > scale || max < -scale {
        return Err(Error::Numeric(format!(
            "window extrema do not straddle 0 (c_* = {min:.3e}, c^* = {max:.3e}); increase grid resolution"
        )));
    }
    Ok((min, max))
}

/// Alternating per-axis golden-section refinement of a 2-D maximum around a
/// grid optimum. Never returns less than the grid value.
fn refine_2d<F: Fn(f64, f64) -> f64>(
    f: &F,
    start: (f64, f64),
    cell: (f64, f64),
    xdom: (f64, f64),
    ydom: (f64, f64),
    rounds: usize,
    grid_best: f64,
) -> f64 {
    let (mut x, mut y) = start;
    let mut best = grid_best;
    for _ in 0..rounds {
        let lo = (x - cell.0).max(xdom.0);
        let hi = (x + cell.0).min(xdom.1);
        let (nx, _) = golden_max(&|t| f(t, y), lo, hi, 1e-8 * (xdom.1 - xdom.0).max(1e-30));
        x = nx;
        let lo = (y - cell.1).max(ydom.0);
        let hi = (y + cell.1).min(ydom.1);
        let (ny, v) = golden_max(&|t| f(x, t), lo, hi, 1e-8 * (ydom.1 - ydom.0).max(1e-30));
        y = ny;
        best = best.max(v);
    }
    best.max(f(x, y))
}

/// The one-period decay integral governing the finite-delay class:
/// `ell = ∫₀^τ (λ₁ + 2e^{−c_*}(λ₂ + λ₃ + 2λ₃χ²e^{−c_*+2c^*})) dr`.
/// Contraction requires ell < 0; a nonnegative value is reported, not an error.
pub fn finite_delay_decay_integral(rates: &RateTriple, r0: f64, grid: GridResolution) -> Result<f64> {
    let (c_star, c_upper) = c_window_bounds(&rates.lambda1, r0, grid)?;
    let i1 = rates.lambda1.period_integral();
    let i2 = rates.lambda2.period_integral();
    let i3 = rates.lambda3.period_integral();
    let chi2 = BDG_CHI * BDG_CHI;
    Ok(i1 + 2.0 * (-c_star).exp() * (i2 + i3 + 2.0 * chi2 * (-c_star + 2.0 * c_upper).exp() * i3))
}

/// Constant-rate corollary: margin = λ₁ − 2e^{λ₁r₀}(λ₂ + λ₃ + 2λ₃χ²e^{λ₁r₀}),
/// hypothesis holds iff margin > 0.
pub fn check_corollary_ew(lambda1c: f64, lambda2c: f64, lambda3c: f64, r0: f64) -> Result<(bool, f64)> {
    if !(lambda1c > 0.0) {
        return Err(Error::Domain(format!("lambda1 must be > 0, got {lambda1c}")));
    }
    let chi2 = BDG_CHI * BDG_CHI;
    let e = (lambda1c * r0).exp();
    let margin = lambda1c - 2.0 * e * (lambda2c + lambda3c + 2.0 * lambda3c * chi2 * e);
    Ok((margin > 0.0, margin))
}

/// Weighted-history supremum for the infinite-delay class:
/// sup over θ ≤ 0, α, β ∈ [0, τ] of (1/τ)(θ+α)∫₀^τ(λ₁+2α₀) − ∫_β^{α+β}(λ₁+2α₀).
///
/// The θ-dependence is affine with slope (1/τ)∫₀^τ(λ₁+2α₀); once that integral
/// is nonnegative the supremum in θ is attained at θ = 0 and the problem
/// reduces to a 2-D search over (α, β).
pub fn lambda_weight(lambda1: &PeriodicRate, alpha0: f64, grid: GridResolution) -> Result<f64> {
    if !(alpha0 > 0.0) {
        return Err(Error::Domain(format!("alpha0 must be > 0, got {alpha0}")));
    }
    let tau = lambda1.period();
    let g = lambda1.shifted(2.0 * alpha0, SignClass::Signed)?;
    let total = g.period_integral();
    if total < -1e-12 * (1.0 + total.abs()) {
        return Err(Error::Domain(format!(
            "one-period integral of lambda1 + 2*alpha0 is negative ({total:.6e}); the weighted supremum is unbounded"
        )));
    }

    let value = |a: f64, b: f64| (a / tau) * total - (g.antiderivative(a + b) - g.antiderivative(b));
    let n = grid.points;
    let mut max = f64::NEG_INFINITY;
    let mut arg = (0.0, 0.0);
    for i in 0..=n {
        let a = tau * i as f64 / n as f64;
        for j in 0..=n {
            let b = tau * j as f64 / n as f64;
            let v = value(a, b);
            if v > max {
                max = v;
                arg = (a, b);
            }
        }
    }
    let cell = tau / n as f64;
    max = refine_2d(&value, arg, (cell, cell), (0.0, tau), (0.0, tau), grid.refine_rounds, max);
    // (α, β) = (0, 0) contributes exactly 0.
    Ok(max.max(0.0))
}

/// Full infinite-delay certificate: BB1 nonnegativity, the B* decay integral,
/// the weighted supremum, and the predicted per-period decay.
pub fn certify_infinite_delay(
    rates: &RateTriple,
    alpha0: f64,
    grid: GridResolution,
    input_digest: String,
) -> Result<Certificate> {
    if !(alpha0 > 0.0) {
        return Err(Error::Domain(format!("alpha0 must be > 0, got {alpha0}")));
    }
    let tau = rates.period();
    let chi2 = BDG_CHI * BDG_CHI;
    let bb1 = rates.lambda1.period_integral() + 2.0 * alpha0 * tau;
    let bstar = rates.lambda1.period_integral()
        + rates.lambda2.period_integral()
        + (1.0 + 2.0 * chi2) * rates.lambda3.period_integral();
    let bb1_pass = bb1 >= -1e-12 * (1.0 + bb1.abs());
    let weight = if bb1_pass { Some(lambda_weight(&rates.lambda1, alpha0, grid)?) } else { None };
    let checks = vec![
        Check { name: "BB1".into(), passed: bb1_pass, margin: bb1 },
        Check { name: "Bstar".into(), passed: bstar < 0.0, margin: bstar },
    ];
    Ok(Certificate {
        input_digest,
        kind: CertificateKind::InfiniteDelay,
        c_star: None,
        c_upper_star: None,
        ell: None,
        lambda_weight: weight,
        metric_c_star: None,
        metric_c_upper_star: None,
        checks,
        per_period_decay: -bstar,
        decay_convention: DECAY_CONVENTION.into(),
    })
}

/// Full finite-delay certificate around [`finite_delay_decay_integral`].
pub fn certify_finite_delay(
    rates: &RateTriple,
    r0: f64,
    grid: GridResolution,
    input_digest: String,
) -> Result<Certificate> {
    let (c_star, c_upper) = c_window_bounds(&rates.lambda1, r0, grid)?;
    let ell = finite_delay_decay_integral(rates, r0, grid)?;
    let checks = vec![Check { name: "WE".into(), passed: ell < 0.0, margin: ell }];
    Ok(Certificate {
        input_digest,
        kind: CertificateKind::FiniteDelay,
        c_star: Some(c_star),
        c_upper_star: Some(c_upper),
        ell: Some(ell),
        lambda_weight: None,
        metric_c_star: None,
        metric_c_upper_star: None,
        checks,
        per_period_decay: -ell,
        decay_convention: DECAY_CONVENTION.into(),
    })
}

/// Reflection-coupling certificate: sampled dissipativity margin for a
/// concrete drift plus the metric-derived decay (1/C^*)∫₀^τ α.
pub fn certify_reflection<B>(
    drift: B,
    dim: usize,
    params: &HHParams,
    metric: &CouplingMetric,
    t_grid: &[f64],
    states: &[Vec<f64>],
    input_digest: String,
) -> Result<Certificate>
where
    B: Fn(f64, &[f64], &mut [f64]),
{
    let margin = verify_hh_margin(&drift, dim, params, t_grid, states)?;
    let alpha_integral = params.alpha.period_integral();
    let checks = vec![Check { name: "HH".into(), passed: margin <= 0.0, margin }];
    Ok(Certificate {
        input_digest,
        kind: CertificateKind::Reflection,
        c_star: None,
        c_upper_star: None,
        ell: None,
        lambda_weight: None,
        metric_c_star: Some(metric.c_star()),
        metric_c_upper_star: Some(metric.c_upper_star()),
        checks,
        per_period_decay: alpha_integral / metric.c_upper_star(),
        decay_convention: DECAY_CONVENTION.into(),
    })
}

/// Max over sampled (t, x, y) of
/// ⟨x−y, b(t,x)−b(t,y)⟩ − α(t)(K₁|x−y|²·1_{|x−y|≤L} − K₂|x−y|²·1_{|x−y|>L}).
/// A nonpositive return means the inequality holds on the sample. This is a
/// falsification check on a grid, not a proof.
pub fn verify_hh_margin<B>(
    drift: B,
    dim: usize,
    params: &HHParams,
    t_grid: &[f64],
    states: &[Vec<f64>],
) -> Result<f64>
where
    B: Fn(f64, &[f64], &mut [f64]),
{
    if t_grid.is_empty() || states.is_empty() {
        return Err(Error::Argument("sample grid must be nonempty".into()));
    }
    if states.iter().any(|x| x.len() != dim) {
        return Err(Error::Argument("sample state dimension mismatch".into()));
    }
    let mut bx = vec![0.0; dim];
    let mut by = vec![0.0; dim];
    let mut worst = f64::NEG_INFINITY;
    let mut drifts: Vec<Vec<f64>> = Vec::with_capacity(states.len());
    for &t in t_grid {
        let a = params.alpha.eval(t);
        drifts.clear();
        for x in states {
            drift(t, x, &mut bx);
            drifts.push(bx.clone());
        }
        for (i, x) in states.iter().enumerate() {
            for (j, y) in states.iter().enumerate() {
                if i == j {
                    continue;
                }
                bx.copy_from_slice(&drifts[i]);
                by.copy_from_slice(&drifts[j]);
                let mut inner = 0.0;
                let mut z2 = 0.0;
                for k in 0..dim {
                    let dz = x[k] - y[k];
                    inner += dz * (bx[k] - by[k]);
                    z2 += dz * dz;
                }
                let bound = if z2.sqrt() <= params.l { params.k1 * z2 } else { -params.k2 * z2 };
                let margin = inner - a * bound;
                if margin > worst {
                    worst = margin;
                }
            }
        }
    }
    Ok(worst)
}

/// Evenly spaced scalar states over a range, as 1-vectors.
pub fn grid_states_1d(n: usize, range: (f64, f64)) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| vec![range.0 + (range.1 - range.0) * i as f64 / (n - 1).max(1) as f64])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::{RateForm, TrigTerm};

    fn sin_rate() -> PeriodicRate {
        PeriodicRate::new(
            1.0,
            RateForm::Trig {
                constant: 0.0,
                terms: vec![TrigTerm { k: 1, cos_coef: 0.0, sin_coef: 1.0 }],
            },
            SignClass::Signed,
        )
        .unwrap()
    }

    #[test]
    fn chi_constant() {
        assert_eq!(bdg_chi(), 1.30693);
        assert!(bdg_chi() > 1.0);
        let chi2 = bdg_chi() * bdg_chi();
        assert!((chi2 - 1.70807).abs() < 5e-5);
    }

    #[test]
    fn window_bounds_constant_reduction() {
        for (c, r0) in [(1.0, 0.5), (10.0, 0.01), (0.3, 2.5)] {
            let lam = PeriodicRate::constant(1.0, -c).unwrap();
            let (lo, hi) = c_window_bounds(&lam, r0, GridResolution::default()).unwrap();
            assert!((lo - (-c * r0)).abs() < 1e-12, "c_*: {lo} vs {}", -c * r0);
            assert!(hi.abs() < 1e-12, "c^*: {hi}");
        }
    }

    #[test]
    fn window_bounds_zero_rate() {
        let lam = PeriodicRate::constant(1.0, 0.0).unwrap();
        let (lo, hi) = c_window_bounds(&lam, 0.7, GridResolution::default()).unwrap();
        assert_eq!(lo, 0.0);
        assert_eq!(hi, 0.0);
    }

    #[test]
    fn window_bounds_rejects_bad_r0() {
        let lam = PeriodicRate::constant(1.0, -1.0).unwrap();
        assert!(matches!(
            c_window_bounds(&lam, 0.0, GridResolution::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn window_bounds_sin_matches_dense_oracle() {
        let lam = sin_rate();
        let (lo, hi) = c_window_bounds(&lam, 0.25, GridResolution::default()).unwrap();
        // Brute-force 2000 x 2000 grid oracle on the same objective.
        let mut olo = f64::INFINITY;
        let mut ohi = f64::NEG_INFINITY;
        let n = 2000;
        for i in 0..=n {
            let u = i as f64 / n as f64;
            for j in 0..=n {
                let theta = -0.25 + 0.25 * j as f64 / n as f64;
                let v = lam.integrate_signed(u + theta, u);
                olo = olo.min(v);
                ohi = ohi.max(v);
            }
        }
        assert!((lo - olo).abs() < 1e-4, "{lo} vs oracle {olo}");
        assert!((hi - ohi).abs() < 1e-4, "{hi} vs oracle {ohi}");
    }

    #[test]
    fn finite_delay_decay_integral_constant_formula() {
        // Constant rates: ell must equal the closed-form corollary expression
        // and be the negated EW margin.
        let cases = [(10.0, 0.1, 0.1, 0.01), (1.0, 0.0, 0.0, 0.5), (2.0, 0.3, 0.05, 0.2)];
        let chi2 = BDG_CHI * BDG_CHI;
        for (l1, l2, l3, r0) in cases {
            let rates = RateTriple::constants(1.0, l1, l2, l3).unwrap();
            let ell = finite_delay_decay_integral(&rates, r0, GridResolution::default()).unwrap();
            let e = (l1 * r0).exp();
            let closed = -l1 + 2.0 * e * (l2 + l3 + 2.0 * l3 * chi2 * e);
            assert!((ell - closed).abs() < 1e-10, "ell {ell} vs closed {closed}");
            let (pass, margin) = check_corollary_ew(l1, l2, l3, r0).unwrap();
            assert!((margin + ell).abs() < 1e-10);
            assert_eq!(pass, ell < 0.0);
        }
    }

    #[test]
    fn finite_delay_decay_integral_reference_value() {
        // λ₁ ≡ −10, λ₂ ≡ λ₃ ≡ 0.1, r₀ = 0.01: ell ≈ −8.723437.
        let rates = RateTriple::constants(1.0, 10.0, 0.1, 0.1).unwrap();
        let ell = finite_delay_decay_integral(&rates, 0.01, GridResolution::default()).unwrap();
        assert!((ell - (-8.723437)).abs() < 1e-5, "ell = {ell}");
    }

    #[test]
    fn finite_delay_decay_integral_signs() {
        let rates = RateTriple::constants(2.0, 1.0, 0.0, 0.0).unwrap();
        let ell = finite_delay_decay_integral(&rates, 0.4, GridResolution::default()).unwrap();
        assert!((ell - (-2.0)).abs() < 1e-10); // ell = -tau for pure decay

        let anti = RateTriple::new(
            PeriodicRate::constant(2.0, 1.0).unwrap(),
            PeriodicRate::constant(2.0, 0.0).unwrap(),
            PeriodicRate::constant(2.0, 0.0).unwrap(),
        )
        .unwrap();
        let ell = finite_delay_decay_integral(&anti, 0.4, GridResolution::default()).unwrap();
        assert!((ell - 2.0).abs() < 1e-10); // hypothesis fails, reported not raised
    }

    #[test]
    fn corollary_ew_examples() {
        let (pass, margin) = check_corollary_ew(10.0, 0.1, 0.1, 0.01).unwrap();
        assert!(pass);
        assert!((margin - 8.723437).abs() < 1e-5);
        let (pass, margin) = check_corollary_ew(1.0, 0.0, 0.0, 3.0).unwrap();
        assert!(pass);
        assert!((margin - 1.0).abs() < 1e-12);
        let (pass, margin) = check_corollary_ew(1.0, 1.0, 0.0, 0.0).unwrap();
        assert!(!pass);
        assert!((margin - (-1.0)).abs() < 1e-12);
    }

    #[test]
    fn lambda_weight_constant_cases() {
        // Constant λ₁ with λ₁ + 2α₀ ≥ 0 gives exactly 0.
        let lam = PeriodicRate::constant(1.0, -1.0).unwrap();
        let w = lambda_weight(&lam, 0.5, GridResolution::default()).unwrap();
        assert!(w.abs() < 1e-12, "w = {w}");
        let lam = PeriodicRate::constant(1.0, -2.0).unwrap();
        let w = lambda_weight(&lam, 1.0, GridResolution::default()).unwrap();
        assert_eq!(w, 0.0);
        let lam = PeriodicRate::constant(1.0, 0.5).unwrap();
        let w = lambda_weight(&lam, 1.0, GridResolution::default()).unwrap();
        assert!(w.abs() < 1e-12, "w = {w}");
    }

    #[test]
    fn lambda_weight_rejects_unbounded() {
        let lam = PeriodicRate::constant(1.0, -3.0).unwrap();
        assert!(matches!(
            lambda_weight(&lam, 1.0, GridResolution::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn lambda_weight_sin_matches_brute_force_with_negative_theta() {
        // Oracle over θ ∈ [−5τ, 0] as a guard on the θ = 0 reduction.
        let lam = sin_rate();
        let alpha0 = 1.0;
        let w = lambda_weight(&lam, alpha0, GridResolution::default()).unwrap();

        let g = lam.shifted(2.0 * alpha0, SignClass::Signed).unwrap();
        let total = g.period_integral();
        let n = 500usize;
        // Precompute the antiderivative on the β / α+β node set.
        let f_at = |x: f64| g.antiderivative(x);
        let mut brute = f64::NEG_INFINITY;
        for it in 0..=n {
            let theta = -5.0 * it as f64 / n as f64;
            let theta_part = (theta / 1.0) * total;
            for ia in 0..=n {
                let a = ia as f64 / n as f64;
                for ib in 0..=n {
                    let b = ib as f64 / n as f64;
                    let v = theta_part + a * total - (f_at(a + b) - f_at(b));
                    if v > brute {
                        brute = v;
                    }
                }
            }
        }
        assert!((w - brute).abs() < 1e-4, "weight {w} vs brute {brute}");
        assert!(w >= 0.0);
    }

    #[test]
    fn infinite_delay_certificate_cases() {
        // Constant corollary setting: 2α₀ ≥ λ₁ᶜ > λ₂ᶜ + (1+2χ²)λ₃ᶜ.
        let rates = RateTriple::constants(1.0, 2.0, 0.2, 0.1).unwrap();
        let cert = certify_infinite_delay(&rates, 1.0, GridResolution::default(), String::new()).unwrap();
        assert!(cert.all_passed());
        assert_eq!(cert.lambda_weight, Some(0.0));
        assert!(cert.per_period_decay > 0.0);

        // Boundary: λ₁ ≡ −1, α₀ = 0.5 → BB1 margin exactly 0, Bstar −τ.
        let rates = RateTriple::constants(1.0, 1.0, 0.0, 0.0).unwrap();
        let cert = certify_infinite_delay(&rates, 0.5, GridResolution::default(), String::new()).unwrap();
        assert!(cert.all_passed());
        let bb1 = &cert.checks[0];
        assert!(bb1.margin.abs() < 1e-12);
        let bstar = &cert.checks[1];
        assert!((bstar.margin - (-1.0)).abs() < 1e-12);

        // Bstar violation: λ₂ ≡ 2 overwhelms λ₁ ≡ −1.
        let rates = RateTriple::constants(1.0, 1.0, 2.0, 0.0).unwrap();
        let cert = certify_infinite_delay(&rates, 1.0, GridResolution::default(), String::new()).unwrap();
        assert!(cert.checks[0].passed);
        assert!(!cert.checks[1].passed);
        assert!((cert.checks[1].margin - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infinite_delay_certificate_reports_bb1_failure_instead_of_erroring() {
        // λ₁ ≡ −3 with α₀ = 1: ∫(λ₁ + 2α₀) = −1 < 0. The certificate must
        // carry the failed check with the weighted supremum left undefined.
        let rates = RateTriple::constants(1.0, 3.0, 0.0, 0.0).unwrap();
        let cert = certify_infinite_delay(&rates, 1.0, GridResolution::default(), String::new()).unwrap();
        assert!(!cert.checks[0].passed);
        assert!((cert.checks[0].margin - (-1.0)).abs() < 1e-12);
        assert_eq!(cert.lambda_weight, None);
        assert!(!cert.all_passed());
        // Bstar is still evaluated on its own.
        assert!(cert.checks[1].passed);
    }

    #[test]
    fn hh_margin_double_well_grid() {
        // b(t,x) = α(t)(x − x³) satisfies the inequality with K₁ = K₂ = 1,
        // L = 2√2: from x² + xy + y² = ¾(x+y)² + ¼(x−y)² the margin is
        // ≤ α(t)(x−y)²(1 − (x−y)²/4) − bound ≤ 0 on both branches.
        let alpha = PeriodicRate::new(
            1.0,
            RateForm::Trig {
                constant: 1.0,
                terms: vec![TrigTerm { k: 1, cos_coef: 0.0, sin_coef: 0.5 }],
            },
            SignClass::StrictlyPositive,
        )
        .unwrap();
        let params = HHParams::new(1.0, 1.0, 2.0 * 2.0_f64.sqrt(), alpha.clone()).unwrap();
        let a2 = alpha.clone();
        let drift = move |t: f64, x: &[f64], out: &mut [f64]| {
            out[0] = a2.eval(t) * (x[0] - x[0] * x[0] * x[0]);
        };
        let t_grid: Vec<f64> = (0..64).map(|i| i as f64 / 64.0).collect();
        let states = grid_states_1d(64, (-4.0, 4.0));
        let margin = verify_hh_margin(drift, 1, &params, &t_grid, &states).unwrap();
        assert!(margin <= 1e-12, "margin = {margin}");
    }

    #[test]
    fn hh_margin_linear_drifts() {
        let alpha = PeriodicRate::constant(1.0, 1.0).unwrap();
        let params = HHParams::new(0.0, 1.0, 0.0, alpha).unwrap();
        let t_grid = [0.0, 0.3, 0.9];
        let states = grid_states_1d(21, (-2.0, 2.0));
        // b = -x: exact equality, margin 0.
        let m = verify_hh_margin(|_t, x, out| out[0] = -x[0], 1, &params, &t_grid, &states).unwrap();
        assert!(m.abs() < 1e-12, "m = {m}");
        // b = +x: violated.
        let m = verify_hh_margin(|_t, x, out| out[0] = x[0], 1, &params, &t_grid, &states).unwrap();
        assert!(m > 0.1);
    }

    #[test]
    fn certificates_serialize_deterministically() {
        let rates = RateTriple::constants(1.0, 2.0, 0.2, 0.1).unwrap();
        let a = certify_infinite_delay(&rates, 1.0, GridResolution::default(), "d".into()).unwrap();
        let b = certify_infinite_delay(&rates, 1.0, GridResolution::default(), "d".into()).unwrap();
        let ja = serde_json::to_string(&a).unwrap();
        let jb = serde_json::to_string(&b).unwrap();
        assert_eq!(ja, jb);
    }
}
