//! Named model presets.
//!
//! Everything the command line can run is a preset here, so the analysis and
//! acceptance suites exercise exactly the models users get. Scalar presets
//! are one-dimensional unless noted.

use std::sync::Arc;

use crate::delay::{DelayDiffusion, DelayModel, Memory, SegmentView};
use crate::error::Result;
use crate::rates::PeriodicRate;
use crate::sde::{SdeModel, SdeNoise};

/// Ornstein–Uhlenbeck: dX = −X dt + √α(t) dW.
pub fn ou(dim: usize, alpha: PeriodicRate) -> Result<SdeModel> {
    SdeModel::new(
        dim,
        alpha.period(),
        Arc::new(|_t, x, out| {
            for k in 0..x.len() {
                out[k] = -x[k];
            }
        }),
        SdeNoise::Additive(alpha),
    )
}

/// Double-well drift b(t, x) = α(t)(x − x³) with additive noise √α(t) dW.
/// Dissipative only at long distance (K₁ = K₂ = 1, L = 2√2).
pub fn double_well(alpha: PeriodicRate) -> Result<SdeModel> {
    let a = alpha.clone();
    SdeModel::new(
        1,
        alpha.period(),
        Arc::new(move |t, x, out| out[0] = a.eval(t) * (x[0] - x[0] * x[0] * x[0])),
        SdeNoise::Additive(alpha),
    )
}

/// The `(K₁, K₂, L)` under which [`double_well`] satisfies the long-distance
/// dissipativity inequality.
pub const DOUBLE_WELL_K1: f64 = 1.0;
pub const DOUBLE_WELL_K2: f64 = 1.0;
pub const DOUBLE_WELL_L: f64 = 2.0 * std::f64::consts::SQRT_2;

/// Mean-tracking OU: dX = −(X − A sin(2πt/τ)) dt + √α(t) dW. Its law swings
/// with the period, so it deliberately fails any τ/2 periodicity probe.
pub fn asymmetric_ou(amplitude: f64, alpha: PeriodicRate) -> Result<SdeModel> {
    let tau = alpha.period();
    SdeModel::new(
        1,
        tau,
        Arc::new(move |t, x, out| {
            out[0] = -(x[0] - amplitude * (std::f64::consts::TAU * t / tau).sin())
        }),
        SdeNoise::Additive(alpha),
    )
}

/// b ≡ 0, σ ≡ 0: nothing moves.
pub fn frozen_sde(dim: usize, period: f64) -> Result<SdeModel> {
    SdeModel::new(
        dim,
        period,
        Arc::new(|_t, _x, out| out.fill(0.0)),
        SdeNoise::General(Arc::new(|_t, _x, out| out.fill(0.0))),
    )
}

/// Scalar linear finite-delay model
/// dX = (a·X(t) + c·X(t−r₀)) dt + σc·X(t−r₀) dW.
pub fn linear_delay(a: f64, c: f64, sigma_c: f64, r0: f64, period: f64) -> Result<DelayModel> {
    DelayModel::new(
        1,
        period,
        Memory::Finite { r0 },
        Arc::new(move |_t, seg: &SegmentView, out: &mut [f64]| {
            out[0] = a * seg.newest()[0] + c * seg.at_lag_steps(seg.window_steps())[0];
        }),
        if sigma_c == 0.0 {
            DelayDiffusion::Zero
        } else {
            DelayDiffusion::Full(Arc::new(move |_t, seg: &SegmentView, out: &mut [f64]| {
                out[0] = sigma_c * seg.at_lag_steps(seg.window_steps())[0];
            }))
        },
    )
}

/// [`linear_delay`] parametrized by its dissipativity rates: chooses
/// a = −(λ₁ᶜ + λ₂ᶜ)/2, c = λ₂ᶜ, σc = √λ₃ᶜ so that the one-sided bounds hold
/// with λ₁ ≡ −λ₁ᶜ, λ₂ ≡ λ₂ᶜ, λ₃ ≡ λ₃ᶜ.
pub fn linear_delay_from_rates(
    lambda1c: f64,
    lambda2c: f64,
    lambda3c: f64,
    r0: f64,
    period: f64,
) -> Result<DelayModel> {
    let a = -(lambda1c + lambda2c) / 2.0;
    linear_delay(a, lambda2c, lambda3c.sqrt(), r0, period)
}

/// Scalar linear infinite-delay model on the weighted history space:
/// dX = (a·X(t) + c·X(t−lag)) dt + σc·X(t) dW, truncated at `horizon`.
#[allow(clippy::too_many_arguments)]
pub fn linear_delay_infinite(
    a: f64,
    c: f64,
    sigma_c: f64,
    lag: f64,
    alpha0: f64,
    horizon: f64,
    truncation_tol: f64,
    period: f64,
) -> Result<DelayModel> {
    DelayModel::new(
        1,
        period,
        Memory::Infinite { alpha0, horizon, truncation_tol },
        Arc::new(move |_t, seg: &SegmentView, out: &mut [f64]| {
            out[0] = a * seg.newest()[0] + c * seg.at_theta(-lag).unwrap()[0];
        }),
        if sigma_c == 0.0 {
            DelayDiffusion::Zero
        } else {
            DelayDiffusion::Full(Arc::new(move |_t, seg: &SegmentView, out: &mut [f64]| {
                out[0] = sigma_c * seg.newest()[0];
            }))
        },
    )
}

/// [`linear_delay_infinite`] parametrized by its rates on the weighted norm:
/// a lag-θ₀ read satisfies |ξ(−θ₀)| ≤ e^{α₀θ₀}‖ξ‖, so c = λ₂ᶜ e^{−2α₀θ₀},
/// a = −(λ₁ᶜ + c)/2, σc = √λ₃ᶜ on ξ(0).
#[allow(clippy::too_many_arguments)]
pub fn linear_delay_infinite_from_rates(
    lambda1c: f64,
    lambda2c: f64,
    lambda3c: f64,
    lag: f64,
    alpha0: f64,
    horizon: f64,
    truncation_tol: f64,
    period: f64,
) -> Result<DelayModel> {
    let c = lambda2c * (-2.0 * alpha0 * lag).exp();
    let a = -(lambda1c + c) / 2.0;
    linear_delay_infinite(a, c, lambda3c.sqrt(), lag, alpha0, horizon, truncation_tol, period)
}

/// Frozen functional model (finite memory): b ≡ 0, σ ≡ 0.
pub fn frozen_delay(r0: f64, period: f64) -> Result<DelayModel> {
    DelayModel::new(
        1,
        period,
        Memory::Finite { r0 },
        Arc::new(|_t, _seg: &SegmentView, out: &mut [f64]| out[0] = 0.0),
        DelayDiffusion::Zero,
    )
}

/// Anti-dissipative probe model: dX = +X dt + dW (second moment blows up).
pub fn anti_dissipative(period: f64) -> Result<SdeModel> {
    SdeModel::new(
        1,
        period,
        Arc::new(|_t, x, out| out[0] = x[0]),
        SdeNoise::Additive(PeriodicRate::constant(period, 1.0)?),
    )
}
