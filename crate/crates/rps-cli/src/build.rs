//! Resolves a validated config into core models, rates, and metrics.

use anyhow::{anyhow, bail, Context, Result};

use rps_core::certificates::{HHParams, RateTriple};
use rps_core::coupling::{BuildOptions, CouplingMetric};
use rps_core::delay::DelayModel;
use rps_core::presets;
use rps_core::rates::{PeriodicRate, SignClass};
use rps_core::sde::SdeModel;

use crate::config::ExperimentConfig;

pub enum BuiltModel {
    Sde(SdeModel),
    Delay(DelayModel),
}

fn build_rate(
    cfg: &ExperimentConfig,
    spec: Option<&crate::config::RateSpec>,
    sign: SignClass,
    path: &str,
    fallback: f64,
) -> Result<PeriodicRate> {
    let mut violations = Vec::new();
    let rate = match spec {
        Some(s) => s.build(cfg.model.period, sign, path, &mut violations),
        None => PeriodicRate::new(
            cfg.model.period,
            rps_core::rates::RateForm::Trig { constant: fallback, terms: vec![] },
            sign,
        )
        .ok(),
    };
    rate.ok_or_else(|| anyhow!("{path}: {}", violations.join("; ")))
}

pub fn alpha(cfg: &ExperimentConfig) -> Result<PeriodicRate> {
    build_rate(cfg, cfg.rates.alpha.as_ref(), SignClass::StrictlyPositive, "rates.alpha", 1.0)
}

pub fn rate_triple(cfg: &ExperimentConfig) -> Result<RateTriple> {
    let l1 = build_rate(cfg, cfg.rates.lambda1.as_ref(), SignClass::Signed, "rates.lambda1", -1.0)?;
    let l2 = build_rate(cfg, cfg.rates.lambda2.as_ref(), SignClass::Nonnegative, "rates.lambda2", 0.0)?;
    let l3 = build_rate(cfg, cfg.rates.lambda3.as_ref(), SignClass::Nonnegative, "rates.lambda3", 0.0)?;
    RateTriple::new(l1, l2, l3).map_err(|e| anyhow!("rates: {e}"))
}

pub fn hh_params(cfg: &ExperimentConfig) -> Result<HHParams> {
    let (k1, k2, l) = hh_values(cfg);
    HHParams::new(k1, k2, l, alpha(cfg)?).map_err(|e| anyhow!("hh: {e}"))
}

/// (K₁, K₂, L), defaulting to the double-well constants.
pub fn hh_values(cfg: &ExperimentConfig) -> (f64, f64, f64) {
    (
        cfg.hh.k1.unwrap_or(presets::DOUBLE_WELL_K1),
        cfg.hh.k2.unwrap_or(presets::DOUBLE_WELL_K2),
        cfg.hh.l.unwrap_or(presets::DOUBLE_WELL_L),
    )
}

pub fn metric(cfg: &ExperimentConfig) -> Result<CouplingMetric> {
    let (k1, k2, l) = hh_values(cfg);
    CouplingMetric::build(k1, k2, l, BuildOptions::default()).map_err(|e| anyhow!("phi: {e}"))
}

/// The constant values of (λ₁ᶜ, λ₂ᶜ, λ₃ᶜ) for rate-parametrized presets;
/// λ₁ᶜ is the magnitude of the (negative) λ₁.
fn constant_rates(cfg: &ExperimentConfig) -> Result<(f64, f64, f64)> {
    let c = |spec: Option<&crate::config::RateSpec>, fallback: f64, path: &str| -> Result<f64> {
        match spec {
            None => Ok(fallback),
            Some(s) => s
                .as_constant()
                .ok_or_else(|| anyhow!("{path}: the linear-delay preset needs a constant rate")),
        }
    };
    let l1 = -c(cfg.rates.lambda1.as_ref(), -1.0, "rates.lambda1")?;
    let l2 = c(cfg.rates.lambda2.as_ref(), 0.0, "rates.lambda2")?;
    let l3 = c(cfg.rates.lambda3.as_ref(), 0.0, "rates.lambda3")?;
    if l1 <= 0.0 {
        bail!("rates.lambda1: the linear-delay preset needs a negative constant λ₁ (dissipation)");
    }
    Ok((l1, l2, l3))
}

pub fn model(cfg: &ExperimentConfig) -> Result<BuiltModel> {
    let m = &cfg.model;
    let period = m.period;
    match m.class.as_str() {
        "sde" => {
            let model = match m.preset.as_str() {
                "double-well" => presets::double_well(alpha(cfg)?),
                "ou" => presets::ou(m.dimension, alpha(cfg)?),
                "asymmetric-ou" => {
                    presets::asymmetric_ou(m.params.amplitude.unwrap_or(5.0), alpha(cfg)?)
                }
                "frozen" => presets::frozen_sde(m.dimension, period),
                other => bail!("unknown sde preset {other:?}"),
            };
            Ok(BuiltModel::Sde(model.context("building sde preset")?))
        }
        "delay-finite" => {
            let model = match m.preset.as_str() {
                "linear-delay" => {
                    if let (Some(a), Some(c)) = (m.params.a, m.params.c) {
                        presets::linear_delay(a, c, m.params.sigma.unwrap_or(0.0), cfg.r0(), period)
                    } else {
                        let (l1, l2, l3) = constant_rates(cfg)?;
                        presets::linear_delay_from_rates(l1, l2, l3, cfg.r0(), period)
                    }
                }
                "frozen" => presets::frozen_delay(cfg.r0(), period),
                other => bail!("unknown delay preset {other:?}"),
            };
            Ok(BuiltModel::Delay(model.context("building delay preset")?))
        }
        "delay-infinite" => {
            let horizon = cfg.infinite_horizon();
            let alpha0 = cfg.alpha0();
            let trunc = cfg.truncation();
            let lag = m.params.lag.unwrap_or(0.0);
            let model = match m.preset.as_str() {
                "linear-delay" => {
                    if let (Some(a), Some(c)) = (m.params.a, m.params.c) {
                        presets::linear_delay_infinite(
                            a,
                            c,
                            m.params.sigma.unwrap_or(0.0),
                            lag,
                            alpha0,
                            horizon,
                            trunc,
                            period,
                        )
                    } else {
                        let (l1, l2, l3) = constant_rates(cfg)?;
                        presets::linear_delay_infinite_from_rates(
                            l1, l2, l3, lag, alpha0, horizon, trunc, period,
                        )
                    }
                }
                "frozen" => {
                    presets::linear_delay_infinite(0.0, 0.0, 0.0, 0.0, alpha0, horizon, trunc, period)
                }
                other => bail!("unknown delay preset {other:?}"),
            };
            Ok(BuiltModel::Delay(model.context("building infinite-delay preset")?))
        }
        other => bail!("unknown model class {other:?}"),
    }
}
