//! Experiment configuration: TOML schema, validation with full violation
//! lists, defaults, and the normalized form used for digests and round-trips.

use serde::{Deserialize, Serialize};

use rps_core::delay::default_horizon;
use rps_core::rates::{guarded_multiple, PeriodicRate, RateForm, SignClass, TrigTerm};

/// Central defaults; the README carries the same table.
pub mod defaults {
    /// Integrator step h.
    pub const STEP: f64 = 1e-3;
    /// Ensemble size N.
    pub const ENSEMBLE: usize = 10_000;
    /// Coupling threshold is √h unless overridden.
    pub fn eps_couple(step: f64) -> f64 {
        step.sqrt()
    }
    /// Weighted-history truncation tolerance δ.
    pub const TRUNCATION: f64 = 1e-8;
    /// Grid points per axis in the certificate extremizations.
    pub const GRID_POINTS: usize = 400;
    /// Pull-back depth cap and target residual for the automatic choice.
    pub const PULLBACK_CAP: usize = 64;
    pub const PULLBACK_TARGET: f64 = 1e-4;
    /// Probe count for moment probes.
    pub const PROBES: usize = 20;
    /// Default simulation horizon in periods.
    pub const HORIZON_PERIODS: f64 = 10.0;
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TermSpec {
    pub k: u32,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// A τ-periodic rate in the config file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RateSpec {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<TermSpec>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub breaks: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl RateSpec {
    /// Builds the core rate; `path` names the field in violation messages.
    pub fn build(
        &self,
        period: f64,
        sign: SignClass,
        path: &str,
        violations: &mut Vec<String>,
    ) -> Option<PeriodicRate> {
        if let Some(p) = self.period {
            if (p - period).abs() > 1e-12 * period.max(1.0) {
                violations.push(format!(
                    "{path}.period: rate period {p} differs from model period {period}"
                ));
                return None;
            }
        }
        let form = match self.kind.as_str() {
            "trig" => RateForm::Trig {
                constant: self.constant.unwrap_or(0.0),
                terms: self
                    .terms
                    .clone()
                    .unwrap_or_default()
                    .into_iter()
                    .map(|t| TrigTerm { k: t.k, cos_coef: t.cos, sin_coef: t.sin })
                    .collect(),
            },
            "piecewise" => RateForm::Piecewise {
                breaks: self.breaks.clone().unwrap_or_default(),
                values: self.values.clone().unwrap_or_default(),
            },
            other => {
                violations.push(format!(
                    "{path}.type: unknown rate form {other:?} (expected \"trig\" or \"piecewise\")"
                ));
                return None;
            }
        };
        match PeriodicRate::new(period, form, sign) {
            Ok(rate) => Some(rate),
            Err(e) => {
                violations.push(format!("{path}: {e}"));
                None
            }
        }
    }

    /// The constant value when the spec is a pure constant, used by the
    /// rate-parametrized presets.
    pub fn as_constant(&self) -> Option<f64> {
        if self.kind == "trig" && self.terms.as_deref().is_none_or(|t| t.is_empty()) {
            Some(self.constant.unwrap_or(0.0))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
pub struct ParamsSection {
    /// asymmetric-ou: forcing amplitude.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    /// linear-delay: instantaneous and delayed drift coefficients, diffusion
    /// coefficient on the delayed (finite) or current (infinite) value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// delay-finite: memory length r₀.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    /// delay-infinite: functional lag and history weight α₀.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lag: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<f64>,
    /// certify (sde): state range sampled by the dissipativity check.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelSection {
    pub class: String,
    #[serde(default = "one")]
    pub dimension: usize,
    pub preset: String,
    pub period: f64,
    #[serde(default)]
    pub params: ParamsSection,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
pub struct RatesSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<RateSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<RateSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda3: Option<RateSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<RateSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
pub struct HhSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
pub struct NumericsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_couple: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
pub struct RunSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pullback_depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor: Option<f64>,
    /// Horizon in time units for simulate/couple/probe.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

/// The raw on-disk schema; every field optional except the model section.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub rates: RatesSection,
    #[serde(default)]
    pub hh: HhSection,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
}

pub const SDE_PRESETS: &[&str] = &["double-well", "ou", "asymmetric-ou", "frozen"];
pub const DELAY_PRESETS: &[&str] = &["linear-delay", "frozen"];
pub const CLASSES: &[&str] = &["sde", "delay-finite", "delay-infinite"];

impl ExperimentConfig {
    pub fn step(&self) -> f64 {
        self.numerics.h.unwrap_or(defaults::STEP)
    }
    pub fn eps_couple(&self) -> f64 {
        self.numerics.eps_couple.unwrap_or_else(|| defaults::eps_couple(self.step()))
    }
    pub fn truncation(&self) -> f64 {
        self.numerics.truncation.unwrap_or(defaults::TRUNCATION)
    }
    pub fn grid_points(&self) -> usize {
        self.numerics.grid_points.unwrap_or(defaults::GRID_POINTS)
    }
    pub fn seed(&self) -> u64 {
        self.run.seed.unwrap_or(0)
    }
    pub fn ensemble(&self) -> usize {
        self.run.ensemble.unwrap_or(defaults::ENSEMBLE)
    }
    pub fn anchor(&self) -> f64 {
        self.run.anchor.unwrap_or(0.0)
    }
    pub fn horizon(&self) -> f64 {
        self.run.horizon.unwrap_or(defaults::HORIZON_PERIODS * self.model.period)
    }
    pub fn x0(&self) -> Vec<f64> {
        self.run.x0.clone().unwrap_or_else(|| vec![1.0; self.model.dimension])
    }
    pub fn y0(&self) -> Vec<f64> {
        self.run.y0.clone().unwrap_or_else(|| vec![-1.0; self.model.dimension])
    }
    pub fn alpha0(&self) -> f64 {
        self.model.params.alpha0.unwrap_or(1.0)
    }
    pub fn r0(&self) -> f64 {
        self.model.params.r0.unwrap_or(0.01)
    }
    pub fn infinite_horizon(&self) -> f64 {
        default_horizon(self.alpha0(), self.step(), self.truncation())
    }

    /// The α rate (built or the constant-1 default).
    pub fn alpha_rate(&self, violations: &mut Vec<String>) -> Option<PeriodicRate> {
        match &self.rates.alpha {
            Some(spec) => spec.build(self.model.period, SignClass::StrictlyPositive, "rates.alpha", violations),
            None => match PeriodicRate::constant(self.model.period, 1.0) {
                Ok(r) => Some(r),
                Err(e) => {
                    violations.push(format!("rates.alpha: {e}"));
                    None
                }
            },
        }
    }

    /// Full validation; returns every violation found, each with its field
    /// path, rather than stopping at the first.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let m = &self.model;
        if !CLASSES.contains(&m.class.as_str()) {
            v.push(format!(
                "model.class: unknown class {:?} (expected one of {})",
                m.class,
                CLASSES.join(", ")
            ));
        }
        let presets: &[&str] = if m.class == "sde" { SDE_PRESETS } else { DELAY_PRESETS };
        if !presets.contains(&m.preset.as_str()) {
            v.push(format!(
                "model.preset: unknown preset {:?} for class {:?} (available: {})",
                m.preset,
                m.class,
                presets.join(", ")
            ));
        }
        if m.dimension == 0 {
            v.push("model.dimension: must be >= 1".into());
        }
        if m.dimension != 1 && matches!(m.preset.as_str(), "double-well" | "asymmetric-ou" | "linear-delay") {
            v.push(format!("model.dimension: preset {:?} is one-dimensional", m.preset));
        }
        if !(m.period > 0.0) {
            v.push(format!("model.period: must be positive, got {}", m.period));
        }

        let h = self.step();
        if !(h > 0.0) {
            v.push(format!("numerics.h: must be positive, got {h}"));
        } else {
            if guarded_multiple(m.period, h).filter(|&k| k > 0).is_none() {
                v.push(format!(
                    "numerics.h: step {h} does not divide model.period = {} (model.period)",
                    m.period
                ));
            }
            if m.class == "delay-finite" {
                let r0 = self.r0();
                if !(r0 > 0.0) {
                    v.push(format!("model.params.r0: must be positive, got {r0}"));
                } else if guarded_multiple(r0, h).filter(|&k| k > 0).is_none() {
                    v.push(format!(
                        "numerics.h: step {h} does not divide model.params.r0 = {r0}"
                    ));
                }
            }
            if m.class == "delay-infinite" {
                if !(self.alpha0() > 0.0) {
                    v.push(format!("model.params.alpha0: must be positive, got {}", self.alpha0()));
                }
                let lag = m.params.lag.unwrap_or(0.0);
                if lag < 0.0 {
                    v.push(format!("model.params.lag: must be >= 0, got {lag}"));
                } else if lag > 0.0 && guarded_multiple(lag, h).is_none() {
                    v.push(format!("numerics.h: step {h} does not divide model.params.lag = {lag}"));
                }
            }
        }
        if !(self.eps_couple() > 0.0) {
            v.push(format!("numerics.eps_couple: must be positive, got {}", self.eps_couple()));
        }
        if self.x0().len() != m.dimension {
            v.push(format!(
                "run.x0: has {} components, model.dimension = {}",
                self.x0().len(),
                m.dimension
            ));
        }
        if self.y0().len() != m.dimension {
            v.push(format!(
                "run.y0: has {} components, model.dimension = {}",
                self.y0().len(),
                m.dimension
            ));
        }
        // Rate specs must build.
        self.alpha_rate(&mut v);
        if let Some(spec) = &self.rates.lambda1 {
            spec.build(m.period, SignClass::Signed, "rates.lambda1", &mut v);
        }
        if let Some(spec) = &self.rates.lambda2 {
            spec.build(m.period, SignClass::Nonnegative, "rates.lambda2", &mut v);
        }
        if let Some(spec) = &self.rates.lambda3 {
            spec.build(m.period, SignClass::Nonnegative, "rates.lambda3", &mut v);
        }
        v
    }

    /// Normalized serialization: the parsed structure re-emitted as TOML.
    /// One normalization pass is idempotent.
    pub fn to_normalized_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// FNV-1a 64 digest of the normalized form, as fixed-width hex.
    pub fn digest(&self) -> String {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in self.to_normalized_toml().as_bytes() {
            hash ^= *byte as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{hash:016x}")
    }
}

/// Parses and validates; on violation returns them all, one per line.
pub fn parse_config(text: &str) -> anyhow::Result<ExperimentConfig> {
    let cfg: ExperimentConfig =
        toml::from_str(text).map_err(|e| anyhow::anyhow!("config parse error: {e}"))?;
    let violations = cfg.validate();
    if !violations.is_empty() {
        anyhow::bail!("invalid config ({} violations):\n  - {}", violations.len(), violations.join("\n  - "));
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL_OU: &str = r#"
[model]
class = "sde"
preset = "ou"
period = 1.0
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL_OU).unwrap();
        assert_eq!(cfg.step(), 1e-3);
        assert_eq!(cfg.ensemble(), 10_000);
        assert!((cfg.eps_couple() - (1e-3_f64).sqrt()).abs() < 1e-15);
        assert_eq!(cfg.seed(), 0);
        assert_eq!(cfg.model.dimension, 1);
    }

    #[test]
    fn divisibility_violation_names_both_fields() {
        let text = r#"
[model]
class = "sde"
preset = "ou"
period = 1.0

[numerics]
h = 0.3
"#;
        let err = parse_config(text).unwrap_err().to_string();
        assert!(err.contains("numerics.h"), "{err}");
        assert!(err.contains("model.period"), "{err}");
    }

    #[test]
    fn unknown_preset_lists_available() {
        let text = r#"
[model]
class = "sde"
preset = "foo"
period = 1.0
"#;
        let err = parse_config(text).unwrap_err().to_string();
        assert!(err.contains("foo"));
        for p in SDE_PRESETS {
            assert!(err.contains(p), "missing {p} in {err}");
        }
    }

    #[test]
    fn all_violations_reported_not_just_first() {
        let text = r#"
[model]
class = "sde"
preset = "foo"
period = 1.0

[numerics]
h = 0.3

[run]
x0 = [1.0, 2.0]
"#;
        let err = parse_config(text).unwrap_err().to_string();
        assert!(err.contains("model.preset"));
        assert!(err.contains("numerics.h"));
        assert!(err.contains("run.x0"));
    }

    #[test]
    fn rate_sign_violations_have_paths() {
        let text = r#"
[model]
class = "delay-finite"
preset = "linear-delay"
period = 1.0

[model.params]
r0 = 0.01

[rates]
lambda2 = { type = "trig", constant = -0.5 }
"#;
        let err = parse_config(text).unwrap_err().to_string();
        assert!(err.contains("rates.lambda2"), "{err}");
    }

    #[test]
    fn normalization_roundtrip_is_idempotent() {
        let cfg = parse_config(MINIMAL_OU).unwrap();
        let once = cfg.to_normalized_toml();
        let reparsed = parse_config(&once).unwrap();
        let twice = reparsed.to_normalized_toml();
        assert_eq!(once, twice);
        assert_eq!(cfg.digest(), reparsed.digest());
    }

    #[test]
    fn digest_is_stable_and_input_sensitive() {
        let a = parse_config(MINIMAL_OU).unwrap();
        let b = parse_config(MINIMAL_OU).unwrap();
        assert_eq!(a.digest(), b.digest());
        let other = parse_config(
            r#"
[model]
class = "sde"
preset = "ou"
period = 2.0
"#,
        )
        .unwrap();
        assert_ne!(a.digest(), other.digest());
    }
}
