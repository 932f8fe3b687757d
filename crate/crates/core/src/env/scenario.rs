//! Named scenarios and the power-law example families.

use serde::{Deserialize, Serialize};

use super::{Environment, HazardSpec, OffspringMeanSpec, Theta};
use crate::error::EnvError;

/// Parameter overrides for [`builtin_scenario`]. Unset fields keep the
/// scenario's defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    pub theta: Option<f64>,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub a: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct ScenarioInfo {
    pub name: &'static str,
    pub description: &'static str,
    /// Which of theta, lambda, alpha, beta, a the scenario accepts.
    pub params: &'static [&'static str],
}

const FAMILY: &[&str] = &["theta", "lambda", "alpha", "beta"];
const CONST: &[&str] = &["theta", "lambda", "a"];

static SCENARIOS: &[ScenarioInfo] = &[
    ScenarioInfo { name: "ex31a", description: "lambda(1+t)^alpha, a_t = 1+(1+t)^-beta with beta > 1+alpha (defaults alpha=0, beta=2+alpha, lambda=1)", params: FAMILY },
    ScenarioInfo { name: "ex31b", description: "lambda(1+t)^alpha, a_t = 1+(1+t)^-beta with beta = 1+alpha (defaults alpha=0, lambda=2)", params: FAMILY },
    ScenarioInfo { name: "ex31c", description: "lambda(1+t)^alpha, a_t = 1+(1+t)^-beta with beta < 1+alpha (defaults alpha=1, beta=(1+alpha)/2, lambda=1)", params: FAMILY },
    ScenarioInfo { name: "ex32a", description: "lambda(1+t)^alpha, a_t = 1-(1+t)^-beta with beta > 1+alpha (defaults alpha=0, beta=2+alpha, lambda=1)", params: FAMILY },
    ScenarioInfo { name: "ex32b", description: "lambda(1+t)^alpha, a_t = 1-(1+t)^-beta with beta = 1+alpha (defaults alpha=0, lambda=1)", params: FAMILY },
    ScenarioInfo { name: "ex32c", description: "lambda(1+t)^alpha, a_t = 1-(1+t)^-beta with beta < 1+alpha (defaults alpha=1, beta=(1+alpha)/2, lambda=1)", params: FAMILY },
    ScenarioInfo { name: "ex33", description: "lambda(1+t)^alpha, a_t = (1+t)^-beta (defaults alpha=0, beta=1, lambda=1)", params: FAMILY },
    ScenarioInfo { name: "ex34", description: "theta=1, lambda_t=(1+t)^-1/2, a_t alternating 2 / 0 on dyadic blocks", params: &["theta", "lambda", "alpha"] },
    ScenarioInfo { name: "bd_const", description: "constant birth-death: lambda=1, a=1.5", params: CONST },
    ScenarioInfo { name: "critical_const", description: "constant critical: lambda=1, a=1", params: CONST },
    ScenarioInfo { name: "pure_death", description: "no reproduction: lambda=1, a=0", params: CONST },
    ScenarioInfo { name: "binary_split", description: "theta=1, a=2: every death is a binary split", params: &["lambda"] },
    ScenarioInfo { name: "sleeping", description: "hazard lambda on [0,2), zero afterwards; a=0 (Lambda = 2 lambda)", params: CONST },
    ScenarioInfo { name: "degenerate_power", description: "lambda(1+t)^alpha with alpha=-2 (finite Lambda), a=1.5", params: &["theta", "lambda", "alpha", "a"] },
];

pub fn list_scenarios() -> &'static [ScenarioInfo] {
    SCENARIOS
}

/// Builds a named scenario with optional overrides; the result is validated.
pub fn builtin_scenario(name: &str, overrides: &ScenarioParams) -> Result<Environment, EnvError> {
    let info = SCENARIOS
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| EnvError::UnknownScenario(name.to_string()))?;
    let given = [
        ("theta", overrides.theta),
        ("lambda", overrides.lambda),
        ("alpha", overrides.alpha),
        ("beta", overrides.beta),
        ("a", overrides.a),
    ];
    for (key, value) in given {
        if value.is_some() && !info.params.contains(&key) {
            return Err(EnvError::Config(format!(
                "scenario `{name}` does not take parameter `{key}`"
            )));
        }
    }
    let o = overrides;
    let theta = Theta::new(o.theta.unwrap_or(1.0))?;
    let power = |lambda: f64, alpha: f64| HazardSpec::PowerLaw {
        lambda: o.lambda.unwrap_or(lambda),
        alpha: o.alpha.unwrap_or(alpha),
    };

    let (hazard, mean) = match name {
        "ex31a" | "ex31b" | "ex31c" | "ex32a" | "ex32b" | "ex32c" | "ex33" => {
            let (lambda, alpha, beta) = match name {
                "ex31a" | "ex32a" => (1.0, 0.0, None),
                "ex31b" => (2.0, 0.0, None),
                "ex32b" => (1.0, 0.0, None),
                "ex31c" | "ex32c" => (1.0, 1.0, None),
                _ => (1.0, 0.0, Some(1.0)),
            };
            let alpha = o.alpha.unwrap_or(alpha);
            let beta = o.beta.or(beta).unwrap_or(match name {
                "ex31a" | "ex32a" => 2.0 + alpha,
                "ex31b" | "ex32b" => 1.0 + alpha,
                _ => 0.5 * (1.0 + alpha),
            });
            let mean = match &name[..4] {
                "ex31" => OffspringMeanSpec::OnePlusPower { beta },
                "ex32" => OffspringMeanSpec::OneMinusPower { beta },
                _ => OffspringMeanSpec::PurePower { beta },
            };
            (power(lambda, alpha), mean)
        }
        "ex34" => (
            power(1.0, -0.5),
            OffspringMeanSpec::AlternatingDyadic {
                low: 0.0,
                high: 2.0,
            },
        ),
        "bd_const" | "critical_const" | "pure_death" => {
            let a = match name {
                "bd_const" => 1.5,
                "critical_const" => 1.0,
                _ => 0.0,
            };
            (
                HazardSpec::Constant {
                    rate: o.lambda.unwrap_or(1.0),
                },
                OffspringMeanSpec::Constant {
                    a: o.a.unwrap_or(a),
                },
            )
        }
        "binary_split" => (
            HazardSpec::Constant {
                rate: o.lambda.unwrap_or(1.0),
            },
            OffspringMeanSpec::Constant { a: 2.0 },
        ),
        "sleeping" => (
            HazardSpec::PiecewiseConstant {
                breakpoints: vec![2.0],
                rates: vec![o.lambda.unwrap_or(1.0), 0.0],
            },
            OffspringMeanSpec::Constant {
                a: o.a.unwrap_or(0.0),
            },
        ),
        "degenerate_power" => (
            power(1.0, -2.0),
            OffspringMeanSpec::Constant {
                a: o.a.unwrap_or(1.5),
            },
        ),
        _ => unreachable!("scenario table and builder out of sync"),
    };
    Environment::validated(theta, hazard, mean)
}

/// The three power-law example families: hazard `lambda (1+t)^alpha` with
/// mean `1 + (1+t)^-beta`, `1 - (1+t)^-beta` or `(1+t)^-beta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerFamilyKind {
    /// `a_t = 1 + (1+t)^-beta` (scenarios ex31*).
    OnePlus,
    /// `a_t = 1 - (1+t)^-beta` (scenarios ex32*).
    OneMinus,
    /// `a_t = (1+t)^-beta` (scenario ex33).
    Pure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFamily {
    pub kind: PowerFamilyKind,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
}

impl PowerFamily {
    pub fn to_environment(&self) -> Result<Environment, EnvError> {
        let mean = match self.kind {
            PowerFamilyKind::OnePlus => OffspringMeanSpec::OnePlusPower { beta: self.beta },
            PowerFamilyKind::OneMinus => OffspringMeanSpec::OneMinusPower { beta: self.beta },
            PowerFamilyKind::Pure => OffspringMeanSpec::PurePower { beta: self.beta },
        };
        Environment::validated(
            Theta::new(self.theta)?,
            HazardSpec::PowerLaw {
                lambda: self.lambda,
                alpha: self.alpha,
            },
            mean,
        )
    }
}

impl Environment {
    /// Recognizes environments from the power-law families (a constant
    /// hazard counts as `alpha = 0`).
    pub fn power_family(&self) -> Option<PowerFamily> {
        let (lambda, alpha) = match self.hazard_spec() {
            HazardSpec::Constant { rate } => (*rate, 0.0),
            HazardSpec::PowerLaw { lambda, alpha } => (*lambda, *alpha),
            HazardSpec::PiecewiseConstant { .. } => return None,
        };
        let (kind, beta) = match self.offspring_mean_spec() {
            OffspringMeanSpec::OnePlusPower { beta } => (PowerFamilyKind::OnePlus, *beta),
            OffspringMeanSpec::OneMinusPower { beta } => (PowerFamilyKind::OneMinus, *beta),
            OffspringMeanSpec::PurePower { beta } => (PowerFamilyKind::Pure, *beta),
            _ => return None,
        };
        Some(PowerFamily {
            kind,
            lambda,
            alpha,
            beta,
            theta: self.theta().get(),
        })
    }
}
