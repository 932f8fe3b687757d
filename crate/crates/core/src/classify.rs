//! Five-regime classification: numerically from limit probes for any
//! environment, exactly for the power-law families.

use serde::{Serialize, Serializer};

use crate::env::scenario::{PowerFamily, PowerFamilyKind};
use crate::env::{Environment, OffspringMeanSpec};
use crate::error::EnvError;
use crate::transforms::{
    probe_limits, LimitEstimate, LimitKind, ProbeConfig, ProbeSchedule, Quantity,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Regime {
    Supercritical,
    AsymptoticallyDegenerate,
    Critical,
    StrictlySubcritical,
    LooselySubcritical,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Supercritical => "Supercritical",
            Regime::AsymptoticallyDegenerate => "AsymptoticallyDegenerate",
            Regime::Critical => "Critical",
            Regime::StrictlySubcritical => "StrictlySubcritical",
            Regime::LooselySubcritical => "LooselySubcritical",
        }
    }

    /// Numeric code used by the C interface; `0` means inconclusive.
    pub fn code(self) -> i32 {
        match self {
            Regime::Supercritical => 1,
            Regime::AsymptoticallyDegenerate => 2,
            Regime::Critical => 3,
            Regime::StrictlySubcritical => 4,
            Regime::LooselySubcritical => 5,
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Numeric,
    Symbolic,
}

fn regime_or_inconclusive<S: Serializer>(r: &Option<Regime>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(r.map_or("Inconclusive", Regime::name))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    /// `None` is an inconclusive classification.
    #[serde(serialize_with = "regime_or_inconclusive")]
    pub regime: Option<Regime>,
    #[serde(rename = "Lambda_limit")]
    pub lambda_limit: Option<LimitEstimate>,
    #[serde(rename = "V_limit")]
    pub v_limit: Option<LimitEstimate>,
    #[serde(rename = "MuThetaV_limit")]
    pub mu_theta_v_limit: Option<LimitEstimate>,
    #[serde(rename = "M_theta")]
    pub m_theta: Option<f64>,
    pub partial_limits: Option<(f64, f64)>,
    pub method: Method,
    pub note: Option<String>,
}

impl RegimeReport {
    pub fn label(&self) -> &'static str {
        self.regime.map_or("Inconclusive", Regime::name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Decision tree on probed limits: finite `Lambda` is asymptotically
/// degenerate; otherwise finite `V` is supercritical; otherwise the limit of
/// `mu^theta V` separates critical (diverges), strictly subcritical (finite)
/// and loosely subcritical (no limit).
pub fn classify_numeric(
    env: &Environment,
    schedule: &ProbeSchedule,
    cfg: &ProbeConfig,
) -> RegimeReport {
    let mut probes = probe_limits(
        env,
        &[Quantity::Lambda, Quantity::V, Quantity::MuThetaV],
        schedule,
        cfg,
    );
    let mv = probes.pop().expect("three probes");
    let v = probes.pop().expect("three probes");
    let lambda = probes.pop().expect("three probes");

    let mut m_theta = None;
    let mut partial_limits = None;
    let regime = match lambda.kind {
        LimitKind::Finite { .. } => Some(Regime::AsymptoticallyDegenerate),
        LimitKind::Diverges => match v.kind {
            LimitKind::Finite { .. } => Some(Regime::Supercritical),
            LimitKind::Diverges => match mv.kind {
                LimitKind::Diverges => Some(Regime::Critical),
                LimitKind::Finite { value, .. } => {
                    m_theta = Some(value);
                    Some(Regime::StrictlySubcritical)
                }
                LimitKind::NoLimit { liminf, limsup } => {
                    partial_limits = Some((liminf, limsup));
                    Some(Regime::LooselySubcritical)
                }
                LimitKind::Inconclusive => None,
            },
            _ => None,
        },
        _ => None,
    };
    let note = match regime {
        None => {
            Some("finite-horizon probes did not settle every limit the decision needs".to_string())
        }
        Some(_) => lambda
            .note
            .clone()
            .or_else(|| v.note.clone())
            .or_else(|| mv.note.clone()),
    };
    RegimeReport {
        regime,
        lambda_limit: Some(lambda),
        v_limit: Some(v),
        mu_theta_v_limit: Some(mv),
        m_theta,
        partial_limits,
        method: Method::Numeric,
        note,
    }
}

/// Exact regime of a power-law family member.
///
/// With `lambda_t = lambda (1+t)^alpha`:
///
/// * `a_t = 1 + (1+t)^-beta`: critical for `beta > 1+alpha`; for
///   `beta = 1+alpha` supercritical iff `theta lambda > 1+alpha`, else
///   critical; supercritical for `beta < 1+alpha`.
/// * `a_t = 1 - (1+t)^-beta`: critical for `beta > 1+alpha`; for
///   `beta = 1+alpha` strictly subcritical when `alpha = -1` (then `a = 0`),
///   critical otherwise; for `beta < 1+alpha` strictly subcritical when
///   `beta = 0` (`a = 0`), critical otherwise since `mu^theta V` grows like
///   `(1+t)^beta / (1+theta)`.
/// * `a_t = (1+t)^-beta`: critical for `beta = 0` (`a = 1`), strictly
///   subcritical otherwise.
///
/// Every strictly subcritical member has `M_theta = 1/(1+theta)`.
pub fn classify_powerlaw(family: &PowerFamily) -> Result<RegimeReport, EnvError> {
    let PowerFamily {
        kind,
        lambda,
        alpha,
        beta,
        theta,
    } = *family;
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(EnvError::Theta(theta));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(EnvError::Hazard(format!(
            "lambda = {lambda} must be positive"
        )));
    }
    if !(alpha >= -1.0 && alpha.is_finite()) {
        return Err(EnvError::Hazard(format!(
            "alpha = {alpha} must be at least -1"
        )));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(EnvError::OffspringMean(format!(
            "beta = {beta} must be non-negative"
        )));
    }
    let edge = 1.0 + alpha;
    let regime = match kind {
        PowerFamilyKind::OnePlus => {
            if beta > edge {
                Regime::Critical
            } else if beta == edge {
                if theta * lambda > edge {
                    Regime::Supercritical
                } else {
                    Regime::Critical
                }
            } else {
                Regime::Supercritical
            }
        }
        PowerFamilyKind::OneMinus => {
            if beta > edge {
                Regime::Critical
            } else if beta == 0.0 {
                Regime::StrictlySubcritical
            } else {
                Regime::Critical
            }
        }
        PowerFamilyKind::Pure => {
            if beta == 0.0 {
                Regime::Critical
            } else {
                Regime::StrictlySubcritical
            }
        }
    };
    Ok(RegimeReport {
        regime: Some(regime),
        lambda_limit: None,
        v_limit: None,
        mu_theta_v_limit: None,
        m_theta: (regime == Regime::StrictlySubcritical).then(|| 1.0 / (1.0 + theta)),
        partial_limits: None,
        method: Method::Symbolic,
        note: None,
    })
}

/// Regimes implied by hypotheses that can be checked in closed form:
/// finite total hazard; infinite hazard with `mu_t` bounded away from 0 and
/// infinity; infinite hazard with `int a_u dLambda_u` finite.
pub fn corollary_shortcuts(env: &Environment) -> Option<Regime> {
    if env.total_hazard().is_finite() {
        return Some(Regime::AsymptoticallyDegenerate);
    }
    let tail = env.hazard_tail_exponent()?;
    match env.offspring_mean_spec() {
        OffspringMeanSpec::Constant { a } if *a == 1.0 => Some(Regime::Critical),
        OffspringMeanSpec::Constant { a } if *a == 0.0 => Some(Regime::StrictlySubcritical),
        OffspringMeanSpec::OnePlusPower { beta } | OffspringMeanSpec::OneMinusPower { beta }
            if *beta > 1.0 + tail =>
        {
            Some(Regime::Critical)
        }
        OffspringMeanSpec::PurePower { beta } if *beta > 1.0 + tail => {
            Some(Regime::StrictlySubcritical)
        }
        _ => None,
    }
}

/// Shortcut when one applies, numeric classification otherwise.
pub fn classify(env: &Environment, schedule: &ProbeSchedule, cfg: &ProbeConfig) -> RegimeReport {
    let mut report = classify_numeric(env, schedule, cfg);
    if report.regime.is_none() {
        if let Some(r) = corollary_shortcuts(env) {
            report.regime = Some(r);
            report.note = Some(format!(
                "{r} from a closed-form criterion; numeric probes were inconclusive"
            ));
        }
    }
    report
}
