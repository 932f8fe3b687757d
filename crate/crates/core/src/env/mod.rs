//! Varying environment: branching parameter, hazard rate and offspring mean.
//!
//! Every supported family is piecewise a finite sum of terms `c * (1 + t)^g`.
//! [`Piece`] exposes that form so the hazard, the offspring mean and their
//! products can be evaluated and integrated in closed form. Pieces are
//! half-open `[start, end)`, which makes every rate right-continuous at its
//! breakpoints.

mod power;
pub mod scenario;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::EnvError;

pub use power::{PowerSum, PowerTerm};
pub use scenario::{builtin_scenario, list_scenarios, ScenarioInfo, ScenarioParams};

/// Branching parameter, `0 < theta <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Theta(f64);

impl Theta {
    pub fn new(value: f64) -> Result<Self, EnvError> {
        if value.is_finite() && value > 0.0 && value <= 1.0 {
            Ok(Self(value))
        } else {
            Err(EnvError::Theta(value))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    /// `theta / (1 + theta)`, the weight in front of the V and B integrals.
    #[inline]
    pub fn weight(self) -> f64 {
        self.0 / (1.0 + self.0)
    }

    /// Upper bound `1 + 1/theta` on the offspring mean.
    #[inline]
    pub fn mean_bound(self) -> f64 {
        1.0 + 1.0 / self.0
    }
}

impl<'de> Deserialize<'de> for Theta {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Theta::new(v).map_err(serde::de::Error::custom)
    }
}

/// Death (hazard) rate `lambda_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum HazardSpec {
    Constant {
        rate: f64,
    },
    /// `lambda * (1 + t)^alpha`.
    PowerLaw {
        lambda: f64,
        alpha: f64,
    },
    /// `rates[i]` on `[breakpoints[i-1], breakpoints[i])`, with an implicit
    /// leading breakpoint at 0.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        rates: Vec<f64>,
    },
}

/// Offspring mean `a_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OffspringMeanSpec {
    Constant {
        a: f64,
    },
    /// `1 + (1 + t)^-beta`.
    OnePlusPower {
        beta: f64,
    },
    /// `1 - (1 + t)^-beta`.
    OneMinusPower {
        beta: f64,
    },
    /// `(1 + t)^-beta`.
    PurePower {
        beta: f64,
    },
    /// `high` on `[0, 2)` and on every `[4^k, 2 * 4^k)`, `low` on every
    /// `[2 * 4^(k-1), 4^k)`, `k >= 1`.
    AlternatingDyadic {
        low: f64,
        high: f64,
    },
}

/// A maximal interval on which both the hazard and the mean are given by a
/// single power-sum formula. The hazard and the mean are monotone on a piece.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    pub hazard: PowerSum,
    pub mean: PowerSum,
    /// `a_t - 1`, kept separately so it is accurate when `a_t` is close to 1.
    pub excess: PowerSum,
}

impl Piece {
    #[inline]
    pub fn hazard(&self, t: f64) -> f64 {
        self.hazard.eval(t)
    }

    #[inline]
    pub fn mean(&self, t: f64) -> f64 {
        self.mean.eval(t)
    }

    #[inline]
    pub fn excess(&self, t: f64) -> f64 {
        self.excess.eval(t)
    }

    /// Supremum of the hazard over `[a, b)`, `start <= a < b <= end`.
    #[inline]
    pub fn hazard_sup(&self, a: f64, b: f64) -> f64 {
        self.hazard.eval(a).max(self.hazard.eval(b))
    }
}

/// Immutable varying environment `(theta, lambda_t, a_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    theta: Theta,
    hazard: HazardSpec,
    offspring_mean: OffspringMeanSpec,
}

/// Structured form of the scenario configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub theta: Theta,
    pub hazard: HazardSpec,
    pub offspring_mean: OffspringMeanSpec,
}

/// One violated constraint, with the time at which it was witnessed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub constraint: String,
    pub t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, constraint: impl Into<String>, t: Option<f64>) {
        self.violations.push(Violation {
            constraint: constraint.into(),
            t,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "OK");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            match v.t {
                Some(t) => write!(f, "{} at t={}", v.constraint, t)?,
                None => write!(f, "{}", v.constraint)?,
            }
        }
        Ok(())
    }
}

/// Options for the grid fallback of [`Environment::validate_with`].
#[derive(Debug, Clone, Copy)]
pub struct ValidateOptions {
    pub grid_points: usize,
    pub grid_horizon: f64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            grid_points: 1024,
            grid_horizon: 1.0e6,
        }
    }
}

/// Index `j` with `2^j <= t < 2^(j+1)`, for finite `t >= 1`.
fn dyadic_exponent(t: f64) -> i32 {
    let mut j = t.log2().floor() as i32;
    while 2f64.powi(j) > t {
        j -= 1;
    }
    while 2f64.powi(j + 1) <= t {
        j += 1;
    }
    j
}

impl Environment {
    /// Builds an environment without checking the offspring-mean bound; see
    /// [`Environment::validate`] and [`Environment::validated`].
    pub fn new(theta: Theta, hazard: HazardSpec, offspring_mean: OffspringMeanSpec) -> Self {
        Self {
            theta,
            hazard,
            offspring_mean,
        }
    }

    /// Builds an environment and rejects it unless [`Environment::validate`] is OK.
    pub fn validated(
        theta: Theta,
        hazard: HazardSpec,
        offspring_mean: OffspringMeanSpec,
    ) -> Result<Self, EnvError> {
        let env = Self::new(theta, hazard, offspring_mean);
        let report = env.validate();
        if report.is_ok() {
            Ok(env)
        } else {
            Err(EnvError::Invalid(report.to_string()))
        }
    }

    pub fn theta(&self) -> Theta {
        self.theta
    }

    pub fn hazard_spec(&self) -> &HazardSpec {
        &self.hazard
    }

    pub fn offspring_mean_spec(&self) -> &OffspringMeanSpec {
        &self.offspring_mean
    }

    pub fn to_config(&self) -> EnvConfig {
        EnvConfig {
            theta: self.theta,
            hazard: self.hazard.clone(),
            offspring_mean: self.offspring_mean.clone(),
        }
    }

    pub fn from_config(cfg: EnvConfig) -> Self {
        Self::new(cfg.theta, cfg.hazard, cfg.offspring_mean)
    }

    /// Parses a JSON scenario configuration. Unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self, EnvError> {
        let cfg: EnvConfig =
            serde_json::from_str(text).map_err(|e| EnvError::Config(e.to_string()))?;
        Ok(Self::from_config(cfg))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_config()).expect("config serializes")
    }

    pub fn validate(&self) -> ValidationReport {
        self.validate_with(ValidateOptions::default())
    }

    /// Checks parameter ranges, then `0 <= a_t <= 1 + 1/theta` by exact
    /// per-family extremes plus a geometric grid of `grid_points` times.
    pub fn validate_with(&self, opts: ValidateOptions) -> ValidationReport {
        let mut report = ValidationReport::default();
        let theta = self.theta.get();
        if !(theta > 0.0 && theta <= 1.0) {
            report.push(format!("theta = {theta} outside (0, 1]"), None);
        }
        let bound = self.theta.mean_bound();

        match &self.hazard {
            HazardSpec::Constant { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    report.push(
                        format!("constant hazard rate {rate} must be positive"),
                        None,
                    );
                }
            }
            HazardSpec::PowerLaw { lambda, alpha } => {
                if !(lambda.is_finite() && *lambda > 0.0) {
                    report.push(format!("power-law lambda {lambda} must be positive"), None);
                }
                if !alpha.is_finite() {
                    report.push(format!("power-law alpha {alpha} must be finite"), None);
                }
            }
            HazardSpec::PiecewiseConstant { breakpoints, rates } => {
                if rates.len() != breakpoints.len() + 1 {
                    report.push(
                        format!(
                            "piecewise hazard needs {} rates for {} breakpoints, got {}",
                            breakpoints.len() + 1,
                            breakpoints.len(),
                            rates.len()
                        ),
                        None,
                    );
                }
                let mut prev = 0.0;
                for &b in breakpoints {
                    if !(b.is_finite() && b > prev) {
                        report.push(
                            format!("breakpoints must be finite, positive and increasing, got {b}"),
                            Some(b),
                        );
                    }
                    prev = b;
                }
                let mut start = 0.0;
                for (i, &r) in rates.iter().enumerate() {
                    if !(r.is_finite() && r >= 0.0) {
                        report.push(format!("hazard rate {r} must be non-negative"), Some(start));
                    }
                    start = breakpoints.get(i).copied().unwrap_or(start);
                }
            }
        }

        // exact extremes of each monotone family: (inf, sup, where inf, where sup)
        let check = |report: &mut ValidationReport,
                     lo: f64,
                     lo_t: Option<f64>,
                     hi: f64,
                     hi_t: Option<f64>| {
            if lo < 0.0 {
                report.push(format!("a_t = {lo} < 0"), lo_t);
            }
            if hi > bound {
                report.push(format!("a_t = {hi} > 1+1/theta = {bound}"), hi_t);
            }
        };
        match &self.offspring_mean {
            OffspringMeanSpec::Constant { a } => {
                if !a.is_finite() {
                    report.push(format!("offspring mean {a} must be finite"), Some(0.0));
                } else {
                    check(&mut report, *a, Some(0.0), *a, Some(0.0));
                }
            }
            OffspringMeanSpec::OnePlusPower { beta }
            | OffspringMeanSpec::OneMinusPower { beta }
            | OffspringMeanSpec::PurePower { beta } => {
                if !(beta.is_finite() && *beta >= 0.0) {
                    report.push(
                        format!("beta = {beta} must be finite and non-negative"),
                        None,
                    );
                } else {
                    // a_t is monotone: extremes at t = 0 and t -> infinity
                    let at0 = self.mean_formula(0.0);
                    let at_inf = match &self.offspring_mean {
                        _ if *beta == 0.0 => at0,
                        OffspringMeanSpec::OnePlusPower { .. } => 1.0,
                        OffspringMeanSpec::OneMinusPower { .. } => 1.0,
                        _ => 0.0,
                    };
                    let (lo, lo_t, hi, hi_t) = if at0 <= at_inf {
                        (at0, Some(0.0), at_inf, None)
                    } else {
                        (at_inf, None, at0, Some(0.0))
                    };
                    check(&mut report, lo, lo_t, hi, hi_t);
                }
            }
            OffspringMeanSpec::AlternatingDyadic { low, high } => {
                if !(low.is_finite() && high.is_finite()) {
                    report.push("alternating offspring means must be finite", None);
                } else {
                    check(&mut report, *high, Some(0.0), *high, Some(0.0));
                    check(&mut report, *low, Some(2.0), *low, Some(2.0));
                }
            }
        }

        if report.is_ok() && opts.grid_points > 1 {
            // grid fallback, geometric in 1 + t
            let n = opts.grid_points;
            let log_h = (1.0 + opts.grid_horizon).ln();
            for i in 0..n {
                let t = (log_h * i as f64 / (n - 1) as f64).exp_m1();
                let a = self.mean_formula(t);
                let l = self.hazard_formula(t);
                if !(a >= 0.0 && a <= bound) {
                    report.push(
                        format!("a_t = {a} outside [0, 1+1/theta = {bound}]"),
                        Some(t),
                    );
                    break;
                }
                if !(l >= 0.0 && l.is_finite()) {
                    report.push(
                        format!("lambda_t = {l} is not a non-negative number"),
                        Some(t),
                    );
                    break;
                }
            }
        }
        report
    }

    fn check_time(t: f64) -> Result<(), EnvError> {
        if t >= 0.0 && !t.is_nan() {
            Ok(())
        } else {
            Err(EnvError::NegativeTime(t))
        }
    }

    /// Hazard rate `lambda_t`, right-continuous at breakpoints.
    pub fn hazard_at(&self, t: f64) -> Result<f64, EnvError> {
        Self::check_time(t)?;
        Ok(self.hazard_formula(t))
    }

    /// Offspring mean `a_t`, right-continuous at breakpoints.
    pub fn mean_at(&self, t: f64) -> Result<f64, EnvError> {
        Self::check_time(t)?;
        Ok(self.mean_formula(t))
    }

    #[inline]
    fn hazard_formula(&self, t: f64) -> f64 {
        self.hazard_piece(t).1.eval(t)
    }

    #[inline]
    fn mean_formula(&self, t: f64) -> f64 {
        self.mean_piece(t).1.eval(t)
    }

    /// Hazard piece containing `t`: `((start, end), formula)`.
    fn hazard_piece(&self, t: f64) -> ((f64, f64), PowerSum) {
        match &self.hazard {
            HazardSpec::Constant { rate } => ((0.0, f64::INFINITY), PowerSum::constant(*rate)),
            HazardSpec::PowerLaw { lambda, alpha } => {
                ((0.0, f64::INFINITY), PowerSum::single(*lambda, *alpha))
            }
            HazardSpec::PiecewiseConstant { breakpoints, rates } => {
                let i = breakpoints.partition_point(|&b| b <= t);
                let start = if i == 0 { 0.0 } else { breakpoints[i - 1] };
                let end = breakpoints.get(i).copied().unwrap_or(f64::INFINITY);
                let rate = rates.get(i).copied().unwrap_or(0.0);
                ((start, end), PowerSum::constant(rate))
            }
        }
    }

    /// Mean piece containing `t`: `((start, end), a_t, a_t - 1)`.
    fn mean_piece(&self, t: f64) -> ((f64, f64), PowerSum, PowerSum) {
        let whole = (0.0, f64::INFINITY);
        match &self.offspring_mean {
            OffspringMeanSpec::Constant { a } => {
                (whole, PowerSum::constant(*a), PowerSum::constant(*a - 1.0))
            }
            OffspringMeanSpec::OnePlusPower { beta } => (
                whole,
                PowerSum::constant(1.0).with(1.0, -beta),
                PowerSum::single(1.0, -beta),
            ),
            OffspringMeanSpec::OneMinusPower { beta } => (
                whole,
                PowerSum::constant(1.0).with(-1.0, -beta),
                PowerSum::single(-1.0, -beta),
            ),
            OffspringMeanSpec::PurePower { beta } => (
                whole,
                PowerSum::single(1.0, -beta),
                PowerSum::single(1.0, -beta).with(-1.0, 0.0),
            ),
            OffspringMeanSpec::AlternatingDyadic { low, high } => {
                let (span, value) = if t < 2.0 {
                    ((0.0, 2.0), *high)
                } else {
                    let j = dyadic_exponent(t);
                    let span = (2f64.powi(j), 2f64.powi(j + 1));
                    if j % 2 == 1 {
                        (span, *low)
                    } else {
                        (span, *high)
                    }
                };
                (
                    span,
                    PowerSum::constant(value),
                    PowerSum::constant(value - 1.0),
                )
            }
        }
    }

    /// The smooth piece containing `t` (pieces are `[start, end)`).
    pub fn piece_at(&self, t: f64) -> Piece {
        let ((hs, he), hazard) = self.hazard_piece(t);
        let ((ms, me), mean, excess) = self.mean_piece(t);
        Piece {
            start: hs.max(ms),
            end: he.min(me),
            hazard,
            mean,
            excess,
        }
    }

    /// First discontinuity of `lambda` or `a` strictly after `t`, if any.
    pub fn next_breakpoint(&self, t: f64) -> Option<f64> {
        let end = self.piece_at(t).end;
        end.is_finite().then_some(end)
    }

    /// All declared discontinuities in the open interval `(a, b)`, sorted.
    pub fn breakpoints_between(&self, a: f64, b: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut t = a;
        while let Some(next) = self.next_breakpoint(t) {
            if next >= b {
                break;
            }
            out.push(next);
            t = next;
        }
        out
    }

    /// Integrates `select(piece)` over `[a, b]` in closed form, piece by piece.
    fn integrate_pieces(&self, a: f64, b: f64, select: impl Fn(&Piece) -> PowerSum) -> f64 {
        let mut total = 0.0;
        let mut s = a;
        while s < b {
            let piece = self.piece_at(s);
            let e = piece.end.min(b);
            total += select(&piece).integrate(s, e);
            s = e;
        }
        total
    }

    /// `Lambda_b - Lambda_a` in closed form.
    pub fn hazard_integral(&self, a: f64, b: f64) -> f64 {
        self.integrate_pieces(a, b, |p| p.hazard)
    }

    /// `A_b - A_a = int_a^b a_u dLambda_u` in closed form.
    pub fn mean_hazard_integral(&self, a: f64, b: f64) -> f64 {
        self.integrate_pieces(a, b, |p| p.mean.product(&p.hazard))
    }

    /// `ln mu_b - ln mu_a = int_a^b (a_u - 1) dLambda_u` in closed form.
    pub fn excess_hazard_integral(&self, a: f64, b: f64) -> f64 {
        self.integrate_pieces(a, b, |p| p.excess.product(&p.hazard))
    }

    /// `Lambda = lim Lambda_t`, in closed form.
    pub fn total_hazard(&self) -> f64 {
        match &self.hazard {
            HazardSpec::Constant { .. } => f64::INFINITY,
            HazardSpec::PowerLaw { lambda, alpha } => {
                if *alpha < -1.0 {
                    lambda / (-1.0 - alpha)
                } else {
                    f64::INFINITY
                }
            }
            HazardSpec::PiecewiseConstant { breakpoints, rates } => {
                if rates.last().copied().unwrap_or(0.0) > 0.0 {
                    f64::INFINITY
                } else {
                    let end = breakpoints.last().copied().unwrap_or(0.0);
                    self.hazard_integral(0.0, end)
                }
            }
        }
    }

    /// Exponent `g` such that `lambda_t ~ c * (1+t)^g` eventually; `None` when
    /// the hazard is eventually zero.
    pub fn hazard_tail_exponent(&self) -> Option<f64> {
        match &self.hazard {
            HazardSpec::Constant { .. } => Some(0.0),
            HazardSpec::PowerLaw { alpha, .. } => Some(*alpha),
            HazardSpec::PiecewiseConstant { rates, .. } => {
                (rates.last().copied().unwrap_or(0.0) > 0.0).then_some(0.0)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(theta: f64, hazard: HazardSpec, mean: OffspringMeanSpec) -> Environment {
        Environment::new(Theta::new(theta).unwrap(), hazard, mean)
    }

    fn ex34() -> Environment {
        env(
            1.0,
            HazardSpec::PowerLaw {
                lambda: 1.0,
                alpha: -0.5,
            },
            OffspringMeanSpec::AlternatingDyadic {
                low: 0.0,
                high: 2.0,
            },
        )
    }

    #[test]
    fn theta_range() {
        assert!(Theta::new(1.0).is_ok());
        assert!(Theta::new(0.01).is_ok());
        assert!(Theta::new(0.0).is_err());
        assert!(Theta::new(1.5).is_err());
        assert!(Theta::new(f64::NAN).is_err());
    }

    #[test]
    fn validate_examples() {
        let ok = env(
            1.0,
            HazardSpec::Constant { rate: 1.0 },
            OffspringMeanSpec::Constant { a: 1.5 },
        );
        assert!(ok.validate().is_ok());

        let bad = env(
            0.5,
            HazardSpec::Constant { rate: 1.0 },
            OffspringMeanSpec::Constant { a: 3.1 },
        );
        let report = bad.validate();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].t, Some(0.0));
        assert!(report.to_string().contains("> 1+1/theta = 3"), "{report}");

        assert!(ex34().validate().is_ok());
    }

    #[test]
    fn validate_reports_each_violation() {
        let bad = env(
            1.0,
            HazardSpec::PiecewiseConstant {
                breakpoints: vec![2.0, 1.0],
                rates: vec![1.0, -1.0],
            },
            OffspringMeanSpec::AlternatingDyadic {
                low: -0.5,
                high: 2.5,
            },
        );
        let report = bad.validate();
        assert!(report.violations.len() >= 4, "{report}");
        let low = report
            .violations
            .iter()
            .find(|v| v.constraint.contains("< 0"))
            .unwrap();
        assert_eq!(low.t, Some(2.0));
    }

    #[test]
    fn hazard_examples() {
        let p = env(
            1.0,
            HazardSpec::PowerLaw {
                lambda: 1.0,
                alpha: -0.5,
            },
            OffspringMeanSpec::Constant { a: 1.0 },
        );
        assert_eq!(p.hazard_at(3.0).unwrap(), 0.5);
        let c = env(
            1.0,
            HazardSpec::Constant { rate: 2.0 },
            OffspringMeanSpec::Constant { a: 1.0 },
        );
        assert_eq!(c.hazard_at(10.0).unwrap(), 2.0);
        let pw = env(
            1.0,
            HazardSpec::PiecewiseConstant {
                breakpoints: vec![1.0],
                rates: vec![1.0, 3.0],
            },
            OffspringMeanSpec::Constant { a: 1.0 },
        );
        assert_eq!(pw.hazard_at(1.0).unwrap(), 3.0);
        assert_eq!(pw.hazard_at(0.999).unwrap(), 1.0);
        assert!(matches!(pw.hazard_at(-1.0), Err(EnvError::NegativeTime(_))));
        assert!(pw.mean_at(-0.1).is_err());
    }

    #[test]
    fn mean_examples() {
        let h = HazardSpec::Constant { rate: 1.0 };
        assert_eq!(
            env(
                1.0,
                h.clone(),
                OffspringMeanSpec::OnePlusPower { beta: 1.0 }
            )
            .mean_at(0.0)
            .unwrap(),
            2.0
        );
        assert_eq!(ex34().mean_at(3.0).unwrap(), 0.0);
        let flat = env(1.0, h, OffspringMeanSpec::PurePower { beta: 0.0 });
        for t in [0.0, 1.0, 17.5, 1e9] {
            assert_eq!(flat.mean_at(t).unwrap(), 1.0);
        }
    }

    #[test]
    fn dyadic_blocks_are_exact() {
        let e = ex34();
        for k in 1..=20 {
            assert_eq!(e.mean_at(2f64.powi(2 * k - 1)).unwrap(), 0.0, "k={k}");
            assert_eq!(e.mean_at(2f64.powi(2 * k)).unwrap(), 2.0, "k={k}");
        }
        assert_eq!(e.mean_at(1.999).unwrap(), 2.0);
        assert_eq!(e.mean_at(2.0).unwrap(), 0.0);
        assert_eq!(e.mean_at(3.999).unwrap(), 0.0);
    }

    #[test]
    fn breakpoints_cover_discontinuities() {
        let e = ex34();
        assert_eq!(e.breakpoints_between(0.0, 20.0), vec![2.0, 4.0, 8.0, 16.0]);
        assert_eq!(e.breakpoints_between(2.0, 8.0), vec![4.0]);
        let pw = env(
            1.0,
            HazardSpec::PiecewiseConstant {
                breakpoints: vec![1.0, 3.0],
                rates: vec![1.0, 2.0, 0.0],
            },
            OffspringMeanSpec::AlternatingDyadic {
                low: 0.0,
                high: 2.0,
            },
        );
        assert_eq!(
            pw.breakpoints_between(0.0, 10.0),
            vec![1.0, 2.0, 3.0, 4.0, 8.0]
        );
    }

    #[test]
    fn continuity_away_from_breakpoints() {
        let envs = [
            ex34(),
            env(
                0.5,
                HazardSpec::PowerLaw {
                    lambda: 2.0,
                    alpha: 1.5,
                },
                OffspringMeanSpec::OnePlusPower { beta: 0.7 },
            ),
            env(
                1.0,
                HazardSpec::PowerLaw {
                    lambda: 1.0,
                    alpha: -2.0,
                },
                OffspringMeanSpec::OneMinusPower { beta: 2.0 },
            ),
        ];
        let h = 1e-8;
        for e in &envs {
            for i in 0..200 {
                let t = 0.137 + i as f64 * 0.731;
                if e.breakpoints_between(t - 1e-7, t + 1e-7).is_empty() {
                    for f in [Environment::hazard_at, Environment::mean_at] {
                        let (a, b) = (f(e, t).unwrap(), f(e, t + h).unwrap());
                        assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "t={t}");
                    }
                }
            }
        }
    }

    #[test]
    fn closed_form_hazard_integral() {
        let e = env(
            1.0,
            HazardSpec::PowerLaw {
                lambda: 1.0,
                alpha: -0.5,
            },
            OffspringMeanSpec::Constant { a: 1.0 },
        );
        assert!((e.hazard_integral(0.0, 3.0) - 2.0).abs() < 1e-14);
        let log = env(
            1.0,
            HazardSpec::PowerLaw {
                lambda: 2.0,
                alpha: -1.0,
            },
            OffspringMeanSpec::Constant { a: 1.0 },
        );
        assert!((log.hazard_integral(0.0, 9.0) - 2.0 * 10f64.ln()).abs() < 1e-13);
        let deg = env(
            1.0,
            HazardSpec::PowerLaw {
                lambda: 1.0,
                alpha: -2.0,
            },
            OffspringMeanSpec::Constant { a: 0.0 },
        );
        assert_eq!(deg.total_hazard(), 1.0);
        let pw = env(
            1.0,
            HazardSpec::PiecewiseConstant {
                breakpoints: vec![2.0],
                rates: vec![1.0, 0.0],
            },
            OffspringMeanSpec::Constant { a: 0.0 },
        );
        assert_eq!(pw.total_hazard(), 2.0);
        assert_eq!(pw.hazard_integral(1.0, 50.0), 1.0);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let good = r#"{"theta":1,"hazard":{"type":"power_law","lambda":1,"alpha":-0.5},
            "offspring_mean":{"type":"alternating_dyadic","low":0,"high":2}}"#;
        assert_eq!(Environment::from_json(good).unwrap(), ex34());
        let extra_top = r#"{"theta":1,"seed":3,"hazard":{"type":"constant","rate":1},
            "offspring_mean":{"type":"constant","a":1}}"#;
        assert!(Environment::from_json(extra_top).is_err());
        let extra_inner = r#"{"theta":1,"hazard":{"type":"constant","rate":1,"alpha":0},
            "offspring_mean":{"type":"constant","a":1}}"#;
        assert!(Environment::from_json(extra_inner).is_err());
        let bad_theta = r#"{"theta":2,"hazard":{"type":"constant","rate":1},
            "offspring_mean":{"type":"constant","a":1}}"#;
        assert!(Environment::from_json(bad_theta).is_err());
    }
}
