//! Closed-form distributional quantities: the offspring law, the generating
//! function of `Z_t`, survival, conditional means, two-time transition
//! functionals, the extinction probability and the limit laws.
//!
//! Everything is built from a [`TransformValue`]. Expressions of the form
//! `1 - X^(-1/theta)` are evaluated as `-expm1(-ln X / theta)` with `ln X`
//! assembled in the log domain, so over- and underflowing means are harmless.

use num_complex::Complex64;
use serde::Serialize;

use crate::classify::Regime;
use crate::env::Environment;
use crate::error::NumericError;
use crate::transforms::{
    eval, eval_between, probe_limits, LimitEstimate, LimitKind, ProbeConfig, ProbeSchedule,
    Quantity, Route, TransformValue,
};

#[inline]
pub(crate) fn log_add_exp(x: f64, y: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return y;
    }
    if y == f64::NEG_INFINITY {
        return x;
    }
    let m = x.max(y);
    m + (-(x - y).abs()).exp().ln_1p()
}

/// `1 - exp(-ln_x / theta)`.
#[inline]
fn one_minus_root(ln_x: f64, theta: f64) -> f64 {
    -(-ln_x / theta).exp_m1()
}

fn check_time(t: f64) -> Result<(), NumericError> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(NumericError::Domain(format!(
            "time {t} must be finite and non-negative"
        )))
    }
}

fn check_s(s: f64) -> Result<(), NumericError> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(NumericError::Domain(format!(
            "generating function argument {s} outside [0, 1]"
        )))
    }
}

fn check_order(tau: f64, t: f64) -> Result<(), NumericError> {
    check_time(tau)?;
    check_time(t)?;
    if tau > t {
        return Err(NumericError::Domain(format!("tau = {tau} > t = {t}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// offspring law

/// Offspring law with generating function
/// `h(s) = 1 - a (1-s) + a (1+theta)^-1 (1-s)^(1+theta)` at a fixed time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffspringLaw {
    pub theta: f64,
    pub a: f64,
}

impl OffspringLaw {
    pub fn new(theta: f64, a: f64) -> Self {
        Self { theta, a }
    }

    pub fn at(env: &Environment, t: f64) -> Result<Self, NumericError> {
        Ok(Self {
            theta: env.theta().get(),
            a: env.mean_at(t)?,
        })
    }

    pub fn pgf(&self, s: f64) -> f64 {
        let u = 1.0 - s;
        let v = 1.0 - self.a * u + self.a / (1.0 + self.theta) * u.powf(1.0 + self.theta);
        v.clamp(0.0, 1.0)
    }

    /// `P(N >= 2) = theta a / (1 + theta)`.
    pub fn branching_probability(&self) -> f64 {
        self.theta * self.a / (1.0 + self.theta)
    }

    pub fn pmf(&self, n: u64) -> f64 {
        let theta = self.theta;
        match n {
            0 => 1.0 - self.branching_probability(),
            1 => 0.0,
            _ => {
                let p2 = self.a * theta / 2.0;
                if n <= 64 || theta == 1.0 {
                    let mut p = p2;
                    for k in 2..n {
                        p *= (k as f64 - 1.0 - theta) / (k as f64 + 1.0);
                        if p == 0.0 {
                            break;
                        }
                    }
                    p
                } else {
                    // p(n) = a theta Gamma(n-1-theta) / (Gamma(1-theta) n!)
                    let n = n as f64;
                    let ln = libm::lgamma(n - 1.0 - theta)
                        - libm::lgamma(1.0 - theta)
                        - libm::lgamma(n + 1.0);
                    self.a * theta * ln.exp()
                }
            }
        }
    }

    /// `P(N > n | N >= 2) = Gamma(n-theta) / (Gamma(1-theta) n!)` for `n >= 1`.
    pub fn conditional_tail(theta: f64, n: u64) -> f64 {
        if n == 0 {
            return 1.0;
        }
        if theta == 1.0 {
            return if n == 1 { 1.0 } else { 0.0 };
        }
        if n <= 64 {
            let mut tail = 1.0;
            for k in 2..=n {
                tail *= (k as f64 - 1.0 - theta) / k as f64;
            }
            tail
        } else {
            let n = n as f64;
            (libm::lgamma(n - theta) - libm::lgamma(1.0 - theta) - libm::lgamma(n + 1.0)).exp()
        }
    }
}

pub fn offspring_pgf(env: &Environment, t: f64, s: f64) -> Result<f64, NumericError> {
    check_s(s)?;
    Ok(OffspringLaw::at(env, t)?.pgf(s))
}

pub fn offspring_pmf(env: &Environment, t: f64, n: u64) -> Result<f64, NumericError> {
    Ok(OffspringLaw::at(env, t)?.pmf(n))
}

// ---------------------------------------------------------------------------
// one-time quantities from a transform value

/// Generating-function evaluator for `Z_t` built from one [`TransformValue`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgfAtTime {
    pub theta: f64,
    pub tv: TransformValue,
}

impl PgfAtTime {
    pub fn new(theta: f64, tv: TransformValue) -> Self {
        Self { theta, tv }
    }

    fn ln_v_plus_c(&self) -> f64 {
        log_add_exp(self.tv.log_v, -(1.0 + self.theta).ln())
    }

    /// `ln X(s)` with `X(s) = V + c + mu^-theta ((1-s)^-theta - c)`, `c = 1/(1+theta)`.
    pub fn ln_inner(&self, s: f64) -> f64 {
        let th = self.theta;
        let c = 1.0 / (1.0 + th);
        // (1-s)^-theta - c > 0
        let ln_y = if s == 0.0 {
            (1.0 - c).ln()
        } else {
            let p = -th * (-s).ln_1p();
            (p.exp_m1() + (1.0 - c)).ln()
        };
        log_add_exp(self.ln_v_plus_c(), -th * self.tv.log_mu + ln_y)
    }

    /// `E s^Z_t`.
    pub fn pgf(&self, s: f64) -> f64 {
        if s >= 1.0 {
            return 1.0;
        }
        one_minus_root(self.ln_inner(s), self.theta).clamp(0.0, 1.0)
    }

    pub fn log_survival(&self) -> f64 {
        -self.ln_inner(0.0) / self.theta
    }

    pub fn survival(&self) -> f64 {
        self.log_survival().exp().min(1.0)
    }

    /// `ln m_t = theta^-1 ln(mu^theta V + mu^theta/(1+theta) + theta/(1+theta))`.
    pub fn log_conditional_mean(&self) -> f64 {
        let th = self.theta;
        let c = 1.0 / (1.0 + th);
        let inner = log_add_exp(
            log_add_exp(self.tv.log_mu_theta_v, c.ln() + th * self.tv.log_mu),
            (th * c).ln(),
        );
        inner / th
    }

    /// `E(s^Z_t | Z_t > 0) = 1 - (X(s)/X(0))^(-1/theta)`.
    pub fn conditional_pgf(&self, s: f64) -> f64 {
        if s >= 1.0 {
            return 1.0;
        }
        one_minus_root(self.ln_inner(s) - self.ln_inner(0.0), self.theta).clamp(0.0, 1.0)
    }

    /// `E(exp(-w Z_t / m_t) | Z_t > 0)`.
    pub fn conditional_laplace(&self, w: f64) -> f64 {
        let s = (-w * (-self.log_conditional_mean()).exp()).exp();
        self.conditional_pgf(s)
    }

    /// First-order error of `pgf(s)` from the transform error estimates.
    pub fn pgf_error(&self, s: f64) -> f64 {
        if s >= 1.0 {
            return 0.0;
        }
        let ln_x = self.ln_inner(s);
        let dx = self.tv.abs_error.v
            + (self.theta * self.tv.abs_error.log_mu)
                * (-self.theta * self.tv.log_mu).exp()
                * (1.0 - s).powf(-self.theta);
        (-(1.0 / self.theta + 1.0) * ln_x).exp() * dx / self.theta
    }
}

fn at_time(env: &Environment, t: f64, tol: f64) -> Result<PgfAtTime, NumericError> {
    check_time(t)?;
    Ok(PgfAtTime::new(env.theta().get(), eval(env, t, tol)?))
}

/// `E s^Z_t`; `s = 1` returns 1.
pub fn pgf_z(env: &Environment, t: f64, s: f64, tol: f64) -> Result<f64, NumericError> {
    check_s(s)?;
    Ok(at_time(env, t, tol)?.pgf(s))
}

/// `P(Z_t > 0) = (V + (1+theta)^-1 + theta (1+theta)^-1 mu^-theta)^(-1/theta)`.
pub fn survival(env: &Environment, t: f64, tol: f64) -> Result<f64, NumericError> {
    Ok(at_time(env, t, tol)?.survival())
}

/// `m_t = E(Z_t | Z_t > 0) = mu_t / P(Z_t > 0)`.
pub fn conditional_mean(env: &Environment, t: f64, tol: f64) -> Result<f64, NumericError> {
    Ok(at_time(env, t, tol)?.log_conditional_mean().exp())
}

pub fn conditional_pgf(env: &Environment, t: f64, s: f64, tol: f64) -> Result<f64, NumericError> {
    check_s(s)?;
    Ok(at_time(env, t, tol)?.conditional_pgf(s))
}

pub fn conditional_laplace(
    env: &Environment,
    t: f64,
    w: f64,
    tol: f64,
) -> Result<f64, NumericError> {
    if !(w >= 0.0) {
        return Err(NumericError::Domain(format!(
            "Laplace argument {w} must be non-negative"
        )));
    }
    Ok(at_time(env, t, tol)?.conditional_laplace(w))
}

// ---------------------------------------------------------------------------
// two-time quantities

/// Transition functional between `tau` and `t`, from a sweep started at `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub theta: f64,
    /// `ln mu_t - ln mu_tau`.
    pub log_mu: f64,
    /// `ln(mu_tau^theta (B_t - B_tau))`.
    pub log_b: f64,
}

impl Transition {
    pub fn between(env: &Environment, tau: f64, t: f64, tol: f64) -> Result<Self, NumericError> {
        check_order(tau, t)?;
        let tv = eval_between(env, tau, t, tol)?;
        Ok(Self {
            theta: env.theta().get(),
            log_mu: tv.log_mu,
            log_b: tv.log_b,
        })
    }

    /// `F_t(tau, s) = 1 - (mu_t(tau)^-theta (1-s)^-theta + mu_tau^theta (B_t - B_tau))^(-1/theta)`.
    pub fn pgf(&self, s: f64) -> f64 {
        if s >= 1.0 {
            return 1.0;
        }
        let th = self.theta;
        let ln_x = log_add_exp(-th * (self.log_mu + (-s).ln_1p()), self.log_b);
        one_minus_root(ln_x, th).clamp(0.0, 1.0)
    }

    /// `P(Z_t = 1 | Z_tau = 1) = mu_t(tau) (1 + mu_t(tau)^theta mu_tau^theta (B_t - B_tau))^(-1/theta - 1)`.
    pub fn stay_one(&self) -> f64 {
        let th = self.theta;
        let softplus = log_add_exp(0.0, th * self.log_mu + self.log_b);
        (self.log_mu - (1.0 / th + 1.0) * softplus)
            .exp()
            .clamp(0.0, 1.0)
    }
}

pub fn transition_pgf(
    env: &Environment,
    tau: f64,
    t: f64,
    s: f64,
    tol: f64,
) -> Result<f64, NumericError> {
    check_s(s)?;
    Ok(Transition::between(env, tau, t, tol)?.pgf(s))
}

pub fn prob_stay_one(env: &Environment, tau: f64, t: f64, tol: f64) -> Result<f64, NumericError> {
    Ok(Transition::between(env, tau, t, tol)?.stay_one())
}

// ---------------------------------------------------------------------------
// extinction and limit laws

/// Schedule and decision rules for the limit probes feeding [`extinction`]
/// and [`limit_law`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitOptions {
    pub schedule: ProbeSchedule,
    pub probe: ProbeConfig,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self {
            schedule: ProbeSchedule::default(),
            probe: ProbeConfig {
                route: Route::ClosedForm,
                ..ProbeConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtinctionReport {
    /// `None` when the limit probes are inconclusive.
    pub q: Option<f64>,
    pub survival: Option<f64>,
    pub v_limit: LimitEstimate,
    pub log_mu_limit: LimitEstimate,
    pub lambda_limit: LimitEstimate,
    /// Limit of `mu_t^-theta` that entered the formula.
    pub mu_neg_theta: Option<f64>,
    /// The closed-form expression `(V + (1+theta)^-1 + theta (1+theta)^-1 mu^-theta)^(-1/theta)`
    /// is the survival probability; `q` is its complement.
    pub q_from_complement: bool,
}

/// Extinction probability `q = lim P(Z_t = 0)` from the probed limits of
/// `V_t`, `ln mu_t` and `Lambda_t`.
pub fn extinction(env: &Environment, opts: &LimitOptions) -> ExtinctionReport {
    let mut probes = probe_limits(
        env,
        &[Quantity::V, Quantity::LogMu, Quantity::Lambda],
        &opts.schedule,
        &opts.probe,
    );
    let lambda_limit = probes.pop().expect("three probes");
    let log_mu_limit = probes.pop().expect("three probes");
    let v_limit = probes.pop().expect("three probes");
    let theta = env.theta().get();

    let mu_neg_theta = match (log_mu_limit.kind, lambda_limit.kind) {
        (LimitKind::Finite { value, .. }, _) => Some((-theta * value).exp()),
        (LimitKind::Diverges, _) => Some(0.0),
        (_, LimitKind::Diverges) if v_limit.finite_value().is_some() => Some(0.0),
        _ => None,
    };
    let (q, survival) = match v_limit.kind {
        LimitKind::Diverges => (Some(1.0), Some(0.0)),
        LimitKind::Finite { value: v, .. } => match mu_neg_theta {
            Some(mnt) => {
                let c = 1.0 / (1.0 + theta);
                let x = v + c + theta * c * mnt;
                let q = one_minus_root(x.ln(), theta).clamp(0.0, 1.0);
                (Some(q), Some(1.0 - q))
            }
            None => (None, None),
        },
        _ => (None, None),
    };
    ExtinctionReport {
        q,
        survival,
        v_limit,
        log_mu_limit,
        lambda_limit,
        mu_neg_theta,
        q_from_complement: true,
    }
}

/// Limit law matching a regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum LimitLaw {
    /// `E exp(-w W) = 1 - (V_theta + (1+theta)^-1 + w^-theta)^(-1/theta)` for `W = lim Z_t / mu_t`.
    WLaplace { theta: f64, v_theta: f64 },
    /// `E s^Z_inf = 1 - (V_theta + (1+theta)^-1 (1 - mu^-theta) + mu^-theta (1-s)^-theta)^(-1/theta)`.
    ZInfinityPgf {
        theta: f64,
        v_theta: f64,
        log_mu: f64,
    },
    /// `lim E(exp(-w Z_t/m_t) | Z_t > 0) = 1 - (1 + w^-theta)^(-1/theta)`.
    CriticalConditionalLaplace { theta: f64 },
    /// `lim E(s^Z_t | Z_t > 0) = 1 - m (M_theta - (1+theta)^-1 + (1-s)^-theta)^(-1/theta)`.
    SubcriticalConditionalPgf { theta: f64, m_theta: f64, m: f64 },
}

impl LimitLaw {
    /// True when the evaluator takes a Laplace argument `w >= 0` rather than `s` in `[0, 1]`.
    pub fn takes_laplace_argument(&self) -> bool {
        matches!(
            self,
            LimitLaw::WLaplace { .. } | LimitLaw::CriticalConditionalLaplace { .. }
        )
    }

    pub fn eval(&self, x: f64) -> f64 {
        let ln_pow = |th: f64, x: f64| -th * x.ln();
        match *self {
            LimitLaw::WLaplace { theta, v_theta } => {
                if x == 0.0 {
                    return 1.0;
                }
                let c = 1.0 / (1.0 + theta);
                let ln_x = log_add_exp((v_theta + c).ln(), ln_pow(theta, x));
                one_minus_root(ln_x, theta)
            }
            LimitLaw::ZInfinityPgf {
                theta,
                v_theta,
                log_mu,
            } => {
                let pgf = PgfAtTime::new(theta, limit_transform(theta, v_theta, log_mu));
                pgf.pgf(x)
            }
            LimitLaw::CriticalConditionalLaplace { theta } => {
                if x == 0.0 {
                    return 1.0;
                }
                one_minus_root(log_add_exp(0.0, ln_pow(theta, x)), theta)
            }
            LimitLaw::SubcriticalConditionalPgf { theta, m_theta, m } => {
                if x >= 1.0 {
                    return 1.0;
                }
                let c = 1.0 / (1.0 + theta);
                let y = m_theta - c + (-theta * (-x).ln_1p()).exp();
                (1.0 - m * y.powf(-1.0 / theta)).clamp(0.0, 1.0)
            }
        }
    }
}

fn limit_transform(theta: f64, v: f64, log_mu: f64) -> TransformValue {
    let log_v = v.ln();
    TransformValue {
        t: f64::INFINITY,
        lambda: f64::NAN,
        log_mu,
        a: f64::NAN,
        v,
        b: f64::NAN,
        mu_theta_v: (log_v + theta * log_mu).exp(),
        log_v,
        log_b: f64::NAN,
        log_mu_theta_v: log_v + theta * log_mu,
        abs_error: Default::default(),
    }
}

/// Limit law for `regime`. Loosely subcritical environments have no single
/// limit; pass the partial limit `M_theta` along the chosen subsequence.
pub fn limit_law(
    env: &Environment,
    regime: Regime,
    partial_limit: Option<f64>,
    opts: &LimitOptions,
) -> Result<LimitLaw, NumericError> {
    let theta = env.theta().get();
    let need = |q: Quantity| -> Result<f64, NumericError> {
        let est = probe_limits(env, &[q], &opts.schedule, &opts.probe)
            .pop()
            .expect("one probe");
        est.finite_value().ok_or_else(|| {
            NumericError::Inconclusive(format!("{q:?} has no finite probed limit: {:?}", est.kind))
        })
    };
    let subcritical = |m_theta: f64| {
        let m = (m_theta + theta / (1.0 + theta)).powf(1.0 / theta);
        LimitLaw::SubcriticalConditionalPgf { theta, m_theta, m }
    };
    match regime {
        Regime::Supercritical => Ok(LimitLaw::WLaplace {
            theta,
            v_theta: need(Quantity::V)?,
        }),
        Regime::AsymptoticallyDegenerate => Ok(LimitLaw::ZInfinityPgf {
            theta,
            v_theta: need(Quantity::V)?,
            log_mu: need(Quantity::LogMu)?,
        }),
        Regime::Critical => Ok(LimitLaw::CriticalConditionalLaplace { theta }),
        Regime::StrictlySubcritical => Ok(subcritical(need(Quantity::MuThetaV)?)),
        Regime::LooselySubcritical => match partial_limit {
            Some(m) if m.is_finite() && m >= 0.0 => Ok(subcritical(m)),
            _ => Err(NumericError::RegimeMismatch(
                "a loosely subcritical law needs a finite partial limit of mu^theta V".into(),
            )),
        },
    }
}

// ---------------------------------------------------------------------------
// pmf by inversion on a circle

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmfOptions {
    pub radius: f64,
    pub points: usize,
}

impl Default for PmfOptions {
    fn default() -> Self {
        Self {
            radius: 0.9,
            points: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PmfResult {
    pub probabilities: Vec<f64>,
    /// `r^N / (1 - r^N)`: mass folded in from indices `k + jN`.
    pub aliasing_bound: f64,
    /// Round-off amplification at the largest index, `N eps r^-k_max`.
    pub roundoff_bound: f64,
}

impl PgfAtTime {
    /// `E z^Z_t` for complex `z` with `Re(1 - z) > 0`.
    pub fn pgf_complex(&self, z: Complex64) -> Complex64 {
        let th = self.theta;
        let c = 1.0 / (1.0 + th);
        let one = Complex64::new(1.0, 0.0);
        let pow = ((one - z).ln() * -th).exp();
        let y = pow - c;
        let lm = self.tv.log_mu;
        let ln_x = if -th * lm > 0.0 {
            // mu < 1: factor mu^-theta out
            let rest = y + (c * (th * lm).exp() + self.tv.log_mu_theta_v.exp());
            rest.ln() - th * lm
        } else {
            (y * (-th * lm).exp() + ((self.ln_v_plus_c()).exp())).ln()
        };
        one - (ln_x * (-1.0 / th)).exp()
    }
}

/// `P(Z_t = k)` for `k = 0..=k_max` by trapezoidal inversion of the
/// generating function on the circle `|z| = r`.
pub fn pmf_z(
    env: &Environment,
    t: f64,
    k_max: usize,
    tol: f64,
    opts: &PmfOptions,
) -> Result<PmfResult, NumericError> {
    if !(opts.radius > 0.0 && opts.radius < 1.0) {
        return Err(NumericError::Domain(format!(
            "inversion radius {} must lie in (0, 1)",
            opts.radius
        )));
    }
    if opts.points < 2 || k_max >= opts.points {
        return Err(NumericError::Domain(format!(
            "need k_max < points, got {k_max} and {}",
            opts.points
        )));
    }
    let g = at_time(env, t, tol)?;
    let n = opts.points;
    let r = opts.radius;
    let values: Vec<Complex64> = (0..n)
        .map(|j| {
            let z = Complex64::from_polar(r, 2.0 * std::f64::consts::PI * j as f64 / n as f64);
            g.pgf_complex(z)
        })
        .collect();
    if values
        .iter()
        .any(|v| !v.re.is_finite() || !v.im.is_finite())
    {
        return Err(NumericError::NotANumber(t));
    }
    let probabilities = (0..=k_max)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, v) in values.iter().enumerate() {
                let phase = -2.0 * std::f64::consts::PI * ((j * k) % n) as f64 / n as f64;
                acc += v * Complex64::from_polar(1.0, phase);
            }
            (acc.re / n as f64 / r.powi(k as i32)).clamp(0.0, 1.0)
        })
        .collect();
    let rn = r.powi(n as i32);
    Ok(PmfResult {
        probabilities,
        aliasing_bound: rn / (1.0 - rn),
        roundoff_bound: n as f64 * f64::EPSILON * r.powi(-(k_max as i32)),
    })
}

// ---------------------------------------------------------------------------
// CSV rows

/// One exact evaluation: `t,s_or_w,value,err`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactRow {
    pub t: f64,
    pub s_or_w: f64,
    pub value: f64,
    pub err: f64,
}

impl ExactRow {
    pub const CSV_HEADER: &'static str = "t,s_or_w,value,err";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{:e}", self.t, self.s_or_w, self.value, self.err)
    }
}
