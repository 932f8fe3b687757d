//! Integral transforms of the environment.
//!
//! For a time `t` the engine computes
//!
//! * `Lambda_t = int_0^t lambda_u du`,
//! * `A_t = int_0^t a_u dLambda_u`,
//! * `ln mu_t = int_0^t (a_u - 1) dLambda_u`,
//! * `V_t = theta/(1+theta) int_0^t mu_u^-theta dLambda_u`,
//! * `B_t = theta/(1+theta) int_0^t mu_u^-theta a_u dLambda_u`,
//! * `mu_t^theta V_t`.
//!
//! The time axis is cut into segments at every breakpoint and wherever `1 + t`
//! doubles, and the sweep carries `V`, `B` and `mu^theta V` as logarithms.
//! Within a segment `ln mu` is monotone, so the integrand
//! `exp(-theta (ln mu_u - c))` is shifted by the segment minimum `c` and
//! never overflows. The offset `ln mu_u - c` is integrated from the endpoint
//! where the minimum sits, which keeps it accurate where the weight is
//! largest even when `ln mu` itself is huge.

use serde::Serialize;

use crate::env::{Environment, HazardSpec, OffspringMeanSpec, Piece, PowerSum, PowerTerm};
use crate::error::NumericError;
use crate::quad::{integrate, QuadOptions};

/// Default absolute/relative tolerance of [`eval`].
pub const DEFAULT_TOL: f64 = 1e-10;

/// How `ln mu_u` is obtained inside the V and B integrands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Nested adaptive quadrature of `(a_u - 1) lambda_u`.
    Quadrature,
    /// Elementary antiderivatives of the environment's power sums.
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct TransformErrors {
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    pub log_mu: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "mu_theta_V")]
    pub mu_theta_v: f64,
}

impl TransformErrors {
    pub fn max(&self) -> f64 {
        [
            self.lambda,
            self.log_mu,
            self.a,
            self.v,
            self.b,
            self.mu_theta_v,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Transforms evaluated at one time point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransformValue {
    pub t: f64,
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    pub log_mu: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "mu_theta_V")]
    pub mu_theta_v: f64,
    /// `ln V`, `ln B`, `ln(mu^theta V)`; `-inf` for zero.
    pub log_v: f64,
    pub log_b: f64,
    pub log_mu_theta_v: f64,
    pub abs_error: TransformErrors,
}

impl TransformValue {
    pub const CSV_HEADER: &'static str = "t,Lambda,log_mu,A,V,B,mu_theta_V,err";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:e}",
            self.t,
            self.lambda,
            self.log_mu,
            self.a,
            self.v,
            self.b,
            self.mu_theta_v,
            self.abs_error.max()
        )
    }

    /// `mu_t`, possibly over- or underflowing.
    pub fn mu(&self) -> f64 {
        self.log_mu.exp()
    }
}

#[inline]
fn log_add_exp(x: f64, y: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return y;
    }
    if y == f64::NEG_INFINITY {
        return x;
    }
    let m = x.max(y);
    m + (-(x - y).abs()).exp().ln_1p()
}

/// Value-weighted combination of relative errors of two summands given in log form.
#[inline]
fn merge_rel(log_a: f64, rel_a: f64, log_b: f64, rel_b: f64, log_sum: f64) -> f64 {
    let wa = if log_a == f64::NEG_INFINITY {
        0.0
    } else {
        (log_a - log_sum).exp()
    };
    let wb = if log_b == f64::NEG_INFINITY {
        0.0
    } else {
        (log_b - log_sum).exp()
    };
    wa * rel_a + wb * rel_b
}

/// `(1+t)` doubles at most once per segment.
#[inline]
fn geometric_step(s: f64) -> f64 {
    2.0 * s + 1.0
}

const BASE_REL_TOL: f64 = 1e-14;
const INNER_REL_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy)]
struct SweepState {
    t: f64,
    lambda: f64,
    a: f64,
    log_mu: f64,
    log_v: f64,
    log_b: f64,
    log_mv: f64,
    err_lambda: f64,
    err_a: f64,
    err_log_mu: f64,
    rel_v: f64,
    rel_b: f64,
    rel_mv: f64,
}

/// Forward sweep of the transforms from an origin `tau`. With `tau > 0`
/// the accumulated values are the two-time versions: `Lambda_t - Lambda_tau`,
/// `ln mu_t - ln mu_tau`, `mu_tau^theta (V_t - V_tau)` and so on.
pub struct Sweep<'e> {
    env: &'e Environment,
    route: Route,
    tol: f64,
    state: SweepState,
}

impl<'e> Sweep<'e> {
    pub fn new(
        env: &'e Environment,
        origin: f64,
        tol: f64,
        route: Route,
    ) -> Result<Self, NumericError> {
        if !(origin >= 0.0 && origin.is_finite()) {
            return Err(NumericError::Domain(format!(
                "sweep origin {origin} must be finite and non-negative"
            )));
        }
        if !(tol > 0.0) {
            return Err(NumericError::Domain(format!(
                "tolerance {tol} must be positive"
            )));
        }
        Ok(Self {
            env,
            route,
            tol,
            state: SweepState {
                t: origin,
                lambda: 0.0,
                a: 0.0,
                log_mu: 0.0,
                log_v: f64::NEG_INFINITY,
                log_b: f64::NEG_INFINITY,
                log_mv: f64::NEG_INFINITY,
                err_lambda: 0.0,
                err_a: 0.0,
                err_log_mu: 0.0,
                rel_v: 0.0,
                rel_b: 0.0,
                rel_mv: 0.0,
            },
        })
    }

    pub fn time(&self) -> f64 {
        self.state.t
    }

    /// Advances the sweep to `target >= time()`.
    pub fn advance_to(&mut self, target: f64) -> Result<(), NumericError> {
        if target < self.state.t || target.is_nan() {
            return Err(NumericError::Domain(format!(
                "cannot sweep backwards from {} to {target}",
                self.state.t
            )));
        }
        if target.is_infinite() {
            return Err(NumericError::Domain("sweep target must be finite".into()));
        }
        while self.state.t < target {
            let s = self.state.t;
            let piece = self.env.piece_at(s);
            let e = target.min(piece.end).min(geometric_step(s));
            self.segment(&piece, s, e)?;
            self.state.t = e;
        }
        Ok(())
    }

    /// `|ln mu|` increment over the stretch of length `x` that starts at
    /// `base` (forward) or ends there (backward). Working with the offset `x`
    /// rather than `base + x` keeps short stretches far from the origin exact.
    fn excess_offset(
        &self,
        piece: &Piece,
        base: f64,
        x: f64,
        forward: bool,
    ) -> Result<f64, NumericError> {
        if x == 0.0 {
            return Ok(0.0);
        }
        let product = piece.excess.product(&piece.hazard);
        let value = match self.route {
            Route::ClosedForm => {
                if forward {
                    product.integrate_span(base, x)
                } else {
                    product.integrate_span(base - x, x)
                }
            }
            Route::Quadrature => {
                if product.terms().is_empty() {
                    return Ok(0.0);
                }
                if product.is_constant() {
                    product.eval(base) * x
                } else {
                    let opts = QuadOptions {
                        rel_tol: INNER_REL_TOL,
                        abs_tol: 1e-300,
                        initial_panels: 1,
                        ..QuadOptions::default()
                    };
                    let at = |y: f64| if forward { base + y } else { base - y };
                    integrate(
                        |y| [piece.excess(at(y)) * piece.hazard(at(y))],
                        0.0,
                        x,
                        &opts,
                    )?
                    .value[0]
                }
            }
        };
        Ok(if forward { value } else { -value })
    }

    fn segment(&mut self, piece: &Piece, s: f64, e: f64) -> Result<(), NumericError> {
        let theta = self.env.theta().get();
        let log_w = self.env.theta().weight().ln();

        // base integrals: Lambda, A, ln mu
        let (d_lambda, d_a, delta, e_lambda, e_a, e_delta) = match self.route {
            Route::Quadrature => {
                let opts = QuadOptions {
                    rel_tol: BASE_REL_TOL,
                    abs_tol: 1e-300,
                    ..QuadOptions::default()
                };
                let q = integrate(
                    |u| {
                        let l = piece.hazard(u);
                        [l, piece.mean(u) * l, piece.excess(u) * l]
                    },
                    s,
                    e,
                    &opts,
                )?;
                (
                    q.value[0],
                    q.value[1],
                    q.value[2],
                    q.abs_error[0],
                    q.abs_error[1],
                    q.abs_error[2],
                )
            }
            Route::ClosedForm => {
                let ulp = |x: f64| 4.0 * f64::EPSILON * x.abs();
                let dl = piece.hazard.integrate(s, e);
                let da = piece.mean.product(&piece.hazard).integrate(s, e);
                let dd = piece.excess.product(&piece.hazard).integrate(s, e);
                (dl, da, dd, ulp(dl), ulp(da), ulp(dd))
            }
        };

        // weight exp(-theta d(u)) with d(u) = ln mu_u - min(ln mu) >= 0
        let increasing = delta >= 0.0;
        let flat = piece.excess.terms().iter().all(|t| t.coef == 0.0)
            || piece.hazard.terms().iter().all(|t| t.coef == 0.0);
        let kq = QuadOptions {
            rel_tol: (0.25 * self.tol).max(1e-14),
            abs_tol: 1e-300,
            ..QuadOptions::default()
        };
        let mut inner_err: Option<NumericError> = None;
        // integrate in the offset from the minimum, where the weight concentrates
        let k = integrate(
            |x| {
                let (u, d) = if increasing {
                    (s + x, self.excess_offset(piece, s, x, true))
                } else {
                    (e - x, self.excess_offset(piece, e, x, false))
                };
                let d = if flat { Ok(0.0) } else { d };
                let d = match d {
                    Ok(d) => d.max(0.0),
                    Err(err) => {
                        inner_err.get_or_insert(err);
                        0.0
                    }
                };
                let l = piece.hazard(u) * (-theta * d).exp();
                [l, l * piece.mean(u)]
            },
            0.0,
            e - s,
            &kq,
        )?;
        if let Some(err) = inner_err {
            return Err(err);
        }
        let [k_v, k_b] = k.value;
        let rel_kv = if k_v > 0.0 { k.abs_error[0] / k_v } else { 0.0 };
        let rel_kb = if k_b > 0.0 { k.abs_error[1] / k_b } else { 0.0 };

        let st = &mut self.state;
        let min_log_mu = st.log_mu + delta.min(0.0);
        let seg_log_v = if k_v > 0.0 {
            log_w - theta * min_log_mu + k_v.ln()
        } else {
            f64::NEG_INFINITY
        };
        let seg_log_b = if k_b > 0.0 {
            log_w - theta * min_log_mu + k_b.ln()
        } else {
            f64::NEG_INFINITY
        };
        let seg_log_mv = if k_v > 0.0 {
            log_w + theta * delta.max(0.0) + k_v.ln()
        } else {
            f64::NEG_INFINITY
        };

        let new_log_v = log_add_exp(st.log_v, seg_log_v);
        st.rel_v = merge_rel(st.log_v, st.rel_v, seg_log_v, rel_kv, new_log_v);
        st.log_v = new_log_v;

        let new_log_b = log_add_exp(st.log_b, seg_log_b);
        st.rel_b = merge_rel(st.log_b, st.rel_b, seg_log_b, rel_kb, new_log_b);
        st.log_b = new_log_b;

        let carried = if st.log_mv == f64::NEG_INFINITY {
            st.log_mv
        } else {
            st.log_mv + theta * delta
        };
        let new_log_mv = log_add_exp(carried, seg_log_mv);
        st.rel_mv = merge_rel(
            carried,
            st.rel_mv + theta * e_delta,
            seg_log_mv,
            rel_kv,
            new_log_mv,
        );
        st.log_mv = new_log_mv;

        st.lambda += d_lambda;
        st.a += d_a;
        st.log_mu += delta;
        st.err_lambda += e_lambda;
        st.err_a += e_a;
        st.err_log_mu += e_delta;
        Ok(())
    }

    pub fn value(&self) -> TransformValue {
        let st = &self.state;
        let theta = self.env.theta().get();
        let v = st.log_v.exp();
        let b = st.log_b.exp();
        let mv = st.log_mv.exp();
        // an error in ln mu shifts the V integrand by a factor exp(theta err)
        let shift = theta * st.err_log_mu;
        let abs_error = TransformErrors {
            lambda: st.err_lambda,
            log_mu: st.err_log_mu,
            a: st.err_a,
            v: v * (st.rel_v + shift),
            b: b * (st.rel_b + shift),
            mu_theta_v: mv * (st.rel_mv + shift),
        };
        TransformValue {
            t: st.t,
            lambda: st.lambda,
            log_mu: st.log_mu,
            a: st.a,
            v,
            b,
            mu_theta_v: mv,
            log_v: st.log_v,
            log_b: st.log_b,
            log_mu_theta_v: st.log_mv,
            abs_error,
        }
    }
}

/// Transforms at `t` by quadrature, with per-field error at most about
/// `tol * max(1, |value|)`.
pub fn eval(env: &Environment, t: f64, tol: f64) -> Result<TransformValue, NumericError> {
    check_time(t)?;
    let mut sweep = Sweep::new(env, 0.0, tol, Route::Quadrature)?;
    sweep.advance_to(t)?;
    Ok(sweep.value())
}

/// Transforms at every point of an increasing grid, in one sweep.
pub fn eval_grid(
    env: &Environment,
    times: &[f64],
    tol: f64,
    route: Route,
) -> Result<Vec<TransformValue>, NumericError> {
    let mut sweep = Sweep::new(env, 0.0, tol, route)?;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        check_time(t)?;
        sweep.advance_to(t)?;
        out.push(sweep.value());
    }
    Ok(out)
}

/// Two-time transforms over `[tau, t]`: `Lambda_t - Lambda_tau`,
/// `ln mu_t - ln mu_tau`, `A_t - A_tau`, `mu_tau^theta (V_t - V_tau)`,
/// `mu_tau^theta (B_t - B_tau)` and `mu_t^theta (V_t - V_tau)`.
pub fn eval_between(
    env: &Environment,
    tau: f64,
    t: f64,
    tol: f64,
) -> Result<TransformValue, NumericError> {
    check_time(tau)?;
    check_time(t)?;
    if tau > t {
        return Err(NumericError::Domain(format!("tau = {tau} > t = {t}")));
    }
    let mut sweep = Sweep::new(env, tau, tol, Route::Quadrature)?;
    sweep.advance_to(t)?;
    Ok(sweep.value())
}

/// `ln mu_t(tau) = ln mu_t - ln mu_tau`.
pub fn mean_two_time(env: &Environment, tau: f64, t: f64, tol: f64) -> Result<f64, NumericError> {
    check_time(tau)?;
    check_time(t)?;
    if tau > t {
        return Err(NumericError::Domain(format!("tau = {tau} > t = {t}")));
    }
    let opts = QuadOptions {
        rel_tol: BASE_REL_TOL.max(tol.min(1e-12)),
        abs_tol: 1e-300,
        ..QuadOptions::default()
    };
    let mut total = 0.0;
    let mut s = tau;
    while s < t {
        let piece = env.piece_at(s);
        let e = t.min(piece.end).min(geometric_step(s));
        total += integrate(|u| [piece.excess(u) * piece.hazard(u)], s, e, &opts)?.value[0];
        s = e;
    }
    Ok(total)
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

/// Outcome of [`eval_closed_form`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedForm {
    Full(TransformValue),
    /// Only `Lambda_t` has a closed form (dyadic alternating means).
    LambdaOnly {
        t: f64,
        lambda: f64,
    },
}

/// `ln(expm1(x) / x)`, finite for all finite `x`.
fn ln_expm1_ratio(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if x > 1.0 {
        x + (-(-x).exp_m1()).ln() - x.ln()
    } else {
        (x.exp_m1() / x).ln()
    }
}

/// Closed-form transforms. `Lambda`, `A` and `ln mu` always use elementary
/// antiderivatives; `V` and `B` do too when the integrand is elementary (a
/// constant environment, or `ln mu_t = kappa ln(1+t)`), and are otherwise a
/// quadrature of the explicit integrand.
pub fn eval_closed_form(env: &Environment, t: f64, tol: f64) -> Result<ClosedForm, NumericError> {
    check_time(t)?;
    if matches!(
        env.offspring_mean_spec(),
        OffspringMeanSpec::AlternatingDyadic { .. }
    ) {
        return Ok(ClosedForm::LambdaOnly {
            t,
            lambda: env.hazard_integral(0.0, t),
        });
    }
    let theta = env.theta().get();
    let w = env.theta().weight();
    let lambda = env.hazard_integral(0.0, t);
    let a = env.mean_hazard_integral(0.0, t);
    let log_mu = env.excess_hazard_integral(0.0, t);
    let ulp = |x: f64| 8.0 * f64::EPSILON * x.abs();

    let constant_rate = match env.hazard_spec() {
        HazardSpec::Constant { rate } => Some(*rate),
        HazardSpec::PowerLaw { lambda, alpha } if *alpha == 0.0 => Some(*lambda),
        _ => None,
    };
    let elementary = match (constant_rate, env.offspring_mean_spec()) {
        (Some(r), OffspringMeanSpec::Constant { a: mean }) => {
            // V = w r int_0^t exp(-k u) du with k = theta (a - 1) r
            let k = theta * (mean - 1.0) * r;
            let log_v = if t == 0.0 {
                f64::NEG_INFINITY
            } else {
                (w * r * t).ln() + ln_expm1_ratio(-k * t)
            };
            let log_b = if *mean > 0.0 {
                log_v + mean.ln()
            } else {
                f64::NEG_INFINITY
            };
            Some((log_v, log_b))
        }
        _ => env.power_family().and_then(|fam| {
            use crate::env::scenario::PowerFamilyKind as K;
            let sign = match fam.kind {
                K::OnePlus => 1.0,
                K::OneMinus => -1.0,
                K::Pure => return None,
            };
            (fam.beta == 1.0 + fam.alpha).then(|| {
                // ln mu_u = kappa ln(1+u): V = w lambda int (1+u)^(alpha - theta kappa)
                let kappa = sign * fam.lambda;
                let g = fam.alpha - theta * kappa;
                let v = PowerTerm {
                    coef: w * fam.lambda,
                    exponent: g,
                }
                .integrate(0.0, t);
                let b = PowerSum::single(w * fam.lambda, g)
                    .with(sign * w * fam.lambda, g - fam.beta)
                    .integrate(0.0, t);
                (v.ln(), b.ln())
            })
        }),
    };

    let value = match elementary {
        Some((log_v, log_b)) => {
            let log_mv = log_v + theta * log_mu;
            let (v, b, mv) = (log_v.exp(), log_b.exp(), log_mv.exp());
            TransformValue {
                t,
                lambda,
                log_mu,
                a,
                v,
                b,
                mu_theta_v: mv,
                log_v,
                log_b,
                log_mu_theta_v: log_mv,
                abs_error: TransformErrors {
                    lambda: ulp(lambda),
                    log_mu: ulp(log_mu).max(ulp(a)),
                    a: ulp(a),
                    v: ulp(v) * (1.0 + t),
                    b: ulp(b) * (1.0 + t),
                    mu_theta_v: ulp(mv) * (1.0 + log_mu.abs()),
                },
            }
        }
        None => {
            let mut sweep = Sweep::new(env, 0.0, tol, Route::ClosedForm)?;
            sweep.advance_to(t)?;
            let mut v = sweep.value();
            // closed-form base quantities over the whole span
            v.lambda = lambda;
            v.a = a;
            v.log_mu = log_mu;
            v
        }
    };
    Ok(ClosedForm::Full(value))
}

// ---------------------------------------------------------------------------
// limit probing

/// Quantities whose `t -> infinity` limits decide the regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Quantity {
    Lambda,
    LogMu,
    V,
    MuThetaV,
}

impl Quantity {
    fn pick(self, v: &TransformValue) -> f64 {
        match self {
            Quantity::Lambda => v.lambda,
            Quantity::LogMu => v.log_mu,
            Quantity::V => v.v,
            Quantity::MuThetaV => v.mu_theta_v,
        }
    }
}

/// Geometric probe times `t0 * ratio^k`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeSchedule {
    pub t0: f64,
    pub ratio: f64,
    pub steps: usize,
}

impl Default for ProbeSchedule {
    fn default() -> Self {
        Self {
            t0: 1.0,
            ratio: 2.0,
            steps: 40,
        }
    }
}

impl ProbeSchedule {
    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps)
            .map(|k| self.t0 * self.ratio.powi(k as i32))
            .collect()
    }
}

/// Finite-horizon decision rules. These are heuristics: a limit is a
/// statement about `t -> infinity` and no finite schedule settles it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeConfig {
    /// Cauchy tolerance: probes agree when they differ by less than `tol (1 + |v|)`.
    pub tol: f64,
    /// Quadrature tolerance for the underlying sweep.
    pub eval_tol: f64,
    pub divergence_threshold: f64,
    pub cauchy_window: usize,
    pub no_limit_window: usize,
    pub growth_window: usize,
    pub growth_factor: f64,
    /// Successive increments shrinking by less than this ratio count as
    /// non-summable (at least logarithmic growth).
    pub increment_ratio: f64,
    pub route: Route,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            eval_tol: DEFAULT_TOL,
            divergence_threshold: 1e12,
            cauchy_window: 3,
            no_limit_window: 10,
            growth_window: 5,
            growth_factor: 1.5,
            increment_ratio: 0.99,
            route: Route::Quadrature,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LimitKind {
    Finite { value: f64, error: f64 },
    Diverges,
    NoLimit { liminf: f64, limsup: f64 },
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitEstimate {
    pub quantity: Quantity,
    #[serde(flatten)]
    pub kind: LimitKind,
    pub horizon_used: f64,
    pub evidence: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl LimitEstimate {
    pub fn finite_value(&self) -> Option<f64> {
        match self.kind {
            LimitKind::Finite { value, .. } => Some(value),
            _ => None,
        }
    }

    pub fn is_diverging(&self) -> bool {
        matches!(self.kind, LimitKind::Diverges)
    }
}

/// Applies the decision rules to a probe sequence.
pub fn decide(values: &[f64], cfg: &ProbeConfig) -> LimitKind {
    let n = values.len();
    if n < cfg.cauchy_window.max(2) {
        return LimitKind::Inconclusive;
    }
    let last = values[n - 1];

    // Cauchy criterion on the last probes
    let tail = &values[n - cfg.cauchy_window..];
    if tail.iter().all(|v| v.is_finite()) {
        let scale = cfg.tol * (1.0 + last.abs());
        let spread = tail.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
            - tail.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        if spread < scale {
            return LimitKind::Finite {
                value: last,
                error: spread,
            };
        }
    }

    // recurring window extremes on a bounded scale
    if n >= cfg.no_limit_window && cfg.no_limit_window >= 4 {
        let window = &values[n - cfg.no_limit_window..];
        let squash = |v: f64| {
            if v.is_infinite() {
                v.signum()
            } else {
                v / (1.0 + v.abs())
            }
        };
        let phi: Vec<f64> = window.iter().map(|&v| squash(v)).collect();
        let lo = phi.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let gap = hi - lo;
        if gap > 10.0 * cfg.tol {
            let band = 0.25 * gap;
            let mut labels = phi.iter().filter_map(|&p| {
                if p <= lo + band {
                    Some(false)
                } else if p >= hi - band {
                    Some(true)
                } else {
                    None
                }
            });
            let mut switches = 0;
            if let Some(mut prev) = labels.next() {
                for l in labels {
                    if l != prev {
                        switches += 1;
                        prev = l;
                    }
                }
            }
            if switches >= 3 {
                let liminf = window.iter().copied().fold(f64::INFINITY, f64::min);
                let limsup = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                return LimitKind::NoLimit { liminf, limsup };
            }
        }
    }

    if last > cfg.divergence_threshold {
        return LimitKind::Diverges;
    }
    let g = cfg.growth_window.max(2);
    if n >= g {
        let w = &values[n - g..];
        let increments: Vec<f64> = w.windows(2).map(|p| p[1] - p[0]).collect();
        let monotone = increments.iter().all(|&d| d >= 0.0);
        if monotone && w[0] > 0.0 && last > cfg.growth_factor * w[0] {
            return LimitKind::Diverges;
        }
        let floor = cfg.tol * (1.0 + last.abs());
        let non_summable = increments.iter().all(|&d| d > floor)
            && increments
                .windows(2)
                .all(|p| p[1] >= cfg.increment_ratio * p[0]);
        if non_summable {
            return LimitKind::Diverges;
        }
    }
    LimitKind::Inconclusive
}

/// Limits known in closed form: `Lambda` always, `V` and `ln mu` for constant
/// environments, the `beta = 1 + alpha` power families and, for `ln mu`, any
/// constant mean under a finite total hazard.
pub fn closed_form_limit(env: &Environment, quantity: Quantity) -> Option<LimitKind> {
    let exact = |value: f64| Some(LimitKind::Finite { value, error: 0.0 });
    let theta = env.theta().get();
    let total = env.total_hazard();
    let constant_mean = match env.offspring_mean_spec() {
        OffspringMeanSpec::Constant { a } => Some(*a),
        _ => None,
    };
    match quantity {
        Quantity::Lambda => {
            if total.is_finite() {
                exact(total)
            } else {
                Some(LimitKind::Diverges)
            }
        }
        Quantity::MuThetaV => None,
        Quantity::LogMu => {
            if let Some(a) = constant_mean {
                if total.is_finite() {
                    return exact((a - 1.0) * total);
                }
                return match a.partial_cmp(&1.0)? {
                    std::cmp::Ordering::Equal => exact(0.0),
                    std::cmp::Ordering::Greater => Some(LimitKind::Diverges),
                    std::cmp::Ordering::Less => None,
                };
            }
            use crate::env::scenario::PowerFamilyKind as K;
            let fam = env.power_family()?;
            let summable = fam.beta > 1.0 + fam.alpha;
            match fam.kind {
                K::OnePlus if summable => exact(fam.lambda / (fam.beta - 1.0 - fam.alpha)),
                K::OnePlus => Some(LimitKind::Diverges),
                K::OneMinus if summable => exact(-fam.lambda / (fam.beta - 1.0 - fam.alpha)),
                _ => None,
            }
        }
        Quantity::V => {
            let rate = match env.hazard_spec() {
                HazardSpec::Constant { rate } => Some(*rate),
                HazardSpec::PowerLaw { lambda, alpha } if *alpha == 0.0 => Some(*lambda),
                _ => None,
            };
            if let (Some(r), Some(a)) = (rate, constant_mean) {
                return if a > 1.0 {
                    exact(1.0 / ((1.0 + theta) * (a - 1.0)))
                } else if r > 0.0 {
                    Some(LimitKind::Diverges)
                } else {
                    exact(0.0)
                };
            }
            use crate::env::scenario::PowerFamilyKind as K;
            let fam = env.power_family()?;
            let kappa = match fam.kind {
                K::OnePlus => fam.lambda,
                K::OneMinus => -fam.lambda,
                K::Pure => return None,
            };
            if fam.beta != 1.0 + fam.alpha {
                return None;
            }
            // V_t = theta/(1+theta) lambda int_0^t (1+u)^(alpha - theta kappa) du
            let g = fam.alpha - theta * kappa;
            if g < -1.0 {
                exact(env.theta().weight() * fam.lambda / (-1.0 - g))
            } else {
                Some(LimitKind::Diverges)
            }
        }
    }
}

/// Probes several quantities with a single sweep over the schedule. With
/// [`Route::ClosedForm`], limits known analytically replace the decision
/// rules; the probe evidence is still recorded.
pub fn probe_limits(
    env: &Environment,
    quantities: &[Quantity],
    schedule: &ProbeSchedule,
    cfg: &ProbeConfig,
) -> Vec<LimitEstimate> {
    let times = schedule.times();
    let mut note = None;
    let mut values = Vec::with_capacity(times.len());
    match Sweep::new(env, 0.0, cfg.eval_tol, cfg.route) {
        Ok(mut sweep) => {
            for &t in &times {
                if let Err(e) = sweep.advance_to(t) {
                    note = Some(format!("sweep stopped at t = {}: {e}", sweep.time()));
                    break;
                }
                values.push(sweep.value());
            }
        }
        Err(e) => note = Some(e.to_string()),
    }
    let horizon = values.last().map_or(0.0, |v| v.t);
    quantities
        .iter()
        .map(|&q| {
            let series: Vec<f64> = values.iter().map(|v| q.pick(v)).collect();
            let analytic = match cfg.route {
                Route::ClosedForm => closed_form_limit(env, q),
                Route::Quadrature => None,
            };
            let kind = match analytic {
                Some(kind) => kind,
                None if note.is_some() => LimitKind::Inconclusive,
                None => decide(&series, cfg),
            };
            LimitEstimate {
                quantity: q,
                kind,
                horizon_used: horizon,
                evidence: values.iter().zip(&series).map(|(v, &x)| (v.t, x)).collect(),
                note: note.clone(),
            }
        })
        .collect()
}

pub fn probe_limit(
    env: &Environment,
    quantity: Quantity,
    schedule: &ProbeSchedule,
    cfg: &ProbeConfig,
) -> LimitEstimate {
    probe_limits(env, &[quantity], schedule, cfg)
        .pop()
        .expect("one quantity")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{builtin_scenario, ScenarioParams, Theta};

    fn constant(theta: f64, rate: f64, a: f64) -> Environment {
        Environment::new(
            Theta::new(theta).unwrap(),
            HazardSpec::Constant { rate },
            OffspringMeanSpec::Constant { a },
        )
    }

    #[test]
    fn empty_integrals_at_zero() {
        for info in crate::env::list_scenarios() {
            let env = builtin_scenario(info.name, &ScenarioParams::default()).unwrap();
            let v = eval(&env, 0.0, DEFAULT_TOL).unwrap();
            assert_eq!(
                (v.lambda, v.log_mu, v.a, v.v, v.b, v.mu_theta_v),
                (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
            );
        }
    }

    #[test]
    fn homogeneous_log_mean() {
        let env = constant(1.0, 1.3, 1.5);
        for t in [0.5, 3.0, 17.0] {
            let v = eval(&env, t, DEFAULT_TOL).unwrap();
            assert!(
                (v.log_mu - 0.5 * 1.3 * t).abs() < 1e-12 * (1.0 + t),
                "t={t}"
            );
        }
    }

    #[test]
    fn supercritical_v_limit() {
        // V_t = 1/2 int_0^t exp(-u/2) du -> 1
        let env = constant(1.0, 1.0, 1.5);
        let v = eval(&env, 200.0, DEFAULT_TOL).unwrap();
        assert!((v.v - 1.0).abs() < 1e-9, "{}", v.v);
        let p = probe_limit(
            &env,
            Quantity::V,
            &ProbeSchedule::default(),
            &ProbeConfig::default(),
        );
        match p.kind {
            LimitKind::Finite { value, .. } => assert!((value - 1.0).abs() < 1e-9),
            k => panic!("{k:?}"),
        }
    }

    #[test]
    fn mean_two_time_examples() {
        let env = constant(1.0, 2.0, 1.25);
        assert_eq!(mean_two_time(&env, 3.0, 3.0, DEFAULT_TOL).unwrap(), 0.0);
        let got = mean_two_time(&env, 1.0, 4.0, DEFAULT_TOL).unwrap();
        assert!((got - 0.25 * 2.0 * 3.0).abs() < 1e-13);
        let ex = builtin_scenario("ex34", &ScenarioParams::default()).unwrap();
        let whole = eval(&ex, 9.0, DEFAULT_TOL).unwrap().log_mu;
        assert!((mean_two_time(&ex, 0.0, 9.0, DEFAULT_TOL).unwrap() - whole).abs() < 1e-12);
        assert!(matches!(
            mean_two_time(&env, 2.0, 1.0, DEFAULT_TOL),
            Err(NumericError::Domain(_))
        ));
    }

    #[test]
    fn closed_forms_of_the_families() {
        // a_t = 1 + (1+t)^-(1+alpha): mu_t = (1+t)^lambda
        let p = ScenarioParams {
            alpha: Some(0.0),
            lambda: Some(2.0),
            beta: Some(1.0),
            ..Default::default()
        };
        let env = builtin_scenario("ex31b", &p).unwrap();
        let ClosedForm::Full(v) = eval_closed_form(&env, 7.0, DEFAULT_TOL).unwrap() else {
            panic!()
        };
        assert!((v.log_mu - 2.0 * 8f64.ln()).abs() < 1e-13);
        // a_t = 1 - (1+t)^-(1+alpha): mu_t = (1+t)^-lambda
        let p = ScenarioParams {
            alpha: Some(0.5),
            lambda: Some(1.5),
            ..Default::default()
        };
        let env = builtin_scenario("ex32b", &p).unwrap();
        let ClosedForm::Full(v) = eval_closed_form(&env, 7.0, DEFAULT_TOL).unwrap() else {
            panic!()
        };
        assert!((v.log_mu + 1.5 * 8f64.ln()).abs() < 1e-13);
        let ex34 = builtin_scenario("ex34", &ScenarioParams::default()).unwrap();
        match eval_closed_form(&ex34, 3.0, DEFAULT_TOL).unwrap() {
            ClosedForm::LambdaOnly { lambda, .. } => assert!((lambda - 2.0).abs() < 1e-14),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn decide_rules_on_synthetic_sequences() {
        let cfg = ProbeConfig::default();
        let converging: Vec<f64> = (0..30).map(|k| 3.0 - 2f64.powi(-k)).collect();
        assert!(matches!(
            decide(&converging, &cfg),
            LimitKind::Finite { .. }
        ));
        let doubling: Vec<f64> = (0..30).map(|k| 2f64.powi(k)).collect();
        assert_eq!(decide(&doubling, &cfg), LimitKind::Diverges);
        let logarithmic: Vec<f64> = (1..30).map(|k| k as f64 * 0.7).collect();
        assert_eq!(decide(&logarithmic, &cfg), LimitKind::Diverges);
        let alternating: Vec<f64> = (0..30)
            .map(|k| if k % 2 == 0 { 0.5 } else { 1e30 })
            .collect();
        match decide(&alternating, &cfg) {
            LimitKind::NoLimit { liminf, limsup } => assert_eq!((liminf, limsup), (0.5, 1e30)),
            k => panic!("{k:?}"),
        }
        let slow: Vec<f64> = (0..30).map(|k| 1.0 - 2f64.powf(-0.1 * k as f64)).collect();
        assert_eq!(decide(&slow, &cfg), LimitKind::Inconclusive);
        assert_eq!(decide(&[1.0], &cfg), LimitKind::Inconclusive);
    }
}
