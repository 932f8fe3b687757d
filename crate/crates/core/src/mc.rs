//! Monte Carlo estimators over independent replicas and their comparison
//! with the exact formulas.
//!
//! Replicas run on a rayon pool and are collected in replica order, so every
//! estimate is a fixed-order reduction and independent of the worker count.

use rayon::prelude::*;
use serde::Serialize;

use crate::env::Environment;
use crate::error::SimError;
use crate::exact::{log_add_exp, PgfAtTime};
use crate::sim::{simulate, SimConfig, Trajectory};
use crate::transforms::{eval_grid, Route, TransformValue};

/// Environment variable capping the number of worker threads.
pub const THREADS_VAR: &str = "THETA_BRANCH_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum McQuantity {
    Survival,
    Mean,
    CondMean,
    /// `E(exp(-w Z_t / m_t) | Z_t > 0)`.
    Laplace {
        w: f64,
    },
    /// `E(s^Z_t | Z_t > 0)`.
    CondPgf {
        s: f64,
    },
}

impl McQuantity {
    pub fn label(&self) -> String {
        match self {
            McQuantity::Survival => "survival".into(),
            McQuantity::Mean => "mean".into(),
            McQuantity::CondMean => "cond_mean".into(),
            McQuantity::Laplace { w } => format!("laplace(w={w})"),
            McQuantity::CondPgf { s } => format!("cond_pgf(s={s})"),
        }
    }

    fn conditional(&self) -> bool {
        !matches!(self, McQuantity::Survival | McQuantity::Mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    pub quantity: String,
    pub t: f64,
    pub point: f64,
    pub std_error: f64,
    pub n_replicas: usize,
    pub n_capped: usize,
    /// Wilson 95% interval, for proportions.
    pub ci: Option<(f64, f64)>,
    /// For survival: upper bound on the bias from counting capped replicas
    /// as alive, the mean over replicas of `P(all Z_cap lines die by t)`.
    pub cap_bias_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub replicas: usize,
    pub seed: u64,
    pub population_cap: u64,
    /// Worker threads; `None` reads [`THREADS_VAR`] and falls back to rayon's default.
    pub threads: Option<usize>,
    /// Quadrature tolerance for the exact values the estimators need.
    pub tol: f64,
}

impl McConfig {
    pub fn new(replicas: usize, seed: u64) -> Self {
        Self {
            replicas,
            seed,
            population_cap: SimConfig::DEFAULT_CAP,
            threads: None,
            tol: 1e-10,
        }
    }
}

fn thread_count(cfg: &McConfig) -> Option<usize> {
    cfg.threads
        .or_else(|| {
            std::env::var(THREADS_VAR)
                .ok()
                .and_then(|v| v.trim().parse().ok())
        })
        .filter(|&n| n > 0)
}

/// Simulates `cfg.replicas` replicas with checkpoints at `t_grid`.
pub fn run_replicas(
    env: &Environment,
    t_grid: &[f64],
    cfg: &McConfig,
) -> Result<Vec<Trajectory>, SimError> {
    let mut checkpoints = t_grid.to_vec();
    if checkpoints.windows(2).any(|w| w[0] > w[1]) {
        return Err(SimError::Config("time grid must be sorted".into()));
    }
    checkpoints.dedup();
    let t_end = checkpoints.last().copied().unwrap_or(0.0);
    let base = SimConfig {
        seed: cfg.seed,
        t_end,
        checkpoints,
        population_cap: cfg.population_cap,
        replica_index: 0,
    };
    base.check()?;
    let work = || {
        (0..cfg.replicas as u64)
            .into_par_iter()
            .map(|r| {
                simulate(
                    env,
                    &SimConfig {
                        replica_index: r,
                        ..base.clone()
                    },
                )
            })
            .collect::<Result<Vec<_>, _>>()
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(cfg) {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| SimError::Config(format!("thread pool: {e}")))?;
    pool.install(work)
}

/// Wilson score interval at `z`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Estimates from already simulated replicas whose checkpoints are `t_grid`.
pub fn estimate_from(
    env: &Environment,
    trajectories: &[Trajectory],
    t_grid: &[f64],
    quantities: &[McQuantity],
    tol: f64,
) -> Result<Vec<McEstimate>, SimError> {
    let mut grid = t_grid.to_vec();
    grid.dedup();
    let theta = env.theta().get();
    let exact_at = eval_grid(env, &grid, tol, Route::Quadrature)?;
    let cap_transforms = transforms_at_caps(env, trajectories, tol)?;
    let mut out = Vec::new();
    for (i, (&t, tv)) in grid.iter().zip(&exact_at).enumerate() {
        let pgf = PgfAtTime::new(theta, *tv);
        let m_t = pgf.log_conditional_mean().exp();
        let uncapped: Vec<u64> = trajectories.iter().filter_map(|tr| tr.value(i)).collect();
        let n_capped = trajectories.len() - uncapped.len();
        let survivors: Vec<u64> = uncapped.iter().copied().filter(|&z| z > 0).collect();
        for q in quantities {
            let label = q.label();
            if q.conditional() && survivors.is_empty() {
                return Err(SimError::DegenerateSample { quantity: label, t });
            }
            let est = match *q {
                McQuantity::Survival => {
                    let n = trajectories.len();
                    let alive = survivors.len() + n_capped;
                    let p = alive as f64 / n as f64;
                    // a capped replica is dead at t only if every line present at the cap dies by t
                    let bias: f64 = trajectories
                        .iter()
                        .zip(&cap_transforms)
                        .filter(|(tr, _)| tr.value(i).is_none())
                        .map(|(tr, at_cap)| {
                            let zc = tr.capped_at.map_or(0, |c| c.1);
                            extinction_from(theta, at_cap.as_ref(), tv).powf(zc as f64)
                        })
                        .sum();
                    McEstimate {
                        quantity: label,
                        t,
                        point: p,
                        std_error: (p * (1.0 - p) / n as f64).sqrt(),
                        n_replicas: n,
                        n_capped,
                        ci: Some(wilson_interval(alive, n, 1.96)),
                        cap_bias_bound: bias / n as f64,
                    }
                }
                McQuantity::Mean | McQuantity::CondMean => {
                    let pool = if matches!(q, McQuantity::Mean) {
                        &uncapped
                    } else {
                        &survivors
                    };
                    let values: Vec<f64> = pool.iter().map(|&z| z as f64).collect();
                    let (point, se) = mean_and_se(&values);
                    McEstimate {
                        quantity: label,
                        t,
                        point,
                        std_error: se,
                        n_replicas: values.len(),
                        n_capped,
                        ci: None,
                        cap_bias_bound: 0.0,
                    }
                }
                McQuantity::Laplace { w } => {
                    let values: Vec<f64> = survivors
                        .iter()
                        .map(|&z| (-w * z as f64 / m_t).exp())
                        .collect();
                    let (point, se) = mean_and_se(&values);
                    McEstimate {
                        quantity: label,
                        t,
                        point,
                        std_error: se,
                        n_replicas: values.len(),
                        n_capped,
                        ci: None,
                        cap_bias_bound: 0.0,
                    }
                }
                McQuantity::CondPgf { s } => {
                    let values: Vec<f64> = survivors.iter().map(|&z| s.powf(z as f64)).collect();
                    let (point, se) = mean_and_se(&values);
                    McEstimate {
                        quantity: label,
                        t,
                        point,
                        std_error: se,
                        n_replicas: values.len(),
                        n_capped,
                        ci: None,
                        cap_bias_bound: 0.0,
                    }
                }
            };
            out.push(est);
        }
    }
    Ok(out)
}

/// Transforms at each replica's cap time, from one sweep over the sorted times.
fn transforms_at_caps(
    env: &Environment,
    trajectories: &[Trajectory],
    tol: f64,
) -> Result<Vec<Option<TransformValue>>, SimError> {
    let mut times: Vec<f64> = trajectories
        .iter()
        .filter_map(|tr| tr.capped_at.map(|c| c.0))
        .collect();
    if times.is_empty() {
        return Ok(vec![None; trajectories.len()]);
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    let values = eval_grid(env, &times, tol, Route::Quadrature)?;
    Ok(trajectories
        .iter()
        .map(|tr| {
            tr.capped_at.map(|(tc, _)| {
                let k = times.partition_point(|&x| x < tc);
                values[k]
            })
        })
        .collect())
}

/// `F_t(tau, 0)`, the probability that one individual alive at `tau` has no
/// descendants at `t`, from the transforms at `tau` and at `t`:
/// `1 - mu_tau^-1 (mu_t^-theta + B_t - B_tau)^(-1/theta)`. Returns 1, the
/// trivial bound, when the inputs are missing or not representable.
fn extinction_from(theta: f64, at_tau: Option<&TransformValue>, at_t: &TransformValue) -> f64 {
    let Some(at_tau) = at_tau else { return 1.0 };
    if at_tau.t > at_t.t {
        return 1.0;
    }
    let diff = if at_t.log_b == f64::NEG_INFINITY {
        0.0
    } else {
        at_t.log_b.exp() * -(at_tau.log_b - at_t.log_b).exp_m1()
    };
    let ln_inner = log_add_exp(-theta * at_t.log_mu, diff.max(0.0).ln());
    let f = -(-at_tau.log_mu - ln_inner / theta).exp_m1();
    if f.is_finite() {
        f.clamp(0.0, 1.0)
    } else {
        1.0
    }
}

/// Simulates and estimates every quantity at every grid time.
pub fn estimate(
    env: &Environment,
    t_grid: &[f64],
    quantities: &[McQuantity],
    cfg: &McConfig,
) -> Result<Vec<McEstimate>, SimError> {
    if cfg.replicas < 100 {
        return Err(SimError::Config(format!(
            "need at least 100 replicas, got {}",
            cfg.replicas
        )));
    }
    let trajectories = run_replicas(env, t_grid, cfg)?;
    estimate_from(env, &trajectories, t_grid, quantities, cfg.tol)
}

/// Exact value of `q` at the time of `tv`.
fn exact_value(pgf: &PgfAtTime, q: &McQuantity) -> f64 {
    match *q {
        McQuantity::Survival => pgf.survival(),
        McQuantity::Mean => pgf.tv.log_mu.exp(),
        McQuantity::CondMean => pgf.log_conditional_mean().exp(),
        McQuantity::Laplace { w } => pgf.conditional_laplace(w),
        McQuantity::CondPgf { s } => pgf.conditional_pgf(s),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationRow {
    pub quantity: String,
    pub t: f64,
    pub mc: McEstimate,
    pub exact: f64,
    pub z_score: f64,
    pub pass: bool,
}

impl VerificationRow {
    pub const CSV_HEADER: &'static str = "quantity,t,mc,se,exact,z,pass";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.quantity,
            self.t,
            self.mc.point,
            self.mc.std_error,
            self.exact,
            self.z_score,
            self.pass
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub rows: Vec<VerificationRow>,
    pub z_threshold: f64,
    /// `rows * P(|N(0,1)| >= z_threshold)`: failures expected by chance alone.
    pub expected_false_failures: f64,
    pub all_pass: bool,
}

impl VerificationReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(VerificationRow::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }
}

/// z-score of an estimate against `exact`. Proportions use the standard
/// error under the null, `sqrt(p0 (1 - p0) / n)`; survival estimates give
/// the capped-replica bias bound back before scoring.
pub fn z_score(est: &McEstimate, exact: f64, is_proportion: bool) -> f64 {
    let mut diff = est.point - exact;
    if est.cap_bias_bound > 0.0 {
        diff = diff.signum() * (diff.abs() - est.cap_bias_bound).max(0.0);
    }
    let se = if is_proportion {
        (exact * (1.0 - exact) / est.n_replicas as f64)
            .max(0.0)
            .sqrt()
    } else {
        est.std_error
    };
    if se > 0.0 {
        diff / se
    } else if diff.abs() <= 1e-9 * exact.abs().max(1.0) {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Builds verification rows from estimates and the matching exact values.
pub fn compare(
    estimates: Vec<McEstimate>,
    exact: &[f64],
    proportions: &[bool],
    z_threshold: f64,
) -> VerificationReport {
    let rows: Vec<VerificationRow> = estimates
        .into_iter()
        .zip(exact.iter().zip(proportions))
        .map(|(mc, (&exact, &prop))| {
            let z = z_score(&mc, exact, prop);
            VerificationRow {
                quantity: mc.quantity.clone(),
                t: mc.t,
                mc,
                exact,
                z_score: z,
                pass: z.abs() < z_threshold,
            }
        })
        .collect();
    let tail = libm::erfc(z_threshold / std::f64::consts::SQRT_2);
    VerificationReport {
        expected_false_failures: rows.len() as f64 * tail,
        all_pass: rows.iter().all(|r| r.pass),
        rows,
        z_threshold,
    }
}

/// Monte Carlo estimates paired with exact values and z-tested.
pub fn verify(
    env: &Environment,
    t_grid: &[f64],
    quantities: &[McQuantity],
    cfg: &McConfig,
    z_threshold: f64,
) -> Result<VerificationReport, SimError> {
    let estimates = estimate(env, t_grid, quantities, cfg)?;
    let mut grid = t_grid.to_vec();
    grid.dedup();
    let theta = env.theta().get();
    let exact_at = eval_grid(env, &grid, cfg.tol, Route::Quadrature)?;
    let mut exact = Vec::with_capacity(estimates.len());
    let mut props = Vec::with_capacity(estimates.len());
    for tv in &exact_at {
        let pgf = PgfAtTime::new(theta, *tv);
        for q in quantities {
            exact.push(exact_value(&pgf, q));
            props.push(matches!(q, McQuantity::Survival));
        }
    }
    Ok(compare(estimates, &exact, &props, z_threshold))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(point: f64, se: f64, n: usize) -> McEstimate {
        McEstimate {
            quantity: "x".into(),
            t: 1.0,
            point,
            std_error: se,
            n_replicas: n,
            n_capped: 0,
            ci: None,
            cap_bias_bound: 0.0,
        }
    }

    #[test]
    fn wilson_contains_point() {
        let (lo, hi) = wilson_interval(30, 100, 1.96);
        assert!(lo < 0.3 && 0.3 < hi);
        assert_eq!(wilson_interval(0, 100, 1.96).0, 0.0);
    }

    #[test]
    fn z_scores() {
        assert_eq!(z_score(&est(1.0, 0.0, 100), 1.0, true), 0.0);
        assert!(z_score(&est(0.9, 0.0, 100), 1.0, true).is_infinite());
        let z = z_score(&est(0.55, 0.05, 100), 0.5, true);
        assert!((z - 1.0).abs() < 1e-12);
        let mut e = est(0.55, 0.05, 100);
        e.cap_bias_bound = 0.06;
        assert_eq!(z_score(&e, 0.5, true), 0.0);
    }

    #[test]
    fn expected_false_failures_uses_normal_tail() {
        let r = compare(
            vec![est(0.5, 0.01, 100); 1000],
            &[0.5; 1000],
            &[false; 1000],
            4.0,
        );
        assert!((r.expected_false_failures - 1000.0 * 6.334e-5).abs() < 1e-3);
        assert!(r.all_pass);
    }
}
