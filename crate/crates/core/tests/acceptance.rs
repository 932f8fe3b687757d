//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::time::Instant;

use rayon::prelude::*;
use theta_branch::classify::{classify_numeric, classify_powerlaw, Regime};
use theta_branch::env::scenario::{PowerFamily, PowerFamilyKind};
use theta_branch::exact::{
    conditional_mean, extinction, limit_law, pmf_z, survival, LimitLaw, LimitOptions, OffspringLaw,
    PgfAtTime, PmfOptions, Transition,
};
use theta_branch::mc::{run_replicas, verify, wilson_interval, McConfig, McQuantity};
use theta_branch::sim::BranchSampler;
use theta_branch::transforms::{
    eval, eval_grid, LimitKind, ProbeConfig, ProbeSchedule, Route, DEFAULT_TOL,
};
use theta_branch::{builtin_scenario, list_scenarios, Environment, ScenarioParams};

const TOL: f64 = DEFAULT_TOL;

fn scenario(name: &str, p: ScenarioParams) -> Environment {
    builtin_scenario(name, &p).expect("scenario builds")
}

/// Smallest root of `h(s) = s` on `[0, 1]` by bisection on `h(s) - s`.
fn fixed_point_oracle(theta: f64, a: f64) -> f64 {
    let law = OffspringLaw::new(theta, a);
    let g = |s: f64| law.pgf(s) - s;
    // g(0) = p0 >= 0; the smallest root lies below the minimum of g
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut argmin = 0.0;
    let mut best = f64::INFINITY;
    for i in 0..=10_000 {
        let s = i as f64 / 10_000.0;
        if g(s) < best {
            best = g(s);
            argmin = s;
        }
    }
    if best > 0.0 {
        return 1.0;
    }
    hi = hi.min(argmin);
    if g(lo) <= 0.0 {
        return lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let env = scenario("bd_const", ScenarioParams::default());
    let oracle = fixed_point_oracle(1.0, 1.5);
    let report = extinction(&env, &LimitOptions::default());
    let q = report.q.unwrap_or(f64::NAN);
    let q_ok = (q - oracle).abs() < 1e-8 && (oracle - 1.0 / 3.0).abs() < 1e-8;
    // replicas above 1000 individuals count as alive; the report carries the bias bound
    let cfg = McConfig {
        population_cap: 1_000,
        ..McConfig::new(100_000, 20_241)
    };
    let mc = verify(&env, &[30.0], &[McQuantity::Survival], &cfg, 4.0).expect("verify runs");
    let row = &mc.rows[0];
    let elapsed = start.elapsed().as_secs_f64();
    outcome(
        q_ok && mc.all_pass && elapsed < 60.0,
        format!(
            "q = {q:.12} (fixed point {oracle:.12}); MC survival(30) = {:.5} vs exact {:.5}, z = {:.2}, capped {} (bias bound {:.1e}); {elapsed:.1}s",
            row.mc.point, row.exact, row.z_score, row.mc.n_capped, row.mc.cap_bias_bound
        ),
    )
}

fn criterion_2() -> Outcome {
    let env = scenario("binary_split", ScenarioParams::default());
    let report = extinction(&env, &LimitOptions::default());
    let v = report.v_limit.finite_value().unwrap_or(f64::NAN);
    let literal = (v + 0.5_f64).powf(-1.0);
    outcome(
        report.q == Some(0.0) && report.q_from_complement,
        format!(
            "q = {:?}; V_theta = {v}; the uncorrected expression would give q = {literal}",
            report.q
        ),
    )
}

fn criterion_3() -> Outcome {
    let env = scenario("sleeping", ScenarioParams::default());
    let lambda_total = env.total_hazard();
    let law = limit_law(
        &env,
        Regime::AsymptoticallyDegenerate,
        None,
        &LimitOptions::default(),
    );
    let e2 = (-2.0f64).exp();
    let law_err = match &law {
        Ok(l @ LimitLaw::ZInfinityPgf { .. }) => (0..=20)
            .map(|i| i as f64 / 20.0)
            .map(|s| (l.eval(s) - (1.0 - e2 + e2 * s)).abs())
            .fold(0.0, f64::max),
        _ => f64::INFINITY,
    };
    let regime = classify_numeric(&env, &ProbeSchedule::default(), &ProbeConfig::default()).regime;
    let n = 100_000;
    let trajectories = run_replicas(&env, &[50.0], &McConfig::new(n, 7)).expect("replicas run");
    let ones = trajectories
        .iter()
        .filter(|t| t.value(0) == Some(1))
        .count();
    let (lo, hi) = wilson_interval(ones, n, 1.96);
    let p = ones as f64 / n as f64;
    outcome(
        (lambda_total - 2.0).abs() < 1e-15 && law_err < 1e-9 && lo <= e2 && e2 <= hi && regime == Some(Regime::AsymptoticallyDegenerate),
        format!(
            "Lambda = {lambda_total}; max |E s^Z_inf - (1 - e^-2 + e^-2 s)| = {law_err:.1e}; MC P(Z_50 = 1) = {p:.5}, 95% CI [{lo:.5}, {hi:.5}] vs e^-2 = {e2:.5}; regime {regime:?}"
        ),
    )
}

fn criterion_4() -> Outcome {
    let env = scenario("critical_const", ScenarioParams::default());
    let s50 = survival(&env, 50.0, TOL).expect("survival");
    let yaglom = (s50 * 25.0 - 1.0).abs();
    let n = 100_000;
    let trajectories = run_replicas(&env, &[50.0], &McConfig::new(n, 11)).expect("replicas run");
    let tv = eval(&env, 50.0, TOL).expect("transforms");
    let m = PgfAtTime::new(env.theta().get(), tv)
        .log_conditional_mean()
        .exp();
    let survivors: Vec<f64> = trajectories
        .iter()
        .filter_map(|t| t.value(0))
        .filter(|&z| z > 0)
        .map(|z| z as f64)
        .collect();
    let mut ok = yaglom < 0.05;
    let mut parts = vec![format!("|survival(50) * 25 - 1| = {yaglom:.4}")];
    for w in [0.5, 1.0, 2.0] {
        let vals: Vec<f64> = survivors.iter().map(|z| (-w * z / m).exp()).collect();
        let k = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / k;
        let se = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt();
        let target = 1.0 / (1.0 + w);
        let allowed = 1.96 * se + 0.02;
        ok &= (mean - target).abs() <= allowed;
        parts.push(format!(
            "w={w}: {mean:.4} vs {target:.4} (allowed {allowed:.4})"
        ));
    }
    parts.push(format!("{} survivors, m_50 = {m:.3}", survivors.len()));
    outcome(ok, parts.join("; "))
}

fn criterion_5() -> Outcome {
    let p = ScenarioParams {
        alpha: Some(0.0),
        beta: Some(1.0),
        lambda: Some(1.0),
        ..Default::default()
    };
    let env = scenario("ex33", p);
    let report = classify_numeric(&env, &ProbeSchedule::default(), &ProbeConfig::default());
    let m200 = conditional_mean(&env, 200.0, TOL).expect("m_200");
    let m400 = conditional_mean(&env, 400.0, TOL).expect("m_400");
    let schedule = ProbeSchedule::default();
    let values = eval_grid(&env, &schedule.times(), TOL, Route::Quadrature).expect("sweep");
    let m_limit = PgfAtTime::new(1.0, *values.last().unwrap())
        .log_conditional_mean()
        .exp();
    let m_theta = report.m_theta.unwrap_or(f64::NAN);
    let formula = (m_theta + 0.5).powf(1.0);
    outcome(
        report.regime == Some(Regime::StrictlySubcritical) && (m200 - m400).abs() < 0.01 && (m_limit - formula).abs() < 1e-3,
        format!(
            "regime {}; M_theta = {m_theta:.9}; m_200 = {m200:.6}, m_400 = {m400:.6}; m_t at t = 2^40: {m_limit:.9} vs (M + theta/(1+theta))^(1/theta) = {formula:.9}",
            report.label()
        ),
    )
}

/// Power-family tuples at least 0.05 away from every case boundary.
fn agreement_grid() -> Vec<PowerFamily> {
    let mut out = Vec::new();
    for kind in [
        PowerFamilyKind::OnePlus,
        PowerFamilyKind::OneMinus,
        PowerFamilyKind::Pure,
    ] {
        for alpha in [-1.0, -0.5, 0.0, 0.5, 1.0, 2.0] {
            let edge: f64 = 1.0 + alpha;
            let mut betas = vec![
                0.0,
                0.5 * edge,
                edge,
                edge + 0.5,
                edge + 1.5,
                0.25 * edge + 0.3,
            ];
            betas.retain(|b| *b >= 0.0);
            betas.sort_by(f64::total_cmp);
            betas.dedup();
            for &beta in &betas {
                for lambda in [0.5, 2.0] {
                    for theta in [0.25, 0.5, 1.0] {
                        let f = PowerFamily {
                            kind,
                            lambda,
                            alpha,
                            beta,
                            theta,
                        };
                        if f.to_environment().is_err() {
                            continue;
                        }
                        let near_edge = beta != edge && (beta - edge).abs() < 0.05;
                        let near_zero = beta != 0.0 && beta < 0.05;
                        let near_theta = kind == PowerFamilyKind::OnePlus
                            && beta == edge
                            && (theta * lambda - edge).abs() < 0.05;
                        if !(near_edge || near_zero || near_theta) {
                            out.push(f);
                        }
                    }
                }
            }
        }
    }
    out
}

fn criterion_6() -> Outcome {
    let grid = agreement_grid();
    let results: Vec<(PowerFamily, Regime, Option<Regime>)> = grid
        .par_iter()
        .map(|f| {
            let symbolic = classify_powerlaw(f)
                .expect("in range")
                .regime
                .expect("symbolic decides");
            let env = f.to_environment().expect("valid");
            let numeric =
                classify_numeric(&env, &ProbeSchedule::default(), &ProbeConfig::default()).regime;
            (*f, symbolic, numeric)
        })
        .collect();
    let contradictions: Vec<_> = results
        .iter()
        .filter(|(_, s, n)| n.is_some_and(|n| n != *s))
        .collect();
    let inconclusive = results.iter().filter(|(_, _, n)| n.is_none()).count();
    let mut detail = format!(
        "{} tuples, {} agree, {} inconclusive, {} contradictions",
        results.len(),
        results.len() - inconclusive - contradictions.len(),
        inconclusive,
        contradictions.len()
    );
    for (f, s, n) in contradictions.iter().take(5) {
        detail.push_str(&format!("; {f:?}: symbolic {s}, numeric {n:?}"));
    }
    outcome(results.len() >= 200 && contradictions.is_empty(), detail)
}

fn criterion_7() -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = theta_branch::cli::run(
        [
            "theta-branch",
            "trajectory",
            "ex34",
            "--t-grid",
            "0:1024:4096",
        ],
        &mut out,
        &mut err,
    );
    let text = String::from_utf8(out).expect("utf8");
    let mus: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let max = mus.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = mus.iter().copied().fold(f64::INFINITY, f64::min);
    let env = scenario("ex34", ScenarioParams::default());
    let report = classify_numeric(&env, &ProbeSchedule::default(), &ProbeConfig::default());
    let no_limit = matches!(
        report.mu_theta_v_limit.as_ref().map(|l| l.kind),
        Some(LimitKind::NoLimit { .. })
    );
    outcome(
        code == 0 && mus.len() == 4097 && max > 1e3 && min < 1e-3 && report.regime == Some(Regime::LooselySubcritical) && no_limit,
        format!(
            "{} rows, max mu = {max:.3e}, min mu = {min:.3e}; regime {}; mu^theta V partial limits {:?}",
            mus.len(),
            report.label(),
            report.partial_limits
        ),
    )
}

fn criterion_8() -> Outcome {
    let grid = [0.0, 0.5, 1.0, 2.0, 3.5, 5.0, 8.0, 12.0];
    let mut worst_b = 0.0f64;
    let mut worst_mean = 0.0f64;
    let mut worst_semigroup = 0.0f64;
    let mut worst_pmf = 0.0f64;
    let mut ok = true;
    for info in list_scenarios() {
        let env = scenario(info.name, ScenarioParams::default());
        let theta = env.theta().get();
        let values = eval_grid(&env, &grid, TOL, Route::Quadrature).expect("sweep");
        for v in &values {
            // B = V + (1+theta)^-1 (1 - mu^-theta), compared relative to the size of the terms
            let rhs = v.v + (-(-theta * v.log_mu).exp_m1()) / (1.0 + theta);
            let scale = 1.0f64.max(v.b).max(v.v).max((-theta * v.log_mu).exp());
            let allowed = v.abs_error.b
                + v.abs_error.v
                + 1e-12 * scale
                + v.abs_error.log_mu * theta * (-theta * v.log_mu).exp();
            let gap = (v.b - rhs).abs();
            worst_b = worst_b.max(gap / scale);
            ok &= gap <= allowed;
            // mu = m P(Z > 0)
            let pgf = PgfAtTime::new(theta, *v);
            let lhs = v.log_mu;
            let rhs = pgf.log_conditional_mean() + pgf.log_survival();
            let gap = (lhs - rhs).abs();
            worst_mean = worst_mean.max(gap);
            ok &= gap < 1e-8;
        }
        for &(tau, t, s) in &[
            (0.5, 2.0, 0.3),
            (1.0, 5.0, 0.7),
            (2.0, 3.5, 0.0),
            (0.2, 8.0, 0.95),
        ] {
            let full = Transition::between(&env, 0.0, t, TOL).unwrap().pgf(s);
            let inner = Transition::between(&env, tau, t, TOL).unwrap().pgf(s);
            let outer = Transition::between(&env, 0.0, tau, TOL).unwrap().pgf(inner);
            let gap = (full - outer).abs();
            worst_semigroup = worst_semigroup.max(gap);
            ok &= gap < 1e-8;
        }
        let pmf = pmf_z(&env, 2.0, 200, TOL, &PmfOptions::default()).expect("pmf");
        let gap = (pmf.probabilities.iter().sum::<f64>() - 1.0).abs();
        worst_pmf = worst_pmf.max(gap);
        ok &= gap < 1e-6;
    }
    // offspring sampler
    let mut worst_tv = 0.0f64;
    for theta in [0.25, 0.5, 1.0] {
        let law = OffspringLaw::new(theta, 1.0);
        let draws = 1_000_000usize;
        let max_n = 20_000usize;
        let counts = (0..16u64)
            .into_par_iter()
            .map(|chunk| {
                let mut rng = theta_branch::sim::replica_rng(99, chunk);
                let mut c = vec![0usize; max_n + 2];
                for _ in 0..draws / 16 {
                    let n = if rand::Rng::gen::<f64>(&mut rng) < law.branching_probability() {
                        BranchSampler::new(theta).sample(&mut rng) as usize
                    } else {
                        0
                    };
                    c[n.min(max_n + 1)] += 1;
                }
                c
            })
            .reduce(
                || vec![0usize; max_n + 2],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        let mut tv = 0.0;
        let mut mass = 0.0;
        for n in 0..=max_n {
            let p = law.pmf(n as u64);
            mass += p;
            tv += (counts[n] as f64 / draws as f64 - p).abs();
        }
        tv += (counts[max_n + 1] as f64 / draws as f64 - (1.0 - mass)).abs();
        tv *= 0.5;
        worst_tv = worst_tv.max(tv);
        ok &= tv < 0.005;
    }
    outcome(
        ok,
        format!(
            "B identity max rel gap {worst_b:.1e}; |ln mu - ln(m P)| max {worst_mean:.1e}; semigroup max {worst_semigroup:.1e}; pmf normalization max {worst_pmf:.1e}; sampler TV max {worst_tv:.2e}"
        ),
    )
}

fn criterion_9() -> Outcome {
    let env = scenario("critical_const", ScenarioParams::default());
    let theta = env.theta().get();
    let values = eval_grid(&env, &[10.0, 20.0, 40.0, 80.0], TOL, Route::Quadrature).expect("sweep");
    let products: Vec<f64> = values
        .iter()
        .map(|v| PgfAtTime::new(theta, *v).survival() * v.v.powf(1.0 / theta))
        .collect();
    let gaps: Vec<f64> = products.iter().map(|p| (p - 1.0).abs()).collect();
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
    outcome(
        monotone && gaps[3] < gaps[0],
        format!("survival * V^(1/theta) at t = 10, 20, 40, 80: {products:?}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("supercritical extinction and survival", criterion_1),
        ("binary splitting has q = 0", criterion_2),
        ("asymptotically degenerate limit law", criterion_3),
        ("critical Yaglom limit", criterion_4),
        ("strictly subcritical limit", criterion_5),
        ("symbolic and numeric classifiers agree", criterion_6),
        ("alternating environment trajectory and regime", criterion_7),
        ("property suites", criterion_8),
        ("critical convergence trend", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {}: {verdict} {name} ({:.1}s): {}",
            i + 1,
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
