//! Command-line driver. [`run`] parses arguments, writes results to `out`
//! and diagnostics to `err`, and returns the process exit code.

use std::io::Write;
use std::path::Path;

use clap::{Args, Parser, Subcommand};

use crate::classify::{classify, classify_powerlaw, RegimeReport};
use crate::env::{builtin_scenario, list_scenarios, Environment, ScenarioParams};
use crate::error::{EnvError, NumericError, SimError};
use crate::exact::{ExactRow, PgfAtTime};
use crate::mc::{verify, McConfig, McQuantity};
use crate::sim::{simulate, SimConfig};
use crate::transforms::{
    eval_grid, ProbeConfig, ProbeSchedule, Route, TransformValue, DEFAULT_TOL,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "theta-branch",
    version,
    about = "Theta-positive branching processes in a varying environment"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the built-in scenarios.
    Scenarios,
    /// Check the environment constraints.
    Validate(ScenarioArgs),
    /// Classify the asymptotic regime.
    Classify {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Exact case analysis (power-law families only).
        #[arg(long)]
        symbolic: bool,
        /// Number of doublings in the probe schedule.
        #[arg(long, default_value_t = 40)]
        horizon: usize,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Transforms, or exact generating-function values, on a time grid.
    Eval {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// `a:b:n` for n+1 equally spaced points.
        #[arg(long)]
        t_grid: String,
        /// Evaluate E s^Z_t.
        #[arg(long, conflicts_with = "w")]
        s: Option<f64>,
        /// Evaluate E(exp(-w Z_t / m_t) | Z_t > 0).
        #[arg(long)]
        w: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Simulate replicas and stream their checkpoint values.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        t_end: f64,
        #[arg(long, default_value_t = 1)]
        replicas: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated times or `a:b:n`; defaults to t_end.
        #[arg(long)]
        checkpoints: Option<String>,
        #[arg(long, default_value_t = SimConfig::DEFAULT_CAP)]
        cap: u64,
    },
    /// Compare Monte Carlo estimates with the exact formulas.
    Verify {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        replicas: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        t_grid: String,
        /// Comma-separated: survival, mean, cond_mean, laplace:W, cond_pgf:S.
        #[arg(long, default_value = "survival,mean")]
        quantities: String,
        #[arg(long, default_value_t = 4.0)]
        z: f64,
        #[arg(long, default_value_t = SimConfig::DEFAULT_CAP)]
        cap: u64,
        #[arg(long)]
        json: bool,
    },
    /// `t,mu,log_mu` on a time grid.
    Trajectory {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        t_grid: String,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Built-in scenario name or path to a JSON config.
    pub scenario: String,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub a: Option<f64>,
}

impl ScenarioArgs {
    fn params(&self) -> ScenarioParams {
        ScenarioParams {
            theta: self.theta,
            lambda: self.lambda,
            alpha: self.alpha,
            beta: self.beta,
            a: self.a,
        }
    }

    /// Loads the scenario without validating a JSON config, so `validate`
    /// can report its violations.
    fn load(&self) -> Result<Environment, CliError> {
        let params = self.params();
        let is_file = self.scenario.ends_with(".json") || Path::new(&self.scenario).is_file();
        if !is_file {
            return Ok(builtin_scenario(&self.scenario, &params)?);
        }
        if params != ScenarioParams::default() {
            return Err(CliError::Config(
                "parameter overrides apply to built-in scenarios only".into(),
            ));
        }
        let text = std::fs::read_to_string(&self.scenario)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", self.scenario)))?;
        Ok(Environment::from_json(&text)?)
    }

    fn load_valid(&self) -> Result<Environment, CliError> {
        let env = self.load()?;
        let report = env.validate();
        if report.is_ok() {
            Ok(env)
        } else {
            Err(CliError::Config(report.to_string()))
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    Io(std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_CONFIG,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical error: {m}"),
            CliError::Io(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<NumericError> for CliError {
    fn from(e: NumericError) -> Self {
        match e {
            NumericError::Env(e) => e.into(),
            NumericError::Domain(m) => CliError::Config(m),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Env(e) => e.into(),
            SimError::Numeric(e) => e.into(),
            SimError::Config(m) => CliError::Config(m),
            other @ SimError::DegenerateSample { .. } => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

/// Parses `a:b:n` into `n + 1` equally spaced points.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Config(format!("time grid `{spec}` is not of the form a:b:n"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        return Err(bad());
    };
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if !(a.is_finite() && b.is_finite() && a >= 0.0 && b >= a) || n == 0 {
        return Err(CliError::Config(format!(
            "time grid `{spec}` needs 0 <= a <= b and n >= 1"
        )));
    }
    Ok((0..=n)
        .map(|i| {
            if i == n {
                b
            } else {
                a + (b - a) * i as f64 / n as f64
            }
        })
        .collect())
}

fn parse_times(spec: &str) -> Result<Vec<f64>, CliError> {
    if spec.contains(':') {
        return parse_grid(spec);
    }
    spec.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("bad time `{x}`")))
        })
        .collect()
}

fn parse_quantities(spec: &str) -> Result<Vec<McQuantity>, CliError> {
    spec.split(',')
        .map(|item| {
            let item = item.trim();
            let (name, arg) = match item.split_once(':') {
                Some((n, a)) => (n, Some(a)),
                None => (item, None),
            };
            let value = || -> Result<f64, CliError> {
                arg.and_then(|a| a.parse().ok()).ok_or_else(|| {
                    CliError::Config(format!("quantity `{item}` needs a numeric argument"))
                })
            };
            match name {
                "survival" => Ok(McQuantity::Survival),
                "mean" => Ok(McQuantity::Mean),
                "cond_mean" => Ok(McQuantity::CondMean),
                "laplace" => Ok(McQuantity::Laplace { w: value()? }),
                "cond_pgf" => Ok(McQuantity::CondPgf { s: value()? }),
                _ => Err(CliError::Config(format!("unknown quantity `{item}`"))),
            }
        })
        .collect()
}

fn print_regime(out: &mut dyn Write, report: &RegimeReport, json: bool) -> Result<(), CliError> {
    if json {
        writeln!(out, "{}", report.to_json())?;
        return Ok(());
    }
    writeln!(out, "{}", report.label())?;
    if let Some(m) = report.m_theta {
        writeln!(out, "M_theta = {m}")?;
    }
    if let Some((lo, hi)) = report.partial_limits {
        writeln!(out, "mu^theta V: liminf = {lo}, limsup = {hi}")?;
    }
    for (name, est) in [
        ("Lambda", &report.lambda_limit),
        ("V", &report.v_limit),
        ("mu^theta V", &report.mu_theta_v_limit),
    ] {
        if let Some(est) = est {
            writeln!(out, "{name}: {:?} (horizon {})", est.kind, est.horizon_used)?;
        }
    }
    if let Some(note) = &report.note {
        writeln!(out, "note: {note}")?;
    }
    Ok(())
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    match cli.command {
        Command::Scenarios => {
            for s in list_scenarios() {
                writeln!(
                    out,
                    "{:<18} [{}] {}",
                    s.name,
                    s.params.join(","),
                    s.description
                )?;
            }
        }
        Command::Validate(args) => {
            let env = args.load()?;
            let report = env.validate();
            writeln!(out, "{report}")?;
            if !report.is_ok() {
                return Ok(EXIT_CONFIG);
            }
        }
        Command::Classify {
            scenario,
            symbolic,
            horizon,
            json,
        } => {
            let env = scenario.load_valid()?;
            let report = if symbolic {
                let fam = env.power_family().ok_or_else(|| {
                    CliError::Config(
                        "symbolic classification needs a power-law family scenario".into(),
                    )
                })?;
                classify_powerlaw(&fam)?
            } else {
                let schedule = ProbeSchedule {
                    steps: horizon,
                    ..ProbeSchedule::default()
                };
                classify(&env, &schedule, &ProbeConfig::default())
            };
            print_regime(out, &report, json)?;
        }
        Command::Eval {
            scenario,
            t_grid,
            s,
            w,
            tol,
        } => {
            let env = scenario.load_valid()?;
            let grid = parse_grid(&t_grid)?;
            let values = eval_grid(&env, &grid, tol, Route::Quadrature)?;
            let theta = env.theta().get();
            match (s, w) {
                (None, None) => {
                    writeln!(out, "{}", TransformValue::CSV_HEADER)?;
                    for v in &values {
                        writeln!(out, "{}", v.csv_row())?;
                    }
                }
                (Some(s), _) => {
                    if !(0.0..=1.0).contains(&s) {
                        return Err(CliError::Config(format!("s = {s} outside [0, 1]")));
                    }
                    writeln!(out, "{}", ExactRow::CSV_HEADER)?;
                    for v in &values {
                        let g = PgfAtTime::new(theta, *v);
                        let row = ExactRow {
                            t: v.t,
                            s_or_w: s,
                            value: g.pgf(s),
                            err: g.pgf_error(s),
                        };
                        writeln!(out, "{}", row.csv_row())?;
                    }
                }
                (None, Some(w)) => {
                    if !(w >= 0.0) {
                        return Err(CliError::Config(format!("w = {w} must be non-negative")));
                    }
                    writeln!(out, "{}", ExactRow::CSV_HEADER)?;
                    for v in &values {
                        let g = PgfAtTime::new(theta, *v);
                        let row = ExactRow {
                            t: v.t,
                            s_or_w: w,
                            value: g.conditional_laplace(w),
                            err: v.abs_error.max(),
                        };
                        writeln!(out, "{}", row.csv_row())?;
                    }
                }
            }
        }
        Command::Simulate {
            scenario,
            t_end,
            replicas,
            seed,
            checkpoints,
            cap,
        } => {
            let env = scenario.load_valid()?;
            let checkpoints = match checkpoints {
                Some(spec) => parse_times(&spec)?,
                None => vec![t_end],
            };
            let base = SimConfig {
                seed,
                t_end,
                checkpoints,
                population_cap: cap,
                replica_index: 0,
            };
            writeln!(out, "replica,t,Z,capped")?;
            for r in 0..replicas {
                let tr = simulate(
                    &env,
                    &SimConfig {
                        replica_index: r,
                        ..base.clone()
                    },
                )?;
                for &(t, z) in &tr.checkpoint_values {
                    writeln!(out, "{r},{t},{z},false")?;
                }
                if let Some((t, z)) = tr.capped_at {
                    writeln!(out, "{r},{t},{z},true")?;
                }
            }
        }
        Command::Verify {
            scenario,
            replicas,
            seed,
            t_grid,
            quantities,
            z,
            cap,
            json,
        } => {
            let env = scenario.load_valid()?;
            let grid = parse_times(&t_grid)?;
            let quantities = parse_quantities(&quantities)?;
            let cfg = McConfig {
                population_cap: cap,
                ..McConfig::new(replicas, seed)
            };
            let report = verify(&env, &grid, &quantities, &cfg, z)?;
            if json {
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(&report).expect("report serializes")
                )?;
            } else {
                write!(out, "{}", report.to_csv())?;
            }
            writeln!(
                err,
                "{} rows, {} failed; expected false failures at |z| >= {}: {:.3e}",
                report.rows.len(),
                report.rows.iter().filter(|r| !r.pass).count(),
                z,
                report.expected_false_failures
            )?;
            if !report.all_pass {
                return Ok(EXIT_VERIFY_FAILED);
            }
        }
        Command::Trajectory {
            scenario,
            t_grid,
            tol,
        } => {
            let env = scenario.load_valid()?;
            let grid = parse_grid(&t_grid)?;
            writeln!(out, "t,mu,log_mu")?;
            for v in eval_grid(&env, &grid, tol, Route::Quadrature)? {
                writeln!(out, "{},{},{}", v.t, v.mu(), v.log_mu)?;
            }
        }
    }
    Ok(EXIT_OK)
}

/// Runs the CLI on `args` (including the program name).
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = write!(err, "{e}");
            return code;
        }
    };
    match execute(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_n_plus_one_points() {
        assert_eq!(
            parse_grid("0:1:4").unwrap(),
            vec![0.0, 0.25, 0.5, 0.75, 1.0]
        );
        assert_eq!(parse_grid("0:0:1").unwrap(), vec![0.0, 0.0]);
        assert!(parse_grid("1:0:3").is_err());
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("0:1:0").is_err());
    }

    #[test]
    fn quantity_list() {
        let q = parse_quantities("survival, laplace:0.5,cond_pgf:0.3").unwrap();
        assert_eq!(
            q,
            vec![
                McQuantity::Survival,
                McQuantity::Laplace { w: 0.5 },
                McQuantity::CondPgf { s: 0.3 }
            ]
        );
        assert!(parse_quantities("laplace").is_err());
        assert!(parse_quantities("variance").is_err());
    }
}
