//! C ABI for `theta-branch`.
//!
//! Environments live behind an opaque [`TbEnvironment`] handle. Every fallible
//! call returns a [`TbStatus`]; on failure the message is available from
//! [`tb_last_error`] on the same thread. Results go through out-pointers,
//! which are left untouched when the call fails.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use theta_branch::classify::classify;
use theta_branch::exact::{self, LimitOptions};
use theta_branch::sim::{self, SimConfig};
use theta_branch::transforms::{self, ProbeConfig, ProbeSchedule};
use theta_branch::{
    builtin_scenario, EnvError, Environment, NumericError, Regime, ScenarioParams, SimError,
};

/// Opaque environment handle.
pub struct TbEnvironment {
    env: Environment,
}

/// Status codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numeric = 4,
    Inconclusive = 5,
    Panic = 6,
}

/// Asymptotic regime. `Inconclusive` means the probes did not settle.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbRegime {
    Inconclusive = 0,
    Supercritical = 1,
    AsymptoticallyDegenerate = 2,
    Critical = 3,
    StrictlySubcritical = 4,
    LooselySubcritical = 5,
}

impl From<Option<Regime>> for TbRegime {
    fn from(r: Option<Regime>) -> Self {
        match r {
            None => TbRegime::Inconclusive,
            Some(Regime::Supercritical) => TbRegime::Supercritical,
            Some(Regime::AsymptoticallyDegenerate) => TbRegime::AsymptoticallyDegenerate,
            Some(Regime::Critical) => TbRegime::Critical,
            Some(Regime::StrictlySubcritical) => TbRegime::StrictlySubcritical,
            Some(Regime::LooselySubcritical) => TbRegime::LooselySubcritical,
        }
    }
}

/// Transform values at one time.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TbTransforms {
    pub t: f64,
    pub lambda: f64,
    pub log_mu: f64,
    pub a: f64,
    pub v: f64,
    pub b: f64,
    pub mu_theta_v: f64,
    /// Largest absolute error bound over the six values.
    pub abs_error: f64,
}

struct Failure(TbStatus, String);

impl From<EnvError> for Failure {
    fn from(e: EnvError) -> Self {
        let status = match e {
            EnvError::Config(_) | EnvError::UnknownScenario(_) => TbStatus::Config,
            _ => TbStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<NumericError> for Failure {
    fn from(e: NumericError) -> Self {
        match e {
            NumericError::Env(env) => env.into(),
            NumericError::Domain(_) => Failure(TbStatus::InvalidArgument, e.to_string()),
            NumericError::Inconclusive(_) => Failure(TbStatus::Inconclusive, e.to_string()),
            _ => Failure(TbStatus::Numeric, e.to_string()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Env(env) => env.into(),
            SimError::Numeric(n) => n.into(),
            SimError::Config(_) => Failure(TbStatus::InvalidArgument, e.to_string()),
            SimError::DegenerateSample { .. } => Failure(TbStatus::Numeric, e.to_string()),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn null(what: &str) -> Failure {
    Failure(TbStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `f`, records any failure or panic, and turns it into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TbStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {msg}"));
            TbStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(TbStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

unsafe fn handle<'a>(env: *const TbEnvironment) -> Result<&'a Environment, Failure> {
    env.as_ref().map(|h| &h.env).ok_or_else(|| null("env"))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn boxed(env: Environment) -> *mut TbEnvironment {
    Box::into_raw(Box::new(TbEnvironment { env }))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL if none.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tb_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses and validates a JSON environment configuration.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
/// The handle written to `out` must be released with [`tb_env_free`].
#[no_mangle]
pub unsafe extern "C" fn tb_env_from_json(
    json: *const c_char,
    out: *mut *mut TbEnvironment,
) -> TbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let env = Environment::from_json(read_str(json, "json")?)?;
        let report = env.validate();
        if !report.is_ok() {
            return Err(EnvError::Invalid(report.to_string()).into());
        }
        write(out, boxed(env), "out")
    })
}

/// Builds a named built-in scenario. A NaN `theta` keeps the scenario default.
///
/// # Safety
/// `name` must be a valid NUL-terminated string and `out` a valid pointer.
/// The handle written to `out` must be released with [`tb_env_free`].
#[no_mangle]
pub unsafe extern "C" fn tb_env_builtin(
    name: *const c_char,
    theta: f64,
    out: *mut *mut TbEnvironment,
) -> TbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let params = ScenarioParams {
            theta: (!theta.is_nan()).then_some(theta),
            ..ScenarioParams::default()
        };
        let env = builtin_scenario(read_str(name, "name")?, &params)?;
        write(out, boxed(env), "out")
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `env` must be NULL or a handle from this library that was not freed yet.
#[no_mangle]
pub unsafe extern "C" fn tb_env_free(env: *mut TbEnvironment) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Serializes the environment as JSON. Free the result with [`tb_string_free`].
/// Returns NULL on failure.
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tb_env_to_json(env: *const TbEnvironment) -> *mut c_char {
    let mut result = ptr::null_mut();
    guard(|| {
        let json = handle(env)?.to_json();
        result = CString::new(json).expect("json has no nul").into_raw();
        Ok(())
    });
    result
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must be NULL or a string from this library that was not freed yet.
#[no_mangle]
pub unsafe extern "C" fn tb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Evaluates `Lambda_t`, `ln mu_t`, `A_t`, `V_t`, `B_t` and `mu_t^theta V_t`
/// to absolute tolerance `tol`.
///
/// # Safety
/// `env` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_transforms(
    env: *const TbEnvironment,
    t: f64,
    tol: f64,
    out: *mut TbTransforms,
) -> TbStatus {
    guard(|| {
        let tv = transforms::eval(handle(env)?, t, tol)?;
        let value = TbTransforms {
            t: tv.t,
            lambda: tv.lambda,
            log_mu: tv.log_mu,
            a: tv.a,
            v: tv.v,
            b: tv.b,
            mu_theta_v: tv.mu_theta_v,
            abs_error: tv.abs_error.max(),
        };
        write(out, value, "out")
    })
}

/// `E[s^Z_t | Z_0 = 1]` for `s` in `[0, 1]`.
///
/// # Safety
/// `env` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_pgf(
    env: *const TbEnvironment,
    t: f64,
    s: f64,
    tol: f64,
    out: *mut f64,
) -> TbStatus {
    guard(|| write(out, exact::pgf_z(handle(env)?, t, s, tol)?, "out"))
}

/// `P(Z_t > 0)`.
///
/// # Safety
/// `env` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_survival(
    env: *const TbEnvironment,
    t: f64,
    tol: f64,
    out: *mut f64,
) -> TbStatus {
    guard(|| write(out, exact::survival(handle(env)?, t, tol)?, "out"))
}

/// `E[Z_t | Z_t > 0]`.
///
/// # Safety
/// `env` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_conditional_mean(
    env: *const TbEnvironment,
    t: f64,
    tol: f64,
    out: *mut f64,
) -> TbStatus {
    guard(|| write(out, exact::conditional_mean(handle(env)?, t, tol)?, "out"))
}

/// `E[s^Z_t | Z_tau = 1]` for `tau <= t`.
///
/// # Safety
/// `env` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_transition_pgf(
    env: *const TbEnvironment,
    tau: f64,
    t: f64,
    s: f64,
    tol: f64,
    out: *mut f64,
) -> TbStatus {
    guard(|| {
        let value = exact::transition_pgf(handle(env)?, tau, t, s, tol)?;
        write(out, value, "out")
    })
}

/// Extinction probability `q`. Returns `TB_STATUS_INCONCLUSIVE` when the
/// limit probes do not settle.
///
/// # Safety
/// `env` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_extinction(env: *const TbEnvironment, out: *mut f64) -> TbStatus {
    guard(|| {
        let report = exact::extinction(handle(env)?, &LimitOptions::default());
        match report.q {
            Some(q) => write(out, q, "out"),
            None => Err(NumericError::Inconclusive("extinction probability".into()).into()),
        }
    })
}

/// Classifies the environment with the default probe schedule. An
/// inconclusive outcome is `TB_REGIME_INCONCLUSIVE` with status OK.
///
/// # Safety
/// `env` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_classify(env: *const TbEnvironment, out: *mut TbRegime) -> TbStatus {
    guard(|| {
        let report = classify(
            handle(env)?,
            &ProbeSchedule::default(),
            &ProbeConfig::default(),
        );
        write(out, report.regime.into(), "out")
    })
}

/// Simulates replica `replica` of seed `seed` up to `t_end` from one
/// individual. `Z` at each of the `n_checkpoints` sorted times is written to
/// `values`; `n_recorded` receives how many were reached (fewer when the
/// population exceeded `cap`, which also sets `capped` to 1). A zero `cap`
/// uses the library default.
///
/// # Safety
/// `env` must be a live handle. `checkpoints` and `values` must point to
/// `n_checkpoints` elements (they may be NULL when it is zero). `n_recorded`
/// and `capped` must be valid pointers.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn tb_simulate(
    env: *const TbEnvironment,
    seed: u64,
    replica: u64,
    t_end: f64,
    checkpoints: *const f64,
    n_checkpoints: usize,
    cap: u64,
    values: *mut u64,
    n_recorded: *mut usize,
    capped: *mut i32,
) -> TbStatus {
    guard(|| {
        let env = handle(env)?;
        if n_recorded.is_null() {
            return Err(null("n_recorded"));
        }
        if capped.is_null() {
            return Err(null("capped"));
        }
        if n_checkpoints > 0 && (checkpoints.is_null() || values.is_null()) {
            return Err(null("checkpoints or values"));
        }
        let times = if n_checkpoints == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(checkpoints, n_checkpoints).to_vec()
        };
        let mut config = SimConfig::new(seed, t_end, times);
        config.replica_index = replica;
        if cap > 0 {
            config.population_cap = cap;
        }
        config.check()?;
        let traj = sim::simulate(env, &config)?;
        for (i, &(_, z)) in traj.checkpoint_values.iter().enumerate() {
            values.add(i).write(z);
        }
        n_recorded.write(traj.checkpoint_values.len());
        capped.write(i32::from(traj.capped));
        Ok(())
    })
}
