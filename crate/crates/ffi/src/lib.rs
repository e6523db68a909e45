//! C ABI over the controller, its two testbeds and the benchmark harness.
//!
//! Every function returns an [`AiconStatus`]. On failure a message is kept
//! per thread and can be copied out with [`aicon_last_error`]. Objects cross
//! the boundary as opaque pointers that the caller releases with the
//! matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use aicon::bench::{generate_batch, run_batch, BatchReport, BenchConfig, BenchMode, Domain, Scenario, ScenarioSet};
use aicon::controller::{tick, ControllerConfig, Environment, GraphFactory, ResolverState};
use aicon::export::export_csv;
use aicon::graph::Vector;
use aicon::nav2d::{NavEnv, NavModel};
use aicon::pusht::{PushEnv, PushModel};
use aicon::Error;

pub const AICON_DOMAIN_NAV2D: u32 = 0;
pub const AICON_DOMAIN_PUSHT: u32 = 1;

pub const AICON_MODE_FULL: u32 = 0;
pub const AICON_MODE_FULL_NO_NOISE: u32 = 1;
pub const AICON_MODE_STEEPEST: u32 = 2;
pub const AICON_MODE_NO_EXPLORATION: u32 = 3;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AiconStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    /// Non-finite or degenerate numerics inside the controller or a model.
    Numerical = 5,
    InfeasibleScenario = 6,
    /// The rollout already finished.
    Finished = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> AiconStatus {
    match e {
        Error::InvalidArgument(_)
        | Error::UnknownNode(_)
        | Error::DuplicateId(_)
        | Error::DimensionMismatch { .. }
        | Error::Cyclic(_)
        | Error::NoPath { .. }
        | Error::EmptyInput
        | Error::DegeneratePolygon(_) => AiconStatus::InvalidArgument,
        Error::Parse(_) => AiconStatus::Parse,
        Error::Io(_) => AiconStatus::Io,
        Error::InfeasibleScenario(_) => AiconStatus::InfeasibleScenario,
        Error::NonFiniteState(_)
        | Error::NonFiniteGradient(_)
        | Error::DegenerateGradient(_)
        | Error::NonFiniteAction(_)
        | Error::DegenerateConfiguration(_) => AiconStatus::Numerical,
    }
}

/// Runs `f`, records any error or panic and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), (AiconStatus, String)>) -> AiconStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AiconStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside aicon");
            AiconStatus::Panic
        }
    }
}

fn lib<T>(r: aicon::Result<T>) -> Result<T, (AiconStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn invalid(msg: impl Into<String>) -> (AiconStatus, String) {
    (AiconStatus::InvalidArgument, msg.into())
}

fn null(what: &str) -> (AiconStatus, String) {
    (AiconStatus::NullPointer, format!("{what} is null"))
}

fn domain_of(code: u32) -> Result<Domain, (AiconStatus, String)> {
    match code {
        AICON_DOMAIN_NAV2D => Ok(Domain::Nav2d),
        AICON_DOMAIN_PUSHT => Ok(Domain::Pusht),
        _ => Err(invalid(format!("unknown domain code {code}"))),
    }
}

fn mode_of(code: u32) -> Result<BenchMode, (AiconStatus, String)> {
    match code {
        AICON_MODE_FULL => Ok(BenchMode::Full),
        AICON_MODE_FULL_NO_NOISE => Ok(BenchMode::FullNoNoise),
        AICON_MODE_STEEPEST => Ok(BenchMode::SteepestBaseline),
        AICON_MODE_NO_EXPLORATION => Ok(BenchMode::NoExploration),
        _ => Err(invalid(format!("unknown mode code {code}"))),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (AiconStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

/// A single task of either domain.
pub struct AiconScenario {
    inner: Scenario,
}

/// A closed-loop rollout advanced one control tick at a time.
pub struct AiconSession {
    sim: Sim,
    config: ControllerConfig,
    state: ResolverState,
    action: Vector,
    ticks: usize,
    success: bool,
}

enum Sim {
    Nav(NavModel, NavEnv),
    Push(PushModel, PushEnv),
}

/// Outcome tables of a benchmark batch.
pub struct AiconReport {
    inner: BatchReport,
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating to `len` bytes. Returns the full message
/// length without the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn aicon_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Draws the scenario with index 0 of a batch seeded by `seed`.
///
/// # Safety
/// `out` must be a valid pointer to write the new handle to.
#[no_mangle]
pub unsafe extern "C" fn aicon_scenario_generate(domain: u32, seed: u64, out: *mut *mut AiconScenario) -> AiconStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let d = domain_of(domain)?;
        let sc = lib(generate_batch(d, 1, seed, &BenchConfig::default()))?.remove(0);
        *out = Box::into_raw(Box::new(AiconScenario { inner: sc }));
        Ok(())
    })
}

/// Parses the first scenario of a scenario file given as TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aicon_scenario_from_toml(toml: *const c_char, out: *mut *mut AiconScenario) -> AiconStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(toml, "toml")?;
        let set: ScenarioSet = toml::from_str(text).map_err(|e| (AiconStatus::Parse, e.to_string()))?;
        let sc = set
            .scenarios
            .into_iter()
            .next()
            .ok_or_else(|| invalid("no scenario in input"))?;
        *out = Box::into_raw(Box::new(AiconScenario { inner: sc }));
        Ok(())
    })
}

/// # Safety
/// `scenario` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aicon_scenario_free(scenario: *mut AiconScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Starts a rollout of `scenario` under `mode` with default settings.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aicon_session_new(
    scenario: *const AiconScenario,
    mode: u32,
    out: *mut *mut AiconSession,
) -> AiconStatus {
    guard(|| {
        if scenario.is_null() {
            return Err(null("scenario"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let mode = mode_of(mode)?;
        let sc = &(*scenario).inner;
        let sc = if mode.noisy() { sc.clone() } else { sc.without_noise() };
        let cfg = BenchConfig::default();
        let mut config = cfg.controller(sc.domain()).clone();
        config.mode = mode.control_mode();
        config.explore.seed ^= sc.seed();
        let sim = match &sc {
            Scenario::Nav2d(s) => {
                let (m, e) = lib(s.instantiate(cfg.nav2d.model))?;
                Sim::Nav(m, e)
            }
            Scenario::Pusht(s) => {
                let (m, e) = lib(s.instantiate(cfg.pusht.model))?;
                Sim::Push(m, e)
            }
        };
        let action = Vector::zeros(2);
        let state = lib(ResolverState::new(&config, action.clone()))?;
        *out = Box::into_raw(Box::new(AiconSession {
            sim,
            config,
            state,
            action,
            ticks: 0,
            success: false,
        }));
        Ok(())
    })
}

fn advance<F, E>(model: &mut F, env: &mut E, s: &mut SessionCore) -> aicon::Result<bool>
where
    E: Environment,
    F: GraphFactory<Observation = E::Observation>,
{
    let graph = model.build(s.action)?;
    let (next, _) = tick(&graph, s.config, s.state)?;
    *s.action = next;
    env.step(s.action, s.config.dt);
    let obs = env.observe();
    model.update(&obs, s.action, s.config.dt)?;
    Ok(env.check_success())
}

struct SessionCore<'a> {
    config: &'a ControllerConfig,
    state: &'a mut ResolverState,
    action: &'a mut Vector,
}

/// Runs one control tick. `action` receives the commanded velocity and
/// `done` is set once the task is solved or the tick budget is spent.
///
/// # Safety
/// `session` must be a live handle; `action` must point to two doubles and
/// `done` to one bool.
#[no_mangle]
pub unsafe extern "C" fn aicon_session_step(
    session: *mut AiconSession,
    action: *mut f64,
    done: *mut bool,
) -> AiconStatus {
    guard(|| {
        if session.is_null() || action.is_null() || done.is_null() {
            return Err(null("argument"));
        }
        let s = &mut *session;
        if s.success || s.ticks >= s.config.max_ticks {
            return Err((AiconStatus::Finished, "rollout already finished".into()));
        }
        let mut core = SessionCore {
            config: &s.config,
            state: &mut s.state,
            action: &mut s.action,
        };
        let solved = match &mut s.sim {
            Sim::Nav(m, e) => lib(advance(m, e, &mut core))?,
            Sim::Push(m, e) => lib(advance(m, e, &mut core))?,
        };
        s.ticks += 1;
        s.success = solved;
        *action = s.action[0];
        *action.add(1) = s.action[1];
        *done = s.success || s.ticks >= s.config.max_ticks;
        Ok(())
    })
}

/// Ground-truth agent (nav2d) or pusher (pushT) position.
///
/// # Safety
/// `session` must be a live handle and `xy` must point to two doubles.
#[no_mangle]
pub unsafe extern "C" fn aicon_session_position(session: *const AiconSession, xy: *mut f64) -> AiconStatus {
    guard(|| {
        if session.is_null() || xy.is_null() {
            return Err(null("argument"));
        }
        let snap = match &(*session).sim {
            Sim::Nav(_, e) => e.snapshot(),
            Sim::Push(_, e) => e.snapshot(),
        };
        *xy = snap.agent[0];
        *xy.add(1) = snap.agent[1];
        Ok(())
    })
}

/// Ticks run so far and whether the task has been solved.
///
/// # Safety
/// `session` must be a live handle; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn aicon_session_status(
    session: *const AiconSession,
    ticks: *mut usize,
    success: *mut bool,
) -> AiconStatus {
    guard(|| {
        if session.is_null() || ticks.is_null() || success.is_null() {
            return Err(null("argument"));
        }
        *ticks = (*session).ticks;
        *success = (*session).success;
        Ok(())
    })
}

/// # Safety
/// `session` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aicon_session_free(session: *mut AiconSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Generates `n` scenarios from `seed` and runs each under the modes in
/// `modes[0..n_modes]` on `jobs` threads.
///
/// # Safety
/// `modes` must point to `n_modes` values and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn aicon_bench_run(
    domain: u32,
    n: usize,
    seed: u64,
    modes: *const u32,
    n_modes: usize,
    jobs: usize,
    out: *mut *mut AiconReport,
) -> AiconStatus {
    guard(|| {
        if out.is_null() || (modes.is_null() && n_modes > 0) {
            return Err(null("argument"));
        }
        let d = domain_of(domain)?;
        let codes = if n_modes == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(modes, n_modes)
        };
        let modes = codes.iter().map(|&c| mode_of(c)).collect::<Result<Vec<_>, _>>()?;
        let cfg = BenchConfig::default();
        let scenarios = lib(generate_batch(d, n, seed, &cfg))?;
        let report = lib(run_batch(&scenarios, &modes, &cfg, jobs))?;
        *out = Box::into_raw(Box::new(AiconReport { inner: report }));
        Ok(())
    })
}

/// Successes and scenario count of one mode in a report.
///
/// # Safety
/// `report` must be a live handle; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn aicon_report_successes(
    report: *const AiconReport,
    mode: u32,
    successes: *mut usize,
    scenarios: *mut usize,
) -> AiconStatus {
    guard(|| {
        if report.is_null() || successes.is_null() || scenarios.is_null() {
            return Err(null("argument"));
        }
        let mode = mode_of(mode)?;
        let m = (*report)
            .inner
            .summary(mode)
            .ok_or_else(|| invalid(format!("mode {mode} not in report")))?;
        *successes = m.successes;
        *scenarios = m.scenarios;
        Ok(())
    })
}

/// Writes the report's CSV tables into the existing directory `dir`.
///
/// # Safety
/// `report` must be a live handle and `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn aicon_report_write_csv(report: *const AiconReport, dir: *const c_char) -> AiconStatus {
    guard(|| {
        if report.is_null() {
            return Err(null("report"));
        }
        let dir = str_arg(dir, "dir")?;
        lib(export_csv(&(*report).inner, Path::new(dir)))?;
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aicon_report_free(report: *mut AiconReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_map_to_statuses() {
        assert_eq!(status_of(&Error::Parse("x".into())), AiconStatus::Parse);
        assert_eq!(status_of(&Error::NonFiniteAction(3)), AiconStatus::Numerical);
        assert_eq!(
            status_of(&Error::InfeasibleScenario(1000)),
            AiconStatus::InfeasibleScenario
        );
    }

    #[test]
    fn panics_become_a_status() {
        assert_eq!(guard(|| panic!("boom")), AiconStatus::Panic);
    }

    #[test]
    fn last_error_truncates_with_terminator() {
        set_error("abcdef");
        let mut buf = [1 as c_char; 4];
        let n = unsafe { aicon_last_error(buf.as_mut_ptr(), buf.len()) };
        assert_eq!(n, 6);
        assert_eq!(buf, [b'a' as c_char, b'b' as c_char, b'c' as c_char, 0]);
        assert_eq!(unsafe { aicon_last_error(ptr::null_mut(), 0) }, 6);
    }
}
