//! C ABI over the `pass_swipt` solver.
//!
//! Configs and solutions are opaque heap handles owned by the caller and
//! released with the matching `*_free`. Every fallible call returns a
//! [`PassStatus`]; the message of the last failure on the calling thread is
//! available from [`pass_last_error_message`]. Panics never cross the
//! boundary and are reported as `PASS_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pass_swipt::config::{dbm_to_watts, RawConfig};
use pass_swipt::harness::run_scheme;
use pass_swipt::{sample_scenario, ConfigFile, P1Solution, PassError, Scheme, SolverSettings, SystemConfig};

/// Opaque validated configuration.
pub struct PassConfig {
    inner: SystemConfig,
}

/// Opaque solver result.
pub struct PassSolution {
    inner: P1Solution,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    InvalidConfig = 4,
    Parse = 5,
    IndexOutOfRange = 6,
    LayoutViolation = 7,
    DegenerateChannel = 8,
    InfeasibleScenario = 9,
    InfeasibleSubproblem = 10,
    QpMaxIterations = 11,
    NotConverged = 12,
    Io = 13,
    Internal = 14,
    Panic = 15,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassScheme {
    Proposed = 0,
    ZfPass = 1,
    FixedPa = 2,
    ConventionalMimo = 3,
}

fn scheme_of(raw: i32) -> Option<Scheme> {
    [
        (PassScheme::Proposed, Scheme::Proposed),
        (PassScheme::ZfPass, Scheme::ZfPass),
        (PassScheme::FixedPa, Scheme::FixedPa),
        (PassScheme::ConventionalMimo, Scheme::ConventionalMimo),
    ]
    .into_iter()
    .find(|(p, _)| *p as i32 == raw)
    .map(|(_, s)| s)
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassDims {
    pub num_waveguides: usize,
    pub num_pas_per_waveguide: usize,
    pub num_idrs: usize,
    pub num_ehrs: usize,
    pub num_rx_antennas: usize,
    pub num_streams: usize,
    pub grid_points: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassSolveOptions {
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    pub outer_rel_tol: f64,
    pub inner_rel_tol: f64,
    /// Nonzero scores PA candidates with frozen receive filters.
    pub fixed_filters: i32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassSummary {
    /// bit/s/Hz
    pub sum_rate: f64,
    /// W
    pub power: f64,
    /// `min_q (E_q − E_min)` in W
    pub min_energy_margin: f64,
    pub energy_feasible: bool,
    pub converged: bool,
    pub has_layout: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = clean);
}

fn status_of(e: &PassError) -> PassStatus {
    match e {
        PassError::InvalidConfig(_) => PassStatus::InvalidConfig,
        PassError::IndexOutOfRange(_) => PassStatus::IndexOutOfRange,
        PassError::LayoutViolation(_) => PassStatus::LayoutViolation,
        PassError::DegenerateChannel(_) => PassStatus::DegenerateChannel,
        PassError::InfeasibleScenario(_) => PassStatus::InfeasibleScenario,
        PassError::InfeasibleSubproblem(_) => PassStatus::InfeasibleSubproblem,
        PassError::QpMaxIterations { .. } => PassStatus::QpMaxIterations,
        PassError::NotConverged(..) => PassStatus::NotConverged,
        PassError::Internal(_) => PassStatus::Internal,
        PassError::Parse(_) => PassStatus::Parse,
        PassError::Io(_) | PassError::Csv(_) => PassStatus::Io,
    }
}

struct Failure(PassStatus, String);

impl From<PassError> for Failure {
    fn from(e: PassError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail(status: PassStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PassStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PassStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            PassStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(PassStatus::NullPointer, format!("{what} is null")))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| fail(PassStatus::NullPointer, format!("{what} is null")))
}

unsafe fn utf8<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(PassStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(PassStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize, written: *mut usize) -> Result<(), Failure> {
    if !written.is_null() {
        *written = src.len();
    }
    if src.is_empty() {
        return Ok(());
    }
    if buf.is_null() {
        return Err(fail(PassStatus::NullPointer, "output buffer is null"));
    }
    if len < src.len() {
        return Err(fail(
            PassStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} required", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

fn boxed_config(out: *mut *mut PassConfig, cfg: SystemConfig) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(PassStatus::NullPointer, "out is null"));
    }
    unsafe { *out = Box::into_raw(Box::new(PassConfig { inner: cfg })) };
    Ok(())
}

const STATUSES: [PassStatus; 16] = [
    PassStatus::Ok,
    PassStatus::NullPointer,
    PassStatus::InvalidArgument,
    PassStatus::BufferTooSmall,
    PassStatus::InvalidConfig,
    PassStatus::Parse,
    PassStatus::IndexOutOfRange,
    PassStatus::LayoutViolation,
    PassStatus::DegenerateChannel,
    PassStatus::InfeasibleScenario,
    PassStatus::InfeasibleSubproblem,
    PassStatus::QpMaxIterations,
    PassStatus::NotConverged,
    PassStatus::Io,
    PassStatus::Internal,
    PassStatus::Panic,
];

/// Static name for a `PassStatus` value, e.g. `"infeasible_scenario"`;
/// `"unknown"` for values outside the enum.
#[no_mangle]
pub extern "C" fn pass_status_name(status: i32) -> *const c_char {
    let Some(&status) = STATUSES.iter().find(|s| **s as i32 == status) else {
        return c"unknown".as_ptr().cast();
    };
    let s: &'static CStr = match status {
        PassStatus::Ok => c"ok",
        PassStatus::NullPointer => c"null_pointer",
        PassStatus::InvalidArgument => c"invalid_argument",
        PassStatus::BufferTooSmall => c"buffer_too_small",
        PassStatus::InvalidConfig => c"invalid_config",
        PassStatus::Parse => c"parse",
        PassStatus::IndexOutOfRange => c"index_out_of_range",
        PassStatus::LayoutViolation => c"layout_violation",
        PassStatus::DegenerateChannel => c"degenerate_channel",
        PassStatus::InfeasibleScenario => c"infeasible_scenario",
        PassStatus::InfeasibleSubproblem => c"infeasible_subproblem",
        PassStatus::QpMaxIterations => c"qp_max_iterations",
        PassStatus::NotConverged => c"not_converged",
        PassStatus::Io => c"io",
        PassStatus::Internal => c"internal",
        PassStatus::Panic => c"panic",
    };
    s.as_ptr().cast()
}

/// Message of the last failed call on this thread, empty after a success.
/// Valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn pass_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn pass_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// The reference configuration (M = 4, N = 3, K = Q = 2, J = 3, 43 dBm).
#[no_mangle]
pub extern "C" fn pass_config_reference(out: *mut *mut PassConfig) -> PassStatus {
    guard(|| boxed_config(out, SystemConfig::reference()))
}

/// Parses a TOML document; keys left out keep their reference values.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pass_config_from_toml(toml: *const c_char, out: *mut *mut PassConfig) -> PassStatus {
    guard(|| {
        let text = utf8(toml, "toml")?;
        boxed_config(out, ConfigFile::parse(text)?.into_config()?)
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pass_config_load(path: *const c_char, out: *mut *mut PassConfig) -> PassStatus {
    guard(|| {
        let p = utf8(path, "path")?;
        boxed_config(out, pass_swipt::load_config(std::path::Path::new(p))?)
    })
}

/// # Safety
/// `cfg` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn pass_config_free(cfg: *mut PassConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `cfg` must be a live config handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pass_config_clone(cfg: *const PassConfig, out: *mut *mut PassConfig) -> PassStatus {
    guard(|| {
        let c = borrow(cfg, "cfg")?;
        boxed_config(out, c.inner.clone())
    })
}

/// # Safety
/// `cfg` must be a live config handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pass_config_dims(cfg: *const PassConfig, out: *mut PassDims) -> PassStatus {
    guard(|| {
        let c = &borrow(cfg, "cfg")?.inner;
        *borrow_mut(out, "out")? = PassDims {
            num_waveguides: c.num_waveguides,
            num_pas_per_waveguide: c.num_pas_per_waveguide,
            num_idrs: c.num_idrs,
            num_ehrs: c.num_ehrs,
            num_rx_antennas: c.num_rx_antennas,
            num_streams: c.num_streams(),
            grid_points: c.grid_points,
        };
        Ok(())
    })
}

/// Applies `edit` to a copy and keeps it only if the result validates.
unsafe fn edit_config(cfg: *mut PassConfig, edit: impl FnOnce(RawConfig) -> RawConfig) -> PassStatus {
    guard(|| {
        let c = borrow_mut(cfg, "cfg")?;
        c.inner = SystemConfig::new(edit(c.inner.raw().clone()))?;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn pass_config_set_max_power_dbm(cfg: *mut PassConfig, dbm: f64) -> PassStatus {
    edit_config(cfg, |r| RawConfig { max_power: dbm_to_watts(dbm), ..r })
}

/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn pass_config_set_min_energy_w(cfg: *mut PassConfig, watts: f64) -> PassStatus {
    edit_config(cfg, |r| RawConfig { min_energy: watts, ..r })
}

/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn pass_config_set_pas_per_waveguide(cfg: *mut PassConfig, n: usize) -> PassStatus {
    edit_config(cfg, |r| RawConfig { num_pas_per_waveguide: n, ..r })
}

/// Also resets the waveguide spacing to `L_y/(M − 1)`.
///
/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn pass_config_set_waveguides(cfg: *mut PassConfig, m: usize) -> PassStatus {
    edit_config(cfg, |r| r.with_waveguides(m))
}

/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn pass_config_set_grid_points(cfg: *mut PassConfig, points: usize) -> PassStatus {
    edit_config(cfg, |r| RawConfig { grid_points: points, ..r })
}

#[no_mangle]
pub extern "C" fn pass_solve_options_default() -> PassSolveOptions {
    let s = SolverSettings::default();
    PassSolveOptions {
        max_outer_iters: s.max_outer_iters,
        max_inner_iters: s.inner.max_inner_iters,
        outer_rel_tol: s.outer_rel_tol,
        inner_rel_tol: s.inner.surrogate_rel_tol,
        fixed_filters: 0,
    }
}

fn settings_from(o: &PassSolveOptions) -> Result<SolverSettings, Failure> {
    if !(o.outer_rel_tol > 0.0 && o.outer_rel_tol.is_finite()) {
        return Err(fail(PassStatus::InvalidArgument, "outer_rel_tol must be positive and finite"));
    }
    let mut s = SolverSettings {
        max_outer_iters: o.max_outer_iters,
        outer_rel_tol: o.outer_rel_tol,
        position_objective: if o.fixed_filters != 0 {
            pass_swipt::PositionObjective::FixedFilters
        } else {
            pass_swipt::PositionObjective::RefreshedFilters
        },
        ..Default::default()
    };
    s.inner.max_inner_iters = o.max_inner_iters;
    s.inner.surrogate_rel_tol = o.inner_rel_tol;
    s.inner.validate()?;
    Ok(s)
}

/// Samples the scenario for `seed` and runs `scheme`, a `PassScheme` value. `options` may be null
/// for the defaults. Hitting the outer cap is not an error: the solution is
/// returned with `converged = false`.
///
/// # Safety
/// `cfg` must be a live config handle, `options` null or valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pass_solve(
    cfg: *const PassConfig,
    seed: u64,
    scheme: i32,
    options: *const PassSolveOptions,
    out: *mut *mut PassSolution,
) -> PassStatus {
    guard(|| {
        let c = &borrow(cfg, "cfg")?.inner;
        let scheme = scheme_of(scheme).ok_or_else(|| fail(PassStatus::InvalidArgument, format!("unknown scheme {scheme}")))?;
        if out.is_null() {
            return Err(fail(PassStatus::NullPointer, "out is null"));
        }
        let opts = options.as_ref().copied().unwrap_or_else(|| pass_solve_options_default());
        let settings = settings_from(&opts)?;
        let scenario = sample_scenario(seed, c)?;
        let sol = run_scheme(scheme, &scenario, &settings)?;
        *out = Box::into_raw(Box::new(PassSolution { inner: sol }));
        Ok(())
    })
}

/// # Safety
/// `sol` must come from [`pass_solve`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn pass_solution_free(sol: *mut PassSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// # Safety
/// `sol` must be a live solution handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pass_solution_summary(sol: *const PassSolution, out: *mut PassSummary) -> PassStatus {
    guard(|| {
        let s = &borrow(sol, "sol")?.inner;
        *borrow_mut(out, "out")? = PassSummary {
            sum_rate: s.sum_rate,
            power: s.power,
            min_energy_margin: s.min_energy_margin,
            energy_feasible: s.energy_feasible,
            converged: s.converged,
            has_layout: s.layout.is_some(),
            outer_iterations: s.outer_iterations,
            inner_iterations: s.inner_iterations,
        };
        Ok(())
    })
}

/// PA positions in metres, row-major `M × N`. `*written` receives the
/// required length even when the buffer is too small; it is 0 for the
/// conventional array.
///
/// # Safety
/// `sol` must be a live solution handle, `buf` valid for `len` doubles,
/// `written` null or writable.
#[no_mangle]
pub unsafe extern "C" fn pass_solution_layout(
    sol: *const PassSolution,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> PassStatus {
    guard(|| {
        let s = &borrow(sol, "sol")?.inner;
        let flat: Vec<f64> = s
            .layout
            .as_ref()
            .map(|l| (0..l.num_waveguides()).flat_map(|m| l.row(m)).collect())
            .unwrap_or_default();
        copy_out(&flat, buf, len, written)
    })
}

/// Harvested power per EHR in W.
///
/// # Safety
/// As for [`pass_solution_layout`].
#[no_mangle]
pub unsafe extern "C" fn pass_solution_energies(
    sol: *const PassSolution,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> PassStatus {
    guard(|| copy_out(&borrow(sol, "sol")?.inner.energies, buf, len, written))
}

/// Sum-rate after each outer iteration, starting with iteration 0.
///
/// # Safety
/// As for [`pass_solution_layout`].
#[no_mangle]
pub unsafe extern "C" fn pass_solution_outer_rates(
    sol: *const PassSolution,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> PassStatus {
    guard(|| copy_out(&borrow(sol, "sol")?.inner.trace.outer_rates(), buf, len, written))
}

/// Beamformer of IDR `k` as interleaved `(re, im)` pairs, column-major `M × N_d`.
///
/// # Safety
/// As for [`pass_solution_layout`].
#[no_mangle]
pub unsafe extern "C" fn pass_solution_beamformer(
    sol: *const PassSolution,
    k: usize,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> PassStatus {
    guard(|| {
        let s = &borrow(sol, "sol")?.inner;
        let w = s.beams.0.get(k).ok_or_else(|| {
            fail(PassStatus::IndexOutOfRange, format!("IDR {k} (solution has {})", s.beams.0.len()))
        })?;
        let flat: Vec<f64> = w.iter().flat_map(|z| [z.re, z.im]).collect();
        copy_out(&flat, buf, len, written)
    })
}
