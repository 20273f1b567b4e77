//! C ABI over `mho-core`: the closed-form rate-adapter functions, an opaque
//! rate-adapter handle and an opaque on-line van der Pol observer handle.
//!
//! Every function returns an [`MhoStatus`]; on failure a message is available
//! from [`mho_last_error_message`] on the same thread. Outputs are written
//! only on success. Handles are not thread-safe: use one per thread or lock
//! around them.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mho_core::dynamics::{DynamicsError, OutputVector, StateVector, VanDerPol};
use mho_core::measurement::MeasurementError;
use mho_core::observer::{ObserverConfig, ObserverError, OnlineObserver};
use mho_core::rate_adapter::{self, RateError, RateState, TimingSpec};
use mho_core::solver::{BoxConstraint, SolverOptions};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MhoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Not enough samples yet, e.g. no cost before the first cycle.
    WindowUnderflow = 3,
    Divergence = 4,
    /// A Rust panic was caught at the boundary.
    Internal = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("nul bytes removed"));
}

fn fail(status: MhoStatus, message: impl Into<String>) -> MhoStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> MhoStatus) -> MhoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(MhoStatus::Internal, format!("panic: {msg}"))
        }
    }
}

/// Writes `value` through `out` after a null check.
unsafe fn emit<T>(out: *mut T, value: T) -> MhoStatus {
    if out.is_null() {
        return fail(MhoStatus::NullPointer, "output pointer is null");
    }
    out.write(value);
    MhoStatus::Ok
}

fn observer_status(e: &ObserverError) -> MhoStatus {
    match e {
        ObserverError::Dynamics(DynamicsError::Divergence { .. }) => MhoStatus::Divergence,
        ObserverError::Dynamics(DynamicsError::WindowUnderflow { .. })
        | ObserverError::Measurement(MeasurementError::WindowUnderflow { .. })
        | ObserverError::BeforeOrigin { .. } => MhoStatus::WindowUnderflow,
        ObserverError::Rate(_) | ObserverError::Solver(_) => MhoStatus::InvalidArgument,
        _ => MhoStatus::Internal,
    }
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mho_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mho_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---- closed-form functions ----

/// Samples per updating interval, `int(q tau_c / tau) + 1`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mho_ell(q: usize, tau: f64, tau_c: f64, out: *mut usize) -> MhoStatus {
    guard(|| match TimingSpec::new(tau, tau_c) {
        Ok(t) if q >= 1 => emit(out, rate_adapter::ell(q, &t)),
        Ok(_) => fail(MhoStatus::InvalidArgument, "q must be >= 1"),
        Err(e) => fail(MhoStatus::InvalidArgument, e.to_string()),
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhoContractionTerms {
    /// Efficiency `J_best / J_star`.
    pub e: f64,
    /// Disturbance ratio `J_star / J_prev`.
    pub d: f64,
    /// Gain `E D`.
    pub k: f64,
}

fn positive(values: &[(&str, f64)]) -> Result<(), MhoStatus> {
    match values.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
        Some((name, v)) => Err(fail(
            MhoStatus::InvalidArgument,
            format!("{name} must be positive and finite, got {v}"),
        )),
        None => Ok(()),
    }
}

/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mho_contraction_terms(
    j_star: f64,
    j_best: f64,
    j_prev: f64,
    out: *mut MhoContractionTerms,
) -> MhoStatus {
    guard(|| {
        if let Err(s) = positive(&[("j_star", j_star), ("j_best", j_best), ("j_prev", j_prev)]) {
            return s;
        }
        let t = rate_adapter::contraction_terms_from(j_star, j_best, j_prev);
        emit(out, MhoContractionTerms { e: t.e, d: t.d, k: t.k })
    })
}

/// `(J_star / J_prev - 1) / q`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mho_alpha_estimate(j_star: f64, j_prev: f64, q: usize, out: *mut f64) -> MhoStatus {
    guard(|| {
        if q == 0 {
            return fail(MhoStatus::InvalidArgument, "q must be >= 1");
        }
        if let Err(s) = positive(&[("j_star", j_star), ("j_prev", j_prev)]) {
            return s;
        }
        emit(out, rate_adapter::alpha_estimate(j_star, j_prev, q))
    })
}

/// `(J_best - J_penultimate) / J_star`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mho_efficiency_gradient(
    j_best: f64,
    j_penultimate: f64,
    j_star: f64,
    out: *mut f64,
) -> MhoStatus {
    guard(|| {
        if let Err(s) = positive(&[("j_best", j_best), ("j_penultimate", j_penultimate), ("j_star", j_star)]) {
            return s;
        }
        emit(
            out,
            rate_adapter::efficiency_gradient_from(j_best, j_penultimate, j_star),
        )
    })
}

/// `E dD/dq + D dE/dq`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mho_gain_gradient(e: f64, d: f64, de_dq: f64, dd_dq: f64, out: *mut f64) -> MhoStatus {
    guard(|| emit(out, rate_adapter::gain_gradient(e, d, de_dq, dd_dq)))
}

/// Derivative of `q / |ln K|`. Fails with `INVALID_ARGUMENT` when `K` is
/// within `1e-9` of 1 or not positive.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mho_response_time_gradient(k: f64, q: usize, dk_dq: f64, out: *mut f64) -> MhoStatus {
    guard(|| {
        if let Err(s) = positive(&[("k", k)]) {
            return s;
        }
        match rate_adapter::response_time_gradient(k, q, dk_dq) {
            Ok(g) => emit(out, g),
            Err(e) => fail(MhoStatus::InvalidArgument, e.to_string()),
        }
    })
}

// ---- rate adapter handle ----

/// Opaque iteration-budget adapter.
pub struct MhoRateAdapter {
    state: RateState,
}

/// # Safety
/// `out` must be null or valid for writes. The handle is released with
/// [`mho_rate_adapter_free`].
#[no_mangle]
pub unsafe extern "C" fn mho_rate_adapter_new(
    q_init: usize,
    q_min: usize,
    q_max: usize,
    delta: usize,
    out: *mut *mut MhoRateAdapter,
) -> MhoStatus {
    guard(|| {
        if out.is_null() {
            return fail(MhoStatus::NullPointer, "output pointer is null");
        }
        match RateState::new(q_init, q_min, q_max, delta) {
            Ok(state) => emit(out, Box::into_raw(Box::new(MhoRateAdapter { state }))),
            Err(e) => fail(MhoStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Feeds the costs of one solve (initial guess, best, best after `q - 1`
/// iterations, previous delivered best) and writes the next budget.
///
/// # Safety
/// `adapter` must come from [`mho_rate_adapter_new`]; `q_next` must be null
/// or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mho_rate_adapter_update(
    adapter: *mut MhoRateAdapter,
    j_star: f64,
    j_best: f64,
    j_penultimate: f64,
    j_prev: f64,
    q_next: *mut usize,
) -> MhoStatus {
    guard(|| {
        let Some(a) = adapter.as_mut() else {
            return fail(MhoStatus::NullPointer, "adapter is null");
        };
        if q_next.is_null() {
            return fail(MhoStatus::NullPointer, "output pointer is null");
        }
        let costs = [
            ("j_star", j_star),
            ("j_best", j_best),
            ("j_penultimate", j_penultimate),
            ("j_prev", j_prev),
        ];
        if let Err(s) = positive(&costs) {
            return s;
        }
        let (next, _) = rate_adapter::adapt(&a.state, j_star, j_best, j_penultimate, j_prev);
        a.state = next;
        emit(q_next, next.q)
    })
}

/// # Safety
/// `adapter` must come from [`mho_rate_adapter_new`]; `out` must be null or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mho_rate_adapter_q(adapter: *const MhoRateAdapter, out: *mut usize) -> MhoStatus {
    guard(|| match adapter.as_ref() {
        Some(a) => emit(out, a.state.q),
        None => fail(MhoStatus::NullPointer, "adapter is null"),
    })
}

/// Gain `K` measured at the last update (1 before any update).
///
/// # Safety
/// As [`mho_rate_adapter_q`].
#[no_mangle]
pub unsafe extern "C" fn mho_rate_adapter_last_gain(adapter: *const MhoRateAdapter, out: *mut f64) -> MhoStatus {
    guard(|| match adapter.as_ref() {
        Some(a) => emit(out, a.state.last_k),
        None => fail(MhoStatus::NullPointer, "adapter is null"),
    })
}

/// Releases the handle; null is ignored.
///
/// # Safety
/// `adapter` must come from [`mho_rate_adapter_new`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn mho_rate_adapter_free(adapter: *mut MhoRateAdapter) {
    if !adapter.is_null() {
        drop(Box::from_raw(adapter));
    }
}

// ---- van der Pol observer handle ----

/// Settings of an on-line observer for `x1' = x2`,
/// `x2' = -a x1 + (1 - u x3 x1^2) x2`, `x3' = 0`, `y = x1`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhoVdpObserverConfig {
    /// Model gain `a`.
    pub a: f64,
    /// Sampling period, seconds.
    pub tau: f64,
    /// Time per solver iteration, seconds.
    pub tau_c: f64,
    /// Window length in samples.
    pub horizon: usize,
    /// Arrival-cost weight.
    pub rho: f64,
    /// Positive cost floor.
    pub floor_c: f64,
    pub box_lower: [f64; 3],
    pub box_upper: [f64; 3],
    pub q_init: usize,
    pub q_min: usize,
    pub q_max: usize,
    /// Budget increment; ignored unless `adaptive`.
    pub delta: usize,
    pub adaptive: bool,
    /// First backtracking step of the solver.
    pub initial_step: f64,
}

impl Default for MhoVdpObserverConfig {
    fn default() -> Self {
        Self {
            a: 10.0,
            tau: 0.002,
            tau_c: 0.0005,
            horizon: 200,
            rho: 0.01,
            floor_c: mho_core::cost::DEFAULT_FLOOR,
            box_lower: [-10.0, -10.0, 0.1],
            box_upper: [10.0, 10.0, 40.0],
            q_init: 20,
            q_min: 20,
            q_max: 1000,
            delta: 10,
            adaptive: true,
            initial_step: SolverOptions::default().initial_step,
        }
    }
}

/// Writes the reference benchmark settings into `out`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mho_vdp_observer_config_default(out: *mut MhoVdpObserverConfig) -> MhoStatus {
    guard(|| emit(out, MhoVdpObserverConfig::default()))
}

/// Opaque on-line observer owning its measurement log.
pub struct MhoVdpObserver {
    inner: OnlineObserver<VanDerPol, 3, 1>,
    estimate: Option<[f64; 3]>,
    cost: Option<f64>,
}

fn build_observer(c: &MhoVdpObserverConfig, x_hat0: [f64; 3]) -> Result<MhoVdpObserver, String> {
    if !(c.rho >= 0.0 && c.rho.is_finite()) || !(c.floor_c > 0.0 && c.floor_c.is_finite()) {
        return Err(format!(
            "need rho >= 0 and floor_c > 0, got {} and {}",
            c.rho, c.floor_c
        ));
    }
    if c.horizon == 0 || !c.a.is_finite() || x_hat0.iter().any(|v| !v.is_finite()) {
        return Err("horizon, a and the initial guess must be positive/finite".into());
    }
    let timing = TimingSpec::new(c.tau, c.tau_c).map_err(|e: RateError| e.to_string())?;
    let bounds = BoxConstraint::new(StateVector::<3>::from(c.box_lower), StateVector::<3>::from(c.box_upper))
        .map_err(|e| e.to_string())?;
    let rate =
        RateState::new(c.q_init, c.q_min, c.q_max, if c.adaptive { c.delta } else { 0 }).map_err(|e| e.to_string())?;
    let config = ObserverConfig {
        horizon: c.horizon,
        bounds,
        timing,
        rho: c.rho,
        floor_c: c.floor_c,
        solver: SolverOptions {
            initial_step: c.initial_step,
            ..SolverOptions::default()
        },
    };
    Ok(MhoVdpObserver {
        inner: OnlineObserver::new(VanDerPol::new(c.a), config, rate, StateVector::<3>::from(x_hat0)),
        estimate: None,
        cost: None,
    })
}

/// # Safety
/// `config` must be null or point to a valid config, `x_hat0` to 3 doubles,
/// `out` be valid for writes. Release with [`mho_vdp_observer_free`].
#[no_mangle]
pub unsafe extern "C" fn mho_vdp_observer_new(
    config: *const MhoVdpObserverConfig,
    x_hat0: *const f64,
    out: *mut *mut MhoVdpObserver,
) -> MhoStatus {
    guard(|| {
        let Some(c) = config.as_ref() else {
            return fail(MhoStatus::NullPointer, "config is null");
        };
        if x_hat0.is_null() || out.is_null() {
            return fail(MhoStatus::NullPointer, "x_hat0 or output pointer is null");
        }
        let x0 = [*x_hat0, *x_hat0.add(1), *x_hat0.add(2)];
        match build_observer(c, x0) {
            Ok(obs) => emit(out, Box::into_raw(Box::new(obs))),
            Err(e) => fail(MhoStatus::InvalidArgument, e),
        }
    })
}

/// Appends one sample (measured `y`, applied `u`), runs the cycle due at
/// that sample if any, and writes the state estimate for the sample into
/// `estimate` (3 doubles) unless it is null.
///
/// # Safety
/// `observer` must come from [`mho_vdp_observer_new`]; `estimate` must be
/// null or valid for 3 writes.
#[no_mangle]
pub unsafe extern "C" fn mho_vdp_observer_push(
    observer: *mut MhoVdpObserver,
    y: f64,
    u: f64,
    estimate: *mut f64,
) -> MhoStatus {
    guard(|| {
        let Some(obs) = observer.as_mut() else {
            return fail(MhoStatus::NullPointer, "observer is null");
        };
        if !(y.is_finite() && u.is_finite()) {
            return fail(MhoStatus::InvalidArgument, format!("non-finite sample y={y} u={u}"));
        }
        match obs.inner.push(OutputVector::<1>::new(y), u) {
            Ok(s) => {
                let x = [s.estimate[0], s.estimate[1], s.estimate[2]];
                obs.estimate = Some(x);
                obs.cost = s.cost;
                if !estimate.is_null() {
                    ptr::copy_nonoverlapping(x.as_ptr(), estimate, 3);
                }
                MhoStatus::Ok
            }
            Err(e) => fail(observer_status(&e), e.to_string()),
        }
    })
}

/// Estimate at the latest sample.
///
/// # Safety
/// As [`mho_vdp_observer_push`]; `out` must be valid for 3 writes.
#[no_mangle]
pub unsafe extern "C" fn mho_vdp_observer_estimate(observer: *const MhoVdpObserver, out: *mut f64) -> MhoStatus {
    guard(|| {
        let Some(obs) = observer.as_ref() else {
            return fail(MhoStatus::NullPointer, "observer is null");
        };
        if out.is_null() {
            return fail(MhoStatus::NullPointer, "output pointer is null");
        }
        match obs.estimate {
            Some(x) => {
                ptr::copy_nonoverlapping(x.as_ptr(), out, 3);
                MhoStatus::Ok
            }
            None => fail(MhoStatus::WindowUnderflow, "no sample pushed yet"),
        }
    })
}

/// Current iteration budget.
///
/// # Safety
/// As [`mho_vdp_observer_estimate`].
#[no_mangle]
pub unsafe extern "C" fn mho_vdp_observer_q(observer: *const MhoVdpObserver, out: *mut usize) -> MhoStatus {
    guard(|| match observer.as_ref() {
        Some(obs) => emit(out, obs.inner.observer().q()),
        None => fail(MhoStatus::NullPointer, "observer is null"),
    })
}

/// Cost held at the latest sample; `WINDOW_UNDERFLOW` before the first cycle.
///
/// # Safety
/// As [`mho_vdp_observer_estimate`].
#[no_mangle]
pub unsafe extern "C" fn mho_vdp_observer_cost(observer: *const MhoVdpObserver, out: *mut f64) -> MhoStatus {
    guard(|| match observer.as_ref() {
        Some(MhoVdpObserver { cost: Some(j), .. }) => emit(out, *j),
        Some(_) => fail(MhoStatus::WindowUnderflow, "no cost before the first full window"),
        None => fail(MhoStatus::NullPointer, "observer is null"),
    })
}

/// Releases the handle; null is ignored.
///
/// # Safety
/// `observer` must come from [`mho_vdp_observer_new`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn mho_vdp_observer_free(observer: *mut MhoVdpObserver) {
    if !observer.is_null() {
        drop(Box::from_raw(observer));
    }
}
