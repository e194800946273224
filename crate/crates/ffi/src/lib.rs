//! C interface to `mabmech`.
//!
//! Every function returns a [`MabStatus`]. On failure the message is kept
//! per thread and can be fetched with [`mab_last_error_message`].
//! Handles are opaque and must be released with the matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use mabmech::mechanisms::{myerson_payment, psim_price_closed_form, Mechanism, PsimParams, RuleKind};
use mabmech::verify::{run_named_checks, CheckKind, NamedBudget};
use mabmech::{Error, Realization};

/// Status codes; the first four match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MabStatus {
    Ok = 0,
    Violation = 1,
    Config = 2,
    Budget = 3,
    NullPointer = 4,
    NonDeterministic = 5,
    Panic = 6,
}

/// Checks accepted by [`mab_check`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MabCheck {
    Pointwise = 0,
    Expsep = 1,
    Weaksep = 2,
    Truthful = 3,
    Normalized = 4,
}

impl From<MabCheck> for CheckKind {
    fn from(c: MabCheck) -> Self {
        match c {
            MabCheck::Pointwise => CheckKind::Pointwise,
            MabCheck::Expsep => CheckKind::Expsep,
            MabCheck::Weaksep => CheckKind::Weaksep,
            MabCheck::Truthful => CheckKind::Truthful,
            MabCheck::Normalized => CheckKind::Normalized,
        }
    }
}

/// A named rule with its payment scheme, fixed `k` and `T`.
pub struct MabMechanism {
    kind: RuleKind,
    agents: usize,
    horizon: usize,
    v_max: f64,
    mech: Box<dyn Mechanism<f64>>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> MabStatus {
    match err {
        Error::Budget { .. } | Error::TooManyBreakpoints { .. } => MabStatus::Budget,
        Error::NonDeterministic => MabStatus::NonDeterministic,
        Error::Consistency(_) => MabStatus::Violation,
        _ => MabStatus::Config,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<MabStatus, Fail>) -> MabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            MabStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            MabStatus::Panic
        }
    }
}

unsafe fn slice_in<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a>(h: *mut MabMechanism) -> Result<&'a mut MabMechanism, Fail> {
    h.as_mut().ok_or(Fail::Null("mechanism handle"))
}

/// `k x T` realization from row-major bytes, nonzero meaning a click.
fn realization(agents: usize, horizon: usize, bits: &[u8]) -> Result<Realization, Fail> {
    Ok(Realization::new(agents, horizon, bits.iter().map(|&b| b != 0).collect())?)
}

/// Length in bytes of the last error message on this thread, without the
/// terminating NUL; 0 when there is none.
#[no_mangle]
pub extern "C" fn mab_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |c| c.as_bytes().len()))
}

/// Copies the last error message, NUL-terminated and truncated to fit, into
/// `buf`. Returns the number of bytes written excluding the NUL.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn mab_last_error_message(buf: *mut c_char, len: usize) -> usize {
    if buf.is_null() || len == 0 {
        return 0;
    }
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_ref().map_or(&[][..], |c| c.as_bytes());
        let n = bytes.len().min(len - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
        *buf.add(n) = 0;
        n
    })
}

/// Static version string.
#[no_mangle]
pub extern "C" fn mab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a mechanism for `rule` (`naive`, `ucb1`, `elimination`, `psim`).
///
/// # Safety
/// `rule` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mab_mechanism_new(
    rule: *const c_char,
    agents: usize,
    horizon: usize,
    v_max: f64,
    out: *mut *mut MabMechanism,
) -> MabStatus {
    guard(|| {
        if rule.is_null() {
            return Err(Fail::Null("rule"));
        }
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let name = CStr::from_ptr(rule).to_str().map_err(|_| Error::Config("rule name is not UTF-8".into()))?;
        let kind: RuleKind = name.parse()?;
        let mech = kind.mechanism(agents, horizon, v_max)?;
        *out = Box::into_raw(Box::new(MabMechanism { kind, agents, horizon, v_max, mech }));
        Ok(MabStatus::Ok)
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `h` must come from [`mab_mechanism_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mab_mechanism_free(h: *mut MabMechanism) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Runs the mechanism on a fixed realization.
///
/// `bids` has `k` entries, `clicks` `k * T` row-major bytes. Writes the
/// shown agent per round to `out_agents` (`T` entries), whether it was
/// clicked to `out_clicked` (`T` entries) and payments to `out_payments`
/// (`k` entries). Output pointers may be null to skip them.
///
/// # Safety
/// All non-null pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mab_mechanism_run(
    h: *mut MabMechanism,
    bids: *const f64,
    clicks: *const u8,
    seed: u64,
    out_agents: *mut usize,
    out_clicked: *mut u8,
    out_payments: *mut f64,
) -> MabStatus {
    guard(|| {
        let m = handle(h)?;
        let (k, t) = (m.agents, m.horizon);
        let bids = slice_in(bids, k, "bids")?;
        let rho = realization(k, t, slice_in(clicks, k * t, "clicks")?)?;
        let r = m.mech.run(bids, &rho, seed)?;
        if !out_agents.is_null() {
            for (o, rec) in slice_out(out_agents, t, "out_agents")?.iter_mut().zip(r.history.records()) {
                *o = rec.agent;
            }
        }
        if !out_clicked.is_null() {
            for (o, rec) in slice_out(out_clicked, t, "out_clicked")?.iter_mut().zip(r.history.records()) {
                *o = rec.click as u8;
            }
        }
        if !out_payments.is_null() {
            slice_out(out_payments, k, "out_payments")?.copy_from_slice(&r.payments);
        }
        Ok(MabStatus::Ok)
    })
}

/// Myerson payment of `agent` for the handle's allocation rule on a fixed
/// realization, with bisection tolerance `tol * b_agent` (`tol <= 0` picks
/// the default `1e-9`).
///
/// # Safety
/// `bids` must hold `k` values, `clicks` `k * T` bytes, `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn mab_myerson_payment(
    h: *mut MabMechanism,
    bids: *const f64,
    clicks: *const u8,
    agent: usize,
    tol: f64,
    out: *mut f64,
) -> MabStatus {
    guard(|| {
        let m = handle(h)?;
        let (k, t) = (m.agents, m.horizon);
        let bids = slice_in(bids, k, "bids")?;
        let out = out.as_mut().ok_or(Fail::Null("out"))?;
        let rho = realization(k, t, slice_in(clicks, k * t, "clicks")?)?;
        let b = *bids.get(agent).ok_or_else(|| Error::Config(format!("agent {agent} out of range for k={k}")))?;
        let mut rule = m.kind.build(k, t, m.v_max)?;
        *out = myerson_payment(&mut rule, bids, &rho, agent, (tol > 0.0).then(|| tol * b))?;
        Ok(MabStatus::Ok)
    })
}

/// PSim per-click price of `agent` given committed exploration clicks
/// per agent, with the default phase parameters for `(k, T, v_max)`.
///
/// # Safety
/// `bids` and `clicks` must hold `k` values and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn mab_psim_price(
    agents: usize,
    horizon: usize,
    v_max: f64,
    bids: *const f64,
    clicks: *const u64,
    agent: usize,
    out: *mut f64,
) -> MabStatus {
    guard(|| {
        let bids = slice_in(bids, agents, "bids")?;
        let clicks = slice_in(clicks, agents, "clicks")?;
        let out = out.as_mut().ok_or(Fail::Null("out"))?;
        if agent >= agents {
            return Err(Error::Config(format!("agent {agent} out of range for k={agents}")).into());
        }
        let params = PsimParams::new(agents, horizon, v_max)?;
        *out = psim_price_closed_form(&params, bids, clicks, agent);
        Ok(MabStatus::Ok)
    })
}

/// Exhaustive check of a named rule over all `2^(kT)` realizations and the
/// common grid `grid[0..grid_len]` for bids and values. Returns
/// [`MabStatus::Ok`] when the property holds, [`MabStatus::Violation`]
/// when it fails (the counterexample text is then the last error message)
/// and [`MabStatus::Budget`] when `k * T > max_kt`.
///
/// # Safety
/// `rule` must be NUL-terminated and `grid` valid for `grid_len` values.
#[no_mangle]
pub unsafe extern "C" fn mab_check(
    rule: *const c_char,
    agents: usize,
    horizon: usize,
    check: MabCheck,
    grid: *const f64,
    grid_len: usize,
    max_kt: usize,
) -> MabStatus {
    guard(|| {
        if rule.is_null() {
            return Err(Fail::Null("rule"));
        }
        let name = CStr::from_ptr(rule).to_str().map_err(|_| Error::Config("rule name is not UTF-8".into()))?;
        let kind: RuleKind = name.parse()?;
        let mut budget = NamedBudget::new(slice_in(grid, grid_len, "grid")?.to_vec());
        budget.max_kt = max_kt;
        let outcome = run_named_checks(kind, agents, horizon, &[check.into()], &budget)?.remove(0);
        match outcome.counterexample {
            None => Ok(MabStatus::Ok),
            Some(text) => {
                set_error(text);
                Ok(MabStatus::Violation)
            }
        }
    })
}
