//! C ABI over the core library. Netlists travel as opaque handles, strings
//! as malloc'd C strings released through [`af_string_free`], and every
//! fallible call returns an [`AfStatus`] with the detail message parked in
//! thread-local storage behind [`af_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::ptr;

use anaflow::evaluation::pass_at_k;
use anaflow::netlist::{canonicalize, parse_spice, recovery_score, serialize, NetlistIR};
use anaflow::reasoning::joint_pass_lower_bound;

/// Status codes returned by fallible calls. Anything other than `Ok`
/// leaves a message readable through [`af_last_error`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    DomainError = 4,
}

/// Opaque netlist handle. Create with [`af_netlist_parse`], release with
/// [`af_netlist_free`].
pub struct AfNetlist(NetlistIR);

/// Recovery comparison of a predicted netlist against a reference.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AfRecovery {
    pub exact_match: bool,
    pub component_accuracy: f64,
    pub edge_accuracy: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn fail(status: AfStatus, msg: impl Into<Vec<u8>>) -> AfStatus {
    let text = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
    status
}

fn ok() -> AfStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    AfStatus::Ok
}

/// Message for the most recent failure on this thread, or null after a
/// success. The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn af_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|s| s.as_ptr())
            .unwrap_or(ptr::null())
    })
}

/// Parse SPICE text into a netlist handle.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn af_netlist_parse(
    text: *const c_char,
    out: *mut *mut AfNetlist,
) -> AfStatus {
    if text.is_null() || out.is_null() {
        return fail(AfStatus::NullArgument, "text and out must be non-null");
    }
    let Ok(text) = CStr::from_ptr(text).to_str() else {
        return fail(AfStatus::InvalidUtf8, "netlist text is not valid UTF-8");
    };
    match parse_spice(text) {
        Ok(parsed) => {
            *out = Box::into_raw(Box::new(AfNetlist(parsed.ir)));
            ok()
        }
        Err(e) => fail(AfStatus::ParseError, e.to_string()),
    }
}

/// Release a netlist handle. Null is a no-op.
///
/// # Safety
/// `h` must come from [`af_netlist_parse`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn af_netlist_free(h: *mut AfNetlist) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of devices in the netlist; 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn af_netlist_device_count(h: *const AfNetlist) -> usize {
    h.as_ref().map(|n| n.0.devices.len()).unwrap_or(0)
}

/// Number of distinct nets in the netlist; 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn af_netlist_net_count(h: *const AfNetlist) -> usize {
    h.as_ref().map(|n| n.0.nets.len()).unwrap_or(0)
}

fn leak_string(s: String) -> *mut c_char {
    CString::new(s)
        .map(CString::into_raw)
        .unwrap_or(ptr::null_mut())
}

/// Serialize the netlist back to SPICE. Caller frees via
/// [`af_string_free`]; null for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn af_netlist_serialize(h: *const AfNetlist) -> *mut c_char {
    match h.as_ref() {
        Some(n) => leak_string(serialize(&n.0)),
        None => ptr::null_mut(),
    }
}

/// Canonical form of the netlist: equal strings mean isomorphic circuits.
/// Caller frees via [`af_string_free`]; null for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn af_netlist_canonical(h: *const AfNetlist) -> *mut c_char {
    match h.as_ref() {
        Some(n) => leak_string(canonicalize(&n.0).as_str().to_string()),
        None => ptr::null_mut(),
    }
}

/// Release a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn af_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Score `pred` against the reference `truth`.
///
/// # Safety
/// All pointers must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn af_recovery_score(
    pred: *const AfNetlist,
    truth: *const AfNetlist,
    out: *mut AfRecovery,
) -> AfStatus {
    let (Some(pred), Some(truth)) = (pred.as_ref(), truth.as_ref()) else {
        return fail(AfStatus::NullArgument, "pred and truth must be non-null");
    };
    if out.is_null() {
        return fail(AfStatus::NullArgument, "out must be non-null");
    }
    let report = recovery_score(&pred.0, &truth.0);
    *out = AfRecovery {
        exact_match: report.exact_match,
        component_accuracy: report.component_accuracy,
        edge_accuracy: report.edge_accuracy,
    };
    ok()
}

/// Unbiased pass@k estimate from `n` attempts with `c` successes.
/// Requires 0 <= c <= n and 1 <= k <= n.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn af_pass_at_k(n: usize, c: usize, k: usize, out: *mut f64) -> AfStatus {
    if out.is_null() {
        return fail(AfStatus::NullArgument, "out must be non-null");
    }
    match pass_at_k(n, c, k) {
        Ok(p) => {
            *out = p;
            ok()
        }
        Err(e) => fail(AfStatus::DomainError, e.to_string()),
    }
}

/// Lower bound on joint multi-branch success: 1 - prod(1 - p_b). Branch
/// probabilities outside [0, 1] are rejected.
///
/// # Safety
/// `probs` must point to `len` doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn af_joint_pass_lower_bound(
    probs: *const f64,
    len: usize,
    out: *mut f64,
) -> AfStatus {
    if out.is_null() || (probs.is_null() && len > 0) {
        return fail(AfStatus::NullArgument, "probs and out must be non-null");
    }
    let slice = if len == 0 {
        &[]
    } else {
        std::slice::from_raw_parts(probs, len)
    };
    if slice.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return fail(AfStatus::DomainError, "probabilities must lie in [0, 1]");
    }
    *out = joint_pass_lower_bound(slice);
    ok()
}
