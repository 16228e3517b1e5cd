//! C ABI over the metastab core: opaque chain handles, status codes and a
//! per-thread last-error message.
//!
//! Sets are passed as arrays of zero-based state indices. Output buffers are
//! caller-allocated; their length is passed alongside and checked. Null
//! pointers are reported, never dereferenced.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;

use metastab::io::load_family;
use metastab::meta::{escape_rate, ResolvedValley};
use metastab::{
    capacity, equilibrium_potential, stationary_measure, trace_by_hitting, valley_depth, Chain, ChainSpec, Error,
    StateSet, StationaryMeasure,
};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetastabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    BufferTooSmall = 3,
    NotIrreducible = 4,
    NotReversible = 5,
    SolverFailure = 6,
    Panic = 7,
}

/// Opaque chain handle.
pub struct MetastabChain {
    chain: Chain,
    measure: OnceLock<Result<StationaryMeasure, Error>>,
}

impl MetastabChain {
    fn new(chain: Chain) -> Self {
        Self {
            chain,
            measure: OnceLock::new(),
        }
    }

    fn measure(&self) -> Result<&StationaryMeasure, Failure> {
        self.measure
            .get_or_init(|| stationary_measure(&self.chain))
            .as_ref()
            .map_err(|e| Failure::from(e.clone()))
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

struct Failure {
    status: MetastabStatus,
    message: String,
}

impl Failure {
    fn new(status: MetastabStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::NotIrreducible(_) | Error::ZeroHoldingRate(_) => MetastabStatus::NotIrreducible,
            Error::NotReversible(_) | Error::ModeMismatch(_) => MetastabStatus::NotReversible,
            Error::SolverFailure(_) | Error::UniformizationDepth(_) | Error::NonPositiveValue { .. } => {
                MetastabStatus::SolverFailure
            }
            _ => MetastabStatus::InvalidInput,
        };
        Failure::new(status, e.to_string())
    }
}

/// Runs `body`, mapping errors and panics to a status and the last-error slot.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> MetastabStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            MetastabStatus::Ok
        }
        Ok(Err(f)) => {
            set_last_error(&f.message);
            f.status
        }
        Err(_) => {
            set_last_error("internal panic");
            MetastabStatus::Panic
        }
    }
}

fn chain_ref<'a>(chain: *const MetastabChain) -> Result<&'a MetastabChain, Failure> {
    // SAFETY: non-null handles come from `metastab_chain_*` constructors.
    unsafe { chain.as_ref() }.ok_or_else(|| Failure::new(MetastabStatus::NullPointer, "chain handle is null"))
}

fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::new(MetastabStatus::NullPointer, format!("{what} is null")));
    }
    // SAFETY: the caller guarantees `len` readable elements at `ptr`.
    Ok(unsafe { std::slice::from_raw_parts(ptr, len) })
}

fn out_slice<'a>(ptr: *mut f64, len: usize, needed: usize) -> Result<&'a mut [f64], Failure> {
    if ptr.is_null() {
        return Err(Failure::new(MetastabStatus::NullPointer, "output buffer is null"));
    }
    if len < needed {
        return Err(Failure::new(
            MetastabStatus::BufferTooSmall,
            format!("output buffer holds {len} values, {needed} needed"),
        ));
    }
    // SAFETY: the caller guarantees `len` writable elements at `ptr`.
    Ok(unsafe { std::slice::from_raw_parts_mut(ptr, len) })
}

fn out_value<'a, T>(ptr: *mut T) -> Result<&'a mut T, Failure> {
    // SAFETY: the caller passes a valid, writable pointer or null.
    unsafe { ptr.as_mut() }.ok_or_else(|| Failure::new(MetastabStatus::NullPointer, "output pointer is null"))
}

fn state_set(chain: &Chain, ptr: *const usize, len: usize, what: &str) -> Result<StateSet, Failure> {
    let states = slice(ptr, len, what)?;
    if let Some(s) = states.iter().find(|&&s| s >= chain.len()) {
        return Err(Failure::new(
            MetastabStatus::InvalidInput,
            format!("{what} contains state {s}, chain has {}", chain.len()),
        ));
    }
    Ok(StateSet::new(states.iter().copied()))
}

fn publish(out: *mut *mut MetastabChain, chain: Chain) -> Result<(), Failure> {
    let slot = out_value(out)?;
    *slot = Box::into_raw(Box::new(MetastabChain::new(chain)));
    Ok(())
}

/// Builds an irreducible chain on states `0..n` from `m` edges
/// `from[k] -> to[k]` with rate `rates[k]`. On success `*out` owns a handle
/// to be released with `metastab_chain_free`.
///
/// # Safety
/// Pointer arguments are null or valid for their stated lengths; handles come from this library.
#[no_mangle]
pub unsafe extern "C" fn metastab_chain_new(
    n: usize,
    from: *const usize,
    to: *const usize,
    rates: *const f64,
    m: usize,
    out: *mut *mut MetastabChain,
) -> MetastabStatus {
    guard(|| {
        let from = slice(from, m, "from")?;
        let to = slice(to, m, "to")?;
        let rates = slice(rates, m, "rates")?;
        let mut spec = ChainSpec::new((0..n).map(|i| i.to_string()))?;
        for k in 0..m {
            spec.add_rate_by_index(from[k], to[k], rates[k])?;
        }
        publish(out, Chain::build(&spec)?)
    })
}

/// Builds the chain of a builtin family (or a TOML family file) at scale `n`.
///
/// # Safety
/// Pointer arguments are null or valid for their stated lengths; handles come from this library.
#[no_mangle]
pub unsafe extern "C" fn metastab_chain_from_family(
    name: *const c_char,
    n: f64,
    out: *mut *mut MetastabChain,
) -> MetastabStatus {
    guard(|| {
        if name.is_null() {
            return Err(Failure::new(MetastabStatus::NullPointer, "family name is null"));
        }
        // SAFETY: non-null, NUL-terminated per the contract.
        let name = unsafe { CStr::from_ptr(name) }
            .to_str()
            .map_err(|_| Failure::new(MetastabStatus::InvalidInput, "family name is not UTF-8"))?;
        let chain = load_family(name)?.family.chain(n)?;
        publish(out, chain)
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// Pointer arguments are null or valid for their stated lengths; handles come from this library.
#[no_mangle]
pub unsafe extern "C" fn metastab_chain_free(chain: *mut MetastabChain) {
    if !chain.is_null() {
        // SAFETY: the handle was created by `Box::into_raw` and is freed once.
        drop(unsafe { Box::from_raw(chain) });
    }
}

/// Number of states; 0 for a null handle.
///
/// # Safety
/// Pointer arguments are null or valid for their stated lengths; handles come from this library.
#[no_mangle]
pub unsafe extern "C" fn metastab_chain_len(chain: *const MetastabChain) -> usize {
    chain_ref(chain).map_or(0, |c| c.chain.len())
}

/// Writes the stationary probability vector into `out[0..n]`.
///
/// # Safety
/// Pointer arguments are null or valid for their stated lengths; handles come from this library.
#[no_mangle]
pub unsafe extern "C" fn metastab_stationary(chain: *const MetastabChain, out: *mut f64, len: usize) -> MetastabStatus {
    guard(|| {
        let c = chain_ref(chain)?;
        let mu = c.measure()?;
        out_slice(out, len, mu.mu.len())?[..mu.mu.len()].copy_from_slice(&mu.mu);
        Ok(())
    })
}

/// Writes 1 to `*out` if the stationary measure is reversible, else 0.
///
/// # Safety
/// Pointer arguments are null or valid for their stated lengths; handles come from this library.
#[no_mangle]
pub unsafe extern "C" fn metastab_is_reversible(chain: *const MetastabChain, out: *mut i32) -> MetastabStatus {
    guard(|| {
        let c = chain_ref(chain)?;
        *out_value(out)? = i32::from(c.measure()?.reversible);
        Ok(())
    })
}

/// Capacity between disjoint sets A and B (reversible chains).
///
/// # Safety
/// Pointer arguments are null or valid for their stated lengths; handles come from this library.
#[no_mangle]
pub unsafe extern "C" fn metastab_capacity(
    chain: *const MetastabChain,
    a: *const usize,
    a_len: usize,
    b: *const usize,
    b_len: usize,
    out: *mut f64,
) -> MetastabStatus {
    guard(|| {
        let c = chain_ref(chain)?;
        let sa = state_set(&c.chain, a, a_len, "A")?;
        let sb = state_set(&c.chain, b, b_len, "B")?;
        let report = capacity(&c.chain, c.measure()?, &sa, &sb)?;
        *out_value(out)? = report.cap;
        Ok(())
    })
}

/// Equilibrium potential `P_x[T_A < T_B]` into `out[0..n]`.
///
/// # Safety
/// Pointer arguments are null or valid for their stated lengths; handles come from this library.
#[no_mangle]
pub unsafe extern "C" fn metastab_equilibrium_potential(
    chain: *const MetastabChain,
    a: *const usize,
    a_len: usize,
    b: *const usize,
    b_len: usize,
    out: *mut f64,
    len: usize,
) -> MetastabStatus {
    guard(|| {
        let c = chain_ref(chain)?;
        let sa = state_set(&c.chain, a, a_len, "A")?;
        let sb = state_set(&c.chain, b, b_len, "B")?;
        let f = equilibrium_potential(&c.chain, c.measure()?, &sa, &sb)?;
        out_slice(out, len, f.len())?[..f.len()].copy_from_slice(&f);
        Ok(())
    })
}

/// Trace rates on F as a dense row-major `k x k` matrix, states of F in
/// increasing order with duplicates removed; zero diagonal.
///
/// # Safety
/// Pointer arguments are null or valid for their stated lengths; handles come from this library.
#[no_mangle]
pub unsafe extern "C" fn metastab_trace_rates(
    chain: *const MetastabChain,
    f: *const usize,
    f_len: usize,
    out: *mut f64,
    len: usize,
) -> MetastabStatus {
    guard(|| {
        let c = chain_ref(chain)?;
        let support = state_set(&c.chain, f, f_len, "F")?;
        let trace = trace_by_hitting(&c.chain, &support)?;
        let k = support.len();
        let buf = out_slice(out, len, k * k)?;
        for (i, x) in support.iter().enumerate() {
            for (j, y) in support.iter().enumerate() {
                buf[i * k + j] = if i == j { 0.0 } else { trace.rate(x, y) };
            }
        }
        Ok(())
    })
}

/// Depth of the valley (well, basin, attractor) and its escape rate.
///
/// # Safety
/// Pointer arguments are null or valid for their stated lengths; handles come from this library.
#[no_mangle]
pub unsafe extern "C" fn metastab_valley_depth(
    chain: *const MetastabChain,
    well: *const usize,
    well_len: usize,
    basin: *const usize,
    basin_len: usize,
    attractor: usize,
    depth: *mut f64,
    rate: *mut f64,
) -> MetastabStatus {
    guard(|| {
        let c = chain_ref(chain)?;
        let w = state_set(&c.chain, well, well_len, "well")?;
        let b = state_set(&c.chain, basin, basin_len, "basin")?;
        let v = ResolvedValley::new(c.chain.len(), w, b, attractor)?;
        let mu = c.measure()?;
        let d = valley_depth(&c.chain, mu, &v)?;
        let r = escape_rate(&c.chain, mu, &v)?;
        *out_value(depth)? = d;
        *out_value(rate)? = r;
        Ok(())
    })
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn metastab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, NUL-terminated and static.
#[no_mangle]
pub extern "C" fn metastab_version() -> *const c_char {
    static VERSION: OnceLock<CString> = OnceLock::new();
    VERSION
        .get_or_init(|| CString::new(metastab::VERSION).unwrap())
        .as_ptr()
}
