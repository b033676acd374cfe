//! C ABI over `irsbim-core`.
//!
//! Every fallible function returns an [`IrsbimStatus`]; on failure the
//! message is available from [`irsbim_last_error`] on the same thread.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use irsbim_core::analysis::{self, BoundModel, PairwiseParams};
use irsbim_core::beampattern::{build_bank, PatternBank, PatternMode};
use irsbim_core::config::{link_for, GeometrySection, RunConfig};
use irsbim_core::geometry::validate_design;
use irsbim_core::mapping::{self, Constellation, Family, SchemeConfig};
use irsbim_core::specialfn;
use num_complex::Complex64;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrsbimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    Mapping = 4,
    Bank = 5,
    Config = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrsbimScheme {
    S1 = 1,
    S2 = 2,
    S3 = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrsbimFamily {
    Qam = 0,
    Psk = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrsbimBoundModel {
    Exact = 0,
    Published = 1,
}

/// Opaque modulation scheme.
pub struct IrsbimSchemeConfig(SchemeConfig);

/// Opaque pattern bank.
pub struct IrsbimBank(PatternBank);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).expect("nul bytes removed"));
}

fn fail(status: IrsbimStatus, msg: impl Into<String>) -> IrsbimStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> IrsbimStatus) -> IrsbimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == IrsbimStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(IrsbimStatus::Panic, "internal panic"),
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn irsbim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn irsbim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn scheme_config(scheme: IrsbimScheme, n2: usize, n_t: usize, n3: usize, family: IrsbimFamily, order: usize) -> Result<SchemeConfig, String> {
    let fam = match family {
        IrsbimFamily::Qam => Family::Qam,
        IrsbimFamily::Psk => Family::Psk,
    };
    let c = Constellation::new(fam, order).map_err(|e| e.to_string())?;
    let cfg = match scheme {
        IrsbimScheme::S1 => SchemeConfig::s1(n2, c),
        IrsbimScheme::S2 => SchemeConfig::s2(n2, n_t, c),
        IrsbimScheme::S3 => SchemeConfig::s3(n2, n3, c),
    };
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

/// Creates a scheme. `n_t` is used by S2 only, `n3` by S3 only.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn irsbim_scheme_new(
    scheme: IrsbimScheme,
    n2: usize,
    n_t: usize,
    n3: usize,
    family: IrsbimFamily,
    order: usize,
    out: *mut *mut IrsbimSchemeConfig,
) -> IrsbimStatus {
    guard(|| {
        if out.is_null() {
            return fail(IrsbimStatus::NullPointer, "out is null");
        }
        let (n_t, n3) = match scheme {
            IrsbimScheme::S1 => (1, 1),
            IrsbimScheme::S2 => (n_t, 1),
            IrsbimScheme::S3 => (1, n3),
        };
        match scheme_config(scheme, n2, n_t, n3, family, order) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(IrsbimSchemeConfig(cfg)));
                IrsbimStatus::Ok
            }
            Err(e) => fail(IrsbimStatus::InvalidArgument, e),
        }
    })
}

/// # Safety
/// `handle` must come from [`irsbim_scheme_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn irsbim_scheme_free(handle: *mut IrsbimSchemeConfig) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Bits per channel use of a scheme.
///
/// # Safety
/// `handle` must be a live scheme handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn irsbim_bpcu(handle: *const IrsbimSchemeConfig, out: *mut u32) -> IrsbimStatus {
    guard(|| {
        if handle.is_null() || out.is_null() {
            return fail(IrsbimStatus::NullPointer, "null argument");
        }
        *out = mapping::bpcu(&(*handle).0);
        IrsbimStatus::Ok
    })
}

/// Maps `n_bits` bits (each 0 or 1) to an index set and a symbol index.
/// `index_set` receives `n_t` entries; `set_cap` is its capacity.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn irsbim_encode(
    handle: *const IrsbimSchemeConfig,
    bits: *const u8,
    n_bits: usize,
    index_set: *mut usize,
    set_cap: usize,
    set_len: *mut usize,
    symbol_idx: *mut usize,
) -> IrsbimStatus {
    guard(|| {
        if handle.is_null() || bits.is_null() || index_set.is_null() || set_len.is_null() || symbol_idx.is_null() {
            return fail(IrsbimStatus::NullPointer, "null argument");
        }
        let cfg = &(*handle).0;
        let cw = match mapping::encode(std::slice::from_raw_parts(bits, n_bits), cfg) {
            Ok(cw) => cw,
            Err(e) => return fail(IrsbimStatus::Mapping, e.to_string()),
        };
        *set_len = cw.index_set.len();
        if cw.index_set.len() > set_cap {
            return fail(IrsbimStatus::BufferTooSmall, format!("index set needs {} entries", cw.index_set.len()));
        }
        ptr::copy_nonoverlapping(cw.index_set.as_ptr(), index_set, cw.index_set.len());
        *symbol_idx = cw.symbol_idx;
        IrsbimStatus::Ok
    })
}

/// Inverse of [`irsbim_encode`]. `bits` receives `bpcu` entries.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn irsbim_decode(
    handle: *const IrsbimSchemeConfig,
    index_set: *const usize,
    set_len: usize,
    symbol_idx: usize,
    bits: *mut u8,
    bits_cap: usize,
    bits_len: *mut usize,
) -> IrsbimStatus {
    guard(|| {
        if handle.is_null() || index_set.is_null() || bits.is_null() || bits_len.is_null() {
            return fail(IrsbimStatus::NullPointer, "null argument");
        }
        let cfg = &(*handle).0;
        let set = std::slice::from_raw_parts(index_set, set_len);
        let out = match mapping::label_bits(set, symbol_idx, cfg) {
            Ok(b) => b,
            Err(e) => return fail(IrsbimStatus::Mapping, e.to_string()),
        };
        *bits_len = out.len();
        if out.len() > bits_cap {
            return fail(IrsbimStatus::BufferTooSmall, format!("needs {} bits", out.len()));
        }
        ptr::copy_nonoverlapping(out.as_ptr(), bits, out.len());
        IrsbimStatus::Ok
    })
}

/// Pattern bank on the default square layout sized for the scheme.
/// `ideal != 0` selects ideal beams instead of the physical array response.
///
/// # Safety
/// `handle` must be a live scheme handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn irsbim_bank_new(handle: *const IrsbimSchemeConfig, ideal: i32, out: *mut *mut IrsbimBank) -> IrsbimStatus {
    guard(|| {
        if handle.is_null() || out.is_null() {
            return fail(IrsbimStatus::NullPointer, "null argument");
        }
        let cfg = &(*handle).0;
        let link = match link_for(&GeometrySection::default(), cfg.scheme, cfg.n2, cfg.n3) {
            Ok(l) => l,
            Err(e) => return fail(IrsbimStatus::InvalidArgument, e.to_string()),
        };
        let mode = if ideal != 0 { PatternMode::Ideal } else { PatternMode::Physical };
        match build_bank(&link, cfg, mode) {
            Ok(b) => {
                *out = Box::into_raw(Box::new(IrsbimBank(b)));
                IrsbimStatus::Ok
            }
            Err(e) => fail(IrsbimStatus::Bank, e.to_string()),
        }
    })
}

/// # Safety
/// `handle` must come from [`irsbim_bank_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn irsbim_bank_free(handle: *mut IrsbimBank) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Number of patterns and their length.
///
/// # Safety
/// `handle` must be live; `omega` and `dim` writable.
#[no_mangle]
pub unsafe extern "C" fn irsbim_bank_shape(handle: *const IrsbimBank, omega: *mut usize, dim: *mut usize) -> IrsbimStatus {
    guard(|| {
        if handle.is_null() || omega.is_null() || dim.is_null() {
            return fail(IrsbimStatus::NullPointer, "null argument");
        }
        *omega = (*handle).0.omega();
        *dim = (*handle).0.dim();
        IrsbimStatus::Ok
    })
}

/// Copies pattern `p` into `re`/`im`, each of capacity `cap >= dim`.
///
/// # Safety
/// `re` and `im` must be writable for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn irsbim_bank_pattern(handle: *const IrsbimBank, p: usize, re: *mut f64, im: *mut f64, cap: usize) -> IrsbimStatus {
    guard(|| {
        if handle.is_null() || re.is_null() || im.is_null() {
            return fail(IrsbimStatus::NullPointer, "null argument");
        }
        let bank = &(*handle).0;
        if p >= bank.omega() {
            return fail(IrsbimStatus::InvalidArgument, format!("pattern {p} out of range (omega {})", bank.omega()));
        }
        if cap < bank.dim() {
            return fail(IrsbimStatus::BufferTooSmall, format!("needs {} entries", bank.dim()));
        }
        for (n, z) in bank.pattern(p).into_iter().enumerate() {
            *re.add(n) = z.re;
            *im.add(n) = z.im;
        }
        IrsbimStatus::Ok
    })
}

/// Gaussian tail probability.
#[no_mangle]
pub extern "C" fn irsbim_q_function(x: f64) -> f64 {
    specialfn::q_function(x)
}

/// `Pr{r_j > r_i}` for SNR-like parameter `beta1` and `n_r` receivers.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irsbim_prob_ji(beta1: f64, n_r: usize, out: *mut f64) -> IrsbimStatus {
    guard(|| {
        if out.is_null() {
            return fail(IrsbimStatus::NullPointer, "out is null");
        }
        if !(beta1 >= 0.0) || n_r == 0 {
            return fail(IrsbimStatus::InvalidArgument, "need beta1 >= 0 and n_r >= 1");
        }
        *out = analysis::prob_ji(beta1, n_r);
        IrsbimStatus::Ok
    })
}

/// `Pr{r_j > r_k}` from the sign-carrying `q_r` and `beta2`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irsbim_prob_jk(q_r: f64, beta2: f64, n_r: usize, model: IrsbimBoundModel, out: *mut f64) -> IrsbimStatus {
    guard(|| {
        if out.is_null() {
            return fail(IrsbimStatus::NullPointer, "out is null");
        }
        if !(beta2 >= 0.0) || !q_r.is_finite() || n_r == 0 {
            return fail(IrsbimStatus::InvalidArgument, "need finite q_r, beta2 >= 0 and n_r >= 1");
        }
        let params = PairwiseParams {
            beta1: 0.0,
            q: Complex64::new(q_r, 0.0),
            q_r,
            sigma_z1_sq: 0.0,
            sigma_z2_sq: 0.0,
            sigma_kappa_sq: 0.0,
            v: None,
            beta2,
        };
        let m = match model {
            IrsbimBoundModel::Exact => BoundModel::Exact,
            IrsbimBoundModel::Published => BoundModel::Published,
        };
        *out = analysis::prob_jk(&params, n_r, m);
        IrsbimStatus::Ok
    })
}

/// Parses a TOML run configuration and counts failed layout rules over all
/// series. Parse errors return [`IrsbimStatus::Config`].
///
/// # Safety
/// `toml` must be a NUL-terminated UTF-8 string and `failures` writable.
#[no_mangle]
pub unsafe extern "C" fn irsbim_validate_config(toml: *const c_char, failures: *mut u32) -> IrsbimStatus {
    guard(|| {
        if toml.is_null() || failures.is_null() {
            return fail(IrsbimStatus::NullPointer, "null argument");
        }
        let text = match CStr::from_ptr(toml).to_str() {
            Ok(t) => t,
            Err(_) => return fail(IrsbimStatus::InvalidArgument, "config is not UTF-8"),
        };
        let series = match RunConfig::from_toml(text).and_then(|c| c.resolve()) {
            Ok(s) => s,
            Err(e) => return fail(IrsbimStatus::Config, e.to_string()),
        };
        *failures = series
            .iter()
            .flat_map(|s| validate_design(&s.trial.link))
            .filter(|r| r.is_failure())
            .count() as u32;
        IrsbimStatus::Ok
    })
}
