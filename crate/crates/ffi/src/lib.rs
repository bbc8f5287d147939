//! C interface to `cvbench`.
//!
//! Every function returns a [`CvStatus`]; results go through out-pointers.
//! Objects are opaque handles freed with their `*_free` function. After a
//! failure, `cv_last_error_message` describes it (per thread).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cvbench::bounds::{self, TaskSpec};
use cvbench::certifier::{self, CertificationReport, CertifyOptions, ExperimentDataset, Verdict};
use cvbench::fock::{average_fidelity_fock, FockAverageConfig};
use cvbench::gaussian::{self, GaussianChannel, GaussianState};
use cvbench::nalgebra::{Matrix2, Vector2};
use cvbench::num_complex::Complex64;
use cvbench::schemes::ChannelModel;
use cvbench::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    NotCompletelyPositive = 3,
    Csv = 4,
    Numerics = 5,
    Unsupported = 6,
    Io = 7,
    Panic = 8,
}

pub struct CvChannel {
    gaussian: GaussianChannel,
    model: Option<ChannelModel>,
}

pub struct CvState(GaussianState);

pub struct CvDataset(ExperimentDataset);

pub struct CvReport(CertificationReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Fail(CvStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Csv { .. } => CvStatus::Csv,
            Error::Convergence { .. } | Error::CutoffTooSmall { .. } => CvStatus::Numerics,
            Error::Unsupported(_) => CvStatus::Unsupported,
            Error::Io(_) => CvStatus::Io,
            _ => CvStatus::InvalidInput,
        };
        Fail(status, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CvStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CvStatus::Panic
        }
    }
}

fn null(name: &str) -> Fail {
    Fail(CvStatus::NullPointer, format!("{name} is null"))
}

unsafe fn as_ref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn write<T>(out: *mut T, value: T, name: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn read_str<'a>(s: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail(CvStatus::InvalidInput, format!("{name} is not UTF-8")))
}

unsafe fn read_array<const N: usize>(p: *const f64, name: &str) -> Result<[f64; N], Fail> {
    if p.is_null() {
        return Err(null(name));
    }
    let mut a = [0.0; N];
    ptr::copy_nonoverlapping(p, a.as_mut_ptr(), N);
    Ok(a)
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Best classical average fidelity for `n_copies` input copies.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv_classical_bound(eta: f64, lambda: f64, n_copies: u32, out: *mut f64) -> CvStatus {
    guard(|| {
        let task = TaskSpec::with_copies(eta, lambda, n_copies)?;
        write(out, bounds::classical_bound(&task), "out")
    })
}

/// Single-copy threshold on the mean quadrature variance.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv_quadrature_threshold(eta: f64, lambda: f64, out: *mut f64) -> CvStatus {
    guard(|| {
        let task = TaskSpec::new(eta, lambda)?;
        write(out, bounds::quadrature_threshold(&task)?, "out")
    })
}

/// Flat-prior fidelity of the quantum-limited amplifier, for `eta > 1`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv_quantum_amp_bound(eta: f64, out: *mut f64) -> CvStatus {
    guard(|| write(out, bounds::quantum_amp_bound(eta)?, "out"))
}

/// Parses a channel. JSON with a `"type"` key is a channel model, otherwise
/// a raw `{"K", "M", "disp"}` Gaussian channel.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv_channel_from_json(json: *const c_char, out: *mut *mut CvChannel) -> CvStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Fail(CvStatus::InvalidInput, format!("channel JSON: {e}")))?;
        let ch = if value.get("type").is_some() {
            let model = ChannelModel::from_json(text)?;
            CvChannel {
                gaussian: model.to_gaussian()?,
                model: Some(model),
            }
        } else {
            CvChannel {
                gaussian: GaussianChannel::from_json(text)?,
                model: None,
            }
        };
        write(out, boxed(ch), "out")
    })
}

/// Raw Gaussian channel from row-major 2x2 `k` and `m`; `disp` may be NULL.
///
/// # Safety
/// `k` and `m` must point to 4 doubles, `disp` to 2 or be NULL.
#[no_mangle]
pub unsafe extern "C" fn cv_channel_from_matrices(
    k: *const f64,
    m: *const f64,
    disp: *const f64,
    out: *mut *mut CvChannel,
) -> CvStatus {
    guard(|| {
        let k = read_array::<4>(k, "k")?;
        let m = read_array::<4>(m, "m")?;
        let mut ch = GaussianChannel::new(Matrix2::from_row_slice(&k), Matrix2::from_row_slice(&m));
        if !disp.is_null() {
            ch.disp = Vector2::from(read_array::<2>(disp, "disp")?);
        }
        if ![k.as_slice(), m.as_slice(), ch.disp.as_slice()]
            .concat()
            .iter()
            .all(|x| x.is_finite())
        {
            return Err(Fail(CvStatus::InvalidInput, "channel entries must be finite".into()));
        }
        write(
            out,
            boxed(CvChannel {
                gaussian: ch,
                model: None,
            }),
            "out",
        )
    })
}

/// Channel applying `first`, then `second`.
///
/// # Safety
/// Handles must be live; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv_channel_compose(
    second: *const CvChannel,
    first: *const CvChannel,
    out: *mut *mut CvChannel,
) -> CvStatus {
    guard(|| {
        let (s, f) = (as_ref(second, "second")?, as_ref(first, "first")?);
        let model = match (&s.model, &f.model) {
            (Some(b), Some(a)) => Some(ChannelModel::Compose {
                channels: vec![a.clone(), b.clone()],
            }),
            _ => None,
        };
        let gaussian = gaussian::compose(&s.gaussian, &f.gaussian);
        write(out, boxed(CvChannel { gaussian, model }), "out")
    })
}

/// # Safety
/// `ch` must be live; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv_channel_is_cp(ch: *const CvChannel, out: *mut bool) -> CvStatus {
    guard(|| {
        let ch = as_ref(ch, "channel")?;
        write(out, gaussian::is_cp_channel(&ch.gaussian)?, "out")
    })
}

fn require_cp(ch: &GaussianChannel) -> Result<(), Fail> {
    if gaussian::is_cp_channel(ch)? {
        Ok(())
    } else {
        Err(Fail(
            CvStatus::NotCompletelyPositive,
            "channel is not completely positive".into(),
        ))
    }
}

/// Closed-form average fidelity over the Gaussian ensemble.
///
/// # Safety
/// `ch` must be live; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv_channel_average_fidelity(
    ch: *const CvChannel,
    eta: f64,
    lambda: f64,
    out: *mut f64,
) -> CvStatus {
    guard(|| {
        let ch = as_ref(ch, "channel")?;
        require_cp(&ch.gaussian)?;
        write(
            out,
            gaussian::average_fidelity_gaussian(&ch.gaussian, eta, lambda)?,
            "out",
        )
    })
}

/// Average fidelity in the truncated Fock basis. Needs a channel model;
/// `cutoff` 0 selects the cutoff automatically. `error_estimate` may be NULL.
///
/// # Safety
/// `ch` must be live; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv_channel_average_fidelity_fock(
    ch: *const CvChannel,
    eta: f64,
    lambda: f64,
    cutoff: usize,
    out: *mut f64,
    error_estimate: *mut f64,
) -> CvStatus {
    guard(|| {
        let ch = as_ref(ch, "channel")?;
        let model = ch
            .model
            .as_ref()
            .ok_or_else(|| Fail(CvStatus::Unsupported, "the Fock engine needs a channel model".into()))?;
        let config = FockAverageConfig {
            radial: 8,
            angular: 8,
            check_radial: 12,
            check_angular: 8,
            cutoff: (cutoff > 0).then_some(cutoff),
            max_cutoff: 400,
            ..Default::default()
        };
        let avg = average_fidelity_fock(model.to_fock(40)?.as_ref(), eta, lambda, &config)?;
        if !error_estimate.is_null() {
            error_estimate.write(avg.error_estimate);
        }
        write(out, avg.value, "out")
    })
}

/// Channel as JSON; free the result with `cv_string_free`. NULL on failure.
///
/// # Safety
/// `ch` must be live.
#[no_mangle]
pub unsafe extern "C" fn cv_channel_to_json(ch: *const CvChannel) -> *mut c_char {
    let mut s = ptr::null_mut();
    let status = guard(|| {
        let ch = as_ref(ch, "channel")?;
        s = into_c_string(ch.gaussian.to_json());
        Ok(())
    });
    if status == CvStatus::Ok {
        s
    } else {
        ptr::null_mut()
    }
}

/// # Safety
/// `ch` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cv_channel_free(ch: *mut CvChannel) {
    if !ch.is_null() {
        drop(Box::from_raw(ch));
    }
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv_state_coherent(re: f64, im: f64, out: *mut *mut CvState) -> CvStatus {
    guard(|| {
        if !(re.is_finite() && im.is_finite()) {
            return Err(Fail(CvStatus::InvalidInput, "amplitude must be finite".into()));
        }
        write(
            out,
            boxed(CvState(GaussianState::coherent(Complex64::new(re, im)))),
            "out",
        )
    })
}

/// Gaussian state from mean `d` (2 doubles) and row-major covariance (4).
///
/// # Safety
/// Pointers must reference the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn cv_state_new(d: *const f64, gamma: *const f64, out: *mut *mut CvState) -> CvStatus {
    guard(|| {
        let d = Vector2::from(read_array::<2>(d, "d")?);
        let g = Matrix2::from_row_slice(&read_array::<4>(gamma, "gamma")?);
        write(out, boxed(CvState(GaussianState::new(d, g)?)), "out")
    })
}

/// # Safety
/// Handles must be live; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv_state_apply(
    ch: *const CvChannel,
    state: *const CvState,
    out: *mut *mut CvState,
) -> CvStatus {
    guard(|| {
        let ch = as_ref(ch, "channel")?;
        let st = as_ref(state, "state")?;
        require_cp(&ch.gaussian)?;
        write(
            out,
            boxed(CvState(gaussian::apply_channel(&ch.gaussian, &st.0)?)),
            "out",
        )
    })
}

/// Fidelity of the state with the coherent state `re + i im`.
///
/// # Safety
/// `state` must be live; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv_state_fidelity_to_coherent(
    state: *const CvState,
    re: f64,
    im: f64,
    out: *mut f64,
) -> CvStatus {
    guard(|| {
        let st = as_ref(state, "state")?;
        write(
            out,
            gaussian::fidelity_to_coherent(&st.0, Complex64::new(re, im)),
            "out",
        )
    })
}

/// Copies the mean (2 doubles) and row-major covariance (4 doubles).
///
/// # Safety
/// `state` must be live; `d` and `gamma` must hold 2 and 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn cv_state_moments(state: *const CvState, d: *mut f64, gamma: *mut f64) -> CvStatus {
    guard(|| {
        let st = as_ref(state, "state")?;
        if d.is_null() || gamma.is_null() {
            return Err(null("output buffer"));
        }
        ptr::copy_nonoverlapping(st.0.d.as_ptr(), d, 2);
        let g = st.0.gamma.transpose();
        ptr::copy_nonoverlapping(g.as_ptr(), gamma, 4);
        Ok(())
    })
}

/// # Safety
/// `state` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cv_state_free(state: *mut CvState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Dataset from CSV text (`alpha_re,alpha_im,quad_label,value`).
///
/// # Safety
/// `csv` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv_dataset_from_csv(csv: *const c_char, lambda: f64, out: *mut *mut CvDataset) -> CvStatus {
    guard(|| {
        let text = read_str(csv, "csv")?;
        let ds = ExperimentDataset::new(certifier::parse_csv(text.as_bytes())?, lambda)?;
        write(out, boxed(CvDataset(ds)), "out")
    })
}

/// Dataset from a CSV file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv_dataset_from_csv_file(
    path: *const c_char,
    lambda: f64,
    out: *mut *mut CvDataset,
) -> CvStatus {
    guard(|| {
        let path = read_str(path, "path")?;
        let file = std::fs::File::open(path).map_err(|e| Fail(CvStatus::Io, format!("{path}: {e}")))?;
        let ds = ExperimentDataset::new(certifier::parse_csv(file)?, lambda)?;
        write(out, boxed(CvDataset(ds)), "out")
    })
}

/// # Safety
/// `ds` must be live; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv_dataset_sample_count(ds: *const CvDataset, out: *mut usize) -> CvStatus {
    guard(|| write(out, as_ref(ds, "dataset")?.0.sample_count(), "out"))
}

/// # Safety
/// `ds` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cv_dataset_free(ds: *mut CvDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Variance-based certification. Pass NaN as `eta` to estimate the gain
/// from the data.
///
/// # Safety
/// `ds` must be live; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv_certify_variance(
    ds: *const CvDataset,
    eta: f64,
    lambda: f64,
    k: f64,
    bootstrap: usize,
    seed: u64,
    out: *mut *mut CvReport,
) -> CvStatus {
    guard(|| {
        let ds = as_ref(ds, "dataset")?;
        let options = CertifyOptions { k, bootstrap, seed };
        let eta = (!eta.is_nan()).then_some(eta);
        let report = certifier::certify_by_variance(&ds.0, eta, lambda, &options)?;
        write(out, boxed(CvReport(report)), "out")
    })
}

/// 1 for QUANTUM_DOMAIN, 0 for NOT_CERTIFIED.
///
/// # Safety
/// `r` must be live; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv_report_verdict(r: *const CvReport, out: *mut i32) -> CvStatus {
    guard(|| {
        let v = match as_ref(r, "report")?.0.verdict {
            Verdict::QuantumDomain => 1,
            Verdict::NotCertified => 0,
        };
        write(out, v, "out")
    })
}

/// Statistic minus bound, oriented so that positive favours the quantum domain.
///
/// # Safety
/// `r` must be live; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv_report_margin(r: *const CvReport, out: *mut f64) -> CvStatus {
    guard(|| write(out, as_ref(r, "report")?.0.margin, "out"))
}

/// Report as JSON; free with `cv_string_free`. NULL on failure.
///
/// # Safety
/// `r` must be live.
#[no_mangle]
pub unsafe extern "C" fn cv_report_to_json(r: *const CvReport) -> *mut c_char {
    let mut s = ptr::null_mut();
    let status = guard(|| {
        let r = as_ref(r, "report")?;
        let text = serde_json::to_string(&r.0).map_err(|e| Fail(CvStatus::InvalidInput, e.to_string()))?;
        s = into_c_string(text);
        Ok(())
    });
    if status == CvStatus::Ok {
        s
    } else {
        ptr::null_mut()
    }
}

/// # Safety
/// `r` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cv_report_free(r: *mut CvReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}
