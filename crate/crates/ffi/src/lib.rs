//! C ABI for privrank.
//!
//! Every fallible function returns a [`PrivrankStatus`] and writes its result
//! through an out-pointer. On failure `privrank_last_error` describes the
//! problem. Handles are opaque and must be released with the matching
//! `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use privrank::dataset::{self, Mechanism, PairwiseDataset};
use privrank::estimator::{self, default_lambda, EstimatorConfig};
use privrank::{extensions, metrics, ComparisonModel, Error, PrivacyProfile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrivrankStatus {
    Ok = 0,
    InvalidInput = 1,
    NotConverged = 2,
    MissingData = 3,
    Io = 4,
    NullPointer = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrivrankModel {
    Btl = 0,
    Tm = 1,
    /// Laplace threshold model; pair with a positive scale.
    Dt = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrivrankMechanism {
    ClassicRr = 0,
    Adrr = 1,
    Laplace = 2,
}

/// Comparison records plus an optional privacy profile.
pub struct PrivrankDataset(PairwiseDataset);

/// Per-user privacy budgets.
pub struct PrivrankProfile(PrivacyProfile);

/// Fitted item scores and optimizer diagnostics.
pub struct PrivrankEstimate(estimator::Estimate);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(err: &Error) -> PrivrankStatus {
    match err {
        Error::Io(_) | Error::Csv(_) => PrivrankStatus::Io,
        Error::Candidate { source, .. } => status_of(source),
        other => match other.exit_code() {
            2 => PrivrankStatus::NotConverged,
            3 => PrivrankStatus::MissingData,
            _ => PrivrankStatus::InvalidInput,
        },
    }
}

struct Fail(PrivrankStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(PrivrankStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any error and converts panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PrivrankStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PrivrankStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PrivrankStatus::Panic
        }
    }
}

fn model_of(model: PrivrankModel, scale: f64) -> Result<ComparisonModel, Fail> {
    Ok(match model {
        PrivrankModel::Btl => ComparisonModel::Btl,
        PrivrankModel::Tm => ComparisonModel::Tm,
        PrivrankModel::Dt => ComparisonModel::dt(scale)?,
    })
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn ref_arg<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Fail> {
    ptr.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn path_arg(path: *const c_char) -> Result<String, Fail> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Fail(PrivrankStatus::InvalidInput, "path is not valid UTF-8".into()))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next privrank call on the same thread.
#[no_mangle]
pub extern "C" fn privrank_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn privrank_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `F(x)` for the chosen model. `scale` is only read for `Dt`.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn privrank_model_cdf(model: PrivrankModel, scale: f64, x: f64, out: *mut f64) -> PrivrankStatus {
    guard(|| {
        let v = model_of(model, scale)?.cdf(x)?;
        write_out(out, v, "out")
    })
}

/// `g(x) = f(x) / F(x)` for the chosen model.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn privrank_model_g(model: PrivrankModel, scale: f64, x: f64, out: *mut f64) -> PrivrankStatus {
    guard(|| {
        let v = model_of(model, scale)?.g(x)?;
        write_out(out, v, "out")
    })
}

/// # Safety
/// `epsilons` must point to `users` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn privrank_profile_new(
    epsilons: *const f64,
    users: usize,
    out: *mut *mut PrivrankProfile,
) -> PrivrankStatus {
    guard(|| {
        let eps = slice_arg(epsilons, users, "epsilons")?;
        let profile = PrivacyProfile::new(eps.to_vec())?;
        write_out(out, Box::into_raw(Box::new(PrivrankProfile(profile))), "out")
    })
}

/// Reads a `user,epsilon` CSV.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn privrank_profile_load_csv(path: *const c_char, out: *mut *mut PrivrankProfile) -> PrivrankStatus {
    guard(|| {
        let profile = PrivacyProfile::read_csv(path_arg(path)?)?;
        write_out(out, Box::into_raw(Box::new(PrivrankProfile(profile))), "out")
    })
}

/// Average retained information `B = mean(tanh(eps / 2)^2)`.
///
/// # Safety
/// `profile` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn privrank_profile_b(profile: *const PrivrankProfile, out: *mut f64) -> PrivrankStatus {
    guard(|| {
        let p = ref_arg(profile, "profile")?;
        write_out(out, p.0.b(), "out")
    })
}

/// # Safety
/// `profile` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn privrank_profile_free(profile: *mut PrivrankProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// Samples raw comparisons for `users` users over `items` items with scores `theta`.
///
/// # Safety
/// `theta` must point to `items` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn privrank_dataset_generate(
    theta: *const f64,
    items: usize,
    model: PrivrankModel,
    scale: f64,
    users: usize,
    p: f64,
    seed: u64,
    out: *mut *mut PrivrankDataset,
) -> PrivrankStatus {
    guard(|| {
        let theta = slice_arg(theta, items, "theta")?;
        let model = model_of(model, scale)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = dataset::generate(theta, &model, users, p, &mut rng)?;
        write_out(out, Box::into_raw(Box::new(PrivrankDataset(data))), "out")
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn privrank_dataset_load_csv(path: *const c_char, out: *mut *mut PrivrankDataset) -> PrivrankStatus {
    guard(|| {
        let data = PairwiseDataset::load_csv(path_arg(path)?)?;
        write_out(out, Box::into_raw(Box::new(PrivrankDataset(data))), "out")
    })
}

/// # Safety
/// `dataset` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn privrank_dataset_write_csv(dataset: *const PrivrankDataset, path: *const c_char) -> PrivrankStatus {
    guard(|| {
        let d = ref_arg(dataset, "dataset")?;
        d.0.write_csv(path_arg(path)?)?;
        Ok(())
    })
}

/// Attaches budgets to a dataset, as needed to fit data loaded from CSV.
///
/// # Safety
/// Both handles must be live.
#[no_mangle]
pub unsafe extern "C" fn privrank_dataset_set_profile(
    dataset: *mut PrivrankDataset,
    profile: *const PrivrankProfile,
) -> PrivrankStatus {
    guard(|| {
        let d = dataset.as_mut().ok_or_else(|| null("dataset"))?;
        let p = ref_arg(profile, "profile")?;
        let updated = d.0.clone().with_profile(p.0.clone())?;
        d.0 = updated;
        Ok(())
    })
}

/// Writes the record, item and user counts; any out-pointer may be null.
///
/// # Safety
/// `dataset` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn privrank_dataset_shape(
    dataset: *const PrivrankDataset,
    records: *mut usize,
    items: *mut usize,
    users: *mut usize,
) -> PrivrankStatus {
    guard(|| {
        let d = ref_arg(dataset, "dataset")?;
        for (ptr, v) in [(records, d.0.len()), (items, d.0.items()), (users, d.0.users())] {
            if !ptr.is_null() {
                ptr.write(v);
            }
        }
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn privrank_dataset_free(dataset: *mut PrivrankDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Applies a local mechanism to a raw dataset. The result carries the profile.
///
/// # Safety
/// `raw` and `profile` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn privrank_privatize(
    raw: *const PrivrankDataset,
    profile: *const PrivrankProfile,
    mechanism: PrivrankMechanism,
    seed: u64,
    out: *mut *mut PrivrankDataset,
) -> PrivrankStatus {
    guard(|| {
        let raw = ref_arg(raw, "raw")?;
        let profile = ref_arg(profile, "profile")?;
        let mechanism = match mechanism {
            PrivrankMechanism::ClassicRr => Mechanism::ClassicRr,
            PrivrankMechanism::Adrr => Mechanism::Adrr,
            PrivrankMechanism::Laplace => Mechanism::Laplace,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = dataset::privatize(&raw.0, &profile.0, mechanism, &mut rng)?;
        write_out(out, Box::into_raw(Box::new(PrivrankDataset(data))), "out")
    })
}

/// Fits item scores. A negative `lambda` selects the default `1 / (L * B)`.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn privrank_fit(
    dataset: *const PrivrankDataset,
    model: PrivrankModel,
    scale: f64,
    lambda: f64,
    out: *mut *mut PrivrankEstimate,
) -> PrivrankStatus {
    guard(|| {
        let d = ref_arg(dataset, "dataset")?;
        let model = model_of(model, scale)?;
        let lambda = if lambda < 0.0 {
            let plain;
            let profile = match d.0.profile() {
                Some(p) => p,
                None => {
                    plain = PrivacyProfile::uniform(d.0.users(), privrank::NO_PRIVACY)?;
                    &plain
                }
            };
            default_lambda(profile, 1.0)?
        } else {
            lambda
        };
        let est = estimator::fit(&d.0, &model, &EstimatorConfig::with_lambda(lambda))?;
        write_out(out, Box::into_raw(Box::new(PrivrankEstimate(est))), "out")
    })
}

/// Number of items in an estimate.
///
/// # Safety
/// `estimate` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn privrank_estimate_items(estimate: *const PrivrankEstimate) -> usize {
    estimate.as_ref().map_or(0, |e| e.0.theta_hat.len())
}

/// Copies the fitted scores into `buf`, which must hold `len` = item count doubles.
///
/// # Safety
/// `estimate` must be a live handle; `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn privrank_estimate_theta(
    estimate: *const PrivrankEstimate,
    buf: *mut f64,
    len: usize,
) -> PrivrankStatus {
    guard(|| {
        let e = ref_arg(estimate, "estimate")?;
        let theta = &e.0.theta_hat;
        if len != theta.len() {
            return Err(Fail(
                PrivrankStatus::InvalidInput,
                format!("buffer holds {len} values, estimate has {}", theta.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        slice::from_raw_parts_mut(buf, len).copy_from_slice(theta);
        Ok(())
    })
}

/// Iteration count and final gradient inf-norm; either out-pointer may be null.
///
/// # Safety
/// `estimate` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn privrank_estimate_diagnostics(
    estimate: *const PrivrankEstimate,
    iterations: *mut usize,
    grad_norm: *mut f64,
) -> PrivrankStatus {
    guard(|| {
        let e = ref_arg(estimate, "estimate")?;
        if !iterations.is_null() {
            iterations.write(e.0.iterations);
        }
        if !grad_norm.is_null() {
            grad_norm.write(e.0.final_grad_norm);
        }
        Ok(())
    })
}

/// # Safety
/// `estimate` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn privrank_estimate_free(estimate: *mut PrivrankEstimate) {
    if !estimate.is_null() {
        drop(Box::from_raw(estimate));
    }
}

/// Normalized Kendall distance between the rankings induced by two score vectors.
///
/// # Safety
/// `a` and `b` must each point to `m` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn privrank_kendall(a: *const f64, b: *const f64, m: usize, out: *mut f64) -> PrivrankStatus {
    guard(|| {
        let v = metrics::kendall(slice_arg(a, m, "a")?, slice_arg(b, m, "b")?)?;
        write_out(out, v, "out")
    })
}

/// Normalized Spearman footrule.
///
/// # Safety
/// `a` and `b` must each point to `m` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn privrank_footrule(a: *const f64, b: *const f64, m: usize, out: *mut f64) -> PrivrankStatus {
    guard(|| {
        let v = metrics::spearman_footrule(slice_arg(a, m, "a")?, slice_arg(b, m, "b")?)?;
        write_out(out, v, "out")
    })
}

/// Normalized top-`k` Hamming error of `estimate` against `truth`.
///
/// # Safety
/// `estimate` and `truth` must each point to `m` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn privrank_topk_hamming(
    estimate: *const f64,
    truth: *const f64,
    m: usize,
    k: usize,
    out: *mut f64,
) -> PrivrankStatus {
    guard(|| {
        let v = metrics::topk_hamming(slice_arg(estimate, m, "estimate")?, slice_arg(truth, m, "truth")?, k)?;
        write_out(out, v, "out")
    })
}

/// `G = sum tanh(eps / 2)^2` and whether it exceeds `alpha`.
///
/// # Safety
/// `epsilons` must point to `users` doubles; both out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn privrank_budget_check(
    epsilons: *const f64,
    users: usize,
    alpha: f64,
    g: *mut f64,
    sufficient: *mut bool,
) -> PrivrankStatus {
    guard(|| {
        let (total, ok) = extensions::budget_check(slice_arg(epsilons, users, "epsilons")?, alpha)?;
        write_out(g, total, "g")?;
        write_out(sufficient, ok, "sufficient")
    })
}
