//! C ABI over the `rdi-msm` pipeline.
//!
//! Every fallible function returns an [`RdiStatus`]; on failure the message
//! is available from [`rdi_last_error`] on the same thread. Cohorts and Cox
//! fits are opaque handles released with their `_free` function.

use rdi_msm::covariates::{classify_exposure, derive, motox_score, ToxicitySet};
use rdi_msm::data::{apply_eligibility, read_patients, PeriodToxicity, Schema};
use rdi_msm::effects::{cate, fit_msm, rmst};
use rdi_msm::iptw::{stabilized_weights, Cohort, WeightSpec};
use rdi_msm::simulator::{simulate, SimConfig};
use rdi_msm::survival::{CoxFit, CoxOptions};
use rdi_msm::{Exposure, Period, StepSurvival, TieMethod};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RdiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Validation = 4,
    Numeric = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RdiSchema {
    Long = 0,
    Wide = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RdiTies {
    Breslow = 0,
    Efron = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RdiToxicitySet {
    General = 0,
    Rule = 1,
}

/// Eligible analysis cohort.
pub struct RdiCohort(Cohort);

/// Fitted marginal structural Cox model.
pub struct RdiCoxFit(CoxFit);

/// Number of marginal structural model coefficients.
pub const RDI_MSM_TERMS: usize = 5;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: RdiStatus, msg: impl Into<String>) -> RdiStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> RdiStatus) -> RdiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(RdiStatus::Panic, "internal panic"),
    }
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rdi_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Exposure strategy for a received dose intensity: 0 standard, 1 reduced,
/// 2 highly reduced.
///
/// # Safety
/// `out` must point to writable memory for one `uint8_t`.
#[no_mangle]
pub unsafe extern "C" fn rdi_classify_exposure(rdi: f64, out: *mut u8) -> RdiStatus {
    if out.is_null() {
        return fail(RdiStatus::NullPointer, "out is NULL");
    }
    if !rdi.is_finite() || rdi < 0.0 {
        return fail(RdiStatus::InvalidArgument, format!("RDI {rdi} must be finite and nonnegative"));
    }
    *out = classify_exposure(rdi) as u8;
    RdiStatus::Ok
}

/// MOTox score of eight CTCAE grades (0 to 4) ordered leucopenia,
/// thrombocytopenia, oral mucositis, ototoxicity, cardiotoxicity,
/// neurotoxicity, nausea/vomiting, infection.
///
/// # Safety
/// `grades` must point to 8 readable bytes and `out` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn rdi_motox_score(grades: *const u8, set: RdiToxicitySet, out: *mut f64) -> RdiStatus {
    if grades.is_null() || out.is_null() {
        return fail(RdiStatus::NullPointer, "grades or out is NULL");
    }
    let mut g = [0u8; 8];
    g.copy_from_slice(std::slice::from_raw_parts(grades, 8));
    if let Some(bad) = g.iter().find(|&&v| v > 4) {
        return fail(RdiStatus::InvalidArgument, format!("grade {bad} outside 0..=4"));
    }
    let set = match set {
        RdiToxicitySet::General => ToxicitySet::Gen,
        RdiToxicitySet::Rule => ToxicitySet::Rule,
    };
    *out = motox_score(&PeriodToxicity::new(Period::Pre, g), set);
    RdiStatus::Ok
}

unsafe fn store_cohort(cohort: Cohort, out: *mut *mut RdiCohort) -> RdiStatus {
    *out = Box::into_raw(Box::new(RdiCohort(cohort)));
    RdiStatus::Ok
}

/// Reads patient records, applies eligibility and derives covariates.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rdi_cohort_load(path: *const c_char, schema: RdiSchema, out: *mut *mut RdiCohort) -> RdiStatus {
    if path.is_null() || out.is_null() {
        return fail(RdiStatus::NullPointer, "path or out is NULL");
    }
    *out = ptr::null_mut();
    let Ok(path) = CStr::from_ptr(path).to_str() else {
        return fail(RdiStatus::InvalidArgument, "path is not UTF-8");
    };
    guard(|| {
        let schema = match schema {
            RdiSchema::Long => Schema::Long,
            RdiSchema::Wide => Schema::Wide,
        };
        let records = match read_patients(Path::new(path), schema) {
            Ok(r) => r,
            Err(e) => return fail(RdiStatus::Io, e.to_string()),
        };
        let eligible = apply_eligibility(records).eligible;
        let mut derived = Vec::with_capacity(eligible.len());
        for r in &eligible {
            match derive(r) {
                Ok(d) => derived.push(d),
                Err(e) => return fail(RdiStatus::Validation, e.to_string()),
            }
        }
        match Cohort::join(&eligible, &derived) {
            Ok(c) => store_cohort(c, out),
            Err(e) => fail(RdiStatus::Validation, e.to_string()),
        }
    })
}

/// Simulates an eligible cohort of `n` patients with the default simulator.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rdi_cohort_simulate(n: usize, seed: u64, out: *mut *mut RdiCohort) -> RdiStatus {
    if out.is_null() {
        return fail(RdiStatus::NullPointer, "out is NULL");
    }
    *out = ptr::null_mut();
    guard(|| {
        let cfg = SimConfig {
            n,
            seed,
            ..SimConfig::default()
        };
        let sim = match simulate(&cfg) {
            Ok(s) => s,
            Err(e) => return fail(RdiStatus::Validation, e.to_string()),
        };
        match Cohort::from_records(&sim.records) {
            Ok(c) => store_cohort(c, out),
            Err(e) => fail(RdiStatus::Validation, e.to_string()),
        }
    })
}

/// Number of patients in the cohort; 0 for NULL.
///
/// # Safety
/// `cohort` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rdi_cohort_len(cohort: *const RdiCohort) -> usize {
    cohort.as_ref().map_or(0, |c| c.0.len())
}

/// # Safety
/// `cohort` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rdi_cohort_free(cohort: *mut RdiCohort) {
    if !cohort.is_null() {
        drop(Box::from_raw(cohort));
    }
}

/// Stabilized weights under specification `spec` ("iptw1" to "iptw5"),
/// written to `out[0..len]`; `len` must equal the cohort size.
///
/// # Safety
/// `cohort` must be live, `spec` NUL-terminated and `out` writable for `len`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn rdi_stabilized_weights(
    cohort: *const RdiCohort,
    spec: *const c_char,
    out: *mut f64,
    len: usize,
) -> RdiStatus {
    let (Some(cohort), false, false) = (cohort.as_ref(), spec.is_null(), out.is_null()) else {
        return fail(RdiStatus::NullPointer, "cohort, spec or out is NULL");
    };
    if len != cohort.0.len() {
        return fail(RdiStatus::InvalidArgument, format!("len {len} != cohort size {}", cohort.0.len()));
    }
    let Ok(id) = CStr::from_ptr(spec).to_str() else {
        return fail(RdiStatus::InvalidArgument, "spec is not UTF-8");
    };
    guard(|| {
        let spec = match WeightSpec::by_id(id) {
            Ok(s) => s,
            Err(e) => return fail(RdiStatus::InvalidArgument, e.to_string()),
        };
        match stabilized_weights(&spec, &cohort.0, &Default::default()) {
            Ok(w) => {
                std::slice::from_raw_parts_mut(out, len).copy_from_slice(&w.weights);
                RdiStatus::Ok
            }
            Err(e) => fail(RdiStatus::Numeric, e.to_string()),
        }
    })
}

/// Fits the marginal structural Cox model. `weights` may be NULL for unit
/// weights; otherwise it holds `len` (= cohort size) positive values.
///
/// # Safety
/// `cohort` must be live, `weights` NULL or readable for `len` doubles and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rdi_cox_fit(
    cohort: *const RdiCohort,
    weights: *const f64,
    len: usize,
    ties: RdiTies,
    out: *mut *mut RdiCoxFit,
) -> RdiStatus {
    let (Some(cohort), false) = (cohort.as_ref(), out.is_null()) else {
        return fail(RdiStatus::NullPointer, "cohort or out is NULL");
    };
    *out = ptr::null_mut();
    let n = cohort.0.len();
    let w: Vec<f64> = if weights.is_null() {
        vec![1.0; n]
    } else {
        if len != n {
            return fail(RdiStatus::InvalidArgument, format!("len {len} != cohort size {n}"));
        }
        std::slice::from_raw_parts(weights, len).to_vec()
    };
    let opts = CoxOptions {
        ties: match ties {
            RdiTies::Breslow => TieMethod::Breslow,
            RdiTies::Efron => TieMethod::Efron,
        },
        ..CoxOptions::default()
    };
    guard(|| match fit_msm(&cohort.0, &w, &opts) {
        Ok(fit) => {
            *out = Box::into_raw(Box::new(RdiCoxFit(fit)));
            RdiStatus::Ok
        }
        Err(e) => fail(RdiStatus::Numeric, e.to_string()),
    })
}

unsafe fn copy_terms(fit: *const RdiCoxFit, out: *mut f64, len: usize, get: impl Fn(&CoxFit) -> Vec<f64>) -> RdiStatus {
    let (Some(fit), false) = (fit.as_ref(), out.is_null()) else {
        return fail(RdiStatus::NullPointer, "fit or out is NULL");
    };
    if len != RDI_MSM_TERMS {
        return fail(RdiStatus::InvalidArgument, format!("len must be {RDI_MSM_TERMS}"));
    }
    std::slice::from_raw_parts_mut(out, len).copy_from_slice(&get(&fit.0));
    RdiStatus::Ok
}

/// Coefficients for a1, a2, a1:V, a2:V and V.
///
/// # Safety
/// `fit` must be live and `out` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rdi_cox_coefficients(fit: *const RdiCoxFit, out: *mut f64, len: usize) -> RdiStatus {
    copy_terms(fit, out, len, |f| f.coefficients.clone())
}

/// Model-based standard errors, in coefficient order.
///
/// # Safety
/// `fit` must be live and `out` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rdi_cox_model_se(fit: *const RdiCoxFit, out: *mut f64, len: usize) -> RdiStatus {
    copy_terms(fit, out, len, CoxFit::model_se)
}

/// Robust sandwich standard errors, in coefficient order.
///
/// # Safety
/// `fit` must be live and `out` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rdi_cox_robust_se(fit: *const RdiCoxFit, out: *mut f64, len: usize) -> RdiStatus {
    copy_terms(fit, out, len, CoxFit::robust_se)
}

/// RMST difference at horizon `t` between strategy `a` (1 or 2) and the
/// standard strategy in stratum `v` (0 or 1).
///
/// # Safety
/// `fit` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rdi_cate(fit: *const RdiCoxFit, a: u8, v: u8, t: f64, out: *mut f64) -> RdiStatus {
    let (Some(fit), false) = (fit.as_ref(), out.is_null()) else {
        return fail(RdiStatus::NullPointer, "fit or out is NULL");
    };
    let Some(exposure) = Exposure::from_index(a as usize).filter(|&e| e != Exposure::Standard) else {
        return fail(RdiStatus::InvalidArgument, format!("a = {a} must be 1 or 2"));
    };
    if v > 1 || !(t.is_finite() && t > 0.0) {
        return fail(RdiStatus::InvalidArgument, "v must be 0 or 1 and t positive");
    }
    *out = cate(&fit.0, exposure, v, t);
    RdiStatus::Ok
}

/// Restricted mean of a right-continuous step survival curve up to `t`.
///
/// # Safety
/// `times` and `values` must be readable for `len` doubles, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rdi_rmst(times: *const f64, values: *const f64, len: usize, t: f64, out: *mut f64) -> RdiStatus {
    if out.is_null() || (len > 0 && (times.is_null() || values.is_null())) {
        return fail(RdiStatus::NullPointer, "times, values or out is NULL");
    }
    if !(t.is_finite() && t > 0.0) {
        return fail(RdiStatus::InvalidArgument, "t must be positive");
    }
    let (ts, vs) = if len == 0 {
        (Vec::new(), Vec::new())
    } else {
        (
            std::slice::from_raw_parts(times, len).to_vec(),
            std::slice::from_raw_parts(values, len).to_vec(),
        )
    };
    match StepSurvival::new(ts, vs) {
        Ok(curve) => {
            *out = rmst(&curve, t);
            RdiStatus::Ok
        }
        Err(e) => fail(RdiStatus::InvalidArgument, e.to_string()),
    }
}

/// # Safety
/// `fit` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rdi_cox_fit_free(fit: *mut RdiCoxFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}
