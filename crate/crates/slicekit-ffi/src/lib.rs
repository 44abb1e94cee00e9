//! C ABI over the slicekit core: build or load models, benchmark them, parse
//! network profiles, and rank split points from any language with a C FFI.
//!
//! Conventions:
//! - Objects cross the boundary as opaque handles (`SlkModel`, `SlkRecords`,
//!   `SlkPlan`) that must be released with their `_free` function.
//! - Every fallible call returns an `SlkStatus`; `SLK_OK` is 0. The last
//!   error message for the calling thread is available via
//!   [`slk_last_error_message`].
//! - Strings are NUL-terminated UTF-8 owned by the caller.
//!
//! The installed header lives at `include/slicekit.h`; a test keeps it in
//! sync with the exported symbols.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::path::PathBuf;
use std::ptr;

use slicekit::bench::{benchmark_model, load_records, save_records, BenchmarkRun, ResourceProfile};
use slicekit::graph::{enumerate_split_points, load_model, make_synthetic_model, save_model, LayerGraph, SplitId};
use slicekit::netem::parse_profile;
use slicekit::planner::{rank, Constraints, NetworkProfile, RankedPlan, Variant, VariantFilter};
use slicekit::rng::Rng;
use slicekit::tensor::Tensor;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SlkStatus {
    SlkOk = 0,
    SlkNullPointer = 1,
    SlkInvalidUtf8 = 2,
    SlkParseError = 3,
    SlkShapeError = 4,
    SlkSplitError = 5,
    SlkIoError = 6,
    SlkBenchError = 7,
    SlkPlanError = 8,
    SlkIndexOutOfRange = 9,
    SlkInternal = 10,
}

/// Network profile by value: one-way latency and uplink bandwidth.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct SlkNetProfile {
    pub latency_ms: f64,
    pub upload_mbps: f64,
}

/// One split candidate of a model.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct SlkSplitInfo {
    /// Interior index, or -1 for full offload, -2 for local only.
    pub split: i32,
    pub tl_eligible: u8,
    pub channels: u32,
    pub height: u32,
    pub width: u32,
    pub output_bytes: u64,
}

/// One ranked cost row.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct SlkCostRow {
    /// Interior index, or -1 for full offload, -2 for local only.
    pub split: i32,
    /// 1 when the transfer layer is engaged.
    pub uses_tl: u8,
    pub device_us: u64,
    pub tl_us: u64,
    pub serial_us: u64,
    pub comm_us: u64,
    pub edge_us: u64,
    pub total_us: u64,
    /// Valid only when has_delta is 1.
    pub delta_t_us: i64,
    pub has_delta: u8,
}

/// Opaque model handle.
pub struct SlkModel(LayerGraph);
/// Opaque benchmark-records handle.
pub struct SlkRecords(BenchmarkRun);
/// Opaque ranked-plan handle.
pub struct SlkPlan(RankedPlan);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: SlkStatus, msg: impl Into<String>) -> SlkStatus {
    set_error(msg);
    status
}

fn split_to_i32(split: SplitId) -> i32 {
    match split {
        SplitId::Interior(i) => i as i32,
        SplitId::FullOffload => -1,
        SplitId::LocalOnly => -2,
    }
}

/// # Safety
/// `s` must be NULL or a NUL-terminated string.
unsafe fn cstr<'a>(s: *const c_char) -> Result<&'a str, SlkStatus> {
    if s.is_null() {
        set_error("null string argument");
        return Err(SlkStatus::SlkNullPointer);
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        SlkStatus::SlkInvalidUtf8
    })
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be NULL (to query the length).
#[no_mangle]
pub unsafe extern "C" fn slk_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn slk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Build a builtin model (`tiny-cnn-8`, `branchy-12`, `deep-20`) with
/// seed-deterministic weights. Returns NULL on error.
///
/// # Safety
/// `name` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn slk_model_builtin(name: *const c_char, seed: u64) -> *mut SlkModel {
    let name = match cstr(name) {
        Ok(s) => s,
        Err(_) => return ptr::null_mut(),
    };
    match make_synthetic_model(name, seed) {
        Ok(g) => Box::into_raw(Box::new(SlkModel(g))),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// Load a model file (with its weight companion when declared). Returns NULL
/// on error.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn slk_model_load(path: *const c_char) -> *mut SlkModel {
    let path = match cstr(path) {
        Ok(s) => s,
        Err(_) => return ptr::null_mut(),
    };
    match load_model(PathBuf::from(path)) {
        Ok(g) => Box::into_raw(Box::new(SlkModel(g))),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// Write a model (and weights) to `path`.
///
/// # Safety
/// `model` must be a live handle from this library; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn slk_model_save(model: *const SlkModel, path: *const c_char) -> SlkStatus {
    let Some(model) = model.as_ref() else {
        return fail(SlkStatus::SlkNullPointer, "null model");
    };
    let path = match cstr(path) {
        Ok(s) => s,
        Err(st) => return st,
    };
    match save_model(&model.0, PathBuf::from(path)) {
        Ok(()) => SlkStatus::SlkOk,
        Err(e) => fail(SlkStatus::SlkIoError, e.to_string()),
    }
}

/// Release a model handle. NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a live handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slk_model_free(model: *mut SlkModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of top-level units, or -1 on a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn slk_model_unit_count(model: *const SlkModel) -> i32 {
    match model.as_ref() {
        Some(m) => m.0.unit_count() as i32,
        None => {
            set_error("null model");
            -1
        }
    }
}

/// Number of split candidates (interiors plus the two sentinels), or -1 on
/// error.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn slk_model_split_count(model: *const SlkModel) -> i32 {
    let Some(m) = model.as_ref() else {
        set_error("null model");
        return -1;
    };
    match enumerate_split_points(&m.0) {
        Ok(points) => points.len() as i32,
        Err(e) => {
            set_error(e.to_string());
            -1
        }
    }
}

/// Fill `out` with the `index`-th split candidate.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slk_model_split_info(model: *const SlkModel, index: usize, out: *mut SlkSplitInfo) -> SlkStatus {
    let Some(m) = model.as_ref() else {
        return fail(SlkStatus::SlkNullPointer, "null model");
    };
    let Some(out) = out.as_mut() else {
        return fail(SlkStatus::SlkNullPointer, "null out pointer");
    };
    let points = match enumerate_split_points(&m.0) {
        Ok(p) => p,
        Err(e) => return fail(SlkStatus::SlkShapeError, e.to_string()),
    };
    let Some(p) = points.get(index) else {
        return fail(SlkStatus::SlkIndexOutOfRange, format!("split index {index} out of range"));
    };
    *out = SlkSplitInfo {
        split: split_to_i32(p.id),
        tl_eligible: p.tl_eligible as u8,
        channels: p.output_shape.channels as u32,
        height: p.output_shape.height as u32,
        width: p.output_shape.width as u32,
        output_bytes: p.output_bytes,
    };
    SlkStatus::SlkOk
}

/// Parse a profile spec (`30mbps/30ms`, `unlimited`) into `out`.
///
/// # Safety
/// `spec` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slk_profile_parse(spec: *const c_char, out: *mut SlkNetProfile) -> SlkStatus {
    let spec = match cstr(spec) {
        Ok(s) => s,
        Err(st) => return st,
    };
    let Some(out) = out.as_mut() else {
        return fail(SlkStatus::SlkNullPointer, "null out pointer");
    };
    match parse_profile(spec) {
        Ok(p) => {
            *out = SlkNetProfile { latency_ms: p.latency_ms, upload_mbps: p.upload_mbps };
            SlkStatus::SlkOk
        }
        Err(e) => fail(SlkStatus::SlkParseError, e.to_string()),
    }
}

/// Benchmark every split of `model` with a seed-deterministic input.
/// `reps` must be at least 20. Returns NULL on error.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn slk_benchmark(
    model: *const SlkModel,
    device_scale: f64,
    edge_scale: f64,
    reps: u32,
    seed: u64,
) -> *mut SlkRecords {
    let Some(m) = model.as_ref() else {
        set_error("null model");
        return ptr::null_mut();
    };
    let profiles = (ResourceProfile::new("device", device_scale), ResourceProfile::new("edge", edge_scale));
    let (device, edge) = match profiles {
        (Ok(d), Ok(e)) => (d, e),
        (Err(e), _) | (_, Err(e)) => {
            set_error(e.to_string());
            return ptr::null_mut();
        }
    };
    let mut rng = Rng::new(seed);
    let input = Tensor::random(m.0.input_shape, &mut rng);
    match benchmark_model(&m.0, &device, &edge, &input, reps) {
        Ok(run) => Box::into_raw(Box::new(SlkRecords(run))),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// Load a benchmark records file. Returns NULL on error.
///
/// # Safety
/// `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn slk_records_load(path: *const c_char) -> *mut SlkRecords {
    let path = match cstr(path) {
        Ok(s) => s,
        Err(_) => return ptr::null_mut(),
    };
    match load_records(PathBuf::from(path)) {
        Ok(run) => Box::into_raw(Box::new(SlkRecords(run))),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// Write records to `path`.
///
/// # Safety
/// `records` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn slk_records_save(records: *const SlkRecords, path: *const c_char) -> SlkStatus {
    let Some(r) = records.as_ref() else {
        return fail(SlkStatus::SlkNullPointer, "null records");
    };
    let path = match cstr(path) {
        Ok(s) => s,
        Err(st) => return st,
    };
    match save_records(&r.0, PathBuf::from(path)) {
        Ok(()) => SlkStatus::SlkOk,
        Err(e) => fail(SlkStatus::SlkIoError, e.to_string()),
    }
}

/// Number of records, or -1 on a NULL handle.
///
/// # Safety
/// `records` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn slk_records_len(records: *const SlkRecords) -> i32 {
    match records.as_ref() {
        Some(r) => r.0.records.len() as i32,
        None => {
            set_error("null records");
            -1
        }
    }
}

/// Release a records handle. NULL is ignored.
///
/// # Safety
/// `records` must be NULL or a live handle, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slk_records_free(records: *mut SlkRecords) {
    if !records.is_null() {
        drop(Box::from_raw(records));
    }
}

/// Rank split candidates under a profile. `variant`: 0 TL only, 1 plain
/// only, 2 both. `min_split` below 0 means unconstrained; `max_total_us` of
/// 0 means unconstrained. Returns NULL on error (including an infeasible
/// constraint set).
///
/// # Safety
/// `records` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn slk_plan_rank(
    records: *const SlkRecords,
    profile: SlkNetProfile,
    variant: u8,
    min_split: i32,
    max_total_us: u64,
) -> *mut SlkPlan {
    let Some(r) = records.as_ref() else {
        set_error("null records");
        return ptr::null_mut();
    };
    let net = match NetworkProfile::new(profile.latency_ms, profile.upload_mbps) {
        Ok(n) => n,
        Err(e) => {
            set_error(e.to_string());
            return ptr::null_mut();
        }
    };
    let variant = match variant {
        0 => VariantFilter::Tl,
        1 => VariantFilter::NoTl,
        2 => VariantFilter::Both,
        other => {
            set_error(format!("invalid variant selector {other}"));
            return ptr::null_mut();
        }
    };
    let constraints = Constraints {
        min_split_index: if min_split < 0 { None } else { Some(min_split as usize) },
        max_total_latency_us: if max_total_us == 0 { None } else { Some(max_total_us) },
        variant,
    };
    match rank(&r.0, &net, &constraints) {
        Ok(plan) => Box::into_raw(Box::new(SlkPlan(plan))),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// Number of ranked candidates, or -1 on a NULL handle.
///
/// # Safety
/// `plan` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn slk_plan_len(plan: *const SlkPlan) -> i32 {
    match plan.as_ref() {
        Some(p) => p.0.candidates.len() as i32,
        None => {
            set_error("null plan");
            -1
        }
    }
}

/// Fill `out` with the `index`-th candidate (0 is the chosen plan).
///
/// # Safety
/// `plan` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slk_plan_entry(plan: *const SlkPlan, index: usize, out: *mut SlkCostRow) -> SlkStatus {
    let Some(p) = plan.as_ref() else {
        return fail(SlkStatus::SlkNullPointer, "null plan");
    };
    let Some(out) = out.as_mut() else {
        return fail(SlkStatus::SlkNullPointer, "null out pointer");
    };
    let Some(bd) = p.0.candidates.get(index) else {
        return fail(SlkStatus::SlkIndexOutOfRange, format!("candidate index {index} out of range"));
    };
    *out = SlkCostRow {
        split: split_to_i32(bd.split),
        uses_tl: (bd.variant == Variant::Tl) as u8,
        device_us: bd.device_us,
        tl_us: bd.tl_us,
        serial_us: bd.serial_us,
        comm_us: bd.comm_us,
        edge_us: bd.edge_us,
        total_us: bd.total_us,
        delta_t_us: bd.delta_t_us.unwrap_or(0),
        has_delta: bd.delta_t_us.is_some() as u8,
    };
    SlkStatus::SlkOk
}

/// Release a plan handle. NULL is ignored.
///
/// # Safety
/// `plan` must be NULL or a live handle, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slk_plan_free(plan: *mut SlkPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}
