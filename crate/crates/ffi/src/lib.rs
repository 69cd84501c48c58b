//! C ABI over the metrics and selection core: nDCG, ranking parse, the
//! random baseline, grid names, and selection over an opaque result-grid
//! handle. Strings returned through `char**` are owned by this library and
//! must be released with `rp_string_free`.

use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use recprompt::metrics::{ndcg_at_k, parse_ranking, random_baseline, PromptResult, Ranking, ResultGrid};
use recprompt::promptgrid::{enumerate_grid, Approach, GridConfig, PromptSpec};
use recprompt::selector::{rpi_analysis, select_gs, select_rpi, RpiMode};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    ParseReject = 4,
    IncompleteGrid = 5,
    UnknownName = 6,
    Panic = 7,
}

/// Opaque accuracy grid: (dataset, spec) -> mean nDCG.
pub struct Grid {
    inner: ResultGrid,
}

fn guard<F: FnOnce() -> Status>(body: F) -> Status {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => Status::Panic,
    }
}

unsafe fn str_arg<'a>(ptr: *const c_char) -> Result<&'a str, Status> {
    if ptr.is_null() {
        return Err(Status::NullPointer);
    }
    unsafe { CStr::from_ptr(ptr) }.to_str().map_err(|_| Status::InvalidUtf8)
}

fn string_out(value: String, out: *mut *mut c_char) -> Status {
    match CString::new(value) {
        Ok(s) => {
            unsafe { *out = s.into_raw() };
            Status::Ok
        }
        Err(_) => Status::InvalidArgument,
    }
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn rp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Release a string returned by this library.
///
/// # Safety
/// `ptr` must have been returned by this library and not freed already.
#[no_mangle]
pub unsafe extern "C" fn rp_string_free(ptr: *mut c_char) {
    if !ptr.is_null() {
        drop(unsafe { CString::from_raw(ptr) });
    }
}

/// Binary-relevance nDCG@k. `ranking` is a permutation of 1..=len as
/// 1-based candidate indices; `positive_mask` marks relevant candidates.
///
/// # Safety
/// `ranking` and `positive_mask` must point to `len` readable elements and
/// `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn rp_ndcg_at_k(
    ranking: *const u32,
    positive_mask: *const u8,
    len: usize,
    k: u32,
    out: *mut f64,
) -> Status {
    guard(|| {
        if ranking.is_null() || positive_mask.is_null() || out.is_null() {
            return Status::NullPointer;
        }
        let ranking = unsafe { std::slice::from_raw_parts(ranking, len) };
        let mask: Vec<bool> = unsafe { std::slice::from_raw_parts(positive_mask, len) }
            .iter()
            .map(|&b| b != 0)
            .collect();
        match ndcg_at_k(&Ranking(ranking.to_vec()), &mask, k as usize) {
            Ok(value) => {
                unsafe { *out = value };
                Status::Ok
            }
            Err(_) => Status::InvalidArgument,
        }
    })
}

/// Monte-Carlo mean nDCG@k of uniform-random rankings.
///
/// # Safety
/// `out` must point to a writable double.
#[no_mangle]
pub unsafe extern "C" fn rp_random_baseline(
    n_pos: u32,
    n_cand: u32,
    k: u32,
    trials: u64,
    seed: u64,
    out: *mut f64,
) -> Status {
    guard(|| {
        if out.is_null() {
            return Status::NullPointer;
        }
        if n_pos == 0 || n_cand == 0 || n_pos > n_cand || trials == 0 {
            return Status::InvalidArgument;
        }
        let value = random_baseline(n_pos as usize, n_cand as usize, k as usize, trials, seed);
        unsafe { *out = value };
        Status::Ok
    })
}

/// Parse a model completion into a full ranking. On success `out_ranking`
/// (length `n_candidates`) holds a permutation of 1..=n_candidates; missing
/// candidates were appended in seeded random order.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out_ranking` must point to
/// `n_candidates` writable elements.
#[no_mangle]
pub unsafe extern "C" fn rp_parse_ranking(
    text: *const c_char,
    n_candidates: u32,
    completion_seed: u64,
    out_ranking: *mut u32,
) -> Status {
    guard(|| {
        let text = match unsafe { str_arg(text) } {
            Ok(t) => t,
            Err(status) => return status,
        };
        if out_ranking.is_null() {
            return Status::NullPointer;
        }
        if n_candidates == 0 {
            return Status::InvalidArgument;
        }
        match parse_ranking(text, n_candidates as usize, completion_seed) {
            Ok(Ranking(ranking)) => {
                let out = unsafe { std::slice::from_raw_parts_mut(out_ranking, n_candidates as usize) };
                out.copy_from_slice(&ranking);
                Status::Ok
            }
            Err(_) => Status::ParseReject,
        }
    })
}

/// JSON array of the default grid's canonical spec names (90 entries).
///
/// # Safety
/// `out_json` must point to a writable `char*`.
#[no_mangle]
pub unsafe extern "C" fn rp_default_grid_names(out_json: *mut *mut c_char) -> Status {
    guard(|| {
        if out_json.is_null() {
            return Status::NullPointer;
        }
        let names: Vec<String> = enumerate_grid(&GridConfig::default())
            .expect("default grid")
            .iter()
            .map(|s| s.name())
            .collect();
        string_out(serde_json::to_string(&names).expect("serialize"), out_json)
    })
}

/// New empty result grid.
#[no_mangle]
pub extern "C" fn rp_grid_new() -> *mut Grid {
    Box::into_raw(Box::new(Grid {
        inner: ResultGrid::new(),
    }))
}

/// Release a grid handle.
///
/// # Safety
/// `grid` must come from `rp_grid_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rp_grid_free(grid: *mut Grid) {
    if !grid.is_null() {
        drop(unsafe { Box::from_raw(grid) });
    }
}

/// Insert or replace one (dataset, spec) accuracy cell. The spec name uses
/// the canonical shorthand, e.g. "R-10-T" or "SE-100-TCD".
///
/// # Safety
/// `grid` must be a live handle; `dataset` and `spec_name` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rp_grid_add(
    grid: *mut Grid,
    dataset: *const c_char,
    spec_name: *const c_char,
    mean_ndcg: f64,
) -> Status {
    guard(|| {
        if grid.is_null() {
            return Status::NullPointer;
        }
        let dataset = match unsafe { str_arg(dataset) } {
            Ok(d) => d,
            Err(status) => return status,
        };
        let spec: PromptSpec = match unsafe { str_arg(spec_name) }.and_then(|s| {
            s.parse().map_err(|_| Status::UnknownName)
        }) {
            Ok(s) => s,
            Err(status) => return status,
        };
        if !mean_ndcg.is_finite() {
            return Status::InvalidArgument;
        }
        let grid = unsafe { &mut *grid };
        grid.inner.insert(PromptResult::summary(dataset, spec, mean_ndcg));
        Status::Ok
    })
}

/// Number of cells in the grid.
///
/// # Safety
/// `grid` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rp_grid_len(grid: *const Grid) -> usize {
    if grid.is_null() {
        return 0;
    }
    unsafe { &*grid }.inner.len()
}

fn summary_sizes_default() -> BTreeMap<recprompt::promptgrid::AttrCombo, u32> {
    GridConfig::default().summary_sizes
}

/// Grid-search selection on one dataset; writes the outcome as JSON
/// {"strategy","spec","val_ndcg","shortlist"}.
///
/// # Safety
/// `grid` must be a live handle; `dataset` NUL-terminated; `out_json`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn rp_grid_select_gs(
    grid: *const Grid,
    dataset: *const c_char,
    out_json: *mut *mut c_char,
) -> Status {
    guard(|| {
        if grid.is_null() || out_json.is_null() {
            return Status::NullPointer;
        }
        let dataset = match unsafe { str_arg(dataset) } {
            Ok(d) => d,
            Err(status) => return status,
        };
        let grid = unsafe { &*grid };
        match select_gs(&grid.inner, dataset, None) {
            Ok(outcome) => string_out(
                serde_json::to_string(&outcome).expect("serialize"),
                out_json,
            ),
            Err(_) => Status::IncompleteGrid,
        }
    })
}

/// RPI selection on one dataset (pairwise averaging, default summary
/// sizes); requires both approaches' full factorials in the grid.
///
/// # Safety
/// Same contracts as `rp_grid_select_gs`.
#[no_mangle]
pub unsafe extern "C" fn rp_grid_select_rpi(
    grid: *const Grid,
    dataset: *const c_char,
    out_json: *mut *mut c_char,
) -> Status {
    guard(|| {
        if grid.is_null() || out_json.is_null() {
            return Status::NullPointer;
        }
        let dataset = match unsafe { str_arg(dataset) } {
            Ok(d) => d,
            Err(status) => return status,
        };
        let grid = unsafe { &*grid };
        match select_rpi(&grid.inner, dataset, &summary_sizes_default(), RpiMode::Pairwise) {
            Ok(outcome) => string_out(
                serde_json::to_string(&outcome).expect("serialize"),
                out_json,
            ),
            Err(_) => Status::IncompleteGrid,
        }
    })
}

/// Full RPI analysis of one approach ("sampling" or "summarizing") on one
/// dataset, as JSON.
///
/// # Safety
/// Same contracts as `rp_grid_select_gs`; `approach` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rp_grid_rpi_table(
    grid: *const Grid,
    dataset: *const c_char,
    approach: *const c_char,
    out_json: *mut *mut c_char,
) -> Status {
    guard(|| {
        if grid.is_null() || out_json.is_null() {
            return Status::NullPointer;
        }
        let dataset = match unsafe { str_arg(dataset) } {
            Ok(d) => d,
            Err(status) => return status,
        };
        let approach = match unsafe { str_arg(approach) } {
            Ok("sampling") => Approach::Sampling,
            Ok("summarizing") => Approach::Summarizing,
            Ok(_) => return Status::UnknownName,
            Err(status) => return status,
        };
        let grid = unsafe { &*grid };
        match rpi_analysis(&grid.inner, dataset, approach, RpiMode::Pairwise) {
            Ok(table) => string_out(serde_json::to_string(&table).expect("serialize"), out_json),
            Err(_) => Status::IncompleteGrid,
        }
    })
}
