//! C ABI over `cipher-core`.
//!
//! Every fallible function returns a [`CipherStatus`]; on anything other than
//! `CIPHER_STATUS_OK` a description is available from
//! [`cipher_last_error_message`] on the same thread. Results are written
//! through caller-provided out-pointers. Larger objects (clusterings, indexes,
//! projects) are opaque handles created by `*_new`/`*_open`-style functions
//! and released with the matching `*_free`. Panics never cross the boundary;
//! they surface as `CIPHER_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use libc::{c_char, size_t};

use cipher_core::cluster::{self, ClusterParams, Euclidean};
use cipher_core::config::PipelineConfig;
use cipher_core::ingest::WindowId;
use cipher_core::project::{Project, Stage};
use cipher_core::symbolic::{self, IndexParams, IsaxIndex, IsaxWord, PaaVector, Symbol};
use cipher_core::Error;

/// Outcome of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CipherStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Parse = 4,
    Io = 5,
    MissingArtifact = 6,
    CorruptStore = 7,
    Conflict = 8,
    UnknownCluster = 9,
    Utf8 = 10,
    Panic = 11,
}

impl From<&Error> for CipherStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Parse { .. } | Error::Structure { .. } | Error::Json(_) | Error::Csv(_) => {
                CipherStatus::Parse
            }
            Error::Config(_) => CipherStatus::Config,
            Error::Invalid(_) | Error::AllMissing(_) | Error::DuplicateId(_) => {
                CipherStatus::InvalidArgument
            }
            Error::UnknownCluster(_) => CipherStatus::UnknownCluster,
            Error::MissingArtifact { .. } => CipherStatus::MissingArtifact,
            Error::Store { .. } => CipherStatus::CorruptStore,
            Error::Conflict { .. } => CipherStatus::Conflict,
            Error::Io(_) => CipherStatus::Io,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

struct Failure(CipherStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(CipherStatus::from(&e), e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

type FfiResult<T = ()> = Result<T, Failure>;

fn null(what: &str) -> Failure {
    Failure(CipherStatus::NullPointer, format!("{what} is null"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(CipherStatus::InvalidArgument, message.into())
}

/// Runs `f`, recording its error (or panic) and converting it to a status.
fn guard(f: impl FnOnce() -> FfiResult) -> CipherStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CipherStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {message}"));
            CipherStatus::Panic
        }
    }
}

/// # Safety
/// `data` must be null or point to `len` readable values.
unsafe fn slice<'a, T>(data: *const T, len: usize, what: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

/// # Safety
/// `data` must be null or point to `len` writable values.
unsafe fn slice_mut<'a, T>(data: *mut T, len: usize, what: &str) -> FfiResult<&'a mut [T]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(data, len))
}

/// # Safety
/// `s` must be null or a NUL-terminated string.
unsafe fn string<'a>(s: *const c_char, what: &str) -> FfiResult<&'a str> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure(CipherStatus::Utf8, format!("{what} is not UTF-8")))
}

/// # Safety
/// `handle` must be null or a live handle of type `T`.
unsafe fn handle<'a, T>(handle: *const T, what: &str) -> FfiResult<&'a T> {
    handle.as_ref().ok_or_else(|| null(what))
}

fn words_from(values: &[u32], cardinalities: &[u32]) -> FfiResult<IsaxWord> {
    let symbols = values
        .iter()
        .zip(cardinalities)
        .map(|(&value, &cardinality)| Symbol { value, cardinality })
        .collect();
    Ok(IsaxWord::new(symbols)?)
}

/// Message of the last failed call on this thread, or null when none failed.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn cipher_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cipher_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Piecewise aggregate approximation of `len` values into `word_size`
/// coefficients written to `out`.
///
/// # Safety
/// `values` must hold `len` doubles and `out` room for `word_size`.
#[no_mangle]
pub unsafe extern "C" fn cipher_paa(
    values: *const f64,
    len: size_t,
    word_size: size_t,
    out: *mut f64,
) -> CipherStatus {
    guard(|| {
        let values = slice(values, len, "values")?;
        let out = slice_mut(out, word_size, "out")?;
        let paa = symbolic::paa(values, word_size)?;
        out.copy_from_slice(&paa.coefficients);
        Ok(())
    })
}

/// The `cardinality - 1` standard-normal breakpoints of a power-of-two
/// cardinality. `out_len` must equal `cardinality - 1`.
///
/// # Safety
/// `out` must have room for `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cipher_breakpoints(
    cardinality: u32,
    out: *mut f64,
    out_len: size_t,
) -> CipherStatus {
    guard(|| {
        let table = symbolic::breakpoints(cardinality)?;
        if out_len != table.thresholds.len() {
            return Err(invalid(format!(
                "cardinality {cardinality} has {} breakpoints, buffer holds {out_len}",
                table.thresholds.len()
            )));
        }
        slice_mut(out, out_len, "out")?.copy_from_slice(&table.thresholds);
        Ok(())
    })
}

/// Discretizes `word_size` PAA coefficients at `cardinality`, writing one
/// symbol per coefficient.
///
/// # Safety
/// `coefficients` must hold `word_size` doubles and `symbols` room for as
/// many `uint32_t`.
#[no_mangle]
pub unsafe extern "C" fn cipher_sax(
    coefficients: *const f64,
    word_size: size_t,
    cardinality: u32,
    symbols: *mut u32,
) -> CipherStatus {
    guard(|| {
        if word_size == 0 {
            return Err(invalid("word_size must be >= 1"));
        }
        let paa = PaaVector {
            coefficients: slice(coefficients, word_size, "coefficients")?.to_vec(),
            source_length: word_size,
        };
        let word = symbolic::sax(&paa, cardinality)?;
        slice_mut(symbols, word_size, "symbols")?.copy_from_slice(&word.values());
        Ok(())
    })
}

/// Lower-bound distance between two iSAX words given as parallel arrays of
/// symbol values and cardinalities, for series of `original_length` samples.
///
/// # Safety
/// Each of the four arrays must hold `word_size` values; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn cipher_mindist(
    a_values: *const u32,
    a_cardinalities: *const u32,
    b_values: *const u32,
    b_cardinalities: *const u32,
    word_size: size_t,
    original_length: size_t,
    out: *mut f64,
) -> CipherStatus {
    guard(|| {
        let a = words_from(
            slice(a_values, word_size, "a_values")?,
            slice(a_cardinalities, word_size, "a_cardinalities")?,
        )?;
        let b = words_from(
            slice(b_values, word_size, "b_values")?,
            slice(b_cardinalities, word_size, "b_cardinalities")?,
        )?;
        let d = symbolic::mindist(&a, &b, original_length)?;
        *out.as_mut().ok_or_else(|| null("out"))? = d;
        Ok(())
    })
}

/// Flat HDBSCAN result.
pub struct CipherClustering {
    labels: Vec<Option<u32>>,
    strengths: Vec<f64>,
    n_clusters: usize,
}

/// Clusters `n` points of `dim` coordinates (row-major) under Euclidean
/// distance. On success `*out` receives a handle to free with
/// [`cipher_clustering_free`].
///
/// # Safety
/// `points` must hold `n * dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cipher_hdbscan(
    points: *const f64,
    n: size_t,
    dim: size_t,
    min_cluster_size: size_t,
    min_samples: size_t,
    out: *mut *mut CipherClustering,
) -> CipherStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        if dim == 0 {
            return Err(invalid("dim must be >= 1"));
        }
        let total = n
            .checked_mul(dim)
            .ok_or_else(|| invalid("n * dim overflows"))?;
        let rows: Vec<Vec<f64>> = slice(points, total, "points")?
            .chunks(dim)
            .map(<[f64]>::to_vec)
            .collect();
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("points must be finite"));
        }
        let params = ClusterParams {
            min_cluster_size,
            min_samples,
            ..ClusterParams::default()
        };
        let result = cluster::hdbscan(&Euclidean(&rows), &params)?;
        *out = Box::into_raw(Box::new(CipherClustering {
            n_clusters: result.n_clusters(),
            labels: result.extraction.labels,
            strengths: result.extraction.strengths,
        }));
        Ok(())
    })
}

/// Number of points in the clustering (0 for a null handle).
///
/// # Safety
/// `clustering` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cipher_clustering_len(clustering: *const CipherClustering) -> size_t {
    clustering.as_ref().map_or(0, |c| c.labels.len())
}

/// Number of flat clusters (0 for a null handle).
///
/// # Safety
/// `clustering` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cipher_clustering_n_clusters(
    clustering: *const CipherClustering,
) -> size_t {
    clustering.as_ref().map_or(0, |c| c.n_clusters)
}

/// Copies the cluster label of every point into `labels` (-1 for noise) and,
/// when `strengths` is non-null, its membership strength. `len` must equal
/// [`cipher_clustering_len`].
///
/// # Safety
/// `clustering` must be a live handle; `labels` (and `strengths` if non-null)
/// must have room for `len` values.
#[no_mangle]
pub unsafe extern "C" fn cipher_clustering_labels(
    clustering: *const CipherClustering,
    labels: *mut i64,
    strengths: *mut f64,
    len: size_t,
) -> CipherStatus {
    guard(|| {
        let c = handle(clustering, "clustering")?;
        if len != c.labels.len() {
            return Err(invalid(format!(
                "clustering has {} points, buffer holds {len}",
                c.labels.len()
            )));
        }
        for (slot, label) in slice_mut(labels, len, "labels")?.iter_mut().zip(&c.labels) {
            *slot = label.map_or(-1, i64::from);
        }
        if !strengths.is_null() {
            slice_mut(strengths, len, "strengths")?.copy_from_slice(&c.strengths);
        }
        Ok(())
    })
}

/// Releases a clustering. Null is ignored.
///
/// # Safety
/// `clustering` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cipher_clustering_free(clustering: *mut CipherClustering) {
    if !clustering.is_null() {
        drop(Box::from_raw(clustering));
    }
}

/// In-memory iSAX index.
pub struct CipherIndex {
    inner: IsaxIndex,
}

/// Creates an empty index. Cardinalities must be powers of two with
/// `base_cardinality <= max_cardinality`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cipher_index_new(
    word_size: size_t,
    base_cardinality: u32,
    max_cardinality: u32,
    leaf_capacity: size_t,
    out: *mut *mut CipherIndex,
) -> CipherStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        let inner = IsaxIndex::new(IndexParams {
            word_size,
            base_cardinality,
            max_cardinality,
            leaf_capacity,
        })?;
        *out = Box::into_raw(Box::new(CipherIndex { inner }));
        Ok(())
    })
}

/// Inserts series `id` given as `len` (already normalized) samples; the PAA
/// is computed at the index's word size. Ids must be unique.
///
/// # Safety
/// `index` must be a live handle and `values` hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cipher_index_insert(
    index: *mut CipherIndex,
    id: u64,
    values: *const f64,
    len: size_t,
) -> CipherStatus {
    guard(|| {
        let index = index.as_mut().ok_or_else(|| null("index"))?;
        let values = slice(values, len, "values")?;
        let paa = symbolic::paa(values, index.inner.params().word_size)?;
        index.inner.insert(WindowId(id), paa)?;
        Ok(())
    })
}

/// Number of series in the index (0 for a null handle).
///
/// # Safety
/// `index` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cipher_index_len(index: *const CipherIndex) -> size_t {
    index.as_ref().map_or(0, |i| i.inner.len())
}

/// Number of tree nodes, root included (0 for a null handle).
///
/// # Safety
/// `index` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cipher_index_node_count(index: *const CipherIndex) -> size_t {
    index.as_ref().map_or(0, |i| i.inner.node_count())
}

/// Writes the index in its binary format to `path`.
///
/// # Safety
/// `index` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cipher_index_save(
    index: *const CipherIndex,
    path: *const c_char,
) -> CipherStatus {
    guard(|| {
        let index = handle(index, "index")?;
        let path = string(path, "path")?;
        let mut w = BufWriter::new(File::create(path)?);
        index.inner.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    })
}

/// Reads an index written by [`cipher_index_save`] or the `index` stage.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cipher_index_load(
    path: *const c_char,
    out: *mut *mut CipherIndex,
) -> CipherStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        let path = string(path, "path")?;
        let inner = IsaxIndex::read_from(BufReader::new(File::open(path)?))?;
        *out = Box::into_raw(Box::new(CipherIndex { inner }));
        Ok(())
    })
}

/// Releases an index. Null is ignored.
///
/// # Safety
/// `index` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cipher_index_free(index: *mut CipherIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// A project directory bound to a pipeline configuration.
pub struct CipherProject {
    project: Project,
    config: PipelineConfig,
}

/// Opens the project at `project_dir` with the configuration at
/// `config_path`, or, when that is null, the project's own `config.toml`.
///
/// # Safety
/// `project_dir` must be a NUL-terminated string, `config_path` null or one,
/// and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cipher_project_open(
    project_dir: *const c_char,
    config_path: *const c_char,
    out: *mut *mut CipherProject,
) -> CipherStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        let project = Project::new(PathBuf::from(string(project_dir, "project_dir")?));
        let config = if config_path.is_null() {
            project.read_config()?
        } else {
            PipelineConfig::load(std::path::Path::new(string(config_path, "config_path")?))?
        };
        *out = Box::into_raw(Box::new(CipherProject { project, config }));
        Ok(())
    })
}

/// Runs one stage by name (`ingest`, `window`, `preprocess`, `index`,
/// `cluster`, `summarize` or `export`).
///
/// # Safety
/// `project` must be a live handle and `stage` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cipher_project_run_stage(
    project: *const CipherProject,
    stage: *const c_char,
) -> CipherStatus {
    guard(|| {
        let p = handle(project, "project")?;
        let stage: Stage = string(stage, "stage")?.parse()?;
        p.project.run_stage(stage, &p.config)?;
        Ok(())
    })
}

/// Runs ingest through summarize.
///
/// # Safety
/// `project` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cipher_project_run(project: *const CipherProject) -> CipherStatus {
    guard(|| {
        let p = handle(project, "project")?;
        p.project.run(&p.config)?;
        Ok(())
    })
}

/// Releases a project handle. Null is ignored.
///
/// # Safety
/// `project` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cipher_project_free(project: *mut CipherProject) {
    if !project.is_null() {
        drop(Box::from_raw(project));
    }
}
