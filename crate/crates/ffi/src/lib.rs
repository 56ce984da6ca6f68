//! C ABI over the charnet core.
//!
//! Every function returns a [`CnStatus`]. On failure a message is kept per
//! thread and read with [`cn_last_error`]. Objects are opaque handles owned by
//! the caller and released with their `_free` function; strings returned by
//! the library are released with [`cn_string_free`]. Undefined metrics are
//! reported as NaN.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use charnet::annotation::fallback_annotate;
use charnet::corpus::segment_sentences;
use charnet::lexicon::LexiconPaths;
use charnet::metrics::network_metrics;
use charnet::network::{extract_network, parse_graph, sign_subgraph, write_graph};
use charnet::stats::{wasserstein, welch_t_test};
use charnet::{Lexicons, MetricsRecord, RawStory, Sign, SignedNetwork};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Io = 4,
    Panic = 5,
}

/// Which network a metric set describes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CnScope {
    Original = 0,
    Positive = 1,
    Negative = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnMetrics {
    pub node_count: usize,
    pub edge_count: usize,
    pub density: f64,
    pub avg_edge_weight: f64,
    pub avg_clustering: f64,
    pub assortativity: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnWelch {
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
}

/// Optional lexicon files; a null entry keeps the bundled list.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CnLexiconPaths {
    pub male_names: *const c_char,
    pub female_names: *const c_char,
    pub nicknames: *const c_char,
    pub titles: *const c_char,
    pub positive_words: *const c_char,
    pub negative_words: *const c_char,
    pub stopwords: *const c_char,
}

/// Opaque signed network.
pub struct CnNetwork(SignedNetwork);

/// Opaque lexicon set.
pub struct CnLexicons(Lexicons);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Failure = (CnStatus, String);

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CnStatus::Ok
        }
        Ok(Err((status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CnStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err((CnStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    non_null(p, what)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (CnStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn read_slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn optional_path(p: *const c_char, what: &str) -> Result<Option<PathBuf>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    read_str(p, what).map(|s| Some(PathBuf::from(s)))
}

fn invalid(e: impl ToString) -> Failure {
    (CnStatus::InvalidInput, e.to_string())
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn cn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn cn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cn_lexicons_bundled(out: *mut *mut CnLexicons) -> CnStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = Box::into_raw(Box::new(CnLexicons(Lexicons::bundled())));
        Ok(())
    })
}

/// # Safety
/// `paths` must point to a valid struct whose non-null members are
/// NUL-terminated strings; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cn_lexicons_load(paths: *const CnLexiconPaths, out: *mut *mut CnLexicons) -> CnStatus {
    guard(|| {
        non_null(paths, "paths")?;
        non_null(out, "out")?;
        let p = &*paths;
        let paths = LexiconPaths {
            male_names: optional_path(p.male_names, "male_names")?,
            female_names: optional_path(p.female_names, "female_names")?,
            nicknames: optional_path(p.nicknames, "nicknames")?,
            titles: optional_path(p.titles, "titles")?,
            positive_words: optional_path(p.positive_words, "positive_words")?,
            negative_words: optional_path(p.negative_words, "negative_words")?,
            stopwords: optional_path(p.stopwords, "stopwords")?,
        };
        let lexicons = Lexicons::load(&paths).map_err(|e| (CnStatus::Io, e.to_string()))?;
        *out = Box::into_raw(Box::new(CnLexicons(lexicons)));
        Ok(())
    })
}

/// # Safety
/// `lexicons` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn cn_lexicons_free(lexicons: *mut CnLexicons) {
    if !lexicons.is_null() {
        drop(Box::from_raw(lexicons));
    }
}

/// Segments `text`, annotates it with the rule-based annotator and builds its
/// signed network. `unit_coefficient` is usually 0.01.
///
/// # Safety
/// Strings must be NUL-terminated; `lexicons` must be a live handle; `out`
/// must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cn_extract_fallback(
    lexicons: *const CnLexicons,
    story_id: *const c_char,
    writer: *const c_char,
    text: *const c_char,
    unit_coefficient: f64,
    out: *mut *mut CnNetwork,
) -> CnStatus {
    guard(|| {
        non_null(lexicons, "lexicons")?;
        non_null(out, "out")?;
        let lexicons = &(*lexicons).0;
        let story = RawStory::new(read_str(story_id, "story_id")?, read_str(writer, "writer")?, read_str(text, "text")?);
        if !(unit_coefficient > 0.0 && unit_coefficient < 1.0) {
            return Err(invalid(format!("unit_coefficient must lie in (0, 1), got {unit_coefficient}")));
        }
        let doc = segment_sentences(&story);
        let units = fallback_annotate(&doc, lexicons, unit_coefficient);
        let net = extract_network(&story.story_id, &story.writer, &units, &lexicons.names);
        *out = Box::into_raw(Box::new(CnNetwork(net)));
        Ok(())
    })
}

/// Parses one graph record as written by the `extract` command.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cn_network_from_json(json: *const c_char, out: *mut *mut CnNetwork) -> CnStatus {
    guard(|| {
        non_null(out, "out")?;
        let net = parse_graph(read_str(json, "json")?.trim()).map_err(invalid)?;
        *out = Box::into_raw(Box::new(CnNetwork(net)));
        Ok(())
    })
}

/// Serializes a network as one JSON graph record, without a trailing newline.
///
/// # Safety
/// `net` must be a live handle; `out` must be valid for writes. Free the
/// result with `cn_string_free`.
#[no_mangle]
pub unsafe extern "C" fn cn_network_to_json(net: *const CnNetwork, out: *mut *mut c_char) -> CnStatus {
    guard(|| {
        non_null(net, "net")?;
        non_null(out, "out")?;
        let mut buf = Vec::new();
        write_graph(&mut buf, &(*net).0).map_err(|e| (CnStatus::Io, e.to_string()))?;
        if buf.last() == Some(&b'\n') {
            buf.pop();
        }
        let s = CString::new(buf).map_err(invalid)?;
        *out = s.into_raw();
        Ok(())
    })
}

/// # Safety
/// `net` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn cn_network_free(net: *mut CnNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// # Safety
/// `net` must be a live handle; the out pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cn_network_counts(net: *const CnNetwork, nodes: *mut usize, edges: *mut usize) -> CnStatus {
    guard(|| {
        non_null(net, "net")?;
        non_null(nodes, "nodes")?;
        non_null(edges, "edges")?;
        *nodes = (*net).0.node_count();
        *edges = (*net).0.edge_count();
        Ok(())
    })
}

/// Edge-induced subgraph of one sign: `sign` is +1 or -1.
///
/// # Safety
/// `net` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cn_network_sign_subgraph(net: *const CnNetwork, sign: i32, out: *mut *mut CnNetwork) -> CnStatus {
    guard(|| {
        non_null(net, "net")?;
        non_null(out, "out")?;
        let sign = match sign {
            1 => Sign::Positive,
            -1 => Sign::Negative,
            other => return Err(invalid(format!("sign must be +1 or -1, got {other}"))),
        };
        *out = Box::into_raw(Box::new(CnNetwork(sign_subgraph(&(*net).0, sign))));
        Ok(())
    })
}

fn to_c(m: &MetricsRecord) -> CnMetrics {
    let nan = |v: Option<f64>| v.unwrap_or(f64::NAN);
    CnMetrics {
        node_count: m.node_count,
        edge_count: m.edge_count,
        density: nan(m.density),
        avg_edge_weight: nan(m.avg_edge_weight),
        avg_clustering: nan(m.avg_clustering),
        assortativity: nan(m.assortativity),
    }
}

/// Metrics of the network or of one of its sign subgraphs.
///
/// # Safety
/// `net` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cn_network_metrics(net: *const CnNetwork, scope: CnScope, out: *mut CnMetrics) -> CnStatus {
    guard(|| {
        non_null(net, "net")?;
        non_null(out, "out")?;
        let all = network_metrics(&(*net).0);
        *out = to_c(&all[scope as usize]);
        Ok(())
    })
}

/// Welch's unequal-variance t-test, two-sided.
///
/// # Safety
/// `a` and `b` must point to `na` and `nb` doubles; `out` must be valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn cn_welch_t_test(a: *const f64, na: usize, b: *const f64, nb: usize, out: *mut CnWelch) -> CnStatus {
    guard(|| {
        non_null(out, "out")?;
        let r = welch_t_test(read_slice(a, na, "a")?, read_slice(b, nb, "b")?).map_err(invalid)?;
        *out = CnWelch { t: r.t, df: r.df, p: r.p };
        Ok(())
    })
}

/// First Wasserstein distance between two empirical samples.
///
/// # Safety
/// `a` and `b` must point to `na` and `nb` doubles; `out` must be valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn cn_wasserstein(a: *const f64, na: usize, b: *const f64, nb: usize, out: *mut f64) -> CnStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = wasserstein(read_slice(a, na, "a")?, read_slice(b, nb, "b")?).map_err(invalid)?;
        Ok(())
    })
}
