//! C ABI over the krvqr library.
//!
//! Every fallible function returns a [`KrvqrStatus`]; on failure the message
//! is available from [`krvqr_last_error`] on the same thread. Handles are
//! opaque and must be released with their `_free` function. Strings returned
//! through out-pointers are owned by the caller and freed with
//! [`krvqr_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use krvqr::executor::Oracle;
use krvqr::graph::{self, ImageKnowledgeGraph, KnowledgeBase};
use krvqr::kgembed::{self, EmbedError, KgEmbedding};
use krvqr::model::Label;
use krvqr::program::Program;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KrvqrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    NotFound = 5,
    Execution = 6,
    DimensionMismatch = 7,
    ZeroModulus = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(KrvqrStatus, String);

impl Failure {
    fn new(status: KrvqrStatus, msg: impl ToString) -> Self {
        Failure(status, msg.to_string())
    }
}

impl From<EmbedError> for Failure {
    fn from(e: EmbedError) -> Self {
        let status = match e {
            EmbedError::DimensionMismatch { .. } => KrvqrStatus::DimensionMismatch,
            EmbedError::ZeroModulus { .. } => KrvqrStatus::ZeroModulus,
            EmbedError::UnknownEntity(_) | EmbedError::UnknownRelation(_) => KrvqrStatus::NotFound,
            EmbedError::Io { .. } => KrvqrStatus::Io,
            EmbedError::Format { .. } | EmbedError::InvalidHyperparameter(_) => KrvqrStatus::Parse,
        };
        Failure::new(status, e)
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> KrvqrStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KrvqrStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            KrvqrStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(KrvqrStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(KrvqrStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(KrvqrStatus::NullPointer, format!("`{name}` is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(KrvqrStatus::NullPointer, format!("`{name}` is null")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(Failure::new(KrvqrStatus::NullPointer, format!("`{name}` is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_slice(dst: *mut f64, src: &[f64], name: &str) -> Result<(), Failure> {
    if dst.is_null() {
        return Err(Failure::new(KrvqrStatus::NullPointer, format!("`{name}` is null")));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

fn c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes removed").into_raw()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library on this thread.
#[no_mangle]
pub extern "C" fn krvqr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn krvqr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn krvqr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Knowledge base handle.
pub struct KrvqrKb(KnowledgeBase);

fn load_kb(path: &str) -> Result<KnowledgeBase, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::new(KrvqrStatus::Io, format!("{path}: {e}")))?;
    let tsv = Path::new(path).extension().is_some_and(|e| e.eq_ignore_ascii_case("tsv"));
    Ok(KnowledgeBase::new(graph::parse_kb_text(&text, tsv).0))
}

/// Loads a knowledge base (JSONL, or TSV for `.tsv` paths).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn krvqr_kb_open(path: *const c_char, out: *mut *mut KrvqrKb) -> KrvqrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let kb = load_kb(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(KrvqrKb(kb)));
        Ok(())
    })
}

/// # Safety
/// `kb` must be NULL or a handle from [`krvqr_kb_open`].
#[no_mangle]
pub unsafe extern "C" fn krvqr_kb_free(kb: *mut KrvqrKb) {
    if !kb.is_null() {
        drop(Box::from_raw(kb));
    }
}

/// Number of triplets, or 0 for NULL.
///
/// # Safety
/// `kb` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn krvqr_kb_len(kb: *const KrvqrKb) -> usize {
    kb.as_ref().map_or(0, |k| k.0.len())
}

/// Cleaned scenes merged with a knowledge base.
pub struct KrvqrCorpus {
    graphs: Vec<ImageKnowledgeGraph>,
    kb: KnowledgeBase,
}

/// Loads scene graphs and a knowledge base and builds per-image graphs.
///
/// # Safety
/// Paths must be NUL-terminated strings and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn krvqr_corpus_open(
    scenes_path: *const c_char,
    kb_path: *const c_char,
    out: *mut *mut KrvqrCorpus,
) -> KrvqrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let kb = load_kb(str_arg(kb_path, "kb_path")?)?;
        let scenes = str_arg(scenes_path, "scenes_path")?;
        let (raw, _) = graph::import_vg(Path::new(scenes)).map_err(|e| {
            let status = match e {
                graph::GraphError::Io { .. } => KrvqrStatus::Io,
                graph::GraphError::Format { .. } => KrvqrStatus::Parse,
            };
            Failure::new(status, e)
        })?;
        let graphs = raw
            .iter()
            .map(|g| graph::merge_knowledge(&graph::clean_scene_graph(g), &kb))
            .collect();
        *out = Box::into_raw(Box::new(KrvqrCorpus { graphs, kb }));
        Ok(())
    })
}

/// # Safety
/// `corpus` must be NULL or a handle from [`krvqr_corpus_open`].
#[no_mangle]
pub unsafe extern "C" fn krvqr_corpus_free(corpus: *mut KrvqrCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Number of images, or 0 for NULL.
///
/// # Safety
/// `corpus` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn krvqr_corpus_len(corpus: *const KrvqrCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.graphs.len())
}

fn parse_program(text: &str) -> Result<Program, Failure> {
    text.parse::<Program>().map_err(|e| Failure::new(KrvqrStatus::Parse, e))
}

/// Executes `program` on image `image_id`; writes the answers, sorted and
/// newline-separated, to `*out`.
///
/// # Safety
/// Strings must be NUL-terminated, `corpus` live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn krvqr_oracle_execute(
    corpus: *const KrvqrCorpus,
    image_id: *const c_char,
    program: *const c_char,
    out: *mut *mut c_char,
) -> KrvqrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let corpus = ref_arg(corpus, "corpus")?;
        let image = str_arg(image_id, "image_id")?;
        let program = parse_program(str_arg(program, "program")?)?;
        let g = corpus
            .graphs
            .iter()
            .find(|g| g.image_id == image)
            .ok_or_else(|| Failure::new(KrvqrStatus::NotFound, format!("image `{image}` not found")))?;
        let answers = Oracle::new(g, &corpus.kb)
            .execute(&program)
            .map_err(|e| Failure::new(KrvqrStatus::Execution, e))?;
        let text: Vec<&str> = answers.labels().map(Label::as_str).collect();
        *out = c_string(text.join("\n"));
        Ok(())
    })
}

/// Parses a program and writes its canonical printed form to `*out` and its
/// qtype to `*qtype`.
///
/// # Safety
/// `program` must be NUL-terminated; `out` and `qtype` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn krvqr_program_canonicalize(
    program: *const c_char,
    out: *mut *mut c_char,
    qtype: *mut u8,
) -> KrvqrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let qtype = out_arg(qtype, "qtype")?;
        let p = parse_program(str_arg(program, "program")?)?;
        *qtype = p.qtype();
        *out = c_string(p.to_string());
        Ok(())
    })
}

/// Rotates a head by a relation. All buffers hold `dim` values.
///
/// # Safety
/// Input pointers must reference `dim` readable values, outputs `dim`
/// writable values.
#[no_mangle]
pub unsafe extern "C" fn krvqr_infer_tail(
    h: *const f64,
    h_i: *const f64,
    cos_r: *const f64,
    sin_ri: *const f64,
    dim: usize,
    t_out: *mut f64,
    t_i_out: *mut f64,
) -> KrvqrStatus {
    guard(|| {
        let (t, ti) = kgembed::infer_tail(
            slice_arg(h, dim, "h")?,
            slice_arg(h_i, dim, "h_i")?,
            slice_arg(cos_r, dim, "cos_r")?,
            slice_arg(sin_ri, dim, "sin_ri")?,
        )?;
        write_slice(t_out, &t, "t_out")?;
        write_slice(t_i_out, &ti, "t_i_out")
    })
}

/// Inverse rotation of a tail. All buffers hold `dim` values.
///
/// # Safety
/// As [`krvqr_infer_tail`].
#[no_mangle]
pub unsafe extern "C" fn krvqr_infer_head(
    t: *const f64,
    t_i: *const f64,
    cos_r: *const f64,
    sin_ri: *const f64,
    dim: usize,
    h_out: *mut f64,
    h_i_out: *mut f64,
) -> KrvqrStatus {
    guard(|| {
        let (h, hi) = kgembed::infer_head(
            slice_arg(t, dim, "t")?,
            slice_arg(t_i, dim, "t_i")?,
            slice_arg(cos_r, dim, "cos_r")?,
            slice_arg(sin_ri, dim, "sin_ri")?,
        )?;
        write_slice(h_out, &h, "h_out")?;
        write_slice(h_i_out, &hi, "h_i_out")
    })
}

/// Rotation taking a head to a tail. Fails with
/// `KRVQR_STATUS_ZERO_MODULUS` when a head component is (near) zero.
///
/// # Safety
/// As [`krvqr_infer_tail`].
#[no_mangle]
pub unsafe extern "C" fn krvqr_infer_relation(
    h: *const f64,
    h_i: *const f64,
    t: *const f64,
    t_i: *const f64,
    dim: usize,
    cos_out: *mut f64,
    sin_out: *mut f64,
) -> KrvqrStatus {
    guard(|| {
        let (c, s) = kgembed::infer_relation(
            slice_arg(h, dim, "h")?,
            slice_arg(h_i, dim, "h_i")?,
            slice_arg(t, dim, "t")?,
            slice_arg(t_i, dim, "t_i")?,
        )?;
        write_slice(cos_out, &c, "cos_out")?;
        write_slice(sin_out, &s, "sin_out")
    })
}

/// Squared distance between the rotated head and the tail.
///
/// # Safety
/// Inputs must reference `dim` readable values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn krvqr_score(
    h: *const f64,
    h_i: *const f64,
    cos_r: *const f64,
    sin_ri: *const f64,
    t: *const f64,
    t_i: *const f64,
    dim: usize,
    out: *mut f64,
) -> KrvqrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = kgembed::score(
            slice_arg(h, dim, "h")?,
            slice_arg(h_i, dim, "h_i")?,
            slice_arg(cos_r, dim, "cos_r")?,
            slice_arg(sin_ri, dim, "sin_ri")?,
            slice_arg(t, dim, "t")?,
            slice_arg(t_i, dim, "t_i")?,
        )?;
        Ok(())
    })
}

/// Trained embedding handle.
pub struct KrvqrEmbedding(KgEmbedding);

/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn krvqr_embedding_load(path: *const c_char, out: *mut *mut KrvqrEmbedding) -> KrvqrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let emb = KgEmbedding::load(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(KrvqrEmbedding(emb)));
        Ok(())
    })
}

/// # Safety
/// `emb` must be NULL or a handle from [`krvqr_embedding_load`].
#[no_mangle]
pub unsafe extern "C" fn krvqr_embedding_free(emb: *mut KrvqrEmbedding) {
    if !emb.is_null() {
        drop(Box::from_raw(emb));
    }
}

/// Complex dimension `d`; exported vectors hold `2 * d` values. 0 for NULL.
///
/// # Safety
/// `emb` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn krvqr_embedding_dim(emb: *const KrvqrEmbedding) -> usize {
    emb.as_ref().map_or(0, |e| e.0.dim())
}

/// Copies the real parts then the imaginary parts of `entity` into `buf`,
/// which must have room for `2 * dim` values.
///
/// # Safety
/// `emb` live, `entity` NUL-terminated, `buf` writable for `buf_len` values.
#[no_mangle]
pub unsafe extern "C" fn krvqr_embedding_entity_vector(
    emb: *const KrvqrEmbedding,
    entity: *const c_char,
    buf: *mut f64,
    buf_len: usize,
) -> KrvqrStatus {
    guard(|| {
        let emb = ref_arg(emb, "emb")?;
        let name = Label::new(str_arg(entity, "entity")?).map_err(|e| Failure::new(KrvqrStatus::Parse, e))?;
        let v = emb.0.entity_vector(&name)?;
        if buf_len < v.len() {
            return Err(Failure::new(
                KrvqrStatus::BufferTooSmall,
                format!("need {} values, buffer holds {buf_len}", v.len()),
            ));
        }
        write_slice(buf, &v, "buf")
    })
}
