use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use krvqr_ffi::*;

fn fixture(name: &str) -> CString {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/synthetic").join(name);
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = krvqr_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn take(s: *mut std::ffi::c_char) -> String {
    let out = CStr::from_ptr(s).to_str().unwrap().to_owned();
    krvqr_string_free(s);
    out
}

#[test]
fn oracle_through_handles() {
    unsafe {
        let mut corpus = ptr::null_mut();
        assert_eq!(krvqr_corpus_open(fixture("scenes.json").as_ptr(), fixture("kb.jsonl").as_ptr(), &mut corpus), KrvqrStatus::Ok);
        assert_eq!(krvqr_corpus_len(corpus), 50);
        let mut out = ptr::null_mut();
        let img = CString::new("img1").unwrap();
        let prog = CString::new("(Qar_I girl holds)").unwrap();
        assert_eq!(krvqr_oracle_execute(corpus, img.as_ptr(), prog.as_ptr(), &mut out), KrvqrStatus::Ok);
        assert_eq!(take(out), "hotdog");

        let missing = CString::new("img999").unwrap();
        assert_eq!(krvqr_oracle_execute(corpus, missing.as_ptr(), prog.as_ptr(), &mut out), KrvqrStatus::NotFound);
        assert!(last_error().contains("img999"));
        let bad = CString::new("(Qar_I girl").unwrap();
        assert_eq!(krvqr_oracle_execute(corpus, img.as_ptr(), bad.as_ptr(), &mut out), KrvqrStatus::Parse);
        assert_eq!(krvqr_oracle_execute(ptr::null(), img.as_ptr(), prog.as_ptr(), &mut out), KrvqrStatus::NullPointer);
        krvqr_corpus_free(corpus);
        krvqr_corpus_free(ptr::null_mut());
    }
}

#[test]
fn kb_handle_and_errors() {
    unsafe {
        let mut kb = ptr::null_mut();
        assert_eq!(krvqr_kb_open(fixture("kb.jsonl").as_ptr(), &mut kb), KrvqrStatus::Ok);
        assert_eq!(krvqr_kb_len(kb), 300);
        krvqr_kb_free(kb);
        let mut kb = ptr::null_mut();
        assert_eq!(krvqr_kb_open(fixture("missing.jsonl").as_ptr(), &mut kb), KrvqrStatus::Io);
        assert!(kb.is_null());
        assert_eq!(krvqr_kb_open(ptr::null(), &mut kb), KrvqrStatus::NullPointer);
        assert_eq!(krvqr_kb_len(ptr::null()), 0);
    }
}

#[test]
fn canonical_program() {
    unsafe {
        let mut out = ptr::null_mut();
        let mut qtype = 99u8;
        let p = CString::new("( Qar_K  (Qar_I Girl holds) UsedFor )").unwrap();
        assert_eq!(krvqr_program_canonicalize(p.as_ptr(), &mut out, &mut qtype), KrvqrStatus::Ok);
        assert_eq!(take(out), "(Qar_K (Qar_I girl holds) usedfor)");
        assert_eq!(qtype, 5);
        let bad = [0xffu8, 0];
        assert_eq!(krvqr_program_canonicalize(bad.as_ptr().cast(), &mut out, &mut qtype), KrvqrStatus::InvalidUtf8);
    }
}

#[test]
fn rotations() {
    let h = [1.0, 0.5];
    let hi = [0.0, -0.25];
    let (c, s): (Vec<f64>, Vec<f64>) = [0.7f64, -2.0].iter().map(|a| (a.cos(), a.sin())).unzip();
    let (mut t, mut ti) = ([0.0; 2], [0.0; 2]);
    unsafe {
        assert_eq!(krvqr_infer_tail(h.as_ptr(), hi.as_ptr(), c.as_ptr(), s.as_ptr(), 2, t.as_mut_ptr(), ti.as_mut_ptr()), KrvqrStatus::Ok);
        let mut score = -1.0;
        assert_eq!(krvqr_score(h.as_ptr(), hi.as_ptr(), c.as_ptr(), s.as_ptr(), t.as_ptr(), ti.as_ptr(), 2, &mut score), KrvqrStatus::Ok);
        assert!(score.abs() < 1e-12);
        let (mut bh, mut bhi) = ([0.0; 2], [0.0; 2]);
        assert_eq!(krvqr_infer_head(t.as_ptr(), ti.as_ptr(), c.as_ptr(), s.as_ptr(), 2, bh.as_mut_ptr(), bhi.as_mut_ptr()), KrvqrStatus::Ok);
        assert!((bh[1] - h[1]).abs() < 1e-12 && (bhi[1] - hi[1]).abs() < 1e-12);
        let (mut rc, mut rs) = ([0.0; 2], [0.0; 2]);
        assert_eq!(krvqr_infer_relation(h.as_ptr(), hi.as_ptr(), t.as_ptr(), ti.as_ptr(), 2, rc.as_mut_ptr(), rs.as_mut_ptr()), KrvqrStatus::Ok);
        assert!((rc[0] - c[0]).abs() < 1e-12 && (rs[1] - s[1]).abs() < 1e-12);
        let zero = [0.0; 2];
        assert_eq!(krvqr_infer_relation(zero.as_ptr(), zero.as_ptr(), t.as_ptr(), ti.as_ptr(), 2, rc.as_mut_ptr(), rs.as_mut_ptr()), KrvqrStatus::ZeroModulus);
        assert_eq!(krvqr_infer_tail(ptr::null(), hi.as_ptr(), c.as_ptr(), s.as_ptr(), 2, t.as_mut_ptr(), ti.as_mut_ptr()), KrvqrStatus::NullPointer);
    }
}

#[test]
fn embedding_handle() {
    let kb = krvqr::synth::functional_kb(10, 2, 12, 3);
    let cfg = krvqr::kgembed::TrainConfig { dim: 4, epochs: 2, ..Default::default() };
    let emb = krvqr::kgembed::train(&kb, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.txt");
    emb.save(&path).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(krvqr_embedding_load(cpath.as_ptr(), &mut h), KrvqrStatus::Ok);
        assert_eq!(krvqr_embedding_dim(h), 4);
        let mut buf = [0.0; 8];
        let name = CString::new("e000").unwrap();
        assert_eq!(krvqr_embedding_entity_vector(h, name.as_ptr(), buf.as_mut_ptr(), 8), KrvqrStatus::Ok);
        assert_eq!(buf.to_vec(), emb.entity_vector(&"e000".parse().unwrap()).unwrap());
        assert_eq!(krvqr_embedding_entity_vector(h, name.as_ptr(), buf.as_mut_ptr(), 7), KrvqrStatus::BufferTooSmall);
        let unknown = CString::new("nobody").unwrap();
        assert_eq!(krvqr_embedding_entity_vector(h, unknown.as_ptr(), buf.as_mut_ptr(), 8), KrvqrStatus::NotFound);
        krvqr_embedding_free(h);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(krvqr_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/krvqr.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["krvqr_oracle_execute", "krvqr_infer_tail", "KRVQR_STATUS_ZERO_MODULUS", "typedef struct KrvqrCorpus KrvqrCorpus;"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-x", "c", "-Wall", "-Werror"])
        .arg(&header)
        .status()
    else {
        eprintln!("no C compiler found; skipping syntax check");
        return;
    };
    assert!(status.success());
}
