use std::ffi::{c_char, CString};
use std::path::Path;
use std::ptr;

use tp_transformer::data::{generate_dataset, write_jsonl, Vocabulary};
use tp_transformer::model::{ModelConfig, TpTransformer};
use tp_transformer::training::{save_checkpoint, Checkpoint, OptimizerState};
use tp_transformer_ffi::*;

fn write_model(dir: &Path) -> CString {
    let samples = generate_dataset("add_sub", 20, 1).unwrap();
    let vocab = Vocabulary::build(&samples).unwrap();
    let model = TpTransformer::new(ModelConfig::tiny(vocab.len()), 3).unwrap();
    let ckpt = Checkpoint {
        optimizer: OptimizerState::new(&model.params),
        model,
        vocab,
        run: serde_json::Value::Null,
    };
    let path = dir.join("m.ckpt");
    save_checkpoint(&path, &ckpt).unwrap();
    write_jsonl(dir.join("d.jsonl"), &samples).unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { tpt_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn load_inspect_decode_free() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_model(dir.path());
    let mut model = ptr::null_mut();
    assert_eq!(
        unsafe { tpt_model_load(path.as_ptr(), &mut model) },
        TptStatus::Ok
    );
    assert!(!model.is_null());

    let (mut vocab, mut d_model, mut heads, mut layers, mut step) = (0, 0, 0, 0, 7u64);
    let st = unsafe {
        tpt_model_info(
            model,
            &mut vocab,
            &mut d_model,
            &mut heads,
            &mut layers,
            &mut step,
        )
    };
    assert_eq!(st, TptStatus::Ok);
    assert_eq!((d_model, heads, layers, step), (16, 2, 2, 0));
    assert!(vocab > 3);

    let q = CString::new("Calculate 2 + 3.").unwrap();
    let mut buf = vec![0 as c_char; 64];
    let (mut needed, mut truncated) = (0usize, false);
    let st = unsafe {
        tpt_decode(
            model,
            q.as_ptr(),
            4,
            buf.as_mut_ptr(),
            buf.len(),
            &mut needed,
            &mut truncated,
        )
    };
    assert_eq!(st, TptStatus::Ok);
    assert!(needed <= 4);
    assert_eq!(buf[needed], 0);

    let mut tiny = [0 as c_char; 1];
    let st = unsafe {
        tpt_decode(
            model,
            q.as_ptr(),
            4,
            tiny.as_mut_ptr(),
            1,
            &mut needed,
            ptr::null_mut(),
        )
    };
    if needed > 0 {
        assert_eq!(st, TptStatus::BufferTooSmall);
        assert!(last_error().contains("buffer"));
    }

    let data = CString::new(dir.path().join("d.jsonl").to_str().unwrap()).unwrap();
    let mut acc = -1.0;
    assert_eq!(
        unsafe { tpt_evaluate(model, data.as_ptr(), &mut acc) },
        TptStatus::Ok
    );
    assert!((0.0..=1.0).contains(&acc));

    unsafe { tpt_model_free(model) };
    unsafe { tpt_model_free(ptr::null_mut()) };
}

#[test]
fn errors_map_to_status_codes() {
    let mut model = ptr::null_mut();
    assert_eq!(
        unsafe { tpt_model_load(ptr::null(), &mut model) },
        TptStatus::NullArgument
    );
    let missing = CString::new("/nonexistent/m.ckpt").unwrap();
    assert_eq!(
        unsafe { tpt_model_load(missing.as_ptr(), &mut model) },
        TptStatus::Io
    );
    assert!(model.is_null());
    assert!(last_error().contains("nonexistent"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ckpt");
    std::fs::write(&bad, b"NOTACKPT and some bytes").unwrap();
    let bad = CString::new(bad.to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { tpt_model_load(bad.as_ptr(), &mut model) },
        TptStatus::Format
    );

    let q = CString::new("x").unwrap();
    let st = unsafe {
        tpt_decode(
            ptr::null(),
            q.as_ptr(),
            1,
            ptr::null_mut(),
            0,
            ptr::null_mut(),
            ptr::null_mut(),
        )
    };
    assert_eq!(st, TptStatus::NullArgument);
}

#[test]
fn analysis_checks() {
    let (mut std_rate, mut tp_rate) = (0.0, 1.0);
    assert_eq!(
        unsafe { tpt_binding_demo(8, 0, 200, &mut std_rate, &mut tp_rate) },
        TptStatus::Ok
    );
    assert_eq!((std_rate, tp_rate), (1.0, 0.0));
    assert_eq!(
        unsafe { tpt_binding_demo(1, 0, 10, &mut std_rate, &mut tp_rate) },
        TptStatus::Config
    );

    let mut dev = 1.0;
    assert_eq!(
        unsafe { tpt_hadamard_check(64, 16, 0, 100, &mut dev) },
        TptStatus::Ok
    );
    assert!(dev < 1e-12);
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/include/tp_transformer.h"
    ))
    .unwrap();
    for name in [
        "tpt_last_error",
        "tpt_model_load",
        "tpt_model_free",
        "tpt_model_info",
        "tpt_decode",
        "tpt_evaluate",
        "tpt_binding_demo",
        "tpt_hadamard_check",
        "typedef struct TptModel TptModel",
        "TPT_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/tp_transformer.h");
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .status()
    else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    assert!(status.success());
}
