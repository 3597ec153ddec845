//! C interface to trained TP-Transformer checkpoints and the analysis checks.
//!
//! Models are opaque handles created by [`tpt_model_load`] and released with
//! [`tpt_model_free`]. Every fallible call returns a [`TptStatus`]; on failure
//! the message is available from [`tpt_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tp_transformer::analysis::{binding_ambiguity_demo, hadamard_compression_check};
use tp_transformer::data::{read_jsonl, Vocabulary};
use tp_transformer::model::TpTransformer;
use tp_transformer::training::{evaluate_exact_match, greedy_decode, load_checkpoint};
use tp_transformer::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TptStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Format = 4,
    Vocabulary = 5,
    Length = 6,
    Config = 7,
    Numerical = 8,
    BufferTooSmall = 9,
    Internal = 10,
}

/// A loaded checkpoint.
pub struct TptModel {
    model: TpTransformer,
    vocab: Vocabulary,
    step: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> TptStatus {
    match err {
        Error::Io { .. } => TptStatus::Io,
        Error::Format(_) | Error::Parse { .. } => TptStatus::Format,
        Error::Vocabulary(_) => TptStatus::Vocabulary,
        Error::Length(_) => TptStatus::Length,
        Error::Config(_) => TptStatus::Config,
        Error::Numerical { .. } | Error::DegenerateMask { .. } | Error::DegenerateBatch => {
            TptStatus::Numerical
        }
        Error::Dimension { .. } | Error::Contract(_) => TptStatus::Internal,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (TptStatus, String)>) -> TptStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TptStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TptStatus::Internal
        }
    }
}

fn lib_err(e: Error) -> (TptStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (TptStatus, String) {
    (TptStatus::NullArgument, format!("`{what}` is null"))
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, (TptStatus, String)> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        (
            TptStatus::InvalidUtf8,
            format!("`{what}` is not valid UTF-8"),
        )
    })
}

/// Copies `s` plus a NUL into `buf` of `cap` bytes, reporting the needed
/// size (without NUL) through `needed` when non-null.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
unsafe fn copy_out(
    s: &str,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> Result<(), (TptStatus, String)> {
    if !needed.is_null() {
        *needed = s.len();
    }
    if buf.is_null() || cap < s.len() + 1 {
        return Err((
            TptStatus::BufferTooSmall,
            format!(
                "buffer of {cap} bytes cannot hold {} bytes plus NUL",
                s.len()
            ),
        ));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to fit) and returns its full length in bytes.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn tpt_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Loads a checkpoint file into a new handle stored in `*out`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tpt_model_load(path: *const c_char, out: *mut *mut TptModel) -> TptStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = text(path, "path")?;
        let ck = load_checkpoint(path).map_err(lib_err)?;
        let handle = TptModel {
            model: ck.model,
            vocab: ck.vocab,
            step: ck.optimizer.step,
        };
        *out = Box::into_raw(Box::new(handle));
        Ok(())
    })
}

/// Releases a handle from [`tpt_model_load`]. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tpt_model_free(model: *mut TptModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Vocabulary size, hidden size, head count, layer count and training step
/// of a loaded model. Null output pointers are skipped.
///
/// # Safety
/// `model` must be a live handle; outputs must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn tpt_model_info(
    model: *const TptModel,
    vocab_size: *mut usize,
    d_model: *mut usize,
    heads: *mut usize,
    layers: *mut usize,
    step: *mut u64,
) -> TptStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let c = &m.model.config;
        for (p, v) in [
            (vocab_size, c.vocab_size),
            (d_model, c.d_model),
            (heads, c.heads),
            (layers, c.layers),
        ] {
            if !p.is_null() {
                *p = v;
            }
        }
        if !step.is_null() {
            *step = m.step;
        }
        Ok(())
    })
}

/// Greedy answer to `question`, written NUL-terminated into `buf`.
/// `needed` receives the answer length in bytes and `truncated` whether
/// decoding stopped at `max_steps`; either may be null.
///
/// # Safety
/// `model` must be a live handle, `question` a NUL-terminated string and
/// `buf` null or `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn tpt_decode(
    model: *const TptModel,
    question: *const c_char,
    max_steps: usize,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
    truncated: *mut bool,
) -> TptStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let q = text(question, "question")?;
        let d = greedy_decode(&m.model, &m.vocab, q, max_steps).map_err(lib_err)?;
        if !truncated.is_null() {
            *truncated = d.truncated;
        }
        copy_out(&d.text, buf, cap, needed)
    })
}

/// Exact-match accuracy over a dataset file.
///
/// # Safety
/// `model` must be a live handle, `path` a NUL-terminated string and
/// `accuracy` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tpt_evaluate(
    model: *const TptModel,
    path: *const c_char,
    accuracy: *mut f64,
) -> TptStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if accuracy.is_null() {
            return Err(null("accuracy"));
        }
        let samples = read_jsonl(text(path, "path")?).map_err(lib_err)?;
        *accuracy = evaluate_exact_match(&m.model, &m.vocab, &samples).map_err(lib_err)?;
        Ok(())
    })
}

/// Swapped-pairing collision rates without (`standard_rate`) and with
/// (`tp_rate`) role binding over `trials` random scenarios of size `dim`.
///
/// # Safety
/// Both outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tpt_binding_demo(
    dim: usize,
    seed: u64,
    trials: usize,
    standard_rate: *mut f64,
    tp_rate: *mut f64,
) -> TptStatus {
    guard(|| {
        if standard_rate.is_null() || tp_rate.is_null() {
            return Err(null("rate output"));
        }
        let r = binding_ambiguity_demo(dim, seed, trials).map_err(lib_err)?;
        *standard_rate = r.standard_collision_rate();
        *tp_rate = r.tp_collision_rate();
        Ok(())
    })
}

/// Largest deviation between `diag(Mᵀ v rᵀ N)` and `(Mᵀv) ⊙ (Nᵀr)` over
/// `trials` random draws, general and orthonormal maps combined.
///
/// # Safety
/// `max_deviation` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tpt_hadamard_check(
    d_model: usize,
    d_head: usize,
    seed: u64,
    trials: usize,
    max_deviation: *mut f64,
) -> TptStatus {
    guard(|| {
        if max_deviation.is_null() {
            return Err(null("max_deviation"));
        }
        let r = hadamard_compression_check(d_model, d_head, seed, trials).map_err(lib_err)?;
        *max_deviation = r.max_deviation.max(r.max_deviation_orthonormal);
        Ok(())
    })
}
