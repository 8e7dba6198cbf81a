//! C ABI over the awtlab core.
//!
//! Every object crosses the boundary as an opaque pointer that must be
//! released with its matching `*_free` function. Every fallible call returns
//! an [`AwtStatus`]; on failure, [`awt_last_error`] returns a description of
//! the failure. That description is thread-local and stays valid until the
//! next failing call on the same thread. Panics are caught at the boundary
//! and reported as [`AwtStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use awtlab::attacks::{load_batch, run_attack, save_batch, AdversarialBatch, AttackConfig, Method};
use awtlab::data::{gen_glyphs, load_dataset, save_dataset, Dataset};
use awtlab::diff::Model;
use awtlab::harness::{emit_report, run_experiment, ExperimentConfig};
use awtlab::metrics::{attack_success_rate, transfer_score};
use awtlab::zoo::{accuracy, load_checkpoint, save_checkpoint, train_checkpoint, Arch, Checkpoint, TrainHyper};
use awtlab::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AwtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Shape = 4,
    Format = 5,
    Io = 6,
    NonFinite = 7,
    Divergence = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AwtMethod {
    Mi = 0,
    Ni = 1,
    Vmi = 2,
    Emi = 3,
    Pgn = 4,
    Ncs = 5,
    Awt = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AwtArch {
    MlpSmall = 0,
    MlpWide = 1,
    CnnSmall = 2,
}

/// Attack knobs; fill with [`awt_attack_config_default`] and adjust.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AwtAttackConfig {
    /// An [`AwtMethod`] code.
    pub method: u32,
    pub eps: f64,
    pub steps: usize,
    pub alpha: f64,
    pub mu: f64,
    pub n_samples: usize,
    pub zeta: f64,
    pub omega: f64,
    pub beta: f64,
    pub lr: f64,
    pub rng_seed: u64,
}

/// Training knobs; fill with [`awt_train_config_default`] and adjust.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AwtTrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub momentum: f64,
}

/// A labelled image set.
pub struct AwtDataset(Dataset);

/// A trained model together with its checkpoint.
pub struct AwtModel {
    ckpt: Checkpoint,
    model: Model,
}

/// Adversarial examples crafted on one surrogate.
pub struct AwtBatch(AdversarialBatch);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> AwtStatus {
    match e {
        Error::Stage { source, .. } => status_of(source),
        Error::InvalidArgument(_) | Error::LabelOutOfRange { .. } => AwtStatus::InvalidArgument,
        Error::Config(_) => AwtStatus::Config,
        Error::Shape { .. } | Error::LayoutMismatch(_) => AwtStatus::Shape,
        Error::BadMagic { .. }
        | Error::UnexpectedEof { .. }
        | Error::Version { .. }
        | Error::CorruptCheckpoint { .. }
        | Error::Header(_) => AwtStatus::Format,
        Error::Io { .. } => AwtStatus::Io,
        Error::NonFinite { .. } => AwtStatus::NonFinite,
        Error::Divergence { .. } => AwtStatus::Divergence,
    }
}

enum Fail {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AwtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AwtStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_last_error(format!("null pointer passed for {what}"));
            AwtStatus::NullPointer
        }
        Ok(Err(Fail::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            AwtStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    unsafe { p.as_ref() }.ok_or(Fail::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    unsafe { p.as_mut() }.ok_or(Fail::Null(what))
}

unsafe fn path<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Fail::Core(Error::InvalidArgument(format!("{what} is not valid UTF-8"))))
}

fn method_of(m: AwtMethod) -> Method {
    match m {
        AwtMethod::Mi => Method::Mi,
        AwtMethod::Ni => Method::Ni,
        AwtMethod::Vmi => Method::Vmi,
        AwtMethod::Emi => Method::Emi,
        AwtMethod::Pgn => Method::Pgn,
        AwtMethod::Ncs => Method::Ncs,
        AwtMethod::Awt => Method::Awt,
    }
}

fn arch_of(a: AwtArch) -> Arch {
    match a {
        AwtArch::MlpSmall => Arch::MlpSmall,
        AwtArch::MlpWide => Arch::MlpWide,
        AwtArch::CnnSmall => Arch::CnnSmall,
    }
}

fn method_from_raw(raw: u32) -> Result<AwtMethod, Fail> {
    Ok(match raw {
        0 => AwtMethod::Mi,
        1 => AwtMethod::Ni,
        2 => AwtMethod::Vmi,
        3 => AwtMethod::Emi,
        4 => AwtMethod::Pgn,
        5 => AwtMethod::Ncs,
        6 => AwtMethod::Awt,
        _ => return Err(Error::InvalidArgument(format!("unknown method code {raw}")).into()),
    })
}

fn arch_from_raw(raw: u32) -> Result<AwtArch, Fail> {
    Ok(match raw {
        0 => AwtArch::MlpSmall,
        1 => AwtArch::MlpWide,
        2 => AwtArch::CnnSmall,
        _ => return Err(Error::InvalidArgument(format!("unknown architecture code {raw}")).into()),
    })
}

fn model_handle(ckpt: Checkpoint) -> Result<*mut AwtModel, Fail> {
    let model = ckpt.model()?;
    Ok(Box::into_raw(Box::new(AwtModel { ckpt, model })))
}

/// Message of the most recent failure on this thread, or an empty string.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn awt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn awt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---- datasets ----

/// Generates the glyph train and test splits.
///
/// # Safety
/// `train` and `test` must be valid pointers to writable handle slots.
#[no_mangle]
pub unsafe extern "C" fn awt_dataset_generate(
    seed: u64,
    n_train: usize,
    n_test: usize,
    train: *mut *mut AwtDataset,
    test: *mut *mut AwtDataset,
) -> AwtStatus {
    guard(|| {
        let train = unsafe { out(train, "train") }?;
        let test = unsafe { out(test, "test") }?;
        let (a, b) = gen_glyphs(seed, n_train, n_test)?;
        *train = Box::into_raw(Box::new(AwtDataset(a)));
        *test = Box::into_raw(Box::new(AwtDataset(b)));
        Ok(())
    })
}

/// # Safety
/// `file` must be a NUL-terminated string and `dataset` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn awt_dataset_load(file: *const c_char, dataset: *mut *mut AwtDataset) -> AwtStatus {
    guard(|| {
        let slot = unsafe { out(dataset, "dataset") }?;
        let d = load_dataset(unsafe { path(file, "file") }?)?;
        *slot = Box::into_raw(Box::new(AwtDataset(d)));
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from this library and `file` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn awt_dataset_save(dataset: *const AwtDataset, file: *const c_char) -> AwtStatus {
    guard(|| {
        let d = unsafe { as_ref(dataset, "dataset") }?;
        save_dataset(&d.0, unsafe { path(file, "file") }?)?;
        Ok(())
    })
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn awt_dataset_len(dataset: *const AwtDataset) -> usize {
    unsafe { dataset.as_ref() }.map_or(0, |d| d.0.len())
}

/// # Safety
/// `dataset` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn awt_dataset_free(dataset: *mut AwtDataset) {
    if !dataset.is_null() {
        drop(unsafe { Box::from_raw(dataset) });
    }
}

// ---- models ----

/// Writes the default training recipe into `config`.
///
/// # Safety
/// `config` must be a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn awt_train_config_default(config: *mut AwtTrainConfig) -> AwtStatus {
    guard(|| {
        let c = unsafe { out(config, "config") }?;
        let h = TrainHyper::default();
        *c = AwtTrainConfig {
            epochs: h.epochs,
            batch: h.batch,
            lr: h.lr,
            momentum: h.momentum,
        };
        Ok(())
    })
}

/// Trains a model of architecture `arch` (an [`AwtArch`] code) from seed `seed`.
///
/// # Safety
/// Dataset handles must come from this library; `config` and `model` must be
/// valid pointers.
#[no_mangle]
pub unsafe extern "C" fn awt_model_train(
    arch: u32,
    seed: u64,
    train: *const AwtDataset,
    test: *const AwtDataset,
    config: *const AwtTrainConfig,
    model: *mut *mut AwtModel,
) -> AwtStatus {
    guard(|| {
        let train = unsafe { as_ref(train, "train") }?;
        let test = unsafe { as_ref(test, "test") }?;
        let c = unsafe { as_ref(config, "config") }?;
        let slot = unsafe { out(model, "model") }?;
        let hyper = TrainHyper {
            epochs: c.epochs,
            batch: c.batch,
            lr: c.lr,
            momentum: c.momentum,
            seed,
            ..TrainHyper::default()
        };
        let ckpt = train_checkpoint(arch_of(arch_from_raw(arch)?), seed, &train.0, &test.0, &hyper)?;
        *slot = model_handle(ckpt)?;
        Ok(())
    })
}

/// # Safety
/// `file` must be NUL-terminated and `model` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn awt_model_load(file: *const c_char, model: *mut *mut AwtModel) -> AwtStatus {
    guard(|| {
        let slot = unsafe { out(model, "model") }?;
        *slot = model_handle(load_checkpoint(unsafe { path(file, "file") }?)?)?;
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and `file` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn awt_model_save(model: *const AwtModel, file: *const c_char) -> AwtStatus {
    guard(|| {
        let m = unsafe { as_ref(model, "model") }?;
        save_checkpoint(&m.ckpt, unsafe { path(file, "file") }?)?;
        Ok(())
    })
}

/// Content hash of the checkpoint.
///
/// # Safety
/// `model` must come from this library and `hash` be writable.
#[no_mangle]
pub unsafe extern "C" fn awt_model_hash(model: *const AwtModel, hash: *mut u64) -> AwtStatus {
    guard(|| {
        let m = unsafe { as_ref(model, "model") }?;
        *unsafe { out(hash, "hash") }? = m.ckpt.content_hash();
        Ok(())
    })
}

/// Top-1 accuracy on `dataset`.
///
/// # Safety
/// Handles must come from this library and `acc` be writable.
#[no_mangle]
pub unsafe extern "C" fn awt_model_accuracy(
    model: *const AwtModel,
    dataset: *const AwtDataset,
    acc: *mut f64,
) -> AwtStatus {
    guard(|| {
        let m = unsafe { as_ref(model, "model") }?;
        let d = unsafe { as_ref(dataset, "dataset") }?;
        let slot = unsafe { out(acc, "acc") }?;
        if d.0.is_empty() {
            return Err(Error::InvalidArgument("empty dataset".into()).into());
        }
        *slot = accuracy(&m.model, &d.0)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn awt_model_free(model: *mut AwtModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

// ---- attacks ----

/// Writes the defaults for `method` (an [`AwtMethod`] code) with budget
/// `eps` over `steps` iterations into `config`.
///
/// # Safety
/// `config` must be a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn awt_attack_config_default(
    method: u32,
    eps: f64,
    steps: usize,
    config: *mut AwtAttackConfig,
) -> AwtStatus {
    guard(|| {
        let slot = unsafe { out(config, "config") }?;
        let method = method_from_raw(method)?;
        let c = AttackConfig::with_budget(method_of(method), eps, steps);
        *slot = AwtAttackConfig {
            method: method as u32,
            eps: c.eps,
            steps: c.steps,
            alpha: c.alpha,
            mu: c.mu,
            n_samples: c.n_samples,
            zeta: c.zeta,
            omega: c.omega,
            beta: c.beta,
            lr: c.lr,
            rng_seed: c.rng_seed,
        };
        Ok(())
    })
}

/// Attacks the first `n` samples of `dataset` (all when `n` is 0) on `surrogate`.
///
/// # Safety
/// Handles must come from this library; `config` and `batch` must be valid.
#[no_mangle]
pub unsafe extern "C" fn awt_attack(
    surrogate: *const AwtModel,
    dataset: *const AwtDataset,
    n: usize,
    config: *const AwtAttackConfig,
    batch: *mut *mut AwtBatch,
) -> AwtStatus {
    guard(|| {
        let m = unsafe { as_ref(surrogate, "surrogate") }?;
        let d = unsafe { as_ref(dataset, "dataset") }?;
        let c = unsafe { as_ref(config, "config") }?;
        let slot = unsafe { out(batch, "batch") }?;
        let cfg = AttackConfig {
            method: method_of(method_from_raw(c.method)?),
            eps: c.eps,
            steps: c.steps,
            alpha: c.alpha,
            mu: c.mu,
            n_samples: c.n_samples,
            zeta: c.zeta,
            omega: c.omega,
            beta: c.beta,
            lr: c.lr,
            rng_seed: c.rng_seed,
        };
        let take = if n == 0 { d.0.len() } else { n.min(d.0.len()) };
        let (x, y) = d.0.head(take);
        let b = run_attack(&m.model, &x, &y, &cfg)?;
        *slot = Box::into_raw(Box::new(AwtBatch(b)));
        Ok(())
    })
}

/// # Safety
/// `batch` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn awt_batch_len(batch: *const AwtBatch) -> usize {
    unsafe { batch.as_ref() }.map_or(0, |b| b.0.len())
}

/// Largest absolute pixel change in the batch.
///
/// # Safety
/// `batch` must come from this library and `value` be writable.
#[no_mangle]
pub unsafe extern "C" fn awt_batch_max_perturbation(batch: *const AwtBatch, value: *mut f64) -> AwtStatus {
    guard(|| {
        let b = unsafe { as_ref(batch, "batch") }?;
        *unsafe { out(value, "value") }? = b.0.max_perturbation();
        Ok(())
    })
}

/// # Safety
/// `batch` must come from this library and `file` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn awt_batch_save(batch: *const AwtBatch, file: *const c_char) -> AwtStatus {
    guard(|| {
        let b = unsafe { as_ref(batch, "batch") }?;
        save_batch(&b.0, unsafe { path(file, "file") }?)?;
        Ok(())
    })
}

/// # Safety
/// `file` must be NUL-terminated and `batch` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn awt_batch_load(file: *const c_char, batch: *mut *mut AwtBatch) -> AwtStatus {
    guard(|| {
        let slot = unsafe { out(batch, "batch") }?;
        let b = load_batch(unsafe { path(file, "file") }?)?;
        *slot = Box::into_raw(Box::new(AwtBatch(b)));
        Ok(())
    })
}

/// # Safety
/// `batch` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn awt_batch_free(batch: *mut AwtBatch) {
    if !batch.is_null() {
        drop(unsafe { Box::from_raw(batch) });
    }
}

// ---- metrics ----

/// Fraction of adversarial examples that `target` misclassifies.
///
/// # Safety
/// Handles must come from this library and `rate` be writable.
#[no_mangle]
pub unsafe extern "C" fn awt_attack_success_rate(
    target: *const AwtModel,
    batch: *const AwtBatch,
    rate: *mut f64,
) -> AwtStatus {
    guard(|| {
        let m = unsafe { as_ref(target, "target") }?;
        let b = unsafe { as_ref(batch, "batch") }?;
        *unsafe { out(rate, "rate") }? = attack_success_rate(&m.model, &b.0)?;
        Ok(())
    })
}

/// Weight-perturbation transferability score of `batch` on `surrogate`.
///
/// # Safety
/// Handles must come from this library and `score` be writable.
#[no_mangle]
pub unsafe extern "C" fn awt_transfer_score(
    batch: *const AwtBatch,
    surrogate: *const AwtModel,
    eps: f64,
    n_eta: usize,
    seed: u64,
    score: *mut f64,
) -> AwtStatus {
    guard(|| {
        let b = unsafe { as_ref(batch, "batch") }?;
        let m = unsafe { as_ref(surrogate, "surrogate") }?;
        *unsafe { out(score, "score") }? = transfer_score(&b.0, &m.model, eps, n_eta, seed)?;
        Ok(())
    })
}

// ---- experiments ----

/// Runs the experiment described by the TOML file at `config` and writes the
/// report files into `out_dir` (the config's own directory when null).
///
/// # Safety
/// `config` must be NUL-terminated; `out_dir` must be null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn awt_experiment_run(config: *const c_char, out_dir: *const c_char) -> AwtStatus {
    guard(|| {
        let cfg = ExperimentConfig::load(unsafe { path(config, "config") }?)?;
        let dir = if out_dir.is_null() {
            cfg.output_dir.clone()
        } else {
            unsafe { path(out_dir, "out_dir") }?.into()
        };
        let report = run_experiment(&cfg)?;
        emit_report(&report, &dir)?;
        Ok(())
    })
}
