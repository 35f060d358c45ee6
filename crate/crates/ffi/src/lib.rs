//! C ABI over the `beamdiff` library.
//!
//! Every function returns a [`BdStatus`]; on failure the message is kept in a
//! thread-local slot readable with [`bd_last_error_message`]. Objects are
//! opaque handles created by `*_new`/`*_load` functions and released with the
//! matching `*_free`. Panics never cross the boundary.
//!
//! Pointer arguments must be null or valid for the access the function
//! documents; strings are NUL-terminated UTF-8; handles must not be used
//! after they are freed or from two threads at once.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use beamdiff::channel::SnrProfile;
use beamdiff::env::{warmup_probes, HistoryBuffer, ProbeRecord, Proposer, SlotView};
use beamdiff::harness::{
    evaluate, gen_data, load_checkpoint, save_checkpoint, summarize, train_models, Experiment, ExperimentConfig,
    Models, ProposerKind, Split,
};
use beamdiff::rng::{rng_from_seed, SimRng};
use beamdiff::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Validation = 4,
    Contract = 5,
    Training = 6,
    Format = 7,
    Io = 8,
    Usage = 9,
    Panic = 10,
}

impl From<&Error> for BdStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config(_) => BdStatus::Config,
            Error::Validation { .. } => BdStatus::Validation,
            Error::Contract(_) => BdStatus::Contract,
            Error::Training(_) => BdStatus::Training,
            Error::Format { .. } => BdStatus::Format,
            Error::Io { .. } => BdStatus::Io,
            Error::Usage(_) => BdStatus::Usage,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: BdStatus, msg: impl Into<String>) -> BdStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<(), BdStatus>) -> BdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            BdStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => fail(BdStatus::Panic, "internal panic"),
    }
}

fn lib<T>(r: beamdiff::Result<T>) -> Result<T, BdStatus> {
    r.map_err(|e| fail(BdStatus::from(&e), e.to_string()))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, BdStatus> {
    if p.is_null() {
        return Err(fail(BdStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(BdStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, BdStatus> {
    p.as_ref().ok_or_else(|| fail(BdStatus::NullPointer, format!("{what} is null")))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, BdStatus> {
    p.as_mut().ok_or_else(|| fail(BdStatus::NullPointer, format!("{what} is null")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), BdStatus> {
    if out.is_null() {
        return Err(fail(BdStatus::NullPointer, "output pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
#[no_mangle]
pub unsafe extern "C" fn bd_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Opaque experiment: configuration plus channel model.
pub struct BdExperiment(Experiment);

/// Opaque set of trained models.
pub struct BdModels(Models);

/// Opaque online proposer with its own history and random stream.
pub struct BdSession {
    proposer: Box<dyn Proposer>,
    history: HistoryBuffer,
    rng: SimRng,
    dummy: SnrProfile,
    probes: usize,
    warmup: usize,
    t: usize,
    pending: Option<Vec<usize>>,
}

/// Seed-averaged evaluation metrics. `r_probe` is NaN when no miss occurred.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct BdMetrics {
    pub exec_snr_db: f64,
    pub oracle_snr_db: f64,
    pub oracle_gap_db: f64,
    pub p_miss: f64,
    pub r_probe: f64,
    pub top1_coverage: f64,
    pub top2_coverage: f64,
    pub top4_coverage: f64,
}

/// Builds an experiment from a JSON configuration document.
#[no_mangle]
pub unsafe extern "C" fn bd_experiment_from_json(json: *const c_char, out: *mut *mut BdExperiment) -> BdStatus {
    guard(|| {
        let json = text(json, "json")?;
        let cfg = lib(ExperimentConfig::from_json(json, Path::new("<json>")))?;
        put(out, BdExperiment(lib(Experiment::new(cfg))?))
    })
}

/// Builds an experiment from the built-in `"desk"` or `"full"` profile.
#[no_mangle]
pub unsafe extern "C" fn bd_experiment_from_profile(name: *const c_char, out: *mut *mut BdExperiment) -> BdStatus {
    guard(|| {
        let cfg = match text(name, "name")? {
            "desk" => ExperimentConfig::desk(),
            "full" => ExperimentConfig::full(),
            other => return Err(fail(BdStatus::InvalidArgument, format!("unknown profile `{other}`"))),
        };
        put(out, BdExperiment(lib(Experiment::new(cfg))?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn bd_experiment_free(exp: *mut BdExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Codebook size and probing budget of an experiment.
#[no_mangle]
pub unsafe extern "C" fn bd_experiment_dims(exp: *const BdExperiment, n_beams: *mut usize, probes: *mut usize) -> BdStatus {
    guard(|| {
        let exp = borrow(exp, "experiment")?;
        *borrow_mut(n_beams, "n_beams")? = exp.0.config.n_beams();
        *borrow_mut(probes, "probes")? = exp.0.config.probing.probes;
        Ok(())
    })
}

/// Writes `train.jsonl` and `eval.jsonl` into `out_dir`.
#[no_mangle]
pub unsafe extern "C" fn bd_gen_data(exp: *const BdExperiment, out_dir: *const c_char) -> BdStatus {
    guard(|| {
        let exp = borrow(exp, "experiment")?;
        lib(gen_data(&exp.0, Path::new(text(out_dir, "out_dir")?)))
    })
}

/// Collects behavior data and trains the selected models.
#[no_mangle]
pub unsafe extern "C" fn bd_models_train(
    exp: *const BdExperiment,
    d3pm: bool,
    trm: bool,
    out: *mut *mut BdModels,
) -> BdStatus {
    guard(|| {
        let exp = borrow(exp, "experiment")?;
        let logs = lib(exp.0.collect(Split::Train))?;
        let (models, _) = lib(train_models(&exp.0.config, &logs, d3pm, trm))?;
        put(out, BdModels(models))
    })
}

#[no_mangle]
pub unsafe extern "C" fn bd_models_load(exp: *const BdExperiment, path: *const c_char, out: *mut *mut BdModels) -> BdStatus {
    guard(|| {
        let exp = borrow(exp, "experiment")?;
        let models = lib(load_checkpoint(&exp.0.config, Path::new(text(path, "path")?)))?;
        put(out, BdModels(models))
    })
}

#[no_mangle]
pub unsafe extern "C" fn bd_models_save(models: *const BdModels, path: *const c_char) -> BdStatus {
    guard(|| {
        let models = borrow(models, "models")?;
        lib(save_checkpoint(Path::new(text(path, "path")?), &models.0))
    })
}

#[no_mangle]
pub unsafe extern "C" fn bd_models_free(models: *mut BdModels) {
    if !models.is_null() {
        drop(Box::from_raw(models));
    }
}

fn proposer_kind(name: &str) -> Result<ProposerKind, BdStatus> {
    lib(name.parse::<ProposerKind>())
}

/// Evaluates a proposer on the held-out trajectories and writes the
/// seed-averaged metrics. `models` may be null for non-learned proposers.
#[no_mangle]
pub unsafe extern "C" fn bd_evaluate(
    exp: *const BdExperiment,
    models: *const BdModels,
    proposer: *const c_char,
    seeds: usize,
    out: *mut BdMetrics,
) -> BdStatus {
    guard(|| {
        let exp = borrow(exp, "experiment")?;
        let kind = proposer_kind(text(proposer, "proposer")?)?;
        if seeds == 0 {
            return Err(fail(BdStatus::InvalidArgument, "seeds must be positive"));
        }
        let empty = Models::default();
        let models = models.as_ref().map_or(&empty, |m| &m.0);
        let trajectories = exp.0.trajectories(Split::Eval);
        let outcomes = lib(evaluate(&exp.0, &trajectories, kind, models, seeds, true))?;
        let reports: Vec<_> = outcomes.into_iter().map(|o| o.report).collect();
        let summary = summarize(&reports);
        let get = |name: &str| summary.iter().find(|s| s.metric == name).map_or(f64::NAN, |s| s.mean);
        *borrow_mut(out, "out")? = BdMetrics {
            exec_snr_db: get("exec_snr_db"),
            oracle_snr_db: get("oracle_snr_db"),
            oracle_gap_db: get("oracle_gap_db"),
            p_miss: get("p_miss"),
            r_probe: get("r_probe"),
            top1_coverage: get("top1_coverage"),
            top2_coverage: get("top2_coverage"),
            top4_coverage: get("top4_coverage"),
        };
        Ok(())
    })
}

/// Starts an online session for a proposer. The first `warmup_slots`
/// proposals follow the round-robin sweep. The oracle stub needs the true
/// SNR profile and is not available here.
#[no_mangle]
pub unsafe extern "C" fn bd_session_new(
    exp: *const BdExperiment,
    models: *const BdModels,
    proposer: *const c_char,
    seed: u64,
    out: *mut *mut BdSession,
) -> BdStatus {
    guard(|| {
        let exp = borrow(exp, "experiment")?;
        let kind = proposer_kind(text(proposer, "proposer")?)?;
        if kind == ProposerKind::OracleStub {
            return Err(fail(BdStatus::Usage, "the oracle stub cannot run without the true SNR profile"));
        }
        let empty = Models::default();
        let models = models.as_ref().map_or(&empty, |m| &m.0);
        let cfg = &exp.0.config;
        let mut proposer = lib(beamdiff::harness::make_proposer(cfg, kind, models))?;
        proposer.reset();
        put(
            out,
            BdSession {
                proposer,
                history: HistoryBuffer::new(cfg.probing.history),
                rng: rng_from_seed(seed),
                dummy: SnrProfile::from_gains(vec![0.0; cfg.n_beams()]),
                probes: cfg.probing.probes,
                warmup: cfg.probing.warmup_slots,
                t: 0,
                pending: None,
            },
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn bd_session_free(session: *mut BdSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Proposes the probe set for the next slot into `probes_out` (capacity
/// `probes_cap` ≥ P) and the ordered proposal list into `list_out` (up to
/// `list_cap` entries; `list_len` receives the number written).
#[no_mangle]
pub unsafe extern "C" fn bd_session_propose(
    session: *mut BdSession,
    probes_out: *mut u32,
    probes_cap: usize,
    list_out: *mut u32,
    list_cap: usize,
    list_len: *mut usize,
) -> BdStatus {
    guard(|| {
        let s = borrow_mut(session, "session")?;
        if probes_out.is_null() {
            return Err(fail(BdStatus::NullPointer, "probes_out is null"));
        }
        if probes_cap < s.probes {
            return Err(fail(BdStatus::InvalidArgument, format!("probes_cap must be at least {}", s.probes)));
        }
        let n_beams = s.dummy.len();
        let (probes, list) = if s.t < s.warmup {
            (warmup_probes(s.t, s.probes, n_beams), Vec::new())
        } else {
            let view = SlotView { t: s.t, profile: &s.dummy };
            let p = lib(s.proposer.propose(&s.history, view, &mut s.rng))?;
            (p.probes, p.list)
        };
        for (i, &b) in probes.iter().enumerate() {
            *probes_out.add(i) = b as u32;
        }
        let n = list.len().min(list_cap);
        if n > 0 && list_out.is_null() {
            return Err(fail(BdStatus::NullPointer, "list_out is null"));
        }
        for (i, &b) in list.iter().take(n).enumerate() {
            *list_out.add(i) = b as u32;
        }
        if !list_len.is_null() {
            *list_len = n;
        }
        s.pending = Some(probes);
        Ok(())
    })
}

/// Reports the feedback (dB, one per probe in proposal order) for the last
/// proposed probe set. Returns the served probe position in `served_pos`.
#[no_mangle]
pub unsafe extern "C" fn bd_session_observe(
    session: *mut BdSession,
    feedback_db: *const f64,
    n: usize,
    served_pos: *mut usize,
) -> BdStatus {
    guard(|| {
        let s = borrow_mut(session, "session")?;
        let probes = s.pending.take().ok_or_else(|| fail(BdStatus::Contract, "observe called without a pending proposal"))?;
        if feedback_db.is_null() {
            s.pending = Some(probes);
            return Err(fail(BdStatus::NullPointer, "feedback_db is null"));
        }
        if n != probes.len() {
            s.pending = Some(probes);
            return Err(fail(BdStatus::InvalidArgument, format!("expected {} feedback values", s.probes)));
        }
        let fb = std::slice::from_raw_parts(feedback_db, n).to_vec();
        if fb.iter().any(|v| !v.is_finite()) {
            s.pending = Some(probes);
            return Err(fail(BdStatus::InvalidArgument, "feedback must be finite"));
        }
        let mut pos = 0;
        for (i, &v) in fb.iter().enumerate() {
            if v > fb[pos] {
                pos = i;
            }
        }
        let record = ProbeRecord { t: s.t, served: probes[pos], probes, feedback_db: fb, executed_snr: f64::NAN };
        s.proposer.observe(&record);
        s.history.push(record);
        s.t += 1;
        if !served_pos.is_null() {
            *served_pos = pos;
        }
        Ok(())
    })
}
