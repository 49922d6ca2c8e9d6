//! C ABI over `mlsbi`.
//!
//! Every fallible entry point returns an [`MlsbiStatus`]; on failure the
//! message is kept per thread and read back with [`mlsbi_last_error`].
//! Matrices are row-major `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use mlsbi::allocation::{cost_of, plan_norms, plan_pilot, AllocationPlan, CorrectionCost, CostModel};
use mlsbi::config::{validate_json, ExperimentConfig};
use mlsbi::eval::{grid_kld, mmd, EvalGrid};
use mlsbi::experiment::RunResults;
use mlsbi::mdn::{ConditionalEstimator, Mdn};
use mlsbi::rng::SeedKey;
use mlsbi::train::{adjust_gradients, RESCALE_EPS};
use mlsbi::Error;
use ndarray::ArrayView2;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlsbiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Infeasible = 3,
    Diverged = 4,
    Sampler = 5,
    Config = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlsbiCorrectionCost {
    /// `C_l + C_{l-1}`
    Previous = 0,
    /// `C_l + C_{l+1}`
    Next = 1,
}

/// Trained mixture density network.
pub struct MlsbiEstimator(Mdn);

/// Outcome of an experiment run.
pub struct MlsbiResults(RunResults);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> MlsbiStatus {
    match e {
        Error::InvalidArgument(_) => MlsbiStatus::InvalidArgument,
        Error::Infeasible(_) => MlsbiStatus::Infeasible,
        Error::Diverged { .. } => MlsbiStatus::Diverged,
        Error::Sampler(_) => MlsbiStatus::Sampler,
        Error::Config(_) | Error::Json(_) => MlsbiStatus::Config,
        Error::Io(_) | Error::Csv(_) => MlsbiStatus::Io,
        Error::Stage { source, .. } => status_of(source),
    }
}

struct Fail(MlsbiStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(MlsbiStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MlsbiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MlsbiStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            MlsbiStatus::Panic
        }
    }
}

unsafe fn slice_in<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn slice_out<'a, T>(p: *mut T, n: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, n))
}

unsafe fn str_in<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(MlsbiStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Copy `s` NUL-terminated into `buf`, truncating to `len - 1` bytes.
/// Returns the full length of `s` without the terminator.
unsafe fn copy_str(s: &str, buf: *mut c_char, len: usize) -> usize {
    if !buf.is_null() && len > 0 {
        let n = s.len().min(len - 1);
        ptr::copy_nonoverlapping(s.as_ptr() as *const c_char, buf, n);
        *buf.add(n) = 0;
    }
    s.len()
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mlsbi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copy the calling thread's last error message into `buf`. Returns the
/// message length; a return value `>= len` means it was truncated.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mlsbi_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| copy_str(&e.borrow(), buf, len))
}

/// Simulation cost `n_0 C_0 + Σ_{l≥1} n_l (C_l + C_{l-1})`.
///
/// # Safety
/// `n` and `costs` must point to `levels` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlsbi_cost(n: *const usize, costs: *const f64, levels: usize, out: *mut f64) -> MlsbiStatus {
    guard(|| {
        if n.is_null() {
            return Err(null("n"));
        }
        let counts = slice::from_raw_parts(n, levels);
        let model = CostModel::new(slice_in(costs, levels, "costs")?.to_vec())?;
        let c = cost_of(counts, &model)?;
        *out.as_mut().ok_or_else(|| null("out"))? = c;
        Ok(())
    })
}

unsafe fn write_plan(plan: &AllocationPlan, out_n: *mut usize, out_cost: *mut f64) -> Result<(), Fail> {
    slice_out(out_n, plan.n.len(), "out_n")?.copy_from_slice(&plan.n);
    if let Some(c) = out_cost.as_mut() {
        *c = plan.achieved_cost;
    }
    Ok(())
}

/// Sample sizes from generator-difference norms. `out_n` receives `levels`
/// counts; `out_cost` (may be null) the achieved cost.
///
/// # Safety
/// `costs` and `norms` must hold `levels` values; `out_n` must hold `levels` slots.
#[no_mangle]
pub unsafe extern "C" fn mlsbi_plan_norms(
    costs: *const f64,
    norms: *const f64,
    levels: usize,
    budget: f64,
    form: MlsbiCorrectionCost,
    out_n: *mut usize,
    out_cost: *mut f64,
) -> MlsbiStatus {
    guard(|| {
        let model = CostModel::new(slice_in(costs, levels, "costs")?.to_vec())?;
        let form = match form {
            MlsbiCorrectionCost::Previous => CorrectionCost::Previous,
            MlsbiCorrectionCost::Next => CorrectionCost::Next,
        };
        let plan = plan_norms(&model, slice_in(norms, levels, "norms")?, budget, form)?;
        write_plan(&plan, out_n, out_cost)
    })
}

/// Sample sizes from pilot variances of the per-level loss terms.
///
/// # Safety
/// As for [`mlsbi_plan_norms`].
#[no_mangle]
pub unsafe extern "C" fn mlsbi_plan_variances(
    costs: *const f64,
    variances: *const f64,
    levels: usize,
    budget: f64,
    out_n: *mut usize,
    out_cost: *mut f64,
) -> MlsbiStatus {
    guard(|| {
        let model = CostModel::new(slice_in(costs, levels, "costs")?.to_vec())?;
        let plan = plan_pilot(&model, slice_in(variances, levels, "variances")?, budget)?;
        write_plan(&plan, out_n, out_cost)
    })
}

/// Combine the level-0 gradient with `corrections` pairs of positive and
/// negative correction gradients. `g_plus` and `g_minus` are
/// `corrections × dim`. Writes the update direction to `out` and whether
/// the conflict projection fired to `conflict` (may be null).
///
/// # Safety
/// All buffers must hold the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn mlsbi_adjust_gradients(
    g_h0: *const f64,
    g_plus: *const f64,
    g_minus: *const f64,
    dim: usize,
    corrections: usize,
    out: *mut f64,
    conflict: *mut bool,
) -> MlsbiStatus {
    guard(|| {
        let h0 = slice_in(g_h0, dim, "g_h0")?;
        let plus = slice_in(g_plus, dim * corrections, "g_plus")?;
        let minus = slice_in(g_minus, dim * corrections, "g_minus")?;
        let rows =
            |s: &[f64]| -> Vec<Vec<f64>> { (0..corrections).map(|l| s[l * dim..(l + 1) * dim].to_vec()).collect() };
        let adj = adjust_gradients(h0, &rows(plus), &rows(minus), RESCALE_EPS)?;
        slice_out(out, dim, "out")?.copy_from_slice(&adj.grad);
        if let Some(c) = conflict.as_mut() {
            *c = adj.conflict;
        }
        Ok(())
    })
}

/// Grid KLD of two log-densities evaluated on `n` equidistant points in `[lo, hi]`.
///
/// # Safety
/// `p_log` and `q_log` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn mlsbi_grid_kld(
    p_log: *const f64,
    q_log: *const f64,
    n: usize,
    lo: f64,
    hi: f64,
    out: *mut f64,
) -> MlsbiStatus {
    guard(|| {
        let grid = EvalGrid::new(lo, hi, n)?;
        let v = grid_kld(slice_in(p_log, n, "p_log")?, slice_in(q_log, n, "q_log")?, &grid)?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// Squared MMD between `na × dim` and `nb × dim` samples.
///
/// # Safety
/// `a` and `b` must hold `na·dim` and `nb·dim` values.
#[no_mangle]
pub unsafe extern "C" fn mlsbi_mmd(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    dim: usize,
    out: *mut f64,
) -> MlsbiStatus {
    guard(|| {
        let av = ArrayView2::from_shape((na, dim), slice_in(a, na * dim, "a")?)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let bv = ArrayView2::from_shape((nb, dim), slice_in(b, nb * dim, "b")?)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        *out.as_mut().ok_or_else(|| null("out"))? = mmd(av, bv)?;
        Ok(())
    })
}

/// Validate a JSON config. Writes the diagnostics, one per line, to `buf`
/// and their count to `count`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `buf` null or `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mlsbi_validate_config(
    json: *const c_char,
    buf: *mut c_char,
    len: usize,
    count: *mut usize,
) -> MlsbiStatus {
    guard(|| {
        let d = validate_json(str_in(json, "json")?);
        let text = d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("\n");
        copy_str(&text, buf, len);
        *count.as_mut().ok_or_else(|| null("count"))? = d.len();
        Ok(())
    })
}

/// Run an experiment from a JSON config. `out_dir` may be null to skip
/// writing the results bundle.
///
/// # Safety
/// `json` must be NUL-terminated, `out_dir` null or NUL-terminated, `out`
/// writable. Release the handle with [`mlsbi_results_free`].
#[no_mangle]
pub unsafe extern "C" fn mlsbi_run(
    json: *const c_char,
    out_dir: *const c_char,
    out: *mut *mut MlsbiResults,
) -> MlsbiStatus {
    guard(|| {
        let slot = out.as_mut().ok_or_else(|| null("out"))?;
        *slot = ptr::null_mut();
        let cfg = ExperimentConfig::from_json(str_in(json, "json")?)
            .map_err(|d| Fail(MlsbiStatus::Config, mlsbi::config::join_diagnostics(&d)))?;
        let dir = if out_dir.is_null() { None } else { Some(Path::new(str_in(out_dir, "out_dir")?)) };
        let r = mlsbi::experiment::run(&cfg, dir)?;
        *slot = Box::into_raw(Box::new(MlsbiResults(r)));
        Ok(())
    })
}

/// Number of variants (count sets) in a run.
///
/// # Safety
/// `results` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn mlsbi_results_variants(results: *const MlsbiResults) -> usize {
    results.as_ref().map_or(0, |r| r.0.variants.len())
}

/// Median over replicates of a scalar metric such as `"kld"` or `"nlpd"`.
///
/// # Safety
/// `results` must be a live handle, `metric` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mlsbi_results_median(
    results: *const MlsbiResults,
    variant: usize,
    metric: *const c_char,
    out: *mut f64,
) -> MlsbiStatus {
    guard(|| {
        let r = results.as_ref().ok_or_else(|| null("results"))?;
        let name = str_in(metric, "metric")?;
        if variant >= r.0.variants.len() {
            return Err(Fail(MlsbiStatus::InvalidArgument, format!("no variant {variant}")));
        }
        let s =
            r.0.summary(variant, name)
                .ok_or_else(|| Fail(MlsbiStatus::InvalidArgument, format!("no finite values for metric {name}")))?;
        *out.as_mut().ok_or_else(|| null("out"))? = s.median;
        Ok(())
    })
}

/// # Safety
/// `results` must come from [`mlsbi_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mlsbi_results_free(results: *mut MlsbiResults) {
    if !results.is_null() {
        drop(Box::from_raw(results));
    }
}

/// Load a checkpoint saved as `<path>.json` and `<path>.bin`.
///
/// # Safety
/// `path` must be NUL-terminated and `out` writable. Release the handle
/// with [`mlsbi_estimator_free`].
#[no_mangle]
pub unsafe extern "C" fn mlsbi_estimator_load(path: *const c_char, out: *mut *mut MlsbiEstimator) -> MlsbiStatus {
    guard(|| {
        let slot = out.as_mut().ok_or_else(|| null("out"))?;
        *slot = ptr::null_mut();
        let m = Mdn::load(Path::new(str_in(path, "path")?))?;
        *slot = Box::into_raw(Box::new(MlsbiEstimator(m)));
        Ok(())
    })
}

/// Take the estimator of replicate `replicate` of `variant` out of a run.
///
/// # Safety
/// `results` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mlsbi_results_estimator(
    results: *const MlsbiResults,
    variant: usize,
    replicate: usize,
    out: *mut *mut MlsbiEstimator,
) -> MlsbiStatus {
    guard(|| {
        let r = results.as_ref().ok_or_else(|| null("results"))?;
        let slot = out.as_mut().ok_or_else(|| null("out"))?;
        let rep =
            r.0.replicates.iter().find(|x| x.variant == variant && x.replicate == replicate).ok_or_else(|| {
                Fail(MlsbiStatus::InvalidArgument, format!("no replicate {replicate} of variant {variant}"))
            })?;
        *slot = Box::into_raw(Box::new(MlsbiEstimator(rep.model.clone())));
        Ok(())
    })
}

/// # Safety
/// `est` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mlsbi_estimator_free(est: *mut MlsbiEstimator) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

/// Condition and target dimensions.
///
/// # Safety
/// `est` must be a live handle; the outputs writable.
#[no_mangle]
pub unsafe extern "C" fn mlsbi_estimator_dims(
    est: *const MlsbiEstimator,
    condition_dim: *mut usize,
    target_dim: *mut usize,
) -> MlsbiStatus {
    guard(|| {
        let e = est.as_ref().ok_or_else(|| null("est"))?;
        *condition_dim.as_mut().ok_or_else(|| null("condition_dim"))? = e.0.condition_dim();
        *target_dim.as_mut().ok_or_else(|| null("target_dim"))? = e.0.target_dim();
        Ok(())
    })
}

/// `log q(target_i | condition_i)` for `n` row pairs.
///
/// # Safety
/// `conditions` holds `n × condition_dim`, `targets` `n × target_dim`, `out` `n` values.
#[no_mangle]
pub unsafe extern "C" fn mlsbi_estimator_logpdf(
    est: *const MlsbiEstimator,
    conditions: *const f64,
    targets: *const f64,
    n: usize,
    out: *mut f64,
) -> MlsbiStatus {
    guard(|| {
        let e = &est.as_ref().ok_or_else(|| null("est"))?.0;
        let (c, d) = (e.condition_dim(), e.target_dim());
        let cv = ArrayView2::from_shape((n, c), slice_in(conditions, n * c, "conditions")?)
            .map_err(|x| Error::InvalidArgument(x.to_string()))?;
        let tv = ArrayView2::from_shape((n, d), slice_in(targets, n * d, "targets")?)
            .map_err(|x| Error::InvalidArgument(x.to_string()))?;
        let v = e.logpdf_batch(cv, tv)?;
        slice_out(out, n, "out")?.copy_from_slice(&v);
        Ok(())
    })
}

/// `n` draws from `q(· | condition)` into `out` (`n × target_dim`), deterministic in `seed`.
///
/// # Safety
/// `condition` holds `condition_dim` values, `out` `n × target_dim`.
#[no_mangle]
pub unsafe extern "C" fn mlsbi_estimator_sample(
    est: *const MlsbiEstimator,
    condition: *const f64,
    n: usize,
    seed: u64,
    out: *mut f64,
) -> MlsbiStatus {
    guard(|| {
        let e = &est.as_ref().ok_or_else(|| null("est"))?.0;
        let draws = e.sample(slice_in(condition, e.condition_dim(), "condition")?, n, &SeedKey::new(seed))?;
        let o = slice_out(out, n * e.target_dim(), "out")?;
        for (dst, src) in o.iter_mut().zip(draws.iter()) {
            *dst = *src;
        }
        Ok(())
    })
}
