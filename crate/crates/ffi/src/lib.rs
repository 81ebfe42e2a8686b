//! C ABI over the production-inventory solvers.
//!
//! Callers create an opaque [`ProdinvModel`] from a plain parameter struct,
//! run a solver to get an opaque [`ProdinvSolution`], and read rates, values
//! and diagnostics through accessor functions. Every entry point returns a
//! [`ProdinvStatus`]; panics are caught at the boundary and surface as
//! [`ProdinvStatus::InternalError`]. The generated header lives at
//! `include/prodinv.h`.
//!
//! All entry points are `unsafe` in the Rust sense: they trust that pointer
//! arguments are either null (reported as [`ProdinvStatus::NullArgument`]) or
//! valid for the access they imply, and that handles are ones this library
//! produced and has not yet freed.

// Negated comparisons like `!(x > 0.0)` are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use prodinv::average::{policy_iteration_average, AverageError};
use prodinv::discounted::{policy_iteration_discounted, value_iteration, DiscountedError};
use prodinv::model::{validate_params, ModelParams, Policy, State};
use prodinv::pac_sim::{pathwise_average_cost, simulate_trajectory};
use prodinv::steady_state::{invariant_measure_numeric, SteadyStateError};

/// Flat model parameters as consumed by `prodinv_model_new`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ProdinvParams {
    /// Customer arrival rate (> 0, must be < `mu`).
    pub lambda: f64,
    /// Service rate (> 0).
    pub mu: f64,
    /// Smallest admissible production rate (> 0).
    pub gamma_lo: f64,
    /// Largest admissible production rate (>= `gamma_lo`).
    pub rate_hi: f64,
    /// Spacing of the production-rate grid (> 0, must tile the interval).
    pub grid_step: f64,
    /// Holding cost per item per unit time.
    pub h: f64,
    /// Service cost per waiting customer per unit time.
    pub c1: f64,
    /// Penalty rate per unit of production while stock exceeds `s_thresh`.
    pub c2: f64,
    /// Lost-sales cost per waiting customer per unit time at empty stock.
    pub c3: f64,
    /// Inventory threshold for the production penalty.
    pub s_thresh: u32,
    /// Discount factor (> 0 for the discounted solvers).
    pub alpha: f64,
    /// Queue truncation (customers range over 0..=n_max).
    pub n_max: u32,
    /// Inventory truncation (stock ranges over 0..=i_max).
    pub i_max: u32,
}

/// Status code of every C entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProdinvStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Parameter validation failed (stability, bounds, costs, truncation).
    InvalidParams = 2,
    /// A linear solve failed or left a residual above tolerance.
    SolveFailed = 3,
    /// The policy's chain has more than one closed class.
    Reducible = 4,
    /// An iteration cap was hit; indicates a bug, not a hard instance.
    NoConvergence = 5,
    /// An argument was out of range (state, buffer length, tolerance).
    InvalidArgument = 6,
    /// A panic was caught at the boundary.
    InternalError = 7,
}

/// Opaque validated model handle.
pub struct ProdinvModel {
    params: ModelParams,
}

enum Criterion {
    Discounted,
    Average { gain: f64 },
}

/// Opaque solver outcome: a policy, its value (or bias) vector, and
/// diagnostics.
pub struct ProdinvSolution {
    params: ModelParams,
    rates: Vec<f64>,
    values: Vec<f64>,
    iterations: u64,
    residual: f64,
    criterion: Criterion,
}

fn guard(body: impl FnOnce() -> ProdinvStatus) -> ProdinvStatus {
    catch_unwind(AssertUnwindSafe(body)).unwrap_or(ProdinvStatus::InternalError)
}

fn map_discounted(e: DiscountedError) -> ProdinvStatus {
    match e {
        DiscountedError::BadDiscount(_) | DiscountedError::BadTolerance(_) => {
            ProdinvStatus::InvalidArgument
        }
        DiscountedError::SolveFailed(_) => ProdinvStatus::SolveFailed,
        DiscountedError::NonConvergence(_) => ProdinvStatus::NoConvergence,
    }
}

fn map_average(e: AverageError) -> ProdinvStatus {
    match e {
        AverageError::Reducible => ProdinvStatus::Reducible,
        AverageError::SolveFailed(_) => ProdinvStatus::SolveFailed,
        AverageError::NonConvergence(_) => ProdinvStatus::NoConvergence,
    }
}

fn map_steady(e: SteadyStateError) -> ProdinvStatus {
    match e {
        SteadyStateError::Reducible => ProdinvStatus::Reducible,
        _ => ProdinvStatus::SolveFailed,
    }
}

/// Validates `params` and allocates a model handle into `out`.
/// Free with `prodinv_model_free`.
///
/// # Safety
/// `params` and `out` must be null or valid for reads/writes of their types.
#[no_mangle]
pub unsafe extern "C" fn prodinv_model_new(
    params: *const ProdinvParams,
    out: *mut *mut ProdinvModel,
) -> ProdinvStatus {
    guard(|| {
        if params.is_null() || out.is_null() {
            return ProdinvStatus::NullArgument;
        }
        let raw = unsafe { *params };
        let candidate = ModelParams {
            lambda: raw.lambda,
            mu: raw.mu,
            gamma_lo: raw.gamma_lo,
            rate_hi: raw.rate_hi,
            grid_step: raw.grid_step,
            h: raw.h,
            c1: raw.c1,
            c2: raw.c2,
            c3: raw.c3,
            s_thresh: raw.s_thresh,
            alpha: raw.alpha,
            n_max: raw.n_max as usize,
            i_max: raw.i_max as usize,
        };
        match validate_params(candidate) {
            Ok(p) => {
                let handle = Box::new(ProdinvModel { params: p });
                unsafe { *out = Box::into_raw(handle) };
                ProdinvStatus::Ok
            }
            Err(_) => ProdinvStatus::InvalidParams,
        }
    })
}

/// Releases a model handle; a null pointer is a no-op.
///
/// # Safety
/// `model` must be null or a handle from `prodinv_model_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn prodinv_model_free(model: *mut ProdinvModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Number of states on the truncated grid.
///
/// # Safety
/// `model` must be a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn prodinv_model_num_states(
    model: *const ProdinvModel,
    out: *mut usize,
) -> ProdinvStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            return ProdinvStatus::NullArgument;
        }
        let model = unsafe { &*model };
        unsafe { *out = model.params.num_states() };
        ProdinvStatus::Ok
    })
}

fn put_solution(out: *mut *mut ProdinvSolution, solution: ProdinvSolution) -> ProdinvStatus {
    unsafe { *out = Box::into_raw(Box::new(solution)) };
    ProdinvStatus::Ok
}

/// Discounted value iteration down to the max-norm tolerance `tol`.
///
/// # Safety
/// `model` must be a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn prodinv_solve_value_iteration(
    model: *const ProdinvModel,
    tol: f64,
    out: *mut *mut ProdinvSolution,
) -> ProdinvStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            return ProdinvStatus::NullArgument;
        }
        let model = unsafe { &*model };
        match value_iteration(&model.params, tol) {
            Ok(solved) => put_solution(
                out,
                ProdinvSolution {
                    params: model.params.clone(),
                    rates: solved.policy.rates().to_vec(),
                    values: solved.values.values,
                    iterations: solved.iterations as u64,
                    residual: solved.hjb_residual,
                    criterion: Criterion::Discounted,
                },
            ),
            Err(e) => map_discounted(e),
        }
    })
}

/// Discounted policy iteration from the all-slow policy.
///
/// # Safety
/// `model` must be a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn prodinv_solve_policy_iteration(
    model: *const ProdinvModel,
    out: *mut *mut ProdinvSolution,
) -> ProdinvStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            return ProdinvStatus::NullArgument;
        }
        let model = unsafe { &*model };
        let initial = Policy::constant(&model.params, model.params.gamma_lo);
        match policy_iteration_discounted(&model.params, &initial) {
            Ok(solved) => put_solution(
                out,
                ProdinvSolution {
                    params: model.params.clone(),
                    rates: solved.policy.rates().to_vec(),
                    values: solved.values.values,
                    iterations: solved.iterations as u64,
                    residual: solved.hjb_residual,
                    criterion: Criterion::Discounted,
                },
            ),
            Err(e) => map_discounted(e),
        }
    })
}

/// Average-cost policy iteration from the all-slow policy. The solution's
/// value vector is the bias; the gain is read with `prodinv_solution_gain`.
///
/// # Safety
/// `model` must be a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn prodinv_solve_average(
    model: *const ProdinvModel,
    out: *mut *mut ProdinvSolution,
) -> ProdinvStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            return ProdinvStatus::NullArgument;
        }
        let model = unsafe { &*model };
        let initial = Policy::constant(&model.params, model.params.gamma_lo);
        match policy_iteration_average(&model.params, &initial) {
            Ok(solved) => put_solution(
                out,
                ProdinvSolution {
                    params: model.params.clone(),
                    rates: solved.policy.rates().to_vec(),
                    values: solved.gain_bias.bias.clone(),
                    iterations: solved.iterations as u64,
                    residual: solved.acoe_residual,
                    criterion: Criterion::Average { gain: solved.gain_bias.gain },
                },
            ),
            Err(e) => map_average(e),
        }
    })
}

/// Releases a solution handle; a null pointer is a no-op.
///
/// # Safety
/// `solution` must be null or a handle from a solve not yet freed.
#[no_mangle]
pub unsafe extern "C" fn prodinv_solution_free(solution: *mut ProdinvSolution) {
    if !solution.is_null() {
        drop(unsafe { Box::from_raw(solution) });
    }
}

fn solution_lookup(
    solution: *const ProdinvSolution,
    n: u32,
    i: u32,
    out: *mut f64,
    field: impl Fn(&ProdinvSolution, usize) -> f64,
) -> ProdinvStatus {
    if solution.is_null() || out.is_null() {
        return ProdinvStatus::NullArgument;
    }
    let solution = unsafe { &*solution };
    let s = State::new(n as usize, i as usize);
    if s.n > solution.params.n_max || s.i > solution.params.i_max {
        return ProdinvStatus::InvalidArgument;
    }
    let idx = solution.params.state_index(s);
    unsafe { *out = field(solution, idx) };
    ProdinvStatus::Ok
}

/// Optimal production rate at state `(n, i)`.
///
/// # Safety
/// `solution` must be a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn prodinv_solution_rate(
    solution: *const ProdinvSolution,
    n: u32,
    i: u32,
    out: *mut f64,
) -> ProdinvStatus {
    guard(|| solution_lookup(solution, n, i, out, |s, idx| s.rates[idx]))
}

/// Value at state `(n, i)`: discounted total cost for the discounted solvers,
/// bias for the average solver.
///
/// # Safety
/// `solution` must be a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn prodinv_solution_value(
    solution: *const ProdinvSolution,
    n: u32,
    i: u32,
    out: *mut f64,
) -> ProdinvStatus {
    guard(|| solution_lookup(solution, n, i, out, |s, idx| s.values[idx]))
}

/// Long-run expected cost rate of the solved policy. Only defined for
/// solutions of `prodinv_solve_average`.
///
/// # Safety
/// `solution` must be a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn prodinv_solution_gain(
    solution: *const ProdinvSolution,
    out: *mut f64,
) -> ProdinvStatus {
    guard(|| {
        if solution.is_null() || out.is_null() {
            return ProdinvStatus::NullArgument;
        }
        match unsafe { &*solution }.criterion {
            Criterion::Average { gain } => {
                unsafe { *out = gain };
                ProdinvStatus::Ok
            }
            Criterion::Discounted => ProdinvStatus::InvalidArgument,
        }
    })
}

/// Number of solver iterations performed.
///
/// # Safety
/// `solution` must be a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn prodinv_solution_iterations(
    solution: *const ProdinvSolution,
    out: *mut u64,
) -> ProdinvStatus {
    guard(|| {
        if solution.is_null() || out.is_null() {
            return ProdinvStatus::NullArgument;
        }
        unsafe { *out = (*solution).iterations };
        ProdinvStatus::Ok
    })
}

/// Residual of the optimality equation at the returned solution.
///
/// # Safety
/// `solution` must be a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn prodinv_solution_residual(
    solution: *const ProdinvSolution,
    out: *mut f64,
) -> ProdinvStatus {
    guard(|| {
        if solution.is_null() || out.is_null() {
            return ProdinvStatus::NullArgument;
        }
        unsafe { *out = (*solution).residual };
        ProdinvStatus::Ok
    })
}

/// Invariant measure of the constant-rate policy, written row-major
/// (n-major, i-minor) into `probs`; `len` must equal the state count.
///
/// # Safety
/// `model` must be a live handle; `probs` must be null or valid for `len`
/// writes.
#[no_mangle]
pub unsafe extern "C" fn prodinv_steady_state(
    model: *const ProdinvModel,
    rate: f64,
    probs: *mut f64,
    len: usize,
) -> ProdinvStatus {
    guard(|| {
        if model.is_null() || probs.is_null() {
            return ProdinvStatus::NullArgument;
        }
        let model = unsafe { &*model };
        let p = &model.params;
        if len != p.num_states() || !(rate >= p.gamma_lo && rate <= p.rate_hi) {
            return ProdinvStatus::InvalidArgument;
        }
        match invariant_measure_numeric(p, &Policy::constant(p, rate)) {
            Ok(dist) => {
                let out = unsafe { std::slice::from_raw_parts_mut(probs, len) };
                out.copy_from_slice(dist.probs());
                ProdinvStatus::Ok
            }
            Err(e) => map_steady(e),
        }
    })
}

/// Pathwise average cost of one seeded trajectory from the empty state under
/// the per-state rates in `rates` (row-major, `len` = state count).
///
/// # Safety
/// `model` must be a live handle; `rates` must be null or valid for `len`
/// reads; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn prodinv_pathwise_average(
    model: *const ProdinvModel,
    rates: *const f64,
    len: usize,
    seed: u64,
    horizon: f64,
    out: *mut f64,
) -> ProdinvStatus {
    guard(|| {
        if model.is_null() || rates.is_null() || out.is_null() {
            return ProdinvStatus::NullArgument;
        }
        let model = unsafe { &*model };
        let p = &model.params;
        if len != p.num_states() || !(horizon > 0.0) {
            return ProdinvStatus::InvalidArgument;
        }
        let rates = unsafe { std::slice::from_raw_parts(rates, len) };
        if rates.iter().any(|r| !(*r >= p.gamma_lo && *r <= p.rate_hi)) {
            return ProdinvStatus::InvalidArgument;
        }
        let pol = Policy::from_rates(p, rates.to_vec());
        let sample = simulate_trajectory(&pol, State::new(0, 0), horizon, seed, p);
        unsafe { *out = pathwise_average_cost(&sample) };
        ProdinvStatus::Ok
    })
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn prodinv_status_message(status: ProdinvStatus) -> *const c_char {
    let message: &'static [u8] = match status {
        ProdinvStatus::Ok => b"ok\0",
        ProdinvStatus::NullArgument => b"a required pointer argument was null\0",
        ProdinvStatus::InvalidParams => b"model parameters failed validation\0",
        ProdinvStatus::SolveFailed => b"a linear solve failed or exceeded its residual tolerance\0",
        ProdinvStatus::Reducible => b"the policy's chain has more than one closed class\0",
        ProdinvStatus::NoConvergence => b"an iteration cap was hit\0",
        ProdinvStatus::InvalidArgument => b"an argument was out of range\0",
        ProdinvStatus::InternalError => b"an internal panic was caught at the boundary\0",
    };
    message.as_ptr() as *const c_char
}
