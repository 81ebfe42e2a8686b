//! Thin wrapper around the LAPACK-backed dense solver with one step of
//! iterative refinement, shared by the steady-state and policy-evaluation
//! solves. Grids up to ~10^4 states factorize directly.

use ndarray::{Array1, Array2};
use ndarray_linalg::{FactorizeInto, Solve};

/// Above this dimension the factorization runs on a dedicated thread with a
/// generous stack: the multithreaded LAPACK driver needs more stack than the
/// 2 MiB default that test threads get.
const BIG_SOLVE_DIM: usize = 256;
const BIG_SOLVE_STACK: usize = 64 * 1024 * 1024;

/// Solves `a x = b` by LU factorization with partial pivoting, followed by a
/// single residual-correction pass.
pub(crate) fn solve_refined(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>, String> {
    if a.nrows() >= BIG_SOLVE_DIM {
        std::thread::scope(|scope| {
            std::thread::Builder::new()
                .stack_size(BIG_SOLVE_STACK)
                .spawn_scoped(scope, || solve_refined_inline(a, b))
                .expect("spawning the solver thread")
                .join()
                .expect("solver thread must not panic")
        })
    } else {
        solve_refined_inline(a, b)
    }
}

fn solve_refined_inline(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>, String> {
    let lu = a.clone().factorize_into().map_err(|e| format!("factorization failed: {e}"))?;
    let mut x = lu.solve(b).map_err(|e| format!("solve failed: {e}"))?;
    let r = b - &a.dot(&x);
    if let Ok(dx) = lu.solve(&r) {
        x += &dx;
    }
    Ok(x)
}

/// Max-norm residual `||a x - b||_inf`.
pub(crate) fn residual_inf(a: &Array2<f64>, x: &Array1<f64>, b: &Array1<f64>) -> f64 {
    (&a.dot(x) - b).iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
