//! Discounted-cost solvers: value iteration on the uniformized Bellman
//! operator and policy iteration with exact linear-solve policy evaluation.
//!
//! Uniformization turns the controlled chain into a discrete-time problem with
//! contraction modulus `kappa = B / (alpha + B)` where `B = rate_hi + lambda +
//! mu` bounds every exit rate, so value iteration converges geometrically and
//! the iteration count is bounded a priori.

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::linalg;
use crate::model::{
    build_action_grid, generator_apply, generator_matrix, stage_cost, stage_cost_vector,
    state_moves, ActionGrid, ModelParams, Moves, Policy, State,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiscountedError {
    #[error("discount factor must be positive, got {0}")]
    BadDiscount(f64),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("policy evaluation failed: {0}")]
    SolveFailed(String),
    #[error("no convergence within {0} iterations; this signals a bug, not a hard instance")]
    NonConvergence(usize),
}

/// Required max-norm residual of a policy evaluation solve.
pub const EVAL_RESIDUAL_TOL: f64 = 1e-10;

const POLICY_ITERATION_CAP: usize = 10_000;

/// State-indexed value vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub values: Vec<f64>,
}

impl ValueFunction {
    pub fn zeros(p: &ModelParams) -> Self {
        Self { values: vec![0.0; p.num_states()] }
    }

    pub fn value(&self, p: &ModelParams, s: State) -> f64 {
        self.values[p.state_index(s)]
    }

    /// Max-norm distance to another value vector.
    pub fn sup_diff(&self, other: &ValueFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Outcome of a discounted solve.
#[derive(Debug, Clone)]
pub struct DiscountedSolveReport {
    /// Backups performed (value iteration) or evaluations performed (policy
    /// iteration).
    pub iterations: usize,
    /// Max-norm difference of the last two value vectors.
    pub final_sup_diff: f64,
    /// `B / (alpha + B)` for this configuration.
    pub contraction_modulus: f64,
    /// Residual of the optimality equation at the returned values.
    pub hjb_residual: f64,
    pub policy: Policy,
    pub values: ValueFunction,
    /// Per-iteration max-norm successive differences.
    pub trace: Vec<f64>,
}

/// Contraction modulus of the uniformized discounted backup.
pub fn contraction_modulus(p: &ModelParams) -> f64 {
    let bound = p.uniformization_bound();
    bound / (p.alpha + bound)
}

/// One Bellman backup: per state, the grid minimum of the discounted
/// uniformized operator, together with an argmin policy. Ties break toward
/// the smallest rate.
pub fn bellman_backup(
    u: &ValueFunction,
    p: &ModelParams,
    grid: &ActionGrid,
) -> (ValueFunction, Policy) {
    bellman_backup_with(u, p, grid, stage_cost)
}

pub(crate) fn bellman_backup_with(
    u: &ValueFunction,
    p: &ModelParams,
    grid: &ActionGrid,
    cost: impl Fn(State, f64, &ModelParams) -> f64,
) -> (ValueFunction, Policy) {
    let bound = p.uniformization_bound();
    let denom = p.alpha + bound;
    let kappa = bound / denom;
    let moves = state_moves(p);
    let mut values = Vec::with_capacity(moves.len());
    let mut rates = Vec::with_capacity(moves.len());
    for (idx, m) in moves.iter().enumerate() {
        let s = p.state_at(idx);
        let (mut best_v, mut best_rate) = (f64::INFINITY, grid.rates()[0]);
        for &beta in grid.rates() {
            let v = cost(s, beta, p) / denom + kappa * expected_next(u.values.as_slice(), m, p, beta);
            if v < best_v {
                best_v = v;
                best_rate = beta;
            }
        }
        values.push(best_v);
        rates.push(best_rate);
    }
    (ValueFunction { values }, Policy::from_rates(p, rates))
}

/// Expectation of `u` under the uniformized row of one state-action pair.
/// Terms accumulate in the fixed order arrival, service, production, self.
fn expected_next(u: &[f64], m: &Moves, p: &ModelParams, beta: f64) -> f64 {
    let bound = p.uniformization_bound();
    let mut exit = 0.0;
    let mut sum = 0.0;
    if let Some(j) = m.arrival {
        exit += p.lambda;
        sum += p.lambda / bound * u[j];
    }
    if let Some(j) = m.service {
        exit += p.mu;
        sum += p.mu / bound * u[j];
    }
    if let Some(j) = m.production {
        exit += beta;
        sum += beta / bound * u[j];
    }
    sum + (1.0 - exit / bound) * u[m.self_idx]
}

/// Value iteration from the zero vector until the max-norm successive
/// difference drops to `tol`.
///
/// The contraction bound caps the iteration count; exceeding it signals a bug.
pub fn value_iteration(
    p: &ModelParams,
    tol: f64,
) -> Result<DiscountedSolveReport, DiscountedError> {
    value_iteration_with(p, tol, stage_cost)
}

pub(crate) fn value_iteration_with(
    p: &ModelParams,
    tol: f64,
    cost: impl Fn(State, f64, &ModelParams) -> f64 + Copy,
) -> Result<DiscountedSolveReport, DiscountedError> {
    if !(p.alpha > 0.0) {
        return Err(DiscountedError::BadDiscount(p.alpha));
    }
    if !(tol > 0.0) {
        return Err(DiscountedError::BadTolerance(tol));
    }
    let grid = build_action_grid(p).expect("validated params tile the action grid");
    let kappa = contraction_modulus(p);
    let mut values = ValueFunction::zeros(p);
    let mut trace = Vec::new();
    let mut cap = usize::MAX;
    let mut policy;
    loop {
        let (next, pol) = bellman_backup_with(&values, p, &grid, cost);
        let diff = next.sup_diff(&values);
        trace.push(diff);
        values = next;
        policy = pol;
        if trace.len() == 1 {
            // kappa^k * ||v_1||_inf / (1 - kappa) <= tol at the cap.
            let scale = values.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let ratio = tol * (1.0 - kappa) / scale;
            cap = if ratio >= 1.0 {
                1
            } else {
                (ratio.ln() / kappa.ln()).ceil() as usize + 1
            };
        }
        if diff <= tol {
            break;
        }
        if trace.len() >= cap {
            return Err(DiscountedError::NonConvergence(cap));
        }
    }
    let hjb_residual = hjb_residual_with(&values, p, &grid, cost);
    Ok(DiscountedSolveReport {
        iterations: trace.len(),
        final_sup_diff: *trace.last().expect("at least one backup ran"),
        contraction_modulus: kappa,
        hjb_residual,
        policy,
        values,
        trace,
    })
}

/// Exact discounted cost of a fixed policy: solves
/// `(alpha I - Q(pol)) v = r(pol)`.
pub fn policy_evaluation_discounted(
    pol: &Policy,
    p: &ModelParams,
) -> Result<ValueFunction, DiscountedError> {
    if !(p.alpha > 0.0) {
        return Err(DiscountedError::BadDiscount(p.alpha));
    }
    let q = generator_matrix(p, pol);
    let r = stage_cost_vector(p, pol);
    evaluation_system(&q, &r, p.alpha)
}

/// Solves `(alpha I - Q) v = r`; factored out so synthetic chains and shifted
/// costs can exercise the same path.
pub(crate) fn evaluation_system(
    q: &Array2<f64>,
    r: &Array1<f64>,
    alpha: f64,
) -> Result<ValueFunction, DiscountedError> {
    let n = q.nrows();
    let mut a = -q.clone();
    for k in 0..n {
        a[[k, k]] += alpha;
    }
    let v = linalg::solve_refined(&a, r).map_err(DiscountedError::SolveFailed)?;
    let residual = linalg::residual_inf(&a, &v, r);
    if residual > EVAL_RESIDUAL_TOL {
        return Err(DiscountedError::SolveFailed(format!(
            "evaluation residual {residual:e} exceeds {EVAL_RESIDUAL_TOL:e}"
        )));
    }
    Ok(ValueFunction { values: v.to_vec() })
}

/// One policy-improvement sweep: per state, switch to the grid minimizer of
/// `r + Q v` only when it strictly beats the incumbent's own score, with ties
/// toward the smallest rate.
pub fn policy_improvement_discounted(pol: &Policy, v: &ValueFunction, p: &ModelParams) -> Policy {
    let grid = build_action_grid(p).expect("validated params tile the action grid");
    let moves = state_moves(p);
    let mut rates = Vec::with_capacity(moves.len());
    for (idx, m) in moves.iter().enumerate() {
        let s = p.state_at(idx);
        let incumbent = pol.rate(p, s);
        let score =
            |beta: f64| stage_cost(s, beta, p) + generator_apply(&v.values, m, p, beta);
        let (mut best_v, mut best_rate) = (f64::INFINITY, grid.rates()[0]);
        for &beta in grid.rates() {
            let d = score(beta);
            if d < best_v {
                best_v = d;
                best_rate = beta;
            }
        }
        rates.push(if best_v < score(incumbent) { best_rate } else { incumbent });
    }
    Policy::from_rates(p, rates)
}

/// Policy iteration: exact evaluation alternating with improvement until the
/// policy repeats.
pub fn policy_iteration_discounted(
    p: &ModelParams,
    pol0: &Policy,
) -> Result<DiscountedSolveReport, DiscountedError> {
    let grid = build_action_grid(p).expect("validated params tile the action grid");
    let mut pol = pol0.clone();
    let mut trace = Vec::new();
    let mut prev_values: Option<ValueFunction> = None;
    for iteration in 1..=POLICY_ITERATION_CAP {
        let values = policy_evaluation_discounted(&pol, p)?;
        if let Some(prev) = &prev_values {
            trace.push(values.sup_diff(prev));
        }
        let improved = policy_improvement_discounted(&pol, &values, p);
        if improved == pol {
            let hjb_residual = hjb_residual_with(&values, p, &grid, stage_cost);
            return Ok(DiscountedSolveReport {
                iterations: iteration,
                final_sup_diff: trace.last().copied().unwrap_or(0.0),
                contraction_modulus: contraction_modulus(p),
                hjb_residual,
                policy: pol,
                values: values.clone(),
                trace,
            });
        }
        pol = improved;
        prev_values = Some(values);
    }
    Err(DiscountedError::NonConvergence(POLICY_ITERATION_CAP))
}

/// Residual of the discounted optimality equation:
/// `sup_s |alpha v(s) - min_beta [r(s, beta) + sum_t q(s -> t) v(t)]|`.
pub fn hjb_residual_discounted(v: &ValueFunction, p: &ModelParams) -> f64 {
    let grid = build_action_grid(p).expect("validated params tile the action grid");
    hjb_residual_with(v, p, &grid, stage_cost)
}

fn hjb_residual_with(
    v: &ValueFunction,
    p: &ModelParams,
    grid: &ActionGrid,
    cost: impl Fn(State, f64, &ModelParams) -> f64,
) -> f64 {
    let moves = state_moves(p);
    let mut worst = 0.0f64;
    for (idx, m) in moves.iter().enumerate() {
        let s = p.state_at(idx);
        let mut best = f64::INFINITY;
        for &beta in grid.rates() {
            let d = cost(s, beta, p) + generator_apply(&v.values, m, p, beta);
            best = best.min(d);
        }
        worst = worst.max((p.alpha * v.values[idx] - best).abs());
    }
    worst
}
