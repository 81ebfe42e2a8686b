//! Expected-average-cost policy iteration: gain and bias through the Poisson
//! equation, the improvement sweep, and the optimality-equation residual.
//!
//! For a fixed policy the pair `(g, h)` solves the Poisson equation
//! `g = r(s) + sum_t q(s -> t) h(t)` for every state, pinned down uniquely by
//! the normalization `sum_s theta(s) h(s) = 0` against the policy's invariant
//! measure. Gain and bias come out of one augmented linear system.

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::linalg;
use crate::model::{
    build_action_grid, generator_apply, generator_matrix, stage_cost, stage_cost_vector,
    state_moves, ModelParams, Policy,
};
use crate::steady_state::{self, SteadyStateError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AverageError {
    #[error("policy induces more than one closed class on the truncated grid")]
    Reducible,
    #[error("gain/bias solve failed: {0}")]
    SolveFailed(String),
    #[error("no convergence within {0} iterations; this signals a bug, not a hard instance")]
    NonConvergence(usize),
}

impl From<SteadyStateError> for AverageError {
    fn from(e: SteadyStateError) -> Self {
        match e {
            SteadyStateError::Reducible => AverageError::Reducible,
            other => AverageError::SolveFailed(other.to_string()),
        }
    }
}

/// Required max-norm residual of the Poisson rows.
pub const POISSON_RESIDUAL_TOL: f64 = 1e-9;
/// Required bound on the invariant-weighted mean of the bias.
pub const BIAS_NORMALIZATION_TOL: f64 = 1e-10;

const POLICY_ITERATION_CAP: usize = 10_000;

/// Long-run cost rate of a policy paired with its bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GainBias {
    /// Expected cost per unit time; constant across initial states.
    pub gain: f64,
    /// State-indexed transient-cost correction, normalized so its
    /// invariant-weighted mean is zero.
    pub bias: Vec<f64>,
}

/// Outcome of an average-cost policy-iteration run.
#[derive(Debug, Clone)]
pub struct AverageSolveReport {
    /// Number of evaluation/improvement rounds.
    pub iterations: usize,
    /// Gain of each visited policy, in visit order.
    pub gains: Vec<f64>,
    pub policy: Policy,
    pub gain_bias: GainBias,
    pub acoe_residual: f64,
}

/// Expected average cost of a policy: its invariant measure paired with its
/// stage costs.
pub fn gain(pol: &Policy, p: &ModelParams) -> Result<f64, AverageError> {
    let (_, g) = steady_state::gain_of(p, pol)?;
    Ok(g)
}

/// Gain and bias of a policy from the augmented Poisson system.
pub fn poisson_solve(pol: &Policy, p: &ModelParams) -> Result<GainBias, AverageError> {
    let (dist, gain_check) = steady_state::gain_of(p, pol)?;
    let q = generator_matrix(p, pol);
    let r = stage_cost_vector(p, pol);
    let theta = Array1::from_vec(dist.probs().to_vec());
    let gb = poisson_system(&q, &r, &theta)?;
    if (gb.gain - gain_check).abs() > POISSON_RESIDUAL_TOL {
        return Err(AverageError::SolveFailed(format!(
            "gain {} from the augmented solve disagrees with theta . r = {}",
            gb.gain, gain_check
        )));
    }
    Ok(gb)
}

/// Solves `[Q h - g 1 = -r; theta . h = 0]` jointly for `(g, h)` and verifies
/// both residuals. Factored out so synthetic chains can exercise it.
pub(crate) fn poisson_system(
    q: &Array2<f64>,
    r: &Array1<f64>,
    theta: &Array1<f64>,
) -> Result<GainBias, AverageError> {
    let n = q.nrows();
    let mut a = Array2::<f64>::zeros((n + 1, n + 1));
    let mut b = Array1::<f64>::zeros(n + 1);
    for s in 0..n {
        for t in 0..n {
            a[[s, t]] = q[[s, t]];
        }
        a[[s, n]] = -1.0;
        b[s] = -r[s];
    }
    for t in 0..n {
        a[[n, t]] = theta[t];
    }
    let x = linalg::solve_refined(&a, &b).map_err(AverageError::SolveFailed)?;
    let bias = x.slice(ndarray::s![..n]).to_owned();
    let g = x[n];

    let poisson_residual = (0..n)
        .map(|s| (q.row(s).dot(&bias) - (g - r[s])).abs())
        .fold(0.0f64, f64::max);
    if poisson_residual > POISSON_RESIDUAL_TOL {
        return Err(AverageError::SolveFailed(format!(
            "Poisson residual {poisson_residual:e} exceeds {POISSON_RESIDUAL_TOL:e}"
        )));
    }
    let normalization = theta.dot(&bias).abs();
    if normalization > BIAS_NORMALIZATION_TOL {
        return Err(AverageError::SolveFailed(format!(
            "bias normalization residual {normalization:e} exceeds {BIAS_NORMALIZATION_TOL:e}"
        )));
    }
    Ok(GainBias { gain: g, bias: bias.to_vec() })
}

/// One improvement sweep against a solved `(g, h)`: a state keeps its rate
/// whenever it already attains the grid minimum of `r + Q h`, otherwise it
/// switches to the minimizer, ties toward the smallest rate. Termination of
/// the outer iteration depends on the incumbent surviving exact ties.
pub fn policy_improvement_average(pol: &Policy, gb: &GainBias, p: &ModelParams) -> Policy {
    let grid = build_action_grid(p).expect("validated params tile the action grid");
    let moves = state_moves(p);
    let mut rates = Vec::with_capacity(moves.len());
    for (idx, m) in moves.iter().enumerate() {
        let s = p.state_at(idx);
        let incumbent = pol.rate(p, s);
        let score = |beta: f64| stage_cost(s, beta, p) + generator_apply(&gb.bias, m, p, beta);
        let (mut best_v, mut best_rate) = (f64::INFINITY, grid.rates()[0]);
        for &beta in grid.rates() {
            let c = score(beta);
            if c < best_v {
                best_v = c;
                best_rate = beta;
            }
        }
        rates.push(if score(incumbent) <= best_v { incumbent } else { best_rate });
    }
    Policy::from_rates(p, rates)
}

/// Per-state improvement margin of stepping from the solved policy to `next`:
/// `gain - [r(s, next) + sum_t q(s -> t) bias(t)]`. Nonnegative, and strictly
/// positive exactly where the improvement sweep changed the action.
pub fn improvement_terms(gb: &GainBias, next: &Policy, p: &ModelParams) -> Vec<f64> {
    let moves = state_moves(p);
    moves
        .iter()
        .enumerate()
        .map(|(idx, m)| {
            let s = p.state_at(idx);
            let beta = next.rate(p, s);
            gb.gain - (stage_cost(s, beta, p) + generator_apply(&gb.bias, m, p, beta))
        })
        .collect()
}

/// Average-cost policy iteration: Poisson solves alternating with improvement
/// sweeps until the policy repeats.
pub fn policy_iteration_average(
    p: &ModelParams,
    pol0: &Policy,
) -> Result<AverageSolveReport, AverageError> {
    let mut pol = pol0.clone();
    let mut gains = Vec::new();
    for iteration in 1..=POLICY_ITERATION_CAP {
        let gb = poisson_solve(&pol, p)?;
        gains.push(gb.gain);
        let improved = policy_improvement_average(&pol, &gb, p);
        if improved == pol {
            let acoe_residual = acoe_residual(&gb, p);
            return Ok(AverageSolveReport {
                iterations: iteration,
                gains,
                policy: pol,
                gain_bias: gb,
                acoe_residual,
            });
        }
        pol = improved;
    }
    Err(AverageError::NonConvergence(POLICY_ITERATION_CAP))
}

/// Residual of the average-cost optimality equation:
/// `sup_s |g - min_beta [r(s, beta) + sum_t q(s -> t) bias(t)]|`.
pub fn acoe_residual(gb: &GainBias, p: &ModelParams) -> f64 {
    let grid = build_action_grid(p).expect("validated params tile the action grid");
    let moves = state_moves(p);
    let mut worst = 0.0f64;
    for (idx, m) in moves.iter().enumerate() {
        let s = p.state_at(idx);
        let mut best = f64::INFINITY;
        for &beta in grid.rates() {
            let c = stage_cost(s, beta, p) + generator_apply(&gb.bias, m, p, beta);
            best = best.min(c);
        }
        worst = worst.max((gb.gain - best).abs());
    }
    worst
}
