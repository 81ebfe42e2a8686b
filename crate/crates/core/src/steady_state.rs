//! Stationary analysis: the closed-form product distribution available under a
//! constant production rate, a numeric invariant measure for arbitrary
//! policies, and stability diagnostics.
//!
//! For a constant rate `beta < lambda < mu` the stationary law factorizes as
//! `P(n,i) = (1 - rho) rho^n * pi_i` with `rho = lambda/mu` and
//! `pi_i = (1 - beta/lambda)(beta/lambda)^i`. On the truncated grid the
//! geometric tails are renormalized; comparisons against numeric solves use
//! truncations large enough that the discarded tail mass is negligible.

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::linalg;
use crate::model::{
    check_irreducibility, generator_matrix, stage_cost_vector, ModelParams, Policy,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SteadyStateError {
    /// The drift distribution needs `beta < mu`.
    #[error("drift distribution undefined: beta = {beta} must be < mu = {mu}")]
    PhiUndefined { beta: f64, mu: f64 },
    /// The closed form excludes `beta = lambda`.
    #[error("degenerate geometric ratio: beta = lambda = {0}")]
    DegenerateRatio(f64),
    /// `beta > lambda` makes the inventory marginal diverge on the infinite
    /// lattice; the operation refuses rather than renormalizing.
    #[error("inventory marginal diverges: beta = {beta} exceeds lambda = {lambda}")]
    UnstableInventory { beta: f64, lambda: f64 },
    #[error("unstable model: lambda = {lambda} >= mu = {mu}")]
    Unstable { lambda: f64, mu: f64 },
    #[error("policy induces more than one closed class on the truncated grid")]
    Reducible,
    #[error("stationary solve failed: {0}")]
    SolveFailed(String),
}

/// Required max-norm residual of the numeric invariant measure.
pub const INVARIANT_RESIDUAL_TOL: f64 = 1e-10;

/// Inventory-level distribution `pi`.
#[derive(Debug, Clone, PartialEq)]
pub struct InventoryDist {
    pub probs: Vec<f64>,
}

/// Joint distribution over the truncated grid, row-major state order.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDist {
    probs: Vec<f64>,
    n_levels: usize,
    i_levels: usize,
}

impl JointDist {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, n: usize, i: usize) -> f64 {
        self.probs[n * self.i_levels + i]
    }

    /// Total mass of queue level `n`.
    pub fn level_mass(&self, n: usize) -> f64 {
        self.probs[n * self.i_levels..(n + 1) * self.i_levels].iter().sum()
    }

    pub fn num_levels(&self) -> usize {
        self.n_levels
    }

    /// Total-variation distance, `0.5 * sum |p - q|`.
    pub fn total_variation(&self, other: &JointDist) -> f64 {
        assert_eq!(self.probs.len(), other.probs.len());
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// Stability diagnostics for a constant production rate.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// Traffic intensity `lambda / mu`.
    pub rho: f64,
    /// `rho < 1`.
    pub stable: bool,
    /// Drift distribution over inventory levels, geometric with ratio
    /// `beta / mu` (raw closed-form values on the truncated range).
    pub phi: Option<Vec<f64>>,
}

/// Normalization constant of the level geometry, `1 - lambda / mu`.
pub fn normalizing_constant(p: &ModelParams) -> f64 {
    1.0 - p.lambda / p.mu
}

/// Closed-form inventory weight `(1 - beta/lambda)(beta/lambda)^i` on the
/// infinite lattice, before any truncation renormalization.
pub fn inventory_weight(lambda: f64, beta: f64, i: usize) -> f64 {
    let ratio = beta / lambda;
    (1.0 - ratio) * ratio.powi(i as i32)
}

/// Stability report plus the inventory-level drift distribution.
pub fn stability_check(p: &ModelParams, beta: f64) -> Result<StabilityReport, SteadyStateError> {
    if !(beta < p.mu) {
        return Err(SteadyStateError::PhiUndefined { beta, mu: p.mu });
    }
    let ratio = beta / p.mu;
    let phi = (0..=p.i_max).map(|n| (1.0 - ratio) * ratio.powi(n as i32)).collect();
    let rho = p.utilization();
    Ok(StabilityReport { rho, stable: rho < 1.0, phi: Some(phi) })
}

/// Inventory marginal `pi_i`, renormalized over the truncated range `0..=i_max`.
pub fn inventory_dist_analytic(
    lambda: f64,
    beta: f64,
    i_max: usize,
) -> Result<InventoryDist, SteadyStateError> {
    assert!(beta > 0.0 && lambda > 0.0, "rates must be positive");
    if (beta - lambda).abs() <= 1e-12 * lambda.max(1.0) {
        return Err(SteadyStateError::DegenerateRatio(lambda));
    }
    if beta > lambda {
        return Err(SteadyStateError::UnstableInventory { beta, lambda });
    }
    let mut probs: Vec<f64> = (0..=i_max).map(|i| inventory_weight(lambda, beta, i)).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(InventoryDist { probs })
}

/// Product-form joint distribution `(1 - rho) rho^n * pi_i`, renormalized over
/// the truncated grid.
pub fn joint_dist_analytic(p: &ModelParams, beta: f64) -> Result<JointDist, SteadyStateError> {
    if !(p.lambda < p.mu) {
        return Err(SteadyStateError::Unstable { lambda: p.lambda, mu: p.mu });
    }
    let pi = inventory_dist_analytic(p.lambda, beta, p.i_max)?;
    let rho = p.utilization();
    let mut levels: Vec<f64> = (0..=p.n_max).map(|n| rho.powi(n as i32)).collect();
    let total: f64 = levels.iter().sum();
    for l in &mut levels {
        *l /= total;
    }
    let mut probs = Vec::with_capacity(p.num_states());
    for &l in &levels {
        for &q in &pi.probs {
            probs.push(l * q);
        }
    }
    Ok(JointDist { probs, n_levels: p.n_max + 1, i_levels: p.i_max + 1 })
}

/// Invariant probability measure of `Q(pol)` on the truncated grid, solved by
/// replacing one balance equation with the normalization row.
pub fn invariant_measure_numeric(
    p: &ModelParams,
    pol: &Policy,
) -> Result<JointDist, SteadyStateError> {
    if !check_irreducibility(p, pol) {
        return Err(SteadyStateError::Reducible);
    }
    let q = generator_matrix(p, pol);
    let probs = stationary_from_generator(&q)?;
    Ok(JointDist { probs, n_levels: p.n_max + 1, i_levels: p.i_max + 1 })
}

/// Solves `theta Q = 0`, `sum theta = 1` for an arbitrary generator matrix.
/// The caller is responsible for the unichain structure that makes the
/// solution unique.
pub(crate) fn stationary_from_generator(q: &Array2<f64>) -> Result<Vec<f64>, SteadyStateError> {
    let n = q.nrows();
    let mut m = q.t().to_owned();
    // The last balance equation is implied by the others (columns of Q sum to
    // the negated rest); its row hosts the normalization constraint.
    for j in 0..n {
        m[[n - 1, j]] = 1.0;
    }
    let mut b = Array1::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let mut theta = linalg::solve_refined(&m, &b).map_err(SteadyStateError::SolveFailed)?;

    for v in theta.iter_mut() {
        if *v < 0.0 {
            if *v < -1e-12 {
                return Err(SteadyStateError::SolveFailed(format!(
                    "stationary entry {v} is negative beyond tolerance"
                )));
            }
            *v = 0.0;
        }
    }
    let total: f64 = theta.sum();
    theta.mapv_inplace(|v| v / total);

    let residual = theta
        .dot(q)
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if residual > INVARIANT_RESIDUAL_TOL {
        return Err(SteadyStateError::SolveFailed(format!(
            "balance residual {residual:e} exceeds {INVARIANT_RESIDUAL_TOL:e}"
        )));
    }
    Ok(theta.to_vec())
}

/// Long-run expected cost rate of a policy: the invariant measure paired with
/// its stage costs.
pub(crate) fn gain_of(p: &ModelParams, pol: &Policy) -> Result<(JointDist, f64), SteadyStateError> {
    let dist = invariant_measure_numeric(p, pol)?;
    let costs = stage_cost_vector(p, pol);
    let g = dist.probs().iter().zip(costs.iter()).map(|(t, r)| t * r).sum();
    Ok((dist, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_params;
    use ndarray::array;

    fn demo_params() -> ModelParams {
        validate_params(ModelParams {
            lambda: 3.0,
            mu: 5.0,
            gamma_lo: 0.001,
            rate_hi: 2.0,
            grid_step: 0.001,
            h: 100.0,
            c1: 20.0,
            c2: 30.0,
            c3: 40.0,
            s_thresh: 2,
            alpha: 0.7,
            n_max: 4,
            i_max: 4,
        })
        .unwrap()
    }

    #[test]
    fn stability_of_demo_rates() {
        let report = stability_check(&demo_params(), 1.5).unwrap();
        assert_eq!(report.rho, 0.6);
        assert!(report.stable);
        let phi = report.phi.unwrap();
        assert!((phi[0] - 0.7).abs() < 1e-15);
        assert!((phi[1] - 0.21).abs() < 1e-15);
    }

    #[test]
    fn equal_rates_are_unstable() {
        let mut p = demo_params();
        p.lambda = 5.0;
        let report = stability_check(&p, 1.5).unwrap();
        assert_eq!(report.rho, 1.0);
        assert!(!report.stable);
    }

    #[test]
    fn phi_needs_beta_below_mu() {
        let p = demo_params();
        assert!(matches!(
            stability_check(&p, 5.0),
            Err(SteadyStateError::PhiUndefined { .. })
        ));
    }

    #[test]
    fn inventory_weights_match_the_closed_form() {
        assert!((inventory_weight(3.0, 1.5, 0) - 0.5).abs() < 1e-15);
        assert!((inventory_weight(3.0, 1.5, 1) - 0.25).abs() < 1e-15);
        assert!((inventory_weight(3.0, 1.5, 2) - 0.125).abs() < 1e-15);
        // Nearly all mass sits at zero inventory when production is slow.
        assert!((inventory_weight(3.0, 0.003, 0) - 0.999).abs() < 1e-15);
    }

    #[test]
    fn inventory_dist_rejects_degenerate_and_diverging_ratios() {
        assert!(matches!(
            inventory_dist_analytic(3.0, 3.0, 10),
            Err(SteadyStateError::DegenerateRatio(_))
        ));
        assert!(matches!(
            inventory_dist_analytic(3.0, 3.5, 10),
            Err(SteadyStateError::UnstableInventory { .. })
        ));
    }

    #[test]
    fn joint_dist_factors() {
        let p = demo_params();
        assert!((normalizing_constant(&p) - 0.4).abs() <= 1e-15);
        let joint = joint_dist_analytic(&p, 1.5).unwrap();
        // Unnormalized product at the origin: 0.4 * 0.5 = 0.2.
        assert!((normalizing_constant(&p) * inventory_weight(3.0, 1.5, 0) - 0.2).abs() < 1e-15);
        // Level masses stay geometric with ratio rho after renormalization.
        for n in 0..p.n_max {
            let ratio = joint.level_mass(n + 1) / joint.level_mass(n);
            assert!((ratio - 0.6).abs() < 1e-12, "level ratio {ratio}");
        }
        let total: f64 = joint.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn numeric_invariant_measure_is_a_distribution_with_tiny_residual() {
        let p = demo_params();
        let pol = Policy::constant(&p, 1.5);
        let dist = invariant_measure_numeric(&p, &pol).unwrap();
        assert!(dist.probs().iter().all(|&v| v >= 0.0));
        let total: f64 = dist.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let q = generator_matrix(&p, &pol);
        let theta = Array1::from_vec(dist.probs().to_vec());
        let residual = theta.dot(&q).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(residual <= INVARIANT_RESIDUAL_TOL);
    }

    #[test]
    fn degenerate_single_state_chain_gets_a_point_mass() {
        let q = array![[0.0]];
        assert_eq!(stationary_from_generator(&q).unwrap(), vec![1.0]);
    }

    #[test]
    fn two_state_chain_matches_hand_solution() {
        // 0 -> 1 at rate 2, 1 -> 0 at rate 3: theta = (0.6, 0.4).
        let q = array![[-2.0, 2.0], [3.0, -3.0]];
        let theta = stationary_from_generator(&q).unwrap();
        assert!((theta[0] - 0.6).abs() < 1e-14);
        assert!((theta[1] - 0.4).abs() < 1e-14);
    }

    #[test]
    fn drift_inequality_reduces_to_lambda_below_mu() {
        // phi A0 e - phi A2 e is proportional to lambda - mu: the arrival
        // block carries lambda on levels >= 1 and the service block carries
        // mu off one level, so both sides share the factor 1 - phi_0.
        for (lambda, mu, beta) in [(3.0, 5.0, 1.5), (4.9, 5.0, 2.0), (6.0, 5.0, 1.0)] {
            let cap = 400;
            let ratio: f64 = beta / mu;
            let phi: Vec<f64> = (0..=cap).map(|n| (1.0 - ratio) * ratio.powi(n)).collect();
            let drift_in: f64 = lambda * phi[1..].iter().sum::<f64>();
            let drift_out: f64 = mu * phi[1..].iter().sum::<f64>();
            assert_eq!(drift_in < drift_out, lambda < mu, "lambda={lambda} mu={mu} beta={beta}");
        }
    }
}
