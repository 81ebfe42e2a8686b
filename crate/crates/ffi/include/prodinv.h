#ifndef PRODINV_H
#define PRODINV_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code of every C entry point.
 */
typedef enum {
  ProdinvStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  ProdinvStatus_NullArgument = 1,
  /**
   * Parameter validation failed (stability, bounds, costs, truncation).
   */
  ProdinvStatus_InvalidParams = 2,
  /**
   * A linear solve failed or left a residual above tolerance.
   */
  ProdinvStatus_SolveFailed = 3,
  /**
   * The policy's chain has more than one closed class.
   */
  ProdinvStatus_Reducible = 4,
  /**
   * An iteration cap was hit; indicates a bug, not a hard instance.
   */
  ProdinvStatus_NoConvergence = 5,
  /**
   * An argument was out of range (state, buffer length, tolerance).
   */
  ProdinvStatus_InvalidArgument = 6,
  /**
   * A panic was caught at the boundary.
   */
  ProdinvStatus_InternalError = 7,
} ProdinvStatus;

/**
 * Opaque validated model handle.
 */
typedef struct ProdinvModel ProdinvModel;

/**
 * Opaque solver outcome: a policy, its value (or bias) vector, and
 * diagnostics.
 */
typedef struct ProdinvSolution ProdinvSolution;

/**
 * Flat model parameters as consumed by `prodinv_model_new`.
 */
typedef struct {
  /**
   * Customer arrival rate (> 0, must be < `mu`).
   */
  double lambda;
  /**
   * Service rate (> 0).
   */
  double mu;
  /**
   * Smallest admissible production rate (> 0).
   */
  double gamma_lo;
  /**
   * Largest admissible production rate (>= `gamma_lo`).
   */
  double rate_hi;
  /**
   * Spacing of the production-rate grid (> 0, must tile the interval).
   */
  double grid_step;
  /**
   * Holding cost per item per unit time.
   */
  double h;
  /**
   * Service cost per waiting customer per unit time.
   */
  double c1;
  /**
   * Penalty rate per unit of production while stock exceeds `s_thresh`.
   */
  double c2;
  /**
   * Lost-sales cost per waiting customer per unit time at empty stock.
   */
  double c3;
  /**
   * Inventory threshold for the production penalty.
   */
  uint32_t s_thresh;
  /**
   * Discount factor (> 0 for the discounted solvers).
   */
  double alpha;
  /**
   * Queue truncation (customers range over 0..=n_max).
   */
  uint32_t n_max;
  /**
   * Inventory truncation (stock ranges over 0..=i_max).
   */
  uint32_t i_max;
} ProdinvParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Validates `params` and allocates a model handle into `out`.
 * Free with `prodinv_model_free`.
 *
 * # Safety
 * `params` and `out` must be null or valid for reads/writes of their types.
 */
ProdinvStatus prodinv_model_new(const ProdinvParams *params, ProdinvModel **out);

/**
 * Releases a model handle; a null pointer is a no-op.
 *
 * # Safety
 * `model` must be null or a handle from `prodinv_model_new` not yet freed.
 */
void prodinv_model_free(ProdinvModel *model);

/**
 * Number of states on the truncated grid.
 *
 * # Safety
 * `model` must be a live handle; `out` must be null or writable.
 */
ProdinvStatus prodinv_model_num_states(const ProdinvModel *model, size_t *out);

/**
 * Discounted value iteration down to the max-norm tolerance `tol`.
 *
 * # Safety
 * `model` must be a live handle; `out` must be null or writable.
 */
ProdinvStatus prodinv_solve_value_iteration(const ProdinvModel *model,
                                            double tol,
                                            ProdinvSolution **out);

/**
 * Discounted policy iteration from the all-slow policy.
 *
 * # Safety
 * `model` must be a live handle; `out` must be null or writable.
 */
ProdinvStatus prodinv_solve_policy_iteration(const ProdinvModel *model, ProdinvSolution **out);

/**
 * Average-cost policy iteration from the all-slow policy. The solution's
 * value vector is the bias; the gain is read with `prodinv_solution_gain`.
 *
 * # Safety
 * `model` must be a live handle; `out` must be null or writable.
 */
ProdinvStatus prodinv_solve_average(const ProdinvModel *model, ProdinvSolution **out);

/**
 * Releases a solution handle; a null pointer is a no-op.
 *
 * # Safety
 * `solution` must be null or a handle from a solve not yet freed.
 */
void prodinv_solution_free(ProdinvSolution *solution);

/**
 * Optimal production rate at state `(n, i)`.
 *
 * # Safety
 * `solution` must be a live handle; `out` must be null or writable.
 */
ProdinvStatus prodinv_solution_rate(const ProdinvSolution *solution,
                                    uint32_t n,
                                    uint32_t i,
                                    double *out);

/**
 * Value at state `(n, i)`: discounted total cost for the discounted solvers,
 * bias for the average solver.
 *
 * # Safety
 * `solution` must be a live handle; `out` must be null or writable.
 */
ProdinvStatus prodinv_solution_value(const ProdinvSolution *solution,
                                     uint32_t n,
                                     uint32_t i,
                                     double *out);

/**
 * Long-run expected cost rate of the solved policy. Only defined for
 * solutions of `prodinv_solve_average`.
 *
 * # Safety
 * `solution` must be a live handle; `out` must be null or writable.
 */
ProdinvStatus prodinv_solution_gain(const ProdinvSolution *solution, double *out);

/**
 * Number of solver iterations performed.
 *
 * # Safety
 * `solution` must be a live handle; `out` must be null or writable.
 */
ProdinvStatus prodinv_solution_iterations(const ProdinvSolution *solution, uint64_t *out);

/**
 * Residual of the optimality equation at the returned solution.
 *
 * # Safety
 * `solution` must be a live handle; `out` must be null or writable.
 */
ProdinvStatus prodinv_solution_residual(const ProdinvSolution *solution, double *out);

/**
 * Invariant measure of the constant-rate policy, written row-major
 * (n-major, i-minor) into `probs`; `len` must equal the state count.
 *
 * # Safety
 * `model` must be a live handle; `probs` must be null or valid for `len`
 * writes.
 */
ProdinvStatus prodinv_steady_state(const ProdinvModel *model,
                                   double rate,
                                   double *probs,
                                   size_t len);

/**
 * Pathwise average cost of one seeded trajectory from the empty state under
 * the per-state rates in `rates` (row-major, `len` = state count).
 *
 * # Safety
 * `model` must be a live handle; `rates` must be null or valid for `len`
 * reads; `out` must be null or writable.
 */
ProdinvStatus prodinv_pathwise_average(const ProdinvModel *model,
                                       const double *rates,
                                       size_t len,
                                       uint64_t seed,
                                       double horizon,
                                       double *out);

/**
 * Static description of a status code.
 */
const char *prodinv_status_message(ProdinvStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PRODINV_H */
