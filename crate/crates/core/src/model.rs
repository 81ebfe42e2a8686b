//! The controlled production-inventory chain: state space, action grid,
//! transition rates, stage costs and uniformization.
//!
//! States are lattice points `(n, i)` where `n` counts waiting customers and
//! `i` counts items on stock. Three transitions exist:
//!
//! * arrival `(n,i) -> (n+1,i)` at rate `lambda`, only while `i >= 1`
//!   (demands that find an empty stock are lost),
//! * service `(n,i) -> (n-1,i-1)` at rate `mu`, only while `n, i >= 1`,
//! * production `(n,i) -> (n,i+1)` at the controlled rate `beta`.
//!
//! Computation happens on a truncated grid `0..=n_max` x `0..=i_max`.
//! Transitions that would leave the grid are suppressed and the diagonal
//! rebalanced, which keeps every row a proper generator row.

use thiserror::Error;

/// Errors raised while validating parameters or querying the chain.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    /// The queue drifts: `lambda < mu` is necessary and sufficient for stability.
    #[error("unstable model: lambda = {lambda} must be strictly less than mu = {mu}")]
    Unstable { lambda: f64, mu: f64 },
    #[error("bad action bounds: {0}")]
    BadActionBounds(String),
    #[error("negative cost coefficient {name} = {value}")]
    NegativeCost { name: &'static str, value: f64 },
    #[error("bad truncation: n_max = {n_max}, i_max = {i_max} (both must be >= 1)")]
    BadTruncation { n_max: usize, i_max: usize },
    #[error("state ({n},{i}) lies outside the truncated grid")]
    OutOfRange { n: usize, i: usize },
}

/// Tolerance used for action-grid membership and tiling checks.
pub const GRID_TOL: f64 = 1e-12;

/// Model parameters: rates, action interval, cost coefficients, truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Customer arrival rate (events per unit time).
    pub lambda: f64,
    /// Service rate (events per unit time).
    pub mu: f64,
    /// Smallest admissible production rate (> 0; production never switches off).
    pub gamma_lo: f64,
    /// Largest admissible production rate.
    pub rate_hi: f64,
    /// Spacing of the discretized production-rate grid.
    pub grid_step: f64,
    /// Holding cost per item per unit time.
    pub h: f64,
    /// Service cost per waiting customer per unit time.
    pub c1: f64,
    /// Penalty rate per unit of production while stock exceeds `s_thresh`.
    pub c2: f64,
    /// Lost-sales cost per waiting customer per unit time while stock is empty.
    pub c3: f64,
    /// Inventory threshold above which the production penalty applies.
    pub s_thresh: u32,
    /// Discount factor (used by the discounted solvers only).
    pub alpha: f64,
    /// Queue truncation: customers range over `0..=n_max`.
    pub n_max: usize,
    /// Inventory truncation: stock ranges over `0..=i_max`.
    pub i_max: usize,
}

impl ModelParams {
    /// Number of states on the truncated grid.
    pub fn num_states(&self) -> usize {
        (self.n_max + 1) * (self.i_max + 1)
    }

    /// Row-major flattening (n-major, i-minor). Fixed so that vector and CSV
    /// layouts are reproducible.
    pub fn state_index(&self, s: State) -> usize {
        s.n * (self.i_max + 1) + s.i
    }

    /// Inverse of [`ModelParams::state_index`].
    pub fn state_at(&self, idx: usize) -> State {
        let w = self.i_max + 1;
        State { n: idx / w, i: idx % w }
    }

    /// All states in index order.
    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        (0..self.num_states()).map(|idx| self.state_at(idx))
    }

    /// Uniform bound on the exit rate: `rate_hi + lambda + mu`.
    pub fn uniformization_bound(&self) -> f64 {
        self.rate_hi + self.lambda + self.mu
    }

    /// Traffic intensity `lambda / mu`.
    pub fn utilization(&self) -> f64 {
        self.lambda / self.mu
    }

    fn contains(&self, s: State) -> bool {
        s.n <= self.n_max && s.i <= self.i_max
    }
}

/// A lattice point: `n` waiting customers, `i` items on stock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    pub n: usize,
    pub i: usize,
}

impl State {
    pub fn new(n: usize, i: usize) -> Self {
        Self { n, i }
    }
}

/// The discretized set of admissible production rates.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    rates: Vec<f64>,
}

impl ActionGrid {
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Grid membership up to [`GRID_TOL`], which absorbs accumulation error.
    pub fn contains(&self, rate: f64) -> bool {
        self.rates.iter().any(|&r| (r - rate).abs() <= GRID_TOL)
    }

    /// Nearest grid rate, used to snap rates parsed from text back onto the grid.
    pub fn nearest(&self, rate: f64) -> f64 {
        let mut best = self.rates[0];
        for &r in &self.rates {
            if (r - rate).abs() < (best - rate).abs() {
                best = r;
            }
        }
        best
    }
}

/// A deterministic stationary policy: one production rate per state.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    rates: Vec<f64>,
}

impl Policy {
    /// The same rate everywhere.
    pub fn constant(p: &ModelParams, rate: f64) -> Self {
        Self { rates: vec![rate; p.num_states()] }
    }

    /// Build from a per-state rule.
    pub fn from_fn(p: &ModelParams, f: impl FnMut(State) -> f64) -> Self {
        Self { rates: p.states().map(f).collect() }
    }

    /// Build from a state-indexed vector (row-major layout).
    pub fn from_rates(p: &ModelParams, rates: Vec<f64>) -> Self {
        assert_eq!(rates.len(), p.num_states(), "policy length must match the grid");
        Self { rates }
    }

    pub fn rate(&self, p: &ModelParams, s: State) -> f64 {
        self.rates[p.state_index(s)]
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn set_rate(&mut self, p: &ModelParams, s: State, rate: f64) {
        self.rates[p.state_index(s)] = rate;
    }

    /// Every entry must be a member of the action grid.
    pub fn validate(&self, grid: &ActionGrid) -> Result<(), ModelError> {
        for &r in &self.rates {
            if !grid.contains(r) {
                return Err(ModelError::BadActionBounds(format!(
                    "policy rate {r} is not on the action grid"
                )));
            }
        }
        Ok(())
    }
}

/// Outgoing generator row of one state under one action.
///
/// `diagonal` always equals the negated sum of the off-diagonal entries, so
/// the row sums to zero exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub entries: Vec<(State, f64)>,
    pub diagonal: f64,
}

impl RateRow {
    /// Total rate of leaving the state.
    pub fn exit_rate(&self) -> f64 {
        -self.diagonal
    }
}

/// One row of the uniformized (discrete-time) transition kernel; a probability
/// distribution over successor states including the self-loop.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformizedRow {
    pub probs: Vec<(State, f64)>,
}

/// Checks every [`ModelParams`] invariant and returns the parameters unchanged.
pub fn validate_params(p: ModelParams) -> Result<ModelParams, ModelError> {
    for (name, value) in [("lambda", p.lambda), ("mu", p.mu)] {
        if !(value > 0.0) || !value.is_finite() {
            return Err(ModelError::BadActionBounds(format!(
                "{name} = {value} must be a positive finite rate"
            )));
        }
    }
    if !(p.lambda < p.mu) {
        return Err(ModelError::Unstable { lambda: p.lambda, mu: p.mu });
    }
    if !(p.gamma_lo > 0.0) || !(p.rate_hi >= p.gamma_lo) || !p.rate_hi.is_finite() {
        return Err(ModelError::BadActionBounds(format!(
            "need 0 < gamma_lo <= rate_hi, got [{}, {}]",
            p.gamma_lo, p.rate_hi
        )));
    }
    if !(p.grid_step > 0.0) || !p.grid_step.is_finite() {
        return Err(ModelError::BadActionBounds(format!(
            "grid_step = {} must be positive",
            p.grid_step
        )));
    }
    let span = p.rate_hi - p.gamma_lo;
    if span > 0.0 {
        let steps = span / p.grid_step;
        if (steps - steps.round()).abs() > GRID_TOL {
            return Err(ModelError::BadActionBounds(format!(
                "grid_step = {} does not tile [{}, {}]",
                p.grid_step, p.gamma_lo, p.rate_hi
            )));
        }
    }
    for (name, value) in [("h", p.h), ("c1", p.c1), ("c2", p.c2), ("c3", p.c3)] {
        if !(value >= 0.0) {
            return Err(ModelError::NegativeCost { name, value });
        }
    }
    if p.n_max < 1 || p.i_max < 1 {
        return Err(ModelError::BadTruncation { n_max: p.n_max, i_max: p.i_max });
    }
    Ok(p)
}

/// The action grid from `gamma_lo` to `rate_hi` inclusive with spacing `grid_step`.
pub fn build_action_grid(p: &ModelParams) -> Result<ActionGrid, ModelError> {
    let span = p.rate_hi - p.gamma_lo;
    if span == 0.0 {
        return Ok(ActionGrid { rates: vec![p.gamma_lo] });
    }
    let steps = span / p.grid_step;
    if (steps - steps.round()).abs() > GRID_TOL {
        return Err(ModelError::BadActionBounds(format!(
            "grid_step = {} does not tile [{}, {}]",
            p.grid_step, p.gamma_lo, p.rate_hi
        )));
    }
    let count = steps.round() as usize + 1;
    let mut rates: Vec<f64> = (0..count).map(|j| p.gamma_lo + j as f64 * p.grid_step).collect();
    // Pin the endpoint so the grid is exactly [gamma_lo, rate_hi].
    *rates.last_mut().expect("count >= 1") = p.rate_hi;
    Ok(ActionGrid { rates })
}

/// Generator row of state `s` under production rate `beta`.
///
/// Entries are listed in the fixed order arrival, service, production, so the
/// row is bit-reproducible. Transitions leaving the truncated grid are
/// suppressed (lost arrival at `n = n_max`, production pause at `i = i_max`)
/// and the diagonal shrinks accordingly.
pub fn transition_rates(s: State, beta: f64, p: &ModelParams) -> Result<RateRow, ModelError> {
    if !p.contains(s) {
        return Err(ModelError::OutOfRange { n: s.n, i: s.i });
    }
    debug_assert!(
        beta >= p.gamma_lo - GRID_TOL && beta <= p.rate_hi + GRID_TOL,
        "production rate {beta} outside [{}, {}]",
        p.gamma_lo,
        p.rate_hi
    );
    let mut entries = Vec::with_capacity(3);
    if s.i >= 1 && s.n < p.n_max {
        entries.push((State::new(s.n + 1, s.i), p.lambda));
    }
    if s.n >= 1 && s.i >= 1 {
        entries.push((State::new(s.n - 1, s.i - 1), p.mu));
    }
    if s.i < p.i_max {
        entries.push((State::new(s.n, s.i + 1), beta));
    }
    let exit: f64 = entries.iter().map(|&(_, r)| r).sum();
    Ok(RateRow { entries, diagonal: -exit })
}

/// Cost rate of occupying state `s` while producing at rate `beta`:
/// holding plus service plus the production penalty above the threshold plus
/// the lost-sales charge while the stock is empty.
pub fn stage_cost(s: State, beta: f64, p: &ModelParams) -> f64 {
    let mut cost = p.h * s.i as f64 + p.c1 * s.n as f64;
    if s.i > p.s_thresh as usize {
        cost += beta * p.c2;
    }
    if s.i == 0 {
        cost += p.c3 * s.n as f64;
    }
    cost
}

/// One row of the uniformized kernel: off-diagonal rates divided by the
/// uniform bound, plus the balancing self-loop probability.
pub fn uniformized_row(s: State, beta: f64, p: &ModelParams) -> Result<UniformizedRow, ModelError> {
    let row = transition_rates(s, beta, p)?;
    let bound = p.uniformization_bound();
    let mut probs: Vec<(State, f64)> =
        row.entries.iter().map(|&(t, r)| (t, r / bound)).collect();
    probs.push((s, 1.0 + row.diagonal / bound));
    Ok(UniformizedRow { probs })
}

/// True when the policy's chain has a unique recurrent class on the truncated
/// grid that every state eventually reaches.
///
/// The truncation makes the corner state `(n_max, 0)` structurally transient
/// (no transition enters it), so full strong connectivity never holds on a
/// finite grid; a unique closed communicating class is exactly what the
/// invariant-measure and Poisson solves require.
pub fn check_irreducibility(p: &ModelParams, pol: &Policy) -> bool {
    let n = p.num_states();
    let mut adj = vec![Vec::new(); n];
    for s in p.states() {
        let row = transition_rates(s, pol.rate(p, s), p).expect("state is on the grid");
        let from = p.state_index(s);
        for (t, rate) in row.entries {
            if rate > 0.0 {
                adj[from].push(p.state_index(t));
            }
        }
    }
    count_closed_classes(&adj) == 1
}

/// Number of closed communicating classes (strongly connected components with
/// no outgoing edge) of a directed graph given as adjacency lists.
pub(crate) fn count_closed_classes(adj: &[Vec<usize>]) -> usize {
    let comp = strongly_connected_components(adj);
    let num_comps = comp.iter().copied().max().map_or(0, |m| m + 1);
    let mut closed = vec![true; num_comps];
    for (u, targets) in adj.iter().enumerate() {
        for &v in targets {
            if comp[u] != comp[v] {
                closed[comp[u]] = false;
            }
        }
    }
    closed.iter().filter(|&&c| c).count()
}

/// True when the whole graph is one strongly connected component.
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) fn strongly_connected(adj: &[Vec<usize>]) -> bool {
    let comp = strongly_connected_components(adj);
    comp.iter().all(|&c| c == 0) && !adj.is_empty()
}

/// Precomputed successor indices of one state; the action only scales the
/// production entry, so solvers scan the action grid without rebuilding rows.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Moves {
    pub arrival: Option<usize>,
    pub service: Option<usize>,
    pub production: Option<usize>,
    pub self_idx: usize,
}

pub(crate) fn state_moves(p: &ModelParams) -> Vec<Moves> {
    p.states()
        .map(|s| Moves {
            arrival: (s.i >= 1 && s.n < p.n_max)
                .then(|| p.state_index(State::new(s.n + 1, s.i))),
            service: (s.n >= 1 && s.i >= 1)
                .then(|| p.state_index(State::new(s.n - 1, s.i - 1))),
            production: (s.i < p.i_max).then(|| p.state_index(State::new(s.n, s.i + 1))),
            self_idx: p.state_index(s),
        })
        .collect()
}

/// `sum_t q(s -> t) u(t)` for one state-action pair, accumulating in the fixed
/// order arrival, service, production, diagonal.
pub(crate) fn generator_apply(u: &[f64], m: &Moves, p: &ModelParams, beta: f64) -> f64 {
    let mut exit = 0.0;
    let mut sum = 0.0;
    if let Some(j) = m.arrival {
        exit += p.lambda;
        sum += p.lambda * u[j];
    }
    if let Some(j) = m.service {
        exit += p.mu;
        sum += p.mu * u[j];
    }
    if let Some(j) = m.production {
        exit += beta;
        sum += beta * u[j];
    }
    sum - exit * u[m.self_idx]
}

/// Dense generator matrix `Q(pol)` on the truncated grid, row-major state order.
pub(crate) fn generator_matrix(p: &ModelParams, pol: &Policy) -> ndarray::Array2<f64> {
    let n = p.num_states();
    let mut q = ndarray::Array2::<f64>::zeros((n, n));
    for s in p.states() {
        let from = p.state_index(s);
        let row = transition_rates(s, pol.rate(p, s), p).expect("state is on the grid");
        for (t, rate) in &row.entries {
            q[[from, p.state_index(*t)]] = *rate;
        }
        q[[from, from]] = row.diagonal;
    }
    q
}

/// Stage-cost vector of a policy, indexed like the states.
pub(crate) fn stage_cost_vector(p: &ModelParams, pol: &Policy) -> ndarray::Array1<f64> {
    ndarray::Array1::from_iter(p.states().map(|s| stage_cost(s, pol.rate(p, s), p)))
}

/// Kosaraju's algorithm with iterative DFS; returns the component id of every
/// vertex, ids numbered in reverse topological order.
fn strongly_connected_components(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push((start, 0));
        while let Some(&mut (u, ref mut next)) = stack.last_mut() {
            if *next < adj[u].len() {
                let v = adj[u][*next];
                *next += 1;
                if !seen[v] {
                    seen[v] = true;
                    stack.push((v, 0));
                }
            } else {
                order.push(u);
                stack.pop();
            }
        }
    }

    let mut radj = vec![Vec::new(); n];
    for (u, targets) in adj.iter().enumerate() {
        for &v in targets {
            radj[v].push(u);
        }
    }

    let mut comp = vec![usize::MAX; n];
    let mut current = 0;
    let mut dfs = Vec::new();
    for &start in order.iter().rev() {
        if comp[start] != usize::MAX {
            continue;
        }
        comp[start] = current;
        dfs.push(start);
        while let Some(u) = dfs.pop() {
            for &v in &radj[u] {
                if comp[v] == usize::MAX {
                    comp[v] = current;
                    dfs.push(v);
                }
            }
        }
        current += 1;
    }
    comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn demo_params() -> ModelParams {
        ModelParams {
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
        }
    }

    #[test]
    fn accepts_demo_parameters() {
        let p = validate_params(demo_params()).unwrap();
        assert_eq!(p.num_states(), 25);
        let grid = build_action_grid(&p).unwrap();
        assert_eq!(grid.len(), 2000);
        assert_eq!(grid.rates()[0], 0.001);
        assert_eq!(*grid.rates().last().unwrap(), 2.0);
    }

    #[test]
    fn rejects_unstable_rates() {
        let p = ModelParams { lambda: 5.0, ..demo_params() };
        assert_eq!(
            validate_params(p),
            Err(ModelError::Unstable { lambda: 5.0, mu: 5.0 })
        );
    }

    #[test]
    fn rejects_negative_costs_and_bad_truncation() {
        let p = ModelParams { c2: -1.0, ..demo_params() };
        assert!(matches!(validate_params(p), Err(ModelError::NegativeCost { name: "c2", .. })));
        let p = ModelParams { n_max: 0, ..demo_params() };
        assert!(matches!(validate_params(p), Err(ModelError::BadTruncation { .. })));
    }

    #[test]
    fn rejects_non_tiling_step() {
        let p = ModelParams { grid_step: 0.3, ..demo_params() };
        assert!(matches!(validate_params(p), Err(ModelError::BadActionBounds(_))));
    }

    #[test]
    fn degenerate_interval_gives_single_rate() {
        let p = ModelParams { gamma_lo: 1.0, rate_hi: 1.0, grid_step: 0.7, ..demo_params() };
        let grid = build_action_grid(&validate_params(p).unwrap()).unwrap();
        assert_eq!(grid.rates(), &[1.0]);
    }

    #[test]
    fn quarter_step_grid() {
        let p = ModelParams { gamma_lo: 0.5, rate_hi: 1.0, grid_step: 0.25, ..demo_params() };
        let grid = build_action_grid(&validate_params(p).unwrap()).unwrap();
        assert_eq!(grid.rates(), &[0.5, 0.75, 1.0]);
    }

    #[test]
    fn interior_state_rates() {
        let p = demo_params();
        let row = transition_rates(State::new(2, 3), 1.5, &p).unwrap();
        assert_eq!(
            row.entries,
            vec![
                (State::new(3, 3), 3.0),
                (State::new(1, 2), 5.0),
                (State::new(2, 4), 1.5),
            ]
        );
        assert_eq!(row.diagonal, -9.5);
    }

    #[test]
    fn empty_stock_blocks_arrival_and_service() {
        let p = ModelParams { n_max: 6, i_max: 6, ..demo_params() };
        let row = transition_rates(State::new(4, 0), 1.0, &p).unwrap();
        assert_eq!(row.entries, vec![(State::new(4, 1), 1.0)]);
        assert_eq!(row.diagonal, -1.0);
    }

    #[test]
    fn full_stock_pauses_production() {
        let p = demo_params();
        let row = transition_rates(State::new(0, p.i_max), 2.0, &p).unwrap();
        assert_eq!(row.entries, vec![(State::new(1, p.i_max), 3.0)]);
        assert_eq!(row.diagonal, -3.0);
    }

    #[test]
    fn out_of_range_state_is_rejected() {
        let p = demo_params();
        assert_eq!(
            transition_rates(State::new(5, 0), 1.0, &p),
            Err(ModelError::OutOfRange { n: 5, i: 0 })
        );
    }

    /// Independent re-computation of the four cost terms.
    fn stage_cost_oracle(s: State, beta: f64, p: &ModelParams) -> f64 {
        let holding = p.h * s.i as f64;
        let service = p.c1 * s.n as f64;
        let production = if s.i > p.s_thresh as usize { beta * p.c2 } else { 0.0 };
        let lost_sales = if s.i == 0 { p.c3 * s.n as f64 } else { 0.0 };
        holding + service + production + lost_sales
    }

    #[test]
    fn stage_cost_examples() {
        let p = demo_params();
        assert_eq!(stage_cost(State::new(0, 0), 1.3, &p), 0.0);
        let s = State::new(2, 3);
        assert_eq!(stage_cost(s, 0.5, &p), 355.0);
        assert_eq!(stage_cost(s, 0.5, &p), stage_cost_oracle(s, 0.5, &p));
        let s = State::new(3, 0);
        assert_eq!(stage_cost(s, 1.0, &p), 180.0);
        assert_eq!(stage_cost(s, 1.0, &p), stage_cost_oracle(s, 1.0, &p));
    }

    #[test]
    fn uniformized_interior_row() {
        let p = demo_params();
        let row = uniformized_row(State::new(2, 3), 1.5, &p).unwrap();
        let expect = vec![
            (State::new(3, 3), 0.30),
            (State::new(1, 2), 0.50),
            (State::new(2, 4), 0.15),
            (State::new(2, 3), 0.05),
        ];
        assert_eq!(row.probs.len(), expect.len());
        for ((ts, ps), (te, pe)) in row.probs.iter().zip(&expect) {
            assert_eq!(ts, te);
            assert!((ps - pe).abs() < 1e-15, "{ps} vs {pe}");
        }
    }

    #[test]
    fn uniformized_boundary_self_loop() {
        let p = ModelParams { n_max: 6, i_max: 6, ..demo_params() };
        let row = uniformized_row(State::new(4, 0), 2.0, &p).unwrap();
        assert_eq!(row.probs[0], (State::new(4, 1), 0.2));
        let (s, prob) = row.probs[1];
        assert_eq!(s, State::new(4, 0));
        assert!((prob - 0.8).abs() < 1e-15);
    }

    #[test]
    fn every_positive_rate_policy_is_irreducible() {
        let p = demo_params();
        for rate in [0.001, 0.8, 2.0] {
            assert!(check_irreducibility(&p, &Policy::constant(&p, rate)));
        }
        let tiny = ModelParams { n_max: 1, i_max: 1, ..demo_params() };
        assert!(check_irreducibility(&tiny, &Policy::constant(&tiny, 1.0)));
    }

    #[test]
    fn truncation_corner_is_transient_not_reachable() {
        // (n_max, 0) has no incoming transition, so the strict strong
        // connectivity test fails while the unichain test passes.
        let p = demo_params();
        let pol = Policy::constant(&p, 1.0);
        let mut adj = vec![Vec::new(); p.num_states()];
        for s in p.states() {
            let row = transition_rates(s, pol.rate(&p, s), &p).unwrap();
            for (t, _) in row.entries {
                adj[p.state_index(s)].push(p.state_index(t));
            }
        }
        assert!(!strongly_connected(&adj));
        assert_eq!(count_closed_classes(&adj), 1);
    }

    #[test]
    fn synthetic_disconnected_graph_is_detected() {
        // Two isolated 2-cycles: a rate table no admissible model produces.
        let adj = vec![vec![1], vec![0], vec![3], vec![2]];
        assert!(!strongly_connected(&adj));
        assert_eq!(count_closed_classes(&adj), 2);
        let cycle = vec![vec![1], vec![2], vec![0]];
        assert!(strongly_connected(&cycle));
        assert_eq!(count_closed_classes(&cycle), 1);
        // One-way drain into a recurrent core, the shape a rate table with
        // no arrivals would produce: unichain but not strongly connected.
        let drain = vec![vec![1], vec![0], vec![0], vec![2]];
        assert!(!strongly_connected(&drain));
        assert_eq!(count_closed_classes(&drain), 1);
    }

    #[test]
    fn one_by_one_grid_enumerated() {
        // Four states: (0,0) -> (0,1) -> (1,1) -> (0,0) cycle plus the
        // transient corner (1,0) feeding into it.
        let p = ModelParams { n_max: 1, i_max: 1, ..demo_params() };
        let pol = Policy::constant(&p, 1.0);
        assert!(check_irreducibility(&p, &pol));
        let row = transition_rates(State::new(1, 0), 1.0, &p).unwrap();
        assert_eq!(row.entries, vec![(State::new(1, 1), 1.0)]);
    }

    proptest! {
        #[test]
        fn rate_rows_balance_and_respect_the_uniform_bound(
            n in 0usize..5, i in 0usize..5, beta in 0.001f64..=2.0
        ) {
            let p = demo_params();
            let row = transition_rates(State::new(n, i), beta, &p).unwrap();
            let sum: f64 = row.entries.iter().map(|&(_, r)| r).sum::<f64>() + row.diagonal;
            prop_assert_eq!(sum, 0.0);
            prop_assert!(row.exit_rate() <= p.uniformization_bound() + 1e-12);
        }

        #[test]
        fn uniformized_rows_are_distributions(
            n in 0usize..5, i in 0usize..5, beta in 0.001f64..=2.0
        ) {
            let p = demo_params();
            let row = uniformized_row(State::new(n, i), beta, &p).unwrap();
            let mut total = 0.0;
            for &(_, prob) in &row.probs {
                prop_assert!((0.0..=1.0).contains(&prob));
                total += prob;
            }
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn stage_cost_is_affine_and_nondecreasing_in_beta(
            n in 0usize..5, i in 0usize..5,
            b1 in 0.001f64..=2.0, b2 in 0.001f64..=2.0
        ) {
            let p = demo_params();
            let s = State::new(n, i);
            let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
            prop_assert!(stage_cost(s, lo, &p) <= stage_cost(s, hi, &p));
            // Affine: the midpoint matches the chord.
            let mid = 0.5 * (lo + hi);
            let chord = 0.5 * (stage_cost(s, lo, &p) + stage_cost(s, hi, &p));
            prop_assert!((stage_cost(s, mid, &p) - chord).abs() <= 1e-9);
        }

        #[test]
        fn off_diagonal_structure_matches_the_block_pattern(
            n in 0usize..5, i in 0usize..5
        ) {
            let p = demo_params();
            let row = transition_rates(State::new(n, i), 1.0, &p).unwrap();
            let expected = match (n, i) {
                (_, 0) => 1,                                  // production only
                (n, i) if n > 0 && n < 4 && i < 4 => 3,       // interior
                _ => row.entries.len(),                       // boundary rows vary
            };
            prop_assert_eq!(row.entries.len(), expected);
        }
    }
}
