//! Seeded continuous-time trajectory simulation for the controlled chain, and
//! the statistical certificate that a policy's pathwise average cost stays
//! within a tolerance of a target gain.
//!
//! Reproducibility contract: streams come from the ChaCha12 generator keyed by
//! a SplitMix64 expansion of the 64-bit seed ([`RNG_ALGORITHM`]). Uniforms are
//! the high 53 bits of one draw scaled by 2^-53; holding times use the inverse
//! CDF `-ln(1 - U) / rate` with zero draws rejected. Any implementation of the
//! same recipe reproduces the streams bit for bit.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

use crate::model::{stage_cost, transition_rates, ModelParams, Policy, State};

/// Identifier of the random-number recipe baked into reports.
pub const RNG_ALGORITHM: &str = "chacha12-splitmix64-invcdf/v1";

/// One simulated path: entry times, visited states, rates in force, and the
/// exact running cost integral.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    /// Entry time of each visited state; starts at 0, strictly increasing.
    pub jump_times: Vec<f64>,
    /// State occupied on each interval.
    pub states: Vec<State>,
    /// Production rate in force on each interval.
    pub actions: Vec<f64>,
    /// Integral of the stage-cost rate along the path.
    pub accumulated_cost: f64,
    /// Total simulated time.
    pub horizon: f64,
}

/// Per-seed pathwise averages checked against a target gain.
#[derive(Debug, Clone, PartialEq)]
pub struct PacReport {
    /// Seed actually used for each trajectory, aligned with the averages.
    pub seeds: Vec<u64>,
    pub per_seed_averages: Vec<f64>,
    pub mean: f64,
    pub target_gain: f64,
    pub epsilon: f64,
    /// Fraction of seeds that must land within `epsilon` of the target.
    pub quorum: f64,
    pub pass: bool,
    /// Random-number recipe used, for cross-implementation reproduction.
    pub rng_algorithm: &'static str,
}

/// Deterministic stream generator for one trajectory.
struct SimRng {
    rng: ChaCha12Rng,
}

impl SimRng {
    fn new(seed: u64) -> Self {
        // SplitMix64 expansion of the seed into the 256-bit ChaCha key,
        // little-endian word order.
        let mut state = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = state.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^= z >> 31;
            chunk.copy_from_slice(&z.to_le_bytes());
        }
        Self { rng: ChaCha12Rng::from_seed(key) }
    }

    /// Uniform on [0, 1) from the high 53 bits of one 64-bit draw.
    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Exponential holding time by inverse CDF; zero draws are rejected so
    /// jump times stay strictly increasing.
    fn exponential(&mut self, rate: f64) -> f64 {
        loop {
            let sample = -(-self.uniform()).ln_1p() / rate;
            if sample > 0.0 {
                return sample;
            }
        }
    }
}

/// Simulates the chain under `pol` from `init` up to the time `horizon`.
///
/// Holding times are exponential with the state's total exit rate; the
/// successor is drawn proportionally to the outgoing rates. The sample is a
/// deterministic function of `(seed, pol, init, horizon, p)`.
pub fn simulate_trajectory(
    pol: &Policy,
    init: State,
    horizon: f64,
    seed: u64,
    p: &ModelParams,
) -> TrajectorySample {
    assert!(horizon > 0.0, "horizon must be positive");
    run_simulation(pol, init, StopRule::Time(horizon), seed, p)
}

/// Event-count variant: stops after `events` jumps (the expected event density
/// varies with the policy, so a jump budget is often the better handle). The
/// recorded horizon is the time of the final jump.
pub fn simulate_trajectory_events(
    pol: &Policy,
    init: State,
    events: usize,
    seed: u64,
    p: &ModelParams,
) -> TrajectorySample {
    assert!(events > 0, "need at least one event");
    run_simulation(pol, init, StopRule::Events(events), seed, p)
}

enum StopRule {
    Time(f64),
    Events(usize),
}

fn run_simulation(
    pol: &Policy,
    init: State,
    stop: StopRule,
    seed: u64,
    p: &ModelParams,
) -> TrajectorySample {
    let mut rng = SimRng::new(seed);
    let mut state = init;
    let mut now = 0.0f64;
    let mut cost = 0.0f64;
    let mut jump_times = vec![0.0];
    let mut states = vec![state];
    let mut actions = vec![pol.rate(p, state)];
    let mut jumps = 0usize;

    loop {
        let beta = *actions.last().expect("intervals start populated");
        let row = transition_rates(state, beta, p).expect("trajectory stays on the grid");
        let exit = row.exit_rate();
        let rate_cost = stage_cost(state, beta, p);

        if exit <= 0.0 {
            // Absorbing state; a time horizon still terminates.
            match stop {
                StopRule::Time(t_end) => {
                    cost += rate_cost * (t_end - now);
                    now = t_end;
                }
                StopRule::Events(_) => {}
            }
            break;
        }

        let hold = rng.exponential(exit);
        if let StopRule::Time(t_end) = stop {
            if now + hold >= t_end {
                cost += rate_cost * (t_end - now);
                now = t_end;
                break;
            }
        }
        cost += rate_cost * hold;
        now += hold;

        // Successor proportional to the outgoing rates, in row order.
        let draw = rng.uniform() * exit;
        let mut acc = 0.0;
        let mut next = row.entries.last().expect("exit > 0 implies entries").0;
        for &(target, rate) in &row.entries {
            acc += rate;
            if draw < acc {
                next = target;
                break;
            }
        }
        state = next;
        jumps += 1;
        jump_times.push(now);
        states.push(state);
        actions.push(pol.rate(p, state));

        if let StopRule::Events(budget) = stop {
            if jumps >= budget {
                break;
            }
        }
    }

    TrajectorySample { jump_times, states, actions, accumulated_cost: cost, horizon: now }
}

/// Time-average of the realized cost along one path.
pub fn pathwise_average_cost(t: &TrajectorySample) -> f64 {
    t.accumulated_cost / t.horizon
}

/// Runs independent seeded trajectories from the empty state and checks the
/// per-seed pathwise averages against `target_gain`.
///
/// Trajectory `k` uses seed `base_seed + k`. The certificate passes when at
/// least `quorum` of the seeds land within `epsilon` of the target; the
/// almost-sure statement it stands in for is not observable at any finite
/// horizon.
#[allow(clippy::too_many_arguments)]
pub fn pac_certify(
    pol: &Policy,
    target_gain: f64,
    epsilon: f64,
    seeds: u32,
    horizon: f64,
    base_seed: u64,
    quorum: f64,
    p: &ModelParams,
) -> PacReport {
    assert!(epsilon > 0.0, "epsilon must be positive");
    assert!(seeds >= 1, "need at least one seed");
    let init = State::new(0, 0);
    let mut used = Vec::with_capacity(seeds as usize);
    let mut averages = Vec::with_capacity(seeds as usize);
    for k in 0..seeds as u64 {
        let seed = base_seed.wrapping_add(k);
        let sample = simulate_trajectory(pol, init, horizon, seed, p);
        used.push(seed);
        averages.push(pathwise_average_cost(&sample));
    }
    let mean = averages.iter().sum::<f64>() / averages.len() as f64;
    let hits = averages.iter().filter(|a| (**a - target_gain).abs() <= epsilon).count();
    let pass = hits as f64 >= quorum * seeds as f64;
    PacReport {
        seeds: used,
        per_seed_averages: averages,
        mean,
        target_gain,
        epsilon,
        quorum,
        pass,
        rng_algorithm: RNG_ALGORITHM,
    }
}
