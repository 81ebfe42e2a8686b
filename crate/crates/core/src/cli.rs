//! Batch front-end: flat key=value config files, subcommand dispatch, and
//! plot-ready CSV artifacts.
//!
//! Artifacts use fixed float formatting (rates at 3 decimals matching the
//! default grid resolution, everything else at 12 significant digits) and a
//! fixed row order: identical runs produce byte-identical CSV files.
//! `report.txt` additionally carries wall time and is exempt from the
//! byte-identity guarantee.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::average::{self, AverageError};
use crate::discounted::{self, DiscountedError, ValueFunction};
use crate::model::{
    build_action_grid, validate_params, ActionGrid, ModelError, ModelParams, Policy, GRID_TOL,
};
use crate::pac_sim;
use crate::steady_state::{self, JointDist, SteadyStateError};

/// Commands understood by [`run`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SteadyState,
    SolveVi,
    SolvePi,
    SolveAvg,
    Simulate,
    Certify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SteadyState => "steady-state",
            Command::SolveVi => "solve-vi",
            Command::SolvePi => "solve-pi",
            Command::SolveAvg => "solve-avg",
            Command::Simulate => "simulate",
            Command::Certify => "certify",
        }
    }
}

/// Which solver backs commands that need a solved policy (`certify`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Vi,
    Pi,
    Avg,
}

/// Initial/fixed policy specification: a constant rate or a policy CSV.
#[derive(Debug, Clone, PartialEq)]
pub enum InitPolicy {
    Constant(f64),
    File(PathBuf),
}

/// Errors of the batch front-end, partitioned by exit code: config problems
/// exit 1, solver failures exit 2, simulation failures exit 3.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("invalid parameters: {0}")]
    Validation(#[from] ModelError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("solver: {0}")]
    Solve(String),
    #[error("simulation: {0}")]
    Sim(String),
}

impl CliError {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. }
            | CliError::MissingKey(_)
            | CliError::Validation(_)
            | CliError::Io { .. } => 1,
            CliError::Solve(_) => 2,
            CliError::Sim(_) => 3,
        }
    }
}

impl From<DiscountedError> for CliError {
    fn from(e: DiscountedError) -> Self {
        CliError::Solve(e.to_string())
    }
}

impl From<AverageError> for CliError {
    fn from(e: AverageError) -> Self {
        CliError::Solve(e.to_string())
    }
}

impl From<SteadyStateError> for CliError {
    fn from(e: SteadyStateError) -> Self {
        CliError::Solve(e.to_string())
    }
}

/// A parsed and validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    pub tol: f64,
    pub solver: SolverKind,
    pub init_policy: InitPolicy,
    pub seeds: u32,
    pub horizon: f64,
    pub out_dir: PathBuf,
}

/// Optimal-rate table in the row/column layout of the policy figures:
/// rows indexed by n, columns by i.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    n_levels: usize,
    i_levels: usize,
    rates: Vec<f64>,
}

impl PolicyTable {
    pub fn from_policy(p: &ModelParams, pol: &Policy) -> Self {
        Self {
            n_levels: p.n_max + 1,
            i_levels: p.i_max + 1,
            rates: pol.rates().to_vec(),
        }
    }

    pub fn rate(&self, n: usize, i: usize) -> f64 {
        self.rates[n * self.i_levels + i]
    }
}

const KEYS: &[&str] = &[
    "lambda", "mu", "gamma_lo", "rate_hi", "grid_step", "h", "c1", "c2", "c3", "s_thresh",
    "alpha", "n_max", "i_max", "tol", "solver", "init_policy", "seeds", "horizon", "out_dir",
];

/// Defaults applied to missing optional keys. The grid and truncation default
/// to the 0.001-spaced interval [0.001, 2] on the 5x5 grid; `tol` defaults to
/// 0.001.
const DEFAULTS: &[(&str, &str)] = &[
    ("gamma_lo", "0.001"),
    ("rate_hi", "2"),
    ("grid_step", "0.001"),
    ("alpha", "0.7"),
    ("n_max", "4"),
    ("i_max", "4"),
    ("tol", "0.001"),
    ("solver", "avg"),
    ("seeds", "20"),
    ("horizon", "1e5"),
    ("out_dir", "out"),
];

const REQUIRED: &[&str] = &["lambda", "mu", "h", "c1", "c2", "c3", "s_thresh"];

/// Parses a flat `key = value` file (one pair per line, `#` comments) into a
/// validated [`RunConfig`]. Unknown and duplicate keys are errors; missing
/// optional keys take the documented defaults.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;

    let parse_err = |line: usize, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut pairs: Vec<(&str, String, usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(parse_err(line_no, format!("expected `key = value`, got `{line}`")));
        };
        let key = key.trim();
        let value = value.trim();
        let Some(&canonical) = KEYS.iter().find(|&&k| k == key) else {
            return Err(parse_err(line_no, format!("unknown key `{key}`")));
        };
        if pairs.iter().any(|(k, _, _)| *k == canonical) {
            return Err(parse_err(line_no, format!("duplicate key `{key}`")));
        }
        if value.is_empty() {
            return Err(parse_err(line_no, format!("key `{key}` has no value")));
        }
        pairs.push((canonical, value.to_string(), line_no));
    }

    for key in REQUIRED {
        if !pairs.iter().any(|(k, _, _)| k == key) {
            return Err(CliError::MissingKey(key));
        }
    }
    for (key, default) in DEFAULTS {
        if !pairs.iter().any(|(k, _, _)| k == key) {
            pairs.push((key, default.to_string(), 0));
        }
    }

    let lookup = |key: &str| -> (&str, usize) {
        let (_, v, l) = pairs.iter().find(|(k, _, _)| *k == key).expect("filled above");
        (v.as_str(), *l)
    };
    let float = |key: &str| -> Result<f64, CliError> {
        let (v, l) = lookup(key);
        v.parse::<f64>().map_err(|_| parse_err(l, format!("key `{key}`: `{v}` is not a number")))
    };
    let integer = |key: &str| -> Result<u64, CliError> {
        let (v, l) = lookup(key);
        v.parse::<u64>()
            .map_err(|_| parse_err(l, format!("key `{key}`: `{v}` is not a nonnegative integer")))
    };

    let params = validate_params(ModelParams {
        lambda: float("lambda")?,
        mu: float("mu")?,
        gamma_lo: float("gamma_lo")?,
        rate_hi: float("rate_hi")?,
        grid_step: float("grid_step")?,
        h: float("h")?,
        c1: float("c1")?,
        c2: float("c2")?,
        c3: float("c3")?,
        s_thresh: integer("s_thresh")? as u32,
        alpha: float("alpha")?,
        n_max: integer("n_max")? as usize,
        i_max: integer("i_max")? as usize,
    })?;

    let tol = float("tol")?;
    if !(tol > 0.0) {
        let (_, l) = lookup("tol");
        return Err(parse_err(l, format!("tol must be positive, got {tol}")));
    }
    let horizon = float("horizon")?;
    if !(horizon > 0.0) {
        let (_, l) = lookup("horizon");
        return Err(parse_err(l, format!("horizon must be positive, got {horizon}")));
    }
    let seeds = integer("seeds")? as u32;
    if seeds == 0 {
        let (_, l) = lookup("seeds");
        return Err(parse_err(l, "seeds must be at least 1".to_string()));
    }

    let solver = match lookup("solver") {
        ("vi", _) => SolverKind::Vi,
        ("pi", _) => SolverKind::Pi,
        ("avg", _) => SolverKind::Avg,
        (other, l) => {
            return Err(parse_err(l, format!("solver must be vi, pi or avg, got `{other}`")))
        }
    };

    let init_policy = match pairs.iter().find(|(k, _, _)| *k == "init_policy") {
        None => InitPolicy::Constant(params.gamma_lo),
        Some((_, v, _)) => match v.parse::<f64>() {
            Ok(rate) => InitPolicy::Constant(rate),
            Err(_) => InitPolicy::File(PathBuf::from(v)),
        },
    };

    let out_dir = PathBuf::from(lookup("out_dir").0);

    Ok(RunConfig { params, tol, solver, init_policy, seeds, horizon, out_dir })
}

/// Resolves the configured initial/fixed policy against the action grid.
pub fn resolve_init_policy(cfg: &RunConfig, grid: &ActionGrid) -> Result<Policy, CliError> {
    match &cfg.init_policy {
        InitPolicy::Constant(rate) => {
            if !grid.contains(*rate) {
                return Err(CliError::Validation(ModelError::BadActionBounds(format!(
                    "init_policy rate {rate} is not on the action grid"
                ))));
            }
            Ok(Policy::constant(&cfg.params, grid.nearest(*rate)))
        }
        InitPolicy::File(path) => load_policy_table(path, &cfg.params, grid),
    }
}

/// Executes one command, writing its artifacts into `cfg.out_dir`.
///
/// Artifacts per command: `policy.csv` and `values.csv` plus `convergence.csv`
/// for the solvers, `steady_state.csv` for the stationary solve,
/// `pac_report.csv` for the simulation commands, and `report.txt` always.
pub fn run(cfg: &RunConfig, command: Command, base_seed: u64) -> Result<(), CliError> {
    let started = Instant::now();
    let p = &cfg.params;
    let grid = build_action_grid(p)?;
    fs::create_dir_all(&cfg.out_dir)
        .map_err(|source| CliError::Io { path: cfg.out_dir.clone(), source })?;

    let mut report = String::new();
    let _ = writeln!(report, "command: {}", command.name());
    let _ = writeln!(report, "states: {}", p.num_states());
    let _ = writeln!(report, "actions: {}", grid.len());

    match command {
        Command::SteadyState => {
            let pol = resolve_init_policy(cfg, &grid)?;
            let dist = steady_state::invariant_measure_numeric(p, &pol)?;
            emit_steady_state(&dist, p, &cfg.out_dir.join("steady_state.csv"))?;
            let g = average::gain(&pol, p)?;
            let _ = writeln!(report, "gain: {}", fmt_value(g));
            let _ = writeln!(report, "total_mass: {}", fmt_value(dist.probs().iter().sum()));
        }
        Command::SolveVi => {
            let solved = discounted::value_iteration(p, cfg.tol)?;
            emit_policy_table(&solved.policy, p, &cfg.out_dir.join("policy.csv"))?;
            emit_values(&solved.values, p, &cfg.out_dir.join("values.csv"))?;
            emit_convergence(&solved.trace, "sup_diff", &cfg.out_dir.join("convergence.csv"))?;
            let _ = writeln!(report, "iterations: {}", solved.iterations);
            let _ = writeln!(report, "final_sup_diff: {}", fmt_value(solved.final_sup_diff));
            let _ = writeln!(
                report,
                "contraction_modulus: {}",
                fmt_value(solved.contraction_modulus)
            );
            let _ = writeln!(report, "hjb_residual: {}", fmt_value(solved.hjb_residual));
        }
        Command::SolvePi => {
            let pol0 = resolve_init_policy(cfg, &grid)?;
            let solved = discounted::policy_iteration_discounted(p, &pol0)?;
            emit_policy_table(&solved.policy, p, &cfg.out_dir.join("policy.csv"))?;
            emit_values(&solved.values, p, &cfg.out_dir.join("values.csv"))?;
            emit_convergence(&solved.trace, "sup_diff", &cfg.out_dir.join("convergence.csv"))?;
            let _ = writeln!(report, "iterations: {}", solved.iterations);
            let _ = writeln!(report, "final_sup_diff: {}", fmt_value(solved.final_sup_diff));
            let _ = writeln!(report, "hjb_residual: {}", fmt_value(solved.hjb_residual));
        }
        Command::SolveAvg => {
            let pol0 = resolve_init_policy(cfg, &grid)?;
            let solved = average::policy_iteration_average(p, &pol0)?;
            emit_policy_table(&solved.policy, p, &cfg.out_dir.join("policy.csv"))?;
            let bias = ValueFunction { values: solved.gain_bias.bias.clone() };
            emit_values(&bias, p, &cfg.out_dir.join("values.csv"))?;
            emit_convergence(&solved.gains, "gain", &cfg.out_dir.join("convergence.csv"))?;
            let _ = writeln!(report, "iterations: {}", solved.iterations);
            let _ = writeln!(report, "gain: {}", fmt_value(solved.gain_bias.gain));
            let _ = writeln!(report, "acoe_residual: {}", fmt_value(solved.acoe_residual));
        }
        Command::Simulate => {
            let pol = resolve_init_policy(cfg, &grid)?;
            let mut rows = Vec::with_capacity(cfg.seeds as usize);
            for k in 0..cfg.seeds as u64 {
                let seed = base_seed.wrapping_add(k);
                let sample = pac_sim::simulate_trajectory(
                    &pol,
                    crate::model::State::new(0, 0),
                    cfg.horizon,
                    seed,
                    p,
                );
                rows.push((seed, pac_sim::pathwise_average_cost(&sample)));
            }
            emit_pac_rows(&rows, &cfg.out_dir.join("pac_report.csv"))?;
            let mean = rows.iter().map(|(_, a)| a).sum::<f64>() / rows.len() as f64;
            let _ = writeln!(report, "seeds: {}", cfg.seeds);
            let _ = writeln!(report, "horizon: {}", fmt_value(cfg.horizon));
            let _ = writeln!(report, "mean_avg_cost: {}", fmt_value(mean));
            let _ = writeln!(report, "rng: {}", pac_sim::RNG_ALGORITHM);
        }
        Command::Certify => {
            let pol0 = resolve_init_policy(cfg, &grid)?;
            let (pol, target) = match cfg.solver {
                SolverKind::Avg => {
                    let solved = average::policy_iteration_average(p, &pol0)?;
                    (solved.policy, solved.gain_bias.gain)
                }
                SolverKind::Vi => {
                    let solved = discounted::value_iteration(p, cfg.tol)?;
                    let g = average::gain(&solved.policy, p)?;
                    (solved.policy, g)
                }
                SolverKind::Pi => {
                    let solved = discounted::policy_iteration_discounted(p, &pol0)?;
                    let g = average::gain(&solved.policy, p)?;
                    (solved.policy, g)
                }
            };
            let epsilon = 0.02 * target;
            if !(epsilon > 0.0) {
                return Err(CliError::Sim(format!(
                    "target gain {target} leaves no certification margin"
                )));
            }
            let pac = pac_sim::pac_certify(
                &pol, target, epsilon, cfg.seeds, cfg.horizon, base_seed, 0.95, p,
            );
            emit_policy_table(&pol, p, &cfg.out_dir.join("policy.csv"))?;
            let rows: Vec<(u64, f64)> = pac
                .seeds
                .iter()
                .copied()
                .zip(pac.per_seed_averages.iter().copied())
                .collect();
            emit_pac_rows(&rows, &cfg.out_dir.join("pac_report.csv"))?;
            let _ = writeln!(report, "target_gain: {}", fmt_value(pac.target_gain));
            let _ = writeln!(report, "epsilon: {}", fmt_value(pac.epsilon));
            let _ = writeln!(report, "quorum: {}", fmt_value(pac.quorum));
            let _ = writeln!(report, "mean_avg_cost: {}", fmt_value(pac.mean));
            let _ = writeln!(report, "pass: {}", pac.pass);
            let _ = writeln!(report, "rng: {}", pac.rng_algorithm);
        }
    }

    let _ = writeln!(report, "wall_time_s: {:.3}", started.elapsed().as_secs_f64());
    write_file(&cfg.out_dir.join("report.txt"), report.as_bytes())
}

/// Writes a policy as CSV with header `n,i,beta`, rows sorted n-major, rates
/// at 3 decimals (the default grid resolution).
pub fn emit_policy_table(pol: &Policy, p: &ModelParams, path: &Path) -> Result<(), CliError> {
    let table = PolicyTable::from_policy(p, pol);
    let mut out = String::from("n,i,beta\n");
    for n in 0..table.n_levels {
        for i in 0..table.i_levels {
            let _ = writeln!(out, "{n},{i},{}", fmt_rate(table.rate(n, i)));
        }
    }
    write_file(path, out.as_bytes())
}

/// Reads a policy CSV back, snapping each rate onto the action grid.
pub fn load_policy_table(
    path: &Path,
    p: &ModelParams,
    grid: &ActionGrid,
) -> Result<Policy, CliError> {
    let text =
        fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    let parse_err = |line: usize, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "n,i,beta" => {}
        other => {
            return Err(parse_err(1, format!("expected header `n,i,beta`, got {other:?}")));
        }
    }
    let mut rates = vec![f64::NAN; p.num_states()];
    let mut seen = vec![false; p.num_states()];
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_err(line_no, format!("expected 3 fields, got {}", fields.len())));
        }
        let n: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad n `{}`", fields[0])))?;
        let i: usize = fields[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad i `{}`", fields[1])))?;
        let beta: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad beta `{}`", fields[2])))?;
        if n > p.n_max || i > p.i_max {
            return Err(parse_err(line_no, format!("state ({n},{i}) outside the grid")));
        }
        let idx = p.state_index(crate::model::State::new(n, i));
        if seen[idx] {
            return Err(parse_err(line_no, format!("duplicate state ({n},{i})")));
        }
        let snapped = grid.nearest(beta);
        // The table prints 3 decimals; accept anything that rounds back onto
        // the grid at that precision.
        if (snapped - beta).abs() > GRID_TOL.max(p.grid_step / 2.0) {
            return Err(parse_err(line_no, format!("rate {beta} is not on the action grid")));
        }
        rates[idx] = snapped;
        seen[idx] = true;
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        let s = p.state_at(missing);
        return Err(CliError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("state ({},{}) missing from the policy table", s.n, s.i),
        });
    }
    Ok(Policy::from_rates(p, rates))
}

fn emit_values(v: &ValueFunction, p: &ModelParams, path: &Path) -> Result<(), CliError> {
    let mut out = String::from("n,i,value\n");
    for s in p.states() {
        let _ = writeln!(out, "{},{},{}", s.n, s.i, fmt_value(v.values[p.state_index(s)]));
    }
    write_file(path, out.as_bytes())
}

fn emit_steady_state(dist: &JointDist, p: &ModelParams, path: &Path) -> Result<(), CliError> {
    let mut out = String::from("n,i,prob\n");
    for s in p.states() {
        let _ = writeln!(out, "{},{},{}", s.n, s.i, fmt_value(dist.probs()[p.state_index(s)]));
    }
    write_file(path, out.as_bytes())
}

fn emit_convergence(values: &[f64], column: &str, path: &Path) -> Result<(), CliError> {
    let mut out = format!("iter,{column}\n");
    for (k, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{},{}", k + 1, fmt_value(*v));
    }
    write_file(path, out.as_bytes())
}

fn emit_pac_rows(rows: &[(u64, f64)], path: &Path) -> Result<(), CliError> {
    let mut out = String::from("seed,avg_cost\n");
    for (seed, avg) in rows {
        let _ = writeln!(out, "{seed},{}", fmt_value(*avg));
    }
    write_file(path, out.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut file = fs::File::create(path)
        .map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    file.write_all(bytes).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Rates print at grid resolution.
fn fmt_rate(x: f64) -> String {
    format!("{x:.3}")
}

/// Probabilities, values and residuals print at 12 significant digits.
fn fmt_value(x: f64) -> String {
    format!("{x:.11e}")
}
