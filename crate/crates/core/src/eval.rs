//! Monte-Carlo policy evaluation, hyperparameter sweeps, and timing tables.
//!
//! Every rollout owns a random stream derived from `(seed, start, rollout)`,
//! so results do not depend on thread scheduling.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::direct::{DirectPolicy, DirectSolver};
use crate::error::{Error, Result};
use crate::geometry::{Region, State};
use crate::kernel::{GramSystem, KernelParams};
use crate::policy::Policy;
use crate::rng;
use crate::scalar::{lit, to_f64, Scalar};
use crate::taylor::{TaylorPolicy, TaylorSolver};
use crate::world::World;

/// Attempts per start state before giving up on finding a free state.
const MAX_START_ATTEMPTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutConfig {
    pub n_start_states: usize,
    pub rollouts_per_state: usize,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            n_start_states: 10_000,
            rollouts_per_state: 4,
            max_steps: 100,
            seed: 0,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_start_states", self.n_start_states),
            ("rollouts_per_state", self.rollouts_per_state),
            ("max_steps", self.max_steps),
        ] {
            if v == 0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be at least 1"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Goal,
    Obstacle,
    Timeout,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Goal => "goal",
            Outcome::Obstacle => "obstacle",
            Outcome::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout<T> {
    /// `Σ_t γ^t r_t` where `r_t` is the reward collected on the `t`-th move.
    pub discounted_return: T,
    pub outcome: Outcome,
    pub steps: usize,
}

/// Simulates one trajectory from `start`; `visit` sees every visited state,
/// including `start` and the final one.
pub fn rollout_with<T, W, P, R, F>(
    world: &W,
    policy: &P,
    start: State<T>,
    max_steps: usize,
    rng: &mut R,
    mut visit: F,
) -> Result<Rollout<T>>
where
    T: Scalar,
    W: World<T> + ?Sized,
    P: Policy<T> + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(State<T>),
{
    world.workspace().require_free(start)?;
    let gamma = world.gamma();
    let mut s = start;
    let mut discount = T::one();
    let mut total = T::zero();
    visit(s);
    for step in 0..max_steps {
        let next = world.transition(s, policy.action(s))?.sample(rng);
        visit(next);
        total += discount * world.arrival_reward(next);
        match world.classify(next) {
            Region::Goal => return Ok(finish(total, Outcome::Goal, step + 1)),
            Region::Obstacle => return Ok(finish(total, Outcome::Obstacle, step + 1)),
            _ => {}
        }
        discount *= gamma;
        s = next;
    }
    Ok(finish(total, Outcome::Timeout, max_steps))
}

fn finish<T>(discounted_return: T, outcome: Outcome, steps: usize) -> Rollout<T> {
    Rollout {
        discounted_return,
        outcome,
        steps,
    }
}

pub fn rollout_return<T, W, P, R>(
    world: &W,
    policy: &P,
    start: State<T>,
    max_steps: usize,
    rng: &mut R,
) -> Result<Rollout<T>>
where
    T: Scalar,
    W: World<T> + ?Sized,
    P: Policy<T> + ?Sized,
    R: Rng + ?Sized,
{
    rollout_with(world, policy, start, max_steps, rng, |_| {})
}

/// The visited states of one rollout.
pub fn trajectory<T, W, P, R>(
    world: &W,
    policy: &P,
    start: State<T>,
    max_steps: usize,
    rng: &mut R,
) -> Result<(Vec<State<T>>, Rollout<T>)>
where
    T: Scalar,
    W: World<T> + ?Sized,
    P: Policy<T> + ?Sized,
    R: Rng + ?Sized,
{
    let mut path = Vec::new();
    let r = rollout_with(world, policy, start, max_steps, rng, |s| path.push(s))?;
    Ok((path, r))
}

/// `n` uniformly distributed free states, resampling terminal draws.
pub fn sample_start_states<T: Scalar, W: World<T> + ?Sized>(
    world: &W,
    n: usize,
    seed: u64,
) -> Result<Vec<State<T>>> {
    let b = *world.workspace().bounds();
    let mut r = rng::stream(seed, &[0x5354_4152_5453]);
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        let s = State::new(
            T::uniform(&mut r, b.min.x, b.max.x),
            T::uniform(&mut r, b.min.y, b.max.y),
        );
        if world.classify(s) == Region::Free {
            out.push(s);
            attempts = 0;
        } else {
            attempts += 1;
            if attempts > MAX_START_ATTEMPTS {
                return Err(Error::InvalidParameter(
                    "workspace has no free states to start from".into(),
                ));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnEstimate {
    pub mean: f64,
    /// Sample standard deviation of all rollout returns over `√rollouts`.
    pub std_error: f64,
    /// Fraction of rollouts that reached the goal.
    pub success_rate: f64,
    pub rollouts: usize,
}

/// Average return over the given start states, `rollouts_per_state` each.
pub fn average_return_from<T, W, P>(
    world: &W,
    policy: &P,
    starts: &[State<T>],
    config: &RolloutConfig,
) -> Result<ReturnEstimate>
where
    T: Scalar,
    W: World<T> + ?Sized,
    P: Policy<T> + ?Sized,
{
    config.validate()?;
    if starts.is_empty() {
        return Err(Error::InvalidParameter("no start states".into()));
    }
    let k = config.rollouts_per_state;
    let results = (0..starts.len() * k)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / k, idx % k);
            let mut r = rng::stream(config.seed, &[i as u64, j as u64]);
            rollout_return(world, policy, starts[i], config.max_steps, &mut r)
        })
        .collect::<Result<Vec<_>>>()?;
    let returns: Vec<f64> = results
        .iter()
        .map(|r| to_f64(r.discounted_return))
        .collect();
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = if returns.len() > 1 {
        returns.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let goals = results
        .iter()
        .filter(|r| r.outcome == Outcome::Goal)
        .count();
    Ok(ReturnEstimate {
        mean,
        std_error: (var / n).sqrt(),
        success_rate: goals as f64 / n,
        rollouts: returns.len(),
    })
}

/// Average return over `n_start_states` uniform free starts.
pub fn average_return<T, W, P>(
    world: &W,
    policy: &P,
    config: &RolloutConfig,
) -> Result<ReturnEstimate>
where
    T: Scalar,
    W: World<T> + ?Sized,
    P: Policy<T> + ?Sized,
{
    config.validate()?;
    let starts = sample_start_states(world, config.n_start_states, config.seed)?;
    average_return_from(world, policy, &starts, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Taylor,
    Direct,
    Grid,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Taylor => "taylor",
            Method::Direct => "direct",
            Method::Grid => "grid",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "taylor" => Ok(Method::Taylor),
            "direct" => Ok(Method::Direct),
            "grid" => Ok(Method::Grid),
            other => Err(Error::Parse(format!("unknown method `{other}`"))),
        }
    }
}

/// Result of one solve-and-evaluate run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub estimate: ReturnEstimate,
    pub iterations: usize,
    pub converged: bool,
    pub seconds: f64,
}

/// Solves with a kernel method on `support` and evaluates the greedy policy.
pub fn solve_and_evaluate<T, W>(
    world: &W,
    support: &[State<T>],
    params: KernelParams<T>,
    method: Method,
    max_iters: usize,
    starts: &[State<T>],
    config: &RolloutConfig,
) -> Result<RunStats>
where
    T: Scalar,
    W: World<T> + ?Sized,
{
    let t0 = Instant::now();
    let gram = GramSystem::build(params, support)?;
    let (values, iterations, converged) = match method {
        Method::Taylor => {
            let solver = TaylorSolver::new(&gram, world)?;
            let out = solver.run(solver.initial_policy(), max_iters)?;
            (out.values, out.trace.len(), out.converged)
        }
        Method::Direct => {
            let solver = DirectSolver::new(&gram, world)?;
            let out = solver.run(solver.initial_policy(), max_iters)?;
            (out.values, out.trace.len(), out.converged)
        }
        Method::Grid => {
            return Err(Error::Unsupported(
                "grid policy iteration has no kernel hyperparameters".into(),
            ))
        }
    };
    let seconds = t0.elapsed().as_secs_f64();
    let estimate = match method {
        Method::Taylor => average_return_from(
            world,
            &TaylorPolicy::new(&gram, world, &values)?,
            starts,
            config,
        )?,
        _ => average_return_from(
            world,
            &DirectPolicy::new(&gram, world, &values)?,
            starts,
            config,
        )?,
    };
    Ok(RunStats {
        estimate,
        iterations,
        converged,
        seconds,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub lengthscale: f64,
    pub lambda: f64,
    /// Failure message when the cell could not be solved.
    pub result: std::result::Result<RunStats, String>,
}

impl SweepCell {
    pub fn average_return(&self) -> Option<f64> {
        self.result.as_ref().ok().map(|r| r.estimate.mean)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceMatrix {
    pub method: Method,
    pub lengthscales: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// Row-major: `cells[i * lambdas.len() + j]` is `(lengthscales[i], lambdas[j])`.
    pub cells: Vec<SweepCell>,
}

impl PerformanceMatrix {
    pub fn cell(&self, i: usize, j: usize) -> &SweepCell {
        &self.cells[i * self.lambdas.len() + j]
    }

    /// Highest-return solved cell; earlier cells win ties.
    pub fn best(&self) -> Option<&SweepCell> {
        self.cells.iter().fold(None, |best: Option<&SweepCell>, c| {
            match (best, c.average_return()) {
                (_, None) => best,
                (None, Some(_)) => Some(c),
                (Some(b), Some(v)) => {
                    if v > b.average_return().unwrap_or(f64::NEG_INFINITY) {
                        Some(c)
                    } else {
                        Some(b)
                    }
                }
            }
        })
    }

    /// Columns `lengthscale,lambda,return,se,iters,seconds,converged,error`.
    /// Wall time is written only when `with_time` is set, so that default
    /// outputs are reproducible byte for byte.
    pub fn write_csv<W: Write>(&self, out: W, with_time: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "lengthscale",
            "lambda",
            "return",
            "se",
            "iters",
            "seconds",
            "converged",
            "error",
        ])?;
        for c in &self.cells {
            let (l, lam) = (c.lengthscale.to_string(), c.lambda.to_string());
            match &c.result {
                Ok(r) => w.write_record([
                    l,
                    lam,
                    r.estimate.mean.to_string(),
                    r.estimate.std_error.to_string(),
                    r.iterations.to_string(),
                    if with_time {
                        r.seconds.to_string()
                    } else {
                        String::new()
                    },
                    r.converged.to_string(),
                    String::new(),
                ])?,
                Err(e) => w.write_record([
                    l,
                    lam,
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    "false".to_string(),
                    e.clone(),
                ])?,
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn check_axis(name: &str, axis: &[f64]) -> Result<()> {
    if axis.is_empty() {
        return Err(Error::InvalidParameter(format!("{name} axis is empty")));
    }
    for (i, a) in axis.iter().enumerate() {
        if !(a.is_finite() && *a > 0.0) && !(name == "lambda" && *a == 0.0) {
            return Err(Error::InvalidParameter(format!(
                "{name} axis value {a} is not valid"
            )));
        }
        if axis[..i].contains(a) {
            return Err(Error::InvalidParameter(format!("{name} axis repeats {a}")));
        }
    }
    Ok(())
}

/// Sweep settings shared by every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub method: Method,
    pub amplitude: f64,
    pub max_iters: usize,
    pub rollout: RolloutConfig,
}

/// Solves and evaluates every `(ℓ, λ)` cell with isotropic lengthscale `ℓ`.
/// All cells share the same start states and rollout streams.
pub fn hyperparameter_sweep<T, W>(
    world: &W,
    support: &[State<T>],
    lengthscales: &[f64],
    lambdas: &[f64],
    config: &SweepConfig,
) -> Result<PerformanceMatrix>
where
    T: Scalar,
    W: World<T> + ?Sized,
{
    check_axis("lengthscale", lengthscales)?;
    check_axis("lambda", lambdas)?;
    if config.method == Method::Grid {
        return Err(Error::Unsupported(
            "grid policy iteration has no kernel hyperparameters".into(),
        ));
    }
    config.rollout.validate()?;
    let starts = sample_start_states(world, config.rollout.n_start_states, config.rollout.seed)?;
    let pairs: Vec<(f64, f64)> = lengthscales
        .iter()
        .flat_map(|&l| lambdas.iter().map(move |&lam| (l, lam)))
        .collect();
    let cells = pairs
        .par_iter()
        .map(|&(l, lam)| {
            let result = KernelParams::isotropic(lit(config.amplitude), lit(l), lit(lam))
                .and_then(|p| {
                    solve_and_evaluate(
                        world,
                        support,
                        p,
                        config.method,
                        config.max_iters,
                        &starts,
                        &config.rollout,
                    )
                })
                .map_err(|e| e.to_string());
            SweepCell {
                lengthscale: l,
                lambda: lam,
                result,
            }
        })
        .collect();
    Ok(PerformanceMatrix {
        method: config.method,
        lengthscales: lengthscales.to_vec(),
        lambdas: lambdas.to_vec(),
        cells,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub method: Method,
    pub states: usize,
    pub iterations: usize,
    pub setup_seconds: f64,
    pub seconds_per_iteration: f64,
}

/// Table keyed by `(method, states)`, sorted by that key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
}

impl TimingReport {
    pub fn push(&mut self, row: TimingRow) {
        let key = (row.method.as_str(), row.states);
        let at = self
            .rows
            .partition_point(|r| (r.method.as_str(), r.states) <= key);
        self.rows.insert(at, row);
    }

    pub fn get(&self, method: Method, states: usize) -> Option<&TimingRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.states == states)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "method",
            "states",
            "iterations",
            "setup_seconds",
            "seconds_per_iteration",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.method.as_str().to_string(),
                r.states.to_string(),
                r.iterations.to_string(),
                r.setup_seconds.to_string(),
                r.seconds_per_iteration.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Median wall time of building and factoring the Gram system over `repeats` runs.
pub fn gram_setup_seconds<T: Scalar>(
    params: KernelParams<T>,
    support: &[State<T>],
    repeats: usize,
) -> Result<f64> {
    let mut times = (0..repeats.max(1))
        .map(|_| {
            let t0 = Instant::now();
            let g = GramSystem::build(params, support)?;
            std::hint::black_box(&g);
            Ok(t0.elapsed().as_secs_f64())
        })
        .collect::<Result<Vec<_>>>()?;
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}
