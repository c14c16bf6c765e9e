//! Subcommand implementations. Every command builds its files in memory and
//! writes them once at the end, followed by the manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use taylorpi_core::baselines::direct::{DirectPolicy, DirectSolver};
use taylorpi_core::baselines::grid::{grid_policy_iteration, CellGrid, GridSolution};
use taylorpi_core::eval::{
    average_return_from, hyperparameter_sweep, sample_start_states, trajectory, ReturnEstimate,
    SweepConfig,
};
use taylorpi_core::{
    rng, Action, GramSystem, Method, Policy, Region, State, SupportSet, TaylorPolicy, TaylorSolver,
};

use crate::config::{file_sha256, ExperimentConfig, ManifestInfo};
use crate::error::{CliError, Result};
use crate::experiment::{read_config, Experiment, HEIGHTMAP_FILE};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const SUPPORT_FILE: &str = "support.csv";
pub const VALUES_FILE: &str = "values.csv";
pub const GRID_FILE: &str = "grid_cells.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const EVALUATION_FILE: &str = "evaluation.csv";
pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const EVALUATE_FILE: &str = "evaluate.csv";
pub const VALUE_FIELD_FILE: &str = "value_field.csv";
pub const POLICY_FIELD_FILE: &str = "policy_field.csv";

/// Stream key for exported trajectories, distinct from the evaluation rollouts.
const TRAJECTORY_STREAM: u64 = 0x7472_616a;

/// How a command finished when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Policy iteration hit `max_iters`; artifacts were still written.
    NotConverged,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::NotConverged => 4,
        }
    }
}

/// A solved problem, either at kernel supporting states or on grid cells.
pub enum Solution {
    Kernel {
        method: Method,
        support: SupportSet<f64>,
        values: Vec<f64>,
        /// `None` at absorbing supporting states.
        actions: Vec<Option<Action>>,
    },
    Grid(GridSolution<f64>),
}

#[derive(Default)]
struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = Vec<String>>,
    ) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| CliError::Core(e.into());
        w.write_record(header).map_err(err)?;
        for r in rows {
            w.write_record(&r).map_err(err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::io(name, e.into_error()))?;
        self.add(name, bytes);
        Ok(())
    }

    /// Writes every file into `dir`, then a manifest listing their hashes.
    fn commit(self, dir: &Path, manifest: Option<(&ExperimentConfig, &str)>) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut hashes = BTreeMap::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
            hashes.insert(name.clone(), file_sha256(bytes));
        }
        if let Some((config, command)) = manifest {
            let mut config = config.clone();
            config.manifest = None;
            let info = ManifestInfo {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                commit: env!("TAYLORPI_COMMIT").to_string(),
                config_sha256: config.sha256(),
                files: hashes,
            };
            config.manifest = Some(info);
            let text = toml::to_string(&config).expect("manifest serializes");
            let path = dir.join(MANIFEST_FILE);
            std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    }
}

/// Shortest round-trip decimal; `-0` is written as `0`.
fn num(x: f64) -> String {
    (x + 0.0).to_string()
}

fn action_cell(a: Option<Action>) -> String {
    a.map(|a| a.index().to_string()).unwrap_or_default()
}

/// The config as it should appear in a manifest written to `out`: a file
/// heightmap is referenced by its copy next to the manifest.
fn manifest_config(exp: &Experiment, artifacts: &mut Artifacts) -> ExperimentConfig {
    let mut config = exp.config.clone();
    if let Some(bytes) = &exp.heightmap_file {
        artifacts.add(HEIGHTMAP_FILE, bytes.clone());
        config.world.heightmap = Some(HEIGHTMAP_FILE.to_string());
    }
    config
}

fn out_dir(exp: &Experiment) -> PathBuf {
    PathBuf::from(&exp.config.output.dir)
}

/// Solves, evaluates the greedy policy and writes the run directory.
pub fn solve(exp: &Experiment) -> Result<Status> {
    let cfg = &exp.config;
    let world = exp.world();
    let mut files = Artifacts::default();
    let timing = cfg.output.timing;
    let (solution, converged, iterations) = match cfg.solver.method {
        method @ (Method::Taylor | Method::Direct) => {
            let support = exp.support()?;
            let gram = GramSystem::build(exp.kernel_params()?, support.states())?;
            let outcome = if method == Method::Taylor {
                let solver = TaylorSolver::new(&gram, world)?;
                solver.run(solver.initial_policy(), cfg.solver.max_iters)?
            } else {
                let solver = DirectSolver::new(&gram, world)?;
                solver.run(solver.initial_policy(), cfg.solver.max_iters)?
            };
            let mut header = vec!["iteration", "changed"];
            if timing {
                header.extend(["evaluation_seconds", "improvement_seconds"]);
            }
            files.csv(
                TRACE_FILE,
                &header,
                outcome.trace.iter().map(|t| {
                    let mut row = vec![t.iteration.to_string(), t.changed.to_string()];
                    if timing {
                        row.extend([num(t.evaluation_seconds), num(t.improvement_seconds)]);
                    }
                    row
                }),
            )?;
            let iterations = outcome.iterations();
            let solution = Solution::Kernel {
                method,
                support,
                values: outcome.values,
                actions: outcome.policy.as_slice().to_vec(),
            };
            (solution, outcome.converged, iterations)
        }
        Method::Grid => {
            let g = grid_policy_iteration(
                world,
                cfg.solver.grid_resolution,
                cfg.solver.grid_samples,
                cfg.seed,
                cfg.solver.max_iters,
            )?;
            files.csv(
                TRACE_FILE,
                &["iteration", "max_value_change"],
                g.history.windows(2).enumerate().map(|(i, w)| {
                    let change = w[0]
                        .iter()
                        .zip(&w[1])
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    vec![(i + 1).to_string(), num(change)]
                }),
            )?;
            let (converged, iterations) = (g.converged, g.iterations);
            (Solution::Grid(g), converged, iterations)
        }
    };
    write_solution(&solution, &mut files)?;
    let (estimate, paths) = evaluate_solution(exp, &solution)?;
    write_estimate(&mut files, EVALUATION_FILE, cfg.solver.method, &estimate)?;
    files.csv(
        TRAJECTORIES_FILE,
        &["trajectory", "step", "x", "y", "region"],
        paths.iter().enumerate().flat_map(|(k, path)| {
            path.iter().enumerate().map(move |(step, s)| {
                vec![
                    k.to_string(),
                    step.to_string(),
                    num(s.x),
                    num(s.y),
                    world.classify(*s).as_str().to_string(),
                ]
            })
        }),
    )?;
    let config = manifest_config(exp, &mut files);
    files.commit(&out_dir(exp), Some((&config, "solve")))?;
    println!(
        "solve: {} in {iterations} iteration(s){}; average return {:.4} ± {:.4}, success {:.1}% over {} rollouts",
        cfg.solver.method,
        if converged { "" } else { " (not converged)" },
        estimate.mean,
        estimate.std_error,
        100.0 * estimate.success_rate,
        estimate.rollouts
    );
    Ok(if converged {
        Status::Success
    } else {
        Status::NotConverged
    })
}

fn write_solution(solution: &Solution, files: &mut Artifacts) -> Result<()> {
    match solution {
        Solution::Kernel {
            support,
            values,
            actions,
            ..
        } => {
            let mut buf = Vec::new();
            support.write_csv(&mut buf)?;
            files.add(SUPPORT_FILE, buf);
            files.csv(
                VALUES_FILE,
                &["index", "value", "action"],
                values
                    .iter()
                    .zip(actions)
                    .enumerate()
                    .map(|(i, (v, a))| vec![i.to_string(), num(*v), action_cell(*a)]),
            )
        }
        Solution::Grid(g) => files.csv(
            GRID_FILE,
            &["index", "x", "y", "region", "value", "action"],
            g.centers().iter().enumerate().map(|(i, c)| {
                vec![
                    i.to_string(),
                    num(c.x),
                    num(c.y),
                    g.regions[i].as_str().to_string(),
                    num(g.values[i]),
                    g.policy[i].index().to_string(),
                ]
            }),
        ),
    }
}

fn write_estimate(
    files: &mut Artifacts,
    name: &str,
    method: Method,
    e: &ReturnEstimate,
) -> Result<()> {
    files.csv(
        name,
        &["method", "rollouts", "mean", "se", "success_rate"],
        [vec![
            method.to_string(),
            e.rollouts.to_string(),
            num(e.mean),
            num(e.std_error),
            num(e.success_rate),
        ]],
    )
}

/// Runs `f` with the greedy continuous-state policy of `solution`.
fn with_policy<R>(
    exp: &Experiment,
    solution: &Solution,
    f: impl FnOnce(&dyn Policy<f64>) -> Result<R>,
) -> Result<R> {
    let world = exp.world();
    match solution {
        Solution::Kernel {
            method,
            support,
            values,
            ..
        } => {
            let gram = GramSystem::build(exp.kernel_params()?, support.states())?;
            match method {
                Method::Taylor => f(&TaylorPolicy::new(&gram, world, values)?),
                _ => f(&DirectPolicy::new(&gram, world, values)?),
            }
        }
        Solution::Grid(g) => f(g),
    }
}

/// Average return of the solution's policy, plus the exported trajectories.
pub fn evaluate_solution(
    exp: &Experiment,
    solution: &Solution,
) -> Result<(ReturnEstimate, Vec<Vec<State<f64>>>)> {
    let world = exp.world();
    let rc = exp.rollout_config();
    let starts = sample_start_states(world, rc.n_start_states, rc.seed)?;
    with_policy(exp, solution, |policy| {
        let estimate = average_return_from(world, policy, &starts, &rc)?;
        let paths = starts[..exp.config.eval.trajectories]
            .par_iter()
            .enumerate()
            .map(|(k, &s)| {
                let mut r = rng::stream(rc.seed, &[TRAJECTORY_STREAM, k as u64]);
                trajectory(world, policy, s, rc.max_steps, &mut r).map(|(p, _)| p)
            })
            .collect::<taylorpi_core::Result<Vec<_>>>()?;
        Ok((estimate, paths))
    })
}

/// Runs the configured hyperparameter sweep and writes `sweep.csv`.
pub fn sweep(exp: &Experiment) -> Result<Status> {
    let cfg = &exp.config;
    if cfg.solver.method == Method::Grid {
        return Err(CliError::Config(vec![
            "solver.method = \"grid\" has no kernel hyperparameters to sweep".into(),
        ]));
    }
    let support = exp.support()?;
    let config = SweepConfig {
        method: cfg.solver.method,
        amplitude: cfg.solver.amplitude,
        max_iters: cfg.solver.max_iters,
        rollout: exp.rollout_config(),
    };
    let matrix = hyperparameter_sweep(
        exp.world(),
        support.states(),
        &cfg.sweep.lengthscales,
        &cfg.sweep.lambdas,
        &config,
    )?;
    let mut files = Artifacts::default();
    let mut buf = Vec::new();
    matrix.write_csv(&mut buf, cfg.output.timing)?;
    files.add(SWEEP_FILE, buf);
    let manifest = manifest_config(exp, &mut files);
    files.commit(&out_dir(exp), Some((&manifest, "sweep")))?;
    match matrix.best() {
        Some(best) => println!(
            "sweep: {} cells; best return {:.4} at lengthscale {}, lambda {}",
            matrix.cells.len(),
            best.average_return().unwrap_or(f64::NAN),
            best.lengthscale,
            best.lambda
        ),
        None => println!("sweep: {} cells; none solved", matrix.cells.len()),
    }
    Ok(Status::Success)
}

/// Writes the configured supporting states.
pub fn sample_states(exp: &Experiment) -> Result<Status> {
    let support = exp.support()?;
    let mut files = Artifacts::default();
    let mut buf = Vec::new();
    support.write_csv(&mut buf)?;
    files.add(SUPPORT_FILE, buf);
    let manifest = manifest_config(exp, &mut files);
    files.commit(&out_dir(exp), Some((&manifest, "sample-states")))?;
    println!("sample-states: {} supporting states", support.len());
    Ok(Status::Success)
}

fn artifact_err(path: &Path, message: impl std::fmt::Display) -> CliError {
    CliError::Artifact {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// A solved run directory, checked against the hashes in its manifest.
pub struct RunDir {
    pub dir: PathBuf,
    pub config: ExperimentConfig,
}

impl RunDir {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let raw = ExperimentConfig::load(&path)?;
        let info = raw
            .manifest
            .clone()
            .ok_or_else(|| artifact_err(&path, "not a run manifest (no [manifest] section)"))?;
        if info.command != "solve" {
            return Err(artifact_err(
                &path,
                format!("written by `{}`, not `solve`", info.command),
            ));
        }
        let (config, _) = read_config(&path)?;
        for (name, expected) in &info.files {
            let file = dir.join(name);
            let bytes = std::fs::read(&file).map_err(|e| CliError::io(&file, e))?;
            if file_sha256(&bytes) != *expected {
                return Err(CliError::Mismatch(format!(
                    "{} changed since the run",
                    file.display()
                )));
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            config,
        })
    }

    /// The experiment to use with this solution: the run's own config, or
    /// `config` if it describes the same problem.
    pub fn experiment(
        &self,
        config: Option<&Path>,
        seed: Option<u64>,
        out: Option<&Path>,
    ) -> Result<Experiment> {
        let (mut cfg, base) = match config {
            Some(path) => {
                let (cfg, base) = read_config(path)?;
                let mut probe = Experiment::new(cfg.clone(), base.clone())?.config;
                probe.world.heightmap = None;
                let mut mine = Experiment::new(self.config.clone(), self.dir.clone())?.config;
                mine.world.heightmap = None;
                if probe.solution_sha256() != mine.solution_sha256() {
                    return Err(CliError::Mismatch(format!(
                        "{} describes a different problem than the run in {}",
                        path.display(),
                        self.dir.display()
                    )));
                }
                (cfg, base)
            }
            None => (self.config.clone(), self.dir.clone()),
        };
        if let Some(seed) = seed {
            cfg.eval.seed = Some(seed);
        }
        cfg.output.dir = out.unwrap_or(&self.dir).to_string_lossy().into_owned();
        Experiment::new(cfg, base)
    }

    pub fn solution(&self, exp: &Experiment) -> Result<Solution> {
        match exp.config.solver.method {
            method @ (Method::Taylor | Method::Direct) => {
                let path = self.dir.join(SUPPORT_FILE);
                let file = std::fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
                let support = SupportSet::read_csv(file)?;
                support.validate(exp.world().workspace())?;
                let path = self.dir.join(VALUES_FILE);
                let rows = read_rows(&path, &["index", "value", "action"])?;
                if rows.len() != support.len() {
                    return Err(artifact_err(
                        &path,
                        format!(
                            "{} rows for {} supporting states",
                            rows.len(),
                            support.len()
                        ),
                    ));
                }
                let q = exp.world().actions().count();
                let mut values = Vec::with_capacity(rows.len());
                let mut actions = Vec::with_capacity(rows.len());
                for r in &rows {
                    values.push(parse_f64(&path, &r[1])?);
                    actions.push(parse_action(&path, &r[2], q)?);
                }
                Ok(Solution::Kernel {
                    method,
                    support,
                    values,
                    actions,
                })
            }
            Method::Grid => {
                let path = self.dir.join(GRID_FILE);
                let rows = read_rows(&path, &["index", "x", "y", "region", "value", "action"])?;
                let world = exp.world();
                let grid = CellGrid::new(
                    *world.workspace().bounds(),
                    exp.config.solver.grid_resolution,
                )?;
                if rows.len() != grid.len() {
                    return Err(artifact_err(
                        &path,
                        format!("{} rows for {} cells", rows.len(), grid.len()),
                    ));
                }
                let q = world.actions().count();
                let mut regions = Vec::with_capacity(rows.len());
                let mut values = Vec::with_capacity(rows.len());
                let mut policy = Vec::with_capacity(rows.len());
                for r in &rows {
                    regions.push(parse_region(&path, &r[3])?);
                    values.push(parse_f64(&path, &r[4])?);
                    policy.push(
                        parse_action(&path, &r[5], q)?
                            .ok_or_else(|| artifact_err(&path, "cell without an action"))?,
                    );
                }
                Ok(Solution::Grid(GridSolution {
                    grid,
                    regions,
                    values,
                    policy,
                    history: Vec::new(),
                    iterations: 0,
                    converged: true,
                }))
            }
        }
    }
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let got = r.headers().map_err(|e| artifact_err(path, e))?.clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(artifact_err(
            path,
            format!("expected columns {}", header.join(",")),
        ));
    }
    r.records()
        .map(|rec| rec.map_err(|e| artifact_err(path, e)))
        .collect()
}

fn parse_f64(path: &Path, s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| artifact_err(path, format!("`{s}` is not a number")))
}

fn parse_action(path: &Path, s: &str, count: usize) -> Result<Option<Action>> {
    if s.is_empty() {
        return Ok(None);
    }
    let i: usize = s
        .parse()
        .map_err(|_| artifact_err(path, format!("`{s}` is not an action index")))?;
    Action::new(i, count)
        .map(Some)
        .map_err(|e| artifact_err(path, e))
}

fn parse_region(path: &Path, s: &str) -> Result<Region> {
    Ok(match s {
        "free" => Region::Free,
        "obstacle" => Region::Obstacle,
        "goal" => Region::Goal,
        "outside" => Region::Outside,
        other => return Err(artifact_err(path, format!("unknown region `{other}`"))),
    })
}

/// Re-evaluates a solved run from its files and writes `evaluate.csv`.
pub fn evaluate(run: &RunDir, exp: &Experiment) -> Result<ReturnEstimate> {
    let solution = run.solution(exp)?;
    let (estimate, _) = evaluate_solution(exp, &solution)?;
    let mut files = Artifacts::default();
    write_estimate(
        &mut files,
        EVALUATE_FILE,
        exp.config.solver.method,
        &estimate,
    )?;
    files.commit(&out_dir(exp), None)?;
    println!(
        "evaluate: average return {:.4} ± {:.4}, success {:.1}% over {} rollouts",
        estimate.mean,
        estimate.std_error,
        100.0 * estimate.success_rate,
        estimate.rollouts
    );
    Ok(estimate)
}

/// `n` evenly spaced coordinates from `lo` to `hi` inclusive.
fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * (i as f64 / (n - 1) as f64))
        .collect()
}

/// Samples the value function and greedy policy on a `resolution²` grid
/// spanning the workspace bounds (edges included). Absorbing points report
/// their prescribed value and no action.
pub fn export_field(run: &RunDir, exp: &Experiment, resolution: usize) -> Result<()> {
    if resolution < 2 {
        return Err(CliError::Config(vec![
            "field resolution must be at least 2".into(),
        ]));
    }
    let solution = run.solution(exp)?;
    let world = exp.world();
    let b = *world.workspace().bounds();
    let xs = axis(b.min.x, b.max.x, resolution);
    let ys = axis(b.min.y, b.max.y, resolution);
    let points: Vec<State<f64>> = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| State::new(x, y)))
        .collect();

    let values: Vec<f64> = match &solution {
        Solution::Kernel {
            support, values, ..
        } => {
            let gram = GramSystem::build(exp.kernel_params()?, support.states())?;
            let expansion = gram.expansion(values)?;
            points
                .par_iter()
                .map(|&s| {
                    world
                        .terminal_value(world.classify(s))
                        .unwrap_or_else(|| expansion.value(s))
                })
                .collect()
        }
        Solution::Grid(g) => points
            .iter()
            .map(|&s| {
                let cell = g.grid.cell_of(s)?;
                Ok(world
                    .terminal_value(world.classify(s))
                    .unwrap_or(g.values[cell]))
            })
            .collect::<taylorpi_core::Result<_>>()?,
    };
    let actions: Vec<Option<Action>> = with_policy(exp, &solution, |policy| {
        Ok(points
            .par_iter()
            .map(|&s| (world.classify(s) == Region::Free).then(|| policy.action(s)))
            .collect())
    })?;

    let mut files = Artifacts::default();
    files.csv(
        VALUE_FIELD_FILE,
        &["x", "y", "region", "value"],
        points.iter().zip(&values).map(|(s, v)| {
            vec![
                num(s.x),
                num(s.y),
                world.classify(*s).as_str().to_string(),
                num(*v),
            ]
        }),
    )?;
    let set = world.actions();
    let rows = points
        .iter()
        .zip(&actions)
        .map(|(s, a)| {
            let (dx, dy) = match a {
                Some(a) => {
                    let d = set.displacement(*a)?;
                    (num(d.x), num(d.y))
                }
                None => (String::new(), String::new()),
            };
            Ok(vec![num(s.x), num(s.y), action_cell(*a), dx, dy])
        })
        .collect::<taylorpi_core::Result<Vec<_>>>()?;
    files.csv(POLICY_FIELD_FILE, &["x", "y", "action", "dx", "dy"], rows)?;
    files.commit(&out_dir(exp), None)?;
    println!("export-field: {resolution}x{resolution} value and policy fields");
    Ok(())
}
