//! Experiment configuration: a strict TOML schema with defaults.
//!
//! Parsing reports every unknown key (with its dotted path) and every
//! validation problem at once instead of stopping at the first one.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use taylorpi_core::Method;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorldKind {
    Plane,
    Terrain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardEstimator {
    /// Closed-form probability of landing in the goal or an obstacle.
    #[default]
    Exact,
    /// Seeded average over `reward_mc_samples` sampled arrivals.
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupportStrategy {
    #[default]
    Lattice,
    Uniform,
    Importance,
}

/// Synthetic Gaussian ridge used instead of a heightmap file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeConfig {
    pub ncols: usize,
    pub nrows: usize,
    pub cellsize: f64,
    pub from: [f64; 2],
    pub to: [f64; 2],
    pub height: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub kind: WorldKind,
    /// `[x0, y0, x1, y1]` in meters; plane worlds only (terrain uses the heightmap extent).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[f64; 4]>,
    #[serde(default)]
    pub obstacles: Vec<[f64; 4]>,
    pub goal: [f64; 4],
    #[serde(default = "defaults::gamma")]
    pub gamma: f64,
    #[serde(default = "defaults::goal_reward")]
    pub goal_reward: f64,
    #[serde(default = "defaults::obstacle_reward")]
    pub obstacle_reward: f64,
    #[serde(default = "defaults::motion_stddev")]
    pub motion_stddev: f64,
    #[serde(default = "defaults::actions")]
    pub actions: usize,
    #[serde(default = "defaults::action_radius")]
    pub action_radius: f64,
    #[serde(default)]
    pub reward_estimator: RewardEstimator,
    #[serde(default = "defaults::reward_mc_samples")]
    pub reward_mc_samples: usize,
    /// Heightmap file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heightmap: Option<String>,
    /// Filled in on load; a mismatch with the file on disk is a config error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heightmap_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trap_gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ridge: Option<RidgeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(default = "defaults::method")]
    pub method: Method,
    #[serde(default = "defaults::one")]
    pub lengthscale: f64,
    #[serde(default = "defaults::one")]
    pub lambda: f64,
    #[serde(default = "defaults::one")]
    pub amplitude: f64,
    #[serde(default = "defaults::max_iters")]
    pub max_iters: usize,
    /// Cells per axis for the grid method.
    #[serde(default = "defaults::grid_resolution")]
    pub grid_resolution: usize,
    /// Sampled successors per (cell, action) for the grid method.
    #[serde(default = "defaults::grid_samples")]
    pub grid_samples: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Taylor,
            lengthscale: 1.0,
            lambda: 1.0,
            amplitude: 1.0,
            max_iters: defaults::max_iters(),
            grid_resolution: defaults::grid_resolution(),
            grid_samples: defaults::grid_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportConfig {
    #[serde(default)]
    pub strategy: SupportStrategy,
    /// Square lattice size; overridden by `nx`/`ny` when both are set.
    #[serde(default = "defaults::n_per_axis")]
    pub n_per_axis: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
    /// Sampled states for `uniform` and `importance` (the pinned goal is extra).
    #[serde(default = "defaults::n")]
    pub n: usize,
    /// Candidate pool for `importance`; defaults to 50·n.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<usize>,
}

impl Default for SupportConfig {
    fn default() -> Self {
        Self {
            strategy: SupportStrategy::Lattice,
            n_per_axis: defaults::n_per_axis(),
            nx: None,
            ny: None,
            n: defaults::n(),
            candidates: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    #[serde(default = "defaults::n_start_states")]
    pub n_start_states: usize,
    #[serde(default = "defaults::rollouts_per_state")]
    pub rollouts_per_state: usize,
    #[serde(default = "defaults::max_steps")]
    pub max_steps: usize,
    /// Rollouts exported to `trajectories.csv`.
    #[serde(default = "defaults::trajectories")]
    pub trajectories: usize,
    /// Rollout seed; the top-level seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_start_states: defaults::n_start_states(),
            rollouts_per_state: defaults::rollouts_per_state(),
            max_steps: defaults::max_steps(),
            trajectories: defaults::trajectories(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxes {
    #[serde(default = "defaults::axis")]
    pub lengthscales: Vec<f64>,
    #[serde(default = "defaults::axis")]
    pub lambdas: Vec<f64>,
}

impl Default for SweepAxes {
    fn default() -> Self {
        Self {
            lengthscales: defaults::axis(),
            lambdas: defaults::axis(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    #[serde(default = "defaults::out_dir")]
    pub dir: String,
    /// Points per axis of the exported value and policy fields.
    #[serde(default = "defaults::field_resolution")]
    pub field_resolution: usize,
    /// Adds wall-time columns, which makes outputs differ between runs.
    #[serde(default)]
    pub timing: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: defaults::out_dir(),
            field_resolution: defaults::field_resolution(),
            timing: false,
        }
    }
}

/// Provenance written next to run artifacts. A config file that carries this
/// section is a manifest and can be fed back to any subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestInfo {
    pub command: String,
    pub version: String,
    pub commit: String,
    /// Hash of the resolved config without this section.
    pub config_sha256: String,
    /// Hash of every artifact written by the run.
    #[serde(default)]
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub world: WorldConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub support: SupportConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub sweep: SweepAxes,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<ManifestInfo>,
}

mod defaults {
    use taylorpi_core::Method;

    pub fn gamma() -> f64 {
        0.9
    }
    pub fn goal_reward() -> f64 {
        1.0
    }
    pub fn obstacle_reward() -> f64 {
        -1.0
    }
    pub fn motion_stddev() -> f64 {
        0.2
    }
    pub fn actions() -> usize {
        12
    }
    pub fn action_radius() -> f64 {
        0.5
    }
    pub fn reward_mc_samples() -> usize {
        256
    }
    pub fn method() -> Method {
        Method::Taylor
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn max_iters() -> usize {
        50
    }
    pub fn grid_resolution() -> usize {
        10
    }
    pub fn grid_samples() -> usize {
        taylorpi_core::baselines::grid::DEFAULT_TRANSITION_SAMPLES
    }
    pub fn n_per_axis() -> usize {
        10
    }
    pub fn n() -> usize {
        100
    }
    pub fn n_start_states() -> usize {
        10_000
    }
    pub fn rollouts_per_state() -> usize {
        4
    }
    pub fn max_steps() -> usize {
        100
    }
    pub fn trajectories() -> usize {
        10
    }
    pub fn axis() -> Vec<f64> {
        vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0]
    }
    pub fn out_dir() -> String {
        "out".into()
    }
    pub fn field_resolution() -> usize {
        100
    }
}

pub const DEFAULT_PLANE_BOUNDS: [f64; 4] = [0.0, 0.0, 10.0, 10.0];
pub const DEFAULT_TRAP_GAIN: f64 = 1.0;

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(bytes: &[u8]) -> String {
    sha256_hex(bytes)
}

impl ExperimentConfig {
    /// Parses TOML text, collecting unknown keys and validation problems.
    pub fn parse(text: &str) -> Result<Self> {
        let de =
            toml::Deserializer::parse(text).map_err(|e| CliError::Config(vec![e.to_string()]))?;
        let mut unknown = Vec::new();
        let parsed: std::result::Result<Self, _> = serde_ignored::deserialize(de, |path| {
            unknown.push(format!("unknown key `{path}`"));
        });
        let mut problems = unknown;
        match parsed {
            Ok(cfg) => {
                problems.extend(cfg.problems());
                if problems.is_empty() {
                    Ok(cfg)
                } else {
                    Err(CliError::Config(problems))
                }
            }
            Err(e) => {
                problems.push(e.to_string().trim_end().to_string());
                Err(CliError::Config(problems))
            }
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(vec![format!("cannot read config {}: {e}", path.display())])
        })?;
        Self::parse(&text)
    }

    /// Resolved config as TOML, without the manifest section.
    pub fn to_toml(&self) -> String {
        let mut plain = self.clone();
        plain.manifest = None;
        toml::to_string(&plain).expect("config serializes")
    }

    pub fn sha256(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }

    /// Hash of everything that determines a solution: seed, world, solver and
    /// support. Evaluation and output settings are excluded, as is the
    /// heightmap path (its content hash stands in for it).
    pub fn solution_sha256(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            seed: u64,
            world: &'a WorldConfig,
            solver: &'a SolverConfig,
            support: &'a SupportConfig,
        }
        let mut world = self.world.clone();
        world.heightmap = None;
        let key = Key {
            seed: self.seed,
            world: &world,
            solver: &self.solver,
            support: &self.support,
        };
        sha256_hex(toml::to_string(&key).expect("key serializes").as_bytes())
    }

    /// Fills in values that are otherwise implied, so the manifest states them.
    pub fn resolve(&mut self) {
        let w = &mut self.world;
        match w.kind {
            WorldKind::Plane => {
                w.bounds.get_or_insert(DEFAULT_PLANE_BOUNDS);
            }
            WorldKind::Terrain => {
                w.trap_gain.get_or_insert(DEFAULT_TRAP_GAIN);
            }
        }
        if self.support.strategy == SupportStrategy::Importance {
            let n = self.support.n;
            self.support
                .candidates
                .get_or_insert(taylorpi_core::support::default_candidate_count(n));
        }
    }

    /// Every schema violation, each prefixed with its key path.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let w = &self.world;
        if !(w.gamma < 1.0) {
            p.push(format!("world.gamma must be < 1 (got {})", w.gamma));
        } else if !(w.gamma >= 0.0) {
            p.push(format!("world.gamma must be >= 0 (got {})", w.gamma));
        }
        for (name, v) in [
            ("goal_reward", w.goal_reward),
            ("obstacle_reward", w.obstacle_reward),
        ] {
            if !v.is_finite() {
                p.push(format!("world.{name} must be finite"));
            }
        }
        if !(w.motion_stddev >= 0.0 && w.motion_stddev.is_finite()) {
            p.push("world.motion_stddev must be a finite value >= 0".into());
        }
        if w.actions < 2 {
            p.push("world.actions must be at least 2".into());
        }
        if !(w.action_radius > 0.0 && w.action_radius.is_finite()) {
            p.push("world.action_radius must be positive".into());
        }
        if w.reward_mc_samples == 0 {
            p.push("world.reward_mc_samples must be at least 1".into());
        }
        check_rect(&mut p, "world.goal", &w.goal);
        for (i, o) in w.obstacles.iter().enumerate() {
            check_rect(&mut p, &format!("world.obstacles[{i}]"), o);
        }
        match w.kind {
            WorldKind::Plane => {
                if let Some(b) = &w.bounds {
                    check_rect(&mut p, "world.bounds", b);
                }
                for (key, set) in [
                    ("heightmap", w.heightmap.is_some()),
                    ("heightmap_sha256", w.heightmap_sha256.is_some()),
                    ("trap_gain", w.trap_gain.is_some()),
                    ("ridge", w.ridge.is_some()),
                ] {
                    if set {
                        p.push(format!("world.{key} is only valid for terrain worlds"));
                    }
                }
            }
            WorldKind::Terrain => {
                if w.bounds.is_some() {
                    p.push("world.bounds is not allowed for terrain worlds (the heightmap extent is used)".into());
                }
                match (&w.heightmap, &w.ridge) {
                    (None, None) => {
                        p.push("terrain worlds need world.heightmap or world.ridge".into())
                    }
                    (Some(_), Some(_)) => {
                        p.push("world.heightmap and world.ridge are mutually exclusive".into())
                    }
                    _ => {}
                }
                if w.heightmap_sha256.is_some() && w.heightmap.is_none() {
                    p.push("world.heightmap_sha256 requires world.heightmap".into());
                }
                if let Some(g) = w.trap_gain {
                    if !(g >= 0.0 && g.is_finite()) {
                        p.push("world.trap_gain must be a finite value >= 0".into());
                    }
                }
                if let Some(r) = &w.ridge {
                    if r.ncols < 2 || r.nrows < 2 {
                        p.push("world.ridge needs at least 2 columns and 2 rows".into());
                    }
                    if !(r.cellsize > 0.0 && r.cellsize.is_finite()) {
                        p.push("world.ridge.cellsize must be positive".into());
                    }
                    if !(r.width > 0.0 && r.width.is_finite()) {
                        p.push("world.ridge.width must be positive".into());
                    }
                    if ![r.height, r.from[0], r.from[1], r.to[0], r.to[1]]
                        .iter()
                        .all(|v| v.is_finite())
                    {
                        p.push("world.ridge coordinates and height must be finite".into());
                    }
                }
            }
        }

        let s = &self.solver;
        if !(s.lengthscale > 0.0 && s.lengthscale.is_finite()) {
            p.push("solver.lengthscale must be positive".into());
        }
        if !(s.lambda >= 0.0 && s.lambda.is_finite()) {
            p.push("solver.lambda must be a finite value >= 0".into());
        }
        if !(s.amplitude > 0.0 && s.amplitude.is_finite()) {
            p.push("solver.amplitude must be positive".into());
        }
        if s.max_iters == 0 {
            p.push("solver.max_iters must be at least 1".into());
        }
        if s.grid_resolution < 2 {
            p.push("solver.grid_resolution must be at least 2".into());
        }
        if s.grid_samples == 0 {
            p.push("solver.grid_samples must be at least 1".into());
        }

        let sp = &self.support;
        match sp.strategy {
            SupportStrategy::Lattice => match (sp.nx, sp.ny) {
                (Some(nx), Some(ny)) => {
                    if nx < 2 || ny < 2 {
                        p.push("support.nx and support.ny must be at least 2".into());
                    }
                }
                (None, None) => {
                    if sp.n_per_axis < 2 {
                        p.push("support.n_per_axis must be at least 2".into());
                    }
                }
                _ => p.push("support.nx and support.ny must be given together".into()),
            },
            SupportStrategy::Uniform | SupportStrategy::Importance => {
                if sp.n == 0 {
                    p.push("support.n must be at least 1".into());
                }
            }
        }
        if let Some(c) = sp.candidates {
            if sp.strategy != SupportStrategy::Importance {
                p.push("support.candidates is only valid for importance sampling".into());
            } else if c < sp.n {
                p.push(format!(
                    "support.candidates ({c}) must be at least support.n ({})",
                    sp.n
                ));
            }
        }
        if sp.strategy == SupportStrategy::Importance && w.kind != WorldKind::Terrain {
            p.push("support.strategy = \"importance\" needs a terrain world".into());
        }

        let e = &self.eval;
        for (name, v) in [
            ("n_start_states", e.n_start_states),
            ("rollouts_per_state", e.rollouts_per_state),
            ("max_steps", e.max_steps),
        ] {
            if v == 0 {
                p.push(format!("eval.{name} must be at least 1"));
            }
        }
        if e.trajectories > e.n_start_states {
            p.push("eval.trajectories must not exceed eval.n_start_states".into());
        }

        check_axis(
            &mut p,
            "sweep.lengthscales",
            &self.sweep.lengthscales,
            false,
        );
        check_axis(&mut p, "sweep.lambdas", &self.sweep.lambdas, true);

        if self.output.field_resolution < 2 {
            p.push("output.field_resolution must be at least 2".into());
        }
        if self.output.dir.is_empty() {
            p.push("output.dir must not be empty".into());
        }
        p
    }
}

fn check_rect(p: &mut Vec<String>, key: &str, r: &[f64; 4]) {
    if !r.iter().all(|v| v.is_finite()) {
        p.push(format!("{key} must be finite"));
    } else if !(r[0] < r[2] && r[1] < r[3]) {
        p.push(format!(
            "{key} must be [x0, y0, x1, y1] with x0 < x1 and y0 < y1"
        ));
    }
}

fn check_axis(p: &mut Vec<String>, key: &str, axis: &[f64], zero_ok: bool) {
    if axis.is_empty() {
        p.push(format!("{key} must not be empty"));
    }
    for (i, &v) in axis.iter().enumerate() {
        let ok = v.is_finite() && (v > 0.0 || (zero_ok && v == 0.0));
        if !ok {
            p.push(format!("{key}[{i}] = {v} is out of range"));
        }
        if axis[..i].contains(&v) {
            p.push(format!("{key} repeats {v}"));
        }
    }
}
