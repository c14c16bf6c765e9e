//! Turns a validated config into a world, supporting states and solver settings.

use std::path::{Path, PathBuf};

use taylorpi_core::support::{importance_sample, lattice, lattice_dims, uniform_sample};
use taylorpi_core::terrain::ridge_heightmap;
use taylorpi_core::world::SampledRewards;
use taylorpi_core::{
    ActionSet, Heightmap, KernelParams, MdpConfig, PlaneWorld, Rect, RolloutConfig, State,
    SupportSet, TerrainModel, TerrainWorld, World,
};

use crate::config::{file_sha256, ExperimentConfig, RewardEstimator, SupportStrategy, WorldKind};
use crate::error::{CliError, Result};

/// File name under which a heightmap is copied next to run artifacts.
pub const HEIGHTMAP_FILE: &str = "heightmap.txt";

/// Overrides given on the command line; they take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub method: Option<taylorpi_core::Method>,
    pub out: Option<PathBuf>,
}

pub struct Experiment {
    pub config: ExperimentConfig,
    /// Directory that relative paths in the config are resolved against.
    pub base_dir: PathBuf,
    /// Raw heightmap file, kept so runs can ship a copy with their manifest.
    pub heightmap_file: Option<Vec<u8>>,
    terrain: Option<TerrainModel<f64>>,
    world: Box<dyn World<f64>>,
}

fn config_err(context: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(vec![format!("{context}: {e}")])
}

fn rect(r: &[f64; 4]) -> taylorpi_core::Result<Rect<f64>> {
    Rect::new(r[0], r[1], r[2], r[3])
}

/// Reads a config file, checks a manifest's own hash if present, and strips
/// the manifest section.
pub fn read_config(path: &Path) -> Result<(ExperimentConfig, PathBuf)> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(m) = config.manifest.take() {
        let actual = config.sha256();
        if m.config_sha256 != actual {
            return Err(CliError::Mismatch(format!(
                "{} records config hash {} but its contents hash to {actual}",
                path.display(),
                m.config_sha256
            )));
        }
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((config, base))
}

impl Experiment {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let (mut config, base) = read_config(path)?;
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(method) = overrides.method {
            config.solver.method = method;
        }
        if let Some(out) = &overrides.out {
            config.output.dir = out.to_string_lossy().into_owned();
        }
        Self::new(config, base)
    }

    pub fn new(mut config: ExperimentConfig, base_dir: PathBuf) -> Result<Self> {
        config.manifest = None;
        config.resolve();
        let problems = config.problems();
        if !problems.is_empty() {
            return Err(CliError::Config(problems));
        }
        let w = &config.world;
        let mut mdp = MdpConfig::new(w.gamma, w.goal_reward, w.obstacle_reward, w.motion_stddev)
            .map_err(|e| config_err("world", e))?;
        mdp.reward_mc_samples = w.reward_mc_samples;
        let actions = ActionSet::new(w.actions, w.action_radius)
            .map_err(|e| config_err("world.actions", e))?;
        let goal = rect(&w.goal).map_err(|e| config_err("world.goal", e))?;
        let obstacles = w
            .obstacles
            .iter()
            .map(rect)
            .collect::<taylorpi_core::Result<Vec<_>>>()
            .map_err(|e| config_err("world.obstacles", e))?;

        let mut heightmap_file = None;
        let mut terrain = None;
        let world: Box<dyn World<f64>> = match w.kind {
            WorldKind::Plane => {
                let bounds = rect(&w.bounds.expect("resolved"))
                    .map_err(|e| config_err("world.bounds", e))?;
                let plane = PlaneWorld::new(bounds, obstacles, goal, actions, mdp)
                    .map_err(|e| config_err("world", e))?;
                wrap(plane, w.reward_estimator, config.seed)
            }
            WorldKind::Terrain => {
                let hm = match (&w.heightmap, &w.ridge) {
                    (Some(file), _) => {
                        let path = base_dir.join(file);
                        let bytes = std::fs::read(&path).map_err(|e| {
                            config_err(&format!("world.heightmap ({})", path.display()), e)
                        })?;
                        let digest = file_sha256(&bytes);
                        match &w.heightmap_sha256 {
                            Some(expected) if *expected != digest => {
                                return Err(CliError::Mismatch(format!(
                                    "heightmap {} hashes to {digest}, expected {expected}",
                                    path.display()
                                )))
                            }
                            _ => {}
                        }
                        let text = String::from_utf8_lossy(&bytes);
                        let hm = Heightmap::parse(&text)
                            .map_err(|e| config_err("world.heightmap", e))?;
                        heightmap_file = Some(bytes);
                        hm
                    }
                    (None, Some(r)) => ridge_heightmap(
                        r.ncols,
                        r.nrows,
                        r.cellsize,
                        State::new(r.from[0], r.from[1]),
                        State::new(r.to[0], r.to[1]),
                        r.height,
                        r.width,
                    )
                    .map_err(|e| config_err("world.ridge", e))?,
                    (None, None) => unreachable!("validated"),
                };
                let model = TerrainModel::new(hm, w.trap_gain.expect("resolved"))
                    .map_err(|e| config_err("world", e))?;
                terrain = Some(model.clone());
                let tw = TerrainWorld::new(model, obstacles, goal, actions, mdp)
                    .map_err(|e| config_err("world", e))?;
                wrap(tw, w.reward_estimator, config.seed)
            }
        };
        if let Some(bytes) = &heightmap_file {
            config.world.heightmap_sha256 = Some(file_sha256(bytes));
        }
        Ok(Self {
            config,
            base_dir,
            heightmap_file,
            terrain,
            world,
        })
    }

    pub fn world(&self) -> &dyn World<f64> {
        &*self.world
    }

    pub fn terrain(&self) -> Option<&TerrainModel<f64>> {
        self.terrain.as_ref()
    }

    pub fn kernel_params(&self) -> Result<KernelParams<f64>> {
        let s = &self.config.solver;
        KernelParams::isotropic(s.amplitude, s.lengthscale, s.lambda)
            .map_err(|e| config_err("solver", e))
    }

    pub fn rollout_config(&self) -> RolloutConfig {
        let e = &self.config.eval;
        RolloutConfig {
            n_start_states: e.n_start_states,
            rollouts_per_state: e.rollouts_per_state,
            max_steps: e.max_steps,
            seed: e.seed.unwrap_or(self.config.seed),
        }
    }

    /// Supporting states for the configured strategy.
    pub fn support(&self) -> Result<SupportSet<f64>> {
        let sp = &self.config.support;
        let ws = self.world.workspace();
        let seed = self.config.seed;
        let set = match sp.strategy {
            SupportStrategy::Lattice => match (sp.nx, sp.ny) {
                (Some(nx), Some(ny)) => lattice_dims(ws, nx, ny),
                _ => lattice(ws, sp.n_per_axis),
            },
            SupportStrategy::Uniform => uniform_sample(ws, sp.n, seed),
            SupportStrategy::Importance => {
                let terrain = self
                    .terrain
                    .as_ref()
                    .expect("validated: importance needs terrain");
                importance_sample(ws, terrain, sp.n, sp.candidates.expect("resolved"), seed)
            }
        };
        set.map_err(|e| config_err("support", e))
    }
}

fn wrap<W: World<f64> + 'static>(
    world: W,
    estimator: RewardEstimator,
    seed: u64,
) -> Box<dyn World<f64>> {
    match estimator {
        RewardEstimator::Exact => Box::new(world),
        RewardEstimator::MonteCarlo => Box::new(SampledRewards::new(world, seed)),
    }
}
