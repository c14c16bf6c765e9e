//! MDP worlds: transition models, their first two moments, and arrival rewards.
//!
//! Every transition is a two-component mixture: with probability `stay` the
//! robot remains at its current state, otherwise it lands on a Gaussian
//! centered at the selected waypoint with per-axis standard deviation
//! `motion_stddev`. The Gaussian is truncated by rejection to the workspace
//! bounds (the waypoint is first projected onto the bounds), which keeps all
//! probability mass inside the planning region. The plane world never stays;
//! the terrain world stays with the slope-dependent trap probability.

use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{Action, ActionSet, Rect, Region, State, Workspace};
use crate::linalg::{Mat2, Vec2};
use crate::normal::TruncatedNormal;
use crate::scalar::{lit, Scalar};
use crate::terrain::TerrainModel;

/// Discount, rewards and motion noise shared by all worlds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MdpConfig<T> {
    pub gamma: T,
    pub goal_reward: T,
    pub obstacle_reward: T,
    pub motion_stddev: T,
    pub reward_mc_samples: usize,
}

impl<T: Scalar> MdpConfig<T> {
    pub fn new(gamma: T, goal_reward: T, obstacle_reward: T, motion_stddev: T) -> Result<Self> {
        let cfg = Self {
            gamma,
            goal_reward,
            obstacle_reward,
            motion_stddev,
            reward_mc_samples: 256,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= T::zero() && self.gamma < T::one()) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be in [0, 1), got {}",
                self.gamma
            )));
        }
        if !self.goal_reward.is_finite() || !self.obstacle_reward.is_finite() {
            return Err(Error::InvalidParameter("rewards must be finite".into()));
        }
        if !(self.motion_stddev >= T::zero()) || !self.motion_stddev.is_finite() {
            return Err(Error::InvalidParameter(
                "motion stddev must be non-negative".into(),
            ));
        }
        if self.reward_mc_samples == 0 {
            return Err(Error::InvalidParameter(
                "reward_mc_samples must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// `goal_reward / (1 − γ)`, the value pinned at the goal.
    pub fn goal_value(&self) -> T {
        self.goal_reward / discount_complement(self.gamma)
    }
}

/// `1 − γ` computed on the shortest decimal spelling of `γ`.
///
/// In binary `1 − 0.9` is `0.09999999999999998`, which would pin the goal of
/// the benchmark at `10.000000000000002` instead of `10`. Subtracting in
/// decimal and rounding once recovers the complement the user wrote down.
pub fn discount_complement<T: Scalar>(gamma: T) -> T {
    let binary = T::one() - gamma;
    let Ok(g) = rust_decimal::Decimal::from_str(&gamma.to_string()) else {
        return binary;
    };
    let complement = (rust_decimal::Decimal::ONE - g).normalize().to_string();
    T::from_str_radix(&complement, 10).unwrap_or(binary)
}

/// First moment and second moment (about the current state) of the displacement `s' − s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments<T> {
    pub mu: Vec2<T>,
    pub sigma: Mat2<T>,
}

impl<T: Scalar> Moments<T> {
    /// Moments of a deterministic displacement.
    pub fn deterministic(delta: Vec2<T>) -> Self {
        Self {
            mu: delta,
            sigma: delta.outer(delta),
        }
    }

    /// `sigma − mu·muᵀ`, the covariance of the displacement.
    pub fn centered_covariance(&self) -> Mat2<T> {
        self.sigma - self.mu.outer(self.mu)
    }

    /// Moments of the mixture that stays put with probability `stay` and
    /// otherwise moves according to `self`.
    pub fn with_stay_probability(self, stay: T) -> Self {
        let go = T::one() - stay;
        Self {
            mu: self.mu.scale(go),
            sigma: self.sigma.scale(go),
        }
    }
}

/// Per-axis truncated Gaussian around a waypoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveDistribution<T> {
    pub x: TruncatedNormal<T>,
    pub y: TruncatedNormal<T>,
}

impl<T: Scalar> MoveDistribution<T> {
    pub fn new(waypoint: State<T>, stddev: T, bounds: &Rect<T>) -> Self {
        let w = bounds.project(waypoint);
        Self {
            x: TruncatedNormal::new(w.x, stddev, bounds.min.x, bounds.max.x),
            y: TruncatedNormal::new(w.y, stddev, bounds.min.y, bounds.max.y),
        }
    }

    pub fn is_truncated(&self) -> bool {
        self.x.is_truncated() || self.y.is_truncated()
    }

    /// Moments of `s' − origin`.
    pub fn moments_about(&self, origin: State<T>) -> Moments<T> {
        let (mx, vx) = self.x.mean_var();
        let (my, vy) = self.y.mean_var();
        let mu = Vec2::new(mx - origin.x, my - origin.y);
        Moments {
            mu,
            sigma: Mat2::diag(vx, vy) + mu.outer(mu),
        }
    }

    pub fn prob_in(&self, r: &Rect<T>) -> T {
        self.x.prob_in(r.min.x, r.max.x) * self.y.prob_in(r.min.y, r.max.y)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> State<T> {
        let x = self.x.sample(rng);
        let y = self.y.sample(rng);
        Vec2::new(x, y)
    }
}

/// Full one-step transition law from a free state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition<T> {
    pub origin: State<T>,
    pub stay: T,
    pub step: MoveDistribution<T>,
}

impl<T: Scalar> Transition<T> {
    pub fn moments(&self) -> Moments<T> {
        self.step
            .moments_about(self.origin)
            .with_stay_probability(self.stay)
    }

    /// Expected arrival reward. Staying at a free origin earns nothing.
    pub fn expected_reward(&self, ws: &Workspace<T>, cfg: &MdpConfig<T>) -> T {
        let goal = self.step.prob_in(ws.goal());
        let obstacles: T = ws.obstacles().iter().map(|o| self.step.prob_in(o)).sum();
        (T::one() - self.stay) * (cfg.goal_reward * goal + cfg.obstacle_reward * obstacles)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> State<T> {
        if self.stay > T::zero() && T::uniform(rng, T::zero(), T::one()) < self.stay {
            self.origin
        } else {
            self.step.sample(rng)
        }
    }
}

/// Environment contract consumed by every solver and the evaluation harness.
pub trait World<T: Scalar>: Sync {
    fn workspace(&self) -> &Workspace<T>;

    fn mdp(&self) -> &MdpConfig<T>;

    fn actions(&self) -> &ActionSet<T>;

    /// Transition law for `(s, a)`; fails unless `s` is free.
    fn transition(&self, s: State<T>, a: Action) -> Result<Transition<T>>;

    fn classify(&self, s: State<T>) -> Region {
        self.workspace().classify(s)
    }

    fn moments(&self, s: State<T>, a: Action) -> Result<Moments<T>> {
        Ok(self.transition(s, a)?.moments())
    }

    /// `E[R(s, a)]`, the expected arrival reward of the transition.
    fn expected_reward(&self, s: State<T>, a: Action) -> Result<T> {
        Ok(self
            .transition(s, a)?
            .expected_reward(self.workspace(), self.mdp()))
    }

    /// Reward charged to a transition that arrives at `next`.
    fn arrival_reward(&self, next: State<T>) -> T {
        match self.classify(next) {
            Region::Goal => self.mdp().goal_reward,
            Region::Obstacle => self.mdp().obstacle_reward,
            _ => T::zero(),
        }
    }

    /// Prescribed value of an absorbing state: `v_g` at the goal, 0 inside obstacles.
    fn terminal_value(&self, region: Region) -> Option<T> {
        match region {
            Region::Goal => Some(self.workspace().goal_value()),
            Region::Obstacle => Some(T::zero()),
            _ => None,
        }
    }

    fn gamma(&self) -> T {
        self.mdp().gamma
    }
}

fn waypoint_distribution<T: Scalar>(
    ws: &Workspace<T>,
    actions: &ActionSet<T>,
    cfg: &MdpConfig<T>,
    s: State<T>,
    a: Action,
) -> Result<MoveDistribution<T>> {
    let delta = actions.displacement(a)?;
    Ok(MoveDistribution::new(
        s + delta,
        cfg.motion_stddev,
        ws.bounds(),
    ))
}

/// Moments of the plane-world transition at `(s, a)`.
pub fn plane_moments<T: Scalar>(
    ws: &Workspace<T>,
    actions: &ActionSet<T>,
    cfg: &MdpConfig<T>,
    s: State<T>,
    a: Action,
) -> Result<Moments<T>> {
    ws.require_free(s)?;
    Ok(waypoint_distribution(ws, actions, cfg, s, a)?.moments_about(s))
}

/// Moments of the terrain mixture: trapped at `s` with probability `p`,
/// otherwise the plane-world move.
pub fn terrain_moments<T: Scalar>(
    terrain: &TerrainModel<T>,
    ws: &Workspace<T>,
    actions: &ActionSet<T>,
    cfg: &MdpConfig<T>,
    s: State<T>,
    a: Action,
) -> Result<Moments<T>> {
    ws.require_free(s)?;
    let p = terrain.trap_probability(s);
    Ok(waypoint_distribution(ws, actions, cfg, s, a)?
        .moments_about(s)
        .with_stay_probability(p))
}

/// Plane with rectangular obstacles; Gaussian motion about the chosen waypoint.
#[derive(Debug, Clone)]
pub struct PlaneWorld<T> {
    workspace: Workspace<T>,
    actions: ActionSet<T>,
    mdp: MdpConfig<T>,
}

impl<T: Scalar> PlaneWorld<T> {
    /// Builds the world; the workspace goal value is set to `goal_reward / (1 − γ)`.
    pub fn new(
        bounds: Rect<T>,
        obstacles: Vec<Rect<T>>,
        goal: Rect<T>,
        actions: ActionSet<T>,
        mdp: MdpConfig<T>,
    ) -> Result<Self> {
        mdp.validate()?;
        let workspace = Workspace::new(bounds, obstacles, goal, mdp.goal_value())?;
        Ok(Self {
            workspace,
            actions,
            mdp,
        })
    }

    /// The 10 m × 10 m benchmark: twelve 0.5 m actions, σ = 0.2 m, γ = 0.9,
    /// goal reward +1 and obstacle reward −1.
    pub fn benchmark() -> Self {
        let r = |x0: f64, y0: f64, x1: f64, y1: f64| {
            Rect::new(lit(x0), lit(y0), lit(x1), lit(y1)).expect("benchmark rectangle")
        };
        let mdp = MdpConfig::new(lit(0.9), lit(1.0), lit(-1.0), lit(0.2)).expect("benchmark mdp");
        Self::new(
            r(0.0, 0.0, 10.0, 10.0),
            benchmark_obstacles()
                .iter()
                .map(|o| r(o[0], o[1], o[2], o[3]))
                .collect(),
            r(8.0, 8.0, 9.0, 9.0),
            ActionSet::new(12, lit(0.5)).expect("benchmark actions"),
            mdp,
        )
        .expect("benchmark world")
    }
}

/// Obstacle rectangles `[x0, y0, x1, y1]` of the plane benchmark.
pub fn benchmark_obstacles() -> [[f64; 4]; 3] {
    [
        [2.0, 6.0, 5.0, 7.0],
        [6.0, 2.0, 7.0, 6.0],
        [1.0, 1.5, 3.0, 2.5],
    ]
}

impl<T: Scalar> World<T> for PlaneWorld<T> {
    fn workspace(&self) -> &Workspace<T> {
        &self.workspace
    }

    fn mdp(&self) -> &MdpConfig<T> {
        &self.mdp
    }

    fn actions(&self) -> &ActionSet<T> {
        &self.actions
    }

    fn transition(&self, s: State<T>, a: Action) -> Result<Transition<T>> {
        self.workspace.require_free(s)?;
        Ok(Transition {
            origin: s,
            stay: T::zero(),
            step: waypoint_distribution(&self.workspace, &self.actions, &self.mdp, s, a)?,
        })
    }
}

/// Heightmap terrain with slope-dependent trapping and a goal rectangle.
#[derive(Debug, Clone)]
pub struct TerrainWorld<T> {
    terrain: TerrainModel<T>,
    workspace: Workspace<T>,
    actions: ActionSet<T>,
    mdp: MdpConfig<T>,
}

impl<T: Scalar> TerrainWorld<T> {
    /// The workspace is the heightmap extent.
    pub fn new(
        terrain: TerrainModel<T>,
        obstacles: Vec<Rect<T>>,
        goal: Rect<T>,
        actions: ActionSet<T>,
        mdp: MdpConfig<T>,
    ) -> Result<Self> {
        mdp.validate()?;
        let workspace = Workspace::new(terrain.extent(), obstacles, goal, mdp.goal_value())?;
        Ok(Self {
            terrain,
            workspace,
            actions,
            mdp,
        })
    }

    pub fn terrain(&self) -> &TerrainModel<T> {
        &self.terrain
    }
}

impl<T: Scalar> World<T> for TerrainWorld<T> {
    fn workspace(&self) -> &Workspace<T> {
        &self.workspace
    }

    fn mdp(&self) -> &MdpConfig<T> {
        &self.mdp
    }

    fn actions(&self) -> &ActionSet<T> {
        &self.actions
    }

    fn transition(&self, s: State<T>, a: Action) -> Result<Transition<T>> {
        self.workspace.require_free(s)?;
        Ok(Transition {
            origin: s,
            stay: self.terrain.trap_probability(s),
            step: waypoint_distribution(&self.workspace, &self.actions, &self.mdp, s, a)?,
        })
    }
}

/// Monte-Carlo estimate of the expected arrival reward from `samples` draws of `s'`.
pub fn expected_reward_mc<T: Scalar, W: World<T> + ?Sized, R: Rng + ?Sized>(
    world: &W,
    s: State<T>,
    a: Action,
    samples: usize,
    rng: &mut R,
) -> Result<T> {
    let tr = world.transition(s, a)?;
    let n = samples.max(1);
    let total: T = (0..n).map(|_| world.arrival_reward(tr.sample(rng))).sum();
    Ok(total / lit(n as f64))
}

/// Adapter that replaces the closed-form expected reward with a seeded
/// Monte-Carlo estimate using `reward_mc_samples` draws per `(s, a)`.
///
/// The random stream is derived from the seed, the bit pattern of `s` and the
/// action, so repeated queries return identical values.
#[derive(Debug, Clone)]
pub struct SampledRewards<W> {
    inner: W,
    seed: u64,
}

impl<W> SampledRewards<W> {
    pub fn new(inner: W, seed: u64) -> Self {
        Self { inner, seed }
    }

    pub fn inner(&self) -> &W {
        &self.inner
    }
}

impl<T: Scalar, W: World<T>> World<T> for SampledRewards<W> {
    fn workspace(&self) -> &Workspace<T> {
        self.inner.workspace()
    }

    fn mdp(&self) -> &MdpConfig<T> {
        self.inner.mdp()
    }

    fn actions(&self) -> &ActionSet<T> {
        self.inner.actions()
    }

    fn transition(&self, s: State<T>, a: Action) -> Result<Transition<T>> {
        self.inner.transition(s, a)
    }

    fn expected_reward(&self, s: State<T>, a: Action) -> Result<T> {
        let bits = |v: T| v.to_f64().unwrap_or(0.0).to_bits();
        let mut rng = crate::rng::stream(self.seed, &[bits(s.x), bits(s.y), a.index() as u64]);
        expected_reward_mc(
            &self.inner,
            s,
            a,
            self.inner.mdp().reward_mc_samples,
            &mut rng,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::Heightmap;

    #[test]
    fn goal_value_uses_decimal_complement() {
        let cfg = MdpConfig::new(0.9, 1.0, -1.0, 0.2).unwrap();
        assert_eq!(cfg.goal_value(), 10.0);
        let cfg32 = MdpConfig::new(0.9f32, 1.0, -1.0, 0.2).unwrap();
        assert_eq!(cfg32.goal_value(), 10.0f32);
        assert_eq!(discount_complement(0.99_f64), 0.01);
        assert_eq!(discount_complement(0.0_f64), 1.0);
        assert_eq!(discount_complement(0.3_f64), 0.7);
        assert_eq!(discount_complement(0.95_f32), 0.05);
    }

    fn open_world(stddev: f64) -> PlaneWorld<f64> {
        PlaneWorld::new(
            Rect::new(0.0, 0.0, 10.0, 10.0).unwrap(),
            vec![Rect::new(1.0, 1.0, 2.0, 2.0).unwrap()],
            Rect::new(8.0, 8.0, 9.0, 9.0).unwrap(),
            ActionSet::new(12, 0.5).unwrap(),
            MdpConfig::new(0.9, 1.0, -1.0, stddev).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn interior_plane_moments_closed_form() {
        let w = open_world(0.2);
        let a = w.actions().action(12).unwrap();
        let m = w.moments(State::new(5.0, 5.0), a).unwrap();
        assert!((m.mu.x - 0.5).abs() < 1e-15 && m.mu.y.abs() < 1e-15);
        assert!((m.sigma.a - 0.29).abs() < 1e-15);
        assert!((m.sigma.d - 0.04).abs() < 1e-15);
        assert!(m.sigma.b.abs() < 1e-15 && m.sigma.is_symmetric());
    }

    #[test]
    fn deterministic_motion_moments() {
        let w = open_world(0.0);
        for a in w.actions().iter() {
            let d = w.actions().displacement(a).unwrap();
            let m = w.moments(State::new(5.0, 5.0), a).unwrap();
            let e = Moments::deterministic(d);
            assert!((m.mu - e.mu).norm() < 1e-14);
            let ds = m.sigma - e.sigma;
            assert!([ds.a, ds.b, ds.c, ds.d].iter().all(|v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn blocked_axis_shortens_mean() {
        let w = open_world(0.2);
        let a = w.actions().action(12).unwrap();
        let m = w.moments(State::new(9.8, 5.0), a).unwrap();
        assert!(m.mu.x < 0.2 && m.mu.x > -0.2);
        assert!(m.mu.y.abs() < 1e-15);
    }

    #[test]
    fn moments_of_terminal_states_fail() {
        let w = open_world(0.2);
        let a = w.actions().action(1).unwrap();
        assert!(matches!(
            w.moments(State::new(8.5, 8.5), a),
            Err(Error::NonTransientState { region: "goal", .. })
        ));
        assert!(matches!(
            w.moments(State::new(11.0, 8.5), a),
            Err(Error::OutsideWorkspace { .. })
        ));
    }

    #[test]
    fn terrain_mixture_examples() {
        let theta = 0.25_f64;
        let hm = Heightmap::from_fn(11, 11, 1.0, |x, _| x * theta.tan()).unwrap();
        let actions = ActionSet::new(4, 1.0).unwrap();
        let cfg = MdpConfig::new(0.9, 1.0, 0.0, 0.2).unwrap();
        let goal = Rect::new(9.0, 9.0, 10.0, 10.0).unwrap();
        let s = State::new(5.0, 5.0);
        let a = actions.action(4).unwrap();

        let half = TerrainWorld::new(
            TerrainModel::new(hm.clone(), 0.5 / theta).unwrap(),
            vec![],
            goal,
            actions,
            cfg,
        )
        .unwrap();
        let m = half.moments(s, a).unwrap();
        assert!((m.mu.x - 0.5).abs() < 1e-12 && m.mu.y.abs() < 1e-12);
        assert!((m.sigma.a - 0.52).abs() < 1e-12 && (m.sigma.d - 0.02).abs() < 1e-12);

        let stuck = TerrainWorld::new(
            TerrainModel::new(hm.clone(), 100.0).unwrap(),
            vec![],
            goal,
            actions,
            cfg,
        )
        .unwrap();
        let m = stuck.moments(s, a).unwrap();
        assert_eq!(m.mu, Vec2::zero());
        assert_eq!(m.sigma, Mat2::zero());

        let free = TerrainWorld::new(
            TerrainModel::new(hm, 0.0).unwrap(),
            vec![],
            goal,
            actions,
            cfg,
        )
        .unwrap();
        let plane = plane_moments(free.workspace(), &actions, &cfg, s, a).unwrap();
        assert_eq!(free.moments(s, a).unwrap(), plane);
    }

    #[test]
    fn expected_reward_examples() {
        let w = open_world(0.2);
        // Far from everything.
        for a in w.actions().iter() {
            assert!(w.expected_reward(State::new(5.0, 5.0), a).unwrap().abs() < 1e-60);
        }
        // Waypoint at the goal center with vanishing noise.
        let sharp = open_world(1e-9);
        let a = sharp.actions().action(12).unwrap();
        assert!((sharp.expected_reward(State::new(7.9, 8.5), a).unwrap() - 1.0).abs() < 1e-12);
        // Waypoint near the obstacle center: strictly between −1 and 0.
        let r = w.expected_reward(State::new(0.95, 1.5), a).unwrap();
        assert!(r > -1.0 && r < 0.0);
    }
}
