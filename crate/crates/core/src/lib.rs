//! Approximate policy iteration for continuous 2D navigation MDPs.
//!
//! Values live at a finite set of supporting states and extend to the whole
//! workspace through a Gaussian kernel expansion. Policy evaluation uses a
//! second-order Taylor expansion of the Bellman equation, so only the first
//! two moments of each transition are needed.
//!
//! All numerical code is generic over [`Scalar`] (`f64` or `f32`); the
//! aliases at the bottom of this file fix the common `f64` instantiation.

// Validation is written as `!(x > 0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod normal;
pub mod policy;
pub mod rng;
pub mod scalar;
pub mod support;
pub mod taylor;
pub mod terrain;
pub mod world;

pub use error::{Error, Result};
pub use eval::{
    average_return, average_return_from, hyperparameter_sweep, rollout_return, Method,
    RolloutConfig,
};
pub use geometry::{Action, ActionSet, Rect, Region, State, Workspace};
pub use kernel::{GramSystem, KernelExpansion, KernelParams};
pub use policy::{Policy, PolicyTable};
pub use scalar::Scalar;
pub use support::{Origin, SupportSet};
pub use taylor::{run_policy_iteration, PiOutcome, TaylorPolicy, TaylorSolver};
pub use terrain::{Heightmap, TerrainModel};
pub use world::{MdpConfig, Moments, PlaneWorld, TerrainWorld, World};

pub type State64 = geometry::State<f64>;
pub type Workspace64 = geometry::Workspace<f64>;
pub type MdpConfig64 = world::MdpConfig<f64>;
pub type PlaneWorld64 = world::PlaneWorld<f64>;
pub type TerrainWorld64 = world::TerrainWorld<f64>;
pub type KernelParams64 = kernel::KernelParams<f64>;
pub type GramSystem64 = kernel::GramSystem<f64>;
pub type SupportSet64 = support::SupportSet<f64>;

pub type State32 = geometry::State<f32>;
pub type PlaneWorld32 = world::PlaneWorld<f32>;
pub type KernelParams32 = kernel::KernelParams<f32>;
pub type GramSystem32 = kernel::GramSystem<f32>;
