//! Decentralized and centralized hexapod locomotion learning.
//!
//! The crate is organised bottom-up:
//!
//! - [`robot`]: geometry and forward kinematics of the six 3-joint legs.
//! - [`terrain`]: flat and diamond-square heightfields.
//! - [`physics`]: the deterministic stance-anchoring simulator (25 Hz step).
//! - [`observation`]: 42-dim per-leg and 84-dim central observation vectors.
//! - [`nn`]: 2x64 tanh MLPs with analytic gradients, Gaussian policy, Adam.
//! - [`ppo`]: GAE, clipped surrogate losses and the minibatch update loop.
//! - [`agents`]: the centralized learner, the six-learner coordinator and training.
//! - [`stats`]: Welch t-test, Mann-Whitney U, Cohen's d and controller ranking.
//!
//! Everything is `f64` and seeded through [`rng::SplitMix64`], so identical
//! inputs reproduce bit-identical outputs.

pub mod agents;
pub mod error;
pub mod fixtures;
pub mod gait;
pub mod nn;
pub mod numfmt;
pub mod observation;
pub mod physics;
pub mod ppo;
pub mod rng;
pub mod robot;
pub mod stats;
pub mod terrain;

pub use agents::{Agent, Architecture, Checkpoint, CurveRow};
pub use error::{Error, Result};
pub use observation::{LOCAL_OBS_DIM, CENTRAL_OBS_DIM};
pub use physics::{Action, EnvConfig, Environment, WorldState};
pub use ppo::PpoConfig;
pub use rng::SplitMix64;
pub use robot::{JointState, LegId, RobotGeometry};
pub use terrain::{Heightmap, TerrainSpec};
