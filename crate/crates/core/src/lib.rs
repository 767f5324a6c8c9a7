//! Computational core for depth-conditioned humanoid locomotion.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`terrain`]: procedural stair, gap and platform heightfields with bilinear queries.
//! - [`render`]: analytic depth rendering against heightfields and capsule link proxies.
//! - [`foothold`]: foot-frame point buffers, planar window extraction and the touchdown
//!   placement reward.
//! - [`rewards`]: the full per-step reward suite evaluated from a [`rewards::RobotSnapshot`].
//! - [`policy`]: the cross-modal attention / gated fusion / recurrent policy with analytic
//!   gradients, weight container and gate statistics.
//! - [`harness`]: scripted kinematic rollouts tying the above together.

pub mod error;
pub mod foothold;
pub mod harness;
pub mod policy;
pub mod render;
pub mod rewards;
pub mod terrain;

pub use error::{Error, FormatError, Result};
