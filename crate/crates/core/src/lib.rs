//! Learning-based compliant insertion for peg-in-hole assembly.
//!
//! The crate couples four pieces into one closed loop:
//!
//! - [`contact`] — a deterministic quasi-static contact simulator standing in
//!   for the robot-plus-environment: a rigid flat-bottomed peg pressed against
//!   a rigid plane with a circular hole, resolved to static equilibrium each
//!   control step.
//! - [`gac`] — the accommodation controller that modifies a reference
//!   trajectory by a discounted integral of sensed force, so contact forces
//!   converge to a bounded value even while the reference keeps advancing.
//! - [`dmp`] — discrete dynamic movement primitives fitted from a single
//!   demonstration and generalized to new goal positions.
//! - [`gp`] — exact Gaussian-process regression from steady-state contact
//!   wrenches to planar misalignment, plus sign classification used by the
//!   corrective insertion policy.
//!
//! [`pipeline`] orchestrates the experiments: misalignment sampling, safe
//! data collection under the accommodation controller, model training, and
//! the closed-loop corrective insertion policy with its campaign evaluation.

pub mod config;
pub mod contact;
pub mod dmp;
pub mod gac;
pub mod geometry;
pub mod gp;
pub mod io;
pub mod pipeline;
pub mod rng;
pub mod types;

pub use config::{ExperimentConfig, PolicyConfig};
pub use contact::{ContactConfig, ContactSim, SimState, SpringWall};
pub use dmp::{DmpParams, Trajectory};
pub use gac::{GacConfig, GacState, SteadyStateDetector};
pub use gp::{GprModel, KernelParams};
pub use pipeline::{EpisodeOutcome, EpisodeRecord, TrainedModels};
pub use types::Wrench;
