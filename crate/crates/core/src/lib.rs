//! Joint evolution of robot bodies and controllers on a tile-exploration task.
//!
//! A genome ([`cppn`]) is decoded into a voxel body plan ([`bodyplan`]) that
//! fixes the sensor/actuator layout of a recurrent controller ([`controller`]).
//! Controller weights are learned per robot by a restarting evolution strategy
//! with a novelty-blended objective ([`nipes`]), evaluated in a deterministic
//! 2D arena ([`sim`]). Learned controllers seed later robots through a shared
//! [`archive`]; a two-pool population loop ([`evo`]) drives body evolution,
//! dispatched through a logically-timed scheduler ([`sched`]) so results do
//! not depend on the worker count. [`metrics`] and [`exp`] cover analysis and
//! the experiment harness.

pub mod archive;
pub mod bodyplan;
pub mod controller;
pub mod cppn;
pub mod evo;
pub mod exp;
pub mod metrics;
pub mod nipes;
pub mod rngutil;
pub mod sched;
pub mod sim;

pub use cppn::{Activation, CppnGenome, IdGen, MutationParams};
