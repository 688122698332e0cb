//! Point-, object- and trajectory-level filtering for tracking small aerial
//! targets in dense radar-style point clouds, together with a seeded scene
//! simulator and the metrics used to score every stage.
//!
//! The processing chain for one frame is
//!
//! 1. [`fingerprint`]: drop points whose signal metrics look like the local
//!    clutter fingerprint of their cube,
//! 2. [`object`]: cluster the survivors, associate clusters across frames and
//!    drop objects with low spatial and velocity confidence,
//! 3. [`tracker`]: IMM-UKF tracking with L-frame confirmation,
//! 4. [`classifier`]: an attention-based window classifier that verifies or
//!    rejects confirmed tracks.
//!
//! [`eval::pipeline`] wires the stages together and [`eval::metrics`] scores
//! them against the ground truth produced by [`sim`].

pub mod assign;
pub mod classifier;
pub mod error;
pub mod eval;
pub mod fingerprint;
pub mod io;
pub mod object;
pub mod sim;
pub mod stats;
pub mod tracker;
pub mod types;

pub use error::{Error, Result};
pub use types::{CubeGrid, CubeId, CubeLookup, Frame, RawPoint, SignalVector, TrackedUav};
