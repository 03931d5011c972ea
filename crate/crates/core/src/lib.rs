//! Forward and inverse N-player dynamic games.
//!
//! The crate synthesizes demonstrations under cooperative, open-loop Nash and
//! feedback Nash solution concepts and identifies feature-linear cost
//! functions from trajectories by maximum-entropy inverse reinforcement
//! learning, using a quadratic (Laplace) approximation of the trajectory
//! density.

pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod forward;
pub mod game;
pub mod io;
pub mod likelihood;
pub mod par;

pub use error::{Error, Result};
