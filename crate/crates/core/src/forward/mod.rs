//! Demonstration synthesis: cooperative optimal control, open-loop Nash
//! equilibria of nonlinear and LQ games, feedback Nash equilibria of LQ games,
//! and a unilateral-deviation Nash check.

mod lq;
mod nash;
mod optimize;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{CostParameters, GameDefinition, Trajectory};
use crate::likelihood::Scope;

pub use lq::{solve_feedback_nash_lq, solve_open_loop_nash_lq, spectral_radius, FeedbackGains, FeedbackHorizon, LqWeights};
pub use nash::{check_nash, NashConcept, NashReport, PlayerDeviation};
pub use optimize::{adjoint_gradient, minimize_cost, nash_residual, players_cost};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Gradient (or stationarity residual) norm at which a solve is converged.
    pub tol: f64,
    pub max_iterations: usize,
    /// Best-response sweeps before the Newton polish of open-loop Nash solves.
    pub best_response_sweeps: usize,
    pub riccati_tol: f64,
    pub riccati_max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 200,
            best_response_sweeps: 2,
            riccati_tol: 1e-10,
            riccati_max_iterations: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub converged: bool,
    pub iterations: usize,
    /// Final gradient or stationarity residual norm.
    pub residual: f64,
    pub objective: f64,
    pub message: Option<String>,
}

impl SolverReport {
    fn start(objective: f64) -> Self {
        Self {
            converged: false,
            iterations: 0,
            residual: f64::INFINITY,
            objective,
            message: None,
        }
    }
}

/// Solution concept of a demonstration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Concept {
    #[serde(rename = "cg")]
    Cooperative,
    #[serde(rename = "ol-nash")]
    OpenLoopNash,
    #[serde(rename = "fb-nash")]
    FeedbackNash,
}

impl FromStr for Concept {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cg" => Ok(Self::Cooperative),
            "ol-nash" => Ok(Self::OpenLoopNash),
            "fb-nash" => Ok(Self::FeedbackNash),
            other => Err(Error::UnknownMethod(other.to_string())),
        }
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cooperative => "cg",
            Self::OpenLoopNash => "ol-nash",
            Self::FeedbackNash => "fb-nash",
        })
    }
}

/// Minimize `J_Σ = Σ_i J_i` over all controls of the discretized game.
pub fn solve_cooperative(
    game: &GameDefinition,
    theta: &CostParameters,
    x1: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<(Trajectory, SolverReport)> {
    theta.check_against(game)?;
    let players: Vec<usize> = (0..game.player_count()).collect();
    let init = optimize::warm_start(game, theta, &players, x1)?;
    minimize_cost(game, theta, &players, Scope::Joint, &init, opts)
}

/// Open-loop Nash equilibrium of the discretized game: best-response sweeps
/// from the cooperative solution, then Newton on the stacked stationarity
/// conditions.
pub fn solve_open_loop_nash(
    game: &GameDefinition,
    theta: &CostParameters,
    x1: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<(Trajectory, SolverReport)> {
    let (mut traj, mut report) = solve_cooperative(game, theta, x1, opts)?;
    if game.player_count() == 1 {
        return Ok((traj, report));
    }
    let sweep_opts = SolverOptions {
        max_iterations: 20,
        ..opts.clone()
    };
    report.converged = false;
    for _ in 0..opts.best_response_sweeps {
        for i in 0..game.player_count() {
            let (next, inner) = minimize_cost(game, theta, &[i], Scope::Player(i), &traj, &sweep_opts)?;
            report.iterations += inner.iterations;
            traj = next;
        }
    }
    let traj = optimize::nash_polish(game, theta, &traj, opts, &mut report)?;
    Ok((traj, report))
}

#[cfg(test)]
mod tests;
