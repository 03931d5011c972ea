use serde::{Deserialize, Serialize};

use super::optimize::minimize_cost;
use super::{FeedbackGains, SolverOptions};
use crate::dynamics::closed_loop_dynamics;
use crate::error::Result;
use crate::game::{trajectory_cost, CostParameters, GameDefinition, Trajectory};
use crate::likelihood::Scope;

/// Information pattern under which a trajectory is tested.
#[derive(Clone, Copy, Debug)]
pub enum NashConcept<'a> {
    OpenLoop,
    Feedback(&'a FeedbackGains),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerDeviation {
    pub player: usize,
    pub cost: f64,
    pub best_response_cost: f64,
    /// `δ_i = J_i(traj) - J_i(best response)`.
    pub improvement: f64,
    pub certified: bool,
    /// Whether the best-response optimization itself converged.
    pub converged: bool,
    pub message: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NashReport {
    pub players: Vec<PlayerDeviation>,
    pub tol: f64,
    pub certified: bool,
}

/// Re-optimize each player's cost against the others' fixed strategies and
/// report how much it could improve. Certified when every
/// `δ_i ≤ tol·(1 + |J_i|)`.
pub fn check_nash(
    traj: &Trajectory,
    game: &GameDefinition,
    theta: &CostParameters,
    concept: NashConcept<'_>,
    tol: f64,
    opts: &SolverOptions,
) -> Result<NashReport> {
    theta.check_against(game)?;
    traj.check_shape(game)?;
    let mut players = Vec::with_capacity(game.player_count());
    for i in 0..game.player_count() {
        let cost = trajectory_cost(traj, theta, game, i)?;
        let (best, report) = match concept {
            NashConcept::OpenLoop => {
                let (best, report) = minimize_cost(game, theta, &[i], Scope::Player(i), traj, opts)?;
                (trajectory_cost(&best, theta, game, i)?, report)
            }
            NashConcept::Feedback(gains) => {
                let closed = closed_loop_dynamics(game, &gains.laws(), i)?;
                let own = CostParameters {
                    theta: vec![theta.theta[i].clone()],
                };
                let start = traj.restrict_to_player(i);
                let (best, report) = minimize_cost(&closed, &own, &[0], Scope::Player(0), &start, opts)?;
                (trajectory_cost(&best, &own, &closed, 0)?, report)
            }
        };
        let improvement = cost - best;
        players.push(PlayerDeviation {
            player: i + 1,
            cost,
            best_response_cost: best,
            improvement,
            certified: improvement <= tol * (1.0 + cost.abs()),
            converged: report.converged,
            message: report.message,
        });
    }
    let certified = players.iter().all(|p| p.certified);
    Ok(NashReport { players, tol, certified })
}
