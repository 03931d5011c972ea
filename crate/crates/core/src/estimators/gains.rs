use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::forward::FeedbackGains;
use crate::game::{DemonstrationSet, GameDefinition};

/// Least-squares stationary gains `K̂_i = argmin Σ_k ‖u_i(k) - K x(k)‖²` over
/// all demonstrations, solved through the SVD of the stacked states.
pub fn estimate_feedback_gains(demos: &DemonstrationSet, game: &GameDefinition) -> Result<FeedbackGains> {
    let n = game.state_dim();
    let samples: usize = demos.trajectories().iter().map(|t| t.horizon()).sum();
    let mut xs = DMatrix::zeros(samples, n);
    let mut row = 0;
    for traj in demos.trajectories() {
        for k in 0..traj.horizon() {
            xs.row_mut(row).copy_from(&traj.states.column(k).transpose());
            row += 1;
        }
    }

    let svd = xs.clone().svd(true, true);
    let largest = svd.singular_values.max();
    let cutoff = largest * samples.max(n) as f64 * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    if rank < n {
        return Err(Error::RankDeficient {
            deficiency: n - rank,
            dim: n,
        });
    }

    let mut gains = Vec::with_capacity(game.player_count());
    for i in 0..game.player_count() {
        let m = game.control_dim(i);
        let mut us = DMatrix::zeros(samples, m);
        let mut row = 0;
        for traj in demos.trajectories() {
            for k in 0..traj.horizon() {
                us.row_mut(row).copy_from(&traj.controls[i].column(k).transpose());
                row += 1;
            }
        }
        let kt = svd.solve(&us, cutoff).map_err(|e| Error::Config(e.to_string()))?;
        gains.push(kt.transpose());
    }
    Ok(FeedbackGains::stationary(gains))
}
