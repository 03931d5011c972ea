use std::ops::Range;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{GameDefinition, Trajectory};
use crate::error::{Error, Result};

/// Per-player cost weights `θ_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostParameters {
    pub theta: Vec<Vec<f64>>,
}

impl CostParameters {
    pub fn new(theta: Vec<Vec<f64>>) -> Result<Self> {
        if theta.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("cost parameters must be finite".into()));
        }
        Ok(Self { theta })
    }

    pub fn player(&self, i: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.theta[i])
    }

    pub fn player_count(&self) -> usize {
        self.theta.len()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            theta: self
                .theta
                .iter()
                .map(|t| t.iter().map(|v| v * c).collect())
                .collect(),
        }
    }

    pub fn check_against(&self, game: &GameDefinition) -> Result<()> {
        if self.theta.len() != game.player_count() {
            return Err(Error::Dimension {
                what: "parameter vectors".into(),
                expected: game.player_count(),
                actual: self.theta.len(),
            });
        }
        for (i, t) in self.theta.iter().enumerate() {
            if t.len() != game.feature_dim(i) {
                return Err(Error::Dimension {
                    what: format!("θ of player {}", i + 1),
                    expected: game.feature_dim(i),
                    actual: t.len(),
                });
            }
        }
        Ok(())
    }
}

/// `μ_i(ζ) = Σ_k η_i(x^(k), u^(k))`, summed time-major.
pub fn feature_count(traj: &Trajectory, game: &GameDefinition, player: usize) -> Result<DVector<f64>> {
    game.check_player(player)?;
    traj.check_shape(game)?;
    feature_count_range(traj, game, player, 0..traj.horizon())
}

/// Feature count restricted to the time steps in `steps`.
pub fn feature_count_range(
    traj: &Trajectory,
    game: &GameDefinition,
    player: usize,
    steps: Range<usize>,
) -> Result<DVector<f64>> {
    let features = game.features(player);
    let mut mu = DVector::zeros(features.len());
    for k in steps {
        let x = traj.state(k);
        let u = traj.controls_at(k);
        for (q, f) in features.iter().enumerate() {
            let v = f.value(&x, &u);
            if !v.is_finite() {
                return Err(Error::TrajectoryShape(format!(
                    "feature {} of player {} is not finite at step {}",
                    q + 1,
                    player + 1,
                    k + 1
                )));
            }
            mu[q] += v;
        }
    }
    Ok(mu)
}

/// `J_i(ζ, θ_i) = -θ_iᵀμ_i(ζ)`.
pub fn trajectory_cost(
    traj: &Trajectory,
    theta: &CostParameters,
    game: &GameDefinition,
    player: usize,
) -> Result<f64> {
    theta.check_against(game)?;
    let mu = feature_count(traj, game, player)?;
    Ok(-sequential_dot(&theta.theta[player], mu.as_slice()))
}

fn sequential_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

/// `θ_Σᵀμ_Σ` associated block by block: `Σ_i (θ_iᵀμ_i)`.
pub fn block_dot(theta: &DVector<f64>, mu: &DVector<f64>, order: &FeatureOrder) -> f64 {
    let mut total = 0.0;
    let mut at = 0;
    for &len in &order.block_lengths {
        total += sequential_dot(&theta.as_slice()[at..at + len], &mu.as_slice()[at..at + len]);
        at += len;
    }
    total
}

/// Block structure of a stacked parameter or feature-count vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureOrder {
    pub block_lengths: Vec<usize>,
}

impl FeatureOrder {
    pub fn offset(&self, player: usize) -> usize {
        self.block_lengths[..player].iter().sum()
    }

    pub fn total(&self) -> usize {
        self.block_lengths.iter().sum()
    }
}

/// `θ_Σ = [θ_1ᵀ … θ_Nᵀ]ᵀ`.
pub fn stack_global(params: &CostParameters) -> (DVector<f64>, FeatureOrder) {
    let order = FeatureOrder {
        block_lengths: params.theta.iter().map(Vec::len).collect(),
    };
    let stacked: Vec<f64> = params.theta.iter().flatten().copied().collect();
    (DVector::from_vec(stacked), order)
}

/// Inverse of [`stack_global`] given the game's feature dimensions.
pub fn split_parameters(stacked: &DVector<f64>, game: &GameDefinition) -> Result<CostParameters> {
    let dims = game.feature_dims();
    let total: usize = dims.iter().sum();
    if stacked.len() != total {
        return Err(Error::Dimension {
            what: "stacked parameter vector".into(),
            expected: total,
            actual: stacked.len(),
        });
    }
    let mut at = 0;
    let theta = dims
        .iter()
        .map(|&p| {
            let block = stacked.rows(at, p).iter().copied().collect();
            at += p;
            block
        })
        .collect();
    CostParameters::new(theta)
}

/// `μ_Σ = [μ_1ᵀ … μ_Nᵀ]ᵀ`.
pub fn global_feature_count(traj: &Trajectory, game: &GameDefinition) -> Result<DVector<f64>> {
    let mut out = Vec::new();
    for i in 0..game.player_count() {
        out.extend(feature_count(traj, game, i)?.iter().copied());
    }
    Ok(DVector::from_vec(out))
}

/// `J_Σ = -θ_Σᵀμ_Σ`, accumulated player by player in feature order.
pub fn global_cost(traj: &Trajectory, params: &CostParameters, game: &GameDefinition) -> Result<f64> {
    params.check_against(game)?;
    let (theta, order) = stack_global(params);
    let mu = global_feature_count(traj, game)?;
    Ok(-block_dot(&theta, &mu, &order))
}
