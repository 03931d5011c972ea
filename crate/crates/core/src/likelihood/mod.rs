//! Quadratic (Laplace) approximation of the maximum-entropy trajectory
//! density: control-to-state sensitivities, cost gradient and Gauss–Newton
//! Hessian at a demonstration, and the resulting Gaussian log-likelihood.

mod basis;
mod gaussian;
mod jacobian;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{step_sensitivities, CostParameters, DemonstrationSet, GameDefinition, Trajectory};
use crate::par::*;

pub use basis::QuadraticBasis;
pub use gaussian::{gaussian_log_density, LogDensity, CONDITION_WARNING};
pub use jacobian::ControlJacobian;

/// Which players' controls the density is taken over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    /// All players' controls stacked; cost is the sum of all players' costs.
    Joint,
    /// One player's controls, every other control held at its observed value.
    Player(usize),
}

impl Scope {
    pub fn players(self, game: &GameDefinition) -> Result<Vec<usize>> {
        match self {
            Scope::Joint => Ok((0..game.player_count()).collect()),
            Scope::Player(i) => {
                game.check_player(i)?;
                Ok(vec![i])
            }
        }
    }

    /// The scope's weights in basis order.
    pub fn parameters(self, theta: &CostParameters, game: &GameDefinition) -> Result<Vec<f64>> {
        theta.check_against(game)?;
        Ok(self
            .players(game)?
            .into_iter()
            .flat_map(|i| theta.theta[i].iter().copied())
            .collect())
    }
}

/// Plain sensitivities or their trapezoid average over neighbouring steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DVariant {
    #[default]
    Plain,
    Trapezoid,
}

impl FromStr for DVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Self::Plain),
            "trapezoid" => Ok(Self::Trapezoid),
            other => Err(Error::UnknownMethod(other.to_string())),
        }
    }
}

impl fmt::Display for DVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Plain => "plain",
            Self::Trapezoid => "trapezoid",
        })
    }
}

/// `D` along `traj`, with sensitivities from the game's dynamics.
pub fn control_jacobian(
    game: &GameDefinition,
    traj: &Trajectory,
    scope: Scope,
    variant: DVariant,
) -> Result<ControlJacobian> {
    traj.check_shape(game)?;
    let sens = step_sensitivities(game, traj);
    ControlJacobian::build(game, traj, &sens, scope, variant)
}

fn scope_weights(theta: &CostParameters, game: &GameDefinition, jac: &ControlJacobian) -> Result<Vec<f64>> {
    theta.check_against(game)?;
    Ok(jac
        .players()
        .iter()
        .flat_map(|&i| theta.theta[i].iter().copied())
        .collect())
}

/// `g = ∂J/∂u̲ + Dᵀ·∂J/∂x̲` for the scope's cost.
pub fn cost_gradient_g(
    traj: &Trajectory,
    theta: &CostParameters,
    game: &GameDefinition,
    jac: &ControlJacobian,
) -> Result<DVector<f64>> {
    let basis = QuadraticBasis::build(game, traj, jac)?;
    basis.gradient(&scope_weights(theta, game, jac)?)
}

/// `G = ∂²J/∂u̲² + D·∂²J/∂x̲²·Dᵀ` (plus mixed terms), symmetrized.
pub fn cost_hessian(
    traj: &Trajectory,
    theta: &CostParameters,
    game: &GameDefinition,
    jac: &ControlJacobian,
) -> Result<DMatrix<f64>> {
    let basis = QuadraticBasis::build(game, traj, jac)?;
    basis.hessian(&scope_weights(theta, game, jac)?)
}

/// Gradient and Gauss–Newton Hessian of `Σ_{i ∈ cost_players} J_i` with
/// respect to the controls covered by `jac`, in one pass over the trajectory.
pub fn cost_terms(
    game: &GameDefinition,
    traj: &Trajectory,
    jac: &ControlJacobian,
    theta: &CostParameters,
    cost_players: &[usize],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    theta.check_against(game)?;
    traj.check_shape(game)?;
    let mut weighted: Vec<(&dyn crate::game::Feature, f64)> = Vec::new();
    for &i in cost_players {
        game.check_player(i)?;
        for (f, w) in game.features(i).iter().zip(&theta.theta[i]) {
            weighted.push((f.as_ref(), *w));
        }
    }
    let xs: Vec<DVector<f64>> = (0..traj.horizon()).map(|k| traj.state(k)).collect();
    let us: Vec<Vec<DVector<f64>>> = (0..traj.horizon()).map(|k| traj.controls_at(k)).collect();
    Ok(basis::weighted_terms(&weighted, game, jac, &xs, &us))
}

/// `ln p(u̲_E | x^(1), θ)` under the quadratic approximation.
pub fn log_density_approx(
    traj: &Trajectory,
    theta: &CostParameters,
    game: &GameDefinition,
    scope: Scope,
    variant: DVariant,
) -> Result<LogDensity> {
    let jac = control_jacobian(game, traj, scope, variant)?;
    let basis = QuadraticBasis::build(game, traj, &jac)?;
    basis.log_density(&scope_weights(theta, game, &jac)?)
}

/// `Σ_l ln p(ζ̃_l)`; `-∞` dominates.
pub fn log_likelihood(
    demos: &DemonstrationSet,
    theta: &CostParameters,
    game: &GameDefinition,
    scope: Scope,
    variant: DVariant,
) -> Result<f64> {
    let model = LikelihoodModel::build(game, demos, scope, variant)?;
    model.value(&scope.parameters(theta, game)?)
}

/// Precomputed per-demonstration bases for repeated likelihood evaluation.
#[derive(Clone, Debug)]
pub struct LikelihoodModel {
    bases: Vec<QuadraticBasis>,
    scope: Scope,
    variant: DVariant,
}

impl LikelihoodModel {
    pub fn build(game: &GameDefinition, demos: &DemonstrationSet, scope: Scope, variant: DVariant) -> Result<Self> {
        scope.players(game)?;
        let bases = demos
            .trajectories()
            .par_iter()
            .map(|traj| {
                let jac = control_jacobian(game, traj, scope, variant)?;
                QuadraticBasis::build(game, traj, &jac)
            })
            .collect::<Vec<Result<QuadraticBasis>>>()
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { bases, scope, variant })
    }

    pub fn from_bases(bases: Vec<QuadraticBasis>, scope: Scope, variant: DVariant) -> Self {
        Self { bases, scope, variant }
    }

    pub fn bases(&self) -> &[QuadraticBasis] {
        &self.bases
    }

    pub fn scope(&self) -> Scope {
        self.scope
    }

    pub fn variant(&self) -> DVariant {
        self.variant
    }

    pub fn parameter_count(&self) -> usize {
        self.bases[0].parameter_count()
    }

    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        let terms = self
            .bases
            .par_iter()
            .map(|b| b.log_density(theta).map(|ld| ld.value))
            .collect::<Vec<Result<f64>>>();
        let mut total = 0.0;
        for t in terms {
            total += t?;
        }
        Ok(total)
    }

    /// Log-likelihood and gradient; the gradient is `None` at `-∞`.
    pub fn value_and_gradient(&self, theta: &[f64]) -> Result<(f64, Option<DVector<f64>>)> {
        let terms = self
            .bases
            .par_iter()
            .map(|b| b.log_density_and_gradient(theta))
            .collect::<Vec<_>>();
        let mut total = 0.0;
        let mut grad = DVector::zeros(theta.len());
        let mut finite = true;
        for t in terms {
            let (ld, g) = t?;
            total += ld.value;
            match g {
                Some(g) if finite => grad += g,
                _ => finite = false,
            }
        }
        Ok((total, finite.then_some(grad)))
    }
}
