//! Maximum-likelihood identification of cost weights for cooperative,
//! open-loop Nash and feedback Nash demonstrations, and least-squares
//! estimation of feedback gains.

mod bfgs;
mod gains;

use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::{closed_loop_dynamics, FeedbackLaw};
use crate::error::{Error, Result};
use crate::forward::Concept;
use crate::game::{DemonstrationSet, GameDefinition};
use crate::likelihood::{DVariant, LikelihoodModel, Scope};

pub use bfgs::{minimize, BfgsOptions, BfgsOutcome};
pub use gains::estimate_feedback_gains;

/// A weight held at a constant value during identification.
///
/// `player` and `index` are one-based, matching the command-line syntax.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedWeight {
    pub player: usize,
    pub index: usize,
    pub value: f64,
}

impl FixedWeight {
    /// Fix player `player`'s last feature weight (the own-control effort in
    /// the built-in systems).
    pub fn last_feature(game: &GameDefinition, player: usize, value: f64) -> Self {
        Self {
            player: player + 1,
            index: game.feature_dim(player),
            value,
        }
    }
}

/// Parses `player=1,index=5,value=2.0` (keys in any order).
impl FromStr for FixedWeight {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::Config(format!("fixed weight `{s}`: {why}"));
        let (mut player, mut index, mut value) = (None, None, None);
        for part in s.split(',') {
            let (key, v) = part.split_once('=').ok_or_else(|| bad("expected key=value pairs"))?;
            let v = v.trim();
            match key.trim() {
                "player" => player = Some(v.parse::<usize>().map_err(|_| bad("player is not an integer"))?),
                "index" => index = Some(v.parse::<usize>().map_err(|_| bad("index is not an integer"))?),
                "value" => value = Some(v.parse::<f64>().map_err(|_| bad("value is not a number"))?),
                other => return Err(bad(&format!("unknown key `{other}`"))),
            }
        }
        match (player, index, value) {
            (Some(player), Some(index), Some(value)) => Ok(Self { player, index, value }),
            _ => Err(bad("player, index and value are all required")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentificationConfig {
    /// At most one entry per player. Players without one are fully free,
    /// which leaves the likelihood unbounded along positive scalings.
    pub fixed: Vec<FixedWeight>,
    pub variant: DVariant,
    /// Gradient norm (over free weights) at which the optimizer stops.
    pub tol: f64,
    pub max_iterations: usize,
    /// Starting value of every free weight.
    pub initial_weight: f64,
    /// Starting values tried in turn when the run from `initial_weight` does
    /// not converge. The first converged run wins; otherwise the run with
    /// the highest likelihood continues for the rest of `max_iterations`.
    pub fallback_weights: Vec<f64>,
    /// Iterations allowed per start before moving on to the next one.
    pub start_budget: usize,
    /// `β` in `p(ζ) ∝ exp(-β J(ζ))`. Larger values model a more deliberate
    /// demonstrator and weaken the pull of the normalizer toward large
    /// curvature.
    pub inverse_temperature: f64,
}

impl Default for IdentificationConfig {
    fn default() -> Self {
        Self {
            fixed: Vec::new(),
            variant: DVariant::Plain,
            tol: 1e-8,
            max_iterations: 500,
            initial_weight: 1.0,
            fallback_weights: vec![2.0, 5.0, 0.5],
            start_budget: 100,
            inverse_temperature: 1.0,
        }
    }
}

impl IdentificationConfig {
    /// Fix each player's last weight to the given value.
    pub fn with_last_feature_fixed(game: &GameDefinition, values: &[f64]) -> Self {
        Self {
            fixed: values
                .iter()
                .enumerate()
                .map(|(i, &v)| FixedWeight::last_feature(game, i, v))
                .collect(),
            ..Self::default()
        }
    }

    fn fixed_for(&self, player: usize) -> Option<FixedWeight> {
        self.fixed.iter().copied().find(|f| f.player == player + 1)
    }

    fn validate(&self, game: &GameDefinition) -> Result<()> {
        for (pos, f) in self.fixed.iter().enumerate() {
            if f.player == 0 || f.player > game.player_count() {
                return Err(Error::Config(format!("fixed weight names player {}", f.player)));
            }
            let p = game.feature_dim(f.player - 1);
            if f.index == 0 || f.index > p {
                return Err(Error::Config(format!(
                    "fixed weight index {} out of range 1..={p} for player {}",
                    f.index, f.player
                )));
            }
            if !f.value.is_finite() {
                return Err(Error::Config(format!("fixed weight of player {} is not finite", f.player)));
            }
            if self.fixed[..pos].iter().any(|g| g.player == f.player) {
                return Err(Error::Config(format!("player {} has more than one fixed weight", f.player)));
            }
        }
        let starts_finite = std::iter::once(&self.initial_weight)
            .chain(&self.fallback_weights)
            .all(|w| w.is_finite());
        if !(self.tol > 0.0) || !starts_finite {
            return Err(Error::Config("tolerance must be positive and the initial weights finite".into()));
        }
        if !(self.inverse_temperature > 0.0 && self.inverse_temperature.is_finite()) {
            return Err(Error::Config("inverse temperature must be positive and finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerTrace {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub log_likelihood: f64,
    pub converged: bool,
    pub message: Option<String>,
    /// Starting weight of the reported run.
    pub initial_weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentificationResult {
    pub concept: Concept,
    /// One-based players whose weights were identified, aligned with `theta`.
    pub players: Vec<usize>,
    pub theta: Vec<Vec<f64>>,
    /// `theta` concatenated in player order.
    pub stacked: Vec<f64>,
    pub fixed: Vec<FixedWeight>,
    pub variant: DVariant,
    pub inverse_temperature: f64,
    pub trace: OptimizerTrace,
}

/// Maximize the log-likelihood of `model` over the weights of `players`
/// (indices into `game`), one block per player in order.
fn maximize(
    model: &LikelihoodModel,
    game: &GameDefinition,
    players: &[usize],
    config: &IdentificationConfig,
    record_players: &[usize],
    concept: Concept,
) -> Result<IdentificationResult> {
    let sizes: Vec<usize> = players.iter().map(|&i| game.feature_dim(i)).collect();
    let total: usize = sizes.iter().sum();
    let mut full = vec![config.initial_weight; total];
    let mut fixed_slots = Vec::new();
    let mut fixed = Vec::new();
    let mut offset = 0;
    for (&i, &p) in record_players.iter().zip(&sizes) {
        if let Some(f) = config.fixed_for(i) {
            full[offset + f.index - 1] = f.value;
            fixed_slots.push(offset + f.index - 1);
            fixed.push(f);
        }
        offset += p;
    }
    let free: Vec<usize> = (0..total).filter(|s| !fixed_slots.contains(s)).collect();

    let expand = |z: &DVector<f64>| {
        let mut theta = full.clone();
        for (k, &s) in free.iter().enumerate() {
            theta[s] = z[k];
        }
        theta
    };
    let beta = config.inverse_temperature;
    let objective = |z: &DVector<f64>| -> Result<(f64, Option<DVector<f64>>)> {
        let scaled: Vec<f64> = expand(z).iter().map(|v| beta * v).collect();
        let (ll, grad) = model.value_and_gradient(&scaled)?;
        Ok((-ll, grad.map(|g| DVector::from_iterator(free.len(), free.iter().map(|&s| -beta * g[s])))))
    };
    // Some starts crawl along the edge of the positive-definite region for
    // hundreds of iterations, so each gets a short budget first.
    let per_start = BfgsOptions {
        tol: config.tol,
        max_iterations: config.max_iterations.min(config.start_budget),
    };
    let mut best: Option<(f64, BfgsOutcome)> = None;
    for &w in std::iter::once(&config.initial_weight).chain(&config.fallback_weights) {
        let outcome = minimize(&objective, DVector::from_element(free.len(), w), &per_start)?;
        let done = outcome.converged;
        if best.as_ref().is_none_or(|(_, b)| outcome.value < b.value) || done {
            best = Some((w, outcome));
        }
        if done {
            break;
        }
    }
    let (start, mut outcome) = best.expect("at least one start is tried");
    let remaining = config.max_iterations - per_start.max_iterations;
    if !outcome.converged && outcome.value.is_finite() && remaining > 0 {
        let rest = BfgsOptions {
            tol: config.tol,
            max_iterations: remaining,
        };
        let used = outcome.iterations;
        outcome = minimize(&objective, outcome.x, &rest)?;
        outcome.iterations += used;
    }

    let stacked = expand(&outcome.x);
    let mut theta = Vec::with_capacity(players.len());
    let mut offset = 0;
    for &p in &sizes {
        theta.push(stacked[offset..offset + p].to_vec());
        offset += p;
    }
    Ok(IdentificationResult {
        concept,
        players: record_players.iter().map(|i| i + 1).collect(),
        theta,
        stacked,
        fixed,
        variant: config.variant,
        inverse_temperature: beta,
        trace: OptimizerTrace {
            iterations: outcome.iterations,
            gradient_norm: outcome.gradient_norm,
            log_likelihood: -outcome.value,
            converged: outcome.converged,
            message: outcome.message,
            initial_weight: start,
        },
    })
}

/// Identify all players' weights from cooperative demonstrations, using the
/// density of the joint controls under the summed cost.
pub fn identify_cooperative(
    demos: &DemonstrationSet,
    game: &GameDefinition,
    config: &IdentificationConfig,
) -> Result<IdentificationResult> {
    config.validate(game)?;
    let model = LikelihoodModel::build(game, demos, Scope::Joint, config.variant)?;
    let players: Vec<usize> = (0..game.player_count()).collect();
    maximize(&model, game, &players, config, &players, Concept::Cooperative)
}

/// Identify one player's weights from open-loop Nash demonstrations, with the
/// other players' controls held at their observed values.
pub fn identify_open_loop(
    demos: &DemonstrationSet,
    game: &GameDefinition,
    player: usize,
    config: &IdentificationConfig,
) -> Result<IdentificationResult> {
    config.validate(game)?;
    let model = LikelihoodModel::build(game, demos, Scope::Player(player), config.variant)?;
    maximize(&model, game, &[player], config, &[player], Concept::OpenLoopNash)
}

/// Identify one player's weights from feedback Nash demonstrations: the
/// other players act through `laws`, which are substituted into the dynamics
/// and features before the likelihood is formed.
pub fn identify_feedback(
    demos: &DemonstrationSet,
    game: &GameDefinition,
    player: usize,
    laws: &[Option<Arc<dyn FeedbackLaw>>],
    config: &IdentificationConfig,
) -> Result<IdentificationResult> {
    config.validate(game)?;
    let closed = closed_loop_dynamics(game, laws, player)?;
    let own = DemonstrationSet::new(
        &closed,
        demos.trajectories().iter().map(|t| t.restrict_to_player(player)).collect(),
    )?;
    let model = LikelihoodModel::build(&closed, &own, Scope::Player(0), config.variant)?;
    maximize(&model, &closed, &[0], config, &[player], Concept::FeedbackNash)
}
