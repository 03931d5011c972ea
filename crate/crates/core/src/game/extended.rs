use nalgebra::DVector;

use super::{feature_count, GameDefinition, Trajectory};
use crate::error::{Error, Result};

/// Address of feature `index` of `player`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FeatureRef {
    pub player: usize,
    pub index: usize,
}

/// Declares which features of different players are the same function.
pub trait FeatureEquality {
    fn same(&self, a: FeatureRef, b: FeatureRef) -> bool;
}

impl<F: Fn(FeatureRef, FeatureRef) -> bool> FeatureEquality for F {
    fn same(&self, a: FeatureRef, b: FeatureRef) -> bool {
        self(a, b)
    }
}

/// Explicit list of identical feature pairs. Each pair is read both ways.
#[derive(Clone, Debug, Default)]
pub struct PairingTable {
    pairs: Vec<(FeatureRef, FeatureRef)>,
}

impl PairingTable {
    pub fn new(pairs: Vec<(FeatureRef, FeatureRef)>) -> Self {
        Self { pairs }
    }

    pub fn pair(mut self, a: (usize, usize), b: (usize, usize)) -> Self {
        self.pairs.push((
            FeatureRef { player: a.0, index: a.1 },
            FeatureRef { player: b.0, index: b.1 },
        ));
        self
    }
}

impl FeatureEquality for PairingTable {
    fn same(&self, a: FeatureRef, b: FeatureRef) -> bool {
        a == b
            || self
                .pairs
                .iter()
                .any(|&(p, q)| (p == a && q == b) || (p == b && q == a))
    }
}

/// Deduplicated union of all players' features and the per-player embeddings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtendedFeatureMap {
    /// One representative per distinct feature.
    pub representatives: Vec<FeatureRef>,
    /// `embeddings[i][q]` is the extended index of feature `q` of player `i`.
    pub embeddings: Vec<Vec<usize>>,
}

impl ExtendedFeatureMap {
    /// `dim(η̄)`.
    pub fn dim(&self) -> usize {
        self.representatives.len()
    }

    /// `θ̄_i`: scatter `θ_i` through the embedding, zeros elsewhere.
    pub fn extend_parameters(&self, player: usize, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let embedding = &self.embeddings[player];
        if theta.len() != embedding.len() {
            return Err(Error::Dimension {
                what: format!("θ of player {}", player + 1),
                expected: embedding.len(),
                actual: theta.len(),
            });
        }
        let mut out = DVector::zeros(self.dim());
        for (q, &r) in embedding.iter().enumerate() {
            out[r] += theta[q];
        }
        Ok(out)
    }

    /// `μ̄(ζ)`, evaluated through each representative feature.
    pub fn extended_feature_count(&self, traj: &Trajectory, game: &GameDefinition) -> Result<DVector<f64>> {
        let counts: Vec<DVector<f64>> = (0..game.player_count())
            .map(|i| feature_count(traj, game, i))
            .collect::<Result<_>>()?;
        Ok(DVector::from_iterator(
            self.dim(),
            self.representatives.iter().map(|r| counts[r.player][r.index]),
        ))
    }
}

/// Build `η̄` from a declared equality relation over all features.
///
/// The relation must be symmetric and transitive on the game's features.
pub fn build_extended_features(
    game: &GameDefinition,
    oracle: &impl FeatureEquality,
) -> Result<ExtendedFeatureMap> {
    let refs: Vec<FeatureRef> = (0..game.player_count())
        .flat_map(|player| (0..game.feature_dim(player)).map(move |index| FeatureRef { player, index }))
        .collect();

    for (a_pos, &a) in refs.iter().enumerate() {
        for &b in &refs[a_pos + 1..] {
            if oracle.same(a, b) != oracle.same(b, a) {
                return Err(Error::InconsistentOracle(format!(
                    "feature {} of player {} and feature {} of player {} are not symmetrically related",
                    a.index + 1,
                    a.player + 1,
                    b.index + 1,
                    b.player + 1
                )));
            }
        }
    }

    let mut representatives: Vec<FeatureRef> = Vec::new();
    let mut classes: Vec<Vec<FeatureRef>> = Vec::new();
    let mut embeddings: Vec<Vec<usize>> = game.feature_dims().iter().map(|&p| vec![0; p]).collect();
    for &f in &refs {
        let hit = classes.iter().position(|class| oracle.same(class[0], f));
        let slot = match hit {
            Some(c) => {
                if let Some(&bad) = classes[c].iter().find(|&&g| !oracle.same(g, f)) {
                    return Err(Error::InconsistentOracle(format!(
                        "equality is not transitive: player {} feature {} vs player {} feature {}",
                        bad.player + 1,
                        bad.index + 1,
                        f.player + 1,
                        f.index + 1
                    )));
                }
                classes[c].push(f);
                c
            }
            None => {
                representatives.push(f);
                classes.push(vec![f]);
                classes.len() - 1
            }
        };
        embeddings[f.player][f.index] = slot;
    }

    Ok(ExtendedFeatureMap {
        representatives,
        embeddings,
    })
}
