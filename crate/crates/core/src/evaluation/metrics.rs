use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Trajectory;

/// Normalized maximum absolute errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub e_x: f64,
    /// Maximum over all players' control channels.
    pub e_u: f64,
    pub state_channels: Vec<f64>,
    /// `control_channels[i][c]` for player `i`, channel `c`.
    pub control_channels: Vec<Vec<f64>>,
}

fn channel_errors(estimated: &DMatrix<f64>, reference: &DMatrix<f64>, name: impl Fn(usize) -> String) -> Result<Vec<f64>> {
    (0..reference.nrows())
        .map(|j| {
            let scale = reference.row(j).amax();
            if scale == 0.0 {
                return Err(Error::ZeroReference(name(j)));
            }
            Ok((estimated.row(j) - reference.row(j)).amax() / scale)
        })
        .collect()
}

/// `e_j = max_t |â_j(t) - ā_j(t)| / max_t |ā_j(t)|` per channel, then the
/// maxima over state and control channels.
pub fn nmae(estimated: &Trajectory, reference: &Trajectory) -> Result<ErrorReport> {
    let same_controls = estimated.controls.len() == reference.controls.len()
        && estimated
            .controls
            .iter()
            .zip(&reference.controls)
            .all(|(a, b)| a.shape() == b.shape());
    if estimated.states.shape() != reference.states.shape() || !same_controls {
        return Err(Error::TrajectoryShape(
            "estimated and reference trajectories differ in shape".into(),
        ));
    }
    let state_channels = channel_errors(&estimated.states, &reference.states, |j| format!("x{}", j + 1))?;
    let control_channels = estimated
        .controls
        .iter()
        .zip(&reference.controls)
        .enumerate()
        .map(|(i, (a, b))| {
            channel_errors(a, b, |c| {
                if b.nrows() == 1 {
                    format!("u{}", i + 1)
                } else {
                    format!("u{}_{}", i + 1, c + 1)
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max = |v: &mut dyn Iterator<Item = f64>| v.fold(0.0, f64::max);
    Ok(ErrorReport {
        e_x: max(&mut state_channels.iter().copied()),
        e_u: max(&mut control_channels.iter().flatten().copied()),
        state_channels,
        control_channels,
    })
}
