use nalgebra::{DMatrix, DVector};

use super::gaussian::{density_from_factor, factor, LogDensity};
use super::ControlJacobian;
use crate::error::{Error, Result};
use crate::game::{Feature, FeatureDerivatives, GameDefinition, Trajectory};
use crate::par::*;

/// `g(θ) = Σ_p θ_p g_p` and `G(θ) = Σ_p θ_p G_p` at one demonstration.
///
/// Both are linear in the cost weights, so the per-parameter terms are
/// computed once and every likelihood evaluation only recombines them.
#[derive(Clone, Debug)]
pub struct QuadraticBasis {
    gradients: Vec<DVector<f64>>,
    hessians: Vec<DMatrix<f64>>,
    dim: usize,
}

/// Where a coordinate of the per-step vector `z` lands in the scope.
#[derive(Clone, Copy)]
enum Slot {
    State(usize),
    Control(usize),
}

impl QuadraticBasis {
    /// Parameters are the scope players' features in player order.
    pub fn build(game: &GameDefinition, traj: &Trajectory, jac: &ControlJacobian) -> Result<Self> {
        traj.check_shape(game)?;
        if jac.horizon() != traj.horizon() || jac.state_dim() != game.state_dim() {
            return Err(Error::Dimension {
                what: "control Jacobian horizon".into(),
                expected: traj.horizon(),
                actual: jac.horizon(),
            });
        }
        let features: Vec<&std::sync::Arc<dyn Feature>> = jac
            .players()
            .iter()
            .flat_map(|&i| game.features(i).iter())
            .collect();
        let xs: Vec<DVector<f64>> = (0..traj.horizon()).map(|k| traj.state(k)).collect();
        let us: Vec<Vec<DVector<f64>>> = (0..traj.horizon()).map(|k| traj.controls_at(k)).collect();
        let terms: Vec<(DVector<f64>, DMatrix<f64>)> = features
            .par_iter()
            .map(|f| weighted_terms(&[(f.as_ref(), 1.0)], game, jac, &xs, &us))
            .collect();
        let (gradients, hessians) = terms.into_iter().unzip();
        Ok(Self {
            gradients,
            hessians,
            dim: jac.dim(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn parameter_count(&self) -> usize {
        self.gradients.len()
    }

    pub fn gradient_terms(&self) -> &[DVector<f64>] {
        &self.gradients
    }

    pub fn hessian_terms(&self) -> &[DMatrix<f64>] {
        &self.hessians
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.parameter_count() {
            return Err(Error::Dimension {
                what: "scope parameters".into(),
                expected: self.parameter_count(),
                actual: theta.len(),
            });
        }
        Ok(())
    }

    pub fn gradient(&self, theta: &[f64]) -> Result<DVector<f64>> {
        self.check(theta)?;
        let mut g = DVector::zeros(self.dim);
        for (w, gp) in theta.iter().zip(&self.gradients) {
            g.axpy(*w, gp, 1.0);
        }
        Ok(g)
    }

    pub fn hessian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.check(theta)?;
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for (w, hp) in theta.iter().zip(&self.hessians) {
            if *w != 0.0 {
                for (dst, src) in h.as_mut_slice().iter_mut().zip(hp.as_slice()) {
                    *dst += w * src;
                }
            }
        }
        Ok(h)
    }

    pub fn log_density(&self, theta: &[f64]) -> Result<LogDensity> {
        let g = self.gradient(theta)?;
        let h = self.hessian(theta)?;
        Ok(match factor(&h) {
            Some(chol) => density_from_factor(&g, &chol).0,
            None => LogDensity::not_positive_definite(),
        })
    }

    /// Log-density and its exact gradient in `θ`:
    /// `∂/∂θ_p = -g_pᵀv + ½vᵀG_pv + ½tr(G⁻¹G_p)` with `v = G⁻¹g`.
    /// The gradient is `None` when the density is `-∞`.
    pub fn log_density_and_gradient(&self, theta: &[f64]) -> Result<(LogDensity, Option<DVector<f64>>)> {
        let g = self.gradient(theta)?;
        let h = self.hessian(theta)?;
        let Some(chol) = factor(&h) else {
            return Ok((LogDensity::not_positive_definite(), None));
        };
        let (density, v) = density_from_factor(&g, &chol);
        if !density.is_finite() {
            return Ok((density, None));
        }
        let inverse = chol.inverse();
        let grad = DVector::from_iterator(
            self.parameter_count(),
            self.gradients.iter().zip(&self.hessians).map(|(gp, hp)| {
                let quad = v.dot(&(hp * &v));
                -gp.dot(&v) + 0.5 * quad + 0.5 * inverse.dot(hp)
            }),
        );
        Ok((density, Some(grad)))
    }
}

/// Gradient and Gauss–Newton Hessian of `J = -Σ_k Σ_f w_f η_f(z_k)` with
/// respect to the scope's controls, through `x̲(u̲)`: `Tᵀ∇²η T`, `T = ∂z/∂u̲`.
pub(crate) fn weighted_terms(
    features: &[(&dyn Feature, f64)],
    game: &GameDefinition,
    jac: &ControlJacobian,
    xs: &[DVector<f64>],
    us: &[Vec<DVector<f64>>],
) -> (DVector<f64>, DMatrix<f64>) {
    let n = game.state_dim();
    let layout = game.layout();
    let d = jac.dim();
    let dmat = jac.matrix();

    let mut gradient = DVector::zeros(d);
    // Columns of W (one per Hessian-supported coordinate) and the dense
    // Hessian blocks acting on them.
    let mut columns: Vec<Slot> = Vec::new();
    let mut blocks: Vec<(usize, DMatrix<f64>)> = Vec::new();

    for (k, (x, u)) in xs.iter().zip(us).enumerate() {
        let slots: Vec<Option<Slot>> = (0..layout.len())
            .map(|z| {
                if z < n {
                    Some(Slot::State(k * n + z))
                } else {
                    let player = (0..layout.control_dims.len())
                        .rev()
                        .find(|&p| layout.control_offset(p) <= z)
                        .expect("control coordinate");
                    let c = z - layout.control_offset(player);
                    jac.position_of(player).map(|pos| Slot::Control(jac.control_index(pos, k, c)))
                }
            })
            .collect();
        let nz = layout.len();
        let mut derivs = FeatureDerivatives {
            gradient: DVector::zeros(nz),
            hessian: DMatrix::zeros(nz, nz),
        };
        for (feature, weight) in features {
            if *weight == 0.0 {
                continue;
            }
            let d = feature.derivatives(x, u);
            derivs.gradient.axpy(*weight, &d.gradient, 1.0);
            derivs.hessian += d.hessian * *weight;
        }
        for (z, slot) in slots.iter().enumerate() {
            let gz = derivs.gradient[z];
            if gz == 0.0 {
                continue;
            }
            match slot {
                Some(Slot::State(col)) => gradient.axpy(gz, &dmat.column(*col), 1.0),
                Some(Slot::Control(row)) => gradient[*row] += gz,
                None => {}
            }
        }
        let support: Vec<usize> = (0..layout.len())
            .filter(|&z| slots[z].is_some() && (0..layout.len()).any(|w| slots[w].is_some() && derivs.hessian[(z, w)] != 0.0))
            .collect();
        if support.is_empty() {
            continue;
        }
        let start = columns.len();
        let block = DMatrix::from_fn(support.len(), support.len(), |a, b| derivs.hessian[(support[a], support[b])]);
        columns.extend(support.iter().map(|&z| slots[z].expect("supported slot")));
        blocks.push((start, block));
    }

    gradient.neg_mut();
    if columns.is_empty() {
        return (gradient, DMatrix::zeros(d, d));
    }

    let mut w = DMatrix::zeros(d, columns.len());
    for (c, slot) in columns.iter().enumerate() {
        match slot {
            Slot::State(col) => w.set_column(c, &dmat.column(*col)),
            Slot::Control(row) => w[(*row, c)] = 1.0,
        }
    }
    let mut wh = DMatrix::zeros(d, columns.len());
    for (start, block) in &blocks {
        let size = block.nrows();
        let prod = w.columns(*start, size) * block;
        wh.columns_mut(*start, size).copy_from(&prod);
    }
    let mut hessian = -(wh * w.transpose());
    let sym = (&hessian + hessian.transpose()) * 0.5;
    hessian.copy_from(&sym);
    (gradient, hessian)
}
