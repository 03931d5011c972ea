use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

/// Condition estimates above this attach a warning to the result.
pub const CONDITION_WARNING: f64 = 1e12;

/// Natural-log density of the quadratic approximation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogDensity {
    /// `-∞` when the Hessian is not positive definite.
    pub value: f64,
    /// `(max L_jj / min L_jj)²` from the Cholesky factor; a cheap lower bound
    /// on the spectral condition number. Infinite when not positive definite.
    pub condition_estimate: f64,
}

impl LogDensity {
    pub fn not_positive_definite() -> Self {
        Self {
            value: f64::NEG_INFINITY,
            condition_estimate: f64::INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }

    pub fn ill_conditioned(&self) -> bool {
        self.is_finite() && self.condition_estimate > CONDITION_WARNING
    }
}

pub(crate) fn factor(hessian: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if hessian.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let chol = Cholesky::new(hessian.clone())?;
    let diag = chol.l_dirty().diagonal();
    if diag.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return None;
    }
    Some(chol)
}

pub(crate) fn density_from_factor(gradient: &DVector<f64>, chol: &Cholesky<f64, Dyn>) -> (LogDensity, DVector<f64>) {
    let d = gradient.len() as f64;
    let diag = chol.l_dirty().diagonal();
    let log_det = 2.0 * diag.iter().map(|v| v.ln()).sum::<f64>();
    let v = chol.solve(gradient);
    let value = -0.5 * gradient.dot(&v) + 0.5 * log_det - 0.5 * d * (2.0 * std::f64::consts::PI).ln();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let density = LogDensity {
        value: if value.is_finite() { value } else { f64::NEG_INFINITY },
        condition_estimate: (hi / lo).powi(2),
    };
    (density, v)
}

/// `ln N(0; -G⁻¹g, G⁻¹) = -½gᵀG⁻¹g + ½ln det G - (d/2)ln 2π`.
pub fn gaussian_log_density(gradient: &DVector<f64>, hessian: &DMatrix<f64>) -> LogDensity {
    match factor(hessian) {
        Some(chol) => density_from_factor(gradient, &chol).0,
        None => LogDensity::not_positive_definite(),
    }
}
