//! BFGS minimization with a strong-Wolfe line search.
//!
//! The objective may return `+∞` (without gradient) outside its domain; the
//! line search treats such points as overshooting and contracts.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

#[derive(Clone, Debug)]
pub struct BfgsOptions {
    pub tol: f64,
    pub max_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct BfgsOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub message: Option<String>,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

struct Point {
    alpha: f64,
    value: f64,
    slope: f64,
    gradient: Option<DVector<f64>>,
}

/// Minimize `f`, which returns the value and (when finite) the gradient.
pub fn minimize<F>(mut f: F, x0: DVector<f64>, opts: &BfgsOptions) -> Result<BfgsOutcome>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, Option<DVector<f64>>)>,
{
    let n = x0.len();
    let mut x = x0;
    let (mut value, grad) = f(&x)?;
    let Some(mut grad) = grad.filter(|_| value.is_finite()) else {
        return Ok(BfgsOutcome {
            gradient_norm: f64::INFINITY,
            x,
            value,
            iterations: 0,
            converged: false,
            message: Some("objective is not finite at the initial point".into()),
        });
    };
    if n == 0 {
        return Ok(BfgsOutcome {
            x,
            value,
            gradient_norm: 0.0,
            iterations: 0,
            converged: true,
            message: None,
        });
    }

    let mut h = DMatrix::<f64>::identity(n, n);
    let mut first = true;
    for iteration in 0..opts.max_iterations {
        let norm = grad.norm();
        if norm <= opts.tol {
            return Ok(BfgsOutcome {
                x,
                value,
                gradient_norm: norm,
                iterations: iteration,
                converged: true,
                message: None,
            });
        }
        let mut direction = -(&h * &grad);
        let mut slope = direction.dot(&grad);
        if slope >= 0.0 {
            h = DMatrix::identity(n, n);
            direction = -grad.clone();
            slope = -norm * norm;
        }
        let alpha0 = if first { (1.0 / norm).min(1.0) } else { 1.0 };
        let start = Point {
            alpha: 0.0,
            value,
            slope,
            gradient: Some(grad.clone()),
        };
        let Some(step) = line_search(&mut f, &x, &direction, start, alpha0)? else {
            return Ok(BfgsOutcome {
                x,
                value,
                gradient_norm: norm,
                iterations: iteration,
                converged: false,
                message: Some("line search found no acceptable step".into()),
            });
        };
        let s = &direction * step.alpha;
        let new_grad = step.gradient.expect("accepted points carry a gradient");
        let y = &new_grad - &grad;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if first {
                h *= sy / y.norm_squared();
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H⁺ = (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ, expanded.
            h += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
            first = false;
        }
        x += s;
        value = step.value;
        grad = new_grad;
    }
    Ok(BfgsOutcome {
        gradient_norm: grad.norm(),
        x,
        value,
        iterations: opts.max_iterations,
        converged: false,
        message: Some("iteration limit reached".into()),
    })
}

fn evaluate<F>(f: &mut F, x: &DVector<f64>, d: &DVector<f64>, alpha: f64) -> Result<Point>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, Option<DVector<f64>>)>,
{
    let (value, gradient) = f(&(x + d * alpha))?;
    let gradient = gradient.filter(|g| value.is_finite() && g.iter().all(|v| v.is_finite()));
    let value = if gradient.is_some() { value } else { f64::INFINITY };
    let slope = gradient.as_ref().map_or(f64::NAN, |g| g.dot(d));
    Ok(Point {
        alpha,
        value,
        slope,
        gradient,
    })
}

/// Strong-Wolfe search (bracketing then zoom).
fn line_search<F>(f: &mut F, x: &DVector<f64>, d: &DVector<f64>, start: Point, alpha0: f64) -> Result<Option<Point>>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, Option<DVector<f64>>)>,
{
    let (f0, s0) = (start.value, start.slope);
    // Decreases below this are indistinguishable from roundoff.
    let noise = 1e-13 * (1.0 + f0.abs());
    let mut prev = start;
    let mut alpha = alpha0;
    for i in 0..40 {
        let cur = evaluate(f, x, d, alpha)?;
        if !cur.value.is_finite() || cur.value > f0 + C1 * alpha * s0 + noise || (i > 0 && cur.value >= prev.value) {
            return zoom(f, x, d, prev, cur, f0, s0, noise);
        }
        if cur.slope.abs() <= -C2 * s0 {
            return Ok(Some(cur));
        }
        if cur.slope >= 0.0 {
            return zoom(f, x, d, cur, prev, f0, s0, noise);
        }
        alpha *= 2.0;
        prev = cur;
    }
    Ok(None)
}

#[allow(clippy::too_many_arguments)]
fn zoom<F>(
    f: &mut F,
    x: &DVector<f64>,
    d: &DVector<f64>,
    mut lo: Point,
    mut hi: Point,
    f0: f64,
    s0: f64,
    noise: f64,
) -> Result<Option<Point>>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, Option<DVector<f64>>)>,
{
    for _ in 0..60 {
        let alpha = interpolate(&lo, &hi);
        let cur = evaluate(f, x, d, alpha)?;
        if !cur.value.is_finite() || cur.value > f0 + C1 * alpha * s0 + noise || cur.value >= lo.value {
            hi = cur;
        } else {
            if cur.slope.abs() <= -C2 * s0 {
                return Ok(Some(cur));
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
        if (hi.alpha - lo.alpha).abs() <= 1e-14 * lo.alpha.abs().max(1e-300) {
            break;
        }
    }
    // Accept a sufficient decrease even without the curvature condition.
    Ok((lo.alpha > 0.0 && lo.value < f0).then_some(lo))
}

/// Minimizer of the cubic through both ends, safeguarded toward bisection.
fn interpolate(lo: &Point, hi: &Point) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let mid = 0.5 * (a + b);
    if !hi.value.is_finite() || !hi.slope.is_finite() {
        return mid;
    }
    let d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    let (min, max) = (a.min(b), a.max(b));
    let margin = 0.1 * (max - min);
    if t.is_finite() && t > min + margin && t < max - margin {
        t
    } else {
        mid
    }
}
