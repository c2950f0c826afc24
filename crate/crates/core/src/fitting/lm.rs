//! Small dense Levenberg-Marquardt solver with Marquardt diagonal scaling.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop when ‖Jᵀr‖∞ falls below this.
    pub gtol: f64,
    /// Stop when the accepted step is below `xtol · (‖p‖ + xtol)`.
    pub xtol: f64,
    /// Stop when the relative cost decrease of an accepted step is below this.
    pub ftol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            gtol: 1e-14,
            xtol: 1e-12,
            ftol: 1e-15,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: DVector<f64>,
    pub residuals: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LmOutcome {
    pub fn cost(&self) -> f64 {
        0.5 * self.residuals.norm_squared()
    }
}

/// Minimises ½‖r(p)‖². `model` returns residuals and their Jacobian.
pub fn minimize<F>(model: F, p0: DVector<f64>, opts: &LmOptions) -> LmOutcome
where
    F: Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
{
    let mut p = p0;
    let (mut r, mut j) = model(&p);
    let mut cost = 0.5 * r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let grad = j.transpose() * &r;
        if grad.amax() < opts.gtol {
            converged = true;
            break;
        }
        let jtj = j.transpose() * &j;
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..a.nrows() {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&grad))) else {
                lambda *= 4.0;
                continue;
            };
            let trial = &p + &step;
            let (tr, tj) = model(&trial);
            let tcost = 0.5 * tr.norm_squared();
            if tcost.is_finite() && tcost <= cost {
                let small_step = step.norm() < opts.xtol * (p.norm() + opts.xtol);
                let small_gain = cost - tcost <= opts.ftol * cost;
                p = trial;
                r = tr;
                j = tj;
                cost = tcost;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if small_step || small_gain {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if converged {
            break;
        }
        if !accepted {
            // No downhill step at any damping: a stationary point to
            // working precision.
            converged = true;
            break;
        }
    }

    LmOutcome {
        params: p,
        residuals: r,
        jacobian: j,
        iterations,
        converged,
    }
}

/// `(JᵀJ)⁻¹ · RSS/(m − p)`, or `None` when J is numerically rank deficient.
pub fn covariance(jacobian: &DMatrix<f64>, residuals: &DVector<f64>) -> Option<DMatrix<f64>> {
    let (m, n) = jacobian.shape();
    let sv = jacobian.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if max.is_nan() || max <= 0.0 || min <= 1e-10 * max {
        return None;
    }
    let dof = m.saturating_sub(n);
    let s2 = if dof > 0 {
        residuals.norm_squared() / dof as f64
    } else {
        f64::INFINITY
    };
    let inv = (jacobian.transpose() * jacobian).try_inverse()?;
    Some(inv * s2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_exponential_exactly() {
        let ts: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 2.5 * (-1.7 * t).exp()).collect();
        let model = |p: &DVector<f64>| {
            let mut r = DVector::zeros(ts.len());
            let mut j = DMatrix::zeros(ts.len(), 2);
            for (i, &t) in ts.iter().enumerate() {
                let e = (-p[1] * t).exp();
                r[i] = p[0] * e - ys[i];
                j[(i, 0)] = e;
                j[(i, 1)] = -p[0] * t * e;
            }
            (r, j)
        };
        let out = minimize(model, DVector::from_vec(vec![1.0, 0.5]), &LmOptions::default());
        assert!(out.converged);
        assert!((out.params[0] - 2.5).abs() < 1e-9);
        assert!((out.params[1] - 1.7).abs() < 1e-9);
    }

    #[test]
    fn rank_deficient_covariance_is_none() {
        let j = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let r = DVector::from_vec(vec![0.1, -0.1, 0.0]);
        assert!(covariance(&j, &r).is_none());
    }
}
