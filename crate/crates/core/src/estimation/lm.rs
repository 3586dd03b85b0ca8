//! Damped least squares (Levenberg–Marquardt with Marquardt diagonal scaling).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Converged when `‖δ‖ ≤ xtol·(‖p‖ + xtol)`.
    pub xtol: f64,
    /// Converged when the RMS residual drops below this.
    pub rms_tol: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            xtol: 1e-10,
            rms_tol: 1e-13,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub residuals: DVector<f64>,
    pub residual_norm: f64,
    pub n_iter: usize,
    pub converged: bool,
    /// Linearized covariance `σ²(JᵀJ)⁻¹`, `σ² = ‖r‖²/(m − n)`; `None` when
    /// `JᵀJ` is singular.
    pub covariance: Option<DMatrix<f64>>,
    /// Squared residual norm after each accepted step, starting with the initial point.
    pub history: Vec<f64>,
}

impl LmOutcome {
    /// Square roots of the covariance diagonal; infinite when unavailable.
    pub fn sigma(&self) -> Vec<f64> {
        match &self.covariance {
            Some(c) => (0..c.nrows()).map(|i| c[(i, i)].max(0.0).sqrt()).collect(),
            None => vec![f64::INFINITY; self.params.len()],
        }
    }
}

fn norm2(r: &DVector<f64>) -> f64 {
    r.norm_squared()
}

fn all_finite(r: &DVector<f64>) -> bool {
    r.iter().all(|x| x.is_finite())
}

/// Minimizes `‖r(p)‖²` starting from `p0`.
///
/// `residual` may return an error for parameters outside the model domain;
/// such trial steps are rejected like uphill steps.
pub fn levenberg_marquardt<R, J>(p0: &[f64], residual: R, jacobian: J, opts: &LmOptions) -> Result<LmOutcome>
where
    R: Fn(&[f64]) -> Result<DVector<f64>>,
    J: Fn(&[f64]) -> Result<DMatrix<f64>>,
{
    let n = p0.len();
    let mut p = DVector::from_column_slice(p0);
    let mut r = residual(p.as_slice())?;
    if !all_finite(&r) {
        return Err(Error::FitFailure("non-finite residuals at the initial point".into()));
    }
    let m = r.len();
    if m < n {
        return Err(Error::FitFailure(format!("{m} residuals for {n} parameters")));
    }
    let mut cost = norm2(&r);
    let mut history = vec![cost];
    let rms = |c: f64| (c / m as f64).sqrt();

    let mut lambda = opts.initial_lambda;
    let mut converged = rms(cost) < opts.rms_tol;
    let mut n_iter = 0;

    while !converged && n_iter < opts.max_iter {
        n_iter += 1;
        let jac = jacobian(p.as_slice())?;
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut accepted = None;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-30);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&g));
            let trial = &p + &delta;
            match residual(trial.as_slice()) {
                Ok(rt) if all_finite(&rt) && norm2(&rt) < cost => {
                    accepted = Some((trial, rt, delta));
                    lambda = (lambda / 10.0).max(1e-15);
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        let Some((trial, rt, delta)) = accepted else {
            // No downhill step exists at any damping: stationary to working precision.
            converged = true;
            break;
        };
        let step_small = delta.norm() <= opts.xtol * (p.norm() + opts.xtol);
        p = trial;
        r = rt;
        cost = norm2(&r);
        history.push(cost);
        converged = step_small || rms(cost) < opts.rms_tol;
    }

    let jac = jacobian(p.as_slice())?;
    let jtj = jac.transpose() * &jac;
    let s2 = if m > n { cost / (m - n) as f64 } else { 0.0 };
    let covariance = jtj.try_inverse().map(|inv| inv * s2);
    Ok(LmOutcome {
        params: p.as_slice().to_vec(),
        residual_norm: cost.sqrt(),
        residuals: r,
        n_iter,
        converged,
        covariance,
        history,
    })
}

/// Central-difference Jacobian, used to check analytic ones.
pub fn numeric_jacobian<R>(p: &[f64], residual: R, h: &[f64]) -> Result<DMatrix<f64>>
where
    R: Fn(&[f64]) -> Result<DVector<f64>>,
{
    let r0 = residual(p)?;
    let mut jac = DMatrix::zeros(r0.len(), p.len());
    let mut q = p.to_vec();
    for j in 0..p.len() {
        q[j] = p[j] + h[j];
        let rp = residual(&q)?;
        q[j] = p[j] - h[j];
        let rm = residual(&q)?;
        q[j] = p[j];
        jac.set_column(j, &((rp - rm) / (2.0 * h[j])));
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;

    // y = a·exp(−b·x)
    fn data() -> (Vec<f64>, Vec<f64>) {
        let x: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let y = x.iter().map(|x| 2.5 * (-1.3 * x).exp()).collect();
        (x, y)
    }

    type Res<'a> = Box<dyn Fn(&[f64]) -> Result<DVector<f64>> + 'a>;
    type Jac<'a> = Box<dyn Fn(&[f64]) -> Result<DMatrix<f64>> + 'a>;

    fn problem<'a>(x: &'a [f64], y: &'a [f64]) -> (Res<'a>, Jac<'a>) {
        let res = Box::new(move |p: &[f64]| {
            Ok(DVector::from_iterator(
                x.len(),
                x.iter().zip(y).map(|(x, y)| p[0] * (-p[1] * x).exp() - y),
            ))
        });
        let jac = Box::new(move |p: &[f64]| {
            let mut j = DMatrix::zeros(x.len(), 2);
            for (k, x) in x.iter().enumerate() {
                let e = (-p[1] * x).exp();
                j[(k, 0)] = e;
                j[(k, 1)] = -p[0] * x * e;
            }
            Ok(j)
        });
        (res, jac)
    }

    #[test]
    fn recovers_exponential() {
        let (x, y) = data();
        let (res, jac) = problem(&x, &y);
        let out = levenberg_marquardt(&[1.0, 0.3], res, jac, &LmOptions::default()).unwrap();
        assert!(out.converged);
        assert!((out.params[0] - 2.5).abs() < 1e-9);
        assert!((out.params[1] - 1.3).abs() < 1e-9);
        for w in out.history.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn zero_iterations_at_truth() {
        let (x, y) = data();
        let (res, jac) = problem(&x, &y);
        let out = levenberg_marquardt(&[2.5, 1.3], res, jac, &LmOptions::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.n_iter, 0);
        assert!(out.sigma().iter().all(|s| *s == 0.0));
    }

    #[test]
    fn numeric_jacobian_matches() {
        let (x, y) = data();
        let (res, jac) = problem(&x, &y);
        let p = [1.7, 0.9];
        let a = jac(&p).unwrap();
        let n = numeric_jacobian(&p, res, &[1e-6, 1e-6]).unwrap();
        assert!((a - n).amax() < 1e-7);
    }

    #[test]
    fn rejects_underdetermined() {
        let res = |_: &[f64]| Ok(DVector::from_element(1, 1.0));
        let jac = |_: &[f64]| Ok(DMatrix::from_element(1, 2, 1.0));
        assert!(levenberg_marquardt(&[0.0, 0.0], res, jac, &LmOptions::default()).is_err());
    }
}
