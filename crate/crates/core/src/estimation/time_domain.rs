use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::lm::{levenberg_marquardt, LmOptions};
use super::FitReport;
use crate::error::{Error, Result};

fn check_series(t: &[f64], p: &[f64], min: usize) -> Result<()> {
    if t.len() != p.len() {
        return Err(Error::invalid("time and population lengths differ"));
    }
    if t.len() < min {
        return Err(Error::invalid(format!("need at least {min} time points")));
    }
    if t.iter().chain(p).any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite samples"));
    }
    Ok(())
}

/// Least squares for `y ≈ α·u + β·v`; `None` when the two basis vectors are
/// degenerate.
fn two_term(u: &[f64], v: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let (mut uu, mut uv, mut vv, mut uy, mut vy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((a, b), c) in u.iter().zip(v).zip(y) {
        uu += a * a;
        uv += a * b;
        vv += b * b;
        uy += a * c;
        vy += b * c;
    }
    let m = Matrix2::new(uu, uv, uv, vv);
    let x = m.try_inverse()? * Vector2::new(uy, vy);
    let sse: f64 = u
        .iter()
        .zip(v)
        .zip(y)
        .map(|((a, b), c)| (x[0] * a + x[1] * b - c).powi(2))
        .sum();
    Some((x[0], x[1], sse))
}

fn log_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(move |k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T1Fit {
    /// s
    pub t1: f64,
    pub p0: f64,
    pub p_inf: f64,
    pub report: FitReport,
}

/// Residuals of `p₀·e^{−t/T₁} + p_∞` in coordinates `[p₀, T₁/span, p_∞]`.
fn t1_residual(t: &[f64], p: &[f64], span: f64, q: &[f64]) -> Result<DVector<f64>> {
    if !(q[1] > 0.0) {
        return Err(Error::invalid("non-positive lifetime"));
    }
    Ok(DVector::from_iterator(
        t.len(),
        t.iter()
            .zip(p)
            .map(|(&x, &y)| q[0] * (-x / (q[1] * span)).exp() + q[2] - y),
    ))
}

fn t1_jacobian(t: &[f64], span: f64, q: &[f64]) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(t.len(), 3);
    let tau = q[1] * span;
    for (i, &x) in t.iter().enumerate() {
        let e = (-x / tau).exp();
        j[(i, 0)] = e;
        j[(i, 1)] = q[0] * e * x / (tau * q[1]);
        j[(i, 2)] = 1.0;
    }
    j
}

/// Fit of `p(t) = p₀·e^{−t/T₁} + p_∞`.
pub fn fit_t1(t: &[f64], p: &[f64]) -> Result<T1Fit> {
    check_series(t, p, 5)?;
    let t_max = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let t_min = t.iter().copied().fold(f64::INFINITY, f64::min);
    let span = t_max - t_min;
    if !(span > 0.0) {
        return Err(Error::invalid("delays must not all coincide"));
    }
    // Variable projection on a T1 grid for the start point.
    let ones = vec![1.0; t.len()];
    let mut best = (f64::INFINITY, span, 0.0, 0.0);
    for t1 in log_grid(span / 100.0, 10.0 * span, 200) {
        let e: Vec<f64> = t.iter().map(|x| (-x / t1).exp()).collect();
        if let Some((a, b, sse)) = two_term(&e, &ones, p) {
            if sse < best.0 {
                best = (sse, t1, a, b);
            }
        }
    }
    // Optimizer coordinates: [p₀, T₁/span, p_∞].
    let q0 = [best.2, best.1 / span, best.3];
    let res = |q: &[f64]| t1_residual(t, p, span, q);
    let jac = |q: &[f64]| Ok(t1_jacobian(t, span, q));
    let out = levenberg_marquardt(&q0, res, jac, &LmOptions::default())?;
    let (p0, t1, p_inf) = (out.params[0], out.params[1] * span, out.params[2]);
    let mut report = FitReport::from_outcome(
        &out,
        &[("p0", "1"), ("t1", "s"), ("p_inf", "1")],
        &[p0, t1, p_inf],
        &[1.0, span, 1.0],
    );
    let scale = p.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-300);
    if p0.abs() < 1e-6 * scale || p0.abs() < 1e-12 {
        report.flag("t1 unidentifiable: no decaying component");
    } else if span < 2.0 * t1 {
        report.flag("delays span less than two lifetimes");
    }
    if !out.converged {
        report.flag("T1 fit did not converge");
    }
    Ok(T1Fit { t1, p0, p_inf, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiFit {
    /// s
    pub t_r: f64,
    pub p_max: f64,
    /// s
    pub t_pi: f64,
    pub p_inf: f64,
    pub report: FitReport,
}

/// `[p_max·sin²(πt/2t_π) − p_∞]·e^{−t/T_R} + p_∞`.
pub fn rabi_model(t: f64, p_max: f64, t_pi: f64, p_inf: f64, t_r: f64) -> f64 {
    let s = (PI * t / (2.0 * t_pi)).sin().powi(2);
    (p_max * s - p_inf) * (-t / t_r).exp() + p_inf
}

/// Residuals of [`rabi_model`] in coordinates `[p_max, t_π/span, p_∞, T_R/span]`.
fn rabi_residual(t: &[f64], p: &[f64], span: f64, q: &[f64]) -> Result<DVector<f64>> {
    if !(q[1] > 0.0 && q[3] > 0.0) {
        return Err(Error::invalid("non-positive time constant"));
    }
    Ok(DVector::from_iterator(
        t.len(),
        t.iter()
            .zip(p)
            .map(|(&x, &y)| rabi_model(x, q[0], q[1] * span, q[2], q[3] * span) - y),
    ))
}

fn rabi_jacobian(t: &[f64], span: f64, q: &[f64]) -> DMatrix<f64> {
    let (t_pi, t_r) = (q[1] * span, q[3] * span);
    let mut j = DMatrix::zeros(t.len(), 4);
    for (i, &x) in t.iter().enumerate() {
        let u = PI * x / (2.0 * t_pi);
        let s = u.sin().powi(2);
        let e = (-x / t_r).exp();
        j[(i, 0)] = s * e;
        j[(i, 1)] = q[0] * e * (2.0 * u).sin() * (-u / t_pi) * span;
        j[(i, 2)] = 1.0 - e;
        j[(i, 3)] = (q[0] * s - q[2]) * e * x / (t_r * t_r) * span;
    }
    j
}

/// Fit of the damped Rabi oscillation [`rabi_model`].
pub fn fit_rabi_decay(t: &[f64], p: &[f64]) -> Result<RabiFit> {
    check_series(t, p, 8)?;
    let t_max = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let t_min = t.iter().copied().fold(f64::INFINITY, f64::min);
    let span = t_max - t_min;
    if !(span > 0.0) {
        return Err(Error::invalid("drive durations must not all coincide"));
    }
    let dt_min = {
        let mut s = t.to_vec();
        s.sort_by(f64::total_cmp);
        s.windows(2)
            .map(|w| w[1] - w[0])
            .filter(|d| *d > 0.0)
            .fold(f64::INFINITY, f64::min)
    };
    // (t_π, T_R) grid with p_max, p_∞ solved linearly at each node.
    let mut best = (f64::INFINITY, span, span, 0.0, 0.0);
    for t_pi in log_grid(dt_min.max(span / 400.0), span, 240) {
        let s: Vec<f64> = t.iter().map(|x| (PI * x / (2.0 * t_pi)).sin().powi(2)).collect();
        for t_r in log_grid(span / 50.0, 10.0 * span, 60) {
            let e: Vec<f64> = t.iter().map(|x| (-x / t_r).exp()).collect();
            let u: Vec<f64> = s.iter().zip(&e).map(|(s, e)| s * e).collect();
            let v: Vec<f64> = e.iter().map(|e| 1.0 - e).collect();
            if let Some((pm, pi, sse)) = two_term(&u, &v, p) {
                if sse < best.0 {
                    best = (sse, t_pi, t_r, pm, pi);
                }
            }
        }
    }
    // Optimizer coordinates: [p_max, t_π/span, p_∞, T_R/span].
    let q0 = [best.3, best.1 / span, best.4, best.2 / span];
    let res = |q: &[f64]| rabi_residual(t, p, span, q);
    let jac = |q: &[f64]| Ok(rabi_jacobian(t, span, q));
    let out = levenberg_marquardt(&q0, res, jac, &LmOptions::default())?;
    let q = &out.params;
    let (p_max, t_pi, p_inf, t_r) = (q[0], q[1] * span, q[2], q[3] * span);
    let mut report = FitReport::from_outcome(
        &out,
        &[("p_max", "1"), ("t_pi", "s"), ("p_inf", "1"), ("t_r", "s")],
        &[p_max, t_pi, p_inf, t_r],
        &[1.0, span, 1.0, span],
    );
    if span < 3.0 * 2.0 * t_pi {
        report.flag("fewer than three oscillation periods sampled");
    }
    if !out.converged {
        report.flag("Rabi fit did not converge");
    }
    Ok(RabiFit {
        t_r,
        p_max,
        t_pi,
        p_inf,
        report,
    })
}

/// Decomposition of measured decay rates into coupling, bath and dephasing parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateBudget {
    /// 1/T₁, rad/s (rates are 1/time, consistent with the coupling units).
    pub gamma_1: f64,
    /// 1/T_R
    pub gamma_r: f64,
    /// Central `2(Γ_R − 3Γ₁/4)`.
    pub gamma_phi: f64,
    /// Worst case over the four (T₁ ± δ, T_R ± δ) corners, clipped at 0.
    pub gamma_phi_range: [f64; 2],
    /// `Γ₁ − 2Γ_A − 2Γ_B`, clipped at 0.
    pub gamma_bath: f64,
    pub gamma_bath_range: [f64; 2],
    /// `1/(2Γ_A + 2Γ_B)`, s.
    pub t1_coupling_limited: f64,
    /// Γ_B/Γ_A, to compare with a measured π-amplitude ratio π_A/π_B.
    pub coupling_ratio: f64,
    pub pi_amplitude_ratio: Option<f64>,
}

/// Rate decomposition with worst-case interval propagation.
pub fn rate_budget(
    t1: f64,
    t_r: f64,
    gamma_a: f64,
    gamma_b: f64,
    dt1: f64,
    dt_r: f64,
    pi_amplitude_ratio: Option<f64>,
) -> Result<RateBudget> {
    if !(t1 > 0.0 && t_r > 0.0) {
        return Err(Error::invalid("lifetimes must be positive"));
    }
    if !(gamma_a > 0.0 && gamma_b > 0.0) {
        return Err(Error::invalid("couplings must be positive"));
    }
    if !(dt1 >= 0.0 && dt_r >= 0.0 && dt1 < t1 && dt_r < t_r) {
        return Err(Error::invalid(
            "uncertainties must be non-negative and below the lifetimes",
        ));
    }
    let coupling = 2.0 * (gamma_a + gamma_b);
    let phi = |t1: f64, tr: f64| 2.0 * (1.0 / tr - 0.75 / t1);
    let bath = |t1: f64| 1.0 / t1 - coupling;

    let corners = [
        (t1 - dt1, t_r - dt_r),
        (t1 - dt1, t_r + dt_r),
        (t1 + dt1, t_r - dt_r),
        (t1 + dt1, t_r + dt_r),
    ];
    let phis: Vec<f64> = corners.iter().map(|&(a, b)| phi(a, b).max(0.0)).collect();
    let lo = phis.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = phis.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let b_lo = bath(t1 + dt1).max(0.0);
    let b_hi = bath(t1 - dt1).max(0.0);

    Ok(RateBudget {
        gamma_1: 1.0 / t1,
        gamma_r: 1.0 / t_r,
        gamma_phi: phi(t1, t_r),
        gamma_phi_range: [lo, hi],
        gamma_bath: bath(t1).max(0.0),
        gamma_bath_range: [b_lo, b_hi],
        t1_coupling_limited: 1.0 / coupling,
        coupling_ratio: gamma_b / gamma_a,
        pi_amplitude_ratio,
    })
}
