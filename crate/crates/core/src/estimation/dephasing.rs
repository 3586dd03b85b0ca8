use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lm::{levenberg_marquardt, LmOptions};
use super::FitReport;
use crate::error::{Error, Result};
use crate::model::{n_thermal, FluxModel, SaturationParams, ThermalCoefficients};
use crate::units::MHZ;

/// Efficiencies in `(1, E_CLAMP_LIMIT]` are treated as noise and clamped to 1.
pub const E_CLAMP_LIMIT: f64 = 1.05;

/// `c2·x² + c1·x + c0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadratic {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl Quadratic {
    pub fn eval(&self, x: f64) -> f64 {
        (self.c2 * x + self.c1) * x + self.c0
    }
}

/// Ordinary least squares with a rank check; returns coefficients and the
/// covariance `σ²(AᵀA)⁻¹`.
fn linear_lsq(a: &DMatrix<f64>, y: &DVector<f64>, what: &str) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (m, n) = a.shape();
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(Error::Unidentifiable(format!("{what}: rank-deficient design")));
    }
    let x = svd.solve(y, 0.0).map_err(|e| Error::FitFailure(e.to_string()))?;
    let r = a * &x - y;
    let s2 = if m > n { r.norm_squared() / (m - n) as f64 } else { 0.0 };
    let cov = (a.transpose() * a)
        .try_inverse()
        .ok_or_else(|| Error::Unidentifiable(format!("{what}: singular normal matrix")))?
        * s2;
    Ok((x, cov))
}

/// Least-squares quadratic through `(ib, e)` points.
pub fn fit_e_polynomial(ib_ma: &[f64], e: &[f64]) -> Result<Quadratic> {
    if ib_ma.len() != e.len() {
        return Err(Error::invalid("bias and efficiency lengths differ"));
    }
    if ib_ma.len() < 3 {
        return Err(Error::invalid("need at least three bias points"));
    }
    let a = DMatrix::from_fn(ib_ma.len(), 3, |i, j| ib_ma[i].powi(2 - j as i32));
    let (x, _) = linear_lsq(&a, &DVector::from_column_slice(e), "efficiency polynomial")?;
    Ok(Quadratic {
        c2: x[0],
        c1: x[1],
        c0: x[2],
    })
}

/// Positive Γ_φ solving `Γ_φ²/(Γ_AΓ_B) + Γ_φ(1/Γ_A + 1/Γ_B) + 1 − 1/E = 0`.
pub fn gamma_phi_from_e(e: f64, gamma_a: f64, gamma_b: f64) -> Result<f64> {
    if !(gamma_a > 0.0 && gamma_b > 0.0) {
        return Err(Error::invalid("couplings must be positive"));
    }
    if !(e > 0.0 && e <= E_CLAMP_LIMIT) {
        return Err(Error::invalid(format!("efficiency {e} outside (0, {E_CLAMP_LIMIT}]")));
    }
    let e = if e > 1.0 {
        log::warn!("efficiency {e} above 1 clamped to 1");
        1.0
    } else {
        e
    };
    // x² + (Γ_A+Γ_B)x − Γ_AΓ_B(1/E − 1) = 0, cancellation-free root.
    let b = gamma_a + gamma_b;
    let c = gamma_a * gamma_b * (1.0 / e - 1.0);
    Ok(2.0 * c / (b + (b * b + 4.0 * c).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxNoiseFit {
    /// Bias-current noise spectral density, A²/Hz.
    pub s_i: f64,
    /// Flux-insensitive dephasing, rad/s.
    pub gamma_phi_0: f64,
    pub report: FitReport,
}

/// Linear fit of `Γ_φ = π(dω_ge/dI_b)²S_I + Γ_φ⁰` with the slope in rad/s per A.
pub fn fit_flux_noise(ib_ma: &[f64], gamma_phi: &[f64], flux: &FluxModel) -> Result<FluxNoiseFit> {
    if ib_ma.len() != gamma_phi.len() {
        return Err(Error::invalid("bias and dephasing lengths differ"));
    }
    if ib_ma.len() < 3 {
        return Err(Error::invalid("need at least three bias points"));
    }
    let x: Vec<f64> = ib_ma.iter().map(|&ib| (flux.slope(ib) * 1e3).powi(2)).collect();
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if !(hi - lo > 1e-12 * hi.max(f64::MIN_POSITIVE)) {
        return Err(Error::Unidentifiable(
            "S_I: flux sensitivity is the same at every bias point".into(),
        ));
    }
    // Columns scaled to order one before solving.
    let xs = hi;
    let a = DMatrix::from_fn(x.len(), 2, |i, j| if j == 0 { PI * x[i] / xs } else { 1.0 });
    let y = DVector::from_iterator(gamma_phi.len(), gamma_phi.iter().map(|g| g / MHZ));
    let (sol, cov) = linear_lsq(&a, &y, "flux noise")?;
    let s_i = sol[0] * MHZ / xs;
    let g0 = sol[1] * MHZ;
    let residual_norm = (&a * &sol - &y).norm() * MHZ;
    let report = FitReport {
        params: vec![
            super::FitParam {
                name: "s_i".into(),
                value: s_i,
                sigma: cov[(0, 0)].max(0.0).sqrt() * MHZ / xs,
                unit: "A^2/Hz".into(),
            },
            super::FitParam {
                name: "gamma_phi_0".into(),
                value: g0,
                sigma: cov[(1, 1)].max(0.0).sqrt() * MHZ,
                unit: "rad/s".into(),
            },
        ],
        residual_norm,
        n_iter: 1,
        converged: true,
        seed: None,
        flags: Vec::new(),
    };
    Ok(FluxNoiseFit {
        s_i,
        gamma_phi_0: g0,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalFit {
    pub coefficients: ThermalCoefficients,
    pub report: FitReport,
}

/// E(n_th) in coordinates `[γ₁⁰, γ_φ⁰]` (MHz-scaled angular rates).
struct ThermalProblem<'a> {
    n_th: &'a [f64],
    e: &'a [f64],
    lin: f64,
    quad: f64,
}

impl<'a> ThermalProblem<'a> {
    fn new(n_th: &'a [f64], e: &'a [f64], gamma_a: f64, gamma_b: f64) -> Self {
        let (ga, gb) = (gamma_a / MHZ, gamma_b / MHZ);
        Self {
            n_th,
            e,
            lin: 1.0 / ga + 1.0 / gb,
            quad: 1.0 / (ga * gb),
        }
    }

    /// E and dE/dr at broadening `r = n(γ₁ + γ_φ) + γ₁/2`.
    fn model(&self, q: &[f64], n: f64) -> (f64, f64) {
        let r = n * (q[0] + q[1]) + 0.5 * q[0];
        let den = 1.0 + r * self.lin + r * r * self.quad;
        (1.0 / den, -(self.lin + 2.0 * r * self.quad) / (den * den))
    }

    fn residual(&self, q: &[f64]) -> Result<DVector<f64>> {
        if q[0] < 0.0 || q[1] < 0.0 {
            return Err(Error::invalid("negative rate"));
        }
        Ok(DVector::from_iterator(
            self.n_th.len(),
            self.n_th.iter().zip(self.e).map(|(&n, &v)| self.model(q, n).0 - v),
        ))
    }

    fn jacobian(&self, q: &[f64]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.n_th.len(), 2);
        for (i, &n) in self.n_th.iter().enumerate() {
            let de_dr = self.model(q, n).1;
            j[(i, 0)] = de_dr * (n + 0.5);
            j[(i, 1)] = de_dr * n;
        }
        j
    }
}

/// Nonlinear fit of `E(n_th(T))` for γ₁⁰ and γ_φ⁰.
///
/// Starts from a linear fit of the per-point broadening (inverted from E)
/// against `n_th`, then refines on E directly.
pub fn fit_thermal(temps_k: &[f64], e: &[f64], gamma_a: f64, gamma_b: f64, omega_ge: f64) -> Result<ThermalFit> {
    if temps_k.len() != e.len() {
        return Err(Error::invalid("temperature and efficiency lengths differ"));
    }
    if temps_k.len() < 3 {
        return Err(Error::invalid("need at least three temperatures"));
    }
    if !(gamma_a > 0.0 && gamma_b > 0.0) {
        return Err(Error::invalid("couplings must be positive"));
    }
    let n_th: Vec<f64> = temps_k.iter().map(|&t| n_thermal(t, omega_ge)).collect::<Result<_>>()?;

    // Broadening r = n(γ₁+γ_φ) + γ₁/2; E depends on r only.
    let mut q0 = [0.1, 1.0];
    let r: Vec<f64> = e
        .iter()
        .map(|&v| gamma_phi_from_e(v.clamp(1e-6, 1.0), gamma_a, gamma_b).map(|g| g / MHZ))
        .collect::<Result<_>>()?;
    let a = DMatrix::from_fn(n_th.len(), 2, |i, j| if j == 0 { n_th[i] } else { 1.0 });
    if let Ok((sol, _)) = linear_lsq(&a, &DVector::from_vec(r), "thermal start") {
        let g1 = (2.0 * sol[1]).max(1e-3);
        q0 = [g1, (sol[0] - g1).max(1e-3)];
    }

    let prob = ThermalProblem::new(&n_th, e, gamma_a, gamma_b);
    let res = |q: &[f64]| prob.residual(q);
    let jac = |q: &[f64]| Ok(prob.jacobian(q));
    let out = levenberg_marquardt(&q0, res, jac, &LmOptions::default())?;
    let coefficients = ThermalCoefficients {
        gamma1_zero: out.params[0] * MHZ,
        gamma_phi_zero_per_photon: out.params[1] * MHZ,
    };
    let mut report = FitReport::from_outcome(
        &out,
        &[("gamma1_zero", "rad/s"), ("gamma_phi_zero_per_photon", "rad/s")],
        &[coefficients.gamma1_zero, coefficients.gamma_phi_zero_per_photon],
        &[MHZ, MHZ],
    );
    let (lo, hi) = e
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if hi - lo < 1e-6 {
        report.flag("gamma_phi_zero_per_photon unidentifiable: efficiency does not vary with temperature");
    }
    if !out.converged {
        report.flag("thermal fit did not converge");
    }
    Ok(ThermalFit { coefficients, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationFit {
    pub params: SaturationParams,
    pub report: FitReport,
}

/// `(n^c/d, ln n · n^c/d)` in coordinates `[a, b, c, ln d]`.
fn saturation_terms(q: &[f64], n: f64) -> (f64, f64) {
    if n > 0.0 {
        let ln = n.ln();
        let t = (q[2] * ln - q[3]).exp();
        (t, ln * t)
    } else {
        (0.0, 0.0)
    }
}

fn saturation_residual(n_avg: &[f64], magnitude: &[f64], q: &[f64]) -> Result<DVector<f64>> {
    if !(q[2] > 0.0) {
        return Err(Error::invalid("exponent must be positive"));
    }
    Ok(DVector::from_iterator(
        n_avg.len(),
        n_avg
            .iter()
            .zip(magnitude)
            .map(|(&n, &y)| q[0] - q[1] / (1.0 + saturation_terms(q, n).0) - y),
    ))
}

fn saturation_jacobian(n_avg: &[f64], q: &[f64]) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(n_avg.len(), 4);
    for (i, &n) in n_avg.iter().enumerate() {
        let (t, lt) = saturation_terms(q, n);
        let den = 1.0 + t;
        j[(i, 0)] = 1.0;
        j[(i, 1)] = -1.0 / den;
        j[(i, 2)] = q[1] * lt / (den * den);
        j[(i, 3)] = -q[1] * t / (den * den);
    }
    j
}

/// Fit of `a − b/(1 + n^c/d)` to magnitudes versus mean photon number.
pub fn fit_saturation(n_avg: &[f64], magnitude: &[f64]) -> Result<SaturationFit> {
    let m = n_avg.len();
    if m != magnitude.len() {
        return Err(Error::invalid("photon number and magnitude lengths differ"));
    }
    if m < 4 {
        return Err(Error::invalid("need at least four photon-number points"));
    }
    if n_avg.iter().any(|&n| !(n >= 0.0)) {
        return Err(Error::invalid("photon numbers must be non-negative"));
    }
    let positive: Vec<f64> = n_avg.iter().copied().filter(|&n| n > 0.0).collect();
    let nmin = positive.iter().copied().fold(f64::INFINITY, f64::min);
    let nmax = positive.iter().copied().fold(0.0, f64::max);
    if !(nmax >= 100.0 * nmin) {
        return Err(Error::invalid("photon numbers must span at least two decades"));
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| n_avg[i].total_cmp(&n_avg[j]));
    let low = magnitude[order[0]];
    let high = magnitude[order[m - 1]];
    let mid = 0.5 * (low + high);
    // first sample past the midpoint sets the scale d (for c = 1, f(d) is the midpoint)
    let d0 = order
        .iter()
        .find(|&&i| (magnitude[i] - low).abs() >= (mid - low).abs())
        .map(|&i| n_avg[i].max(nmin))
        .unwrap_or((nmin * nmax).sqrt());
    let q0 = [high, high - low, 1.0, d0.ln()];

    let res = |q: &[f64]| saturation_residual(n_avg, magnitude, q);
    let jac = |q: &[f64]| Ok(saturation_jacobian(n_avg, q));
    let out = levenberg_marquardt(&q0, res, jac, &LmOptions::default())?;
    let q = &out.params;
    let params = SaturationParams {
        a: q[0],
        b: q[1],
        c: q[2],
        d: q[3].exp(),
    };
    let mut report = FitReport::from_outcome(
        &out,
        &[("a", "1"), ("b", "1"), ("c", "1"), ("d", "photons")],
        &[params.a, params.b, params.c, params.d],
        &[1.0, 1.0, 1.0, params.d],
    );
    let scale = magnitude.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-300);
    if params.b.abs() < 1e-6 * scale {
        report.flag("c and d unidentifiable: no saturation step in the data");
    }
    if !out.converged {
        report.flag("saturation fit did not converge");
    }
    Ok(SaturationFit { params, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::lm::numeric_jacobian;
    use crate::model::{efficiency_resonant, efficiency_thermal, saturation_curve};
    use crate::units::GHZ;

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (0..a.ncols())
            .map(|c| (a.column(c) - b.column(c)).norm() / b.column(c).norm().max(1e-300))
            .fold(0.0, f64::max)
    }

    #[test]
    fn jacobians_match_central_differences() {
        let n_th: Vec<f64> = (0..20).map(|k| 0.01 * k as f64).collect();
        let e: Vec<f64> = n_th.iter().map(|n| 0.9 - n).collect();
        let prob = ThermalProblem::new(&n_th, &e, 1.82 * MHZ, 2.31 * MHZ);
        let q = [0.31, 9.7];
        let num = numeric_jacobian(&q, |q| prob.residual(q), &[1e-6; 2]).unwrap();
        assert!(rel_err(&prob.jacobian(&q), &num) < 1e-5);

        let n: Vec<f64> = (0..25).map(|k| 10f64.powf(-2.0 + 0.25 * k as f64)).collect();
        let y: Vec<f64> = n.iter().map(|x| 0.4 + 0.01 * x.ln()).collect();
        let q = [0.98, 0.45, 1.1, 0.7];
        let num = numeric_jacobian(&q, |q| saturation_residual(&n, &y, q), &[1e-6; 4]).unwrap();
        assert!(rel_err(&saturation_jacobian(&n, &q), &num) < 1e-5);
    }

    #[test]
    fn polynomial_recovery() {
        let truth = Quadratic {
            c2: -1.29,
            c1: -0.025,
            c0: 0.82,
        };
        let ib: Vec<f64> = (0..23).map(|k| -0.55 + 0.05 * k as f64).collect();
        let e: Vec<f64> = ib.iter().map(|&x| truth.eval(x)).collect();
        let q = fit_e_polynomial(&ib, &e).unwrap();
        assert!((q.c2 - truth.c2).abs() < 1e-12);
        assert!((q.c1 - truth.c1).abs() < 1e-12);
        assert!((q.c0 - truth.c0).abs() < 1e-12);
        let flat = fit_e_polynomial(&ib, &vec![0.7; ib.len()]).unwrap();
        assert!(flat.c2.abs() < 1e-12 && flat.c1.abs() < 1e-12);
        assert!((flat.c0 - 0.7).abs() < 1e-12);
        assert!(fit_e_polynomial(&[0.1, 0.1, 0.1], &[0.5, 0.6, 0.7]).is_err());
        assert!(fit_e_polynomial(&[0.1, 0.2], &[0.5, 0.6]).is_err());
    }

    #[test]
    fn gamma_phi_inversion() {
        assert_eq!(gamma_phi_from_e(1.0, 1.0, 2.0).unwrap(), 0.0);
        assert!((gamma_phi_from_e(0.25, 3.0, 3.0).unwrap() - 3.0).abs() < 1e-12);
        let g = gamma_phi_from_e(0.82, 1.82 * MHZ, 2.31 * MHZ).unwrap();
        assert!((g / MHZ - 0.2125).abs() < 1e-3, "{}", g / MHZ);
        assert_eq!(gamma_phi_from_e(1.02, 1.0, 2.0).unwrap(), 0.0);
        assert!(gamma_phi_from_e(1.2, 1.0, 2.0).is_err());
        assert!(gamma_phi_from_e(0.0, 1.0, 2.0).is_err());
        for k in 0..50 {
            let gphi = 5.0 * 2.31 * k as f64 / 49.0;
            let e = efficiency_resonant(gphi, 1.82, 2.31).unwrap();
            let back = gamma_phi_from_e(e, 1.82, 2.31).unwrap();
            assert!((back - gphi).abs() < 1e-9 * (1.0 + gphi));
        }
    }

    fn flux_data(s_i: f64, g0: f64, flux: &FluxModel) -> (Vec<f64>, Vec<f64>) {
        let ib: Vec<f64> = (0..12).map(|k| -0.55 + 0.1 * k as f64).collect();
        let g = ib
            .iter()
            .map(|&x| PI * (flux.slope(x) * 1e3).powi(2) * s_i + g0)
            .collect();
        (ib, g)
    }

    #[test]
    fn flux_noise_recovery() {
        let flux = FluxModel::reference_device();
        let (ib, g) = flux_data(3e-19, 0.2 * MHZ, &flux);
        let f = fit_flux_noise(&ib, &g, &flux).unwrap();
        assert!((f.s_i / 3e-19 - 1.0).abs() < 1e-9);
        assert!((f.gamma_phi_0 / (0.2 * MHZ) - 1.0).abs() < 1e-9);
        // 0.5 mA point from the stated coefficients
        let at = PI * (flux.slope(0.5) * 1e3).powi(2) * 3e-19 + 0.2 * MHZ;
        assert!((at / MHZ - 0.934).abs() < 2e-3, "{}", at / MHZ);

        let (ib, g) = flux_data(0.0, 0.2 * MHZ, &flux);
        let f = fit_flux_noise(&ib, &g, &flux).unwrap();
        assert!(f.s_i.abs() < 1e-30);

        // slope contribution at fixed bias scales with curvature squared
        let steep = FluxModel {
            curvature: 2.0 * flux.curvature,
            ..flux
        };
        let (ib, g) = flux_data(3e-19, 0.0, &flux);
        let (_, g2) = flux_data(3e-19, 0.0, &steep);
        assert!((g2[0] / g[0] - 4.0).abs() < 1e-12);
        assert!((fit_flux_noise(&ib, &g2, &steep).unwrap().s_i / 3e-19 - 1.0).abs() < 1e-9);

        assert!(matches!(
            fit_flux_noise(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0], &flux),
            Err(Error::Unidentifiable(_))
        ));
    }

    fn temps() -> Vec<f64> {
        (0..41).map(|k| 0.010 + 0.006 * k as f64).collect()
    }

    #[test]
    fn thermal_recovery_noiseless() {
        let tc = ThermalCoefficients {
            gamma1_zero: 0.26 * MHZ,
            gamma_phi_zero_per_photon: 10.38 * MHZ,
        };
        let w = 6.163 * GHZ;
        let t = temps();
        let e: Vec<f64> = t
            .iter()
            .map(|&t| efficiency_thermal(n_thermal(t, w).unwrap(), 1.81 * MHZ, 2.32 * MHZ, &tc).unwrap())
            .collect();
        let f = fit_thermal(&t, &e, 1.81 * MHZ, 2.32 * MHZ, w).unwrap();
        assert!(f.report.converged);
        assert!((f.coefficients.gamma1_zero / tc.gamma1_zero - 1.0).abs() < 1e-6);
        assert!((f.coefficients.gamma_phi_zero_per_photon / tc.gamma_phi_zero_per_photon - 1.0).abs() < 1e-6);
        assert!(f.coefficients.gamma_phi_zero_per_photon > 10.0 * f.coefficients.gamma1_zero);
    }

    #[test]
    fn thermal_flat_data_is_flagged() {
        let t = temps();
        let f = fit_thermal(&t, &vec![1.0; t.len()], 1.81 * MHZ, 2.32 * MHZ, 6.163 * GHZ).unwrap();
        assert!(!f.report.flags.is_empty());
    }

    #[test]
    fn saturation_recovery() {
        let truth = SaturationParams {
            a: 1.0,
            b: 0.44,
            c: 1.0,
            d: 3.0,
        };
        let n: Vec<f64> = (0..40).map(|k| 10f64.powf(-2.0 + 5.0 * k as f64 / 39.0)).collect();
        let y: Vec<f64> = n.iter().map(|&x| saturation_curve(x, &truth)).collect();
        let f = fit_saturation(&n, &y).unwrap();
        assert!((f.params.c - 1.0).abs() < 1e-6);
        assert!((f.params.d / 3.0 - 1.0).abs() < 1e-6);
        assert!((f.params.a - 1.0).abs() < 1e-8);

        let flat = fit_saturation(&n, &vec![0.8; n.len()]).unwrap();
        assert!((flat.params.a - 0.8).abs() < 1e-9);
        assert!(!flat.report.flags.is_empty());

        assert!(fit_saturation(&[1.0, 2.0, 3.0, 4.0], &[1.0; 4]).is_err());
    }
}
