use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::lm::{levenberg_marquardt, LmOptions};
use crate::units::hz_to_angular;
use crate::C64;

/// Resonance circle of a complex transmission trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleFitResult {
    /// rad/s
    pub omega_res: f64,
    /// Loaded full width at half maximum, rad/s.
    pub kappa_loaded: f64,
    /// Circle diameter relative to the off-resonant background magnitude.
    pub diameter: f64,
    /// Off-resonant point of the circle.
    pub background: C64,
    pub center: C64,
    pub radius: f64,
    /// Angle swept around the center over the scan (rad).
    pub arc_coverage: f64,
}

/// Algebraic (Kåsa) fit refined geometrically, followed by a fit of the
/// angle around the center to `θ₀ ± 2·atan(2(ω − ω_res)/κ_L)`.
pub fn circle_fit(trace: &[C64], freqs_hz: &[f64]) -> Result<CircleFitResult> {
    let n = trace.len();
    if n != freqs_hz.len() {
        return Err(Error::invalid("trace and grid lengths differ"));
    }
    if n < 5 {
        return Err(Error::FitFailure("circle fit needs at least 5 points".into()));
    }

    // Normalize the data cloud for conditioning.
    let mean = trace.iter().sum::<C64>() / n as f64;
    let scale = (trace.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / n as f64).sqrt();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::FitFailure("all points coincide".into()));
    }
    let pts: Vec<C64> = trace.iter().map(|z| (z - mean) / scale).collect();

    let (c0, r0) = kasa(&pts)?;
    let (center_n, radius_n) = refine_circle(&pts, c0, r0)?;

    let angles = crate::calibration::unwrap(&pts.iter().map(|z| (z - center_n).arg()).collect::<Vec<_>>());
    let lo = angles.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = angles.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let arc = hi - lo;
    if arc < PI * (1.0 - 1e-9) {
        return Err(Error::FitFailure(format!(
            "trace covers {:.3} rad of the resonance circle, need at least π",
            arc
        )));
    }

    let omegas: Vec<f64> = freqs_hz.iter().map(|&f| hz_to_angular(f)).collect();
    let (theta0, omega_res, kappa) = phase_fit(&omegas, &angles)?;

    let center = mean + center_n * scale;
    let radius = radius_n * scale;
    let background = center - C64::from_polar(radius, theta0);
    let bg = background.norm();
    Ok(CircleFitResult {
        omega_res,
        kappa_loaded: kappa,
        diameter: if bg > 0.0 { 2.0 * radius / bg } else { f64::INFINITY },
        background,
        center,
        radius,
        arc_coverage: arc,
    })
}

/// Linear least squares for `x² + y² + Dx + Ey + F = 0`.
fn kasa(pts: &[C64]) -> Result<(C64, f64)> {
    let a = DMatrix::from_fn(pts.len(), 3, |i, j| match j {
        0 => pts[i].re,
        1 => pts[i].im,
        _ => 1.0,
    });
    let b = DVector::from_iterator(pts.len(), pts.iter().map(|z| -z.norm_sqr()));
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(Error::FitFailure("points are collinear".into()));
    }
    let sol = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::FitFailure(format!("algebraic circle fit: {e}")))?;
    let c = C64::new(-0.5 * sol[0], -0.5 * sol[1]);
    let r2 = c.norm_sqr() - sol[2];
    if !(r2 > 0.0) || r2.sqrt() > 1e6 {
        return Err(Error::FitFailure("points are collinear".into()));
    }
    Ok((c, r2.sqrt()))
}

/// Minimizes Σ(|z − c| − r)².
fn refine_circle(pts: &[C64], c0: C64, r0: f64) -> Result<(C64, f64)> {
    let res = |p: &[f64]| {
        let c = C64::new(p[0], p[1]);
        Ok(DVector::from_iterator(
            pts.len(),
            pts.iter().map(|z| (z - c).norm() - p[2]),
        ))
    };
    let jac = |p: &[f64]| {
        let c = C64::new(p[0], p[1]);
        let mut j = DMatrix::zeros(pts.len(), 3);
        for (i, z) in pts.iter().enumerate() {
            let d = z - c;
            let m = d.norm().max(1e-300);
            j[(i, 0)] = -d.re / m;
            j[(i, 1)] = -d.im / m;
            j[(i, 2)] = -1.0;
        }
        Ok(j)
    };
    let out = levenberg_marquardt(&[c0.re, c0.im, r0], res, jac, &LmOptions::default())?;
    Ok((C64::new(out.params[0], out.params[1]), out.params[2].abs()))
}

/// Fits `θ(ω) = θ₀ + s·2·atan(2(ω − ω₀)/κ)` with `s = ±1` from the sweep direction.
fn phase_fit(omegas: &[f64], angles: &[f64]) -> Result<(f64, f64, f64)> {
    let n = omegas.len();
    let w_lo = omegas[0];
    let w_hi = omegas[n - 1];
    let mid = 0.5 * (w_lo + w_hi);
    let half = 0.5 * (w_hi - w_lo);
    if !(half > 0.0) {
        return Err(Error::invalid("frequency grid has zero span"));
    }
    let x: Vec<f64> = omegas.iter().map(|w| (w - mid) / half).collect();
    let s = if angles[n - 1] >= angles[0] { 1.0 } else { -1.0 };

    let target = 0.5 * (angles[0] + angles[n - 1]);
    let i0 = (0..n)
        .min_by(|&a, &b| (angles[a] - target).abs().total_cmp(&(angles[b] - target).abs()))
        .unwrap();
    let max_slope = x
        .windows(2)
        .zip(angles.windows(2))
        .map(|(xw, aw)| ((aw[1] - aw[0]) / (xw[1] - xw[0])).abs())
        .fold(0.0, f64::max);
    if !(max_slope > 0.0) {
        return Err(Error::FitFailure("angle does not vary over the scan".into()));
    }
    let p0 = [angles[i0], x[i0], 4.0 / max_slope];

    let res = |p: &[f64]| {
        if !(p[2] > 0.0) {
            return Err(Error::invalid("non-positive width"));
        }
        Ok(DVector::from_iterator(
            n,
            x.iter()
                .zip(angles)
                .map(|(&xi, &a)| p[0] + s * 2.0 * (2.0 * (xi - p[1]) / p[2]).atan() - a),
        ))
    };
    let jac = |p: &[f64]| {
        let mut j = DMatrix::zeros(n, 3);
        for (i, &xi) in x.iter().enumerate() {
            let u = 2.0 * (xi - p[1]) / p[2];
            let g = s * 2.0 / (1.0 + u * u);
            j[(i, 0)] = 1.0;
            j[(i, 1)] = g * (-2.0 / p[2]);
            j[(i, 2)] = g * (-u / p[2]);
        }
        Ok(j)
    };
    let out = levenberg_marquardt(&p0, res, jac, &LmOptions::default())?;
    let (theta0, x0, k) = (out.params[0], out.params[1], out.params[2]);
    if !(-1.0..=1.0).contains(&x0) {
        return Err(Error::FitFailure(
            "fitted resonance lies outside the scanned span".into(),
        ));
    }
    Ok((theta0, mid + x0 * half, k * half))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{t_through, CellParams, Waveguide};
    use crate::units::{angular_to_hz, MHZ};

    fn trace(p: &CellParams, wg: Waveguide, span: f64, n: usize) -> (Vec<f64>, Vec<C64>) {
        let f0 = angular_to_hz(p.omega_ge);
        let freqs: Vec<f64> = (0..n).map(|k| f0 + span * (k as f64 / (n - 1) as f64 - 0.5)).collect();
        let tr = freqs
            .iter()
            .map(|&f| t_through(wg, hz_to_angular(f), p).unwrap())
            .collect();
        (freqs, tr)
    }

    #[test]
    fn perfect_circle_exact() {
        let p = CellParams::reference_device();
        let (f, tr) = trace(&p, Waveguide::A, 60e6, 301);
        let r = circle_fit(&tr, &f).unwrap();
        let kappa = 2.0 * (p.gamma_a + p.gamma_b);
        // center 1 − Γ_A e^{iφ_A}/κ_L, radius Γ_A/κ_L
        let center = C64::new(1.0, 0.0) - C64::from_polar(p.gamma_a / kappa, p.phi_a);
        assert!((r.center - center).norm() < 1e-10, "{} vs {center}", r.center);
        assert!((r.radius - p.gamma_a / kappa).abs() < 1e-10);
        assert!((r.kappa_loaded / kappa - 1.0).abs() < 1e-9);
        assert!((r.omega_res - p.omega_ge).abs() < 1e-6 * MHZ);
        assert!((r.background - 1.0).norm() < 1e-9);
    }

    #[test]
    fn reference_linewidth_within_half_percent() {
        let p = CellParams::reference_device();
        for wg in [Waveguide::A, Waveguide::B] {
            let (f, tr) = trace(&p, wg, 40e6, 201);
            let r = circle_fit(&tr, &f).unwrap();
            assert!((r.kappa_loaded / (8.26 * MHZ) - 1.0).abs() < 5e-3);
        }
    }

    #[test]
    fn invariant_under_complex_rescaling() {
        let p = CellParams::reference_device().with_dephasing(0.3 * MHZ);
        let (f, tr) = trace(&p, Waveguide::A, 40e6, 201);
        let a = circle_fit(&tr, &f).unwrap();
        let k = C64::from_polar(0.03, 2.2);
        let scaled: Vec<C64> = tr.iter().map(|z| z * k).collect();
        let b = circle_fit(&scaled, &f).unwrap();
        assert!((a.kappa_loaded / b.kappa_loaded - 1.0).abs() < 1e-3);
        assert!((a.diameter - b.diameter).abs() < 1e-9);
    }

    #[test]
    fn collinear_and_short_arc_fail() {
        let f: Vec<f64> = (0..20).map(|k| 6e9 + k as f64 * 1e5).collect();
        let line: Vec<C64> = (0..20).map(|k| C64::new(k as f64, 2.0 * k as f64)).collect();
        assert!(matches!(circle_fit(&line, &f), Err(Error::FitFailure(_))));
        let p = CellParams::reference_device();
        // far wing only: a small arc
        let f0 = angular_to_hz(p.omega_ge) + 30e6;
        let fw: Vec<f64> = (0..50).map(|k| f0 + k as f64 * 1e5).collect();
        let tw: Vec<C64> = fw
            .iter()
            .map(|&x| t_through(Waveguide::A, hz_to_angular(x), &p).unwrap())
            .collect();
        assert!(matches!(circle_fit(&tw, &fw), Err(Error::FitFailure(_))));
    }
}
