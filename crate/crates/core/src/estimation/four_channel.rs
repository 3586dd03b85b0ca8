use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lm::{levenberg_marquardt, LmOptions};
use super::FitReport;
use crate::error::{Error, Result};
use crate::model::CellParams;
use crate::spectrum::{Channel, ChannelSpectrum};
use crate::units::MHZ;
use crate::C64;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Names and units of the four-channel fit parameters, in report order.
pub const FOUR_CHANNEL_PARAMS: [(&str, &str); 5] = [
    ("gamma_a", "rad/s"),
    ("gamma_b", "rad/s"),
    ("omega_ge", "rad/s"),
    ("phi_a", "rad"),
    ("phi_b", "rad"),
];

// Optimizer coordinates: [Γ_A/u, Γ_B/u, (ω_ge − ω_ref)/u, φ_A, φ_B], u = 2π·1 MHz.
const U: f64 = MHZ;

fn to_params(q: &[f64], omega_ref: f64, base: &CellParams) -> CellParams {
    CellParams {
        gamma_a: q[0] * U,
        gamma_b: q[1] * U,
        omega_ge: omega_ref + q[2] * U,
        phi_a: q[3],
        phi_b: q[4],
        ..*base
    }
}

fn in_domain(q: &[f64]) -> bool {
    q[0] > 0.0 && q[1] > 0.0 && q[3].abs() < FRAC_PI_2 && q[4].abs() < FRAC_PI_2 && q.iter().all(|x| x.is_finite())
}

/// Stacked `[Re, Im]` residuals `model − data`, frequency-major, channels in
/// [`Channel::ALL`] order.
pub fn four_channel_residuals(data: &ChannelSpectrum, p: &CellParams) -> Result<DVector<f64>> {
    let mut r = DVector::zeros(8 * data.len());
    for (i, w) in data.omegas().into_iter().enumerate() {
        let model = crate::model::coefficients(w, p)?.to_array();
        for (c, (m, d)) in model.iter().zip(data.at(i)).enumerate() {
            let e = m - d;
            r[8 * i + 2 * c] = e.re;
            r[8 * i + 2 * c + 1] = e.im;
        }
    }
    Ok(r)
}

/// Analytic Jacobian of [`four_channel_residuals`] with respect to
/// `(Γ_A, Γ_B, ω_ge, φ_A, φ_B)` in physical units.
pub fn four_channel_jacobian(omegas: &[f64], p: &CellParams) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(8 * omegas.len(), 5);
    let (ga, gb) = (p.gamma_a, p.gamma_b);
    let ea = C64::from_polar(1.0, p.phi_a);
    let eb = C64::from_polar(1.0, p.phi_b);
    let g = (ga * gb).sqrt();
    let epsi = C64::from_polar(1.0, 0.5 * (p.phi_a + p.phi_b));
    let width = ga + gb + p.broadening();
    for (i, &w) in omegas.iter().enumerate() {
        let d = C64::new(w - p.omega_ge, width);
        let d2 = d * d;
        let tx = I * g * epsi / d;
        let rows: [[C64; 5]; 3] = [
            // t_AA
            [
                -I * ea / d - ga * ea / d2,
                -ga * ea / d2,
                -I * ga * ea / d2,
                ga * ea / d,
                C64::new(0.0, 0.0),
            ],
            // t_BB
            [
                -gb * eb / d2,
                -I * eb / d - gb * eb / d2,
                -I * gb * eb / d2,
                C64::new(0.0, 0.0),
                gb * eb / d,
            ],
            // t_AB = t_BA
            [
                I * epsi * (g / (2.0 * ga)) / d + g * epsi / d2,
                I * epsi * (g / (2.0 * gb)) / d + g * epsi / d2,
                I * g * epsi / d2,
                0.5 * I * tx,
                0.5 * I * tx,
            ],
        ];
        for (c, row) in [&rows[0], &rows[1], &rows[2], &rows[2]].into_iter().enumerate() {
            for (k, z) in row.iter().enumerate() {
                j[(8 * i + 2 * c, k)] = z.re;
                j[(8 * i + 2 * c + 1, k)] = z.im;
            }
        }
    }
    j
}

/// Simultaneous complex fit of all four calibrated channels for
/// Γ_A, Γ_B, ω_ge, φ_A, φ_B. Dephasing and bath rates are held at `init`.
pub fn fit_four_channel(calibrated: &ChannelSpectrum, init: &CellParams) -> Result<FitReport> {
    init.validate()?;
    let omega_ref = init.omega_ge;
    let q0 = [init.gamma_a / U, init.gamma_b / U, 0.0, init.phi_a, init.phi_b];
    let omegas = calibrated.omegas();
    let res = |q: &[f64]| {
        if !in_domain(q) {
            return Err(Error::invalid("outside parameter bounds"));
        }
        four_channel_residuals(calibrated, &to_params(q, omega_ref, init))
    };
    let jac = |q: &[f64]| {
        let mut j = four_channel_jacobian(&omegas, &to_params(q, omega_ref, init));
        for col in 0..3 {
            j.column_mut(col).scale_mut(U);
        }
        Ok(j)
    };
    let out = levenberg_marquardt(&q0, res, jac, &LmOptions::default())?;
    let p = to_params(&out.params, omega_ref, init);
    let mut report = FitReport::from_outcome(
        &out,
        &FOUR_CHANNEL_PARAMS,
        &[p.gamma_a, p.gamma_b, p.omega_ge, p.phi_a, p.phi_b],
        &[U, U, U, 1.0, 1.0],
    );
    let span = omegas[omegas.len() - 1] - omegas[0];
    if span < 3.0 * 2.0 * (p.gamma_a + p.gamma_b) {
        report.flag("scan spans fewer than three loaded linewidths");
    }
    if !out.converged {
        report.flag("four-channel fit did not converge");
    }
    Ok(report)
}

impl FitReport {
    /// Cell parameters from a four-channel report, other fields from `base`.
    pub fn cell_params(&self, base: &CellParams) -> CellParams {
        CellParams {
            gamma_a: self.value("gamma_a"),
            gamma_b: self.value("gamma_b"),
            omega_ge: self.value("omega_ge"),
            phi_a: self.value("phi_a"),
            phi_b: self.value("phi_b"),
            ..*base
        }
    }
}

/// Starting point read off calibrated data: resonance at the cross-channel
/// peak, total coupling from its half-power width, split by the depths of
/// the two through dips. Phases start at zero.
pub fn initial_guess(calibrated: &ChannelSpectrum) -> Result<CellParams> {
    let omegas = calibrated.omegas();
    let n = omegas.len();
    if n < 3 {
        return Err(Error::invalid("need at least three frequency points"));
    }
    let power: Vec<f64> = (0..n)
        .map(|i| {
            let v = calibrated.at(i);
            0.5 * (v[2].norm_sqr() + v[3].norm_sqr())
        })
        .collect();
    let k = (0..n).max_by(|&a, &b| power[a].total_cmp(&power[b])).unwrap();
    let half = 0.5 * power[k];
    let cross_at = |i0: usize, i1: usize| {
        let t = (half - power[i0]) / (power[i1] - power[i0]);
        omegas[i0] + t * (omegas[i1] - omegas[i0])
    };
    let left = (0..k).rev().find(|&i| power[i] <= half).map(|i| cross_at(i, i + 1));
    let right = (k + 1..n).find(|&i| power[i] <= half).map(|i| cross_at(i - 1, i));
    let fwhm = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (omegas[k] - l),
        (None, Some(r)) => 2.0 * (r - omegas[k]),
        (None, None) => 0.25 * (omegas[n - 1] - omegas[0]),
    };
    let total = 0.5 * fwhm;
    let depth = |ch: Channel| (1.0 - calibrated.trace(ch)[k].re).max(1e-3);
    let (da, db) = (depth(Channel::AA), depth(Channel::BB));
    Ok(CellParams::new(
        total * da / (da + db),
        total * db / (da + db),
        omegas[k],
    ))
}

/// Calibration-free efficiency `t_AB·t_BA / (t_AA·t_BB)` of raw traces.
pub fn efficiency_trace(raw: &ChannelSpectrum) -> Result<Vec<C64>> {
    let floor = crate::calibration::DEFAULT_HD_FLOOR;
    let (aa, bb) = (raw.trace(Channel::AA), raw.trace(Channel::BB));
    let bad: Vec<f64> = raw
        .freqs_hz()
        .iter()
        .enumerate()
        .filter(|&(i, _)| !(aa[i].norm() >= floor && bb[i].norm() >= floor))
        .map(|(_, &f)| f)
        .collect();
    if !bad.is_empty() {
        return Err(Error::DegenerateReference { floor, freqs_hz: bad });
    }
    let (ab, ba) = (raw.trace(Channel::AB), raw.trace(Channel::BA));
    Ok((0..raw.len()).map(|i| ab[i] * ba[i] / (aa[i] * bb[i])).collect())
}

/// Efficiency read at the sample nearest a resonance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonantEfficiency {
    /// Re E, used for dephasing reconstruction.
    pub value: f64,
    /// |Im E|, a diagnostic (zero for the model on resonance).
    pub imag_abs: f64,
    pub omega: f64,
}

pub fn resonant_efficiency(e: &[C64], freqs_hz: &[f64], omega_res: f64) -> Result<ResonantEfficiency> {
    if e.is_empty() || e.len() != freqs_hz.len() {
        return Err(Error::invalid(
            "efficiency trace and grid must be non-empty and of equal length",
        ));
    }
    let k = crate::spectrum::nearest_index(freqs_hz, crate::units::angular_to_hz(omega_res));
    Ok(ResonantEfficiency {
        value: e[k].re,
        imag_abs: e[k].im.abs(),
        omega: crate::units::hz_to_angular(freqs_hz[k]),
    })
}
