use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{BOLTZMANN, HBAR, MHZ};

/// Quadratic tuning of the emitter frequency with bias current.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxModel {
    /// rad/s per mA².
    pub curvature: f64,
    /// rad/s per mA.
    pub linear: f64,
    /// Emitter frequency at zero bias (rad/s).
    pub sweet_spot_omega: f64,
}

impl FluxModel {
    /// −2π·352 MHz/mA² around 2π·6.163 GHz.
    pub fn reference_device() -> Self {
        Self {
            curvature: -352.0 * MHZ,
            linear: 0.0,
            sweet_spot_omega: 6163.0 * MHZ,
        }
    }

    /// dω_ge/dI_b in rad/s per mA.
    pub fn slope(&self, ib_ma: f64) -> f64 {
        self.linear + 2.0 * self.curvature * ib_ma
    }
}

/// `sweet_spot_omega + linear·ib + curvature·ib²` with `ib` in mA.
pub fn omega_ge_of_bias(ib_ma: f64, f: &FluxModel) -> f64 {
    f.sweet_spot_omega + f.linear * ib_ma + f.curvature * ib_ma * ib_ma
}

/// Bose–Einstein occupation `1/(exp(ħω/k_BT) − 1)`.
pub fn n_thermal(temperature_k: f64, omega: f64) -> Result<f64> {
    if !(temperature_k > 0.0) {
        return Err(Error::invalid("temperature must be positive"));
    }
    if !(omega > 0.0) {
        return Err(Error::invalid("frequency must be positive"));
    }
    let x = HBAR * omega / (BOLTZMANN * temperature_k);
    Ok(1.0 / x.exp_m1())
}

/// Per-thermal-photon rate coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalCoefficients {
    /// γ₁⁰: relaxation, Γ_bath = (2n_th + 1)γ₁⁰.
    pub gamma1_zero: f64,
    /// γ_φ⁰: dephasing per thermal photon, Γ_φ = n_th γ_φ⁰.
    pub gamma_phi_zero_per_photon: f64,
}

impl ThermalCoefficients {
    /// Effective broadening `Γ_φ + Γ_bath/2 = n_th(γ₁⁰ + γ_φ⁰) + γ₁⁰/2`.
    pub fn broadening(&self, n_th: f64) -> f64 {
        n_th * (self.gamma1_zero + self.gamma_phi_zero_per_photon) + 0.5 * self.gamma1_zero
    }
}

/// Resonant efficiency with thermally activated dephasing and bath loss.
pub fn efficiency_thermal(n_th: f64, gamma_a: f64, gamma_b: f64, tc: &ThermalCoefficients) -> Result<f64> {
    if !(n_th >= 0.0) {
        return Err(Error::invalid("thermal photon number must be non-negative"));
    }
    if gamma_a <= 0.0 || gamma_b <= 0.0 {
        return Err(Error::invalid("couplings must be positive"));
    }
    let r = tc.broadening(n_th);
    Ok(1.0 / (1.0 + r * (1.0 / gamma_a + 1.0 / gamma_b) + r * r / (gamma_a * gamma_b)))
}

/// Mean photon number of a rectangular pulse: `(A²/2Z)·τ / ħω`.
pub fn photons_in_pulse(amplitude_v: f64, impedance_ohm: f64, duration_s: f64, omega: f64) -> Result<f64> {
    if !(amplitude_v >= 0.0) {
        return Err(Error::invalid("amplitude must be non-negative"));
    }
    if !(impedance_ohm > 0.0 && duration_s > 0.0 && omega > 0.0) {
        return Err(Error::invalid("impedance, duration and frequency must be positive"));
    }
    let power = amplitude_v * amplitude_v / (2.0 * impedance_ohm);
    Ok(power * duration_s / (HBAR * omega))
}

/// Phenomenological saturation curve `a − b / (1 + n^c / d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

pub fn saturation_curve(n_avg: f64, s: &SaturationParams) -> f64 {
    s.a - s.b / (1.0 + n_avg.powf(s.c) / s.d)
}

/// Field–emitter couplings for the dressed-state lines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DressedModel {
    pub lambda_red: f64,
    pub lambda_blue: f64,
    pub omega_ge: f64,
    pub omega_ef: f64,
}

impl DressedModel {
    /// Λ_red = 2π·0.81 MHz, Λ_blue = 2π·0.39 MHz at the sweet spot.
    pub fn reference_device() -> Self {
        Self {
            lambda_red: 0.81 * MHZ,
            lambda_blue: 0.39 * MHZ,
            omega_ge: 6163.0 * MHZ,
            omega_ef: 6015.0 * MHZ,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinePair {
    pub red: f64,
    pub blue: f64,
}

/// Red/blue shifted lines of both transitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DressedLines {
    pub ge: LinePair,
    pub ef: LinePair,
}

/// Dressed splitting `Ω_D = √((ω − ω_ge)² + 4Λ²N)`.
fn splitting(detuning: f64, lambda: f64, n: f64) -> f64 {
    (detuning * detuning + 4.0 * lambda * lambda * n).sqrt()
}

/// Lines `ω_x − Ω_D(Λ_red)/2` and `ω_x + Ω_D(Λ_blue)/2` for `x ∈ {ge, ef}`.
pub fn dressed_lines(omega_drive: f64, n_photons: f64, m: &DressedModel) -> Result<DressedLines> {
    if !(n_photons >= 0.0) {
        return Err(Error::invalid("photon number must be non-negative"));
    }
    let det = omega_drive - m.omega_ge;
    let half_red = 0.5 * splitting(det, m.lambda_red, n_photons);
    let half_blue = 0.5 * splitting(det, m.lambda_blue, n_photons);
    let pair = |base: f64| LinePair {
        red: base - half_red,
        blue: base + half_blue,
    };
    Ok(DressedLines {
        ge: pair(m.omega_ge),
        ef: pair(m.omega_ef),
    })
}
