//! Closed-form steady-state scattering of the router cell.
//!
//! The emitter sits at the origin of both waveguides. With total coupling
//! `Σ = Γ_A + Γ_B` and extra broadening `γ = Γ_φ + Γ_bath/2` (the emitter
//! frequency is shifted to `ω_ge − iγ`), every coefficient shares the
//! denominator
//!
//! ```text
//! D(ω) = (ω − ω_ge) + i(Γ_A + Γ_B + γ)
//! ```
//!
//! Phenomenological coupling phases `φ_A`, `φ_B` multiply the couplings in
//! numerators only; the pole stays at `Σ + γ`.
//!
//! Cross coefficients carry no leading minus sign: [`t_cross`] is the
//! bracketed amplitude `i√(Γ_AΓ_B)e^{i(φ_A+φ_B)/2}/D`. The physical
//! wave amplitude in the other waveguide is its negative, which amounts to
//! a π phase reference on the B ports and does not change any magnitude.

mod extensions;

pub use extensions::{
    dressed_lines, efficiency_thermal, n_thermal, omega_ge_of_bias, photons_in_pulse, saturation_curve, DressedLines,
    DressedModel, FluxModel, LinePair, SaturationParams, ThermalCoefficients,
};

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::PortMatrix;
use crate::units::MHZ;
use crate::C64;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Physical parameters of the cell. All rates are angular (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    /// Emitter coupling to waveguide A (half width at half maximum).
    pub gamma_a: f64,
    /// Emitter coupling to waveguide B.
    pub gamma_b: f64,
    /// Coupling phase for waveguide A, radians.
    pub phi_a: f64,
    /// Coupling phase for waveguide B, radians.
    pub phi_b: f64,
    /// g–e transition frequency.
    pub omega_ge: f64,
    /// e–f transition frequency, when known.
    pub omega_ef: Option<f64>,
    /// Pure dephasing rate.
    pub gamma_phi: f64,
    /// Relaxation rate into the thermal bath.
    pub gamma_bath: f64,
}

impl CellParams {
    /// Lossless cell with real couplings.
    pub fn new(gamma_a: f64, gamma_b: f64, omega_ge: f64) -> Self {
        Self {
            gamma_a,
            gamma_b,
            phi_a: 0.0,
            phi_b: 0.0,
            omega_ge,
            omega_ef: None,
            gamma_phi: 0.0,
            gamma_bath: 0.0,
        }
    }

    /// Steady-state fit values of the reference device: Γ_A = 2π·1.82 MHz,
    /// Γ_B = 2π·2.31 MHz, ω_ge = 2π·6.163 GHz, φ_A = −0.06π, φ_B = 0.05π,
    /// ω_ef = 2π·6.015 GHz.
    pub fn reference_device() -> Self {
        Self {
            gamma_a: 1.82 * MHZ,
            gamma_b: 2.31 * MHZ,
            phi_a: -0.06 * std::f64::consts::PI,
            phi_b: 0.05 * std::f64::consts::PI,
            omega_ge: 6163.0 * MHZ,
            omega_ef: Some(6015.0 * MHZ),
            gamma_phi: 0.0,
            gamma_bath: 0.0,
        }
    }

    pub fn with_phases(mut self, phi_a: f64, phi_b: f64) -> Self {
        self.phi_a = phi_a;
        self.phi_b = phi_b;
        self
    }

    pub fn with_dephasing(mut self, gamma_phi: f64) -> Self {
        self.gamma_phi = gamma_phi;
        self
    }

    pub fn with_bath(mut self, gamma_bath: f64) -> Self {
        self.gamma_bath = gamma_bath;
        self
    }

    /// Total coupling Γ_A + Γ_B.
    pub fn total_coupling(&self) -> f64 {
        self.gamma_a + self.gamma_b
    }

    /// Extra broadening entering through the complex emitter frequency.
    pub fn broadening(&self) -> f64 {
        self.gamma_phi + 0.5 * self.gamma_bath
    }

    /// Loaded full linewidth 2(Γ_A + Γ_B + Γ_φ + Γ_bath/2).
    pub fn loaded_linewidth(&self) -> f64 {
        2.0 * (self.total_coupling() + self.broadening())
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("gamma_a", self.gamma_a),
            ("gamma_b", self.gamma_b),
            ("phi_a", self.phi_a),
            ("phi_b", self.phi_b),
            ("omega_ge", self.omega_ge),
            ("gamma_phi", self.gamma_phi),
            ("gamma_bath", self.gamma_bath),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} is not finite")));
            }
        }
        if let Some(w) = self.omega_ef {
            if !w.is_finite() {
                return Err(Error::invalid("omega_ef is not finite"));
            }
        }
        if self.gamma_a <= 0.0 || self.gamma_b <= 0.0 {
            return Err(Error::invalid("couplings gamma_a and gamma_b must be positive"));
        }
        if self.phi_a.abs() >= FRAC_PI_2 || self.phi_b.abs() >= FRAC_PI_2 {
            return Err(Error::invalid("coupling phases must satisfy |phi| < pi/2"));
        }
        if self.gamma_phi < 0.0 || self.gamma_bath < 0.0 {
            return Err(Error::invalid("gamma_phi and gamma_bath must be non-negative"));
        }
        Ok(())
    }

    /// Complex denominator shared by all coefficients.
    fn denominator(&self, omega: f64) -> C64 {
        C64::new(omega - self.omega_ge, self.total_coupling() + self.broadening())
    }

    fn coupling(&self, waveguide: Waveguide) -> C64 {
        match waveguide {
            Waveguide::A => C64::from_polar(self.gamma_a, self.phi_a),
            Waveguide::B => C64::from_polar(self.gamma_b, self.phi_b),
        }
    }

    fn cross_coupling(&self) -> C64 {
        C64::from_polar((self.gamma_a * self.gamma_b).sqrt(), 0.5 * (self.phi_a + self.phi_b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Waveguide {
    A,
    B,
}

/// Cross-channel direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossDirection {
    /// Input in waveguide A, output at B′.
    AB,
    /// Input in waveguide B, output at A′.
    BA,
}

/// All four cell coefficients at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellCoefficients {
    pub t_aa: C64,
    pub t_bb: C64,
    pub t_ab: C64,
    pub t_ba: C64,
}

impl CellCoefficients {
    /// Coefficients of a decoupled emitter: unit through, zero cross.
    pub fn transparent() -> Self {
        Self {
            t_aa: C64::new(1.0, 0.0),
            t_bb: C64::new(1.0, 0.0),
            t_ab: C64::new(0.0, 0.0),
            t_ba: C64::new(0.0, 0.0),
        }
    }

    /// In [`crate::Channel::ALL`] order.
    pub fn to_array(self) -> [C64; 4] {
        [self.t_aa, self.t_bb, self.t_ab, self.t_ba]
    }

    pub fn from_array(v: [C64; 4]) -> Self {
        Self {
            t_aa: v[0],
            t_bb: v[1],
            t_ab: v[2],
            t_ba: v[3],
        }
    }
}

fn check_omega(omega: f64) -> Result<()> {
    if omega.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("frequency is not finite"))
    }
}

/// Through transmission `1 − iΓ_x e^{iφ_x} / D` for waveguide `x`.
pub fn t_through(waveguide: Waveguide, omega: f64, p: &CellParams) -> Result<C64> {
    check_omega(omega)?;
    p.validate()?;
    Ok(1.0 - I * p.coupling(waveguide) / p.denominator(omega))
}

/// Cross transmission `i√(Γ_AΓ_B) e^{i(φ_A+φ_B)/2} / D`.
///
/// Both directions return the same value; the model is reciprocal.
pub fn t_cross(_direction: CrossDirection, omega: f64, p: &CellParams) -> Result<C64> {
    check_omega(omega)?;
    p.validate()?;
    Ok(I * p.cross_coupling() / p.denominator(omega))
}

/// Reflection back into the input port of waveguide `x`: `−iΓ_x e^{iφ_x} / D`.
pub fn reflection(waveguide: Waveguide, omega: f64, p: &CellParams) -> Result<C64> {
    check_omega(omega)?;
    p.validate()?;
    Ok(-I * p.coupling(waveguide) / p.denominator(omega))
}

/// The four transmission coefficients at `omega`.
pub fn coefficients(omega: f64, p: &CellParams) -> Result<CellCoefficients> {
    check_omega(omega)?;
    p.validate()?;
    let d = p.denominator(omega);
    let x = I * p.cross_coupling() / d;
    Ok(CellCoefficients {
        t_aa: 1.0 - I * p.coupling(Waveguide::A) / d,
        t_bb: 1.0 - I * p.coupling(Waveguide::B) / d,
        t_ab: x,
        t_ba: x,
    })
}

/// Port indices of the 4×4 cell matrix.
pub mod port {
    pub const A_IN: usize = 0;
    pub const A_OUT: usize = 1;
    pub const B_IN: usize = 2;
    pub const B_OUT: usize = 3;
}

/// Full 4×4 scattering matrix in port order (A-in, A-out, B-in, B-out).
///
/// `S[out][in]`: through entries are [`t_through`], every A↔B entry is
/// [`t_cross`] and same-waveguide back-scattering is [`reflection`]. With
/// real couplings and no dephasing or bath loss the matrix is unitary.
pub fn cell_smatrix(omega: f64, p: &CellParams) -> Result<PortMatrix> {
    use port::*;
    let c = coefficients(omega, p)?;
    let r_a = reflection(Waveguide::A, omega, p)?;
    let r_b = reflection(Waveguide::B, omega, p)?;
    let mut s = PortMatrix::zeros(4);
    s[(A_OUT, A_IN)] = c.t_aa;
    s[(A_IN, A_OUT)] = c.t_aa;
    s[(B_OUT, B_IN)] = c.t_bb;
    s[(B_IN, B_OUT)] = c.t_bb;
    s[(A_IN, A_IN)] = r_a;
    s[(A_OUT, A_OUT)] = r_a;
    s[(B_IN, B_IN)] = r_b;
    s[(B_OUT, B_OUT)] = r_b;
    for a in [A_IN, A_OUT] {
        for b in [B_IN, B_OUT] {
            s[(a, b)] = c.t_ba;
            s[(b, a)] = c.t_ab;
        }
    }
    Ok(s)
}

/// Transfer efficiency `E = t_AB·t_BA / (t_AA·t_BB)` at detuning `delta = ω − ω_ge`.
///
/// Closed form:
///
/// ```text
/// E = −Γ_AΓ_B e^{i(φ_A+φ_B)} / [(D − iΓ_A e^{iφ_A})(D − iΓ_B e^{iφ_B})]
/// ```
///
/// For real couplings this is
/// `−Γ_AΓ_B / (Δ² + iΔ(Γ_A+Γ_B+2γ) − γ(Γ_A+Γ_B+γ) − Γ_AΓ_B)`, and on
/// resonance `1 / (1 + γ(1/Γ_A + 1/Γ_B) + γ²/(Γ_AΓ_B))`.
pub fn efficiency(delta: f64, p: &CellParams) -> Result<C64> {
    if p.gamma_a == 0.0 || p.gamma_b == 0.0 {
        return Err(Error::invalid("efficiency undefined for zero coupling"));
    }
    check_omega(delta)?;
    p.validate()?;
    let d = C64::new(delta, p.total_coupling() + p.broadening());
    let ca = p.coupling(Waveguide::A);
    let cb = p.coupling(Waveguide::B);
    Ok(-(ca * cb) / ((d - I * ca) * (d - I * cb)))
}

/// Resonant efficiency for real couplings and pure dephasing `gamma_phi`.
pub fn efficiency_resonant(gamma_phi: f64, gamma_a: f64, gamma_b: f64) -> Result<f64> {
    if gamma_a <= 0.0 || gamma_b <= 0.0 {
        return Err(Error::invalid("couplings must be positive"));
    }
    if !(gamma_phi >= 0.0) {
        return Err(Error::invalid("gamma_phi must be non-negative"));
    }
    Ok(1.0 / (1.0 + gamma_phi * (1.0 / gamma_a + 1.0 / gamma_b) + gamma_phi * gamma_phi / (gamma_a * gamma_b)))
}
