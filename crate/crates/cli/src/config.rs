//! TOML run configuration. Frequencies and rates are linear Hz here and are
//! converted to angular units once, when the library types are built.

use std::f64::consts::PI;
use std::path::Path;

use qrouter_core::io::SpectrumFormat;
use qrouter_core::model::{DressedModel, FluxModel, ThermalCoefficients};
use qrouter_core::synth::{frequency_grid, CampaignConfig, ForwardModel, LineSpec};
use qrouter_core::units::{angular_to_hz, hz_to_angular};
use qrouter_core::CellParams;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub run: RunSection,
    pub cell: CellSection,
    pub grid: GridSection,
    pub lines: LineSpec,
    pub synth: SynthSection,
    pub flux: FluxSection,
    pub bias_sweep: BiasSweepSection,
    pub temp_sweep: TempSweepSection,
    pub power_sweep: PowerSweepSection,
    pub dressed: DressedSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    /// Format of spectrum outputs. Tables are always CSV.
    pub format: SpectrumFormat,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            format: SpectrumFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CellSection {
    pub gamma_a_hz: f64,
    pub gamma_b_hz: f64,
    pub f_ge_hz: f64,
    pub f_ef_hz: Option<f64>,
    /// Coupling phases in units of π.
    pub phi_a_pi: f64,
    pub phi_b_pi: f64,
    pub gamma_phi_hz: f64,
    pub gamma_bath_hz: f64,
}

impl Default for CellSection {
    fn default() -> Self {
        Self::from_params(&CellParams::reference_device())
    }
}

impl CellSection {
    pub fn from_params(p: &CellParams) -> Self {
        Self {
            gamma_a_hz: angular_to_hz(p.gamma_a),
            gamma_b_hz: angular_to_hz(p.gamma_b),
            f_ge_hz: angular_to_hz(p.omega_ge),
            f_ef_hz: p.omega_ef.map(angular_to_hz),
            phi_a_pi: p.phi_a / PI,
            phi_b_pi: p.phi_b / PI,
            gamma_phi_hz: angular_to_hz(p.gamma_phi),
            gamma_bath_hz: angular_to_hz(p.gamma_bath),
        }
    }

    pub fn params(&self) -> CellParams {
        CellParams {
            gamma_a: hz_to_angular(self.gamma_a_hz),
            gamma_b: hz_to_angular(self.gamma_b_hz),
            phi_a: self.phi_a_pi * PI,
            phi_b: self.phi_b_pi * PI,
            omega_ge: hz_to_angular(self.f_ge_hz),
            omega_ef: self.f_ef_hz.map(hz_to_angular),
            gamma_phi: hz_to_angular(self.gamma_phi_hz),
            gamma_bath: hz_to_angular(self.gamma_bath_hz),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// Defaults to the emitter frequency.
    pub center_hz: Option<f64>,
    pub span_hz: f64,
    pub points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            center_hz: None,
            span_hz: 60e6,
            points: 601,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub noise_sigma: f64,
    pub forward: ForwardModel,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            noise_sigma: 1e-3,
            forward: ForwardModel::Simplified,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluxSection {
    pub sweet_spot_hz: f64,
    pub linear_hz_per_ma: f64,
    pub curvature_hz_per_ma2: f64,
}

impl Default for FluxSection {
    fn default() -> Self {
        let f = FluxModel::reference_device();
        Self {
            sweet_spot_hz: angular_to_hz(f.sweet_spot_omega),
            linear_hz_per_ma: angular_to_hz(f.linear),
            curvature_hz_per_ma2: angular_to_hz(f.curvature),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BiasSweepSection {
    pub min_ma: f64,
    pub max_ma: f64,
    pub points: usize,
    /// Bias-current noise spectral density, A²/Hz.
    pub s_i: f64,
    pub gamma_phi0_hz: f64,
}

impl Default for BiasSweepSection {
    fn default() -> Self {
        Self {
            min_ma: -0.55,
            max_ma: 0.55,
            points: 23,
            s_i: 3e-19,
            gamma_phi0_hz: 0.2e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TempSweepSection {
    pub min_k: f64,
    pub max_k: f64,
    pub points: usize,
    /// Additive Gaussian noise on E.
    pub sigma: f64,
    pub gamma1_zero_hz: f64,
    pub gamma_phi_zero_hz: f64,
}

impl Default for TempSweepSection {
    fn default() -> Self {
        Self {
            min_k: 0.010,
            max_k: 0.250,
            points: 41,
            sigma: 0.01,
            gamma1_zero_hz: 0.26e6,
            gamma_phi_zero_hz: 10.38e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerSweepSection {
    /// Photon numbers are spaced logarithmically.
    pub n_min: f64,
    pub n_max: f64,
    pub points: usize,
    pub c: f64,
    pub d: f64,
    pub sigma: f64,
}

impl Default for PowerSweepSection {
    fn default() -> Self {
        Self {
            n_min: 1e-2,
            n_max: 1e6,
            points: 33,
            c: 1.0,
            d: 3.0,
            sigma: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DressedSection {
    pub lambda_red_hz: f64,
    pub lambda_blue_hz: f64,
    /// Drive detuning from the g–e line.
    pub detuning_hz: f64,
    pub n_max: f64,
    pub points: usize,
}

impl Default for DressedSection {
    fn default() -> Self {
        let m = DressedModel::reference_device();
        Self {
            lambda_red_hz: angular_to_hz(m.lambda_red),
            lambda_blue_hz: angular_to_hz(m.lambda_blue),
            detuning_hz: 0.0,
            n_max: 200.0,
            points: 41,
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

fn positive_count(name: &str, n: usize, min: usize) -> Result<(), CliError> {
    if n < min {
        return Err(CliError::config(format!("{name} needs at least {min} points")));
    }
    Ok(())
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn cell(&self) -> CellParams {
        self.cell.params()
    }

    pub fn flux(&self) -> FluxModel {
        FluxModel {
            curvature: hz_to_angular(self.flux.curvature_hz_per_ma2),
            linear: hz_to_angular(self.flux.linear_hz_per_ma),
            sweet_spot_omega: hz_to_angular(self.flux.sweet_spot_hz),
        }
    }

    pub fn freqs_hz(&self) -> Result<Vec<f64>, CliError> {
        positive_count("grid", self.grid.points, 2)?;
        if !(self.grid.span_hz > 0.0) {
            return Err(CliError::config("grid.span_hz must be positive"));
        }
        Ok(frequency_grid(
            self.grid.center_hz.unwrap_or(self.cell.f_ge_hz),
            self.grid.span_hz,
            self.grid.points,
        ))
    }

    pub fn bias_ma(&self) -> Result<Vec<f64>, CliError> {
        let b = &self.bias_sweep;
        positive_count("bias_sweep", b.points, 1)?;
        Ok(linspace(b.min_ma, b.max_ma, b.points))
    }

    pub fn temps_k(&self) -> Result<Vec<f64>, CliError> {
        let t = &self.temp_sweep;
        positive_count("temp_sweep", t.points, 1)?;
        if !(t.min_k > 0.0) {
            return Err(CliError::config("temp_sweep.min_k must be positive"));
        }
        Ok(linspace(t.min_k, t.max_k, t.points))
    }

    pub fn power_n(&self) -> Result<Vec<f64>, CliError> {
        let p = &self.power_sweep;
        positive_count("power_sweep", p.points, 1)?;
        if !(p.n_min > 0.0 && p.n_max >= p.n_min) {
            return Err(CliError::config("power_sweep needs 0 < n_min ≤ n_max"));
        }
        Ok(linspace(p.n_min.ln(), p.n_max.ln(), p.points)
            .into_iter()
            .map(f64::exp)
            .collect())
    }

    pub fn thermal(&self) -> ThermalCoefficients {
        ThermalCoefficients {
            gamma1_zero: hz_to_angular(self.temp_sweep.gamma1_zero_hz),
            gamma_phi_zero_per_photon: hz_to_angular(self.temp_sweep.gamma_phi_zero_hz),
        }
    }

    pub fn dressed(&self) -> Result<DressedModel, CliError> {
        let cell = self.cell();
        let omega_ef = cell
            .omega_ef
            .ok_or_else(|| CliError::config("dressed lines need cell.f_ef_hz"))?;
        Ok(DressedModel {
            lambda_red: hz_to_angular(self.dressed.lambda_red_hz),
            lambda_blue: hz_to_angular(self.dressed.lambda_blue_hz),
            omega_ge: cell.omega_ge,
            omega_ef,
        })
    }

    /// Synthetic campaign with the configured cell, lines and grids. The
    /// sweep axes are filled in by the sweep commands that use them.
    pub fn campaign(&self) -> Result<CampaignConfig, CliError> {
        Ok(CampaignConfig {
            cell: self.cell(),
            flux: self.flux(),
            lines: self.lines.clone(),
            noise_sigma: self.synth.noise_sigma,
            forward: self.synth.forward,
            freqs_hz: self.freqs_hz()?,
            seed: self.run.seed,
            ..CampaignConfig::default()
        })
    }
}
