//! Seeded synthetic measurement campaigns.
//!
//! Every generator takes an explicit seed. Sweep point `k` of a campaign
//! seeded with `s` draws from `derive_seed(s, k)`, so points can be generated
//! in any order (and in parallel) with bit-identical results.

mod lines;

pub use lines::{gen_lines, LineSpec, SyntheticLine, SyntheticLines};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{rabi_model, IqCloud};
use crate::model::{
    cell_smatrix, coefficients, efficiency_thermal, n_thermal, omega_ge_of_bias, CellCoefficients, CellParams,
    FluxModel, ThermalCoefficients,
};
use crate::network::{exact_forward, simplified_forward, transparent_cell, LineModel};
use crate::spectrum::{ChannelSpectrum, SpectrumMeta};
use crate::units::{angular_to_hz, MHZ};
use crate::C64;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for sub-stream `index` of `base`: `splitmix64(base + index·φ64)`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// Sub-stream indices within one spectrum.
const STREAM_LINES: u64 = 0;
const STREAM_MEAS: u64 = 1;
const STREAM_HD: u64 = 2;

/// Which forward chain maps cell coefficients to measured ones.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForwardModel {
    /// Line transmissions only; reflections ignored.
    #[default]
    Simplified,
    /// Full 8-port composition including line reflections.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignConfig {
    pub cell: CellParams,
    pub flux: FluxModel,
    pub lines: LineSpec,
    /// Standard deviation of the additive circular complex Gaussian noise,
    /// relative to the line gain of each channel (`E|n|² = σ²`).
    pub noise_sigma: f64,
    pub forward: ForwardModel,
    pub freqs_hz: Vec<f64>,
    pub bias_ma: Vec<f64>,
    /// Mean photon numbers for power sweeps.
    pub power_n: Vec<f64>,
    pub temps_k: Vec<f64>,
    pub seed: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        let cell = CellParams::reference_device();
        Self {
            freqs_hz: frequency_grid(angular_to_hz(cell.omega_ge), 60e6, 601),
            cell,
            flux: FluxModel::reference_device(),
            lines: LineSpec::default(),
            noise_sigma: 1e-3,
            forward: ForwardModel::Simplified,
            bias_ma: (0..11).map(|k| -0.5 + 0.1 * k as f64).collect(),
            power_n: (0..25).map(|k| 10f64.powf(-2.0 + 0.25 * k as f64)).collect(),
            temps_k: (0..41).map(|k| 0.010 + 0.006 * k as f64).collect(),
            seed: 0,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        self.cell.validate()?;
        self.lines.validate()?;
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::invalid("noise sigma must be finite and non-negative"));
        }
        if self.freqs_hz.len() < 2 {
            return Err(Error::invalid("frequency grid needs at least two points"));
        }
        Ok(())
    }
}

/// `n` evenly spaced frequencies spanning `span_hz` around `center_hz`.
pub fn frequency_grid(center_hz: f64, span_hz: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![center_hz; n];
    }
    (0..n)
        .map(|k| center_hz + span_hz * (k as f64 / (n - 1) as f64 - 0.5))
        .collect()
}

/// One generated measurement with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpectrum {
    pub meas: ChannelSpectrum,
    pub hd: ChannelSpectrum,
    pub truth: CellParams,
    pub lines: SyntheticLines,
    pub seed: u64,
}

fn complex_noise(rng: &mut ChaCha8Rng, sigma: f64) -> C64 {
    if sigma == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let n = Normal::new(0.0, sigma / std::f64::consts::SQRT_2).expect("finite sigma");
    C64::new(n.sample(rng), n.sample(rng))
}

/// Adds noise scaled by each channel's line gain.
fn add_noise(c: CellCoefficients, lines: &LineModel, sigma: f64, rng: &mut ChaCha8Rng) -> [C64; 4] {
    let (sa, ga, sb, gb) = lines.transmissions();
    let scale = [(sa * ga).norm(), (sb * gb).norm(), (sa * gb).norm(), (sb * ga).norm()];
    let mut v = c.to_array();
    for (z, s) in v.iter_mut().zip(scale) {
        *z += complex_noise(rng, sigma * s);
    }
    v
}

fn forward(model: ForwardModel, omega: f64, cell: Option<&CellParams>, lines: &LineModel) -> Result<CellCoefficients> {
    match (model, cell) {
        (ForwardModel::Simplified, Some(p)) => Ok(simplified_forward(&coefficients(omega, p)?, lines)),
        (ForwardModel::Simplified, None) => Ok(simplified_forward(&CellCoefficients::transparent(), lines)),
        (ForwardModel::Exact, Some(p)) => exact_forward(&cell_smatrix(omega, p)?, lines),
        (ForwardModel::Exact, None) => exact_forward(&transparent_cell(), lines),
    }
}

fn spectrum_for(cfg: &CampaignConfig, cell: CellParams, freqs_hz: Vec<f64>, seed: u64) -> Result<SyntheticSpectrum> {
    let lines = gen_lines(&cfg.lines, derive_seed(seed, STREAM_LINES))?;
    let mut meas_rng = rng(derive_seed(seed, STREAM_MEAS));
    let mut hd_rng = rng(derive_seed(seed, STREAM_HD));
    let sigma = cfg.noise_sigma;
    let meas = ChannelSpectrum::from_fn(freqs_hz.clone(), |w| {
        let l = lines.at(angular_to_hz(w));
        Ok(add_noise(
            forward(cfg.forward, w, Some(&cell), &l)?,
            &l,
            sigma,
            &mut meas_rng,
        ))
    })?;
    // The high-drive reference is the same chain with the emitter decoupled.
    let hd = ChannelSpectrum::from_fn(freqs_hz, |w| {
        let l = lines.at(angular_to_hz(w));
        Ok(add_noise(forward(cfg.forward, w, None, &l)?, &l, sigma, &mut hd_rng))
    })?;
    Ok(SyntheticSpectrum {
        meas,
        hd,
        truth: cell,
        lines,
        seed,
    })
}

/// Measured and high-drive spectra of `cfg.cell` over `cfg.freqs_hz`.
pub fn gen_spectrum(cfg: &CampaignConfig) -> Result<SyntheticSpectrum> {
    cfg.validate()?;
    spectrum_for(cfg, cfg.cell, cfg.freqs_hz.clone(), cfg.seed)
}

/// `Γ_φ⁰ + π(dω_ge/dI_b)²S_I` with the slope in rad/s per A.
pub fn flux_noise_dephasing(ib_ma: f64, flux: &FluxModel, s_i: f64, gamma_phi_0: f64) -> f64 {
    let slope = flux.slope(ib_ma) * 1e3;
    gamma_phi_0 + std::f64::consts::PI * slope * slope * s_i
}

/// One spectrum per `cfg.bias_ma` entry. The emitter follows the flux
/// model, its dephasing follows flux noise `s_i` (A²/Hz) on top of
/// `gamma_phi_0`, and the frequency grid moves with the emitter.
pub fn gen_bias_sweep(cfg: &CampaignConfig, s_i: f64, gamma_phi_0: f64) -> Result<Vec<SyntheticSpectrum>> {
    cfg.validate()?;
    if !(s_i >= 0.0) {
        return Err(Error::invalid("noise spectral density must be non-negative"));
    }
    let center = cfg.cell.omega_ge;
    cfg.bias_ma
        .par_iter()
        .enumerate()
        .map(|(k, &ib)| {
            let omega_ge = omega_ge_of_bias(ib, &cfg.flux);
            let cell = CellParams {
                omega_ge,
                gamma_phi: flux_noise_dephasing(ib, &cfg.flux, s_i, gamma_phi_0),
                ..cfg.cell
            };
            let shift = angular_to_hz(omega_ge - center);
            let freqs = cfg.freqs_hz.iter().map(|f| f + shift).collect();
            let mut s = spectrum_for(cfg, cell, freqs, derive_seed(cfg.seed, k as u64))?;
            let meta = SpectrumMeta {
                bias_ma: Some(ib),
                ..SpectrumMeta::default()
            };
            s.meas.meta = meta;
            s.hd.meta = meta;
            Ok(s)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalSweep {
    pub temps_k: Vec<f64>,
    pub e: Vec<f64>,
    pub coefficients: ThermalCoefficients,
}

/// Resonant efficiency versus temperature with additive Gaussian noise `sigma`.
pub fn gen_temperature_sweep(
    cfg: &CampaignConfig,
    coefficients: ThermalCoefficients,
    sigma: f64,
) -> Result<ThermalSweep> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid("sigma must be non-negative"));
    }
    let c = &cfg.cell;
    let mut r = rng(derive_seed(cfg.seed, 0));
    let e = cfg
        .temps_k
        .iter()
        .map(|&t| {
            let e = efficiency_thermal(n_thermal(t, c.omega_ge)?, c.gamma_a, c.gamma_b, &coefficients)?;
            Ok(e + if sigma > 0.0 {
                Normal::new(0.0, sigma).expect("finite sigma").sample(&mut r)
            } else {
                0.0
            })
        })
        .collect::<Result<_>>()?;
    Ok(ThermalSweep {
        temps_k: cfg.temps_k.clone(),
        e,
        coefficients,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSweep {
    pub n_avg: Vec<f64>,
    /// Resonant through magnitude |t_AA|.
    pub through: Vec<f64>,
    /// Resonant cross magnitude |t_AB|.
    pub cross: Vec<f64>,
}

/// Resonant magnitudes versus mean photon number: the emitter response is
/// suppressed by `1/(1 + ⟨n⟩^c/d)`, so through tends to 1 and cross to 0.
pub fn gen_power_sweep(cfg: &CampaignConfig, c: f64, d: f64, sigma: f64) -> Result<PowerSweep> {
    if !(d > 0.0) || !(c > 0.0) {
        return Err(Error::invalid("saturation exponent and scale must be positive"));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid("sigma must be non-negative"));
    }
    let k0 = coefficients(cfg.cell.omega_ge, &cfg.cell)?;
    let mut r = rng(derive_seed(cfg.seed, 0));
    let mut noise = |x: f64| {
        if sigma > 0.0 {
            x + Normal::new(0.0, sigma).expect("finite sigma").sample(&mut r)
        } else {
            x
        }
    };
    let (mut through, mut cross) = (Vec::new(), Vec::new());
    for &n in &cfg.power_n {
        if !(n >= 0.0) {
            return Err(Error::invalid("photon numbers must be non-negative"));
        }
        let s = 1.0 / (1.0 + n.powf(c) / d);
        through.push(noise((C64::new(1.0, 0.0) - (C64::new(1.0, 0.0) - k0.t_aa) * s).norm()));
        cross.push(noise(k0.t_ab.norm() * s));
    }
    Ok(PowerSweep {
        n_avg: cfg.power_n.clone(),
        through,
        cross,
    })
}

/// `p0·e^{−t/T1} + p_∞(1 − e^{−t/T1})` plus Gaussian noise.
pub fn gen_t1_trace(t: &[f64], t1: f64, p0: f64, p_inf: f64, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(t1 > 0.0) || !(sigma >= 0.0) {
        return Err(Error::invalid("T1 must be positive and sigma non-negative"));
    }
    let mut r = rng(seed);
    Ok(t.iter()
        .map(|&t| {
            let e = (-t / t1).exp();
            p0 * e + p_inf * (1.0 - e) + gauss(&mut r, sigma)
        })
        .collect())
}

/// Damped Rabi trace (see [`rabi_model`]) plus Gaussian noise.
pub fn gen_rabi_trace(
    t: &[f64],
    p_max: f64,
    t_pi: f64,
    p_inf: f64,
    t_r: f64,
    sigma: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(t_pi > 0.0 && t_r > 0.0) || !(sigma >= 0.0) {
        return Err(Error::invalid("times must be positive and sigma non-negative"));
    }
    let mut r = rng(seed);
    Ok(t.iter()
        .map(|&t| rabi_model(t, p_max, t_pi, p_inf, t_r) + gauss(&mut r, sigma))
        .collect())
}

fn gauss(r: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sigma).expect("finite sigma").sample(r)
    }
}

/// Readout anchors and noise for single-shot IQ generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IqShotSpec {
    pub z_g: C64,
    pub z_e: C64,
    /// Per-shot circular complex Gaussian noise, `E|n|² = σ²`.
    pub sigma: f64,
    pub shots: usize,
    /// DC offset of the through channel; the cross channel carries a tenth.
    pub dc_offset: C64,
}

impl Default for IqShotSpec {
    fn default() -> Self {
        Self {
            z_g: C64::new(0.2, -0.1),
            z_e: C64::new(-0.3, 0.6),
            sigma: 0.05,
            shots: 200,
            dc_offset: C64::new(0.05, 0.02),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IqShots {
    pub through: Vec<IqCloud>,
    pub cross: Vec<IqCloud>,
}

/// Mixture clouds: shot means `p·z_e + (1−p)·z_g + dc`.
pub fn gen_iq_shots(settings: &[f64], p_truth: &[f64], spec: &IqShotSpec, seed: u64) -> Result<IqShots> {
    if settings.len() != p_truth.len() {
        return Err(Error::invalid("one population per setting required"));
    }
    if !(spec.sigma >= 0.0) || spec.shots == 0 {
        return Err(Error::invalid("sigma must be non-negative and shots positive"));
    }
    let mut through = Vec::with_capacity(settings.len());
    let mut cross = Vec::with_capacity(settings.len());
    for (k, (&s, &p)) in settings.iter().zip(p_truth).enumerate() {
        let mean = spec.z_e * p + spec.z_g * (1.0 - p);
        let mut r = rng(derive_seed(seed, k as u64));
        let mut cloud = |dc: C64| IqCloud {
            setting: s,
            samples: (0..spec.shots)
                .map(|_| mean + dc + complex_noise(&mut r, spec.sigma))
                .collect(),
        };
        through.push(cloud(spec.dc_offset));
        cross.push(cloud(spec.dc_offset / 10.0));
    }
    Ok(IqShots { through, cross })
}

/// Default reference-device thermal coefficients.
pub fn reference_thermal() -> ThermalCoefficients {
    ThermalCoefficients {
        gamma1_zero: 0.26 * MHZ,
        gamma_phi_zero_per_photon: 10.38 * MHZ,
    }
}
