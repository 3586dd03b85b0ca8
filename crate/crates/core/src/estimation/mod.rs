//! Parameter estimation: complex four-channel spectroscopy fit, dephasing
//! and thermal models, saturation, time-domain decays and readout PCA.
//!
//! All nonlinear fits share [`lm::levenberg_marquardt`] with analytic
//! Jacobians and report linearized 1σ uncertainties.

mod dephasing;
mod four_channel;
pub mod lm;
mod pca;
mod time_domain;

pub use dephasing::{
    fit_e_polynomial, fit_flux_noise, fit_saturation, fit_thermal, gamma_phi_from_e, FluxNoiseFit, Quadratic,
    SaturationFit, ThermalFit, E_CLAMP_LIMIT,
};
pub use four_channel::{
    efficiency_trace, fit_four_channel, four_channel_jacobian, four_channel_residuals, initial_guess,
    resonant_efficiency, ResonantEfficiency, FOUR_CHANNEL_PARAMS,
};
pub use pca::{pca_populations, IqCloud, PopulationTrace, PCA_WORST_CASE};
pub use time_domain::{fit_rabi_decay, fit_t1, rabi_model, rate_budget, RabiFit, RateBudget, T1Fit};

use serde::{Deserialize, Serialize};

use lm::LmOutcome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParam {
    pub name: String,
    pub value: f64,
    /// 1σ; infinite when the parameter is not identifiable.
    pub sigma: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: Vec<FitParam>,
    pub residual_norm: f64,
    pub n_iter: usize,
    pub converged: bool,
    pub seed: Option<u64>,
    /// Diagnostics such as unidentifiable parameters or clamped inputs.
    pub flags: Vec<String>,
}

impl FitReport {
    /// Builds a report from an optimizer outcome. `scales[i]` converts the
    /// optimizer's i-th parameter to physical units (value and sigma).
    pub(crate) fn from_outcome(out: &LmOutcome, names: &[(&str, &str)], values: &[f64], scales: &[f64]) -> Self {
        let sigma = out.sigma();
        let params = names
            .iter()
            .zip(values)
            .zip(sigma.iter().zip(scales))
            .map(|((&(name, unit), &value), (&s, &k))| FitParam {
                name: name.to_string(),
                value,
                sigma: s * k.abs(),
                unit: unit.to_string(),
            })
            .collect();
        Self {
            params,
            residual_norm: out.residual_norm,
            n_iter: out.n_iter,
            converged: out.converged,
            seed: None,
            flags: Vec::new(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&FitParam> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Value of `name`; panics when the report has no such parameter.
    pub fn value(&self, name: &str) -> f64 {
        self.get(name)
            .unwrap_or_else(|| panic!("fit report has no parameter {name:?}"))
            .value
    }

    pub fn sigma(&self, name: &str) -> f64 {
        self.get(name)
            .unwrap_or_else(|| panic!("fit report has no parameter {name:?}"))
            .sigma
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub(crate) fn flag(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.flags.push(msg);
    }
}
