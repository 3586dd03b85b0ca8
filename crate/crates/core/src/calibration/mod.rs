//! From raw four-channel traces to calibrated cell responses.
//!
//! The high-drive (HD) reference is a trace taken with the emitter
//! saturated, so it carries only the line transmissions and the isolation
//! leak. Through channels are divided by their HD trace; cross channels
//! have the HD leak subtracted and are rescaled by
//! `√(t_other^HD / (t_AA^HD · t_BB^HD · t_same^HD))`, which equals
//! `±1/(S_x²¹ G_y²¹)`. The sign is fixed by continuity across frequency and
//! then globally so the cross response is positive-real at its peak.

mod budget;
mod circle;

pub use budget::{loss_budget, loss_budget_from_rates, LossBudget};
pub use circle::{circle_fit, CircleFitResult};

use crate::error::{Error, Result};
use crate::spectrum::{Channel, ChannelSpectrum};
use crate::C64;

/// Default magnitude floor on HD reference samples used as divisors.
pub const DEFAULT_HD_FLOOR: f64 = 1e-8;

/// Unwraps a phase sequence so adjacent samples differ by at most π.
pub fn unwrap(phases: &[f64]) -> Vec<f64> {
    use std::f64::consts::{PI, TAU};
    let mut out = Vec::with_capacity(phases.len());
    let mut offset = 0.0;
    for (i, &p) in phases.iter().enumerate() {
        if i > 0 {
            let d = p - phases[i - 1];
            offset -= TAU * ((d + PI).div_euclid(TAU));
        }
        out.push(p + offset);
    }
    out
}

/// Phase of a trace whose samples may carry spurious sign flips (square-root
/// branch jumps): doubled, unwrapped, halved.
pub fn unwrap_halved_phase(trace: &[C64]) -> Vec<f64> {
    let doubled: Vec<f64> = trace.iter().map(|z| 2.0 * z.arg()).collect();
    unwrap(&doubled).into_iter().map(|p| 0.5 * p).collect()
}

/// Rotates the trace so its phase is zero at the sample nearest `omega_res`.
pub fn remove_global_phase(trace: &[C64], freqs_hz: &[f64], omega_res: f64) -> Result<Vec<C64>> {
    if trace.is_empty() || trace.len() != freqs_hz.len() {
        return Err(Error::invalid("trace and grid must be non-empty and of equal length"));
    }
    let k = crate::spectrum::nearest_index(freqs_hz, crate::units::angular_to_hz(omega_res));
    let z = trace[k];
    if z.norm() == 0.0 {
        return Ok(trace.to_vec());
    }
    let rot = z.conj() / z.norm();
    Ok(trace
        .iter()
        .enumerate()
        .map(|(i, w)| if i == k { C64::new(w.norm(), 0.0) } else { w * rot })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub hd_floor: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            hd_floor: DEFAULT_HD_FLOOR,
        }
    }
}

/// Calibrates `meas` against the HD reference `hd` with default options.
pub fn calibrate_responses(meas: &ChannelSpectrum, hd: &ChannelSpectrum) -> Result<ChannelSpectrum> {
    calibrate_responses_with(meas, hd, &CalibrationOptions::default())
}

pub fn calibrate_responses_with(
    meas: &ChannelSpectrum,
    hd: &ChannelSpectrum,
    opts: &CalibrationOptions,
) -> Result<ChannelSpectrum> {
    let resampled;
    let hd = if meas.same_grid(hd) {
        hd
    } else {
        resampled = hd.resample(meas.freqs_hz())?;
        &resampled
    };

    let bad: Vec<f64> = meas
        .freqs_hz()
        .iter()
        .enumerate()
        .filter(|&(i, _)| hd.at(i).iter().any(|z| !(z.norm() >= opts.hd_floor)))
        .map(|(_, &f)| f)
        .collect();
    if !bad.is_empty() {
        return Err(Error::DegenerateReference {
            floor: opts.hd_floor,
            freqs_hz: bad,
        });
    }

    let through = |ch: Channel| -> Vec<C64> { meas.trace(ch).iter().zip(hd.trace(ch)).map(|(m, h)| m / h).collect() };
    let cross = |same: Channel, other: Channel| -> Vec<C64> {
        let (aa, bb) = (hd.trace(Channel::AA), hd.trace(Channel::BB));
        let (hs, ho) = (hd.trace(same), hd.trace(other));
        let roots: Vec<C64> = (0..meas.len())
            .map(|i| (ho[i] / (aa[i] * bb[i] * hs[i])).sqrt())
            .collect();
        let phase = unwrap_halved_phase(&roots);
        let mut out: Vec<C64> = roots
            .iter()
            .zip(&phase)
            .zip(meas.trace(same).iter().zip(hs))
            .map(|((r, &ph), (m, h))| (m - h) * C64::from_polar(r.norm(), ph))
            .collect();
        // Continuity leaves one overall sign; pick positive real part at the peak.
        let peak = out
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if out[peak].re < 0.0 {
            out.iter_mut().for_each(|z| *z = -*z);
        }
        out
    };

    let traces = [
        through(Channel::AA),
        through(Channel::BB),
        cross(Channel::AB, Channel::BA),
        cross(Channel::BA, Channel::AB),
    ];
    Ok(ChannelSpectrum::new(meas.freqs_hz().to_vec(), traces)?.with_meta(meas.meta))
}
