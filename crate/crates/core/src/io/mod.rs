//! Spectrum file formats.
//!
//! CSV is long form, one row per (frequency, channel):
//!
//! ```text
//! # comment lines start with '#'
//! freq_hz,channel,re,im[,bias_ma][,power_dbm][,temp_k]
//! ```
//!
//! Rows sharing the same optional acquisition columns form one spectrum.
//! Touchstone `.s4p` files use the port map 1 = A-in, 2 = A-out, 3 = B-in,
//! 4 = B-out, so AA = S21, BB = S43, AB = S41 and BA = S23.

mod csv_format;
mod touchstone;

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use csv_format::{read_csv, write_csv};
pub use touchstone::{read_touchstone, write_touchstone, TouchstoneFormat};

use crate::error::{Error, Result};
use crate::spectrum::ChannelSpectrum;

/// Parsed spectra plus the number of frequencies dropped for non-finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub spectra: Vec<ChannelSpectrum>,
    pub dropped_nonfinite: usize,
}

impl Ingested {
    /// The single spectrum of a file, or an error when it holds several.
    pub fn into_single(self) -> Result<ChannelSpectrum> {
        let n = self.spectra.len();
        let mut it = self.spectra.into_iter();
        match (it.next(), n) {
            (Some(s), 1) => Ok(s),
            _ => Err(Error::invalid(format!("expected one spectrum, file holds {n}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumFormat {
    Csv,
    S4p,
}

impl SpectrumFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Self::Csv),
            "s4p" => Some(Self::S4p),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::S4p => "s4p",
        }
    }
}

impl FromStr for SpectrumFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "s4p" | "touchstone" => Ok(Self::S4p),
            other => Err(Error::invalid(format!("unknown spectrum format {other:?}"))),
        }
    }
}

/// Reads a spectrum file; `format` defaults to the extension's.
pub fn ingest_spectrum(path: &Path, format: Option<SpectrumFormat>) -> Result<Ingested> {
    let format = format
        .or_else(|| SpectrumFormat::from_path(path))
        .ok_or_else(|| Error::invalid(format!("cannot infer format of {}", path.display())))?;
    let text = std::fs::read_to_string(path)?;
    let out = match format {
        SpectrumFormat::Csv => read_csv(&text)?,
        SpectrumFormat::S4p => read_touchstone(&text)?,
    };
    if out.dropped_nonfinite > 0 {
        log::warn!(
            "{}: dropped {} frequencies with non-finite values",
            path.display(),
            out.dropped_nonfinite
        );
    }
    Ok(out)
}

/// Drops grid points where any channel is non-finite; returns how many went.
pub(crate) fn drop_nonfinite(freqs: &mut Vec<f64>, traces: &mut [Vec<crate::C64>; 4]) -> usize {
    let keep: Vec<bool> = (0..freqs.len())
        .map(|i| traces.iter().all(|t| t[i].re.is_finite() && t[i].im.is_finite()))
        .collect();
    let dropped = keep.iter().filter(|k| !**k).count();
    if dropped > 0 {
        retain_mask(freqs, &keep);
        for t in traces.iter_mut() {
            retain_mask(t, &keep);
        }
    }
    dropped
}

fn retain_mask<T>(v: &mut Vec<T>, keep: &[bool]) {
    let mut k = keep.iter();
    v.retain(|_| *k.next().unwrap());
}
