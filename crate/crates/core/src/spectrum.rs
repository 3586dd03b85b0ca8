//! Four-channel complex transmission spectra.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::hz_to_angular;
use crate::C64;

/// Transmission path through the cell.
///
/// `AA` and `BB` stay in one waveguide (through); `AB` enters waveguide A
/// and leaves through B′, `BA` the reverse (cross).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    AA,
    BB,
    AB,
    BA,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::AA, Channel::BB, Channel::AB, Channel::BA];

    pub fn index(self) -> usize {
        match self {
            Channel::AA => 0,
            Channel::BB => 1,
            Channel::AB => 2,
            Channel::BA => 3,
        }
    }

    pub fn is_through(self) -> bool {
        matches!(self, Channel::AA | Channel::BB)
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::AA => "AA",
            Channel::BB => "BB",
            Channel::AB => "AB",
            Channel::BA => "BA",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        // Accept both "AB" and "AB'" spellings.
        match s.trim().trim_end_matches(['\'', '′']) {
            "AA" => Ok(Channel::AA),
            "BB" => Ok(Channel::BB),
            "AB" => Ok(Channel::AB),
            "BA" => Ok(Channel::BA),
            other => Err(Error::invalid(format!("unknown channel {other:?}"))),
        }
    }
}

/// Acquisition conditions attached to a spectrum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub bias_ma: Option<f64>,
    pub power_dbm: Option<f64>,
    pub temp_k: Option<f64>,
}

/// Frequency grid (Hz, strictly increasing) with one complex trace per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpectrum {
    freqs_hz: Vec<f64>,
    traces: [Vec<C64>; 4],
    pub meta: SpectrumMeta,
}

impl ChannelSpectrum {
    /// Builds a spectrum, validating lengths, ordering and finiteness.
    pub fn new(freqs_hz: Vec<f64>, traces: [Vec<C64>; 4]) -> Result<Self> {
        let n = freqs_hz.len();
        if n == 0 {
            return Err(Error::invalid("empty frequency grid"));
        }
        for (ch, tr) in Channel::ALL.iter().zip(&traces) {
            if tr.len() != n {
                return Err(Error::invalid(format!(
                    "channel {ch} has {} samples, grid has {n}",
                    tr.len()
                )));
            }
            if tr.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::invalid(format!("channel {ch} contains non-finite samples")));
            }
        }
        if freqs_hz.iter().any(|f| !f.is_finite()) {
            return Err(Error::invalid("non-finite frequency"));
        }
        if let Some(w) = freqs_hz.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "frequencies not strictly increasing at index {}",
                w + 1
            )));
        }
        Ok(Self {
            freqs_hz,
            traces,
            meta: SpectrumMeta::default(),
        })
    }

    /// Evaluates `f` at every grid frequency (angular) to fill the four channels.
    pub fn from_fn<F>(freqs_hz: Vec<f64>, mut f: F) -> Result<Self>
    where
        F: FnMut(f64) -> Result<[C64; 4]>,
    {
        let mut traces: [Vec<C64>; 4] = Default::default();
        for &fr in &freqs_hz {
            let v = f(hz_to_angular(fr))?;
            for (tr, z) in traces.iter_mut().zip(v) {
                tr.push(z);
            }
        }
        Self::new(freqs_hz, traces)
    }

    pub fn with_meta(mut self, meta: SpectrumMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn len(&self) -> usize {
        self.freqs_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs_hz.is_empty()
    }

    pub fn freqs_hz(&self) -> &[f64] {
        &self.freqs_hz
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.freqs_hz.iter().map(|&f| hz_to_angular(f)).collect()
    }

    pub fn trace(&self, ch: Channel) -> &[C64] {
        &self.traces[ch.index()]
    }

    pub fn traces(&self) -> &[Vec<C64>; 4] {
        &self.traces
    }

    /// The four channel values at grid index `i`, in [`Channel::ALL`] order.
    pub fn at(&self, i: usize) -> [C64; 4] {
        [
            self.traces[0][i],
            self.traces[1][i],
            self.traces[2][i],
            self.traces[3][i],
        ]
    }

    /// Complex linear interpolation (on re/im parts) onto `grid_hz`.
    ///
    /// Points outside this spectrum's span are rejected; nothing is extrapolated.
    pub fn resample(&self, grid_hz: &[f64]) -> Result<Self> {
        let lo = self.freqs_hz[0];
        let hi = *self.freqs_hz.last().unwrap();
        let mut traces: [Vec<C64>; 4] = Default::default();
        for &f in grid_hz {
            if f < lo || f > hi {
                return Err(Error::GridMismatch(format!(
                    "{f} Hz outside reference span [{lo}, {hi}] Hz"
                )));
            }
            // lo <= f <= hi, so the left node index is in 0..n
            let i0 = self.freqs_hz.partition_point(|&x| x <= f) - 1;
            let i1 = (i0 + 1).min(self.len() - 1);
            let w = if i0 == i1 {
                0.0
            } else {
                (f - self.freqs_hz[i0]) / (self.freqs_hz[i1] - self.freqs_hz[i0])
            };
            for (out, tr) in traces.iter_mut().zip(&self.traces) {
                out.push(tr[i0] * (1.0 - w) + tr[i1] * w);
            }
        }
        Ok(Self::new(grid_hz.to_vec(), traces)?.with_meta(self.meta))
    }

    /// True when both spectra share the exact same frequency grid.
    pub fn same_grid(&self, other: &Self) -> bool {
        self.freqs_hz == other.freqs_hz
    }

    /// Index of the grid point nearest to `omega` (rad/s).
    pub fn nearest_index(&self, omega: f64) -> usize {
        nearest_index(&self.freqs_hz, crate::units::angular_to_hz(omega))
    }
}

pub(crate) fn nearest_index(grid: &[f64], x: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &g) in grid.iter().enumerate() {
        let d = (g - x).abs();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> ChannelSpectrum {
        let f: Vec<f64> = (0..n).map(|i| 1e9 + i as f64 * 1e6).collect();
        let tr: Vec<C64> = (0..n).map(|i| C64::new(i as f64, -(i as f64))).collect();
        ChannelSpectrum::new(f, [tr.clone(), tr.clone(), tr.clone(), tr]).unwrap()
    }

    #[test]
    fn rejects_non_monotone_grid() {
        let tr = vec![C64::new(1.0, 0.0); 3];
        let err = ChannelSpectrum::new(vec![1.0, 3.0, 2.0], [tr.clone(), tr.clone(), tr.clone(), tr]);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_length_mismatch() {
        let tr = vec![C64::new(1.0, 0.0); 3];
        let short = vec![C64::new(1.0, 0.0); 2];
        assert!(ChannelSpectrum::new(vec![1.0, 2.0, 3.0], [tr.clone(), tr.clone(), tr, short]).is_err());
    }

    #[test]
    fn resample_is_linear_and_exact_on_nodes() {
        let s = ramp(5);
        let grid = vec![1e9, 1.0005e9, 1.002e9, 1.004e9];
        let r = s.resample(&grid).unwrap();
        assert_eq!(r.trace(Channel::AA)[0], C64::new(0.0, 0.0));
        assert!((r.trace(Channel::AA)[1] - C64::new(0.5, -0.5)).norm() < 1e-9);
        assert!((r.trace(Channel::BA)[3] - C64::new(4.0, -4.0)).norm() < 1e-12);
        assert!(s.resample(&[2e9]).is_err());
    }

    #[test]
    fn channel_names_round_trip() {
        for ch in Channel::ALL {
            assert_eq!(ch.name().parse::<Channel>().unwrap(), ch);
        }
        assert_eq!("AB'".parse::<Channel>().unwrap(), Channel::AB);
    }
}
