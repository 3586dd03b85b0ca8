use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::spectrum::{Channel, ChannelSpectrum};
use crate::units::amplitude_db;
use crate::C64;

use super::{drop_nonfinite, Ingested};

const PORTS: usize = 4;
const VALUES_PER_POINT: usize = 1 + 2 * PORTS * PORTS;

/// Zero-based (row, col) of each channel in the 4×4 S-matrix.
fn position(ch: Channel) -> (usize, usize) {
    match ch {
        Channel::AA => (1, 0),
        Channel::BB => (3, 2),
        Channel::AB => (3, 0),
        Channel::BA => (1, 2),
    }
}

/// Number pair encoding of touchstone data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TouchstoneFormat {
    /// Real, imaginary.
    Ri,
    /// Magnitude, angle in degrees.
    Ma,
    /// 20·log10 magnitude, angle in degrees.
    Db,
}

impl FromStr for TouchstoneFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RI" => Ok(Self::Ri),
            "MA" => Ok(Self::Ma),
            "DB" => Ok(Self::Db),
            other => Err(Error::invalid(format!("unknown touchstone format {other:?}"))),
        }
    }
}

impl TouchstoneFormat {
    fn decode(self, a: f64, b: f64) -> C64 {
        match self {
            Self::Ri => C64::new(a, b),
            Self::Ma => C64::from_polar(a, b.to_radians()),
            Self::Db => C64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
        }
    }

    fn encode(self, z: C64) -> (f64, f64) {
        match self {
            Self::Ri => (z.re, z.im),
            Self::Ma => (z.norm(), z.arg().to_degrees()),
            Self::Db => (amplitude_db(z.norm()), z.arg().to_degrees()),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::Ri => "RI",
            Self::Ma => "MA",
            Self::Db => "DB",
        }
    }
}

fn unit_scale(s: &str) -> Option<f64> {
    match s.to_ascii_uppercase().as_str() {
        "HZ" => Some(1.0),
        "KHZ" => Some(1e3),
        "MHZ" => Some(1e6),
        "GHZ" => Some(1e9),
        _ => None,
    }
}

/// Reads a version-1 four-port touchstone file.
pub fn read_touchstone(text: &str) -> Result<Ingested> {
    // Defaults of the format when no option line is present.
    let mut scale = 1e9;
    let mut format = TouchstoneFormat::Ma;
    let mut seen_option = false;
    let mut tokens: Vec<(f64, usize)> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('!').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(opts) = content.strip_prefix('#') {
            if seen_option {
                return Err(Error::parse(line, "second option line"));
            }
            seen_option = true;
            let mut it = opts.split_whitespace();
            while let Some(w) = it.next() {
                if let Some(s) = unit_scale(w) {
                    scale = s;
                } else if let Ok(f) = w.parse::<TouchstoneFormat>() {
                    format = f;
                } else if w.eq_ignore_ascii_case("S") {
                } else if w.eq_ignore_ascii_case("R") {
                    let z0 = it
                        .next()
                        .ok_or_else(|| Error::parse(line, "missing reference impedance"))?;
                    z0.parse::<f64>()
                        .map_err(|_| Error::parse(line, format!("bad reference impedance {z0:?}")))?;
                } else {
                    return Err(Error::parse(line, format!("unsupported option {w:?}")));
                }
            }
            continue;
        }
        if content.starts_with('[') {
            return Err(Error::parse(line, "touchstone version 2 keywords are not supported"));
        }
        for w in content.split_whitespace() {
            let v = w
                .parse::<f64>()
                .map_err(|_| Error::parse(line, format!("{w:?} is not a number")))?;
            tokens.push((v, line));
        }
    }
    if tokens.is_empty() {
        return Err(Error::parse(1, "no data"));
    }
    if !tokens.len().is_multiple_of(VALUES_PER_POINT) {
        let line = tokens.last().unwrap().1;
        return Err(Error::parse(
            line,
            format!(
                "{} values is not a whole number of {VALUES_PER_POINT}-value four-port records",
                tokens.len()
            ),
        ));
    }

    let mut freqs = Vec::new();
    let mut traces: [Vec<C64>; 4] = Default::default();
    for rec in tokens.chunks(VALUES_PER_POINT) {
        let (f, line) = rec[0];
        let f = f * scale;
        if !f.is_finite() {
            return Err(Error::parse(line, "non-finite frequency"));
        }
        if let Some(&last) = freqs.last() {
            if f == last {
                return Err(Error::parse(line, format!("duplicate frequency {f} Hz")));
            }
            if f < last {
                return Err(Error::parse(line, format!("frequency {f} Hz is not increasing")));
            }
        }
        freqs.push(f);
        for ch in Channel::ALL {
            let (r, c) = position(ch);
            let k = 1 + 2 * (r * PORTS + c);
            traces[ch.index()].push(format.decode(rec[k].0, rec[k + 1].0));
        }
    }
    let dropped = drop_nonfinite(&mut freqs, &mut traces);
    if freqs.is_empty() {
        return Err(Error::invalid("no finite samples left after dropping non-finite rows"));
    }
    Ok(Ingested {
        spectra: vec![ChannelSpectrum::new(freqs, traces)?],
        dropped_nonfinite: dropped,
    })
}

/// Writes a four-port touchstone file in Hz. Entries outside the four
/// channels are zero.
pub fn write_touchstone(s: &ChannelSpectrum, format: TouchstoneFormat, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        for l in c.lines() {
            let _ = writeln!(out, "! {l}");
        }
    }
    out.push_str("! ports: 1 = A-in, 2 = A-out, 3 = B-in, 4 = B-out\n");
    let _ = writeln!(out, "# Hz S {} R 50", format.name());
    for (i, f) in s.freqs_hz().iter().enumerate() {
        let mut m = [[C64::new(0.0, 0.0); PORTS]; PORTS];
        for (ch, z) in Channel::ALL.iter().zip(s.at(i)) {
            let (r, c) = position(*ch);
            m[r][c] = z;
        }
        for (r, row) in m.iter().enumerate() {
            if r == 0 {
                let _ = write!(out, "{f}");
            } else {
                out.push(' ');
            }
            for z in row {
                let (a, b) = format.encode(*z);
                let _ = write!(out, " {a} {b}");
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrum() -> ChannelSpectrum {
        let f = vec![6.1e9, 6.15e9, 6.2e9];
        let tr = |k: f64| f.iter().map(|x| C64::from_polar(0.3 * k, x * 1e-9 * k)).collect();
        ChannelSpectrum::new(f.clone(), [tr(1.0), tr(2.0), tr(0.5), tr(0.25)]).unwrap()
    }

    #[test]
    fn ri_round_trip_is_exact() {
        let s = spectrum();
        let back = read_touchstone(&write_touchstone(&s, TouchstoneFormat::Ri, &[]))
            .unwrap()
            .into_single()
            .unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn ma_and_db_round_trip() {
        let s = spectrum();
        for fmt in [TouchstoneFormat::Ma, TouchstoneFormat::Db] {
            let back = read_touchstone(&write_touchstone(&s, fmt, &["x".into()]))
                .unwrap()
                .into_single()
                .unwrap();
            for ch in Channel::ALL {
                for (a, b) in back.trace(ch).iter().zip(s.trace(ch)) {
                    assert!((a - b).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn port_map() {
        // S21 = 1, S43 = 2, S41 = 3, S23 = 4, everything else 9.
        let mut vals = vec![9.0; 16];
        vals[4] = 1.0;
        vals[14] = 2.0;
        vals[12] = 3.0;
        vals[6] = 4.0;
        let mut text = String::from("# MHz S RI R 50\n6000");
        for v in &vals {
            text.push_str(&format!(" {v} 0"));
        }
        let s = read_touchstone(&text).unwrap().into_single().unwrap();
        assert_eq!(s.freqs_hz(), &[6e9]);
        assert_eq!(s.at(0).map(|z| z.re), [1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn errors_carry_lines() {
        let e = read_touchstone("# Hz S RI R 50\n1 2 3\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = read_touchstone("# Hz Y RI R 50\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        let mut text = String::from("# Hz S RI R 50\n");
        for _ in 0..2 {
            text.push('5');
            for _ in 0..32 {
                text.push_str(" 0");
            }
            text.push('\n');
        }
        let e = read_touchstone(&text).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e:?}");
    }
}
