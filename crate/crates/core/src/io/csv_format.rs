use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::spectrum::{Channel, ChannelSpectrum, SpectrumMeta};
use crate::C64;

use super::{drop_nonfinite, Ingested};

const META_COLUMNS: [&str; 3] = ["bias_ma", "power_dbm", "temp_k"];

#[derive(Default)]
struct Columns {
    freq: Option<usize>,
    channel: Option<usize>,
    re: Option<usize>,
    im: Option<usize>,
    meta: [Option<usize>; 3],
}

fn parse_header(fields: &csv::StringRecord, line: usize) -> Result<Columns> {
    let mut c = Columns::default();
    for (i, name) in fields.iter().enumerate() {
        let slot = match name.trim() {
            "freq_hz" => &mut c.freq,
            "channel" | "ch" => &mut c.channel,
            "re" => &mut c.re,
            "im" => &mut c.im,
            "bias_ma" => &mut c.meta[0],
            "power_dbm" => &mut c.meta[1],
            "temp_k" => &mut c.meta[2],
            other => return Err(Error::parse(line, format!("unknown column {other:?}"))),
        };
        if slot.replace(i).is_some() {
            return Err(Error::parse(line, format!("duplicate column {name:?}")));
        }
    }
    for (slot, name) in [(c.freq, "freq_hz"), (c.channel, "channel"), (c.re, "re"), (c.im, "im")] {
        if slot.is_none() {
            return Err(Error::parse(line, format!("missing column {name:?}")));
        }
    }
    Ok(c)
}

fn number(fields: &csv::StringRecord, i: usize, line: usize, what: &str) -> Result<f64> {
    let s = fields
        .get(i)
        .ok_or_else(|| Error::parse(line, format!("missing {what}")))?;
    s.trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("{what} {s:?} is not a number")))
}

/// Per-channel rows of one spectrum: (frequency, value, line).
type Rows = [Vec<(f64, C64, usize)>; 4];

struct Group {
    meta: SpectrumMeta,
    rows: Rows,
}

fn meta_key(m: &SpectrumMeta) -> [Option<u64>; 3] {
    [m.bias_ma, m.power_dbm, m.temp_k].map(|v| v.map(f64::to_bits))
}

/// Parses long-form CSV into one spectrum per distinct acquisition setting.
///
/// Within a spectrum each channel's frequencies must strictly increase and
/// all four channels must share one grid. Rows with non-finite `re`/`im`
/// drop that frequency from every channel; the count is reported.
pub fn read_csv(text: &str) -> Result<Ingested> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| Error::parse(1, "no header row"))?
        .map_err(|e| Error::parse(csv_line(&e), e.to_string()))?;
    let header_line = header.position().map_or(0, |p| p.line() as usize);
    let cols = parse_header(&header, header_line)?;
    let width = [cols.freq, cols.channel, cols.re, cols.im]
        .into_iter()
        .chain(cols.meta)
        .flatten()
        .max()
        .unwrap_or(0)
        + 1;

    let mut groups: Vec<Group> = Vec::new();
    let mut index: HashMap<[Option<u64>; 3], usize> = HashMap::new();
    for rec in records {
        let rec = rec.map_err(|e| Error::parse(csv_line(&e), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != width {
            return Err(Error::parse(
                line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        let f = number(&rec, cols.freq.unwrap(), line, "frequency")?;
        if !f.is_finite() {
            return Err(Error::parse(line, "non-finite frequency"));
        }
        let ch: Channel = rec[cols.channel.unwrap()]
            .parse()
            .map_err(|_| Error::parse(line, format!("unknown channel {:?}", &rec[cols.channel.unwrap()])))?;
        let z = C64::new(
            number(&rec, cols.re.unwrap(), line, "re")?,
            number(&rec, cols.im.unwrap(), line, "im")?,
        );
        let mut m = [None; 3];
        for (k, col) in cols.meta.iter().enumerate() {
            if let Some(i) = *col {
                if !rec[i].is_empty() {
                    m[k] = Some(number(&rec, i, line, META_COLUMNS[k])?);
                }
            }
        }
        let meta = SpectrumMeta {
            bias_ma: m[0],
            power_dbm: m[1],
            temp_k: m[2],
        };
        let g = *index.entry(meta_key(&meta)).or_insert_with(|| {
            groups.push(Group {
                meta,
                rows: Default::default(),
            });
            groups.len() - 1
        });
        let rows = &mut groups[g].rows[ch.index()];
        if let Some(&(last, _, last_line)) = rows.last() {
            if f == last {
                return Err(Error::parse(
                    line,
                    format!("duplicate frequency {f} Hz for channel {ch} (first at line {last_line})"),
                ));
            }
            if f < last {
                return Err(Error::parse(
                    line,
                    format!("frequency {f} Hz for channel {ch} is not increasing"),
                ));
            }
        }
        rows.push((f, z, line));
    }
    if groups.is_empty() {
        return Err(Error::parse(header_line, "no data rows"));
    }

    let mut spectra = Vec::with_capacity(groups.len());
    let mut dropped = 0;
    for g in groups {
        let (mut freqs, mut traces) = assemble(&g.rows)?;
        dropped += drop_nonfinite(&mut freqs, &mut traces);
        if freqs.is_empty() {
            return Err(Error::invalid("no finite samples left after dropping non-finite rows"));
        }
        spectra.push(ChannelSpectrum::new(freqs, traces)?.with_meta(g.meta));
    }
    Ok(Ingested {
        spectra,
        dropped_nonfinite: dropped,
    })
}

fn csv_line(e: &csv::Error) -> usize {
    e.position().map_or(0, |p| p.line() as usize)
}

/// Checks that all channels share the grid of the longest one.
fn assemble(rows: &Rows) -> Result<(Vec<f64>, [Vec<C64>; 4])> {
    let reference = Channel::ALL
        .iter()
        .max_by_key(|c| rows[c.index()].len())
        .copied()
        .unwrap();
    let grid: Vec<f64> = rows[reference.index()].iter().map(|r| r.0).collect();
    for ch in Channel::ALL {
        let r = &rows[ch.index()];
        if r.is_empty() {
            let line = rows[reference.index()][0].2;
            return Err(Error::parse(line, format!("channel {ch} has no rows in this spectrum")));
        }
        if let Some(k) = (0..grid.len()).find(|&k| r.get(k).map(|x| x.0) != Some(grid[k])) {
            let line = r.get(k).map_or(rows[reference.index()][k].2, |x| x.2);
            return Err(Error::parse(
                line,
                format!("channel {ch} does not share the frequency grid of channel {reference}"),
            ));
        }
    }
    let traces = [0, 1, 2, 3].map(|c| rows[c].iter().map(|r| r.1).collect());
    Ok((grid, traces))
}

/// Long-form CSV of `spectra`. Floats use shortest round-trip formatting, so
/// reading the output back reproduces the input exactly.
pub fn write_csv(spectra: &[ChannelSpectrum], comments: &[String]) -> String {
    type Getter = fn(&SpectrumMeta) -> Option<f64>;
    let has = |get: Getter| spectra.iter().any(|s| get(&s.meta).is_some());
    let meta_cols: Vec<(usize, Getter)> = [
        (0, (|m: &SpectrumMeta| m.bias_ma) as Getter),
        (1, |m: &SpectrumMeta| m.power_dbm),
        (2, |m: &SpectrumMeta| m.temp_k),
    ]
    .into_iter()
    .filter(|(_, g)| has(*g))
    .collect();

    let mut out = String::new();
    for c in comments {
        for l in c.lines() {
            let _ = writeln!(out, "# {l}");
        }
    }
    out.push_str("freq_hz,channel,re,im");
    for (k, _) in &meta_cols {
        let _ = write!(out, ",{}", META_COLUMNS[*k]);
    }
    out.push('\n');
    for s in spectra {
        for (i, f) in s.freqs_hz().iter().enumerate() {
            for (ch, z) in Channel::ALL.iter().zip(s.at(i)) {
                let _ = write!(out, "{f},{ch},{},{}", z.re, z.im);
                for (_, get) in &meta_cols {
                    match get(&s.meta) {
                        Some(v) => {
                            let _ = write!(out, ",{v}");
                        }
                        None => out.push(','),
                    }
                }
                out.push('\n');
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrum(shift: f64) -> ChannelSpectrum {
        let f: Vec<f64> = vec![6.1e9, 6.1e9 + 1.0 / 3.0, 6.2e9];
        let tr = |k: f64| f.iter().map(|x| C64::new(k * x.sin() + shift, 0.1 / 7.0 * k)).collect();
        ChannelSpectrum::new(f.clone(), [tr(1.0), tr(2.0), tr(-3.0), tr(1e-300)]).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let a = spectrum(0.0).with_meta(SpectrumMeta {
            bias_ma: Some(0.1),
            ..Default::default()
        });
        let b = spectrum(0.5).with_meta(SpectrumMeta {
            bias_ma: Some(-0.2),
            ..Default::default()
        });
        let text = write_csv(&[a.clone(), b.clone()], &["run abc".into()]);
        let back = read_csv(&text).unwrap();
        assert_eq!(back.dropped_nonfinite, 0);
        assert_eq!(back.spectra, vec![a, b]);
    }

    #[test]
    fn short_header_and_comments() {
        let text = "# hello\nfreq_hz,ch,re,im\n1,AA,1,0\n1,BB,1,0\n1,AB',0,0\n1,BA,0,0\n2,AA,1,0\n2,BB,1,0\n2,AB,0,0\n2,BA,0,1\n";
        let s = read_csv(text).unwrap().into_single().unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.trace(Channel::BA)[1], C64::new(0.0, 1.0));
    }

    #[test]
    fn duplicate_frequency_names_line() {
        let text = "freq_hz,channel,re,im\n1,AA,1,0\n1,AA,1,0\n";
        match read_csv(text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("duplicate"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_monotone_and_malformed() {
        let e = read_csv("freq_hz,channel,re,im\n2,AA,1,0\n1,AA,1,0\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }));
        let e = read_csv("freq,channel,re,im\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        let e = read_csv("freq_hz,channel,re\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        let e = read_csv("freq_hz,channel,re,im\n1,AA,x,0\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = read_csv("freq_hz,channel,re,im\n1,AC,1,0\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn channel_count_mismatch() {
        let text = "freq_hz,channel,re,im\n1,AA,1,0\n1,BB,1,0\n1,AB,0,0\n1,BA,0,0\n2,AA,1,0\n2,BB,1,0\n2,AB,0,0\n";
        let e = read_csv(text).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 8, .. }), "{e:?}");
    }

    #[test]
    fn non_finite_rows_dropped_and_counted() {
        let mut text = String::from("freq_hz,channel,re,im\n");
        for f in 1..=3 {
            for ch in Channel::ALL {
                let re = if f == 2 && ch == Channel::AB { "NaN" } else { "1" };
                text.push_str(&format!("{f},{ch},{re},0\n"));
            }
        }
        let r = read_csv(&text).unwrap();
        assert_eq!(r.dropped_nonfinite, 1);
        assert_eq!(r.spectra[0].freqs_hz(), &[1.0, 3.0]);
    }
}
