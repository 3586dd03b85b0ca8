use proptest::prelude::*;
use qrouter_core::io::{read_csv, read_touchstone, write_csv, write_touchstone, TouchstoneFormat};
use qrouter_core::spectrum::SpectrumMeta;
use qrouter_core::{Channel, ChannelSpectrum, C64};

fn spectrum(n: usize) -> impl Strategy<Value = ChannelSpectrum> {
    let steps = prop::collection::vec(1.0f64..1e7, n);
    let values = prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 4 * n);
    (1e6f64..1e10, steps, values).prop_map(move |(f0, steps, values)| {
        let freqs: Vec<f64> = steps
            .iter()
            .scan(f0, |f, d| {
                *f += d;
                Some(*f)
            })
            .collect();
        let traces = [0, 1, 2, 3].map(|c| {
            values[c * n..(c + 1) * n]
                .iter()
                .map(|&(a, b)| C64::new(a, b))
                .collect()
        });
        ChannelSpectrum::new(freqs, traces).unwrap()
    })
}

fn sweep() -> impl Strategy<Value = Vec<ChannelSpectrum>> {
    (1usize..20, 1usize..5)
        .prop_flat_map(|(n, m)| prop::collection::vec(spectrum(n), m))
        .prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(k, s)| {
                    s.with_meta(SpectrumMeta {
                        bias_ma: Some(-0.5 + 0.1 * k as f64),
                        power_dbm: None,
                        temp_k: Some(0.01),
                    })
                })
                .collect()
        })
}

proptest! {
    #[test]
    fn csv_round_trip_is_identity(spectra in sweep()) {
        let back = read_csv(&write_csv(&spectra, &["generated".into()])).unwrap();
        prop_assert_eq!(back.dropped_nonfinite, 0);
        prop_assert_eq!(back.spectra, spectra);
    }

    #[test]
    fn touchstone_ri_round_trip_is_identity(s in (1usize..30).prop_flat_map(spectrum)) {
        let back = read_touchstone(&write_touchstone(&s, TouchstoneFormat::Ri, &[])).unwrap().into_single().unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn touchstone_ma_round_trip(s in (1usize..30).prop_flat_map(spectrum)) {
        let back = read_touchstone(&write_touchstone(&s, TouchstoneFormat::Ma, &[])).unwrap().into_single().unwrap();
        prop_assert_eq!(back.freqs_hz(), s.freqs_hz());
        for ch in Channel::ALL {
            for (a, b) in back.trace(ch).iter().zip(s.trace(ch)) {
                prop_assert!((a - b).norm() <= 1e-12 * b.norm().max(1.0));
            }
        }
    }
}
