use proptest::prelude::*;
use qrouter_core::model::{cell_smatrix, coefficients, CellCoefficients, CellParams};
use qrouter_core::network::{
    compose_exact, compose_neumann, exact_forward, isolation_from_hd, simplified_forward, LineModel,
};
use qrouter_core::synth::{gen_lines, LineSpec};
use qrouter_core::units::{angular_to_hz, MHZ};
use qrouter_core::{PortMatrix, C64};

fn cell() -> impl Strategy<Value = CellParams> {
    (0.2f64..10.0, 0.2f64..10.0, -1.0f64..1.0, -1.0f64..1.0, 0.0f64..3.0).prop_map(|(a, b, pa, pb, g)| {
        CellParams::new(a * MHZ, b * MHZ, 6163.0 * MHZ)
            .with_phases(pa, pb)
            .with_dephasing(g * MHZ)
    })
}

fn lines(reflection_max: f64) -> impl Strategy<Value = LineModel> {
    (
        -40.0f64..-4.0,
        0.0f64..=reflection_max,
        -40.0f64..-10.0,
        any::<u64>(),
        -20.0f64..20.0,
    )
        .prop_map(|(through_db, refl, iso_db, seed, df)| {
            let spec = LineSpec {
                through_db,
                reflection_max: refl,
                isolation_db: iso_db,
                ..LineSpec::default()
            };
            gen_lines(&spec, seed).unwrap().at(6.163e9 + df * 1e6)
        })
}

/// Line model with every transmission multiplied by `k`.
fn rotate(l: &LineModel, k: C64) -> LineModel {
    let r = |m: &PortMatrix| PortMatrix::two_port(m[(0, 0)], m[(0, 1)] * k, m[(1, 0)] * k, m[(1, 1)]);
    LineModel {
        s_in_a: r(&l.s_in_a),
        s_out_a: r(&l.s_out_a),
        s_in_b: r(&l.s_in_b),
        s_out_b: r(&l.s_out_b),
        isolation: l.isolation,
    }
}

proptest! {
    #[test]
    fn ideal_lines_are_identity(p in cell(), x in -20.0f64..20.0) {
        let s = cell_smatrix(p.omega_ge + x * MHZ, &p).unwrap();
        let r = compose_exact(&s, &LineModel::ideal()).unwrap();
        prop_assert!(r.s_meas.max_abs_diff(&s) <= 1e-12);
    }

    #[test]
    fn neumann_converges_monotonically(p in cell(), l in lines(0.2), x in -5.0f64..5.0) {
        let s = cell_smatrix(p.omega_ge + x * MHZ, &p).unwrap();
        let errs: Vec<f64> = (0..=30).map(|k| compose_neumann(&s, &l, k).unwrap().truncation_error).collect();
        for w in errs.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-15);
        }
        prop_assert!(errs[30] < 1e-12);
    }

    #[test]
    fn isolation_round_trip(l in lines(0.05), mag in 0.001f64..0.3, phase in -3.1f64..3.1) {
        let iso = C64::from_polar(mag, phase);
        let l = LineModel { isolation: iso, ..l };
        let hd = simplified_forward(&CellCoefficients::transparent(), &l);
        let got = isolation_from_hd(&hd).unwrap();
        // Principal branch: ±I.
        let err = (got - iso).norm().min((got + iso).norm());
        prop_assert!(err <= 1e-10 * mag.max(1.0));
        prop_assert!(got.re >= 0.0);
    }

    #[test]
    fn global_line_phase(p in cell(), l in lines(0.2), theta in -3.1f64..3.1, x in -5.0f64..5.0) {
        let w = p.omega_ge + x * MHZ;
        let k = C64::from_polar(1.0, theta);
        let rotated = rotate(&l, k);
        let base = exact_forward(&cell_smatrix(w, &p).unwrap(), &l).unwrap();
        let turned = exact_forward(&cell_smatrix(w, &p).unwrap(), &rotated).unwrap();
        for (a, b) in [(base.t_aa, turned.t_aa), (base.t_bb, turned.t_bb)] {
            prop_assert!((a * k * k - b).norm() <= 1e-12);
        }
        let s = simplified_forward(&coefficients(w, &p).unwrap(), &l);
        let sr = simplified_forward(&coefficients(w, &p).unwrap(), &rotated);
        prop_assert!((s.t_aa * k * k - sr.t_aa).norm() <= 1e-14);
        let hd = |l: &LineModel| isolation_from_hd(&simplified_forward(&CellCoefficients::transparent(), l)).unwrap();
        prop_assert!((hd(&l).norm() - hd(&rotated).norm()).abs() <= 1e-12);
    }
}

/// Largest difference between the simplified and exact forward models,
/// relative to the line gain of each channel, over a resonance sweep.
fn simplified_vs_exact(reflection_max: f64, seeds: u64) -> f64 {
    let p = CellParams::reference_device();
    let spec = LineSpec {
        reflection_max,
        ..LineSpec::default()
    };
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let lines = gen_lines(&spec, seed).unwrap();
        for k in 0..201 {
            let w = p.omega_ge + (k as f64 - 100.0) * 0.2 * MHZ;
            let l = lines.at(angular_to_hz(w));
            let (sa, ga, sb, gb) = l.transmissions();
            let gains = [(sa * ga).norm(), (sb * gb).norm(), (sa * gb).norm(), (sb * ga).norm()];
            let a = simplified_forward(&coefficients(w, &p).unwrap(), &l).to_array();
            let b = exact_forward(&cell_smatrix(w, &p).unwrap(), &l).unwrap().to_array();
            for ((x, y), g) in a.iter().zip(b).zip(gains) {
                worst = worst.max((x - y).norm() / g);
            }
        }
    }
    worst
}

#[test]
fn simplified_forward_tracks_exact_at_small_reflections() {
    let without = simplified_vs_exact(0.0, 5);
    assert!(without < 1e-12, "{without}");
    // Reflections up to 0.03: the first neglected term is r_line·r_cell, so
    // the gap grows linearly in the reflection bound.
    let small = simplified_vs_exact(0.03, 50);
    let half = simplified_vs_exact(0.015, 50);
    println!("simplified vs exact: max relative difference {small:.4} at r ≤ 0.03, {half:.4} at r ≤ 0.015");
    assert!((small / half - 2.0).abs() < 0.3);
    assert!(small < 0.03);
}
