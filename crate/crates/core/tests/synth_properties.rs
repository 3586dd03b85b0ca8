use proptest::prelude::*;
use qrouter_core::model::coefficients;
use qrouter_core::network::simplified_forward;
use qrouter_core::synth::{derive_seed, gen_spectrum, CampaignConfig};
use qrouter_core::units::angular_to_hz;
use qrouter_core::Channel;

fn cfg(seed: u64, sigma: f64) -> CampaignConfig {
    CampaignConfig {
        noise_sigma: sigma,
        seed,
        ..CampaignConfig::default()
    }
}

/// RMS of the noise on the measured channels, in units of each channel's
/// line gain.
fn relative_noise(seed: u64, sigma: f64) -> f64 {
    let s = gen_spectrum(&cfg(seed, sigma)).unwrap();
    let omegas = s.meas.omegas();
    let mut sum = 0.0;
    for (i, &w) in omegas.iter().enumerate() {
        let l = s.lines.at(angular_to_hz(w));
        let clean = simplified_forward(&coefficients(w, &s.truth).unwrap(), &l).to_array();
        let (sa, ga, sb, gb) = l.transmissions();
        let gain = [(sa * ga).norm(), (sb * gb).norm(), (sa * gb).norm(), (sb * ga).norm()];
        for ch in Channel::ALL {
            let k = ch.index();
            sum += ((s.meas.at(i)[k] - clean[k]) / gain[k]).norm_sqr();
        }
    }
    (sum / (4 * omegas.len()) as f64).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn same_seed_same_campaign(seed in any::<u64>()) {
        prop_assert_eq!(gen_spectrum(&cfg(seed, 1e-2)).unwrap(), gen_spectrum(&cfg(seed, 1e-2)).unwrap());
    }

    #[test]
    fn different_seeds_differ(seed in any::<u64>()) {
        let a = gen_spectrum(&cfg(seed, 1e-2)).unwrap();
        let b = gen_spectrum(&cfg(seed.wrapping_add(1), 1e-2)).unwrap();
        prop_assert_ne!(a.meas, b.meas);
    }

    #[test]
    fn noise_scales_with_sigma(seed in any::<u64>()) {
        for sigma in [1e-4, 1e-3, 1e-2] {
            let r = relative_noise(seed, sigma) / sigma;
            // 2404 complex samples: the RMS estimate is good to a few percent.
            prop_assert!((r - 1.0).abs() < 0.06, "sigma {sigma}: ratio {r}");
        }
    }
}

#[test]
fn derived_seeds_do_not_collide() {
    let mut seen = std::collections::HashSet::new();
    for base in 0..100u64 {
        for idx in 0..100u64 {
            assert!(seen.insert(derive_seed(base, idx)));
        }
    }
}
