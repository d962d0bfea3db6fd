use mpqkd_core::model::{
    click_prob_given_intensity, click_prob_given_photons, key_rate, pairing_rate, round_click_prob,
    single_photon_ratio, x_gain_and_phase_error, z_bit_error, z_pair_ratio,
};
use mpqkd_core::{ClickModel, IntensityBits, PairingInterval, Scenario, SystemParams};
use proptest::prelude::*;

fn scenario(l_a: f64, l_b: f64, mu_a: f64, mu_b: f64, lambda: PairingInterval, params: SystemParams) -> Scenario {
    let (l_a, l_b, mu_a, mu_b) = if l_a <= l_b {
        (l_a, l_b, mu_a, mu_b)
    } else {
        (l_b, l_a, mu_b, mu_a)
    };
    Scenario::from_distances(l_a, l_b, mu_a, mu_b, lambda, params).unwrap()
}

fn interval() -> impl Strategy<Value = PairingInterval> {
    prop_oneof![
        (1u64..10_000_000).prop_map(PairingInterval::Rounds),
        Just(PairingInterval::Infinite),
    ]
}

proptest! {
    #[test]
    fn key_rate_is_symmetric_under_arm_swap(
        l_a in 0.0..250.0f64, l_b in 0.0..250.0f64,
        mu_a in 0.01..1.0f64, mu_b in 0.01..1.0f64,
        lambda in interval(),
    ) {
        let s = scenario(l_a, l_b, mu_a, mu_b, lambda, SystemParams::standard());
        let k = key_rate(&s).unwrap();
        let w = key_rate(&s.swap_arms()).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        prop_assert!(close(k.raw_rate, w.raw_rate), "{} vs {}", k.raw_rate, w.raw_rate);
        prop_assert!(close(k.r_s, w.r_s) && close(k.e_z, w.e_z) && close(k.q_bar_11, w.q_bar_11));
    }

    #[test]
    fn pairing_rate_is_monotone_and_bounded(p in 1e-9..1.0f64, lambda in 1u64..1_000_000) {
        let here = pairing_rate(p, PairingInterval::Rounds(lambda)).unwrap();
        let next = pairing_rate(p, PairingInterval::Rounds(lambda + 1)).unwrap();
        let limit = pairing_rate(p, PairingInterval::Infinite).unwrap();
        prop_assert!(next >= here * (1.0 - 1e-14));
        prop_assert!(here <= limit * (1.0 + 1e-14));
        let single = pairing_rate(p, PairingInterval::Rounds(1)).unwrap();
        prop_assert!((single - p * p / (1.0 + p)).abs() <= 1e-12 * single);
    }

    #[test]
    fn outputs_are_probabilities(
        l_a in 0.0..400.0f64, l_b in 0.0..400.0f64,
        mu_a in 0.0..1.0f64, mu_b in 0.0..1.0f64,
        p_d in 0.0..1e-3f64, e_d in 0.0..0.49f64,
        n_a in 0u32..20, n_b in 0u32..20,
    ) {
        let params = SystemParams::standard().with_dark_count(p_d).with_misalignment(e_d);
        let s = scenario(l_a, l_b, mu_a, mu_b, PairingInterval::Infinite, params);
        let unit = 0.0..=1.0;
        for z in IntensityBits::ALL {
            prop_assert!(unit.contains(&click_prob_given_intensity(z, &s)));
        }
        prop_assert!(unit.contains(&click_prob_given_photons(n_a, n_b, &s)));
        prop_assert!(unit.contains(&round_click_prob(&s)));
        if let Ok(k) = key_rate(&s) {
            prop_assert!(unit.contains(&k.r_s) && unit.contains(&k.e_z) && unit.contains(&k.q_bar_11));
            prop_assert!(unit.contains(&k.e_11) && unit.contains(&k.y_11) && unit.contains(&k.r_p));
            prop_assert!(k.rate >= 0.0 && k.rate <= 1.0);
        }
    }

    #[test]
    fn dark_count_free_errors(
        l_a in 0.0..300.0f64, l_b in 0.0..300.0f64,
        mu_a in 0.01..1.0f64, mu_b in 0.01..1.0f64, e_d in 0.0..0.49f64,
    ) {
        let params = SystemParams::standard().with_dark_count(0.0).with_misalignment(e_d);
        let s = scenario(l_a, l_b, mu_a, mu_b, PairingInterval::Infinite, params);
        prop_assert_eq!(z_bit_error(&s).unwrap(), 0.0);
        let (_, e) = x_gain_and_phase_error(&s).unwrap();
        prop_assert!((e - e_d).abs() < 1e-15);
    }

    #[test]
    fn linearization_agrees_in_weak_regime(
        l_a in 115.0..250.0f64, l_b in 115.0..250.0f64,
        mu_a in 0.01..1.0f64, mu_b in 0.01..1.0f64,
    ) {
        // Beyond 115 km, eta * mu stays below 1e-3.
        let params = SystemParams::standard().with_dark_count(0.0);
        let s = scenario(l_a, l_b, mu_a, mu_b, PairingInterval::Infinite, params);
        let lin = s.with_click_model(ClickModel::Linearized);
        let rel = |a: f64, b: f64| (a - b).abs() / b;
        prop_assert!(rel(round_click_prob(&s), round_click_prob(&lin)) < 5e-3);
        prop_assert!(rel(z_pair_ratio(&s).unwrap(), z_pair_ratio(&lin).unwrap()) < 5e-3);
        prop_assert!(rel(single_photon_ratio(&s).unwrap(), single_photon_ratio(&lin).unwrap()) < 5e-3);
        let (xa, xb) = (s.link_a.eta() * s.mu_a, s.link_b.eta() * s.mu_b);
        prop_assert!(rel(round_click_prob(&lin), (xa + xb) / 2.0) < 1e-12);
        prop_assert!(rel(single_photon_ratio(&lin).unwrap(), (-s.mu_a - s.mu_b).exp()) < 1e-12);
    }

    #[test]
    fn rate_does_not_grow_with_distance(
        l_a in 0.0..300.0f64, l_b in 0.0..300.0f64, extra in 0.0..50.0f64,
        mu_a in 0.01..1.0f64, mu_b in 0.01..1.0f64, lambda in interval(),
    ) {
        let params = SystemParams::standard();
        let near = key_rate(&scenario(l_a, l_b, mu_a, mu_b, lambda, params)).unwrap().rate;
        let far_a = key_rate(&scenario(l_a + extra, l_b, mu_a, mu_b, lambda, params)).unwrap().rate;
        let far_b = key_rate(&scenario(l_a, l_b + extra, mu_a, mu_b, lambda, params)).unwrap().rate;
        prop_assert!(far_a <= near * (1.0 + 1e-12));
        prop_assert!(far_b <= near * (1.0 + 1e-12));
    }
}
