mod common;

use common::compare::{check_against_oracle, draw, oracle_input, TOL};
use common::oracle::{self, rel_err};
use proptest::prelude::*;
use qkdnet::keyrate::*;

fn reference_params() -> ProtocolParams {
    ProtocolParams { q_x: 0.7, p_mu1: 0.7, p_mu2: 0.2, mu1: 0.5, mu2: 0.1 }
}

#[test]
fn tau_matches_oracle() {
    let sec = SecurityParams::default();
    let got = tau(1, &reference_params(), &sec);
    let want = oracle::tau_f64(1, [0.5, 0.1, 0.0002], [0.7, 0.2, 0.1]);
    assert!(rel_err(got, want) < 1e-14, "{got} vs {want}");
}

#[test]
fn detection_count_matches_oracle() {
    let sec = SecurityParams::default();
    let ch = ChannelInput { n_routed: 1e10, n_sent: 1e10, eta_tot: 0.2512 };
    let got = detection_count(Basis::X, 0.5, 0.7, &ch, &reference_params(), &sec);
    let want = oracle::detection_f64(1e10, 0.49, 0.7, 0.2512, 0.15, 0.5, 2e-7);
    assert!(rel_err(got, want) < 1e-13, "{got} vs {want}");
}

#[test]
fn finite_size_bound_matches_oracle() {
    let sec = SecurityParams::default();
    for (shift, plus) in [(Shift::Lower, false), (Shift::Upper, true)] {
        let got = finite_size_bound(1e6, 3e6, 0.1, 0.3, shift, &sec);
        let want = oracle::shifted_f64(1e6, 3e6, 0.1, 0.3, 1e-10, plus);
        assert!(rel_err(got, want) < 1e-13, "{got} vs {want}");
    }
}

#[test]
fn gamma_matches_oracle() {
    let got = gamma_term(1e-10, 0.01, 1e5, 1e5).unwrap();
    let want = oracle::gamma_f64(1e-10, 0.01, 1e5, 1e5);
    assert!(rel_err(got, want) < 1e-13, "{got} vs {want}");
}

#[test]
fn reference_channel_matches_oracle() {
    let sec = SecurityParams::default();
    let ch = ChannelInput { n_routed: 3.75e10, n_sent: 3.75e10, eta_tot: 0.2512 };
    let bad = check_against_oracle(&ch, &reference_params(), &sec);
    assert!(bad.is_empty(), "{bad:#?}");
    let k = key_length(&ch, &reference_params(), &sec).unwrap();
    assert!(k.ell > 0.0);
}

#[test]
fn vz1_monotone_in_misalignment() {
    let ch = ChannelInput { n_routed: 1e10, n_sent: 1e10, eta_tot: 0.05 };
    let mut last = 0.0;
    for e_mis in [0.0, 0.001, 0.005, 0.01, 0.02, 0.05, 0.1] {
        let sec = SecurityParams { e_mis, ..Default::default() };
        let got = vz1_bound(&ch, &reference_params(), &sec).unwrap();
        let want = oracle::evaluate(&oracle_input(&ch, &reference_params(), &sec)).v_z1;
        assert!(rel_err(got, want) < TOL, "e_mis {e_mis}: {got} vs {want}");
        assert!(got >= last);
        last = got;
    }
}

fn valid_draw() -> impl Strategy<Value = (ChannelInput, ProtocolParams)> {
    proptest::array::uniform8(0.0f64..1.0).prop_map(draw)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    #[test]
    fn pipeline_matches_oracle((ch, p) in valid_draw()) {
        let bad = check_against_oracle(&ch, &p, &SecurityParams::default());
        prop_assert!(bad.is_empty(), "{:?} {:?}: {:#?}", ch, p, bad);
    }

    #[test]
    fn bounds_within_parent_counts((ch, p) in valid_draw()) {
        let k = key_length(&ch, &p, &SecurityParams::default()).unwrap();
        prop_assert!(k.s_x1 >= 0.0 && k.s_x1 <= k.n_x);
        prop_assert!(k.s_z1 >= 0.0 && k.s_z1 <= k.n_z);
        prop_assert!(k.s_x0 >= 0.0 && k.s_x0 <= k.n_x);
        prop_assert!(k.v_z1 >= 0.0 && k.v_z1 <= k.m_z);
        prop_assert!(k.e_obs >= 0.0 && k.e_obs <= 1.0);
        if let Some(phi) = k.phi_x {
            prop_assert!((0.0..=0.5).contains(&phi));
        }
        prop_assert!(k.ell >= 0.0);
        prop_assert!((k.rate_per_sent * ch.n_sent - k.ell).abs() <= 1e-12 * k.ell);
        prop_assert!((k.rate_per_routed * ch.n_routed - k.ell).abs() <= 1e-12 * k.ell);
    }
}
