use std::sync::OnceLock;

use proptest::prelude::*;
use qkdnet::chanstats::{apply_stl_postfilter, pair_stats, router_loss_db, storage_histogram, StatsOptions};
use qkdnet::netsim::{run, ProtocolSpec, SimConfig, SimRecord};
use qkdnet::topology::{build_default_topology, NetworkTopology};

fn congested() -> &'static (SimRecord, NetworkTopology) {
    static REC: OnceLock<(SimRecord, NetworkTopology)> = OnceLock::new();
    REC.get_or_init(|| {
        let topo = build_default_topology();
        let cfg = SimConfig {
            protocol: ProtocolSpec::storage_unlimited(),
            mean_interarrival: 3e-3,
            initial_frame_length: 2e-3,
            frames_per_sender: 400,
            seed: 3,
            ..SimConfig::default()
        };
        (run(&cfg, &topo).unwrap(), topo)
    })
}

proptest! {
    #[test]
    fn router_loss_monotone(t in 0.0f64..1e-2, dt in 0.0f64..1e-3, a in 0.0f64..0.5, da in 0.0f64..0.1) {
        let v_g = 2e5;
        let base = router_loss_db(t, v_g, a).unwrap();
        prop_assert!(base >= 4.0);
        prop_assert!(router_loss_db(t + dt, v_g, a).unwrap() >= base);
        prop_assert!(router_loss_db(t, v_g, a + da).unwrap() >= base);
    }

    #[test]
    fn tighter_stl_excludes_more(lo in 0.0f64..2e-3, extra in 0.0f64..2e-3) {
        let (rec, topo) = congested();
        let (s, r) = (topo.lookup("A22").unwrap(), topo.lookup("B31").unwrap());
        let count = |stl: f64| {
            let f = apply_stl_postfilter(rec, stl);
            f.frames.iter().filter(|fr| fr.src == s && fr.dst == r && fr.excluded_by_stl).count()
        };
        prop_assert!(count(lo) >= count(lo + extra));
        let on_the_fly = StatsOptions { post_stl: Some(lo), ..Default::default() };
        let filtered = apply_stl_postfilter(rec, lo);
        let a = pair_stats(&filtered, topo, &rec.config, (s, r), &StatsOptions::default());
        let b = pair_stats(rec, topo, &rec.config, (s, r), &on_the_fly);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn histogram_counts_every_delivered_frame(bin_us in 1.0f64..500.0) {
        let (rec, _) = congested();
        let h = storage_histogram(rec, None, bin_us * 1e-6).unwrap();
        let total: usize = h.classes.values().map(|c| c.counts.iter().sum::<usize>()).sum();
        prop_assert_eq!(total, rec.delivered());
        for c in h.classes.values() {
            prop_assert_eq!(c.counts.iter().sum::<usize>(), c.frames);
        }
    }
}

#[test]
fn storage_lowers_transmittance_but_keeps_pulses() {
    let (rec, topo) = congested();
    let (s, r) = (topo.lookup("A31").unwrap(), topo.lookup("B32").unwrap());
    let st = pair_stats(rec, topo, &rec.config, (s, r), &StatsOptions::default()).unwrap();
    assert!(st.mean_router_loss_db > 4.0);
    assert!(st.avg_eta_tot < 10f64.powf(-0.6));
    assert_eq!(st.n_routed, st.frames_delivered as u64 * 1_000_000 * 2);
    assert_eq!(st.n_sent, st.frames_generated as u64 * 2_000_000);
}
