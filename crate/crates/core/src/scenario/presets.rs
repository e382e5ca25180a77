//! Parameter grids of the published key-rate studies.

use super::{ScenarioConfig, ScenarioError, Sweep, SweepAxis};
use crate::chanstats::DEFAULT_BIN_WIDTH;
use crate::netsim::{ProtocolSpec, SimConfig};

pub const PRESET_NAMES: [&str; 5] = ["fig4", "fig5", "fig6", "fig7", "fig8"];

const US: f64 = 1e-6;

fn us(values: &[f64]) -> Vec<f64> {
    values.iter().map(|v| v * US).collect()
}

fn base(name: &str, frames_per_pair: u64, protocol: ProtocolSpec) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        frames_per_pair,
        sim: SimConfig { protocol, ..SimConfig::default() },
        ..ScenarioConfig::default()
    }
}

fn traffic(mut c: ScenarioConfig, interarrival_us: f64, frame_us: f64, guard_us: f64) -> ScenarioConfig {
    c.sim.mean_interarrival = interarrival_us * US;
    c.sim.initial_frame_length = frame_us * US;
    c.sim.initial_guard_time = guard_us * US;
    c
}

const INTERARRIVALS_US: [f64; 6] = [3000.0, 6000.0, 10000.0, 15000.0, 20000.0, 30000.0];

/// (label, 1/gamma, T_f^0, T_g^0) in microseconds
const STORAGE_VARIANTS: [(&str, f64, f64, f64); 4] = [
    ("a", 30000.0, 2000.0, 0.0),
    ("b", 30000.0, 2000.0, 800.0),
    ("c", 3000.0, 200.0, 0.0),
    ("d", 3000.0, 200.0, 80.0),
];

pub const ATTENUATIONS: [f64; 11] = [0.001, 0.002, 0.003, 0.005, 0.01, 0.02, 0.03, 0.05, 0.1, 0.16, 0.3];

fn stl_grid_us(step: f64, max: f64) -> Vec<f64> {
    let n = (max / step).round() as usize;
    (1..=n).map(|i| i as f64 * step).collect()
}

fn fig4() -> Vec<ScenarioConfig> {
    let mut a = base("fig4a", 18_750, ProtocolSpec::no_storage());
    a.sweep = vec![
        Sweep::numbers(SweepAxis::InitialFrameLength, &us(&[500.0, 1000.0, 2000.0, 4000.0, 8000.0])),
        Sweep::numbers(SweepAxis::MeanInterarrival, &us(&INTERARRIVALS_US)),
    ];
    let mut b = traffic(base("fig4b", 18_750, ProtocolSpec::no_storage()), 30000.0, 2000.0, 0.0);
    b.sweep = vec![
        Sweep::numbers(SweepAxis::InitialGuardTime, &us(&[0.0, 200.0, 400.0, 800.0, 1200.0, 1600.0])),
        Sweep::numbers(SweepAxis::MeanInterarrival, &us(&INTERARRIVALS_US)),
    ];
    vec![a, b]
}

fn fig5() -> Vec<ScenarioConfig> {
    STORAGE_VARIANTS
        .iter()
        .map(|&(label, ia, tf, tg)| {
            let mut c = traffic(base(&format!("fig5{label}"), 37_500, ProtocolSpec::storage_unlimited()), ia, tf, tg);
            c.sweep = vec![
                Sweep::protocols(&[ProtocolSpec::no_storage(), ProtocolSpec::storage_unlimited()]),
                Sweep::numbers(SweepAxis::StorageAttenuation, &ATTENUATIONS),
            ];
            c
        })
        .collect()
}

fn fig6() -> Vec<ScenarioConfig> {
    STORAGE_VARIANTS
        .iter()
        .map(|&(label, ia, tf, tg)| {
            let mut c = traffic(base(&format!("fig6{label}"), 37_500, ProtocolSpec::storage_unlimited()), ia, tf, tg);
            c.sim.storage_attenuation_db_per_km = 0.16;
            let grid = if tf > 1000.0 { stl_grid_us(50.0, 1000.0) } else { stl_grid_us(25.0, 500.0) };
            c.sweep = vec![Sweep::numbers(SweepAxis::PostStl, &us(&grid))];
            c
        })
        .collect()
}

fn fig7() -> Vec<ScenarioConfig> {
    [("a", 30000.0, 2000.0), ("b", 3000.0, 200.0)]
        .iter()
        .map(|&(label, ia, tf)| {
            let mut c = traffic(base(&format!("fig7{label}"), 37_500, ProtocolSpec::storage_unlimited()), ia, tf, 0.0);
            c.histogram_bin_width = Some(DEFAULT_BIN_WIDTH);
            c
        })
        .collect()
}

fn fig8() -> Vec<ScenarioConfig> {
    let limited = ProtocolSpec::storage_limited(320.0 * US);
    let short_stls = us(&stl_grid_us(40.0, 800.0));
    let long_stls = us(&stl_grid_us(100.0, 2000.0));
    let slow = us(&[10000.0, 15000.0, 20000.0, 30000.0, 50000.0, 75000.0, 100000.0]);

    let mut a = traffic(base("fig8a", 37_500, limited.clone()), 15000.0, 2000.0, 0.0);
    a.sweep = vec![Sweep::numbers(SweepAxis::Stl, &short_stls)];
    let mut b = traffic(base("fig8b", 37_500, ProtocolSpec::storage_limited(320.0 * US)), 15000.0, 2000.0, 0.0);
    b.sweep = vec![Sweep::numbers(SweepAxis::MeanInterarrival, &us(&INTERARRIVALS_US))];
    let mut c = traffic(base("fig8c", 37_500, limited), 50000.0, 10000.0, 0.0);
    c.sweep = vec![Sweep::numbers(SweepAxis::Stl, &long_stls)];
    let mut d = traffic(base("fig8d", 37_500, ProtocolSpec::storage_limited(550.0 * US)), 50000.0, 10000.0, 0.0);
    d.sweep = vec![Sweep::numbers(SweepAxis::MeanInterarrival, &slow)];

    // the same limits applied after unlimited storage, for comparison
    let mut a_post = traffic(base("fig8a-post", 37_500, ProtocolSpec::storage_unlimited()), 15000.0, 2000.0, 0.0);
    a_post.sweep = vec![Sweep::numbers(SweepAxis::PostStl, &short_stls)];
    let mut c_post = traffic(base("fig8c-post", 37_500, ProtocolSpec::storage_unlimited()), 50000.0, 10000.0, 0.0);
    c_post.sweep = vec![Sweep::numbers(SweepAxis::PostStl, &long_stls)];

    let mut all = vec![a, b, c, d, a_post, c_post];
    for s in &mut all {
        s.sim.storage_attenuation_db_per_km = 0.16;
    }
    all
}

/// Scenario configs for a named preset. Several presets expand to more than
/// one scenario (one per figure panel or parameter set).
pub fn preset(name: &str) -> Result<Vec<ScenarioConfig>, ScenarioError> {
    match name {
        "fig4" => Ok(fig4()),
        "fig5" => Ok(fig5()),
        "fig6" => Ok(fig6()),
        "fig7" => Ok(fig7()),
        "fig8" => Ok(fig8()),
        _ => Err(ScenarioError::UnknownPreset(name.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for name in PRESET_NAMES {
            for c in preset(name).unwrap() {
                c.validate().unwrap_or_else(|e| panic!("{}: {e}", c.name));
            }
        }
        assert!(matches!(preset("fig9"), Err(ScenarioError::UnknownPreset(_))));
    }

    #[test]
    fn fig4_frame_count() {
        let p = preset("fig4").unwrap();
        assert!(p.iter().all(|c| c.frames_per_pair_scaled() == 18_750));
    }

    #[test]
    fn fig5_attenuation_span() {
        let p = preset("fig5").unwrap();
        assert_eq!(p.len(), 4);
        for c in &p {
            let s = c.sweep.iter().find(|s| s.axis == SweepAxis::StorageAttenuation).unwrap();
            let v: Vec<f64> = s.values.iter().filter_map(|v| v.number()).collect();
            assert!(v.iter().cloned().fold(f64::INFINITY, f64::min) <= 1e-3);
            assert!(v.iter().cloned().fold(0.0, f64::max) >= 0.3);
            assert_eq!(c.frames_per_pair, 37_500);
        }
    }

    #[test]
    fn fig8_has_320us_limit_on_long_frames() {
        let p = preset("fig8").unwrap();
        assert!(p.iter().any(|c| c.sim.initial_frame_length == 2000.0 * US
            && (c.sim.protocol.stl == Some(320.0 * US)
                || c.sweep.iter().any(|s| s.axis == SweepAxis::Stl
                    && s.values.iter().any(|v| v.number().is_some_and(|x| (x - 320.0 * US).abs() < 1e-12))))));
        assert!(p.iter().any(|c| c.sim.protocol.stl == Some(550.0 * US)));
    }
}
