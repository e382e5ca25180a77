//! Reduction of a simulation record to per-pair channel statistics.
//!
//! For each sender/receiver pair this yields the routed pulse count `N`, the
//! sent pulse count `N0` and the average end-to-end transmittance
//! `<eta_tot>`, which is what the key-rate engine consumes.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netsim::{exceeds, pulses, Frame, FrameStatus, SimConfig, SimRecord};
use crate::topology::{NetworkTopology, NodeId};

/// Minimum insertion loss of one router, excluding delay lines.
pub const ROUTER_INSERTION_LOSS_DB: f64 = 4.0;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("negative storage time {0} s")]
    NegativeStorageTime(f64),
    #[error("pair {sender}->{receiver} delivered no frames ({frames_generated} generated)")]
    NoDeliveredFrames {
        sender: String,
        receiver: String,
        frames_generated: usize,
        frames_discarded: usize,
        frames_excluded: usize,
    },
    #[error("histogram bin width must be > 0, got {0}")]
    BadBinWidth(f64),
}

/// How per-frame transmittances are combined into `<eta_tot>`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaAveraging {
    /// 10^(-<loss_dB>/10): average the loss in dB, then convert.
    #[default]
    LogDomain,
    /// <10^(-loss_dB/10)>: average linear transmittance.
    Linear,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StatsOptions {
    pub averaging: EtaAveraging,
    /// Post-processing storage time limit applied on the fly.
    pub post_stl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairStats {
    pub sender: String,
    pub receiver: String,
    pub routers_traversed: usize,
    pub frames_generated: usize,
    pub frames_delivered: usize,
    /// Delivered but excluded by a post-processing STL.
    pub frames_excluded: usize,
    pub frames_discarded_by_reason: BTreeMap<String, usize>,
    /// N: payload pulses of contributing frames
    pub n_routed: u64,
    /// N0: payload pulses generated for this pair
    pub n_sent: u64,
    /// L averaged over contributing frames
    pub fiber_length_km: f64,
    pub mean_router_loss_db: f64,
    pub avg_eta_tot: f64,
}

impl PairStats {
    pub fn frames_discarded(&self) -> usize {
        self.frames_discarded_by_reason.values().sum()
    }

    /// Share of delivered frames that survive the post-processing STL.
    pub fn retention(&self) -> f64 {
        if self.frames_delivered == 0 {
            0.0
        } else {
            (self.frames_delivered - self.frames_excluded) as f64 / self.frames_delivered as f64
        }
    }
}

/// Loss of one router in dB: storage delay-line loss plus insertion loss.
pub fn router_loss_db(t_s: f64, v_g: f64, alpha_s: f64) -> Result<f64, StatsError> {
    if t_s < 0.0 || t_s.is_nan() {
        return Err(StatsError::NegativeStorageTime(t_s));
    }
    Ok(t_s * v_g * alpha_s + ROUTER_INSERTION_LOSS_DB)
}

fn frame_router_loss_db(frame: &Frame, config: &SimConfig) -> f64 {
    frame
        .hops
        .iter()
        .map(|h| h.storage * config.fiber_speed_km_per_s * config.storage_attenuation_db_per_km + ROUTER_INSERTION_LOSS_DB)
        .sum()
}

fn excluded(frame: &Frame, post_stl: Option<f64>) -> bool {
    frame.excluded_by_stl || post_stl.is_some_and(|stl| exceeds(frame.cum_storage, stl))
}

/// Channel statistics of one sender/receiver pair.
///
/// `config` supplies `R_t`, `v_g`, `alpha_s` and the initial frame shape; it
/// may differ from `record.config` in `alpha_s`, which does not influence the
/// frame dynamics.
pub fn pair_stats(
    record: &SimRecord,
    topology: &NetworkTopology,
    config: &SimConfig,
    pair: (NodeId, NodeId),
    opts: &StatsOptions,
) -> Result<PairStats, StatsError> {
    let (src, dst) = pair;
    let mut generated = 0usize;
    let mut delivered = 0usize;
    let mut excluded_count = 0usize;
    let mut discarded: BTreeMap<String, usize> = BTreeMap::new();
    let mut n_routed = 0u64;
    let mut sum_router_db = 0.0;
    let mut sum_link_db = 0.0;
    let mut sum_length = 0.0;
    let mut sum_linear = 0.0;
    let mut contributing = 0usize;
    let mut routers = usize::MAX;

    for f in record.frames_between(src, dst) {
        generated += 1;
        match f.status {
            FrameStatus::Discarded(r) => *discarded.entry(r.as_str().to_string()).or_default() += 1,
            FrameStatus::InTransit => {}
            FrameStatus::Arrived => {
                delivered += 1;
                if excluded(f, opts.post_stl) {
                    excluded_count += 1;
                    continue;
                }
                contributing += 1;
                routers = routers.min(f.hops.len());
                n_routed += pulses(config.repetition_rate_hz, f.t_f - f.t_g);
                let router_db = frame_router_loss_db(f, config);
                let link_db = topology.path_loss_db(&f.path).expect("frame paths follow links");
                sum_router_db += router_db;
                sum_link_db += link_db;
                sum_length += topology.path_length_km(&f.path).expect("frame paths follow links");
                if opts.averaging == EtaAveraging::Linear {
                    sum_linear += 10f64.powf(-(router_db + link_db) / 10.0);
                }
            }
        }
    }

    if contributing == 0 {
        return Err(StatsError::NoDeliveredFrames {
            sender: topology.name(src).to_string(),
            receiver: topology.name(dst).to_string(),
            frames_generated: generated,
            frames_discarded: discarded.values().sum(),
            frames_excluded: excluded_count,
        });
    }

    let k = contributing as f64;
    let mean_router_loss_db = sum_router_db / k;
    let avg_eta_tot = match opts.averaging {
        EtaAveraging::LogDomain => 10f64.powf(-(sum_link_db / k + mean_router_loss_db) / 10.0),
        EtaAveraging::Linear => sum_linear / k,
    };

    Ok(PairStats {
        sender: topology.name(src).to_string(),
        receiver: topology.name(dst).to_string(),
        routers_traversed: routers,
        frames_generated: generated,
        frames_delivered: delivered,
        frames_excluded: excluded_count,
        frames_discarded_by_reason: discarded,
        n_routed,
        n_sent: generated as u64 * config.initial_payload_pulses(),
        fiber_length_km: sum_length / k,
        mean_router_loss_db,
        avg_eta_tot,
    })
}

/// Marks delivered frames whose cumulative storage exceeds `stl` as excluded
/// from key generation. `f64::INFINITY` leaves the record unchanged.
pub fn apply_stl_postfilter(record: &SimRecord, stl: f64) -> SimRecord {
    let mut out = record.clone();
    for f in out.frames.iter_mut().filter(|f| f.is_delivered()) {
        if exceeds(f.cum_storage, stl) {
            f.excluded_by_stl = true;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StorageVerdict {
    StorageFavorable,
    NoStorageFavorable,
    Tie,
}

/// Storage vs truncation for one payload facing one delay. Payload amounts are
/// in seconds of payload; multiply by `R_t` for pulses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StorageComparison {
    /// delay-line transmittance for the whole delay
    pub eta_s: f64,
    pub transmitted_if_stored: f64,
    pub transmitted_if_discarded: f64,
    pub verdict: StorageVerdict,
}

/// Compares storing a payload of duration `t_q` for a delay `t_d` against
/// dropping the first `t_d` of it.
pub fn storage_comparator(t_q: f64, t_d: f64, alpha_s: f64, v_g: f64) -> StorageComparison {
    let eta_s = 10f64.powf(-(t_d * v_g * alpha_s) / 10.0);
    let stored = eta_s * t_q;
    let truncated = t_q - t_d;
    let verdict = if stored > truncated {
        StorageVerdict::StorageFavorable
    } else if stored < truncated {
        StorageVerdict::NoStorageFavorable
    } else {
        StorageVerdict::Tie
    };
    StorageComparison { eta_s, transmitted_if_stored: stored, transmitted_if_discarded: truncated, verdict }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StorageClass {
    pub frames: usize,
    pub counts: Vec<usize>,
}

impl StorageClass {
    pub fn fraction(&self, bin: usize) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.counts.get(bin).copied().unwrap_or(0) as f64 / self.frames as f64
        }
    }
}

/// Cumulative-storage histogram of delivered frames, one distribution per
/// number of routers traversed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StorageHistogram {
    pub bin_width: f64,
    pub classes: BTreeMap<usize, StorageClass>,
}

pub const DEFAULT_BIN_WIDTH: f64 = 25e-6;

pub fn storage_histogram(
    record: &SimRecord,
    pair: Option<(NodeId, NodeId)>,
    bin_width: f64,
) -> Result<StorageHistogram, StatsError> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(StatsError::BadBinWidth(bin_width));
    }
    let mut classes: BTreeMap<usize, StorageClass> = BTreeMap::new();
    let frames = record
        .frames
        .iter()
        .filter(|f| f.is_delivered())
        .filter(|f| pair.is_none_or(|(s, d)| f.src == s && f.dst == d));
    for f in frames {
        // nudge exact multiples of the bin width into their own bin
        let bin = (f.cum_storage / bin_width + 1e-9).floor() as usize;
        let class = classes
            .entry(f.hops.len())
            .or_insert_with(|| StorageClass { frames: 0, counts: Vec::new() });
        if class.counts.len() <= bin {
            class.counts.resize(bin + 1, 0);
        }
        class.counts[bin] += 1;
        class.frames += 1;
    }
    Ok(StorageHistogram { bin_width, classes })
}

pub fn write_pair_stats_csv<W: Write>(stats: &[PairStats], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "sender",
        "receiver",
        "routers",
        "N",
        "N0",
        "mean_router_loss_db",
        "avg_eta_tot",
        "frames_delivered",
        "frames_discarded",
    ])?;
    for s in stats {
        w.write_record([
            s.sender.clone(),
            s.receiver.clone(),
            s.routers_traversed.to_string(),
            s.n_routed.to_string(),
            s.n_sent.to_string(),
            format!("{:.11e}", s.mean_router_loss_db),
            format!("{:.11e}", s.avg_eta_tot),
            s.frames_delivered.to_string(),
            s.frames_discarded().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
