//! Discrete-event simulation of hybrid frames crossing a packet-switched
//! optical network.
//!
//! Senders emit frames one at a time. Every router processes headers in
//! parallel (`d_proc`), then forwards frames through a single FCFS server that
//! stays busy for the frame's current length. What happens to the payload
//! while a frame waits is decided by a [`RoutingProtocol`].

mod engine;
pub mod protocol;
mod trace;
mod traffic;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{NodeId, TopologyError};

pub use engine::{run, run_scripted, ScriptedFrame};
pub use protocol::{
    exceeds, HopOutcome, NoStorage, PayloadState, ProtocolRegistry, ProtocolSpec, RoutingProtocol,
    StorageLimited, StorageUnlimited, TIME_EPS,
};
pub use trace::write_trace_csv;
pub use traffic::{generate_traffic, TrafficSource};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    ConfigInvalid(String),
    #[error("unknown routing protocol `{0}`")]
    UnknownProtocol(String),
    #[error("negative router delay {0} s")]
    NegativeDelay(f64),
    #[error("frame {0} has not arrived")]
    NotDelivered(u64),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("trace output failed: {0}")]
    Trace(#[from] csv::Error),
}

/// All times in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub protocol: ProtocolSpec,
    pub d_proc: f64,
    pub repetition_rate_hz: f64,
    /// 1/gamma
    pub mean_interarrival: f64,
    pub frames_per_sender: u64,
    /// T_f^0
    pub initial_frame_length: f64,
    /// T_g^0
    pub initial_guard_time: f64,
    /// alpha_s (dB/km)
    pub storage_attenuation_db_per_km: f64,
    /// v_g (km/s)
    pub fiber_speed_km_per_s: f64,
    pub seed: u64,
    /// Forwarding queue capacity q (frames waiting, excluding the one in service).
    pub queue_capacity: Option<usize>,
    /// Concurrent header processors k per router.
    pub header_processors: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            protocol: ProtocolSpec::no_storage(),
            d_proc: 1.0e-4,
            repetition_rate_hz: 1.0e9,
            mean_interarrival: 3.0e-2,
            frames_per_sender: 0,
            initial_frame_length: 2.0e-3,
            initial_guard_time: 0.0,
            storage_attenuation_db_per_km: 0.16,
            fiber_speed_km_per_s: 2.0e5,
            seed: 0,
            queue_capacity: None,
            header_processors: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::ConfigInvalid(m));
        let finite = [
            ("d_proc", self.d_proc),
            ("repetition_rate_hz", self.repetition_rate_hz),
            ("mean_interarrival", self.mean_interarrival),
            ("initial_frame_length", self.initial_frame_length),
            ("initial_guard_time", self.initial_guard_time),
            ("storage_attenuation_db_per_km", self.storage_attenuation_db_per_km),
            ("fiber_speed_km_per_s", self.fiber_speed_km_per_s),
        ];
        if let Some((name, v)) = finite.iter().find(|(_, v)| !v.is_finite()) {
            return bad(format!("{name} = {v} is not finite"));
        }
        if self.d_proc <= 0.0 {
            return bad(format!("d_proc = {} must be > 0", self.d_proc));
        }
        if self.repetition_rate_hz <= 0.0 {
            return bad(format!("repetition_rate_hz = {} must be > 0", self.repetition_rate_hz));
        }
        if self.mean_interarrival <= 0.0 {
            return bad(format!("mean_interarrival = {} must be > 0", self.mean_interarrival));
        }
        if self.initial_guard_time < 0.0 || self.initial_guard_time >= self.initial_frame_length {
            return bad(format!(
                "need 0 <= initial_guard_time ({}) < initial_frame_length ({})",
                self.initial_guard_time, self.initial_frame_length
            ));
        }
        if self.storage_attenuation_db_per_km < 0.0 {
            return bad("storage_attenuation_db_per_km must be >= 0".into());
        }
        if self.fiber_speed_km_per_s <= 0.0 {
            return bad("fiber_speed_km_per_s must be > 0".into());
        }
        if self.header_processors == Some(0) {
            return bad("header_processors must be >= 1".into());
        }
        Ok(())
    }

    /// Payload pulses in a freshly generated frame.
    pub fn initial_payload_pulses(&self) -> u64 {
        pulses(self.repetition_rate_hz, self.initial_frame_length - self.initial_guard_time)
    }
}

/// Converts a payload duration to a whole pulse count.
///
/// A femtosecond of slop keeps values like 1.9 ms x 1 GHz from flooring to
/// one pulse short.
pub fn pulses(repetition_rate_hz: f64, duration: f64) -> u64 {
    let x = repetition_rate_hz * duration;
    if x <= 0.0 {
        0
    } else {
        (x + 1e-6).floor() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiscardReason {
    ZeroLength,
    StorageLimit,
    QueueFull,
}

impl DiscardReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DiscardReason::ZeroLength => "zero_length",
            DiscardReason::StorageLimit => "storage_limit",
            DiscardReason::QueueFull => "queue_full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameStatus {
    InTransit,
    Arrived,
    Discarded(DiscardReason),
}

impl FrameStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameStatus::InTransit => "in_transit",
            FrameStatus::Arrived => "arrived",
            FrameStatus::Discarded(r) => r.as_str(),
        }
    }
}

/// What happened to a frame at one router.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopLog {
    pub router: NodeId,
    /// forwarding wait after header processing (s)
    pub d_queue: f64,
    /// T_s^i (s)
    pub storage: f64,
    pub t_f_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub id: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub path: Arc<[NodeId]>,
    pub t_f: f64,
    pub t_g: f64,
    pub cum_storage: f64,
    pub hops: Vec<HopLog>,
    pub status: FrameStatus,
    pub created_at: f64,
    pub delivered_at: Option<f64>,
    /// Set by a post-processing storage time limit.
    pub excluded_by_stl: bool,
}

impl Frame {
    pub fn new(id: u64, path: Arc<[NodeId]>, config: &SimConfig, created_at: f64) -> Self {
        Self {
            id,
            src: path[0],
            dst: *path.last().expect("path has endpoints"),
            path,
            t_f: config.initial_frame_length,
            t_g: config.initial_guard_time,
            cum_storage: 0.0,
            hops: Vec::with_capacity(4),
            status: FrameStatus::InTransit,
            created_at,
            delivered_at: None,
            excluded_by_stl: false,
        }
    }

    /// t_Q = t_f - t_g
    pub fn payload(&self) -> f64 {
        (self.t_f - self.t_g).max(0.0)
    }

    pub fn per_hop_storage(&self) -> impl Iterator<Item = f64> + '_ {
        self.hops.iter().map(|h| h.storage)
    }

    pub fn is_delivered(&self) -> bool {
        self.status == FrameStatus::Arrived
    }

    /// Delivered and not excluded by a post-processing STL.
    pub fn contributes(&self) -> bool {
        self.is_delivered() && !self.excluded_by_stl
    }

    fn payload_state(&self) -> PayloadState {
        PayloadState { t_f: self.t_f, t_g: self.t_g, cum_storage: self.cum_storage }
    }
}

/// Applies one router's delay to `frame` under `protocol`, logging the hop.
pub fn apply_router_delay(
    frame: &mut Frame,
    router: NodeId,
    d_queue: f64,
    delay: f64,
    protocol: &dyn RoutingProtocol,
) -> Result<HopOutcome, SimError> {
    if delay < 0.0 || delay.is_nan() {
        return Err(SimError::NegativeDelay(delay));
    }
    let mut state = frame.payload_state();
    let out = protocol.apply(&mut state, delay);
    frame.t_f = state.t_f;
    frame.t_g = state.t_g;
    frame.cum_storage = state.cum_storage;
    frame.hops.push(HopLog { router, d_queue, storage: out.storage, t_f_after: state.t_f });
    if let Some(reason) = out.discard {
        frame.status = FrameStatus::Discarded(reason);
    }
    Ok(out)
}

/// Surviving payload pulses of a delivered frame: floor(R_t (t_f - t_g)).
pub fn delivered_pulses(frame: &Frame, config: &SimConfig) -> Result<u64, SimError> {
    if !frame.is_delivered() {
        return Err(SimError::NotDelivered(frame.id));
    }
    Ok(pulses(config.repetition_rate_hz, frame.t_f - frame.t_g))
}

/// Outcome of one simulation run. Frames are indexed by id.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRecord {
    pub config: SimConfig,
    pub frames: Vec<Frame>,
    pub end_time: f64,
}

impl SimRecord {
    pub fn generated(&self) -> usize {
        self.frames.len()
    }

    pub fn delivered(&self) -> usize {
        self.frames.iter().filter(|f| f.is_delivered()).count()
    }

    pub fn in_transit(&self) -> usize {
        self.frames.iter().filter(|f| f.status == FrameStatus::InTransit).count()
    }

    pub fn discarded_by_reason(&self) -> BTreeMap<DiscardReason, usize> {
        let mut m = BTreeMap::new();
        for f in &self.frames {
            if let FrameStatus::Discarded(r) = f.status {
                *m.entry(r).or_default() += 1;
            }
        }
        m
    }

    pub fn frames_between(&self, src: NodeId, dst: NodeId) -> impl Iterator<Item = &Frame> + '_ {
        self.frames.iter().filter(move |f| f.src == src && f.dst == dst)
    }
}
