use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::{Frame, SimConfig, SimError};
use crate::topology::{NetworkTopology, NodeId, ShortestPaths};

/// Frame source attached to one sender.
///
/// Each sender owns an independent random stream derived from the run seed,
/// so its destination and path draws do not depend on what the rest of the
/// network is doing.
#[derive(Debug, Clone)]
pub struct TrafficSource {
    sender: NodeId,
    receivers: Vec<NodeId>,
    paths: ShortestPaths,
    interned: HashMap<Vec<NodeId>, Arc<[NodeId]>>,
    rng: ChaCha8Rng,
    gap: Exp<f64>,
    remaining: u64,
}

impl TrafficSource {
    pub fn new(
        topology: &NetworkTopology,
        config: &SimConfig,
        sender: NodeId,
        stream: u64,
    ) -> Result<Self, SimError> {
        let receivers = topology.receivers();
        if receivers.is_empty() && config.frames_per_sender > 0 {
            return Err(SimError::ConfigInvalid("topology has no receivers".into()));
        }
        let gap = Exp::new(1.0 / config.mean_interarrival)
            .map_err(|e| SimError::ConfigInvalid(format!("mean_interarrival: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(stream);
        Ok(Self {
            sender,
            receivers,
            paths: topology.shortest_paths_from(sender),
            interned: HashMap::new(),
            rng,
            gap,
            remaining: config.frames_per_sender,
        })
    }

    pub fn sender(&self) -> NodeId {
        self.sender
    }

    pub fn remaining(&self) -> u64 {
        self.remaining
    }

    /// Exponential idle gap before the next frame (mean 1/gamma).
    pub fn next_gap(&mut self) -> f64 {
        self.gap.sample(&mut self.rng)
    }

    /// Draws a uniformly random receiver and a least-cost path to it.
    pub fn next_path(&mut self, topology: &NetworkTopology) -> Result<Option<Arc<[NodeId]>>, SimError> {
        if self.remaining == 0 {
            return Ok(None);
        }
        self.remaining -= 1;
        let dst = self.receivers[self.rng.random_range(0..self.receivers.len())];
        let path = self.paths.sample(topology, dst, &mut self.rng)?;
        let path = self.interned.entry(path).or_insert_with_key(|p| Arc::from(p.as_slice())).clone();
        Ok(Some(path))
    }
}

pub(crate) fn sources_for(topology: &NetworkTopology, config: &SimConfig) -> Result<Vec<TrafficSource>, SimError> {
    topology
        .senders()
        .into_iter()
        .enumerate()
        .map(|(i, s)| TrafficSource::new(topology, config, s, i as u64))
        .collect()
}

/// Frames each sender would emit if its own transmissions were the only
/// activity: the first frame starts after one exponential gap, and each
/// subsequent one after the previous transmission (T_f^0) plus a fresh gap.
///
/// The engine draws from the same per-sender streams, so the `(src, dst,
/// path, created_at)` of every frame here matches a full run with the same
/// config.
pub fn generate_traffic(config: &SimConfig, topology: &NetworkTopology) -> Result<Vec<Frame>, SimError> {
    config.validate()?;
    let mut frames = Vec::new();
    for mut src in sources_for(topology, config)? {
        let mut t = src.next_gap();
        while let Some(path) = src.next_path(topology)? {
            frames.push(Frame::new(frames.len() as u64, path, config, t));
            t = t + config.initial_frame_length + src.next_gap();
        }
    }
    Ok(frames)
}
