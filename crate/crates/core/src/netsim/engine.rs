use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::sync::Arc;

use super::traffic::{sources_for, TrafficSource};
use super::{apply_router_delay, DiscardReason, Frame, FrameStatus, ProtocolRegistry, RoutingProtocol, SimConfig, SimError, SimRecord};
use crate::topology::{NetworkTopology, NodeId, NodeKind};

#[derive(Debug, Clone, Copy)]
enum EventKind {
    Generate { source: u32 },
    Arrive { frame: u32 },
    HeaderDone { frame: u32 },
    ServerFree { router: u32 },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Default)]
struct RouterState {
    busy: bool,
    fifo: VecDeque<u32>,
    headers_busy: usize,
    header_wait: VecDeque<u32>,
}

/// Per-frame bookkeeping that does not belong in the public record.
#[derive(Debug, Clone, Copy, Default)]
struct Transit {
    /// index of the node the frame is at (or heading to) in its path
    pos: u16,
    arrived_at: f64,
    header_start: f64,
    ready_at: f64,
}

struct Simulation<'a> {
    topo: &'a NetworkTopology,
    cfg: &'a SimConfig,
    protocol: Arc<dyn RoutingProtocol>,
    frames: Vec<Frame>,
    transit: Vec<Transit>,
    routers: Vec<RouterState>,
    sources: Vec<TrafficSource>,
    events: BinaryHeap<Event>,
    seq: u64,
    now: f64,
}

impl<'a> Simulation<'a> {
    fn new(cfg: &'a SimConfig, topo: &'a NetworkTopology) -> Result<Self, SimError> {
        cfg.validate()?;
        let protocol = ProtocolRegistry::builtin().build(&cfg.protocol)?;
        Ok(Self {
            topo,
            cfg,
            protocol,
            frames: Vec::new(),
            transit: Vec::new(),
            routers: (0..topo.node_count()).map(|_| RouterState::default()).collect(),
            sources: Vec::new(),
            events: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
        })
    }

    fn schedule(&mut self, time: f64, kind: EventKind) {
        self.events.push(Event { time, seq: self.seq, kind });
        self.seq += 1;
    }

    fn propagation(&self, a: NodeId, b: NodeId) -> f64 {
        let link = self.topo.link_between(a, b).expect("paths follow links");
        link.length_km / self.cfg.fiber_speed_km_per_s
    }

    /// Creates a frame at `self.now` and puts it on the sender's access link.
    fn launch(&mut self, path: Arc<[NodeId]>) -> u32 {
        let id = self.frames.len() as u32;
        let first_hop = self.propagation(path[0], path[1]);
        self.frames.push(Frame::new(id as u64, path, self.cfg, self.now));
        self.transit.push(Transit { pos: 1, ..Default::default() });
        self.schedule(self.now + self.cfg.initial_frame_length + first_hop, EventKind::Arrive { frame: id });
        id
    }

    fn on_generate(&mut self, source: u32) -> Result<(), SimError> {
        let src = &mut self.sources[source as usize];
        let Some(path) = src.next_path(self.topo)? else {
            return Ok(());
        };
        self.launch(path);
        let src = &mut self.sources[source as usize];
        if src.remaining() > 0 {
            let next = self.now + self.cfg.initial_frame_length + src.next_gap();
            self.schedule(next, EventKind::Generate { source });
        }
        Ok(())
    }

    fn current_node(&self, frame: u32) -> NodeId {
        let f = &self.frames[frame as usize];
        f.path[self.transit[frame as usize].pos as usize]
    }

    fn start_header(&mut self, router: NodeId, frame: u32) {
        self.routers[router.index()].headers_busy += 1;
        self.transit[frame as usize].header_start = self.now;
        self.schedule(self.now + self.cfg.d_proc, EventKind::HeaderDone { frame });
    }

    fn on_arrive(&mut self, frame: u32) {
        let node = self.current_node(frame);
        match self.topo.kind(node) {
            NodeKind::Router => {
                self.transit[frame as usize].arrived_at = self.now;
                let free = self
                    .cfg
                    .header_processors
                    .is_none_or(|k| self.routers[node.index()].headers_busy < k);
                if free {
                    self.start_header(node, frame);
                } else {
                    self.routers[node.index()].header_wait.push_back(frame);
                }
            }
            // header is processed at the receiver but the payload is already being measured
            NodeKind::Receiver => {
                let f = &mut self.frames[frame as usize];
                f.status = FrameStatus::Arrived;
                f.delivered_at = Some(self.now + self.cfg.d_proc);
            }
            NodeKind::Sender => unreachable!("senders are never transit nodes"),
        }
    }

    fn on_header_done(&mut self, frame: u32) {
        let router = self.current_node(frame);
        let state = &mut self.routers[router.index()];
        state.headers_busy -= 1;
        if let Some(next) = state.header_wait.pop_front() {
            self.start_header(router, next);
        }
        self.transit[frame as usize].ready_at = self.now;
        let state = &mut self.routers[router.index()];
        if let Some(q) = self.cfg.queue_capacity {
            let must_wait = state.busy || !state.fifo.is_empty();
            if must_wait && state.fifo.len() >= q {
                self.frames[frame as usize].status = FrameStatus::Discarded(DiscardReason::QueueFull);
                return;
            }
        }
        state.fifo.push_back(frame);
        self.try_start(router);
    }

    fn try_start(&mut self, router: NodeId) {
        while !self.routers[router.index()].busy {
            let Some(frame) = self.routers[router.index()].fifo.pop_front() else {
                return;
            };
            let tr = self.transit[frame as usize];
            let d_queue = (self.now - tr.ready_at) + (tr.header_start - tr.arrived_at);
            let delay = self.cfg.d_proc + d_queue;
            let f = &mut self.frames[frame as usize];
            apply_router_delay(f, router, d_queue, delay, self.protocol.as_ref())
                .expect("event times are non-decreasing");
            if f.status != FrameStatus::InTransit {
                continue;
            }
            let d_trans = f.t_f;
            let pos = tr.pos as usize;
            let next = f.path[pos + 1];
            self.routers[router.index()].busy = true;
            self.transit[frame as usize].pos += 1;
            let prop = self.propagation(router, next);
            self.schedule(self.now + d_trans, EventKind::ServerFree { router: router.0 });
            self.schedule(self.now + d_trans + prop, EventKind::Arrive { frame });
        }
    }

    fn drain(mut self) -> Result<SimRecord, SimError> {
        while let Some(ev) = self.events.pop() {
            debug_assert!(ev.time >= self.now);
            self.now = ev.time;
            match ev.kind {
                EventKind::Generate { source } => self.on_generate(source)?,
                EventKind::Arrive { frame } => self.on_arrive(frame),
                EventKind::HeaderDone { frame } => self.on_header_done(frame),
                EventKind::ServerFree { router } => {
                    let r = NodeId(router);
                    self.routers[r.index()].busy = false;
                    self.try_start(r);
                }
            }
        }
        Ok(SimRecord { config: self.cfg.clone(), frames: self.frames, end_time: self.now })
    }
}

/// Runs the simulation until every generated frame is delivered or discarded.
pub fn run(config: &SimConfig, topology: &NetworkTopology) -> Result<SimRecord, SimError> {
    let mut sim = Simulation::new(config, topology)?;
    sim.sources = sources_for(topology, config)?;
    for i in 0..sim.sources.len() {
        if sim.sources[i].remaining() > 0 {
            let t = sim.sources[i].next_gap();
            sim.schedule(t, EventKind::Generate { source: i as u32 });
        }
    }
    sim.drain()
}

/// A frame injected at a fixed time along a fixed path.
#[derive(Debug, Clone)]
pub struct ScriptedFrame {
    pub path: Vec<NodeId>,
    pub at: f64,
}

/// Runs the network with hand-placed frames instead of random traffic.
/// `frames_per_sender` and `mean_interarrival` are ignored.
pub fn run_scripted(
    config: &SimConfig,
    topology: &NetworkTopology,
    script: &[ScriptedFrame],
) -> Result<SimRecord, SimError> {
    let mut sim = Simulation::new(config, topology)?;
    let mut order: Vec<usize> = (0..script.len()).collect();
    order.sort_by(|&a, &b| script[a].at.total_cmp(&script[b].at));
    for i in order {
        let s = &script[i];
        if s.path.len() < 2 || topology.path_length_km(&s.path).is_none() {
            return Err(SimError::ConfigInvalid(format!("scripted frame {i} has an invalid path")));
        }
        // launch each frame at its own time before the network starts moving
        sim.now = s.at;
        sim.launch(Arc::from(s.path.as_slice()));
    }
    sim.now = 0.0;
    sim.drain()
}
