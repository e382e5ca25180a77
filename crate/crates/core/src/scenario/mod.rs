//! Reproducible parameter sweeps: simulate, reduce to channel statistics,
//! optimize the key rate, and emit one row per (cell, pair).

mod output;
mod presets;

pub use output::{write_gnuplot, write_histogram_csv, write_rows_csv, write_rows_json, Manifest, CSV_COLUMNS};
pub use presets::{preset, PRESET_NAMES};

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chanstats::{pair_stats, storage_histogram, EtaAveraging, StatsError, StatsOptions, StorageHistogram};
use crate::keyrate::{ChannelInput, ProtocolParams, SecurityParams};
use crate::netsim::{self, ProtocolRegistry, ProtocolSpec, SimConfig, SimRecord};
use crate::optimizer::{OptSettings, OptimizerRegistry};
use crate::topology::{
    build_default_topology, LinkSpec, NetworkTopology, NodeId, NodeSpec, TopologyError, TopologyFile,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid config: {field}: {message}")]
    ConfigInvalid { field: String, message: String },
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("failed to start worker pool: {0}")]
    Workers(String),
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::ConfigInvalid { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologySource {
    /// The sixteen-user, four-router ring.
    #[default]
    Default,
    File { path: PathBuf },
    Inline { nodes: Vec<NodeSpec>, links: Vec<LinkSpec> },
}

impl TopologySource {
    pub fn build(&self) -> Result<NetworkTopology, TopologyError> {
        match self {
            TopologySource::Default => Ok(build_default_topology()),
            TopologySource::File { path } => NetworkTopology::from_json_file(path),
            TopologySource::Inline { nodes, links } => {
                NetworkTopology::new(TopologyFile { nodes: nodes.clone(), links: links.clone() })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// 1/gamma (s)
    MeanInterarrival,
    /// T_f^0 (s)
    InitialFrameLength,
    /// T_g^0 (s)
    InitialGuardTime,
    /// alpha_s (dB/km); post-processing only
    StorageAttenuation,
    /// en-route storage time limit (s); selects the storage-limited protocol
    Stl,
    /// post-processing storage time limit (s)
    PostStl,
    Protocol,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::MeanInterarrival => "mean_interarrival",
            SweepAxis::InitialFrameLength => "initial_frame_length",
            SweepAxis::InitialGuardTime => "initial_guard_time",
            SweepAxis::StorageAttenuation => "storage_attenuation",
            SweepAxis::Stl => "stl",
            SweepAxis::PostStl => "post_stl",
            SweepAxis::Protocol => "protocol",
        }
    }

    /// Axes that change the offered traffic, and hence the random streams.
    fn shapes_traffic(self) -> bool {
        matches!(self, SweepAxis::MeanInterarrival | SweepAxis::InitialFrameLength | SweepAxis::InitialGuardTime)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepValue {
    Number(f64),
    Protocol(ProtocolSpec),
}

impl SweepValue {
    pub fn number(&self) -> Option<f64> {
        match self {
            SweepValue::Number(x) => Some(*x),
            SweepValue::Protocol(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<SweepValue>,
}

impl Sweep {
    pub fn numbers(axis: SweepAxis, values: &[f64]) -> Self {
        Self { axis, values: values.iter().map(|&v| SweepValue::Number(v)).collect() }
    }

    pub fn protocols(values: &[ProtocolSpec]) -> Self {
        Self { axis: SweepAxis::Protocol, values: values.iter().cloned().map(SweepValue::Protocol).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSpec {
    pub sender: String,
    pub receiver: String,
}

impl PairSpec {
    pub fn new(sender: &str, receiver: &str) -> Self {
        Self { sender: sender.into(), receiver: receiver.into() }
    }
}

/// Pairs one, two and three routers apart in the default topology.
pub fn default_pairs() -> Vec<PairSpec> {
    vec![PairSpec::new("A31", "B32"), PairSpec::new("A42", "B22"), PairSpec::new("A22", "B31")]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub topology: TopologySource,
    /// Base simulation parameters. `frames_per_sender` and `seed` are
    /// derived per cell and ignored here.
    pub sim: SimConfig,
    /// Target frames per sender/receiver pair before scaling.
    pub frames_per_pair: u64,
    pub scale: f64,
    pub sweep: Vec<Sweep>,
    pub pairs: Vec<PairSpec>,
    pub security: SecurityParams,
    pub opt: OptSettings,
    pub post_stl: Option<f64>,
    pub averaging: EtaAveraging,
    /// Emit storage-time histograms with this bin width (s).
    pub histogram_bin_width: Option<f64>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            topology: TopologySource::Default,
            sim: SimConfig::default(),
            frames_per_pair: 1000,
            scale: 1.0,
            sweep: Vec::new(),
            pairs: default_pairs(),
            security: SecurityParams::default(),
            opt: OptSettings::default(),
            post_stl: None,
            averaging: EtaAveraging::LogDomain,
            histogram_bin_width: None,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn frames_per_pair_scaled(&self) -> u64 {
        (self.frames_per_pair as f64 * self.scale).ceil() as u64
    }

    pub fn validate(&self) -> Result<NetworkTopology, ScenarioError> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(invalid("scale", format!("{} must be a positive number", self.scale)));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(invalid("name", "must be non-empty and usable as a file name"));
        }
        let topology = self.topology.build()?;
        let mut seen = Vec::new();
        for (i, s) in self.sweep.iter().enumerate() {
            let field = format!("sweep[{i}]");
            if s.values.is_empty() {
                return Err(invalid(field, format!("axis {} has no values", s.axis.as_str())));
            }
            if seen.contains(&s.axis) {
                return Err(invalid(field, format!("axis {} appears twice", s.axis.as_str())));
            }
            seen.push(s.axis);
            let protocol_axis = s.axis == SweepAxis::Protocol;
            for (j, v) in s.values.iter().enumerate() {
                let field = format!("sweep[{i}].values[{j}]");
                match (protocol_axis, v) {
                    (true, SweepValue::Protocol(p)) => {
                        ProtocolRegistry::builtin()
                            .build(p)
                            .map_err(|e| invalid(field.clone(), e.to_string()))?;
                    }
                    (false, SweepValue::Number(x)) if x.is_finite() => {}
                    (true, _) => return Err(invalid(field, "expected a protocol name")),
                    (false, _) => return Err(invalid(field, "expected a finite number")),
                }
            }
        }
        if seen.contains(&SweepAxis::Stl) && seen.contains(&SweepAxis::Protocol) {
            return Err(invalid("sweep", "the stl axis fixes the protocol and cannot be combined with a protocol axis"));
        }
        ProtocolRegistry::builtin()
            .build(&self.sim.protocol)
            .map_err(|e| invalid("sim.protocol", e.to_string()))?;
        if self.pairs.is_empty() {
            return Err(invalid("pairs", "at least one pair is required"));
        }
        for (i, p) in self.pairs.iter().enumerate() {
            let s = topology.lookup(&p.sender).map_err(|e| invalid(format!("pairs[{i}].sender"), e.to_string()))?;
            let r = topology.lookup(&p.receiver).map_err(|e| invalid(format!("pairs[{i}].receiver"), e.to_string()))?;
            if !topology.senders().contains(&s) || !topology.receivers().contains(&r) {
                return Err(invalid(format!("pairs[{i}]"), "must name a sender and a receiver"));
            }
        }
        self.security.validate().map_err(|e| invalid("security", e.to_string()))?;
        OptimizerRegistry::builtin()
            .build(&self.opt.strategy)
            .map_err(|e| invalid("opt.strategy", e.to_string()))?;
        if let Some(w) = self.histogram_bin_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(invalid("histogram_bin_width", "must be > 0"));
            }
        }
        Ok(topology)
    }

    /// Cells in row-major order over the sweep axes (first axis slowest).
    pub fn cells(&self) -> Vec<Cell> {
        let dims: Vec<usize> = self.sweep.iter().map(|s| s.values.len()).collect();
        let count: usize = dims.iter().product();
        (0..count)
            .map(|index| {
                let mut rem = index;
                let mut pick = vec![0; dims.len()];
                for (k, d) in dims.iter().enumerate().rev() {
                    pick[k] = rem % d;
                    rem /= d;
                }
                self.resolve_cell(index, &pick)
            })
            .collect()
    }

    fn resolve_cell(&self, index: usize, pick: &[usize]) -> Cell {
        let mut sim = self.sim.clone();
        let mut post_stl = self.post_stl;
        let mut coordinates = Vec::new();
        let mut traffic_index = 0u64;
        for (s, &j) in self.sweep.iter().zip(pick) {
            let v = &s.values[j];
            coordinates.push((s.axis, v.clone()));
            if s.axis.shapes_traffic() {
                traffic_index = traffic_index * s.values.len() as u64 + j as u64;
            }
            match (s.axis, v) {
                (SweepAxis::MeanInterarrival, SweepValue::Number(x)) => sim.mean_interarrival = *x,
                (SweepAxis::InitialFrameLength, SweepValue::Number(x)) => sim.initial_frame_length = *x,
                (SweepAxis::InitialGuardTime, SweepValue::Number(x)) => sim.initial_guard_time = *x,
                (SweepAxis::StorageAttenuation, SweepValue::Number(x)) => sim.storage_attenuation_db_per_km = *x,
                (SweepAxis::Stl, SweepValue::Number(x)) => sim.protocol = ProtocolSpec::storage_limited(*x),
                (SweepAxis::PostStl, SweepValue::Number(x)) => post_stl = Some(*x),
                (SweepAxis::Protocol, SweepValue::Protocol(p)) => sim.protocol = p.clone(),
                _ => {}
            }
        }
        sim.seed = derive_seed(self.seed, traffic_index);
        sim.frames_per_sender = 0;
        Cell { index, coordinates, sim, post_stl, traffic_index }
    }
}

/// Counter-based seed split: stream `index` of a generator keyed by `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub index: usize,
    pub coordinates: Vec<(SweepAxis, SweepValue)>,
    /// Cell parameters; `storage_attenuation_db_per_km` applies in
    /// post-processing only.
    pub sim: SimConfig,
    pub post_stl: Option<f64>,
    /// Position among cells that differ in offered traffic; cells sharing it
    /// share a seed.
    pub traffic_index: u64,
}

/// One output row: a pair in a sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: String,
    pub cell: usize,
    pub seed: u64,
    pub sender: String,
    pub receiver: String,
    pub routers: usize,
    pub protocol: String,
    pub mean_interarrival_s: f64,
    pub initial_frame_length_s: f64,
    pub initial_guard_time_s: f64,
    pub storage_attenuation_db_per_km: f64,
    pub stl_s: Option<f64>,
    pub post_stl_s: Option<f64>,
    pub frames_generated: usize,
    pub frames_delivered: usize,
    pub frames_discarded: usize,
    pub frames_excluded_by_stl: usize,
    pub n_routed: u64,
    pub n_sent: u64,
    pub mean_router_loss_db: Option<f64>,
    pub avg_eta_tot: Option<f64>,
    pub ell: f64,
    pub rate_per_routed: f64,
    pub rate_per_sent: f64,
    pub best: Option<ProtocolParams>,
    /// Empty when a positive key was found.
    pub reason: String,
}

impl ResultRow {
    fn blank(config: &ScenarioConfig, cell: &Cell, pair: &PairSpec, routers: usize) -> Self {
        Self {
            scenario: config.name.clone(),
            cell: cell.index,
            seed: cell.sim.seed,
            sender: pair.sender.clone(),
            receiver: pair.receiver.clone(),
            routers,
            protocol: cell.sim.protocol.name.clone(),
            mean_interarrival_s: cell.sim.mean_interarrival,
            initial_frame_length_s: cell.sim.initial_frame_length,
            initial_guard_time_s: cell.sim.initial_guard_time,
            storage_attenuation_db_per_km: cell.sim.storage_attenuation_db_per_km,
            stl_s: cell.sim.protocol.stl,
            post_stl_s: cell.post_stl,
            frames_generated: 0,
            frames_delivered: 0,
            frames_discarded: 0,
            frames_excluded_by_stl: 0,
            n_routed: 0,
            n_sent: 0,
            mean_router_loss_db: None,
            avg_eta_tot: None,
            ell: 0.0,
            rate_per_routed: 0.0,
            rate_per_sent: 0.0,
            best: None,
            reason: String::new(),
        }
    }
}

/// Delivered-frame storage histogram of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBlock {
    /// Cells that share this run.
    pub cells: Vec<usize>,
    pub protocol: String,
    pub mean_interarrival_s: f64,
    pub initial_frame_length_s: f64,
    pub initial_guard_time_s: f64,
    pub histogram: StorageHistogram,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioOutput {
    pub config: ScenarioConfig,
    pub cells: Vec<Cell>,
    pub rows: Vec<ResultRow>,
    pub histograms: Vec<HistogramBlock>,
    /// Cells that could not be evaluated (their rows carry the reason).
    pub failed_cells: Vec<usize>,
}

impl ScenarioOutput {
    pub fn manifest(&self) -> Manifest {
        Manifest::new(self)
    }
}

fn routers_between(topology: &NetworkTopology, s: NodeId, r: NodeId) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    topology.least_cost_path(s, r, &mut rng).map(|p| topology.routers_on(&p)).unwrap_or(0)
}

struct Context<'a> {
    config: &'a ScenarioConfig,
    topology: &'a NetworkTopology,
    pairs: Vec<(PairSpec, NodeId, NodeId, usize)>,
}

impl Context<'_> {
    fn rows_for_cell(&self, cell: &Cell, record: Result<&SimRecord, &str>) -> Vec<ResultRow> {
        self.pairs
            .iter()
            .map(|(pair, s, r, routers)| {
                let mut row = ResultRow::blank(self.config, cell, pair, *routers);
                match record {
                    Err(reason) => row.reason = reason.to_string(),
                    Ok(record) => self.fill_row(&mut row, cell, record, (*s, *r)),
                }
                row
            })
            .collect()
    }

    fn fill_row(&self, row: &mut ResultRow, cell: &Cell, record: &SimRecord, pair: (NodeId, NodeId)) {
        let opts = StatsOptions { averaging: self.config.averaging, post_stl: cell.post_stl };
        let stats = match pair_stats(record, self.topology, &cell.sim, pair, &opts) {
            Ok(s) => s,
            Err(StatsError::NoDeliveredFrames { frames_generated, frames_discarded, frames_excluded, .. }) => {
                row.frames_generated = frames_generated;
                row.frames_discarded = frames_discarded;
                row.frames_delivered = frames_excluded;
                row.frames_excluded_by_stl = frames_excluded;
                row.n_sent = frames_generated as u64 * cell.sim.initial_payload_pulses();
                row.reason = "no_delivered_frames".into();
                return;
            }
            Err(e) => {
                row.reason = format!("stats_error: {e}");
                return;
            }
        };
        row.routers = stats.routers_traversed;
        row.frames_generated = stats.frames_generated;
        row.frames_delivered = stats.frames_delivered;
        row.frames_discarded = stats.frames_discarded();
        row.frames_excluded_by_stl = stats.frames_excluded;
        row.n_routed = stats.n_routed;
        row.n_sent = stats.n_sent;
        row.mean_router_loss_db = Some(stats.mean_router_loss_db);
        row.avg_eta_tot = Some(stats.avg_eta_tot);
        if stats.n_routed == 0 {
            row.reason = "no_payload".into();
            return;
        }
        let channel =
            ChannelInput { n_routed: stats.n_routed as f64, n_sent: stats.n_sent as f64, eta_tot: stats.avg_eta_tot };
        match OptimizerRegistry::builtin()
            .build(&self.config.opt.strategy)
            .and_then(|o| o.optimize(&channel, &self.config.security, &self.config.opt))
        {
            Ok(res) => {
                row.ell = res.breakdown.ell;
                row.rate_per_routed = res.breakdown.rate_per_routed;
                row.rate_per_sent = res.breakdown.rate_per_sent;
                row.best = Some(res.best);
                if let Some(r) = res.breakdown.reason {
                    row.reason = r.as_str().into();
                }
            }
            Err(e) => row.reason = format!("optimizer_error: {e}"),
        }
    }
}

/// Runs every cell of the scenario. Simulations are shared between cells
/// that differ only in post-processing axes.
pub fn run_scenario(config: &ScenarioConfig, workers: Option<usize>) -> Result<ScenarioOutput, ScenarioError> {
    let topology = config.validate()?;
    let pairs = config
        .pairs
        .iter()
        .map(|p| {
            let s = topology.lookup(&p.sender)?;
            let r = topology.lookup(&p.receiver)?;
            Ok((p.clone(), s, r, routers_between(&topology, s, r)))
        })
        .collect::<Result<Vec<_>, TopologyError>>()?;
    let ctx = Context { config, topology: &topology, pairs };

    let frames_per_sender = config.frames_per_pair_scaled() * topology.receivers().len() as u64;
    let mut cells = config.cells();
    for c in &mut cells {
        c.sim.frames_per_sender = frames_per_sender;
    }

    // group cells by the simulation they need
    let mut groups: BTreeMap<(u64, String), Vec<usize>> = BTreeMap::new();
    for c in &cells {
        groups.entry((c.traffic_index, c.sim.protocol.to_string())).or_default().push(c.index);
    }
    let groups: Vec<Vec<usize>> = groups.into_values().collect();

    let run_groups = || {
        groups
            .par_iter()
            .map(|members| {
                let sim = SimConfig { storage_attenuation_db_per_km: config.sim.storage_attenuation_db_per_km, ..cells[members[0]].sim.clone() };
                match netsim::run(&sim, &topology) {
                    Ok(record) => {
                        let rows: Vec<(usize, Vec<ResultRow>)> = members
                            .par_iter()
                            .map(|&i| (i, ctx.rows_for_cell(&cells[i], Ok(&record))))
                            .collect();
                        let hist = config.histogram_bin_width.map(|w| HistogramBlock {
                            cells: members.clone(),
                            protocol: sim.protocol.to_string(),
                            mean_interarrival_s: sim.mean_interarrival,
                            initial_frame_length_s: sim.initial_frame_length,
                            initial_guard_time_s: sim.initial_guard_time,
                            histogram: storage_histogram(&record, None, w).expect("bin width validated"),
                        });
                        (rows, hist, false)
                    }
                    Err(e) => {
                        let reason = format!("invalid_cell: {e}");
                        let rows = members.iter().map(|&i| (i, ctx.rows_for_cell(&cells[i], Err(&reason)))).collect();
                        (rows, None, true)
                    }
                }
            })
            .collect::<Vec<_>>()
    };
    let results = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| ScenarioError::Workers(e.to_string()))?
            .install(run_groups),
        None => run_groups(),
    };

    let mut by_cell: Vec<Option<Vec<ResultRow>>> = vec![None; cells.len()];
    let mut histograms = Vec::new();
    let mut failed_cells = Vec::new();
    for (rows, hist, failed) in results {
        for (i, r) in rows {
            if failed {
                failed_cells.push(i);
            }
            by_cell[i] = Some(r);
        }
        histograms.extend(hist);
    }
    failed_cells.sort_unstable();
    histograms.sort_by_key(|h| h.cells[0]);
    let rows = by_cell.into_iter().flat_map(|r| r.expect("every cell evaluated")).collect();
    Ok(ScenarioOutput { config: config.clone(), cells, rows, histograms, failed_cells })
}
