use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{HistogramBlock, ResultRow, ScenarioConfig, ScenarioOutput, SweepAxis, SweepValue};

pub const CSV_COLUMNS: [&str; 30] = [
    "scenario",
    "cell",
    "seed",
    "sender",
    "receiver",
    "routers",
    "protocol",
    "mean_interarrival_s",
    "initial_frame_length_s",
    "initial_guard_time_s",
    "storage_attenuation_db_per_km",
    "stl_s",
    "post_stl_s",
    "frames_generated",
    "frames_delivered",
    "frames_discarded",
    "frames_excluded_by_stl",
    "n_routed",
    "n_sent",
    "mean_router_loss_db",
    "avg_eta_tot",
    "ell",
    "rate_per_routed",
    "rate_per_sent",
    "q_x",
    "p_mu1",
    "p_mu2",
    "mu1",
    "mu2",
    "reason",
];

/// 12 significant digits, independent of locale.
fn num(x: f64) -> String {
    format!("{x:.11e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn row_record(r: &ResultRow) -> Vec<String> {
    let best = |f: fn(&crate::keyrate::ProtocolParams) -> f64| opt_num(r.best.as_ref().map(f));
    vec![
        r.scenario.clone(),
        r.cell.to_string(),
        r.seed.to_string(),
        r.sender.clone(),
        r.receiver.clone(),
        r.routers.to_string(),
        r.protocol.clone(),
        num(r.mean_interarrival_s),
        num(r.initial_frame_length_s),
        num(r.initial_guard_time_s),
        num(r.storage_attenuation_db_per_km),
        opt_num(r.stl_s),
        opt_num(r.post_stl_s),
        r.frames_generated.to_string(),
        r.frames_delivered.to_string(),
        r.frames_discarded.to_string(),
        r.frames_excluded_by_stl.to_string(),
        r.n_routed.to_string(),
        r.n_sent.to_string(),
        opt_num(r.mean_router_loss_db),
        opt_num(r.avg_eta_tot),
        num(r.ell),
        num(r.rate_per_routed),
        num(r.rate_per_sent),
        best(|p| p.q_x),
        best(|p| p.p_mu1),
        best(|p| p.p_mu2),
        best(|p| p.mu1),
        best(|p| p.mu2),
        r.reason.clone(),
    ]
}

pub fn write_rows_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record(row_record(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rows_json<W: Write>(rows: &[ResultRow], mut out: W) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut out, rows)?;
    writeln!(out)
}

/// Cell bins, one row per (run, routers class, bin).
pub fn write_histogram_csv<W: Write>(blocks: &[HistogramBlock], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "first_cell",
        "protocol",
        "mean_interarrival_s",
        "initial_frame_length_s",
        "initial_guard_time_s",
        "routers",
        "bin_start_s",
        "bin_end_s",
        "count",
        "fraction",
    ])?;
    for b in blocks {
        let width = b.histogram.bin_width;
        for (routers, class) in &b.histogram.classes {
            for (i, &count) in class.counts.iter().enumerate() {
                w.write_record([
                    b.cells[0].to_string(),
                    b.protocol.clone(),
                    num(b.mean_interarrival_s),
                    num(b.initial_frame_length_s),
                    num(b.initial_guard_time_s),
                    routers.to_string(),
                    num(i as f64 * width),
                    num((i + 1) as f64 * width),
                    count.to_string(),
                    num(class.fraction(i)),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Whitespace-separated blocks, one per pair, with the sweep coordinates
/// followed by the key rate per sent pulse.
pub fn write_gnuplot<W: Write>(output: &ScenarioOutput, mut out: W) -> io::Result<()> {
    let axes: Vec<SweepAxis> = output.config.sweep.iter().map(|s| s.axis).collect();
    for (pi, pair) in output.config.pairs.iter().enumerate() {
        if pi > 0 {
            write!(out, "\n\n")?;
        }
        writeln!(out, "# {} -> {}", pair.sender, pair.receiver)?;
        let names: Vec<&str> = axes.iter().map(|a| a.as_str()).collect();
        writeln!(out, "# {} rate_per_sent", names.join(" "))?;
        let rows = output.rows.iter().filter(|r| r.sender == pair.sender && r.receiver == pair.receiver);
        for (cell, row) in output.cells.iter().zip(rows) {
            let coords: Vec<String> = cell
                .coordinates
                .iter()
                .map(|(_, v)| match v {
                    SweepValue::Number(x) => num(*x),
                    SweepValue::Protocol(p) => format!("\"{p}\""),
                })
                .collect();
            writeln!(out, "{} {}", coords.join(" "), num(row.rate_per_sent))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCell {
    pub cell: usize,
    pub seed: u64,
    pub coordinates: Vec<(SweepAxis, SweepValue)>,
}

/// Everything needed to reproduce a run: the resolved config, each cell's
/// seed and coordinates, and the library version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: ScenarioConfig,
    pub frames_per_sender: u64,
    pub cells: Vec<ManifestCell>,
    pub failed_cells: Vec<usize>,
}

impl Manifest {
    pub fn new(output: &ScenarioOutput) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: output.config.clone(),
            frames_per_sender: output.cells.first().map_or(0, |c| c.sim.frames_per_sender),
            cells: output
                .cells
                .iter()
                .map(|c| ManifestCell { cell: c.index, seed: c.sim.seed, coordinates: c.coordinates.clone() })
                .collect(),
            failed_cells: output.failed_cells.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}
