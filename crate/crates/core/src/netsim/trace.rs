use std::io::Write;

use super::{SimError, SimRecord};
use crate::topology::NetworkTopology;

/// Writes one CSV row per (frame, hop):
/// `frame_id,src,dst,hop,d_queue_s,T_s_s,t_f_after_s,status`.
///
/// `status` is the frame's final status. Frames dropped before their first
/// hop completes get a single row with hop = -1.
pub fn write_trace_csv<W: Write>(record: &SimRecord, topology: &NetworkTopology, out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["frame_id", "src", "dst", "hop", "d_queue_s", "T_s_s", "t_f_after_s", "status"])?;
    for f in &record.frames {
        let src = topology.name(f.src);
        let dst = topology.name(f.dst);
        let status = f.status.as_str();
        if f.hops.is_empty() {
            w.write_record([&f.id.to_string(), src, dst, "-1", "", "", &format!("{:e}", f.t_f), status])?;
        }
        for (i, h) in f.hops.iter().enumerate() {
            w.write_record([
                &f.id.to_string(),
                src,
                dst,
                &i.to_string(),
                &format!("{:e}", h.d_queue),
                &format!("{:e}", h.storage),
                &format!("{:e}", h.t_f_after),
                status,
            ])?;
        }
    }
    w.flush().map_err(|e| SimError::Trace(e.into()))?;
    Ok(())
}
