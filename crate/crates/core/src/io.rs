//! Event tables: one row per event, as CSV or JSON lines.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::simulator::{EventRecord, Trajectory};

#[derive(Serialize)]
struct Row<'a> {
    replica: u64,
    time: f64,
    kind: &'a str,
    i: usize,
    j_or_atom: usize,
    post_count: usize,
    post_mass: f64,
    post_norm_lambda: f64,
    stopped: bool,
}

fn row(replica: u64, e: &EventRecord) -> Row<'_> {
    let (i, j) = e.kind.indices();
    Row {
        replica,
        time: e.time,
        kind: e.kind.label(),
        i,
        j_or_atom: j,
        post_count: e.post_count,
        post_mass: e.post_mass,
        post_norm_lambda: e.post_norm,
        stopped: e.stopped,
    }
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Input(format!("writing event table: {e}"))
}

/// Writes the events of every trajectory, in the given order, with a
/// header row.
pub fn write_events_csv<T, W: Write>(out: W, trajectories: &[Trajectory<T>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for t in trajectories {
        for e in &t.events {
            w.serialize(row(t.replica, e)).map_err(io_err)?;
        }
    }
    if trajectories.iter().all(|t| t.events.is_empty()) {
        w.write_record([
            "replica", "time", "kind", "i", "j_or_atom", "post_count", "post_mass", "post_norm_lambda", "stopped",
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Same rows as [`write_events_csv`], one JSON object per line.
pub fn write_events_jsonl<T, W: Write>(mut out: W, trajectories: &[Trajectory<T>]) -> Result<()> {
    for t in trajectories {
        for e in &t.events {
            serde_json::to_writer(&mut out, &row(t.replica, e)).map_err(io_err)?;
            out.write_all(b"\n").map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}
