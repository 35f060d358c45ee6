//! JSON-Lines trace files: a header line carrying the seed and full config,
//! then one object per slot.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::episode::{EpisodeLog, SlotLog};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub kind: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

impl TraceHeader {
    pub fn new(seed: u64, config: serde_json::Value) -> Self {
        TraceHeader { kind: "header".into(), seed, config }
    }
}

pub fn write_trace(path: &Path, header: &TraceHeader, episodes: &[EpisodeLog]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut line = |value: String| writeln!(out, "{value}").map_err(|e| Error::io(path, e));
    line(serde_json::to_string(header).map_err(|e| Error::format(path, e.to_string()))?)?;
    for ep in episodes {
        for slot in &ep.slots {
            line(serde_json::to_string(slot).map_err(|e| Error::format(path, e.to_string()))?)?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a trace, grouping consecutive slots by trajectory id.
pub fn read_trace(path: &Path) -> Result<(TraceHeader, Vec<EpisodeLog>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty trace file"))?
        .map_err(|e| Error::io(path, e))?;
    let header: TraceHeader =
        serde_json::from_str(&first).map_err(|e| Error::format(path, format!("line 1: {e}")))?;
    if header.kind != "header" {
        return Err(Error::format(path, "line 1 is not a header"));
    }
    let mut episodes: Vec<EpisodeLog> = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let slot: SlotLog =
            serde_json::from_str(&line).map_err(|e| Error::format(path, format!("line {}: {e}", n + 2)))?;
        match episodes.last_mut() {
            Some(ep) if ep.traj == slot.traj => ep.slots.push(slot),
            _ => episodes.push(EpisodeLog { traj: slot.traj, slots: vec![slot] }),
        }
    }
    Ok((header, episodes))
}
