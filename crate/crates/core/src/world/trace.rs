//! JSON-lines episode traces, one record per step.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::WorldState;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub robots: Vec<[f64; 2]>,
    pub tasks: Vec<[f64; 2]>,
    pub targets: Vec<Option<usize>>,
    pub bound: Vec<bool>,
    pub rewards: Vec<f64>,
}

impl TraceRecord {
    pub fn capture(world: &WorldState, rewards: &[f64]) -> Self {
        Self {
            t: world.t,
            robots: world.robots.iter().map(|r| r.position).collect(),
            tasks: world.tasks.iter().map(|t| t.position).collect(),
            targets: world.robots.iter().map(|r| r.target).collect(),
            bound: world.robots.iter().map(|r| !r.is_free()).collect(),
            rewards: rewards.to_vec(),
        }
    }
}

pub fn write_trace<W: Write>(mut out: W, records: &[TraceRecord]) -> Result<()> {
    for rec in records {
        let line = serde_json::to_string(rec).map_err(|e| Error::Invalid(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io("<trace>", e))?;
    }
    Ok(())
}
