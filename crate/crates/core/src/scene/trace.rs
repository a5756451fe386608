//! Line-delimited episode traces and their 64-bit hash.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::sim::{SimEvent, WorldState};
use crate::scene::types::{AgentState, EgoState, LightColor};

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightSnapshot {
    pub id: u32,
    pub state: LightColor,
}

/// One tick of ground truth in canonical form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub schema_version: u32,
    pub scenario: String,
    pub tick: u64,
    pub ego: EgoState,
    pub agents: Vec<AgentState>,
    pub lights: Vec<LightSnapshot>,
    pub route_progress: f64,
    /// Events raised during this tick.
    pub events: Vec<SimEvent>,
}

impl Snapshot {
    pub fn of(world: &WorldState) -> Self {
        Self {
            schema_version: TRACE_SCHEMA_VERSION,
            scenario: world.context.spec.name.clone(),
            tick: world.tick,
            ego: world.ego,
            agents: world.agents.clone(),
            lights: world.lights.iter().map(|l| LightSnapshot { id: l.id, state: l.state }).collect(),
            route_progress: world.route_progress,
            events: world.events.iter().filter(|e| e.tick == world.tick).copied().collect(),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("snapshot serializes")
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Incremental FNV-1a over the canonical trace lines, newline-terminated.
#[derive(Debug, Clone, Copy)]
pub struct TraceHasher(u64);

impl Default for TraceHasher {
    fn default() -> Self {
        Self(FNV_OFFSET)
    }
}

impl TraceHasher {
    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }

    pub fn push(&mut self, snapshot: &Snapshot) {
        self.update(snapshot.to_line().as_bytes());
        self.update(b"\n");
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = TraceHasher::default();
    h.update(bytes);
    h.finish()
}

pub fn trace_hash(snapshots: &[Snapshot]) -> u64 {
    let mut h = TraceHasher::default();
    for s in snapshots {
        h.push(s);
    }
    h.finish()
}

pub fn write_trace<W: Write>(mut w: W, snapshots: &[Snapshot]) -> Result<()> {
    for s in snapshots {
        writeln!(w, "{}", s.to_line())?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(r: R) -> Result<Vec<Snapshot>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Snapshot = serde_json::from_str(&line)?;
        if s.schema_version != TRACE_SCHEMA_VERSION {
            return Err(Error::SchemaVersion { expected: TRACE_SCHEMA_VERSION, found: s.schema_version });
        }
        out.push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        // published FNV-1a 64 test vectors
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn round_trip_preserves_hash() {
        let spec = crate::scene::scenario::make_scenario(crate::scene::scenario::ScenarioKind::Merge, 3);
        let mut w = WorldState::from_scenario(&spec).unwrap();
        let mut snaps = vec![Snapshot::of(&w)];
        for _ in 0..20 {
            w.step_mut(crate::scene::types::Action::new(1.0, 0.0), crate::scene::types::DT);
            snaps.push(Snapshot::of(&w));
        }
        let mut buf = Vec::new();
        write_trace(&mut buf, &snaps).unwrap();
        let back = read_trace(buf.as_slice()).unwrap();
        assert_eq!(trace_hash(&back), trace_hash(&snaps));
        assert_eq!(fnv1a64(&buf), trace_hash(&snaps));
    }
}
