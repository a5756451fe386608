use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::to_local;
use crate::scene::camera::render_pseudo_cameras;
use crate::scene::expert::{ego_s, expert_policy};
use crate::scene::scenario::ScenarioSpec;
use crate::scene::sim::{route_completion, WorldState};
use crate::scene::trace::fnv1a64;
use crate::scene::types::DT;

use super::{
    describe_scene, derive_meta_actions, identify_critical_objects, report_signs, serialize_record, word_count,
    AnnotationConfig, EgoContext, ReasoningRecord, Stage,
};

pub const DATASET_SCHEMA_VERSION: u32 = 1;

/// Expert rollout from spawn until route completion or the timeout; the
/// first element is the spawn state.
pub fn rollout_expert(spec: &ScenarioSpec, cfg: &AnnotationConfig) -> Result<Vec<WorldState>> {
    let mut w = WorldState::from_scenario(spec)?;
    let mut states = vec![w.clone()];
    while w.tick < cfg.timeout_ticks && route_completion(&w) < 1.0 {
        let a = expert_policy(&w);
        w.step_mut(a, DT);
        states.push(w.clone());
    }
    Ok(states)
}

/// Records every `stride` ticks for which the future frame exists.
pub fn records_from_rollout(states: &[WorldState], stages: &[Stage], cfg: &AnnotationConfig) -> Result<Vec<ReasoningRecord>> {
    let n = states.len();
    let mut out = Vec::new();
    let mut t = 0;
    while cfg.stride > 0 && t + cfg.horizon_ticks < n {
        let st = &states[t];
        let ego = &st.ego;
        let wp = |k: usize| to_local(states[t + k].ego.position, ego.position, ego.heading);
        let s = ego_s(st);
        let mut rec = ReasoningRecord {
            schema_version: DATASET_SCHEMA_VERSION,
            scenario: st.context.spec.kind.name().to_string(),
            seed: st.context.spec.seed,
            tick: st.tick,
            context: EgoContext { speed: ego.speed, accel: ego.accel, command: st.route.command_at(s) },
            frames_t: render_pseudo_cameras(st, &cfg.camera),
            frames_future: render_pseudo_cameras(&states[t + cfg.horizon_ticks], &cfg.camera),
            narration: describe_scene(st, cfg)?,
            signs: report_signs(st, cfg),
            critical: identify_critical_objects(st, cfg),
            meta: derive_meta_actions(&states[t..], cfg)?,
            expert_waypoints: [wp(5), wp(10), wp(15), wp(20)],
            stages: stages.to_vec(),
        };
        rec.stages.sort();
        rec.stages.dedup();
        out.push(rec);
        t += cfg.stride;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetStats {
    pub count: usize,
    pub mean_words: f64,
    /// Records per 25-word length bin, keyed by the bin's lower edge.
    pub length_histogram: BTreeMap<usize, usize>,
    pub vocabulary: BTreeMap<String, usize>,
    pub per_scenario: BTreeMap<String, usize>,
}

impl DatasetStats {
    pub fn of(records: &[ReasoningRecord]) -> Self {
        let mut st = DatasetStats { count: records.len(), ..Default::default() };
        let mut total = 0usize;
        for r in records {
            let text = serialize_record(r);
            let n = word_count(&text);
            total += n;
            *st.length_histogram.entry(n / 25 * 25).or_default() += 1;
            *st.per_scenario.entry(r.scenario.clone()).or_default() += 1;
            for w in text.split_whitespace() {
                let w = w.trim_matches(|c: char| matches!(c, ',' | '.' | ':' | '(' | ')'));
                if !w.is_empty() && !w.starts_with(|c: char| c.is_ascii_digit() || c == '-') {
                    *st.vocabulary.entry(w.to_string()).or_default() += 1;
                }
            }
        }
        st.mean_words = if records.is_empty() { 0.0 } else { total as f64 / records.len() as f64 };
        st
    }
}

/// Line-delimited JSON, one record per line.
pub fn encode_dataset(records: &[ReasoningRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, records: &[ReasoningRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode_dataset(records)?)?;
    w.flush()?;
    Ok(())
}

/// Hash of the encoded records; equals `dataset_hash` of the written file.
pub fn records_hash(records: &[ReasoningRecord]) -> Result<u64> {
    Ok(fnv1a64(&encode_dataset(records)?))
}

pub fn read_dataset(path: &Path) -> Result<Vec<ReasoningRecord>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(&line)?;
        let found = v.get("schema_version").and_then(|x| x.as_u64()).unwrap_or(0) as u32;
        if found != DATASET_SCHEMA_VERSION {
            return Err(Error::SchemaVersion { expected: DATASET_SCHEMA_VERSION, found });
        }
        out.push(serde_json::from_value(v)?);
    }
    Ok(out)
}

pub fn dataset_hash(path: &Path) -> Result<u64> {
    Ok(fnv1a64(&std::fs::read(path)?))
}

/// Rolls out the expert on every scenario in order, annotates, and writes
/// the records to `out` when given.
pub fn generate_dataset(
    scenarios: &[ScenarioSpec],
    stages: &[Stage],
    cfg: &AnnotationConfig,
    out: Option<&Path>,
) -> Result<(Vec<ReasoningRecord>, DatasetStats)> {
    let mut records = Vec::new();
    for spec in scenarios {
        let states = rollout_expert(spec, cfg)?;
        records.extend(records_from_rollout(&states, stages, cfg)?);
    }
    if let Some(p) = out {
        write_dataset(p, &records)?;
    }
    let stats = DatasetStats::of(&records);
    Ok((records, stats))
}
