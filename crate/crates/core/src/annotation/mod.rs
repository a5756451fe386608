//! Reasoning annotation: scene understanding, sign recognition, critical
//! objects and meta actions derived from simulator ground truth, plus the
//! templated text they serialize to.

mod dataset;
mod meta;
mod narrate;
mod text;

pub use dataset::{
    dataset_hash, encode_dataset, generate_dataset, read_dataset, records_from_rollout, records_hash, rollout_expert,
    write_dataset, DatasetStats,
    DATASET_SCHEMA_VERSION,
};
pub use meta::{classify_lateral, classify_longitudinal, derive_meta_actions, low_pass};
pub use narrate::{describe_scene, identify_critical_objects, report_signs};
pub use text::{format_number, format_trajectory, serialize_record, serialize_stages, template_corpus, word_count};

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::scene::camera::{CameraConfig, PseudoFrame};
use crate::scene::types::{AgentId, AgentKind, LaneId, LightColor, NavCommand};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationConfig {
    pub accel_threshold: f64,
    pub emergency_threshold: f64,
    pub stop_speed: f64,
    pub turn_angle_deg: f64,
    pub lane_change_offset: f64,
    pub headway: f64,
    pub range: f64,
    pub scene_lookahead: f64,
    pub window_ticks: usize,
    pub alpha: f64,
    pub stride: usize,
    pub horizon_ticks: usize,
    pub timeout_ticks: u64,
    pub camera: CameraConfig,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        Self {
            accel_threshold: 0.4,
            emergency_threshold: -3.0,
            stop_speed: 0.1,
            turn_angle_deg: 60.0,
            lane_change_offset: 1.0,
            headway: 3.0,
            range: 50.0,
            scene_lookahead: 30.0,
            window_ticks: 20,
            alpha: 0.3,
            stride: 5,
            horizon_ticks: 30,
            timeout_ticks: 2000,
            camera: CameraConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    StraightRoad,
    Intersection,
    JunctionApproach,
    MergeZone,
}

impl SceneKind {
    pub const ALL: [SceneKind; 4] =
        [SceneKind::StraightRoad, SceneKind::Intersection, SceneKind::JunctionApproach, SceneKind::MergeZone];

    pub fn phrase(self) -> &'static str {
        match self {
            SceneKind::StraightRoad => "a straight road",
            SceneKind::Intersection => "an intersection",
            SceneKind::JunctionApproach => "the approach to a junction",
            SceneKind::MergeZone => "a merge zone",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lateral {
    LaneFollow,
    LaneChangeLeft,
    LaneChangeRight,
    TurnLeft,
    TurnRight,
    Straight,
}

impl Lateral {
    pub const ALL: [Lateral; 6] = [
        Lateral::LaneFollow,
        Lateral::LaneChangeLeft,
        Lateral::LaneChangeRight,
        Lateral::TurnLeft,
        Lateral::TurnRight,
        Lateral::Straight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Lateral::LaneFollow => "lane follow",
            Lateral::LaneChangeLeft => "lane change left",
            Lateral::LaneChangeRight => "lane change right",
            Lateral::TurnLeft => "turn left",
            Lateral::TurnRight => "turn right",
            Lateral::Straight => "go straight",
        }
    }

    pub fn intent(self) -> &'static str {
        match self {
            Lateral::LaneFollow => "follow the lane",
            Lateral::LaneChangeLeft => "change to the left lane",
            Lateral::LaneChangeRight => "change to the right lane",
            Lateral::TurnLeft => "turn left",
            Lateral::TurnRight => "turn right",
            Lateral::Straight => "go straight through the junction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Longitudinal {
    Accelerate,
    Decelerate,
    Stop,
    EmergencyBrake,
    Keep,
}

impl Longitudinal {
    pub const ALL: [Longitudinal; 5] = [
        Longitudinal::Accelerate,
        Longitudinal::Decelerate,
        Longitudinal::Stop,
        Longitudinal::EmergencyBrake,
        Longitudinal::Keep,
    ];

    pub fn intent(self) -> &'static str {
        match self {
            Longitudinal::Accelerate => "accelerate",
            Longitudinal::Decelerate => "decelerate",
            Longitudinal::Stop => "stop",
            Longitudinal::EmergencyBrake => "brake hard",
            Longitudinal::Keep => "keep the current speed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MetaAction {
    pub lateral: Lateral,
    pub longitudinal: Longitudinal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRoute {
    pub maneuver: Lateral,
    pub target_lane: LaneId,
    /// Target lane carries opposing traffic.
    pub oncoming: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneNarration {
    pub scene_kind: SceneKind,
    pub lane_count: usize,
    pub current_lane: LaneId,
    pub candidate_routes: Vec<CandidateRoute>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignEntryKind {
    TrafficLight,
    Warning,
    Construction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignEntry {
    pub kind: SignEntryKind,
    pub state: Option<LightColor>,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SignReport {
    pub entries: Vec<SignEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interaction {
    YieldTo,
    Follow,
    Overtake,
    Avoid,
    IgnoreAfterClear,
}

impl Interaction {
    pub const ALL: [Interaction; 5] =
        [Interaction::YieldTo, Interaction::Follow, Interaction::Overtake, Interaction::Avoid, Interaction::IgnoreAfterClear];

    pub fn phrase(self) -> &'static str {
        match self {
            Interaction::YieldTo => "it may enter the planned path, so yield to it",
            Interaction::Follow => "follow it and keep a safe gap",
            Interaction::Overtake => "pass it on the planned path",
            Interaction::Avoid => "it blocks the path, so avoid it",
            Interaction::IgnoreAfterClear => "it has cleared the path, so ignore it",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalObject {
    pub id: AgentId,
    pub kind: AgentKind,
    /// Ego-frame offset: x forward, y left.
    pub relative: Vec2,
    pub speed: f64,
    pub interaction: Interaction,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CriticalObjectReport {
    pub entries: Vec<CriticalObject>,
}

/// Reasoning blocks in their fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "SU")]
    SceneUnderstanding,
    #[serde(rename = "TS")]
    TrafficSigns,
    #[serde(rename = "CO")]
    CriticalObjects,
    #[serde(rename = "MA")]
    MetaAction,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::SceneUnderstanding, Stage::TrafficSigns, Stage::CriticalObjects, Stage::MetaAction];

    pub fn heading(self) -> &'static str {
        match self {
            Stage::SceneUnderstanding => "Scene Understanding",
            Stage::TrafficSigns => "Traffic Sign Recognition",
            Stage::CriticalObjects => "Critical Object Identification for Risk Assessment",
            Stage::MetaAction => "Meta Action",
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Stage::SceneUnderstanding => "SU",
            Stage::TrafficSigns => "TS",
            Stage::CriticalObjects => "CO",
            Stage::MetaAction => "MA",
        }
    }

    /// Parses a comma-separated list such as `SU,TS` into canonical order.
    pub fn parse_list(s: &str) -> crate::Result<Vec<Stage>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let stage = Stage::ALL
                .iter()
                .copied()
                .find(|st| st.code().eq_ignore_ascii_case(part))
                .ok_or_else(|| crate::Error::Config(format!("unknown reasoning stage `{part}`")))?;
            if !out.contains(&stage) {
                out.push(stage);
            }
        }
        out.sort();
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoContext {
    pub speed: f64,
    pub accel: f64,
    pub command: NavCommand,
}

/// One training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningRecord {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub tick: u64,
    pub context: EgoContext,
    pub frames_t: Vec<PseudoFrame>,
    pub frames_future: Vec<PseudoFrame>,
    pub narration: SceneNarration,
    pub signs: SignReport,
    pub critical: CriticalObjectReport,
    pub meta: MetaAction,
    /// Ego-frame positions 0.5, 1.0, 1.5 and 2.0 s ahead.
    pub expert_waypoints: [Vec2; 4],
    /// Reasoning blocks present in the serialized text.
    pub stages: Vec<Stage>,
}
