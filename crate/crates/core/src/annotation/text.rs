use std::collections::BTreeSet;
use std::fmt::Write;

use crate::geometry::Vec2;
use crate::scene::types::{AgentKind, LightColor, NavCommand};

use super::{
    CandidateRoute, CriticalObjectReport, Interaction, Lateral, Longitudinal, ReasoningRecord, SceneKind,
    SceneNarration, SignEntryKind, SignReport, Stage,
};

/// Two decimals, never a negative zero.
pub fn format_number(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

pub fn format_trajectory(wps: &[Vec2; 4]) -> String {
    let pts: Vec<String> = wps.iter().map(|p| format!("({}, {})", format_number(p.x), format_number(p.y))).collect();
    format!("Trajectory: {}", pts.join(", "))
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn candidate_phrase(c: &CandidateRoute) -> String {
    let lane = if c.oncoming { format!("oncoming lane {}", c.target_lane) } else { format!("lane {}", c.target_lane) };
    match c.maneuver {
        Lateral::LaneFollow => format!("lane follow on {lane}"),
        m => format!("{} to {lane}", m.name()),
    }
}

fn scene_block(n: &SceneNarration, speed: f64, command: NavCommand) -> String {
    let lanes = if n.lane_count == 1 { "lane" } else { "lanes" };
    let cands: Vec<String> = n.candidate_routes.iter().map(candidate_phrase).collect();
    format!(
        "{}: the ego vehicle drives in lane {} on {} with {} {lanes} in its direction. It moves at {} m/s and the navigation command is {}. Candidate routes are {}.",
        Stage::SceneUnderstanding.heading(),
        n.current_lane,
        n.scene_kind.phrase(),
        n.lane_count,
        format_number(speed),
        command.word(),
        cands.join(", "),
    )
}

fn sign_name(kind: SignEntryKind, state: Option<LightColor>) -> String {
    match kind {
        SignEntryKind::TrafficLight => format!("{} traffic light", state.map_or("unknown", |s| s.word())),
        SignEntryKind::Warning => "warning sign".to_string(),
        SignEntryKind::Construction => "construction sign".to_string(),
    }
}

fn sign_advice(kind: SignEntryKind, state: Option<LightColor>) -> &'static str {
    match (kind, state) {
        (SignEntryKind::TrafficLight, Some(LightColor::Red)) => "The ego vehicle must stop before the stop line.",
        (SignEntryKind::TrafficLight, Some(LightColor::Yellow)) => "The light turns red soon, so prepare to stop.",
        (SignEntryKind::TrafficLight, _) => "The light is green, so the ego vehicle may pass.",
        (SignEntryKind::Warning, _) => "The warning sign asks for extra caution.",
        (SignEntryKind::Construction, _) => "Construction work may block the lane ahead.",
    }
}

fn sign_block(r: &SignReport) -> String {
    let head = Stage::TrafficSigns.heading();
    if r.entries.is_empty() {
        return format!("{head}: no traffic light or sign affects the route within the next 50 m.");
    }
    let items: Vec<String> =
        r.entries.iter().map(|e| format!("a {} {} m ahead", sign_name(e.kind, e.state), format_number(e.distance))).collect();
    let mut out = format!("{head}: the route has {}.", items.join(", "));
    let mut said = BTreeSet::new();
    for e in &r.entries {
        let advice = sign_advice(e.kind, e.state);
        if said.insert(advice) {
            out.push(' ');
            out.push_str(advice);
        }
    }
    out
}

fn risk_level(r: &CriticalObjectReport) -> &'static str {
    let urgent = r
        .entries
        .iter()
        .any(|e| matches!(e.interaction, Interaction::YieldTo | Interaction::Avoid) && e.relative.x < 25.0);
    if urgent {
        "high"
    } else {
        "moderate"
    }
}

fn object_block(r: &CriticalObjectReport) -> String {
    let head = Stage::CriticalObjects.heading();
    if r.entries.is_empty() {
        return format!("{head}: no critical object is near the planned path, so the risk is low.");
    }
    let mut out = format!("{head}:");
    for e in &r.entries {
        let lon = if e.relative.x >= 0.0 { "ahead" } else { "behind" };
        let lat = if e.relative.y >= 0.0 { "left" } else { "right" };
        let _ = write!(
            out,
            " {} {} is {} m {lon} and {} m to the {lat} at {} m/s, {}.",
            e.kind.word(),
            e.id,
            format_number(e.relative.x.abs()),
            format_number(e.relative.y.abs()),
            format_number(e.speed),
            e.interaction.phrase(),
        );
    }
    let _ = write!(out, " The risk is {}.", risk_level(r));
    out
}

fn meta_reason(rec: &ReasoningRecord) -> String {
    match rec.meta.longitudinal {
        Longitudinal::Accelerate | Longitudinal::Keep => "the path ahead is clear".to_string(),
        _ => {
            let light = rec.signs.entries.iter().find(|e| {
                e.kind == SignEntryKind::TrafficLight && matches!(e.state, Some(LightColor::Red | LightColor::Yellow))
            });
            if let Some(l) = light {
                return format!("of the {}", sign_name(l.kind, l.state));
            }
            let obj = rec
                .critical
                .entries
                .iter()
                .find(|e| matches!(e.interaction, Interaction::YieldTo | Interaction::Avoid | Interaction::Follow));
            match obj {
                Some(o) => format!("of {} {}", o.kind.word(), o.id),
                None => "of the road geometry".to_string(),
            }
        }
    }
}

fn meta_block(rec: &ReasoningRecord) -> String {
    format!(
        "{}: the ego vehicle should {} and {} because {}.",
        Stage::MetaAction.heading(),
        rec.meta.lateral.intent(),
        rec.meta.longitudinal.intent(),
        meta_reason(rec),
    )
}

/// Reasoning blocks for `stages`, in canonical order, one per line.
pub fn serialize_stages(rec: &ReasoningRecord, stages: &[Stage]) -> String {
    let mut blocks = Vec::new();
    for st in Stage::ALL {
        if !stages.contains(&st) {
            continue;
        }
        blocks.push(match st {
            Stage::SceneUnderstanding => scene_block(&rec.narration, rec.context.speed, rec.context.command),
            Stage::TrafficSigns => sign_block(&rec.signs),
            Stage::CriticalObjects => object_block(&rec.critical),
            Stage::MetaAction => meta_block(rec),
        });
    }
    blocks.join("\n")
}

/// Full target text: the record's reasoning blocks then the trajectory line.
pub fn serialize_record(rec: &ReasoningRecord) -> String {
    let reasoning = serialize_stages(rec, &rec.stages);
    let traj = format_trajectory(&rec.expert_waypoints);
    if reasoning.is_empty() {
        traj
    } else {
        format!("{reasoning}\n{traj}")
    }
}

/// Every fixed fragment the serializer can emit; the vocabulary is built
/// from this.
pub fn template_corpus() -> Vec<String> {
    let mut out: Vec<String> = vec![
        "the ego vehicle drives in lane on with lane lanes in its direction.".into(),
        "It moves at m/s and the navigation command is. Candidate routes are, oncoming to".into(),
        "no traffic light or sign affects the route within the next m.".into(),
        "the route has a m ahead unknown traffic light warning sign construction sign".into(),
        "no critical object is near the planned path, so the risk is low.".into(),
        "is m ahead behind and m to the left right at m/s. The risk is high moderate.".into(),
        "the ego vehicle should and because the path ahead is clear of the road geometry".into(),
        "Trajectory: ( )".into(),
    ];
    out.extend(Stage::ALL.iter().map(|s| format!("{}:", s.heading())));
    out.extend(SceneKind::ALL.iter().map(|k| k.phrase().to_string()));
    for l in Lateral::ALL {
        out.push(l.name().into());
        out.push(l.intent().into());
    }
    out.extend(Longitudinal::ALL.iter().map(|l| l.intent().to_string()));
    out.extend(Interaction::ALL.iter().map(|i| i.phrase().to_string()));
    out.extend([AgentKind::Vehicle, AgentKind::Pedestrian, AgentKind::Static].iter().map(|k| k.word().to_string()));
    out.extend([LightColor::Red, LightColor::Yellow, LightColor::Green].iter().map(|c| c.word().to_string()));
    out.extend(NavCommand::ALL.iter().map(|c| c.word().to_string()));
    for kind in [SignEntryKind::TrafficLight, SignEntryKind::Warning, SignEntryKind::Construction] {
        for st in [Some(LightColor::Red), Some(LightColor::Yellow), Some(LightColor::Green)] {
            out.push(sign_advice(kind, st).into());
        }
    }
    out
}
