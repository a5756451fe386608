use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::geometry::{to_local, wrap_angle, Vec2};
use crate::scene::expert::{
    ego_s, extents_along, first_crossing, predicted_path, route_samples, CROSSING_MIN_ANGLE_DEG,
};
use crate::scene::map::{LaneGraph, LaneKind};
use crate::scene::sim::WorldState;
use crate::scene::types::{AgentKind, AgentState, LaneId, EGO_HALF_LENGTH, EGO_HALF_WIDTH};

use super::{
    AnnotationConfig, CandidateRoute, CriticalObject, CriticalObjectReport, Interaction, Lateral, SceneKind,
    SceneNarration, SignEntry, SignEntryKind, SignReport,
};

const CORRIDOR_MARGIN: f64 = 0.6;
const PREDICTION_HORIZON: f64 = 6.0;
const CLEARED_RANGE: f64 = 20.0;

/// Lateral primitive for entering `lane` from its predecessor.
fn maneuver_into(map: &LaneGraph, lane: LaneId, turn_angle: f64) -> Lateral {
    let Some(l) = map.lane(lane) else { return Lateral::LaneFollow };
    if l.kind != LaneKind::Junction {
        return Lateral::LaneFollow;
    }
    let dh = l.heading_change();
    if dh > turn_angle {
        Lateral::TurnLeft
    } else if dh < -turn_angle {
        Lateral::TurnRight
    } else {
        Lateral::Straight
    }
}

/// Same-direction lanes side by side with `lane`, including itself.
fn parallel_lanes(map: &LaneGraph, lane: LaneId) -> Vec<LaneId> {
    let mut out = vec![lane];
    for go_left in [true, false] {
        let mut cur = lane;
        loop {
            let next = map.lane(cur).and_then(|l| if go_left { l.left_neighbor } else { l.right_neighbor });
            match next {
                Some(n) if map.same_direction(lane, n) && !out.contains(&n) => {
                    out.push(n);
                    cur = n;
                }
                _ => break,
            }
        }
    }
    out
}

pub fn describe_scene(world: &WorldState, cfg: &AnnotationConfig) -> Result<SceneNarration> {
    let map = &world.map;
    let route = &world.route;
    // while passing an obstruction the ego may drive an oncoming lane
    let (lane_id, _, _) = map
        .locate(world.ego.position, world.ego.heading)
        .or_else(|| map.locate(world.ego.position, world.ego.heading + std::f64::consts::PI))
        .ok_or(Error::OffMap)?;
    let lane = map.lane(lane_id).ok_or(Error::OffMap)?;
    let s = ego_s(world);
    let turn_angle = cfg.turn_angle_deg.to_radians();

    let junction_within = |dist: f64| {
        let mut d = 0.0;
        while d <= dist {
            if map.lane(route.lane_at(s + d)).is_some_and(|l| l.kind == LaneKind::Junction) {
                return true;
            }
            d += 2.0;
        }
        false
    };
    let parallel = parallel_lanes(map, lane_id);
    let route_left = route.total_length - s;
    let lane_ends = parallel.iter().any(|id| {
        map.lane(*id).is_some_and(|l| {
            let rest = l.centerline.length() - l.centerline.project(world.ego.position).s;
            l.successors.is_empty() && rest < 2.0 * cfg.scene_lookahead && rest + cfg.scene_lookahead < route_left
        })
    });
    let scene_kind = if lane.kind == LaneKind::Junction || junction_within(cfg.scene_lookahead) {
        SceneKind::Intersection
    } else if junction_within(2.0 * cfg.scene_lookahead) {
        SceneKind::JunctionApproach
    } else if lane_ends {
        SceneKind::MergeZone
    } else {
        SceneKind::StraightRoad
    };

    let mut candidate_routes = Vec::new();
    if lane.kind == LaneKind::Junction {
        let target = lane.successors.first().copied().unwrap_or(lane_id);
        candidate_routes.push(CandidateRoute { maneuver: maneuver_into(map, lane_id, turn_angle), target_lane: target, oncoming: false });
    } else if lane.successors.is_empty() {
        candidate_routes.push(CandidateRoute { maneuver: Lateral::LaneFollow, target_lane: lane_id, oncoming: false });
    } else {
        for succ in &lane.successors {
            candidate_routes.push(CandidateRoute { maneuver: maneuver_into(map, *succ, turn_angle), target_lane: *succ, oncoming: false });
        }
    }
    for (neighbor, maneuver) in [(lane.left_neighbor, Lateral::LaneChangeLeft), (lane.right_neighbor, Lateral::LaneChangeRight)] {
        let Some(n) = neighbor else { continue };
        let oncoming = !map.same_direction(lane_id, n);
        // opposing lanes are only a candidate when the route borrows them
        if oncoming && !route.lane_ids.contains(&n) {
            continue;
        }
        candidate_routes.push(CandidateRoute { maneuver, target_lane: n, oncoming });
    }
    Ok(SceneNarration { scene_kind, lane_count: parallel.len(), current_lane: lane_id, candidate_routes })
}

pub fn report_signs(world: &WorldState, cfg: &AnnotationConfig) -> SignReport {
    let path = &world.route.path;
    let s = ego_s(world);
    let mut entries = Vec::new();
    for light in &world.lights {
        if !world.route.lane_ids.contains(&light.lane) {
            continue;
        }
        let p = path.project_window(light.stop_line_mid(), s - 5.0, s + cfg.range);
        let d = p.s - s;
        if p.distance <= 2.0 && (0.0..=cfg.range).contains(&d) {
            entries.push(SignEntry { kind: SignEntryKind::TrafficLight, state: Some(light.state), distance: d });
        }
    }
    for sign in &world.signs {
        if !world.route.lane_ids.contains(&sign.lane) {
            continue;
        }
        let p = path.project_window(sign.position, s - 5.0, s + cfg.range);
        let d = p.s - s;
        if p.distance <= 6.0 && (0.0..=cfg.range).contains(&d) {
            let kind = match sign.kind {
                crate::scene::types::SignKind::Warning => SignEntryKind::Warning,
                crate::scene::types::SignKind::Construction => SignEntryKind::Construction,
            };
            entries.push(SignEntry { kind, state: None, distance: d });
        }
    }
    entries.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    SignReport { entries }
}

/// Arc length along the agent's own script where it cuts the route window,
/// if it ever does.
fn script_crossing(world: &WorldState, a: &AgentState, route: &[(f64, Vec2)]) -> Option<f64> {
    let script = world.context.scripts.get(&a.id)?;
    let sp = &script.path;
    let mut pts = Vec::new();
    let mut k = 0.0;
    while k < sp.length() {
        pts.push(sp.point_at(k));
        k += 1.0;
    }
    pts.push(sp.end());
    for (i, w) in pts.windows(2).enumerate() {
        if first_crossing(w, route).is_some_and(|(_, ang)| ang > CROSSING_MIN_ANGLE_DEG.to_radians()) {
            return Some(i as f64 + 0.5);
        }
    }
    None
}

fn classify(world: &WorldState, a: &AgentState, s: f64, ego_lane: Option<LaneId>, route: &[(f64, Vec2)], cfg: &AnnotationConfig) -> Option<Interaction> {
    let path = &world.route.path;
    let p = path.project_window(a.position, s - CLEARED_RANGE, s + cfg.range);
    let delta = wrap_angle(a.heading - path.heading_at(p.s));
    let (along, across) = extents_along(a, delta);
    let in_corridor = p.lateral.abs() < EGO_HALF_WIDTH + across + CORRIDOR_MARGIN;
    let ahead = p.s > s;
    let parked = world.context.scripts.get(&a.id).is_none_or(|sc| sc.cruise_speed <= 0.0);
    let stationary = a.kind == AgentKind::Static || (a.speed < 0.1 && parked);
    let moving = a.speed > 0.05;

    if in_corridor && ahead {
        if stationary {
            return Some(Interaction::Avoid);
        }
        if a.kind == AgentKind::Pedestrian || delta.abs() > FRAC_PI_2 {
            return Some(Interaction::YieldTo);
        }
        let gap = p.s - s - EGO_HALF_LENGTH - along;
        return (gap < cfg.headway * world.ego.speed.max(3.0)).then_some(Interaction::Follow);
    }
    if moving && a.kind != AgentKind::Static {
        let pred = predicted_path(world, a, PREDICTION_HORIZON)?;
        if first_crossing(&pred, route).is_some_and(|(s_c, ang)| s_c > s && ang > CROSSING_MIN_ANGLE_DEG.to_radians()) {
            return Some(Interaction::YieldTo);
        }
    }
    let cross_at = if a.kind == AgentKind::Static { None } else { script_crossing(world, a, route) };
    if let Some(sc) = cross_at {
        let progress = world.context.scripts.get(&a.id).map(|sp| sp.path.project(a.position).s).unwrap_or(0.0);
        if !moving && a.kind == AgentKind::Pedestrian && progress < sc {
            return Some(Interaction::YieldTo);
        }
    }
    for g in world.gates() {
        if s > g.s_stop + 0.5 || a.kind != AgentKind::Vehicle {
            continue;
        }
        let Some(lane) = world.map.lane(g.lane) else { continue };
        if lane.centerline.distance(a.position) < lane.width * 0.5 {
            let sa = path.project(a.position).s;
            if sa >= s - g.behind && sa <= g.s_end.max(s) + g.ahead {
                return Some(Interaction::YieldTo);
            }
        }
    }
    if ahead && !in_corridor {
        if let Some(l) = ego_lane.and_then(|id| world.map.lane(id)) {
            if l.centerline.distance(a.position) < l.width * 0.5 {
                return Some(Interaction::Overtake);
            }
        }
    }
    if let Some(sc) = cross_at {
        let progress = world.context.scripts.get(&a.id).map(|sp| sp.path.project(a.position).s).unwrap_or(0.0);
        if progress > sc && a.position.distance(world.ego.position) <= CLEARED_RANGE {
            return Some(Interaction::IgnoreAfterClear);
        }
    }
    None
}

pub fn identify_critical_objects(world: &WorldState, cfg: &AnnotationConfig) -> CriticalObjectReport {
    let ego = &world.ego;
    let s = ego_s(world);
    let route = route_samples(world, s - CLEARED_RANGE, s + cfg.range);
    let ego_lane = world.map.locate(ego.position, ego.heading).map(|l| l.0);
    let mut entries: Vec<CriticalObject> = world
        .agents
        .iter()
        .filter(|a| a.position.distance(ego.position) <= cfg.range)
        .filter_map(|a| {
            classify(world, a, s, ego_lane, &route, cfg).map(|interaction| CriticalObject {
                id: a.id,
                kind: a.kind,
                relative: to_local(a.position, ego.position, ego.heading),
                speed: a.speed,
                interaction,
            })
        })
        .collect();
    entries.sort_by(|a, b| a.relative.x.total_cmp(&b.relative.x).then(a.id.cmp(&b.id)));
    CriticalObjectReport { entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::map::RoadLayout;
    use crate::scene::scenario::{make_scenario, RouteSpec, ScenarioKind};
    use crate::scene::types::LightColor;

    fn bare(kind: ScenarioKind, seed: u64) -> WorldState {
        let mut spec = make_scenario(kind, seed);
        spec.agents.clear();
        spec.triggers.clear();
        spec.gates.clear();
        WorldState::from_scenario(&spec).unwrap()
    }

    #[test]
    fn single_lane_straight_road() {
        let mut spec = make_scenario(ScenarioKind::PedestrianCrossing, 0);
        spec.agents.clear();
        spec.triggers.clear();
        spec.layout = RoadLayout::Straight { forward_lanes: 1, opposing_lanes: 0, length: 200.0, right_lane_end: None };
        spec.route = RouteSpec::Straight { start_lane: 0, x0: 10.0, x_end: 190.0, shifts: vec![] };
        let w = WorldState::from_scenario(&spec).unwrap();
        let n = describe_scene(&w, &AnnotationConfig::default()).unwrap();
        assert_eq!(n.scene_kind, SceneKind::StraightRoad);
        assert_eq!(n.lane_count, 1);
        assert_eq!(n.candidate_routes, vec![CandidateRoute { maneuver: Lateral::LaneFollow, target_lane: 0, oncoming: false }]);
    }

    #[test]
    fn right_neighbor_is_a_candidate() {
        let mut w = bare(ScenarioKind::Overtake, 0);
        // put the ego in the left lane of the two-lane road
        w.ego.position = Vec2::new(30.0, 0.0);
        let n = describe_scene(&w, &AnnotationConfig::default()).unwrap();
        assert_eq!(n.current_lane, 0);
        assert_eq!(n.lane_count, 2);
        assert!(n.candidate_routes.contains(&CandidateRoute { maneuver: Lateral::LaneChangeRight, target_lane: 1, oncoming: false }));
    }

    #[test]
    fn junction_ahead_is_intersection() {
        let mut w = bare(ScenarioKind::GiveWay, 0);
        let line = w.map.lane(crate::scene::map::inbound_lane_id(crate::scene::map::Arm::West)).unwrap().centerline.end();
        w.ego.position = line - Vec2::new(20.0, 0.0);
        w.route_progress = w.route.path.project(w.ego.position).s;
        let n = describe_scene(&w, &AnnotationConfig::default()).unwrap();
        assert_eq!(n.scene_kind, SceneKind::Intersection);
        assert_eq!(n.candidate_routes.len(), 3);
    }

    #[test]
    fn off_map_is_an_error() {
        let mut w = bare(ScenarioKind::PedestrianCrossing, 0);
        w.ego.position = Vec2::new(50.0, -40.0);
        assert!(matches!(describe_scene(&w, &AnnotationConfig::default()), Err(Error::OffMap)));
    }

    #[test]
    fn red_light_distance_from_ground_truth() {
        let mut w = bare(ScenarioKind::SignStop, 2);
        let line = w.lights[0].stop_line_mid();
        w.ego.position = Vec2::new(line.x - 12.0, line.y);
        w.route_progress = w.route.path.project(w.ego.position).s;
        for l in &mut w.lights {
            l.state = LightColor::Red;
        }
        w.signs.clear();
        let r = report_signs(&w, &AnnotationConfig::default());
        assert_eq!(r.entries.len(), 1);
        assert_eq!(r.entries[0].kind, SignEntryKind::TrafficLight);
        assert_eq!(r.entries[0].state, Some(LightColor::Red));
        assert!((r.entries[0].distance - 12.0).abs() < 1e-9);
    }

    #[test]
    fn off_route_sign_excluded() {
        let mut w = bare(ScenarioKind::AccidentTwoWays, 1);
        for sgn in &mut w.signs {
            sgn.lane = 99;
        }
        assert!(report_signs(&w, &AnnotationConfig::default()).entries.is_empty());
    }

    fn put(w: &mut WorldState, id: u32, kind: AgentKind, at: Vec2, heading: f64, speed: f64) {
        w.agents.push(AgentState { id, kind, position: at, heading, speed, half_extents: Vec2::new(2.3, 0.95) });
    }

    #[test]
    fn empty_road_has_no_critical_objects() {
        let w = bare(ScenarioKind::PedestrianCrossing, 0);
        assert!(identify_critical_objects(&w, &AnnotationConfig::default()).entries.is_empty());
    }

    #[test]
    fn lead_vehicle_is_followed() {
        let mut w = bare(ScenarioKind::PedestrianCrossing, 0);
        w.ego.speed = 8.0;
        let at = w.ego.position + Vec2::new(15.0, 0.0);
        put(&mut w, 5, AgentKind::Vehicle, at, 0.0, 8.0);
        let r = identify_critical_objects(&w, &AnnotationConfig::default());
        assert_eq!(r.entries.len(), 1);
        assert_eq!(r.entries[0].interaction, Interaction::Follow);
        assert!((r.entries[0].relative.x - 15.0).abs() < 1e-9);
    }
}
