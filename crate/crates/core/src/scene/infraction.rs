use serde::{Deserialize, Serialize};

use crate::geometry::segments_intersect;
use crate::scene::sim::WorldState;
use crate::scene::types::{AgentKind, LightColor};

/// Ego centre farther than this from every centerline is off road.
pub const OFF_ROAD_DISTANCE: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfractionKind {
    CollisionPedestrian,
    CollisionVehicle,
    CollisionStatic,
    RedLight,
    OffRoad,
}

impl InfractionKind {
    pub const ALL: [InfractionKind; 5] = [
        InfractionKind::CollisionPedestrian,
        InfractionKind::CollisionVehicle,
        InfractionKind::CollisionStatic,
        InfractionKind::RedLight,
        InfractionKind::OffRoad,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Infraction {
    pub kind: InfractionKind,
    pub tick: u64,
    /// Agent or light involved; `None` for off-road.
    pub subject: Option<u32>,
}

impl Infraction {
    /// Key under which repeated detections collapse to one event per episode.
    pub fn key(&self) -> (InfractionKind, Option<u32>) {
        (self.kind, self.subject)
    }
}

pub fn detect_infractions(prev: &WorldState, cur: &WorldState) -> Vec<Infraction> {
    detect_infractions_with(prev, cur, OFF_ROAD_DISTANCE)
}

/// Infractions observed during the transition `prev -> cur`.
pub fn detect_infractions_with(prev: &WorldState, cur: &WorldState, off_road: f64) -> Vec<Infraction> {
    debug_assert_eq!(cur.tick, prev.tick + 1);
    let mut out = Vec::new();
    let ego_box = cur.ego.bbox();
    for agent in &cur.agents {
        if ego_box.overlaps(&agent.bbox()) {
            let kind = match agent.kind {
                AgentKind::Pedestrian => InfractionKind::CollisionPedestrian,
                AgentKind::Vehicle => InfractionKind::CollisionVehicle,
                AgentKind::Static => InfractionKind::CollisionStatic,
            };
            out.push(Infraction { kind, tick: cur.tick, subject: Some(agent.id) });
        }
    }
    for light in &prev.lights {
        if light.state != LightColor::Red {
            continue;
        }
        let (a, b) = light.stop_line;
        if segments_intersect(prev.ego.position, cur.ego.position, a, b) {
            // only crossings in the governed direction count
            let lane_dir = cur
                .map
                .lane(light.lane)
                .map(|l| crate::geometry::Vec2::from_angle(l.centerline.heading_at(l.centerline.length())))
                .unwrap_or_default();
            if (cur.ego.position - prev.ego.position).dot(lane_dir) > 0.0 {
                out.push(Infraction { kind: InfractionKind::RedLight, tick: cur.tick, subject: Some(light.id) });
            }
        }
    }
    if cur.map.distance_to_centerline(cur.ego.position) > off_road {
        out.push(Infraction { kind: InfractionKind::OffRoad, tick: cur.tick, subject: None });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::scene::scenario::{make_scenario, ScenarioKind};
    use crate::scene::sim::step;
    use crate::scene::types::{Action, AgentState, DT};

    fn world() -> WorldState {
        let mut spec = make_scenario(ScenarioKind::PedestrianCrossing, 1);
        spec.agents.clear();
        spec.triggers.clear();
        WorldState::from_scenario(&spec).unwrap()
    }

    fn put(world: &mut WorldState, kind: AgentKind, at: Vec2) {
        world.agents.push(AgentState {
            id: 77,
            kind,
            position: at,
            heading: 0.0,
            speed: 0.0,
            half_extents: Vec2::new(2.0, 0.9),
        });
    }

    #[test]
    fn disjoint_boxes_no_collision() {
        let w = world();
        let mut n = step(&w, Action::default(), DT);
        let ego = n.ego.position;
        // ego half length 2.3 + 2.0 + 0.1 gap
        put(&mut n, AgentKind::Vehicle, ego + Vec2::new(4.4, 0.0));
        assert!(detect_infractions(&w, &n).is_empty());
    }

    #[test]
    fn centered_pedestrian_collides() {
        let w = world();
        let mut n = step(&w, Action::default(), DT);
        let ego = n.ego.position;
        put(&mut n, AgentKind::Pedestrian, ego);
        let inf = detect_infractions(&w, &n);
        assert_eq!(inf.len(), 1);
        assert_eq!(inf[0].kind, InfractionKind::CollisionPedestrian);
    }

    #[test]
    fn stop_line_crossings() {
        let spec = make_scenario(ScenarioKind::SignStop, 4);
        let mut w = WorldState::from_scenario(&spec).unwrap();
        let line = w.lights[0].stop_line;
        let mid = line.0.lerp(line.1, 0.5);
        w.ego.position = mid - Vec2::new(0.3, 0.0);
        w.ego.speed = 6.0;
        w.ego.heading = 0.0;
        for color in [LightColor::Green, LightColor::Red] {
            let mut prev = w.clone();
            for l in &mut prev.lights {
                l.state = color;
            }
            let mut cur = prev.clone();
            cur.tick += 1;
            cur.ego.position = mid + Vec2::new(0.3, 0.0);
            let red = detect_infractions(&prev, &cur).iter().any(|i| i.kind == InfractionKind::RedLight);
            assert_eq!(red, color == LightColor::Red);
        }
    }

    #[test]
    fn off_road_far_from_lanes() {
        let w = world();
        let mut n = step(&w, Action::default(), DT);
        n.ego.position = Vec2::new(50.0, -6.5);
        assert!(detect_infractions(&w, &n).iter().any(|i| i.kind == InfractionKind::OffRoad));
    }
}
