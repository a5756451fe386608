//! Scenario library: the four occlusion cases plus six interactive cases,
//! each parameterised by a seed.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Polyline, Vec2};
use crate::scene::map::{
    connector_centerline, inbound_centerline, inbound_lane_id, opposing_lane_id, outbound_centerline, straight_lane_id,
    Arm, LaneShift, RoadLayout, Turn, LANE_WIDTH,
};
use crate::scene::types::{AgentId, AgentKind, LaneId, LightColor, RoadSign, SignKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    #[serde(rename = "DOS01_parked_cars")]
    Dos01ParkedCars,
    #[serde(rename = "DOS02_sudden_brake")]
    Dos02SuddenBrake,
    #[serde(rename = "DOS03_left_turn")]
    Dos03LeftTurn,
    #[serde(rename = "DOS04_red_light")]
    Dos04RedLight,
    Merge,
    Overtake,
    GiveWay,
    SignStop,
    PedestrianCrossing,
    AccidentTwoWays,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 10] = [
        ScenarioKind::Dos01ParkedCars,
        ScenarioKind::Dos02SuddenBrake,
        ScenarioKind::Dos03LeftTurn,
        ScenarioKind::Dos04RedLight,
        ScenarioKind::Merge,
        ScenarioKind::Overtake,
        ScenarioKind::GiveWay,
        ScenarioKind::SignStop,
        ScenarioKind::PedestrianCrossing,
        ScenarioKind::AccidentTwoWays,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Dos01ParkedCars => "DOS01_parked_cars",
            ScenarioKind::Dos02SuddenBrake => "DOS02_sudden_brake",
            ScenarioKind::Dos03LeftTurn => "DOS03_left_turn",
            ScenarioKind::Dos04RedLight => "DOS04_red_light",
            ScenarioKind::Merge => "merge",
            ScenarioKind::Overtake => "overtake",
            ScenarioKind::GiveWay => "give_way",
            ScenarioKind::SignStop => "sign_stop",
            ScenarioKind::PedestrianCrossing => "pedestrian_crossing",
            ScenarioKind::AccidentTwoWays => "accident_two_ways",
        }
    }

    pub fn ability(self) -> AbilityClass {
        match self {
            ScenarioKind::Merge => AbilityClass::Merging,
            ScenarioKind::Overtake | ScenarioKind::AccidentTwoWays => AbilityClass::Overtaking,
            ScenarioKind::Dos01ParkedCars | ScenarioKind::Dos02SuddenBrake | ScenarioKind::PedestrianCrossing => {
                AbilityClass::EmergencyBrake
            }
            ScenarioKind::GiveWay | ScenarioKind::Dos03LeftTurn => AbilityClass::GiveWay,
            ScenarioKind::SignStop | ScenarioKind::Dos04RedLight => AbilityClass::TrafficSign,
        }
    }

    fn salt(self) -> u64 {
        0x9E37_79B9_7F4A_7C15u64.wrapping_mul(self as u64 + 1)
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .iter()
            .copied()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AbilityClass {
    Merging,
    Overtaking,
    EmergencyBrake,
    GiveWay,
    TrafficSign,
}

impl AbilityClass {
    pub const ALL: [AbilityClass; 5] = [
        AbilityClass::Merging,
        AbilityClass::Overtaking,
        AbilityClass::EmergencyBrake,
        AbilityClass::GiveWay,
        AbilityClass::TrafficSign,
    ];
}

/// Scripted agent: follows `path` at `cruise_speed` once spawned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentScript {
    pub id: AgentId,
    pub kind: AgentKind,
    pub half_extents: Vec2,
    pub path: Polyline,
    pub cruise_speed: f64,
    pub initial_speed: f64,
    /// Present from tick 0; otherwise waits for a spawn effect.
    pub active: bool,
    pub accel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum TriggerCondition {
    EgoWithin { center: Vec2, radius: f64 },
    TickAtLeast { tick: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum TriggerEffect {
    Spawn { agent: AgentId },
    /// Brake to a stop, wait `hold_ticks` ticks, then resume cruising.
    Brake { agent: AgentId, decel: f64, hold_ticks: u32 },
    /// Start moving towards cruise speed.
    Cross { agent: AgentId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trigger {
    pub id: u32,
    pub condition: TriggerCondition,
    pub effects: Vec<TriggerEffect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightSpec {
    pub id: u32,
    pub arm: Arm,
    pub schedule: Vec<(LightColor, f64)>,
    pub offset: f64,
}

/// Point on the route where the expert must wait until `lane` is clear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    /// Ego-centre arc length at which to wait.
    pub s_stop: f64,
    pub s_end: f64,
    pub lane: LaneId,
    pub behind: f64,
    pub ahead: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum RouteSpec {
    Straight { start_lane: LaneId, x0: f64, x_end: f64, shifts: Vec<LaneShift> },
    Junction { from: Arm, turn: Turn, start_dist: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub kind: ScenarioKind,
    pub seed: u64,
    pub layout: RoadLayout,
    pub route: RouteSpec,
    pub ego_speed: f64,
    pub target_speed: f64,
    pub agents: Vec<AgentScript>,
    pub triggers: Vec<Trigger>,
    pub lights: Vec<LightSpec>,
    pub signs: Vec<RoadSign>,
    /// Gates given in route x (straight layouts) before conversion to arc length.
    pub gates: Vec<Gate>,
    pub ability: AbilityClass,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        for t in &self.triggers {
            if let TriggerCondition::EgoWithin { radius, .. } = t.condition {
                if radius <= 0.0 {
                    return Err(Error::InvalidMap(format!("trigger {} has non-positive radius", t.id)));
                }
            }
        }
        for a in &self.agents {
            if a.half_extents.x <= 0.0 || a.half_extents.y <= 0.0 {
                return Err(Error::InvalidMap(format!("agent {} has empty extents", a.id)));
            }
            if a.kind == AgentKind::Pedestrian && a.cruise_speed > crate::scene::types::MAX_PEDESTRIAN_SPEED {
                return Err(Error::InvalidMap(format!("pedestrian {} too fast", a.id)));
            }
        }
        Ok(())
    }
}

const CAR: Vec2 = Vec2::new(2.3, 0.95);
const TRUCK: Vec2 = Vec2::new(4.5, 1.3);
const PED: Vec2 = Vec2::new(0.3, 0.3);

fn line(a: Vec2, b: Vec2) -> Polyline {
    Polyline::new(vec![a, b]).expect("distinct endpoints")
}

fn moving(id: AgentId, kind: AgentKind, ext: Vec2, path: Polyline, speed: f64) -> AgentScript {
    AgentScript { id, kind, half_extents: ext, path, cruise_speed: speed, initial_speed: speed, active: true, accel: 2.0 }
}

fn parked(id: AgentId, kind: AgentKind, ext: Vec2, at: Vec2, heading: f64) -> AgentScript {
    let dir = Vec2::from_angle(heading);
    AgentScript {
        id,
        kind,
        half_extents: ext,
        path: line(at, at + dir * 0.1),
        cruise_speed: 0.0,
        initial_speed: 0.0,
        active: true,
        accel: 0.0,
    }
}

/// Path through a crossroad: the last `before` metres of the inbound lane of
/// `from`, the connector, then the whole exit arm.
fn crossroad_path(from: Arm, turn: Turn, before: f64, arm_length: f64) -> Polyline {
    let inbound = inbound_centerline(from, arm_length);
    let s0 = (inbound.length() - before).max(0.0);
    let mut pts = vec![inbound.point_at(s0)];
    pts.extend_from_slice(connector_centerline(from, turn).points());
    pts.extend(outbound_centerline(turn.exit(from), arm_length).points().iter().skip(1).copied());
    pts.dedup_by(|a, b| a.distance(*b) < 1e-9);
    Polyline::new(pts).expect("crossroad path")
}

fn stop_line_of(arm: Arm, arm_length: f64) -> Vec2 {
    inbound_centerline(arm, arm_length).end()
}

/// Builds the seeded scenario of the given kind.
pub fn make_scenario(kind: ScenarioKind, seed: u64) -> ScenarioSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ kind.salt());
    let mut spec = ScenarioSpec {
        name: format!("{}_{seed}", kind.name()),
        kind,
        seed,
        layout: RoadLayout::Straight { forward_lanes: 1, opposing_lanes: 1, length: 240.0, right_lane_end: None },
        route: RouteSpec::Straight { start_lane: 0, x0: 10.0, x_end: 230.0, shifts: vec![] },
        ego_speed: 7.0,
        target_speed: 8.0,
        agents: vec![],
        triggers: vec![],
        lights: vec![],
        signs: vec![],
        gates: vec![],
        ability: kind.ability(),
    };
    match kind {
        ScenarioKind::Dos01ParkedCars => {
            let x_ped: f64 = rng.gen_range(100.0..130.0);
            let mut id = 1;
            for (y, heading) in [(-3.0, 0.0), (LANE_WIDTH * 1.5 + 1.2, std::f64::consts::PI)] {
                let mut x = rng.gen_range(50.0..56.0);
                while x < 170.0 {
                    if (x - x_ped).abs() > 4.0 {
                        spec.agents.push(parked(id, AgentKind::Vehicle, Vec2::new(2.2, 0.9), Vec2::new(x, y), heading));
                        id += 1;
                    }
                    x += rng.gen_range(6.0..8.0);
                }
            }
            let ped_speed = rng.gen_range(1.2..1.6);
            let mut ped = moving(50, AgentKind::Pedestrian, PED, line(Vec2::new(x_ped, -4.6), Vec2::new(x_ped, 7.5)), ped_speed);
            ped.active = false;
            spec.agents.push(ped);
            spec.agents.push(moving(
                51,
                AgentKind::Pedestrian,
                PED,
                line(Vec2::new(rng.gen_range(30.0..60.0), -5.6), Vec2::new(235.0, -5.6)),
                1.2,
            ));
            spec.agents.push(moving(
                52,
                AgentKind::Pedestrian,
                PED,
                line(Vec2::new(rng.gen_range(150.0..200.0), 8.4), Vec2::new(5.0, 8.4)),
                1.1,
            ));
            spec.triggers.push(Trigger {
                id: 0,
                condition: TriggerCondition::EgoWithin { center: Vec2::new(x_ped, 0.0), radius: rng.gen_range(22.0..28.0) },
                effects: vec![TriggerEffect::Spawn { agent: 50 }],
            });
        }
        ScenarioKind::Dos02SuddenBrake => {
            spec.layout = RoadLayout::Straight { forward_lanes: 1, opposing_lanes: 1, length: 260.0, right_lane_end: None };
            spec.route = RouteSpec::Straight { start_lane: 0, x0: 10.0, x_end: 250.0, shifts: vec![] };
            let lead_x = rng.gen_range(33.0..38.0);
            let lead_speed = 7.0;
            spec.agents.push(moving(1, AgentKind::Vehicle, CAR, line(Vec2::new(lead_x, 0.0), Vec2::new(259.0, 0.0)), lead_speed));
            let k: u64 = rng.gen_range(60..100);
            let x_ped = lead_x + lead_speed * k as f64 * 0.1 + rng.gen_range(12.0..16.0);
            let mut ped = moving(50, AgentKind::Pedestrian, PED, line(Vec2::new(x_ped, -4.8), Vec2::new(x_ped, 7.5)), 1.5);
            ped.active = false;
            spec.agents.push(ped);
            spec.agents.push(moving(
                2,
                AgentKind::Vehicle,
                CAR,
                line(Vec2::new(rng.gen_range(150.0..200.0), LANE_WIDTH), Vec2::new(0.0, LANE_WIDTH)),
                7.0,
            ));
            spec.triggers.push(Trigger {
                id: 0,
                condition: TriggerCondition::TickAtLeast { tick: k },
                effects: vec![
                    TriggerEffect::Spawn { agent: 50 },
                    TriggerEffect::Brake { agent: 1, decel: 5.0, hold_ticks: 70 },
                ],
            });
        }
        ScenarioKind::Dos03LeftTurn => {
            let arm = 70.0;
            spec.layout = RoadLayout::Crossroad { arm_length: arm };
            spec.route = RouteSpec::Junction { from: Arm::West, turn: Turn::Left, start_dist: 45.0 };
            spec.ego_speed = 6.0;
            spec.target_speed = 7.0;
            let truck_before = rng.gen_range(16.0..20.0);
            spec.agents.push(moving(1, AgentKind::Vehicle, TRUCK, crossroad_path(Arm::East, Turn::Left, truck_before, arm), 3.0));
            let car_before = truck_before + rng.gen_range(22.0..28.0);
            spec.agents.push(moving(2, AgentKind::Vehicle, CAR, crossroad_path(Arm::East, Turn::Straight, car_before, arm), 5.5));
        }
        ScenarioKind::Dos04RedLight => {
            let arm = 80.0;
            spec.layout = RoadLayout::Crossroad { arm_length: arm };
            spec.route = RouteSpec::Junction { from: Arm::West, turn: Turn::Straight, start_dist: 55.0 };
            spec.ego_speed = 6.0;
            spec.target_speed = 7.0;
            let t1 = 55.0 - rng.gen_range(17.0..20.0);
            spec.agents.push(moving(1, AgentKind::Vehicle, TRUCK, crossroad_path(Arm::West, Turn::Straight, t1, arm), 6.0));
            spec.agents.push(moving(2, AgentKind::Vehicle, TRUCK, crossroad_path(Arm::West, Turn::Straight, t1 - 15.0, arm), 6.0));
            let mut runner =
                moving(3, AgentKind::Vehicle, CAR, crossroad_path(Arm::South, Turn::Straight, rng.gen_range(28.0..34.0), arm), 8.5);
            runner.active = false;
            spec.agents.push(runner);
            spec.triggers.push(Trigger {
                id: 0,
                condition: TriggerCondition::EgoWithin { center: stop_line_of(Arm::West, arm), radius: rng.gen_range(18.0..24.0) },
                effects: vec![TriggerEffect::Spawn { agent: 3 }],
            });
            for (id, a, c) in [
                (0, Arm::West, LightColor::Green),
                (1, Arm::East, LightColor::Green),
                (2, Arm::South, LightColor::Red),
                (3, Arm::North, LightColor::Red),
            ] {
                spec.lights.push(LightSpec { id, arm: a, schedule: vec![(c, 120.0)], offset: 0.0 });
            }
        }
        ScenarioKind::Merge => {
            let end = 140.0;
            spec.layout = RoadLayout::Straight { forward_lanes: 2, opposing_lanes: 0, length: 260.0, right_lane_end: Some(end) };
            let start = rng.gen_range(55.0..75.0);
            let shift = LaneShift { start, length: 25.0, to_lane: straight_lane_id(0) };
            spec.route = RouteSpec::Straight { start_lane: straight_lane_id(1), x0: 10.0, x_end: 250.0, shifts: vec![shift] };
            let behind = rng.gen_range(15.0..25.0);
            spec.agents.push(moving(1, AgentKind::Vehicle, CAR, line(Vec2::new(10.0 - behind, 0.0), Vec2::new(259.0, 0.0)), 10.0));
            spec.agents.push(moving(
                2,
                AgentKind::Vehicle,
                CAR,
                line(Vec2::new(rng.gen_range(60.0..70.0), 0.0), Vec2::new(259.0, 0.0)),
                8.0,
            ));
            spec.gates.push(Gate { s_stop: start, s_end: start + 25.0, lane: straight_lane_id(0), behind: 18.0, ahead: 8.0 });
            spec.signs.push(RoadSign {
                id: 0,
                kind: SignKind::Warning,
                position: Vec2::new(end - 30.0, -LANE_WIDTH * 1.5 - 0.5),
                lane: straight_lane_id(1),
            });
        }
        ScenarioKind::Overtake => {
            spec.layout = RoadLayout::Straight { forward_lanes: 2, opposing_lanes: 0, length: 260.0, right_lane_end: None };
            let xb = rng.gen_range(100.0..120.0);
            let out = LaneShift { start: xb - 40.0, length: 22.0, to_lane: straight_lane_id(0) };
            let back = LaneShift { start: xb + 10.0, length: 22.0, to_lane: straight_lane_id(1) };
            spec.route = RouteSpec::Straight { start_lane: straight_lane_id(1), x0: 10.0, x_end: 250.0, shifts: vec![out, back] };
            spec.agents.push(parked(1, AgentKind::Static, Vec2::new(2.3, 1.0), Vec2::new(xb, -LANE_WIDTH), 0.0));
            let behind = rng.gen_range(10.0..20.0);
            spec.agents.push(moving(2, AgentKind::Vehicle, CAR, line(Vec2::new(10.0 - behind, 0.0), Vec2::new(259.0, 0.0)), 11.0));
            spec.gates.push(Gate { s_stop: xb - 40.0, s_end: xb - 18.0, lane: straight_lane_id(0), behind: 18.0, ahead: 10.0 });
        }
        ScenarioKind::GiveWay => {
            let arm = 70.0;
            spec.layout = RoadLayout::Crossroad { arm_length: arm };
            spec.route = RouteSpec::Junction { from: Arm::West, turn: Turn::Straight, start_dist: 45.0 };
            spec.ego_speed = 6.0;
            spec.target_speed = 7.0;
            spec.agents.push(moving(
                1,
                AgentKind::Vehicle,
                CAR,
                crossroad_path(Arm::North, Turn::Straight, rng.gen_range(25.0..35.0), arm),
                7.0,
            ));
            spec.agents.push(moving(
                2,
                AgentKind::Vehicle,
                CAR,
                crossroad_path(Arm::South, Turn::Straight, rng.gen_range(45.0..55.0), arm),
                7.0,
            ));
        }
        ScenarioKind::SignStop => {
            let arm = 70.0;
            spec.layout = RoadLayout::Crossroad { arm_length: arm };
            spec.route = RouteSpec::Junction { from: Arm::West, turn: Turn::Straight, start_dist: 50.0 };
            spec.ego_speed = 6.0;
            spec.target_speed = 7.0;
            let red: f64 = rng.gen_range(9.0..12.0);
            let ew = vec![(LightColor::Red, red), (LightColor::Green, 40.0), (LightColor::Yellow, 3.0)];
            let ns = vec![(LightColor::Green, red - 3.0), (LightColor::Yellow, 3.0), (LightColor::Red, 40.0)];
            spec.lights.push(LightSpec { id: 0, arm: Arm::West, schedule: ew.clone(), offset: 0.0 });
            spec.lights.push(LightSpec { id: 1, arm: Arm::East, schedule: ew, offset: 0.0 });
            spec.lights.push(LightSpec { id: 2, arm: Arm::South, schedule: ns.clone(), offset: 0.0 });
            spec.lights.push(LightSpec { id: 3, arm: Arm::North, schedule: ns, offset: 0.0 });
            let line_pt = stop_line_of(Arm::West, arm);
            spec.signs.push(RoadSign {
                id: 0,
                kind: SignKind::Warning,
                position: Vec2::new(line_pt.x - 35.0, line_pt.y - 2.5),
                lane: inbound_lane_id(Arm::West),
            });
            spec.agents.push(moving(
                1,
                AgentKind::Vehicle,
                CAR,
                crossroad_path(Arm::North, Turn::Straight, rng.gen_range(25.0..35.0), arm),
                7.0,
            ));
        }
        ScenarioKind::PedestrianCrossing => {
            spec.layout = RoadLayout::Straight { forward_lanes: 1, opposing_lanes: 1, length: 230.0, right_lane_end: None };
            spec.route = RouteSpec::Straight { start_lane: 0, x0: 10.0, x_end: 220.0, shifts: vec![] };
            let xc = rng.gen_range(90.0..120.0);
            let mut p1 = moving(1, AgentKind::Pedestrian, PED, line(Vec2::new(xc, -4.5), Vec2::new(xc, 7.5)), rng.gen_range(1.2..1.6));
            p1.initial_speed = 0.0;
            let mut p2 =
                moving(2, AgentKind::Pedestrian, PED, line(Vec2::new(xc + 2.0, 7.5), Vec2::new(xc + 2.0, -4.5)), rng.gen_range(1.2..1.6));
            p2.initial_speed = 0.0;
            spec.agents.push(p1);
            spec.agents.push(p2);
            spec.triggers.push(Trigger {
                id: 0,
                condition: TriggerCondition::EgoWithin { center: Vec2::new(xc, 0.0), radius: rng.gen_range(28.0..34.0) },
                effects: vec![TriggerEffect::Cross { agent: 1 }, TriggerEffect::Cross { agent: 2 }],
            });
        }
        ScenarioKind::AccidentTwoWays => {
            spec.layout = RoadLayout::Straight { forward_lanes: 1, opposing_lanes: 1, length: 260.0, right_lane_end: None };
            let xa = rng.gen_range(100.0..120.0);
            let out = LaneShift { start: xa - 32.0, length: 16.0, to_lane: opposing_lane_id(0) };
            let back = LaneShift { start: xa + 14.0, length: 16.0, to_lane: straight_lane_id(0) };
            spec.route = RouteSpec::Straight { start_lane: 0, x0: 10.0, x_end: 250.0, shifts: vec![out, back] };
            spec.agents.push(parked(1, AgentKind::Static, Vec2::new(2.2, 0.9), Vec2::new(xa, 0.0), 0.3));
            spec.agents.push(parked(2, AgentKind::Static, Vec2::new(2.2, 0.9), Vec2::new(xa + 6.0, 0.3), -0.2));
            let onc = xa + rng.gen_range(60.0..90.0);
            spec.agents.push(moving(
                3,
                AgentKind::Vehicle,
                CAR,
                line(Vec2::new(onc, LANE_WIDTH), Vec2::new(0.0, LANE_WIDTH)),
                8.0,
            ));
            spec.gates.push(Gate { s_stop: xa - 32.0, s_end: xa + 30.0, lane: opposing_lane_id(0), behind: 5.0, ahead: 40.0 });
            spec.signs.push(RoadSign { id: 0, kind: SignKind::Construction, position: Vec2::new(xa - 45.0, -2.6), lane: 0 });
            spec.signs.push(RoadSign { id: 1, kind: SignKind::Warning, position: Vec2::new(xa - 70.0, -2.6), lane: 0 });
        }
    }
    spec
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        for kind in ScenarioKind::ALL {
            assert_eq!(make_scenario(kind, 7), make_scenario(kind, 7));
            make_scenario(kind, 7).validate().unwrap();
        }
        assert_ne!(make_scenario(ScenarioKind::Dos01ParkedCars, 1), make_scenario(ScenarioKind::Dos01ParkedCars, 2));
    }

    #[test]
    fn names_round_trip() {
        for kind in ScenarioKind::ALL {
            assert_eq!(kind.name().parse::<ScenarioKind>().unwrap(), kind);
        }
        assert!("DOS05".parse::<ScenarioKind>().is_err());
    }

    #[test]
    fn sudden_brake_has_lead_brake_and_hidden_pedestrian() {
        let s = make_scenario(ScenarioKind::Dos02SuddenBrake, 3);
        let t = &s.triggers[0];
        assert!(t.effects.iter().any(|e| matches!(e, TriggerEffect::Brake { agent: 1, .. })));
        assert!(t.effects.iter().any(|e| matches!(e, TriggerEffect::Spawn { agent: 50 })));
        let ped = s.agents.iter().find(|a| a.id == 50).unwrap();
        assert!(!ped.active);
    }

    #[test]
    fn red_light_has_trucks_and_runner() {
        let s = make_scenario(ScenarioKind::Dos04RedLight, 3);
        let trucks = s.agents.iter().filter(|a| a.half_extents == TRUCK).count();
        assert!(trucks >= 2);
        let runner = s.agents.iter().find(|a| a.id == 3).unwrap();
        assert!(!runner.active);
        // the runner approaches on an arm whose light is red
        assert!(s.lights.iter().any(|l| l.arm == Arm::South && l.schedule[0].0 == LightColor::Red));
    }
}
