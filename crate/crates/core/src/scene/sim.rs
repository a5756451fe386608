//! World state and the deterministic 10 Hz step function.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{wrap_angle, Vec2};
use crate::scene::map::{inbound_lane_id, junction_route, straight_route, LaneGraph, RoadLayout, Route, LANE_WIDTH};
use crate::scene::scenario::{
    AgentScript, Gate, RouteSpec, ScenarioSpec, Trigger, TriggerCondition, TriggerEffect,
};
use crate::scene::types::{
    Action, AgentId, AgentKind, AgentState, EgoState, RoadSign, TrafficLight, DT, MAX_PEDESTRIAN_SPEED, WHEELBASE,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum EventKind {
    TriggerFired { trigger: u32 },
    Spawn { agent: AgentId },
    Brake { agent: AgentId },
    Cross { agent: AgentId },
    Despawn { agent: AgentId },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub tick: u64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct AgentRuntime {
    s: f64,
    speed: f64,
    target: f64,
    decel: f64,
    hold: Option<u32>,
    stopped_ticks: u32,
}

/// Static parts of a scenario shared by every tick of an episode.
#[derive(Debug)]
pub struct ScenarioContext {
    pub spec: ScenarioSpec,
    pub scripts: BTreeMap<AgentId, AgentScript>,
    pub triggers: Vec<Trigger>,
    /// Gates in route arc length.
    pub gates: Vec<Gate>,
}

/// Simulator ground truth at one tick.
#[derive(Debug, Clone)]
pub struct WorldState {
    pub tick: u64,
    pub ego: EgoState,
    pub agents: Vec<AgentState>,
    pub lights: Vec<TrafficLight>,
    pub signs: Vec<RoadSign>,
    pub map: Arc<LaneGraph>,
    pub route: Arc<Route>,
    pub context: Arc<ScenarioContext>,
    /// Largest route arc length reached so far.
    pub route_progress: f64,
    pub events: Vec<SimEvent>,
    pub(crate) runtime: BTreeMap<AgentId, AgentRuntime>,
    pub(crate) pending: BTreeSet<AgentId>,
    pub(crate) fired: Vec<bool>,
}

impl WorldState {
    pub fn from_scenario(spec: &ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let map = spec.layout.build()?;
        let route = match &spec.route {
            RouteSpec::Straight { start_lane, x0, x_end, shifts } => straight_route(&map, *start_lane, *x0, *x_end, shifts)?,
            RouteSpec::Junction { from, turn, start_dist } => {
                let arm_length = match spec.layout {
                    RoadLayout::Crossroad { arm_length } => arm_length,
                    _ => return Err(crate::error::Error::InvalidMap("junction route needs a crossroad".into())),
                };
                junction_route(&map, *from, *turn, *start_dist, arm_length)?
            }
        };
        let gates = spec
            .gates
            .iter()
            .map(|g| {
                let s_stop = route.path.project(Vec2::new(g.s_stop, 0.0)).s;
                let s_end = route.path.project(Vec2::new(g.s_end, 0.0)).s;
                Gate { s_stop, s_end, ..*g }
            })
            .collect();
        let lights = spec
            .lights
            .iter()
            .map(|l| {
                let lane = inbound_lane_id(l.arm);
                let cl = &map.lane(lane).expect("crossroad lane").centerline;
                let end = cl.end();
                let n = Vec2::from_angle(cl.heading_at(cl.length())).perp() * (LANE_WIDTH * 0.5);
                let mut light = TrafficLight {
                    id: l.id,
                    lane,
                    stop_line: (end + n, end - n),
                    state: l.schedule[0].0,
                    phase_schedule: l.schedule.clone(),
                    phase_offset: l.offset,
                };
                light.state = light.state_at(0.0);
                light
            })
            .collect();
        let start = route.path.start();
        let ego = EgoState::new(start, route.path.heading_at(0.0), spec.ego_speed);
        let scripts: BTreeMap<AgentId, AgentScript> = spec.agents.iter().map(|a| (a.id, a.clone())).collect();
        let mut runtime = BTreeMap::new();
        let mut pending = BTreeSet::new();
        for a in scripts.values() {
            let speed = if a.kind == AgentKind::Pedestrian { a.initial_speed.min(MAX_PEDESTRIAN_SPEED) } else { a.initial_speed };
            runtime.insert(
                a.id,
                AgentRuntime {
                    s: 0.0,
                    speed,
                    target: if a.initial_speed > 0.0 { a.cruise_speed } else { 0.0 },
                    decel: 3.0,
                    hold: None,
                    stopped_ticks: 0,
                },
            );
            if !a.active {
                pending.insert(a.id);
            }
        }
        let context = Arc::new(ScenarioContext { spec: spec.clone(), scripts, triggers: spec.triggers.clone(), gates });
        let mut world = WorldState {
            tick: 0,
            ego,
            agents: vec![],
            lights,
            signs: spec.signs.clone(),
            map: Arc::new(map),
            route: Arc::new(route),
            fired: vec![false; context.triggers.len()],
            context,
            route_progress: 0.0,
            events: vec![],
            runtime,
            pending,
        };
        world.refresh_agents();
        world.evaluate_triggers();
        Ok(world)
    }

    fn refresh_agents(&mut self) {
        let mut agents = Vec::with_capacity(self.runtime.len());
        for (id, rt) in &self.runtime {
            if self.pending.contains(id) {
                continue;
            }
            let script = &self.context.scripts[id];
            agents.push(AgentState {
                id: *id,
                kind: script.kind,
                position: script.path.point_at(rt.s),
                heading: wrap_angle(script.path.heading_at(rt.s)),
                speed: rt.speed,
                half_extents: script.half_extents,
            });
        }
        self.agents = agents;
    }

    fn evaluate_triggers(&mut self) {
        for i in 0..self.context.triggers.len() {
            if self.fired[i] {
                continue;
            }
            let trig = &self.context.triggers[i];
            let hit = match trig.condition {
                TriggerCondition::EgoWithin { center, radius } => self.ego.position.distance(center) <= radius,
                TriggerCondition::TickAtLeast { tick } => self.tick >= tick,
            };
            if !hit {
                continue;
            }
            self.fired[i] = true;
            let tick = self.tick;
            self.events.push(SimEvent { tick, kind: EventKind::TriggerFired { trigger: trig.id } });
            let effects = trig.effects.clone();
            for eff in effects {
                match eff {
                    TriggerEffect::Spawn { agent } => {
                        if self.pending.remove(&agent) {
                            self.events.push(SimEvent { tick, kind: EventKind::Spawn { agent } });
                        }
                    }
                    TriggerEffect::Brake { agent, decel, hold_ticks } => {
                        if let Some(rt) = self.runtime.get_mut(&agent) {
                            rt.target = 0.0;
                            rt.decel = decel;
                            rt.hold = Some(hold_ticks);
                            rt.stopped_ticks = 0;
                            self.events.push(SimEvent { tick, kind: EventKind::Brake { agent } });
                        }
                    }
                    TriggerEffect::Cross { agent } => {
                        if let Some(rt) = self.runtime.get_mut(&agent) {
                            rt.target = self.context.scripts[&agent].cruise_speed;
                            self.events.push(SimEvent { tick, kind: EventKind::Cross { agent } });
                        }
                    }
                }
            }
        }
        if !self.fired.is_empty() {
            self.refresh_agents();
        }
    }

    pub fn trigger_fired(&self, index: usize) -> bool {
        self.fired.get(index).copied().unwrap_or(false)
    }

    /// Gates of the current scenario in route arc length.
    pub fn gates(&self) -> &[Gate] {
        &self.context.gates
    }

    pub fn target_speed(&self) -> f64 {
        self.context.spec.target_speed
    }

    /// Ego arc length on the route. Positions farther than 5 m from the
    /// path do not count as progress.
    pub fn ego_route_s(&self) -> f64 {
        let p = self.route.path.project(self.ego.position);
        if p.distance <= 5.0 {
            p.s
        } else {
            self.route_progress
        }
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * DT
    }

    /// Advances the world in place by one tick.
    pub fn step_mut(&mut self, action: Action, dt: f64) {
        let a = action.clamped();
        let ego = &mut self.ego;
        let v = ego.speed;
        ego.position += Vec2::from_angle(ego.heading) * (v * dt);
        ego.heading = wrap_angle(ego.heading + v / WHEELBASE * a.steer.tan() * dt);
        let v_new = (v + a.accel * dt).max(0.0);
        ego.accel = (v_new - v) / dt;
        ego.speed = v_new;
        ego.steer = a.steer;

        let mut despawned = Vec::new();
        for (id, rt) in self.runtime.iter_mut() {
            if self.pending.contains(id) {
                continue;
            }
            let script = &self.context.scripts[id];
            if let Some(hold) = rt.hold {
                if rt.speed <= 0.0 {
                    rt.stopped_ticks += 1;
                    if rt.stopped_ticks > hold {
                        rt.hold = None;
                        rt.target = script.cruise_speed;
                    }
                }
            }
            if rt.speed < rt.target {
                rt.speed = (rt.speed + script.accel.max(0.5) * dt).min(rt.target);
            } else if rt.speed > rt.target {
                rt.speed = (rt.speed - rt.decel * dt).max(rt.target);
            }
            if script.kind == AgentKind::Pedestrian {
                rt.speed = rt.speed.min(MAX_PEDESTRIAN_SPEED);
            }
            rt.s += rt.speed * dt;
            if rt.s >= script.path.length() {
                rt.s = script.path.length();
                if script.kind == AgentKind::Vehicle && script.cruise_speed > 0.0 {
                    despawned.push(*id);
                } else {
                    rt.speed = 0.0;
                    rt.target = 0.0;
                }
            }
        }
        self.tick += 1;
        for id in despawned {
            self.runtime.remove(&id);
            self.events.push(SimEvent { tick: self.tick, kind: EventKind::Despawn { agent: id } });
        }
        let t = self.time();
        for l in &mut self.lights {
            l.state = l.state_at(t);
        }
        self.refresh_agents();
        self.evaluate_triggers();
        self.route_progress = self.route_progress.max(self.ego_route_s()).min(self.route.total_length);
    }
}

/// Pure step: returns the successor state.
pub fn step(world: &WorldState, action: Action, dt: f64) -> WorldState {
    let mut next = world.clone();
    next.step_mut(action, dt);
    next
}

/// Fraction of the route completed so far, monotone over an episode.
pub fn route_completion(world: &WorldState) -> f64 {
    let total = world.route.total_length;
    let s = world.ego_route_s().max(world.route_progress);
    (s / total).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::scenario::{make_scenario, ScenarioKind};

    fn empty_straight() -> ScenarioSpec {
        let mut s = make_scenario(ScenarioKind::PedestrianCrossing, 0);
        s.agents.clear();
        s.triggers.clear();
        s.layout = RoadLayout::Straight { forward_lanes: 1, opposing_lanes: 0, length: 100.0, right_lane_end: None };
        s.route = RouteSpec::Straight { start_lane: 0, x0: 0.0, x_end: 100.0, shifts: vec![] };
        s.ego_speed = 0.0;
        s
    }

    #[test]
    fn zero_action_at_rest_keeps_pose() {
        let w = WorldState::from_scenario(&empty_straight()).unwrap();
        let n = step(&w, Action::new(0.0, 0.0), DT);
        assert_eq!(n.ego.position, w.ego.position);
        assert_eq!(n.ego.heading, w.ego.heading);
        assert_eq!(n.tick, w.tick + 1);
    }

    #[test]
    fn constant_speed_advances_v_dt() {
        let mut spec = empty_straight();
        spec.ego_speed = 5.0;
        let w = WorldState::from_scenario(&spec).unwrap();
        let n = step(&w, Action::new(0.0, 0.0), DT);
        assert!((n.ego.position.x - w.ego.position.x - 0.5).abs() < 1e-12);
        assert_eq!(n.ego.heading, w.ego.heading);
    }

    #[test]
    fn completion_on_single_lane() {
        let mut spec = empty_straight();
        spec.ego_speed = 0.0;
        let mut w = WorldState::from_scenario(&spec).unwrap();
        assert_eq!(route_completion(&w), 0.0);
        w.ego.position = Vec2::new(50.0, 0.0);
        assert!((route_completion(&w) - 0.5).abs() < 1e-12);
        w.route_progress = 50.0;
        w.ego.position = Vec2::new(100.0, 0.0);
        assert!((route_completion(&w) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn radius_trigger_fires_at_first_tick_within_radius() {
        let mut spec = empty_straight();
        spec.ego_speed = 4.0;
        let mut ped = make_scenario(ScenarioKind::Dos01ParkedCars, 1).agents.into_iter().find(|a| a.id == 50).unwrap();
        ped.path = crate::geometry::Polyline::new(vec![Vec2::new(40.0, -4.0), Vec2::new(40.0, 4.0)]).unwrap();
        spec.agents.push(ped);
        let center = Vec2::new(40.0, 0.0);
        spec.triggers.push(Trigger {
            id: 9,
            condition: TriggerCondition::EgoWithin { center, radius: 10.0 },
            effects: vec![TriggerEffect::Spawn { agent: 50 }],
        });
        let mut w = WorldState::from_scenario(&spec).unwrap();
        // independent trace: first tick at which the ego centre is within 10 m
        let mut expected = None;
        let mut x = w.ego.position.x;
        for tick in 0..200u64 {
            if expected.is_none() && (Vec2::new(x, 0.0)).distance(center) <= 10.0 {
                expected = Some(tick);
            }
            x += 4.0 * DT;
        }
        for _ in 0..200 {
            w.step_mut(Action::default(), DT);
        }
        let spawns: Vec<_> = w.events.iter().filter(|e| matches!(e.kind, EventKind::Spawn { agent: 50 })).collect();
        assert_eq!(spawns.len(), 1);
        assert_eq!(Some(spawns[0].tick), expected);
        assert_eq!(w.events.iter().filter(|e| matches!(e.kind, EventKind::TriggerFired { .. })).count(), 1);
    }
}
