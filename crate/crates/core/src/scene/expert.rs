//! Rule-based expert: pure pursuit on the route with IDM gap keeping,
//! signal compliance, crossing-conflict yielding and gated lane changes.
//!
//! The expert is privileged: it reads agent scripts to predict where each
//! agent will be over the next few seconds.

use serde::{Deserialize, Serialize};

use crate::geometry::{to_local, wrap_angle, Vec2};
use crate::scene::sim::WorldState;
use crate::scene::types::{
    Action, AgentKind, AgentState, LightColor, EGO_HALF_LENGTH, EGO_HALF_WIDTH, MAX_BRAKE, MAX_STEER, WHEELBASE,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpertConfig {
    pub max_accel: f64,
    pub comfort_decel: f64,
    pub time_headway: f64,
    pub agent_gap: f64,
    pub stop_gap: f64,
    pub max_lateral_accel: f64,
    pub corridor_margin: f64,
    pub prediction_horizon: f64,
    pub crossing_clearance: f64,
    pub yellow_max_decel: f64,
    pub lookahead_range: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            max_accel: 2.0,
            comfort_decel: 3.0,
            time_headway: 1.2,
            agent_gap: 3.0,
            stop_gap: 0.5,
            max_lateral_accel: 2.5,
            corridor_margin: 0.6,
            prediction_horizon: 6.0,
            crossing_clearance: 2.5,
            yellow_max_decel: 3.5,
            lookahead_range: 50.0,
        }
    }
}

/// Something the expert must not pass: a gap to its rear in metres, its
/// speed along the route and the standstill distance to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Obstacle {
    gap: f64,
    speed: f64,
    min_gap: f64,
}

pub fn expert_policy(world: &WorldState) -> Action {
    expert_policy_with(world, &ExpertConfig::default())
}

pub fn expert_policy_with(world: &WorldState, cfg: &ExpertConfig) -> Action {
    let path = &world.route.path;
    let s = ego_s(world);
    let steer = pursuit_steer(world, s);
    let v = world.ego.speed;
    let v_des = speed_limit(world, s, cfg);

    let mut obstacles = Vec::new();
    corridor_obstacles(world, s, cfg, &mut obstacles);
    crossing_obstacles(world, s, cfg, &mut obstacles);
    signal_obstacles(world, s, cfg, &mut obstacles);
    gate_obstacles(world, s, cfg, &mut obstacles);

    let free = if v_des <= 0.0 { -cfg.comfort_decel } else { cfg.max_accel * (1.0 - (v / v_des).powi(4)) };
    let mut accel = free;
    for o in &obstacles {
        if o.gap <= 0.1 {
            accel = -MAX_BRAKE;
            break;
        }
        let dv = v - o.speed;
        let s_star = o.min_gap + (v * cfg.time_headway + v * dv / (2.0 * (cfg.max_accel * cfg.comfort_decel).sqrt())).max(0.0);
        let a = cfg.max_accel * (1.0 - (v / v_des.max(0.1)).powi(4) - (s_star / o.gap).powi(2));
        accel = accel.min(a);
    }
    if s >= path.length() - 0.5 {
        accel = accel.min(-cfg.comfort_decel);
    }
    Action::new(accel, steer).clamped()
}

/// Ego arc length, searched near the progress already made so that
/// self-approaching routes do not jump.
pub(crate) fn ego_s(world: &WorldState) -> f64 {
    let p = world.route_progress;
    world.route.path.project_window(world.ego.position, p - 10.0, p + 30.0).s
}

/// Pure-pursuit steering towards a point on the route ahead.
pub fn pursuit_steer(world: &WorldState, s: f64) -> f64 {
    let ego = &world.ego;
    let look = (2.0 + 0.6 * ego.speed).clamp(4.0, 12.0);
    let path = &world.route.path;
    let target = if s + look <= path.length() {
        path.point_at(s + look)
    } else {
        // extend straight past the end of the route
        path.end() + Vec2::from_angle(path.heading_at(path.length())) * (s + look - path.length())
    };
    pursuit_to(ego.position, ego.heading, target)
}

/// Steering angle that puts the rear-axle arc through `target`.
pub fn pursuit_to(position: Vec2, heading: f64, target: Vec2) -> f64 {
    let local = to_local(target, position, heading);
    let d2 = local.dot(local);
    if d2 < 1e-6 {
        return 0.0;
    }
    (2.0 * WHEELBASE * local.y / d2).atan().clamp(-MAX_STEER, MAX_STEER)
}

fn speed_limit(world: &WorldState, s: f64, cfg: &ExpertConfig) -> f64 {
    let path = &world.route.path;
    let mut v = world.target_speed();
    let mut ds = 0.0;
    while ds <= 30.0 && s + ds <= path.length() {
        let k = path.curvature_at(s + ds, 2.0);
        if k > 1e-4 {
            let v_k = (cfg.max_lateral_accel / k).sqrt();
            v = v.min((v_k * v_k + 2.0 * 2.0 * ds).sqrt());
        }
        ds += 2.0;
    }
    v
}

/// Half extents of an agent box measured along and across a direction
/// `delta` radians away from the agent heading.
pub(crate) fn extents_along(a: &AgentState, delta: f64) -> (f64, f64) {
    let (hl, hw) = (a.half_extents.x, a.half_extents.y);
    let along = (hl * delta.cos()).abs() + (hw * delta.sin()).abs();
    let across = (hl * delta.sin()).abs() + (hw * delta.cos()).abs();
    (along, across)
}

fn corridor_obstacles(world: &WorldState, s: f64, cfg: &ExpertConfig, out: &mut Vec<Obstacle>) {
    let path = &world.route.path;
    for a in &world.agents {
        if a.position.distance(world.ego.position) > cfg.lookahead_range + 10.0 {
            continue;
        }
        let p = path.project_window(a.position, s - 2.0, s + cfg.lookahead_range);
        if p.s <= s {
            continue;
        }
        let delta = wrap_angle(a.heading - path.heading_at(p.s));
        let (along, across) = extents_along(a, delta);
        if p.lateral.abs() >= EGO_HALF_WIDTH + across + cfg.corridor_margin {
            continue;
        }
        let gap = p.s - s - EGO_HALF_LENGTH - along;
        out.push(Obstacle { gap, speed: (a.speed * delta.cos()).max(0.0), min_gap: cfg.agent_gap });
    }
}

fn segment_intersection(a0: Vec2, a1: Vec2, b0: Vec2, b1: Vec2) -> Option<(f64, f64)> {
    let r = a1 - a0;
    let q = b1 - b0;
    let den = r.cross(q);
    if den.abs() < 1e-12 {
        return None;
    }
    let t = (b0 - a0).cross(q) / den;
    let u = (b0 - a0).cross(r) / den;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then_some((t, u))
}

/// Route samples every metre over `[s_lo, s_hi]`, paired with arc length.
pub(crate) fn route_samples(world: &WorldState, s_lo: f64, s_hi: f64) -> Vec<(f64, Vec2)> {
    let path = &world.route.path;
    let s_hi = s_hi.min(path.length());
    let mut out = Vec::new();
    let mut r = s_lo.max(0.0);
    while r < s_hi {
        out.push((r, path.point_at(r)));
        r += 1.0;
    }
    out.push((s_hi, path.point_at(s_hi)));
    out
}

/// Points the agent will cover along its script within `horizon` seconds.
pub(crate) fn predicted_path(world: &WorldState, a: &AgentState, horizon: f64) -> Option<Vec<Vec2>> {
    let script = world.context.scripts.get(&a.id)?;
    let sp = &script.path;
    let s_a = sp.project(a.position).s;
    let reach = a.speed * horizon + a.half_extents.x;
    let mut pred = vec![a.position];
    let mut k = 1.0;
    while k < reach && s_a + k < sp.length() {
        pred.push(sp.point_at(s_a + k));
        k += 1.0;
    }
    pred.push(sp.point_at((s_a + reach).min(sp.length())));
    Some(pred)
}

/// First point where `pred` cuts the sampled route, as route arc length and
/// the acute angle between the two lines.
pub(crate) fn first_crossing(pred: &[Vec2], route: &[(f64, Vec2)]) -> Option<(f64, f64)> {
    for w in pred.windows(2) {
        if w[0].distance(w[1]) < 1e-9 {
            continue;
        }
        for rw in route.windows(2) {
            let (r0, p0) = rw[0];
            let (r1, p1) = rw[1];
            if let Some((_, u)) = segment_intersection(w[0], w[1], p0, p1) {
                let d = wrap_angle((w[1] - w[0]).angle() - (p1 - p0).angle()).abs();
                return Some((r0 + u * (r1 - r0), d.min(std::f64::consts::PI - d)));
            }
        }
    }
    None
}

pub(crate) const CROSSING_MIN_ANGLE_DEG: f64 = 25.0;

/// Moving agents whose predicted path cuts the route ahead at an angle.
fn crossing_obstacles(world: &WorldState, s: f64, cfg: &ExpertConfig, out: &mut Vec<Obstacle>) {
    let route = route_samples(world, s - 2.0, s + cfg.lookahead_range);
    for a in &world.agents {
        if a.speed <= 0.05 || a.kind == AgentKind::Static {
            continue;
        }
        let Some(pred) = predicted_path(world, a, cfg.prediction_horizon) else { continue };
        if let Some((s_c, angle)) = first_crossing(&pred, &route) {
            if angle > CROSSING_MIN_ANGLE_DEG.to_radians() {
                let radius = a.half_extents.x.max(a.half_extents.y);
                let gap = s_c - s - EGO_HALF_LENGTH - cfg.crossing_clearance - radius;
                // once the stop point is behind us, clearing the conflict is safer
                if gap > 0.0 {
                    out.push(Obstacle { gap, speed: 0.0, min_gap: cfg.stop_gap });
                }
            }
        }
    }
}

fn signal_obstacles(world: &WorldState, s: f64, cfg: &ExpertConfig, out: &mut Vec<Obstacle>) {
    let path = &world.route.path;
    let v = world.ego.speed;
    for light in &world.lights {
        if !world.route.lane_ids.contains(&light.lane) {
            continue;
        }
        let p = path.project_window(light.stop_line_mid(), s - 5.0, s + cfg.lookahead_range);
        if p.distance > 2.0 || p.s <= s {
            continue;
        }
        let gap = p.s - s - EGO_HALF_LENGTH;
        let stop = match light.state {
            LightColor::Green => false,
            LightColor::Red => gap > 0.0,
            LightColor::Yellow => gap > 0.0 && v * v / (2.0 * gap) < cfg.yellow_max_decel,
        };
        if stop {
            out.push(Obstacle { gap, speed: 0.0, min_gap: cfg.stop_gap });
        }
    }
}

fn gate_obstacles(world: &WorldState, s: f64, cfg: &ExpertConfig, out: &mut Vec<Obstacle>) {
    let path = &world.route.path;
    for g in world.gates() {
        if s > g.s_stop + 0.5 {
            continue;
        }
        let Some(lane) = world.map.lane(g.lane) else { continue };
        let hi = g.s_end.max(s) + g.ahead;
        let lo = s - g.behind;
        let occupied = world.agents.iter().any(|a| {
            a.kind == AgentKind::Vehicle && lane.centerline.distance(a.position) < lane.width * 0.5 && {
                let sa = path.project(a.position).s;
                sa >= lo && sa <= hi
            }
        });
        if occupied {
            out.push(Obstacle { gap: g.s_stop - s + cfg.stop_gap, speed: 0.0, min_gap: cfg.stop_gap });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::scenario::{make_scenario, ScenarioKind};

    #[test]
    fn clear_road_accelerates() {
        let mut spec = make_scenario(ScenarioKind::PedestrianCrossing, 3);
        spec.agents.clear();
        spec.triggers.clear();
        spec.ego_speed = 2.0;
        let w = WorldState::from_scenario(&spec).unwrap();
        assert!(expert_policy(&w).accel > 0.0);
    }

    #[test]
    fn red_light_ahead_brakes() {
        let spec = make_scenario(ScenarioKind::SignStop, 1);
        let mut w = WorldState::from_scenario(&spec).unwrap();
        w.agents.clear();
        let line = w.lights[0].stop_line_mid();
        w.ego.position = Vec2::new(line.x - 5.0, line.y);
        w.ego.speed = 8.0;
        w.route_progress = w.route.path.project(w.ego.position).s;
        for l in &mut w.lights {
            l.state = LightColor::Red;
        }
        assert!(expert_policy(&w).accel < 0.0);
    }
}
