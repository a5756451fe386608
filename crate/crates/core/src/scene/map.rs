//! Lane graph, routes and the two procedural road layouts used by the
//! scenario library.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{arc_points, wrap_angle, Polyline, Vec2};
use crate::scene::types::{LaneId, NavCommand};

pub const LANE_WIDTH: f64 = 3.5;
/// Half size of the square junction box of a crossroad.
pub const JUNCTION_HALF: f64 = 7.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneKind {
    Drive,
    Junction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub id: LaneId,
    pub centerline: Polyline,
    pub width: f64,
    pub successors: Vec<LaneId>,
    pub left_neighbor: Option<LaneId>,
    pub right_neighbor: Option<LaneId>,
    pub kind: LaneKind,
}

impl Lane {
    pub fn heading_change(&self) -> f64 {
        let c = &self.centerline;
        wrap_angle(c.heading_at(c.length()) - c.heading_at(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneGraph {
    pub lanes: BTreeMap<LaneId, Lane>,
}

impl LaneGraph {
    pub fn new(lanes: Vec<Lane>) -> Result<Self> {
        let graph = Self { lanes: lanes.into_iter().map(|l| (l.id, l)).collect() };
        graph.validate()?;
        Ok(graph)
    }

    pub fn lane(&self, id: LaneId) -> Option<&Lane> {
        self.lanes.get(&id)
    }

    /// Checks neighbor symmetry and successor references.
    pub fn validate(&self) -> Result<()> {
        for lane in self.lanes.values() {
            if lane.width <= 0.0 {
                return Err(Error::InvalidMap(format!("lane {} has non-positive width", lane.id)));
            }
            for n in [lane.left_neighbor, lane.right_neighbor].into_iter().flatten() {
                let other = self
                    .lanes
                    .get(&n)
                    .ok_or_else(|| Error::InvalidMap(format!("lane {} references missing neighbor {n}", lane.id)))?;
                if other.left_neighbor != Some(lane.id) && other.right_neighbor != Some(lane.id) {
                    return Err(Error::InvalidMap(format!("neighbor link {} -> {n} is not symmetric", lane.id)));
                }
            }
            for s in &lane.successors {
                if !self.lanes.contains_key(s) {
                    return Err(Error::InvalidMap(format!("lane {} references missing successor {s}", lane.id)));
                }
            }
        }
        Ok(())
    }

    /// Whether `b` travels in the same direction as `a` where they are side by side.
    pub fn same_direction(&self, a: LaneId, b: LaneId) -> bool {
        match (self.lane(a), self.lane(b)) {
            (Some(la), Some(lb)) => {
                let p = lb.centerline.project(la.centerline.point_at(la.centerline.length() * 0.5));
                let ha = la.centerline.heading_at(la.centerline.length() * 0.5);
                let hb = lb.centerline.heading_at(p.s);
                wrap_angle(ha - hb).abs() < FRAC_PI_2
            }
            _ => false,
        }
    }

    pub fn connected(&self, a: LaneId, b: LaneId) -> bool {
        self.lane(a).is_some_and(|l| l.successors.contains(&b) || l.left_neighbor == Some(b) || l.right_neighbor == Some(b))
    }

    /// Lane containing `p` whose direction agrees with `heading`, if any.
    pub fn locate(&self, p: Vec2, heading: f64) -> Option<(LaneId, f64, f64)> {
        let mut best: Option<(LaneId, f64, f64)> = None;
        let mut best_d = f64::INFINITY;
        for lane in self.lanes.values() {
            let pr = lane.centerline.project(p);
            if pr.distance > lane.width * 0.5 + 0.75 {
                continue;
            }
            let h = lane.centerline.heading_at(pr.s);
            if wrap_angle(h - heading).abs() >= FRAC_PI_2 {
                continue;
            }
            // junction lanes overlap each other; prefer drive lanes, then nearest
            let penalty = if lane.kind == LaneKind::Junction { 1.0 } else { 0.0 };
            let d = pr.distance + penalty;
            if d < best_d {
                best_d = d;
                best = Some((lane.id, pr.s, pr.lateral));
            }
        }
        best
    }

    /// Distance to the nearest centerline of any lane.
    pub fn distance_to_centerline(&self, p: Vec2) -> f64 {
        self.lanes.values().map(|l| l.centerline.distance(p)).fold(f64::INFINITY, f64::min)
    }
}

/// Planned path through the lane graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub lane_ids: Vec<LaneId>,
    /// Reference path the ego is expected to follow, starting at the spawn.
    pub path: Polyline,
    pub total_length: f64,
    /// `(s, command)`: command in force from arc length `s` on.
    pub navigation_commands: Vec<(f64, NavCommand)>,
    /// Arc-length spans of the path assigned to each route lane.
    pub lane_spans: Vec<(LaneId, f64, f64)>,
}

impl Route {
    pub fn validate(&self, map: &LaneGraph) -> Result<()> {
        if self.lane_ids.is_empty() || self.total_length <= 0.0 {
            return Err(Error::InvalidMap("empty route".into()));
        }
        for w in self.lane_ids.windows(2) {
            if !map.connected(w[0], w[1]) {
                return Err(Error::InvalidMap(format!("route lanes {} -> {} not connected", w[0], w[1])));
            }
        }
        Ok(())
    }

    pub fn command_at(&self, s: f64) -> NavCommand {
        let mut cmd = NavCommand::Follow;
        for (start, c) in &self.navigation_commands {
            if *start <= s {
                cmd = *c;
            }
        }
        cmd
    }

    pub fn lane_at(&self, s: f64) -> LaneId {
        for (id, s0, s1) in &self.lane_spans {
            if s >= *s0 && s < *s1 {
                return *id;
            }
        }
        self.lane_spans.last().map(|l| l.0).unwrap_or(self.lane_ids[0])
    }
}

/// Procedural road layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum RoadLayout {
    /// Parallel lanes along +x. Forward lane `i` sits at `y = -3.5 i`;
    /// opposing lane `j` (id `10 + j`) at `y = 3.5 (j + 1)` heading -x.
    Straight { forward_lanes: usize, opposing_lanes: usize, length: f64, right_lane_end: Option<f64> },
    /// Four-arm crossroad centred on the origin with one lane per direction.
    Crossroad { arm_length: f64 },
}

pub fn straight_lane_id(i: usize) -> LaneId {
    i as LaneId
}

pub fn opposing_lane_id(j: usize) -> LaneId {
    10 + j as LaneId
}

/// Crossroad arms, counter-clockwise starting west.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    West,
    South,
    East,
    North,
}

impl Arm {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Arm {
        [Arm::West, Arm::South, Arm::East, Arm::North][i % 4]
    }

    fn rotation(self) -> f64 {
        self.index() as f64 * FRAC_PI_2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Turn {
    Left,
    Straight,
    Right,
}

impl Turn {
    pub fn exit(self, from: Arm) -> Arm {
        let k = from.index();
        match self {
            Turn::Left => Arm::from_index(k + 3),
            Turn::Straight => Arm::from_index(k + 2),
            Turn::Right => Arm::from_index(k + 1),
        }
    }

    pub fn command(self) -> NavCommand {
        match self {
            Turn::Left => NavCommand::Left,
            Turn::Straight => NavCommand::Straight,
            Turn::Right => NavCommand::Right,
        }
    }
}

pub fn inbound_lane_id(arm: Arm) -> LaneId {
    100 + arm.index() as LaneId
}

pub fn outbound_lane_id(arm: Arm) -> LaneId {
    110 + arm.index() as LaneId
}

pub fn connector_lane_id(from: Arm, to: Arm) -> LaneId {
    200 + 10 * from.index() as LaneId + to.index() as LaneId
}

fn rotate_all(points: Vec<Vec2>, angle: f64) -> Vec<Vec2> {
    points.into_iter().map(|p| p.rotate(angle)).collect()
}

/// Inbound lane of an arm: travels towards the junction on the right-hand side.
pub fn inbound_centerline(arm: Arm, arm_length: f64) -> Polyline {
    let h = LANE_WIDTH * 0.5;
    let pts = vec![Vec2::new(-JUNCTION_HALF - arm_length, -h), Vec2::new(-JUNCTION_HALF, -h)];
    Polyline::new(rotate_all(pts, arm.rotation())).unwrap()
}

pub fn outbound_centerline(arm: Arm, arm_length: f64) -> Polyline {
    let h = LANE_WIDTH * 0.5;
    let pts = vec![Vec2::new(-JUNCTION_HALF, h), Vec2::new(-JUNCTION_HALF - arm_length, h)];
    Polyline::new(rotate_all(pts, arm.rotation())).unwrap()
}

pub fn connector_centerline(from: Arm, turn: Turn) -> Polyline {
    let b = JUNCTION_HALF;
    let h = LANE_WIDTH * 0.5;
    // built for the west arm, then rotated
    let pts = match turn {
        Turn::Straight => vec![Vec2::new(-b, -h), Vec2::new(b, -h)],
        Turn::Left => arc_points(Vec2::new(-b, b), b + h, -FRAC_PI_2, 0.0, 16),
        Turn::Right => arc_points(Vec2::new(-b, -b), b - h, FRAC_PI_2, 0.0, 12),
    };
    // short tangent stubs so end headings match the arms exactly
    let pts = if turn == Turn::Straight {
        pts
    } else {
        let n = pts.len();
        let mut out = vec![pts[0], pts[0] + Vec2::new(0.01, 0.0)];
        out.extend_from_slice(&pts[1..n - 1]);
        let tail = pts[n - 1];
        let exit = if turn == Turn::Left { Vec2::new(0.0, 1.0) } else { Vec2::new(0.0, -1.0) };
        out.push(tail - exit * 0.01);
        out.push(tail);
        out
    };
    Polyline::new(rotate_all(pts, from.rotation())).unwrap()
}

impl RoadLayout {
    pub fn build(&self) -> Result<LaneGraph> {
        match *self {
            RoadLayout::Straight { forward_lanes, opposing_lanes, length, right_lane_end } => {
                if forward_lanes == 0 || length <= 0.0 {
                    return Err(Error::InvalidMap("straight layout needs a forward lane".into()));
                }
                let mut lanes = Vec::new();
                for i in 0..forward_lanes {
                    let y = -LANE_WIDTH * i as f64;
                    let end = match right_lane_end {
                        Some(e) if i == forward_lanes - 1 && forward_lanes > 1 => e,
                        _ => length,
                    };
                    let left = if i > 0 {
                        Some(straight_lane_id(i - 1))
                    } else if opposing_lanes > 0 {
                        Some(opposing_lane_id(0))
                    } else {
                        None
                    };
                    let right = (i + 1 < forward_lanes).then(|| straight_lane_id(i + 1));
                    lanes.push(Lane {
                        id: straight_lane_id(i),
                        centerline: Polyline::new(vec![Vec2::new(0.0, y), Vec2::new(end, y)]).unwrap(),
                        width: LANE_WIDTH,
                        successors: vec![],
                        left_neighbor: left,
                        right_neighbor: right,
                        kind: LaneKind::Drive,
                    });
                }
                for j in 0..opposing_lanes {
                    let y = LANE_WIDTH * (j + 1) as f64;
                    let left = if j == 0 { Some(straight_lane_id(0)) } else { Some(opposing_lane_id(j - 1)) };
                    let right = (j + 1 < opposing_lanes).then(|| opposing_lane_id(j + 1));
                    lanes.push(Lane {
                        id: opposing_lane_id(j),
                        centerline: Polyline::new(vec![Vec2::new(length, y), Vec2::new(0.0, y)]).unwrap(),
                        width: LANE_WIDTH,
                        successors: vec![],
                        left_neighbor: left,
                        right_neighbor: right,
                        kind: LaneKind::Drive,
                    });
                }
                LaneGraph::new(lanes)
            }
            RoadLayout::Crossroad { arm_length } => {
                let mut lanes = Vec::new();
                for k in 0..4 {
                    let arm = Arm::from_index(k);
                    let successors =
                        [Turn::Left, Turn::Straight, Turn::Right].iter().map(|t| connector_lane_id(arm, t.exit(arm))).collect();
                    lanes.push(Lane {
                        id: inbound_lane_id(arm),
                        centerline: inbound_centerline(arm, arm_length),
                        width: LANE_WIDTH,
                        successors,
                        left_neighbor: Some(outbound_lane_id(arm)),
                        right_neighbor: None,
                        kind: LaneKind::Drive,
                    });
                    lanes.push(Lane {
                        id: outbound_lane_id(arm),
                        centerline: outbound_centerline(arm, arm_length),
                        width: LANE_WIDTH,
                        successors: vec![],
                        left_neighbor: Some(inbound_lane_id(arm)),
                        right_neighbor: None,
                        kind: LaneKind::Drive,
                    });
                    for turn in [Turn::Left, Turn::Straight, Turn::Right] {
                        let to = turn.exit(arm);
                        lanes.push(Lane {
                            id: connector_lane_id(arm, to),
                            centerline: connector_centerline(arm, turn),
                            width: LANE_WIDTH,
                            successors: vec![outbound_lane_id(to)],
                            left_neighbor: None,
                            right_neighbor: None,
                            kind: LaneKind::Junction,
                        });
                    }
                }
                LaneGraph::new(lanes)
            }
        }
    }
}

/// Lateral move between parallel lanes of a straight layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneShift {
    /// x coordinate where the shift begins.
    pub start: f64,
    pub length: f64,
    pub to_lane: LaneId,
}

fn straight_lane_y(lane: LaneId) -> f64 {
    if lane >= 10 {
        LANE_WIDTH * (lane - 9) as f64
    } else {
        -LANE_WIDTH * lane as f64
    }
}

/// Route along a straight layout from `(x0, lane)` to `x_end`, with optional
/// smooth lane shifts.
pub fn straight_route(map: &LaneGraph, start_lane: LaneId, x0: f64, x_end: f64, shifts: &[LaneShift]) -> Result<Route> {
    if x_end <= x0 {
        return Err(Error::InvalidMap("route end before start".into()));
    }
    let lateral_at = |x: f64| -> f64 {
        let mut y = straight_lane_y(start_lane);
        for sh in shifts {
            let ty = straight_lane_y(sh.to_lane);
            if x >= sh.start + sh.length {
                y = ty;
            } else if x > sh.start {
                let u = (x - sh.start) / sh.length;
                let w = 0.5 - 0.5 * (PI * u).cos();
                y = y + (ty - y) * w;
            }
        }
        y
    };
    let n = ((x_end - x0) / 1.0).ceil() as usize;
    let pts: Vec<Vec2> = (0..=n).map(|i| {
        let x = (x0 + i as f64).min(x_end);
        Vec2::new(x, lateral_at(x))
    })
    .collect();
    let path = Polyline::new(pts).ok_or_else(|| Error::InvalidMap("degenerate route".into()))?;
    let mut lane_ids = vec![start_lane];
    let mut commands = vec![(0.0, NavCommand::Follow)];
    let mut spans = Vec::new();
    let mut cur = start_lane;
    let mut span_start = 0.0;
    for sh in shifts {
        let s_start = path.project(Vec2::new(sh.start, lateral_at(sh.start))).s;
        let s_mid = path.project(Vec2::new(sh.start + sh.length * 0.5, lateral_at(sh.start + sh.length * 0.5))).s;
        let s_end = path.project(Vec2::new(sh.start + sh.length, lateral_at(sh.start + sh.length))).s;
        let cur_lane = map.lane(cur).ok_or_else(|| Error::InvalidMap(format!("missing lane {cur}")))?;
        let cmd = if cur_lane.left_neighbor == Some(sh.to_lane) {
            NavCommand::ChangeLeft
        } else if cur_lane.right_neighbor == Some(sh.to_lane) {
            NavCommand::ChangeRight
        } else {
            return Err(Error::InvalidMap(format!("lane {} is not a neighbor of {cur}", sh.to_lane)));
        };
        commands.push(((s_start - 20.0).max(0.0), cmd));
        commands.push((s_end, NavCommand::Follow));
        spans.push((cur, span_start, s_mid));
        span_start = s_mid;
        cur = sh.to_lane;
        lane_ids.push(cur);
    }
    spans.push((cur, span_start, f64::INFINITY));
    let total_length = path.length();
    let route = Route { lane_ids, path, total_length, navigation_commands: commands, lane_spans: spans };
    route.validate(map)?;
    Ok(route)
}

/// Route through a crossroad: from `start_dist` metres before the stop line on
/// `from`'s inbound lane, through the junction, to the end of the exit arm.
pub fn junction_route(map: &LaneGraph, from: Arm, turn: Turn, start_dist: f64, arm_length: f64) -> Result<Route> {
    let inbound = inbound_centerline(from, arm_length);
    let conn = connector_centerline(from, turn);
    let to = turn.exit(from);
    let outbound = outbound_centerline(to, arm_length);
    let s0 = (inbound.length() - start_dist).max(0.0);
    let mut pts = Vec::new();
    let steps = (start_dist / 1.0).ceil() as usize;
    for i in 0..steps {
        pts.push(inbound.point_at(s0 + i as f64));
    }
    pts.extend_from_slice(conn.points());
    for p in outbound.points().iter().skip(1) {
        pts.push(*p);
    }
    pts.dedup_by(|a, b| a.distance(*b) < 1e-9);
    let path = Polyline::new(pts).ok_or_else(|| Error::InvalidMap("degenerate route".into()))?;
    let s_junction = inbound.length() - s0;
    let s_exit = s_junction + conn.length();
    let lane_ids = vec![inbound_lane_id(from), connector_lane_id(from, to), outbound_lane_id(to)];
    let commands = vec![
        (0.0, NavCommand::Follow),
        ((s_junction - 30.0).max(0.0), turn.command()),
        (s_exit, NavCommand::Follow),
    ];
    let spans = vec![
        (lane_ids[0], 0.0, s_junction),
        (lane_ids[1], s_junction, s_exit),
        (lane_ids[2], s_exit, f64::INFINITY),
    ];
    let total_length = path.length();
    let route = Route { lane_ids, path, total_length, navigation_commands: commands, lane_spans: spans };
    route.validate(map)?;
    Ok(route)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossroad_is_symmetric_and_valid() {
        let g = RoadLayout::Crossroad { arm_length: 60.0 }.build().unwrap();
        assert_eq!(g.lanes.len(), 4 * 5);
        let left = g.lane(connector_lane_id(Arm::West, Arm::North)).unwrap();
        assert!((left.heading_change() - FRAC_PI_2).abs() < 1e-9);
        let right = g.lane(connector_lane_id(Arm::West, Arm::South)).unwrap();
        assert!((right.heading_change() + FRAC_PI_2).abs() < 1e-9);
        // connectors start where inbound lanes end
        for k in 0..4 {
            let arm = Arm::from_index(k);
            let inb = g.lane(inbound_lane_id(arm)).unwrap();
            for s in &inb.successors {
                let c = g.lane(*s).unwrap();
                assert!(c.centerline.start().distance(inb.centerline.end()) < 1e-9);
                let out = g.lane(c.successors[0]).unwrap();
                assert!(c.centerline.end().distance(out.centerline.start()) < 1e-9);
            }
        }
    }

    #[test]
    fn straight_route_with_shift() {
        let g = RoadLayout::Straight { forward_lanes: 2, opposing_lanes: 0, length: 200.0, right_lane_end: None }
            .build()
            .unwrap();
        let r = straight_route(&g, 1, 10.0, 190.0, &[LaneShift { start: 50.0, length: 20.0, to_lane: 0 }]).unwrap();
        assert_eq!(r.lane_ids, vec![1, 0]);
        assert_eq!(r.path.start(), Vec2::new(10.0, -3.5));
        assert_eq!(r.path.end(), Vec2::new(190.0, 0.0));
        assert_eq!(r.command_at(35.0), NavCommand::ChangeLeft);
        assert_eq!(r.command_at(100.0), NavCommand::Follow);
    }

    #[test]
    fn asymmetric_neighbors_rejected() {
        let mk = |id, left| Lane {
            id,
            centerline: Polyline::new(vec![Vec2::ZERO, Vec2::new(10.0, 0.0)]).unwrap(),
            width: 3.5,
            successors: vec![],
            left_neighbor: left,
            right_neighbor: None,
            kind: LaneKind::Drive,
        };
        assert!(LaneGraph::new(vec![mk(0, Some(1)), mk(1, None)]).is_err());
    }
}
