use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Obb, Vec2};

/// Simulation period in seconds (10 Hz).
pub const DT: f64 = 0.1;
pub const WHEELBASE: f64 = 2.7;
pub const EGO_HALF_LENGTH: f64 = 2.3;
pub const EGO_HALF_WIDTH: f64 = 0.95;
pub const MAX_STEER: f64 = 0.6;
pub const MAX_ACCEL: f64 = 4.0;
pub const MAX_BRAKE: f64 = 8.0;
pub const MAX_PEDESTRIAN_SPEED: f64 = 3.0;

pub type LaneId = u32;
pub type AgentId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub position: Vec2,
    pub heading: f64,
    pub speed: f64,
    pub accel: f64,
    pub steer: f64,
}

impl EgoState {
    pub fn new(position: Vec2, heading: f64, speed: f64) -> Self {
        Self { position, heading: wrap_angle(heading), speed: speed.max(0.0), accel: 0.0, steer: 0.0 }
    }

    pub fn bbox(&self) -> Obb {
        Obb::new(self.position, self.heading, EGO_HALF_LENGTH, EGO_HALF_WIDTH)
    }
}

/// Longitudinal acceleration and front-wheel steering command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub accel: f64,
    pub steer: f64,
}

impl Action {
    pub fn new(accel: f64, steer: f64) -> Self {
        Self { accel, steer }
    }

    pub fn clamped(self) -> Self {
        Self {
            accel: if self.accel.is_finite() { self.accel.clamp(-MAX_BRAKE, MAX_ACCEL) } else { -MAX_BRAKE },
            steer: if self.steer.is_finite() { self.steer.clamp(-MAX_STEER, MAX_STEER) } else { 0.0 },
        }
    }

    pub fn within_limits(&self) -> bool {
        self.accel >= -MAX_BRAKE && self.accel <= MAX_ACCEL && self.steer.abs() <= MAX_STEER
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Vehicle,
    Pedestrian,
    Static,
}

impl AgentKind {
    pub fn word(self) -> &'static str {
        match self {
            AgentKind::Vehicle => "vehicle",
            AgentKind::Pedestrian => "pedestrian",
            AgentKind::Static => "obstacle",
        }
    }

    /// Whether the agent blocks camera rays.
    pub fn is_opaque(self) -> bool {
        !matches!(self, AgentKind::Pedestrian)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub kind: AgentKind,
    pub position: Vec2,
    pub heading: f64,
    pub speed: f64,
    /// (half length, half width), both strictly positive.
    pub half_extents: Vec2,
}

impl AgentState {
    pub fn bbox(&self) -> Obb {
        Obb::new(self.position, self.heading, self.half_extents.x, self.half_extents.y)
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::from_angle(self.heading) * self.speed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightColor {
    Red,
    Yellow,
    Green,
}

impl LightColor {
    pub fn word(self) -> &'static str {
        match self {
            LightColor::Red => "red",
            LightColor::Yellow => "yellow",
            LightColor::Green => "green",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficLight {
    pub id: u32,
    /// Lane whose traffic this light governs.
    pub lane: LaneId,
    pub stop_line: (Vec2, Vec2),
    pub state: LightColor,
    pub phase_schedule: Vec<(LightColor, f64)>,
    /// Seconds into the cycle at tick 0.
    pub phase_offset: f64,
}

impl TrafficLight {
    pub fn cycle(&self) -> f64 {
        self.phase_schedule.iter().map(|(_, d)| d).sum()
    }

    pub fn state_at(&self, time: f64) -> LightColor {
        let cycle = self.cycle();
        let mut t = (time + self.phase_offset).rem_euclid(cycle);
        for (c, d) in &self.phase_schedule {
            if t < *d {
                return *c;
            }
            t -= d;
        }
        self.phase_schedule.last().map(|p| p.0).unwrap_or(LightColor::Green)
    }

    pub fn stop_line_mid(&self) -> Vec2 {
        self.stop_line.0.lerp(self.stop_line.1, 0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignKind {
    Warning,
    Construction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSign {
    pub id: u32,
    pub kind: SignKind,
    pub position: Vec2,
    pub lane: LaneId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NavCommand {
    Follow,
    Left,
    Right,
    Straight,
    ChangeLeft,
    ChangeRight,
}

impl NavCommand {
    pub const ALL: [NavCommand; 6] = [
        NavCommand::Follow,
        NavCommand::Left,
        NavCommand::Right,
        NavCommand::Straight,
        NavCommand::ChangeLeft,
        NavCommand::ChangeRight,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Single-word form used in prompts.
    pub fn word(self) -> &'static str {
        match self {
            NavCommand::Follow => "follow",
            NavCommand::Left => "left",
            NavCommand::Right => "right",
            NavCommand::Straight => "straight",
            NavCommand::ChangeLeft => "change_left",
            NavCommand::ChangeRight => "change_right",
        }
    }
}
