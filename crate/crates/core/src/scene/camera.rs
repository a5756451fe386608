//! Semantic pseudo-cameras: six polar rasters around the ego with 2D
//! ray-cast occlusion.

use serde::{Deserialize, Serialize};

use crate::geometry::{Obb, Vec2};
use crate::scene::sim::WorldState;
use crate::scene::types::{AgentKind, LightColor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Camera {
    #[serde(rename = "CAM_FRONT")]
    Front,
    #[serde(rename = "CAM_FRONT_LEFT")]
    FrontLeft,
    #[serde(rename = "CAM_FRONT_RIGHT")]
    FrontRight,
    #[serde(rename = "CAM_BACK_LEFT")]
    BackLeft,
    #[serde(rename = "CAM_BACK_RIGHT")]
    BackRight,
    #[serde(rename = "CAM_BACK")]
    Back,
}

impl Camera {
    /// Canonical order, front first.
    pub const ALL: [Camera; 6] =
        [Camera::Front, Camera::FrontLeft, Camera::FrontRight, Camera::BackLeft, Camera::BackRight, Camera::Back];

    pub fn yaw_offset(self) -> f64 {
        let deg: f64 = match self {
            Camera::Front => 0.0,
            Camera::FrontLeft => 60.0,
            Camera::FrontRight => -60.0,
            Camera::BackLeft => 120.0,
            Camera::BackRight => -120.0,
            Camera::Back => 180.0,
        };
        deg.to_radians()
    }

    pub fn tag(self) -> &'static str {
        match self {
            Camera::Front => "CAM_FRONT",
            Camera::FrontLeft => "CAM_FRONT_LEFT",
            Camera::FrontRight => "CAM_FRONT_RIGHT",
            Camera::BackLeft => "CAM_BACK_LEFT",
            Camera::BackRight => "CAM_BACK_RIGHT",
            Camera::Back => "CAM_BACK",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Semantic class ids stored in rasters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum CellClass {
    Empty = 0,
    Lane = 1,
    Vehicle = 2,
    Pedestrian = 3,
    Static = 4,
    Red = 5,
    Yellow = 6,
    Green = 7,
    RouteMarker = 8,
}

pub const NUM_CLASSES: usize = 9;

impl CellClass {
    pub fn from_agent(kind: AgentKind) -> Self {
        match kind {
            AgentKind::Vehicle => CellClass::Vehicle,
            AgentKind::Pedestrian => CellClass::Pedestrian,
            AgentKind::Static => CellClass::Static,
        }
    }

    pub fn from_light(c: LightColor) -> Self {
        match c {
            LightColor::Red => CellClass::Red,
            LightColor::Yellow => CellClass::Yellow,
            LightColor::Green => CellClass::Green,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    /// Angular bins (columns).
    pub width: usize,
    /// Range bins (rows); row 0 is the farthest.
    pub height: usize,
    pub range: f64,
    pub fov_deg: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self { width: 32, height: 32, range: 50.0, fov_deg: 60.0 }
    }
}

/// Semantic raster from one camera, row-major `height x width`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoFrame {
    pub camera: Camera,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<u8>,
}

impl PseudoFrame {
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.width + col]
    }

    pub fn count(&self, class: CellClass) -> usize {
        self.cells.iter().filter(|&&c| c == class as u8).count()
    }

    /// Run-length encoding as `(class, run)` pairs in row-major order.
    pub fn rle(&self) -> Vec<(u8, u32)> {
        let mut out: Vec<(u8, u32)> = Vec::new();
        for &c in &self.cells {
            match out.last_mut() {
                Some((cls, n)) if *cls == c => *n += 1,
                _ => out.push((c, 1)),
            }
        }
        out
    }

    pub fn from_rle(camera: Camera, width: usize, height: usize, runs: &[(u8, u32)]) -> Option<Self> {
        let mut cells = Vec::with_capacity(width * height);
        for &(c, n) in runs {
            if c as usize >= NUM_CLASSES {
                return None;
            }
            cells.extend(std::iter::repeat_n(c, n as usize));
        }
        (cells.len() == width * height).then_some(Self { camera, width, height, cells })
    }
}

#[derive(Serialize, Deserialize)]
struct FrameRepr {
    camera: Camera,
    width: usize,
    height: usize,
    rle: Vec<(u8, u32)>,
}

impl Serialize for PseudoFrame {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        FrameRepr { camera: self.camera, width: self.width, height: self.height, rle: self.rle() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PseudoFrame {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = FrameRepr::deserialize(d)?;
        PseudoFrame::from_rle(r.camera, r.width, r.height, &r.rle)
            .ok_or_else(|| serde::de::Error::custom("run lengths do not match raster size"))
    }
}

/// Agents are rasterized with this margin so small objects hit cell centres.
const RASTER_MARGIN: f64 = 0.75;
const LIGHT_RADIUS: f64 = 1.5;
const ROUTE_MARKER_RADIUS: f64 = 1.0;

struct Scene<'a> {
    origin: Vec2,
    occluders: Vec<(usize, Obb)>,
    agents: Vec<(usize, Obb, CellClass)>,
    lights: Vec<(Vec2, Vec2, CellClass)>,
    route: Vec<Vec2>,
    world: &'a WorldState,
}

impl Scene<'_> {
    fn new(world: &WorldState, range: f64) -> Scene<'_> {
        let origin = world.ego.position;
        let mut occluders = Vec::new();
        let mut agents = Vec::new();
        for (i, a) in world.agents.iter().enumerate() {
            if a.position.distance(origin) > range + 10.0 {
                continue;
            }
            let b = a.bbox();
            if a.kind.is_opaque() {
                occluders.push((i, b));
            }
            let inflated = Obb::new(b.center, b.heading, b.half_length + RASTER_MARGIN, b.half_width + RASTER_MARGIN);
            agents.push((i, inflated, CellClass::from_agent(a.kind)));
        }
        let lights = world.lights.iter().map(|l| (l.stop_line.0, l.stop_line.1, CellClass::from_light(l.state))).collect();
        let s0 = world.ego_route_s();
        let path = &world.route.path;
        let mut route = Vec::new();
        let mut s = s0;
        while s <= (s0 + range).min(path.length()) {
            route.push(path.point_at(s));
            s += 1.0;
        }
        Scene { origin, occluders, agents, lights, route, world }
    }

    fn visible(&self, p: Vec2, skip: Option<usize>) -> bool {
        self.occluders.iter().all(|(i, b)| Some(*i) == skip || b.contains(p) || !b.intersects_segment(self.origin, p))
    }

    fn classify(&self, p: Vec2) -> CellClass {
        for (i, b, class) in &self.agents {
            if b.contains(p) {
                if self.visible(p, Some(*i)) {
                    return *class;
                }
                return CellClass::Empty;
            }
        }
        if !self.visible(p, None) {
            return CellClass::Empty;
        }
        for (a, b, class) in &self.lights {
            if point_segment_distance(p, *a, *b) <= LIGHT_RADIUS {
                return *class;
            }
        }
        if self.route.windows(2).any(|w| point_segment_distance(p, w[0], w[1]) <= ROUTE_MARKER_RADIUS) {
            return CellClass::RouteMarker;
        }
        for lane in self.world.map.lanes.values() {
            if lane.centerline.distance(p) <= lane.width * 0.5 {
                return CellClass::Lane;
            }
        }
        CellClass::Empty
    }
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// World position of the centre of cell `(row, col)` for `camera`.
pub fn cell_center(world: &WorldState, camera: Camera, cfg: &CameraConfig, row: usize, col: usize) -> Vec2 {
    let range = (cfg.height - row) as f64 - 0.5;
    let r = range / cfg.height as f64 * cfg.range;
    let fov = cfg.fov_deg.to_radians();
    let ang = world.ego.heading + camera.yaw_offset() + fov * 0.5 - (col as f64 + 0.5) / cfg.width as f64 * fov;
    world.ego.position + Vec2::from_angle(ang) * r
}

fn render_with(scene: &Scene<'_>, camera: Camera, cfg: &CameraConfig) -> PseudoFrame {
    let mut cells = Vec::with_capacity(cfg.width * cfg.height);
    for row in 0..cfg.height {
        for col in 0..cfg.width {
            let p = cell_center(scene.world, camera, cfg, row, col);
            cells.push(scene.classify(p) as u8);
        }
    }
    PseudoFrame { camera, width: cfg.width, height: cfg.height, cells }
}

pub fn render_camera(world: &WorldState, camera: Camera, cfg: &CameraConfig) -> PseudoFrame {
    render_with(&Scene::new(world, cfg.range), camera, cfg)
}

/// Renders all six cameras in canonical order.
pub fn render_pseudo_cameras(world: &WorldState, cfg: &CameraConfig) -> Vec<PseudoFrame> {
    let scene = Scene::new(world, cfg.range);
    Camera::ALL.iter().map(|&c| render_with(&scene, c, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::scenario::{make_scenario, ScenarioKind};
    use crate::scene::types::AgentState;

    fn bare_world() -> WorldState {
        let mut spec = make_scenario(ScenarioKind::PedestrianCrossing, 2);
        spec.agents.clear();
        spec.triggers.clear();
        WorldState::from_scenario(&spec).unwrap()
    }

    fn agent(id: u32, kind: AgentKind, at: Vec2, ext: Vec2) -> AgentState {
        AgentState { id, kind, position: at, heading: 0.0, speed: 0.0, half_extents: ext }
    }

    #[test]
    fn empty_world_has_only_road_cells() {
        let w = bare_world();
        let frames = render_pseudo_cameras(&w, &CameraConfig::default());
        assert_eq!(frames.len(), 6);
        assert_eq!(frames[0].camera, Camera::Front);
        for f in &frames {
            assert!(f.cells.iter().all(|&c| c == CellClass::Empty as u8
                || c == CellClass::Lane as u8
                || c == CellClass::RouteMarker as u8));
        }
        assert!(frames[0].count(CellClass::RouteMarker) > 0);
        assert!(frames[0].count(CellClass::Lane) > 0);
    }

    #[test]
    fn occluded_pedestrian_is_hidden() {
        let mut w = bare_world();
        let ego = w.ego.position;
        let ped = agent(2, AgentKind::Pedestrian, ego + Vec2::new(25.0, 0.0), Vec2::new(0.3, 0.3));
        w.agents.push(ped.clone());
        let cfg = CameraConfig::default();
        let visible = render_camera(&w, Camera::Front, &cfg);
        assert!(visible.count(CellClass::Pedestrian) > 0);

        w.agents.push(agent(1, AgentKind::Vehicle, ego + Vec2::new(15.0, 0.0), Vec2::new(2.2, 1.5)));
        let hidden = render_camera(&w, Camera::Front, &cfg);
        assert_eq!(hidden.count(CellClass::Pedestrian), 0);
        assert!(hidden.count(CellClass::Vehicle) > 0);
        // independent check: every cell inside the pedestrian footprint is behind the car
        let car = w.agents[1].bbox();
        for row in 0..cfg.height {
            for col in 0..cfg.width {
                let p = cell_center(&w, Camera::Front, &cfg, row, col);
                if ped.bbox().distance_to(p) <= RASTER_MARGIN {
                    assert!(car.intersects_segment(ego, p));
                }
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let spec = make_scenario(ScenarioKind::Dos01ParkedCars, 5);
        let w = WorldState::from_scenario(&spec).unwrap();
        let cfg = CameraConfig::default();
        assert_eq!(render_pseudo_cameras(&w, &cfg), render_pseudo_cameras(&w, &cfg));
    }

    #[test]
    fn rle_round_trip() {
        let spec = make_scenario(ScenarioKind::Dos01ParkedCars, 5);
        let w = WorldState::from_scenario(&spec).unwrap();
        for f in render_pseudo_cameras(&w, &CameraConfig::default()) {
            let back = PseudoFrame::from_rle(f.camera, f.width, f.height, &f.rle()).unwrap();
            assert_eq!(back, f);
            let json = serde_json::to_string(&f).unwrap();
            let de: PseudoFrame = serde_json::from_str(&json).unwrap();
            assert_eq!(de, f);
        }
    }
}
