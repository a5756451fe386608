//! Driving simulator, map and route model, infractions, pseudo-cameras,
//! scenario library and the scripted expert.

pub mod camera;
pub mod expert;
pub mod infraction;
pub mod map;
pub mod scenario;
pub mod sim;
pub mod trace;
pub mod types;

pub use camera::{render_camera, render_pseudo_cameras, Camera, CameraConfig, CellClass, PseudoFrame, NUM_CLASSES};
pub use expert::{expert_policy, expert_policy_with, ExpertConfig};
pub use infraction::{detect_infractions, Infraction, InfractionKind};
pub use map::{LaneGraph, Route};
pub use scenario::{make_scenario, AbilityClass, ScenarioKind, ScenarioSpec};
pub use sim::{route_completion, step, WorldState};
pub use types::*;
