//! Fixtures shared by the benchmarks.

use reasonplan_core::annotation::{generate_dataset, AnnotationConfig, ReasoningRecord, Stage};
use reasonplan_core::model::{ArchConfig, ReasonPlan};
use reasonplan_core::scene::{make_scenario, ScenarioKind, WorldState};
use reasonplan_core::tokenizer::Vocab;

/// A mid-rollout record from the pedestrian crossing with every stage.
pub fn record() -> ReasoningRecord {
    let spec = make_scenario(ScenarioKind::PedestrianCrossing, 0);
    let mut recs = generate_dataset(&[spec], &Stage::ALL, &AnnotationConfig::default(), None).expect("dataset").0;
    recs.swap_remove(recs.len() / 2)
}

/// Default architecture with fixed weights.
pub fn model() -> ReasonPlan {
    ReasonPlan::new(ArchConfig::default(), Vocab::standard(), 0).expect("model")
}

/// Spawn state of a busy scenario.
pub fn world() -> WorldState {
    WorldState::from_scenario(&make_scenario(ScenarioKind::AccidentTwoWays, 0)).expect("world")
}
