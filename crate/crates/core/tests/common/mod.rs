#![allow(dead_code)]

use reasonplan_core::annotation::{generate_dataset, AnnotationConfig, ReasoningRecord, Stage};
use reasonplan_core::frontend::{Activation, FrontendConfig};
use reasonplan_core::model::{ArchConfig, ModelConfig, ReasonPlan, TargetKind};
use reasonplan_core::scene::{make_scenario, ScenarioKind};
use reasonplan_core::tokenizer::{input_template_text, Vocab};

/// Annotated records of one expert rollout.
pub fn records(kind: ScenarioKind, seed: u64) -> Vec<ReasoningRecord> {
    generate_dataset(&[make_scenario(kind, seed)], &Stage::ALL, &AnnotationConfig::default(), None).unwrap().0
}

/// A record whose target is short: scene block plus trajectory.
pub fn short_record() -> ReasoningRecord {
    let mut r = records(ScenarioKind::PedestrianCrossing, 0).swap_remove(3);
    r.stages = vec![Stage::SceneUnderstanding];
    r
}

/// Architecture under 5k parameters whose `max_len` equals the length of
/// `rec`'s full sequence.
pub fn tiny_model(rec: &ReasoningRecord, activation: Activation, seed: u64) -> ReasonPlan {
    let vocab = Vocab::build(&[input_template_text(), "Scene Understanding lane ahead the ego vehicle".into()]);
    let mut arch = ArchConfig {
        frontend: FrontendConfig { grid_size: 4, patch: 2, d_v: 4, d_p: 8, activation },
        model: ModelConfig { layers: 2, heads: 2, ff_mult: 2, max_len: 1024, activation },
    };
    let probe = ReasonPlan::new(arch.clone(), vocab.clone(), seed).unwrap();
    arch.model.max_len = probe.prepare(rec, TargetKind::Full).unwrap().seq.len();
    ReasonPlan::new(arch, vocab, seed).unwrap()
}
