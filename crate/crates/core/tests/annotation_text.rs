//! Annotation text: frozen goldens, target grammar, stage selection and
//! dataset determinism.

use std::path::PathBuf;

use reasonplan_core::annotation::{
    encode_dataset, generate_dataset, read_dataset, serialize_record, write_dataset, AnnotationConfig,
    ReasoningRecord, Stage,
};
use reasonplan_core::frontend::FrontendConfig;
use reasonplan_core::scene::{make_scenario, ScenarioKind};
use reasonplan_core::tokenizer::{assemble_target, parse_target, parse_trajectory, SequenceLayout, Vocab};

fn dataset(kinds: &[ScenarioKind], stages: &[Stage]) -> Vec<ReasoningRecord> {
    let specs: Vec<_> = kinds.iter().map(|&k| make_scenario(k, 0)).collect();
    generate_dataset(&specs, stages, &AnnotationConfig::default(), None).unwrap().0
}

const GOLDEN: [(ScenarioKind, usize); 4] = [
    (ScenarioKind::PedestrianCrossing, 6),
    (ScenarioKind::Dos04RedLight, 4),
    (ScenarioKind::Merge, 10),
    (ScenarioKind::AccidentTwoWays, 8),
];

/// Set `UPDATE_GOLDEN=1` to rewrite the files after an intended change.
#[test]
fn serialized_records_match_goldens() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    for (kind, index) in GOLDEN {
        let rec = &dataset(&[kind], &Stage::ALL)[index];
        let text = serialize_record(rec);
        let path = dir.join(format!("{}_{}.txt", kind.name(), rec.tick));
        if update {
            std::fs::create_dir_all(&dir).unwrap();
            std::fs::write(&path, format!("{text}\n")).unwrap();
        }
        let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(text, want.trim_end_matches('\n'), "{}", path.display());
    }
}

#[test]
fn every_target_reparses_under_the_grammar() {
    let vocab = Vocab::standard();
    let layout = SequenceLayout::standard(FrontendConfig::default().l_v());
    let records = dataset(&ScenarioKind::ALL, &Stage::ALL);
    assert!(records.len() > 100);
    for rec in &records {
        let seq = assemble_target(rec, &layout, None, &vocab, true)
            .unwrap_or_else(|e| panic!("{} tick {}: {e}", rec.scenario, rec.tick));
        let parts = parse_target(&seq.ids, layout.slots()).unwrap();
        let traj = parse_trajectory(&vocab.decode(&seq.ids[parts.trajectory])).unwrap();
        for (a, b) in traj.iter().zip(&rec.expert_waypoints) {
            assert!((a.x - b.x).abs() <= 0.005 + 1e-9 && (a.y - b.y).abs() <= 0.005 + 1e-9);
        }
        let reasoning = vocab.decode(&seq.ids[parts.reasoning]);
        for st in Stage::ALL {
            assert!(reasoning.contains(st.heading()), "{} missing", st.heading());
        }
    }
}

#[test]
fn dropped_stages_leave_only_requested_blocks() {
    let kinds = [ScenarioKind::Dos04RedLight, ScenarioKind::Overtake];
    let cases: [&[Stage]; 4] = [
        &[Stage::SceneUnderstanding],
        &[Stage::SceneUnderstanding, Stage::TrafficSigns],
        &[Stage::CriticalObjects, Stage::MetaAction],
        &[],
    ];
    for stages in cases {
        for rec in dataset(&kinds, stages) {
            assert_eq!(rec.stages, stages);
            let text = serialize_record(&rec);
            for st in Stage::ALL {
                let heading = format!("{}:", st.heading());
                assert_eq!(text.contains(&heading), stages.contains(&st), "{heading} in {stages:?}");
            }
            assert!(text.lines().last().unwrap().starts_with("Trajectory:"));
            assert_eq!(text.lines().count(), stages.len() + 1);
        }
    }
}

#[test]
fn regeneration_is_byte_identical() {
    let kinds = [ScenarioKind::Dos01ParkedCars, ScenarioKind::GiveWay];
    let a = encode_dataset(&dataset(&kinds, &Stage::ALL)).unwrap();
    let b = encode_dataset(&dataset(&kinds, &Stage::ALL)).unwrap();
    assert_eq!(a, b);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    let records = dataset(&kinds, &Stage::ALL);
    write_dataset(&path, &records).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), a);
    assert_eq!(read_dataset(&path).unwrap(), records);
}
