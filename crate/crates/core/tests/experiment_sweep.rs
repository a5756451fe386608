//! Overfit-then-drive across model seeds. Slow; run on demand with
//! `SWEEP_SEEDS=0,1,2 cargo test --test experiment_sweep -- --ignored --nocapture`.

use reasonplan_core::annotation::AnnotationConfig;
use reasonplan_core::closed_loop::ClosedLoopConfig;
use reasonplan_core::config::ExperimentConfig;
use reasonplan_core::experiment::overfit_then_drive;

#[test]
#[ignore]
fn sweep_model_seeds() {
    let seeds: Vec<u64> = std::env::var("SWEEP_SEEDS")
        .unwrap_or_else(|_| "0".into())
        .split(',')
        .map(|s| s.trim().parse().unwrap())
        .collect();
    let mut exp = ExperimentConfig::default();
    if let Ok(s) = std::env::var("SWEEP_SCENARIO") {
        exp.scenario = s;
    }
    for seed in seeds {
        let (_, out) = overfit_then_drive(&exp, &AnnotationConfig::default(), &ClosedLoopConfig::default(), seed, |_| {})
            .unwrap();
        let e = &out.episode;
        println!(
            "seed {seed}: L_text {:.4} L_image {:.4} L2 {:.3} ({} parse failures) DS {:.1} RC {:.3} ticks {} faults {} infractions {:?} wall {:.0}s",
            out.l_text, out.l_image, out.open_loop.l2, out.open_loop.parse_failures, e.ds, e.rc, e.ticks,
            e.planner_faults.len(), e.infractions, out.wall_s
        );
    }
}
