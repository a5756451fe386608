use std::collections::BTreeSet;

use reasonplan_core::scene::{
    detect_infractions, expert_policy, make_scenario, route_completion, ScenarioKind, WorldState, DT,
};

fn drive(kind: ScenarioKind, seed: u64) -> Result<u64, String> {
    let spec = make_scenario(kind, seed);
    let mut w = WorldState::from_scenario(&spec).unwrap();
    let mut seen = BTreeSet::new();
    while w.tick < 2000 {
        let a = expert_policy(&w);
        let prev = w.clone();
        w.step_mut(a, DT);
        for i in detect_infractions(&prev, &w) {
            if seen.insert(i.key()) {
                return Err(format!("{kind} seed {seed}: {:?} at tick {} ego {:?} v {:.2}", i.kind, i.tick, w.ego.position, w.ego.speed));
            }
        }
        if route_completion(&w) >= 1.0 - 1e-9 {
            return Ok(w.tick);
        }
    }
    Err(format!("{kind} seed {seed}: timeout at completion {:.3} pos {:?}", route_completion(&w), w.ego.position))
}

#[test]
fn expert_completes_library_without_infractions() {
    let mut failures = Vec::new();
    for kind in ScenarioKind::ALL {
        for seed in 0..12 {
            if let Err(e) = drive(kind, seed) {
                failures.push(e);
            }
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
