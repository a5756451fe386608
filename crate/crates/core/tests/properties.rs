//! Randomized invariants over losses, metrics and the image partition.

use std::collections::BTreeMap;
use std::ops::Range;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reasonplan_core::closed_loop::{run_episode, ClosedLoopConfig, PenaltyTable, Policy};
use reasonplan_core::frontend::{anyres_partition, GridTag, Quadrant};
use reasonplan_core::model::LossWeights;
use reasonplan_core::scene::{
    make_scenario, Action, Camera, Infraction, InfractionKind, PseudoFrame, ScenarioKind, WorldState, MAX_BRAKE,
    MAX_STEER, NUM_CLASSES,
};
use reasonplan_core::tokenizer::TokenId;
use reasonplan_core::training::{loss_image, loss_text, total_loss};

const VOCAB: usize = 11;

fn text_case() -> impl Strategy<Value = (Vec<f64>, Vec<TokenId>, Vec<bool>)> {
    (2usize..24).prop_flat_map(|len| {
        (
            prop::collection::vec(-6.0f64..6.0, len * VOCAB),
            prop::collection::vec(0..VOCAB as TokenId, len),
            prop::collection::vec(any::<bool>(), len).prop_filter("some masked target", |m| m[1..].iter().any(|&b| b)),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn text_loss_ignores_unmasked_tokens((logits, ids, mask) in text_case(), salt in any::<u64>()) {
        let base = loss_text(&logits, VOCAB, &ids, &mask).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(salt);
        let mut ids2 = ids.clone();
        let mut logits2 = logits.clone();
        for p in 0..ids.len() {
            if !mask[p] {
                ids2[p] = rng.gen_range(0..VOCAB as TokenId);
                if p > 0 {
                    for v in &mut logits2[(p - 1) * VOCAB..p * VOCAB] {
                        *v = rng.gen_range(-50.0..50.0);
                    }
                }
            }
        }
        // the last row predicts nothing
        let last = ids.len() - 1;
        for v in &mut logits2[last * VOCAB..] {
            *v = rng.gen_range(-50.0..50.0);
        }
        let changed = loss_text(&logits2, VOCAB, &ids2, &mask).unwrap();
        prop_assert_eq!(base.to_bits(), changed.to_bits());
    }

    #[test]
    fn image_loss_ignores_non_front_latents(
        n in 4usize..40,
        dim in 1usize..6,
        front_start in 0usize..4,
        front_len in 1usize..4,
        salt in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(salt);
        let start = front_start.min(n - 1);
        let end = (start + front_len).min(n);
        let front: Vec<Range<usize>> = vec![start..end];
        let mut pred = BTreeMap::new();
        let mut tgt = BTreeMap::new();
        for p in 0..n {
            pred.insert(p, (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>());
            tgt.insert(p, (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>());
        }
        let base = loss_image(&pred, &tgt, &front).unwrap();
        for p in (0..n).filter(|p| !(start..end).contains(p)) {
            for v in pred.get_mut(&p).unwrap().iter_mut().chain(tgt.get_mut(&p).unwrap().iter_mut()) {
                *v = rng.gen_range(-100.0..100.0);
            }
        }
        let changed = loss_image(&pred, &tgt, &front).unwrap();
        prop_assert_eq!(base.to_bits(), changed.to_bits());
    }

    #[test]
    fn total_loss_is_affine(li in 0.0f64..10.0, lt in 0.0f64..10.0, a in 0.0f64..4.0, b in 0.0f64..4.0) {
        prop_assert_eq!(total_loss(li, lt, LossWeights { image: 0.0, text: b }), b * lt);
        prop_assert_eq!(total_loss(li, lt, LossWeights { image: a, text: 0.0 }), a * li);
        let full = total_loss(li, lt, LossWeights { image: a, text: b });
        prop_assert!((full - (a * li + b * lt)).abs() <= 1e-12 * (1.0 + full.abs()));
        let doubled = total_loss(li, lt, LossWeights { image: 2.0 * a, text: 2.0 * b });
        prop_assert!((doubled - 2.0 * full).abs() <= 1e-12 * (1.0 + full.abs()));
    }

    #[test]
    fn penalty_product_is_order_free_and_monotone(kinds in prop::collection::vec(0usize..5, 0..8), salt in any::<u64>()) {
        let table = PenaltyTable::default();
        let mut infs: Vec<Infraction> = kinds
            .iter()
            .enumerate()
            .map(|(i, &k)| Infraction { kind: InfractionKind::ALL[k], tick: i as u64, subject: Some(i as u32) })
            .collect();
        let forward = table.score(&infs);
        let mut prev = 1.0;
        for i in 0..=infs.len() {
            let s = table.score(&infs[..i]);
            prop_assert!(s <= prev);
            prev = s;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(salt);
        for i in (1..infs.len()).rev() {
            infs.swap(i, rng.gen_range(0..=i));
        }
        prop_assert!((table.score(&infs) - forward).abs() <= 1e-15);
    }

    #[test]
    fn six_views_give_ten_tiling_grids(
        size in 2usize..9,
        salt in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(salt);
        let side = 2 * size;
        let mut frames: Vec<PseudoFrame> = Camera::ALL
            .iter()
            .map(|&camera| PseudoFrame {
                camera,
                width: side,
                height: side,
                cells: (0..side * side).map(|_| rng.gen_range(0..NUM_CLASSES as u8)).collect(),
            })
            .collect();
        for i in (1..frames.len()).rev() {
            frames.swap(i, rng.gen_range(0..=i));
        }
        let front = frames.iter().find(|f| f.camera == Camera::Front).unwrap().clone();
        let grids = anyres_partition(&frames, size).unwrap();
        prop_assert_eq!(grids.len(), 10);
        // quadrant grids at half resolution are exact copies of the front raster
        let mut covered = vec![0u8; side * side];
        for g in &grids {
            if let GridTag::FrontSub(q) = g.tag {
                let (r0, c0) = match q {
                    Quadrant::FarLeft => (0, 0),
                    Quadrant::FarRight => (0, size),
                    Quadrant::NearLeft => (size, 0),
                    Quadrant::NearRight => (size, size),
                };
                for r in 0..size {
                    for c in 0..size {
                        prop_assert_eq!(g.cells[r * size + c], front.cells[(r0 + r) * side + c0 + c]);
                        covered[(r0 + r) * side + c0 + c] += 1;
                    }
                }
            }
        }
        prop_assert!(covered.iter().all(|&c| c == 1));
    }
}

/// Seeded random actuation, occasionally holding still.
struct Jitter(ChaCha8Rng);

impl Policy for Jitter {
    fn act(&mut self, world: &WorldState) -> Action {
        let r = &mut self.0;
        if world.tick > 150 && r.gen_bool(0.5) {
            return Action::new(-MAX_BRAKE, 0.0);
        }
        Action::new(r.gen_range(-3.0..3.0), r.gen_range(-MAX_STEER..MAX_STEER) * 0.3)
    }
}

#[test]
fn driving_score_identity_over_random_episodes() {
    let cfg = ClosedLoopConfig { timeout_ticks: 400, blocked_ticks: 40, ..ClosedLoopConfig::default() };
    let mut saw_infraction = false;
    for i in 0..120u64 {
        let kind = ScenarioKind::ALL[(i % 10) as usize];
        let spec = make_scenario(kind, i / 10);
        let mut policy = Jitter(ChaCha8Rng::seed_from_u64(i));
        let r = run_episode(&spec, &mut policy, &cfg).unwrap();
        assert!((r.ds - 100.0 * r.rc * r.is).abs() <= 1e-9, "episode {i}");
        assert!((0.0..=1.0).contains(&r.rc) && (0.0..=1.0).contains(&r.is));
        assert_eq!(r.is, cfg.penalties.score(&r.infractions));
        if r.success {
            assert_eq!(r.ds, 100.0);
            assert!(r.rc >= 1.0 && r.is == 1.0 && r.ticks <= cfg.timeout_ticks);
        }
        saw_infraction |= !r.infractions.is_empty();
    }
    assert!(saw_infraction, "random driving should hit something");
}

#[test]
fn single_infraction_scores_match_table() {
    let t = PenaltyTable::default();
    let expect = [
        (InfractionKind::CollisionPedestrian, 0.50),
        (InfractionKind::CollisionVehicle, 0.60),
        (InfractionKind::CollisionStatic, 0.65),
        (InfractionKind::RedLight, 0.70),
        (InfractionKind::OffRoad, 0.70),
    ];
    for (kind, is) in expect {
        let s = t.score(&[Infraction { kind, tick: 1, subject: None }]);
        assert_eq!(s, is);
        assert_eq!(100.0 * 1.0 * s, 100.0 * is);
    }
}
