//! Structural guarantees of the transformer: causality, residual path,
//! teacher forcing, decoding and checkpoints.

mod common;

use common::{short_record, tiny_model};
use reasonplan_core::frontend::Activation;
use reasonplan_core::model::{decode_checkpoint, encode_checkpoint, ReasonPlan, TargetKind};
use reasonplan_core::tokenizer::{generation_prefix, SlotTime, TokenSequence, BOS, EOI};
use reasonplan_core::training::{loss_image, loss_text, train, TrainingConfig};
use reasonplan_core::Error;

fn setup() -> (ReasonPlan, TokenSequence) {
    let rec = short_record();
    let model = tiny_model(&rec, Activation::Tanh, 7);
    let seq = model.prepare(&rec, TargetKind::Full).unwrap().seq;
    (model, seq)
}

fn rows(v: &[f64], width: usize, range: std::ops::Range<usize>) -> &[f64] {
    &v[range.start * width..range.end * width]
}

fn text_positions(seq: &TokenSequence) -> Vec<usize> {
    (0..seq.len()).filter(|&p| !seq.overrides.contains_key(&p)).collect()
}

#[test]
fn changing_a_token_leaves_earlier_logits_unchanged() {
    let (model, seq) = setup();
    let v = model.vocab.len();
    let (base, _) = model.transformer.forward(&model.params, &seq).unwrap();
    for &k in text_positions(&seq).iter().step_by(7).skip(1) {
        let mut s = seq.clone();
        s.ids[k] = (s.ids[k] + 1) % v as u32;
        let (out, _) = model.transformer.forward(&model.params, &s).unwrap();
        assert_eq!(rows(&out.logits, v, 0..k), rows(&base.logits, v, 0..k), "position {k}");
        assert_ne!(rows(&out.logits, v, k..k + 1), rows(&base.logits, v, k..k + 1));
    }
}

#[test]
fn perturbing_an_override_is_causal() {
    let (model, seq) = setup();
    let d = model.transformer.dim;
    let (base, _) = model.transformer.forward(&model.params, &seq).unwrap();
    let &j = seq.overrides.keys().nth(3).unwrap();
    let mut s = seq.clone();
    s.overrides.get_mut(&j).unwrap()[0] += 0.5;
    let (out, _) = model.transformer.forward(&model.params, &s).unwrap();
    assert_eq!(rows(&out.hidden, d, 0..j), rows(&base.hidden, d, 0..j));
    assert_ne!(rows(&out.hidden, d, j..j + 1), rows(&base.hidden, d, j..j + 1));
}

#[test]
fn zeroed_branches_leave_the_embedding_stream() {
    let (mut model, seq) = setup();
    for id in model.transformer.branch_output_tensors() {
        model.params.get_mut(id).fill(0.0);
    }
    let d = model.transformer.dim;
    let (out, _) = model.transformer.forward(&model.params, &seq).unwrap();
    let pos = model.params.get(model.params.id("pos_emb").unwrap());
    for p in 0..seq.len() {
        let emb = match seq.overrides.get(&p) {
            Some(v) => v.as_slice(),
            None => model.transformer.token_embedding(&model.params, seq.ids[p]),
        };
        let expect: Vec<f64> = emb.iter().zip(&pos[p * d..(p + 1) * d]).map(|(a, b)| a + b).collect();
        assert_eq!(&out.residual[p * d..(p + 1) * d], expect.as_slice(), "position {p}");
    }
}

#[test]
fn latent_prediction_reads_the_previous_position() {
    let (model, seq) = setup();
    let (base, _) = model.transformer.forward(&model.params, &seq).unwrap();
    let future = seq.future_positions();
    let p = future[2];
    // perturbing the input at p - 1 moves the prediction for slot p
    let mut s = seq.clone();
    s.overrides.get_mut(&(p - 1)).unwrap()[1] += 0.5;
    let (out, _) = model.transformer.forward(&model.params, &s).unwrap();
    assert_ne!(out.predicted_latents[&p], base.predicted_latents[&p]);
    // perturbing slot p itself does not
    let mut s = seq.clone();
    s.overrides.get_mut(&p).unwrap()[1] += 0.5;
    let (out, _) = model.transformer.forward(&model.params, &s).unwrap();
    assert_eq!(out.predicted_latents[&p], base.predicted_latents[&p]);
    assert_ne!(out.predicted_latents[&(p + 1)], base.predicted_latents[&(p + 1)]);
}

#[test]
fn text_loss_ignores_target_latents_and_image_loss_ignores_reasoning() {
    let (model, seq) = setup();
    let v = model.vocab.len();
    let (out, _) = model.transformer.forward(&model.params, &seq).unwrap();
    let targets = ReasonPlan::target_latents(&seq);
    let lt = loss_text(&out.logits, v, &seq.ids, &seq.text_loss_mask).unwrap();
    let li = loss_image(&out.predicted_latents, &targets, &seq.front_future_span).unwrap();

    let mut s = seq.clone();
    for x in &mut s.target_latents.as_mut().unwrap().data {
        *x = -*x + 3.0;
    }
    assert_eq!(loss_text(&out.logits, v, &s.ids, &s.text_loss_mask).unwrap().to_bits(), lt.to_bits());

    // reasoning tokens follow the image span, so rewriting them cannot reach
    // the latent predictions
    let last_image = seq.image_slots.iter().map(|s| s.span().end).max().unwrap();
    let mut s = seq.clone();
    for p in last_image..s.len() {
        if s.text_loss_mask[p] {
            s.ids[p] = (s.ids[p] + 3) % v as u32;
        }
    }
    let (out2, _) = model.transformer.forward(&model.params, &s).unwrap();
    let li2 = loss_image(&out2.predicted_latents, &ReasonPlan::target_latents(&s), &s.front_future_span).unwrap();
    assert_eq!(li2.to_bits(), li.to_bits());
}

#[test]
fn greedy_decoding_is_deterministic_and_forces_the_image_span() {
    let rec = short_record();
    for seed in 0..3 {
        let model = tiny_model(&rec, Activation::Ramp, seed);
        let input = model.live_input(&rec.context, &rec.frames_t).unwrap();
        let budget = model.arch.model.max_len - input.len();
        let a = model.generate(&input, budget).unwrap();
        let b = model.generate(&input, budget).unwrap();
        assert_eq!(a, b);
        let span = model.layout.slots();
        assert_eq!(span, model.layout.grids.len() * model.layout.l_v);
        assert_eq!(a.latents.len(), span);
        assert_eq!(a.ids[0], BOS);
        assert_eq!(a.ids[span + 2], EOI);
        let prefix = generation_prefix(&input, &model.layout).unwrap();
        let forced = prefix.image_slots.iter().filter(|s| s.time == SlotTime::Future).map(|s| s.len).sum::<usize>();
        assert_eq!(forced, span);
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let (model, seq) = setup();
    let meta = serde_json::json!({ "stage": 2, "note": "probe" });
    let bytes = encode_checkpoint(&model, &meta).unwrap();
    let (back, meta_back) = decode_checkpoint(&bytes).unwrap();
    assert_eq!(meta_back, meta);
    assert_eq!(back.arch, model.arch);
    assert_eq!(back.vocab, model.vocab);
    assert_eq!(back.params.specs(), model.params.specs());
    assert!(back.params.data.iter().zip(&model.params.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(encode_checkpoint(&back, &meta).unwrap(), bytes);
    let (o1, _) = model.transformer.forward(&model.params, &seq).unwrap();
    let (o2, _) = back.transformer.forward(&back.params, &seq).unwrap();
    assert_eq!(o1.logits, o2.logits);
}

#[test]
fn checkpoint_rejects_other_versions_and_damage() {
    let (model, _) = setup();
    let bytes = encode_checkpoint(&model, &serde_json::Value::Null).unwrap();
    let mut v = bytes.clone();
    v[4..8].copy_from_slice(&99u32.to_le_bytes());
    assert!(matches!(decode_checkpoint(&v), Err(Error::SchemaVersion { found: 99, .. })));
    assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
    let mut v = bytes.clone();
    v.push(0);
    assert!(decode_checkpoint(&v).is_err());
    let mut v = bytes;
    v[0] = b'X';
    assert!(decode_checkpoint(&v).is_err());
}

#[test]
fn training_twice_gives_identical_parameters() {
    let rec = short_record();
    let data = vec![rec.clone(), rec.clone()];
    let cfg = TrainingConfig { stage: 2, lr: 1e-3, batch_size: 2, max_steps: Some(3), ..TrainingConfig::default() };
    let run = || {
        let mut m = tiny_model(&rec, Activation::Tanh, 3);
        train(&mut m, &data, &cfg, |_| {}).unwrap();
        reasonplan_core::model::checkpoint_hash(&m)
    };
    assert_eq!(run(), run());
}
