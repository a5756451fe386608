//! The multimodal planner: frontend, transformer, vocabulary and parameters
//! bundled together, with losses, generation and checkpoints.

mod checkpoint;
mod transformer;

pub use checkpoint::{
    checkpoint_hash, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION,
};
pub use transformer::{ForwardCache, ForwardOutput, KvCache, ModelConfig, Transformer};

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::{EgoContext, ReasoningRecord};
use crate::error::{Error, Result};
use crate::frontend::{ContextCache, Frontend, FrontendConfig, VisualCache};
use crate::geometry::Vec2;
use crate::scene::camera::PseudoFrame;
use crate::tensor::{Group, ParamStore};
use crate::tokenizer::{
    assemble_input, assemble_input_from, assemble_target, generation_prefix, parse_trajectory, stage1_targets,
    SlotTime, TokenId, TokenSequence, Vocab, BOI, BOS, EOI, EOS, EOT,
};
use crate::training::{loss_image_grad, loss_text_grad, total_loss};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub frontend: FrontendConfig,
    pub model: ModelConfig,
}

/// Loss weights: `image` scales the next-scene term, `text` the reasoning
/// and trajectory term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub image: f64,
    pub text: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { image: 1.0, text: 1.0 }
    }
}

/// Which assistant target to train on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// Scene and sign blocks only, no trajectory.
    Perception,
    /// Every stage in the record plus the trajectory.
    Full,
}

#[derive(Debug, Clone)]
pub struct ReasonPlan {
    pub arch: ArchConfig,
    pub vocab: Vocab,
    pub frontend: Frontend,
    pub transformer: Transformer,
    pub params: ParamStore,
    pub layout: crate::tokenizer::SequenceLayout,
}

/// A record turned into a full training sequence, with the frontend caches
/// needed to back-propagate into the encoders.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub seq: TokenSequence,
    vis_t: VisualCache,
    vis_f: VisualCache,
    ctx: ContextCache,
}

#[derive(Debug, Clone)]
pub struct LossReport {
    pub l_image: f64,
    pub l_text: f64,
    pub l_total: f64,
    pub grads: ParamStore,
}

/// Assistant output of one generation call.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    /// Everything after the input, starting with `[BOS]`.
    pub ids: Vec<TokenId>,
    /// Latent predicted for each forced future slot.
    pub latents: Vec<Vec<f64>>,
    /// True when `max_new` ran out before `[EOS]`.
    pub truncated: bool,
}

impl Generation {
    fn section(&self, open: TokenId, close: TokenId) -> &[TokenId] {
        let start = self.ids.iter().position(|&t| t == open).map_or(self.ids.len(), |p| p + 1);
        let end = self.ids[start..].iter().position(|&t| t == close).map_or(self.ids.len(), |p| start + p);
        &self.ids[start..end]
    }

    pub fn reasoning(&self, vocab: &Vocab) -> String {
        vocab.decode(self.section(crate::tokenizer::BOT, EOT))
    }

    pub fn trajectory_text(&self, vocab: &Vocab) -> String {
        vocab.decode(self.section(EOT, EOS))
    }

    pub fn trajectory(&self, vocab: &Vocab) -> Result<[Vec2; 4]> {
        parse_trajectory(&self.trajectory_text(vocab))
    }
}

impl ReasonPlan {
    /// Fresh parameters drawn from `seed`.
    pub fn new(arch: ArchConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let frontend = Frontend::register(arch.frontend.clone(), &mut params, &mut rng)?;
        let d = arch.frontend.d_p;
        let transformer = Transformer::register(arch.model.clone(), d, vocab.len(), d, &mut params, &mut rng)?;
        let layout = crate::tokenizer::SequenceLayout::standard(arch.frontend.l_v());
        Ok(Self { arch, vocab, frontend, transformer, params, layout })
    }

    /// Wraps existing parameters, checking every tensor shape.
    pub fn from_params(arch: ArchConfig, vocab: Vocab, params: ParamStore) -> Result<Self> {
        let frontend = Frontend::bind(arch.frontend.clone(), &params)?;
        let d = arch.frontend.d_p;
        let transformer = Transformer::bind(arch.model.clone(), d, vocab.len(), d, &params)?;
        let expected = ReasonPlan::new(arch.clone(), vocab.clone(), 0)?;
        if !expected.params.same_layout(&params) {
            return Err(Error::ShapeMismatch("parameter layout differs from the architecture".into()));
        }
        let layout = crate::tokenizer::SequenceLayout::standard(arch.frontend.l_v());
        Ok(Self { arch, vocab, frontend, transformer, params, layout })
    }

    /// Encodes both frame sets and the context and assembles input + target.
    pub fn prepare(&self, rec: &ReasoningRecord, target: TargetKind) -> Result<Prepared> {
        let (pt, vis_t) = self.frontend.encode_frames(&self.params, &rec.frames_t)?;
        let (pf, vis_f) = self.frontend.encode_frames(&self.params, &rec.frames_future)?;
        let c = &rec.context;
        let (ce, ctx) = self.frontend.context_forward(&self.params, c.speed, c.accel, c.command)?;
        let input = assemble_input(rec, &pt, &ce, &self.layout, &self.vocab)?;
        let tgt = match target {
            TargetKind::Full => assemble_target(rec, &self.layout, Some(&pf), &self.vocab, false)?,
            TargetKind::Perception => stage1_targets(rec, &self.layout, Some(&pf), &self.vocab)?,
        };
        Ok(Prepared { seq: input.concat(&tgt), vis_t, vis_f, ctx })
    }

    /// Target latents keyed by sequence position.
    pub fn target_latents(seq: &TokenSequence) -> BTreeMap<usize, Vec<f64>> {
        let mut out = BTreeMap::new();
        if let Some(t) = &seq.target_latents {
            for (i, p) in seq.future_positions().into_iter().enumerate() {
                out.insert(p, t.row(i).to_vec());
            }
        }
        out
    }

    /// Losses of one prepared example and, when `grads` is given, their
    /// gradients scaled by `scale` accumulated into it.
    pub fn example_loss(
        &self,
        ex: &Prepared,
        weights: LossWeights,
        scale: f64,
        grads: Option<&mut ParamStore>,
    ) -> Result<(f64, f64)> {
        let (out, cache) = self.transformer.forward(&self.params, &ex.seq)?;
        let targets = Self::target_latents(&ex.seq);
        let (li, d_lat) = loss_image_grad(&out.predicted_latents, &targets, &ex.seq.front_future_span)?;
        let (lt, d_logits) = loss_text_grad(&out.logits, self.vocab.len(), &ex.seq.ids, &ex.seq.text_loss_mask)?;
        if !li.is_finite() {
            return Err(Error::Numeric { term: "image" });
        }
        if !lt.is_finite() {
            return Err(Error::Numeric { term: "text" });
        }
        let Some(grads) = grads else { return Ok((li, lt)) };
        let d_logits: Vec<f64> = d_logits.iter().map(|g| g * weights.text * scale).collect();
        let mut d_latents = BTreeMap::new();
        if weights.image != 0.0 {
            for (p, g) in d_lat {
                d_latents.insert(p, g.iter().map(|v| v * weights.image * scale).collect::<Vec<f64>>());
            }
        }
        let d_over = self.transformer.backward(&self.params, &out, &cache, &d_logits, &d_latents, grads);
        let dp = self.arch.frontend.d_p;
        let rows = self.layout.slots();
        let mut d_t = vec![0.0; rows * dp];
        let mut d_f = vec![0.0; rows * dp];
        for slot in &ex.seq.image_slots {
            let dst = if slot.time == SlotTime::Current { &mut d_t } else { &mut d_f };
            for j in 0..slot.len {
                if let Some(g) = d_over.get(&(slot.start + j)) {
                    let row = slot.grid * self.layout.l_v + j;
                    dst[row * dp..(row + 1) * dp].copy_from_slice(g);
                }
            }
        }
        self.frontend.visual_backward(&self.params, &ex.vis_t, &d_t, grads);
        self.frontend.visual_backward(&self.params, &ex.vis_f, &d_f, grads);
        if let Some(g) = ex.seq.context_pos.and_then(|p| d_over.get(&p)) {
            self.frontend.context_backward(&self.params, &ex.ctx, g, grads);
        }
        Ok((li, lt))
    }

    /// Batch-mean losses and gradients; gradients outside `trainable` are
    /// zero.
    pub fn loss_and_grads(
        &self,
        batch: &[&ReasoningRecord],
        target: TargetKind,
        weights: LossWeights,
        trainable: &[Group],
    ) -> Result<LossReport> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let mut grads = self.params.zeros_like();
        let scale = 1.0 / batch.len() as f64;
        let (mut li, mut lt) = (0.0, 0.0);
        for rec in batch {
            let ex = self.prepare(rec, target)?;
            let (a, b) = self.example_loss(&ex, weights, scale, Some(&mut grads))?;
            li += a * scale;
            lt += b * scale;
        }
        grads.retain_groups(trainable);
        Ok(LossReport { l_image: li, l_text: lt, l_total: total_loss(li, lt, weights), grads })
    }

    /// Greedy decoding after the forced future-image span, which is filled
    /// with the model's own latent predictions.
    pub fn generate(&self, input: &TokenSequence, max_new: usize) -> Result<Generation> {
        let store = &self.params;
        let tf = &self.transformer;
        let prefix = generation_prefix(input, &self.layout)?;
        let mut cache = tf.new_cache();
        let mut hidden = Vec::new();
        let mut latents = Vec::new();
        for p in 0..input.len() {
            let x: Vec<f64> = match input.overrides.get(&p) {
                Some(v) => v.clone(),
                None if input.context_pos == Some(p) || input.is_image_position(p) => {
                    return Err(Error::MissingOverride(p))
                }
                None => tf.token_embedding(store, input.ids[p]).to_vec(),
            };
            hidden = tf.step(store, &mut cache, &x)?;
        }
        let mut ids = Vec::new();
        for p in input.len()..prefix.len() {
            let id = prefix.ids[p];
            let x = if prefix.is_image_position(p) {
                let lat = tf.latent(store, &hidden);
                latents.push(lat.clone());
                lat
            } else {
                tf.token_embedding(store, id).to_vec()
            };
            hidden = tf.step(store, &mut cache, &x)?;
            ids.push(id);
        }
        debug_assert_eq!(ids.first(), Some(&BOS));
        debug_assert_eq!(ids.get(1), Some(&BOI));
        debug_assert_eq!(ids.last(), Some(&EOI));
        let mut truncated = true;
        for _ in 0..max_new {
            let logits = tf.logits(store, &hidden);
            let next = argmax(&logits) as TokenId;
            ids.push(next);
            if next == EOS {
                truncated = false;
                break;
            }
            if cache.len >= tf.cfg.max_len {
                break;
            }
            hidden = tf.step(store, &mut cache, tf.token_embedding(store, next))?;
        }
        Ok(Generation { ids, latents, truncated })
    }

    /// Input sequence for a live ego context and camera frames.
    pub fn live_input(&self, context: &EgoContext, frames: &[PseudoFrame]) -> Result<TokenSequence> {
        let (pt, _) = self.frontend.encode_frames(&self.params, frames)?;
        let ce = self.frontend.encode_context(&self.params, context.speed, context.accel, context.command)?;
        assemble_input_from(context, &pt, &ce, &self.layout, &self.vocab)
    }

    pub fn trainable_len(&self, groups: &[Group]) -> usize {
        groups.iter().map(|&g| self.params.group_len(g)).sum()
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
