//! Losses, the Adam optimizer and the two-stage training loop.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::Range;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::ReasoningRecord;
use crate::error::{Error, Result};
use crate::model::{ArchConfig, LossWeights, ReasonPlan, TargetKind};
use crate::tensor::{Group, ParamStore};
use crate::tokenizer::{TokenId, Vocab};

/// Mean squared error over the rows of `front` only.
pub fn loss_image(
    predicted: &BTreeMap<usize, Vec<f64>>,
    targets: &BTreeMap<usize, Vec<f64>>,
    front: &[Range<usize>],
) -> Result<f64> {
    Ok(loss_image_grad(predicted, targets, front)?.0)
}

/// [`loss_image`] with its gradient with respect to each predicted row.
pub fn loss_image_grad(
    predicted: &BTreeMap<usize, Vec<f64>>,
    targets: &BTreeMap<usize, Vec<f64>>,
    front: &[Range<usize>],
) -> Result<(f64, BTreeMap<usize, Vec<f64>>)> {
    let rows: Vec<usize> = front.iter().flat_map(|r| r.clone()).collect();
    if rows.is_empty() {
        return Err(Error::Empty("front span"));
    }
    let mut pairs = Vec::with_capacity(rows.len());
    for p in &rows {
        let (Some(a), Some(b)) = (predicted.get(p), targets.get(p)) else {
            return Err(Error::ShapeMismatch(format!("no latent pair at position {p}")));
        };
        if a.len() != b.len() {
            return Err(Error::ShapeMismatch(format!("latent dims differ at position {p}")));
        }
        pairs.push((*p, a, b));
    }
    let n = (rows.len() * pairs[0].1.len()) as f64;
    let mut sum = 0.0;
    let mut grads = BTreeMap::new();
    for (p, a, b) in pairs {
        let mut g = Vec::with_capacity(a.len());
        for (x, y) in a.iter().zip(b) {
            let d = x - y;
            sum += d * d;
            g.push(2.0 * d / n);
        }
        grads.insert(p, g);
    }
    Ok((sum / n, grads))
}

/// Mean negative log-likelihood of `ids[p]` under `logits[p - 1]` over
/// positions with `mask[p]`.
pub fn loss_text(logits: &[f64], vocab: usize, ids: &[TokenId], mask: &[bool]) -> Result<f64> {
    Ok(loss_text_grad(logits, vocab, ids, mask)?.0)
}

/// [`loss_text`] with its gradient with respect to the logits.
pub fn loss_text_grad(logits: &[f64], vocab: usize, ids: &[TokenId], mask: &[bool]) -> Result<(f64, Vec<f64>)> {
    let l = ids.len();
    if mask.len() != l || logits.len() != l * vocab {
        return Err(Error::ShapeMismatch(format!(
            "{} ids, {} mask entries, {} logits for vocab {vocab}",
            l,
            mask.len(),
            logits.len()
        )));
    }
    let positions: Vec<usize> = (1..l).filter(|&p| mask[p]).collect();
    if positions.is_empty() {
        return Err(Error::Empty("text loss mask"));
    }
    let n = positions.len() as f64;
    let mut grad = vec![0.0; logits.len()];
    let mut sum = 0.0;
    for p in positions {
        let row = &logits[(p - 1) * vocab..p * vocab];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        let target = ids[p] as usize;
        if target >= vocab {
            return Err(Error::ShapeMismatch(format!("target id {target} outside vocabulary")));
        }
        sum += m + z.ln() - row[target];
        let g = &mut grad[(p - 1) * vocab..p * vocab];
        for (gj, v) in g.iter_mut().zip(row) {
            *gj = (v - m).exp() / z / n;
        }
        g[target] -= 1.0 / n;
    }
    Ok((sum / n, grad))
}

pub fn total_loss(l_image: f64, l_text: f64, w: LossWeights) -> f64 {
    w.image * l_image + w.text * l_text
}

/// Parameter groups updated in each stage.
pub fn trainable_set(stage: u8) -> &'static [Group] {
    const ALIGN: [Group; 2] = [Group::Projection, Group::ContextEncoder];
    if stage == 1 {
        &ALIGN
    } else {
        &Group::ALL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub lambda_image: f64,
    pub lambda_text: f64,
    pub lr: f64,
    /// When set, the rate follows a cosine from `lr` down to this value.
    pub lr_final: Option<f64>,
    pub batch_size: usize,
    pub stage: u8,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    /// Overrides the epoch count with a fixed number of optimizer steps.
    pub max_steps: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lambda_image: 1.0,
            lambda_text: 1.0,
            lr: 5e-5,
            lr_final: None,
            batch_size: 4,
            stage: 2,
            stage1_epochs: 1,
            stage2_epochs: 3,
            max_steps: None,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_image >= 0.0 && self.lambda_text >= 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if let Some(f) = self.lr_final {
            if !(f > 0.0 && f <= self.lr) {
                return Err(Error::Config("final learning rate must lie in (0, lr]".into()));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.stage != 1 && self.stage != 2 {
            return Err(Error::Config(format!("stage must be 1 or 2, got {}", self.stage)));
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights { image: self.lambda_image, text: self.lambda_text }
    }

    pub fn target(&self) -> TargetKind {
        if self.stage == 1 {
            TargetKind::Perception
        } else {
            TargetKind::Full
        }
    }

    /// Learning rate at `step` of `total`.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        match self.lr_final {
            None => self.lr,
            Some(f) => {
                let x = if total <= 1 { 0.0 } else { step as f64 / (total - 1) as f64 };
                f + 0.5 * (self.lr - f) * (1.0 + (std::f64::consts::PI * x).cos())
            }
        }
    }

    pub fn epochs(&self) -> usize {
        if self.stage == 1 {
            self.stage1_epochs
        } else {
            self.stage2_epochs
        }
    }
}

/// Adam with bias correction, updating only the given flat ranges.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(len: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0, beta1, beta2, eps }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &ParamStore, lr: f64, groups: &[Group]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for &g in groups {
            for r in params.group_ranges(g) {
                for i in r {
                    let gr = grads.data[i];
                    self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * gr;
                    self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * gr * gr;
                    let mh = self.m[i] / c1;
                    let vh = self.v[i] / c2;
                    params.data[i] -= lr * mh / (vh.sqrt() + self.eps);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub stage: u8,
    pub l_image: f64,
    pub l_text: f64,
    pub l_total: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub steps: usize,
    pub logs: Vec<StepLog>,
    /// Set when a non-finite loss stopped training; the model then holds
    /// the last good parameters.
    pub aborted: Option<String>,
}

/// Starting point of a stage: stage 2 inherits stage-1 weights unless
/// explicitly cold-started.
pub fn initial_model(
    stage: u8,
    previous: Option<ReasonPlan>,
    cold_start: bool,
    arch: &ArchConfig,
    seed: u64,
) -> Result<ReasonPlan> {
    match (stage, previous) {
        (_, Some(m)) => Ok(m),
        (2, None) if !cold_start => {
            Err(Error::Refused("stage 2 needs a stage-1 checkpoint or an explicit cold start".into()))
        }
        _ => ReasonPlan::new(arch.clone(), Vocab::standard(), seed),
    }
}

/// Runs one stage over `dataset`, updating only that stage's groups.
pub fn train(
    model: &mut ReasonPlan,
    dataset: &[ReasoningRecord],
    cfg: &TrainingConfig,
    mut on_step: impl FnMut(&StepLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let groups = trainable_set(cfg.stage);
    let per_epoch = dataset.len().div_ceil(cfg.batch_size);
    let total = cfg.max_steps.unwrap_or(per_epoch * cfg.epochs());
    let mut adam = Adam::new(model.params.len(), cfg.beta1, cfg.beta2, cfg.eps);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (cfg.stage as u64) << 32);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut logs = Vec::new();
    let start = Instant::now();
    for step in 0..total {
        if cursor >= order.len() {
            order = (0..dataset.len()).collect();
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + cfg.batch_size).min(order.len());
        let batch: Vec<&ReasoningRecord> = order[cursor..end].iter().map(|&i| &dataset[i]).collect();
        cursor = end;
        let report = match model.loss_and_grads(&batch, cfg.target(), cfg.weights(), groups) {
            Ok(r) => r,
            Err(e @ Error::Numeric { .. }) => return Ok(TrainOutcome { steps: step, logs, aborted: Some(e.to_string()) }),
            Err(e) => return Err(e),
        };
        adam.step(&mut model.params, &report.grads, cfg.lr_at(step, total), groups);
        let log = StepLog {
            step,
            stage: cfg.stage,
            l_image: report.l_image,
            l_text: report.l_text,
            l_total: report.l_total,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        on_step(&log);
        logs.push(log);
    }
    Ok(TrainOutcome { steps: total, logs, aborted: None })
}

/// Mean losses over a dataset without updating anything.
pub fn evaluate_losses(model: &ReasonPlan, dataset: &[ReasoningRecord], target: TargetKind) -> Result<(f64, f64)> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let (mut li, mut lt) = (0.0, 0.0);
    for rec in dataset {
        let ex = model.prepare(rec, target)?;
        let (a, b) = model.example_loss(&ex, LossWeights::default(), 1.0, None)?;
        li += a;
        lt += b;
    }
    let n = dataset.len() as f64;
    Ok((li / n, lt / n))
}

/// Largest relative gap between analytic and central-difference gradients
/// for one parameter group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub group: Group,
    pub entries: usize,
    pub max_rel_error: f64,
}

/// Compares the analytic gradient of the weighted loss on `rec` with
/// central differences of step `eps`, probing about `per_tensor` entries of
/// every tensor. The next-scene targets are held fixed, as training treats
/// them as constants.
pub fn gradient_check(
    model: &mut ReasonPlan,
    rec: &ReasoningRecord,
    weights: LossWeights,
    eps: f64,
    per_tensor: usize,
) -> Result<Vec<GradientCheck>> {
    let report = model.loss_and_grads(&[rec], TargetKind::Full, weights, &Group::ALL)?;
    let targets = model.prepare(rec, TargetKind::Full)?.seq.target_latents;
    let loss_at = |m: &ReasonPlan| -> Result<f64> {
        let mut ex = m.prepare(rec, TargetKind::Full)?;
        ex.seq.target_latents = targets.clone();
        let (li, lt) = m.example_loss(&ex, weights, 1.0, None)?;
        Ok(total_loss(li, lt, weights))
    };
    let mut out: Vec<GradientCheck> =
        Group::ALL.iter().map(|&group| GradientCheck { group, entries: 0, max_rel_error: 0.0 }).collect();
    for s in model.params.specs().to_vec() {
        let stride = (s.len / per_tensor.max(1)).max(1);
        for k in (0..s.len).step_by(stride) {
            let i = s.offset + k;
            let orig = model.params.data[i];
            model.params.data[i] = orig + eps;
            let up = loss_at(model)?;
            model.params.data[i] = orig - eps;
            let down = loss_at(model)?;
            model.params.data[i] = orig;
            let num = (up - down) / (2.0 * eps);
            let ana = report.grads.data[i];
            let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-6);
            let slot = out.iter_mut().find(|c| c.group == s.group).expect("known group");
            slot.max_rel_error = slot.max_rel_error.max(rel);
            slot.entries += 1;
        }
    }
    Ok(out)
}

pub fn write_metrics<W: Write>(mut w: W, logs: &[StepLog]) -> Result<()> {
    for l in logs {
        serde_json::to_writer(&mut w, l)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_loss_examples() {
        let mut p = BTreeMap::new();
        let mut t = BTreeMap::new();
        for pos in 0..4 {
            p.insert(pos, vec![0.0; 3]);
            t.insert(pos, vec![1.0; 3]);
        }
        assert_eq!(loss_image(&p, &t, &[0..2]).unwrap(), 1.0);
        assert_eq!(loss_image(&p, &p, &[0..4]).unwrap(), 0.0);
        assert!(matches!(loss_image(&p, &t, &[]), Err(Error::Empty(_))));
    }

    #[test]
    fn text_loss_examples() {
        let v = 7;
        let ids = [0, 3, 5];
        let mask = [false, true, true];
        let uniform = vec![0.25; 3 * v];
        assert!((loss_text(&uniform, v, &ids, &mask).unwrap() - (v as f64).ln()).abs() < 1e-12);
        let mut sharp = vec![0.0; 3 * v];
        sharp[3] = 100.0;
        sharp[v + 5] = 100.0;
        assert!(loss_text(&sharp, v, &ids, &mask).unwrap() < 1e-9);
        assert!(matches!(loss_text(&uniform, v, &ids, &[false; 3]), Err(Error::Empty(_))));
    }

    #[test]
    fn total_loss_examples() {
        assert_eq!(total_loss(2.0, 3.0, LossWeights { image: 1.0, text: 1.0 }), 5.0);
        assert_eq!(total_loss(2.0, 3.0, LossWeights { image: 0.0, text: 1.0 }), 3.0);
        assert_eq!(total_loss(2.0, 3.0, LossWeights { image: 0.5, text: 1.0 }), 4.0);
    }

    #[test]
    fn stage_sets_nest() {
        for g in trainable_set(1) {
            assert!(trainable_set(2).contains(g));
        }
        assert!(trainable_set(1).len() < trainable_set(2).len());
    }

    #[test]
    fn stage_two_without_checkpoint_is_refused() {
        let arch = ArchConfig::default();
        assert!(matches!(initial_model(2, None, false, &arch, 0), Err(Error::Refused(_))));
        assert!(initial_model(2, None, true, &arch, 0).is_ok());
    }
}
