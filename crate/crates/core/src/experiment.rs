//! End-to-end runs shared by the CLI and the acceptance suite:
//! overfit-then-drive and the ablation grid.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::annotation::{generate_dataset, records_hash, AnnotationConfig, ReasoningRecord, Stage};
use crate::closed_loop::{
    evaluate_open_loop, run_episode, ClosedLoopConfig, EpisodeResult, ModelPlanner, OpenLoopReport, PlanFollower,
};
use crate::config::{hex, AblationConfig, ExperimentConfig};
use crate::error::{Error, Result};
use crate::model::{checkpoint_hash, ReasonPlan, TargetKind};
use crate::scene::scenario::{make_scenario, ScenarioKind};
use crate::tokenizer::Vocab;
use crate::training::{evaluate_losses, train, StepLog};

/// `count` records spread evenly over one expert rollout.
pub fn experiment_dataset(exp: &ExperimentConfig, annotation: &AnnotationConfig) -> Result<Vec<ReasoningRecord>> {
    let kind: ScenarioKind = exp.scenario.parse()?;
    let cfg = AnnotationConfig { stride: exp.stride, ..annotation.clone() };
    let (all, _) = generate_dataset(&[make_scenario(kind, exp.scenario_seed)], &exp.stages, &cfg, None)?;
    if all.len() < exp.records {
        return Err(Error::Config(format!(
            "{} yields {} records at stride {}, fewer than the {} requested",
            exp.scenario,
            all.len(),
            exp.stride,
            exp.records
        )));
    }
    let n = all.len();
    Ok((0..exp.records).map(|i| all[i * n / exp.records].clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub dataset_hash: String,
    pub checkpoint_hash: String,
    /// Mean losses over the training set after stage 2.
    pub l_image: f64,
    pub l_text: f64,
    pub open_loop: OpenLoopReport,
    pub episode: EpisodeResult,
    pub stage1_logs: Vec<StepLog>,
    pub stage2_logs: Vec<StepLog>,
    pub wall_s: f64,
}

/// Trains stage 1 then stage 2 from `seed`, then drives the scenario.
pub fn overfit_then_drive(
    exp: &ExperimentConfig,
    annotation: &AnnotationConfig,
    closed_loop: &ClosedLoopConfig,
    seed: u64,
    mut on_step: impl FnMut(&StepLog),
) -> Result<(ReasonPlan, ExperimentOutcome)> {
    let start = Instant::now();
    let records = experiment_dataset(exp, annotation)?;
    let mut model = ReasonPlan::new(exp.arch.clone(), Vocab::standard(), seed)?;
    let s1 = crate::training::TrainingConfig { stage: 1, seed, ..exp.stage1.clone() };
    let o1 = train(&mut model, &records, &s1, &mut on_step)?;
    let s2 = crate::training::TrainingConfig { stage: 2, seed, ..exp.stage2.clone() };
    let o2 = train(&mut model, &records, &s2, &mut on_step)?;
    if let Some(why) = o1.aborted.or(o2.aborted) {
        return Err(Error::Refused(format!("training aborted: {why}")));
    }
    let (l_image, l_text) = evaluate_losses(&model, &records, TargetKind::Full)?;
    let open_loop = evaluate_open_loop(&model, &records, closed_loop)?;
    let kind: ScenarioKind = exp.scenario.parse()?;
    let planner = ModelPlanner { model: &model, camera: annotation.camera, max_new_tokens: closed_loop.max_new_tokens };
    let mut policy = PlanFollower::new(planner, closed_loop);
    let episode = run_episode(&make_scenario(kind, exp.scenario_seed), &mut policy, closed_loop)?;
    let outcome = ExperimentOutcome {
        dataset_hash: hex(records_hash(&records)?),
        checkpoint_hash: hex(checkpoint_hash(&model)),
        l_image,
        l_text,
        open_loop,
        episode,
        stage1_logs: o1.logs,
        stage2_logs: o2.logs,
        wall_s: start.elapsed().as_secs_f64(),
    };
    Ok((model, outcome))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub grid: String,
    pub lambda_image: f64,
    pub stages: Vec<Stage>,
    pub l_image: f64,
    pub l_text: f64,
    pub l2: f64,
    pub ds: f64,
    pub rc: f64,
    pub is: f64,
    pub success: bool,
    /// Replans that fell back to braking.
    pub planner_faults: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalCheck {
    pub nsp_on_ds: f64,
    pub nsp_off_ds: f64,
    pub noise_bound: f64,
    /// NSP-off DS does not exceed NSP-on DS by more than the bound.
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    /// Sorted by DS, best first.
    pub rows: Vec<AblationRow>,
    pub directional: DirectionalCheck,
}

impl AblationReport {
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| run | grid | lambda_image | stages | L_image | L_text | L2 | DS | RC | IS | faults |\n");
        s.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
        for r in &self.rows {
            let stages: Vec<&str> = r.stages.iter().map(|s| s.code()).collect();
            s.push_str(&format!(
                "| {} | {} | {} | {} | {:.4} | {:.4} | {:.3} | {:.2} | {:.3} | {:.3} | {} |\n",
                r.name,
                r.grid,
                r.lambda_image,
                if stages.is_empty() { "none".to_string() } else { stages.join(",") },
                r.l_image,
                r.l_text,
                r.l2,
                r.ds,
                r.rc,
                r.is,
                r.planner_faults
            ));
        }
        let d = &self.directional;
        s.push_str(&format!(
            "\nNSP off DS {:.2} vs NSP on DS {:.2}, noise bound {:.1}: {}\n",
            d.nsp_off_ds,
            d.nsp_on_ds,
            d.noise_bound,
            if d.holds { "within bound" } else { "exceeds bound" }
        ));
        s
    }
}

struct Variant {
    name: String,
    grid: &'static str,
    lambda: f64,
    stages: Vec<Stage>,
}

/// Image-loss weight grid with full reasoning, then NSP on/off crossed
/// with reasoning on/off. Shared cells run once.
pub fn ablate(
    base: &ExperimentConfig,
    grid: &AblationConfig,
    annotation: &AnnotationConfig,
    closed_loop: &ClosedLoopConfig,
    seed: u64,
    mut on_run: impl FnMut(&AblationRow),
) -> Result<AblationReport> {
    let on = base.stage2.lambda_image.max(f64::MIN_POSITIVE);
    let mut variants: Vec<Variant> = grid
        .lambda_image
        .iter()
        .map(|&l| Variant { name: format!("lambda_{l}"), grid: "lambda", lambda: l, stages: base.stages.clone() })
        .collect();
    for (nsp, cot) in [(true, true), (true, false), (false, true), (false, false)] {
        let lambda = if nsp { on } else { 0.0 };
        let stages = if cot { base.stages.clone() } else { Vec::new() };
        if variants.iter().any(|v| v.lambda == lambda && v.stages == stages) {
            continue;
        }
        let name = format!("nsp_{}_cot_{}", if nsp { "on" } else { "off" }, if cot { "on" } else { "off" });
        variants.push(Variant { name, grid: "nsp_cot", lambda, stages });
    }
    let mut rows = Vec::new();
    for v in &variants {
        let mut exp = base.clone();
        exp.stages = v.stages.clone();
        exp.stage1.lambda_image = v.lambda;
        exp.stage2.lambda_image = v.lambda;
        let (_, out) = overfit_then_drive(&exp, annotation, closed_loop, seed, |_| {})?;
        let row = AblationRow {
            name: v.name.clone(),
            grid: v.grid.to_string(),
            lambda_image: v.lambda,
            stages: v.stages.clone(),
            l_image: out.l_image,
            l_text: out.l_text,
            l2: out.open_loop.l2,
            ds: out.episode.ds,
            rc: out.episode.rc,
            is: out.episode.is,
            success: out.episode.success,
            planner_faults: out.episode.planner_faults.len(),
        };
        on_run(&row);
        rows.push(row);
    }
    let find = |lambda: f64| rows.iter().find(|r| r.lambda_image == lambda && r.stages == base.stages).map(|r| r.ds);
    let nsp_on_ds = find(on).ok_or(Error::Empty("NSP-on run"))?;
    let nsp_off_ds = find(0.0).ok_or(Error::Empty("NSP-off run"))?;
    let directional =
        DirectionalCheck { nsp_on_ds, nsp_off_ds, noise_bound: grid.noise_bound, holds: nsp_off_ds <= nsp_on_ds + grid.noise_bound };
    rows.sort_by(|a, b| b.ds.total_cmp(&a.ds).then_with(|| a.name.cmp(&b.name)));
    Ok(AblationReport { rows, directional })
}
