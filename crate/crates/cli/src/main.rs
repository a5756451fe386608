use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use reasonplan_core::annotation::{dataset_hash, generate_dataset, read_dataset, Stage};
use reasonplan_core::closed_loop::{
    evaluate_open_loop, run_episode, write_episode_report, EpisodeResult, ExpertPolicy, ModelPlanner, PlanFollower, Policy, Summary,
};
use reasonplan_core::config::{hex, suite, Config, RunManifest};
use reasonplan_core::experiment::ablate;
use reasonplan_core::scene::ScenarioSpec;
use reasonplan_core::model::{checkpoint_hash, load_checkpoint, save_checkpoint};
use reasonplan_core::training::{initial_model, train, write_metrics, StepLog, TrainingConfig};
use reasonplan_core::Error;

#[derive(Parser)]
#[command(name = "reasonplan", version, about = "Reasoning planner: data, training and evaluation")]
struct Cli {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out the expert, annotate and write a dataset.
    GenData {
        #[arg(long)]
        out: PathBuf,
        /// Reasoning blocks to keep, e.g. `SU,TS`.
        #[arg(long)]
        stages: Option<String>,
        /// Comma-separated scenario names.
        #[arg(long)]
        scenarios: Option<String>,
        /// Comma-separated scenario seeds.
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Train one stage.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        stage: u8,
        /// Checkpoint to start from; stage 2 needs one unless cold-started.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        cold_start: bool,
        #[arg(long)]
        out: PathBuf,
        /// Per-step losses as JSON lines.
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Open-loop L2 of a checkpoint on a dataset.
    EvalOpen {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-loop episodes over a suite.
    EvalClosed {
        /// `dev`, `full` or a comma-separated scenario list.
        #[arg(long, default_value = "dev")]
        suite: String,
        #[arg(long, conflicts_with = "expert")]
        checkpoint: Option<PathBuf>,
        /// Drive with the scripted expert instead of a checkpoint.
        #[arg(long)]
        expert: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Comparison table over closed-loop reports, plus merged loss curves.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
        #[arg(long, num_args = 1..)]
        metrics: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Image-loss weight grid and NSP by reasoning grid, end to end.
    Ablate {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if matches!(e.downcast_ref::<Error>(), Some(Error::Refused(_))) {
                ExitCode::from(3)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = Config::load(cli.config.as_deref())?;
    let start = Instant::now();
    match cli.command {
        Command::GenData { out, stages, scenarios, seeds } => {
            let mut cfg = cfg;
            if let Some(s) = stages {
                cfg.data.stages = Stage::parse_list(&s)?;
            }
            if let Some(s) = scenarios {
                cfg.data.scenarios = s.split(',').map(|x| x.trim().to_string()).collect();
            }
            if let Some(s) = seeds {
                cfg.data.seeds = s.split(',').map(|x| x.trim().parse()).collect::<Result<_, _>>().context("bad --seeds")?;
            }
            cfg.validate()?;
            let specs = cfg.data.specs()?;
            let (_, stats) = generate_dataset(&specs, &cfg.data.stages, &cfg.annotation, Some(&out))?;
            println!("records      {}", stats.count);
            println!("mean words   {:.1}", stats.mean_words);
            println!("vocabulary   {}", stats.vocabulary.len());
            for (name, n) in &stats.per_scenario {
                println!("  {name:<24} {n}");
            }
            for (lo, n) in &stats.length_histogram {
                println!("  words {lo:>4}+ {n}");
            }
            let mut m = RunManifest::new("gen-data", &cfg, start.elapsed());
            m.dataset_hash = Some(hex(dataset_hash(&out)?));
            m.write_beside(&out)?;
        }
        Command::Train { data, stage, init, cold_start, out, metrics, max_steps } => {
            let records = read_dataset(&data).with_context(|| format!("reading {}", data.display()))?;
            let previous = match init {
                Some(p) => Some(load_checkpoint(&p).with_context(|| format!("reading {}", p.display()))?.0),
                None => None,
            };
            let mut model = initial_model(stage, previous, cold_start, &cfg.arch, cfg.seed)?;
            let tcfg = TrainingConfig { stage, seed: cfg.seed, max_steps: max_steps.or(cfg.training.max_steps), ..cfg.training.clone() };
            let outcome = train(&mut model, &records, &tcfg, |l: &StepLog| {
                if l.step.is_multiple_of(50) {
                    println!("step {:>5}  L_image {:.5}  L_text {:.5}", l.step, l.l_image, l.l_text);
                }
            })?;
            if let Some(why) = &outcome.aborted {
                eprintln!("training stopped early: {why}");
            }
            let meta = serde_json::json!({ "stage": stage, "steps": outcome.steps, "config_hash": hex(cfg.hash()) });
            save_checkpoint(&out, &model, &meta)?;
            if let Some(p) = metrics {
                write_metrics(BufWriter::new(File::create(&p)?), &outcome.logs)?;
            }
            let mut m = RunManifest::new("train", &cfg, start.elapsed());
            m.dataset_hash = Some(hex(dataset_hash(&data)?));
            m.checkpoint_hash = Some(hex(checkpoint_hash(&model)));
            m.write_beside(&out)?;
            println!("saved {} after {} steps", out.display(), outcome.steps);
        }
        Command::EvalOpen { data, checkpoint, out } => {
            let records = read_dataset(&data)?;
            let (model, _) = load_checkpoint(&checkpoint)?;
            let report = evaluate_open_loop(&model, &records, &cfg.closed_loop)?;
            println!("records {}  L2 {:.4} m  parse failures {}", report.records, report.l2, report.parse_failures);
            if let Some(p) = out {
                std::fs::write(&p, serde_json::to_string_pretty(&report)?)?;
                let mut m = RunManifest::new("eval-open", &cfg, start.elapsed());
                m.dataset_hash = Some(hex(dataset_hash(&data)?));
                m.checkpoint_hash = Some(hex(checkpoint_hash(&model)));
                m.write_beside(&p)?;
            }
        }
        Command::EvalClosed { suite: name, checkpoint, expert, out } => {
            let specs = suite(&name, &cfg.eval)?;
            let model = match (&checkpoint, expert) {
                (Some(p), false) => Some(load_checkpoint(p)?.0),
                (None, true) => None,
                _ => bail!("pass exactly one of --checkpoint or --expert"),
            };
            let drive = |spec: &ScenarioSpec| -> reasonplan_core::Result<EpisodeResult> {
                match &model {
                    Some(m) => {
                        let planner =
                            ModelPlanner { model: m, camera: cfg.annotation.camera, max_new_tokens: cfg.closed_loop.max_new_tokens };
                        let mut policy = PlanFollower::new(planner, &cfg.closed_loop);
                        run_episode(spec, &mut policy as &mut dyn Policy, &cfg.closed_loop)
                    }
                    None => run_episode(spec, &mut ExpertPolicy, &cfg.closed_loop),
                }
            };
            // episodes are independent; workers take contiguous chunks and the
            // report is written once, in suite order
            let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(specs.len()).max(1);
            let chunk = specs.len().div_ceil(workers);
            let results: Vec<EpisodeResult> = std::thread::scope(|scope| {
                let handles: Vec<_> = specs
                    .chunks(chunk)
                    .map(|part| scope.spawn(|| part.iter().map(drive).collect::<reasonplan_core::Result<Vec<_>>>()))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("episode worker panicked")).collect::<reasonplan_core::Result<Vec<_>>>()
            })?
            .into_iter()
            .flatten()
            .collect();
            for r in &results {
                println!("{:<24} seed {:>3}  DS {:>6.2}  RC {:.3}  IS {:.3}", r.scenario, r.seed, r.ds, r.rc, r.is);
            }
            let s = write_episode_report(&out, &results, &cfg.closed_loop)?;
            print_summary(&s);
            let mut m = RunManifest::new("eval-closed", &cfg, start.elapsed());
            m.checkpoint_hash = model.as_ref().map(|m| hex(checkpoint_hash(m)));
            m.write_beside(&out)?;
        }
        Command::Report { runs, metrics, out } => {
            let mut rows = Vec::new();
            for p in &runs {
                rows.push((p.display().to_string(), read_summary(p)?));
            }
            rows.sort_by(|a, b| b.1.ds.total_cmp(&a.1.ds).then_with(|| a.0.cmp(&b.0)));
            let mut table = String::from("| run | DS | RC | IS | SR | Effi | Comf | episodes |\n|---|---|---|---|---|---|---|---|\n");
            for (name, s) in &rows {
                table.push_str(&format!(
                    "| {name} | {:.2} | {:.3} | {:.3} | {:.1} | {:.1} | {:.1} | {} |\n",
                    s.ds, s.rc, s.is, s.success_rate, s.efficiency, s.comfort, s.episodes
                ));
            }
            std::fs::write(&out, &table)?;
            print!("{table}");
            if !metrics.is_empty() {
                let curves = out.with_extension("curves.csv");
                write_curves(&curves, &metrics)?;
                println!("loss curves: {}", curves.display());
            }
            RunManifest::new("report", &cfg, start.elapsed()).write_beside(&out)?;
        }
        Command::Ablate { out } => {
            std::fs::create_dir_all(&out)?;
            let report = ablate(&cfg.experiment, &cfg.ablation, &cfg.annotation, &cfg.closed_loop, cfg.seed, |r| {
                println!("{:<20} DS {:>6.2}  L_text {:.4}  L2 {:.3}  faults {}", r.name, r.ds, r.l_text, r.l2, r.planner_faults);
            })?;
            let md = report.to_markdown();
            std::fs::write(out.join("ablation.md"), &md)?;
            let json = out.join("ablation.json");
            std::fs::write(&json, serde_json::to_string_pretty(&report)?)?;
            print!("{md}");
            RunManifest::new("ablate", &cfg, start.elapsed()).write_beside(&json)?;
        }
    }
    Ok(())
}

fn print_summary(s: &Summary) {
    println!(
        "episodes {}  DS {:.2}  RC {:.3}  IS {:.3}  SR {:.1}%  Effi {:.1}  Comf {:.1}",
        s.episodes, s.ds, s.rc, s.is, s.success_rate, s.efficiency, s.comfort
    );
}

/// Summary record at the end of a closed-loop report.
fn read_summary(path: &Path) -> anyhow::Result<Summary> {
    let f = BufReader::new(File::open(path).with_context(|| format!("reading {}", path.display()))?);
    for line in f.lines() {
        let v: serde_json::Value = serde_json::from_str(&line?)?;
        if v.get("type").and_then(|t| t.as_str()) == Some("summary") {
            return Ok(serde_json::from_value(v["summary"].clone())?);
        }
    }
    bail!("{} has no summary record", path.display())
}

fn write_curves(out: &Path, metrics: &[PathBuf]) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(out)?);
    writeln!(w, "run,stage,step,l_image,l_text,l_total")?;
    for p in metrics {
        let f = BufReader::new(File::open(p).with_context(|| format!("reading {}", p.display()))?);
        for line in f.lines() {
            let l: StepLog = serde_json::from_str(&line?)?;
            writeln!(w, "{},{},{},{},{},{}", p.display(), l.stage, l.step, l.l_image, l.l_text, l.l_total)?;
        }
    }
    w.flush()?;
    Ok(())
}
