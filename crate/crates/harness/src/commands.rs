//! One function per CLI subcommand. Each reads its inputs from the output
//! directory written by the previous stage.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use reach_core::io;
use reach_core::planner::{self, PlanResult};

use crate::config::ExperimentConfig;
use crate::error::{AtStage, Stage, StageError, StageResult};
use crate::pipeline::{self, BUNDLED_MAP_FILE, DATASET_FILE, MAP_FILE, MODEL_FILE};
use crate::report;
use crate::sweep::{self, SweepContext, SweepKind};

pub const PLAN_FILE: &str = "plan.json";

pub fn babble(cfg: &ExperimentConfig, out: &Path) -> StageResult<()> {
    let mut hashes = pipeline::load_manifest(out, Stage::Babble)?;
    let ds = pipeline::babble(cfg)?;
    info!("{} training and {} test reaches", ds.train.len(), ds.test_goals.len());
    pipeline::persist(out, DATASET_FILE, io::DATASET, &ds, Stage::Babble, &mut hashes)
}

pub fn train(cfg: &ExperimentConfig, out: &Path) -> StageResult<()> {
    let mut hashes = pipeline::load_manifest(out, Stage::Train)?;
    let ds = pipeline::load_dataset(out, Stage::Train)?;
    let model = pipeline::train(cfg, &ds, cfg.codec.bottleneck[0])?;
    info!(
        "trained for {} epochs, train RMSE {:.4e}",
        model.report.epochs_run, model.report.train_rmse
    );
    pipeline::persist(out, MODEL_FILE, io::MODEL, &model, Stage::Train, &mut hashes)
}

pub fn build_map(cfg: &ExperimentConfig, out: &Path) -> StageResult<()> {
    let mut hashes = pipeline::load_manifest(out, Stage::BuildMap)?;
    let ds = pipeline::load_dataset(out, Stage::BuildMap)?;
    let model = pipeline::load_model(out, Stage::BuildMap)?;
    let reduced = pipeline::reduce(&model.model, &ds, Stage::BuildMap)?;
    let map = pipeline::build_map(&reduced, cfg.map.res_multiplier[0])?;
    info!("{} neurons", map.len());
    pipeline::persist(out, MAP_FILE, io::MAP, &map, Stage::BuildMap, &mut hashes)
}

pub fn bundle(cfg: &ExperimentConfig, out: &Path) -> StageResult<()> {
    let mut hashes = pipeline::load_manifest(out, Stage::Bundle)?;
    let ds = pipeline::load_dataset(out, Stage::Bundle)?;
    let model = pipeline::load_model(out, Stage::Bundle)?;
    let map = pipeline::load_map(out, MAP_FILE, Stage::Bundle)?;
    let reduced = pipeline::reduce(&model.model, &ds, Stage::Bundle)?;
    let (bundled, stats) = pipeline::bundle(&map, &reduced, &cfg.bundles[0])?;
    info!("{} updates, {} connections", stats.updates, stats.entries);
    pipeline::persist(out, BUNDLED_MAP_FILE, io::MAP, &bundled, Stage::Bundle, &mut hashes)
}

/// Where the plan goal comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GoalSource {
    Point([f64; 3]),
    /// Index into the dataset's test goals.
    Trial(usize),
}

/// Plans one reach on the bundled map, writes `plan.json` and optionally a
/// per-step trace CSV.
pub fn plan(cfg: &ExperimentConfig, out: &Path, goal: GoalSource, trace: Option<&Path>) -> StageResult<PlanResult<f64>> {
    let ds = pipeline::load_dataset(out, Stage::Plan)?;
    let model = pipeline::load_model(out, Stage::Plan)?;
    let map = pipeline::load_map(out, BUNDLED_MAP_FILE, Stage::Plan)?;
    let (start, target) = match goal {
        GoalSource::Point(p) => (ds.protocol.starts[0].clone(), p),
        GoalSource::Trial(i) => {
            let tg = ds.test_goals.get(i).ok_or_else(|| {
                StageError::msg(Stage::Plan, format!("trial {i} out of range ({} test goals)", ds.test_goals.len()))
            })?;
            (tg.start.clone(), tg.goal)
        }
    };
    let arm = cfg.arm_config();
    let result =
        planner::plan(&map, &start, target, &cfg.planner_config(), &model.model, &arm).at(Stage::Plan)?;
    let text = io::to_string(io::PLAN, &result).at(Stage::Plan)?;
    std::fs::write(out.join(PLAN_FILE), text).at(Stage::Plan)?;
    if let Some(path) = trace {
        write_trace(path, &result)?;
    }
    Ok(result)
}

pub fn write_trace(path: &Path, result: &PlanResult<f64>) -> StageResult<()> {
    let mut f = File::create(path).at(Stage::Plan)?;
    writeln!(f, "step,winner,chi_max,beta_goal").at(Stage::Plan)?;
    for t in &result.trace {
        let winner = t.winner.map(|w| w.to_string()).unwrap_or_default();
        writeln!(f, "{},{},{},{}", t.step, winner, t.chi_max, t.beta_goal).at(Stage::Plan)?;
    }
    Ok(())
}

/// Runs the requested sweeps and writes their CSV and SVG outputs.
pub fn sweep(cfg: &ExperimentConfig, out: &Path, kinds: &[SweepKind]) -> StageResult<Vec<PathBuf>> {
    let mut ctx = SweepContext::new(cfg.clone())?;
    let mut written = Vec::new();
    for &kind in kinds {
        let result = sweep::run_sweep(&mut ctx, kind)?;
        written.extend(sweep::write_outputs(&result, out)?);
    }
    Ok(written)
}

pub fn report(out: &Path) -> StageResult<PathBuf> {
    report::write_report(out)
}
