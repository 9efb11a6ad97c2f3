//! Parameter sweeps: plan every test goal for each value of one parameter.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::info;
use reach_core::arm::ArmConfig;
use reach_core::babble::{Dataset, TestGoal};
use reach_core::bundles::{BundleConfig, BundleVariant};
use reach_core::codec::{self, Autoencoder, ReducedPoint};
use reach_core::metrics::{self, MetricReport};
use reach_core::neural_map::NeuralMap;
use reach_core::planner::{self, PlannerConfig};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{AtStage, Stage, StageError, StageResult};
use crate::pipeline::{self, ModelArtifact};
use crate::plot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Dim,
    TrainSize,
    Phi,
    Resolution,
    BundleVariant,
}

impl SweepKind {
    pub const ALL: [SweepKind; 5] = [
        SweepKind::Dim,
        SweepKind::TrainSize,
        SweepKind::Phi,
        SweepKind::Resolution,
        SweepKind::BundleVariant,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Dim => "dim",
            SweepKind::TrainSize => "train_size",
            SweepKind::Phi => "phi",
            SweepKind::Resolution => "resolution",
            SweepKind::BundleVariant => "bundle_variant",
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        SweepKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown sweep kind {s:?}"))
    }
}

/// One planned test goal. Column order is the CSV schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub sweep_kind: String,
    pub param_value: String,
    pub trial: usize,
    pub goal_x: f64,
    pub goal_y: f64,
    pub goal_z: f64,
    pub success: bool,
    /// NaN when planning raised an error.
    pub norm_jerk: f64,
    pub ee_error: f64,
    pub steps_used: usize,
    pub wall_ms: f64,
}

impl TrialRow {
    pub fn executed(&self) -> bool {
        self.norm_jerk.is_finite() && self.ee_error.is_finite()
    }

    pub fn report(&self) -> MetricReport<f64> {
        MetricReport {
            norm_jerk: self.norm_jerk,
            end_effector_error: self.ee_error,
            goal_y: self.goal_y,
        }
    }
}

/// Autoencoder accuracy for one training-set size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableOneRow {
    pub train_size: usize,
    pub train_rmse: f64,
    pub test_rmse: f64,
    pub explained_variance: f64,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub kind: SweepKind,
    /// Swept values in configuration order, as written to `param_value`.
    pub values: Vec<String>,
    pub rows: Vec<TrialRow>,
    pub table_one: Vec<TableOneRow>,
}

impl SweepResult {
    pub fn rows_for<'a>(&'a self, value: &'a str) -> impl Iterator<Item = &'a TrialRow> + 'a {
        self.rows.iter().filter(move |r| r.param_value == value)
    }
}

/// Shared state for sweeps over one configuration: the dataset, trained
/// models and reduced trajectories are computed once and reused.
pub struct SweepContext {
    pub cfg: ExperimentConfig,
    pub arm: ArmConfig<f64>,
    pub dataset: Dataset<f64>,
    models: HashMap<(usize, usize), ModelArtifact>,
    maps: HashMap<(usize, usize, u64), NeuralMap<f64>>,
}

impl SweepContext {
    pub fn new(cfg: ExperimentConfig) -> StageResult<Self> {
        cfg.validate()?;
        let dataset = pipeline::babble(&cfg)?;
        Ok(Self::with_dataset(cfg, dataset))
    }

    pub fn with_dataset(cfg: ExperimentConfig, dataset: Dataset<f64>) -> Self {
        Self {
            arm: cfg.arm_config(),
            cfg,
            dataset,
            models: HashMap::new(),
            maps: HashMap::new(),
        }
    }

    fn full_train_size(&self) -> usize {
        self.dataset.protocol.n_train_per_start
    }

    fn subset(&self, train_size: usize) -> StageResult<Dataset<f64>> {
        if train_size == self.full_train_size() {
            Ok(self.dataset.clone())
        } else {
            self.dataset.with_train_per_start(train_size).at(Stage::Sweep)
        }
    }

    /// Model for a bottleneck width trained on the first `train_size` reaches per start.
    pub fn model(&mut self, bottleneck: usize, train_size: usize) -> StageResult<&ModelArtifact> {
        if !self.models.contains_key(&(bottleneck, train_size)) {
            let data = self.subset(train_size)?;
            info!("training bottleneck {bottleneck} on {train_size} reaches per start");
            let m = pipeline::train(&self.cfg, &data, bottleneck)?;
            self.models.insert((bottleneck, train_size), m);
        }
        Ok(&self.models[&(bottleneck, train_size)])
    }

    fn reduced(&mut self, bottleneck: usize, train_size: usize) -> StageResult<Vec<Vec<ReducedPoint<f64>>>> {
        let data = self.subset(train_size)?;
        let model = self.model(bottleneck, train_size)?.model.clone();
        pipeline::reduce(&model, &data, Stage::Sweep)
    }

    /// Unbundled map for a model and resolution multiplier.
    pub fn map(&mut self, bottleneck: usize, train_size: usize, mult: f64) -> StageResult<NeuralMap<f64>> {
        let key = (bottleneck, train_size, mult.to_bits());
        if !self.maps.contains_key(&key) {
            let reduced = self.reduced(bottleneck, train_size)?;
            let map = pipeline::build_map(&reduced, mult)?;
            self.maps.insert(key, map);
        }
        Ok(self.maps[&key].clone())
    }

    /// Bundled map for one setting.
    pub fn bundled(&mut self, s: &Setting) -> StageResult<NeuralMap<f64>> {
        let map = self.map(s.bottleneck, s.train_size, s.res_multiplier)?;
        let reduced = self.reduced(s.bottleneck, s.train_size)?;
        Ok(pipeline::bundle(&map, &reduced, &s.bundles)?.0)
    }

    pub fn test_goals(&self) -> &[TestGoal<f64>] {
        let n = self
            .cfg
            .sweep
            .max_test_goals
            .unwrap_or(usize::MAX)
            .min(self.dataset.test_goals.len());
        &self.dataset.test_goals[..n]
    }

    /// Base setting of the configuration.
    pub fn base(&self) -> Setting {
        Setting {
            bottleneck: self.cfg.codec.bottleneck[0],
            train_size: self.full_train_size(),
            res_multiplier: self.cfg.map.res_multiplier[0],
            bundles: self.cfg.bundles[0].clone(),
        }
    }
}

/// Fully resolved parameters of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub bottleneck: usize,
    pub train_size: usize,
    pub res_multiplier: f64,
    pub bundles: BundleConfig<f64>,
}

fn apply_overrides<V>(mut s: Setting, spec: &crate::config::SweepSpec<V>) -> Setting {
    if let Some(phi) = spec.phi {
        s.bundles.phi = phi;
    }
    if let Some(b) = spec.bottleneck {
        s.bottleneck = b;
    }
    if let Some(m) = spec.res_multiplier {
        s.res_multiplier = m;
    }
    s
}

/// Settings visited by a sweep, labelled by their `param_value`.
pub fn sweep_settings(ctx: &SweepContext, kind: SweepKind) -> Vec<(String, Setting)> {
    let sw = &ctx.cfg.sweep;
    let base = ctx.base();
    match kind {
        SweepKind::Dim => {
            let b = apply_overrides(base, &sw.dim);
            sw.dim
                .values
                .iter()
                .map(|&v| (v.to_string(), Setting { bottleneck: v, ..b.clone() }))
                .collect()
        }
        SweepKind::TrainSize => {
            let b = apply_overrides(base, &sw.train_size);
            sw.train_size
                .values
                .iter()
                .map(|&v| (v.to_string(), Setting { train_size: v, ..b.clone() }))
                .collect()
        }
        SweepKind::Phi => {
            let b = apply_overrides(base, &sw.phi);
            sw.phi
                .values
                .iter()
                .map(|&v| {
                    let mut s = b.clone();
                    s.bundles.phi = v;
                    (v.to_string(), s)
                })
                .collect()
        }
        SweepKind::Resolution => {
            let b = apply_overrides(base, &sw.resolution);
            sw.resolution
                .values
                .iter()
                .map(|&v| (v.to_string(), Setting { res_multiplier: v, ..b.clone() }))
                .collect()
        }
        SweepKind::BundleVariant => {
            let b = apply_overrides(base, &sw.bundle_variant);
            sw.bundle_variant
                .values
                .iter()
                .map(|&v: &BundleVariant| {
                    let mut s = b.clone();
                    s.bundles.variant = v;
                    (v.name().to_string(), s)
                })
                .collect()
        }
    }
}

/// Plans each goal on one bundled map. Planning errors become failed rows.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_goals(
    map: &NeuralMap<f64>,
    model: &Autoencoder<f64>,
    arm: &ArmConfig<f64>,
    pcfg: &PlannerConfig<f64>,
    goals: &[TestGoal<f64>],
    kind: &str,
    value: &str,
    timing: bool,
) -> Vec<TrialRow> {
    goals
        .iter()
        .enumerate()
        .map(|(trial, tg)| {
            let t0 = Instant::now();
            let outcome = planner::plan(map, &tg.start, tg.goal, pcfg, model, arm);
            let wall_ms = if timing { t0.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
            let mut row = TrialRow {
                sweep_kind: kind.to_string(),
                param_value: value.to_string(),
                trial,
                goal_x: tg.goal[0],
                goal_y: tg.goal[1],
                goal_z: tg.goal[2],
                success: false,
                norm_jerk: f64::NAN,
                ee_error: f64::NAN,
                steps_used: 0,
                wall_ms,
            };
            match outcome {
                Ok(p) => {
                    row.success = p.success;
                    row.steps_used = p.steps_used;
                    row.norm_jerk = metrics::norm_jerk(&p.joint_trajectory).value;
                    row.ee_error = metrics::end_effector_error(tg.goal, p.joint_trajectory.last(), arm)
                        .unwrap_or(f64::NAN);
                }
                Err(e) => log::warn!("{kind}={value} trial {trial}: {e}"),
            }
            row
        })
        .collect()
}

pub fn run_sweep(ctx: &mut SweepContext, kind: SweepKind) -> StageResult<SweepResult> {
    let settings = sweep_settings(ctx, kind);
    let pcfg = ctx.cfg.planner_config();
    let timing = ctx.cfg.sweep.timing;
    let goals = ctx.test_goals().to_vec();
    let mut rows = Vec::new();
    let mut table_one = Vec::new();
    for (value, s) in &settings {
        info!("sweep {kind} = {value}");
        let map = ctx.bundled(s)?;
        let model = ctx.model(s.bottleneck, s.train_size)?.clone();
        rows.extend(evaluate_goals(
            &map,
            &model.model,
            &ctx.arm,
            &pcfg,
            &goals,
            kind.name(),
            value,
            timing,
        ));
        if kind == SweepKind::TrainSize {
            let tests = ctx.dataset.test_trajectories(&ctx.arm).at(Stage::Sweep)?;
            let acc = codec::evaluate_trajectories(&model.model, &tests).at(Stage::Sweep)?;
            table_one.push(TableOneRow {
                train_size: s.train_size,
                train_rmse: model.report.train_rmse,
                test_rmse: acc.rmse,
                explained_variance: acc.explained_variance,
                epochs_run: model.report.epochs_run,
            });
        }
    }
    Ok(SweepResult {
        kind,
        values: settings.into_iter().map(|(v, _)| v).collect(),
        rows,
        table_one,
    })
}

pub fn write_rows<W: Write>(w: W, rows: &[TrialRow]) -> StageResult<()> {
    write_records(w, rows)
}

pub fn read_rows<R: Read>(r: R) -> StageResult<Vec<TrialRow>> {
    read_records(r)
}

pub fn write_records<W: Write, S: Serialize>(w: W, rows: &[S]) -> StageResult<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r).at(Stage::Report)?;
    }
    wr.flush().at(Stage::Report)
}

/// Writes a header row even when `rows` is empty.
pub fn write_records_with_header<W: Write, S: Serialize>(w: W, header: &[&str], rows: &[S]) -> StageResult<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(header).at(Stage::Report)?;
    for r in rows {
        wr.serialize(r).at(Stage::Report)?;
    }
    wr.flush().at(Stage::Report)
}

pub fn read_records<R: Read, S: serde::de::DeserializeOwned>(r: R) -> StageResult<Vec<S>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .collect::<Result<_, _>>()
        .at(Stage::Report)
}

pub const ROW_HEADER: [&str; 11] = [
    "sweep_kind",
    "param_value",
    "trial",
    "goal_x",
    "goal_y",
    "goal_z",
    "success",
    "norm_jerk",
    "ee_error",
    "steps_used",
    "wall_ms",
];

pub const TABLE_ONE_HEADER: [&str; 5] = ["train_size", "train_rmse", "test_rmse", "explained_variance", "epochs_run"];

pub fn csv_path(out: &Path, kind: SweepKind) -> PathBuf {
    out.join(format!("sweep_{kind}.csv"))
}

pub const TABLE_ONE_FILE: &str = "table1.csv";

/// Writes the CSV and plot files of a sweep; returns the paths written.
pub fn write_outputs(result: &SweepResult, out: &Path) -> StageResult<Vec<PathBuf>> {
    std::fs::create_dir_all(out).at(Stage::Sweep)?;
    let mut written = Vec::new();
    let path = csv_path(out, result.kind);
    let f = std::fs::File::create(&path).at(Stage::Sweep)?;
    write_records_with_header(f, &ROW_HEADER, &result.rows)?;
    written.push(path);
    if result.kind == SweepKind::TrainSize {
        let path = out.join(TABLE_ONE_FILE);
        let f = std::fs::File::create(&path).at(Stage::Sweep)?;
        write_records_with_header(f, &TABLE_ONE_HEADER, &result.table_one)?;
        written.push(path);
    }
    for (name, svg) in plot::sweep_plots(result) {
        let path = out.join(name);
        std::fs::write(&path, svg).at(Stage::Sweep)?;
        written.push(path);
    }
    Ok(written)
}

/// Metric reports of the executed trials for one swept value.
pub fn reports_for(result: &SweepResult, value: &str) -> Vec<MetricReport<f64>> {
    result.rows_for(value).filter(|r| r.executed()).map(TrialRow::report).collect()
}

pub fn parse_kinds(s: &str) -> Result<Vec<SweepKind>, StageError> {
    if s == "all" {
        return Ok(SweepKind::ALL.to_vec());
    }
    s.split(',')
        .map(|k| k.trim().parse().map_err(|e: String| StageError::msg(Stage::Sweep, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(trial: usize, value: &str) -> TrialRow {
        TrialRow {
            sweep_kind: "phi".into(),
            param_value: value.into(),
            trial,
            goal_x: 0.1 * trial as f64,
            goal_y: -0.3,
            goal_z: 1e-17,
            success: trial % 2 == 0,
            norm_jerk: 0.023_456_789_012_345_6,
            ee_error: 0.005,
            steps_used: 49,
            wall_ms: 0.0,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rows: Vec<TrialRow> = (0..5).map(|i| row(i, "3")).collect();
        let mut buf = Vec::new();
        write_records_with_header(&mut buf, &ROW_HEADER, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "sweep_kind,param_value,trial,goal_x,goal_y,goal_z,success,norm_jerk,ee_error,steps_used,wall_ms\n"
        ));
        assert_eq!(read_rows(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn empty_csv_has_only_the_header() {
        let mut buf = Vec::new();
        write_records_with_header::<_, TrialRow>(&mut buf, &ROW_HEADER, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    }

    #[test]
    fn kinds_parse() {
        assert_eq!(parse_kinds("all").unwrap().len(), 5);
        assert_eq!(parse_kinds("phi,dim").unwrap(), vec![SweepKind::Phi, SweepKind::Dim]);
        assert!(parse_kinds("width").is_err());
    }
}
