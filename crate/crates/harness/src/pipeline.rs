//! The three passes: babbling and codec training, map construction, bundle formation.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use reach_core::babble::{self, Dataset};
use reach_core::bundles::{self, BundleConfig, BundleStats};
use reach_core::codec::{self, Autoencoder, ReducedPoint, TrainReport};
use reach_core::io;
use reach_core::neural_map::{self, NeuralMap};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{AtStage, Stage, StageResult};

pub const DATASET_FILE: &str = "dataset.json";
pub const MODEL_FILE: &str = "model.json";
pub const MAP_FILE: &str = "map.json";
pub const BUNDLED_MAP_FILE: &str = "bundled_map.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Trained autoencoder with its training report.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ModelArtifact {
    pub model: Autoencoder<f64>,
    pub report: TrainReport<f64>,
}

#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dataset: Dataset<f64>,
    pub model: ModelArtifact,
    pub map: NeuralMap<f64>,
    pub bundle_stats: BundleStats,
    /// SHA-256 of every persisted file, keyed by file name.
    pub hashes: BTreeMap<String, String>,
}

pub fn babble(cfg: &ExperimentConfig) -> StageResult<Dataset<f64>> {
    let protocol = cfg.babble_protocol()?;
    babble::generate_dataset(&protocol, &cfg.arm_config()).at(Stage::Babble)
}

pub fn train(cfg: &ExperimentConfig, dataset: &Dataset<f64>, bottleneck: usize) -> StageResult<ModelArtifact> {
    let stats = codec::fit_norm_stats(dataset).at(Stage::Train)?;
    let (model, report) = codec::train_autoencoder(dataset, &stats, bottleneck, &cfg.hyper()).at(Stage::Train)?;
    Ok(ModelArtifact { model, report })
}

/// Training trajectories in the reduced space.
pub fn reduce(model: &Autoencoder<f64>, dataset: &Dataset<f64>, stage: Stage) -> StageResult<Vec<Vec<ReducedPoint<f64>>>> {
    dataset
        .train
        .iter()
        .map(|t| model.encode_trajectory(t))
        .collect::<reach_core::Result<_>>()
        .at(stage)
}

pub fn build_map(reduced: &[Vec<ReducedPoint<f64>>], res_multiplier: f64) -> StageResult<NeuralMap<f64>> {
    let resolution = neural_map::compute_resolution(reduced).at(Stage::BuildMap)?;
    neural_map::build_map(reduced, &resolution, res_multiplier).at(Stage::BuildMap)
}

/// Returns a bundled copy; the input map is left untouched.
pub fn bundle(
    map: &NeuralMap<f64>,
    reduced: &[Vec<ReducedPoint<f64>>],
    bcfg: &BundleConfig<f64>,
) -> StageResult<(NeuralMap<f64>, BundleStats)> {
    let mut bundled = map.clone();
    let stats = bundles::form_bundles(&mut bundled, reduced, bcfg).at(Stage::Bundle)?;
    Ok((bundled, stats))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes an artifact file and records its hash.
pub fn persist<P: Serialize>(
    out: &Path,
    file: &str,
    kind: &'static str,
    payload: &P,
    stage: Stage,
    hashes: &mut BTreeMap<String, String>,
) -> StageResult<()> {
    fs::create_dir_all(out).at(stage)?;
    let text = io::to_string(kind, payload).at(stage)?;
    fs::write(out.join(file), &text).at(stage)?;
    hashes.insert(file.to_string(), sha256_hex(text.as_bytes()));
    write_manifest(out, hashes, stage)
}

fn write_manifest(out: &Path, hashes: &BTreeMap<String, String>, stage: Stage) -> StageResult<()> {
    let text = serde_json::to_string_pretty(hashes).at(stage)?;
    fs::write(out.join(MANIFEST_FILE), text + "\n").at(stage)
}

/// Hashes recorded by earlier runs in `out`; empty when there is no manifest.
pub fn load_manifest(out: &Path, stage: Stage) -> StageResult<BTreeMap<String, String>> {
    let path = out.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    serde_json::from_str(&fs::read_to_string(path).at(stage)?).at(stage)
}

pub fn load_dataset(out: &Path, stage: Stage) -> StageResult<Dataset<f64>> {
    io::load(&out.join(DATASET_FILE), io::DATASET).at(stage)
}

pub fn load_model(out: &Path, stage: Stage) -> StageResult<ModelArtifact> {
    io::load(&out.join(MODEL_FILE), io::MODEL).at(stage)
}

pub fn load_map(out: &Path, file: &str, stage: Stage) -> StageResult<NeuralMap<f64>> {
    io::load(&out.join(file), io::MAP).at(stage)
}

/// Runs every pass with the base settings of `cfg`, persisting each artifact
/// as soon as it exists so a failing stage leaves its predecessors on disk.
pub fn run_pipeline(cfg: &ExperimentConfig, out: &Path) -> StageResult<Artifacts> {
    let mut hashes = BTreeMap::new();
    let dataset = babble(cfg)?;
    persist(out, DATASET_FILE, io::DATASET, &dataset, Stage::Babble, &mut hashes)?;
    let model = train(cfg, &dataset, cfg.codec.bottleneck[0])?;
    persist(out, MODEL_FILE, io::MODEL, &model, Stage::Train, &mut hashes)?;
    let reduced = reduce(&model.model, &dataset, Stage::BuildMap)?;
    let map = build_map(&reduced, cfg.map.res_multiplier[0])?;
    persist(out, MAP_FILE, io::MAP, &map, Stage::BuildMap, &mut hashes)?;
    let (bundled, bundle_stats) = bundle(&map, &reduced, &cfg.bundles[0])?;
    persist(out, BUNDLED_MAP_FILE, io::MAP, &bundled, Stage::Bundle, &mut hashes)?;
    Ok(Artifacts {
        dataset,
        model,
        map: bundled,
        bundle_stats,
        hashes,
    })
}

/// Mean task-space distance between a neuron and its axis-adjacent neurons,
/// measured on the decoded, limit-clamped joint states. `None` without neighbors.
pub fn cell_spacing(
    map: &NeuralMap<f64>,
    model: &Autoencoder<f64>,
    arm: &reach_core::ArmConfig,
    id: usize,
) -> reach_core::Result<Option<f64>> {
    let hand = |n: usize| -> reach_core::Result<[f64; 3]> {
        let mut s = model.decode_state(&map.center_to_reduced(n)?)?;
        arm.clamp_to_limits(&mut s.positions);
        reach_core::arm::forward_kinematics(&s, arm)
    };
    let here = hand(id)?;
    let cell = map.neuron(id)?.cell.clone();
    let mut total = 0.0;
    let mut count = 0usize;
    for axis in 0..cell.len() {
        for delta in [-1, 1] {
            let mut c = cell.clone();
            c[axis] += delta;
            if let Some(n) = map.neuron_at(&c) {
                let p = hand(n)?;
                total += (0..3).map(|k| (p[k] - here[k]).powi(2)).sum::<f64>().sqrt();
                count += 1;
            }
        }
    }
    Ok((count > 0).then(|| total / count as f64))
}
