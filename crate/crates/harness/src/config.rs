//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use reach_core::arm::{ArcSpec, ArmConfig, JointState};
use reach_core::babble::{self, BabbleProtocol};
use reach_core::bundles::{BundleConfig, BundleVariant};
use reach_core::codec::{Activation, Architecture, TrainHyper};
use reach_core::planner::PlannerConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Stage, StageError, StageResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmPreset {
    Planar2dof,
    Humanoid5dof,
}

impl ArmPreset {
    pub fn build(self) -> ArmConfig<f64> {
        match self {
            ArmPreset::Planar2dof => ArmConfig::planar_2dof(),
            ArmPreset::Humanoid5dof => ArmConfig::humanoid_5dof(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    /// One fixed start pose.
    Single,
    /// `n_starts` poses with hands evenly spaced on `start_arc`.
    Multi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub kind: StartKind,
    /// Start pose (single) or IK seed for the start poses (multi).
    pub start: Vec<f64>,
    pub arc: ArcSpec<f64>,
    #[serde(default)]
    pub start_arc: Option<ArcSpec<f64>>,
    #[serde(default = "default_n_starts")]
    pub n_starts: usize,
    pub n_train_per_start: usize,
    pub n_test_per_start: usize,
    #[serde(default = "default_steps")]
    pub steps_per_trajectory: usize,
    #[serde(default = "default_timestep")]
    pub timestep: f64,
}

fn default_n_starts() -> usize {
    8
}
fn default_steps() -> usize {
    50
}
fn default_timestep() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecConfig {
    /// Bottleneck widths; the first one is used by the pipeline.
    pub bottleneck: Vec<usize>,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    pub epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_validation")]
    pub validation_fraction: f64,
}

fn default_hidden() -> Vec<usize> {
    vec![16]
}
fn default_lr() -> f64 {
    0.1
}
fn default_patience() -> usize {
    50
}
fn default_validation() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    /// Resolution multipliers; the first one is used by the pipeline.
    pub res_multiplier: Vec<f64>,
}

/// Values of one swept parameter, plus optional overrides of the base setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec<V> {
    pub values: Vec<V>,
    #[serde(default)]
    pub phi: Option<usize>,
    #[serde(default)]
    pub bottleneck: Option<usize>,
    #[serde(default)]
    pub res_multiplier: Option<f64>,
}

impl<V> SweepSpec<V> {
    fn of(values: Vec<V>) -> Self {
        Self {
            values,
            phi: None,
            bottleneck: None,
            res_multiplier: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub dim: SweepSpec<usize>,
    pub train_size: SweepSpec<usize>,
    pub phi: SweepSpec<usize>,
    pub resolution: SweepSpec<f64>,
    pub bundle_variant: SweepSpec<BundleVariant>,
    /// Plan at most this many test goals per swept value.
    #[serde(default)]
    pub max_test_goals: Option<usize>,
    /// Record wall-clock time per trial. Off by default so outputs are reproducible.
    #[serde(default)]
    pub timing: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            dim: SweepSpec {
                phi: Some(1),
                ..SweepSpec::of(vec![3, 4, 5])
            },
            train_size: SweepSpec::of(vec![100, 200, 300, 500, 700]),
            phi: SweepSpec::of(vec![1, 3, 6, 10]),
            resolution: SweepSpec {
                phi: Some(3),
                ..SweepSpec::of(vec![1.0, 2.0, 3.0])
            },
            bundle_variant: SweepSpec {
                phi: Some(3),
                ..SweepSpec::of(BundleVariant::ALL.to_vec())
            },
            max_test_goals: None,
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    pub arm: ArmPreset,
    pub protocol: ProtocolConfig,
    pub codec: CodecConfig,
    pub map: MapConfig,
    /// Bundle settings; the first one is used by the pipeline.
    pub bundles: Vec<BundleConfig<f64>>,
    #[serde(default)]
    pub planner: PlannerConfig<f64>,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// Small 2-DOF setup for smoke runs and CI.
    pub fn planar_smoke() -> Self {
        Self {
            seed: 7,
            out_dir: default_out(),
            arm: ArmPreset::Planar2dof,
            protocol: ProtocolConfig {
                kind: StartKind::Single,
                start: vec![0.3, 0.6],
                arc: ArcSpec {
                    center: [0.0, 0.0, 0.0],
                    radius: 1.5,
                    normal: [0.0, 0.0, 1.0],
                    angle_range: (0.2, 1.2),
                },
                start_arc: None,
                n_starts: 1,
                n_train_per_start: 20,
                n_test_per_start: 10,
                steps_per_trajectory: 20,
                timestep: 0.1,
            },
            codec: CodecConfig {
                bottleneck: vec![2],
                hidden: default_hidden(),
                learning_rate: default_lr(),
                epochs: 200,
                patience: default_patience(),
                validation_fraction: default_validation(),
            },
            map: MapConfig {
                res_multiplier: vec![1.0],
            },
            bundles: vec![BundleConfig {
                phi: 3,
                ..BundleConfig::default()
            }],
            planner: PlannerConfig {
                warmup_steps: 40,
                ..PlannerConfig::default()
            },
            sweep: SweepConfig {
                dim: SweepSpec {
                    phi: Some(1),
                    ..SweepSpec::of(vec![1, 2])
                },
                train_size: SweepSpec::of(vec![10, 20]),
                phi: SweepSpec::of(vec![1, 3]),
                resolution: SweepSpec {
                    phi: Some(3),
                    ..SweepSpec::of(vec![1.0, 2.0])
                },
                bundle_variant: SweepSpec {
                    phi: Some(3),
                    ..SweepSpec::of(BundleVariant::ALL.to_vec())
                },
                max_test_goals: None,
                timing: false,
            },
        }
    }

    /// Simulated 5-DOF arm with one start and 700 training and 300 test reaches.
    pub fn humanoid_single() -> Self {
        Self {
            seed: 7,
            out_dir: default_out(),
            arm: ArmPreset::Humanoid5dof,
            protocol: ProtocolConfig {
                kind: StartKind::Single,
                start: vec![1.2, 0.3, 0.0, 0.3, 0.0],
                arc: ArcSpec {
                    center: [0.0, 0.0, -0.2],
                    radius: 0.65,
                    normal: [0.0, 0.0, 1.0],
                    angle_range: (-0.3, 0.9),
                },
                start_arc: None,
                n_starts: 1,
                n_train_per_start: 700,
                n_test_per_start: 300,
                steps_per_trajectory: default_steps(),
                timestep: default_timestep(),
            },
            codec: CodecConfig {
                bottleneck: vec![5],
                hidden: default_hidden(),
                learning_rate: default_lr(),
                epochs: 100,
                patience: default_patience(),
                validation_fraction: default_validation(),
            },
            map: MapConfig {
                res_multiplier: vec![1.0],
            },
            bundles: vec![BundleConfig::default()],
            planner: PlannerConfig {
                warmup_steps: 2 * default_steps(),
                ..PlannerConfig::default()
            },
            sweep: SweepConfig::default(),
        }
    }

    /// Eight start poses with 300 reaches each and a six-wide bottleneck.
    pub fn humanoid_multi() -> Self {
        let mut cfg = Self::humanoid_single();
        cfg.protocol.kind = StartKind::Multi;
        cfg.protocol.start_arc = Some(ArcSpec {
            center: [0.0, 0.0, -0.3],
            radius: 0.8,
            normal: [0.0, 0.0, 1.0],
            angle_range: (-0.2, 0.8),
        });
        cfg.protocol.n_starts = 8;
        cfg.protocol.n_train_per_start = 300;
        cfg.protocol.n_test_per_start = 150;
        cfg.codec.bottleneck = vec![6];
        cfg.sweep.train_size.values = vec![100, 200, 300];
        cfg
    }

    pub fn from_toml(text: &str) -> StageResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| StageError::new(Stage::Config, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> StageResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| StageError::msg(Stage::Config, format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> StageResult<String> {
        toml::to_string(self).map_err(|e| StageError::new(Stage::Config, e))
    }

    pub fn validate(&self) -> StageResult<()> {
        let fail = |m: &str| Err(StageError::msg(Stage::Config, m.to_string()));
        if self.codec.bottleneck.is_empty() {
            return fail("codec.bottleneck must list at least one width");
        }
        if self.map.res_multiplier.is_empty() {
            return fail("map.res_multiplier must list at least one value");
        }
        if self.bundles.is_empty() {
            return fail("bundles must list at least one configuration");
        }
        let s = &self.sweep;
        if s.dim.values.is_empty()
            || s.train_size.values.is_empty()
            || s.phi.values.is_empty()
            || s.resolution.values.is_empty()
            || s.bundle_variant.values.is_empty()
        {
            return fail("every sweep needs at least one value");
        }
        if self.protocol.kind == StartKind::Multi && self.protocol.start_arc.is_none() {
            return fail("protocol.start_arc is required for multi-start protocols");
        }
        for b in &self.bundles {
            b.validate().map_err(|e| StageError::new(Stage::Config, e))?;
        }
        self.planner.validate().map_err(|e| StageError::new(Stage::Config, e))?;
        self.hyper().validate().map_err(|e| StageError::new(Stage::Config, e))?;
        Ok(())
    }

    pub fn arm_config(&self) -> ArmConfig<f64> {
        self.arm.build()
    }

    pub fn babble_protocol(&self) -> StageResult<BabbleProtocol<f64>> {
        let p = &self.protocol;
        let arm = self.arm_config();
        let seed_pose = JointState::at_rest(p.start.clone());
        let starts = match p.kind {
            StartKind::Single => vec![seed_pose],
            StartKind::Multi => {
                let arc = p.start_arc.as_ref().expect("validated");
                babble::start_poses_on_arc(&arm, arc, p.n_starts, &seed_pose)
                    .map_err(|e| StageError::new(Stage::Babble, e))?
            }
        };
        Ok(BabbleProtocol {
            starts,
            arc: p.arc,
            n_train_per_start: p.n_train_per_start,
            n_test_per_start: p.n_test_per_start,
            steps_per_trajectory: p.steps_per_trajectory,
            timestep: p.timestep,
            rng_seed: self.seed,
        })
    }

    pub fn hyper(&self) -> TrainHyper<f64> {
        let c = &self.codec;
        TrainHyper {
            learning_rate: c.learning_rate,
            epochs: c.epochs,
            rng_seed: self.seed.wrapping_add(1),
            architecture: Architecture {
                hidden: c.hidden.clone(),
                hidden_activation: Activation::Tanh,
                bottleneck_activation: Activation::Tanh,
                output_activation: Activation::Logistic,
            },
            validation_fraction: c.validation_fraction,
            patience: c.patience,
        }
    }

    /// Planner settings with a fixed playback step matching the babbling data.
    pub fn planner_config(&self) -> PlannerConfig<f64> {
        PlannerConfig {
            playback_dt: self.protocol.timestep,
            ..self.planner.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_survive_a_toml_round_trip() {
        for cfg in [
            ExperimentConfig::planar_smoke(),
            ExperimentConfig::humanoid_single(),
            ExperimentConfig::humanoid_multi(),
        ] {
            cfg.validate().unwrap();
            let text = cfg.to_toml().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = ExperimentConfig::planar_smoke().to_toml().unwrap();
        text.insert_str(0, "bogus = 1\n");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert_eq!(err.stage, Stage::Config);
    }
}
