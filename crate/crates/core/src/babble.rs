//! Motor-babbling datasets: minimum-jerk joint-space reaches from fixed start
//! poses to random points on an arc.

use serde::{Deserialize, Serialize};

use crate::arm::{self, ArcSpec, ArmConfig, JointState};
use crate::error::{Error, Result};
use crate::geometry::{self as g, Vec3};
use crate::scalar::Real;

/// Uniformly sampled joint trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", into = "TrajectoryRows<T>", try_from = "TrajectoryRows<T>")]
pub struct Trajectory<T> {
    samples: Vec<JointState<T>>,
    timestep: T,
}

impl<T: Real> Trajectory<T> {
    pub fn new(samples: Vec<JointState<T>>, timestep: T) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Config(format!(
                "trajectory needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if !(timestep > T::zero()) {
            return Err(Error::Config("trajectory timestep must be positive".into()));
        }
        let n = samples[0].n_joints();
        if samples
            .iter()
            .any(|s| s.positions.len() != n || s.velocities.len() != n)
        {
            return Err(Error::Config("trajectory samples disagree on joint count".into()));
        }
        Ok(Self { samples, timestep })
    }

    /// Builds a trajectory without the two-sample minimum; used for planned
    /// motions, which may legitimately consist of a single state.
    pub fn from_plan(samples: Vec<JointState<T>>, timestep: T) -> Self {
        Self { samples, timestep }
    }

    pub fn samples(&self) -> &[JointState<T>] {
        &self.samples
    }

    pub fn timestep(&self) -> T {
        self.timestep
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> &JointState<T> {
        &self.samples[0]
    }

    pub fn last(&self) -> &JointState<T> {
        &self.samples[self.samples.len() - 1]
    }

    pub fn positions(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.samples.iter().map(|s| s.positions.as_slice())
    }

    /// Time-reversed copy; velocities change sign.
    pub fn reversed(&self) -> Self {
        let samples = self
            .samples
            .iter()
            .rev()
            .map(|s| JointState {
                positions: s.positions.clone(),
                velocities: s.velocities.iter().map(|&v| -v).collect(),
            })
            .collect();
        Self {
            samples,
            timestep: self.timestep,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct TrajectoryRows<T> {
    timestep: T,
    positions: Vec<Vec<T>>,
    velocities: Vec<Vec<T>>,
}

impl<T: Real> From<Trajectory<T>> for TrajectoryRows<T> {
    fn from(t: Trajectory<T>) -> Self {
        let (positions, velocities) = t
            .samples
            .into_iter()
            .map(|s| (s.positions, s.velocities))
            .unzip();
        Self {
            timestep: t.timestep,
            positions,
            velocities,
        }
    }
}

impl<T: Real> TryFrom<TrajectoryRows<T>> for Trajectory<T> {
    type Error = Error;

    fn try_from(rows: TrajectoryRows<T>) -> Result<Self> {
        if rows.positions.len() != rows.velocities.len() {
            return Err(Error::Format {
                kind: "trajectory",
                detail: "position and velocity row counts differ".into(),
            });
        }
        let samples = rows
            .positions
            .into_iter()
            .zip(rows.velocities)
            .map(|(positions, velocities)| JointState {
                positions,
                velocities,
            })
            .collect();
        Ok(Self {
            samples,
            timestep: rows.timestep,
        })
    }
}

/// Minimum-jerk blend `s(τ) = 10τ³ − 15τ⁴ + 6τ⁵` and its first two derivatives.
pub fn quintic_blend<T: Real>(tau: T) -> (T, T, T) {
    let t2 = tau * tau;
    let t3 = t2 * tau;
    let (c6, c10, c15, c30, c60, c120, c180) = (
        T::lit(6.0),
        T::lit(10.0),
        T::lit(15.0),
        T::lit(30.0),
        T::lit(60.0),
        T::lit(120.0),
        T::lit(180.0),
    );
    let s = t3 * (c10 - c15 * tau + c6 * t2);
    let ds = t2 * (c30 - c60 * tau + c30 * t2);
    let dds = tau * (c60 - c180 * tau + c120 * t2);
    (s, ds, dds)
}

/// Quintic joint-space reach from `start` to the inverse-kinematics solution at `goal`.
pub fn generate_trajectory<T: Real>(
    start: &JointState<T>,
    goal: Vec3<T>,
    steps: usize,
    timestep: T,
    arm: &ArmConfig<T>,
) -> Result<Trajectory<T>> {
    if steps < 2 {
        return Err(Error::Config(format!("steps must be at least 2, got {steps}")));
    }
    if !(timestep > T::zero()) {
        return Err(Error::Config("timestep must be positive".into()));
    }
    let end = arm::inverse_kinematics(goal, arm, start)?;
    Ok(interpolate(&start.positions, &end.positions, steps, timestep))
}

/// Rest-to-rest quintic interpolation between two joint configurations.
pub fn interpolate<T: Real>(from: &[T], to: &[T], steps: usize, timestep: T) -> Trajectory<T> {
    let duration = timestep * T::from_usize_lossy(steps - 1);
    let delta: Vec<T> = from.iter().zip(to).map(|(&a, &b)| b - a).collect();
    let samples = (0..steps)
        .map(|k| {
            if k == steps - 1 {
                return JointState::at_rest(to.to_vec());
            }
            let tau = T::from_usize_lossy(k) / T::from_usize_lossy(steps - 1);
            let (s, ds, _) = quintic_blend(tau);
            JointState {
                positions: from.iter().zip(&delta).map(|(&a, &d)| a + d * s).collect(),
                velocities: delta.iter().map(|&d| d * ds / duration).collect(),
            }
        })
        .collect();
    Trajectory { samples, timestep }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BabbleProtocol<T> {
    pub starts: Vec<JointState<T>>,
    pub arc: ArcSpec<T>,
    pub n_train_per_start: usize,
    pub n_test_per_start: usize,
    pub steps_per_trajectory: usize,
    pub timestep: T,
    pub rng_seed: u64,
}

impl<T: Real> BabbleProtocol<T> {
    /// Single fixed start with 700 training reaches and 300 test goals.
    pub fn single_start(start: JointState<T>, arc: ArcSpec<T>, rng_seed: u64) -> Self {
        Self {
            starts: vec![start],
            arc,
            n_train_per_start: 700,
            n_test_per_start: 300,
            steps_per_trajectory: 50,
            timestep: T::lit(0.1),
            rng_seed,
        }
    }

    /// Eight start poses with 300 training reaches and 150 test goals each.
    pub fn multi_start(starts: Vec<JointState<T>>, arc: ArcSpec<T>, rng_seed: u64) -> Self {
        Self {
            starts,
            arc,
            n_train_per_start: 300,
            n_test_per_start: 150,
            steps_per_trajectory: 50,
            timestep: T::lit(0.1),
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.starts.is_empty() {
            return Err(Error::Config("protocol needs at least one start".into()));
        }
        if self.n_train_per_start == 0 || self.n_test_per_start == 0 {
            return Err(Error::Config("train and test counts must be at least 1".into()));
        }
        if self.steps_per_trajectory < 2 {
            return Err(Error::Config("steps_per_trajectory must be at least 2".into()));
        }
        if !(self.timestep > T::zero()) {
            return Err(Error::Config("timestep must be positive".into()));
        }
        self.arc.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TestGoal<T> {
    pub start: JointState<T>,
    pub goal: Vec3<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Dataset<T> {
    pub train: Vec<Trajectory<T>>,
    pub test_goals: Vec<TestGoal<T>>,
    pub protocol: BabbleProtocol<T>,
}

impl<T: Real> Dataset<T> {
    /// Number of motor-sensory features per sample (positions then velocities).
    pub fn feature_count(&self) -> usize {
        self.protocol.starts[0].n_joints() * 2
    }

    pub fn sample_count(&self) -> usize {
        self.train.iter().map(Trajectory::len).sum()
    }

    /// Keeps the first `n` training reaches of every start. Goals are drawn
    /// from per-start streams, so smaller sets are prefixes of larger ones.
    pub fn with_train_per_start(&self, n: usize) -> Result<Self> {
        let per = self.protocol.n_train_per_start;
        if n == 0 || n > per {
            return Err(Error::Config(format!(
                "cannot keep {n} of {per} training reaches per start"
            )));
        }
        let train = self
            .train
            .chunks(per)
            .flat_map(|c| c[..n].iter().cloned())
            .collect();
        let mut protocol = self.protocol.clone();
        protocol.n_train_per_start = n;
        Ok(Self {
            train,
            test_goals: self.test_goals.clone(),
            protocol,
        })
    }

    /// Reaches toward the test goals, used as held-out data for the autoencoder.
    pub fn test_trajectories(&self, arm: &ArmConfig<T>) -> Result<Vec<Trajectory<T>>> {
        let p = &self.protocol;
        self.test_goals
            .iter()
            .map(|tg| generate_trajectory(&tg.start, tg.goal, p.steps_per_trajectory, p.timestep, arm))
            .collect()
    }
}

/// Derives an independent stream seed for `(start, stream)`.
pub(crate) fn stream_seed(seed: u64, start: usize, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed
        .wrapping_add((start as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn arc_fault<T: Real>(arc: &ArcSpec<T>, arm: &ArmConfig<T>, goal: Vec3<T>, err: Error) -> Error {
    let reach = arm.reach();
    let base = arm.base_position();
    let param = if g::norm3(g::sub(arc.center, base)) > reach {
        "arc.center"
    } else if g::norm3(g::sub(goal, base)) > reach {
        "arc.radius"
    } else {
        "arc.angle_range"
    };
    Error::Config(format!(
        "{param}: arc point {:?} cannot be reached ({err})",
        goal.map(Real::as_f64)
    ))
}

/// Training reaches toward uniformly sampled arc goals plus independently
/// sampled test goals, reproducible from the protocol seed.
pub fn generate_dataset<T: Real>(protocol: &BabbleProtocol<T>, arm: &ArmConfig<T>) -> Result<Dataset<T>> {
    protocol.validate()?;
    arm.validate()?;
    let mut train = Vec::with_capacity(protocol.starts.len() * protocol.n_train_per_start);
    let mut test_goals = Vec::with_capacity(protocol.starts.len() * protocol.n_test_per_start);
    for (s, start) in protocol.starts.iter().enumerate() {
        if start.n_joints() != arm.n_joints() {
            return Err(Error::Config(format!("start {s} has the wrong joint count")));
        }
        if !arm.within_limits(&start.positions) {
            return Err(Error::Config(format!("start {s} violates the joint limits")));
        }
        let goals = arm::sample_arc_targets(
            &protocol.arc,
            protocol.n_train_per_start,
            stream_seed(protocol.rng_seed, s, 0),
        )?;
        for goal in goals {
            let t = generate_trajectory(
                start,
                goal,
                protocol.steps_per_trajectory,
                protocol.timestep,
                arm,
            )
            .map_err(|e| arc_fault(&protocol.arc, arm, goal, e))?;
            train.push(t);
        }
        let tests = arm::sample_arc_targets(
            &protocol.arc,
            protocol.n_test_per_start,
            stream_seed(protocol.rng_seed, s, 1),
        )?;
        for goal in tests {
            arm::inverse_kinematics(goal, arm, start).map_err(|e| arc_fault(&protocol.arc, arm, goal, e))?;
            test_goals.push(TestGoal {
                start: start.clone(),
                goal,
            });
        }
    }
    Ok(Dataset {
        train,
        test_goals,
        protocol: protocol.clone(),
    })
}

/// `count` start poses whose hand positions are evenly spaced on `start_arc`,
/// each solved by inverse kinematics from `seed`.
pub fn start_poses_on_arc<T: Real>(
    arm: &ArmConfig<T>,
    start_arc: &ArcSpec<T>,
    count: usize,
    seed: &JointState<T>,
) -> Result<Vec<JointState<T>>> {
    start_arc
        .evenly_spaced(count)
        .into_iter()
        .map(|p| arm::inverse_kinematics(p, arm, seed))
        .collect()
}
