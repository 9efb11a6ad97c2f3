//! Reaching by spreading activation: goal-driven activity flows backward along
//! B, and the current neuron hands over to the forward neighbour with the
//! strongest combination of that activity and its forward weight.

use petgraph::algo::astar;
use petgraph::graph::{DiGraph, NodeIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arm::{self, ArmConfig, JointState};
use crate::babble::Trajectory;
use crate::codec::{Autoencoder, ReducedPoint};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::neural_map::NeuralMap;
use crate::scalar::Real;

/// How ties between equally strong competitors are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestId,
    /// Uniform choice among the maxima, from a seeded generator.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", default)]
pub struct PlannerConfig<T> {
    pub eta_b: T,
    pub tau_b: T,
    pub lambda: T,
    pub max_step: usize,
    pub warmup_steps: usize,
    pub tie_break: TieBreak,
    /// Sample spacing of the decoded joint trajectory, in seconds.
    pub playback_dt: T,
}

impl<T: Real> Default for PlannerConfig<T> {
    fn default() -> Self {
        Self {
            eta_b: T::lit(0.1),
            tau_b: T::lit(1e3),
            lambda: T::lit(1e3),
            max_step: 80,
            warmup_steps: 0,
            tie_break: TieBreak::LowestId,
            playback_dt: T::lit(0.1),
        }
    }
}

impl<T: Real> PlannerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: T| v > T::zero() && v.is_finite();
        if !positive(self.eta_b) || !positive(self.tau_b) || !positive(self.lambda) {
            return Err(Error::Config("eta_b, tau_b and lambda must be positive".into()));
        }
        if self.max_step == 0 {
            return Err(Error::Config("max_step must be at least 1".into()));
        }
        if !positive(self.playback_dt) {
            return Err(Error::Config("playback_dt must be positive".into()));
        }
        Ok(())
    }

    /// Steady activation of an isolated goal neuron.
    pub fn goal_fixed_point(&self) -> T {
        let et = self.eta_b * self.tau_b;
        et / (T::one() + et)
    }
}

/// Activation vectors of one planning session.
#[derive(Debug, Clone)]
pub struct PlannerState<T> {
    pub beta: Vec<T>,
    pub goal: usize,
    pub current: usize,
    pub fired: Vec<bool>,
    /// Competition activity of the last step, as `(neuron, chi)` pairs.
    pub chi: Vec<(usize, T)>,
    // Rows that can hold nonzero activity; grows as the front spreads.
    active: Vec<usize>,
    is_active: Vec<bool>,
    scratch: Vec<T>,
}

impl<T: Real> PlannerState<T> {
    pub fn new(map: &NeuralMap<T>, start: usize, goal: usize) -> Result<Self> {
        map.neuron(start)?;
        map.neuron(goal)?;
        let n = map.len();
        let mut fired = vec![false; n];
        fired[start] = true;
        let mut is_active = vec![false; n];
        is_active[goal] = true;
        Ok(Self {
            beta: vec![T::zero(); n],
            goal,
            current: start,
            fired,
            chi: Vec::new(),
            active: vec![goal],
            is_active,
            scratch: Vec::new(),
        })
    }

    /// Goal drive; one at the goal neuron only.
    pub fn gamma(&self, id: usize) -> T {
        if id == self.goal {
            T::one()
        } else {
            T::zero()
        }
    }
}

/// One synchronous update of the backward activity from the pre-step vector.
pub fn spread_step<T: Real>(state: &mut PlannerState<T>, map: &NeuralMap<T>, cfg: &PlannerConfig<T>) {
    let one = T::one();
    state.scratch.clear();
    for &i in &state.active {
        let input: T = map
            .backward()
            .row(i)
            .iter()
            .map(|&(j, w)| w * state.beta[j])
            .sum::<T>()
            + state.gamma(i);
        let b = state.beta[i];
        let next = b + cfg.eta_b * input * (one - b) - b / cfg.tau_b;
        state.scratch.push(next.max(T::zero()).min(one));
    }
    let mut woke = Vec::new();
    for (k, &i) in state.active.iter().enumerate() {
        let next = state.scratch[k];
        if state.beta[i] == T::zero() && next > T::zero() {
            woke.push(i);
        }
        state.beta[i] = next;
    }
    for j in woke {
        for &(i, _) in map.forward().row(j) {
            if !state.is_active[i] {
                state.is_active[i] = true;
                state.active.push(i);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TraceStep<T> {
    pub step: usize,
    pub winner: Option<usize>,
    pub chi_max: T,
    pub beta_goal: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Reached,
    /// The current neuron has no forward neighbour left that has not fired.
    DeadEnd,
    StepLimit,
}

/// Result of planning between two neurons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NeuronPlan<T> {
    pub path: Vec<usize>,
    pub outcome: Outcome,
    pub steps_used: usize,
    pub trace: Vec<TraceStep<T>>,
}

impl<T> NeuronPlan<T> {
    pub fn success(&self) -> bool {
        self.outcome == Outcome::Reached
    }
}

/// Runs warmup and the competition loop between two neurons of `map`.
pub fn plan_neurons<T: Real>(
    map: &NeuralMap<T>,
    start: usize,
    goal: usize,
    cfg: &PlannerConfig<T>,
) -> Result<NeuronPlan<T>> {
    cfg.validate()?;
    let mut state = PlannerState::new(map, start, goal)?;
    let mut rng = match cfg.tie_break {
        TieBreak::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        TieBreak::LowestId => None,
    };
    let mut path = vec![start];
    let mut trace = Vec::new();
    if start == goal {
        return Ok(NeuronPlan {
            path,
            outcome: Outcome::Reached,
            steps_used: 0,
            trace,
        });
    }
    for _ in 0..cfg.warmup_steps {
        spread_step(&mut state, map, cfg);
    }
    let mut steps = 0;
    let outcome = loop {
        if state.current == goal {
            break Outcome::Reached;
        }
        if steps >= cfg.max_step {
            break Outcome::StepLimit;
        }
        let open = map
            .successors(state.current)
            .iter()
            .any(|&(n, f)| !state.fired[n] && f > T::zero());
        if !open {
            break Outcome::DeadEnd;
        }
        spread_step(&mut state, map, cfg);
        steps += 1;
        state.chi.clear();
        for &(n, f) in map.successors(state.current) {
            if !state.fired[n] && state.beta[n] > T::zero() && f > T::zero() {
                state.chi.push((n, cfg.lambda * state.beta[n] + f));
            }
        }
        let winner = pick_winner(&state.chi, rng.as_mut());
        if let Some(w) = winner {
            state.current = w;
            state.fired[w] = true;
            path.push(w);
        }
        trace.push(TraceStep {
            step: steps,
            winner,
            chi_max: state.chi.iter().map(|c| c.1).fold(T::zero(), T::max),
            beta_goal: state.beta[goal],
        });
    };
    Ok(NeuronPlan {
        path,
        outcome,
        steps_used: steps,
        trace,
    })
}

fn pick_winner<T: Real>(chi: &[(usize, T)], rng: Option<&mut ChaCha8Rng>) -> Option<usize> {
    let max = chi.iter().map(|c| c.1).fold(T::zero(), T::max);
    if max <= T::zero() {
        return None;
    }
    // Successor rows are sorted by id, so the first maximum is the lowest id.
    let mut best = chi.iter().filter(|c| c.1 == max).map(|c| c.0);
    match rng {
        None => best.next(),
        Some(rng) => {
            let all: Vec<usize> = best.collect();
            Some(all[rng.gen_range(0..all.len())])
        }
    }
}

/// Goal neuron chosen for a Cartesian target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GoalSelection<T> {
    pub neuron: usize,
    pub joints: JointState<T>,
    pub reduced: ReducedPoint<T>,
    /// Distance between query and neuron center in augmented space.
    pub distance: T,
}

/// Solves IK for the goal (seeded at `start`) and encodes it. Picks the neuron of
/// the containing grid cell, or the nearest neuron when that cell is empty.
pub fn select_goal_neuron<T: Real>(
    map: &NeuralMap<T>,
    goal: Vec3<T>,
    arm: &ArmConfig<T>,
    codec: &Autoencoder<T>,
    start: &JointState<T>,
) -> Result<GoalSelection<T>> {
    if map.is_empty() {
        return Err(Error::EmptyMap);
    }
    let joints = arm::inverse_kinematics(goal, arm, start)?;
    let reduced = codec.encode_state(&joints)?;
    let (neuron, distance) = map.nearest(&reduced)?;
    Ok(GoalSelection {
        neuron,
        joints,
        reduced,
        distance,
    })
}

/// Maximum grid distance between a start state and its neuron.
pub const START_COVERAGE_CELLS: i64 = 3;

/// Rank-1 neuron of a joint state, rejecting states far from every neuron.
pub fn select_start_neuron<T: Real>(
    map: &NeuralMap<T>,
    codec: &Autoencoder<T>,
    start: &JointState<T>,
) -> Result<usize> {
    let reduced = codec.encode_state(start)?;
    let (id, _) = map.nearest(&reduced)?;
    let cell = map.cell_of(&reduced)?;
    let gap = cell
        .iter()
        .zip(&map.neuron(id)?.cell)
        .map(|(a, b)| (a - b).abs())
        .max()
        .unwrap_or(0);
    if gap > START_COVERAGE_CELLS {
        return Err(Error::StartNotCovered { cells: gap });
    }
    Ok(id)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PlanResult<T> {
    pub neuron_path: Vec<usize>,
    pub reduced_path: Vec<ReducedPoint<T>>,
    pub joint_trajectory: Trajectory<T>,
    pub success: bool,
    pub outcome: Outcome,
    pub steps_used: usize,
    pub start_neuron: usize,
    pub goal_neuron: usize,
    pub goal_distance: T,
    pub trace: Vec<TraceStep<T>>,
}

/// Plans from a joint state to a Cartesian goal and decodes the neuron path.
pub fn plan<T: Real>(
    map: &NeuralMap<T>,
    start: &JointState<T>,
    goal: Vec3<T>,
    cfg: &PlannerConfig<T>,
    codec: &Autoencoder<T>,
    arm: &ArmConfig<T>,
) -> Result<PlanResult<T>> {
    cfg.validate()?;
    let start_neuron = select_start_neuron(map, codec, start)?;
    let selection = select_goal_neuron(map, goal, arm, codec, start)?;
    let np = plan_neurons(map, start_neuron, selection.neuron, cfg)?;
    let reduced_path = np
        .path
        .iter()
        .map(|&id| map.center_to_reduced(id))
        .collect::<Result<Vec<_>>>()?;
    let samples = reduced_path
        .iter()
        .map(|rp| {
            let mut s = codec.decode_state(rp)?;
            arm.clamp_to_limits(&mut s.positions);
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PlanResult {
        success: np.success(),
        outcome: np.outcome,
        steps_used: np.steps_used,
        neuron_path: np.path,
        reduced_path,
        joint_trajectory: Trajectory::from_plan(samples, cfg.playback_dt),
        start_neuron,
        goal_neuron: selection.neuron,
        goal_distance: selection.distance,
        trace: np.trace,
    })
}

/// True when every consecutive pair of `path` is joined by a positive forward weight.
pub fn is_valid_walk<T: Real>(map: &NeuralMap<T>, path: &[usize]) -> bool {
    path.iter().all(|&id| id < map.len()) && path.windows(2).all(|w| map.forward_weight(w[0], w[1]) > T::zero())
}

/// Path maximizing the product of forward weights (edge cost `-ln F`), or `None`.
pub fn oracle_path<T: Real>(map: &NeuralMap<T>, start: usize, goal: usize) -> Option<Vec<usize>> {
    if start >= map.len() || goal >= map.len() {
        return None;
    }
    let mut graph = DiGraph::<(), f64, usize>::with_capacity(map.len(), map.backward().nnz());
    for _ in 0..map.len() {
        graph.add_node(());
    }
    for r in 0..map.len() {
        for &(n, w) in map.successors(r) {
            if w > T::zero() {
                graph.add_edge(NodeIndex::new(r), NodeIndex::new(n), -w.as_f64().ln());
            }
        }
    }
    let target = NodeIndex::new(goal);
    astar(&graph, NodeIndex::new(start), |n| n == target, |e| *e.weight(), |_| 0.0)
        .map(|(_, path)| path.into_iter().map(NodeIndex::index).collect())
}
