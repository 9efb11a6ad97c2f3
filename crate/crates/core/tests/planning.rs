use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reach_core::arm::{self, ArcSpec, ArmConfig, JointState};
use reach_core::babble::{self, BabbleProtocol};
use reach_core::bundles::{self, BundleConfig};
use reach_core::codec::{self, Activation, Architecture, TrainHyper};
use reach_core::io;
use reach_core::metrics;
use reach_core::neural_map::{self, NeuralMap, ResolutionVector};
use reach_core::planner::{self, Outcome, PlannerConfig, PlannerState, TieBreak};

fn line_map(n: i64) -> NeuralMap<f64> {
    NeuralMap::from_cells((0..n).map(|i| vec![i]), ResolutionVector(vec![0.1]), 1.0, 1.0).unwrap()
}

/// n0 -> n1 -> n2 with unit forward weights.
fn chain3() -> NeuralMap<f64> {
    let mut map = line_map(3);
    map.set_forward_edge(0, 1, 1.0).unwrap();
    map.set_forward_edge(1, 2, 1.0).unwrap();
    map
}

#[test]
fn activation_rises_toward_the_goal_along_a_chain() {
    let map = chain3();
    let cfg = PlannerConfig::default();
    let mut st = PlannerState::new(&map, 0, 2).unwrap();
    for _ in 0..200 {
        planner::spread_step(&mut st, &map, &cfg);
    }
    let (g, a, b) = (st.beta[2], st.beta[1], st.beta[0]);
    assert!(g > a && a > b && b > 0.0, "{g} {a} {b}");
}

#[test]
fn spread_matches_a_dense_reference_update() {
    let map = chain3();
    let cfg = PlannerConfig::default();
    let mut st = PlannerState::new(&map, 0, 2).unwrap();
    let mut beta = [0.0f64; 3];
    let b = |i: usize, j: usize| map.backward_weight(i, j);
    for _ in 0..50 {
        planner::spread_step(&mut st, &map, &cfg);
        let prev = beta;
        for i in 0..3 {
            let input: f64 = (0..3).map(|j| b(i, j) * prev[j]).sum::<f64>() + if i == 2 { 1.0 } else { 0.0 };
            beta[i] = (prev[i] + 0.1 * input * (1.0 - prev[i]) - prev[i] / 1e3).clamp(0.0, 1.0);
        }
        for i in 0..3 {
            assert!((st.beta[i] - beta[i]).abs() < 1e-14);
        }
    }
}

#[test]
fn chain_plan_follows_the_unique_path() {
    let map = chain3();
    let p = planner::plan_neurons(&map, 0, 2, &PlannerConfig::default()).unwrap();
    assert_eq!(p.outcome, Outcome::Reached);
    assert_eq!(p.path, vec![0, 1, 2]);
    assert_eq!(planner::oracle_path(&map, 0, 2), Some(vec![0, 1, 2]));
    assert_eq!(planner::oracle_path(&map, 2, 0), None);
    assert!(planner::is_valid_walk(&map, &p.path));
}

fn random_map(seed: u64) -> NeuralMap<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..12);
    let mut map = line_map(n);
    let edges = rng.gen_range(0..(3 * n));
    for _ in 0..edges {
        let a = rng.gen_range(0..n as usize);
        let b = rng.gen_range(0..n as usize);
        if a != b {
            map.set_forward_edge(a, b, rng.gen_range(0.05..1.0)).unwrap();
        }
    }
    map
}

#[test]
fn plan_success_implies_oracle_reachability() {
    let mut successes = 0;
    for seed in 0..100 {
        let map = random_map(seed);
        let goal = map.len() - 1;
        for tie_break in [TieBreak::LowestId, TieBreak::Random { seed }] {
            let cfg = PlannerConfig {
                tie_break,
                warmup_steps: 20,
                ..PlannerConfig::default()
            };
            let p = planner::plan_neurons(&map, 0, goal, &cfg).unwrap();
            assert!(planner::is_valid_walk(&map, &p.path));
            let mut seen = p.path.clone();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), p.path.len(), "path revisits a neuron");
            if p.success() {
                successes += 1;
                assert!(planner::oracle_path(&map, 0, goal).is_some());
            }
        }
    }
    assert!(successes > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn beta_stays_in_the_unit_interval(seed in any::<u64>(), steps in 1usize..400, eta in 0.01f64..5.0, tau in 0.5f64..1e4) {
        let mut map = random_map(seed);
        // Saturate some backward weights so inputs can exceed one.
        for i in 1..map.len() {
            map.set_forward_edge(i - 1, i, 1.0).unwrap();
        }
        let cfg = PlannerConfig { eta_b: eta, tau_b: tau, ..PlannerConfig::default() };
        let mut st = PlannerState::new(&map, 0, map.len() - 1).unwrap();
        for _ in 0..steps {
            planner::spread_step(&mut st, &map, &cfg);
        }
        prop_assert!(st.beta.iter().all(|b| b.is_finite() && (0.0..=1.0).contains(b)));
        prop_assert_eq!((0..map.len()).filter(|&i| st.gamma(i) == 1.0).count(), 1);
    }
}

struct Fixture {
    arm: ArmConfig<f64>,
    dataset: babble::Dataset<f64>,
    model: codec::Autoencoder<f64>,
    map: NeuralMap<f64>,
}

fn planar_fixture() -> Fixture {
    let arm = ArmConfig::planar_2dof();
    let arc = ArcSpec {
        center: [0.0, 0.0, 0.0],
        radius: 1.5,
        normal: [0.0, 0.0, 1.0],
        angle_range: (0.2, 1.2),
    };
    let mut p = BabbleProtocol::single_start(JointState::at_rest(vec![0.3, 0.6]), arc, 11);
    p.n_train_per_start = 20;
    p.n_test_per_start = 5;
    p.steps_per_trajectory = 20;
    let dataset = babble::generate_dataset(&p, &arm).unwrap();
    let stats = codec::fit_norm_stats(&dataset).unwrap();
    let hyper = TrainHyper {
        learning_rate: 0.1,
        epochs: 200,
        rng_seed: 12,
        architecture: Architecture {
            hidden: vec![16],
            hidden_activation: Activation::Tanh,
            bottleneck_activation: Activation::Tanh,
            output_activation: Activation::Logistic,
        },
        validation_fraction: 0.1,
        patience: 50,
    };
    let (model, _) = codec::train_autoencoder(&dataset, &stats, 2, &hyper).unwrap();
    let reduced: Vec<_> = dataset.train.iter().map(|t| model.encode_trajectory(t).unwrap()).collect();
    let res = neural_map::compute_resolution(&reduced).unwrap();
    let mut map = neural_map::build_map(&reduced, &res, 1.0).unwrap();
    bundles::form_bundles(&mut map, &reduced, &BundleConfig { phi: 3, ..BundleConfig::default() }).unwrap();
    Fixture {
        arm,
        dataset,
        model,
        map,
    }
}

#[test]
fn goal_at_a_training_endpoint_selects_a_neighboring_cell() {
    let f = planar_fixture();
    let start = &f.dataset.protocol.starts[0];
    for t in &f.dataset.train {
        let goal = arm::forward_kinematics(t.last(), &f.arm).unwrap();
        let sel = planner::select_goal_neuron(&f.map, goal, &f.arm, &f.model, start).unwrap();
        let reduced = f.model.encode_state(&sel.joints).unwrap();
        assert_eq!(f.map.nearest(&reduced).unwrap().0, sel.neuron);
        let cell = &f.map.neuron(sel.neuron).unwrap().cell;
        let end_cell = f.map.cell_of(&f.model.encode_state(t.last()).unwrap()).unwrap();
        let gap = end_cell.iter().zip(cell).map(|(a, b)| (a - b).abs()).max().unwrap();
        assert!(gap <= 1, "goal neuron is {gap} cells from the endpoint");
    }
}

#[test]
fn planning_leaves_the_map_untouched() {
    let f = planar_fixture();
    let before = io::to_string(io::MAP, &f.map).unwrap();
    let cfg = PlannerConfig {
        warmup_steps: 40,
        ..PlannerConfig::default()
    };
    let mut reached = 0;
    for tg in &f.dataset.test_goals {
        let r = planner::plan(&f.map, &tg.start, tg.goal, &cfg, &f.model, &f.arm).unwrap();
        assert!(planner::is_valid_walk(&f.map, &r.neuron_path));
        assert_eq!(r.joint_trajectory.len(), r.neuron_path.len());
        assert!(r.joint_trajectory.samples().iter().all(|s| f.arm.within_limits(&s.positions)));
        assert!(metrics::end_effector_error(tg.goal, r.joint_trajectory.last(), &f.arm).unwrap() >= 0.0);
        reached += r.success as usize;
    }
    assert!(reached > 0);
    assert_eq!(io::to_string(io::MAP, &f.map).unwrap(), before);
}

#[test]
fn start_far_from_the_babbled_region_is_rejected() {
    let f = planar_fixture();
    let tg = &f.dataset.test_goals[0];
    let cell = f.map.cell_of(&f.model.encode_state(&tg.start).unwrap()).unwrap();
    let shifted = |d: i64| cell.iter().map(|c| c + d).collect::<Vec<_>>();
    let far = NeuralMap::from_cells(
        [shifted(10), shifted(11)],
        f.map.resolution().clone(),
        1.0,
        f.map.scale(),
    )
    .unwrap();
    let err = planner::plan(&far, &tg.start, tg.goal, &PlannerConfig::default(), &f.model, &f.arm).unwrap_err();
    assert!(matches!(err, reach_core::Error::StartNotCovered { cells: 10 }), "{err}");
    let near = NeuralMap::from_cells([shifted(3)], f.map.resolution().clone(), 1.0, f.map.scale()).unwrap();
    assert!(planner::select_start_neuron(&near, &f.model, &tg.start).is_ok());
}
