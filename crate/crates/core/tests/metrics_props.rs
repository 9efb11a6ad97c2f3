use proptest::prelude::*;
use reach_core::arm::{ArmConfig, JointState};
use reach_core::babble::Trajectory;
use reach_core::metrics::{self, MetricReport};

fn traj(rows: &[Vec<f64>]) -> Trajectory<f64> {
    Trajectory::from_plan(rows.iter().map(|r| JointState::at_rest(r.clone())).collect(), 0.1)
}

/// Third differences written out term by term.
fn reference_jerk(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len() - 3;
    (0..n)
        .map(|t| {
            (0..rows[0].len())
                .map(|j| {
                    let d = rows[t + 3][j] - 3.0 * rows[t + 2][j] + 3.0 * rows[t + 1][j] - rows[t][j];
                    d * d
                })
                .sum::<f64>()
                .sqrt()
        })
        .sum::<f64>()
        / n as f64
}

#[test]
fn cubic_has_constant_third_difference() {
    let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![(i * i * i) as f64]).collect();
    let j = metrics::norm_jerk(&traj(&rows));
    assert!(!j.degenerate);
    assert!((j.value - 6.0).abs() < 1e-9);
}

#[test]
fn end_effector_error_example() {
    let arm = ArmConfig::planar_2dof();
    let e: f64 = metrics::end_effector_error([2.0, 1.0, 0.0], &JointState::zeros(2), &arm).unwrap();
    assert!((e - 1.0).abs() < 1e-12);
}

fn rows() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..4).prop_flat_map(|d| prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), 4..30))
}

proptest! {
    #[test]
    fn jerk_matches_the_reference_and_is_nonnegative(r in rows()) {
        let j = metrics::norm_jerk(&traj(&r)).value;
        prop_assert!(j >= 0.0);
        prop_assert!((j - reference_jerk(&r)).abs() <= 1e-12 * (1.0 + j));
    }

    #[test]
    fn jerk_ignores_a_constant_offset(r in rows(), c in -5.0f64..5.0) {
        let shifted: Vec<Vec<f64>> = r.iter().map(|row| row.iter().map(|x| x + c).collect()).collect();
        let a = metrics::norm_jerk(&traj(&r)).value;
        let b = metrics::norm_jerk(&traj(&shifted)).value;
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
    }

    #[test]
    fn summary_statistics_bracket_the_data(v in prop::collection::vec(0.0f64..10.0, 1..50), y in prop::collection::vec(-1.0f64..1.0, 50)) {
        let reports: Vec<MetricReport<f64>> = v
            .iter()
            .zip(&y)
            .map(|(&j, &gy)| MetricReport { norm_jerk: j, end_effector_error: j, goal_y: gy })
            .collect();
        let s = metrics::summarize(&reports).unwrap();
        let st = &s.norm_jerk;
        prop_assert!(st.min <= st.q1 && st.q1 <= st.median && st.median <= st.q3 && st.q3 <= st.max);
        prop_assert!(st.min <= st.mean && st.mean <= st.max);
        prop_assert!(st.std >= 0.0);
        prop_assert_eq!(s.by_goal_y.iter().map(|b| b.count).sum::<usize>(), reports.len());
    }
}
