//! Smoothness and accuracy of executed reaches, and summaries over trials.

use serde::{Deserialize, Serialize};

use crate::arm::{self, ArmConfig, JointState};
use crate::babble::Trajectory;
use crate::error::Result;
use crate::geometry::{norm3, sub, Vec3};
use crate::scalar::Real;

/// Number of equal-width goal-y bins used by [`summarize`].
pub const Y_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Jerk<T> {
    pub value: T,
    /// Fewer than four samples; the value is reported as zero.
    pub degenerate: bool,
}

/// Mean norm of the third forward difference of joint positions (unit step).
pub fn norm_jerk<T: Real>(traj: &Trajectory<T>) -> Jerk<T> {
    norm_jerk_positions(&traj.positions().collect::<Vec<_>>())
}

pub fn norm_jerk_positions<T: Real>(q: &[&[T]]) -> Jerk<T> {
    if q.len() < 4 {
        return Jerk {
            value: T::zero(),
            degenerate: true,
        };
    }
    let three = T::lit(3.0);
    let total: T = q
        .windows(4)
        .map(|w| {
            (0..w[0].len())
                .map(|j| {
                    let d = w[3][j] - three * w[2][j] + three * w[1][j] - w[0][j];
                    d * d
                })
                .sum::<T>()
                .sqrt()
        })
        .sum();
    Jerk {
        value: total / T::from_usize_lossy(q.len() - 3),
        degenerate: false,
    }
}

/// Distance between the goal and the end effector at `final_joints`.
pub fn end_effector_error<T: Real>(goal: Vec3<T>, final_joints: &JointState<T>, arm: &ArmConfig<T>) -> Result<T> {
    Ok(norm3(sub(goal, arm::forward_kinematics(final_joints, arm)?)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MetricReport<T> {
    pub norm_jerk: T,
    pub end_effector_error: T,
    pub goal_y: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Stats<T> {
    pub count: usize,
    pub median: T,
    pub mean: T,
    /// Population standard deviation.
    pub std: T,
    pub q1: T,
    pub q3: T,
    pub min: T,
    pub max: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct YBin<T> {
    pub lo: T,
    pub hi: T,
    pub count: usize,
    pub mean_jerk: Option<T>,
    pub mean_error: Option<T>,
    pub std_jerk: Option<T>,
    pub std_error: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Summary<T> {
    pub norm_jerk: Stats<T>,
    pub end_effector_error: Stats<T>,
    pub by_goal_y: Vec<YBin<T>>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile<T: Real>(sorted: &[T], p: f64) -> T {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::lit(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Order statistics of a nonempty sample; `None` when empty.
pub fn stats<T: Real>(values: &[T]) -> Option<Stats<T>> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("metrics are not NaN"));
    let n = T::from_usize_lossy(v.len());
    let mean = v.iter().copied().sum::<T>() / n;
    let var = v.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
    Some(Stats {
        count: v.len(),
        median: quantile(&v, 0.5),
        mean,
        std: var.sqrt(),
        q1: quantile(&v, 0.25),
        q3: quantile(&v, 0.75),
        min: v[0],
        max: v[v.len() - 1],
    })
}

pub fn summarize<T: Real>(reports: &[MetricReport<T>]) -> Option<Summary<T>> {
    let jerk: Vec<T> = reports.iter().map(|r| r.norm_jerk).collect();
    let err: Vec<T> = reports.iter().map(|r| r.end_effector_error).collect();
    Some(Summary {
        norm_jerk: stats(&jerk)?,
        end_effector_error: stats(&err)?,
        by_goal_y: y_bins(reports),
    })
}

fn y_bins<T: Real>(reports: &[MetricReport<T>]) -> Vec<YBin<T>> {
    let lo = reports.iter().map(|r| r.goal_y).fold(T::infinity(), T::min);
    let hi = reports.iter().map(|r| r.goal_y).fold(T::neg_infinity(), T::max);
    let width = (hi - lo) / T::from_usize_lossy(Y_BINS);
    let mut members: Vec<Vec<&MetricReport<T>>> = vec![Vec::new(); Y_BINS];
    for r in reports {
        let k = if width > T::zero() {
            ((r.goal_y - lo) / width).floor().to_usize().unwrap_or(0).min(Y_BINS - 1)
        } else {
            0
        };
        members[k].push(r);
    }
    members
        .into_iter()
        .enumerate()
        .map(|(k, m)| {
            let jerk: Vec<T> = m.iter().map(|r| r.norm_jerk).collect();
            let err: Vec<T> = m.iter().map(|r| r.end_effector_error).collect();
            let (sj, se) = (stats(&jerk), stats(&err));
            YBin {
                lo: lo + width * T::from_usize_lossy(k),
                hi: lo + width * T::from_usize_lossy(k + 1),
                count: m.len(),
                mean_jerk: sj.as_ref().map(|s| s.mean),
                mean_error: se.as_ref().map(|s| s.mean),
                std_jerk: sj.map(|s| s.std),
                std_error: se.map(|s| s.std),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jerk_of(q: &[f64]) -> Jerk<f64> {
        let rows: Vec<Vec<f64>> = q.iter().map(|&x| vec![x]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        norm_jerk_positions(&refs)
    }

    #[test]
    fn jerk_examples() {
        assert_eq!(jerk_of(&[1.0; 6]).value, 0.0);
        let quad: Vec<f64> = (0..8).map(|i| (i * i) as f64).collect();
        assert_eq!(jerk_of(&quad).value, 0.0);
        let cube: Vec<f64> = (0..8).map(|i| (i * i * i) as f64).collect();
        assert!((jerk_of(&cube).value - 6.0).abs() < 1e-12);
        let short = jerk_of(&[0.0, 1.0, 5.0]);
        assert!(short.degenerate);
        assert_eq!(short.value, 0.0);
    }

    #[test]
    fn summary_examples() {
        let r = |j: f64| MetricReport {
            norm_jerk: j,
            end_effector_error: j,
            goal_y: j,
        };
        let one = summarize(&[r(4.0)]).unwrap();
        assert_eq!(one.norm_jerk.median, 4.0);
        assert_eq!(one.norm_jerk.mean, 4.0);
        assert_eq!(one.norm_jerk.std, 0.0);
        let three = summarize(&[r(3.0), r(1.0), r(2.0)]).unwrap();
        assert_eq!(three.norm_jerk.median, 2.0);
        assert_eq!(three.by_goal_y.iter().map(|b| b.count).sum::<usize>(), 3);
        assert_eq!(three.by_goal_y[9].count, 1);
        assert!(summarize::<f64>(&[]).is_none());
    }
}
