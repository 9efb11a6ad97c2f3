//! Kinematic simulator of a serial revolute arm.
//!
//! Every joint rotates about one axis of its local frame and is followed by a
//! straight link along the local `x` axis. With all angles at zero the arm is
//! outstretched along the base frame's `x` axis.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self as g, Pose, Vec3};
use crate::scalar::Real;

/// Local rotation axis of a revolute joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JointAxis {
    X,
    Y,
    Z,
}

impl JointAxis {
    fn unit<T: Real>(self) -> Vec3<T> {
        let (o, z) = (T::one(), T::zero());
        match self {
            JointAxis::X => [o, z, z],
            JointAxis::Y => [z, o, z],
            JointAxis::Z => [z, z, o],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ArmConfig<T> {
    pub link_lengths: Vec<T>,
    pub axes: Vec<JointAxis>,
    /// `(min, max)` in radians per joint.
    pub joint_limits: Vec<(T, T)>,
    pub base_pose: Pose<T>,
    /// Cap on |joint velocity| in rad/s.
    pub max_velocity: T,
}

impl<T: Real> ArmConfig<T> {
    /// Two unit links rotating about `z`: the planar arm of the textbook examples.
    pub fn planar_2dof() -> Self {
        let pi = T::PI();
        Self {
            link_lengths: vec![T::one(), T::one()],
            axes: vec![JointAxis::Z, JointAxis::Z],
            joint_limits: vec![(-pi, pi); 2],
            base_pose: Pose::identity(),
            max_velocity: T::lit(10.0),
        }
    }

    /// Five joints approximating a humanoid left arm: shoulder yaw, pitch and
    /// roll followed by elbow pitch and a distal yaw.
    pub fn humanoid_5dof() -> Self {
        let lengths = [0.28, 0.28, 0.10, 0.18, 0.10];
        Self {
            link_lengths: lengths.iter().map(|&l| T::lit(l)).collect(),
            axes: vec![
                JointAxis::Z,
                JointAxis::Y,
                JointAxis::X,
                JointAxis::Y,
                JointAxis::Z,
            ],
            joint_limits: [
                (-1.6, 1.6),
                (-1.6, 1.6),
                (-1.6, 1.6),
                (-0.2, 2.4),
                (-1.6, 1.6),
            ]
            .iter()
            .map(|&(a, b)| (T::lit(a), T::lit(b)))
            .collect(),
            base_pose: Pose::identity(),
            max_velocity: T::lit(3.0),
        }
    }

    pub fn n_joints(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn reach(&self) -> T {
        self.link_lengths.iter().copied().sum()
    }

    pub fn base_position(&self) -> Vec3<T> {
        self.base_pose.translation
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_joints();
        if n < 2 {
            return Err(Error::Config(format!("arm needs at least 2 joints, got {n}")));
        }
        if self.axes.len() != n || self.joint_limits.len() != n {
            return Err(Error::Config(format!(
                "arm has {n} links but {} axes and {} joint limits",
                self.axes.len(),
                self.joint_limits.len()
            )));
        }
        if let Some(i) = self.link_lengths.iter().position(|&l| !(l > T::zero())) {
            return Err(Error::Config(format!("link {i} length must be positive")));
        }
        if let Some(i) = self.joint_limits.iter().position(|&(lo, hi)| !(lo < hi)) {
            return Err(Error::Config(format!("joint {i} limits must satisfy min < max")));
        }
        if !(self.max_velocity > T::zero()) {
            return Err(Error::Config("max_velocity must be positive".into()));
        }
        Ok(())
    }

    pub fn clamp_to_limits(&self, positions: &mut [T]) {
        for (q, &(lo, hi)) in positions.iter_mut().zip(&self.joint_limits) {
            *q = q.max(lo).min(hi);
        }
    }

    pub fn within_limits(&self, positions: &[T]) -> bool {
        positions.len() == self.n_joints()
            && positions
                .iter()
                .zip(&self.joint_limits)
                .all(|(&q, &(lo, hi))| q >= lo && q <= hi)
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.n_joints() {
            return Err(Error::DimensionMismatch {
                what: "joint count",
                expected: self.n_joints(),
                got,
            });
        }
        Ok(())
    }
}

/// Joint positions (rad) and velocities (rad/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct JointState<T> {
    pub positions: Vec<T>,
    pub velocities: Vec<T>,
}

impl<T: Real> JointState<T> {
    pub fn at_rest(positions: Vec<T>) -> Self {
        let velocities = vec![T::zero(); positions.len()];
        Self {
            positions,
            velocities,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::at_rest(vec![T::zero(); n])
    }

    pub fn n_joints(&self) -> usize {
        self.positions.len()
    }

    /// Positions followed by velocities: the raw motor-sensory feature vector.
    pub fn features(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(2 * self.positions.len());
        out.extend_from_slice(&self.positions);
        out.extend_from_slice(&self.velocities);
        out
    }

    pub fn from_features(features: &[T]) -> Self {
        let n = features.len() / 2;
        Self {
            positions: features[..n].to_vec(),
            velocities: features[n..2 * n].to_vec(),
        }
    }
}

/// End-effector position plus the per-joint quantities needed for the Jacobian.
struct Chain<T> {
    end_effector: Vec3<T>,
    origins: Vec<Vec3<T>>,
    axes: Vec<Vec3<T>>,
}

fn chain<T: Real>(arm: &ArmConfig<T>, q: &[T]) -> Chain<T> {
    let mut rot = arm.base_pose.rotation;
    let mut pos = arm.base_pose.translation;
    let n = arm.n_joints();
    let mut origins = Vec::with_capacity(n);
    let mut axes = Vec::with_capacity(n);
    for i in 0..n {
        let local = arm.axes[i].unit::<T>();
        rot = g::mat_mul(&rot, &g::axis_angle(local, q[i]));
        origins.push(pos);
        axes.push(g::mat_vec(&rot, local));
        pos = g::add(pos, g::scale(g::column(&rot, 0), arm.link_lengths[i]));
    }
    Chain {
        end_effector: pos,
        origins,
        axes,
    }
}

/// End-effector position in the world frame.
pub fn forward_kinematics<T: Real>(joints: &JointState<T>, arm: &ArmConfig<T>) -> Result<Vec3<T>> {
    forward_kinematics_positions(&joints.positions, arm)
}

pub fn forward_kinematics_positions<T: Real>(q: &[T], arm: &ArmConfig<T>) -> Result<Vec3<T>> {
    arm.check_len(q.len())?;
    Ok(chain(arm, q).end_effector)
}

/// Damped-least-squares settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct IkOptions<T> {
    /// Accepted position residual in metres.
    pub tolerance: T,
    pub damping: T,
    pub max_iterations: usize,
    /// Largest joint change per iteration (rad).
    pub max_step: T,
    /// Gain of the secondary task pulling redundant arms toward the seed.
    pub seed_gain: T,
}

impl<T: Real> Default for IkOptions<T> {
    fn default() -> Self {
        Self {
            tolerance: T::lit(1e-4),
            damping: T::lit(1e-2),
            max_iterations: 200,
            max_step: T::lit(0.3),
            seed_gain: T::lit(0.1),
        }
    }
}

pub fn inverse_kinematics<T: Real>(
    target: Vec3<T>,
    arm: &ArmConfig<T>,
    seed: &JointState<T>,
) -> Result<JointState<T>> {
    inverse_kinematics_with(target, arm, seed, &IkOptions::default())
}

/// Damped-least-squares Jacobian iteration from `seed`, clamped to the joint
/// limits after every step.
///
/// The damping shrinks with the residual so iterates keep converging when the
/// target sits on the workspace boundary; iteration continues past `tolerance`
/// until the residual stops mattering or the budget runs out, so the answer
/// is as tight as the budget allows. Joints that a step would push past a
/// limit they already sit on are dropped from the Jacobian for that step.
pub fn inverse_kinematics_with<T: Real>(
    target: Vec3<T>,
    arm: &ArmConfig<T>,
    seed: &JointState<T>,
    opts: &IkOptions<T>,
) -> Result<JointState<T>> {
    arm.check_len(seed.positions.len())?;
    let reach = arm.reach();
    let distance = g::norm3(g::sub(target, arm.base_position()));
    if distance > reach * (T::one() + T::lit(1e-12)) {
        return Err(Error::Unreachable {
            distance: distance.as_f64(),
            reach: reach.as_f64(),
        });
    }

    let n = arm.n_joints();
    let mut seed_q = seed.positions.clone();
    arm.clamp_to_limits(&mut seed_q);
    let mut q = seed_q.clone();
    let fine = opts.tolerance * T::lit(1e-5);
    let mut best = (T::infinity(), q.clone());

    for _ in 0..opts.max_iterations {
        let c = chain(arm, &q);
        let err = g::sub(target, c.end_effector);
        let err_norm = g::norm3(err);
        if err_norm < best.0 {
            best = (err_norm, q.clone());
        }
        if err_norm <= fine {
            break;
        }
        // Columns of the 3 x n positional Jacobian.
        let full: Vec<Vec3<T>> = (0..n)
            .map(|i| g::cross(c.axes[i], g::sub(c.end_effector, c.origins[i])))
            .collect();
        let lambda_sq = opts.damping * opts.damping * (err_norm / reach).min(T::one());
        let mut pinned = vec![false; n];
        let mut solved = None;
        // Joints on a limit that the step would push further out are frozen and the step is re-solved.
        for _ in 0..2 {
            let jac: Vec<Vec3<T>> = full
                .iter()
                .zip(&pinned)
                .map(|(col, &p)| if p { [T::zero(); 3] } else { *col })
                .collect();
            let Some(dq) = dls_step(&jac, err, lambda_sq, &seed_q, &q, &pinned, opts.seed_gain) else {
                break;
            };
            let mut changed = false;
            for i in 0..n {
                let (lo, hi) = arm.joint_limits[i];
                if !pinned[i] && ((q[i] <= lo && dq[i] < T::zero()) || (q[i] >= hi && dq[i] > T::zero())) {
                    pinned[i] = true;
                    changed = true;
                }
            }
            solved = Some(dq);
            if !changed {
                break;
            }
        }
        let Some(dq) = solved else { break };

        let step = dq.iter().fold(T::zero(), |m, d| m.max(d.abs()));
        let shrink = if step > opts.max_step {
            opts.max_step / step
        } else {
            T::one()
        };
        for i in 0..n {
            q[i] += dq[i] * shrink;
        }
        arm.clamp_to_limits(&mut q);
    }

    let c = chain(arm, &q);
    let final_err = g::norm3(g::sub(target, c.end_effector));
    if final_err < best.0 {
        best = (final_err, q);
    }
    if best.0 <= opts.tolerance {
        Ok(JointState::at_rest(best.1))
    } else {
        Err(Error::NoConvergence {
            iterations: opts.max_iterations,
            residual: best.0.as_f64(),
        })
    }
}

/// Damped-least-squares step plus the seed pull projected onto the null space.
fn dls_step<T: Real>(
    jac: &[Vec3<T>],
    err: Vec3<T>,
    lambda_sq: T,
    seed_q: &[T],
    q: &[T],
    pinned: &[bool],
    seed_gain: T,
) -> Option<Vec<T>> {
    let n = jac.len();
    let mut a = [[T::zero(); 3]; 3];
    for col in jac {
        for r in 0..3 {
            for s in 0..3 {
                a[r][s] += col[r] * col[s];
            }
        }
    }
    for (r, row) in a.iter_mut().enumerate() {
        row[r] += lambda_sq;
    }
    let y = g::solve3(a, err)?;
    let mut dq: Vec<T> = jac.iter().map(|col| g::dot3(*col, y)).collect();
    if n > 3 && seed_gain > T::zero() {
        let pull: Vec<T> = (0..n)
            .map(|i| if pinned[i] { T::zero() } else { seed_gain * (seed_q[i] - q[i]) })
            .collect();
        let mut jp = [T::zero(); 3];
        for (col, &p) in jac.iter().zip(&pull) {
            jp = g::add(jp, g::scale(*col, p));
        }
        if let Some(z) = g::solve3(a, jp) {
            for i in 0..n {
                dq[i] += pull[i] - g::dot3(jac[i], z);
            }
        }
    }
    Some(dq)
}

/// Circular arc `center + radius (cos θ u + sin θ v)` for θ in `angle_range`.
///
/// `u` is the world `x` axis projected into the arc plane (world `y` when the
/// normal is parallel to `x`) and `v = normal × u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ArcSpec<T> {
    pub center: Vec3<T>,
    pub radius: T,
    pub normal: Vec3<T>,
    pub angle_range: (T, T),
}

impl<T: Real> ArcSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > T::zero()) {
            return Err(Error::Config("arc.radius must be positive".into()));
        }
        if !(self.angle_range.0 <= self.angle_range.1) {
            return Err(Error::Config("arc.angle_range must satisfy lo <= hi".into()));
        }
        let tol = T::lit(1e-9).max(T::epsilon() * T::lit(16.0));
        if (g::norm3(self.normal) - T::one()).abs() > tol {
            return Err(Error::Config("arc.normal must be a unit vector".into()));
        }
        Ok(())
    }

    pub fn basis(&self) -> (Vec3<T>, Vec3<T>) {
        let n = self.normal;
        let reject = |e: Vec3<T>| g::sub(e, g::scale(n, g::dot3(e, n)));
        let (o, z) = (T::one(), T::zero());
        let mut u = reject([o, z, z]);
        if g::norm3(u) < T::lit(1e-6) {
            u = reject([z, o, z]);
        }
        let u = g::scale(u, T::one() / g::norm3(u));
        (u, g::cross(n, u))
    }

    pub fn point_at(&self, theta: T) -> Vec3<T> {
        let (u, v) = self.basis();
        let (s, c) = theta.sin_cos();
        g::add(
            self.center,
            g::scale(g::add(g::scale(u, c), g::scale(v, s)), self.radius),
        )
    }

    /// Distance from `p` to the full circle carrying this arc.
    pub fn distance_to_circle(&self, p: Vec3<T>) -> T {
        let d = g::sub(p, self.center);
        let along = g::dot3(d, self.normal);
        let in_plane = g::norm3(g::sub(d, g::scale(self.normal, along)));
        ((in_plane - self.radius).powi(2) + along * along).sqrt()
    }

    /// `n` points spread evenly over the angle range, endpoints included.
    pub fn evenly_spaced(&self, n: usize) -> Vec<Vec3<T>> {
        let (lo, hi) = self.angle_range;
        (0..n)
            .map(|i| {
                let f = if n == 1 {
                    T::lit(0.5)
                } else {
                    T::from_usize_lossy(i) / T::from_usize_lossy(n - 1)
                };
                self.point_at(lo + (hi - lo) * f)
            })
            .collect()
    }
}

/// `n` points on the arc with i.i.d. uniform angles, reproducible from `rng_seed`.
pub fn sample_arc_targets<T: Real>(arc: &ArcSpec<T>, n: usize, rng_seed: u64) -> Result<Vec<Vec3<T>>> {
    arc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (lo, hi) = arc.angle_range;
    Ok((0..n)
        .map(|_| {
            let u = T::lit(rng.gen::<f64>());
            arc.point_at(lo + (hi - lo) * u)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn planar() -> ArmConfig<f64> {
        ArmConfig::planar_2dof()
    }

    fn close(a: Vec3<f64>, b: [f64; 3], tol: f64) -> bool {
        (0..3).all(|i| (a[i] - b[i]).abs() <= tol)
    }

    #[test]
    fn planar_forward_kinematics_examples() {
        let arm = planar();
        let fk = |a: f64, b: f64| forward_kinematics(&JointState::at_rest(vec![a, b]), &arm).unwrap();
        assert!(close(fk(0.0, 0.0), [2.0, 0.0, 0.0], 1e-15));
        assert!(close(fk(FRAC_PI_2, 0.0), [0.0, 2.0, 0.0], 1e-15));
        assert!(close(fk(FRAC_PI_2, -FRAC_PI_2), [1.0, 1.0, 0.0], 1e-15));
    }

    #[test]
    fn fk_rejects_wrong_joint_count() {
        let err = forward_kinematics(&JointState::zeros(3), &planar()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, got: 3, .. }));
    }

    #[test]
    fn planar_inverse_kinematics_examples() {
        let arm = planar();
        let q = inverse_kinematics([2.0, 0.0, 0.0], &arm, &JointState::zeros(2)).unwrap();
        assert!(q.positions.iter().all(|a| a.abs() < 1e-9));
        assert!(q.velocities.iter().all(|&v| v == 0.0));

        let seed = JointState::at_rest(vec![1.0, -1.0]);
        let q = inverse_kinematics([1.0, 1.0, 0.0], &arm, &seed).unwrap();
        assert!((q.positions[0] - FRAC_PI_2).abs() < 1e-6, "{:?}", q.positions);
        assert!((q.positions[1] + FRAC_PI_2).abs() < 1e-6, "{:?}", q.positions);
    }

    #[test]
    fn unreachable_target_is_reported() {
        let err = inverse_kinematics([3.0, 0.0, 0.0], &planar(), &JointState::zeros(2)).unwrap_err();
        assert!(matches!(err, Error::Unreachable { .. }));
    }

    #[test]
    fn out_of_plane_target_fails_to_converge() {
        let err = inverse_kinematics([1.0, 0.0, 0.5], &planar(), &JointState::zeros(2)).unwrap_err();
        match err {
            Error::NoConvergence { residual, .. } => assert!(residual > 0.4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn boundary_target_converges_tightly() {
        let q = inverse_kinematics([0.0, 2.0, 0.0], &planar(), &JointState::zeros(2)).unwrap();
        assert!((q.positions[0] - FRAC_PI_2).abs() < 1e-3, "{:?}", q.positions);
        assert!(q.positions[1].abs() < 1e-3, "{:?}", q.positions);
    }

    #[test]
    fn invalid_arms_are_rejected() {
        let mut arm = planar();
        arm.link_lengths[1] = 0.0;
        assert!(arm.validate().is_err());
        let mut arm = planar();
        arm.joint_limits[0] = (1.0, -1.0);
        assert!(arm.validate().is_err());
        let mut arm = planar();
        arm.link_lengths.truncate(1);
        arm.axes.truncate(1);
        arm.joint_limits.truncate(1);
        assert!(arm.validate().is_err());
        assert!(ArmConfig::<f64>::humanoid_5dof().validate().is_ok());
    }

    #[test]
    fn degenerate_arc_range_gives_the_zero_angle_point() {
        let arc = ArcSpec {
            center: [0.0, 0.0, 0.0],
            radius: 1.5,
            normal: [0.0, 0.0, 1.0],
            angle_range: (0.0, 0.0),
        };
        let pts = sample_arc_targets(&arc, 1, 7).unwrap();
        assert!(close(pts[0], [1.5, 0.0, 0.0], 1e-15));
    }

    #[test]
    fn arc_samples_lie_on_the_arc_and_repeat_with_the_seed() {
        let n = {
            let v: [f64; 3] = [0.2, -0.3, 0.9];
            let l = g::norm3(v);
            g::scale(v, 1.0 / l)
        };
        let arc = ArcSpec {
            center: [0.3, 0.1, -0.2],
            radius: 0.55,
            normal: n,
            angle_range: (-1.0, 2.0),
        };
        let pts = sample_arc_targets(&arc, 1000, 42).unwrap();
        for p in &pts {
            let d = g::sub(*p, arc.center);
            assert!((g::norm3(d) - arc.radius).abs() < 1e-9);
            assert!(g::dot3(d, n).abs() < 1e-9);
        }
        assert_eq!(pts, sample_arc_targets(&arc, 1000, 42).unwrap());
        assert_ne!(pts, sample_arc_targets(&arc, 1000, 43).unwrap());
    }

    #[test]
    fn arc_angle_mean_is_near_the_midpoint() {
        let arc = ArcSpec {
            center: [0.0; 3],
            radius: 1.0,
            normal: [0.0, 0.0, 1.0],
            angle_range: (-0.5 * PI, 0.5 * PI),
        };
        let pts = sample_arc_targets(&arc, 10_000, 3).unwrap();
        let mean = pts.iter().map(|p| p[1].atan2(p[0])).sum::<f64>() / pts.len() as f64;
        let sigma = PI / 12f64.sqrt() / (pts.len() as f64).sqrt();
        assert!(mean.abs() < 3.0 * sigma, "mean {mean} sigma {sigma}");
    }

    #[test]
    fn works_in_single_precision() {
        let arm = ArmConfig::<f32>::planar_2dof();
        let p = forward_kinematics(&JointState::at_rest(vec![std::f32::consts::FRAC_PI_2, 0.0]), &arm).unwrap();
        assert!(p[0].abs() < 1e-6 && (p[1] - 2.0).abs() < 1e-6);
    }
}
