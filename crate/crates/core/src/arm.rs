//! Kinematic ground truth for a 6-DOF serial arm.
//!
//! Standard Denavit–Hartenberg convention: the transform of link `i` is
//! `Rz(theta_i) · Tz(d_i) · Tx(a_i) · Rx(alpha_i)`, with
//! `theta_i = q_i + theta_offset_i`. The plant is a pure joint-velocity
//! integrator; no dynamics.

use std::f64::consts::PI;

use nalgebra::{Isometry3, Matrix3x6, Matrix4, Point3, Vector3, Vector6};

use crate::error::{Error, Result};

pub type Joints = Vector6<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DhRow {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    pub theta_offset: f64,
}

impl DhRow {
    pub const fn new(a: f64, alpha: f64, d: f64, theta_offset: f64) -> Self {
        Self { a, alpha, d, theta_offset }
    }

    fn transform(&self, theta: f64, link_scale: f64) -> Matrix4<f64> {
        let (st, ct) = theta.sin_cos();
        let (sa, ca) = self.alpha.sin_cos();
        let a = self.a * link_scale;
        let d = self.d * link_scale;
        #[rustfmt::skip]
        let m = Matrix4::new(
            ct, -st * ca,  st * sa, a * ct,
            st,  ct * ca, -ct * sa, a * st,
            0.0,      sa,       ca,      d,
            0.0,     0.0,      0.0,    1.0,
        );
        m
    }
}

/// A six-row DH table.
#[derive(Debug, Clone, PartialEq)]
pub struct DhParams {
    rows: [DhRow; 6],
}

impl DhParams {
    pub fn new(rows: &[DhRow]) -> Result<Self> {
        if rows.len() != 6 {
            return Err(Error::Dimension {
                context: "DH table rows",
                expected: 6,
                got: rows.len(),
            });
        }
        let finite = rows
            .iter()
            .all(|r| r.a.is_finite() && r.alpha.is_finite() && r.d.is_finite() && r.theta_offset.is_finite());
        if !finite {
            return Err(Error::param("arm.dh", "all DH entries must be finite"));
        }
        let mut out = [DhRow::new(0.0, 0.0, 0.0, 0.0); 6];
        out.copy_from_slice(rows);
        Ok(Self { rows: out })
    }

    /// Universal Robots UR5 nominal table (meters, radians).
    pub fn ur5() -> Self {
        Self {
            rows: [
                DhRow::new(0.0, PI / 2.0, 0.089159, 0.0),
                DhRow::new(-0.425, 0.0, 0.0, 0.0),
                DhRow::new(-0.39225, 0.0, 0.0, 0.0),
                DhRow::new(0.0, PI / 2.0, 0.10915, 0.0),
                DhRow::new(0.0, -PI / 2.0, 0.09465, 0.0),
                DhRow::new(0.0, 0.0, 0.0823, 0.0),
            ],
        }
    }

    pub fn rows(&self) -> &[DhRow; 6] {
        &self.rows
    }
}

impl Default for DhParams {
    fn default() -> Self {
        Self::ur5()
    }
}

/// Mismatch between the nominal DH table and the simulated plant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantPerturbation {
    /// Multiplies both `a` and `d` of each link.
    pub link_scale: [f64; 6],
    /// Added to each joint angle.
    pub angle_offset: [f64; 6],
}

impl PlantPerturbation {
    pub const fn identity() -> Self {
        Self {
            link_scale: [1.0; 6],
            angle_offset: [0.0; 6],
        }
    }

    /// 2% link-length error and 0.01 rad joint offsets.
    pub const fn default_mismatch() -> Self {
        Self {
            link_scale: [1.02; 6],
            angle_offset: [0.01; 6],
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }
}

impl Default for PlantPerturbation {
    fn default() -> Self {
        Self::identity()
    }
}

/// Joint angles plus the most recent joint-velocity command.
///
/// `q` plays the role of both the joint configuration `u` of the controller
/// derivation and `r` of the baseline laws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointState {
    pub q: Joints,
    pub qdot: Joints,
}

impl JointState {
    pub fn at_rest(q: Joints) -> Self {
        Self { q, qdot: Joints::zeros() }
    }

    /// Applies one plant step and records the clamped command actually used.
    pub fn advance(&mut self, qdot_cmd: &Joints, dt: f64, qdot_max: f64) {
        self.qdot = clamp_joints(qdot_cmd, qdot_max);
        self.q = step(&self.q, qdot_cmd, dt, qdot_max);
    }
}

/// Origins and z-axes of frames 0..=6, in the base frame.
fn frames(dh: &DhParams, q: &Joints, pert: &PlantPerturbation) -> ([Point3<f64>; 7], [Vector3<f64>; 7]) {
    let mut origins = [Point3::origin(); 7];
    let mut z_axes = [Vector3::z(); 7];
    let mut t = Matrix4::identity();
    for (i, row) in dh.rows.iter().enumerate() {
        let theta = q[i] + row.theta_offset + pert.angle_offset[i];
        t *= row.transform(theta, pert.link_scale[i]);
        origins[i + 1] = Point3::new(t[(0, 3)], t[(1, 3)], t[(2, 3)]);
        z_axes[i + 1] = Vector3::new(t[(0, 2)], t[(1, 2)], t[(2, 2)]);
    }
    (origins, z_axes)
}

/// End-effector position in the base frame.
pub fn forward_kinematics(dh: &DhParams, q: &Joints, pert: &PlantPerturbation) -> Vector3<f64> {
    frames(dh, q, pert).0[6].coords
}

/// Forward kinematics with an extra fixed transform in front of the base.
pub fn forward_kinematics_from(base: &Isometry3<f64>, dh: &DhParams, q: &Joints, pert: &PlantPerturbation) -> Vector3<f64> {
    base.transform_point(&Point3::from(forward_kinematics(dh, q, pert))).coords
}

/// Positional part of the geometric Jacobian, `J[i][j] = d p_i / d q_j`.
pub fn analytic_jacobian(dh: &DhParams, q: &Joints, pert: &PlantPerturbation) -> Matrix3x6<f64> {
    let (origins, z_axes) = frames(dh, q, pert);
    let tip = origins[6];
    let mut j = Matrix3x6::zeros();
    for col in 0..6 {
        let lever = tip - origins[col];
        j.set_column(col, &z_axes[col].cross(&lever));
    }
    j
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(x: f64) -> f64 {
    if x > -PI && x <= PI {
        return x;
    }
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

pub fn clamp_joints(v: &Joints, limit: f64) -> Joints {
    v.map(|x| x.clamp(-limit, limit))
}

/// Euler step of the joint-velocity plant: `q + clamp(qdot, ±qdot_max) * dt`,
/// wrapped to (-pi, pi].
pub fn step(q: &Joints, qdot_cmd: &Joints, dt: f64, qdot_max: f64) -> Joints {
    debug_assert!(dt > 0.0);
    (q + clamp_joints(qdot_cmd, qdot_max) * dt).map(wrap_angle)
}
