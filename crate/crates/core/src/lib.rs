//! Uncalibrated eye-to-hand visual servoing with RBF-network model-free
//! adaptive control.
//!
//! A simulated 6-DOF arm is watched by a fixed depth camera that reports the
//! end-effector position in camera coordinates. The proposed controller forms
//! its joint-velocity command as `u = psi(xi) * xi`, where each column of the
//! mapping matrix `psi` is an RBF network whose output layer is adapted every
//! tick over a short prediction horizon. The hand-eye Jacobian is estimated by
//! six more RBF networks (one per joint column) that are trained offline on the
//! nominal DH model and corrected online. Three baseline schemes (RBF+PID,
//! UKF+MFAC, UKF+MPC) share the same plant and camera.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        let tol: f64 = $tol;
        assert!((a - b).abs() <= tol, "{} vs {} (tol {})", a, b, tol);
    }};
}

pub mod arm;
pub mod baselines;
pub mod camera;
pub mod cli;
pub mod config;
pub mod controller;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod linalg;
pub mod rbf;

pub use error::{Error, Result};
