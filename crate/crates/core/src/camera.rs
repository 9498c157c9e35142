//! Fixed eye-to-hand depth camera.
//!
//! The camera reports the metric end-effector position in its own frame;
//! there is no projection or image processing.

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// End-effector position in camera coordinates (meters).
pub type Feature = Vector3<f64>;

/// Base-to-camera rigid transform: `y = R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl CameraPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ortho_err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(ortho_err <= 1e-12) {
            return Err(Error::param(
                "camera.rotation",
                format!("not orthonormal (max |R^T R - I| = {ortho_err:e})"),
            ));
        }
        if rotation.determinant() <= 0.0 {
            return Err(Error::param("camera.rotation", "determinant must be +1"));
        }
        if !translation.iter().all(|x| x.is_finite()) {
            return Err(Error::param("camera.translation", "must be finite"));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Camera hung 1.5 m above the base, optical axis pointing straight down.
    /// Camera x follows base x; camera y and z are flipped.
    pub fn overhead() -> Self {
        let rotation = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0));
        let center = Vector3::new(0.0, 0.0, 1.5);
        Self {
            rotation,
            translation: -(rotation * center),
        }
    }

    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Result<Self> {
        Self::new(*Rotation3::new(axis_angle).matrix(), translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p_base: &Vector3<f64>) -> Feature {
        self.rotation * p_base + self.translation
    }

    /// Maps a camera-frame point back to the base frame.
    pub fn inverse_apply(&self, y: &Feature) -> Vector3<f64> {
        self.rotation.transpose() * (y - self.translation)
    }
}

impl Default for CameraPose {
    fn default() -> Self {
        Self::overhead()
    }
}

/// Observes a base-frame point, adding zero-mean Gaussian noise per axis.
///
/// `noise_std == 0` returns the exact transform and does not touch `rng`.
pub fn observe<R: Rng + ?Sized>(pose: &CameraPose, p_base: &Vector3<f64>, noise_std: f64, rng: &mut R) -> Feature {
    let y = pose.apply(p_base);
    if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std).expect("finite positive std");
        y + Vector3::from_fn(|_, _| normal.sample(rng))
    } else {
        y
    }
}
