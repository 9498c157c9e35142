//! Closed-loop experiment harness: offline data, training, simulated runs,
//! logs, comparisons and plots.

pub mod compare;
pub mod dataset;
pub mod plot;
pub mod runlog;
pub mod sim;

use crate::arm::{DhParams, Joints, PlantPerturbation};
use crate::baselines::{MfacParams, MpcParams, RbfPidParams};
use crate::camera::CameraPose;
use crate::controller::ControllerParams;
use crate::estimator::EstimatorParams;
use crate::rbf::RbfNetwork;

/// Joint configuration around which data is sampled and scenarios start.
pub const HOME: [f64; 6] = [0.0, -1.2, 1.6, -1.97, -1.57, 0.0];

pub fn home() -> Joints {
    Joints::from_column_slice(&HOME)
}

/// Arm, camera and sampling period shared by every run.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantSettings {
    pub dh: DhParams,
    /// Applied to runs flagged as perturbed.
    pub mismatch: PlantPerturbation,
    pub camera: CameraPose,
    pub noise_std: f64,
    pub dt: f64,
    pub qdot_max: f64,
}

impl Default for PlantSettings {
    fn default() -> Self {
        Self {
            dh: DhParams::ur5(),
            mismatch: PlantPerturbation::default_mismatch(),
            camera: CameraPose::overhead(),
            noise_std: 0.0,
            dt: 0.05,
            qdot_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UkfSettings {
    pub p0: f64,
    pub process_noise: f64,
    pub measurement_noise: f64,
}

impl Default for UkfSettings {
    fn default() -> Self {
        Self {
            p0: 1e-3,
            process_noise: 1e-5,
            measurement_noise: 1e-6,
        }
    }
}

/// Everything a run needs besides the trained networks and the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub plant: PlantSettings,
    pub estimator: EstimatorParams,
    pub controller: ControllerParams,
    pub ukf: UkfSettings,
    pub pid: RbfPidParams,
    pub mfac: MfacParams,
    pub mpc: MpcParams,
    pub threshold: f64,
    pub max_steps: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            plant: PlantSettings::default(),
            estimator: EstimatorParams::default(),
            controller: ControllerParams::default(),
            ukf: UkfSettings::default(),
            pid: RbfPidParams::default(),
            mfac: MfacParams::default(),
            mpc: MpcParams::default(),
            threshold: 1e-2,
            max_steps: 2000,
        }
    }
}

/// Offline-trained networks: six Jacobian columns and one controller
/// network per info-vector entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    pub estimator: Vec<RbfNetwork>,
    pub controller: Vec<RbfNetwork>,
}
