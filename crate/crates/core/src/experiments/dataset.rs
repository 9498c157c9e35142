//! Offline data collection and training.

use nalgebra::{DVector, Matrix3x6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelSet;
use crate::arm::{analytic_jacobian, DhParams, Joints, PlantPerturbation};
use crate::camera::CameraPose;
use crate::controller::{sample_info_vectors, warm_start_datasets, warm_start_psi, ControllerParams};
use crate::error::{Error, Result};
use crate::rbf::{fit_offline, place_centers, training_residual, RbfNetwork, TrainingSet};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetOptions {
    pub n_samples: usize,
    /// Joint angles are drawn uniformly within `center +- joint_span`.
    pub joint_span: f64,
    pub center: Joints,
    /// Gain of the classical velocity law the controller starts from.
    pub warm_gain: f64,
    pub error_span: f64,
    pub input_span: f64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            joint_span: std::f64::consts::FRAC_PI_2,
            center: super::home(),
            warm_gain: 0.5,
            error_span: 0.4,
            input_span: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub estimator_hidden: usize,
    pub controller_hidden: usize,
    pub width_scale: f64,
    pub ridge: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            estimator_hidden: 600,
            controller_hidden: 60,
            width_scale: 2.0,
            ridge: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    /// One set per Jacobian column: joint angles to camera-frame column.
    pub estimator: Vec<TrainingSet>,
    /// One set per controller network: info vector to mapping-matrix column.
    pub controller: Vec<TrainingSet>,
}

/// Camera-frame Jacobian of the nominal model.
pub fn camera_jacobian(dh: &DhParams, camera: &CameraPose, q: &Joints) -> Matrix3x6<f64> {
    camera.rotation() * analytic_jacobian(dh, q, &PlantPerturbation::identity())
}

pub fn collect_offline_dataset(
    dh: &DhParams,
    camera: &CameraPose,
    controller: &ControllerParams,
    opts: &DatasetOptions,
    seed: u64,
) -> Result<OfflineDataset> {
    if opts.n_samples == 0 {
        return Err(Error::param("dataset.n_samples", "must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = opts.joint_span;
    let qs: Vec<Joints> = (0..opts.n_samples)
        .map(|_| Joints::from_fn(|i, _| opts.center[i] + rng.random_range(-span..=span)))
        .collect();
    let inputs: Vec<DVector<f64>> = qs.iter().map(|q| DVector::from_column_slice(q.as_slice())).collect();
    let jacobians: Vec<Matrix3x6<f64>> = qs.iter().map(|q| camera_jacobian(dh, camera, q)).collect();
    let estimator = (0..6)
        .map(|col| {
            let targets = jacobians
                .iter()
                .map(|j| DVector::from_column_slice(j.column(col).as_slice()))
                .collect();
            TrainingSet::new(inputs.clone(), targets)
        })
        .collect::<Result<Vec<_>>>()?;

    let psi = warm_start_psi(&camera_jacobian(dh, camera, &opts.center), opts.warm_gain, controller);
    let infos = sample_info_vectors(controller, opts.n_samples, opts.error_span, opts.input_span, rng.random());
    let controller = warm_start_datasets(&psi, &infos)?;
    Ok(OfflineDataset { estimator, controller })
}

/// Root-mean-square fit residual of each trained network.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub estimator_rms: Vec<f64>,
    pub controller_rms: Vec<f64>,
}

fn rms(net: &RbfNetwork, data: &TrainingSet) -> f64 {
    (training_residual(net, data) / data.len() as f64).sqrt()
}

fn fit_group(sets: &[TrainingSet], n_hidden: usize, opts: &TrainOptions, seed: u64) -> Result<Vec<RbfNetwork>> {
    let first = sets.first().ok_or_else(|| Error::param("dataset", "no training sets"))?;
    let layer = place_centers(first.inputs(), n_hidden, seed)?.scaled(opts.width_scale)?;
    sets.iter().map(|s| fit_offline(&layer, s, opts.ridge)).collect()
}

/// Fits both network groups; each group shares one hidden layer placed on
/// its inputs.
pub fn train_models(data: &OfflineDataset, opts: &TrainOptions, seed: u64) -> Result<(ModelSet, TrainingReport)> {
    let estimator = fit_group(&data.estimator, opts.estimator_hidden, opts, seed)?;
    let controller = fit_group(&data.controller, opts.controller_hidden, opts, seed.wrapping_add(1))?;
    let report = TrainingReport {
        estimator_rms: estimator.iter().zip(&data.estimator).map(|(n, d)| rms(n, d)).collect(),
        controller_rms: controller.iter().zip(&data.controller).map(|(n, d)| rms(n, d)).collect(),
    };
    Ok((ModelSet { estimator, controller }, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetOptions {
        DatasetOptions {
            n_samples: 40,
            ..DatasetOptions::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let c = ControllerParams::default();
        let a = collect_offline_dataset(&DhParams::ur5(), &CameraPose::overhead(), &c, &small(), 5).unwrap();
        let b = collect_offline_dataset(&DhParams::ur5(), &CameraPose::overhead(), &c, &small(), 5).unwrap();
        let csv = |s: &TrainingSet| {
            let mut out = Vec::new();
            s.write_csv(&mut out, &[]).unwrap();
            out
        };
        assert_eq!(csv(&a.estimator[2]), csv(&b.estimator[2]));
        assert_eq!(csv(&a.controller[0]), csv(&b.controller[0]));
        assert_eq!(a.controller.len(), 12);
    }

    #[test]
    fn targets_are_rotated_base_columns() {
        let dh = DhParams::ur5();
        let cam = CameraPose::from_axis_angle(nalgebra::Vector3::new(0.2, -0.4, 1.0), nalgebra::Vector3::zeros()).unwrap();
        let d = collect_offline_dataset(&dh, &cam, &ControllerParams::default(), &small(), 9).unwrap();
        for n in [0, 17, 39] {
            let q = Joints::from_column_slice(d.estimator[0].inputs()[n].as_slice());
            let base = analytic_jacobian(&dh, &q, &PlantPerturbation::identity());
            for col in 0..6 {
                let expected = cam.rotation() * base.column(col);
                let got = &d.estimator[col].targets()[n];
                for r in 0..3 {
                    assert_close!(got[r], expected[r], 1e-15);
                }
            }
        }
    }

    #[test]
    fn interpolation_regime_fits_exactly() {
        let opts = DatasetOptions {
            n_samples: 30,
            ..DatasetOptions::default()
        };
        let d = collect_offline_dataset(&DhParams::ur5(), &CameraPose::overhead(), &ControllerParams::default(), &opts, 2).unwrap();
        let train = TrainOptions {
            estimator_hidden: 30,
            controller_hidden: 30,
            width_scale: 1.0,
            ridge: 0.0,
        };
        let (_, report) = train_models(&d, &train, 3).unwrap();
        assert!(report.estimator_rms.iter().all(|r| *r < 1e-9), "{:?}", report.estimator_rms);
    }
}
