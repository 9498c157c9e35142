//! Unscented Kalman filter over the vectorized Jacobian.
//!
//! State: `vec(J)` in row-major order (18 entries). Process model: random walk
//! with covariance `Q_p`. Measurement: `dy = J du`, i.e. `h(x) = (I_3 ⊗ du^T) x`,
//! with noise covariance `R_m`.
//!
//! Sigma points use the scaled unscented transform with `alpha = 1`,
//! `beta = 2`, `kappa = 0`, which gives `lambda = 0`: the central point
//! carries zero mean-weight and covariance weight 2, the `2n` outer points
//! weight `1 / 2n` each. The prediction step adds `Q_p` directly because
//! the process model is the identity.

use nalgebra::{DMatrix, DVector, Matrix3x6, Vector3};

use crate::arm::Joints;
use crate::error::{Error, Result};

pub const STATE_DIM: usize = 18;
const ALPHA: f64 = 1.0;
const BETA: f64 = 2.0;
const KAPPA: f64 = 0.0;

#[derive(Debug, Clone, PartialEq)]
pub struct UkfState {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub process_noise: DMatrix<f64>,
    pub measurement_noise: DMatrix<f64>,
}

impl UkfState {
    /// Isotropic initial covariance and noises.
    pub fn new(initial: &Matrix3x6<f64>, p0: f64, q_p: f64, r_m: f64) -> Result<Self> {
        if !(p0 > 0.0 && q_p >= 0.0 && r_m > 0.0) {
            return Err(Error::param("ukf", "need p0 > 0, q_p >= 0, r_m > 0"));
        }
        Ok(Self {
            mean: vec_jacobian(initial),
            covariance: DMatrix::identity(STATE_DIM, STATE_DIM) * p0,
            process_noise: DMatrix::identity(STATE_DIM, STATE_DIM) * q_p,
            measurement_noise: DMatrix::identity(3, 3) * r_m,
        })
    }

    pub fn jacobian(&self) -> Matrix3x6<f64> {
        unvec_jacobian(&self.mean)
    }
}

pub fn vec_jacobian(j: &Matrix3x6<f64>) -> DVector<f64> {
    DVector::from_fn(STATE_DIM, |k, _| j[(k / 6, k % 6)])
}

pub fn unvec_jacobian(x: &DVector<f64>) -> Matrix3x6<f64> {
    Matrix3x6::from_fn(|i, j| x[6 * i + j])
}

fn measure(x: &DVector<f64>, du: &Joints) -> Vector3<f64> {
    unvec_jacobian(x) * du
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// One predict + update cycle for the motion `du` that produced `dy`.
pub fn ukf_update(state: &UkfState, du: &Joints, dy: &Vector3<f64>) -> Result<UkfState> {
    let n = STATE_DIM as f64;
    let lambda = ALPHA * ALPHA * (n + KAPPA) - n;

    let mut p = &state.covariance + &state.process_noise;
    symmetrize(&mut p);
    let x = state.mean.clone();

    let chol = (p.clone() * (n + lambda)).cholesky().ok_or(Error::CovarianceNotSpd)?;
    let l = chol.l();
    let mut sigma = Vec::with_capacity(2 * STATE_DIM + 1);
    sigma.push(x.clone());
    for i in 0..STATE_DIM {
        sigma.push(&x + l.column(i));
    }
    for i in 0..STATE_DIM {
        sigma.push(&x - l.column(i));
    }

    let w_mean0 = lambda / (n + lambda);
    let w_cov0 = w_mean0 + (1.0 - ALPHA * ALPHA + BETA);
    let w_i = 1.0 / (2.0 * (n + lambda));
    let weight = |k: usize, cov: bool| match (k, cov) {
        (0, false) => w_mean0,
        (0, true) => w_cov0,
        _ => w_i,
    };

    let ys: Vec<Vector3<f64>> = sigma.iter().map(|s| measure(s, du)).collect();
    let y_mean: Vector3<f64> = ys.iter().enumerate().map(|(k, y)| y * weight(k, false)).sum();

    let mut p_yy = state.measurement_noise.clone();
    let mut p_xy = DMatrix::zeros(STATE_DIM, 3);
    for (k, (s, y)) in sigma.iter().zip(&ys).enumerate() {
        let dyk = DVector::from_column_slice((y - y_mean).as_slice());
        let dxk = s - &x;
        let w = weight(k, true);
        p_yy.ger(w, &dyk, &dyk, 1.0);
        p_xy.ger(w, &dxk, &dyk, 1.0);
    }

    let p_yy_chol = p_yy.clone().cholesky().ok_or(Error::CovarianceNotSpd)?;
    // K = P_xy P_yy^-1, via the symmetric solve on the transpose
    let gain = p_yy_chol.solve(&p_xy.transpose()).transpose();
    let innovation = DVector::from_column_slice((dy - y_mean).as_slice());
    let mean = &x + &gain * innovation;
    let mut covariance = p - &gain * p_yy * gain.transpose();
    symmetrize(&mut covariance);

    Ok(UkfState {
        mean,
        covariance,
        process_noise: state.process_noise.clone(),
        measurement_noise: state.measurement_noise.clone(),
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_j(rng: &mut ChaCha8Rng) -> Matrix3x6<f64> {
        Matrix3x6::from_fn(|_, _| rng.random_range(-0.6..0.6))
    }

    #[test]
    fn vec_round_trip_is_row_major() {
        let j = Matrix3x6::from_fn(|i, k| (10 * i + k) as f64);
        let v = vec_jacobian(&j);
        assert_eq!(v[1], 1.0);
        assert_eq!(v[6], 10.0);
        assert_eq!(unvec_jacobian(&v), j);
    }

    #[test]
    fn zero_motion_only_inflates_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = UkfState::new(&random_j(&mut rng), 0.1, 1e-4, 1e-6).unwrap();
        let next = ukf_update(&s, &Joints::zeros(), &Vector3::zeros()).unwrap();
        assert_eq!(next.mean, s.mean);
        assert!((next.covariance - (&s.covariance + &s.process_noise)).abs().max() < 1e-15);
    }

    #[test]
    fn converges_on_constant_jacobian() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = random_j(&mut rng);
        let mut s = UkfState::new(&Matrix3x6::zeros(), 1.0, 1e-12, 1e-10).unwrap();
        for _ in 0..200 {
            let du = Joints::from_fn(|_, _| rng.random_range(-0.05..0.05));
            s = ukf_update(&s, &du, &(truth * du)).unwrap();
        }
        let err = (s.mean.clone() - vec_jacobian(&truth)).abs().max();
        assert!(err < 1e-3, "err = {err}");
    }

    #[test]
    fn posterior_residual_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth = random_j(&mut rng);
        let s = UkfState::new(&random_j(&mut rng), 0.5, 0.0, 1e-12).unwrap();
        let du = Joints::from_fn(|_, _| rng.random_range(-0.05..0.05));
        let dy = truth * du;
        let before = (dy - s.jacobian() * du).norm();
        let after = (dy - ukf_update(&s, &du, &dy).unwrap().jacobian() * du).norm();
        assert!(after < before * 1e-3, "{after} vs {before}");
    }

    #[test]
    fn covariance_stays_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth = random_j(&mut rng);
        let mut s = UkfState::new(&Matrix3x6::zeros(), 1.0, 1e-6, 1e-6).unwrap();
        for _ in 0..50 {
            let du = Joints::from_fn(|_, _| rng.random_range(-0.05..0.05));
            s = ukf_update(&s, &du, &(truth * du)).unwrap();
            assert!((&s.covariance - s.covariance.transpose()).abs().max() <= 1e-12);
        }
    }

    #[test]
    fn indefinite_covariance_is_reported() {
        let mut s = UkfState::new(&Matrix3x6::zeros(), 1.0, 0.0, 1e-6).unwrap();
        s.covariance[(3, 3)] = -5.0;
        assert!(matches!(
            ukf_update(&s, &Joints::repeat(0.01), &Vector3::zeros()),
            Err(Error::CovarianceNotSpd)
        ));
    }
}
