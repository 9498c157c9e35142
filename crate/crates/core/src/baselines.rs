//! Comparison schemes: RBF+PID, UKF+MFAC and UKF+MPC.
//!
//! MFAC and MPC produce joint-position increments `r_k - r_{k-1}`; the
//! experiment loop turns those into velocity commands by dividing by `dt`.
//! Both take the servo error `y_des - y`.

use nalgebra::{DMatrix, DVector, Matrix3x6, Matrix6, Vector3};

use crate::arm::Joints;
use crate::error::{Error, Result};
use crate::estimator::predict_jacobian;
use crate::linalg::pseudo_inverse;
use crate::rbf::RbfNetwork;

fn dyn3x6(j: &Matrix3x6<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 6, j.as_slice())
}

fn to_joints(v: &DVector<f64>) -> Joints {
    Joints::from_column_slice(v.as_slice())
}

fn dyn_vec3(v: &Vector3<f64>) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbfPidParams {
    pub gain: f64,
    pub n2: f64,
    pub n3: f64,
}

impl RbfPidParams {
    pub fn new(gain: f64, n2: f64, n3: f64) -> Result<Self> {
        if !(gain > 0.0 && n2 > 0.0 && n3 > 0.0) {
            return Err(Error::param("baselines.pid", "gain, n2 and n3 must be > 0"));
        }
        Ok(Self { gain, n2, n3 })
    }
}

impl Default for RbfPidParams {
    fn default() -> Self {
        Self::new(1.0, 1.0, 0.01).unwrap()
    }
}

/// The motion observed since the previous tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Motion {
    pub q_prev: Joints,
    pub qdot: Joints,
    pub dy: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidTick {
    pub command: Joints,
    /// `0.5 * n2 * |dx|^2`.
    pub lyapunov: f64,
    /// Estimation residual rate `dy/dt - J_hat qdot` used in the update.
    pub residual_rate: Vector3<f64>,
}

/// Velocity law `qdot = -gain * J_hat^+ dx` with `dx = y - y_des`, plus the
/// continuous-time weight law, discretized with `dt`:
/// `dW_i[j, :] = dt * qdot_i * theta_i (n2 eps_j + n3 dx_j)`.
pub fn rbf_pid_tick(
    models: &mut [RbfNetwork],
    q: &Joints,
    dx: &Vector3<f64>,
    last: Option<&Motion>,
    params: &RbfPidParams,
    dt: f64,
) -> Result<PidTick> {
    let mut residual_rate = Vector3::zeros();
    if let Some(m) = last {
        let j_prev = predict_jacobian(models, &m.q_prev);
        residual_rate = m.dy / dt - j_prev * m.qdot;
        let drive = dyn_vec3(&(residual_rate * params.n2 + dx * params.n3));
        for (i, model) in models.iter_mut().enumerate() {
            let gain = dt * m.qdot[i];
            if gain == 0.0 {
                continue;
            }
            let theta = model.activations(m.q_prev.as_slice());
            model.weights_mut().ger(gain, &drive, &theta, 1.0);
        }
    }
    let command = if dx.iter().all(|v| *v == 0.0) {
        Joints::zeros()
    } else {
        let pinv = pseudo_inverse(&dyn3x6(&predict_jacobian(models, q))).matrix;
        to_joints(&(pinv * dyn_vec3(dx) * -params.gain))
    };
    Ok(PidTick {
        command,
        lyapunov: 0.5 * params.n2 * dx.norm_squared(),
        residual_rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfacParams {
    pub lambda: f64,
}

impl MfacParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::param("baselines.mfac.lambda", "must be finite and > 0"));
        }
        Ok(Self { lambda })
    }
}

impl Default for MfacParams {
    fn default() -> Self {
        Self::new(0.05).unwrap()
    }
}

/// `r_k = r_{k-1} + (lambda I + J^T J)^{-1} J^T e_{k-1}`.
pub fn mfac_tick(jac: &Matrix3x6<f64>, r_prev: &Joints, e_prev: &Vector3<f64>, params: &MfacParams) -> Joints {
    let normal = Matrix6::identity() * params.lambda + jac.transpose() * jac;
    let rhs = jac.transpose() * e_prev;
    let step = normal.cholesky().expect("lambda > 0 keeps the normal matrix SPD").solve(&rhs);
    r_prev + step
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Scalar gains of the predictive law for horizon `h`, decay `alpha_star`
/// and smoothing `rho` (with `beta = exp(-rho)`).
pub fn mpc_coeffs(h: usize, alpha_star: f64, rho: f64) -> Result<MpcCoeffs> {
    if h == 0 {
        return Err(Error::param("baselines.mpc.horizon", "must be >= 1"));
    }
    if alpha_star == 1.0 {
        return Err(Error::LogSingularity(alpha_star));
    }
    if !(alpha_star > 0.0 && alpha_star < 1.0) {
        return Err(Error::param("baselines.mpc.alpha_star", format!("{alpha_star} is outside (0, 1)")));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::param("baselines.mpc.rho", "must be finite and > 0"));
    }
    let hf = h as f64;
    let coeff = |x: f64| {
        let l = x.ln();
        let p = x.powi(h as i32);
        (hf * p * l - p + 1.0) / (l * l)
    };
    let b = coeff(alpha_star);
    let c = coeff(alpha_star * (-rho).exp());
    let a = (hf * hf * alpha_star.powi(h as i32) - 2.0 * b) / alpha_star.ln();
    Ok(MpcCoeffs { a, b, c })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcParams {
    horizon: usize,
    alpha_star: f64,
    rho: f64,
    weight: Matrix6<f64>,
    coeffs: MpcCoeffs,
}

impl MpcParams {
    pub fn new(horizon: usize, alpha_star: f64, rho: f64, weight: Matrix6<f64>) -> Result<Self> {
        let coeffs = mpc_coeffs(horizon, alpha_star, rho)?;
        if (weight - weight.transpose()).amax() > 1e-12 || weight.cholesky().is_none() {
            return Err(Error::param("baselines.mpc.weight", "must be symmetric positive definite"));
        }
        Ok(Self {
            horizon,
            alpha_star,
            rho,
            weight,
            coeffs,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn alpha_star(&self) -> f64 {
        self.alpha_star
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn weight(&self) -> &Matrix6<f64> {
        &self.weight
    }

    pub fn coeffs(&self) -> MpcCoeffs {
        self.coeffs
    }
}

impl Default for MpcParams {
    fn default() -> Self {
        Self::new(2, 0.5, 0.1, Matrix6::identity()).unwrap()
    }
}

/// `r_k = r_{k-1} + (a J + (J^T)^+ Q)^+ (b - c) e_k`, all terms 3x6.
pub fn mpc_tick(jac: &Matrix3x6<f64>, r_prev: &Joints, e: &Vector3<f64>, params: &MpcParams) -> Joints {
    let MpcCoeffs { a, b, c } = params.coeffs;
    let j = dyn3x6(jac);
    let jt_pinv = pseudo_inverse(&j.transpose()).matrix;
    let weight = DMatrix::from_column_slice(6, 6, params.weight.as_slice());
    let inner = &j * a + jt_pinv * weight;
    let step = pseudo_inverse(&inner).matrix * dyn_vec3(e) * (b - c);
    r_prev + to_joints(&step)
}
