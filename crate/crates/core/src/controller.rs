//! Receding-horizon adaptive controller.
//!
//! The command is `u(k) = psi(k) xi(k)`, where `xi` stacks the newest errors
//! and previous commands and each column of the 6 x dim(xi) matrix `psi` is
//! the output of one RBF network evaluated at `xi`. Every tick the networks
//! are rolled out over a short horizon through the local model
//! `y(t+1) = y(t) + J_hat u(t) dt` and their output layers take one
//! normalized gradient step on the summed squared predicted error.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, Matrix3x6, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arm::Joints;
use crate::error::{Error, Result};
use crate::linalg::pseudo_inverse;
use crate::rbf::{fit_offline, place_centers, RbfNetwork, TrainingSet};

/// 6 x dim(xi) mapping matrix; column `m` comes from network `m`.
pub type PsiMatrix = DMatrix<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerParams {
    k: f64,
    horizon: usize,
    error_lags: usize,
    input_lags: usize,
    clamp: f64,
    eps: f64,
}

impl ControllerParams {
    pub const DEFAULT_K: f64 = -0.5;
    pub const DEFAULT_HORIZON: usize = 5;
    pub const DEFAULT_ERROR_LAGS: usize = 2;
    pub const DEFAULT_INPUT_LAGS: usize = 1;
    pub const DEFAULT_CLAMP: f64 = 1.0;
    pub const DEFAULT_EPS: f64 = 1e-12;

    /// `k` must lie in (-2, 0) so that `2k + k^2 < 0`.
    pub fn new(k: f64, horizon: usize, error_lags: usize, input_lags: usize, clamp: f64, eps: f64) -> Result<Self> {
        if !(k > -2.0 && k < 0.0) {
            return Err(Error::param("controller.k", format!("{k} is outside (-2, 0)")));
        }
        if horizon == 0 {
            return Err(Error::param("controller.horizon", "must be >= 1"));
        }
        if error_lags == 0 || input_lags == 0 {
            return Err(Error::param("controller.lags", "error and input lags must be >= 1"));
        }
        if !(clamp > 0.0) {
            return Err(Error::param("controller.clamp", "must be > 0"));
        }
        if !(eps > 0.0) {
            return Err(Error::param("controller.eps", "must be > 0"));
        }
        Ok(Self {
            k,
            horizon,
            error_lags,
            input_lags,
            clamp,
            eps,
        })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn error_lags(&self) -> usize {
        self.error_lags
    }

    pub fn input_lags(&self) -> usize {
        self.input_lags
    }

    pub fn clamp(&self) -> f64 {
        self.clamp
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn info_dim(&self) -> usize {
        info_dim(self.error_lags, self.input_lags)
    }
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self::new(
            Self::DEFAULT_K,
            Self::DEFAULT_HORIZON,
            Self::DEFAULT_ERROR_LAGS,
            Self::DEFAULT_INPUT_LAGS,
            Self::DEFAULT_CLAMP,
            Self::DEFAULT_EPS,
        )
        .unwrap()
    }
}

pub fn info_dim(error_lags: usize, input_lags: usize) -> usize {
    3 * error_lags + 6 * input_lags
}

/// `[e(k); ...; e(k-L_e+1); u(k-1); ...; u(k-L_c)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoVector {
    data: DVector<f64>,
    error_lags: usize,
    input_lags: usize,
}

impl InfoVector {
    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice()
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn error_lags(&self) -> usize {
        self.error_lags
    }

    pub fn input_lags(&self) -> usize {
        self.input_lags
    }

    /// Splits back into error and input histories, newest first.
    pub fn unstack(&self) -> (Vec<Vector3<f64>>, Vec<Joints>) {
        let errors = (0..self.error_lags)
            .map(|i| Vector3::from_column_slice(&self.data.as_slice()[3 * i..3 * i + 3]))
            .collect();
        let off = 3 * self.error_lags;
        let inputs = (0..self.input_lags)
            .map(|i| Joints::from_column_slice(&self.data.as_slice()[off + 6 * i..off + 6 * i + 6]))
            .collect();
        (errors, inputs)
    }
}

/// Stacks the newest `error_lags` errors and `input_lags` inputs (both
/// newest first); missing history is zero-padded.
pub fn build_info_vector(errors: &[Vector3<f64>], inputs: &[Joints], error_lags: usize, input_lags: usize) -> InfoVector {
    let mut data = DVector::zeros(info_dim(error_lags, input_lags));
    for (i, e) in errors.iter().take(error_lags).enumerate() {
        data.rows_mut(3 * i, 3).copy_from(e);
    }
    let off = 3 * error_lags;
    for (i, u) in inputs.iter().take(input_lags).enumerate() {
        data.rows_mut(off + 6 * i, 6).copy_from(u);
    }
    InfoVector {
        data,
        error_lags,
        input_lags,
    }
}

fn check_nets(nets: &[RbfNetwork], dim: usize) -> Result<()> {
    if nets.len() != dim {
        return Err(Error::Dimension {
            context: "controller networks (one per info-vector entry)",
            expected: dim,
            got: nets.len(),
        });
    }
    for n in nets {
        if n.input_dim() != dim {
            return Err(Error::Dimension {
                context: "controller network input",
                expected: dim,
                got: n.input_dim(),
            });
        }
        if n.output_dim() != 6 {
            return Err(Error::Dimension {
                context: "controller network output",
                expected: 6,
                got: n.output_dim(),
            });
        }
    }
    Ok(())
}

fn psi_with_activations(nets: &[RbfNetwork], xi: &InfoVector) -> (PsiMatrix, Vec<DVector<f64>>) {
    let mut psi = PsiMatrix::zeros(6, nets.len());
    let mut hs = Vec::with_capacity(nets.len());
    for (m, net) in nets.iter().enumerate() {
        let h = net.activations(xi.as_slice());
        psi.set_column(m, &net.forward_from(&h));
        hs.push(h);
    }
    (psi, hs)
}

pub fn eval_psi(nets: &[RbfNetwork], xi: &InfoVector) -> Result<PsiMatrix> {
    check_nets(nets, xi.dim())?;
    Ok(psi_with_activations(nets, xi).0)
}

/// Scales `u` down uniformly so that every `|u_i| <= clamp`.
pub fn clamp_command(u: &Joints, clamp: f64) -> Joints {
    let peak = u.amax();
    if peak > clamp {
        u * (clamp / peak)
    } else {
        *u
    }
}

/// `u = clamp(psi xi)`.
pub fn command(psi: &PsiMatrix, xi: &InfoVector, clamp: f64) -> Result<Joints> {
    if psi.nrows() != 6 || psi.ncols() != xi.dim() {
        return Err(Error::Dimension {
            context: "psi columns vs info vector",
            expected: xi.dim(),
            got: psi.ncols(),
        });
    }
    let u = psi * xi.vector();
    Ok(clamp_command(&Joints::from_column_slice(u.as_slice()), clamp))
}

/// Prediction over the horizon with frozen networks and sensitivity.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonRollout {
    /// `xi(k+t)`, `t = 0..T-1`.
    pub infos: Vec<InfoVector>,
    /// Per step, each network's hidden activations at `xi(k+t)`.
    pub activations: Vec<Vec<DVector<f64>>>,
    /// Unclamped `u(k+t)`.
    pub inputs: Vec<Joints>,
    /// `y(k+t)` before the step.
    pub start_outputs: Vec<Vector3<f64>>,
    /// `y_des(k+t+1)`.
    pub targets: Vec<Vector3<f64>>,
    /// `e(k+t+1)`.
    pub errors: Vec<Vector3<f64>>,
    /// `J_hat dt`, held over the horizon.
    pub sensitivity: Matrix3x6<f64>,
}

impl HorizonRollout {
    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }

    /// Summed squared predicted error.
    pub fn squared_error(&self) -> f64 {
        self.errors.iter().map(|e| e.norm_squared()).sum()
    }

    /// Horizon criterion `0.5 * sum_t |e(k+t)|^2`.
    pub fn criterion(&self) -> f64 {
        0.5 * self.squared_error()
    }
}

/// Rolls the local model forward `targets.len()` steps from `y`.
///
/// `errors` and `inputs` are the measured histories, newest first; the
/// current error `e(k) = y - y_des(k)` must already be at the front.
/// `targets[t]` is `y_des(k+t+1)`.
#[allow(clippy::too_many_arguments)]
pub fn rollout(
    nets: &[RbfNetwork],
    errors: &[Vector3<f64>],
    inputs: &[Joints],
    jac: &Matrix3x6<f64>,
    y: &Vector3<f64>,
    targets: &[Vector3<f64>],
    params: &ControllerParams,
    dt: f64,
) -> Result<HorizonRollout> {
    let (l_e, l_c) = (params.error_lags, params.input_lags);
    check_nets(nets, info_dim(l_e, l_c))?;
    let sensitivity = jac * dt;
    let mut errs: VecDeque<Vector3<f64>> = errors.iter().take(l_e).copied().collect();
    let mut ins: VecDeque<Joints> = inputs.iter().take(l_c).copied().collect();
    let mut y = *y;
    let n = targets.len();
    let mut out = HorizonRollout {
        infos: Vec::with_capacity(n),
        activations: Vec::with_capacity(n),
        inputs: Vec::with_capacity(n),
        start_outputs: Vec::with_capacity(n),
        targets: targets.to_vec(),
        errors: Vec::with_capacity(n),
        sensitivity,
    };
    for target in targets {
        let xi = build_info_vector(errs.make_contiguous(), ins.make_contiguous(), l_e, l_c);
        let (psi, hs) = psi_with_activations(nets, &xi);
        let u = Joints::from_column_slice((psi * xi.vector()).as_slice());
        out.start_outputs.push(y);
        y += sensitivity * u;
        let e = y - target;
        out.infos.push(xi);
        out.activations.push(hs);
        out.inputs.push(u);
        out.errors.push(e);
        errs.push_front(e);
        errs.truncate(l_e);
        ins.push_front(u);
        ins.truncate(l_c);
    }
    Ok(out)
}

/// Criterion of `nets` on the rollout's frozen info vectors and start points.
///
/// Only the networks' weights vary; `xi(k+t)` and `y(k+t)` stay as recorded,
/// so this is exactly quadratic in the weights.
pub fn frozen_criterion(nets: &[RbfNetwork], r: &HorizonRollout) -> f64 {
    let mut total = 0.0;
    for t in 0..r.len() {
        let mut u = Joints::zeros();
        for (m, net) in nets.iter().enumerate() {
            let col = net.forward_from(&r.activations[t][m]);
            u += Joints::from_column_slice(col.as_slice()) * r.infos[t].as_slice()[m];
        }
        let e = r.start_outputs[t] + r.sensitivity * u - r.targets[t];
        total += 0.5 * e.norm_squared();
    }
    total
}

/// Gradient of the frozen criterion with respect to each network's weights:
/// `G_m = sum_t xi_m(k+t) ((J_hat dt)^T e(k+t+1)) h_m(k+t)^T`.
pub fn controller_gradient(r: &HorizonRollout, nets: &[RbfNetwork]) -> Vec<DMatrix<f64>> {
    let mut grads: Vec<DMatrix<f64>> = nets.iter().map(|n| DMatrix::zeros(n.output_dim(), n.layer().n_hidden())).collect();
    for t in 0..r.len() {
        let back = r.sensitivity.transpose() * r.errors[t];
        let back = DVector::from_column_slice(back.as_slice());
        for (m, g) in grads.iter_mut().enumerate() {
            let xm = r.infos[t].as_slice()[m];
            if xm != 0.0 {
                g.ger(xm, &back, &r.activations[t][m], 1.0);
            }
        }
    }
    grads
}

pub fn gradient_norm_squared(grads: &[DMatrix<f64>]) -> f64 {
    grads.iter().map(|g| g.norm_squared()).sum()
}

/// `alpha = -k * sum_t |e|^2 / max(sum |G|^2, eps)`; positive for admissible `k`.
pub fn controller_step_size(grads: &[DMatrix<f64>], r: &HorizonRollout, params: &ControllerParams) -> f64 {
    let sq = r.squared_error();
    if sq == 0.0 {
        return 0.0;
    }
    -params.k * sq / gradient_norm_squared(grads).max(params.eps)
}

/// Descent step `W_m <- W_m - alpha G_m`.
pub fn update_controller(nets: &mut [RbfNetwork], grads: &[DMatrix<f64>], alpha: f64) {
    if alpha == 0.0 {
        return;
    }
    for (net, g) in nets.iter_mut().zip(grads) {
        *net.weights_mut() -= g * alpha;
    }
}

/// Predicted change of the weight-error energy, `(2k + k^2) R^2 / |G|^2`,
/// with `R` the summed squared predicted error. Below `eps` the step
/// denominator is `eps` and the change is `(2k + k^2 |G|^2 / eps) R^2 / eps`.
pub fn lyapunov_variation(k: f64, squared_error: f64, grad_norm2: f64, eps: f64) -> f64 {
    let denom = grad_norm2.max(eps);
    (2.0 * k + k * k * grad_norm2 / denom) * squared_error * squared_error / denom
}

/// Per-tick diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControllerTick {
    pub command: Joints,
    pub alpha: f64,
    /// Horizon criterion before the update.
    pub criterion: f64,
    pub lyapunov_variation: f64,
}

/// The controller networks plus the measured error and input histories.
#[derive(Debug, Clone)]
pub struct ProposedController {
    nets: Vec<RbfNetwork>,
    params: ControllerParams,
    errors: VecDeque<Vector3<f64>>,
    inputs: VecDeque<Joints>,
}

impl ProposedController {
    pub fn new(nets: Vec<RbfNetwork>, params: ControllerParams) -> Result<Self> {
        check_nets(&nets, params.info_dim())?;
        Ok(Self {
            nets,
            params,
            errors: VecDeque::with_capacity(params.error_lags + 1),
            inputs: VecDeque::with_capacity(params.input_lags + 1),
        })
    }

    pub fn nets(&self) -> &[RbfNetwork] {
        &self.nets
    }

    pub fn params(&self) -> &ControllerParams {
        &self.params
    }

    /// One control tick. `targets[t]` is `y_des(k+t+1)`; only the first
    /// `horizon` entries are used. With `adapt == false` the networks stay
    /// fixed and only the command is produced.
    pub fn tick(
        &mut self,
        y: &Vector3<f64>,
        y_des: &Vector3<f64>,
        targets: &[Vector3<f64>],
        jac: &Matrix3x6<f64>,
        dt: f64,
        adapt: bool,
    ) -> Result<ControllerTick> {
        self.errors.push_front(y - y_des);
        self.errors.truncate(self.params.error_lags);
        let mut report = ControllerTick::default();
        if adapt {
            let horizon = &targets[..targets.len().min(self.params.horizon)];
            let r = rollout(
                &self.nets,
                self.errors.make_contiguous(),
                self.inputs.make_contiguous(),
                jac,
                y,
                horizon,
                &self.params,
                dt,
            )?;
            let grads = controller_gradient(&r, &self.nets);
            let g2 = gradient_norm_squared(&grads);
            report.criterion = r.criterion();
            report.alpha = controller_step_size(&grads, &r, &self.params);
            report.lyapunov_variation = lyapunov_variation(self.params.k, r.squared_error(), g2, self.params.eps);
            update_controller(&mut self.nets, &grads, report.alpha);
        }
        let xi = build_info_vector(
            self.errors.make_contiguous(),
            self.inputs.make_contiguous(),
            self.params.error_lags,
            self.params.input_lags,
        );
        let psi = psi_with_activations(&self.nets, &xi).0;
        report.command = command(&psi, &xi, self.params.clamp)?;
        self.inputs.push_front(report.command);
        self.inputs.truncate(self.params.input_lags);
        Ok(report)
    }
}

/// Classical velocity law as a mapping matrix: `u = -gain J^+ e(k)`, zero
/// weight on every older error and previous input.
pub fn warm_start_psi(jac: &Matrix3x6<f64>, gain: f64, params: &ControllerParams) -> PsiMatrix {
    let pinv = pseudo_inverse(&DMatrix::from_column_slice(3, 6, jac.as_slice())).matrix;
    let mut psi = PsiMatrix::zeros(6, params.info_dim());
    psi.columns_mut(0, 3).copy_from(&(pinv * -gain));
    psi
}

/// Samples info vectors around a settling trajectory: errors within
/// `error_span` per axis, the previous error a small perturbation of the
/// newest, previous inputs within `input_span`.
pub fn sample_info_vectors(params: &ControllerParams, n: usize, error_span: f64, input_span: f64, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drift = 0.125 * error_span;
    (0..n)
        .map(|_| {
            let e0 = Vector3::from_fn(|_, _| rng.random_range(-error_span..error_span));
            let mut errors = vec![e0];
            for _ in 1..params.error_lags {
                let prev = *errors.last().unwrap();
                errors.push(prev + Vector3::from_fn(|_, _| rng.random_range(-drift..drift)));
            }
            let inputs: Vec<Joints> = (0..params.input_lags)
                .map(|_| Joints::from_fn(|_, _| rng.random_range(-input_span..input_span)))
                .collect();
            build_info_vector(&errors, &inputs, params.error_lags, params.input_lags).data
        })
        .collect()
}

/// One training set per network: inputs are the sampled info vectors,
/// targets the matching column of `psi`.
pub fn warm_start_datasets(psi: &PsiMatrix, inputs: &[DVector<f64>]) -> Result<Vec<TrainingSet>> {
    (0..psi.ncols())
        .map(|m| {
            let col = DVector::from_column_slice(psi.column(m).as_slice());
            TrainingSet::new(inputs.to_vec(), vec![col; inputs.len()])
        })
        .collect()
}

/// Places one shared hidden layer on the inputs and fits every network.
pub fn train_controller_nets(sets: &[TrainingSet], n_hidden: usize, width_scale: f64, ridge: f64, seed: u64) -> Result<Vec<RbfNetwork>> {
    let first = sets.first().ok_or_else(|| Error::param("controller", "no training sets"))?;
    let layer = place_centers(first.inputs(), n_hidden, seed)?.scaled(width_scale)?;
    sets.iter().map(|s| fit_offline(&layer, s, ridge)).collect()
}
