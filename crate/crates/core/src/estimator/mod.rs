//! Hand-eye Jacobian estimation.
//!
//! [`JacobianEstimator`] holds six RBF networks, one per joint column of the
//! 3x6 camera-frame Jacobian, all fed with the joint configuration. Their
//! output layers are pre-trained offline and then corrected online from a
//! short window of measured `(dq, dy)` pairs. [`ukf`] provides the purely
//! online alternative used by the baseline schemes.

pub mod ukf;

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::{DVector, Matrix3x6, Vector3};

use crate::arm::Joints;
use crate::error::{Error, Result};
use crate::rbf::RbfNetwork;

pub type JacobianEstimate = Matrix3x6<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorParams {
    k2: f64,
    window: usize,
    eps: f64,
}

impl EstimatorParams {
    pub const DEFAULT_K2: f64 = 1.0;
    pub const DEFAULT_WINDOW: usize = 5;
    pub const DEFAULT_EPS: f64 = 1e-8;

    /// `k2` must lie in (0, 2) for the weight error to be non-increasing.
    pub fn new(k2: f64, window: usize, eps: f64) -> Result<Self> {
        if !(k2 > 0.0 && k2 < 2.0) {
            return Err(Error::param("estimator.k2", format!("{k2} is outside (0, 2)")));
        }
        Self::unchecked(k2, window, eps)
    }

    /// Skips the `k2` range check. Only meant for negative-control runs.
    pub fn unchecked(k2: f64, window: usize, eps: f64) -> Result<Self> {
        if window == 0 {
            return Err(Error::param("estimator.window", "must be >= 1"));
        }
        if !(eps > 0.0) {
            return Err(Error::param("estimator.eps", "must be > 0"));
        }
        Ok(Self { k2, window, eps })
    }

    pub fn k2(&self) -> f64 {
        self.k2
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self::new(Self::DEFAULT_K2, Self::DEFAULT_WINDOW, Self::DEFAULT_EPS).unwrap()
    }
}

/// One measured motion: joint change `du` taken from configuration `q`,
/// observed feature change `dy`, and each network's activations at `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionRecord {
    pub q: Joints,
    pub du: Joints,
    pub dy: Vector3<f64>,
    pub theta: Vec<DVector<f64>>,
}

/// The last `T + 1` motion records, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryWindow {
    window: usize,
    records: VecDeque<MotionRecord>,
}

impl HistoryWindow {
    pub fn new(window: usize) -> Self {
        Self {
            window,
            records: VecDeque::with_capacity(window + 1),
        }
    }

    pub fn push(&mut self, record: MotionRecord) {
        if self.records.len() == self.window + 1 {
            self.records.pop_back();
        }
        self.records.push_front(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Record `t` steps back from the newest (`t = 0` is the newest).
    pub fn get(&self, t: usize) -> Option<&MotionRecord> {
        self.records.get(t)
    }

    pub fn iter(&self) -> impl Iterator<Item = &MotionRecord> {
        self.records.iter()
    }

    fn require_full(&self) -> Result<()> {
        if self.records.len() < self.window {
            return Err(Error::UnderfullWindow {
                have: self.records.len(),
                need: self.window,
            });
        }
        Ok(())
    }

    /// The `T` records entering the criterion and the update law.
    fn criterion_records(&self) -> impl Iterator<Item = &MotionRecord> {
        self.records.iter().take(self.window)
    }

    /// Writes the window as CSV, newest first.
    pub fn write_csv<W: Write>(&self, out: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["lag".to_string()];
        header.extend((0..6).map(|i| format!("q{i}")));
        header.extend((0..6).map(|i| format!("du{i}")));
        header.extend((0..3).map(|i| format!("dy{i}")));
        w.write_record(&header)?;
        for (lag, r) in self.records.iter().enumerate() {
            let mut row = vec![lag.to_string()];
            row.extend(r.q.iter().chain(r.du.iter()).chain(r.dy.iter()).map(|v| format!("{v:e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_models(models: &[RbfNetwork]) -> Result<()> {
    if models.len() != 6 {
        return Err(Error::Dimension {
            context: "jacobian column networks",
            expected: 6,
            got: models.len(),
        });
    }
    for m in models {
        if m.input_dim() != 6 || m.output_dim() != 3 {
            return Err(Error::Dimension {
                context: "jacobian network shape (6 -> 3)",
                expected: 6 * 3,
                got: m.input_dim() * m.output_dim(),
            });
        }
    }
    Ok(())
}

/// Column `i` of the estimate is `W_i theta_i(q)`.
pub fn predict_jacobian(models: &[RbfNetwork], q: &Joints) -> JacobianEstimate {
    let thetas: Vec<_> = models.iter().map(|m| m.activations(q.as_slice())).collect();
    jacobian_from_activations(models, &thetas)
}

fn jacobian_from_activations(models: &[RbfNetwork], thetas: &[DVector<f64>]) -> JacobianEstimate {
    let mut j = JacobianEstimate::zeros();
    for (col, (m, th)) in models.iter().zip(thetas).enumerate() {
        let c = m.forward_from(th);
        j.set_column(col, &Vector3::new(c[0], c[1], c[2]));
    }
    j
}

fn residual(models: &[RbfNetwork], r: &MotionRecord) -> Vector3<f64> {
    r.dy - jacobian_from_activations(models, &r.theta) * r.du
}

/// Windowed prediction criterion `Q = sum_{t=1..T} |dy - J_hat du|^2`.
pub fn windowed_criterion(window: &HistoryWindow, models: &[RbfNetwork]) -> Result<f64> {
    window.require_full()?;
    Ok(window.criterion_records().map(|r| residual(models, r).norm_squared()).sum())
}

/// Adaptive step `alpha2 = -k2 / max(sum_{t=0..T} sum_m du_m^2 |theta_m|^2, eps)`.
///
/// The denominator runs over all `T + 1` stored records while the update sum
/// runs over the newest `T`.
pub fn update_step_size(window: &HistoryWindow, params: &EstimatorParams) -> Result<f64> {
    window.require_full()?;
    let excitation: f64 = window
        .iter()
        .take(params.window + 1)
        .map(|r| {
            r.theta
                .iter()
                .enumerate()
                .map(|(m, th)| r.du[m] * r.du[m] * th.norm_squared())
                .sum::<f64>()
        })
        .sum();
    Ok(-params.k2 / excitation.max(params.eps))
}

/// Online correction of the output layers:
/// `W_mn <- W_mn - alpha2 * sum_t [dy - dy_hat] du_m theta_mn`.
///
/// Returns the step size used. Residuals use the pre-update weights.
pub fn online_update(models: &mut [RbfNetwork], window: &HistoryWindow, params: &EstimatorParams) -> Result<f64> {
    check_models(models)?;
    let alpha2 = update_step_size(window, params)?;
    let residuals: Vec<Vector3<f64>> = window.criterion_records().map(|r| residual(models, r)).collect();
    for (m, model) in models.iter_mut().enumerate() {
        let w = model.weights_mut();
        for (r, res) in window.criterion_records().zip(&residuals) {
            let gain = -alpha2 * r.du[m];
            if gain == 0.0 {
                continue;
            }
            // rank-one: w += gain * res * theta^T
            w.ger(gain, &DVector::from_column_slice(res.as_slice()), &r.theta[m], 1.0);
        }
    }
    Ok(alpha2)
}

/// Per-tick statistics of an estimator update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EstimatorUpdate {
    pub criterion: f64,
    pub alpha2: f64,
}

/// Six column networks plus their measurement window.
#[derive(Debug, Clone)]
pub struct JacobianEstimator {
    models: Vec<RbfNetwork>,
    window: HistoryWindow,
    params: EstimatorParams,
}

impl JacobianEstimator {
    pub fn new(models: Vec<RbfNetwork>, params: EstimatorParams) -> Result<Self> {
        check_models(&models)?;
        Ok(Self {
            models,
            window: HistoryWindow::new(params.window),
            params,
        })
    }

    pub fn models(&self) -> &[RbfNetwork] {
        &self.models
    }

    pub fn models_mut(&mut self) -> &mut [RbfNetwork] {
        &mut self.models
    }

    pub fn window(&self) -> &HistoryWindow {
        &self.window
    }

    pub fn params(&self) -> &EstimatorParams {
        &self.params
    }

    pub fn predict(&self, q: &Joints) -> JacobianEstimate {
        predict_jacobian(&self.models, q)
    }

    /// Stores the motion `q -> q + du` that produced feature change `dy`.
    pub fn record(&mut self, q: Joints, du: Joints, dy: Vector3<f64>) {
        let theta = self.models.iter().map(|m| m.activations(q.as_slice())).collect();
        self.window.push(MotionRecord { q, du, dy, theta });
    }

    /// Runs the online law once the window is full; `None` before that.
    pub fn update(&mut self) -> Result<Option<EstimatorUpdate>> {
        if self.window.len() < self.params.window {
            return Ok(None);
        }
        let criterion = windowed_criterion(&self.window, &self.models)?;
        let alpha2 = online_update(&mut self.models, &self.window, &self.params)?;
        Ok(Some(EstimatorUpdate { criterion, alpha2 }))
    }
}
