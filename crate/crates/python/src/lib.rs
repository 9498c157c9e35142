//! Python bindings: configuration, offline training, closed-loop runs and
//! the kinematic model.
//!
//! ```python
//! import vservo_py as vs
//! cfg = vs.Config("seed = 3\ndataset.n_samples = 500\n")
//! models = vs.Models.train(cfg)
//! log = vs.run_scenario(cfg, models, "proposed", "stationary-1")
//! print(log.steps_to_threshold, log.final_error)
//! ```

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use vservo::arm::{analytic_jacobian, forward_kinematics, Joints, PlantPerturbation};
use vservo::cli::{load_models, train_report_text};
use vservo::config::Config;
use vservo::error::Error;
use vservo::experiments::dataset::{collect_offline_dataset, train_models};
use vservo::experiments::runlog::RunLog;
use vservo::experiments::sim::{run_scenario as run_one, ControllerKind, Scenario};
use vservo::experiments::ModelSet;

create_exception!(
    vservo_py,
    ConfigError,
    PyValueError,
    "Invalid configuration or parameter."
);
create_exception!(
    vservo_py,
    VservoIoError,
    PyException,
    "File, CSV or parse failure."
);
create_exception!(
    vservo_py,
    RunError,
    PyException,
    "Numerical failure during training or a run."
);

fn to_py(err: Error) -> PyErr {
    let msg = err.to_string();
    match err {
        Error::Config { .. }
        | Error::InvalidParam { .. }
        | Error::Dimension { .. }
        | Error::LogSingularity(_) => ConfigError::new_err(msg),
        Error::Io { .. } | Error::Csv { .. } | Error::Parse(_) | Error::Plot(_) => {
            VservoIoError::new_err(msg)
        }
        _ => RunError::new_err(msg),
    }
}

fn joints(q: [f64; 6]) -> Joints {
    Joints::from(q)
}

/// Parsed `key = value` configuration. Unknown keys raise `ConfigError`.
#[pyclass(name = "Config", frozen)]
struct PyConfig {
    inner: Config,
}

#[pymethods]
impl PyConfig {
    /// Parses configuration text; built-in defaults when `text` is omitted.
    #[new]
    #[pyo3(signature = (text=None))]
    fn new(text: Option<&str>) -> PyResult<Self> {
        let inner = match text {
            Some(t) => Config::parse(t).map_err(to_py)?,
            None => Config::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: Config::load(&path).map_err(to_py)?,
        })
    }

    fn with_seed(&self, seed: u64) -> Self {
        Self {
            inner: self.inner.with_seed(seed),
        }
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    /// SHA-256 of the canonical text; stamped on every artifact.
    #[getter]
    fn hash(&self) -> &str {
        self.inner.hash()
    }

    fn canonical_text(&self) -> &str {
        self.inner.canonical_text()
    }

    /// Names of the configured scenarios, stationary pairs first.
    fn scenarios(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .inner
            .stationary_scenarios(ControllerKind::Proposed)
            .into_iter()
            .map(|s| s.name)
            .collect();
        names.push(
            self.inner
                .trajectory_scenario(ControllerKind::Proposed)
                .name,
        );
        names
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(seed={}, hash={}…)",
            self.inner.seed,
            &self.inner.hash()[..12]
        )
    }
}

/// Trained estimator and controller networks.
#[pyclass(name = "Models", frozen)]
struct PyModels {
    inner: ModelSet,
    /// RMS fit residual per network, estimator columns first.
    #[pyo3(get)]
    residuals: Vec<f64>,
}

#[pymethods]
impl PyModels {
    /// Samples the offline dataset and fits every network, in memory.
    #[staticmethod]
    fn train(py: Python<'_>, config: &PyConfig) -> PyResult<Self> {
        let cfg = &config.inner;
        let (inner, report) = py
            .detach(|| {
                let s = &cfg.settings;
                let data = collect_offline_dataset(
                    &s.plant.dh,
                    &s.plant.camera,
                    &s.controller,
                    &cfg.dataset,
                    cfg.seed,
                )?;
                train_models(&data, &cfg.train, cfg.seed)
            })
            .map_err(to_py)?;
        let residuals = report
            .estimator_rms
            .iter()
            .chain(&report.controller_rms)
            .copied()
            .collect();
        log_report(cfg, &report);
        Ok(Self { inner, residuals })
    }

    /// Reads `.rbf` files written by `vservo train`.
    #[staticmethod]
    fn load(config: &PyConfig, dir: PathBuf) -> PyResult<Self> {
        let inner = load_models(&config.inner, &dir).map_err(to_py)?;
        Ok(Self {
            inner,
            residuals: Vec::new(),
        })
    }

    /// Writes one `.rbf` file per network into an existing directory.
    fn save(&self, config: &PyConfig, dir: PathBuf) -> PyResult<Vec<PathBuf>> {
        let comments = vec![format!("config_hash={}", config.inner.hash())];
        let mut written = Vec::new();
        let named = self
            .inner
            .estimator
            .iter()
            .enumerate()
            .map(|(i, n)| (format!("estimator_j{}.rbf", i + 1), n))
            .chain(
                self.inner
                    .controller
                    .iter()
                    .enumerate()
                    .map(|(i, n)| (format!("controller_m{}.rbf", i + 1), n)),
            );
        for (name, net) in named {
            let path = dir.join(name);
            net.save(&path, &comments).map_err(to_py)?;
            written.push(path);
        }
        Ok(written)
    }

    /// Jacobian estimate at `q` from the column networks, as three rows.
    fn jacobian(&self, q: [f64; 6]) -> Vec<Vec<f64>> {
        let j = vservo::estimator::predict_jacobian(&self.inner.estimator, &joints(q));
        (0..3).map(|r| j.row(r).iter().copied().collect()).collect()
    }

    #[getter]
    fn n_controller_networks(&self) -> usize {
        self.inner.controller.len()
    }
}

fn log_report(config: &Config, report: &vservo::experiments::dataset::TrainingReport) {
    if std::env::var_os("VSERVO_PY_VERBOSE").is_some() {
        eprint!("{}", train_report_text(config, report));
    }
}

/// One closed-loop run: per-tick columns and the summary metrics.
#[pyclass(name = "RunLog", frozen)]
struct PyRunLog {
    inner: RunLog,
}

#[pymethods]
impl PyRunLog {
    #[getter]
    fn scenario(&self) -> &str {
        &self.inner.meta.scenario
    }

    #[getter]
    fn controller(&self) -> &str {
        &self.inner.meta.controller
    }

    #[getter]
    fn config_hash(&self) -> &str {
        &self.inner.meta.config_hash
    }

    #[getter]
    fn status(&self) -> String {
        self.inner.meta.status.label()
    }

    #[getter]
    fn steps_to_threshold(&self) -> Option<usize> {
        self.inner.summary().steps_to_threshold
    }

    #[getter]
    fn rms_error(&self) -> f64 {
        self.inner.summary().rms_error
    }

    #[getter]
    fn tracking_rms_error(&self) -> f64 {
        self.inner.summary().tracking_rms_error
    }

    #[getter]
    fn final_error(&self) -> f64 {
        self.inner.summary().final_error
    }

    #[getter]
    fn path_length(&self) -> f64 {
        self.inner.summary().path_length
    }

    fn __len__(&self) -> usize {
        self.inner.rows.len()
    }

    /// Error norm per tick.
    fn errors(&self) -> Vec<f64> {
        self.inner.rows.iter().map(|r| r.e_norm).collect()
    }

    /// Measured feature per tick.
    fn features(&self) -> Vec<[f64; 3]> {
        self.inner
            .rows
            .iter()
            .map(|r| [r.y.x, r.y.y, r.y.z])
            .collect()
    }

    /// Joint-velocity command per tick.
    fn commands(&self) -> Vec<[f64; 6]> {
        self.inner.rows.iter().map(|r| r.u.into()).collect()
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner
            .write_csv(&mut buf)
            .map_err(|e| VservoIoError::new_err(e.to_string()))?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    fn summary_text(&self) -> String {
        self.inner.summary_text()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: RunLog::load(&path).map_err(to_py)?,
        })
    }
}

fn find_scenario(config: &Config, controller: ControllerKind, name: &str) -> PyResult<Scenario> {
    let mut all = config.stationary_scenarios(controller);
    all.push(config.trajectory_scenario(controller));
    all.into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| ConfigError::new_err(format!("unknown scenario `{name}`")))
}

/// Runs one controller on one named scenario (`stationary-N` or `circle`).
#[pyfunction]
#[pyo3(signature = (config, models, controller, scenario, estimator_updates=true, controller_updates=true))]
fn run_scenario(
    py: Python<'_>,
    config: &PyConfig,
    models: &PyModels,
    controller: &str,
    scenario: &str,
    estimator_updates: bool,
    controller_updates: bool,
) -> PyResult<PyRunLog> {
    let kind: ControllerKind = controller.parse().map_err(to_py)?;
    let mut sc = find_scenario(&config.inner, kind, scenario)?;
    sc.estimator_updates = estimator_updates;
    sc.controller_updates = controller_updates;
    let cfg = &config.inner;
    let inner = py
        .detach(|| run_one(&cfg.settings, &models.inner, &sc, cfg.hash()))
        .map_err(to_py)?;
    Ok(PyRunLog { inner })
}

/// Controller names accepted by `run_scenario`.
#[pyfunction]
fn controllers() -> Vec<&'static str> {
    ControllerKind::ALL.iter().map(|k| k.name()).collect()
}

/// End-effector position in the base frame; `perturbed` applies the
/// configured plant mismatch.
#[pyfunction]
#[pyo3(signature = (config, q, perturbed=false))]
fn end_effector(config: &PyConfig, q: [f64; 6], perturbed: bool) -> [f64; 3] {
    let plant = &config.inner.settings.plant;
    let pert = if perturbed {
        plant.mismatch
    } else {
        PlantPerturbation::identity()
    };
    forward_kinematics(&plant.dh, &joints(q), &pert).into()
}

/// Positional Jacobian of the nominal arm in the base frame, as three rows.
#[pyfunction]
fn arm_jacobian(config: &PyConfig, q: [f64; 6]) -> Vec<Vec<f64>> {
    let j = analytic_jacobian(
        &config.inner.settings.plant.dh,
        &joints(q),
        &PlantPerturbation::identity(),
    );
    (0..3).map(|r| j.row(r).iter().copied().collect()).collect()
}

#[pymodule]
fn vservo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyModels>()?;
    m.add_class::<PyRunLog>()?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(controllers, m)?)?;
    m.add_function(wrap_pyfunction!(end_effector, m)?)?;
    m.add_function(wrap_pyfunction!(arm_jacobian, m)?)?;
    let py = m.py();
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("VservoIoError", py.get_type::<VservoIoError>())?;
    m.add("RunError", py.get_type::<RunError>())?;
    Ok(())
}
