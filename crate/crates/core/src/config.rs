//! Plain-text `key = value` configuration.
//!
//! One setting per line, `#` starts a comment, values are whitespace
//! separated numbers. Unknown or repeated keys are rejected. Every key has a
//! built-in default, so an empty file is a complete configuration. The
//! canonical text lists every key with its resolved value in a fixed order;
//! its SHA-256 is the config hash stamped on every artifact.
//!
//! | key | values | default |
//! |---|---|---|
//! | `seed` | integer | 1 |
//! | `arm.dh.1` .. `arm.dh.6` | `a alpha d theta_offset` | UR5 |
//! | `arm.link_scale`, `arm.angle_offset` | 6 numbers | 1.02, 0.01 |
//! | `arm.dt`, `arm.qdot_max` | number | 0.05, 1 |
//! | `camera.rotation` | 9 numbers, row-major | overhead |
//! | `camera.translation` | 3 numbers | 0 0 1.5 |
//! | `camera.noise_std` | number | 0 |
//! | `dataset.*` | see [`DatasetOptions`] | |
//! | `rbf.*` | see [`TrainOptions`] | |
//! | `estimator.k2`, `.window`, `.eps` | | 1, 5, 1e-8 |
//! | `controller.k`, `.horizon`, `.error_lags`, `.input_lags`, `.clamp`, `.eps` | | -0.5, 5, 2, 1, 1, 1e-12 |
//! | `ukf.p0`, `.process_noise`, `.measurement_noise` | | 1e-3, 1e-5, 1e-6 |
//! | `baselines.pid.gain`, `.n2`, `.n3` | | 1, 1, 0.01 |
//! | `baselines.mfac.lambda` | | 0.05 |
//! | `baselines.mpc.horizon`, `.alpha_star`, `.rho` | | 2, 0.5, 0.1 |
//! | `baselines.mpc.weight` | 6 numbers, diagonal | 1 ×6 |
//! | `experiment.threshold`, `.max_steps` | | 0.01, 2000 |
//! | `stationary.count` | integer | 4 |
//! | `stationary.N.q0`, `stationary.N.target` | 6 / 3 numbers | pairs 1-4 |
//! | `trajectory.q0` | 6 numbers | home |
//! | `trajectory.center` | `auto` or 3 numbers | `auto` |
//! | `trajectory.radius`, `.points`, `.hold_ticks` | | 0.3, 200, 3 |
//!
//! `trajectory.center = auto` places the circle around the nominal feature
//! at `trajectory.q0`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use sha2::{Digest, Sha256};

use crate::arm::{forward_kinematics, DhParams, DhRow, Joints, PlantPerturbation};
use crate::baselines::{MfacParams, MpcParams, RbfPidParams};
use crate::camera::{CameraPose, Feature};
use crate::controller::ControllerParams;
use crate::error::{Error, Result};
use crate::estimator::EstimatorParams;
use crate::experiments::dataset::{DatasetOptions, TrainOptions};
use crate::experiments::sim::{CircleSpec, ControllerKind, Scenario};
use crate::experiments::{PlantSettings, Settings, UkfSettings};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Int,
    Floats(usize),
    FloatsOrAuto(usize),
}

const KEYS: &[(&str, Kind, &str)] = &[
    ("seed", Kind::Int, "1"),
    ("arm.dh.1", Kind::Floats(4), "0 1.5707963267948966 0.089159 0"),
    ("arm.dh.2", Kind::Floats(4), "-0.425 0 0 0"),
    ("arm.dh.3", Kind::Floats(4), "-0.39225 0 0 0"),
    ("arm.dh.4", Kind::Floats(4), "0 1.5707963267948966 0.10915 0"),
    ("arm.dh.5", Kind::Floats(4), "0 -1.5707963267948966 0.09465 0"),
    ("arm.dh.6", Kind::Floats(4), "0 0 0.0823 0"),
    ("arm.link_scale", Kind::Floats(6), "1.02 1.02 1.02 1.02 1.02 1.02"),
    ("arm.angle_offset", Kind::Floats(6), "0.01 0.01 0.01 0.01 0.01 0.01"),
    ("arm.dt", Kind::Floats(1), "0.05"),
    ("arm.qdot_max", Kind::Floats(1), "1"),
    ("camera.rotation", Kind::Floats(9), "1 0 0 0 -1 0 0 0 -1"),
    ("camera.translation", Kind::Floats(3), "0 0 1.5"),
    ("camera.noise_std", Kind::Floats(1), "0"),
    ("dataset.n_samples", Kind::Int, "5000"),
    ("dataset.joint_span", Kind::Floats(1), "1.5707963267948966"),
    ("dataset.center", Kind::Floats(6), "0 -1.2 1.6 -1.97 -1.57 0"),
    ("dataset.warm_gain", Kind::Floats(1), "0.5"),
    ("dataset.error_span", Kind::Floats(1), "0.4"),
    ("dataset.input_span", Kind::Floats(1), "1"),
    ("rbf.estimator_hidden", Kind::Int, "600"),
    ("rbf.controller_hidden", Kind::Int, "60"),
    ("rbf.width_scale", Kind::Floats(1), "2"),
    ("rbf.ridge", Kind::Floats(1), "1e-6"),
    ("estimator.k2", Kind::Floats(1), "1"),
    ("estimator.window", Kind::Int, "5"),
    ("estimator.eps", Kind::Floats(1), "1e-8"),
    ("controller.k", Kind::Floats(1), "-0.5"),
    ("controller.horizon", Kind::Int, "5"),
    ("controller.error_lags", Kind::Int, "2"),
    ("controller.input_lags", Kind::Int, "1"),
    ("controller.clamp", Kind::Floats(1), "1"),
    ("controller.eps", Kind::Floats(1), "1e-12"),
    ("ukf.p0", Kind::Floats(1), "1e-3"),
    ("ukf.process_noise", Kind::Floats(1), "1e-5"),
    ("ukf.measurement_noise", Kind::Floats(1), "1e-6"),
    ("baselines.pid.gain", Kind::Floats(1), "1"),
    ("baselines.pid.n2", Kind::Floats(1), "1"),
    ("baselines.pid.n3", Kind::Floats(1), "0.01"),
    ("baselines.mfac.lambda", Kind::Floats(1), "0.05"),
    ("baselines.mpc.horizon", Kind::Int, "2"),
    ("baselines.mpc.alpha_star", Kind::Floats(1), "0.5"),
    ("baselines.mpc.rho", Kind::Floats(1), "0.1"),
    ("baselines.mpc.weight", Kind::Floats(6), "1 1 1 1 1 1"),
    ("experiment.threshold", Kind::Floats(1), "0.01"),
    ("experiment.max_steps", Kind::Int, "2000"),
    ("stationary.count", Kind::Int, "4"),
    ("trajectory.q0", Kind::Floats(6), "0 -1.2 1.6 -1.97 -1.57 0"),
    ("trajectory.center", Kind::FloatsOrAuto(3), "auto"),
    ("trajectory.radius", Kind::Floats(1), "0.3"),
    ("trajectory.points", Kind::Int, "200"),
    ("trajectory.hold_ticks", Kind::Int, "3"),
];

/// Start configuration and target feature of the committed stationary
/// experiments. Targets are the nominal features of the listed target
/// joint angles (in brackets) under the default overhead camera.
const STATIONARY: &[(&str, &str)] = &[
    // [-0.2 -1.3 1.75 -1.97 -1.47 0]
    (
        "0.25 -1.05 1.4 -1.87 -1.57 0",
        "-0.5694797457581663 0.0043806593997775 1.2585264645940866",
    ),
    // [0.2 -1.35 1.85 -1.87 -1.57 0]
    (
        "-0.3 -1.1 1.7 -2.07 -1.57 0",
        "-0.4817067487020331 0.20908364770866084 1.283737564416278",
    ),
    // [0.1 -1.0 1.35 -2.07 -1.57 0]
    (
        "0.1 -1.4 1.9 -1.97 -1.67 0",
        "-0.6895097145404052 0.1789456310992323 1.2550333095877555",
    ),
    // [-0.35 -1.25 1.65 -1.97 -1.57 0]
    (
        "0 -0.95 1.3 -1.77 -1.47 0",
        "-0.5915693971931493 -0.09967535812613405 1.2426472016782033",
    ),
];

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Int(u64),
    Floats(Vec<f64>),
    Auto,
}

impl Value {
    fn canonical(&self) -> String {
        match self {
            Value::Int(v) => v.to_string(),
            Value::Floats(v) => v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" "),
            Value::Auto => "auto".into(),
        }
    }
}

fn parse_value(kind: Kind, text: &str) -> std::result::Result<Value, String> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    match kind {
        Kind::Int => match tokens.as_slice() {
            [t] => t
                .parse()
                .map(Value::Int)
                .map_err(|_| format!("`{t}` is not a non-negative integer")),
            _ => Err(format!("expected one integer, got {} values", tokens.len())),
        },
        Kind::FloatsOrAuto(_) if tokens == ["auto"] => Ok(Value::Auto),
        Kind::Floats(n) | Kind::FloatsOrAuto(n) => {
            if tokens.len() != n {
                return Err(format!("expected {n} numbers, got {}", tokens.len()));
            }
            let v = tokens
                .iter()
                .map(|t| match t.parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(x),
                    _ => Err(format!("`{t}` is not a finite number")),
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Ok(Value::Floats(v))
        }
    }
}

/// Kind of a stationary pair key, if `key` is one.
fn stationary_kind(key: &str) -> Option<(usize, Kind)> {
    let rest = key.strip_prefix("stationary.")?;
    let (index, field) = rest.split_once('.')?;
    let index: usize = index.parse().ok().filter(|i| *i >= 1)?;
    match field {
        "q0" => Some((index, Kind::Floats(6))),
        "target" => Some((index, Kind::Floats(3))),
        _ => None,
    }
}

fn kind_of(key: &str) -> Option<Kind> {
    KEYS.iter()
        .find(|(k, _, _)| *k == key)
        .map(|(_, kind, _)| *kind)
        .or_else(|| stationary_kind(key).map(|(_, kind)| kind))
}

/// Resolved values plus the line each came from (0 for built-in defaults).
#[derive(Debug, Clone, PartialEq)]
struct Values(BTreeMap<String, (Value, usize)>);

impl Values {
    fn defaults() -> Self {
        let mut map = BTreeMap::new();
        for (key, kind, text) in KEYS {
            map.insert(key.to_string(), (parse_value(*kind, text).expect("built-in default"), 0));
        }
        for (i, (q0, target)) in STATIONARY.iter().enumerate() {
            let n = i + 1;
            map.insert(format!("stationary.{n}.q0"), (parse_value(Kind::Floats(6), q0).unwrap(), 0));
            map.insert(format!("stationary.{n}.target"), (parse_value(Kind::Floats(3), target).unwrap(), 0));
        }
        Values(map)
    }

    fn line(&self, key: &str) -> usize {
        self.0
            .get(key)
            .or_else(|| self.0.iter().find(|(k, _)| k.starts_with(key)).map(|(_, v)| v))
            .map_or(0, |(_, line)| *line)
    }

    fn value(&self, key: &str) -> &Value {
        &self.0.get(key).unwrap_or_else(|| panic!("no value for {key}")).0
    }

    fn int(&self, key: &str) -> u64 {
        match self.value(key) {
            Value::Int(v) => *v,
            other => panic!("{key} holds {other:?}"),
        }
    }

    fn usize(&self, key: &str) -> Result<usize> {
        usize::try_from(self.int(key)).map_err(|_| Error::Config {
            line: self.line(key),
            msg: format!("{key} is too large"),
        })
    }

    fn floats(&self, key: &str) -> &[f64] {
        match self.value(key) {
            Value::Floats(v) => v,
            other => panic!("{key} holds {other:?}"),
        }
    }

    fn float(&self, key: &str) -> f64 {
        self.floats(key)[0]
    }

    fn joints(&self, key: &str) -> Joints {
        Joints::from_column_slice(self.floats(key))
    }

    fn vec3(&self, key: &str) -> Vector3<f64> {
        Vector3::from_column_slice(self.floats(key))
    }

    /// Maps a parameter error to the config line that set it.
    fn locate(&self, err: Error) -> Error {
        match err {
            Error::InvalidParam { name, reason } => Error::Config {
                line: self.line(name),
                msg: format!("{name}: {reason}"),
            },
            Error::Config { .. } => err,
            other => Error::Config {
                line: 0,
                msg: other.to_string(),
            },
        }
    }

    fn checked<T>(&self, r: Result<T>) -> Result<T> {
        r.map_err(|e| self.locate(e))
    }

    fn canonical(&self) -> String {
        let mut out = String::new();
        for (key, _, _) in KEYS {
            let _ = writeln!(out, "{key} = {}", self.value(key).canonical());
        }
        let mut pairs: Vec<(usize, &str, &Value)> = self
            .0
            .iter()
            .filter_map(|(k, (v, _))| stationary_kind(k).map(|(i, _)| (i, k.as_str(), v)))
            .filter(|(i, _, _)| *i as u64 <= self.int("stationary.count"))
            .collect();
        pairs.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for (_, key, v) in pairs {
            let _ = writeln!(out, "{key} = {}", v.canonical());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPair {
    pub q0: Joints,
    pub target: Feature,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryConfig {
    pub q0: Joints,
    pub circle: CircleSpec,
}

/// A validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub settings: Settings,
    pub dataset: DatasetOptions,
    pub train: TrainOptions,
    pub stationary: Vec<StationaryPair>,
    pub trajectory: TrajectoryConfig,
    values: Values,
    canonical: String,
    hash: String,
}

impl Default for Config {
    fn default() -> Self {
        Self::build(Values::defaults()).expect("built-in defaults are valid")
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = Values::defaults();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                msg: format!("expected `key = value`, got `{content}`"),
            })?;
            let key = key.trim();
            let kind = kind_of(key).ok_or_else(|| Error::Config {
                line,
                msg: format!("unknown key `{key}`"),
            })?;
            if let Some(first) = seen.insert(key.to_string(), line) {
                return Err(Error::Config {
                    line,
                    msg: format!("`{key}` already set on line {first}"),
                });
            }
            let v = parse_value(kind, value).map_err(|msg| Error::Config {
                line,
                msg: format!("{key}: {msg}"),
            })?;
            values.0.insert(key.to_string(), (v, line));
        }
        Self::build(values)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config { line, msg } => Error::Config {
                line,
                msg: format!("{msg} (in {})", path.display()),
            },
            other => other,
        })
    }

    /// The same configuration with a different seed (and hash).
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut values = self.values.clone();
        values.0.insert("seed".into(), (Value::Int(seed), 0));
        Self::build(values).expect("seed does not affect validity")
    }

    /// Every key with its resolved value, one per line.
    pub fn canonical_text(&self) -> &str {
        &self.canonical
    }

    /// Hex SHA-256 of the canonical text.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// One stationary scenario per committed pair, all on the same seed.
    pub fn stationary_scenarios(&self, controller: ControllerKind) -> Vec<Scenario> {
        self.stationary
            .iter()
            .enumerate()
            .map(|(i, p)| Scenario::stationary(format!("stationary-{}", i + 1), controller, p.q0, p.target, self.seed))
            .collect()
    }

    pub fn trajectory_scenario(&self, controller: ControllerKind) -> Scenario {
        Scenario::trajectory("circle", controller, self.trajectory.q0, self.trajectory.circle, self.seed)
    }

    fn build(values: Values) -> Result<Self> {
        let v = &values;
        let rows: Vec<DhRow> = (1..=6)
            .map(|i| {
                let r = v.floats(&format!("arm.dh.{i}"));
                DhRow::new(r[0], r[1], r[2], r[3])
            })
            .collect();
        let dh = v.checked(DhParams::new(&rows))?;
        let mut mismatch = PlantPerturbation::identity();
        mismatch.link_scale.copy_from_slice(v.floats("arm.link_scale"));
        mismatch.angle_offset.copy_from_slice(v.floats("arm.angle_offset"));
        if mismatch.link_scale.iter().any(|s| *s <= 0.0) {
            return Err(v.locate(Error::param("arm.link_scale", "must be > 0")));
        }
        let positive = |key: &'static str| -> Result<f64> {
            let x = v.float(key);
            if x > 0.0 {
                Ok(x)
            } else {
                Err(v.locate(Error::param(key, "must be > 0")))
            }
        };
        let non_negative = |key: &'static str| -> Result<f64> {
            let x = v.float(key);
            if x >= 0.0 {
                Ok(x)
            } else {
                Err(v.locate(Error::param(key, "must be >= 0")))
            }
        };
        let rotation = Matrix3::from_row_slice(v.floats("camera.rotation"));
        let camera = v.checked(CameraPose::new(rotation, v.vec3("camera.translation")))?;
        let plant = PlantSettings {
            dh,
            mismatch,
            camera,
            noise_std: non_negative("camera.noise_std")?,
            dt: positive("arm.dt")?,
            qdot_max: positive("arm.qdot_max")?,
        };

        let estimator = v.checked(EstimatorParams::new(
            v.float("estimator.k2"),
            v.usize("estimator.window")?,
            v.float("estimator.eps"),
        ))?;
        let controller = v.checked(ControllerParams::new(
            v.float("controller.k"),
            v.usize("controller.horizon")?,
            v.usize("controller.error_lags")?,
            v.usize("controller.input_lags")?,
            v.float("controller.clamp"),
            v.float("controller.eps"),
        ))?;
        let ukf = UkfSettings {
            p0: positive("ukf.p0")?,
            process_noise: non_negative("ukf.process_noise")?,
            measurement_noise: positive("ukf.measurement_noise")?,
        };
        let pid = v.checked(RbfPidParams::new(
            v.float("baselines.pid.gain"),
            v.float("baselines.pid.n2"),
            v.float("baselines.pid.n3"),
        ))?;
        let mfac = v.checked(MfacParams::new(v.float("baselines.mfac.lambda")))?;
        let weight = Matrix6::from_diagonal(&Vector6::from_column_slice(v.floats("baselines.mpc.weight")));
        let mpc = v.checked(MpcParams::new(
            v.usize("baselines.mpc.horizon")?,
            v.float("baselines.mpc.alpha_star"),
            v.float("baselines.mpc.rho"),
            weight,
        ))?;
        let max_steps = v.usize("experiment.max_steps")?;
        if max_steps == 0 {
            return Err(v.locate(Error::param("experiment.max_steps", "must be >= 1")));
        }
        let settings = Settings {
            plant,
            estimator,
            controller,
            ukf,
            pid,
            mfac,
            mpc,
            threshold: positive("experiment.threshold")?,
            max_steps,
        };

        let dataset = DatasetOptions {
            n_samples: v.usize("dataset.n_samples")?,
            joint_span: non_negative("dataset.joint_span")?,
            center: v.joints("dataset.center"),
            warm_gain: non_negative("dataset.warm_gain")?,
            error_span: non_negative("dataset.error_span")?,
            input_span: non_negative("dataset.input_span")?,
        };
        if dataset.n_samples == 0 {
            return Err(v.locate(Error::param("dataset.n_samples", "must be >= 1")));
        }
        let train = TrainOptions {
            estimator_hidden: v.usize("rbf.estimator_hidden")?,
            controller_hidden: v.usize("rbf.controller_hidden")?,
            width_scale: positive("rbf.width_scale")?,
            ridge: non_negative("rbf.ridge")?,
        };
        for key in ["rbf.estimator_hidden", "rbf.controller_hidden"] {
            let n = v.usize(key)?;
            if n == 0 || n > dataset.n_samples {
                return Err(Error::Config {
                    line: v.line(key),
                    msg: format!("{key} = {n} must lie in 1..=dataset.n_samples ({})", dataset.n_samples),
                });
            }
        }

        let count = v.usize("stationary.count")?;
        let mut stationary = Vec::with_capacity(count);
        for n in 1..=count {
            let (q0, target) = (format!("stationary.{n}.q0"), format!("stationary.{n}.target"));
            if !v.0.contains_key(&q0) || !v.0.contains_key(&target) {
                return Err(Error::Config {
                    line: v.line("stationary.count"),
                    msg: format!("stationary.count = {count} but pair {n} needs both `{q0}` and `{target}`"),
                });
            }
            stationary.push(StationaryPair {
                q0: v.joints(&q0),
                target: v.vec3(&target),
            });
        }
        if let Some((key, (_, line))) =
            v.0.iter()
                .find(|(k, (_, line))| *line > 0 && stationary_kind(k).is_some_and(|(i, _)| i > count))
        {
            return Err(Error::Config {
                line: *line,
                msg: format!("`{key}` is beyond stationary.count = {count}"),
            });
        }

        let traj_q0 = v.joints("trajectory.q0");
        let center = match v.value("trajectory.center") {
            Value::Floats(c) => Vector3::from_column_slice(c),
            _ => settings
                .plant
                .camera
                .apply(&forward_kinematics(&settings.plant.dh, &traj_q0, &PlantPerturbation::identity())),
        };
        let circle = v.checked(CircleSpec::new(
            v.float("trajectory.radius"),
            v.usize("trajectory.points")?,
            center,
            v.usize("trajectory.hold_ticks")?,
        ))?;

        let canonical = values.canonical();
        let hash = hex::encode(Sha256::digest(canonical.as_bytes()));
        Ok(Self {
            seed: v.int("seed"),
            settings,
            dataset,
            train,
            stationary,
            trajectory: TrajectoryConfig { q0: traj_q0, circle },
            values,
            canonical,
            hash,
        })
    }
}
