//! Closed-loop simulation of one scenario.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::runlog::{LogRow, RunLog, RunMeta, RunStatus};
use super::{ModelSet, Settings};
use crate::arm::{forward_kinematics, step, wrap_angle, Joints, PlantPerturbation};
use crate::baselines::{mfac_tick, mpc_tick, rbf_pid_tick, Motion};
use crate::camera::{observe, Feature};
use crate::controller::{clamp_command, ProposedController};
use crate::error::{Error, Result};
use crate::estimator::ukf::{ukf_update, UkfState};
use crate::estimator::{predict_jacobian, JacobianEstimator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ControllerKind {
    Proposed,
    RbfPid,
    UkfMfac,
    UkfMpc,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [Self::Proposed, Self::RbfPid, Self::UkfMfac, Self::UkfMpc];

    pub fn name(self) -> &'static str {
        match self {
            Self::Proposed => "proposed",
            Self::RbfPid => "rbf_pid",
            Self::UkfMfac => "ukf_mfac",
            Self::UkfMpc => "ukf_mpc",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown controller `{s}` (proposed, rbf_pid, ukf_mfac, ukf_mpc)")))
    }
}

/// Circle in the camera x-y plane, traversed counter-clockwise from
/// `center + (radius, 0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleSpec {
    pub radius: f64,
    pub points: usize,
    pub center: Feature,
    pub hold_ticks: usize,
}

impl CircleSpec {
    pub fn new(radius: f64, points: usize, center: Feature, hold_ticks: usize) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::param("trajectory.radius", "must be finite and >= 0"));
        }
        if points < 3 {
            return Err(Error::param("trajectory.points", "need at least 3 points"));
        }
        if hold_ticks == 0 {
            return Err(Error::param("trajectory.hold_ticks", "must be >= 1"));
        }
        Ok(Self {
            radius,
            points,
            center,
            hold_ticks,
        })
    }

    pub fn point(&self, i: usize) -> Feature {
        let phase = TAU * i as f64 / self.points as f64;
        self.center + Vector3::new(self.radius * phase.cos(), self.radius * phase.sin(), 0.0)
    }

    pub fn ticks(&self) -> usize {
        self.points * self.hold_ticks
    }

    /// Index of the point active at tick `k` (the last one after the end).
    pub fn point_index(&self, k: usize) -> usize {
        (k / self.hold_ticks).min(self.points - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Stationary(Feature),
    Circle(CircleSpec),
}

impl Target {
    fn at(&self, k: usize) -> (usize, Feature) {
        match self {
            Target::Stationary(y) => (0, *y),
            Target::Circle(c) => {
                let i = c.point_index(k);
                (i, c.point(i))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub controller: ControllerKind,
    pub q0: Joints,
    pub target: Target,
    pub seed: u64,
    /// Run on the mismatched plant instead of the nominal one.
    pub perturbed: bool,
    pub estimator_updates: bool,
    pub controller_updates: bool,
    /// First trajectory point entering the tracking RMS.
    pub track_from_point: usize,
}

impl Scenario {
    pub fn stationary(name: impl Into<String>, controller: ControllerKind, q0: Joints, target: Feature, seed: u64) -> Self {
        Self {
            name: name.into(),
            controller,
            q0,
            target: Target::Stationary(target),
            seed,
            perturbed: false,
            estimator_updates: true,
            controller_updates: true,
            track_from_point: 0,
        }
    }

    pub fn trajectory(name: impl Into<String>, controller: ControllerKind, q0: Joints, circle: CircleSpec, seed: u64) -> Self {
        Self {
            name: name.into(),
            controller,
            q0,
            target: Target::Circle(circle),
            seed,
            perturbed: true,
            estimator_updates: true,
            controller_updates: true,
            track_from_point: circle.points / 4,
        }
    }
}

/// Jacobian source plus controller state for one run.
enum Loop {
    Proposed {
        estimator: JacobianEstimator,
        controller: ProposedController,
    },
    RbfPid {
        models: Vec<crate::rbf::RbfNetwork>,
    },
    Ukf {
        state: UkfState,
        mpc: bool,
    },
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Runs one scenario to completion. Numerical blow-ups end the run with an
/// aborted status rather than an error.
pub fn run_scenario(settings: &Settings, models: &ModelSet, scenario: &Scenario, config_hash: &str) -> Result<RunLog> {
    let plant = &settings.plant;
    let pert = if scenario.perturbed {
        plant.mismatch
    } else {
        PlantPerturbation::identity()
    };
    let dt = plant.dt;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);

    let mut state = match scenario.controller {
        ControllerKind::Proposed => Loop::Proposed {
            estimator: JacobianEstimator::new(models.estimator.clone(), settings.estimator)?,
            controller: ProposedController::new(models.controller.clone(), settings.controller)?,
        },
        ControllerKind::RbfPid => Loop::RbfPid {
            models: models.estimator.clone(),
        },
        ControllerKind::UkfMfac | ControllerKind::UkfMpc => {
            let prior = predict_jacobian(&models.estimator, &scenario.q0);
            let u = &settings.ukf;
            Loop::Ukf {
                state: UkfState::new(&prior, u.p0, u.process_noise, u.measurement_noise)?,
                mpc: scenario.controller == ControllerKind::UkfMpc,
            }
        }
    };

    let (stationary, n_steps) = match scenario.target {
        Target::Stationary(_) => (true, settings.max_steps),
        Target::Circle(c) => (false, c.ticks()),
    };
    let horizon = settings.controller.horizon();
    let clamp = settings.controller.clamp();

    let mut rows = Vec::new();
    let mut status = if stationary { RunStatus::MaxSteps } else { RunStatus::Completed };
    let mut q = scenario.q0;
    let mut prev: Option<(Joints, Feature)> = None;
    for k in 0..n_steps {
        let y = observe(&plant.camera, &forward_kinematics(&plant.dh, &q, &pert), plant.noise_std, &mut rng);
        if !finite(y.as_slice()) {
            status = RunStatus::Aborted {
                step: k,
                signal: "feature".into(),
            };
            break;
        }
        let (point, y_des) = scenario.target.at(k);
        let e = y - y_des;
        let mut row = LogRow {
            step: k,
            point,
            q,
            y,
            y_des,
            e,
            e_norm: e.norm(),
            ..LogRow::default()
        };

        let motion = prev.map(|(q_prev, y_prev)| {
            let dq = Joints::from_fn(|i, _| wrap_angle(q[i] - q_prev[i]));
            (q_prev, dq, y - y_prev)
        });

        if stationary && row.e_norm < settings.threshold {
            rows.push(row);
            status = RunStatus::Converged;
            break;
        }

        let command = match &mut state {
            Loop::Proposed { estimator, controller } => {
                if let Some((q_prev, dq, dy)) = motion {
                    estimator.record(q_prev, dq, dy);
                    if scenario.estimator_updates {
                        if let Some(upd) = estimator.update()? {
                            row.alpha2 = upd.alpha2;
                            row.est_criterion = upd.criterion;
                        }
                    }
                }
                let jac = estimator.predict(&q);
                let targets: Vec<Feature> = (1..=horizon).map(|t| scenario.target.at(k + t).1).collect();
                let tick = controller.tick(&y, &y_des, &targets, &jac, dt, scenario.controller_updates)?;
                row.alpha = tick.alpha;
                row.criterion = tick.criterion;
                row.lyapunov = tick.lyapunov_variation;
                tick.command
            }
            Loop::RbfPid { models } => {
                let m = motion
                    .filter(|_| scenario.estimator_updates)
                    .map(|(q_prev, dq, dy)| Motion { q_prev, qdot: dq / dt, dy });
                let tick = rbf_pid_tick(models, &q, &e, m.as_ref(), &settings.pid, dt)?;
                row.lyapunov = tick.lyapunov;
                clamp_command(&tick.command, clamp)
            }
            Loop::Ukf { state, mpc } => {
                if let Some((_, dq, dy)) = motion {
                    if scenario.estimator_updates {
                        *state = ukf_update(state, &dq, &dy)?;
                    }
                }
                let jac = state.jacobian();
                let servo = y_des - y;
                let r_next = if *mpc {
                    mpc_tick(&jac, &q, &servo, &settings.mpc)
                } else {
                    mfac_tick(&jac, &q, &servo, &settings.mfac)
                };
                clamp_command(&((r_next - q) / dt), clamp)
            }
        };

        if !finite(command.as_slice()) {
            rows.push(row);
            status = RunStatus::Aborted {
                step: k,
                signal: "command".into(),
            };
            break;
        }
        row.u = command;
        rows.push(row);
        let q_next = step(&q, &command, dt, plant.qdot_max);
        prev = Some((q, y));
        q = q_next;
    }

    Ok(RunLog {
        meta: RunMeta {
            scenario: scenario.name.clone(),
            controller: scenario.controller.name().into(),
            config_hash: config_hash.into(),
            threshold: settings.threshold,
            track_from_point: scenario.track_from_point,
            status,
        },
        rows,
    })
}
