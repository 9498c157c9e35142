//! Command-line front end: argument definitions, artifact layout and exit
//! codes. `main.rs` only parses and dispatches.
//!
//! Artifact layout:
//!
//! * `collect --out D` writes `D/estimator_j{1..6}.csv`,
//!   `D/controller_m{1..M}.csv`, `D/config.txt` and `D/manifest.txt`.
//! * `train --data D --out M` writes `M/estimator_j{i}.rbf`,
//!   `M/controller_m{i}.rbf`, `M/train_report.txt` and `M/manifest.txt`.
//! * `run` and `compare` write `{scenario}__{controller}.csv` logs with a
//!   `.txt` summary next to each; `compare` adds `comparison.txt`.
//! * `plot --logs L --out P` writes `error_{scenario}.svg`,
//!   `path_{scenario}__{controller}.svg` and, for trajectory runs,
//!   `features_{scenario}__{controller}.svg`.
//!
//! Output directories must already exist.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::experiments::compare::{comparison_report, run_all};
use crate::experiments::dataset::{collect_offline_dataset, train_models, OfflineDataset, TrainingReport};
use crate::experiments::plot::{error_profile, feature_profile, trajectory_3d};
use crate::experiments::runlog::RunLog;
use crate::experiments::sim::{ControllerKind, Scenario};
use crate::experiments::ModelSet;
use crate::rbf::{RbfNetwork, TrainingSet};

pub const EXIT_OK: u8 = 0;
pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_DIVERGED: u8 = 4;
pub const EXIT_IO: u8 = 5;

/// Exit code for a failed command.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config { .. } | Error::InvalidParam { .. } | Error::LogSingularity(_) | Error::Dimension { .. } => EXIT_CONFIG,
        Error::NonFinite { .. } => EXIT_DIVERGED,
        Error::Io { .. } | Error::Csv { .. } | Error::Parse(_) | Error::Plot(_) => EXIT_IO,
        _ => EXIT_OTHER,
    }
}

#[derive(Debug, Parser)]
#[command(name = "vservo", version, about = "Uncalibrated eye-to-hand visual servoing experiments")]
pub struct Cli {
    /// key = value configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides the `seed` key of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the offline training data.
    Collect {
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the estimator and controller networks on collected data.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run scenarios for the chosen controllers.
    Run(RunArgs),
    /// Run every controller on every scenario and write a comparison table.
    Compare {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw SVG plots from run logs.
    Plot {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Repeatable; all four when omitted.
    #[arg(long = "controller")]
    pub controllers: Vec<ControllerKind>,
    #[arg(long, value_enum, default_value_t = ScenarioSet::Stationary)]
    pub scenario: ScenarioSet,
    /// Freeze the Jacobian estimate during the run.
    #[arg(long)]
    pub no_estimator_updates: bool,
    /// Freeze the controller networks during the run.
    #[arg(long)]
    pub no_controller_updates: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioSet {
    Stationary,
    Trajectory,
    All,
}

/// What a successful command produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    /// `scenario/controller` of every run that ended aborted.
    pub aborted: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        if self.aborted.is_empty() {
            EXIT_OK
        } else {
            EXIT_DIVERGED
        }
    }
}

pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<Config> {
    let config = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    Ok(match seed {
        Some(s) => config.with_seed(s),
        None => config,
    })
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    let config = load_config(cli.config.as_deref(), cli.seed)?;
    match &cli.command {
        Command::Collect { out } => cmd_collect(&config, out),
        Command::Train { data, out } => cmd_train(&config, data, out),
        Command::Run(args) => {
            let controllers = if args.controllers.is_empty() {
                ControllerKind::ALL.to_vec()
            } else {
                args.controllers.clone()
            };
            let mut scenarios = Vec::new();
            for c in controllers {
                if args.scenario != ScenarioSet::Trajectory {
                    scenarios.extend(config.stationary_scenarios(c));
                }
                if args.scenario != ScenarioSet::Stationary {
                    scenarios.push(config.trajectory_scenario(c));
                }
            }
            for s in &mut scenarios {
                s.estimator_updates = !args.no_estimator_updates;
                s.controller_updates = !args.no_controller_updates;
            }
            cmd_run(&config, &args.models, &args.out, &scenarios)
        }
        Command::Compare { models, out } => cmd_compare(&config, models, out),
        Command::Plot { logs, out } => cmd_plot(logs, out),
    }
}

fn require_dir(dir: &Path) -> Result<()> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        ))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn header(config: &Config) -> Vec<String> {
    vec![format!("config_hash={}", config.hash()), format!("seed={}", config.seed)]
}

/// `manifest.txt`: config hash, seed, extra fields and a SHA-256 line per file.
fn write_manifest(dir: &Path, kind: &str, config: &Config, fields: &[(&str, String)], files: &[PathBuf]) -> Result<PathBuf> {
    let mut out = String::new();
    let _ = writeln!(out, "# vservo manifest");
    let _ = writeln!(out, "kind = {kind}");
    let _ = writeln!(out, "config_hash = {}", config.hash());
    let _ = writeln!(out, "seed = {}", config.seed);
    for (k, v) in fields {
        let _ = writeln!(out, "{k} = {v}");
    }
    for f in files {
        let name = f.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let _ = writeln!(out, "sha256 {name} = {}", sha256_file(f)?);
    }
    let path = dir.join("manifest.txt");
    write_file(&path, &out)?;
    Ok(path)
}

/// Parsed `manifest.txt`: plain fields and file checksums.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub fields: BTreeMap<String, String>,
    pub checksums: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.txt");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut m = Manifest::default();
        for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::Parse(format!("{}: bad manifest line `{line}`", path.display())))?;
            match k.strip_prefix("sha256 ") {
                Some(file) => m.checksums.insert(file.to_string(), v.to_string()),
                None => m.fields.insert(k.to_string(), v.to_string()),
            };
        }
        Ok(m)
    }

    /// Recomputes every listed checksum.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for (file, want) in &self.checksums {
            let got = sha256_file(&dir.join(file))?;
            if &got != want {
                return Err(Error::Parse(format!("{file}: checksum mismatch (manifest {want}, file {got})")));
            }
        }
        Ok(())
    }
}

fn estimator_name(i: usize) -> String {
    format!("estimator_j{}", i + 1)
}

fn controller_name(i: usize) -> String {
    format!("controller_m{}", i + 1)
}

pub fn cmd_collect(config: &Config, out: &Path) -> Result<Outcome> {
    require_dir(out)?;
    let s = &config.settings;
    let data = collect_offline_dataset(&s.plant.dh, &s.plant.camera, &s.controller, &config.dataset, config.seed)?;
    let comments = header(config);
    let mut written = Vec::new();
    let groups = [
        (&data.estimator, estimator_name as fn(usize) -> String),
        (&data.controller, controller_name),
    ];
    for (sets, name) in groups {
        for (i, set) in sets.iter().enumerate() {
            let path = out.join(format!("{}.csv", name(i)));
            set.save_csv(&path, &comments)?;
            written.push(path);
        }
    }
    let cfg_path = out.join("config.txt");
    write_file(&cfg_path, &format!("# config_hash={}\n{}", config.hash(), config.canonical_text()))?;
    written.push(cfg_path);
    let fields = [("samples", config.dataset.n_samples.to_string())];
    let manifest = write_manifest(out, "dataset", config, &fields, &written)?;
    written.push(manifest);
    log::info!("collected {} samples into {}", config.dataset.n_samples, out.display());
    Ok(Outcome {
        written,
        aborted: Vec::new(),
    })
}

/// Checks `(input, output)` dimensions, naming the side that differs.
fn check_shape(contexts: [&'static str; 2], got: (usize, usize), want: (usize, usize)) -> Result<()> {
    for (context, got, expected) in [(contexts[0], got.0, want.0), (contexts[1], got.1, want.1)] {
        if got != expected {
            return Err(Error::Dimension { context, expected, got });
        }
    }
    Ok(())
}

/// Reads a collected dataset and checks it against the configuration.
pub fn load_dataset(config: &Config, dir: &Path) -> Result<OfflineDataset> {
    let manifest = Manifest::load(dir)?;
    manifest.verify(dir)?;
    if manifest.fields.get("config_hash").map(String::as_str) != Some(config.hash()) {
        log::warn!("dataset in {} was collected under a different configuration", dir.display());
    }
    let info_dim = config.settings.controller.info_dim();
    let mut estimator = Vec::new();
    for i in 0..6 {
        let set = TrainingSet::load_csv(&dir.join(format!("{}.csv", estimator_name(i))))?;
        check_shape(
            ["estimator dataset input", "estimator dataset target"],
            (set.input_dim(), set.target_dim()),
            (6, 3),
        )?;
        estimator.push(set);
    }
    let mut controller = Vec::new();
    for i in 0.. {
        let path = dir.join(format!("{}.csv", controller_name(i)));
        if !path.exists() {
            break;
        }
        let set = TrainingSet::load_csv(&path)?;
        check_shape(
            ["controller dataset input", "controller dataset target"],
            (set.input_dim(), set.target_dim()),
            (info_dim, 6),
        )?;
        controller.push(set);
    }
    if controller.len() != info_dim {
        return Err(Error::Dimension {
            context: "controller dataset file count",
            expected: info_dim,
            got: controller.len(),
        });
    }
    Ok(OfflineDataset { estimator, controller })
}

pub fn train_report_text(config: &Config, report: &TrainingReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# config_hash={}", config.hash());
    let _ = writeln!(out, "# rms training residual per network");
    for (i, r) in report.estimator_rms.iter().enumerate() {
        let _ = writeln!(out, "{} = {r:e}", estimator_name(i));
    }
    for (i, r) in report.controller_rms.iter().enumerate() {
        let _ = writeln!(out, "{} = {r:e}", controller_name(i));
    }
    out
}

pub fn cmd_train(config: &Config, data: &Path, out: &Path) -> Result<Outcome> {
    require_dir(out)?;
    let dataset = load_dataset(config, data)?;
    let (models, report) = train_models(&dataset, &config.train, config.seed)?;
    let comments = header(config);
    let mut written = Vec::new();
    for (i, net) in models.estimator.iter().enumerate() {
        let path = out.join(format!("{}.rbf", estimator_name(i)));
        net.save(&path, &comments)?;
        written.push(path);
    }
    for (i, net) in models.controller.iter().enumerate() {
        let path = out.join(format!("{}.rbf", controller_name(i)));
        net.save(&path, &comments)?;
        written.push(path);
    }
    let report_path = out.join("train_report.txt");
    write_file(&report_path, &train_report_text(config, &report))?;
    written.push(report_path);
    let manifest = write_manifest(out, "models", config, &[], &written)?;
    written.push(manifest);
    log::info!(
        "trained {} networks into {}",
        models.estimator.len() + models.controller.len(),
        out.display()
    );
    Ok(Outcome {
        written,
        aborted: Vec::new(),
    })
}

/// Reads trained networks and checks their shapes against the configuration.
pub fn load_models(config: &Config, dir: &Path) -> Result<ModelSet> {
    let info_dim = config.settings.controller.info_dim();
    let load_group = |name: fn(usize) -> String, count: usize, dims: (usize, usize), contexts: [&'static str; 2]| {
        (0..count)
            .map(|i| {
                let net = RbfNetwork::load(&dir.join(format!("{}.rbf", name(i))))?;
                check_shape(contexts, (net.input_dim(), net.output_dim()), dims)?;
                Ok(net)
            })
            .collect::<Result<Vec<_>>>()
    };
    Ok(ModelSet {
        estimator: load_group(estimator_name, 6, (6, 3), ["estimator network input", "estimator network output"])?,
        controller: load_group(
            controller_name,
            info_dim,
            (info_dim, 6),
            ["controller network input", "controller network output"],
        )?,
    })
}

fn log_stem(log: &RunLog) -> String {
    format!("{}__{}", log.meta.scenario, log.meta.controller)
}

fn write_logs(out: &Path, scenarios: &[Scenario], results: &[Result<RunLog>], outcome: &mut Outcome) -> Result<()> {
    for (sc, res) in scenarios.iter().zip(results) {
        let log = match res {
            Ok(log) => log,
            Err(e) => {
                log::error!("{}/{}: {e}", sc.name, sc.controller);
                outcome.aborted.push(format!("{}/{}", sc.name, sc.controller));
                continue;
            }
        };
        let stem = log_stem(log);
        let csv = out.join(format!("{stem}.csv"));
        log.save(&csv)?;
        let txt = out.join(format!("{stem}.txt"));
        write_file(&txt, &log.summary_text())?;
        outcome.written.extend([csv, txt]);
        if log.meta.status.is_aborted() {
            log::warn!("{stem}: {}", log.meta.status.label());
            outcome.aborted.push(format!("{}/{}", sc.name, sc.controller));
        }
    }
    Ok(())
}

pub fn cmd_run(config: &Config, models: &Path, out: &Path, scenarios: &[Scenario]) -> Result<Outcome> {
    require_dir(out)?;
    let models = load_models(config, models)?;
    let results = run_all(&config.settings, &models, scenarios, config.hash());
    let mut outcome = Outcome::default();
    write_logs(out, scenarios, &results, &mut outcome)?;
    print!("{}", comparison_report(config.hash(), scenarios, &results));
    Ok(outcome)
}

/// Every controller on the stationary pairs, the circle, and the circle
/// with a frozen Jacobian estimate.
pub fn comparison_scenarios(config: &Config) -> Vec<Scenario> {
    let mut scenarios = Vec::new();
    for c in ControllerKind::ALL {
        scenarios.extend(config.stationary_scenarios(c));
        scenarios.push(config.trajectory_scenario(c));
        let mut frozen = config.trajectory_scenario(c);
        frozen.name = "circle-frozen".into();
        frozen.estimator_updates = false;
        scenarios.push(frozen);
    }
    scenarios
}

pub fn cmd_compare(config: &Config, models: &Path, out: &Path) -> Result<Outcome> {
    require_dir(out)?;
    let models = load_models(config, models)?;
    let scenarios = comparison_scenarios(config);
    let results = run_all(&config.settings, &models, &scenarios, config.hash());
    let mut outcome = Outcome::default();
    write_logs(out, &scenarios, &results, &mut outcome)?;
    let report = comparison_report(config.hash(), &scenarios, &results);
    let path = out.join("comparison.txt");
    write_file(&path, &report)?;
    outcome.written.push(path);
    print!("{report}");
    Ok(outcome)
}

/// Puts the config hash in an XML comment ahead of the root element.
fn stamp_svg(path: &Path, config_hash: &str) -> Result<()> {
    let svg = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    write_file(path, &format!("<!-- config_hash={config_hash} -->\n{svg}"))
}

pub fn cmd_plot(logs: &Path, out: &Path) -> Result<Outcome> {
    require_dir(out)?;
    let mut paths: Vec<PathBuf> = fs::read_dir(logs)
        .map_err(|e| Error::io(logs, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    let mut by_scenario: BTreeMap<String, Vec<RunLog>> = BTreeMap::new();
    for p in &paths {
        let log = RunLog::load(p)?;
        by_scenario.entry(log.meta.scenario.clone()).or_default().push(log);
    }
    if by_scenario.is_empty() {
        return Err(Error::io(
            logs,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no run logs (*.csv) found"),
        ));
    }

    let mut outcome = Outcome::default();
    for (scenario, group) in &by_scenario {
        let hash = &group[0].meta.config_hash;
        let path = out.join(format!("error_{scenario}.svg"));
        error_profile(group, &path)?;
        stamp_svg(&path, hash)?;
        outcome.written.push(path);
        for log in group {
            let path = out.join(format!("path_{}.svg", log_stem(log)));
            trajectory_3d(log, &path)?;
            stamp_svg(&path, &log.meta.config_hash)?;
            outcome.written.push(path);
            if log.rows.iter().any(|r| r.point > 0) {
                let path = out.join(format!("features_{}.svg", log_stem(log)));
                feature_profile(log, &path)?;
                stamp_svg(&path, &log.meta.config_hash)?;
                outcome.written.push(path);
            }
        }
    }
    Ok(outcome)
}
