//! Side-by-side runs of several scenarios and a text report.

use std::fmt::Write as _;
use std::thread;

use super::runlog::{RunLog, Summary};
use super::sim::{run_scenario, Scenario};
use super::{ModelSet, Settings};
use crate::error::Result;

/// Runs every scenario on its own thread; results keep the input order.
pub fn run_all(settings: &Settings, models: &ModelSet, scenarios: &[Scenario], config_hash: &str) -> Vec<Result<RunLog>> {
    thread::scope(|s| {
        let handles: Vec<_> = scenarios
            .iter()
            .map(|sc| s.spawn(move || run_scenario(settings, models, sc, config_hash)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("scenario thread panicked")).collect()
    })
}

fn fmt_steps(s: &Summary) -> String {
    s.steps_to_threshold.map_or("-".to_string(), |v| v.to_string())
}

/// Fixed-width table: one line per run, errors marked in place.
pub fn comparison_report(config_hash: &str, scenarios: &[Scenario], results: &[Result<RunLog>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# config_hash={config_hash}");
    let _ = writeln!(
        out,
        "{:<24} {:<9} {:<12} {:>7} {:>12} {:>12} {:>12} {:>10}",
        "scenario", "controller", "status", "steps", "rms_error", "track_rms", "path_m", "overshoot"
    );
    for (sc, res) in scenarios.iter().zip(results) {
        match res {
            Ok(log) => {
                let s = log.summary();
                let _ = writeln!(
                    out,
                    "{:<24} {:<9} {:<12} {:>7} {:>12.6} {:>12.6} {:>12.6} {:>10.4}",
                    sc.name,
                    sc.controller.name(),
                    log.meta.status.label(),
                    fmt_steps(&s),
                    s.rms_error,
                    s.tracking_rms_error,
                    s.path_length,
                    s.overshoot
                );
            }
            Err(e) => {
                let _ = writeln!(out, "{:<24} {:<9} error: {e}", sc.name, sc.controller.name());
            }
        }
    }
    out
}
