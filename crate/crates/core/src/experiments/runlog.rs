//! Per-tick run logs and their summaries.
//!
//! CSV layout: a block of `# key=value` header lines (config hash, scenario,
//! controller, threshold, tracking start, status), then one row per tick with
//! the columns
//!
//! ```text
//! step, point, q0..q5, y0..y2, yd0..yd2, e0..e2, e_norm, u0..u5,
//! alpha, alpha2, criterion, est_criterion, lyapunov
//! ```
//!
//! `point` is the index of the active trajectory point (0 for stationary
//! runs), `u` the joint-velocity command applied after the measurement,
//! `alpha` the controller step size, `alpha2` the estimator step size,
//! `criterion` the controller horizon criterion, `est_criterion` the windowed
//! estimator criterion, and `lyapunov` the controller's Lyapunov monitor.
//! Floats are written in shortest round-trip form, so a summary recomputed
//! from a read-back log is bit-identical.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::arm::Joints;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LogRow {
    pub step: usize,
    pub point: usize,
    pub q: Joints,
    pub y: Vector3<f64>,
    pub y_des: Vector3<f64>,
    pub e: Vector3<f64>,
    pub e_norm: f64,
    pub u: Joints,
    pub alpha: f64,
    pub alpha2: f64,
    pub criterion: f64,
    pub est_criterion: f64,
    pub lyapunov: f64,
}

pub const COLUMNS: usize = 2 + 6 + 3 + 3 + 3 + 1 + 6 + 5;

impl LogRow {
    fn header() -> Vec<String> {
        let mut h = vec!["step".to_string(), "point".to_string()];
        h.extend((0..6).map(|i| format!("q{i}")));
        h.extend((0..3).map(|i| format!("y{i}")));
        h.extend((0..3).map(|i| format!("yd{i}")));
        h.extend((0..3).map(|i| format!("e{i}")));
        h.push("e_norm".into());
        h.extend((0..6).map(|i| format!("u{i}")));
        for s in ["alpha", "alpha2", "criterion", "est_criterion", "lyapunov"] {
            h.push(s.into());
        }
        h
    }

    fn fields(&self) -> Vec<String> {
        let mut f = vec![self.step.to_string(), self.point.to_string()];
        let tail = [self.alpha, self.alpha2, self.criterion, self.est_criterion, self.lyapunov];
        let floats = self
            .q
            .iter()
            .chain(self.y.iter())
            .chain(self.y_des.iter())
            .chain(self.e.iter())
            .chain(std::iter::once(&self.e_norm))
            .chain(self.u.iter())
            .chain(tail.iter());
        f.extend(floats.map(|v| format!("{v:e}")));
        f
    }

    fn parse(rec: &csv::StringRecord) -> Result<Self> {
        if rec.len() != COLUMNS {
            return Err(Error::Dimension {
                context: "run log row",
                expected: COLUMNS,
                got: rec.len(),
            });
        }
        let int = |i: usize| rec[i].parse::<usize>().map_err(|e| Error::Parse(format!("column {i}: {e}")));
        let vals = (2..COLUMNS)
            .map(|i| rec[i].parse::<f64>().map_err(|e| Error::Parse(format!("column {i}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        let v3 = |o: usize| Vector3::new(vals[o], vals[o + 1], vals[o + 2]);
        Ok(Self {
            step: int(0)?,
            point: int(1)?,
            q: Joints::from_column_slice(&vals[0..6]),
            y: v3(6),
            y_des: v3(9),
            e: v3(12),
            e_norm: vals[15],
            u: Joints::from_column_slice(&vals[16..22]),
            alpha: vals[22],
            alpha2: vals[23],
            criterion: vals[24],
            est_criterion: vals[25],
            lyapunov: vals[26],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    /// Stationary run reached the threshold.
    Converged,
    /// Stationary run used up its step budget.
    MaxSteps,
    /// Trajectory run finished all points.
    Completed,
    Aborted {
        step: usize,
        signal: String,
    },
}

impl RunStatus {
    pub fn label(&self) -> String {
        match self {
            RunStatus::Converged => "converged".into(),
            RunStatus::MaxSteps => "max_steps".into(),
            RunStatus::Completed => "completed".into(),
            RunStatus::Aborted { step, signal } => format!("aborted:{step}:{signal}"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "converged" => RunStatus::Converged,
            "max_steps" => RunStatus::MaxSteps,
            "completed" => RunStatus::Completed,
            other => {
                let mut parts = other.splitn(3, ':');
                match (parts.next(), parts.next(), parts.next()) {
                    (Some("aborted"), Some(step), Some(signal)) => RunStatus::Aborted {
                        step: step.parse().map_err(|_| Error::Parse(format!("bad status `{other}`")))?,
                        signal: signal.to_string(),
                    },
                    _ => return Err(Error::Parse(format!("bad status `{other}`"))),
                }
            }
        })
    }

    pub fn is_aborted(&self) -> bool {
        matches!(self, RunStatus::Aborted { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub scenario: String,
    pub controller: String,
    pub config_hash: String,
    pub threshold: f64,
    /// Rows with `point >= track_from_point` enter the tracking RMS.
    pub track_from_point: usize,
    pub status: RunStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rows: usize,
    pub steps_to_threshold: Option<usize>,
    pub rms_error: f64,
    pub tracking_rms_error: f64,
    pub final_error: f64,
    pub path_length: f64,
    pub straight_line: f64,
    /// Path length over straight-line distance from the first measured
    /// feature to the last desired one.
    pub overshoot: f64,
}

fn rms<'a>(values: impl Iterator<Item = &'a f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v * v;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        (sum / n as f64).sqrt()
    }
}

impl Summary {
    pub fn from_rows(rows: &[LogRow], threshold: f64, track_from_point: usize) -> Self {
        let steps_to_threshold = rows.iter().find(|r| r.e_norm < threshold).map(|r| r.step);
        let path_length = rows.windows(2).map(|w| (w[1].y - w[0].y).norm()).sum();
        let straight_line = match (rows.first(), rows.last()) {
            (Some(a), Some(b)) => (b.y_des - a.y).norm(),
            _ => 0.0,
        };
        let overshoot = if straight_line > 0.0 {
            path_length / straight_line
        } else if path_length == 0.0 {
            1.0
        } else {
            f64::INFINITY
        };
        Self {
            rows: rows.len(),
            steps_to_threshold,
            rms_error: rms(rows.iter().map(|r| &r.e_norm)),
            tracking_rms_error: rms(rows.iter().filter(|r| r.point >= track_from_point).map(|r| &r.e_norm)),
            final_error: rows.last().map_or(f64::NAN, |r| r.e_norm),
            path_length,
            straight_line,
            overshoot,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub meta: RunMeta,
    pub rows: Vec<LogRow>,
}

impl RunLog {
    pub fn summary(&self) -> Summary {
        Summary::from_rows(&self.rows, self.meta.threshold, self.meta.track_from_point)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::result::Result<(), csv::Error> {
        let m = &self.meta;
        writeln!(out, "# config_hash={}", m.config_hash)?;
        writeln!(out, "# scenario={}", m.scenario)?;
        writeln!(out, "# controller={}", m.controller)?;
        writeln!(out, "# threshold={:e}", m.threshold)?;
        writeln!(out, "# track_from_point={}", m.track_from_point)?;
        writeln!(out, "# status={}", m.status.label())?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(LogRow::header())?;
        for r in &self.rows {
            w.write_record(r.fields())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut text = String::new();
        let mut header = Vec::new();
        for line in input.lines() {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            if let Some(rest) = line.strip_prefix('#') {
                header.push(rest.trim().to_string());
            } else {
                text.push_str(&line);
                text.push('\n');
            }
        }
        let get = |key: &str| {
            header
                .iter()
                .find_map(|h| h.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .map(str::to_string)
                .ok_or_else(|| Error::Parse(format!("run log header lacks `{key}`")))
        };
        let meta = RunMeta {
            scenario: get("scenario")?,
            controller: get("controller")?,
            config_hash: get("config_hash")?,
            threshold: get("threshold")?.parse().map_err(|e| Error::Parse(format!("threshold: {e}")))?,
            track_from_point: get("track_from_point")?
                .parse()
                .map_err(|e| Error::Parse(format!("track_from_point: {e}")))?,
            status: RunStatus::parse(&get("status")?)?,
        };
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let rows = rdr
            .records()
            .map(|r| LogRow::parse(&r.map_err(|e| Error::Parse(e.to_string()))?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { meta, rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file)).map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(BufReader::new(file))
    }

    /// Plain-text summary report.
    pub fn summary_text(&self) -> String {
        let s = self.summary();
        let m = &self.meta;
        let mut out = String::new();
        let _ = writeln!(out, "# config_hash={}", m.config_hash);
        let _ = writeln!(out, "scenario = {}", m.scenario);
        let _ = writeln!(out, "controller = {}", m.controller);
        let _ = writeln!(out, "status = {}", m.status.label());
        let _ = writeln!(out, "rows = {}", s.rows);
        let steps = s.steps_to_threshold.map_or("none".to_string(), |v| v.to_string());
        let _ = writeln!(out, "steps_to_threshold = {steps}");
        let _ = writeln!(out, "rms_error = {:e}", s.rms_error);
        let _ = writeln!(out, "tracking_rms_error = {:e}", s.tracking_rms_error);
        let _ = writeln!(out, "final_error = {:e}", s.final_error);
        let _ = writeln!(out, "path_length = {:e}", s.path_length);
        let _ = writeln!(out, "straight_line = {:e}", s.straight_line);
        let _ = writeln!(out, "overshoot = {:e}", s.overshoot);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_log() -> RunLog {
        let rows = (0..5)
            .map(|k| {
                let y = Vector3::new(0.1 / (k as f64 + 1.0), 1.0 / 3.0, -0.2);
                let y_des = Vector3::new(0.0, 1.0 / 3.0, -0.2);
                let e = y - y_des;
                LogRow {
                    step: k,
                    point: k / 2,
                    q: Joints::repeat(k as f64 * 0.1),
                    y,
                    y_des,
                    e,
                    e_norm: e.norm(),
                    u: Joints::repeat(-0.01 * k as f64),
                    alpha: 1.0 / 7.0,
                    ..LogRow::default()
                }
            })
            .collect();
        RunLog {
            meta: RunMeta {
                scenario: "s1".into(),
                controller: "proposed".into(),
                config_hash: "abc".into(),
                threshold: 0.025,
                track_from_point: 1,
                status: RunStatus::Converged,
            },
            rows,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let log = sample_log();
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let back = RunLog::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, log);
        assert_eq!(back.summary(), log.summary());
        assert!(String::from_utf8(buf).unwrap().starts_with("# config_hash=abc\n"));
    }

    #[test]
    fn summary_metrics() {
        let s = sample_log().summary();
        assert_eq!(s.rows, 5);
        assert_eq!(s.steps_to_threshold, Some(4));
        assert_close!(s.path_length, 0.1 - 0.02, 1e-15);
        assert_close!(s.overshoot, 0.08 / 0.1, 1e-14);
        let tracked = [0.1 / 3.0, 0.025, 0.02];
        let want = (tracked.iter().map(|v| v * v).sum::<f64>() / 3.0).sqrt();
        assert_close!(s.tracking_rms_error, want, 1e-15);
    }

    #[test]
    fn status_labels_round_trip() {
        for s in [
            RunStatus::Converged,
            RunStatus::MaxSteps,
            RunStatus::Completed,
            RunStatus::Aborted {
                step: 4,
                signal: "command".into(),
            },
        ] {
            assert_eq!(RunStatus::parse(&s.label()).unwrap(), s);
        }
    }
}
