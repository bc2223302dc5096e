//! Run artifacts: waveform CSV and the metrics record.
//!
//! The CSV has a `t_s` column followed by one column per channel. Numbers
//! are written in the shortest form that parses back to the same `f64`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::engine::{
    settling_metrics, CollapseReport, RunResult, RunStatus, Scenario, SettlingMetrics,
    WaveformLog,
};
use crate::error::ConfigError;

/// Band used for the per-channel settling metrics, relative to the final value.
pub const CHANNEL_BAND: f64 = 0.02;
/// DC voltage band for the summary settling time.
pub const VDC_BAND: f64 = 0.05;

pub fn csv_string(log: &WaveformLog) -> String {
    let mut out = String::with_capacity(32 * (log.names.len() + 1) * (log.len() + 1));
    out.push_str("t_s");
    for n in &log.names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for (k, t) in log.time.iter().enumerate() {
        write!(out, "{t:?}").unwrap();
        for c in &log.columns {
            write!(out, ",{:?}", c[k]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_csv(text: &str) -> Result<WaveformLog, ConfigError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(ConfigError::Syntax {
        line: 1,
        message: "empty CSV".into(),
    })?;
    let mut cols = header.split(',');
    if cols.next() != Some("t_s") {
        return Err(ConfigError::Syntax {
            line: 1,
            message: "first column must be t_s".into(),
        });
    }
    let mut log = WaveformLog::with_channels(cols.map(str::to_string).collect());
    let mut row = Vec::with_capacity(log.names.len());
    for (k, line) in lines {
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| ConfigError::Syntax {
            line: k + 1,
            message,
        };
        row.clear();
        for field in line.split(',') {
            row.push(
                field
                    .parse::<f64>()
                    .map_err(|e| bad(format!("{field:?}: {e}")))?,
            );
        }
        if row.len() != log.names.len() + 1 {
            return Err(bad(format!(
                "expected {} fields, found {}",
                log.names.len() + 1,
                row.len()
            )));
        }
        log.push(row[0], &row[1..]);
    }
    Ok(log)
}

/// Headline numbers of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSummary {
    pub collapsed: bool,
    /// Latest settling time of the converters' DC voltages into 1 ± 5 %
    /// after the first event; `None` if any of them ends outside the band.
    pub settling_time: Option<f64>,
    /// Lowest per-unit frequency among converters and machines.
    pub frequency_nadir: f64,
    pub min_vdc: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMetrics {
    pub scenario: String,
    pub status: RunStatus,
    pub summary: RunSummary,
    pub collapse: BTreeMap<String, CollapseReport>,
    /// Per channel, settling into ±2 % of its final value after the first event.
    pub settling: BTreeMap<String, SettlingMetrics>,
}

fn first_event(scenario: &Scenario) -> f64 {
    scenario.events.first().map_or(0.0, |e| e.t_event)
}

pub fn summarize(scenario: &Scenario, result: &RunResult) -> RunSummary {
    let log = &result.log;
    let t_from = first_event(scenario);
    let mut settling_time = Some(0.0f64);
    let mut min_vdc = f64::INFINITY;
    for (name, report) in &result.collapse {
        let v = log.channel(&format!("{name}.v_dc")).unwrap_or(&[]);
        let s = settling_metrics(&log.time, v, 1.0, VDC_BAND, t_from).settling_time;
        settling_time = match (settling_time, s) {
            (Some(a), Some(b)) if !result.terminated_early() => Some(a.max(b)),
            _ => None,
        };
        min_vdc = min_vdc.min(report.min_vdc);
    }
    let frequency_nadir = log
        .names
        .iter()
        .zip(&log.columns)
        .filter(|(n, _)| n.ends_with(".omega"))
        .flat_map(|(_, c)| c.iter().copied())
        .fold(f64::INFINITY, f64::min);
    RunSummary {
        collapsed: result.collapsed(),
        settling_time,
        frequency_nadir,
        min_vdc,
    }
}

pub fn run_metrics(scenario: &Scenario, result: &RunResult) -> RunMetrics {
    let log = &result.log;
    let t_from = first_event(scenario);
    let settling = log
        .names
        .iter()
        .zip(&log.columns)
        .map(|(n, c)| {
            let target = c.last().copied().unwrap_or(f64::NAN);
            let m = if target != 0.0 && target.is_finite() {
                settling_metrics(&log.time, c, target, CHANNEL_BAND, t_from)
            } else {
                SettlingMetrics {
                    settling_time: None,
                    overshoot: f64::NAN,
                    final_value: target,
                }
            };
            (n.clone(), m)
        })
        .collect();
    RunMetrics {
        scenario: scenario.name.clone(),
        status: result.status.clone(),
        summary: summarize(scenario, result),
        collapse: result.collapse.iter().cloned().collect(),
        settling,
    }
}

impl RunMetrics {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metrics serialize");
        s.push('\n');
        s
    }
}
