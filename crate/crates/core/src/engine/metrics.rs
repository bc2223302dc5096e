//! Post-run diagnostics computed from logged channels.

use serde::{Deserialize, Serialize};

/// Relative tolerance for deciding that the DC source current sits at its limit.
pub const SATURATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub collapsed: bool,
    /// First time `v_dc` went below the threshold, if it never came back.
    pub t_collapse: Option<f64>,
    pub min_vdc: f64,
    /// Total time the DC source current was at its limit (s).
    pub saturation_duration: f64,
    /// Longest uninterrupted stretch at the limit (s).
    pub longest_saturation: f64,
}

/// Classify a DC voltage trace.
///
/// The run has collapsed when `v_dc` goes below `v_threshold` and is still
/// below it at the last sample. A sample counts as saturated when
/// `|i_dc| ≥ i_dc_max (1 − ε)`; it contributes the interval up to the next
/// sample.
pub fn detect_collapse(
    time: &[f64],
    v_dc: &[f64],
    i_dc: &[f64],
    v_threshold: f64,
    i_dc_max: f64,
) -> CollapseReport {
    assert_eq!(time.len(), v_dc.len());
    assert_eq!(time.len(), i_dc.len());
    let min_vdc = v_dc.iter().copied().fold(f64::INFINITY, f64::min);

    // Crossing times are interpolated between the straddling samples.
    let mut t_below: Option<f64> = None;
    for k in 0..time.len() {
        if v_dc[k] < v_threshold {
            if t_below.is_none() {
                let t = if k > 0 && v_dc[k - 1] > v_dc[k] {
                    let f = (v_dc[k - 1] - v_threshold) / (v_dc[k - 1] - v_dc[k]);
                    time[k - 1] + f * (time[k] - time[k - 1])
                } else {
                    time[k]
                };
                t_below = Some(t);
            }
        } else {
            t_below = None;
        }
    }

    let limit = i_dc_max * (1.0 - SATURATION_TOLERANCE);
    let (mut total, mut run, mut longest) = (0.0, 0.0, 0.0f64);
    for k in 0..time.len().saturating_sub(1) {
        if i_dc[k].abs() >= limit {
            let span = time[k + 1] - time[k];
            total += span;
            run += span;
            longest = longest.max(run);
        } else {
            run = 0.0;
        }
    }

    CollapseReport {
        collapsed: t_below.is_some(),
        t_collapse: t_below,
        min_vdc: if time.is_empty() { f64::NAN } else { min_vdc },
        saturation_duration: total,
        longest_saturation: longest,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettlingMetrics {
    /// Time after `t_from` of the last exit from the band; `None` if the
    /// channel is outside the band at the final sample.
    pub settling_time: Option<f64>,
    /// Largest deviation from the target after `t_from`.
    pub overshoot: f64,
    pub final_value: f64,
}

/// Settling of `x` into `target ± band·|target|` from `t_from` on.
///
/// `band` is a fraction (0.02 for a 2 % band). The exit time is refined by
/// linear interpolation between the last sample outside and the first one
/// back inside.
pub fn settling_metrics(
    time: &[f64],
    x: &[f64],
    target: f64,
    band: f64,
    t_from: f64,
) -> SettlingMetrics {
    assert!(band > 0.0);
    assert_eq!(time.len(), x.len());
    let width = band * target.abs();
    let start = time.partition_point(|&t| t < t_from);
    let tail = &x[start..];
    let overshoot = tail
        .iter()
        .map(|v| (v - target).abs())
        .fold(0.0, f64::max);
    let final_value = x.last().copied().unwrap_or(f64::NAN);

    let outside = |v: f64| !((v - target).abs() <= width);
    let settling_time = match tail.iter().rposition(|&v| outside(v)) {
        None => Some(0.0),
        Some(k) if k + 1 == tail.len() => None,
        Some(k) => {
            let (i, j) = (start + k, start + k + 1);
            let (d0, d1) = ((x[i] - target).abs(), (x[j] - target).abs());
            let frac = if d0 > d1 { (d0 - width) / (d0 - d1) } else { 0.0 };
            let t_exit = time[i] + frac.clamp(0.0, 1.0) * (time[j] - time[i]);
            Some((t_exit - t_from).max(0.0))
        }
    };

    SettlingMetrics {
        settling_time,
        overshoot,
        final_value,
    }
}
