//! Static SVG line plots of logged channels.
//!
//! A channel selector is either a full column name (`gfc1.v_dc`) or a bare
//! channel (`v_dc`), which gathers that channel of every device into one
//! panel. Output depends only on the input data, so identical logs give
//! byte-identical files.

use std::fmt::Write as _;

use crate::engine::WaveformLog;
use crate::error::ConfigError;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// One rendered panel; `name` is a file-name stem.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub name: String,
    pub svg: String,
}

fn suffix(name: &str) -> &str {
    name.rsplit_once('.').map_or(name, |(_, s)| s)
}

fn unit(channel: &str) -> &'static str {
    match channel {
        "t_s" => "s",
        "theta" | "angle" => "rad",
        "m" => "-",
        _ => "p.u.",
    }
}

/// Group the log's columns into panels for the given selectors. An empty
/// selector list plots every channel, one panel per bare channel name.
pub fn select(log: &WaveformLog, selectors: &[String]) -> Result<Vec<(String, Vec<usize>)>, ConfigError> {
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    if selectors.is_empty() {
        for (k, n) in log.names.iter().enumerate() {
            let s = suffix(n);
            match groups.iter_mut().find(|(g, _)| g == s) {
                Some((_, cols)) => cols.push(k),
                None => groups.push((s.to_string(), vec![k])),
            }
        }
        return Ok(groups);
    }
    for sel in selectors {
        let cols: Vec<usize> = match log.names.iter().position(|n| n == sel) {
            Some(k) => vec![k],
            None => (0..log.names.len())
                .filter(|&k| suffix(&log.names[k]) == sel)
                .collect(),
        };
        if cols.is_empty() {
            return Err(ConfigError::invalid(
                "channels",
                format!("unknown channel {sel:?}; available: {}", log.names.join(", ")),
            ));
        }
        groups.push((sel.clone(), cols));
    }
    Ok(groups)
}

pub fn plot_panels(log: &WaveformLog, selectors: &[String]) -> Result<Vec<Panel>, ConfigError> {
    Ok(select(log, selectors)?
        .into_iter()
        .map(|(name, cols)| {
            let svg = render(log, &name, &cols);
            Panel { name, svg }
        })
        .collect())
}

/// Tick step of 1, 2 or 5 times a power of ten giving about `n` intervals.
fn tick_step(span: f64, n: f64) -> f64 {
    let raw = span / n;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-12 * lo.abs().max(1.0) {
        let pad = 0.05 * lo.abs().max(1.0);
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn ticks(lo: f64, hi: f64) -> (f64, f64, Vec<f64>) {
    let step = tick_step(hi - lo, 6.0);
    let a = (lo / step).floor() * step;
    let b = (hi / step).ceil() * step;
    let n = ((b - a) / step).round() as usize;
    (a, b, (0..=n).map(|k| a + k as f64 * step).collect())
}

fn label(v: f64, step: f64) -> String {
    let digits = (-step.log10().floor()).max(0.0) as usize;
    let s = format!("{v:.digits$}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        format!("{:.digits$}", 0.0)
    } else {
        s
    }
}

fn render(log: &WaveformLog, name: &str, cols: &[usize]) -> String {
    let (t0, t1) = range(log.time.iter().copied());
    let (y0, y1) = range(cols.iter().flat_map(|&c| log.columns[c].iter().copied()));
    let (xa, xb, xt) = ticks(t0, t1);
    let (ya, yb, yt) = ticks(y0, y1);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |t: f64| LEFT + (t - xa) / (xb - xa) * pw;
    let sy = |v: f64| TOP + (yb - v) / (yb - ya) * ph;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="14">{name}</text>"#,
        LEFT + pw / 2.0
    )
    .unwrap();

    let xstep = xt.get(1).map_or(1.0, |v| v - xt[0]);
    for &t in &xt {
        let x = sx(t);
        writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#e0e0e0"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 16.0,
            label(t, xstep)
        )
        .unwrap();
    }
    let ystep = yt.get(1).map_or(1.0, |v| v - yt[0]);
    for &v in &yt {
        let y = sy(v);
        writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0,
            label(v, ystep)
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">t ({})</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0,
        unit("t_s")
    )
    .unwrap();
    writeln!(
        s,
        r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">{} ({})</text>"#,
        TOP + ph / 2.0,
        suffix(name),
        unit(suffix(name))
    )
    .unwrap();

    for (k, &c) in cols.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        // Non-finite samples break the line.
        let mut segments: Vec<String> = Vec::new();
        let mut cur = String::new();
        for (t, v) in log.time.iter().zip(&log.columns[c]) {
            if v.is_finite() {
                write!(cur, "{:.2},{:.2} ", sx(*t), sy(*v)).unwrap();
            } else if !cur.is_empty() {
                segments.push(std::mem::take(&mut cur));
            }
        }
        if !cur.is_empty() {
            segments.push(cur);
        }
        for seg in segments {
            writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                seg.trim_end()
            )
            .unwrap();
        }
        let ly = TOP + 14.0 + 18.0 * k as f64;
        let lx = LEFT + pw + 12.0;
        writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{ly:.1}">{}</text>"#,
            ly - 4.0,
            lx + 20.0,
            ly - 4.0,
            lx + 26.0,
            log.names[c]
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}
