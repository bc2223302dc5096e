//! End-to-end acceptance checks on the shipped IEEE 9-bus scenarios.
//!
//! Runs without the libtest harness so every check prints one line whether
//! it passes or not. The process exits non-zero if any check fails.

use std::collections::BTreeMap;
use std::ops::{Add, Div, Mul, Sub};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use dashu_float::FBig;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use gfcsim_core::controllers::inner::ac_current_limit;
use gfcsim_core::controllers::outer::{
    conventional, droop_update, dvoc_update, vsg_update, DvocPhaseLaw, OuterControllerConfig,
    OuterControllerState, OuterKind, Setpoints,
};
use gfcsim_core::converter::saturate_dc_current;
use gfcsim_core::engine::rk4::Scalar;
use gfcsim_core::engine::{run, settling_metrics, Rk4, RunResult, RunStatus, Scenario};
use gfcsim_core::output::csv_string;
use gfcsim_core::scenario::{parse_scenario, resolve_json, Override, ResolvedScenario};
use gfcsim_core::SimError;

const GFCS: [&str; 2] = ["gfc1", "gfc2"];

struct Check {
    pass: bool,
    detail: String,
}

fn load(name: &str, sets: &[&str]) -> ResolvedScenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"));
    let ov: Vec<Override> = sets.iter().map(|s| Override::parse(s).unwrap()).collect();
    parse_scenario(&path, &ov).unwrap()
}

fn simulate(r: &ResolvedScenario) -> RunResult {
    run(&r.scenario).unwrap()
}

fn ch<'a>(r: &'a RunResult, name: &str) -> &'a [f64] {
    r.log.channel(name).unwrap()
}

fn t_step(s: &Scenario) -> f64 {
    s.events[0].t_event
}

/// Current limit of a converter in the logged (DC per-unit) scale.
fn i_limit(s: &Scenario, gfc: &str) -> f64 {
    let g = s.gfcs.iter().find(|g| g.name == gfc).unwrap();
    g.converter.i_dc_max * g.converter.v_dc_ref
}

struct Saturation {
    /// Last sample at the limit, if any.
    last: Option<f64>,
    /// Longest uninterrupted stretch at the limit after `from` (s).
    longest: f64,
    /// Largest rise of `v_dc` between consecutive samples of that stretch.
    rise: f64,
}

fn saturation(r: &RunResult, gfc: &str, limit: f64, from: f64) -> Saturation {
    let t = &r.log.time;
    let i = ch(r, &format!("{gfc}.i_dc"));
    let v = ch(r, &format!("{gfc}.v_dc"));
    let at_limit = limit * (1.0 - 1e-6);
    let mut out = Saturation {
        last: None,
        longest: 0.0,
        rise: 0.0,
    };
    let mut start: Option<usize> = None;
    for k in 0..t.len() {
        if t[k] > from && i[k].abs() >= at_limit {
            out.last = Some(t[k]);
            let s = *start.get_or_insert(k);
            if t[k] - t[s] >= out.longest {
                out.longest = t[k] - t[s];
                out.rise = (s + 1..=k).map(|j| v[j] - v[j - 1]).fold(0.0, f64::max);
            }
        } else {
            start = None;
        }
    }
    out
}

fn graceful(r: &RunResult) -> bool {
    !matches!(r.status, RunStatus::Fault { .. })
        && !r.log.is_empty()
        && r.log.columns.iter().flatten().all(|v| v.is_finite())
}

fn small_disturbance(r: &RunResult, s: &Scenario, wall: f64) -> Check {
    let ts = t_step(s);
    let mut pass = !r.collapsed() && r.status == RunStatus::Completed && wall <= 60.0;
    let mut detail = format!("wall {wall:.1} s;");
    for g in GFCS {
        let sat = saturation(r, g, i_limit(s, g), ts);
        let v = ch(r, &format!("{g}.v_dc"));
        let dev = r
            .log
            .time
            .iter()
            .zip(v)
            .filter(|(t, _)| **t >= 4.0)
            .map(|(_, v)| (v - 1.0).abs())
            .fold(0.0, f64::max);
        let left = sat.last.map_or(0.0, |t| t - ts);
        pass &= left <= 1.0 && dev <= 0.02;
        detail += &format!(" {g}: saturated until step+{left:.2} s, |v_dc-1| after 4 s {dev:.4};");
    }
    Check { pass, detail }
}

fn collapse(r: &RunResult, s: &Scenario) -> Check {
    let ts = t_step(s);
    let mut any = false;
    let mut detail = format!("status {:?};", r.status);
    for (g, rep) in &r.collapse {
        let sat = saturation(r, g, i_limit(s, g), ts);
        let crossed = rep.t_collapse.is_some_and(|t| t < ts + s.simulation.t_end);
        any |= rep.collapsed && crossed && sat.longest >= 2.0 && sat.rise <= 0.005;
        detail += &format!(
            " {g}: pinned {:.2} s, max rise {:.5}, crossing {:?};",
            sat.longest, sat.rise, rep.t_collapse
        );
    }
    Check {
        pass: any && r.collapsed() && graceful(r),
        detail,
    }
}

fn ac_limited(r: &RunResult) -> Check {
    Check {
        pass: r.collapsed() && graceful(r),
        detail: format!("collapsed {}, status {:?}", r.collapsed(), r.status),
    }
}

/// Largest relative spread of the converter frequencies after `from`.
fn frequency_spread(r: &RunResult, from: f64) -> f64 {
    let w: Vec<&[f64]> = GFCS.iter().map(|g| ch(r, &format!("{g}.omega"))).collect();
    (0..r.log.len())
        .filter(|&k| r.log.time[k] >= from)
        .map(|k| {
            let mean = w.iter().map(|c| c[k]).sum::<f64>() / w.len() as f64;
            w.iter().map(|c| (c[k] - mean).abs() / mean).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

fn feedback(runs: &[(&str, &RunResult, &Scenario)]) -> Check {
    let mut pass = true;
    let mut detail = String::new();
    for (kind, r, s) in runs {
        let ts = t_step(s);
        let mut ok = !r.collapsed() && r.status == RunStatus::Completed;
        let mut worst = Some(0.0f64);
        for g in GFCS {
            let st = settling_metrics(&r.log.time, ch(r, &format!("{g}.v_dc")), 1.0, 0.05, ts)
                .settling_time;
            worst = worst.zip(st).map(|(a, b)| a.max(b));
        }
        ok &= worst.is_some_and(|t| t <= 2.5);
        let spread = frequency_spread(r, ts + 2.5);
        ok &= spread <= 0.005;
        pass &= ok;
        detail += &format!(" {kind}: settling {worst:.3?} s, frequency spread {spread:.2e};");
    }
    Check { pass, detail }
}

fn synchronization(r: &RunResult, s: &Scenario) -> Check {
    let from = t_step(s) + 2.5;
    let names = ["gfc1.omega", "gfc2.omega", "sm1.omega"];
    let w: Vec<&[f64]> = names.iter().map(|n| ch(r, n)).collect();
    let (gen, load, loss) = (ch(r, "system.p_gen"), ch(r, "system.p_load"), ch(r, "system.p_loss"));
    let (mut dw, mut dp) = (0.0f64, 0.0f64);
    for k in 0..r.log.len() {
        if r.log.time[k] < from {
            continue;
        }
        for a in &w {
            for b in &w {
                dw = dw.max((a[k] - b[k]).abs());
            }
        }
        dp = dp.max((gen[k] - load[k] - loss[k]).abs());
    }
    Check {
        pass: dw < 1e-3 && dp < 1e-3 && !r.collapsed(),
        detail: format!("max frequency difference {dw:.2e} p.u., power mismatch {dp:.2e} p.u."),
    }
}

fn random_setpoints(rng: &mut StdRng) -> Setpoints {
    Setpoints {
        p_ref: rng.random_range(-1.0..1.0),
        q_ref: rng.random_range(-1.0..1.0),
        v_ref: rng.random_range(0.8..1.2),
        omega_ref: rng.random_range(300.0..400.0),
        v_dc_ref: rng.random_range(1.0..4.0),
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn reduction_identities() -> Check {
    let mut rng = StdRng::seed_from_u64(6);
    let n = 10_000;
    let mut failures = 0;
    for _ in 0..n {
        let sp = random_setpoints(&mut rng);
        let p = rng.random_range(-2.0..2.0);
        let q = rng.random_range(-2.0..2.0);
        let v_dc = rng.random_range(0.1..5.0);
        let v_dc_dot = rng.random_range(-100.0..100.0);
        let state = OuterControllerState {
            theta: rng.random_range(-10.0..10.0),
            omega: sp.omega_ref * rng.random_range(0.9..1.1),
            v_mag: rng.random_range(0.5..1.5),
        };
        let cfg = |kind| OuterControllerConfig {
            kind,
            alpha: 1.0,
            setpoints: sp,
            dvoc_phase_law: DvocPhaseLaw::Consistent,
        };

        let d_omega = rng.random_range(0.01..10.0);
        let (theta_dot, w) = droop_update(&state, p, v_dc, &cfg(OuterKind::Droop { d_omega }));
        let expect = conventional::droop_frequency(&sp, d_omega, p);
        let ok_droop = close(theta_dot, expect) && close(w, expect);

        let (j, d_p) = (rng.random_range(1e-6..1.0), rng.random_range(1e-4..10.0));
        let (theta_dot, w_dot) = vsg_update(&state, p, v_dc, v_dc_dot, &cfg(OuterKind::Vsg { j, d_p }));
        let ok_vsg = theta_dot == state.omega
            && close(w_dot, conventional::vsg_acceleration(&sp, j, d_p, p, state.omega));

        let (eta, mu) = (rng.random_range(1e-3..1.0), rng.random_range(1.0..1e5));
        let kind = OuterKind::Dvoc { eta, mu, kappa: std::f64::consts::FRAC_PI_2 };
        let (a, b) = dvoc_update(&state, p, q, v_dc, &cfg(kind)).unwrap();
        let (ea, eb) = conventional::dvoc_rates(&sp, eta, mu, p, q, state.v_mag);
        let ok_dvoc = close(a, ea) && close(b, eb);

        if !(ok_droop && ok_vsg && ok_dvoc) {
            failures += 1;
        }
    }
    Check {
        pass: failures == 0,
        detail: format!("{n} draws per law, {failures} mismatches"),
    }
}

/// Independent clamp oracle for the DC current limit.
fn clamp_oracle(i: f64, max: f64) -> f64 {
    if i > max {
        max
    } else if i < -max {
        -max
    } else {
        i
    }
}

/// Independent scaling oracle for the AC current limit.
fn scale_oracle(i_ref: [f64; 2], i_meas: [f64; 2], max: f64) -> [f64; 2] {
    let meas = i_meas[0].hypot(i_meas[1]);
    if !(meas > max) {
        return i_ref;
    }
    let r = i_ref[0].hypot(i_ref[1]);
    if r == 0.0 {
        return [0.0, 0.0];
    }
    [i_ref[0] * (max / r), i_ref[1] * (max / r)]
}

fn limiter_oracles() -> Check {
    let mut rng = StdRng::seed_from_u64(7);
    let n = 100_000;
    let mut failures = 0;
    for k in 0..n {
        let max = rng.random_range(0.1..2.0);
        // Every fourth draw sits exactly on a boundary.
        let i = match k % 4 {
            0 => [max, -max, 0.0, -0.0][(k / 4) % 4],
            _ => rng.random_range(-3.0..3.0),
        };
        if saturate_dc_current(i, max).to_bits() != clamp_oracle(i, max).to_bits() {
            failures += 1;
        }

        let i_ref = match k % 5 {
            0 => [0.0, 0.0],
            _ => [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
        };
        let i_meas = match k % 3 {
            0 => {
                let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                [max * a.cos(), max * a.sin()]
            }
            1 => [max, 0.0],
            _ => [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
        };
        let got = ac_current_limit(i_ref, i_meas, max);
        let want = scale_oracle(i_ref, i_meas, max);
        if got[0].to_bits() != want[0].to_bits() || got[1].to_bits() != want[1].to_bits() {
            failures += 1;
        }
    }
    Check {
        pass: failures == 0,
        detail: format!("{n} draws per limiter, {failures} mismatches"),
    }
}

fn switch_power_balance(runs: &BTreeMap<String, RunResult>) -> Check {
    let mut worst = 0.0f64;
    let mut samples = 0;
    for r in runs.values() {
        for g in GFCS {
            let dc = ch(r, &format!("{g}.p_switch_dc"));
            let ac = ch(r, &format!("{g}.p_switch_ac"));
            for (a, b) in dc.iter().zip(ac) {
                worst = worst.max((a - b).abs());
                samples += 1;
            }
        }
    }
    Check {
        pass: worst < 1e-12,
        detail: format!("{} runs, {samples} samples, max |v_dc i_x - v_s . i_s| {worst:.1e}", runs.len()),
    }
}

/// 256-bit float so that rounding stays far below the truncation error.
#[derive(Clone)]
struct Big(FBig);

impl Add for Big {
    type Output = Big;
    fn add(self, o: Big) -> Big {
        Big(self.0 + o.0)
    }
}
impl Sub for Big {
    type Output = Big;
    fn sub(self, o: Big) -> Big {
        Big(self.0 - o.0)
    }
}
impl Mul for Big {
    type Output = Big;
    fn mul(self, o: Big) -> Big {
        Big(self.0 * o.0)
    }
}
impl Div for Big {
    type Output = Big;
    fn div(self, o: Big) -> Big {
        Big(self.0 / o.0)
    }
}
impl Scalar for Big {
    fn from_f64(v: f64) -> Self {
        Big(FBig::try_from(v).unwrap().with_precision(256).value())
    }
    fn to_f64(&self) -> f64 {
        self.0.to_f64().value()
    }
}

fn decay_error(dt: f64) -> f64 {
    let n = (1.0 / dt).round() as usize;
    let h = Big::from_f64(1.0) / Big::from_f64(n as f64);
    let mut x = [Big::from_f64(1.0)];
    let mut rk = Rk4::new(1);
    let f = |_: Big, x: &[Big], dx: &mut [Big]| -> Result<(), SimError> {
        dx[0] = Big::from_f64(0.0) - x[0].clone();
        Ok(())
    };
    for k in 0..n {
        rk.step(f, &mut x, h.clone() * Big::from_f64(k as f64), h.clone())
            .unwrap();
    }
    let mut term = Big::from_f64(1.0);
    let mut inv_e = term.clone();
    for k in 1..70 {
        term = Big::from_f64(0.0) - term / Big::from_f64(k as f64);
        inv_e = inv_e + term.clone();
    }
    (x[0].clone() - inv_e).to_f64().abs()
}

fn integrator_order(runs: &mut BTreeMap<String, RunResult>) -> Check {
    let e: Vec<f64> = [1e-3, 5e-4, 2.5e-4].iter().map(|&dt| decay_error(dt)).collect();
    let ratios: Vec<f64> = e.windows(2).map(|w| w[0] / w[1]).collect();
    let order_ok = ratios.iter().all(|r| (r - 16.0).abs() <= 3.2);

    let coarse = simulate(&load("ieee9_vsg_feedback", &["simulation.t_end=3"]));
    let fine = simulate(&load(
        "ieee9_vsg_feedback",
        &["simulation.t_end=3", "simulation.dt=1e-5", "simulation.log_decimation=100"],
    ));
    let mut diff = 0.0f64;
    for (name, col) in coarse.log.names.iter().zip(&coarse.log.columns) {
        for (a, b) in col.iter().zip(fine.log.channel(name).unwrap()) {
            diff = diff.max((a - b).abs());
        }
    }
    let same_grid = coarse.log.time == fine.log.time;
    runs.insert("dt 20 us".into(), coarse);
    runs.insert("dt 10 us".into(), fine);
    Check {
        pass: order_ok && same_grid && diff < 1e-4,
        detail: format!("error ratios {ratios:.2?}, dt vs dt/2 max difference {diff:.2e} p.u."),
    }
}

fn reproducibility(runs: &BTreeMap<String, RunResult>, resolved: &BTreeMap<String, ResolvedScenario>) -> Check {
    let mut identical = 0;
    for (name, r) in resolved {
        let again = resolve_json(&r.to_json(), &[]).unwrap();
        let rerun = simulate(&again);
        if csv_string(&rerun.log) == csv_string(&runs[name].log) && again.to_json() == r.to_json() {
            identical += 1;
        }
    }
    Check {
        pass: identical == resolved.len(),
        detail: format!("{identical}/{} scenarios byte-identical from resolved.json", resolved.len()),
    }
}

fn main() -> ExitCode {
    let names = [
        "ieee9_vsg_small_step",
        "ieee9_vsg_collapse",
        "ieee9_vsg_ac_limit",
        "ieee9_droop_feedback",
        "ieee9_vsg_feedback",
        "ieee9_dvoc_feedback",
    ];
    let mut resolved = BTreeMap::new();
    let mut runs = BTreeMap::new();
    let mut wall = BTreeMap::new();
    for n in names {
        let r = load(n, &[]);
        let start = Instant::now();
        let result = simulate(&r);
        wall.insert(n, start.elapsed().as_secs_f64());
        runs.insert(n.to_string(), result);
        resolved.insert(n.to_string(), r);
    }
    let sc = |n: &str| &resolved[n].scenario;

    let mut checks: Vec<(&str, Check)> = vec![
        (
            "small-disturbance stability",
            small_disturbance(&runs["ieee9_vsg_small_step"], sc("ieee9_vsg_small_step"), wall["ieee9_vsg_small_step"]),
        ),
        (
            "collapse reproduction",
            collapse(&runs["ieee9_vsg_collapse"], sc("ieee9_vsg_collapse")),
        ),
        ("AC-limit insufficiency", ac_limited(&runs["ieee9_vsg_ac_limit"])),
        (
            "feedback fix, all controllers",
            feedback(&[
                ("droop", &runs["ieee9_droop_feedback"], sc("ieee9_droop_feedback")),
                ("vsg", &runs["ieee9_vsg_feedback"], sc("ieee9_vsg_feedback")),
                ("dvoc", &runs["ieee9_dvoc_feedback"], sc("ieee9_dvoc_feedback")),
            ]),
        ),
        (
            "system-wide synchronization",
            synchronization(&runs["ieee9_vsg_feedback"], sc("ieee9_vsg_feedback")),
        ),
        ("controller reduction identities", reduction_identities()),
        ("limiter oracles", limiter_oracles()),
    ];
    let order = integrator_order(&mut runs);
    checks.push(("switch power balance", switch_power_balance(&runs)));
    checks.push(("integrator order", order));
    checks.push(("determinism and provenance", reproducibility(&runs, &resolved)));

    let mut failed = 0;
    for (k, (name, c)) in checks.iter().enumerate() {
        println!(
            "criterion {:>2} {:<32} {}  {}",
            k + 1,
            name,
            if c.pass { "PASS" } else { "FAIL" },
            c.detail.trim()
        );
        failed += usize::from(!c.pass);
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
