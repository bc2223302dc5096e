//! Flat ODE assembly, fixed-step integration, event handling and logging.
//!
//! # State layout
//!
//! The state vector is laid out in this order, each group in name order:
//!
//! | block | entries |
//! |---|---|
//! | per GFC | `v_dc, i_s_a, i_s_b, i_tau` · `theta, [omega \| v_mag], p_f, q_f` · `xi_vd, xi_vq, xi_id, xi_iq` |
//! | per branch (lines, then transformers) | `i_a, i_b` |
//! | per bus | `v_a, v_b` |
//! | per machine | `angle, omega_m, i_a, i_b` |
//!
//! Droop controllers have no second controller state, so a droop GFC has
//! 11 entries and VSG/dVOC GFCs have 12. The converter's filter capacitor
//! voltage is the voltage of the bus it is attached to; the filter
//! capacitance is added to that bus.

mod init;
pub mod metrics;
pub mod rk4;

use serde::{Deserialize, Serialize};

use crate::controllers::inner::{InnerLoopInputs, InnerLoops};
use crate::controllers::outer::{
    droop_update, dvoc_update, reference_voltage, vsg_update, OuterControllerConfig,
    OuterControllerState, OuterKind,
};
use crate::controllers::power::{instantaneous_power, PowerFilterState};
use crate::controllers::InnerLoopConfig;
use crate::converter::{
    converter_derivatives, dc_demand, dc_demand_rate, raw_dc_demand, saturate_dc_current,
    switch_current, switch_voltage, ConverterParams, ConverterState,
};
use crate::error::{ConfigError, SimError};
use crate::network::{
    apply_event, bus_outflow, network_derivatives_into, sm_derivatives, Bases, LoadStepEvent,
    NetworkConfig, NetworkGraph, SmState,
};
use crate::{dot, norm, Vec2};

pub use metrics::{detect_collapse, settling_metrics, CollapseReport, SettlingMetrics};
pub use rk4::{rk4_step, Rk4};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Horizon after the pre-roll (s).
    pub t_end: f64,
    /// Integration step (s).
    pub dt: f64,
    /// Log every n-th step.
    pub log_decimation: usize,
    /// Settling time simulated before t = 0 and not logged (s).
    pub preroll: f64,
    /// Normalised DC voltage below which a converter counts as collapsed.
    pub collapse_threshold: f64,
    /// Normalised DC voltage at which a converter trips and the run stops;
    /// zero disables the trip.
    pub v_dc_trip: f64,
}

/// One grid-forming converter with its controls, in model units.
#[derive(Debug, Clone, PartialEq)]
pub struct GfcConfig {
    pub name: String,
    pub bus: String,
    pub converter: ConverterParams,
    pub outer: OuterControllerConfig,
    pub inner: InnerLoopConfig,
    /// Power measurement filter cutoff (rad/s).
    pub omega_f: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub bases: Bases,
    pub network: NetworkConfig,
    /// Sorted by name.
    pub gfcs: Vec<GfcConfig>,
    /// Sorted by time; ties keep file order.
    pub events: Vec<LoadStepEvent>,
    pub simulation: SimulationConfig,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.simulation;
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::invalid(key, format!("must be positive, got {v}")))
            }
        };
        positive("simulation.dt", s.dt)?;
        if !(s.t_end >= 0.0 && s.t_end.is_finite()) {
            return Err(ConfigError::invalid("simulation.t_end", "must be non-negative"));
        }
        if !(s.preroll >= 0.0 && s.preroll.is_finite()) {
            return Err(ConfigError::invalid("simulation.preroll", "must be non-negative"));
        }
        if s.log_decimation == 0 {
            return Err(ConfigError::invalid("simulation.log_decimation", "must be at least 1"));
        }
        if !(s.collapse_threshold > 0.0 && s.collapse_threshold < 1.0) {
            return Err(ConfigError::invalid(
                "simulation.collapse_threshold",
                "must lie in (0, 1)",
            ));
        }
        if !(0.0..1.0).contains(&s.v_dc_trip) {
            return Err(ConfigError::invalid("simulation.v_dc_trip", "must lie in [0, 1)"));
        }
        for (k, ev) in self.events.iter().enumerate() {
            if !(ev.t_event >= 0.0 && ev.t_event.is_finite()) {
                return Err(ConfigError::invalid(
                    format!("events.{k}.t_event"),
                    "must be non-negative",
                ));
            }
            for (name, v) in [("p_before", ev.p_before), ("p_after", ev.p_after)] {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(ConfigError::invalid(
                        format!("events.{k}.{name}"),
                        "must be non-negative",
                    ));
                }
            }
        }
        if self.events.windows(2).any(|w| w[0].t_event > w[1].t_event) {
            return Err(ConfigError::invalid("events", "must be sorted by t_event"));
        }
        for g in &self.gfcs {
            let key = format!("gfc.{}", g.name);
            g.converter.validate(&format!("{key}.converter"))?;
            g.outer.validate(&format!("{key}.controller"))?;
            g.inner.validate(&format!("{key}.inner"))?;
            positive(&format!("{key}.omega_f"), g.omega_f)?;
            if g.outer.setpoints.v_dc_ref != g.converter.v_dc_ref {
                return Err(ConfigError::invalid(
                    format!("{key}.controller"),
                    "DC voltage setpoint differs from the converter's",
                ));
            }
        }
        Ok(())
    }
}

/// Index map of one converter's states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GfcSlots {
    pub v_dc: usize,
    pub i_s: usize,
    pub i_tau: usize,
    pub theta: usize,
    /// ω for VSG, ‖v‖ for dVOC, absent for droop.
    pub aux: Option<usize>,
    pub p_f: usize,
    pub q_f: usize,
    pub xi: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub gfcs: Vec<GfcSlots>,
    pub branches: usize,
    pub buses: usize,
    pub machines: usize,
    pub dim: usize,
    pub names: Vec<String>,
}

impl Layout {
    /// Closed-form state count: 11 per droop GFC, 12 per VSG or dVOC GFC,
    /// 2 per branch, 2 per bus and 4 per machine.
    pub fn expected_dim(gfcs: &[GfcConfig], branches: usize, buses: usize, machines: usize) -> usize {
        let gfc: usize = gfcs
            .iter()
            .map(|g| match g.outer.kind {
                OuterKind::Droop { .. } => 11,
                _ => 12,
            })
            .sum();
        gfc + 2 * branches + 2 * buses + 4 * machines
    }
}

#[derive(Debug, Clone)]
struct GfcDevice {
    name: String,
    bus: usize,
    params: ConverterParams,
    outer: OuterControllerConfig,
    loops: InnerLoops,
    omega_f: f64,
    slots: GfcSlots,
}

/// Instantaneous converter quantities at one state.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GfcProbe {
    pub v_dc: f64,
    pub i_dc: f64,
    pub i_tau: f64,
    pub i_x: f64,
    pub v_s: Vec2,
    pub i_s: Vec2,
    pub m: Vec2,
    pub v: Vec2,
    pub i_grid: Vec2,
    /// Filtered active and reactive power.
    pub p: f64,
    pub q: f64,
    /// Instantaneous electrical frequency of the reference (rad/s).
    pub omega: f64,
    pub limiting: bool,
}

#[derive(Debug, Clone)]
struct Workspace {
    v: Vec<Vec2>,
    i: Vec<Vec2>,
    inj: Vec<Vec2>,
    dv: Vec<Vec2>,
    di: Vec<Vec2>,
    probes: Vec<GfcProbe>,
}

/// The assembled system: network graph, devices and state layout.
#[derive(Debug, Clone)]
pub struct FlatSystem {
    pub graph: NetworkGraph,
    pub layout: Layout,
    /// Synchronous reference for the machines (rad/s).
    pub omega_ref: f64,
    gfcs: Vec<GfcDevice>,
    extra_c: Vec<f64>,
    ws: Workspace,
}

/// Build the flat system for a scenario. Event loads are created at their
/// `p_before` levels.
pub fn assemble(scenario: &Scenario) -> Result<FlatSystem, ConfigError> {
    scenario.validate()?;
    let mut graph = NetworkGraph::from_config(&scenario.network, &scenario.bases)?;
    for ev in &scenario.events {
        graph.ensure_event_load(ev)?;
    }

    let mut names = Vec::new();
    let mut gfcs = Vec::new();
    let mut extra_c = vec![0.0; graph.buses.len()];
    let mut taken = vec![false; graph.buses.len()];
    for m in &graph.machines {
        taken[m.bus] = true;
    }
    for g in &scenario.gfcs {
        let key = format!("gfc.{}.bus", g.name);
        let bus = graph
            .bus_index(&g.bus)
            .ok_or_else(|| ConfigError::DanglingReference {
                key: key.clone(),
                name: g.bus.clone(),
            })?;
        if taken[bus] {
            return Err(ConfigError::invalid(key, "bus already has a source attached"));
        }
        taken[bus] = true;
        extra_c[bus] += g.converter.c_f;

        let base = names.len();
        for s in ["v_dc", "i_s_a", "i_s_b", "i_tau", "theta"] {
            names.push(format!("{}.{s}", g.name));
        }
        let aux = match g.outer.kind {
            OuterKind::Droop { .. } => None,
            OuterKind::Vsg { .. } => {
                names.push(format!("{}.omega", g.name));
                Some(base + 5)
            }
            OuterKind::Dvoc { .. } => {
                names.push(format!("{}.v_mag", g.name));
                Some(base + 5)
            }
        };
        let p_f = names.len();
        for s in ["p_f", "q_f", "xi_vd", "xi_vq", "xi_id", "xi_iq"] {
            names.push(format!("{}.{s}", g.name));
        }
        gfcs.push(GfcDevice {
            name: g.name.clone(),
            bus,
            params: g.converter,
            outer: g.outer,
            loops: InnerLoops::new(g.inner),
            omega_f: g.omega_f,
            slots: GfcSlots {
                v_dc: base,
                i_s: base + 1,
                i_tau: base + 3,
                theta: base + 4,
                aux,
                p_f,
                q_f: p_f + 1,
                xi: p_f + 2,
            },
        });
    }
    for (b, bus) in graph.buses.iter().enumerate() {
        if bus.capacitance + extra_c[b] <= 0.0 {
            return Err(ConfigError::invalid(
                format!("network.buses.{}", bus.id),
                "bus has no capacitance; set b_shunt or min_bus_b",
            ));
        }
    }

    let branches = names.len();
    for br in &graph.branches {
        names.push(format!("{}.i_a", br.name));
        names.push(format!("{}.i_b", br.name));
    }
    let buses = names.len();
    for bus in &graph.buses {
        names.push(format!("{}.v_a", bus.id));
        names.push(format!("{}.v_b", bus.id));
    }
    let machines = names.len();
    for m in &graph.machines {
        for s in ["angle", "omega_m", "i_a", "i_b"] {
            names.push(format!("{}.{s}", m.name));
        }
    }
    let dim = names.len();

    let n_bus = graph.buses.len();
    let n_br = graph.branches.len();
    let ws = Workspace {
        v: vec![[0.0; 2]; n_bus],
        i: vec![[0.0; 2]; n_br],
        inj: vec![[0.0; 2]; n_bus],
        dv: vec![[0.0; 2]; n_bus],
        di: vec![[0.0; 2]; n_br],
        probes: vec![GfcProbe::default(); gfcs.len()],
    };
    Ok(FlatSystem {
        omega_ref: scenario.bases.omega_base(),
        graph,
        layout: Layout {
            gfcs: gfcs.iter().map(|g| g.slots).collect(),
            branches,
            buses,
            machines,
            dim,
            names,
        },
        gfcs,
        extra_c,
        ws,
    })
}

#[inline]
fn vec2(x: &[f64], k: usize) -> Vec2 {
    [x[k], x[k + 1]]
}

impl FlatSystem {
    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn gfc_names(&self) -> impl Iterator<Item = &str> {
        self.gfcs.iter().map(|g| g.name.as_str())
    }

    pub fn gfc_params(&self, k: usize) -> &ConverterParams {
        &self.gfcs[k].params
    }

    /// Right-hand side of the full system.
    pub fn derivatives(&mut self, x: &[f64], dx: &mut [f64]) -> Result<(), SimError> {
        let ws = &mut self.ws;
        let lay = &self.layout;
        for (b, v) in ws.v.iter_mut().enumerate() {
            *v = vec2(x, lay.buses + 2 * b);
        }
        for (k, i) in ws.i.iter_mut().enumerate() {
            *i = vec2(x, lay.branches + 2 * k);
        }
        ws.inj.fill([0.0, 0.0]);

        for (k, sm) in self.graph.machines.iter().enumerate() {
            let o = lay.machines + 4 * k;
            let st = SmState {
                angle: x[o],
                omega_m: x[o + 1],
                i_s: vec2(x, o + 2),
            };
            let d = sm_derivatives(sm, &st, ws.v[sm.bus], self.omega_ref);
            dx[o] = st.omega_m;
            dx[o + 1] = d.omega_dot;
            dx[o + 2] = d.i_s_dot[0];
            dx[o + 3] = d.i_s_dot[1];
            ws.inj[sm.bus][0] += d.injected[0];
            ws.inj[sm.bus][1] += d.injected[1];
        }

        for (g, probe) in self.gfcs.iter().zip(ws.probes.iter_mut()) {
            let s = &g.slots;
            let v = ws.v[g.bus];
            let i_grid = bus_outflow(&self.graph, &ws.v, &ws.i, g.bus);
            let conv = ConverterState {
                v_dc: x[s.v_dc],
                i_s: vec2(x, s.i_s),
                v,
                i_tau_lag: x[s.i_tau],
            };
            let filt = PowerFilterState {
                p: x[s.p_f],
                q: x[s.q_f],
            };
            let mut ctrl = OuterControllerState {
                theta: x[s.theta],
                omega: g.outer.setpoints.omega_ref,
                v_mag: g.outer.setpoints.v_ref,
            };
            if let Some(a) = s.aux {
                match g.outer.kind {
                    OuterKind::Vsg { .. } => ctrl.omega = x[a],
                    OuterKind::Dvoc { .. } => ctrl.v_mag = x[a],
                    OuterKind::Droop { .. } => {}
                }
            }

            // Droop and dVOC set the frequency algebraically; VSG integrates it.
            let (theta_dot, aux_dot) = match g.outer.kind {
                OuterKind::Droop { .. } => (droop_update(&ctrl, filt.p, conv.v_dc, &g.outer).0, 0.0),
                OuterKind::Dvoc { .. } => dvoc_update(&ctrl, filt.p, filt.q, conv.v_dc, &g.outer)?,
                OuterKind::Vsg { .. } => (ctrl.omega, 0.0),
            };
            let xi = [x[s.xi], x[s.xi + 1], x[s.xi + 2], x[s.xi + 3]];
            let out = g.loops.evaluate(
                &xi,
                &InnerLoopInputs {
                    v_ref: reference_voltage(&ctrl, &g.outer),
                    v,
                    i_s: conv.i_s,
                    i_grid,
                    v_dc: conv.v_dc,
                    theta: ctrl.theta,
                    omega: theta_dot,
                    l_f: g.params.l_f,
                    c_f: g.params.c_f,
                },
            );

            let raw = raw_dc_demand(conv.v_dc, filt.p, &g.params);
            let i_tau = dc_demand(conv.i_tau_lag, raw, g.params.tau_dc);
            let i_dc = saturate_dc_current(i_tau, g.params.i_dc_max);
            let d = converter_derivatives(&conv, out.m, i_grid, i_dc, &g.params);

            dx[s.v_dc] = d.v_dc;
            dx[s.i_s] = d.i_s[0];
            dx[s.i_s + 1] = d.i_s[1];
            dx[s.i_tau] = dc_demand_rate(conv.i_tau_lag, raw, g.params.tau_dc);
            dx[s.theta] = theta_dot;
            if let Some(a) = s.aux {
                dx[a] = match g.outer.kind {
                    OuterKind::Vsg { .. } => {
                        vsg_update(&ctrl, filt.p, conv.v_dc, d.v_dc, &g.outer).1
                    }
                    _ => aux_dot,
                };
            }
            let (dp, dq) = filt.rates(v, i_grid, g.omega_f);
            dx[s.p_f] = dp;
            dx[s.q_f] = dq;
            dx[s.xi..s.xi + 4].copy_from_slice(&out.integrator_rates);

            ws.inj[g.bus][0] += conv.i_s[0];
            ws.inj[g.bus][1] += conv.i_s[1];

            *probe = GfcProbe {
                v_dc: conv.v_dc,
                i_dc,
                i_tau,
                i_x: switch_current(out.m, conv.i_s),
                v_s: switch_voltage(out.m, conv.v_dc),
                i_s: conv.i_s,
                m: out.m,
                v,
                i_grid,
                p: filt.p,
                q: filt.q,
                omega: theta_dot,
                limiting: out.limiting,
            };
        }

        network_derivatives_into(
            &self.graph,
            &ws.v,
            &ws.i,
            &ws.inj,
            &self.extra_c,
            &mut ws.dv,
            &mut ws.di,
        );
        for (b, d) in ws.dv.iter().enumerate() {
            dx[lay.buses + 2 * b] = d[0];
            dx[lay.buses + 2 * b + 1] = d[1];
        }
        for (k, d) in ws.di.iter().enumerate() {
            dx[lay.branches + 2 * k] = d[0];
            dx[lay.branches + 2 * k + 1] = d[1];
        }
        Ok(())
    }

    /// Evaluate the system at `x` and return the converter quantities.
    pub fn probe(&mut self, x: &[f64]) -> Result<Vec<GfcProbe>, SimError> {
        let mut dx = vec![0.0; self.dim()];
        self.derivatives(x, &mut dx)?;
        Ok(self.ws.probes.clone())
    }

    /// Equilibrium-seeking initial state from a load flow; see [`init`].
    pub fn initial_state(&mut self) -> Result<Vec<f64>, ConfigError> {
        init::initial_state(self)
    }

    /// Instantaneous power balance at `x`.
    pub fn power_audit(&mut self, x: &[f64]) -> Result<PowerAudit, SimError> {
        let probes = self.probe(x)?;
        let lay = &self.layout;
        let v: Vec<Vec2> = (0..self.graph.buses.len())
            .map(|b| vec2(x, lay.buses + 2 * b))
            .collect();
        let i: Vec<Vec2> = (0..self.graph.branches.len())
            .map(|k| vec2(x, lay.branches + 2 * k))
            .collect();
        let mut generation = 0.0;
        let mut machine_loss = 0.0;
        for (k, sm) in self.graph.machines.iter().enumerate() {
            let o = lay.machines + 4 * k;
            let i_s = vec2(x, o + 2);
            generation += dot(sm.emf(x[o]), i_s);
            machine_loss += sm.r_a * dot(i_s, i_s);
        }
        generation += probes
            .iter()
            .map(|p| instantaneous_power(p.v, p.i_grid).0)
            .sum::<f64>();
        Ok(PowerAudit {
            generation,
            load: self.graph.load_power(&v),
            losses: self.graph.series_losses(&i) + machine_loss,
        })
    }
}

/// Active power totals at one instant (p.u.).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerAudit {
    /// Machine EMF power plus converter terminal power.
    pub generation: f64,
    pub load: f64,
    /// Series resistance and stator losses.
    pub losses: f64,
}

/// Time-indexed record of logged channels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WaveformLog {
    pub time: Vec<f64>,
    pub names: Vec<String>,
    /// One column per name, same length as `time`.
    pub columns: Vec<Vec<f64>>,
}

impl WaveformLog {
    pub fn with_channels(names: Vec<String>) -> Self {
        let columns = vec![Vec::new(); names.len()];
        Self {
            time: Vec::new(),
            names,
            columns,
        }
    }

    pub fn push(&mut self, t: f64, row: &[f64]) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.time.push(t);
        for (c, v) in self.columns.iter_mut().zip(row) {
            c.push(*v);
        }
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| self.columns[k].as_slice())
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// A converter's DC voltage fell below the trip level.
    Tripped { gfc: String, t: f64 },
    Fault { message: String, t: f64 },
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub log: WaveformLog,
    pub final_state: Vec<f64>,
    pub status: RunStatus,
    /// Per converter, in name order.
    pub collapse: Vec<(String, CollapseReport)>,
}

impl RunResult {
    pub fn collapsed(&self) -> bool {
        self.collapse.iter().any(|(_, r)| r.collapsed)
    }

    pub fn terminated_early(&self) -> bool {
        self.status != RunStatus::Completed
    }
}

/// Channel names in log order.
fn channel_names(sys: &FlatSystem) -> Vec<String> {
    let mut names = Vec::new();
    for g in &sys.gfcs {
        for c in [
            "v_dc", "i_dc", "i_tau", "omega", "p", "q", "v_mag", "m", "p_switch_dc",
            "p_switch_ac",
        ] {
            names.push(format!("{}.{c}", g.name));
        }
    }
    for m in &sys.graph.machines {
        for c in ["omega", "p_elec", "p_mech"] {
            names.push(format!("{}.{c}", m.name));
        }
    }
    for b in &sys.graph.buses {
        names.push(format!("{}.v_mag", b.id));
    }
    names.push("system.p_gen".into());
    names.push("system.p_load".into());
    names.push("system.p_loss".into());
    names
}

/// Logged quantities. DC voltage and currents are normalised to the
/// converter's DC per-unit (`v_dc / v_dc*`, `i · v_dc*`); frequencies are
/// per-unit of the base frequency.
fn sample(sys: &mut FlatSystem, x: &[f64], row: &mut Vec<f64>) -> Result<(), SimError> {
    row.clear();
    let probes = sys.probe(x)?;
    let wb = sys.omega_ref;
    for (g, p) in sys.gfcs.iter().zip(&probes) {
        let vb = g.params.v_dc_ref;
        row.extend_from_slice(&[
            p.v_dc / vb,
            p.i_dc * vb,
            p.i_tau * vb,
            p.omega / wb,
            p.p,
            p.q,
            norm(p.v),
            norm(p.m),
            p.v_dc * p.i_x,
            dot(p.v_s, p.i_s),
        ]);
    }
    let lay = &sys.layout;
    for (k, sm) in sys.graph.machines.iter().enumerate() {
        let o = lay.machines + 4 * k;
        let st = SmState {
            angle: x[o],
            omega_m: x[o + 1],
            i_s: vec2(x, o + 2),
        };
        let d = sm_derivatives(sm, &st, vec2(x, lay.buses + 2 * sm.bus), sys.omega_ref);
        row.extend_from_slice(&[st.omega_m / wb, d.p_elec, d.p_mech]);
    }
    for b in 0..sys.graph.buses.len() {
        row.push(norm(vec2(x, lay.buses + 2 * b)));
    }
    let audit = sys.power_audit(x)?;
    row.push(audit.generation);
    row.push(audit.load);
    row.push(audit.losses);
    Ok(())
}

fn name_fault(err: SimError, names: &[String]) -> SimError {
    match err {
        SimError::NonFinite { index, t, .. } => SimError::NonFinite {
            index,
            name: names.get(index).cloned().unwrap_or_default(),
            t,
        },
        other => other,
    }
}

/// Step index at which an event takes effect (nearest step boundary).
pub fn event_step(t_event: f64, dt: f64) -> usize {
    (t_event / dt).round() as usize
}

/// Integrate a scenario: load-flow start, pre-roll, then the logged horizon
/// with events. Faults and trips end the run early with the partial log.
pub fn run(scenario: &Scenario) -> Result<RunResult, ConfigError> {
    let mut sys = assemble(scenario)?;
    let x0 = sys.initial_state()?;
    Ok(run_from(&mut sys, scenario, x0))
}

/// Integrate from a given initial state (before pre-roll).
pub fn run_from(sys: &mut FlatSystem, scenario: &Scenario, mut x: Vec<f64>) -> RunResult {
    let sim = &scenario.simulation;
    let dt = sim.dt;
    let mut rk = Rk4::new(sys.dim());
    let mut log = WaveformLog::with_channels(channel_names(sys));
    let mut row = Vec::with_capacity(log.names.len());

    let fault = |err: SimError, t: f64, names: &[String]| RunStatus::Fault {
        message: name_fault(err, names).to_string(),
        t,
    };

    let n_pre = (sim.preroll / dt).round() as usize;
    let mut status = RunStatus::Completed;
    for k in 0..n_pre {
        let t = -sim.preroll + k as f64 * dt;
        if let Err(e) = rk.step(|_, x, dx| sys.derivatives(x, dx), &mut x, t, dt) {
            status = fault(e, t, &sys.layout.names);
            break;
        }
    }

    if status == RunStatus::Completed {
        match sample(sys, &x, &mut row) {
            Ok(()) => log.push(0.0, &row),
            Err(e) => status = fault(e, 0.0, &sys.layout.names),
        }
    }

    let n = (sim.t_end / dt).round() as usize;
    let mut next_event = 0;
    let mut k = 0;
    while status == RunStatus::Completed && k < n {
        while next_event < scenario.events.len()
            && event_step(scenario.events[next_event].t_event, dt) <= k
        {
            apply_event(&mut sys.graph, &scenario.events[next_event])
                .expect("event loads are created at assembly");
            next_event += 1;
        }
        let t = k as f64 * dt;
        if let Err(e) = rk.step(|_, x, dx| sys.derivatives(x, dx), &mut x, t, dt) {
            status = fault(e, t, &sys.layout.names);
            break;
        }
        k += 1;
        let t = k as f64 * dt;

        let tripped = if sim.v_dc_trip > 0.0 {
            sys.gfcs
                .iter()
                .find(|g| x[g.slots.v_dc] / g.params.v_dc_ref < sim.v_dc_trip)
                .map(|g| g.name.clone())
        } else {
            None
        };
        if k % sim.log_decimation == 0 || tripped.is_some() {
            match sample(sys, &x, &mut row) {
                Ok(()) => log.push(t, &row),
                Err(e) => {
                    status = fault(e, t, &sys.layout.names);
                    break;
                }
            }
        }
        if let Some(gfc) = tripped {
            status = RunStatus::Tripped { gfc, t };
        }
    }

    let collapse = sys
        .gfcs
        .iter()
        .map(|g| {
            let v = log.channel(&format!("{}.v_dc", g.name)).unwrap_or(&[]);
            let i = log.channel(&format!("{}.i_dc", g.name)).unwrap_or(&[]);
            let mut report = detect_collapse(
                &log.time,
                v,
                i,
                sim.collapse_threshold,
                g.params.i_dc_max * g.params.v_dc_ref,
            );
            // A trip or fault leaves the converter out of service.
            if status != RunStatus::Completed && !report.collapsed {
                if let RunStatus::Tripped { gfc, t } = &status {
                    if gfc == &g.name {
                        report.collapsed = true;
                        report.t_collapse = Some(*t);
                    }
                }
            }
            (g.name.clone(), report)
        })
        .collect();

    RunResult {
        log,
        final_state: x,
        status,
        collapse,
    }
}
