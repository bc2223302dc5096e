//! Electrical network: dynamic RLC lines, linear transformers,
//! constant-impedance loads and a classical synchronous machine, all in the
//! stationary αβ frame.
//!
//! Every bus carries a capacitor whose voltage is a state; every series
//! element carries an inductor current state. Shunt line charging is lumped
//! half at each end. Reactances in the configuration are converted to
//! inductances with the base angular frequency.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::frames::rotate_quarter;
use crate::{dot, Vec2};

/// Per-unit bases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bases {
    pub s_base_mva: f64,
    pub v_base_kv: f64,
    pub f_base_hz: f64,
}

impl Default for Bases {
    fn default() -> Self {
        Self {
            s_base_mva: 100.0,
            v_base_kv: 230.0,
            f_base_hz: 50.0,
        }
    }
}

impl Bases {
    pub fn omega_base(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.f_base_hz
    }

    /// Impedance base in ohms, `v_b² / S_b`.
    pub fn z_base_ohm(&self) -> f64 {
        (self.v_base_kv * 1e3).powi(2) / (self.s_base_mva * 1e6)
    }

    pub fn s_base_va(&self) -> f64 {
        self.s_base_mva * 1e6
    }
}

// ---------------------------------------------------------------------------
// Configuration (per-unit impedances, as written in network files)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusConfig {
    pub b_shunt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineConfig {
    pub from: String,
    pub to: String,
    pub r: f64,
    pub x: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerConfig {
    pub from: String,
    pub to: String,
    pub ratio: f64,
    pub r: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    pub bus: String,
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineConfig {
    pub bus: String,
    /// Inertia constant (s).
    pub h: f64,
    /// Damping, p.u. power per p.u. speed deviation.
    pub d: f64,
    /// Transient reactance (p.u.).
    pub x_t: f64,
    /// Stator resistance (p.u.).
    pub r_a: f64,
    pub e_mag: f64,
    /// Governor droop `R`, p.u. speed per p.u. power.
    pub governor_droop: f64,
}

/// Network description as read from a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// Susceptance added to every bus.
    pub min_bus_b: f64,
    pub buses: BTreeMap<String, BusConfig>,
    pub lines: BTreeMap<String, LineConfig>,
    pub transformers: BTreeMap<String, TransformerConfig>,
    pub loads: BTreeMap<String, LoadConfig>,
    pub machines: BTreeMap<String, MachineConfig>,
}

/// The shipped IEEE 9-bus data file.
pub const IEEE9_TOML: &str = include_str!("../data/ieee9.toml");

// ---------------------------------------------------------------------------
// Runtime graph
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    /// Total bus capacitance from shunts and line charging (p.u. · s).
    pub capacitance: f64,
}

/// Series element: a line section or a transformer.
///
/// `l di/dt = v_from / ratio − v_to − r i`; the from-bus supplies `i / ratio`.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub name: String,
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub l: f64,
    pub ratio: f64,
    pub is_transformer: bool,
}

/// Constant-impedance load, `i = G v − B j v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Load {
    pub name: String,
    pub bus: usize,
    pub g: f64,
    pub b: f64,
}

impl Load {
    #[inline]
    pub fn current(&self, v: Vec2) -> Vec2 {
        let jv = rotate_quarter(v);
        [self.g * v[0] - self.b * jv[0], self.g * v[1] - self.b * jv[1]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncMachine {
    pub name: String,
    pub bus: usize,
    pub inertia_h: f64,
    pub d_damp: f64,
    /// Stator inductance `x_t / ω_b` (p.u. · s).
    pub l_t: f64,
    pub r_a: f64,
    pub e_mag: f64,
    pub governor_droop: f64,
    /// Mechanical power at rated speed, fixed by the initial load flow.
    pub p_set: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SmState {
    /// Absolute rotor angle of the EMF (rad).
    pub angle: f64,
    /// Rotor speed (rad/s).
    pub omega_m: f64,
    /// Stator current flowing into the terminal bus.
    pub i_s: Vec2,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SmDerivative {
    /// Rotor angle relative to the synchronous reference, `ω_m − ω_ref`.
    pub delta_dot: f64,
    pub omega_dot: f64,
    pub i_s_dot: Vec2,
    /// Current injected into the terminal bus.
    pub injected: Vec2,
    pub p_elec: f64,
    pub p_mech: f64,
}

impl SyncMachine {
    pub fn emf(&self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        [self.e_mag * c, self.e_mag * s]
    }
}

/// Swing equation with droop governor and the stator inductance between the
/// internal EMF and the terminal.
pub fn sm_derivatives(
    sm: &SyncMachine,
    state: &SmState,
    terminal_v: Vec2,
    omega_ref: f64,
) -> SmDerivative {
    let e = sm.emf(state.angle);
    let p_elec = dot(e, state.i_s);
    let speed_dev = (state.omega_m - omega_ref) / omega_ref;
    let p_mech = sm.p_set - speed_dev / sm.governor_droop;
    let omega_dot =
        omega_ref / (2.0 * sm.inertia_h) * (p_mech - p_elec - sm.d_damp * speed_dev);
    let di = |k: usize| (e[k] - terminal_v[k] - sm.r_a * state.i_s[k]) / sm.l_t;
    SmDerivative {
        delta_dot: state.omega_m - omega_ref,
        omega_dot,
        i_s_dot: [di(0), di(1)],
        injected: state.i_s,
        p_elec,
        p_mech,
    }
}

/// Load step applied at a step boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadStepEvent {
    /// Event time (s).
    pub t_event: f64,
    pub bus: String,
    pub p_before: f64,
    pub p_after: f64,
    #[serde(default)]
    pub q_after: f64,
}

/// Name of the disturbance load that events drive at `bus`.
pub fn event_load_name(bus: &str) -> String {
    format!("event@{bus}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    pub omega_base: f64,
    pub buses: Vec<Bus>,
    /// Lines first, then transformers; each group sorted by name.
    pub branches: Vec<Branch>,
    pub loads: Vec<Load>,
    pub machines: Vec<SyncMachine>,
}

impl NetworkGraph {
    pub fn from_config(cfg: &NetworkConfig, bases: &Bases) -> Result<Self, ConfigError> {
        let wb = bases.omega_base();
        let index: BTreeMap<&str, usize> = cfg
            .buses
            .keys()
            .enumerate()
            .map(|(k, id)| (id.as_str(), k))
            .collect();
        let lookup = |key: String, name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| ConfigError::DanglingReference {
                    key,
                    name: name.to_string(),
                })
        };
        let check = |key: String, ok: bool, value: f64| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::invalid(key, format!("out of range: {value}")))
            }
        };

        let mut susceptance: Vec<f64> = cfg
            .buses
            .values()
            .map(|b| b.b_shunt + cfg.min_bus_b)
            .collect();
        for (id, b) in &cfg.buses {
            check(format!("network.buses.{id}.b_shunt"), b.b_shunt >= 0.0, b.b_shunt)?;
        }

        let mut branches = Vec::new();
        for (name, line) in &cfg.lines {
            let key = format!("network.lines.{name}");
            let from = lookup(format!("{key}.from"), &line.from)?;
            let to = lookup(format!("{key}.to"), &line.to)?;
            check(format!("{key}.r"), line.r >= 0.0, line.r)?;
            check(format!("{key}.x"), line.x > 0.0, line.x)?;
            check(format!("{key}.b"), line.b >= 0.0, line.b)?;
            susceptance[from] += 0.5 * line.b;
            susceptance[to] += 0.5 * line.b;
            branches.push(Branch {
                name: name.clone(),
                from,
                to,
                r: line.r,
                l: line.x / wb,
                ratio: 1.0,
                is_transformer: false,
            });
        }
        for (name, t) in &cfg.transformers {
            let key = format!("network.transformers.{name}");
            let from = lookup(format!("{key}.from"), &t.from)?;
            let to = lookup(format!("{key}.to"), &t.to)?;
            check(format!("{key}.ratio"), t.ratio > 0.0, t.ratio)?;
            check(format!("{key}.x"), t.x > 0.0, t.x)?;
            check(format!("{key}.r"), t.r >= 0.0, t.r)?;
            branches.push(Branch {
                name: name.clone(),
                from,
                to,
                r: t.r,
                l: t.x / wb,
                ratio: t.ratio,
                is_transformer: true,
            });
        }

        let mut loads = Vec::new();
        for (name, load) in &cfg.loads {
            let key = format!("network.loads.{name}");
            let bus = lookup(format!("{key}.bus"), &load.bus)?;
            check(format!("{key}.p"), load.p >= 0.0, load.p)?;
            check(format!("{key}.q"), true, load.q)?;
            loads.push(Load {
                name: name.clone(),
                bus,
                g: load.p,
                b: load.q,
            });
        }

        let mut machines = Vec::new();
        for (name, m) in &cfg.machines {
            let key = format!("network.machines.{name}");
            let bus = lookup(format!("{key}.bus"), &m.bus)?;
            check(format!("{key}.h"), m.h > 0.0, m.h)?;
            check(format!("{key}.x_t"), m.x_t > 0.0, m.x_t)?;
            check(format!("{key}.d"), m.d >= 0.0, m.d)?;
            check(format!("{key}.r_a"), m.r_a >= 0.0, m.r_a)?;
            check(format!("{key}.e_mag"), m.e_mag > 0.0, m.e_mag)?;
            check(
                format!("{key}.governor_droop"),
                m.governor_droop > 0.0,
                m.governor_droop,
            )?;
            machines.push(SyncMachine {
                name: name.clone(),
                bus,
                inertia_h: m.h,
                d_damp: m.d,
                l_t: m.x_t / wb,
                r_a: m.r_a,
                e_mag: m.e_mag,
                governor_droop: m.governor_droop,
                p_set: 0.0,
            });
        }

        let buses = cfg
            .buses
            .keys()
            .zip(susceptance)
            .map(|(id, b)| Bus {
                id: id.clone(),
                capacitance: b / wb,
            })
            .collect();

        Ok(Self {
            omega_base: wb,
            buses,
            branches,
            loads,
            machines,
        })
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn line_count(&self) -> usize {
        self.branches.iter().filter(|b| !b.is_transformer).count()
    }

    pub fn transformer_count(&self) -> usize {
        self.branches.iter().filter(|b| b.is_transformer).count()
    }

    /// Make sure a disturbance load exists at `bus`, starting at `p_before`.
    pub fn ensure_event_load(&mut self, event: &LoadStepEvent) -> Result<usize, ConfigError> {
        let bus = self
            .bus_index(&event.bus)
            .ok_or_else(|| ConfigError::DanglingReference {
                key: "events.bus".into(),
                name: event.bus.clone(),
            })?;
        let name = event_load_name(&event.bus);
        if let Some(k) = self.loads.iter().position(|l| l.name == name) {
            return Ok(k);
        }
        self.loads.push(Load {
            name,
            bus,
            g: event.p_before,
            b: 0.0,
        });
        Ok(self.loads.len() - 1)
    }

    /// Total load power drawn at the given bus voltages.
    pub fn load_power(&self, v: &[Vec2]) -> f64 {
        self.loads
            .iter()
            .map(|l| dot(v[l.bus], l.current(v[l.bus])))
            .sum()
    }

    /// Resistive losses in series elements.
    pub fn series_losses(&self, i: &[Vec2]) -> f64 {
        self.branches
            .iter()
            .zip(i)
            .map(|(b, i)| b.r * dot(*i, *i))
            .sum()
    }

    /// Energy stored in inductors and bus capacitors (`extra_c` adds device
    /// capacitance per bus).
    pub fn stored_energy(&self, v: &[Vec2], i: &[Vec2], extra_c: &[f64]) -> f64 {
        let inductive: f64 = self
            .branches
            .iter()
            .zip(i)
            .map(|(b, i)| 0.5 * b.l * dot(*i, *i))
            .sum();
        let capacitive: f64 = self
            .buses
            .iter()
            .zip(v)
            .zip(extra_c)
            .map(|((b, v), c)| 0.5 * (b.capacitance + c) * dot(*v, *v))
            .sum();
        inductive + capacitive
    }
}

/// Recompute the disturbance load at the event bus from `(p_after, q_after)`
/// at nominal voltage.
pub fn apply_event(graph: &mut NetworkGraph, event: &LoadStepEvent) -> Result<(), ConfigError> {
    let k = graph.ensure_event_load(event)?;
    graph.loads[k].g = event.p_after;
    graph.loads[k].b = event.q_after;
    Ok(())
}

/// Right-hand side of the network equations.
///
/// `injections` is the current each bus receives from devices; `extra_c`
/// is device capacitance at each bus (e.g. converter filter capacitors).
/// Results are written into `dv` (per bus) and `di` (per branch).
pub fn network_derivatives_into(
    graph: &NetworkGraph,
    v: &[Vec2],
    i: &[Vec2],
    injections: &[Vec2],
    extra_c: &[f64],
    dv: &mut [Vec2],
    di: &mut [Vec2],
) {
    // Net current into each bus capacitor, accumulated in dv.
    dv.copy_from_slice(injections);
    for (k, br) in graph.branches.iter().enumerate() {
        let cur = i[k];
        let vf = v[br.from];
        let vt = v[br.to];
        for a in 0..2 {
            di[k][a] = (vf[a] / br.ratio - vt[a] - br.r * cur[a]) / br.l;
            dv[br.from][a] -= cur[a] / br.ratio;
            dv[br.to][a] += cur[a];
        }
    }
    for load in &graph.loads {
        let il = load.current(v[load.bus]);
        dv[load.bus][0] -= il[0];
        dv[load.bus][1] -= il[1];
    }
    for (b, bus) in graph.buses.iter().enumerate() {
        let c = bus.capacitance + extra_c[b];
        dv[b][0] /= c;
        dv[b][1] /= c;
    }
}

/// Current leaving bus `b` into branches and loads (excluding the bus
/// capacitor itself).
pub fn bus_outflow(graph: &NetworkGraph, v: &[Vec2], i: &[Vec2], b: usize) -> Vec2 {
    let mut out = [0.0, 0.0];
    for (k, br) in graph.branches.iter().enumerate() {
        if br.from == b {
            out[0] += i[k][0] / br.ratio;
            out[1] += i[k][1] / br.ratio;
        }
        if br.to == b {
            out[0] -= i[k][0];
            out[1] -= i[k][1];
        }
    }
    for load in graph.loads.iter().filter(|l| l.bus == b) {
        let il = load.current(v[b]);
        out[0] += il[0];
        out[1] += il[1];
    }
    out
}

/// Per-bus and per-branch derivatives, allocating wrapper around
/// [`network_derivatives_into`].
pub fn network_derivatives(
    graph: &NetworkGraph,
    v: &[Vec2],
    i: &[Vec2],
    injections: &[Vec2],
) -> (Vec<Vec2>, Vec<Vec2>) {
    let mut dv = vec![[0.0; 2]; graph.buses.len()];
    let mut di = vec![[0.0; 2]; graph.branches.len()];
    let extra = vec![0.0; graph.buses.len()];
    network_derivatives_into(graph, v, i, injections, &extra, &mut dv, &mut di);
    (dv, di)
}
