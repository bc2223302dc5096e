//! Average-value model of a single grid-forming converter.
//!
//! The converter is a DC link capacitor fed by a current-limited DC source,
//! a two-level switching stage represented by its average behaviour, and an
//! output RLC filter:
//!
//! ```text
//! C_dc dv_dc/dt = i_dc - G_dc v_dc - i_x
//! L    di_s/dt  = v_s - R i_s - v
//! C    dv/dt    = i_s - i_grid
//! ```
//!
//! with `i_x = ½ mᵀ i_s` and `v_s = ½ v_dc m`, so that the switch stage is
//! lossless (`v_dc i_x = v_sᵀ i_s`).
//!
//! Units: AC quantities are per-unit on the system base with peak phase
//! voltage as voltage base, so a modulation index of one at `v_dc = 2`
//! synthesises 1 p.u. The DC link uses the same voltage unit, which means
//! the nominal DC voltage `v_dc_ref` is above 2. DC-side powers are then in
//! the same per-unit as AC powers (`p = v·i`). Scenario files describe the
//! DC side in a *DC per-unit* where `v_dc_ref` is 1 and one unit of current
//! carries 1 p.u. of power; [`DcPerUnit`] does the conversion.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::{dot, Vec2};

/// Physical parameters of one converter, in literal model units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConverterParams {
    /// DC link capacitance.
    pub c_dc: f64,
    /// DC-side loss conductance.
    pub g_dc: f64,
    /// Filter inductance (p.u. · s).
    pub l_f: f64,
    /// Filter capacitance (p.u. · s).
    pub c_f: f64,
    /// Filter resistance.
    pub r_f: f64,
    /// Magnitude limit of the DC source current.
    pub i_dc_max: f64,
    /// DC voltage setpoint.
    pub v_dc_ref: f64,
    /// Proportional gain of the DC source governor.
    pub k_dc: f64,
    /// Response time constant of the DC source (s).
    pub tau_dc: f64,
}

impl ConverterParams {
    pub fn validate(&self, key: &str) -> Result<(), ConfigError> {
        let checks = [
            ("c_dc", self.c_dc > 0.0),
            ("l_f", self.l_f > 0.0),
            ("c_f", self.c_f > 0.0),
            ("r_f", self.r_f >= 0.0),
            ("g_dc", self.g_dc >= 0.0),
            ("i_dc_max", self.i_dc_max > 0.0),
            ("v_dc_ref", self.v_dc_ref > 0.0),
            ("k_dc", self.k_dc >= 0.0),
            ("tau_dc", self.tau_dc >= 0.0),
        ];
        for (name, ok) in checks {
            let value = self.field(name);
            if !ok || !value.is_finite() {
                return Err(ConfigError::invalid(
                    format!("{key}.{name}"),
                    format!("out of range: {value}"),
                ));
            }
        }
        Ok(())
    }

    fn field(&self, name: &str) -> f64 {
        match name {
            "c_dc" => self.c_dc,
            "g_dc" => self.g_dc,
            "l_f" => self.l_f,
            "c_f" => self.c_f,
            "r_f" => self.r_f,
            "i_dc_max" => self.i_dc_max,
            "v_dc_ref" => self.v_dc_ref,
            "k_dc" => self.k_dc,
            _ => self.tau_dc,
        }
    }
}

/// Conversion between the DC per-unit used in scenario files and model units.
///
/// Voltage base is `v_dc_ref`; current base is `1 / v_dc_ref` so that one
/// unit of DC current at nominal voltage carries 1 p.u. of power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcPerUnit {
    pub v_base: f64,
}

impl DcPerUnit {
    pub fn new(v_dc_ref: f64) -> Self {
        Self { v_base: v_dc_ref }
    }

    pub fn i_base(&self) -> f64 {
        1.0 / self.v_base
    }

    /// Base for conductances, capacitances (per second) and governor gains.
    pub fn y_base(&self) -> f64 {
        1.0 / (self.v_base * self.v_base)
    }

    pub fn voltage_to_pu(&self, v: f64) -> f64 {
        v / self.v_base
    }

    pub fn current_to_pu(&self, i: f64) -> f64 {
        i / self.i_base()
    }
}

/// Dynamic state of one converter.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ConverterState {
    pub v_dc: f64,
    /// Switch-side filter current.
    pub i_s: Vec2,
    /// Filter capacitor (output) voltage.
    pub v: Vec2,
    /// Lagged DC source demand.
    pub i_tau_lag: f64,
}

/// Time derivative of the electrical part of [`ConverterState`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ConverterDerivative {
    pub v_dc: f64,
    pub i_s: Vec2,
    pub v: Vec2,
}

/// DC current drawn by the switching stage, `½ mᵀ i_s`.
#[inline]
pub fn switch_current(m: Vec2, i_s: Vec2) -> f64 {
    0.5 * dot(m, i_s)
}

/// Average switch-node voltage `½ v_dc m`.
#[inline]
pub fn switch_voltage(m: Vec2, v_dc: f64) -> Vec2 {
    [0.5 * v_dc * m[0], 0.5 * v_dc * m[1]]
}

/// Unlagged DC source demand: governor, AC power feedforward and loss
/// feedforward.
#[inline]
pub fn raw_dc_demand(v_dc: f64, p_ac_filtered: f64, params: &ConverterParams) -> f64 {
    params.k_dc * (params.v_dc_ref - v_dc)
        + p_ac_filtered / params.v_dc_ref
        + params.g_dc * params.v_dc_ref
}

/// Continuous-time rate of the demand lag state. With `tau_dc = 0` the lag
/// is bypassed and callers should use the raw demand directly.
#[inline]
pub fn dc_demand_rate(lag: f64, raw: f64, tau_dc: f64) -> f64 {
    if tau_dc > 0.0 {
        (raw - lag) / tau_dc
    } else {
        0.0
    }
}

/// Current demand seen by the DC source given the lag state.
#[inline]
pub fn dc_demand(lag: f64, raw: f64, tau_dc: f64) -> f64 {
    if tau_dc > 0.0 {
        lag
    } else {
        raw
    }
}

/// Discrete-time DC source demand update.
///
/// Advances the first-order lag by `dt` using its exact zero-order-hold
/// discretisation and returns the new demand `i_τ`.
pub fn dc_source_demand(
    state: &mut ConverterState,
    p_ac_filtered: f64,
    params: &ConverterParams,
    dt: f64,
) -> f64 {
    debug_assert!(dt > 0.0);
    let raw = raw_dc_demand(state.v_dc, p_ac_filtered, params);
    if params.tau_dc > 0.0 {
        let blend = -(-dt / params.tau_dc).exp_m1();
        state.i_tau_lag += (raw - state.i_tau_lag) * blend;
    } else {
        state.i_tau_lag = raw;
    }
    state.i_tau_lag
}

/// Clamp the DC source current to `±i_dc_max`.
#[inline]
pub fn saturate_dc_current(i_tau: f64, i_dc_max: f64) -> f64 {
    if i_tau.abs() < i_dc_max {
        i_tau
    } else {
        i_dc_max.copysign(i_tau)
    }
}

/// Right-hand side of the converter model.
pub fn converter_derivatives(
    state: &ConverterState,
    m: Vec2,
    i_grid: Vec2,
    i_dc: f64,
    params: &ConverterParams,
) -> ConverterDerivative {
    let i_x = switch_current(m, state.i_s);
    let v_s = switch_voltage(m, state.v_dc);
    let di = |k: usize| (v_s[k] - params.r_f * state.i_s[k] - state.v[k]) / params.l_f;
    let dv = |k: usize| (state.i_s[k] - i_grid[k]) / params.c_f;
    ConverterDerivative {
        v_dc: (i_dc - params.g_dc * state.v_dc - i_x) / params.c_dc,
        i_s: [di(0), di(1)],
        v: [dv(0), dv(1)],
    }
}
