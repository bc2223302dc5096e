//! Cascaded voltage and current loops in the dq frame.
//!
//! The voltage loop turns the capacitor voltage error into a switch-current
//! reference, with output-current and capacitor-current feedforward. The
//! reference passes through the AC current limiter and the current loop
//! produces the switch voltage, which is normalised by the measured DC
//! voltage into a modulation index.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::frames::{inverse_park, park};
use crate::{dot, norm, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnerLoopConfig {
    pub kp_v: f64,
    pub ki_v: f64,
    pub kp_i: f64,
    pub ki_i: f64,
    /// Enables the AC current limiter.
    pub ac_limit: bool,
    /// AC current limit magnitude (p.u.).
    pub i_ac_max: f64,
    /// Include ωL / ωC cross-coupling feedforward.
    pub decoupling: bool,
    /// Largest modulation index magnitude.
    pub m_max: f64,
    /// Bound on the voltage-loop integral contribution (p.u. current).
    pub i_int_max: f64,
    /// Bound on the current-loop integral contribution (p.u. voltage).
    pub v_int_max: f64,
}

impl InnerLoopConfig {
    pub fn validate(&self, key: &str) -> Result<(), ConfigError> {
        for (name, value, positive) in [
            ("kp_v", self.kp_v, false),
            ("ki_v", self.ki_v, false),
            ("kp_i", self.kp_i, false),
            ("ki_i", self.ki_i, false),
            ("i_ac_max", self.i_ac_max, true),
            ("m_max", self.m_max, true),
            ("i_int_max", self.i_int_max, true),
            ("v_int_max", self.v_int_max, true),
        ] {
            let ok = value.is_finite() && if positive { value > 0.0 } else { value >= 0.0 };
            if !ok {
                return Err(ConfigError::invalid(
                    format!("{key}.{name}"),
                    format!("out of range: {value}"),
                ));
            }
        }
        Ok(())
    }
}

/// Amplitude limiting of the switch-current reference.
///
/// Triggers on the *measured* current magnitude and scales the reference
/// by `i_ac_max / ‖i_ref‖`. A zero reference cannot be scaled and yields
/// zero.
pub fn ac_current_limit(i_ref_dq: Vec2, i_meas_dq: Vec2, i_ac_max: f64) -> Vec2 {
    if norm(i_meas_dq) <= i_ac_max {
        return i_ref_dq;
    }
    let magnitude = norm(i_ref_dq);
    if magnitude == 0.0 {
        return [0.0, 0.0];
    }
    let gamma = i_ac_max / magnitude;
    [gamma * i_ref_dq[0], gamma * i_ref_dq[1]]
}

/// Measurements and references for one evaluation of the loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerLoopInputs {
    pub v_ref: Vec2,
    /// Filter capacitor voltage (αβ).
    pub v: Vec2,
    /// Switch-side current (αβ).
    pub i_s: Vec2,
    /// Output current towards the grid (αβ).
    pub i_grid: Vec2,
    pub v_dc: f64,
    /// Angle of the dq frame.
    pub theta: f64,
    /// Frequency used for the cross-coupling terms.
    pub omega: f64,
    /// Filter inductance and capacitance for feedforward.
    pub l_f: f64,
    pub c_f: f64,
}

/// Result of evaluating the loops at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerLoopOutput {
    /// Modulation index (αβ), magnitude at most `m_max`.
    pub m: Vec2,
    /// Switch-current reference after limiting (dq).
    pub i_ref: Vec2,
    pub limiting: bool,
    pub modulation_saturated: bool,
    /// Rates of the four integrator states `[ξv_d, ξv_q, ξi_d, ξi_q]`.
    pub integrator_rates: [f64; 4],
}

/// The two cascaded PI loops. Integrator states live outside so the engine
/// can integrate them with the rest of the system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerLoops {
    pub cfg: InnerLoopConfig,
}

impl InnerLoops {
    pub fn new(cfg: InnerLoopConfig) -> Self {
        Self { cfg }
    }

    pub fn evaluate(&self, xi: &[f64; 4], input: &InnerLoopInputs) -> InnerLoopOutput {
        let cfg = &self.cfg;
        let th = input.theta;
        let v_ref = park(input.v_ref, th);
        let v = park(input.v, th);
        let i_s = park(input.i_s, th);
        let i_g = park(input.i_grid, th);
        let (wc, wl) = if cfg.decoupling {
            (input.omega * input.c_f, input.omega * input.l_f)
        } else {
            (0.0, 0.0)
        };

        let e_v = [v_ref[0] - v[0], v_ref[1] - v[1]];
        let i_ref_raw = [
            cfg.kp_v * e_v[0] + cfg.ki_v * xi[0] + i_g[0] - wc * v[1],
            cfg.kp_v * e_v[1] + cfg.ki_v * xi[1] + i_g[1] + wc * v[0],
        ];
        let (i_ref, limiting) = if cfg.ac_limit {
            let limited = ac_current_limit(i_ref_raw, i_s, cfg.i_ac_max);
            (limited, limited != i_ref_raw)
        } else {
            (i_ref_raw, false)
        };

        let e_i = [i_ref[0] - i_s[0], i_ref[1] - i_s[1]];
        let v_s = [
            cfg.kp_i * e_i[0] + cfg.ki_i * xi[2] + v[0] - wl * i_s[1],
            cfg.kp_i * e_i[1] + cfg.ki_i * xi[3] + v[1] + wl * i_s[0],
        ];
        let v_dc = input.v_dc.max(f64::MIN_POSITIVE);
        let mut m_dq = [2.0 * v_s[0] / v_dc, 2.0 * v_s[1] / v_dc];
        let m_mag = norm(m_dq);
        let modulation_saturated = m_mag > cfg.m_max;
        if modulation_saturated {
            let k = cfg.m_max / m_mag;
            m_dq = [k * m_dq[0], k * m_dq[1]];
        }

        // Conditional integration: hold an integrator when its loop output is
        // saturated and the error would push it further, or when the integral
        // contribution has reached its bound in the error's direction.
        let voltage_frozen = limiting && dot(e_v, i_ref_raw) > 0.0;
        let current_frozen = modulation_saturated && dot(e_i, v_s) > 0.0;
        let mut rates = [0.0; 4];
        for k in 0..2 {
            if !voltage_frozen && !pushes_past(cfg.ki_v * xi[k], e_v[k], cfg.i_int_max) {
                rates[k] = e_v[k];
            }
            if !current_frozen && !pushes_past(cfg.ki_i * xi[2 + k], e_i[k], cfg.v_int_max) {
                rates[2 + k] = e_i[k];
            }
        }

        InnerLoopOutput {
            m: inverse_park(m_dq, th),
            i_ref,
            limiting,
            modulation_saturated,
            integrator_rates: rates,
        }
    }
}

#[inline]
fn pushes_past(contribution: f64, error: f64, bound: f64) -> bool {
    contribution.abs() >= bound && contribution * error > 0.0
}

/// Discrete-time step of the loops: evaluates the modulation command and
/// advances the integrators by `dt` (forward Euler), keeping each integral
/// contribution within its bound.
pub fn inner_loops_step(
    loops: &InnerLoops,
    xi: &mut [f64; 4],
    input: &InnerLoopInputs,
    dt: f64,
) -> InnerLoopOutput {
    debug_assert!(dt > 0.0);
    let out = loops.evaluate(xi, input);
    let cfg = &loops.cfg;
    for k in 0..4 {
        xi[k] += dt * out.integrator_rates[k];
        let (gain, bound) = if k < 2 {
            (cfg.ki_v, cfg.i_int_max)
        } else {
            (cfg.ki_i, cfg.v_int_max)
        };
        if gain > 0.0 {
            let cap = bound / gain;
            xi[k] = xi[k].clamp(-cap, cap);
        }
    }
    out
}
