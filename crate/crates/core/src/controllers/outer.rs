//! Outer synchronization controllers.
//!
//! Every law produces a phase angle `theta` for the voltage reference. The
//! DC-voltage feedback variants blend the conventional law with the
//! frequency `(v_dc / v_dc*) ω*` using the weight `alpha`; `alpha = 1`
//! disables the feedback path.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, SimError};
use crate::Vec2;

/// Smallest dVOC voltage magnitude accepted before the controller faults.
pub const DVOC_MIN_MAGNITUDE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Setpoints {
    /// Active power setpoint (p.u.).
    pub p_ref: f64,
    /// Reactive power setpoint (p.u.).
    pub q_ref: f64,
    /// AC voltage magnitude setpoint (p.u.).
    pub v_ref: f64,
    /// Rated frequency (rad/s).
    pub omega_ref: f64,
    /// DC voltage setpoint, in the same unit as the measured `v_dc`.
    pub v_dc_ref: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OuterKind {
    /// Frequency droop with gain `d_omega` (rad/s per p.u.).
    Droop { d_omega: f64 },
    /// Virtual synchronous generator with inertia `j` and damping `d_p`,
    /// expressed in the same power unit as the measured `p`.
    Vsg { j: f64, d_p: f64 },
    /// Dispatchable virtual oscillator. `kappa` is the power-frame rotation
    /// angle; the polar-form laws implemented here do not use it.
    Dvoc { eta: f64, mu: f64, kappa: f64 },
}

/// Which phase law the dVOC feedback variant uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DvocPhaseLaw {
    /// `α[ω* + η(…)] + (1 − α)(v_dc/v_dc*)ω*`, rated frequency at nominal DC voltage.
    #[default]
    Consistent,
    /// `ω* + ηα(…) + (1 − α)(v_dc/v_dc*)ω*`, which runs at `(2 − α)ω*` at
    /// nominal DC voltage. Kept for comparison only.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterControllerConfig {
    pub kind: OuterKind,
    pub alpha: f64,
    pub setpoints: Setpoints,
    #[serde(default)]
    pub dvoc_phase_law: DvocPhaseLaw,
}

impl OuterControllerConfig {
    pub fn validate(&self, key: &str) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(ConfigError::invalid(
                format!("{key}.alpha"),
                format!("must lie in [0, 1], got {}", self.alpha),
            ));
        }
        let sp = &self.setpoints;
        for (name, value) in [
            ("omega_ref", sp.omega_ref),
            ("v_ref", sp.v_ref),
            ("v_dc_ref", sp.v_dc_ref),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError::invalid(
                    format!("{key}.{name}"),
                    format!("must be positive, got {value}"),
                ));
            }
        }
        let gains: &[(&str, f64)] = match self.kind {
            OuterKind::Droop { d_omega } => &[("d_omega", d_omega)],
            OuterKind::Vsg { j, d_p } => &[("j", j), ("d_p", d_p)],
            OuterKind::Dvoc { eta, mu, .. } => &[("eta", eta), ("mu", mu)],
        };
        for &(name, value) in gains {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError::invalid(
                    format!("{key}.{name}"),
                    format!("gain must be positive, got {value}"),
                ));
            }
        }
        Ok(())
    }

    /// Frequency the DC feedback path asks for.
    #[inline]
    fn dc_frequency(&self, v_dc: f64) -> f64 {
        v_dc / self.setpoints.v_dc_ref * self.setpoints.omega_ref
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OuterControllerState {
    pub theta: f64,
    /// Frequency state (VSG only).
    pub omega: f64,
    /// Voltage magnitude state (dVOC only).
    pub v_mag: f64,
}

/// Frequency droop with DC feedback. Returns `(theta_dot, omega_out)`.
pub fn droop_update(
    _state: &OuterControllerState,
    p: f64,
    v_dc: f64,
    cfg: &OuterControllerConfig,
) -> (f64, f64) {
    let OuterKind::Droop { d_omega } = cfg.kind else {
        panic!("droop_update called with {:?}", cfg.kind);
    };
    let sp = &cfg.setpoints;
    let conventional = sp.omega_ref + d_omega * (sp.p_ref - p);
    let omega = if cfg.alpha == 1.0 {
        conventional
    } else {
        cfg.alpha * conventional + (1.0 - cfg.alpha) * cfg.dc_frequency(v_dc)
    };
    (omega, omega)
}

/// Virtual synchronous generator with DC feedback. Returns
/// `(theta_dot, omega_dot)`. `v_dc_dot` is the DC-link voltage rate from
/// the converter model.
pub fn vsg_update(
    state: &OuterControllerState,
    p: f64,
    _v_dc: f64,
    v_dc_dot: f64,
    cfg: &OuterControllerConfig,
) -> (f64, f64) {
    let OuterKind::Vsg { j, d_p } = cfg.kind else {
        panic!("vsg_update called with {:?}", cfg.kind);
    };
    let sp = &cfg.setpoints;
    let swing = (sp.p_ref - p) / (j * sp.omega_ref) + d_p / j * (sp.omega_ref - state.omega);
    let omega_dot = if cfg.alpha == 1.0 {
        swing
    } else {
        cfg.alpha * swing + (1.0 - cfg.alpha) * sp.omega_ref / sp.v_dc_ref * v_dc_dot
    };
    (state.omega, omega_dot)
}

/// Dispatchable virtual oscillator with DC feedback. Returns
/// `(theta_dot, v_mag_dot)`.
pub fn dvoc_update(
    state: &OuterControllerState,
    p: f64,
    q: f64,
    v_dc: f64,
    cfg: &OuterControllerConfig,
) -> Result<(f64, f64), SimError> {
    let OuterKind::Dvoc { eta, mu, .. } = cfg.kind else {
        panic!("dvoc_update called with {:?}", cfg.kind);
    };
    let v = state.v_mag;
    if !(v > DVOC_MIN_MAGNITUDE) {
        return Err(SimError::DegenerateMagnitude(v));
    }
    let sp = &cfg.setpoints;
    let v_ref2 = sp.v_ref * sp.v_ref;
    let v2 = v * v;
    let power_term = eta * (sp.p_ref / v_ref2 - p / v2);
    let alpha = cfg.alpha;
    let theta_dot = if alpha == 1.0 {
        sp.omega_ref + power_term
    } else {
        match cfg.dvoc_phase_law {
            DvocPhaseLaw::Consistent => {
                alpha * (sp.omega_ref + power_term) + (1.0 - alpha) * cfg.dc_frequency(v_dc)
            }
            DvocPhaseLaw::Literal => {
                sp.omega_ref + alpha * power_term + (1.0 - alpha) * cfg.dc_frequency(v_dc)
            }
        }
    };
    let v_mag_dot =
        eta * (sp.q_ref / v_ref2 - q / v2) * v + eta * mu / v_ref2 * (v_ref2 - v2) * v;
    Ok((theta_dot, v_mag_dot))
}

/// αβ voltage reference handed to the inner loops.
pub fn reference_voltage(state: &OuterControllerState, cfg: &OuterControllerConfig) -> Vec2 {
    let magnitude = match cfg.kind {
        OuterKind::Dvoc { .. } => state.v_mag,
        _ => cfg.setpoints.v_ref,
    };
    let (s, c) = state.theta.sin_cos();
    [magnitude * c, magnitude * s]
}

/// Conventional laws without any DC feedback path, written independently
/// of the blended forms above so the two can be cross-checked.
pub mod conventional {
    use super::Setpoints;

    /// Frequency droop: `ω = ω* + d_ω (p* − p)`.
    pub fn droop_frequency(sp: &Setpoints, d_omega: f64, p: f64) -> f64 {
        sp.omega_ref + d_omega * (sp.p_ref - p)
    }

    /// VSG swing law: `J ω̇ = (p* − p)/ω* + D_p (ω* − ω)`, returns `ω̇`.
    pub fn vsg_acceleration(sp: &Setpoints, j: f64, d_p: f64, p: f64, omega: f64) -> f64 {
        ((sp.p_ref - p) / sp.omega_ref + d_p * (sp.omega_ref - omega)) / j
    }

    /// dVOC in polar form, returns `(θ̇, d‖v‖/dt)`.
    pub fn dvoc_rates(sp: &Setpoints, eta: f64, mu: f64, p: f64, q: f64, v: f64) -> (f64, f64) {
        let vr2 = sp.v_ref.powi(2);
        let theta_dot = sp.omega_ref + eta * (sp.p_ref / vr2 - p / v.powi(2));
        let v_dot = eta * (sp.q_ref / vr2 - q / v.powi(2)) * v
            + eta * mu / vr2 * (vr2 - v.powi(2)) * v;
        (theta_dot, v_dot)
    }
}
