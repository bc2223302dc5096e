//! Active and reactive power measurement.
//!
//! Instantaneous powers use the amplitude-invariant space-vector
//! convention: `p = vᵀ i`, `q = v_β i_α − v_α i_β`. With this sign a current
//! lagging the voltage (an inductive load seen from the source) gives
//! positive `q`.

use crate::{dot, Vec2};

#[inline]
pub fn instantaneous_power(v: Vec2, i: Vec2) -> (f64, f64) {
    (dot(v, i), v[1] * i[0] - v[0] * i[1])
}

/// State of the first-order measurement filter.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PowerFilterState {
    pub p: f64,
    pub q: f64,
}

impl PowerFilterState {
    /// Continuous-time filter rates for cutoff `omega_f` (rad/s).
    pub fn rates(&self, v: Vec2, i: Vec2, omega_f: f64) -> (f64, f64) {
        let (p, q) = instantaneous_power(v, i);
        (omega_f * (p - self.p), omega_f * (q - self.q))
    }
}

/// Advance the filter by `dt` with an exact zero-order-hold update and return
/// the filtered `(p, q)`. An infinite cutoff passes instantaneous values.
pub fn power_measurement(
    state: &mut PowerFilterState,
    v: Vec2,
    i: Vec2,
    omega_f: f64,
    dt: f64,
) -> (f64, f64) {
    debug_assert!(dt > 0.0 && omega_f > 0.0);
    let (p, q) = instantaneous_power(v, i);
    let blend = if omega_f.is_infinite() {
        1.0
    } else {
        -(-omega_f * dt).exp_m1()
    };
    state.p += (p - state.p) * blend;
    state.q += (q - state.q) * blend;
    (state.p, state.q)
}
