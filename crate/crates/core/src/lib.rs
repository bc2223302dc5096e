//! Average-value electromagnetic-transient simulator for grid-forming
//! converters (GFCs) on a small transmission network.
//!
//! Each converter carries a DC link fed by a current-limited source, an
//! output LC filter, cascaded voltage/current loops and one of three outer
//! synchronization laws (frequency droop, virtual synchronous generator,
//! dispatchable virtual oscillator). The outer laws can blend in a DC-link
//! voltage feedback term, which keeps the DC link from collapsing when the
//! source saturates after a large load step.
//!
//! All electrical quantities are per-unit on the system power base. Time is
//! in seconds, angles in radians and frequencies in rad/s.

pub mod controllers;
pub mod converter;
pub mod engine;
pub mod error;
pub mod frames;
pub mod network;
pub mod output;
pub mod plot;
pub mod scenario;

pub use error::{ConfigError, SimError};

/// Two-axis quantity, used for both the stationary (αβ) and rotating (dq) frames.
pub type Vec2 = [f64; 2];

#[inline]
pub(crate) fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub(crate) fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}
