//! Reference-frame transforms between abc, stationary αβ and rotating dq.

use crate::Vec2;

const FRAC_1_SQRT_3: f64 = 0.577_350_269_189_625_8;

/// Amplitude-invariant Clarke transform.
pub fn clarke(abc: [f64; 3]) -> Vec2 {
    let [a, b, c] = abc;
    [(2.0 * a - b - c) / 3.0, (b - c) * FRAC_1_SQRT_3]
}

/// Inverse of [`clarke`] for zero-sequence-free signals.
pub fn inverse_clarke(ab: Vec2) -> [f64; 3] {
    let half_sqrt3 = 0.5 * 3f64.sqrt();
    [
        ab[0],
        -0.5 * ab[0] + half_sqrt3 * ab[1],
        -0.5 * ab[0] - half_sqrt3 * ab[1],
    ]
}

/// Rotate a stationary-frame vector by `-theta` into the dq frame.
pub fn park(ab: Vec2, theta: f64) -> Vec2 {
    let (s, c) = theta.sin_cos();
    [c * ab[0] + s * ab[1], -s * ab[0] + c * ab[1]]
}

pub fn inverse_park(dq: Vec2, theta: f64) -> Vec2 {
    let (s, c) = theta.sin_cos();
    [c * dq[0] - s * dq[1], s * dq[0] + c * dq[1]]
}

/// Multiply a space vector by `j` (advance by 90°).
#[inline]
pub fn rotate_quarter(x: Vec2) -> Vec2 {
    [-x[1], x[0]]
}
