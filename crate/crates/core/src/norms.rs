//! Dead-zone norms.
//!
//! `||a||_eps = max(|a| - eps, 0)` ignores anything below the threshold
//! `eps`, which is what makes the adaptation laws robust to bounded
//! disturbances: inside the dead zone the gate functions built on top of
//! these norms evaluate to exactly zero.

use crate::linalg::norm2;

/// Scalar dead-zone norm `max(|a| - eps, 0)`.
///
/// Total for every finite `a`; `eps` must be nonnegative.
#[inline]
pub fn deadzone(a: f64, eps: f64) -> f64 {
    debug_assert!(eps >= 0.0);
    let v = a.abs() - eps;
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Dead-zone norm of a vector, `max(||v||_2 - eps, 0)`.
#[inline]
pub fn deadzone_vec(v: &[f64], eps: f64) -> f64 {
    deadzone(norm2(v), eps)
}
