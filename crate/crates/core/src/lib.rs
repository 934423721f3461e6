//! Joint state and parameter estimation for systems that are nonlinear in
//! some of their parameters, with feasibility constraints on the parameter
//! vector.
//!
//! The crate simulates plants of the output-canonical form
//!
//! ```text
//! x' = A x + Psi(t, lambda, y) theta + g(t, lambda, y, u) + xi(t),   y = x_1,
//! ```
//!
//! and runs an adaptive observer against them: a linear filter/gradient
//! stage estimates the linearly entering parameters `theta`, while a bank of
//! gated limit-cycle oscillators searches the box of nonlinearly entering
//! parameters `lambda`. A Lipschitz penalty built from dead-zoned margin
//! functions steers the search away from parameter regions that contradict
//! known qualitative facts about the plant.
//!
//! Everything here is `no_std` (alloc only) and deterministic: fixed-step
//! RK4, seeded sampling, no platform math (all transcendentals via `libm`).
//! The reference plant throughout is a two-dimensional neuron-like
//! relaxation oscillator (`plant::RowatParams`), for which coordinate and
//! parameter transforms into the canonical form are provided along with
//! equilibrium and bifurcation analysis.
//!
//! IO, scenario files, and the command line live in the companion
//! `nlobs-cli` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod constraints;
pub mod excitation;
pub mod gainbounds;
pub mod harness;
pub mod linalg;
pub mod norms;
pub mod observer;
pub mod ode;
pub mod plant;
pub mod poly;
pub mod rootfind;

pub use linalg::Mat;
pub use norms::{deadzone, deadzone_vec};
pub use ode::Trajectory;
