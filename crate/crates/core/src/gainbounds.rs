//! Tuning calculus for the small-gain interconnection.
//!
//! A decaying subsystem bounded by `||x(t)|| <= beta(t - s) ||x(s)|| +
//! c ||h||_inf,[s,t] + delta` is coupled to a monotone integral subsystem
//! `h' = -gamma_0(||x + d||_eps + M |h|)` with `|gamma_0(v)| <= D_gamma |v|`.
//! For a given exponential envelope `beta(s) = beta0 exp(-rate s)` and the
//! free parameters `kappa in (1, inf)`, `d in (0, 1)`, the calculus returns
//!
//! * the dead-zone floor `eps >= delta (1 + beta0 kappa / (kappa - d)) + delta_d`,
//! * the gain ceiling on `D_gamma`, and
//! * the guaranteed minimum time `tau* = beta^{-1}(d / kappa)` between
//!   successive crossings of the levels `h0 / kappa^i`.
//!
//! `synth_verify` integrates the tightest ODE realization inside the
//! inequality class and measures the crossing times, checking the
//! boundedness and `T_i >= tau*` conclusions empirically.

use alloc::vec::Vec;
use core::fmt;

use crate::norms::deadzone;
use crate::ode::{rk4_step, Rk4Workspace};

/// Interconnection data. `beta(s) = beta0 * exp(-a s)` with `beta0 >= 1`;
/// `c`, `delta`, `m`, `delta_d` are the coupling, offset, h-weight, and
/// disturbance bounds; `kappa > 1` and `d in (0,1)` are the free
/// parameters of the crossing argument; `x0_norm` and `h0 > 0` are the
/// initial data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainBoundsProblem {
    pub beta0: f64,
    pub a: f64,
    pub c: f64,
    pub delta: f64,
    pub m: f64,
    pub delta_d: f64,
    pub kappa: f64,
    pub d: f64,
    pub x0_norm: f64,
    pub h0: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GainBoundsError {
    OutOfRange { what: &'static str, value: f64 },
}

impl fmt::Display for GainBoundsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GainBoundsError::OutOfRange { what, value } => {
                write!(f, "{what} out of range (got {value})")
            }
        }
    }
}

impl core::error::Error for GainBoundsError {}

impl GainBoundsProblem {
    pub fn validate(&self) -> Result<(), GainBoundsError> {
        let checks: [(&'static str, bool, f64); 9] = [
            ("beta0 (>= 1)", self.beta0 >= 1.0, self.beta0),
            ("a (> 0)", self.a > 0.0, self.a),
            ("c (>= 0)", self.c >= 0.0, self.c),
            ("delta (>= 0)", self.delta >= 0.0, self.delta),
            ("m (>= 0)", self.m >= 0.0, self.m),
            ("delta_d (>= 0)", self.delta_d >= 0.0, self.delta_d),
            ("kappa (> 1)", self.kappa > 1.0, self.kappa),
            ("d (in (0,1))", self.d > 0.0 && self.d < 1.0, self.d),
            ("h0 (> 0)", self.h0 > 0.0, self.h0),
        ];
        for (what, ok, value) in checks {
            if !ok || !value.is_finite() {
                return Err(GainBoundsError::OutOfRange { what, value });
            }
        }
        if !(self.x0_norm >= 0.0) {
            return Err(GainBoundsError::OutOfRange {
                what: "x0_norm (>= 0)",
                value: self.x0_norm,
            });
        }
        Ok(())
    }
}

/// Dead-zone floor `delta (1 + beta0 kappa / (kappa - d)) + delta_d`.
pub fn epsilon_floor(p: &GainBoundsProblem) -> f64 {
    p.delta * (1.0 + p.beta0 * p.kappa / (p.kappa - p.d)) + p.delta_d
}

/// `tau* = beta^{-1}(d / kappa) = ln(beta0 kappa / d) / a`. Well defined
/// under the problem invariants (`d < 1 <= beta0`, `kappa > 1`).
pub fn tau_star(p: &GainBoundsProblem) -> f64 {
    debug_assert!(p.d / p.kappa < p.beta0);
    libm::log(p.beta0 * p.kappa / p.d) / p.a
}

/// Gain ceiling
/// `(kappa-1)/kappa * 1/tau* * h0 / (beta0 x0 + |h0| (c (1 + kappa beta0/(1-d)) + m))`.
pub fn dgamma_ceiling(p: &GainBoundsProblem) -> f64 {
    let denom = p.beta0 * p.x0_norm + p.h0.abs() * (p.c * (1.0 + p.kappa * p.beta0 / (1.0 - p.d)) + p.m);
    (p.kappa - 1.0) / p.kappa / tau_star(p) * p.h0 / denom
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainBoundsResult {
    pub epsilon_min: f64,
    pub dgamma_max: f64,
    pub tau_star: f64,
}

pub fn bounds(p: &GainBoundsProblem) -> GainBoundsResult {
    GainBoundsResult {
        epsilon_min: epsilon_floor(p),
        dgamma_max: dgamma_ceiling(p),
        tau_star: tau_star(p),
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SynthOptions {
    pub horizon: f64,
    pub step: f64,
    /// Stop tracking crossings past `h0 / kappa^max_levels`.
    pub max_levels: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            horizon: 400.0,
            step: 1e-3,
            max_levels: 40,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Crossing {
    /// Level index i, for the level `h0 / kappa^i`.
    pub index: usize,
    /// Crossing time (linear interpolation between bracketing steps).
    pub time: f64,
    /// `T_i = t_i - t_{i-1}`.
    pub interval: f64,
}

#[derive(Clone, Debug)]
pub struct SynthReport {
    pub tau_star: f64,
    /// Integration step; also the timing resolution of the crossings.
    pub step: f64,
    pub crossings: Vec<Crossing>,
    pub h_min: f64,
    pub h_max: f64,
    pub x_max: f64,
    /// `h` stayed inside `[0, h0]` for the whole run.
    pub h_bounded: bool,
    /// Every measured interval satisfied `T_i >= tau* - step`.
    pub intervals_ok: bool,
    /// Time of numerical blow-up, if the integration left finite floats.
    pub diverged: Option<f64>,
    /// No crossings inside the horizon (reported, not failed).
    pub no_crossings: bool,
    pub pass: bool,
}

/// Empirical check of the interconnection conclusions on the tightest
/// realization inside the hypothesis class:
///
/// ```text
/// x' = -a (x - c |h| - delta),        x(0) = x0_norm,
/// h' = -dgamma (||x + d(t)||_eps + m |h|),  h(0) = h0,   d(t) = delta_d sin t,
/// ```
///
/// which satisfies the envelope bound for every start time (variation of
/// constants) and takes the integral inequality with equality. Crossings
/// of `h0 / kappa^i` are located by sign change with linear
/// interpolation; the report states whether `h` stayed in `[0, h0]` and
/// every interval cleared `tau*` within one step of timing resolution.
pub fn synth_verify(
    p: &GainBoundsProblem,
    dgamma: f64,
    epsilon: f64,
    opts: &SynthOptions,
) -> SynthReport {
    let ts = tau_star(p);
    let steps = (opts.horizon / opts.step) as usize;
    let mut state = [p.x0_norm, p.h0];
    let mut ws = Rk4Workspace::new(2);
    let mut field = |t: f64, z: &[f64], out: &mut [f64]| {
        let disturbed = z[0] + p.delta_d * libm::sin(t);
        out[0] = -p.a * (z[0] - p.c * z[1].abs() - p.delta);
        out[1] = -dgamma * (deadzone(disturbed, epsilon) + p.m * z[1].abs());
    };

    let mut crossings = Vec::new();
    let mut level_idx = 1usize;
    let mut t_prev_cross = 0.0;
    let mut h_min = p.h0;
    let mut h_max = p.h0;
    let mut x_max = p.x0_norm;
    let mut diverged = None;

    let mut t = 0.0;
    for k in 0..steps {
        let h_before = state[1];
        rk4_step(&mut field, t, opts.step, &mut state, &mut ws);
        let t_next = opts.step * (k + 1) as f64;
        if !(state[0].is_finite() && state[1].is_finite()) {
            diverged = Some(t_next);
            break;
        }
        while level_idx <= opts.max_levels {
            let level = p.h0 * libm::pow(1.0 / p.kappa, level_idx as f64);
            if h_before > level && state[1] <= level {
                let frac = (h_before - level) / (h_before - state[1]);
                let t_cross = t + opts.step * frac;
                crossings.push(Crossing {
                    index: level_idx,
                    time: t_cross,
                    interval: t_cross - t_prev_cross,
                });
                t_prev_cross = t_cross;
                level_idx += 1;
            } else {
                break;
            }
        }
        h_min = h_min.min(state[1]);
        h_max = h_max.max(state[1]);
        x_max = x_max.max(state[0].abs());
        t = t_next;
    }

    let h_bounded = diverged.is_none() && h_min >= 0.0 && h_max <= p.h0 + 1e-12;
    let intervals_ok = crossings.iter().all(|c| c.interval >= ts - opts.step);
    let no_crossings = crossings.is_empty();
    SynthReport {
        tau_star: ts,
        step: opts.step,
        h_min,
        h_max,
        x_max,
        h_bounded,
        intervals_ok,
        diverged,
        no_crossings,
        pass: h_bounded && intervals_ok && diverged.is_none(),
        crossings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked_problem() -> GainBoundsProblem {
        GainBoundsProblem {
            beta0: 2.0,
            a: 1.0,
            c: 1.0,
            delta: 0.1,
            m: 1.0,
            delta_d: 0.0,
            kappa: 2.0,
            d: 0.5,
            x0_norm: 1.0,
            h0: 1.0,
        }
    }

    #[test]
    fn epsilon_floor_values() {
        let mut p = worked_problem();
        assert!((epsilon_floor(&p) - 0.3666666666666667).abs() < 1e-12);
        p.delta = 0.0;
        assert_eq!(epsilon_floor(&p), 0.0);
        p.delta_d = 0.3;
        assert_eq!(epsilon_floor(&p), 0.3);
    }

    #[test]
    fn tau_star_values() {
        let p = worked_problem();
        assert!((tau_star(&p) - libm::log(8.0)).abs() < 1e-12);
        let mut p2 = p;
        p2.a = 2.0;
        assert!((tau_star(&p2) - libm::log(8.0) / 2.0).abs() < 1e-12);
        let mut p3 = p;
        p3.beta0 = 1.0;
        assert!((tau_star(&p3) - libm::log(4.0)).abs() < 1e-12);
    }

    #[test]
    fn dgamma_ceiling_values() {
        let p = worked_problem();
        // 0.5 / (ln 8 * 12)
        assert!((dgamma_ceiling(&p) - 0.5 / (libm::log(8.0) * 12.0)).abs() < 1e-12);
        assert!((dgamma_ceiling(&p) - 0.020037).abs() < 1e-5);
        let mut tiny_budget = p;
        tiny_budget.h0 = 1e-12;
        assert!(dgamma_ceiling(&tiny_budget) < 1e-11);
        let mut far_start = p;
        far_start.x0_norm = 1e9;
        assert!(dgamma_ceiling(&far_start) < 1e-9);
    }

    #[test]
    fn ceiling_scale_invariance() {
        // jointly scaling (h0, x0) leaves the ceiling invariant
        let p = worked_problem();
        for alpha in [0.25, 3.0, 17.5] {
            let mut q = p;
            q.h0 *= alpha;
            q.x0_norm *= alpha;
            let rel = (dgamma_ceiling(&q) - dgamma_ceiling(&p)).abs() / dgamma_ceiling(&p);
            assert!(rel < 1e-12, "alpha={alpha} rel={rel}");
        }
    }

    #[test]
    fn monotonicity_samples() {
        let p = worked_problem();
        for (bump, expect_floor_up) in [
            (GainBoundsProblem { delta: 0.2, ..p }, true),
            (GainBoundsProblem { delta_d: 0.1, ..p }, true),
            (GainBoundsProblem { beta0: 3.0, ..p }, true),
            (GainBoundsProblem { d: 0.8, ..p }, true),
            (GainBoundsProblem { kappa: 4.0, ..p }, false),
        ] {
            let (f0, f1) = (epsilon_floor(&p), epsilon_floor(&bump));
            if expect_floor_up {
                assert!(f1 >= f0);
            } else {
                assert!(f1 <= f0);
            }
        }
        assert!(dgamma_ceiling(&GainBoundsProblem { c: 2.0, ..p }) <= dgamma_ceiling(&p));
        assert!(dgamma_ceiling(&GainBoundsProblem { m: 2.0, ..p }) <= dgamma_ceiling(&p));
        assert!(
            dgamma_ceiling(&GainBoundsProblem { x0_norm: 2.0, ..p }) <= dgamma_ceiling(&p)
        );
    }

    #[test]
    fn validation() {
        assert!(worked_problem().validate().is_ok());
        let mut bad = worked_problem();
        bad.kappa = 1.0;
        assert!(bad.validate().is_err());
        bad = worked_problem();
        bad.d = 1.0;
        assert!(bad.validate().is_err());
        bad = worked_problem();
        bad.beta0 = 0.5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn synth_compliant_parameters_pass() {
        let p = worked_problem();
        let opts = SynthOptions {
            horizon: 120.0,
            step: 1e-3,
            max_levels: 30,
        };
        let rep = synth_verify(&p, 0.02, 0.37, &opts);
        assert!(rep.pass);
        assert!(!rep.no_crossings);
        assert!(rep.h_bounded);
        assert!(rep.intervals_ok);
        for c in &rep.crossings {
            assert!(c.interval >= rep.tau_star - opts.step);
        }
    }

    #[test]
    fn synth_no_disturbance_keeps_h_monotone() {
        let mut p = worked_problem();
        p.delta = 0.0;
        let rep = synth_verify(&p, 0.02, 0.1, &SynthOptions::default());
        assert!(rep.h_bounded);
        assert!(rep.pass);
    }

    #[test]
    fn synth_short_horizon_reports_no_crossings() {
        let p = worked_problem();
        let opts = SynthOptions {
            horizon: 0.5,
            step: 1e-3,
            max_levels: 10,
        };
        let rep = synth_verify(&p, 0.02, 0.37, &opts);
        assert!(rep.no_crossings);
        assert!(rep.pass, "absence of crossings is reported, not failed");
    }

    #[test]
    fn synth_overdriven_gain_violates_tau_star() {
        let p = worked_problem();
        let opts = SynthOptions {
            horizon: 60.0,
            step: 1e-4,
            max_levels: 12,
        };
        // 100x above the ceiling: crossing intervals collapse below tau*.
        let rep = synth_verify(&p, 2.004, 0.37, &opts);
        assert!(!rep.crossings.is_empty());
        assert!(!rep.intervals_ok);
        assert!(!rep.pass);
    }
}
