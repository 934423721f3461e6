//! The adaptive observer.
//!
//! Three coupled pieces run against the measured output `y`:
//!
//! * an auxiliary filter `M' = (A - B C^T A) M + (I - B C^T) Psi`, whose
//!   second row combines with the regressor's first row into the gradient
//!   regressor `phi`;
//! * a certainty-equivalent estimator
//!   `zeta' = A zeta + l (y_hat - y) + B phi^T theta_hat + g` with the
//!   gradient law `theta_hat' = -gamma_theta (y_hat - y) phi`, and the
//!   state estimate `x_hat = zeta + M theta_hat`;
//! * one gated limit-cycle oscillator per nonlinear parameter. Each pair
//!   `(s_{2j-1}, s_{2j})` rotates on the unit circle at rate
//!   `gamma * sigma(upsilon) * omega_j`, where the gate input `upsilon`
//!   is the dead-zoned output error plus the dead-zoned constraint
//!   penalty; the estimate `lambda_hat_j` is an affine read-out of
//!   `s_{2j-1}` onto its search interval. When everything the observer
//!   can see is inside the dead zones the gate is exactly zero and the
//!   search freezes in place.
//!
//! The frequencies `omega_j` must be rationally independent so the search
//! phases wind densely; `make_omegas` uses square roots of distinct
//! primes.

use alloc::vec::Vec;
use core::fmt;

use crate::constraints::ConstraintSpec;
use crate::harness::ClosedLoopRun;
use crate::linalg::{dot, eigenvalues, Mat};
use crate::norms::deadzone;
use crate::plant::{state_to_canonical, to_canonical, Regressor, RowatRegressor};
use crate::poly::hurwitz;

/// Shape of the gate nonlinearity `sigma(u) = bound * tanh(slope * u / bound)`:
/// zero at zero, strictly positive for positive input, globally bounded by
/// `bound`, and never above `slope * u`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SigmaSpec {
    pub bound: f64,
    pub slope: f64,
}

impl Default for SigmaSpec {
    fn default() -> Self {
        SigmaSpec { bound: 1.0, slope: 1.0 }
    }
}

#[inline]
pub fn sigma_gate(spec: &SigmaSpec, upsilon: f64) -> f64 {
    debug_assert!(upsilon >= 0.0);
    spec.bound * libm::tanh(spec.slope * upsilon / spec.bound)
}

/// Rationally independent positive frequencies for `p` search
/// oscillators: square roots of the first `p` primes, scaled so the
/// largest is one.
pub fn make_omegas(p: usize) -> Vec<f64> {
    assert!(p >= 1);
    let primes = first_primes(p);
    let top = libm::sqrt(primes[p - 1] as f64);
    primes
        .iter()
        .map(|&q| libm::sqrt(q as f64) / top)
        .collect()
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut n = 2u64;
    while out.len() < count {
        if out.iter().all(|&p| n % p != 0) {
            out.push(n);
        }
        n += 1;
    }
    out
}

/// Affine read-out of the oscillator coordinates onto the search box:
/// `lambda_hat_j = lo_j + (hi_j - lo_j)/2 * (s_{2j-1} + 1)`.
#[inline]
pub fn lambda_decode(s: &[f64], boxes: &[[f64; 2]], out: &mut [f64]) {
    for (j, iv) in boxes.iter().enumerate() {
        out[j] = iv[0] + 0.5 * (iv[1] - iv[0]) * (s[2 * j] + 1.0);
    }
}

/// The gated rotation field. `gate_value` is `sigma(upsilon)`; the radial
/// term vanishes on the unit circle, so the motion there is a pure
/// rotation at angular rate `gamma * gate_value * omega_j`.
#[inline]
pub fn oscillator_field(s: &[f64], gate_value: f64, gamma: f64, omega: &[f64], out: &mut [f64]) {
    for (j, &w) in omega.iter().enumerate() {
        let (a, b) = (s[2 * j], s[2 * j + 1]);
        let r2 = a * a + b * b;
        let drive = gamma * gate_value * w;
        out[2 * j] = drive * (a - b - a * r2);
        out[2 * j + 1] = drive * (a + b - b * r2);
    }
}

/// The constant filter matrices built from `b`: `F = A - B C^T A` and
/// `P = I - B C^T` with `B = col(1, b)`. Both have an exactly zero first
/// row, which is what pins the filter's first row at zero.
pub fn filter_matrices(b: &[f64]) -> (Mat, Mat) {
    let n = b.len() + 1;
    let mut f_mat = Mat::zeros(n, n);
    let mut p_mat = Mat::zeros(n, n);
    for i in 0..n {
        let b_i = if i == 0 { 1.0 } else { b[i - 1] };
        if i + 1 < n {
            f_mat[(i, i + 1)] = 1.0;
        }
        f_mat[(i, 1)] -= b_i;
        p_mat[(i, i)] = 1.0;
        p_mat[(i, 0)] -= b_i;
    }
    (f_mat, p_mat)
}

/// Gradient regressor `phi^T = C^T A M + C^T Psi`: with the shift-form
/// `A` this is row 2 of the filter plus row 1 of the regressor.
#[inline]
pub fn phi(m: &Mat, psi: &Mat, out: &mut [f64]) {
    debug_assert!(m.rows() >= 2);
    let m_row = m.row(1);
    let psi_row = psi.row(0);
    for j in 0..out.len() {
        out[j] = m_row[j] + psi_row[j];
    }
}

/// Full observer state.
#[derive(Clone, Debug, PartialEq)]
pub struct ObserverState {
    /// Auxiliary filter matrix, n x m; first row stays identically zero.
    pub filter: Mat,
    pub zeta: Vec<f64>,
    pub theta: Vec<f64>,
    /// Oscillator coordinates, one `(cos, sin)`-like pair per nonlinear
    /// parameter.
    pub s: Vec<f64>,
}

impl ObserverState {
    /// Initial state: zero filter, given estimates, oscillators placed on
    /// the unit circle at the given phases.
    pub fn init(n: usize, m: usize, zeta0: &[f64], theta0: &[f64], phases: &[f64]) -> Self {
        assert_eq!(zeta0.len(), n);
        assert_eq!(theta0.len(), m);
        let mut s = Vec::with_capacity(2 * phases.len());
        for &ph in phases {
            s.push(libm::cos(ph));
            s.push(libm::sin(ph));
        }
        ObserverState {
            filter: Mat::zeros(n, m),
            zeta: zeta0.to_vec(),
            theta: theta0.to_vec(),
            s,
        }
    }

    pub fn dim(n: usize, m: usize, p: usize) -> usize {
        n * m + n + m + 2 * p
    }

    /// Flat layout used for integration: `[M column-major | zeta | theta | s]`.
    pub fn pack(&self, out: &mut [f64]) {
        let (n, m) = (self.filter.rows(), self.filter.cols());
        assert_eq!(out.len(), Self::dim(n, m, self.s.len() / 2));
        for c in 0..m {
            for r in 0..n {
                out[c * n + r] = self.filter[(r, c)];
            }
        }
        let base = n * m;
        out[base..base + n].copy_from_slice(&self.zeta);
        out[base + n..base + n + m].copy_from_slice(&self.theta);
        out[base + n + m..].copy_from_slice(&self.s);
    }

    pub fn unpack(flat: &[f64], n: usize, m: usize, p: usize) -> Self {
        assert_eq!(flat.len(), Self::dim(n, m, p));
        let mut filter = Mat::zeros(n, m);
        for c in 0..m {
            for r in 0..n {
                filter[(r, c)] = flat[c * n + r];
            }
        }
        let base = n * m;
        ObserverState {
            filter,
            zeta: flat[base..base + n].to_vec(),
            theta: flat[base + n..base + n + m].to_vec(),
            s: flat[base + n + m..].to_vec(),
        }
    }
}

/// `x_hat = zeta + M theta_hat`. Its first component equals `y_hat`
/// because the filter's first row is zero.
pub fn xhat_compose(state: &ObserverState) -> Vec<f64> {
    let n = state.filter.rows();
    let mut out = alloc::vec![0.0; n];
    state.filter.mul_vec(&state.theta, &mut out);
    for i in 0..n {
        out[i] += state.zeta[i];
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub enum ObserverConfigError {
    NotHurwitzB,
    InjectionNotStabilizing,
    BadDimension { what: &'static str, got: usize, want: usize },
    NonPositive { what: &'static str, value: f64 },
    EmptyInterval { index: usize },
}

impl fmt::Display for ObserverConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObserverConfigError::NotHurwitzB => write!(f, "filter coefficients b are not Hurwitz"),
            ObserverConfigError::InjectionNotStabilizing => {
                write!(f, "A + l C^T is not Hurwitz for the given injection gain l")
            }
            ObserverConfigError::BadDimension { what, got, want } => {
                write!(f, "{what} has length {got}, expected {want}")
            }
            ObserverConfigError::NonPositive { what, value } => {
                write!(f, "{what} must be positive (got {value})")
            }
            ObserverConfigError::EmptyInterval { index } => {
                write!(f, "lambda interval {index} has min > max")
            }
        }
    }
}

impl core::error::Error for ObserverConfigError {}

/// All observer gains and structural data.
#[derive(Clone, Debug)]
pub struct ObserverConfig {
    /// Filter coefficients `b_1..b_{n-1}`; must be Hurwitz.
    pub b: Vec<f64>,
    /// Output-injection gain, length n; `A + l C^T` must be Hurwitz.
    pub l: Vec<f64>,
    /// Gradient adaptation gain.
    pub gamma_theta: f64,
    /// Search gain of the oscillator bank.
    pub gamma: f64,
    /// Dead-zone width applied to the output error and the penalty.
    pub epsilon: f64,
    pub sigma: SigmaSpec,
    /// Oscillator frequencies, one per nonlinear parameter.
    pub omega: Vec<f64>,
    /// Search intervals for the nonlinear parameters. A degenerate
    /// interval pins the corresponding estimate.
    pub lambda_box: Vec<[f64; 2]>,
    /// Project the oscillator pairs back to the unit circle after each
    /// step. The circle is invariant analytically; this removes the
    /// residual integrator drift on long runs.
    pub renormalize: bool,
}

impl ObserverConfig {
    pub fn n(&self) -> usize {
        self.b.len() + 1
    }

    pub fn p(&self) -> usize {
        self.lambda_box.len()
    }

    pub fn validate(&self) -> Result<(), ObserverConfigError> {
        if !hurwitz(&self.b) {
            return Err(ObserverConfigError::NotHurwitzB);
        }
        let n = self.n();
        if self.l.len() != n {
            return Err(ObserverConfigError::BadDimension {
                what: "l",
                got: self.l.len(),
                want: n,
            });
        }
        let mut closed = Mat::zeros(n, n);
        for i in 0..n {
            if i + 1 < n {
                closed[(i, i + 1)] = 1.0;
            }
            closed[(i, 0)] += self.l[i];
        }
        if !eigenvalues(&closed).iter().all(|z| z.re < 0.0) {
            return Err(ObserverConfigError::InjectionNotStabilizing);
        }
        for (what, v) in [
            ("gamma_theta", self.gamma_theta),
            ("gamma", self.gamma),
            ("epsilon", self.epsilon),
            ("sigma bound", self.sigma.bound),
            ("sigma slope", self.sigma.slope),
        ] {
            if !(v > 0.0) {
                return Err(ObserverConfigError::NonPositive { what, value: v });
            }
        }
        if self.omega.len() != self.p() {
            return Err(ObserverConfigError::BadDimension {
                what: "omega",
                got: self.omega.len(),
                want: self.p(),
            });
        }
        for &w in &self.omega {
            if !(w > 0.0) {
                return Err(ObserverConfigError::NonPositive {
                    what: "omega",
                    value: w,
                });
            }
        }
        for (j, iv) in self.lambda_box.iter().enumerate() {
            if iv[0] > iv[1] {
                return Err(ObserverConfigError::EmptyInterval { index: j });
            }
        }
        Ok(())
    }
}

/// Per-step gate diagnostics.
#[derive(Clone, Debug)]
pub struct GateSample {
    pub y_hat: f64,
    pub lambda_hat: Vec<f64>,
    /// Penalty value as seen by the gate (zero without a constraint).
    pub pi: f64,
    /// Gate input `deadzone(|y - y_hat|) + deadzone(pi)`.
    pub upsilon: f64,
    /// `sigma(upsilon)`, the rotation-rate multiplier.
    pub gate: f64,
}

/// Evaluates the observer vector field on the flat state layout with
/// preallocated scratch, so the integration loop stays allocation-free.
pub struct ObserverDynamics<'a, R: Regressor> {
    cfg: &'a ObserverConfig,
    regressor: &'a R,
    constraint: Option<&'a ConstraintSpec>,
    n: usize,
    m: usize,
    p: usize,
    /// `A - B C^T A`; its first row is exactly zero, which keeps the
    /// filter's first row pinned at zero through every RK4 stage.
    f_mat: Mat,
    /// `I - B C^T`; first row likewise zero.
    p_mat: Mat,
    b_full: Vec<f64>,
    psi: Mat,
    g: Vec<f64>,
    phi: Vec<f64>,
    lambda_hat: Vec<f64>,
    margins: Vec<f64>,
}

impl<'a, R: Regressor> ObserverDynamics<'a, R> {
    pub fn new(
        cfg: &'a ObserverConfig,
        regressor: &'a R,
        constraint: Option<&'a ConstraintSpec>,
    ) -> Result<Self, ObserverConfigError> {
        cfg.validate()?;
        let n = regressor.n();
        let m = regressor.m();
        let p = regressor.p();
        if cfg.n() != n {
            return Err(ObserverConfigError::BadDimension {
                what: "b",
                got: cfg.n(),
                want: n,
            });
        }
        if cfg.p() != p {
            return Err(ObserverConfigError::BadDimension {
                what: "lambda_box",
                got: cfg.p(),
                want: p,
            });
        }
        let mut b_full = Vec::with_capacity(n);
        b_full.push(1.0);
        b_full.extend_from_slice(&cfg.b);
        let (f_mat, p_mat) = filter_matrices(&cfg.b);
        Ok(ObserverDynamics {
            cfg,
            regressor,
            constraint,
            n,
            m,
            p,
            f_mat,
            p_mat,
            b_full,
            psi: Mat::zeros(n, m),
            g: alloc::vec![0.0; n],
            phi: alloc::vec![0.0; m],
            lambda_hat: alloc::vec![0.0; p],
            margins: Vec::new(),
        })
    }

    pub fn state_dim(&self) -> usize {
        ObserverState::dim(self.n, self.m, self.p)
    }

    fn gate_input(&mut self, y: f64, y_hat: f64, theta: &[f64]) -> (f64, f64) {
        let pi = match self.constraint {
            Some(spec) => {
                let lambda = &self.lambda_hat;
                spec.eval(theta, lambda, &mut self.margins).value
            }
            None => 0.0,
        };
        let upsilon = deadzone(y - y_hat, self.cfg.epsilon) + deadzone(pi, self.cfg.epsilon);
        (pi, upsilon)
    }

    /// Observer vector field on the flat layout `[M col-major | zeta | theta | s]`.
    pub fn field(&mut self, t: f64, y: f64, u: f64, state: &[f64], out: &mut [f64]) {
        let (n, m) = (self.n, self.m);
        let nm = n * m;
        debug_assert_eq!(state.len(), self.state_dim());
        let (zeta, theta, s) = (
            &state[nm..nm + n],
            &state[nm + n..nm + n + m],
            &state[nm + n + m..],
        );
        lambda_decode(s, &self.cfg.lambda_box, &mut self.lambda_hat);
        self.regressor.psi(t, &self.lambda_hat, y, &mut self.psi);
        self.regressor.g(t, &self.lambda_hat, y, u, &mut self.g);

        // filter: M' = F M + P Psi, column by column
        for c in 0..m {
            let mcol = &state[c * n..(c + 1) * n];
            for i in 0..n {
                let mut acc = dot(self.f_mat.row(i), mcol);
                for k in 0..n {
                    acc += self.p_mat[(i, k)] * self.psi[(k, c)];
                }
                out[c * n + i] = acc;
            }
        }

        // phi = (row 2 of M) + (row 1 of Psi); column-major row 2 = index 1
        for j in 0..m {
            self.phi[j] = state[j * n + 1] + self.psi[(0, j)];
        }

        let y_hat = zeta[0];
        let err = y_hat - y;
        let phi_theta = dot(&self.phi, theta);
        for i in 0..n {
            let shift = if i + 1 < n { zeta[i + 1] } else { 0.0 };
            out[nm + i] = shift + self.cfg.l[i] * err + self.b_full[i] * phi_theta + self.g[i];
        }
        for j in 0..m {
            out[nm + n + j] = -self.cfg.gamma_theta * err * self.phi[j];
        }

        let (_pi, upsilon) = self.gate_input(y, y_hat, theta);
        let gate = sigma_gate(&self.cfg.sigma, upsilon);
        oscillator_field(s, gate, self.cfg.gamma, &self.cfg.omega, &mut out[nm + n + m..]);
    }

    /// Gate diagnostics at a state, for recording.
    pub fn sample(&mut self, t: f64, y: f64, state: &[f64]) -> GateSample {
        let (n, m) = (self.n, self.m);
        let nm = n * m;
        let (zeta, theta, s) = (
            &state[nm..nm + n],
            &state[nm + n..nm + n + m],
            &state[nm + n + m..],
        );
        lambda_decode(s, &self.cfg.lambda_box, &mut self.lambda_hat);
        // phi is not needed, but psi feeds nothing here; only the gate.
        let _ = t;
        let y_hat = zeta[0];
        let (pi, upsilon) = self.gate_input(y, y_hat, theta);
        GateSample {
            y_hat,
            lambda_hat: self.lambda_hat.clone(),
            pi,
            upsilon,
            gate: sigma_gate(&self.cfg.sigma, upsilon),
        }
    }

    /// Normalize each oscillator pair back onto the unit circle.
    pub fn renormalize(&self, state: &mut [f64]) {
        let base = self.n * self.m + self.n + self.m;
        for j in 0..self.p {
            let a = state[base + 2 * j];
            let b = state[base + 2 * j + 1];
            let r = libm::hypot(a, b);
            if r > 0.0 {
                state[base + 2 * j] = a / r;
                state[base + 2 * j + 1] = b / r;
            }
        }
    }
}

/// Allocating single-shot evaluation of the observer field on structured
/// state, mirroring the integration path exactly.
pub fn observer_field<R: Regressor>(
    cfg: &ObserverConfig,
    regressor: &R,
    constraint: Option<&ConstraintSpec>,
    y: f64,
    u: f64,
    state: &ObserverState,
    t: f64,
) -> ObserverState {
    let mut dyn_ = ObserverDynamics::new(cfg, regressor, constraint).expect("invalid config");
    let dim = dyn_.state_dim();
    let mut flat = alloc::vec![0.0; dim];
    let mut out = alloc::vec![0.0; dim];
    state.pack(&mut flat);
    dyn_.field(t, y, u, &flat, &mut out);
    ObserverState::unpack(&out, regressor.n(), regressor.m(), regressor.p())
}

#[derive(Clone, Debug, PartialEq)]
pub enum ResidualError {
    TooShort { samples: usize },
}

impl fmt::Display for ResidualError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResidualError::TooShort { samples } => {
                write!(f, "need at least 3 samples for centered differences, got {samples}")
            }
        }
    }
}

impl core::error::Error for ResidualError {}

#[derive(Clone, Copy, Debug)]
pub struct ResidualReport {
    /// Largest norm discrepancy between the finite-difference derivative
    /// of the error coordinates and the error-system right-hand side.
    pub max_residual: f64,
    pub at_time: f64,
    pub samples: usize,
}

/// Cross-validates a recorded closed-loop run against the error system
///
/// ```text
/// e1' = (A + l C^T) e1 + B phi^T e2 + vtilde,   e2' = -gamma_theta phi e1_1,
/// ```
///
/// with `e1 = zeta - x + M theta`, `e2 = theta_hat - theta` and
/// `vtilde = (Psi(lambda_hat) - Psi(lambda)) theta - xi`. Centered finite
/// differences of the recorded errors are compared against the right-hand
/// side at every interior sample; the report carries the worst
/// discrepancy, which shrinks as the square of the recording step.
pub fn residual_check(
    run: &ClosedLoopRun,
    sc: &crate::harness::RowatScenario,
) -> Result<ResidualReport, ResidualError> {
    if run.len() < 3 {
        return Err(ResidualError::TooShort { samples: run.len() });
    }
    let reg = RowatRegressor;
    let (n, m) = (reg.n(), reg.m());
    let truth = to_canonical(&sc.plant);
    let theta_true = truth.theta;
    let lambda_true = [truth.lambda];

    let h = run.h;
    let count = run.len();
    // error coordinates along the run
    let mut e = Mat::zeros(count, n + m);
    for i in 0..count {
        let st = run.observer_state(i);
        let x = state_to_canonical(&sc.plant, [run.v(i), run.q(i)]);
        let row = e.row_mut(i);
        for r in 0..n {
            row[r] = st.zeta[r] - x[r] + dot(st.filter.row(r), &theta_true);
        }
        for j in 0..m {
            row[n + j] = st.theta[j] - theta_true[j];
        }
    }

    let mut psi_hat = Mat::zeros(n, m);
    let mut psi_true = Mat::zeros(n, m);
    let mut xi = alloc::vec![0.0; n];
    let mut phi_buf = alloc::vec![0.0; m];
    let mut max_residual = 0.0;
    let mut at_time = run.time(1);
    for i in 1..count - 1 {
        let t = run.time(i);
        let y = run.v(i);
        let st = run.observer_state(i);
        let lam_hat = run.lambda_hat(i);
        reg.psi(t, lam_hat, y, &mut psi_hat);
        reg.psi(t, &lambda_true, y, &mut psi_true);
        sc.disturbance.eval(t, sc.disturbance_bound, &mut xi);
        phi(&st.filter, &psi_hat, &mut phi_buf);

        let ei = e.row(i);
        let phi_e2 = dot(&phi_buf, &ei[n..]);
        // residual at this sample as a 2-norm over all error components
        let mut sum = 0.0;
        for r in 0..n {
            let shift = if r + 1 < n { ei[r + 1] } else { 0.0 };
            let b_r = if r == 0 { 1.0 } else { sc.observer.b[r - 1] };
            let vtilde = dot(psi_hat.row(r), &theta_true) - dot(psi_true.row(r), &theta_true) - xi[r];
            let rhs = shift + sc.observer.l[r] * ei[0] + b_r * phi_e2 + vtilde;
            let fd = (e.row(i + 1)[r] - e.row(i - 1)[r]) / (2.0 * h);
            sum += (fd - rhs) * (fd - rhs);
        }
        for j in 0..m {
            let rhs = -sc.observer.gamma_theta * phi_buf[j] * ei[0];
            let fd = (e.row(i + 1)[n + j] - e.row(i - 1)[n + j]) / (2.0 * h);
            sum += (fd - rhs) * (fd - rhs);
        }
        let res = libm::sqrt(sum);
        if res > max_residual {
            max_residual = res;
            at_time = t;
        }
    }
    Ok(ResidualReport {
        max_residual,
        at_time,
        samples: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::RowatRegressor;
    use alloc::vec;

    fn test_config() -> ObserverConfig {
        ObserverConfig {
            b: vec![1.0],
            l: vec![-2.0, -1.0],
            gamma_theta: 4.0,
            gamma: 0.002,
            epsilon: 0.01,
            sigma: SigmaSpec::default(),
            omega: vec![1.0],
            lambda_box: vec![[1.0, 3.0]],
            renormalize: true,
        }
    }

    #[test]
    fn sigma_gate_shape() {
        let s = SigmaSpec { bound: 1.0, slope: 1.0 };
        assert_eq!(sigma_gate(&s, 0.0), 0.0);
        let small = 0.05;
        assert!((sigma_gate(&s, small) - small).abs() / small < 0.01);
        assert!(sigma_gate(&s, 5.0) < 1.0);
        assert!(sigma_gate(&s, 5.0) > 0.999);
        assert!(sigma_gate(&s, 100.0) <= 1.0); // saturates to the bound in floats
        // never above slope * u
        for k in 1..50 {
            let u = 0.1 * k as f64;
            assert!(sigma_gate(&s, u) <= s.slope * u + 1e-15);
        }
    }

    #[test]
    fn omega_values() {
        assert_eq!(make_omegas(1), vec![1.0]);
        let w2 = make_omegas(2);
        assert!((w2[0] - libm::sqrt(2.0) / libm::sqrt(3.0)).abs() < 1e-15);
        assert_eq!(w2[1], 1.0);
        let w3 = make_omegas(3);
        assert!((w3[0] / w3[1] - libm::sqrt(2.0 / 3.0)).abs() < 1e-15);
        assert!((w3[1] / w3[2] - libm::sqrt(3.0 / 5.0)).abs() < 1e-15);
    }

    #[test]
    fn lambda_decode_endpoints() {
        let mut out = [0.0];
        lambda_decode(&[-1.0, 0.0], &[[1.0, 3.0]], &mut out);
        assert_eq!(out[0], 1.0);
        lambda_decode(&[1.0, 0.0], &[[1.0, 3.0]], &mut out);
        assert_eq!(out[0], 3.0);
        lambda_decode(&[0.0, 1.0], &[[1.0, 3.0]], &mut out);
        assert_eq!(out[0], 2.0);
    }

    #[test]
    fn oscillator_rotation_on_circle() {
        let mut out = [0.0; 2];
        // closed gate freezes the field
        oscillator_field(&[0.3, 0.8], 0.0, 0.002, &[1.0], &mut out);
        assert_eq!(out, [0.0, 0.0]);
        // unit drive at (1, 0): pure rotation (0, 1)
        oscillator_field(&[1.0, 0.0], 1.0, 1.0, &[1.0], &mut out);
        assert!((out[0]).abs() < 1e-15);
        assert!((out[1] - 1.0).abs() < 1e-15);
        // radial derivative vanishes on the circle
        let s = [libm::cos(0.7), libm::sin(0.7)];
        oscillator_field(&s, 0.5, 0.3, &[0.9], &mut out);
        let radial = s[0] * out[0] + s[1] * out[1];
        assert!(radial.abs() < 1e-15);
    }

    #[test]
    fn phi_is_filter_row_plus_regressor_row() {
        let mut out = [0.0; 4];
        phi(&Mat::zeros(2, 4), &crate::plant::rowat_psi(1.0, 2.0), &mut out);
        assert_eq!(out[0], 1.0);
        assert!((out[1] - libm::tanh(2.0)).abs() < 1e-15);
        assert_eq!(&out[2..], &[0.0, 0.0]);

        let mut m = Mat::zeros(2, 4);
        m.row_mut(1).copy_from_slice(&[0.1, 0.2, 0.3, 0.4]);
        phi(&m, &Mat::zeros(2, 4), &mut out);
        assert_eq!(out, [0.1, 0.2, 0.3, 0.4]);
    }

    #[test]
    fn xhat_first_component_is_yhat() {
        let mut st = ObserverState::init(2, 4, &[0.7, -0.5], &[1.0, 2.0, 3.0, 4.0], &[0.0]);
        st.filter.row_mut(1).copy_from_slice(&[1.0, 1.0, 1.0, 1.0]);
        let xh = xhat_compose(&st);
        assert_eq!(xh[0], st.zeta[0]);
        assert_eq!(xh[1], -0.5 + 10.0);
        // zero filter and zero theta leave zeta unchanged
        let st0 = ObserverState::init(2, 4, &[0.7, -0.5], &[0.0; 4], &[0.0]);
        assert_eq!(xhat_compose(&st0), st0.zeta);
    }

    #[test]
    fn pack_unpack_round_trip() {
        let mut st = ObserverState::init(2, 4, &[0.5, -1.5], &[1.0, -2.0, 3.0, -4.0], &[0.3]);
        st.filter.row_mut(1).copy_from_slice(&[9.0, 8.0, 7.0, 6.0]);
        let mut flat = vec![0.0; ObserverState::dim(2, 4, 1)];
        st.pack(&mut flat);
        assert_eq!(ObserverState::unpack(&flat, 2, 4, 1), st);
        // column-major: M[1][0] sits right after M[0][0]
        assert_eq!(flat[1], 9.0);
    }

    #[test]
    fn config_validation() {
        assert!(test_config().validate().is_ok());
        let mut bad = test_config();
        bad.b = vec![-1.0];
        assert_eq!(bad.validate(), Err(ObserverConfigError::NotHurwitzB));
        let mut bad_l = test_config();
        bad_l.l = vec![2.0, 1.0];
        assert_eq!(
            bad_l.validate(),
            Err(ObserverConfigError::InjectionNotStabilizing)
        );
        let mut bad_g = test_config();
        bad_g.gamma = 0.0;
        assert!(matches!(
            bad_g.validate(),
            Err(ObserverConfigError::NonPositive { .. })
        ));
    }

    #[test]
    fn filter_first_row_derivative_is_zero() {
        let cfg = test_config();
        let reg = RowatRegressor;
        let mut st = ObserverState::init(2, 4, &[0.3, 0.4], &[1.0, 1.0, 1.0, 1.0], &[0.25]);
        st.filter.row_mut(0).copy_from_slice(&[0.0; 4]);
        st.filter.row_mut(1).copy_from_slice(&[0.5, -0.5, 0.25, 0.1]);
        let d = observer_field(&cfg, &reg, None, 0.8, 0.0, &st, 1.0);
        for j in 0..4 {
            assert_eq!(d.filter[(0, j)], 0.0);
        }
    }

    #[test]
    fn closed_gate_freezes_search_but_not_estimator() {
        let cfg = test_config();
        let reg = RowatRegressor;
        let st = ObserverState::init(2, 4, &[0.8, 0.1], &[0.5; 4], &[1.0]);
        // y equals y_hat and no constraint: gate input is zero
        let d = observer_field(&cfg, &reg, None, 0.8, 0.0, &st, 0.0);
        assert_eq!(d.s, vec![0.0, 0.0]);
        assert!(d.filter.row(1).iter().any(|v| *v != 0.0));
        assert!(d.zeta.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn consistent_estimates_keep_output_derivative_matched() {
        // With M = 0, zeta = x, theta_hat = theta, lambda_hat = lambda the
        // first component of zeta' equals the first component of the
        // plant field.
        let p = crate::plant::RowatParams::reference();
        let c = crate::plant::to_canonical(&p);
        let mut cfg = test_config();
        cfg.lambda_box = vec![[c.lambda, c.lambda]]; // pins lambda_hat
        let reg = RowatRegressor;
        let vq = [0.9, 0.05];
        let x = crate::plant::state_to_canonical(&p, vq);
        let st = ObserverState::init(2, 4, &x, &c.theta, &[0.0]);
        let d = observer_field(&cfg, &reg, None, x[0], 0.0, &st, 0.0);
        let dx_phys = crate::plant::rowat_field(&p, vq);
        let dx1 = dx_phys[0]; // y' = V'
        assert!((d.zeta[0] - dx1).abs() < 1e-12);
        // theta frozen: zero output error
        assert!(d.theta.iter().all(|v| *v == 0.0));
    }
}
