//! Numerical excitation diagnostics.
//!
//! These are sampling checks of the excitation hypotheses behind the
//! observer's convergence, not proofs: finitely many windows, grid
//! points, and probes, with the coverage stated in the reports.
//!
//! * `upe_check` evaluates sliding-window Gramians of a regressor over a
//!   grid of the nonlinear parameter and reports the worst minimum
//!   eigenvalue.
//! * `eta_eval` / `wnpe_probe` evaluate the output-mismatch functional of
//!   a probe parameter pair against the true plant, including the
//!   companion-filtered correction term, and build an empirical lower
//!   envelope of window suprema versus distance to the set of
//!   output-indistinguishable parameters.
//! * `indist_score` measures how close a probe is to being
//!   output-indistinguishable along the observed trajectory.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::{dot, sym_eigvalues, Mat};
use crate::observer::filter_matrices;
use crate::ode::{rk4_step, Rk4Workspace};
use crate::plant::Regressor;
use crate::poly::{companion_pair, CompanionPair};

#[derive(Clone, Debug, PartialEq)]
pub enum ExcitationError {
    RunTooShort { have: f64, need: f64 },
    EmptyGrid,
    BadWindow { value: f64 },
    NotHurwitz,
}

impl fmt::Display for ExcitationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExcitationError::RunTooShort { have, need } => {
                write!(f, "run of length {have} too short (need at least {need})")
            }
            ExcitationError::EmptyGrid => write!(f, "empty probe/parameter grid"),
            ExcitationError::BadWindow { value } => write!(f, "bad window length {value}"),
            ExcitationError::NotHurwitz => write!(f, "filter coefficients are not Hurwitz"),
        }
    }
}

impl core::error::Error for ExcitationError {}

#[derive(Clone, Copy, Debug)]
pub struct UpeOptions {
    /// Window length in time units.
    pub window: f64,
    /// Window start spacing in samples.
    pub stride: usize,
    /// The check passes when the worst minimum eigenvalue exceeds this.
    pub threshold: f64,
}

#[derive(Clone, Debug)]
pub struct UpeRow {
    pub lambda: Vec<f64>,
    /// Minimum Gramian eigenvalue over all window starts at this lambda.
    pub mu: f64,
}

#[derive(Clone, Debug)]
pub struct UpeReport {
    pub window: f64,
    pub window_steps: usize,
    /// Sample spacing of the regressor recording (bounds the quadrature
    /// error of the trapezoid Gramians).
    pub grid_h: f64,
    pub threshold: f64,
    pub windows_per_lambda: usize,
    pub rows: Vec<UpeRow>,
    /// Minimum of `mu` over the lambda grid.
    pub mu_hat: f64,
    pub pass: bool,
}

/// Sliding-window Gramian check of a sampled regressor.
///
/// `phi_samples(lambda)` returns the regressor samples (rows) on a
/// uniform grid with spacing `h`; the same grid is used for every lambda.
/// Gramians are trapezoid-rule integrals over windows of `window` time
/// units, slid by `stride` samples; eigenvalues come from the symmetric
/// Jacobi solver.
pub fn upe_check<F>(
    phi_samples: F,
    lambda_grid: &[Vec<f64>],
    h: f64,
    opts: &UpeOptions,
) -> Result<UpeReport, ExcitationError>
where
    F: Fn(&[f64]) -> Mat,
{
    if lambda_grid.is_empty() {
        return Err(ExcitationError::EmptyGrid);
    }
    if !(opts.window > 0.0) || !(h > 0.0) {
        return Err(ExcitationError::BadWindow { value: opts.window });
    }
    let window_steps = libm::round(opts.window / h) as usize;
    if window_steps < 1 {
        return Err(ExcitationError::BadWindow { value: opts.window });
    }
    let stride = opts.stride.max(1);

    let mut rows = Vec::with_capacity(lambda_grid.len());
    let mut mu_hat = f64::INFINITY;
    let mut windows_per_lambda = 0;
    for lambda in lambda_grid {
        let samples = phi_samples(lambda);
        let count = samples.rows();
        let m = samples.cols();
        let have = (count.saturating_sub(1)) as f64 * h;
        if have < 2.0 * opts.window {
            return Err(ExcitationError::RunTooShort {
                have,
                need: 2.0 * opts.window,
            });
        }
        let mut mu = f64::INFINITY;
        let mut start = 0;
        let mut windows = 0;
        while start + window_steps < count {
            let mut gram = Mat::zeros(m, m);
            for k in start..=start + window_steps {
                let w = if k == start || k == start + window_steps {
                    0.5
                } else {
                    1.0
                };
                let row = samples.row(k);
                for i in 0..m {
                    let wi = w * row[i];
                    for j in 0..m {
                        gram[(i, j)] += wi * row[j];
                    }
                }
            }
            gram.scale(h);
            let eig = sym_eigvalues(&gram);
            mu = mu.min(eig[0]);
            windows += 1;
            start += stride;
        }
        windows_per_lambda = windows;
        mu_hat = mu_hat.min(mu);
        rows.push(UpeRow {
            lambda: lambda.clone(),
            mu,
        });
    }
    Ok(UpeReport {
        window: opts.window,
        window_steps,
        grid_h: h,
        threshold: opts.threshold,
        windows_per_lambda,
        rows,
        mu_hat,
        pass: mu_hat > opts.threshold,
    })
}

/// Internal state of the mismatch correction filter `z' = Lambda z + G w`,
/// `q = c_tilde . z`, built from the observer's `b`.
#[derive(Clone, Debug)]
pub struct EtaFilter {
    pub pair: CompanionPair,
    pub z: Vec<f64>,
}

impl EtaFilter {
    pub fn new(pair: CompanionPair) -> Self {
        let k = pair.n() - 1;
        EtaFilter {
            pair,
            z: alloc::vec![0.0; k],
        }
    }

    /// `out = Lambda z + G input`.
    pub fn derivative(&self, z: &[f64], input: &[f64], out: &mut [f64]) {
        let k = z.len();
        for i in 0..k {
            out[i] = dot(self.pair.lambda.row(i), z) + dot(self.pair.g.row(i), input);
        }
    }

    pub fn q(&self) -> f64 {
        dot(&self.pair.c_tilde, &self.z)
    }
}

/// Everything needed to rerun the true plant and co-integrate probe
/// filters along it.
pub struct RunContext<'a, R: Regressor> {
    pub regressor: &'a R,
    /// True plant dynamics in the caller's coordinates.
    pub plant_field: &'a dyn Fn(f64, &[f64], &mut [f64]),
    /// Measured output as a function of the plant state.
    pub output: &'a dyn Fn(&[f64]) -> f64,
    pub input: &'a dyn Fn(f64) -> f64,
    pub plant_dim: usize,
    pub x0: &'a [f64],
    pub t0: f64,
    pub h: f64,
    pub steps: usize,
    /// True parameters.
    pub theta: &'a [f64],
    pub lambda: &'a [f64],
    /// Observer filter coefficients (define the correction filter).
    pub b: &'a [f64],
}

struct ProbeSeries {
    /// |eta| sampled every `record_every` steps.
    eta_abs: Vec<f64>,
    /// sup over the run of the output-indistinguishability expression.
    indist_sup: f64,
}

fn probe_series<R: Regressor>(
    ctx: &RunContext<'_, R>,
    probe_lambda: &[f64],
    probe_theta: &[f64],
    record_every: usize,
) -> Result<ProbeSeries, ExcitationError> {
    let reg = ctx.regressor;
    let (n, m) = (reg.n(), reg.m());
    let pair = companion_pair(ctx.b).map_err(|_| ExcitationError::NotHurwitz)?;
    let filter = EtaFilter::new(pair);
    let (f_mat, p_mat) = filter_matrices(ctx.b);
    let pd = ctx.plant_dim;
    let zlen = n - 1;
    // flat state: [plant | M(lambda') column-major | z]
    let dim = pd + n * m + zlen;
    let mut state = alloc::vec![0.0; dim];
    state[..pd].copy_from_slice(ctx.x0);

    let mut psi_probe = Mat::zeros(n, m);
    let mut psi_true = Mat::zeros(n, m);
    let mut g_probe = alloc::vec![0.0; n];
    let mut g_true = alloc::vec![0.0; n];
    let mut w = alloc::vec![0.0; n];
    let mut b_full = alloc::vec![0.0; n];
    b_full[0] = 1.0;
    b_full[1..].copy_from_slice(ctx.b);

    let n_rec = ctx.steps / record_every + 1;
    let mut eta_abs = Vec::with_capacity(n_rec);
    let mut indist_sup = 0.0f64;

    let mut ws = Rk4Workspace::new(dim);
    // shared evaluation of the mismatch terms at a state
    let evaluate = |t: f64,
                        x: &[f64],
                        psi_probe: &mut Mat,
                        psi_true: &mut Mat,
                        g_probe: &mut [f64],
                        g_true: &mut [f64],
                        w: &mut [f64]|
     -> (f64, f64) {
        let y = (ctx.output)(x);
        let u = (ctx.input)(t);
        reg.psi(t, probe_lambda, y, psi_probe);
        reg.psi(t, ctx.lambda, y, psi_true);
        reg.g(t, probe_lambda, y, u, g_probe);
        reg.g(t, ctx.lambda, y, u, g_true);
        // w = (Psi' - Psi) theta + g' - g
        for i in 0..n {
            w[i] = dot(psi_probe.row(i), ctx.theta) - dot(psi_true.row(i), ctx.theta)
                + g_probe[i]
                - g_true[i];
        }
        // phi(lambda') = M row 2 + Psi'(row 1)
        let mut phi_dtheta = 0.0;
        for j in 0..m {
            let phi_j = x[pd + j * n + 1] + psi_probe[(0, j)];
            phi_dtheta += phi_j * (probe_theta[j] - ctx.theta[j]);
        }
        // indistinguishability expression: B phi^T dtheta + w
        let mut sq = 0.0;
        for i in 0..n {
            let v = b_full[i] * phi_dtheta + w[i];
            sq += v * v;
        }
        let z = &x[pd + n * m..];
        let eta = phi_dtheta + w[0] + dot(&filter.pair.c_tilde, z);
        (eta, libm::sqrt(sq))
    };

    {
        let (eta, ind) = evaluate(
            ctx.t0,
            &state,
            &mut psi_probe,
            &mut psi_true,
            &mut g_probe,
            &mut g_true,
            &mut w,
        );
        eta_abs.push(eta.abs());
        indist_sup = indist_sup.max(ind);
    }

    for k in 0..ctx.steps {
        let t = ctx.t0 + ctx.h * k as f64;
        rk4_step(
            &mut |t: f64, x: &[f64], dx: &mut [f64]| {
                (ctx.plant_field)(t, &x[..pd], &mut dx[..pd]);
                let y = (ctx.output)(&x[..pd]);
                let u = (ctx.input)(t);
                reg.psi(t, probe_lambda, y, &mut psi_probe);
                for c in 0..m {
                    let mcol = &x[pd + c * n..pd + (c + 1) * n];
                    for i in 0..n {
                        let mut acc = dot(f_mat.row(i), mcol);
                        for kk in 0..n {
                            acc += p_mat[(i, kk)] * psi_probe[(kk, c)];
                        }
                        dx[pd + c * n + i] = acc;
                    }
                }
                reg.psi(t, ctx.lambda, y, &mut psi_true);
                reg.g(t, probe_lambda, y, u, &mut g_probe);
                reg.g(t, ctx.lambda, y, u, &mut g_true);
                for i in 0..n {
                    w[i] = dot(psi_probe.row(i), ctx.theta) - dot(psi_true.row(i), ctx.theta)
                        + g_probe[i]
                        - g_true[i];
                }
                let z = &x[pd + n * m..];
                filter.derivative(z, &w, &mut dx[pd + n * m..]);
            },
            t,
            ctx.h,
            &mut state,
            &mut ws,
        );
        if (k + 1) % record_every == 0 || k + 1 == ctx.steps {
            let (eta, ind) = evaluate(
                ctx.t0 + ctx.h * (k + 1) as f64,
                &state,
                &mut psi_probe,
                &mut psi_true,
                &mut g_probe,
                &mut g_true,
                &mut w,
            );
            if (k + 1) % record_every == 0 {
                eta_abs.push(eta.abs());
            }
            indist_sup = indist_sup.max(ind);
        }
    }
    Ok(ProbeSeries { eta_abs, indist_sup })
}

/// The mismatch functional `eta` of a probe `(lambda', theta')` along the
/// true plant run, sampled every `record_every` steps:
/// `eta = phi^T(lambda')(theta' - theta) + first row of
/// (Psi(lambda') - Psi(lambda)) theta + g_1(lambda') - g_1(lambda) + q`,
/// with `q` the companion-filtered version of the remaining rows.
pub fn eta_eval<R: Regressor>(
    ctx: &RunContext<'_, R>,
    probe_lambda: &[f64],
    probe_theta: &[f64],
    record_every: usize,
) -> Result<Vec<f64>, ExcitationError> {
    // eta itself (signed) is of no extra use over |eta| for the
    // diagnostics; expose the absolute series.
    probe_series(ctx, probe_lambda, probe_theta, record_every).map(|s| s.eta_abs)
}

/// Sup over the run of the output-indistinguishability expression
/// `|| B phi^T(lambda')(theta' - theta) + (Psi(lambda') - Psi(lambda)) theta
/// + g(lambda') - g(lambda) ||`. Zero characterizes membership in the
/// indistinguishability set along this trajectory.
pub fn indist_score<R: Regressor>(
    ctx: &RunContext<'_, R>,
    probe_lambda: &[f64],
    probe_theta: &[f64],
) -> Result<f64, ExcitationError> {
    probe_series(ctx, probe_lambda, probe_theta, ctx.steps.max(1))
        .map(|s| s.indist_sup)
}

#[derive(Clone, Copy, Debug)]
pub struct WnpeOptions {
    /// Window length in time units.
    pub window: f64,
    /// Residual below which a probe counts as output-indistinguishable.
    pub indist_tol: f64,
    /// Sampling stride (in integration steps) for the eta series.
    pub record_every: usize,
}

#[derive(Clone, Debug)]
pub struct WnpeRow {
    pub lambda: Vec<f64>,
    pub theta: Vec<f64>,
    /// Euclidean distance of the probe to the empirically characterized
    /// indistinguishability set (inner approximation: flagged probes plus
    /// the truth).
    pub distance: f64,
    /// Worst window: `inf_t sup_{t' in [t, t+L]} |eta(t')|`.
    pub worst_sup: f64,
    /// Monotone lower envelope value at this probe's distance.
    pub envelope: f64,
    pub residual: f64,
    pub indistinguishable: bool,
}

#[derive(Clone, Debug)]
pub struct WnpeReport {
    pub window: f64,
    pub rows: Vec<WnpeRow>,
    /// Number of probes classified as indistinguishable.
    pub indist_count: usize,
}

/// Probe the weak nonlinear persistency-of-excitation property: for every
/// probe, the worst sliding-window supremum of `|eta|` is paired with the
/// probe's distance to the empirically characterized indistinguishability
/// set, and a monotone lower envelope (the empirical stand-in for the
/// comparison function) is fitted over the scatter. Rows keep probe-grid
/// order.
pub fn wnpe_probe<R: Regressor>(
    ctx: &RunContext<'_, R>,
    probes: &[(Vec<f64>, Vec<f64>)],
    opts: &WnpeOptions,
) -> Result<WnpeReport, ExcitationError> {
    if probes.is_empty() {
        return Err(ExcitationError::EmptyGrid);
    }
    let rec = opts.record_every.max(1);
    let grid_h = ctx.h * rec as f64;
    let window_steps = libm::round(opts.window / grid_h) as usize;
    if window_steps < 1 {
        return Err(ExcitationError::BadWindow { value: opts.window });
    }
    let have = ctx.h * ctx.steps as f64;
    if have < opts.window {
        return Err(ExcitationError::RunTooShort {
            have,
            need: opts.window,
        });
    }

    let mut sups = Vec::with_capacity(probes.len());
    let mut residuals = Vec::with_capacity(probes.len());
    for (lam, th) in probes {
        let series = probe_series(ctx, lam, th, rec)?;
        sups.push(worst_window_sup(&series.eta_abs, window_steps));
        residuals.push(series.indist_sup);
    }

    // empirical indistinguishable set: flagged probes plus the truth
    let mut indist_pts: Vec<Vec<f64>> = Vec::new();
    let mut truth = ctx.lambda.to_vec();
    truth.extend_from_slice(ctx.theta);
    indist_pts.push(truth);
    for (i, (lam, th)) in probes.iter().enumerate() {
        if residuals[i] < opts.indist_tol {
            let mut pt = lam.clone();
            pt.extend_from_slice(th);
            indist_pts.push(pt);
        }
    }

    let mut distances = Vec::with_capacity(probes.len());
    for (lam, th) in probes {
        let mut pt = lam.clone();
        pt.extend_from_slice(th);
        let d = indist_pts
            .iter()
            .map(|e| {
                let mut s = 0.0;
                for (a, b) in pt.iter().zip(e) {
                    s += (a - b) * (a - b);
                }
                libm::sqrt(s)
            })
            .fold(f64::INFINITY, f64::min);
        distances.push(d);
    }

    // monotone lower envelope: env(d) = min of sups over distance >= d
    let mut order: Vec<usize> = (0..probes.len()).collect();
    order.sort_by(|&a, &b| distances[a].partial_cmp(&distances[b]).expect("finite"));
    let mut env_sorted = alloc::vec![0.0; probes.len()];
    let mut running = f64::INFINITY;
    for rank in (0..order.len()).rev() {
        running = running.min(sups[order[rank]]);
        env_sorted[rank] = running;
    }
    let mut envelope = alloc::vec![0.0; probes.len()];
    for (rank, &idx) in order.iter().enumerate() {
        envelope[idx] = env_sorted[rank];
    }

    let indist_count = residuals.iter().filter(|r| **r < opts.indist_tol).count();
    let rows = probes
        .iter()
        .enumerate()
        .map(|(i, (lam, th))| WnpeRow {
            lambda: lam.clone(),
            theta: th.clone(),
            distance: distances[i],
            worst_sup: sups[i],
            envelope: envelope[i],
            residual: residuals[i],
            indistinguishable: residuals[i] < opts.indist_tol,
        })
        .collect();
    Ok(WnpeReport {
        window: opts.window,
        rows,
        indist_count,
    })
}

/// `inf` over window starts of the max of `|eta|` inside the window
/// (monotone-deque sliding maximum).
fn worst_window_sup(series: &[f64], window_steps: usize) -> f64 {
    let w = window_steps + 1; // samples per window
    if series.len() <= w {
        return series.iter().copied().fold(0.0, f64::max);
    }
    let mut deque: VecDeque<usize> = VecDeque::new();
    let mut worst = f64::INFINITY;
    for i in 0..series.len() {
        while let Some(&back) = deque.back() {
            if series[back] <= series[i] {
                deque.pop_back();
            } else {
                break;
            }
        }
        deque.push_back(i);
        while let Some(&front) = deque.front() {
            if front + w <= i {
                deque.pop_front();
            } else {
                break;
            }
        }
        if i + 1 >= w {
            worst = worst.min(series[*deque.front().expect("nonempty")]);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{rowat_field, to_canonical, RowatParams, RowatRegressor};
    use alloc::vec;

    fn reference_ctx<'a>(
        plant_field: &'a dyn Fn(f64, &[f64], &mut [f64]),
        output: &'a dyn Fn(&[f64]) -> f64,
        input: &'a dyn Fn(f64) -> f64,
        x0: &'a [f64],
        theta: &'a [f64],
        lambda: &'a [f64],
        b: &'a [f64],
        steps: usize,
    ) -> RunContext<'a, RowatRegressor> {
        RunContext {
            regressor: &RowatRegressor,
            plant_field,
            output,
            input,
            plant_dim: 2,
            x0,
            t0: 0.0,
            h: 1e-3,
            steps,
            theta,
            lambda,
            b,
        }
    }

    #[test]
    fn window_sup_worst_case() {
        // series with a quiet stretch: worst window sits there
        let series = vec![1.0, 2.0, 0.1, 0.2, 0.1, 3.0, 4.0];
        assert_eq!(worst_window_sup(&series, 2), 0.2);
        // window covering everything
        assert_eq!(worst_window_sup(&series, 10), 4.0);
    }

    #[test]
    fn constant_regressor_is_rank_one() {
        let phi = |_: &[f64]| {
            let mut m = Mat::zeros(3001, 2);
            for i in 0..3001 {
                m.row_mut(i).copy_from_slice(&[1.0, 0.5]);
            }
            m
        };
        let rep = upe_check(
            phi,
            &[vec![0.0]],
            1e-3,
            &UpeOptions {
                window: 1.0,
                stride: 500,
                threshold: 1e-9,
            },
        )
        .unwrap();
        assert!(rep.mu_hat.abs() < 1e-9);
        assert!(!rep.pass);
    }

    #[test]
    fn sin_cos_full_period_gramian() {
        // phi = (sin t, cos t) over T = 2 pi: Gramian = pi I exactly.
        let n_steps = 20_000usize;
        let h = core::f64::consts::TAU / 10_000.0;
        let phi = move |_: &[f64]| {
            let mut m = Mat::zeros(n_steps + 1, 2);
            for i in 0..=n_steps {
                let t = h * i as f64;
                m.row_mut(i).copy_from_slice(&[libm::sin(t), libm::cos(t)]);
            }
            m
        };
        let rep = upe_check(
            phi,
            &[vec![0.0]],
            h,
            &UpeOptions {
                window: core::f64::consts::TAU,
                stride: 2500,
                threshold: 0.0,
            },
        )
        .unwrap();
        assert!(
            (rep.mu_hat - core::f64::consts::PI).abs() < 1e-6,
            "mu = {}",
            rep.mu_hat
        );
        assert!(rep.pass);
    }

    #[test]
    fn run_too_short_is_an_error() {
        let phi = |_: &[f64]| Mat::zeros(100, 2);
        let err = upe_check(
            phi,
            &[vec![0.0]],
            1e-3,
            &UpeOptions {
                window: 1.0,
                stride: 1,
                threshold: 0.0,
            },
        )
        .unwrap_err();
        assert!(matches!(err, ExcitationError::RunTooShort { .. }));
    }

    #[test]
    fn eta_vanishes_at_truth() {
        let p = RowatParams::reference();
        let c = to_canonical(&p);
        let field = move |_t: f64, x: &[f64], dx: &mut [f64]| {
            let d = rowat_field(&p, [x[0], x[1]]);
            dx[0] = d[0];
            dx[1] = d[1];
        };
        let output = |x: &[f64]| x[0];
        let input = |_: f64| 0.0;
        let x0 = [1.0, 0.0];
        let lambda = [c.lambda];
        let b = [1.0];
        let ctx = reference_ctx(&field, &output, &input, &x0, &c.theta, &lambda, &b, 2000);
        let eta = eta_eval(&ctx, &lambda, &c.theta, 100).unwrap();
        assert!(eta.iter().all(|v| *v == 0.0), "eta not exactly zero");
        let score = indist_score(&ctx, &lambda, &c.theta).unwrap();
        assert_eq!(score, 0.0);
    }

    #[test]
    fn generic_probe_has_nonzero_eta() {
        let p = RowatParams::reference();
        let c = to_canonical(&p);
        let field = move |_t: f64, x: &[f64], dx: &mut [f64]| {
            let d = rowat_field(&p, [x[0], x[1]]);
            dx[0] = d[0];
            dx[1] = d[1];
        };
        let output = |x: &[f64]| x[0];
        let input = |_: f64| 0.0;
        let x0 = [1.0, 0.0];
        let lambda = [c.lambda];
        let b = [1.0];
        let ctx = reference_ctx(&field, &output, &input, &x0, &c.theta, &lambda, &b, 5000);
        let eta = eta_eval(&ctx, &[1.4], &c.theta, 100).unwrap();
        assert!(eta.iter().copied().fold(0.0, f64::max) > 1e-3);
    }

    #[test]
    fn indist_residual_linear_in_perturbation() {
        let p = RowatParams::reference();
        let c = to_canonical(&p);
        let field = move |_t: f64, x: &[f64], dx: &mut [f64]| {
            let d = rowat_field(&p, [x[0], x[1]]);
            dx[0] = d[0];
            dx[1] = d[1];
        };
        let output = |x: &[f64]| x[0];
        let input = |_: f64| 0.0;
        let x0 = [1.0, 0.0];
        let lambda = [c.lambda];
        let b = [1.0];
        let ctx = reference_ctx(&field, &output, &input, &x0, &c.theta, &lambda, &b, 3000);
        let mut th1 = c.theta;
        th1[1] += 1e-3;
        let mut th2 = c.theta;
        th2[1] += 2e-3;
        let r1 = indist_score(&ctx, &lambda, &th1).unwrap();
        let r2 = indist_score(&ctx, &lambda, &th2).unwrap();
        assert!(r1 > 0.0);
        assert!((r2 / r1 - 2.0).abs() < 1e-9, "ratio {}", r2 / r1);
    }

    #[test]
    fn trajectory_with_dead_output_hides_everything() {
        // from the origin the plant stays put, y = 0, every probe is
        // output-indistinguishable
        let p = RowatParams::reference();
        let c = to_canonical(&p);
        let field = move |_t: f64, x: &[f64], dx: &mut [f64]| {
            let d = rowat_field(&p, [x[0], x[1]]);
            dx[0] = d[0];
            dx[1] = d[1];
        };
        let output = |x: &[f64]| x[0];
        let input = |_: f64| 0.0;
        let x0 = [0.0, 0.0];
        let lambda = [c.lambda];
        let b = [1.0];
        let ctx = reference_ctx(&field, &output, &input, &x0, &c.theta, &lambda, &b, 1000);
        let far_theta = [1.0, 1.0, 1.0, 1.0];
        assert_eq!(indist_score(&ctx, &[2.9], &far_theta).unwrap(), 0.0);
    }

    #[test]
    fn wnpe_probe_report() {
        let p = RowatParams::reference();
        let c = to_canonical(&p);
        let field = move |_t: f64, x: &[f64], dx: &mut [f64]| {
            let d = rowat_field(&p, [x[0], x[1]]);
            dx[0] = d[0];
            dx[1] = d[1];
        };
        let output = |x: &[f64]| x[0];
        let input = |_: f64| 0.0;
        let x0 = [1.0, 0.0];
        let lambda = [c.lambda];
        let b = [1.0];
        let ctx = reference_ctx(&field, &output, &input, &x0, &c.theta, &lambda, &b, 20_000);
        let probes = vec![
            (vec![c.lambda], c.theta.to_vec()), // the truth
            (vec![1.5], c.theta.to_vec()),
            (vec![2.5], vec![-5.0, 5.0, -2.0, 1.0]),
        ];
        let rep = wnpe_probe(
            &ctx,
            &probes,
            &WnpeOptions {
                window: 5.0,
                indist_tol: 1e-9,
                record_every: 10,
            },
        )
        .unwrap();
        assert_eq!(rep.rows.len(), 3);
        assert!(rep.rows[0].indistinguishable);
        assert_eq!(rep.rows[0].distance, 0.0);
        assert_eq!(rep.rows[0].worst_sup, 0.0);
        assert!(!rep.rows[1].indistinguishable);
        assert!(rep.rows[1].worst_sup > 0.0);
        // envelope is a non-decreasing minorant in distance
        let mut by_dist: Vec<&WnpeRow> = rep.rows.iter().collect();
        by_dist.sort_by(|a, b| a.distance.partial_cmp(&b.distance).unwrap());
        for w in by_dist.windows(2) {
            assert!(w[0].envelope <= w[1].envelope + 1e-15);
        }
        for r in &rep.rows {
            assert!(r.envelope <= r.worst_sup + 1e-15);
        }
    }
}
