//! Closed-loop experiments: the physical plant and the canonical-form
//! observer integrated on one clock, recording, and summary statistics.
//!
//! The plant runs in its physical coordinates and the observer in
//! canonical ones; the measured output `y = V = x_1` is invariant under
//! the state transform, so the only coupling is through `y` itself.

use alloc::vec::Vec;
use core::fmt;

use crate::constraints::{ConstraintError, ConstraintSpec};
use crate::linalg::{dot, norm2, Mat};
use crate::observer::{ObserverConfig, ObserverConfigError, ObserverDynamics, ObserverState};
use crate::ode::{rk4_step, Rk4Workspace};
use crate::plant::{
    from_canonical, rowat_field, state_to_canonical, to_canonical, CanonicalParams, Disturbance,
    PlantError, Regressor, RowatParams, RowatRegressor,
};

/// Constraint block of a scenario.
#[derive(Clone, Debug)]
pub struct ConstraintSettings {
    pub enabled: bool,
    pub eps_pi: f64,
    pub literal_u1: bool,
    pub offchart_ceiling: f64,
}

impl Default for ConstraintSettings {
    fn default() -> Self {
        ConstraintSettings {
            enabled: true,
            eps_pi: 0.0022,
            literal_u1: false,
            offchart_ceiling: 1.0,
        }
    }
}

/// Integration block of a scenario.
#[derive(Clone, Copy, Debug)]
pub struct IntegrationSettings {
    pub h: f64,
    pub t_final: f64,
    pub record_every: usize,
}

/// A complete reproducible closed-loop experiment.
#[derive(Clone, Debug)]
pub struct RowatScenario {
    pub plant: RowatParams,
    /// Initial plant state in physical coordinates.
    pub x0: [f64; 2],
    pub disturbance: Disturbance,
    pub disturbance_bound: f64,
    /// Reporting box for the linear parameters (PE grids, sampling).
    pub theta_box: Vec<[f64; 2]>,
    pub observer: ObserverConfig,
    pub zeta0: Vec<f64>,
    pub theta0: Vec<f64>,
    /// Initial oscillator phases, one per nonlinear parameter.
    pub phase0: Vec<f64>,
    pub constraints: ConstraintSettings,
    pub integration: IntegrationSettings,
}

#[derive(Clone, Debug)]
pub enum ScenarioError {
    Plant(PlantError),
    Observer(ObserverConfigError),
    Constraint(ConstraintError),
    BadDimension { what: &'static str, got: usize, want: usize },
    BadIntegration { reason: &'static str },
    NonFinite { what: &'static str },
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::Plant(e) => write!(f, "plant: {e}"),
            ScenarioError::Observer(e) => write!(f, "observer: {e}"),
            ScenarioError::Constraint(e) => write!(f, "constraints: {e}"),
            ScenarioError::BadDimension { what, got, want } => {
                write!(f, "{what} has length {got}, expected {want}")
            }
            ScenarioError::BadIntegration { reason } => write!(f, "integration: {reason}"),
            ScenarioError::NonFinite { what } => write!(f, "{what} must be finite"),
        }
    }
}

impl core::error::Error for ScenarioError {}

impl RowatScenario {
    /// Total integration steps implied by `t_final` and `h`.
    pub fn steps(&self) -> usize {
        libm::round(self.integration.t_final / self.integration.h) as usize
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.plant.validate().map_err(ScenarioError::Plant)?;
        self.observer.validate().map_err(ScenarioError::Observer)?;
        let reg = RowatRegressor;
        let (n, m, p) = (reg.n(), reg.m(), reg.p());
        if self.observer.n() != n {
            return Err(ScenarioError::BadDimension {
                what: "observer.b",
                got: self.observer.n(),
                want: n,
            });
        }
        if self.observer.p() != p {
            return Err(ScenarioError::BadDimension {
                what: "observer.lambda bounds",
                got: self.observer.p(),
                want: p,
            });
        }
        for (what, got, want) in [
            ("zeta0", self.zeta0.len(), n),
            ("theta0", self.theta0.len(), m),
            ("phase0", self.phase0.len(), p),
            ("theta box", self.theta_box.len(), m),
        ] {
            if got != want {
                return Err(ScenarioError::BadDimension { what, got, want });
            }
        }
        for (what, vals) in [("zeta0", &self.zeta0), ("theta0", &self.theta0)] {
            if !vals.iter().all(|v| v.is_finite()) {
                return Err(ScenarioError::NonFinite { what });
            }
        }
        if !(self.x0[0].is_finite() && self.x0[1].is_finite()) {
            return Err(ScenarioError::NonFinite { what: "plant initial state" });
        }
        if self.disturbance_bound < 0.0 || !self.disturbance_bound.is_finite() {
            return Err(ScenarioError::NonFinite { what: "disturbance bound" });
        }
        // constraint block validated by construction
        ConstraintSpec::rowat(
            self.constraints.eps_pi,
            self.constraints.literal_u1,
            self.constraints.offchart_ceiling,
        )
        .map_err(ScenarioError::Constraint)?;
        let it = &self.integration;
        if !(it.h > 0.0) {
            return Err(ScenarioError::BadIntegration { reason: "step h must be positive" });
        }
        if !(it.t_final > 0.0) {
            return Err(ScenarioError::BadIntegration { reason: "t_final must be positive" });
        }
        if it.record_every == 0 {
            return Err(ScenarioError::BadIntegration { reason: "record_every must be >= 1" });
        }
        let steps = self.steps();
        if steps == 0 {
            return Err(ScenarioError::BadIntegration { reason: "zero integration steps" });
        }
        if (steps as f64 * it.h - it.t_final).abs() > 1e-9 * it.t_final.max(1.0) {
            return Err(ScenarioError::BadIntegration {
                reason: "t_final must be an integer multiple of h",
            });
        }
        if steps % it.record_every != 0 {
            return Err(ScenarioError::BadIntegration {
                reason: "record_every must divide the step count",
            });
        }
        Ok(())
    }

    /// The reference estimation experiment. Gains from the published
    /// experiment; gate shape, dead-zone width, horizon, and the penalty
    /// dead-zone were fixed by the convergence oracle run (see the
    /// shipped scenario file).
    pub fn reference() -> Self {
        RowatScenario {
            plant: RowatParams::reference(),
            x0: [1.0, 0.0],
            disturbance: Disturbance::None,
            disturbance_bound: 0.0,
            theta_box: alloc::vec![[-9.0, -3.0], [3.0, 9.0], [-4.0, -0.5], [0.3, 2.5]],
            observer: ObserverConfig {
                b: alloc::vec![1.0],
                l: alloc::vec![-2.0, -1.0],
                gamma_theta: 4.0,
                gamma: 0.002,
                epsilon: 0.005,
                sigma: crate::observer::SigmaSpec {
                    bound: 1.0,
                    slope: 100.0,
                },
                omega: crate::observer::make_omegas(1),
                lambda_box: alloc::vec![[1.0, 3.0]],
                renormalize: true,
            },
            zeta0: alloc::vec![1.0, 0.0],
            theta0: alloc::vec![0.0; 4],
            phase0: alloc::vec![core::f64::consts::PI],
            constraints: ConstraintSettings::default(),
            integration: IntegrationSettings {
                h: 1e-3,
                t_final: 3000.0,
                record_every: 100,
            },
        }
    }
}

/// Recorded closed-loop run. One row per recorded sample; columns are
/// `[V, q | observer flat | lambda_hat.. | pi | upsilon | gate | y_hat]`
/// with the observer flat layout `[M column-major | zeta | theta | s]`.
#[derive(Clone, Debug)]
pub struct ClosedLoopRun {
    pub t0: f64,
    /// Spacing between recorded samples (`h * record_every`).
    pub h: f64,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    data: Mat,
}

impl ClosedLoopRun {
    fn obs_dim(&self) -> usize {
        ObserverState::dim(self.n, self.m, self.p)
    }

    fn cols(n: usize, m: usize, p: usize) -> usize {
        2 + ObserverState::dim(n, m, p) + p + 4
    }

    pub fn len(&self) -> usize {
        self.data.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.rows() == 0
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + self.h * i as f64
    }

    pub fn v(&self, i: usize) -> f64 {
        self.data.row(i)[0]
    }

    pub fn q(&self, i: usize) -> f64 {
        self.data.row(i)[1]
    }

    pub fn observer_flat(&self, i: usize) -> &[f64] {
        &self.data.row(i)[2..2 + self.obs_dim()]
    }

    pub fn observer_state(&self, i: usize) -> ObserverState {
        ObserverState::unpack(self.observer_flat(i), self.n, self.m, self.p)
    }

    pub fn lambda_hat(&self, i: usize) -> &[f64] {
        let base = 2 + self.obs_dim();
        &self.data.row(i)[base..base + self.p]
    }

    pub fn pi(&self, i: usize) -> f64 {
        self.data.row(i)[2 + self.obs_dim() + self.p]
    }

    pub fn upsilon(&self, i: usize) -> f64 {
        self.data.row(i)[2 + self.obs_dim() + self.p + 1]
    }

    pub fn gate(&self, i: usize) -> f64 {
        self.data.row(i)[2 + self.obs_dim() + self.p + 2]
    }

    pub fn y_hat(&self, i: usize) -> f64 {
        self.data.row(i)[2 + self.obs_dim() + self.p + 3]
    }

    /// `x_hat = zeta + M theta_hat` at a recorded sample.
    pub fn x_hat(&self, i: usize) -> Vec<f64> {
        crate::observer::xhat_compose(&self.observer_state(i))
    }

    pub fn tail_start(&self, fraction: f64) -> usize {
        let keep = ((self.len() as f64) * fraction) as usize;
        self.len().saturating_sub(keep.max(1))
    }
}

/// Summary statistics of a run, all recomputable from the recording.
/// Tail quantities are taken over the final 10% of the recorded samples.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub steps: usize,
    pub recorded: usize,
    pub t_final: f64,
    pub theta_final: Vec<f64>,
    pub lambda_final: Vec<f64>,
    pub theta_tail_mean: Vec<f64>,
    pub lambda_tail_mean: Vec<f64>,
    /// Physical parameters recovered from the tail means through the
    /// inverse parameter map; absent when the tail means are out of chart.
    pub recovered: Option<RowatParams>,
    pub y_err_tail_sup: f64,
    pub state_err_tail_sup: f64,
    pub pi_tail_max: f64,
    pub gate_tail_max: f64,
    pub gate_zero_fraction: f64,
    /// First recorded time from which `|lambda_hat - lambda_true|` stays
    /// within 0.1 until the end of the run.
    pub lambda_capture_time: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub run: ClosedLoopRun,
    pub summary: RunSummary,
}

#[derive(Debug)]
pub enum RunError {
    Invalid(ScenarioError),
    /// Integration left finite floats; the recording up to the failure is
    /// preserved.
    Diverged { t: f64, partial: ClosedLoopRun },
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Invalid(e) => write!(f, "invalid scenario: {e}"),
            RunError::Diverged { t, .. } => write!(f, "simulation diverged at t = {t}"),
        }
    }
}

impl core::error::Error for RunError {}

/// Run the closed loop. `on_step` sees every integration step (index,
/// time, full coupled state `[V, q | observer flat]`) after any
/// renormalization; recording happens every `record_every` steps.
pub fn run_closed_loop_observed<F>(
    sc: &RowatScenario,
    mut on_step: F,
) -> Result<RunResult, RunError>
where
    F: FnMut(usize, f64, &[f64]),
{
    sc.validate().map_err(RunError::Invalid)?;
    let reg = RowatRegressor;
    let (n, m, p) = (reg.n(), reg.m(), reg.p());
    let obs_dim = ObserverState::dim(n, m, p);
    let dim = 2 + obs_dim;

    let constraint = ConstraintSpec::rowat(
        sc.constraints.eps_pi,
        sc.constraints.literal_u1,
        sc.constraints.offchart_ceiling,
    )
    .expect("validated");
    let gate_constraint = if sc.constraints.enabled { Some(&constraint) } else { None };
    let mut dynamics = ObserverDynamics::new(&sc.observer, &reg, gate_constraint)
        .map_err(|e| RunError::Invalid(ScenarioError::Observer(e)))?;

    let steps = sc.steps();
    let record_every = sc.integration.record_every;
    let h = sc.integration.h;
    let n_rec = steps / record_every + 1;
    let cols = ClosedLoopRun::cols(n, m, p);
    let mut data = Mat::zeros(n_rec, cols);

    let mut state = alloc::vec![0.0; dim];
    state[0] = sc.x0[0];
    state[1] = sc.x0[1];
    ObserverState::init(n, m, &sc.zeta0, &sc.theta0, &sc.phase0).pack(&mut state[2..]);

    let plant = sc.plant;
    let dist = sc.disturbance.clone();
    let dist_bound = sc.disturbance_bound;
    let mut xi = [0.0f64; 2];
    let mut report_buf = Vec::new();

    let mut ws = Rk4Workspace::new(dim);
    let mut recorded;

    macro_rules! record_row {
        ($k:expr, $t:expr) => {{
            let y = state[0];
            let sample = dynamics.sample($t, y, &state[2..]);
            let row = data.row_mut($k / record_every);
            row[0] = state[0];
            row[1] = state[1];
            row[2..2 + obs_dim].copy_from_slice(&state[2..]);
            let base = 2 + obs_dim;
            row[base..base + p].copy_from_slice(&sample.lambda_hat);
            // penalty is reported even when it is not fed to the gate
            row[base + p] = if sc.constraints.enabled {
                sample.pi
            } else {
                let st = &state[2..];
                let theta = &st[n * m + n..n * m + n + m];
                constraint.eval(theta, &sample.lambda_hat, &mut report_buf).value
            };
            row[base + p + 1] = sample.upsilon;
            row[base + p + 2] = sample.gate;
            row[base + p + 3] = sample.y_hat;
            recorded = $k / record_every + 1;
        }};
    }

    on_step(0, 0.0, &state);
    record_row!(0, 0.0);

    let mut failure: Option<f64> = None;
    for k in 0..steps {
        let t = h * k as f64;
        rk4_step(
            &mut |t: f64, x: &[f64], out: &mut [f64]| {
                let d = rowat_field(&plant, [x[0], x[1]]);
                dist.eval(t, dist_bound, &mut xi);
                // disturbance acts in canonical coordinates; map it back
                out[0] = d[0] + xi[0];
                out[1] = d[1] + (plant.tau_m / plant.tau_s) * xi[0] - plant.tau_m * xi[1];
                dynamics.field(t, x[0], 0.0, &x[2..], &mut out[2..]);
            },
            t,
            h,
            &mut state,
            &mut ws,
        );
        let t_next = h * (k + 1) as f64;
        if !state.iter().all(|v| v.is_finite()) {
            failure = Some(t_next);
            break;
        }
        if sc.observer.renormalize {
            dynamics.renormalize(&mut state[2..]);
        }
        on_step(k + 1, t_next, &state);
        if (k + 1) % record_every == 0 {
            record_row!(k + 1, t_next);
        }
    }

    let make_run = |data: Mat, rows: usize| {
        let mut kept = Mat::zeros(rows, cols);
        for i in 0..rows {
            kept.row_mut(i).copy_from_slice(data.row(i));
        }
        ClosedLoopRun {
            t0: 0.0,
            h: h * record_every as f64,
            n,
            m,
            p,
            data: kept,
        }
    };

    if let Some(t) = failure {
        return Err(RunError::Diverged {
            t,
            partial: make_run(data, recorded),
        });
    }
    let run = ClosedLoopRun { t0: 0.0, h: h * record_every as f64, n, m, p, data };
    let summary = compute_summary(&run, sc);
    Ok(RunResult { run, summary })
}

pub fn run_closed_loop(sc: &RowatScenario) -> Result<RunResult, RunError> {
    run_closed_loop_observed(sc, |_, _, _| {})
}

/// Summary statistics; pure function of the recording and the scenario.
pub fn compute_summary(run: &ClosedLoopRun, sc: &RowatScenario) -> RunSummary {
    let count = run.len();
    let tail0 = run.tail_start(0.1);
    let (m, p) = (run.m, run.p);
    let last = count - 1;

    let last_state = run.observer_state(last);
    let theta_final = last_state.theta.clone();
    let lambda_final = run.lambda_hat(last).to_vec();

    let mut theta_tail_mean = alloc::vec![0.0; m];
    let mut lambda_tail_mean = alloc::vec![0.0; p];
    let mut y_err_tail_sup = 0.0f64;
    let mut state_err_tail_sup = 0.0f64;
    let mut pi_tail_max = 0.0f64;
    let mut gate_tail_max = 0.0f64;
    let tail_count = (count - tail0) as f64;
    for i in tail0..count {
        let st = run.observer_state(i);
        for j in 0..m {
            theta_tail_mean[j] += st.theta[j] / tail_count;
        }
        for j in 0..p {
            lambda_tail_mean[j] += run.lambda_hat(i)[j] / tail_count;
        }
        y_err_tail_sup = y_err_tail_sup.max((run.v(i) - run.y_hat(i)).abs());
        let x = state_to_canonical(&sc.plant, [run.v(i), run.q(i)]);
        let xh = run.x_hat(i);
        let dx = [xh[0] - x[0], xh[1] - x[1]];
        state_err_tail_sup = state_err_tail_sup.max(norm2(&dx));
        pi_tail_max = pi_tail_max.max(run.pi(i));
        gate_tail_max = gate_tail_max.max(run.gate(i));
    }

    let gate_zero = (0..count).filter(|&i| run.gate(i) == 0.0).count();

    let recovered = from_canonical(&CanonicalParams {
        theta: [
            theta_tail_mean[0],
            theta_tail_mean[1],
            theta_tail_mean[2],
            theta_tail_mean[3],
        ],
        lambda: lambda_tail_mean[0],
    })
    .ok();

    let lambda_true = to_canonical(&sc.plant).lambda;
    let mut capture_idx: Option<usize> = None;
    for i in (0..count).rev() {
        if (run.lambda_hat(i)[0] - lambda_true).abs() <= 0.1 {
            capture_idx = Some(i);
        } else {
            break;
        }
    }

    RunSummary {
        steps: sc.steps(),
        recorded: count,
        t_final: sc.integration.t_final,
        theta_final,
        lambda_final,
        theta_tail_mean,
        lambda_tail_mean,
        recovered,
        y_err_tail_sup,
        state_err_tail_sup,
        pi_tail_max,
        gate_tail_max,
        gate_zero_fraction: gate_zero as f64 / count as f64,
        lambda_capture_time: capture_idx.map(|i| run.time(i)),
    }
}

/// Plant-only simulation in physical coordinates, recorded every
/// `record_every` steps as a `(V, q)` trajectory.
pub fn simulate_plant(
    p: &RowatParams,
    x0: [f64; 2],
    disturbance: &Disturbance,
    disturbance_bound: f64,
    h: f64,
    steps: usize,
    record_every: usize,
) -> Result<crate::ode::Trajectory, crate::ode::OdeError> {
    assert!(record_every >= 1 && steps % record_every == 0);
    let n_rec = steps / record_every + 1;
    let mut data = Mat::zeros(n_rec, 2);
    let plant = *p;
    let dist = disturbance.clone();
    let mut xi = [0.0f64; 2];
    crate::ode::rk4_drive(
        move |t, x, out| {
            let d = rowat_field(&plant, [x[0], x[1]]);
            dist.eval(t, disturbance_bound, &mut xi);
            out[0] = d[0] + xi[0];
            out[1] = d[1] + (plant.tau_m / plant.tau_s) * xi[0] - plant.tau_m * xi[1];
        },
        0.0,
        &x0,
        h,
        steps,
        |k, _, x| {
            if k % record_every == 0 {
                data.row_mut(k / record_every).copy_from_slice(x);
            }
        },
    )?;
    Ok(crate::ode::Trajectory::new(
        0.0,
        h * record_every as f64,
        alloc::vec![alloc::string::String::from("V"), alloc::string::String::from("q")],
        data,
    ))
}

/// The two parameter sets of the output-indistinguishability
/// demonstration: identical output traces from one initial condition,
/// visibly different dynamics from another.
pub fn indistinguishability_set_a() -> RowatParams {
    RowatParams {
        tau_m: 0.1666,
        tau_s: 5.0,
        sigma_s: 0.9,
        sigma_f: 2.0,
        a_f: 1.0,
    }
}

pub fn indistinguishability_set_c() -> RowatParams {
    RowatParams {
        tau_m: 0.2062,
        tau_s: 6.1881,
        sigma_s: 1.1,
        sigma_f: 2.0,
        a_f: 1.0,
    }
}

#[derive(Clone, Debug)]
pub struct OutputCompareReport {
    pub h: f64,
    pub horizon: f64,
    /// Recorded spacing of the stored traces.
    pub rec_h: f64,
    /// sup_t |V_A(t) - V_C(t)| from the shared initial condition (1, 0).
    pub sup_diff_near: f64,
    /// Same from (0.199729, 0.179756), set A's own nonzero equilibrium.
    pub sup_diff_far: f64,
    pub v_a_near: Vec<f64>,
    pub v_c_near: Vec<f64>,
    pub v_a_far: Vec<f64>,
    pub v_c_far: Vec<f64>,
}

/// Simulate both parameter sets from both published initial conditions
/// and report the sup output discrepancies (computed at every step) plus
/// thinned traces for plotting.
pub fn output_compare(h: f64, horizon: f64, record_every: usize) -> OutputCompareReport {
    let steps = libm::round(horizon / h) as usize;
    let ic_near = [1.0, 0.0];
    let ic_far = [0.199729, 0.179756];
    let sets = [indistinguishability_set_a(), indistinguishability_set_c()];
    let mut all: Vec<Vec<f64>> = Vec::new();
    for p in &sets {
        for ic in [ic_near, ic_far] {
            let mut v = Vec::with_capacity(steps + 1);
            let plant = *p;
            crate::ode::rk4_drive(
                move |_, x, out| {
                    let d = rowat_field(&plant, [x[0], x[1]]);
                    out[0] = d[0];
                    out[1] = d[1];
                },
                0.0,
                &ic,
                h,
                steps,
                |_, _, x| v.push(x[0]),
            )
            .expect("plant simulation diverged");
            all.push(v);
        }
    }
    let sup = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max)
    };
    let thin = |v: &[f64]| -> Vec<f64> { v.iter().step_by(record_every).copied().collect() };
    OutputCompareReport {
        h,
        horizon,
        rec_h: h * record_every as f64,
        sup_diff_near: sup(&all[0], &all[2]),
        sup_diff_far: sup(&all[1], &all[3]),
        v_a_near: thin(&all[0]),
        v_c_near: thin(&all[2]),
        v_a_far: thin(&all[1]),
        v_c_far: thin(&all[3]),
    }
}

/// Dominant oscillation period of a recorded scalar signal, estimated
/// from upward mean-crossings over the second half of the samples (the
/// first half is treated as transient). `None` when fewer than two
/// crossings are found.
pub fn estimate_period(samples: &[f64], h: f64) -> Option<f64> {
    let start = samples.len() / 2;
    let tail = &samples[start..];
    if tail.len() < 3 {
        return None;
    }
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let mut crossings: Vec<f64> = Vec::new();
    for i in 1..tail.len() {
        let (a, b) = (tail[i - 1] - mean, tail[i] - mean);
        if a < 0.0 && b >= 0.0 {
            let frac = a / (a - b);
            crossings.push(h * (start + i - 1) as f64 + h * frac);
        }
    }
    if crossings.len() < 2 {
        return None;
    }
    let span = crossings.last().unwrap() - crossings.first().unwrap();
    Some(span / (crossings.len() - 1) as f64)
}

/// Regressor samples `phi(t, lambda)` along the true plant trajectory
/// with the filter state co-integrated at a fixed `lambda`, recorded
/// every `record_every` steps. Feeds the excitation diagnostics.
pub fn rowat_phi_samples(
    plant: &RowatParams,
    x0: [f64; 2],
    b: &[f64],
    lambda: f64,
    h: f64,
    steps: usize,
    record_every: usize,
) -> Mat {
    assert!(record_every >= 1 && steps % record_every == 0);
    let reg = RowatRegressor;
    let (n, m) = (reg.n(), reg.m());
    let (f_mat, p_mat) = crate::observer::filter_matrices(b);
    let mut psi = Mat::zeros(n, m);
    let n_rec = steps / record_every + 1;
    let mut out = Mat::zeros(n_rec, m);
    let dim = 2 + n * m;
    let mut state = alloc::vec![0.0; dim];
    state[0] = x0[0];
    state[1] = x0[1];
    let plant = *plant;
    let lam = [lambda];
    let mut record = |k: usize, t: f64, x: &[f64], psi: &mut Mat| {
        if k % record_every == 0 {
            reg.psi(t, &lam, x[0], psi);
            let row = out.row_mut(k / record_every);
            for j in 0..m {
                row[j] = x[2 + j * n + 1] + psi[(0, j)];
            }
        }
    };
    let mut ws = Rk4Workspace::new(dim);
    {
        let mut psi2 = Mat::zeros(n, m);
        record(0, 0.0, &state, &mut psi2);
        for k in 0..steps {
            let t = h * k as f64;
            rk4_step(
                &mut |t: f64, x: &[f64], dx: &mut [f64]| {
                    let d = rowat_field(&plant, [x[0], x[1]]);
                    dx[0] = d[0];
                    dx[1] = d[1];
                    reg.psi(t, &lam, x[0], &mut psi);
                    for c in 0..m {
                        let mcol = &x[2 + c * n..2 + (c + 1) * n];
                        for i in 0..n {
                            let mut acc = dot(f_mat.row(i), mcol);
                            for kk in 0..n {
                                acc += p_mat[(i, kk)] * psi[(kk, c)];
                            }
                            dx[2 + c * n + i] = acc;
                        }
                    }
                },
                t,
                h,
                &mut state,
                &mut ws,
            );
            record(k + 1, h * (k + 1) as f64, &state, &mut psi2);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_scenario() -> RowatScenario {
        let mut sc = RowatScenario::reference();
        sc.integration.t_final = 2.0;
        sc.integration.record_every = 10;
        sc
    }

    #[test]
    fn validation_catches_division_mismatch() {
        let mut sc = quick_scenario();
        sc.integration.record_every = 7; // 2000 % 7 != 0
        assert!(matches!(
            sc.validate(),
            Err(ScenarioError::BadIntegration { .. })
        ));
        assert!(quick_scenario().validate().is_ok());
    }

    #[test]
    fn record_thinning_row_count() {
        let sc = quick_scenario();
        let res = run_closed_loop(&sc).unwrap();
        assert_eq!(res.run.len(), sc.steps() / sc.integration.record_every + 1);
        assert!((res.run.h - 0.01).abs() < 1e-15);
    }

    #[test]
    fn truth_initialized_observer_stays_locked() {
        let mut sc = quick_scenario();
        sc.integration.t_final = 20.0;
        let c = to_canonical(&sc.plant);
        sc.zeta0 = state_to_canonical(&sc.plant, sc.x0).to_vec();
        sc.theta0 = c.theta.to_vec();
        // phase pi*3/2 puts s1 at 0 => lambda_hat = midpoint = 2 = truth
        sc.phase0 = alloc::vec![1.5 * core::f64::consts::PI];
        let res = run_closed_loop(&sc).unwrap();
        let run = &res.run;
        let s_first = run.observer_state(0).s.clone();
        for i in 0..run.len() {
            assert!((run.v(i) - run.y_hat(i)).abs() <= 1e-6);
            assert_eq!(run.gate(i), 0.0);
            assert_eq!(run.observer_state(i).s, s_first, "search moved at row {i}");
        }
        assert_eq!(res.summary.gate_zero_fraction, 1.0);
    }

    #[test]
    fn divergence_reports_partial() {
        let mut sc = quick_scenario();
        sc.observer.gamma_theta = 1e18; // blows up the gradient law
        match run_closed_loop(&sc) {
            Err(RunError::Diverged { t, partial }) => {
                assert!(t > 0.0);
                assert!(partial.len() >= 1);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn summary_recomputable() {
        let sc = quick_scenario();
        let res = run_closed_loop(&sc).unwrap();
        let again = compute_summary(&res.run, &sc);
        assert_eq!(res.summary.theta_final, again.theta_final);
        assert_eq!(res.summary.y_err_tail_sup, again.y_err_tail_sup);
        assert_eq!(res.summary.pi_tail_max, again.pi_tail_max);
    }

    #[test]
    fn output_compare_identical_sets_is_zero() {
        let a = indistinguishability_set_a();
        let h = 1e-2;
        let steps = 100;
        let mut v1 = Vec::new();
        let mut v2 = Vec::new();
        for store in [&mut v1, &mut v2] {
            crate::ode::rk4_drive(
                |_, x, out| {
                    let d = rowat_field(&a, [x[0], x[1]]);
                    out[0] = d[0];
                    out[1] = d[1];
                },
                0.0,
                &[1.0, 0.0],
                h,
                steps,
                |_, _, x| store.push(x[0]),
            )
            .unwrap();
        }
        assert_eq!(v1, v2);
    }

    #[test]
    fn period_of_pure_sine() {
        let h = 1e-3;
        let v: Vec<f64> = (0..20_000).map(|k| libm::sin(0.7 * h * k as f64)).collect();
        let period = estimate_period(&v, h).unwrap();
        let want = core::f64::consts::TAU / 0.7;
        assert!((period - want).abs() < 1e-2, "{period} vs {want}");
    }

    #[test]
    fn phi_samples_shape_and_settling() {
        let sc = RowatScenario::reference();
        let phi = rowat_phi_samples(&sc.plant, sc.x0, &sc.observer.b, 2.0, 1e-3, 2000, 10);
        assert_eq!(phi.rows(), 201);
        assert_eq!(phi.cols(), 4);
        // filter starts at zero so phi(0) = psi row 1 at y = 1
        assert!((phi.row(0)[0] - 1.0).abs() < 1e-15);
        assert!((phi.row(0)[1] - libm::tanh(2.0)).abs() < 1e-15);
        assert_eq!(phi.row(0)[2], 0.0);
    }
}
