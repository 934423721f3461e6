//! Fixed-step classical Runge-Kutta integration.
//!
//! Fixed step is a deliberate choice: identical inputs produce bit-identical
//! trajectories, which the whole output pipeline relies on. Default step
//! for the shipped scenarios is 1e-3 time units.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::Mat;

/// Uniformly sampled multi-channel recording: `data` holds one row per
/// sample, `labels` one name per column, and the time of row `i` is
/// `t0 + i * h`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub t0: f64,
    pub h: f64,
    labels: Vec<String>,
    data: Mat,
}

impl Trajectory {
    pub fn new(t0: f64, h: f64, labels: Vec<String>, data: Mat) -> Self {
        assert!(h > 0.0, "non-positive sample spacing");
        assert_eq!(labels.len(), data.cols(), "label/column mismatch");
        Trajectory { t0, h, labels, data }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.rows() == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + self.h * i as f64
    }

    #[inline]
    pub fn sample(&self, i: usize) -> &[f64] {
        self.data.row(i)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn data(&self) -> &Mat {
        &self.data
    }

    /// Index of the first sample in the final `fraction` of the recording.
    pub fn tail_start(&self, fraction: f64) -> usize {
        let n = self.len();
        let keep = ((n as f64) * fraction) as usize;
        n.saturating_sub(keep.max(1))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OdeError {
    /// The state left the finite floats; carries the time stamp of the
    /// offending step.
    NonFinite { t: f64 },
}

impl fmt::Display for OdeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OdeError::NonFinite { t } => write!(f, "non-finite state at t = {t}"),
        }
    }
}

impl core::error::Error for OdeError {}

/// Scratch buffers for one RK4 stage evaluation; reuse across steps to
/// keep the hot loop allocation-free.
pub struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    pub fn new(dim: usize) -> Self {
        Rk4Workspace {
            k1: alloc::vec![0.0; dim],
            k2: alloc::vec![0.0; dim],
            k3: alloc::vec![0.0; dim],
            k4: alloc::vec![0.0; dim],
            tmp: alloc::vec![0.0; dim],
        }
    }
}

/// One classical RK4 step of `x` at time `t` with step `h`, in place.
pub fn rk4_step<F>(field: &mut F, t: f64, h: f64, x: &mut [f64], ws: &mut Rk4Workspace)
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = x.len();
    field(t, x, &mut ws.k1);
    for i in 0..n {
        ws.tmp[i] = x[i] + 0.5 * h * ws.k1[i];
    }
    field(t + 0.5 * h, &ws.tmp, &mut ws.k2);
    for i in 0..n {
        ws.tmp[i] = x[i] + 0.5 * h * ws.k2[i];
    }
    field(t + 0.5 * h, &ws.tmp, &mut ws.k3);
    for i in 0..n {
        ws.tmp[i] = x[i] + h * ws.k3[i];
    }
    field(t + h, &ws.tmp, &mut ws.k4);
    let w = h / 6.0;
    for i in 0..n {
        x[i] += w * (ws.k1[i] + 2.0 * ws.k2[i] + 2.0 * ws.k3[i] + ws.k4[i]);
    }
}

/// Drive `steps` RK4 steps from `x0`, invoking `on_step(k, t_k, state)`
/// for k = 0 (initial state) through `steps`. The callback may mutate the
/// state (per-step projections, renormalization). Returns the final state
/// or aborts at the first non-finite state.
pub fn rk4_drive<F, S>(
    mut field: F,
    t0: f64,
    x0: &[f64],
    h: f64,
    steps: usize,
    mut on_step: S,
) -> Result<Vec<f64>, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    S: FnMut(usize, f64, &mut [f64]),
{
    assert!(h > 0.0, "non-positive step");
    let mut x = x0.to_vec();
    let mut ws = Rk4Workspace::new(x.len());
    on_step(0, t0, &mut x);
    for k in 0..steps {
        let t = t0 + h * k as f64;
        rk4_step(&mut field, t, h, &mut x, &mut ws);
        let t_next = t0 + h * (k + 1) as f64;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(OdeError::NonFinite { t: t_next });
        }
        on_step(k + 1, t_next, &mut x);
    }
    Ok(x)
}

/// Integrate and record every step. `sink`, when given, additionally sees
/// each sample without the right to mutate it.
pub fn rk4_integrate<F>(
    field: F,
    t0: f64,
    x0: &[f64],
    h: f64,
    steps: usize,
    mut sink: Option<&mut dyn FnMut(usize, f64, &[f64])>,
) -> Result<Trajectory, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let dim = x0.len();
    let mut data = Mat::zeros(steps + 1, dim);
    rk4_drive(field, t0, x0, h, steps, |k, t, x| {
        data.row_mut(k).copy_from_slice(x);
        if let Some(s) = sink.as_deref_mut() {
            s(k, t, x);
        }
    })?;
    let labels = (0..dim)
        .map(|i| alloc::format!("x{}", i + 1))
        .collect();
    Ok(Trajectory::new(t0, h, labels, data))
}
