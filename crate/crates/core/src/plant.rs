//! The reference plant (a two-dimensional neuron-like relaxation
//! oscillator), its transforms into the output-canonical form, and the
//! canonical plant class itself.
//!
//! Physical model:
//!
//! ```text
//! V' = -(V + q)/tau_m + (A_f/tau_m) tanh((sigma_f/A_f) V)
//! q' = (sigma_s V - q)/tau_s
//! ```
//!
//! Only `V` is measured. Two linear coordinate changes put the model into
//! the canonical form with regressor rows `(y, tanh(lambda y), 0, 0)` and
//! `(0, 0, y, tanh(lambda y))`, a four-dimensional linearly entering
//! parameter `theta`, and one nonlinearly entering parameter
//! `lambda = sigma_f / A_f`.

use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::Mat;
use crate::rootfind::bisect_roots;

/// Physical parameters of the relaxation oscillator. All five are
/// positive for a physically meaningful plant; `validate` enforces the
/// stronger requirements, while the plain struct also serves as the raw
/// output of the inverse parameter map (which can land outside the
/// physical region for infeasible canonical parameters).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RowatParams {
    pub tau_m: f64,
    pub tau_s: f64,
    pub sigma_s: f64,
    pub sigma_f: f64,
    pub a_f: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PlantError {
    NonPositive { field: &'static str, value: f64 },
    NonFinite { field: &'static str },
}

impl fmt::Display for PlantError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlantError::NonPositive { field, value } => {
                write!(f, "{field} must be positive (got {value})")
            }
            PlantError::NonFinite { field } => write!(f, "{field} must be finite"),
        }
    }
}

impl core::error::Error for PlantError {}

impl RowatParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        for (name, v) in [
            ("tau_m", self.tau_m),
            ("tau_s", self.tau_s),
            ("sigma_s", self.sigma_s),
            ("sigma_f", self.sigma_f),
            ("a_f", self.a_f),
        ] {
            if !v.is_finite() {
                return Err(PlantError::NonFinite { field: name });
            }
        }
        for (name, v) in [("tau_m", self.tau_m), ("tau_s", self.tau_s), ("a_f", self.a_f)] {
            if v <= 0.0 {
                return Err(PlantError::NonPositive { field: name, value: v });
            }
        }
        Ok(())
    }

    /// The parameter set of the reference estimation experiment.
    pub fn reference() -> Self {
        RowatParams {
            tau_m: 0.1666,
            tau_s: 5.0,
            sigma_s: 0.8,
            sigma_f: 2.0,
            a_f: 1.0,
        }
    }
}

/// Canonical parameters: `theta` enters linearly, `lambda` nonlinearly.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalParams {
    pub theta: [f64; 4],
    pub lambda: f64,
}

/// Right-hand side of the physical model.
#[inline]
pub fn rowat_field(p: &RowatParams, state: [f64; 2]) -> [f64; 2] {
    let (v, q) = (state[0], state[1]);
    [
        -(v + q) / p.tau_m + (p.a_f / p.tau_m) * libm::tanh(p.sigma_f * v / p.a_f),
        (p.sigma_s * v - q) / p.tau_s,
    ]
}

/// Jacobian of the physical model at a state.
pub fn rowat_jacobian(p: &RowatParams, state: [f64; 2]) -> Mat {
    let th = libm::tanh(p.sigma_f * state[0] / p.a_f);
    let sech2 = 1.0 - th * th;
    Mat::from_rows(&[
        &[(p.sigma_f * sech2 - 1.0) / p.tau_m, -1.0 / p.tau_m],
        &[p.sigma_s / p.tau_s, -1.0 / p.tau_s],
    ])
}

/// Forward parameter map into canonical coordinates.
pub fn to_canonical(p: &RowatParams) -> CanonicalParams {
    CanonicalParams {
        theta: [
            -1.0 / p.tau_m - 1.0 / p.tau_s,
            p.a_f / p.tau_m,
            (-1.0 - p.sigma_s) / (p.tau_s * p.tau_m),
            p.a_f / (p.tau_s * p.tau_m),
        ],
        lambda: p.sigma_f / p.a_f,
    }
}

/// Canonical parameters for which the inverse map is singular.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OutOfChart;

impl fmt::Display for OutOfChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "canonical parameters outside the invertible chart")
    }
}

impl core::error::Error for OutOfChart {}

const CHART_TOL: f64 = 1e-9;

/// Inverse parameter map. Flags inputs within `1e-9` of the singular set
/// (`theta_4 = 0`, `theta_2 = 0`, or `theta_1 + theta_4/theta_2 = 0`)
/// instead of producing infinities. The result is the raw algebraic
/// inverse and may violate positivity when the canonical point does not
/// correspond to a physical plant.
pub fn from_canonical(c: &CanonicalParams) -> Result<RowatParams, OutOfChart> {
    let [th1, th2, th3, th4] = c.theta;
    if th4.abs() < CHART_TOL || th2.abs() < CHART_TOL {
        return Err(OutOfChart);
    }
    let tau_s = th2 / th4;
    let denom = th1 + 1.0 / tau_s;
    if denom.abs() < CHART_TOL {
        return Err(OutOfChart);
    }
    let tau_m = -1.0 / denom;
    let a_f = th2 * tau_m;
    let sigma_s = -th3 * tau_s * tau_m - 1.0;
    let sigma_f = c.lambda * a_f;
    Ok(RowatParams {
        tau_m,
        tau_s,
        sigma_s,
        sigma_f,
        a_f,
    })
}

/// Physical state to canonical coordinates: `x1 = V`,
/// `x2 = V/tau_s - q/tau_m` (the composition of the two displayed
/// coordinate changes).
#[inline]
pub fn state_to_canonical(p: &RowatParams, state: [f64; 2]) -> [f64; 2] {
    [state[0], state[0] / p.tau_s - state[1] / p.tau_m]
}

/// Exact inverse of `state_to_canonical`.
#[inline]
pub fn state_from_canonical(p: &RowatParams, x: [f64; 2]) -> [f64; 2] {
    [x[0], (p.tau_m / p.tau_s) * x[0] - p.tau_m * x[1]]
}

/// A plant in the output-canonical class: the regressor `Psi`, the known
/// drift term `g`, and the dimensions tying them together.
pub trait Regressor {
    /// State dimension.
    fn n(&self) -> usize;
    /// Dimension of the linearly entering parameter vector.
    fn m(&self) -> usize;
    /// Dimension of the nonlinearly entering parameter vector.
    fn p(&self) -> usize;
    /// Fill `out` (n x m) with `Psi(t, lambda, y)`.
    fn psi(&self, t: f64, lambda: &[f64], y: f64, out: &mut Mat);
    /// Fill `out` (length n) with `g(t, lambda, y, u)`.
    fn g(&self, t: f64, lambda: &[f64], y: f64, u: f64, out: &mut [f64]);
}

/// Regressor of the relaxation oscillator in canonical form; `g` vanishes.
#[derive(Clone, Copy, Debug, Default)]
pub struct RowatRegressor;

impl Regressor for RowatRegressor {
    fn n(&self) -> usize {
        2
    }

    fn m(&self) -> usize {
        4
    }

    fn p(&self) -> usize {
        1
    }

    fn psi(&self, _t: f64, lambda: &[f64], y: f64, out: &mut Mat) {
        debug_assert_eq!(out.rows(), 2);
        debug_assert_eq!(out.cols(), 4);
        let tl = libm::tanh(lambda[0] * y);
        let r0 = out.row_mut(0);
        r0[0] = y;
        r0[1] = tl;
        r0[2] = 0.0;
        r0[3] = 0.0;
        let r1 = out.row_mut(1);
        r1[0] = 0.0;
        r1[1] = 0.0;
        r1[2] = y;
        r1[3] = tl;
    }

    fn g(&self, _t: f64, _lambda: &[f64], _y: f64, _u: f64, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Allocating convenience for the reference regressor.
pub fn rowat_psi(y: f64, lambda: f64) -> Mat {
    let mut m = Mat::zeros(2, 4);
    RowatRegressor.psi(0.0, &[lambda], y, &mut m);
    m
}

/// Bounded unmodeled-dynamics term `xi(t)`. `eval` always satisfies
/// `||xi(t)|| <= bound`.
#[derive(Clone, Debug)]
pub enum Disturbance {
    None,
    /// `xi_1(t) = bound * sin(freq * t)`, other components zero.
    Sinusoid { freq: f64 },
    /// Smooth seeded quasiperiodic mix, per component a normalized sum of
    /// sinusoids with randomized frequencies and phases.
    Quasiperiodic { tones: Vec<Vec<(f64, f64, f64)>> },
}

impl Disturbance {
    /// Seeded quasiperiodic disturbance for an `n`-dimensional plant.
    pub fn seeded(seed: u64, n: usize, tones_per_component: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / libm::sqrt(n as f64);
        let tones = (0..n)
            .map(|_| {
                let raw: Vec<(f64, f64, f64)> = (0..tones_per_component)
                    .map(|_| {
                        (
                            rng.random_range(0.2..1.0),
                            rng.random_range(0.3..4.0),
                            rng.random_range(0.0..core::f64::consts::TAU),
                        )
                    })
                    .collect();
                let total: f64 = raw.iter().map(|t| t.0.abs()).sum();
                raw.into_iter()
                    .map(|(a, w, ph)| (a / total * scale, w, ph))
                    .collect()
            })
            .collect();
        Disturbance::Quasiperiodic { tones }
    }

    pub fn eval(&self, t: f64, bound: f64, out: &mut [f64]) {
        match self {
            Disturbance::None => out.fill(0.0),
            Disturbance::Sinusoid { freq } => {
                out.fill(0.0);
                if !out.is_empty() {
                    out[0] = bound * libm::sin(freq * t);
                }
            }
            Disturbance::Quasiperiodic { tones } => {
                for (i, comp) in tones.iter().enumerate() {
                    let mut v = 0.0;
                    for &(a, w, ph) in comp {
                        v += a * libm::sin(w * t + ph);
                    }
                    out[i] = bound * v;
                }
            }
        }
    }
}

/// The canonical plant: regressor plus disturbance and the parameter
/// hypercubes the estimates are searched in.
pub struct PlantSpec<R: Regressor> {
    pub regressor: R,
    pub disturbance: Disturbance,
    pub disturbance_bound: f64,
    /// Per-coordinate `[min, max]` for the linear parameters.
    pub theta_box: Vec<[f64; 2]>,
    /// Per-coordinate `[min, max]` for the nonlinear parameters.
    pub lambda_box: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SpecError {
    BoxDim { which: &'static str, got: usize, want: usize },
    EmptyInterval { which: &'static str, index: usize },
    NegativeBound,
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpecError::BoxDim { which, got, want } => {
                write!(f, "{which} box has {got} intervals, expected {want}")
            }
            SpecError::EmptyInterval { which, index } => {
                write!(f, "{which} interval {index} has min > max")
            }
            SpecError::NegativeBound => write!(f, "disturbance bound must be nonnegative"),
        }
    }
}

impl core::error::Error for SpecError {}

/// Scratch for canonical field evaluations.
pub struct CanonicalScratch {
    psi: Mat,
    g: Vec<f64>,
    xi: Vec<f64>,
}

impl CanonicalScratch {
    pub fn new(n: usize, m: usize) -> Self {
        CanonicalScratch {
            psi: Mat::zeros(n, m),
            g: alloc::vec![0.0; n],
            xi: alloc::vec![0.0; n],
        }
    }
}

impl<R: Regressor> PlantSpec<R> {
    pub fn validate(&self) -> Result<(), SpecError> {
        if self.theta_box.len() != self.regressor.m() {
            return Err(SpecError::BoxDim {
                which: "theta",
                got: self.theta_box.len(),
                want: self.regressor.m(),
            });
        }
        if self.lambda_box.len() != self.regressor.p() {
            return Err(SpecError::BoxDim {
                which: "lambda",
                got: self.lambda_box.len(),
                want: self.regressor.p(),
            });
        }
        for (which, boxes) in [("theta", &self.theta_box), ("lambda", &self.lambda_box)] {
            for (i, iv) in boxes.iter().enumerate() {
                if iv[0] > iv[1] {
                    return Err(SpecError::EmptyInterval { which, index: i });
                }
            }
        }
        if self.disturbance_bound < 0.0 {
            return Err(SpecError::NegativeBound);
        }
        Ok(())
    }

    /// `out = A x + Psi(t, lambda, y) theta + g(t, lambda, y, u) + xi(t)`
    /// with `A` the upward shift and `y = x_1`.
    pub fn canonical_field(
        &self,
        theta: &[f64],
        lambda: &[f64],
        u: f64,
        t: f64,
        x: &[f64],
        scratch: &mut CanonicalScratch,
        out: &mut [f64],
    ) {
        let n = self.regressor.n();
        assert_eq!(x.len(), n);
        assert_eq!(out.len(), n);
        assert_eq!(theta.len(), self.regressor.m());
        let y = x[0];
        self.regressor.psi(t, lambda, y, &mut scratch.psi);
        self.regressor.g(t, lambda, y, u, &mut scratch.g);
        self.disturbance.eval(t, self.disturbance_bound, &mut scratch.xi);
        for i in 0..n {
            let shift = if i + 1 < n { x[i + 1] } else { 0.0 };
            out[i] = shift + crate::linalg::dot(scratch.psi.row(i), theta) + scratch.g[i] + scratch.xi[i];
        }
    }
}

/// Stability type of an equilibrium of the two-dimensional plant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EquilibriumClass {
    Saddle,
    UnstableNode,
    StableNode,
    UnstableFocus,
    StableFocus,
}

impl EquilibriumClass {
    pub fn code(&self) -> &'static str {
        match self {
            EquilibriumClass::Saddle => "SADDLE",
            EquilibriumClass::UnstableNode => "UNODE",
            EquilibriumClass::StableNode => "SNODE",
            EquilibriumClass::UnstableFocus => "UFOCUS",
            EquilibriumClass::StableFocus => "SFOCUS",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Equilibrium {
    pub v: f64,
    pub q: f64,
    pub class: EquilibriumClass,
    pub eigenvalues: [Complex64; 2],
}

fn classify(jac: &Mat) -> (EquilibriumClass, [Complex64; 2]) {
    let tr = jac[(0, 0)] + jac[(1, 1)];
    let det = jac[(0, 0)] * jac[(1, 1)] - jac[(0, 1)] * jac[(1, 0)];
    let disc = tr * tr - 4.0 * det;
    let eig = if disc >= 0.0 {
        let sq = libm::sqrt(disc);
        [
            Complex64::new((tr - sq) / 2.0, 0.0),
            Complex64::new((tr + sq) / 2.0, 0.0),
        ]
    } else {
        let sq = libm::sqrt(-disc) / 2.0;
        [Complex64::new(tr / 2.0, -sq), Complex64::new(tr / 2.0, sq)]
    };
    let class = if det < 0.0 {
        EquilibriumClass::Saddle
    } else if disc >= 0.0 {
        if tr > 0.0 {
            EquilibriumClass::UnstableNode
        } else {
            EquilibriumClass::StableNode
        }
    } else if tr >= 0.0 {
        // tr == 0 (a center) is measure zero; reported as the unstable side
        EquilibriumClass::UnstableFocus
    } else {
        EquilibriumClass::StableFocus
    };
    (class, eig)
}

/// Equilibria of the physical plant with classification by the Jacobian.
///
/// Solves `q = sigma_s V` together with
/// `V (1 + sigma_s) = A_f tanh(sigma_f V / A_f)` on `[-3 A_f, 3 A_f]`;
/// every intersection lies inside `|V| <= A_f`, so the margin is safe.
pub fn equilibria(p: &RowatParams) -> Vec<Equilibrium> {
    equilibria_with_grid(p, 2001)
}

/// Same as [`equilibria`] with caller-chosen scan resolution (used near
/// the fold, where the nonzero pair approaches the origin).
pub fn equilibria_with_grid(p: &RowatParams, grid_points: usize) -> Vec<Equilibrium> {
    let pc = *p;
    let f = move |v: f64| pc.a_f * libm::tanh(pc.sigma_f * v / pc.a_f) - (1.0 + pc.sigma_s) * v;
    let span = 3.0 * p.a_f;
    bisect_roots(f, -span, span, grid_points)
        .into_iter()
        .map(|v| {
            let q = p.sigma_s * v;
            let (class, eigenvalues) = classify(&rowat_jacobian(p, [v, q]));
            Equilibrium { v, q, class, eigenvalues }
        })
        .collect()
}

/// Characteristic polynomial `s^2 + a1 s + a0` of the Jacobian at the
/// origin, returned as `(a1, a0, discriminant)`.
pub fn origin_charpoly(p: &RowatParams) -> (f64, f64, f64) {
    let a1 = (1.0 - p.sigma_f) / p.tau_m + 1.0 / p.tau_s;
    let a0 = (1.0 - p.sigma_f + p.sigma_s) / (p.tau_s * p.tau_m);
    (a1, a0, a1 * a1 - 4.0 * a0)
}

#[derive(Clone, Debug)]
pub struct BifurcationRow {
    pub sigma_s: f64,
    pub equilibria: Vec<Equilibrium>,
}

/// Sweep `sigma_s` over a uniform grid at fixed remaining parameters and
/// report all equilibria per grid point. Rows come out in grid order.
pub fn bifurcation_scan(
    sigma_s_lo: f64,
    sigma_s_hi: f64,
    steps: usize,
    sigma_f: f64,
    a_f: f64,
    tau_m: f64,
    tau_s: f64,
) -> Vec<BifurcationRow> {
    assert!(steps >= 2, "need at least two grid points");
    let d = (sigma_s_hi - sigma_s_lo) / (steps - 1) as f64;
    (0..steps)
        .map(|k| {
            let sigma_s = if k + 1 == steps {
                sigma_s_hi
            } else {
                sigma_s_lo + d * k as f64
            };
            let p = RowatParams {
                tau_m,
                tau_s,
                sigma_s,
                sigma_f,
                a_f,
            };
            BifurcationRow {
                sigma_s,
                equilibria: equilibria(&p),
            }
        })
        .collect()
}
