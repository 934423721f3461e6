//! Scalar root bracketing on a uniform grid plus bisection refinement.

use alloc::vec::Vec;

/// All roots of `f` on `[lo, hi]` found by scanning `grid_points` uniform
/// nodes for sign changes and refining each bracket by bisection until the
/// interval is shorter than 1e-12. Returned ascending.
///
/// Tangencies without a sign change are missed by construction; callers
/// that care (e.g. near a fold) refine the grid themselves.
pub fn bisect_roots<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, grid_points: usize) -> Vec<f64> {
    assert!(lo < hi, "empty interval");
    assert!(grid_points >= 2, "need at least two grid nodes");
    let n = grid_points - 1;
    let step = (hi - lo) / n as f64;
    let mut roots = Vec::new();
    let mut x_prev = lo;
    let mut f_prev = f(lo);
    if f_prev == 0.0 {
        roots.push(lo);
    }
    for k in 1..=n {
        let x = if k == n { hi } else { lo + step * k as f64 };
        let fx = f(x);
        if fx == 0.0 {
            roots.push(x);
        } else if f_prev != 0.0 && f_prev.signum() != fx.signum() {
            roots.push(refine(&f, x_prev, x, f_prev));
        }
        x_prev = x;
        f_prev = fx;
    }
    roots
}

fn refine<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    while b - a > 1e-12 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break; // interval at floating-point resolution
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fa.signum() != fm.signum() {
            b = mid;
        } else {
            a = mid;
            fa = fm;
        }
    }
    0.5 * (a + b)
}
