//! Monic polynomial roots, Hurwitz tests, and the companion-form matrices
//! used by the observer's internal filters.

use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;

use crate::linalg::Mat;

/// Roots of the monic polynomial `s^k + c[0] s^{k-1} + ... + c[k-1]`.
///
/// Degrees one and two are solved in closed form; higher degrees use
/// Durand-Kerner iteration from a fixed deterministic starting spread.
pub fn roots(coeffs: &[f64]) -> Vec<Complex64> {
    let k = coeffs.len();
    match k {
        0 => Vec::new(),
        1 => alloc::vec![Complex64::new(-coeffs[0], 0.0)],
        2 => {
            let (b, c) = (coeffs[0], coeffs[1]);
            let disc = b * b - 4.0 * c;
            if disc >= 0.0 {
                let sq = libm::sqrt(disc);
                // Citardauq form for the small root avoids cancellation.
                let r1 = if b >= 0.0 { (-b - sq) / 2.0 } else { (-b + sq) / 2.0 };
                let r2 = if r1 != 0.0 { c / r1 } else { (-b + sq) / 2.0 };
                alloc::vec![Complex64::new(r1, 0.0), Complex64::new(r2, 0.0)]
            } else {
                let re = -b / 2.0;
                let im = libm::sqrt(-disc) / 2.0;
                alloc::vec![Complex64::new(re, -im), Complex64::new(re, im)]
            }
        }
        _ => durand_kerner(coeffs),
    }
}

fn eval_monic(coeffs: &[f64], z: Complex64) -> Complex64 {
    let mut p = Complex64::new(1.0, 0.0);
    for &c in coeffs {
        p = p * z + c;
    }
    p
}

fn durand_kerner(coeffs: &[f64]) -> Vec<Complex64> {
    let k = coeffs.len();
    let radius = 1.0 + coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    let seed = Complex64::new(0.4, 0.9);
    let mut z: Vec<Complex64> = Vec::with_capacity(k);
    let mut w = seed;
    for _ in 0..k {
        z.push(w * radius);
        w *= seed;
    }
    for _ in 0..200 {
        let mut moved = 0.0_f64;
        for i in 0..k {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..k {
                if j != i {
                    denom *= z[i] - z[j];
                }
            }
            let step = eval_monic(coeffs, z[i]) / denom;
            z[i] -= step;
            moved = moved.max(step.norm());
        }
        if moved <= 1e-14 * radius {
            break;
        }
    }
    z
}

/// True iff every root of `s^{n-1} + b[0] s^{n-2} + ... + b[n-2]` has a
/// strictly negative real part (equivalently, the companion matrix of the
/// polynomial is stable). Vacuously true for an empty coefficient vector.
pub fn hurwitz(b: &[f64]) -> bool {
    roots(b).iter().all(|z| z.re < 0.0)
}

/// The filter matrices built from a Hurwitz coefficient vector
/// `b = (b_1, ..., b_{n-1})`:
///
/// ```text
/// Lambda = ( -b | I_{n-2} over a zero row ),   (n-1) x (n-1)
/// G      = ( -b | I_{n-1} ),                   (n-1) x n
/// c_tilde = (1, 0, ..., 0),                    length n-1
/// ```
///
/// `Lambda`'s characteristic polynomial is exactly the `b` polynomial, so
/// Hurwitz `b` makes the filter stable.
#[derive(Clone, Debug)]
pub struct CompanionPair {
    b: Vec<f64>,
    pub lambda: Mat,
    pub g: Mat,
    pub c_tilde: Vec<f64>,
}

impl CompanionPair {
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// State dimension n of the plant this filter belongs to.
    pub fn n(&self) -> usize {
        self.b.len() + 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CompanionError {
    Empty,
    NotHurwitz,
}

impl fmt::Display for CompanionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompanionError::Empty => write!(f, "empty coefficient vector"),
            CompanionError::NotHurwitz => {
                write!(f, "coefficient vector is not Hurwitz")
            }
        }
    }
}

impl core::error::Error for CompanionError {}

pub fn companion_pair(b: &[f64]) -> Result<CompanionPair, CompanionError> {
    if b.is_empty() {
        return Err(CompanionError::Empty);
    }
    if !hurwitz(b) {
        return Err(CompanionError::NotHurwitz);
    }
    let k = b.len(); // n - 1
    let mut lambda = Mat::zeros(k, k);
    let mut g = Mat::zeros(k, k + 1);
    for i in 0..k {
        lambda[(i, 0)] = -b[i];
        g[(i, 0)] = -b[i];
        g[(i, i + 1)] = 1.0;
        if i + 1 < k {
            lambda[(i, i + 1)] = 1.0;
        }
    }
    let mut c_tilde = alloc::vec![0.0; k];
    c_tilde[0] = 1.0;
    Ok(CompanionPair {
        b: b.to_vec(),
        lambda,
        g,
        c_tilde,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigenvalues;
    use alloc::vec;

    #[test]
    fn hurwitz_examples() {
        assert!(hurwitz(&[1.0])); // s + 1
        assert!(!hurwitz(&[-1.0])); // s - 1
        assert!(hurwitz(&[3.0, 2.0])); // roots -1, -2
        assert!(!hurwitz(&[0.0, 1.0])); // s^2 + 1, imaginary axis
        assert!(hurwitz(&[3.0, 3.0, 1.0])); // (s+1)^3
    }

    #[test]
    fn quadratic_roots() {
        let r = roots(&[3.0, 2.0]);
        let mut re: Vec<f64> = r.iter().map(|z| z.re).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((re[0] + 2.0).abs() < 1e-12);
        assert!((re[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn quartic_roots() {
        // (s+1)(s+2)(s+3)(s+4) = s^4 + 10s^3 + 35s^2 + 50s + 24
        let r = roots(&[10.0, 35.0, 50.0, 24.0]);
        let mut re: Vec<f64> = r.iter().map(|z| z.re).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in re.iter().zip([-4.0, -3.0, -2.0, -1.0]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert!(r.iter().all(|z| z.im.abs() < 1e-9));
    }

    #[test]
    fn companion_n2() {
        let cp = companion_pair(&[1.0]).unwrap();
        assert_eq!(cp.lambda, Mat::from_rows(&[&[-1.0]]));
        assert_eq!(cp.g, Mat::from_rows(&[&[-1.0, 1.0]]));
        assert_eq!(cp.c_tilde, vec![1.0]);
        assert_eq!(cp.n(), 2);
    }

    #[test]
    fn companion_n3() {
        let cp = companion_pair(&[3.0, 2.0]).unwrap();
        assert_eq!(cp.lambda, Mat::from_rows(&[&[-3.0, 1.0], &[-2.0, 0.0]]));
        assert_eq!(
            cp.g,
            Mat::from_rows(&[&[-3.0, 1.0, 0.0], &[-2.0, 0.0, 1.0]])
        );
    }

    #[test]
    fn companion_rejects_non_hurwitz() {
        assert!(matches!(
            companion_pair(&[-1.0]),
            Err(CompanionError::NotHurwitz)
        ));
        assert!(matches!(companion_pair(&[]), Err(CompanionError::Empty)));
    }

    // Cross-check: eigenvalues of Lambda computed through the matrix route
    // (Faddeev-LeVerrier + root finder) must match the roots of the b
    // polynomial.
    #[test]
    fn companion_eigenvalues_match_roots() {
        for b in [&[1.0][..], &[3.0, 2.0][..], &[6.0, 11.0, 6.0][..]] {
            let cp = companion_pair(b).unwrap();
            let mut from_mat: Vec<f64> = eigenvalues(&cp.lambda).iter().map(|z| z.re).collect();
            let mut from_poly: Vec<f64> = roots(b).iter().map(|z| z.re).collect();
            from_mat.sort_by(|a, b| a.partial_cmp(b).unwrap());
            from_poly.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (x, y) in from_mat.iter().zip(&from_poly) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
