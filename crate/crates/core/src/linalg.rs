//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry modulus of a vector.
pub fn max_abs_vec(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn norm1(m: &CMatrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring of a Taylor series.
///
/// The scaled matrix has 1-norm ≤ 1/2, where the series converges to machine
/// precision within ~20 terms.
pub fn expm(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let norm = norm1(a);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scale = Complex64::new(0.5f64.powi(squarings as i32), 0.0);
    let b = a * scale;
    let mut result = CMatrix::identity(n, n);
    let mut term = CMatrix::identity(n, n);
    for k in 1..=40 {
        term = &term * &b * Complex64::new(1.0 / k as f64, 0.0);
        result += &term;
        if max_abs(&term) < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// max |(U†U − I)_{ij}| over the leading `keep × keep` block.
pub fn unitarity_error(u: &CMatrix, keep: usize) -> f64 {
    let keep = keep.min(u.ncols());
    let mut worst: f64 = 0.0;
    for i in 0..keep {
        for j in 0..keep {
            let mut acc = ZERO;
            for k in 0..u.nrows() {
                acc += u[(k, i)].conj() * u[(k, j)];
            }
            if i == j {
                acc -= ONE;
            }
            worst = worst.max(acc.norm());
        }
    }
    worst
}

/// ‖v‖².
pub fn norm_sqr(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}
