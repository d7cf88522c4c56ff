//! Dense complex matrix helpers.

use nalgebra::DMatrix;

use crate::C64;

/// Target accuracy of the Taylor kernel inside [`expm`].
const SERIES_TOL: f64 = 1e-16;
const MAX_TERMS: usize = 64;

/// Induced 1-norm (max absolute column sum).
pub fn norm1(m: &DMatrix<C64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring.
///
/// The matrix is scaled by `2^-s` until its 1-norm is below one half, the
/// exponential of the scaled matrix is summed as a Taylor series until the
/// next term drops below `1e-16` relative, and the result is squared `s`
/// times.
pub fn expm(a: &DMatrix<C64>) -> DMatrix<C64> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    let norm = norm1(a);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * C64::new(0.5f64.powi(squarings), 0.0);

    let mut sum = DMatrix::<C64>::identity(n, n);
    let mut term = DMatrix::<C64>::identity(n, n);
    for k in 1..=MAX_TERMS {
        term = &term * &scaled * C64::new(1.0 / k as f64, 0.0);
        sum += &term;
        if norm1(&term) <= SERIES_TOL * norm1(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_matrix_gives_identity() {
        let z = DMatrix::<C64>::zeros(4, 4);
        assert!(max_abs_diff(&expm(&z), &DMatrix::identity(4, 4)) < 1e-15);
    }

    #[test]
    fn diagonal_matches_scalar_exp() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::new(0.0, 3.0),
            C64::new(-2.0, 0.0),
            C64::new(1.5, 0.25),
        ]));
        let e = expm(&d);
        for i in 0..3 {
            assert!((e[(i, i)] - d[(i, i)].exp()).norm() < 1e-13);
        }
    }

    #[test]
    fn rotation_generator() {
        // exp([[0, -t], [t, 0]]) is a rotation by t.
        let t = 2.7;
        let g = DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(0.0, 0.0),
                C64::new(-t, 0.0),
                C64::new(t, 0.0),
                C64::new(0.0, 0.0),
            ],
        );
        let e = expm(&g);
        assert!((e[(0, 0)].re - t.cos()).abs() < 1e-13);
        assert!((e[(1, 0)].re - t.sin()).abs() < 1e-13);
    }

    #[test]
    fn agrees_with_nalgebra_pade() {
        let n = 6;
        let m = DMatrix::from_fn(n, n, |i, j| {
            C64::new(
                ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.6,
                ((i + 2 * j) % 3) as f64 * 0.2,
            )
        });
        let ours = expm(&m);
        let theirs = m.clone().exp();
        assert!(max_abs_diff(&ours, &theirs) < 1e-10 * norm1(&theirs));
    }
}
