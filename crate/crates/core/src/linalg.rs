//! Small dense matrix helpers shared by the form and lattice modules: exact
//! rational and f64 variants of multiply/transpose/determinant/inverse for
//! the tiny (n ≤ 4 ambient) matrices that show up here. Row-major flat
//! storage throughout.

use crate::arith::Rational;
use num_traits::{One, Zero};

pub(crate) fn rmul(a: &[Rational], b: &[Rational], n: usize) -> Vec<Rational> {
    let mut out = vec![Rational::zero(); n * n];
    for i in 0..n {
        for k in 0..n {
            if a[i * n + k].is_zero() {
                continue;
            }
            for j in 0..n {
                let prod = &a[i * n + k] * &b[k * n + j];
                out[i * n + j] += prod;
            }
        }
    }
    out
}

pub(crate) fn rtranspose(a: &[Rational], n: usize) -> Vec<Rational> {
    let mut out = vec![Rational::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = a[i * n + j].clone();
        }
    }
    out
}

/// Exact determinant by fraction-free-ish Gaussian elimination (plain
/// elimination is fine over exact rationals at these sizes).
pub(crate) fn rdet(a: &[Rational], n: usize) -> Rational {
    let mut m = a.to_vec();
    let mut det = Rational::one();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r * n + col].is_zero());
        let Some(pr) = pivot else {
            return Rational::zero();
        };
        if pr != col {
            for j in 0..n {
                m.swap(pr * n + j, col * n + j);
            }
            det = -det;
        }
        let pv = m[col * n + col].clone();
        det *= &pv;
        for r in (col + 1)..n {
            if m[r * n + col].is_zero() {
                continue;
            }
            let f = &m[r * n + col] / &pv;
            for j in col..n {
                let sub = &f * &m[col * n + j];
                m[r * n + j] -= sub;
            }
        }
    }
    det
}

/// Exact inverse via Gauss–Jordan; `None` for singular input.
pub(crate) fn rinv(a: &[Rational], n: usize) -> Option<Vec<Rational>> {
    let mut m = a.to_vec();
    let mut inv: Vec<Rational> = (0..n * n)
        .map(|k| {
            if k / n == k % n {
                Rational::one()
            } else {
                Rational::zero()
            }
        })
        .collect();
    for col in 0..n {
        let pr = (col..n).find(|&r| !m[r * n + col].is_zero())?;
        if pr != col {
            for j in 0..n {
                m.swap(pr * n + j, col * n + j);
                inv.swap(pr * n + j, col * n + j);
            }
        }
        let pv = m[col * n + col].clone();
        for j in 0..n {
            m[col * n + j] /= &pv;
            inv[col * n + j] /= &pv;
        }
        for r in 0..n {
            if r == col || m[r * n + col].is_zero() {
                continue;
            }
            let f = m[r * n + col].clone();
            for j in 0..n {
                let sm = &f * &m[col * n + j];
                m[r * n + j] -= sm;
                let si = &f * &inv[col * n + j];
                inv[r * n + j] -= si;
            }
        }
    }
    Some(inv)
}

pub(crate) fn fmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

pub(crate) fn ftranspose(a: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = a[i * n + j];
        }
    }
    out
}

pub(crate) fn fdet(a: &[f64], n: usize) -> f64 {
    let mut m = a.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let mut pr = col;
        let mut best = m[col * n + col].abs();
        for r in (col + 1)..n {
            if m[r * n + col].abs() > best {
                best = m[r * n + col].abs();
                pr = r;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if pr != col {
            for j in 0..n {
                m.swap(pr * n + j, col * n + j);
            }
            det = -det;
        }
        let pv = m[col * n + col];
        det *= pv;
        for r in (col + 1)..n {
            let f = m[r * n + col] / pv;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                m[r * n + j] -= f * m[col * n + j];
            }
        }
    }
    det
}

/// Determinant of the j×j submatrix of a j×n row-major matrix obtained by
/// selecting the given columns (exact).
pub(crate) fn rminor(rows: &[Rational], j: usize, ncols: usize, cols: &[usize]) -> Rational {
    debug_assert_eq!(cols.len(), j);
    let mut sub = Vec::with_capacity(j * j);
    for r in 0..j {
        for &c in cols {
            sub.push(rows[r * ncols + c].clone());
        }
    }
    rdet(&sub, j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;

    #[test]
    fn det_and_inverse_roundtrip() {
        // [[1, 2], [3, 4]] → det −2
        let a = vec![rat(1, 1), rat(2, 1), rat(3, 1), rat(4, 1)];
        assert_eq!(rdet(&a, 2), rat(-2, 1));
        let inv = rinv(&a, 2).unwrap();
        let prod = rmul(&a, &inv, 2);
        assert_eq!(prod, vec![rat(1, 1), rat(0, 1), rat(0, 1), rat(1, 1)]);
    }

    #[test]
    fn singular_matrix_has_no_inverse() {
        let a = vec![rat(1, 1), rat(2, 1), rat(2, 1), rat(4, 1)];
        assert_eq!(rdet(&a, 2), rat(0, 1));
        assert!(rinv(&a, 2).is_none());
    }

    #[test]
    fn float_det_matches_exact_on_integers() {
        let a = vec![rat(0, 1), rat(0, 1), rat(1, 1), rat(0, 1), rat(1, 1), rat(0, 1), rat(1, 1), rat(0, 1), rat(0, 1)];
        let af: Vec<f64> = [0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0].to_vec();
        assert_eq!(rdet(&a, 3), rat(-1, 1));
        assert_eq!(fdet(&af, 3), -1.0);
    }

    #[test]
    fn minors_select_columns() {
        // rows of a 2×3 matrix [[1,0,2],[0,1,3]]
        let rows = vec![rat(1, 1), rat(0, 1), rat(2, 1), rat(0, 1), rat(1, 1), rat(3, 1)];
        assert_eq!(rminor(&rows, 2, 3, &[0, 1]), rat(1, 1));
        assert_eq!(rminor(&rows, 2, 3, &[0, 2]), rat(3, 1));
        assert_eq!(rminor(&rows, 2, 3, &[1, 2]), rat(-2, 1));
    }
}
