//! Small dense helpers. Systems here have at most a few dozen unknowns and
//! a few hundred rows.

use crate::scalar::Scalar;

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ColMatrix<T> {
    rows: usize,
    cols: Vec<Vec<T>>,
}

impl<T: Scalar> ColMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ColMatrix {
            rows,
            cols: vec![vec![T::zero(); rows]; cols],
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.cols[j][i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.cols[j][i] = v;
    }

    pub fn column(&self, j: usize) -> &[T] {
        &self.cols[j]
    }

    /// `A x` for a full-length `x`.
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.rows];
        for (col, &xj) in self.cols.iter().zip(x) {
            if xj != T::zero() {
                for (o, &a) in out.iter_mut().zip(col) {
                    *o = *o + a * xj;
                }
            }
        }
        out
    }

    /// `A^T v`.
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        self.cols.iter().map(|col| dot(col, v)).collect()
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Least-squares solution of `A[:, cols] z = b` by Householder QR.
/// Returns `None` when the selected columns are numerically dependent.
pub fn least_squares_qr<T: Scalar>(a: &ColMatrix<T>, cols: &[usize], b: &[T]) -> Option<Vec<T>> {
    let m = a.nrows();
    let n = cols.len();
    if n > m {
        return None;
    }
    let mut q: Vec<Vec<T>> = cols.iter().map(|&j| a.column(j).to_vec()).collect();
    let mut y = b.to_vec();
    let scale = q
        .iter()
        .flat_map(|c| c.iter())
        .fold(T::zero(), |s, v| s.max(v.abs()));
    let tol = scale * T::epsilon() * T::from_count(m.max(1)) * T::lit(8.0);
    let mut diag = vec![T::zero(); n];

    for k in 0..n {
        let norm = q[k][k..].iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm <= tol {
            return None;
        }
        let alpha = if q[k][k] > T::zero() { -norm } else { norm };
        // v = x - alpha e1, stored in place of column k
        q[k][k] = q[k][k] - alpha;
        let vnorm_sq = q[k][k..].iter().map(|&v| v * v).sum::<T>();
        diag[k] = alpha;
        if vnorm_sq == T::zero() {
            continue;
        }
        let (head, tail) = q.split_at_mut(k + 1);
        let v = &head[k][k..];
        for col in tail.iter_mut() {
            let f = T::lit(2.0) * dot(v, &col[k..]) / vnorm_sq;
            for (c, &vi) in col[k..].iter_mut().zip(v) {
                *c = *c - f * vi;
            }
        }
        let f = T::lit(2.0) * dot(v, &y[k..]) / vnorm_sq;
        for (c, &vi) in y[k..].iter_mut().zip(v) {
            *c = *c - f * vi;
        }
    }

    // back substitution with R (diag on the diagonal, q[j][i] above it)
    let mut z = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for j in (i + 1)..n {
            s = s - q[j][i] * z[j];
        }
        z[i] = s / diag[i];
    }
    Some(z)
}

/// Numerical rank of a dense `rows x cols` matrix by Gaussian elimination
/// with partial pivoting.
pub fn rank<T: Scalar>(rows: &[Vec<T>], cols: usize) -> usize {
    let mut a: Vec<Vec<T>> = rows.to_vec();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(T::zero(), |m, v| m.max(v.abs()));
    if scale == T::zero() {
        return 0;
    }
    let tol = scale * T::epsilon() * T::from_count(rows.len().max(cols)) * T::lit(16.0);
    let mut r = 0;
    for c in 0..cols {
        if r == a.len() {
            break;
        }
        let (piv, best) = (r..a.len())
            .map(|i| (i, a[i][c].abs()))
            .fold((r, T::zero()), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= tol {
            continue;
        }
        a.swap(r, piv);
        for i in (r + 1)..a.len() {
            let f = a[i][c] / a[r][c];
            if f != T::zero() {
                for k in c..cols {
                    a[i][k] = a[i][k] - f * a[r][k];
                }
            }
        }
        r += 1;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> ColMatrix<f64> {
        let mut m = ColMatrix::zeros(rows.len(), rows[0].len());
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }

    #[test]
    fn qr_solves_square_system() {
        // [[4,2],[2,3]] z = [2,1] -> z = [0.5, 0]
        let a = matrix(&[&[4.0, 2.0], &[2.0, 3.0]]);
        let z = least_squares_qr(&a, &[0, 1], &[2.0, 1.0]).unwrap();
        assert!((z[0] - 0.5).abs() < 1e-14 && z[1].abs() < 1e-14);
    }

    #[test]
    fn qr_overdetermined_matches_mean() {
        let a = matrix(&[&[1.0, 9.0], &[1.0, 9.0], &[1.0, 9.0]]);
        let z = least_squares_qr(&a, &[0], &[1.0, 2.0, 6.0]).unwrap();
        assert!((z[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn qr_rejects_dependent_columns() {
        let a = matrix(&[&[1.0, 1.0], &[2.0, 2.0]]);
        assert!(least_squares_qr(&a, &[0, 1], &[1.0, 1.0]).is_none());
    }

    #[test]
    fn products() {
        let a = matrix(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        assert_eq!(a.mul_vec(&[1.0, 1.0]), vec![3.0, 7.0, 11.0]);
        assert_eq!(a.tr_mul_vec(&[1.0, 0.0, 1.0]), vec![6.0, 8.0]);
    }

    #[test]
    fn rank_of_dependent_rows() {
        let rows = vec![
            vec![1.0, 1.0, 0.0],
            vec![0.0, 1.0, 1.0],
            vec![1.0, 2.0, 1.0],
        ];
        assert_eq!(rank(&rows, 3), 2);
        assert_eq!(rank::<f64>(&[], 3), 0);
    }
}
