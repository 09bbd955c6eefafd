use super::Matrix;
use crate::scalar::Scalar;

/// Thin QR factorization of an `m x n` matrix with `m >= n` intended, though
/// any shape is accepted: returns `(Q, R)` with `Q` of shape `m x n` having
/// orthonormal (or zero, see below) columns and `R` upper triangular `n x n`
/// such that `Q * R == A` up to roundoff.
///
/// Modified Gram-Schmidt with a single reorthogonalization pass, which keeps
/// `Q^T Q` at the identity to working precision even for badly conditioned
/// inputs. When a column of `A` is (numerically) inside the span of the
/// preceding ones, the corresponding column of `Q` is left at zero and the
/// diagonal of `R` records 0 there; callers that need a full basis must
/// complete it themselves.
pub fn thin_qr<T: Scalar>(a: &Matrix<T>) -> (Matrix<T>, Matrix<T>) {
    let m = a.rows();
    let n = a.cols();
    let mut q = a.clone();
    let mut r = Matrix::zeros(n, n);

    // Rank tolerance relative to the largest column norm seen so far.
    let mut col_scale = T::zero();

    for j in 0..n {
        // Two MGS passes against the already-settled columns.
        for _pass in 0..2 {
            for i in 0..j {
                let mut proj = T::zero();
                for k in 0..m {
                    proj += q.get(k, i) * q.get(k, j);
                }
                r.set(i, j, r.get(i, j) + proj);
                for k in 0..m {
                    let v = q.get(k, j) - proj * q.get(k, i);
                    q.set(k, j, v);
                }
            }
        }

        let mut norm = T::zero();
        for k in 0..m {
            let v = q.get(k, j);
            norm += v * v;
        }
        let norm = norm.sqrt();
        col_scale = col_scale.max(norm);

        let tol = T::jacobi_tol().sqrt() * col_scale.max(T::one());
        if norm <= tol {
            // Dependent (or zero) column: zero it out entirely.
            for k in 0..m {
                q.set(k, j, T::zero());
            }
            r.set(j, j, T::zero());
        } else {
            r.set(j, j, norm);
            let inv = T::one() / norm;
            for k in 0..m {
                q.set(k, j, q.get(k, j) * inv);
            }
        }
    }

    (q, r)
}
