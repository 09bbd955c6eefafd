use super::{thin_qr, Matrix};
use crate::error::Result;
use crate::scalar::Scalar;

/// Thin singular value decomposition `M = U * diag(s) * V^T`.
///
/// `u` is `rows x k`, `s` holds `k` non-negative values in non-increasing
/// order, and `vt` is `k x cols`, where `k` is the number of factor columns
/// requested by the decomposition routine (for the adapter use case, the
/// adapter rank). Columns of `u` and rows of `vt` are orthonormal, including
/// those paired with zero singular values, which are filled in with an
/// arbitrary-but-deterministic completion of the basis.
#[derive(Debug, Clone)]
pub struct SvdFactors<T> {
    pub u: Matrix<T>,
    pub s: Vec<T>,
    pub vt: Matrix<T>,
}

impl<T: Scalar> SvdFactors<T> {
    /// Multiplies the factors back together; intended for testing and
    /// diagnostics, not hot paths.
    pub fn reconstruct(&self) -> Result<Matrix<T>> {
        let mut us = self.u.clone();
        for j in 0..us.cols() {
            for i in 0..us.rows() {
                us.set(i, j, us.get(i, j) * self.s[j]);
            }
        }
        us.matmul(&self.vt)
    }

    /// Number of singular values above `tol * s_max`.
    pub fn numerical_rank(&self, tol: T) -> usize {
        let smax = self.s.first().copied().unwrap_or_else(T::zero);
        if smax == T::zero() {
            return 0;
        }
        self.s.iter().filter(|&&v| v > tol * smax).count()
    }
}

/// SVD of a small dense matrix by one-sided Jacobi rotations.
///
/// Returns `cols` singular triplets: the routine orthogonalizes columns, so
/// the natural thin shape is `rows x cols` for `u` and `cols x cols` for
/// `v`. Intended for the small `r x r` cores arising in [`svd_lowrank`] and
/// for test fixtures; cost is O(rows * cols^2) per sweep.
///
/// Determinism and sign conventions, which matter because downstream code
/// serializes these factors and diffs them bit-for-bit across runs:
/// * singular values sorted non-increasing, ties broken by the original
///   column index (stable),
/// * each column of `v` is flipped so that its largest-magnitude entry
///   (first such entry on ties) is non-negative, with the matching `u`
///   column flipped in tandem.
pub fn svd_small<T: Scalar>(m: &Matrix<T>) -> SvdFactors<T> {
    let rows = m.rows();
    let cols = m.cols();
    let mut g = m.clone();
    let mut v = Matrix::identity(cols);

    let tol = T::jacobi_tol();
    const MAX_SWEEPS: usize = 60;

    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let mut alpha = T::zero();
                let mut beta = T::zero();
                let mut gamma = T::zero();
                for k in 0..rows {
                    let gp = g.get(k, p);
                    let gq = g.get(k, q);
                    alpha += gp * gp;
                    beta += gq * gq;
                    gamma += gp * gq;
                }
                if alpha == T::zero() || beta == T::zero() {
                    continue;
                }
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::of(2.0) * gamma);
                let t = {
                    let denom = zeta.abs() + (T::one() + zeta * zeta).sqrt();
                    let unsigned = T::one() / denom;
                    if zeta < T::zero() {
                        -unsigned
                    } else {
                        unsigned
                    }
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for k in 0..rows {
                    let gp = g.get(k, p);
                    let gq = g.get(k, q);
                    g.set(k, p, c * gp - s * gq);
                    g.set(k, q, s * gp + c * gq);
                }
                for k in 0..cols {
                    let vp = v.get(k, p);
                    let vq = v.get(k, q);
                    v.set(k, p, c * vp - s * vq);
                    v.set(k, q, s * vp + c * vq);
                }
            }
        }
        if !rotated {
            break;
        }
    }

    // Column norms of the rotated matrix are the singular values.
    let mut sigma: Vec<T> = (0..cols)
        .map(|j| {
            let mut acc = T::zero();
            for k in 0..rows {
                let gv = g.get(k, j);
                acc += gv * gv;
            }
            acc.sqrt()
        })
        .collect();

    // Sort triplets by descending singular value, stable in the original
    // column index so exact ties keep a reproducible order.
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| {
        sigma[b]
            .partial_cmp(&sigma[a])
            .expect("singular values are finite")
    });

    let mut u = Matrix::zeros(rows, cols);
    let mut v_sorted = Matrix::zeros(cols, cols);
    let mut s_sorted = Vec::with_capacity(cols);
    let sig_floor = tol * sigma.iter().fold(T::zero(), |m, &x| m.max(x)).max(T::one());
    for (dst, &src) in order.iter().enumerate() {
        let sv = sigma[src];
        s_sorted.push(sv);
        if sv > sig_floor {
            let inv = T::one() / sv;
            for k in 0..rows {
                u.set(k, dst, g.get(k, src) * inv);
            }
        }
        for k in 0..cols {
            v_sorted.set(k, dst, v.get(k, src));
        }
    }
    sigma = s_sorted;
    // Numerically zero singular values are reported as exact zeros so
    // callers can rely on `s[i] == 0` to detect rank deficiency.
    for sv in sigma.iter_mut() {
        if *sv <= sig_floor {
            *sv = T::zero();
        }
    }

    complete_orthonormal_columns(&mut u);
    apply_sign_convention(&mut u, &mut v_sorted);

    SvdFactors {
        u,
        s: sigma,
        vt: v_sorted.transpose(),
    }
}

/// SVD of the product `B * A` without ever materializing it.
///
/// `B` is `d_out x r`, `A` is `r x d_in`. The product has rank at most `r`,
/// so a thin QR of each factor reduces the problem to an `r x r` core:
/// with `B = Q_b R_b` and `A^T = Q_a R_a`,
///
/// ```text
/// B A = Q_b (R_b R_a^T) Q_a^T
/// ```
///
/// and the SVD of the small core `R_b R_a^T` rotates back through `Q_b`
/// and `Q_a`. Cost is O((d_out + d_in) r^2 + r^3) against O(d_out d_in r)
/// just to form the product, which is the difference between microseconds
/// and milliseconds at realistic adapter shapes.
pub fn svd_lowrank<T: Scalar>(b: &Matrix<T>, a: &Matrix<T>) -> Result<SvdFactors<T>> {
    let r = b.cols();
    if a.rows() != r {
        return Err(crate::error::Error::Shape {
            op: "svd_lowrank",
            detail: format!(
                "B is {}x{} but A is {}x{}; inner ranks must agree",
                b.rows(),
                b.cols(),
                a.rows(),
                a.cols()
            ),
        });
    }
    let (qb, rb) = thin_qr(b);
    let (qa, ra) = thin_qr(&a.transpose());
    let core = rb.matmul(&ra.transpose())?;
    let SvdFactors { u: cu, s, vt: cvt } = svd_small(&core);

    let mut u = qb.matmul(&cu)?;
    let mut v = qa.matmul(&cvt.transpose())?;
    // Zero columns of Q (rank-deficient factors) times the core's rotation
    // can leave zero or sub-unit columns in U/V wherever s == 0; restore a
    // clean orthonormal basis there.
    zero_null_columns(&mut u, &s);
    zero_null_columns(&mut v, &s);
    complete_orthonormal_columns(&mut u);
    complete_orthonormal_columns(&mut v);
    apply_sign_convention(&mut u, &mut v);

    Ok(SvdFactors {
        u,
        s,
        vt: v.transpose(),
    })
}

/// Zeroes every column of `m` whose singular value is zero (the rotation
/// back through a rank-deficient Q can leave such columns with norms
/// anywhere in [0, 1]).
fn zero_null_columns<T: Scalar>(m: &mut Matrix<T>, s: &[T]) {
    for (j, &sv) in s.iter().enumerate() {
        if sv == T::zero() {
            for i in 0..m.rows() {
                m.set(i, j, T::zero());
            }
        }
    }
}

/// Replaces each zero column with a unit vector orthogonal to every other
/// column, by Gram-Schmidt over the canonical basis e_0, e_1, ... in order.
/// Deterministic by construction.
#[allow(clippy::needless_range_loop)] // paired indexing into `cand` and `m`
fn complete_orthonormal_columns<T: Scalar>(m: &mut Matrix<T>) {
    let rows = m.rows();
    let cols = m.cols();
    let mut next_canonical = 0usize;
    for j in 0..cols {
        let norm: T = (0..rows)
            .map(|i| m.get(i, j) * m.get(i, j))
            .sum::<T>()
            .sqrt();
        if norm > T::of(0.5) {
            continue;
        }
        // Try canonical vectors until one survives projection.
        while next_canonical < rows {
            let e = next_canonical;
            next_canonical += 1;
            let mut cand = vec![T::zero(); rows];
            cand[e] = T::one();
            for other in 0..cols {
                if other == j {
                    continue;
                }
                let mut proj = T::zero();
                for i in 0..rows {
                    proj += cand[i] * m.get(i, other);
                }
                for i in 0..rows {
                    cand[i] -= proj * m.get(i, other);
                }
            }
            let cn: T = cand.iter().map(|&v| v * v).sum::<T>().sqrt();
            if cn > T::of(0.5) {
                let inv = T::one() / cn;
                for i in 0..rows {
                    m.set(i, j, cand[i] * inv);
                }
                break;
            }
        }
    }
}

/// Canonical sign choice: the largest-magnitude entry of each `v` column
/// (first on ties) is made non-negative; `u` flips in tandem so the product
/// is unchanged.
fn apply_sign_convention<T: Scalar>(u: &mut Matrix<T>, v: &mut Matrix<T>) {
    for j in 0..v.cols() {
        let mut best_idx = 0usize;
        let mut best_abs = T::zero();
        for i in 0..v.rows() {
            let a = v.get(i, j).abs();
            if a > best_abs {
                best_abs = a;
                best_idx = i;
            }
        }
        if v.get(best_idx, j) < T::zero() {
            for i in 0..v.rows() {
                let val = v.get(i, j);
                v.set(i, j, -val);
            }
            for i in 0..u.rows() {
                let val = u.get(i, j);
                u.set(i, j, -val);
            }
        }
    }
}
