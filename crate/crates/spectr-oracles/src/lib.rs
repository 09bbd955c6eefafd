//! Deliberately naive reference implementations used by the test suites of
//! the `spectr` crates. Everything operates on plain `f64` slices in
//! row-major order and favors obviousness over speed: triple-loop matrix
//! products, textbook classical Gram-Schmidt, a two-sided Jacobi
//! eigensolver, and central finite differences.
//!
//! Nothing here may depend on `spectr-core`; the point is that a bug in the
//! main crate cannot hide in its own oracle.

/// `m x k` times `k x n` by the definition of matrix multiplication.
pub fn matmul_naive(a: &[f64], m: usize, k: usize, b: &[f64], k2: usize, n: usize) -> Vec<f64> {
    assert_eq!(k, k2, "inner dimensions must agree");
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k2 * n);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a[i * k + p] * b[p * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// `m x n` matrix times length-`n` vector.
pub fn matvec_naive(a: &[f64], m: usize, n: usize, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), m * n);
    assert_eq!(x.len(), n);
    (0..m)
        .map(|i| (0..n).map(|j| a[i * n + j] * x[j]).sum())
        .collect()
}

/// Classical Gram-Schmidt on the columns of a row-major `rows x cols`
/// matrix. Columns that fall inside the span of their predecessors come out
/// as zero columns. Numerically fragile by design -- tests that use it stick
/// to well-conditioned inputs.
pub fn gram_schmidt(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    assert_eq!(a.len(), rows * cols);
    let mut q = a.to_vec();
    for j in 0..cols {
        for i in 0..j {
            let mut proj = 0.0;
            for k in 0..rows {
                proj += q[k * cols + i] * q[k * cols + j];
            }
            for k in 0..rows {
                q[k * cols + j] -= proj * q[k * cols + i];
            }
        }
        let norm: f64 = (0..rows)
            .map(|k| q[k * cols + j].powi(2))
            .sum::<f64>()
            .sqrt();
        if norm <= 1e-10 {
            for k in 0..rows {
                q[k * cols + j] = 0.0;
            }
        } else {
            for k in 0..rows {
                q[k * cols + j] /= norm;
            }
        }
    }
    q
}

/// Eigenvalues of a symmetric `n x n` matrix, descending. Classical cyclic
/// (two-sided) Jacobi; symmetry of the input is the caller's problem.
pub fn sym_eigenvalues(m: &[f64], n: usize) -> Vec<f64> {
    sym_eigen(m, n).0
}

/// Eigenvalues (descending) and matching eigenvectors of a symmetric
/// `n x n` matrix. Eigenvectors are the columns of the returned row-major
/// `n x n` matrix, each with its largest-magnitude entry non-negative.
pub fn sym_eigen(m: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(m.len(), n * n);
    let mut a = m.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q].powi(2);
            }
        }
        if off.sqrt() <= 1e-13 * (1.0 + frob(&a)) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].partial_cmp(&a[i * n + i]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (dst, &src) in order.iter().enumerate() {
        let mut best = 0;
        for k in 0..n {
            if v[k * n + src].abs() > v[best * n + src].abs() {
                best = k;
            }
        }
        let flip = if v[best * n + src] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            vectors[k * n + dst] = flip * v[k * n + src];
        }
    }
    (values, vectors)
}

fn frob(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn finite_difference_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(x.len());
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    for i in 0..x.len() {
        plus[i] = x[i] + h;
        minus[i] = x[i] - h;
        grad.push((f(&plus) - f(&minus)) / (2.0 * h));
        plus[i] = x[i];
        minus[i] = x[i];
    }
    grad
}

/// Indices of the `k` largest scores by exhaustive selection, ties to the
/// lower index, result sorted ascending by index.
pub fn top_k_bruteforce(scores: &[f64], k: usize) -> Vec<usize> {
    let mut taken = vec![false; scores.len()];
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k.min(scores.len()) {
        let mut best: Option<usize> = None;
        for (i, &s) in scores.iter().enumerate() {
            if taken[i] {
                continue;
            }
            match best {
                None => best = Some(i),
                Some(b) if s > scores[b] => best = Some(i),
                _ => {}
            }
        }
        let b = best.unwrap();
        taken[b] = true;
        picked.push(b);
    }
    picked.sort_unstable();
    picked
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_two_by_two() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        assert_eq!(
            matmul_naive(&a, 2, 2, &b, 2, 2),
            vec![19.0, 22.0, 43.0, 50.0]
        );
    }

    #[test]
    fn eigen_of_diagonal() {
        let m = [3.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 5.0];
        let (vals, _) = sym_eigen(&m, 3);
        assert!((vals[0] - 5.0).abs() <= 1e-12);
        assert!((vals[1] - 3.0).abs() <= 1e-12);
        assert!((vals[2] + 1.0).abs() <= 1e-12);
    }

    #[test]
    fn eigen_hand_computed_2x2() {
        // [[2, 1], [1, 2]] has eigenvalues 3 and 1 with eigenvectors
        // (1,1)/sqrt(2) and (1,-1)/sqrt(2).
        let m = [2.0, 1.0, 1.0, 2.0];
        let (vals, vecs) = sym_eigen(&m, 2);
        assert!((vals[0] - 3.0).abs() <= 1e-12);
        assert!((vals[1] - 1.0).abs() <= 1e-12);
        let s = 1.0 / 2.0f64.sqrt();
        assert!((vecs[0] - s).abs() <= 1e-12 && (vecs[2] - s).abs() <= 1e-12);
    }

    #[test]
    fn eigen_reconstructs() {
        // A = Q D Q^T for a small symmetric A built by hand.
        let m = [4.0, 1.0, -2.0, 1.0, 2.0, 0.0, -2.0, 0.0, 3.0];
        let (vals, vecs) = sym_eigen(&m, 3);
        // Rebuild and compare entrywise.
        let mut rebuilt = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    rebuilt[i * 3 + j] += vecs[i * 3 + k] * vals[k] * vecs[j * 3 + k];
                }
            }
        }
        for (x, y) in rebuilt.iter().zip(m.iter()) {
            assert!((x - y).abs() <= 1e-11);
        }
    }

    #[test]
    fn finite_difference_on_quadratic() {
        // f(x) = x0^2 + 3 x1 -> grad (2 x0, 3).
        let f = |x: &[f64]| x[0] * x[0] + 3.0 * x[1];
        let g = finite_difference_grad(f, &[1.5, -2.0], 1e-5);
        assert!((g[0] - 3.0).abs() <= 1e-8);
        assert!((g[1] - 3.0).abs() <= 1e-8);
    }

    #[test]
    fn top_k_ties_prefer_low_index() {
        let scores = [1.0, 5.0, 5.0, 0.0, 5.0];
        assert_eq!(top_k_bruteforce(&scores, 2), vec![1, 2]);
        assert_eq!(top_k_bruteforce(&scores, 3), vec![1, 2, 4]);
    }
}
