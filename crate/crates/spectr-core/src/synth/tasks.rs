use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::rng::{gaussian_vector, random_orthonormal, substream};
use crate::scalar::Scalar;

/// One synthetic task: an orthonormal basis of its input subspace plus the
/// parameters inputs are sampled with.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec<T> {
    pub task_id: String,
    /// `d_in x m`, orthonormal columns.
    pub basis: Matrix<T>,
    /// The angle this task's subspace makes with the shared one; `pi/2`
    /// means no shared component.
    pub overlap_angle: f64,
    pub noise_sigma: f64,
    /// The master seed the task family was generated from.
    pub seed: u64,
}

impl<T: Scalar> TaskSpec<T> {
    pub fn d_in(&self) -> usize {
        self.basis.rows()
    }

    pub fn subspace_dim(&self) -> usize {
        self.basis.cols()
    }
}

/// Generates `t_count` task subspaces of dimension `m` inside `R^{d_in}`.
///
/// All bases are drawn from one orthonormal frame, so at
/// `overlap_angle = pi/2` the tasks are exactly pairwise orthogonal, and at
/// smaller angles every pair of bases has all principal cosines equal to
/// `cos^2(angle)`. Feasibility: the frame needs `t_count * m` columns at
/// `pi/2`, `(t_count + 1) * m` at intermediate angles (the shared subspace
/// consumes its own `m`), and just `m` at angle 0.
pub fn gen_tasks<T: Scalar>(
    t_count: usize,
    d_in: usize,
    m: usize,
    overlap_angle: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<TaskSpec<T>>> {
    if t_count == 0 {
        return Err(Error::Parameter {
            name: "t_count",
            detail: "need at least one task".into(),
        });
    }
    if m == 0 || m > d_in {
        return Err(Error::Parameter {
            name: "m",
            detail: format!("subspace dimension {m} must be in 1..={d_in}"),
        });
    }
    if !(0.0..=FRAC_PI_2 + 1e-12).contains(&overlap_angle) {
        return Err(Error::Parameter {
            name: "overlap_angle",
            detail: format!("{overlap_angle} is outside [0, pi/2]"),
        });
    }
    if noise_sigma < 0.0 {
        return Err(Error::Parameter {
            name: "noise_sigma",
            detail: format!("{noise_sigma} is negative"),
        });
    }

    let orthogonal = (overlap_angle - FRAC_PI_2).abs() <= 1e-12;
    let degenerate = overlap_angle <= 1e-12;
    let frame_cols = if orthogonal {
        t_count * m
    } else if degenerate {
        m
    } else {
        (t_count + 1) * m
    };
    if frame_cols > d_in {
        return Err(Error::Parameter {
            name: "t_count",
            detail: format!(
                "{t_count} tasks of dimension {m} at angle {overlap_angle:.4} need a \
                 {frame_cols}-column orthonormal frame, but d_in is only {d_in}"
            ),
        });
    }

    let mut rng = substream(seed, "tasks", 0);
    let frame: Matrix<T> = random_orthonormal(&mut rng, d_in, frame_cols);
    let column = |j: usize, i: usize| frame.get(i, j);

    let (cos_a, sin_a) = (T::of(overlap_angle.cos()), T::of(overlap_angle.sin()));
    let tasks = (0..t_count)
        .map(|t| {
            let basis = Matrix::from_fn(d_in, m, |i, j| {
                if orthogonal {
                    column(t * m + j, i)
                } else if degenerate {
                    column(j, i)
                } else {
                    cos_a * column(j, i) + sin_a * column((t + 1) * m + j, i)
                }
            });
            TaskSpec {
                task_id: format!("task{t}"),
                basis,
                overlap_angle,
                noise_sigma,
                seed,
            }
        })
        .collect();
    Ok(tasks)
}

/// Draws `n` inputs for a task: `x = basis * z + eps` with `z` standard
/// normal in the subspace and `eps` isotropic noise of the task's sigma.
///
/// The stream is keyed by `(seed, task_id)`, so different tasks sampled
/// from the same seed are independent and any task resampled with the same
/// arguments reproduces exactly.
pub fn sample_inputs<T: Scalar>(task: &TaskSpec<T>, n: usize, seed: u64) -> Vec<Vector<T>> {
    let mut rng = substream(seed, &format!("inputs:{}", task.task_id), 0);
    let d = task.d_in();
    let m = task.subspace_dim();
    let sigma = T::of(task.noise_sigma);
    (0..n)
        .map(|_| {
            let z: Vector<T> = gaussian_vector(&mut rng, m);
            let mut x = Vector::zeros(d);
            for j in 0..m {
                let zj = z.get(j);
                for i in 0..d {
                    let v = x.get(i) + task.basis.get(i, j) * zj;
                    x.set(i, v);
                }
            }
            if sigma > T::zero() {
                let eps: Vector<T> = gaussian_vector(&mut rng, d);
                x.axpy(sigma, &eps);
            }
            x
        })
        .collect()
}
