//! Turns task specs into LoRA experts.
//!
//! Two forges are available. The analytic one writes down an adapter whose
//! right singular subspace *is* the task subspace (padded with directions
//! from the task's own orthogonal complement when the rank exceeds the
//! subspace dimension), so routing geometry can be studied without any
//! training noise. The SGD one actually fits `B A` to a linear regression
//! target on inputs drawn from the task, which is slower and sloppier on
//! purpose: it produces the kind of adapter a real fine-tune would.

use rand::Rng;

use crate::adapter::{AdapterLibrary, LayerExperts, LibraryMode, LoraAdapter};
use crate::error::{Error, Result};
use crate::linalg::{thin_qr, Matrix, Vector};
use crate::rng::{derive_seed, gaussian_matrix, random_orthonormal, substream};
use crate::scalar::Scalar;
use crate::synth::tasks::{sample_inputs, TaskSpec};
use rayon::prelude::*;

/// How an expert's factors are produced.
#[derive(Debug, Clone)]
pub enum ForgeMode<T: Scalar> {
    /// Closed-form construction with the given singular spectrum
    /// (must be positive and non-increasing, one entry per rank).
    Analytic { spectrum: Vec<T> },
    /// Gradient descent against a random linear target restricted to the
    /// task subspace.
    Sgd(SgdConfig),
}

/// Hyper-parameters for the SGD forge.
#[derive(Debug, Clone)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    /// Number of training inputs drawn from the task; batches cycle through
    /// them in order, so the run is deterministic given the seed.
    pub dataset_size: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 1e-4,
            steps: 200,
            batch_size: 8,
            dataset_size: 64,
        }
    }
}

/// Everything the forge needs besides the task itself.
#[derive(Debug, Clone)]
pub struct ExpertForgeConfig<T: Scalar> {
    pub rank: usize,
    pub mode: ForgeMode<T>,
    /// Seed for the shared left factor of analytic experts. All experts in
    /// one layer draw the same `U`, so score differences between experts
    /// come from the right factors alone.
    pub left_seed: u64,
}

fn check_spectrum<T: Scalar>(spectrum: &[T], rank: usize) -> Result<()> {
    if spectrum.len() != rank {
        return Err(Error::Parameter {
            name: "spectrum",
            detail: format!(
                "expected {} entries for rank {}, got {}",
                rank,
                rank,
                spectrum.len()
            ),
        });
    }
    for (i, s) in spectrum.iter().enumerate() {
        // Deliberately `!(> 0)` so NaN entries are rejected too.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(*s > T::zero()) {
            return Err(Error::Parameter {
                name: "spectrum",
                detail: format!(
                    "entry {} is {:?}, all singular values must be positive",
                    i, s
                ),
            });
        }
        if i > 0 && spectrum[i] > spectrum[i - 1] {
            return Err(Error::Parameter {
                name: "spectrum",
                detail: format!(
                    "entry {} exceeds entry {}; spectrum must be non-increasing",
                    i,
                    i - 1
                ),
            });
        }
    }
    Ok(())
}

/// Extends `basis` (d x m, orthonormal columns) with `extra` fresh
/// orthonormal columns from its orthogonal complement.
fn pad_orthonormal<T: Scalar>(
    basis: &Matrix<T>,
    extra: usize,
    rng: &mut impl Rng,
) -> Result<Matrix<T>> {
    let d = basis.rows();
    let m = basis.cols();
    for _ in 0..16 {
        let g = gaussian_matrix::<T>(rng, d, extra);
        let stacked = Matrix::from_fn(d, m + extra, |i, j| {
            if j < m {
                basis.get(i, j)
            } else {
                g.get(i, j - m)
            }
        });
        let (q, r) = thin_qr(&stacked);
        let deficient = (m..m + extra).any(|j| r.get(j, j) == T::zero());
        if !deficient {
            return Ok(Matrix::from_fn(d, extra, |i, j| q.get(i, m + j)));
        }
    }
    Err(Error::Parameter {
        name: "rank",
        detail: "could not extend the task basis to an orthonormal frame".into(),
    })
}

fn forge_analytic_at<T: Scalar>(
    task: &TaskSpec<T>,
    cfg: &ExpertForgeConfig<T>,
    layer_index: u64,
    layer_id: &str,
) -> Result<LoraAdapter<T>> {
    let spectrum = match &cfg.mode {
        ForgeMode::Analytic { spectrum } => spectrum,
        ForgeMode::Sgd(_) => {
            return Err(Error::Parameter {
                name: "mode",
                detail: "analytic forge called with an SGD mode".into(),
            })
        }
    };
    let r = cfg.rank;
    let d = task.d_in();
    let m = task.subspace_dim();
    check_spectrum(spectrum, r)?;
    if r == 0 || r > d {
        return Err(Error::Parameter {
            name: "rank",
            detail: format!("rank {} is outside 1..={} for dimension {}", r, d, d),
        });
    }

    // Right frame P (d x r): task basis first, then complement directions.
    let p = if r <= m {
        Matrix::from_fn(d, r, |i, j| task.basis.get(i, j))
    } else {
        let mut pad_rng = substream(
            task.seed,
            &format!("forge-pad:{}", task.task_id),
            layer_index,
        );
        let pad = pad_orthonormal(&task.basis, r - m, &mut pad_rng)?;
        Matrix::from_fn(d, r, |i, j| {
            if j < m {
                task.basis.get(i, j)
            } else {
                pad.get(i, j - m)
            }
        })
    };

    // Shared left factor: same (left_seed, layer) => same U for every task.
    let mut left_rng = substream(cfg.left_seed, "forge-left", layer_index);
    let u = random_orthonormal::<T>(&mut left_rng, d, r);

    // Random orthogonal gauge so B, A are a generic factorization of the
    // product rather than its SVD.
    let mut gauge_rng = substream(
        task.seed,
        &format!("forge-gauge:{}", task.task_id),
        layer_index,
    );
    let q_g = random_orthonormal::<T>(&mut gauge_rng, r, r);

    // B = U diag(s) Q_g, A = Q_g^T P^T, so B A = U diag(s) P^T.
    let us = Matrix::from_fn(d, r, |i, j| u.get(i, j) * spectrum[j]);
    let b = us.matmul(&q_g)?;
    let a = q_g.transpose().matmul(&p.transpose())?;
    LoraAdapter::new(&task.task_id, layer_id, b, a)
}

/// Builds one expert in closed form: `B A = U diag(spectrum) P^T` where the
/// columns of `P` span the task subspace (plus complement padding when the
/// rank exceeds the subspace dimension), `U` is the shared left factor, and
/// a random orthogonal gauge is folded between `B` and `A`.
pub fn forge_expert_analytic<T: Scalar>(
    task: &TaskSpec<T>,
    cfg: &ExpertForgeConfig<T>,
) -> Result<LoraAdapter<T>> {
    forge_analytic_at(task, cfg, 0, "layer0")
}

/// Loss and gradients of `L = (1/(2n)) sum_i ||B A x_i - y_i||^2` at the
/// given factors. Exposed so the descent direction can be checked against
/// finite differences.
pub fn sgd_gradients<T: Scalar>(
    b: &Matrix<T>,
    a: &Matrix<T>,
    inputs: &[Vector<T>],
    targets: &[Vector<T>],
) -> Result<(Matrix<T>, Matrix<T>, f64)> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::Parameter {
            name: "batch",
            detail: format!(
                "need matching non-empty inputs/targets, got {} and {}",
                inputs.len(),
                targets.len()
            ),
        });
    }
    let n = inputs.len();
    let inv_n = T::of(1.0 / n as f64);
    let mut g_b = Matrix::zeros(b.rows(), b.cols());
    let mut g_a = Matrix::zeros(a.rows(), a.cols());
    let mut loss = 0.0f64;
    for (x, y) in inputs.iter().zip(targets) {
        let ax = a.matvec(x)?;
        let pred = b.matvec(&ax)?;
        let res = pred.sub(y)?;
        loss += res.dot(&res)?.to_f64_lossy();
        let bt_res = b.transpose().matvec(&res)?;
        for i in 0..g_b.rows() {
            for j in 0..g_b.cols() {
                let v = g_b.get(i, j) + res.get(i) * ax.get(j) * inv_n;
                g_b.set(i, j, v);
            }
        }
        for i in 0..g_a.rows() {
            for j in 0..g_a.cols() {
                let v = g_a.get(i, j) + bt_res.get(i) * x.get(j) * inv_n;
                g_a.set(i, j, v);
            }
        }
    }
    loss /= 2.0 * n as f64;
    Ok((g_b, g_a, loss))
}

fn forge_sgd_at<T: Scalar>(
    task: &TaskSpec<T>,
    cfg: &ExpertForgeConfig<T>,
    seed: u64,
    layer_id: &str,
) -> Result<(LoraAdapter<T>, Vec<f64>)> {
    let sgd = match &cfg.mode {
        ForgeMode::Sgd(sgd) => sgd,
        ForgeMode::Analytic { .. } => {
            return Err(Error::Parameter {
                name: "mode",
                detail: "SGD forge called with an analytic mode".into(),
            })
        }
    };
    let d = task.d_in();
    let r = cfg.rank;
    if r == 0 || r > d {
        return Err(Error::Parameter {
            name: "rank",
            detail: format!("rank {} is outside 1..={} for dimension {}", r, d, d),
        });
    }
    if sgd.batch_size == 0 || sgd.dataset_size == 0 {
        return Err(Error::Parameter {
            name: "batch_size",
            detail: "batch_size and dataset_size must be positive".into(),
        });
    }
    if !(sgd.learning_rate.is_finite() && sgd.learning_rate > 0.0) {
        return Err(Error::Parameter {
            name: "learning_rate",
            detail: format!("got {}, must be positive and finite", sgd.learning_rate),
        });
    }

    // Target: a fixed random linear map, scaled so outputs stay O(||x||).
    let mut target_rng = substream(seed, &format!("sgd-target:{}", task.task_id), 0);
    let scale = T::of(1.0 / (d as f64).sqrt());
    let target = gaussian_matrix::<T>(&mut target_rng, d, d).scale(scale);

    // Training data lives on its own derived seed so later evaluation draws
    // from the same master seed never replay it.
    let inputs = sample_inputs(task, sgd.dataset_size, derive_seed(seed, "sgd-data", 0));
    let targets: Result<Vec<Vector<T>>> = inputs.iter().map(|x| target.matvec(x)).collect();
    let targets = targets?;

    let mut b = Matrix::zeros(d, r);
    let mut init_rng = substream(seed, &format!("sgd-init:{}", task.task_id), 0);
    let mut a = gaussian_matrix::<T>(&mut init_rng, r, d).scale(T::of(0.01));

    let lr = T::of(sgd.learning_rate);
    let n = inputs.len();
    let mut trace = Vec::with_capacity(sgd.steps);
    for step in 0..sgd.steps {
        let start = (step * sgd.batch_size) % n;
        let batch_x: Vec<Vector<T>> = (0..sgd.batch_size)
            .map(|i| inputs[(start + i) % n].clone())
            .collect();
        let batch_y: Vec<Vector<T>> = (0..sgd.batch_size)
            .map(|i| targets[(start + i) % n].clone())
            .collect();
        let (g_b, g_a, loss) = sgd_gradients(&b, &a, &batch_x, &batch_y)?;
        trace.push(loss);
        if !loss.is_finite() || loss > 1e6 {
            return Err(Error::Diverged { step, loss, trace });
        }
        b = b.sub(&g_b.scale(lr))?;
        a = a.sub(&g_a.scale(lr))?;
    }

    let adapter = LoraAdapter::new(&task.task_id, layer_id, b, a)?;
    Ok((adapter, trace))
}

/// Fits `B A` to a random linear target on task inputs by plain minibatch
/// SGD and returns the adapter together with the per-step loss trace.
/// Fails with [`Error::Diverged`] if the loss leaves `[0, 1e6]`.
pub fn forge_expert_sgd<T: Scalar>(
    task: &TaskSpec<T>,
    cfg: &ExpertForgeConfig<T>,
    seed: u64,
) -> Result<(LoraAdapter<T>, Vec<f64>)> {
    forge_sgd_at(task, cfg, seed, "layer0")
}

/// Forges one expert per task for `num_layers` layers and assembles the raw
/// library. Layers are tagged `layer0..layerN-1`; analytic experts reuse the
/// shared left factor per layer, SGD experts get independent derived seeds.
pub fn forge_library<T: Scalar>(
    tasks: &[TaskSpec<T>],
    cfg: &ExpertForgeConfig<T>,
    num_layers: usize,
    seed: u64,
) -> Result<AdapterLibrary<T>> {
    if tasks.is_empty() || num_layers == 0 {
        return Err(Error::Parameter {
            name: "tasks",
            detail: "need at least one task and one layer".into(),
        });
    }
    let d = tasks[0].d_in();
    if tasks.iter().any(|t| t.d_in() != d) {
        return Err(Error::Parameter {
            name: "tasks",
            detail: "all tasks must share the same input dimension".into(),
        });
    }
    let t_count = tasks.len();
    let layers: Result<Vec<LayerExperts<T>>> = (0..num_layers)
        .map(|layer| {
            let layer_id = format!("layer{}", layer);
            let experts: Result<Vec<_>> = tasks
                .par_iter()
                .enumerate()
                .map(|(t, task)| match &cfg.mode {
                    ForgeMode::Analytic { .. } => {
                        forge_analytic_at(task, cfg, layer as u64, &layer_id)
                    }
                    ForgeMode::Sgd(_) => {
                        let expert_seed =
                            derive_seed(seed, "forge-sgd", (layer * t_count + t) as u64);
                        forge_sgd_at(task, cfg, expert_seed, &layer_id).map(|(a, _)| a)
                    }
                })
                .collect();
            Ok(LayerExperts {
                layer_id,
                experts: experts?
                    .into_iter()
                    .map(crate::adapter::Expert::Raw)
                    .collect(),
            })
        })
        .collect();
    AdapterLibrary::new(LibraryMode::Raw, layers?)
}
