//! Routing quality measurements over a forged library.
//!
//! Three instruments:
//!
//! * [`eval_routing_accuracy`]: how often each router's top-1 / top-k pick
//!   contains the expert that was forged for the input's task.
//! * [`eval_score_ratio`]: how dominant the true expert's score is,
//!   `score_true / score_max`, averaged over inputs. Softer than accuracy
//!   and the quantity the rank sweep plots.
//! * [`adapter_cosine_matrix`]: pairwise cosine between flattened adapter
//!   products, the similarity measure the confound experiments correlate
//!   against routing quality.
//!
//! All of them take the task list alongside the library and insist the two
//! line up index-by-index -- expert `t` must have been forged for task `t`.

use rayon::prelude::*;

use crate::adapter::{align_library, AdapterLibrary, AlignedAdapter, LibraryMode};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::router::{
    arrow_prototypes, arrow_scores, spectr_scores, top_k, ArrowPrototypeMatrix, RouterKind,
    RoutingScores,
};
use crate::scalar::Scalar;
use crate::synth::forge::{forge_library, ExpertForgeConfig, ForgeMode};
use crate::synth::tasks::{gen_tasks, sample_inputs, TaskSpec};

/// Routing accuracy for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskMetrics {
    pub task_id: String,
    /// Fraction of samples whose single best-scoring expert is the task's
    /// own.
    pub top1: f64,
    /// Fraction of samples whose top-k selection contains the task's own
    /// expert.
    pub topk: f64,
    /// Samples scored: inputs times layers.
    pub n: usize,
}

/// Accuracy of one router over a whole task family.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingMetrics {
    pub router: RouterKind,
    pub k: usize,
    pub per_task: Vec<TaskMetrics>,
    pub mean_top1: f64,
    pub mean_topk: f64,
    /// Hit rate of picking `k` of `T` experts uniformly at random, `k / T`.
    /// The mu router lands exactly here by construction.
    pub random_baseline: f64,
}

/// Mean and spread of `score_true / score_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioStats {
    pub mean: f64,
    /// Population standard deviation over the included samples.
    pub std: f64,
    /// Included samples.
    pub n: usize,
    /// Samples dropped because every expert scored exactly zero (the ratio
    /// is undefined there). With every sample excluded, `mean` and `std`
    /// are reported as 0 with `n = 0`.
    pub excluded: usize,
}

/// Pairwise adapter similarity, layer-averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub expert_ids: Vec<String>,
    /// `cosines[i][j]`: cosine between the flattened products `B_i A_i` and
    /// `B_j A_j`, averaged over layers. Symmetric, unit diagonal.
    pub cosines: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    /// Mean of the strictly-off-diagonal entries; 0 for a single expert.
    pub fn mean_off_diagonal(&self) -> f64 {
        let t = self.expert_ids.len();
        if t < 2 {
            return 0.0;
        }
        let mut sum = 0.0;
        for (i, row) in self.cosines.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if i != j {
                    sum += c;
                }
            }
        }
        sum / (t * (t - 1)) as f64
    }
}

fn aligned_views<T: Scalar>(lib: &AdapterLibrary<T>) -> Result<Vec<Vec<&AlignedAdapter<T>>>> {
    if lib.mode != LibraryMode::Aligned {
        return Err(Error::Validation(
            "evaluation needs an aligned library; run align_library first".into(),
        ));
    }
    (0..lib.num_layers())
        .map(|l| {
            lib.aligned_layer(l).ok_or_else(|| {
                Error::Validation(format!(
                    "layer {l} holds raw experts despite the aligned mode"
                ))
            })
        })
        .collect()
}

fn check_pairing<T: Scalar>(lib: &AdapterLibrary<T>, tasks: &[TaskSpec<T>]) -> Result<()> {
    let ids = lib.expert_ids();
    if ids.len() != tasks.len() {
        return Err(Error::Validation(format!(
            "library has {} experts per layer but {} tasks were supplied",
            ids.len(),
            tasks.len()
        )));
    }
    for (i, (id, task)) in ids.iter().zip(tasks).enumerate() {
        if id != &task.task_id {
            return Err(Error::Validation(format!(
                "expert {i} is `{id}` but task {i} is `{}`; experts must be listed in task order",
                task.task_id
            )));
        }
    }
    Ok(())
}

fn score_layer<T: Scalar>(
    router: RouterKind,
    experts: &[&AlignedAdapter<T>],
    protos: Option<&ArrowPrototypeMatrix<T>>,
    x: &Vector<T>,
) -> Result<RoutingScores<T>> {
    match router {
        // Every expert ties; top-k's lower-index tie break then turns mu
        // into the deterministic "first k experts" selection, whose hit
        // rate equals the k/T random baseline exactly.
        RouterKind::Mu => {
            let first = experts.first().ok_or_else(|| Error::Shape {
                op: "score_layer",
                detail: "empty expert list".into(),
            })?;
            RoutingScores::new(first.layer_id.clone(), vec![T::one(); experts.len()])
        }
        RouterKind::Arrow => arrow_scores(protos.expect("prototypes are precomputed for arrow"), x),
        RouterKind::Spectr => spectr_scores(experts, x).map(|(s, _)| s),
    }
}

/// Scores `n_per_task` fresh inputs per task through every layer and
/// reports how often the task's own expert wins (top-1) or survives
/// (top-k). Inputs are keyed by `(seed, task)`, so repeated calls with the
/// same arguments are bit-identical.
pub fn eval_routing_accuracy<T: Scalar>(
    lib: &AdapterLibrary<T>,
    tasks: &[TaskSpec<T>],
    router: RouterKind,
    k: usize,
    n_per_task: usize,
    seed: u64,
) -> Result<RoutingMetrics> {
    let views = aligned_views(lib)?;
    check_pairing(lib, tasks)?;
    let t_count = tasks.len();
    if n_per_task == 0 {
        return Err(Error::Parameter {
            name: "n_per_task",
            detail: "need at least one input per task".into(),
        });
    }
    if k == 0 || k > t_count {
        return Err(Error::Parameter {
            name: "k",
            detail: format!("k = {k} must satisfy 1 <= k <= {t_count} experts"),
        });
    }
    let protos = match router {
        RouterKind::Arrow => Some(
            views
                .iter()
                .map(|v| arrow_prototypes(v))
                .collect::<Result<Vec<_>>>()?,
        ),
        _ => None,
    };

    let per_task: Result<Vec<TaskMetrics>> = tasks
        .par_iter()
        .enumerate()
        .map(|(t, task)| {
            let inputs = sample_inputs(task, n_per_task, seed);
            let mut top1_hits = 0usize;
            let mut topk_hits = 0usize;
            let mut n = 0usize;
            for x in &inputs {
                for (layer, experts) in views.iter().enumerate() {
                    let scores =
                        score_layer(router, experts, protos.as_ref().map(|p| &p[layer]), x)?;
                    let best = top_k(&scores, 1)?.selected[0];
                    let chosen = top_k(&scores, k)?.selected;
                    top1_hits += usize::from(best == t);
                    topk_hits += usize::from(chosen.binary_search(&t).is_ok());
                    n += 1;
                }
            }
            Ok(TaskMetrics {
                task_id: task.task_id.clone(),
                top1: top1_hits as f64 / n as f64,
                topk: topk_hits as f64 / n as f64,
                n,
            })
        })
        .collect();
    let per_task = per_task?;
    let mean_top1 = per_task.iter().map(|m| m.top1).sum::<f64>() / t_count as f64;
    let mean_topk = per_task.iter().map(|m| m.topk).sum::<f64>() / t_count as f64;
    Ok(RoutingMetrics {
        router,
        k,
        per_task,
        mean_top1,
        mean_topk,
        random_baseline: k as f64 / t_count as f64,
    })
}

/// Measures `score_true / score_max` per sample and aggregates. A ratio of
/// 1 means the true expert dominates outright; Arrow's decay of this ratio
/// with growing rank is the headline effect of the rank sweep.
pub fn eval_score_ratio<T: Scalar>(
    lib: &AdapterLibrary<T>,
    tasks: &[TaskSpec<T>],
    router: RouterKind,
    n_per_task: usize,
    seed: u64,
) -> Result<RatioStats> {
    let views = aligned_views(lib)?;
    check_pairing(lib, tasks)?;
    if n_per_task == 0 {
        return Err(Error::Parameter {
            name: "n_per_task",
            detail: "need at least one input per task".into(),
        });
    }
    let protos = match router {
        RouterKind::Arrow => Some(
            views
                .iter()
                .map(|v| arrow_prototypes(v))
                .collect::<Result<Vec<_>>>()?,
        ),
        _ => None,
    };

    let per_task: Result<Vec<(Vec<f64>, usize)>> = tasks
        .par_iter()
        .enumerate()
        .map(|(t, task)| {
            let inputs = sample_inputs(task, n_per_task, seed);
            let mut ratios = Vec::with_capacity(inputs.len() * views.len());
            let mut excluded = 0usize;
            for x in &inputs {
                for (layer, experts) in views.iter().enumerate() {
                    let scores =
                        score_layer(router, experts, protos.as_ref().map(|p| &p[layer]), x)?;
                    let own = scores.scores[t].to_f64_lossy();
                    let max = scores
                        .scores
                        .iter()
                        .map(|s| s.to_f64_lossy())
                        .fold(0.0f64, f64::max);
                    if max == 0.0 {
                        excluded += 1;
                    } else {
                        ratios.push(own / max);
                    }
                }
            }
            Ok((ratios, excluded))
        })
        .collect();
    let per_task = per_task?;

    let excluded = per_task.iter().map(|(_, e)| e).sum();
    let all: Vec<f64> = per_task.into_iter().flat_map(|(r, _)| r).collect();
    if all.is_empty() {
        return Ok(RatioStats {
            mean: 0.0,
            std: 0.0,
            n: 0,
            excluded,
        });
    }
    let n = all.len();
    let mean = all.iter().sum::<f64>() / n as f64;
    let var = all.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n as f64;
    Ok(RatioStats {
        mean,
        std: var.sqrt(),
        n,
        excluded,
    })
}

/// Cosine similarity between every pair of experts' full products
/// `B_t A_t`, flattened and layer-averaged. Works on raw and aligned
/// libraries alike (alignment preserves the product). Fails if any expert's
/// product is identically zero, because its direction is undefined.
pub fn adapter_cosine_matrix<T: Scalar>(lib: &AdapterLibrary<T>) -> Result<SimilarityMatrix> {
    let t_count = lib.num_experts();
    let num_layers = lib.num_layers();
    if t_count == 0 || num_layers == 0 {
        return Err(Error::Shape {
            op: "adapter_cosine_matrix",
            detail: "empty library".into(),
        });
    }
    let expert_ids = lib.expert_ids();
    let mut cosines = vec![vec![0.0f64; t_count]; t_count];
    for layer in &lib.layers {
        // Flatten every expert's product once per layer.
        let flats: Result<Vec<Vec<f64>>> = layer
            .experts
            .par_iter()
            .map(|e| {
                let delta = e.delta()?;
                Ok(delta.data().iter().map(|v| v.to_f64_lossy()).collect())
            })
            .collect();
        let flats = flats?;
        let norms: Vec<f64> = flats
            .iter()
            .map(|f| f.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        for (t, norm) in norms.iter().enumerate() {
            if *norm == 0.0 {
                return Err(Error::UndefinedSimilarity {
                    what: format!(
                        "adapter product of expert `{}` at layer `{}`",
                        layer.experts[t].expert_id(),
                        layer.layer_id
                    ),
                });
            }
        }
        for i in 0..t_count {
            for j in i..t_count {
                let dot: f64 = flats[i].iter().zip(&flats[j]).map(|(a, b)| a * b).sum();
                let c = dot / (norms[i] * norms[j]);
                cosines[i][j] += c;
                if j != i {
                    cosines[j][i] += c;
                }
            }
        }
    }
    for row in &mut cosines {
        for c in row.iter_mut() {
            *c /= num_layers as f64;
        }
    }
    // The diagonal is 1 by definition; pin it against rounding.
    for (i, row) in cosines.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    Ok(SimilarityMatrix {
        expert_ids,
        cosines,
    })
}

/// Configuration of the rank sweep. Tasks are one-dimensional on purpose:
/// the signal fits in rank 1 at every sweep point, so any score-ratio decay
/// at higher ranks is attributable to the router, not the task.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub ranks: Vec<usize>,
    pub t_count: usize,
    pub d: usize,
    pub n_per_task: usize,
    pub overlap_angle: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            ranks: vec![1, 2, 4, 8, 16],
            t_count: 9,
            d: 64,
            n_per_task: 1000,
            overlap_angle: std::f64::consts::FRAC_PI_2,
            noise_sigma: 0.0,
            seed: 42,
        }
    }
}

/// One sweep point: a rank and a router with the score-ratio statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub rank: usize,
    pub router: RouterKind,
    pub mean_ratio: f64,
    pub std_ratio: f64,
    pub n: usize,
}

/// Forges a fresh flat-spectrum library at every rank in the sweep and
/// measures the Arrow and SpectR score ratios on it. Tasks and evaluation
/// inputs are identical across ranks (same seed), so rows differ only in
/// the adapters' rank. Rows come out rank-major, Arrow before SpectR.
pub fn run_rank_sweep<T: Scalar>(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if cfg.ranks.is_empty() {
        return Err(Error::Parameter {
            name: "ranks",
            detail: "need at least one rank to sweep".into(),
        });
    }
    let tasks = gen_tasks::<T>(
        cfg.t_count,
        cfg.d,
        1,
        cfg.overlap_angle,
        cfg.noise_sigma,
        cfg.seed,
    )?;
    let mut rows = Vec::with_capacity(cfg.ranks.len() * 2);
    for &rank in &cfg.ranks {
        let forge = ExpertForgeConfig {
            rank,
            mode: ForgeMode::Analytic {
                spectrum: vec![T::one(); rank],
            },
            left_seed: cfg.seed,
        };
        let lib = align_library(&forge_library(&tasks, &forge, 1, cfg.seed)?)?;
        for router in [RouterKind::Arrow, RouterKind::Spectr] {
            let stats = eval_score_ratio(&lib, &tasks, router, cfg.n_per_task, cfg.seed)?;
            rows.push(SweepRow {
                rank,
                router,
                mean_ratio: stats.mean,
                std_ratio: stats.std,
                n: stats.n,
            });
        }
    }
    Ok(rows)
}
