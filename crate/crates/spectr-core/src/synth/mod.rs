//! Synthetic stand-ins for the language-model experiments: task subspaces
//! with a controllable similarity knob, adapters forged to align with them
//! (analytically or by actually training), and the evaluation procedures
//! (routing accuracy, score-ratio rank sweep, adapter similarity) that the
//! CLI turns into CSVs.
//!
//! The central construction: each task owns an `m`-dimensional subspace of
//! the input space, and task inputs are (optionally noisy) samples from it.
//! Subspaces are built as
//!
//! ```text
//! basis_t = cos(angle) * C + sin(angle) * D_t
//! ```
//!
//! with a common subspace `C` and mutually orthogonal task-specific parts
//! `D_t`. At `angle = pi/2` the tasks are pairwise orthogonal; shrinking
//! the angle slides every task toward `C`, raising adapter similarity --
//! the confound knob for the similarity-vs-routing experiments.

mod eval;
mod forge;
mod tasks;

pub use eval::{
    adapter_cosine_matrix, eval_routing_accuracy, eval_score_ratio, run_rank_sweep, RatioStats,
    RoutingMetrics, SimilarityMatrix, SweepConfig, SweepRow, TaskMetrics,
};
pub use forge::{
    forge_expert_analytic, forge_expert_sgd, forge_library, sgd_gradients, ExpertForgeConfig,
    ForgeMode, SgdConfig,
};
pub use tasks::{gen_tasks, sample_inputs, TaskSpec};

/// Default experiment dimensions, shared by the CLI and the test suites.
///
/// `t_count = 9` tasks and `k = 4` mirror the reference setup; the rest are
/// sized so a full experiment finishes in seconds on a laptop.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Number of tasks (and experts per layer).
    pub t_count: usize,
    /// Input and output dimension of every layer (square layers).
    pub d: usize,
    /// Task subspace dimension.
    pub m: usize,
    /// Adapter rank.
    pub rank: usize,
    /// Routing fan-in.
    pub k: usize,
    /// Evaluation inputs sampled per task.
    pub n_per_task: usize,
    /// Layers in the forged library.
    pub num_layers: usize,
    /// Task-similarity knob; `pi/2` = pairwise orthogonal tasks.
    pub overlap_angle: f64,
    /// Isotropic input noise level.
    pub noise_sigma: f64,
    /// Master seed; every random quantity derives from it.
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            t_count: 9,
            d: 64,
            m: 4,
            rank: 8,
            k: 4,
            n_per_task: 1000,
            num_layers: 1,
            overlap_angle: std::f64::consts::FRAC_PI_2,
            noise_sigma: 0.0,
            seed: 42,
        }
    }
}
