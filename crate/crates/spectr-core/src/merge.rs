//! Combining selected experts into a layer output.
//!
//! Two merge rules are implemented. The **two-step** merge averages the
//! hidden vectors and the `B*` matrices separately and multiplies the
//! averages:
//!
//! ```text
//! h* = sum_i w_i h_i        B^ = sum_i w_i B*_i        x* = W x + B^ h*
//! ```
//!
//! The **fused** merge averages each expert's full contribution instead:
//!
//! ```text
//! x* = W x + sum_i w_i B*_i h_i
//! ```
//!
//! The two differ by cross terms `B*_i h_j`: the two-step rule implicitly
//! assumes every expert lays out its rank dimensions the same way, which
//! makes it cheap but sensitive to per-expert rotations of the rank space
//! and unusable when ranks differ. The fused rule multiplies each hidden
//! vector through its own expert's basis first, so it is invariant to
//! those rotations and merges mixed ranks without ceremony.

use rayon::prelude::*;

use crate::adapter::AlignedAdapter;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::router::{
    arrow_prototypes, arrow_scores, mu_weights, softmax_weights, spectr_hidden, spectr_scores,
    top_k, ArrowPrototypeMatrix, HiddenSet, RouterKind, RoutingDecision, RoutingScores,
};
use crate::scalar::Scalar;

/// Which merge rule combines the selected experts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeKind {
    TwoStep,
    Fused,
}

impl std::str::FromStr for MergeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_step" => Ok(MergeKind::TwoStep),
            "fused" => Ok(MergeKind::Fused),
            other => Err(Error::Parameter {
                name: "merge",
                detail: format!("unknown merge kind `{other}` (expected two_step | fused)"),
            }),
        }
    }
}

impl std::fmt::Display for MergeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MergeKind::TwoStep => "two_step",
            MergeKind::Fused => "fused",
        })
    }
}

/// How the selected experts are weighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting<T> {
    Uniform,
    Softmax { temperature: T },
}

/// A merge rule plus its weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeStrategy<T> {
    pub kind: MergeKind,
    pub weighting: Weighting<T>,
}

impl<T: Scalar> Default for MergeStrategy<T> {
    fn default() -> Self {
        Self {
            kind: MergeKind::TwoStep,
            weighting: Weighting::Uniform,
        }
    }
}

/// One linear layer with base weights `W` and a library slice of aligned
/// experts, plus the routing configuration used at this layer.
#[derive(Debug, Clone)]
pub struct AdaptedLayer<T> {
    pub layer_id: String,
    /// `d_out x d_in`.
    pub w: Matrix<T>,
    pub experts: Vec<AlignedAdapter<T>>,
    pub router: RouterKind,
    pub k: usize,
    pub strategy: MergeStrategy<T>,
    /// Precomputed once per layer; only used by the arrow router.
    prototypes: Option<ArrowPrototypeMatrix<T>>,
}

impl<T: Scalar> AdaptedLayer<T> {
    pub fn new(
        layer_id: impl Into<String>,
        w: Matrix<T>,
        experts: Vec<AlignedAdapter<T>>,
        router: RouterKind,
        k: usize,
        strategy: MergeStrategy<T>,
    ) -> Result<Self> {
        let layer_id = layer_id.into();
        if experts.is_empty() {
            return Err(Error::Parameter {
                name: "experts",
                detail: format!("layer `{layer_id}` has no experts"),
            });
        }
        for e in &experts {
            if e.d_out() != w.rows() || e.d_in() != w.cols() {
                return Err(Error::Shape {
                    op: "AdaptedLayer::new",
                    detail: format!(
                        "expert `{}` is {}x{} but W is {}x{}",
                        e.expert_id,
                        e.d_out(),
                        e.d_in(),
                        w.rows(),
                        w.cols()
                    ),
                });
            }
        }
        if k == 0 || k > experts.len() {
            return Err(Error::Parameter {
                name: "k",
                detail: format!("k = {k} with {} experts", experts.len()),
            });
        }
        let expert_refs: Vec<&AlignedAdapter<T>> = experts.iter().collect();
        let prototypes = match router {
            RouterKind::Arrow => Some(arrow_prototypes(&expert_refs)?),
            _ => None,
        };
        Ok(Self {
            layer_id,
            w,
            experts,
            router,
            k,
            strategy,
            prototypes,
        })
    }

    pub fn num_experts(&self) -> usize {
        self.experts.len()
    }

    pub fn d_in(&self) -> usize {
        self.w.cols()
    }

    pub fn d_out(&self) -> usize {
        self.w.rows()
    }

    /// Scores, selects and weights the experts for one input, computing the
    /// hidden vectors of the selected experts along the way.
    pub fn route(&self, x: &Vector<T>) -> Result<RoutedToken<T>> {
        let (scores, decision, hiddens) = match self.router {
            RouterKind::Mu => {
                let scores =
                    RoutingScores::new(self.layer_id.clone(), vec![T::one(); self.experts.len()])?;
                let decision = mu_weights(self.experts.len())?;
                let hiddens: Vec<Vector<T>> = self
                    .experts
                    .iter()
                    .map(|e| spectr_hidden(e, x))
                    .collect::<Result<_>>()?;
                (scores, decision, HiddenSet { hiddens })
            }
            RouterKind::Arrow => {
                let protos = self.prototypes.as_ref().expect("built in new() for arrow");
                let scores = arrow_scores(protos, x)?;
                let decision = top_k(&scores, self.k)?;
                let hiddens: Vec<Vector<T>> = decision
                    .selected
                    .iter()
                    .map(|&t| spectr_hidden(&self.experts[t], x))
                    .collect::<Result<_>>()?;
                (scores, decision, HiddenSet { hiddens })
            }
            RouterKind::Spectr => {
                let refs: Vec<&AlignedAdapter<T>> = self.experts.iter().collect();
                let (scores, all) = spectr_scores(&refs, x)?;
                let decision = top_k(&scores, self.k)?;
                let hiddens = HiddenSet::gather(&all, &decision);
                (scores, decision, hiddens)
            }
        };
        let decision = match self.strategy.weighting {
            Weighting::Uniform => decision,
            Weighting::Softmax { temperature } => softmax_weights(&decision, &scores, temperature)?,
        };
        Ok(RoutedToken {
            scores,
            decision,
            hiddens,
        })
    }

    /// Full adapted forward pass for one input: route, merge, add `W x`.
    pub fn forward(&self, x: &Vector<T>) -> Result<(Vector<T>, RoutedToken<T>)> {
        let routed = self.route(x)?;
        let out = match self.strategy.kind {
            MergeKind::TwoStep => forward_two_step(self, x, &routed.decision, &routed.hiddens)?,
            MergeKind::Fused => forward_fused(self, x, &routed.decision, &routed.hiddens)?,
        };
        Ok((out, routed))
    }
}

/// Everything routing produced for one token at one layer.
#[derive(Debug, Clone)]
pub struct RoutedToken<T> {
    pub scores: RoutingScores<T>,
    pub decision: RoutingDecision<T>,
    pub hiddens: HiddenSet<T>,
}

/// Weighted combination of hidden vectors (`h* = sum_i w_i h_i`).
///
/// All hidden vectors must share one rank; mixed ranks cannot be averaged
/// componentwise and get a dedicated error pointing at the fused merge.
pub fn merge_hidden<T: Scalar>(hiddens: &HiddenSet<T>, weights: &[T]) -> Result<Vector<T>> {
    let first = hiddens.hiddens.first().ok_or(Error::Shape {
        op: "merge_hidden",
        detail: "no hidden vectors selected".to_string(),
    })?;
    let ranks: Vec<usize> = hiddens.hiddens.iter().map(Vector::dim).collect();
    if ranks.iter().any(|&r| r != first.dim()) {
        return Err(Error::MixedRanks { ranks });
    }
    debug_assert_eq!(hiddens.hiddens.len(), weights.len());
    let mut out = Vector::zeros(first.dim());
    for (h, &w) in hiddens.hiddens.iter().zip(weights) {
        out.axpy(w, h);
    }
    Ok(out)
}

/// Weighted combination of the selected experts' `B*` matrices
/// (`B^ = sum_i w_i B*_i`).
pub fn merge_b<T: Scalar>(experts: &[&AlignedAdapter<T>], weights: &[T]) -> Result<Matrix<T>> {
    let first = experts.first().ok_or(Error::Shape {
        op: "merge_b",
        detail: "no experts selected".to_string(),
    })?;
    let (rows, cols) = (first.b_star.rows(), first.b_star.cols());
    let mut out = Matrix::zeros(rows, cols);
    for (e, &w) in experts.iter().zip(weights) {
        if e.b_star.rows() != rows || e.b_star.cols() != cols {
            return Err(Error::Shape {
                op: "merge_b",
                detail: format!(
                    "expert `{}` B* is {}x{} vs {}x{}",
                    e.expert_id,
                    e.b_star.rows(),
                    e.b_star.cols(),
                    rows,
                    cols
                ),
            });
        }
        for (o, &v) in out.data_mut().iter_mut().zip(e.b_star.data()) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// Two-step merged output `x* = W x + B^ h*`.
pub fn forward_two_step<T: Scalar>(
    layer: &AdaptedLayer<T>,
    x: &Vector<T>,
    decision: &RoutingDecision<T>,
    hiddens: &HiddenSet<T>,
) -> Result<Vector<T>> {
    let h_star = merge_hidden(hiddens, &decision.weights)?;
    let selected: Vec<&AlignedAdapter<T>> = decision
        .selected
        .iter()
        .map(|&t| &layer.experts[t])
        .collect();
    let b_hat = merge_b(&selected, &decision.weights)?;
    let mut out = layer.w.matvec(x)?;
    let delta = b_hat.matvec(&h_star)?;
    out.axpy(T::one(), &delta);
    Ok(out)
}

/// Fused merged output `x* = W x + sum_i w_i B*_i h_i`. Handles selected
/// experts of different ranks.
pub fn forward_fused<T: Scalar>(
    layer: &AdaptedLayer<T>,
    x: &Vector<T>,
    decision: &RoutingDecision<T>,
    hiddens: &HiddenSet<T>,
) -> Result<Vector<T>> {
    let mut out = layer.w.matvec(x)?;
    for ((&t, &w), h) in decision
        .selected
        .iter()
        .zip(decision.weights.iter())
        .zip(hiddens.hiddens.iter())
    {
        let contrib = layer.experts[t].b_star.matvec(h)?;
        out.axpy(w, &contrib);
    }
    Ok(out)
}

/// Routing record for one (token, layer) pair of a model run.
#[derive(Debug, Clone)]
pub struct TraceEntry<T> {
    pub token_index: usize,
    pub layer_index: usize,
    pub layer_id: String,
    pub scores: Vec<T>,
    pub decision: RoutingDecision<T>,
}

/// Outputs and the full routing trace of [`run_model`].
#[derive(Debug, Clone)]
pub struct ModelRun<T> {
    pub outputs: Vec<Vector<T>>,
    /// Ordered by token index, then layer index.
    pub trace: Vec<TraceEntry<T>>,
}

/// Runs a stack of adapted layers over a batch of tokens, routing
/// independently at every (token, layer) as it goes; `tanh` is applied
/// between layers (not after the last).
///
/// Tokens are processed in parallel; the outputs and trace come back in
/// token order regardless of scheduling.
pub fn run_model<T: Scalar>(
    layers: &[AdaptedLayer<T>],
    tokens: &[Vector<T>],
) -> Result<ModelRun<T>> {
    for pair in layers.windows(2) {
        if pair[0].d_out() != pair[1].d_in() {
            return Err(Error::Shape {
                op: "run_model",
                detail: format!(
                    "layer `{}` outputs dim {} but layer `{}` expects {}",
                    pair[0].layer_id,
                    pair[0].d_out(),
                    pair[1].layer_id,
                    pair[1].d_in()
                ),
            });
        }
    }

    let per_token: Vec<(Vector<T>, Vec<TraceEntry<T>>)> = tokens
        .par_iter()
        .enumerate()
        .map(|(token_index, token)| {
            let mut x = token.clone();
            let mut entries = Vec::with_capacity(layers.len());
            for (layer_index, layer) in layers.iter().enumerate() {
                let (out, routed) = layer.forward(&x)?;
                entries.push(TraceEntry {
                    token_index,
                    layer_index,
                    layer_id: layer.layer_id.clone(),
                    scores: routed.scores.scores,
                    decision: routed.decision,
                });
                x = if layer_index + 1 < layers.len() {
                    Vector::new(out.as_slice().iter().map(|&v| v.tanh()).collect())
                } else {
                    out
                };
            }
            Ok((x, entries))
        })
        .collect::<Result<_>>()?;

    let mut outputs = Vec::with_capacity(per_token.len());
    let mut trace = Vec::with_capacity(per_token.len() * layers.len());
    for (out, mut entries) in per_token {
        outputs.push(out);
        trace.append(&mut entries);
    }
    Ok(ModelRun { outputs, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{align, LoraAdapter};
    use crate::rng::{gaussian_matrix, gaussian_vector, random_orthonormal, substream};

    type M = Matrix<f64>;
    type V = Vector<f64>;

    fn aligned_expert(seed: u64, layer: &str, d: usize, r: usize) -> AlignedAdapter<f64> {
        let mut rng = substream(seed, "merge-test", 0);
        align(
            &LoraAdapter::new(
                format!("e{seed}"),
                layer,
                gaussian_matrix(&mut rng, d, r),
                gaussian_matrix(&mut rng, r, d),
            )
            .unwrap(),
        )
        .unwrap()
    }

    fn layer_with(
        seeds: std::ops::Range<u64>,
        d: usize,
        r: usize,
        router: RouterKind,
        k: usize,
        kind: MergeKind,
    ) -> AdaptedLayer<f64> {
        let experts: Vec<_> = seeds.map(|s| aligned_expert(s, "layer0", d, r)).collect();
        let mut rng = substream(5_000, "merge-test", 1);
        AdaptedLayer::new(
            "layer0",
            gaussian_matrix(&mut rng, d, d),
            experts,
            router,
            k,
            MergeStrategy {
                kind,
                weighting: Weighting::Uniform,
            },
        )
        .unwrap()
    }

    #[test]
    fn merge_hidden_identity_cancellation_mean() {
        let h1 = V::new(vec![1.0, -2.0]);
        let single = HiddenSet {
            hiddens: vec![h1.clone()],
        };
        assert_eq!(merge_hidden(&single, &[1.0]).unwrap(), h1);

        let pair = HiddenSet {
            hiddens: vec![h1.clone(), h1.scale(-1.0)],
        };
        let merged = merge_hidden(&pair, &[0.5, 0.5]).unwrap();
        assert!(merged.as_slice().iter().all(|&v| v == 0.0));

        let mut rng = substream(200, "merge-test", 2);
        let hs: Vec<V> = (0..4).map(|_| gaussian_vector(&mut rng, 6)).collect();
        let merged = merge_hidden(
            &HiddenSet {
                hiddens: hs.clone(),
            },
            &[0.25; 4],
        )
        .unwrap();
        for j in 0..6 {
            let mean: f64 = hs.iter().map(|h| h.get(j)).sum::<f64>() / 4.0;
            assert!((merged.get(j) - mean).abs() <= 1e-12);
        }
    }

    #[test]
    fn merge_hidden_mixed_ranks_is_an_error() {
        let set = HiddenSet {
            hiddens: vec![V::zeros(2), V::zeros(4)],
        };
        match merge_hidden(&set, &[0.5, 0.5]) {
            Err(Error::MixedRanks { ranks }) => assert_eq!(ranks, vec![2, 4]),
            other => panic!("expected MixedRanks, got {other:?}"),
        }
    }

    #[test]
    fn merge_b_identity_negation_mean() {
        let e1 = aligned_expert(210, "layer0", 8, 3);
        assert_eq!(merge_b(&[&e1], &[1.0]).unwrap(), e1.b_star);

        let mut neg = e1.clone();
        neg.b_star = neg.b_star.scale(-1.0);
        let zero = merge_b(&[&e1, &neg], &[0.5, 0.5]).unwrap();
        assert!(zero.data().iter().all(|&v| v.abs() <= 1e-15));

        let es: Vec<_> = (211..215)
            .map(|s| aligned_expert(s, "layer0", 8, 3))
            .collect();
        let refs: Vec<&AlignedAdapter<f64>> = es.iter().collect();
        let merged = merge_b(&refs, &[0.25; 4]).unwrap();
        for idx in 0..8 * 3 {
            let mean: f64 = es.iter().map(|e| e.b_star.data()[idx]).sum::<f64>() / 4.0;
            assert!((merged.data()[idx] - mean).abs() <= 1e-12);
        }
    }

    #[test]
    fn forward_zero_adapters_is_base_model() {
        let zero = AlignedAdapter {
            expert_id: "z".into(),
            layer_id: "layer0".into(),
            b_star: M::identity(5),
            a_star: M::zeros(5, 5),
            singular_values: vec![0.0; 5],
        };
        let mut rng = substream(220, "merge-test", 3);
        let w: M = gaussian_matrix(&mut rng, 5, 5);
        let layer = AdaptedLayer::new(
            "layer0",
            w.clone(),
            vec![zero],
            RouterKind::Mu,
            1,
            MergeStrategy::default(),
        )
        .unwrap();
        let x = gaussian_vector(&mut rng, 5);
        let (out, _) = layer.forward(&x).unwrap();
        let base = w.matvec(&x).unwrap();
        assert!(out.max_abs_diff(&base) <= 1e-12);
    }

    #[test]
    fn k1_two_step_fused_and_raw_lora_agree() {
        let mut rng = substream(230, "merge-test", 4);
        let raw = LoraAdapter::new(
            "e",
            "layer0",
            gaussian_matrix(&mut rng, 10, 4),
            gaussian_matrix(&mut rng, 4, 10),
        )
        .unwrap();
        let aligned = align(&raw).unwrap();
        let w: M = gaussian_matrix(&mut rng, 10, 10);
        let mk_layer = |kind| {
            AdaptedLayer::new(
                "layer0",
                w.clone(),
                vec![aligned.clone()],
                RouterKind::Spectr,
                1,
                MergeStrategy {
                    kind,
                    weighting: Weighting::Uniform,
                },
            )
            .unwrap()
        };
        let two = mk_layer(MergeKind::TwoStep);
        let fused = mk_layer(MergeKind::Fused);
        for _ in 0..20 {
            let x = gaussian_vector(&mut rng, 10);
            let (y2, _) = two.forward(&x).unwrap();
            let (yf, _) = fused.forward(&x).unwrap();
            let mut exact = w.matvec(&x).unwrap();
            exact.axpy(1.0, &raw.apply(&x).unwrap());
            assert!(y2.max_abs_diff(&yf) <= 1e-12);
            assert!(y2.max_abs_diff(&exact) <= 1e-10);
        }
    }

    #[test]
    fn two_step_matches_explicit_oracle() {
        let layer = layer_with(240..249, 12, 3, RouterKind::Spectr, 4, MergeKind::TwoStep);
        let mut rng = substream(241, "merge-test", 5);
        let x = gaussian_vector(&mut rng, 12);
        let routed = layer.route(&x).unwrap();
        let got = forward_two_step(&layer, &x, &routed.decision, &routed.hiddens).unwrap();

        // Oracle: W x + mean(B*) (mean(h)) with everything materialized
        // through the naive routines.
        let w = &layer.w;
        let mut mean_b = vec![0.0; 12 * 3];
        let mut mean_h = vec![0.0; 3];
        for (&t, h) in routed
            .decision
            .selected
            .iter()
            .zip(routed.hiddens.hiddens.iter())
        {
            for (i, v) in layer.experts[t].b_star.data().iter().enumerate() {
                mean_b[i] += v / 4.0;
            }
            for (i, v) in h.as_slice().iter().enumerate() {
                mean_h[i] += v / 4.0;
            }
        }
        let delta = spectr_oracles::matvec_naive(&mean_b, 12, 3, &mean_h);
        let base = spectr_oracles::matvec_naive(w.data(), 12, 12, x.as_slice());
        for i in 0..12 {
            assert!((got.get(i) - (base[i] + delta[i])).abs() <= 1e-10);
        }
    }

    #[test]
    fn fused_matches_per_expert_oracle_and_differs_from_two_step() {
        let layer = layer_with(250..259, 12, 3, RouterKind::Spectr, 4, MergeKind::Fused);
        let mut rng = substream(251, "merge-test", 6);
        let x = gaussian_vector(&mut rng, 12);
        let routed = layer.route(&x).unwrap();
        let fused = forward_fused(&layer, &x, &routed.decision, &routed.hiddens).unwrap();
        let two = forward_two_step(&layer, &x, &routed.decision, &routed.hiddens).unwrap();

        let mut want = spectr_oracles::matvec_naive(layer.w.data(), 12, 12, x.as_slice());
        for (&t, h) in routed
            .decision
            .selected
            .iter()
            .zip(routed.hiddens.hiddens.iter())
        {
            let contrib =
                spectr_oracles::matvec_naive(layer.experts[t].b_star.data(), 12, 3, h.as_slice());
            for (wv, c) in want.iter_mut().zip(contrib) {
                *wv += 0.25 * c;
            }
        }
        for (i, &w) in want.iter().enumerate() {
            assert!((fused.get(i) - w).abs() <= 1e-10);
        }
        // The cross terms make the rules genuinely different here.
        assert!(fused.max_abs_diff(&two) > 1e-3);
    }

    #[test]
    fn fused_accepts_mixed_ranks_two_step_refuses() {
        let experts = vec![
            aligned_expert(260, "layer0", 10, 2),
            aligned_expert(261, "layer0", 10, 4),
        ];
        let mut rng = substream(262, "merge-test", 7);
        let w: M = gaussian_matrix(&mut rng, 10, 10);
        let x = gaussian_vector(&mut rng, 10);
        let mk = |kind| {
            AdaptedLayer::new(
                "layer0",
                w.clone(),
                experts.clone(),
                RouterKind::Spectr,
                2,
                MergeStrategy {
                    kind,
                    weighting: Weighting::Uniform,
                },
            )
            .unwrap()
        };
        assert!(mk(MergeKind::Fused).forward(&x).is_ok());
        assert!(matches!(
            mk(MergeKind::TwoStep).forward(&x),
            Err(Error::MixedRanks { .. })
        ));
    }

    #[test]
    fn fused_invariant_two_step_sensitive_to_rank_remixing() {
        let d = 8;
        let r = 3;
        let experts = vec![
            aligned_expert(270, "layer0", d, r),
            aligned_expert(271, "layer0", d, r),
        ];
        let mut rng = substream(272, "merge-test", 8);
        let w: M = gaussian_matrix(&mut rng, d, d);
        let x = gaussian_vector(&mut rng, d);

        let mk = |experts: Vec<AlignedAdapter<f64>>, kind| {
            AdaptedLayer::new(
                "layer0",
                w.clone(),
                experts,
                RouterKind::Spectr,
                2,
                MergeStrategy {
                    kind,
                    weighting: Weighting::Uniform,
                },
            )
            .unwrap()
        };

        // Remix expert 1's rank dimensions by an orthogonal Q.
        let q: M = random_orthonormal(&mut rng, r, r);
        let mut remixed = experts.clone();
        remixed[1].b_star = remixed[1].b_star.matmul(&q).unwrap();
        remixed[1].a_star = q.transpose().matmul(&remixed[1].a_star).unwrap();

        let routed = mk(experts.clone(), MergeKind::Fused).route(&x).unwrap();
        assert_eq!(routed.decision.selected, vec![0, 1]);

        let f0 = mk(experts.clone(), MergeKind::Fused).forward(&x).unwrap().0;
        let f1 = mk(remixed.clone(), MergeKind::Fused).forward(&x).unwrap().0;
        assert!(f0.max_abs_diff(&f1) <= 1e-10);

        let t0 = mk(experts, MergeKind::TwoStep).forward(&x).unwrap().0;
        let t1 = mk(remixed, MergeKind::TwoStep).forward(&x).unwrap().0;
        assert!(
            t0.max_abs_diff(&t1) > 1e-3,
            "two-step should feel the remixing"
        );
    }

    #[test]
    fn mu_fused_equals_premerged_model() {
        let experts: Vec<_> = (280..285)
            .map(|s| {
                let mut rng = substream(s, "merge-test", 9);
                LoraAdapter::new(
                    format!("e{s}"),
                    "layer0",
                    gaussian_matrix(&mut rng, 9, 3),
                    gaussian_matrix(&mut rng, 3, 9),
                )
                .unwrap()
            })
            .collect();
        let aligned: Vec<_> = experts.iter().map(|e| align(e).unwrap()).collect();
        let mut rng = substream(286, "merge-test", 10);
        let w: M = gaussian_matrix(&mut rng, 9, 9);
        let layer = AdaptedLayer::new(
            "layer0",
            w.clone(),
            aligned,
            RouterKind::Mu,
            1,
            MergeStrategy {
                kind: MergeKind::Fused,
                weighting: Weighting::Uniform,
            },
        )
        .unwrap();
        for _ in 0..10 {
            let x = gaussian_vector(&mut rng, 9);
            let (got, _) = layer.forward(&x).unwrap();
            let mut want = w.matvec(&x).unwrap();
            for e in &experts {
                want.axpy(1.0 / 5.0, &e.apply(&x).unwrap());
            }
            assert!(got.max_abs_diff(&want) <= 1e-9);
        }
    }

    #[test]
    fn forward_linear_in_x_for_fixed_decision() {
        let layer = layer_with(290..295, 7, 2, RouterKind::Spectr, 2, MergeKind::Fused);
        let mut rng = substream(291, "merge-test", 11);
        let x1 = gaussian_vector::<f64>(&mut rng, 7);
        let x2 = gaussian_vector::<f64>(&mut rng, 7);
        let decision = layer.route(&x1).unwrap().decision;

        let eval = |x: &V| {
            let hiddens = HiddenSet {
                hiddens: decision
                    .selected
                    .iter()
                    .map(|&t| spectr_hidden(&layer.experts[t], x).unwrap())
                    .collect(),
            };
            forward_fused(&layer, x, &decision, &hiddens).unwrap()
        };
        let (a, b) = (2.5, -1.25);
        let combo = x1.scale(a).add(&x2.scale(b)).unwrap();
        let lhs = eval(&combo);
        let rhs = eval(&x1).scale(a).add(&eval(&x2).scale(b)).unwrap();
        assert!(lhs.max_abs_diff(&rhs) <= 1e-10);
    }

    #[test]
    fn run_model_single_layer_mu_single_expert() {
        let mut rng = substream(300, "merge-test", 12);
        let raw = LoraAdapter::new(
            "only",
            "layer0",
            gaussian_matrix(&mut rng, 6, 2),
            gaussian_matrix(&mut rng, 2, 6),
        )
        .unwrap();
        let w: M = gaussian_matrix(&mut rng, 6, 6);
        let layer = AdaptedLayer::new(
            "layer0",
            w.clone(),
            vec![align(&raw).unwrap()],
            RouterKind::Mu,
            1,
            MergeStrategy {
                kind: MergeKind::Fused,
                weighting: Weighting::Uniform,
            },
        )
        .unwrap();
        let tokens: Vec<V> = (0..5).map(|_| gaussian_vector(&mut rng, 6)).collect();
        let run = run_model(&[layer], &tokens).unwrap();
        for (x, out) in tokens.iter().zip(run.outputs.iter()) {
            let mut want = w.matvec(x).unwrap();
            want.axpy(1.0, &raw.apply(x).unwrap());
            assert!(out.max_abs_diff(&want) <= 1e-9);
        }
        assert_eq!(run.trace.len(), 5);
    }

    #[test]
    fn run_model_k_equals_t_matches_mu_expert_sets() {
        let mk = |router| {
            let experts: Vec<_> = (310..314)
                .map(|s| aligned_expert(s, "layer0", 6, 2))
                .collect();
            let mut rng = substream(315, "merge-test", 13);
            let w: M = gaussian_matrix(&mut rng, 6, 6);
            let l0 = AdaptedLayer::new(
                "layer0",
                w,
                experts.clone(),
                router,
                4,
                MergeStrategy {
                    kind: MergeKind::Fused,
                    weighting: Weighting::Uniform,
                },
            )
            .unwrap();
            let experts1: Vec<_> = (310..314)
                .map(|s| {
                    let mut e = aligned_expert(s, "layer0", 6, 2);
                    e.layer_id = "layer1".into();
                    e
                })
                .collect();
            let w1: M = gaussian_matrix(&mut rng, 6, 6);
            let l1 = AdaptedLayer::new(
                "layer1",
                w1,
                experts1,
                router,
                4,
                MergeStrategy {
                    kind: MergeKind::Fused,
                    weighting: Weighting::Uniform,
                },
            )
            .unwrap();
            vec![l0, l1]
        };
        let mut rng = substream(316, "merge-test", 14);
        let tokens: Vec<V> = (0..6).map(|_| gaussian_vector(&mut rng, 6)).collect();
        let spectr = run_model(&mk(RouterKind::Spectr), &tokens).unwrap();
        let mu = run_model(&mk(RouterKind::Mu), &tokens).unwrap();
        for (a, b) in spectr.trace.iter().zip(mu.trace.iter()) {
            assert_eq!(a.decision.selected, b.decision.selected);
            assert_eq!(a.decision.weights, b.decision.weights);
        }
    }

    #[test]
    fn run_model_composes_like_single_token_calls() {
        let layers: Vec<AdaptedLayer<f64>> = (0..3)
            .map(|l| {
                let experts: Vec<_> = (0..5)
                    .map(|e| {
                        let mut a = aligned_expert(320 + e, "x", 6, 2);
                        a.layer_id = format!("layer{l}");
                        a.expert_id = format!("expert{e}");
                        a
                    })
                    .collect();
                let mut rng = substream(330 + l, "merge-test", 15);
                AdaptedLayer::new(
                    format!("layer{l}"),
                    gaussian_matrix(&mut rng, 6, 6),
                    experts,
                    RouterKind::Spectr,
                    2,
                    MergeStrategy {
                        kind: MergeKind::Fused,
                        weighting: Weighting::Uniform,
                    },
                )
                .unwrap()
            })
            .collect();
        let mut rng = substream(331, "merge-test", 16);
        let tokens: Vec<V> = (0..8).map(|_| gaussian_vector(&mut rng, 6)).collect();
        let batch = run_model(&layers, &tokens).unwrap();
        for (i, tok) in tokens.iter().enumerate() {
            let single = run_model(&layers, std::slice::from_ref(tok)).unwrap();
            assert!(single.outputs[0].max_abs_diff(&batch.outputs[i]) <= 1e-12);
            for (a, b) in single
                .trace
                .iter()
                .zip(batch.trace[i * 3..(i + 1) * 3].iter())
            {
                assert_eq!(a.decision.selected, b.decision.selected);
                assert_eq!(a.layer_index, b.layer_index);
            }
        }
    }

    #[test]
    fn run_model_rejects_broken_chain() {
        let l0 = layer_with(340..342, 6, 2, RouterKind::Mu, 1, MergeKind::Fused);
        let experts: Vec<_> = (342..344)
            .map(|s| aligned_expert(s, "layer1", 7, 2))
            .collect();
        let mut rng = substream(345, "merge-test", 17);
        let l1 = AdaptedLayer::new(
            "layer1",
            gaussian_matrix::<f64>(&mut rng, 7, 7),
            experts,
            RouterKind::Mu,
            1,
            MergeStrategy::default(),
        )
        .unwrap();
        let x = vec![V::zeros(6)];
        assert!(matches!(run_model(&[l0, l1], &x), Err(Error::Shape { .. })));
    }
}
