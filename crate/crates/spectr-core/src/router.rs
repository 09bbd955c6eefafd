//! Per-token expert scoring and selection.
//!
//! Three routers share one aligned adapter library:
//!
//! * **mu**: no scoring at all -- every expert, uniform weight. The dense
//!   baseline.
//! * **arrow**: each expert is summarized by a single prototype, its top
//!   right-singular direction `v_1`; an input is scored by `|v_1 . x|`.
//! * **spectr**: each expert scores an input by `|| A* x ||`, the length of
//!   the input's shadow in the expert's full rank-`r` principal subspace.
//!   Arrow's signal is component 0 of that hidden vector, so a SpectR score
//!   can never be smaller than the same expert's (unnormalized) Arrow
//!   score.
//!
//! Scoring never mutates the library; routing any number of tokens in
//! parallel is safe.

use crate::adapter::AlignedAdapter;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::scalar::Scalar;

/// Which routing rule to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouterKind {
    Mu,
    Arrow,
    Spectr,
}

impl std::fmt::Display for RouterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RouterKind::Mu => "mu",
            RouterKind::Arrow => "arrow",
            RouterKind::Spectr => "spectr",
        })
    }
}

impl std::str::FromStr for RouterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mu" => Ok(RouterKind::Mu),
            "arrow" => Ok(RouterKind::Arrow),
            "spectr" => Ok(RouterKind::Spectr),
            other => Err(Error::Parameter {
                name: "router",
                detail: format!("unknown router `{other}` (expected mu | arrow | spectr)"),
            }),
        }
    }
}

/// Stacked Arrow prototypes for one layer: row `t` is expert `t`'s unit
/// top right-singular vector.
#[derive(Debug, Clone)]
pub struct ArrowPrototypeMatrix<T> {
    pub layer_id: String,
    /// `T x d_in`; unit rows except for the degenerate ones below.
    pub p: Matrix<T>,
    /// Experts whose top singular value is zero and whose prototype row is
    /// therefore zero. Recorded so callers can warn instead of silently
    /// routing nothing to them.
    pub degenerate: Vec<usize>,
}

/// Per-expert scores for one token at one layer. Higher is better; all
/// entries are finite and non-negative.
#[derive(Debug, Clone)]
pub struct RoutingScores<T> {
    pub layer_id: String,
    pub token_index: usize,
    pub scores: Vec<T>,
}

impl<T: Scalar> RoutingScores<T> {
    pub fn new(layer_id: impl Into<String>, scores: Vec<T>) -> Result<Self> {
        if scores.iter().any(|s| !s.is_finite() || *s < T::zero()) {
            return Err(Error::NonFinite {
                what: "routing scores".to_string(),
            });
        }
        Ok(Self {
            layer_id: layer_id.into(),
            token_index: 0,
            scores,
        })
    }

    pub fn num_experts(&self) -> usize {
        self.scores.len()
    }
}

/// The outcome of selection: which experts participate and with what
/// weights. Indices are ascending; weights are non-negative and sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingDecision<T> {
    pub selected: Vec<usize>,
    pub weights: Vec<T>,
}

/// Hidden vectors `h_t = A*_t x` for the *selected* experts, in the same
/// order as `RoutingDecision::selected`.
#[derive(Debug, Clone)]
pub struct HiddenSet<T> {
    pub hiddens: Vec<Vector<T>>,
}

impl<T: Scalar> HiddenSet<T> {
    /// Picks the selected experts' hidden vectors out of a full per-expert
    /// list (as returned by [`spectr_scores`]).
    pub fn gather(all: &[Vector<T>], decision: &RoutingDecision<T>) -> Self {
        Self {
            hiddens: decision.selected.iter().map(|&t| all[t].clone()).collect(),
        }
    }
}

/// Builds the prototype matrix for one layer from its aligned experts.
///
/// Row 0 of an aligned `A*` is `s_1 * v_1^T`, so the prototype is that row
/// re-normalized to unit length. Experts with `s_1 == 0` contribute a zero
/// row and are reported in `degenerate`.
pub fn arrow_prototypes<T: Scalar>(
    layer_experts: &[&AlignedAdapter<T>],
) -> Result<ArrowPrototypeMatrix<T>> {
    let first = layer_experts.first().ok_or_else(|| Error::Shape {
        op: "arrow_prototypes",
        detail: "empty expert list".to_string(),
    })?;
    let d_in = first.d_in();
    let mut p = Matrix::zeros(layer_experts.len(), d_in);
    let mut degenerate = Vec::new();
    for (t, e) in layer_experts.iter().enumerate() {
        if e.d_in() != d_in {
            return Err(Error::Shape {
                op: "arrow_prototypes",
                detail: format!(
                    "expert `{}` has d_in {} but the layer uses {}",
                    e.expert_id,
                    e.d_in(),
                    d_in
                ),
            });
        }
        let row = e.a_star.row(0);
        let norm: T = row.iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm == T::zero() {
            degenerate.push(t);
            continue;
        }
        let inv = T::one() / norm;
        for (j, &v) in row.iter().enumerate() {
            p.set(t, j, v * inv);
        }
    }
    Ok(ArrowPrototypeMatrix {
        layer_id: first.layer_id.clone(),
        p,
        degenerate,
    })
}

/// Arrow scores: `scores[t] = |P[t] . x|`.
pub fn arrow_scores<T: Scalar>(
    prototypes: &ArrowPrototypeMatrix<T>,
    x: &Vector<T>,
) -> Result<RoutingScores<T>> {
    if x.dim() != prototypes.p.cols() {
        return Err(Error::Shape {
            op: "arrow_scores",
            detail: format!(
                "input dim {} vs prototype dim {}",
                x.dim(),
                prototypes.p.cols()
            ),
        });
    }
    let scores = (0..prototypes.p.rows())
        .map(|t| {
            prototypes
                .p
                .row(t)
                .iter()
                .zip(x.as_slice())
                .map(|(&p, &xi)| p * xi)
                .sum::<T>()
                .abs()
        })
        .collect();
    RoutingScores::new(prototypes.layer_id.clone(), scores)
}

/// The low-rank hidden representation `h = A* x` of one input under one
/// expert.
pub fn spectr_hidden<T: Scalar>(expert: &AlignedAdapter<T>, x: &Vector<T>) -> Result<Vector<T>> {
    expert.a_star.matvec(x)
}

/// SpectR scores for a whole layer: `scores[t] = ||h_t||_2` with
/// `h_t = A*_t x`. The hidden vectors are returned alongside so the merge
/// step can reuse them instead of recomputing.
pub fn spectr_scores<T: Scalar>(
    layer_experts: &[&AlignedAdapter<T>],
    x: &Vector<T>,
) -> Result<(RoutingScores<T>, Vec<Vector<T>>)> {
    let first = layer_experts.first().ok_or_else(|| Error::Shape {
        op: "spectr_scores",
        detail: "empty expert list".to_string(),
    })?;
    let layer_id = first.layer_id.clone();
    let mut hiddens = Vec::with_capacity(layer_experts.len());
    let mut scores = Vec::with_capacity(layer_experts.len());
    for e in layer_experts {
        let h = spectr_hidden(e, x)?;
        scores.push(h.norm());
        hiddens.push(h);
    }
    Ok((RoutingScores::new(layer_id, scores)?, hiddens))
}

/// Selects the `k` highest-scoring experts, ties to the lower index, and
/// assigns uniform weights `1/k`.
pub fn top_k<T: Scalar>(scores: &RoutingScores<T>, k: usize) -> Result<RoutingDecision<T>> {
    let t_count = scores.num_experts();
    if k == 0 || k > t_count {
        return Err(Error::Parameter {
            name: "k",
            detail: format!("k = {k} must satisfy 1 <= k <= {t_count} experts"),
        });
    }
    let mut order: Vec<usize> = (0..t_count).collect();
    // Descending by score; the tie on equal scores falls back to the index
    // ordering, which `sort_by` keeps stable.
    order.sort_by(|&a, &b| {
        scores.scores[b]
            .partial_cmp(&scores.scores[a])
            .expect("scores validated finite")
    });
    let mut selected: Vec<usize> = order[..k].to_vec();
    selected.sort_unstable();
    let w = T::one() / T::of(k as f64);
    Ok(RoutingDecision {
        selected,
        weights: vec![w; k],
    })
}

/// The dense baseline: all `t_count` experts, uniform weights `1/T`.
pub fn mu_weights<T: Scalar>(t_count: usize) -> Result<RoutingDecision<T>> {
    if t_count == 0 {
        return Err(Error::Parameter {
            name: "T",
            detail: "mu routing needs at least one expert".to_string(),
        });
    }
    let w = T::one() / T::of(t_count as f64);
    Ok(RoutingDecision {
        selected: (0..t_count).collect(),
        weights: vec![w; t_count],
    })
}

/// Replaces a decision's weights by a softmax over the selected experts'
/// scores at the given temperature (max-subtracted for stability). The
/// selected set itself is unchanged.
pub fn softmax_weights<T: Scalar>(
    decision: &RoutingDecision<T>,
    scores: &RoutingScores<T>,
    temperature: T,
) -> Result<RoutingDecision<T>> {
    // Deliberately `!(> 0)` so NaN temperatures are rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(temperature > T::zero()) {
        return Err(Error::Parameter {
            name: "temperature",
            detail: format!("must be positive, got {temperature}"),
        });
    }
    let picked: Vec<T> = decision
        .selected
        .iter()
        .map(|&t| scores.scores[t])
        .collect();
    let max = picked.iter().fold(T::neg_infinity(), |m, &s| m.max(s));
    let exps: Vec<T> = picked
        .iter()
        .map(|&s| ((s - max) / temperature).exp())
        .collect();
    let total: T = exps.iter().copied().sum();
    Ok(RoutingDecision {
        selected: decision.selected.clone(),
        weights: exps.into_iter().map(|e| e / total).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{align, LoraAdapter};
    use crate::rng::{gaussian_matrix, gaussian_vector, random_orthonormal, substream};

    type M = Matrix<f64>;
    type V = Vector<f64>;

    fn aligned_expert(seed: u64, d: usize, r: usize) -> AlignedAdapter<f64> {
        let mut rng = substream(seed, "router-test", 0);
        let raw = LoraAdapter::new(
            format!("e{seed}"),
            "layer0",
            gaussian_matrix(&mut rng, d, r),
            gaussian_matrix(&mut rng, r, d),
        )
        .unwrap();
        align(&raw).unwrap()
    }

    fn make_aligned(a_star_rows: &[Vec<f64>], s: &[f64]) -> AlignedAdapter<f64> {
        let r = a_star_rows.len();
        AlignedAdapter {
            expert_id: "e".into(),
            layer_id: "layer0".into(),
            b_star: M::identity(r),
            a_star: M::from_rows(a_star_rows).unwrap(),
            singular_values: s.to_vec(),
        }
    }

    #[test]
    fn prototype_is_normalized_row() {
        let e = make_aligned(&[vec![2.0, 0.0]], &[2.0]);
        let p = arrow_prototypes(&[&e]).unwrap();
        assert_eq!(p.p.data(), &[1.0, 0.0]);
        assert!(p.degenerate.is_empty());
    }

    #[test]
    fn zero_expert_gets_degenerate_prototype() {
        let e = make_aligned(&[vec![0.0, 0.0]], &[0.0]);
        let p = arrow_prototypes(&[&e]).unwrap();
        assert_eq!(p.p.data(), &[0.0, 0.0]);
        assert_eq!(p.degenerate, vec![0]);
    }

    #[test]
    fn empty_layer_is_an_error() {
        let empty: Vec<&AlignedAdapter<f64>> = vec![];
        assert!(matches!(arrow_prototypes(&empty), Err(Error::Shape { .. })));
    }

    #[test]
    fn prototypes_match_independent_svd() {
        // Each prototype row must equal v1 from an eigendecomposition of
        // the explicit product's Gram matrix, up to sign.
        let experts: Vec<AlignedAdapter<f64>> =
            (0..9).map(|i| aligned_expert(50 + i, 12, 3)).collect();
        let refs: Vec<&AlignedAdapter<f64>> = experts.iter().collect();
        let p = arrow_prototypes(&refs).unwrap();
        for (t, e) in experts.iter().enumerate() {
            let delta = e.delta().unwrap();
            let gram = delta.transpose().matmul(&delta).unwrap();
            let (_, vecs) = spectr_oracles::sym_eigen(gram.data(), 12);
            // Column 0 of `vecs` is the top right-singular vector.
            let mut dot = 0.0;
            for j in 0..12 {
                dot += vecs[j * 12] * p.p.get(t, j);
            }
            assert!(
                (dot.abs() - 1.0).abs() <= 1e-8,
                "expert {t}: |dot| = {}",
                dot.abs()
            );
        }
    }

    #[test]
    fn arrow_scores_trivial_and_oracle() {
        let proto = ArrowPrototypeMatrix {
            layer_id: "layer0".into(),
            p: M::from_rows(&[vec![1.0, 0.0]]).unwrap(),
            degenerate: vec![],
        };
        let s = arrow_scores(&proto, &V::new(vec![3.0, 4.0])).unwrap();
        assert_eq!(s.scores, vec![3.0]);

        let mut rng = substream(60, "router-test", 1);
        let p: M = gaussian_matrix(&mut rng, 9, 64);
        let x = gaussian_vector(&mut rng, 64);
        let proto = ArrowPrototypeMatrix {
            layer_id: "layer0".into(),
            p: p.clone(),
            degenerate: vec![],
        };
        let s = arrow_scores(&proto, &x).unwrap();
        let oracle = spectr_oracles::matvec_naive(p.data(), 9, 64, x.as_slice());
        for (got, want) in s.scores.iter().zip(oracle.iter()) {
            assert!((got - want.abs()).abs() <= 1e-12);
        }
    }

    #[test]
    fn arrow_orthogonal_input_scores_zero() {
        let proto = ArrowPrototypeMatrix {
            layer_id: "layer0".into(),
            p: M::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap(),
            degenerate: vec![],
        };
        let s = arrow_scores(&proto, &V::new(vec![0.0, 0.0, 2.5])).unwrap();
        assert_eq!(s.scores, vec![0.0, 0.0]);
    }

    #[test]
    fn hidden_identity_and_rank1() {
        let e = make_aligned(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[1.0, 1.0]);
        let x = V::new(vec![0.3, -0.7]);
        let h = spectr_hidden(&e, &x).unwrap();
        assert_eq!(h.as_slice(), x.as_slice());

        // Rank 1: h = [s * (v . x)].
        let e1 = make_aligned(&[vec![1.5, 0.0]], &[1.5]);
        let h1 = spectr_hidden(&e1, &V::new(vec![2.0, 9.0])).unwrap();
        assert_eq!(h1.as_slice(), &[3.0]);
    }

    #[test]
    fn spectr_scores_match_explicit_factors() {
        let experts: Vec<AlignedAdapter<f64>> =
            (0..9).map(|i| aligned_expert(70 + i, 16, 4)).collect();
        let refs: Vec<&AlignedAdapter<f64>> = experts.iter().collect();
        let mut rng = substream(71, "router-test", 2);
        let x = gaussian_vector(&mut rng, 16);
        let (scores, hiddens) = spectr_scores(&refs, &x).unwrap();
        for (t, e) in experts.iter().enumerate() {
            let h = spectr_oracles::matvec_naive(e.a_star.data(), 4, 16, x.as_slice());
            let want: f64 = h.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((scores.scores[t] - want).abs() <= 1e-10);
            for (a, b) in hiddens[t].as_slice().iter().zip(h.iter()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn spectr_score_zero_when_rows_orthogonal_to_input() {
        let e = make_aligned(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], &[1.0, 1.0]);
        let (scores, _) = spectr_scores(&[&e], &V::new(vec![0.0, 0.0, 4.0])).unwrap();
        assert_eq!(scores.scores, vec![0.0]);
    }

    #[test]
    fn spectr_score_on_spectral_axis() {
        // x = v1, spectrum (s1, 0): the score is exactly s1.
        let e = make_aligned(&[vec![3.0, 0.0], vec![0.0, 0.0]], &[3.0, 0.0]);
        let (scores, _) = spectr_scores(&[&e], &V::new(vec![1.0, 0.0])).unwrap();
        assert!((scores.scores[0] - 3.0).abs() <= 1e-15);
    }

    #[test]
    fn top_k_basic_ties_and_boundary() {
        let s: RoutingScores<f64> = RoutingScores::new("l", vec![0.9, 0.5, 0.3, 0.2, 0.1]).unwrap();
        let d = top_k(&s, 4).unwrap();
        assert_eq!(d.selected, vec![0, 1, 2, 3]);
        assert!(d.weights.iter().all(|&w| (w - 0.25).abs() <= 1e-15));

        let tied: RoutingScores<f64> = RoutingScores::new("l", vec![1.0, 1.0, 1.0]).unwrap();
        let d = top_k(&tied, 2).unwrap();
        assert_eq!(d.selected, vec![0, 1]);

        // k == T selects everyone, same experts as mu.
        let d = top_k(&s, 5).unwrap();
        assert_eq!(d.selected, mu_weights::<f64>(5).unwrap().selected);

        assert!(matches!(top_k(&s, 6), Err(Error::Parameter { .. })));
        assert!(matches!(top_k(&s, 0), Err(Error::Parameter { .. })));
    }

    #[test]
    fn top_k_matches_bruteforce_selection() {
        let mut rng = substream(80, "router-test", 3);
        for trial in 0..50 {
            let raw = gaussian_vector::<f64>(&mut rng, 9);
            let scores = RoutingScores::new(
                "l",
                raw.as_slice().iter().map(|v| v.abs()).collect::<Vec<_>>(),
            )
            .unwrap();
            let k = 1 + (trial % 9);
            let d = top_k(&scores, k).unwrap();
            let want = spectr_oracles::top_k_bruteforce(
                &scores.scores.to_vec(),
                k,
            );
            assert_eq!(d.selected, want);
        }
    }

    #[test]
    fn mu_weight_normalization() {
        for t in [1_usize, 9, 1024] {
            let d = mu_weights::<f64>(t).unwrap();
            assert_eq!(d.selected.len(), t);
            let sum: f64 = d.weights.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12, "T={t}: weights sum to {sum}");
        }
        assert!(mu_weights::<f64>(0).is_err());
    }

    #[test]
    fn softmax_weights_cases() {
        let scores: RoutingScores<f64> = RoutingScores::new("l", vec![1.0, 0.0, 5.0]).unwrap();
        let base = top_k(&scores, 2).unwrap(); // selects {0, 2}

        // Equal scores -> uniform.
        let eq = RoutingScores::new("l", vec![2.0, 2.0, 2.0]).unwrap();
        let w = softmax_weights(&base, &eq, 1.0).unwrap();
        assert!(w.weights.iter().all(|&x| (x - 0.5).abs() <= 1e-15));

        // Huge temperature -> uniform.
        let w = softmax_weights(&base, &scores, 1e9).unwrap();
        assert!(w.weights.iter().all(|&x| (x - 0.5).abs() <= 1e-6));

        // Closed form at temperature 1 for scores (1, 0).
        let two = RoutingScores::new("l", vec![1.0, 0.0]).unwrap();
        let d2 = top_k(&two, 2).unwrap();
        let w = softmax_weights(&d2, &two, 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((w.weights[0] - e / (e + 1.0)).abs() <= 1e-12);
        assert!((w.weights[1] - 1.0 / (e + 1.0)).abs() <= 1e-12);

        assert!(matches!(
            softmax_weights(&base, &scores, 0.0),
            Err(Error::Parameter { .. })
        ));
    }

    #[test]
    fn rank1_unit_spectrum_orderings_agree() {
        // With rank-1 experts of unit top singular value, Arrow and SpectR
        // induce the same ordering (the scores coincide up to roundoff).
        let mut rng = substream(90, "router-test", 4);
        let experts: Vec<AlignedAdapter<f64>> = (0..7)
            .map(|i| {
                let v = crate::rng::random_unit_vector::<f64>(&mut rng, 10);
                AlignedAdapter {
                    expert_id: format!("e{i}"),
                    layer_id: "layer0".into(),
                    b_star: random_orthonormal(&mut rng, 10, 1),
                    a_star: M::from_rows(&[v.as_slice().to_vec()]).unwrap(),
                    singular_values: vec![1.0],
                }
            })
            .collect();
        let refs: Vec<&AlignedAdapter<f64>> = experts.iter().collect();
        let protos = arrow_prototypes(&refs).unwrap();
        for _ in 0..100 {
            let x = gaussian_vector(&mut rng, 10);
            let sa = arrow_scores(&protos, &x).unwrap();
            let (ss, _) = spectr_scores(&refs, &x).unwrap();
            for k in [1, 3, 7] {
                assert_eq!(
                    top_k(&sa, k).unwrap().selected,
                    top_k(&ss, k).unwrap().selected,
                    "k = {k}"
                );
            }
        }
    }

    #[test]
    fn scores_scale_covariantly_selection_invariant() {
        let experts: Vec<AlignedAdapter<f64>> =
            (0..5).map(|i| aligned_expert(100 + i, 12, 3)).collect();
        let refs: Vec<&AlignedAdapter<f64>> = experts.iter().collect();
        let protos = arrow_prototypes(&refs).unwrap();
        let mut rng = substream(101, "router-test", 5);
        let x = gaussian_vector(&mut rng, 12);
        let c = 37.5;
        let xc = x.scale(c);

        let (s1, _) = spectr_scores(&refs, &x).unwrap();
        let (s2, _) = spectr_scores(&refs, &xc).unwrap();
        let a1 = arrow_scores(&protos, &x).unwrap();
        let a2 = arrow_scores(&protos, &xc).unwrap();
        for t in 0..5 {
            assert!((s2.scores[t] - c * s1.scores[t]).abs() <= 1e-9 * s2.scores[t].max(1.0));
            assert!((a2.scores[t] - c * a1.scores[t]).abs() <= 1e-9 * a2.scores[t].max(1.0));
        }
        assert_eq!(
            top_k(&s1, 2).unwrap().selected,
            top_k(&s2, 2).unwrap().selected
        );
    }

    #[test]
    fn spectr_score_invariant_under_rank_remixing() {
        // (B* Q, Q^T A*) computes the same function and the same score.
        let e = aligned_expert(110, 16, 4);
        let mut rng = substream(111, "router-test", 6);
        let q: M = random_orthonormal(&mut rng, 4, 4);
        let remixed = AlignedAdapter {
            expert_id: e.expert_id.clone(),
            layer_id: e.layer_id.clone(),
            b_star: e.b_star.matmul(&q).unwrap(),
            a_star: q.transpose().matmul(&e.a_star).unwrap(),
            singular_values: e.singular_values.clone(),
        };
        for _ in 0..50 {
            let x = gaussian_vector(&mut rng, 16);
            let h0 = spectr_hidden(&e, &x).unwrap();
            let h1 = spectr_hidden(&remixed, &x).unwrap();
            assert!((h0.norm() - h1.norm()).abs() <= 1e-10 * h0.norm().max(1.0));
        }
    }

    #[test]
    fn arrow_signal_contained_in_spectr_score() {
        // ||A* x|| >= |row0(A*) . x|: a coordinate never exceeds the norm.
        let experts: Vec<AlignedAdapter<f64>> =
            (0..6).map(|i| aligned_expert(120 + i, 14, 5)).collect();
        let mut rng = substream(121, "router-test", 7);
        for _ in 0..50 {
            let x = gaussian_vector(&mut rng, 14);
            for e in &experts {
                let h = spectr_hidden(e, &x).unwrap();
                let first: f64 = e
                    .a_star
                    .row(0)
                    .iter()
                    .zip(x.as_slice())
                    .map(|(&a, &b)| a * b)
                    .sum();
                assert!(h.norm() + 1e-12 >= first.abs());
            }
        }
    }
}
