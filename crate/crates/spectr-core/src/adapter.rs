//! Adapter data model: raw LoRA pairs, their spectrally aligned form, and
//! libraries of experts indexed by layer.
//!
//! A raw adapter is the pair `(B, A)` with `B` of shape `d_out x r` and `A`
//! of shape `r x d_in`; any scaling factor is assumed to be folded into `B`
//! ahead of time. Alignment rewrites the pair through the thin SVD of the
//! product,
//!
//! ```text
//! B A = U S V^T,   B* = U,   A* = S V^T,
//! ```
//!
//! which leaves the adapter function `x -> B A x` untouched while making
//! `A* x` a set of coordinates along the product's principal directions --
//! the quantity the spectral router scores.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{svd_lowrank, Matrix, Vector};
use crate::scalar::Scalar;

/// A raw rank-`r` LoRA adapter for one (layer, expert) slot.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter<T> {
    pub expert_id: String,
    pub layer_id: String,
    /// `d_out x r`, scaling pre-multiplied.
    pub b: Matrix<T>,
    /// `r x d_in`.
    pub a: Matrix<T>,
}

impl<T: Scalar> LoraAdapter<T> {
    pub fn new(
        expert_id: impl Into<String>,
        layer_id: impl Into<String>,
        b: Matrix<T>,
        a: Matrix<T>,
    ) -> Result<Self> {
        if b.cols() != a.rows() || b.cols() == 0 {
            return Err(Error::Shape {
                op: "LoraAdapter::new",
                detail: format!(
                    "B is {}x{}, A is {}x{}; need B.cols == A.rows >= 1",
                    b.rows(),
                    b.cols(),
                    a.rows(),
                    a.cols()
                ),
            });
        }
        let adapter = Self {
            expert_id: expert_id.into(),
            layer_id: layer_id.into(),
            b,
            a,
        };
        if !adapter.b.is_finite() || !adapter.a.is_finite() {
            return Err(Error::NonFinite {
                what: format!(
                    "adapter `{}` at layer `{}`",
                    adapter.expert_id, adapter.layer_id
                ),
            });
        }
        Ok(adapter)
    }

    pub fn rank(&self) -> usize {
        self.b.cols()
    }

    pub fn d_out(&self) -> usize {
        self.b.rows()
    }

    pub fn d_in(&self) -> usize {
        self.a.cols()
    }

    /// The adapter delta applied to one input: `B (A x)`.
    pub fn apply(&self, x: &Vector<T>) -> Result<Vector<T>> {
        self.b.matvec(&self.a.matvec(x)?)
    }

    /// Materializes the full `d_out x d_in` product `B A`. Meant for
    /// diagnostics and similarity computations, not the routing hot path.
    pub fn delta(&self) -> Result<Matrix<T>> {
        self.b.matmul(&self.a)
    }

    /// Precision cast (used when moving between storage and compute types).
    pub fn cast<U: Scalar>(&self) -> LoraAdapter<U> {
        LoraAdapter {
            expert_id: self.expert_id.clone(),
            layer_id: self.layer_id.clone(),
            b: cast_matrix(&self.b),
            a: cast_matrix(&self.a),
        }
    }
}

/// The spectrally aligned form of an adapter: `B* = U`, `A* = S V^T`.
///
/// Invariants kept by [`align`]:
/// * columns of `b_star` orthonormal,
/// * row `i` of `a_star` has norm `singular_values[i]`, rows mutually
///   orthogonal,
/// * `b_star * a_star` equals the source product.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedAdapter<T> {
    pub expert_id: String,
    pub layer_id: String,
    /// `d_out x r`, orthonormal columns.
    pub b_star: Matrix<T>,
    /// `r x d_in`, row i = s_i * v_i^T.
    pub a_star: Matrix<T>,
    /// Non-negative, non-increasing.
    pub singular_values: Vec<T>,
}

impl<T: Scalar> AlignedAdapter<T> {
    pub fn rank(&self) -> usize {
        self.b_star.cols()
    }

    pub fn d_out(&self) -> usize {
        self.b_star.rows()
    }

    pub fn d_in(&self) -> usize {
        self.a_star.cols()
    }

    /// The adapter delta applied to one input: `B* (A* x)`.
    pub fn apply(&self, x: &Vector<T>) -> Result<Vector<T>> {
        self.b_star.matvec(&self.a_star.matvec(x)?)
    }

    /// Materializes `B* A*` (diagnostics only).
    pub fn delta(&self) -> Result<Matrix<T>> {
        self.b_star.matmul(&self.a_star)
    }

    pub fn cast<U: Scalar>(&self) -> AlignedAdapter<U> {
        AlignedAdapter {
            expert_id: self.expert_id.clone(),
            layer_id: self.layer_id.clone(),
            b_star: cast_matrix(&self.b_star),
            a_star: cast_matrix(&self.a_star),
            singular_values: self
                .singular_values
                .iter()
                .map(|&s| U::of(s.to_f64_lossy()))
                .collect(),
        }
    }
}

fn cast_matrix<T: Scalar, U: Scalar>(m: &Matrix<T>) -> Matrix<U> {
    Matrix::from_vec(
        m.rows(),
        m.cols(),
        m.data().iter().map(|&v| U::of(v.to_f64_lossy())).collect(),
    )
    .expect("shape unchanged by cast")
}

/// Spectral alignment of one adapter (the SVD rewrite above).
///
/// Rank-deficient adapters are retained at their declared rank: zero
/// singular values produce zero rows in `A*` and basis-completed columns in
/// `B*`, so shapes never change and downstream scores are unaffected.
pub fn align<T: Scalar>(adapter: &LoraAdapter<T>) -> Result<AlignedAdapter<T>> {
    if !adapter.b.is_finite() || !adapter.a.is_finite() {
        return Err(Error::NonFinite {
            what: format!(
                "adapter `{}` at layer `{}`",
                adapter.expert_id, adapter.layer_id
            ),
        });
    }
    let factors = svd_lowrank(&adapter.b, &adapter.a)?;
    let mut a_star = factors.vt.clone();
    for i in 0..a_star.rows() {
        let s = factors.s[i];
        for j in 0..a_star.cols() {
            a_star.set(i, j, a_star.get(i, j) * s);
        }
    }
    Ok(AlignedAdapter {
        expert_id: adapter.expert_id.clone(),
        layer_id: adapter.layer_id.clone(),
        b_star: factors.u,
        a_star,
        singular_values: factors.s,
    })
}

/// One expert slot of a library: raw or aligned.
#[derive(Debug, Clone, PartialEq)]
pub enum Expert<T> {
    Raw(LoraAdapter<T>),
    Aligned(AlignedAdapter<T>),
}

impl<T: Scalar> Expert<T> {
    pub fn expert_id(&self) -> &str {
        match self {
            Expert::Raw(a) => &a.expert_id,
            Expert::Aligned(a) => &a.expert_id,
        }
    }

    pub fn layer_id(&self) -> &str {
        match self {
            Expert::Raw(a) => &a.layer_id,
            Expert::Aligned(a) => &a.layer_id,
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            Expert::Raw(a) => a.rank(),
            Expert::Aligned(a) => a.rank(),
        }
    }

    pub fn d_out(&self) -> usize {
        match self {
            Expert::Raw(a) => a.d_out(),
            Expert::Aligned(a) => a.d_out(),
        }
    }

    pub fn d_in(&self) -> usize {
        match self {
            Expert::Raw(a) => a.d_in(),
            Expert::Aligned(a) => a.d_in(),
        }
    }

    pub fn apply(&self, x: &Vector<T>) -> Result<Vector<T>> {
        match self {
            Expert::Raw(a) => a.apply(x),
            Expert::Aligned(a) => a.apply(x),
        }
    }

    pub fn delta(&self) -> Result<Matrix<T>> {
        match self {
            Expert::Raw(a) => a.delta(),
            Expert::Aligned(a) => a.delta(),
        }
    }

    pub fn as_aligned(&self) -> Option<&AlignedAdapter<T>> {
        match self {
            Expert::Aligned(a) => Some(a),
            Expert::Raw(_) => None,
        }
    }
}

/// Whether a library stores raw `(B, A)` pairs or aligned `(B*, A*)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LibraryMode {
    Raw,
    Aligned,
}

impl std::fmt::Display for LibraryMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LibraryMode::Raw => "raw",
            LibraryMode::Aligned => "aligned",
        })
    }
}

/// All experts for one layer, in canonical expert order.
///
/// Expert position is the routing index: "expert t" everywhere in this crate
/// means position `t` of this list, and every layer of a library lists the
/// same experts in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerExperts<T> {
    pub layer_id: String,
    pub experts: Vec<Expert<T>>,
}

/// A complete adapter library: the same `T` experts at every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterLibrary<T> {
    pub mode: LibraryMode,
    pub layers: Vec<LayerExperts<T>>,
}

impl<T: Scalar> AdapterLibrary<T> {
    /// Builds a library and rejects it unless [`validate`](Self::validate)
    /// comes back clean.
    pub fn new(mode: LibraryMode, layers: Vec<LayerExperts<T>>) -> Result<Self> {
        let lib = Self { mode, layers };
        let report = lib.validate();
        if let Some(v) = report.violations.first() {
            return Err(Error::Validation(v.to_string()));
        }
        Ok(lib)
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Number of experts per layer (0 for an empty library).
    pub fn num_experts(&self) -> usize {
        self.layers.first().map_or(0, |l| l.experts.len())
    }

    pub fn expert_ids(&self) -> Vec<String> {
        self.layers.first().map_or_else(Vec::new, |l| {
            l.experts
                .iter()
                .map(|e| e.expert_id().to_string())
                .collect()
        })
    }

    pub fn layer(&self, idx: usize) -> &LayerExperts<T> {
        &self.layers[idx]
    }

    /// Aligned view of one layer's experts; `None` when the library is raw.
    pub fn aligned_layer(&self, idx: usize) -> Option<Vec<&AlignedAdapter<T>>> {
        self.layers[idx]
            .experts
            .iter()
            .map(Expert::as_aligned)
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> AdapterLibrary<U> {
        AdapterLibrary {
            mode: self.mode,
            layers: self
                .layers
                .iter()
                .map(|l| LayerExperts {
                    layer_id: l.layer_id.clone(),
                    experts: l
                        .experts
                        .iter()
                        .map(|e| match e {
                            Expert::Raw(a) => Expert::Raw(a.cast()),
                            Expert::Aligned(a) => Expert::Aligned(a.cast()),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Checks every library invariant and reports all violations found
    /// (never fails fast; an empty report means the library is well formed).
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let reference: Vec<String> = self.expert_ids();

        for layer in &self.layers {
            let lid = &layer.layer_id;
            let ids: Vec<&str> = layer.experts.iter().map(Expert::expert_id).collect();
            if ids.len() != reference.len()
                || ids.iter().zip(reference.iter()).any(|(a, b)| *a != b)
            {
                violations.push(Violation {
                    layer_id: lid.clone(),
                    expert_id: None,
                    detail: format!(
                        "expert order {:?} does not match the library order {:?}",
                        ids, reference
                    ),
                });
            }

            if let Some(first) = layer.experts.first() {
                let (d_in, d_out) = (first.d_in(), first.d_out());
                for e in &layer.experts {
                    if e.d_in() != d_in || e.d_out() != d_out {
                        violations.push(Violation {
                            layer_id: lid.clone(),
                            expert_id: Some(e.expert_id().to_string()),
                            detail: format!(
                                "dimensions {}x{} differ from the layer's {}x{}",
                                e.d_out(),
                                e.d_in(),
                                d_out,
                                d_in
                            ),
                        });
                    }
                }
            }

            for e in &layer.experts {
                let mode_ok = matches!(
                    (self.mode, e),
                    (LibraryMode::Raw, Expert::Raw(_)) | (LibraryMode::Aligned, Expert::Aligned(_))
                );
                if !mode_ok {
                    violations.push(Violation {
                        layer_id: lid.clone(),
                        expert_id: Some(e.expert_id().to_string()),
                        detail: format!("entry kind does not match library mode `{}`", self.mode),
                    });
                }
                if e.layer_id() != lid {
                    violations.push(Violation {
                        layer_id: lid.clone(),
                        expert_id: Some(e.expert_id().to_string()),
                        detail: format!("adapter tagged with layer `{}`", e.layer_id()),
                    });
                }
                match e {
                    Expert::Raw(a) => {
                        if !a.b.is_finite() || !a.a.is_finite() {
                            violations.push(Violation {
                                layer_id: lid.clone(),
                                expert_id: Some(a.expert_id.clone()),
                                detail: "non-finite entries".to_string(),
                            });
                        }
                    }
                    Expert::Aligned(a) => {
                        violations.extend(check_aligned(a, lid));
                    }
                }
            }
        }

        ValidationReport { violations }
    }
}

/// Structural checks specific to aligned adapters.
fn check_aligned<T: Scalar>(a: &AlignedAdapter<T>, lid: &str) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |detail: String| {
        out.push(Violation {
            layer_id: lid.to_string(),
            expert_id: Some(a.expert_id.clone()),
            detail,
        });
    };
    if !a.b_star.is_finite() || !a.a_star.is_finite() {
        push("non-finite entries".to_string());
        return out;
    }
    let tol = T::orthonormal_tol();
    let r = a.rank();
    if a.singular_values.len() != r {
        push(format!(
            "{} singular values for rank {}",
            a.singular_values.len(),
            r
        ));
        return out;
    }
    // B* columns orthonormal.
    for i in 0..r {
        for j in 0..=i {
            let mut dot = T::zero();
            for k in 0..a.b_star.rows() {
                dot += a.b_star.get(k, i) * a.b_star.get(k, j);
            }
            let expect = if i == j { T::one() } else { T::zero() };
            if (dot - expect).abs() > tol {
                push(format!("B* columns {j},{i} not orthonormal (dot {dot})"));
            }
        }
    }
    // Singular values non-negative, non-increasing, matching A* row norms;
    // A* rows mutually orthogonal.
    let scale = a
        .singular_values
        .first()
        .copied()
        .unwrap_or_else(T::one)
        .max(T::one());
    for i in 0..r {
        let s = a.singular_values[i];
        if s < T::zero() {
            push(format!("singular value {i} is negative ({s})"));
        }
        if i + 1 < r && a.singular_values[i + 1] > s {
            push(format!("singular values not sorted at position {i}"));
        }
        let row_norm: T = a.a_star.row(i).iter().map(|&v| v * v).sum::<T>().sqrt();
        if (row_norm - s).abs() > tol * scale {
            push(format!("A* row {i} has norm {row_norm}, expected {s}"));
        }
        for j in 0..i {
            let dot: T = a
                .a_star
                .row(i)
                .iter()
                .zip(a.a_star.row(j))
                .map(|(&x, &y)| x * y)
                .sum();
            if dot.abs() > tol * scale * scale {
                push(format!("A* rows {j},{i} not orthogonal (dot {dot})"));
            }
        }
    }
    out
}

/// One invariant violation found by [`AdapterLibrary::validate`].
#[derive(Debug, Clone)]
pub struct Violation {
    pub layer_id: String,
    /// `None` for layer-level problems (e.g. ordering).
    pub expert_id: Option<String>,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.expert_id {
            Some(e) => write!(
                f,
                "layer `{}`, expert `{}`: {}",
                self.layer_id, e, self.detail
            ),
            None => write!(f, "layer `{}`: {}", self.layer_id, self.detail),
        }
    }
}

/// Outcome of [`AdapterLibrary::validate`].
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Aligns every adapter of a raw library, preserving layer and expert order.
///
/// Adapters are independent, so the work is spread across threads; the
/// result is assembled in the original order regardless of completion order.
pub fn align_library<T: Scalar>(lib: &AdapterLibrary<T>) -> Result<AdapterLibrary<T>> {
    if lib.mode != LibraryMode::Raw {
        return Err(Error::Validation(
            "library is already aligned; expected mode `raw`".to_string(),
        ));
    }
    let layers = lib
        .layers
        .iter()
        .map(|layer| {
            let experts = layer
                .experts
                .par_iter()
                .map(|e| match e {
                    Expert::Raw(raw) => {
                        align(raw)
                            .map(Expert::Aligned)
                            .map_err(|err| Error::InAdapter {
                                layer_id: layer.layer_id.clone(),
                                expert_id: raw.expert_id.clone(),
                                source: Box::new(err),
                            })
                    }
                    Expert::Aligned(_) => unreachable!("mode checked above"),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(LayerExperts {
                layer_id: layer.layer_id.clone(),
                experts,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    AdapterLibrary::new(LibraryMode::Aligned, layers)
}
