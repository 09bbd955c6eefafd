//! SALB: a small self-describing container for adapter libraries.
//!
//! Layout, fixed little-endian on every platform:
//!
//! ```text
//! bytes 0..4    magic "SALB"
//! bytes 4..8    format version, u32 (currently 1)
//! bytes 8..16   header length in bytes, u64
//! ...           UTF-8 JSON header (layer/expert ids, shapes, ranks, mode,
//!               per-tensor byte offsets)
//! ...           payload: concatenated raw tensors, f32, row-major
//! ```
//!
//! Tensors are stored in 32-bit precision -- the precision adapters ship in
//! -- and the round trip is bit-exact: every `f32` read back compares equal
//! byte-for-byte to what was written. Offsets in the header are relative to
//! the start of the payload.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapter::{
    AdapterLibrary, AlignedAdapter, Expert, LayerExperts, LibraryMode, LoraAdapter,
};
use crate::error::{BundleError, Error, Result};
use crate::linalg::Matrix;

pub const MAGIC: [u8; 4] = *b"SALB";
pub const VERSION: u32 = 1;
const PRELUDE_LEN: usize = 16;

/// JSON header of a bundle file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleHeader {
    pub mode: LibraryMode,
    pub layers: Vec<LayerHeader>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerHeader {
    pub layer_id: String,
    pub d_out: usize,
    pub d_in: usize,
    pub experts: Vec<ExpertHeader>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpertHeader {
    pub expert_id: String,
    pub rank: usize,
    pub tensors: Vec<TensorHeader>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorHeader {
    /// `B` / `A` for raw libraries, `B_star` / `A_star` /
    /// `singular_values` for aligned ones.
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Byte offset from the start of the payload region.
    pub offset: u64,
    pub byte_len: u64,
}

impl BundleHeader {
    pub fn tensor_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.experts.iter())
            .map(|e| e.tensors.len())
            .sum()
    }

    /// Total payload size implied by the tensor table.
    pub fn payload_len(&self) -> u64 {
        self.layers
            .iter()
            .flat_map(|l| l.experts.iter())
            .flat_map(|e| e.tensors.iter())
            .map(|t| t.offset + t.byte_len)
            .max()
            .unwrap_or(0)
    }
}

/// Writes `lib` to `path` in the format above.
///
/// The library is validated first; a structurally broken library is refused
/// rather than persisted.
pub fn save_bundle(lib: &AdapterLibrary<f32>, path: &Path) -> Result<()> {
    let report = lib.validate();
    if let Some(v) = report.violations.first() {
        return Err(Error::Validation(v.to_string()));
    }

    let mut payload: Vec<u8> = Vec::new();
    let mut layers = Vec::with_capacity(lib.layers.len());
    for layer in &lib.layers {
        let (d_out, d_in) = layer
            .experts
            .first()
            .map_or((0, 0), |e| (e.d_out(), e.d_in()));
        let mut experts = Vec::with_capacity(layer.experts.len());
        for e in &layer.experts {
            let mut tensors = Vec::new();
            let mut push = |name: &str, rows: usize, cols: usize, data: &[f32]| {
                debug_assert_eq!(data.len(), rows * cols);
                let offset = payload.len() as u64;
                for v in data {
                    payload.extend_from_slice(&v.to_le_bytes());
                }
                tensors.push(TensorHeader {
                    name: name.to_string(),
                    rows,
                    cols,
                    offset,
                    byte_len: (data.len() * 4) as u64,
                });
            };
            match e {
                Expert::Raw(a) => {
                    push("B", a.b.rows(), a.b.cols(), a.b.data());
                    push("A", a.a.rows(), a.a.cols(), a.a.data());
                }
                Expert::Aligned(a) => {
                    push("B_star", a.b_star.rows(), a.b_star.cols(), a.b_star.data());
                    push("A_star", a.a_star.rows(), a.a_star.cols(), a.a_star.data());
                    push(
                        "singular_values",
                        1,
                        a.singular_values.len(),
                        &a.singular_values,
                    );
                }
            }
            experts.push(ExpertHeader {
                expert_id: e.expert_id().to_string(),
                rank: e.rank(),
                tensors,
            });
        }
        layers.push(LayerHeader {
            layer_id: layer.layer_id.clone(),
            d_out,
            d_in,
            experts,
        });
    }
    let header = BundleHeader {
        mode: lib.mode,
        layers,
    };
    let header_bytes = serde_json::to_vec(&header).map_err(BundleError::from)?;

    let mut out = Vec::with_capacity(PRELUDE_LEN + header_bytes.len() + payload.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    out.extend_from_slice(&payload);
    std::fs::write(path, &out).map_err(BundleError::from)?;
    Ok(())
}

/// Reads a bundle back into a library.
///
/// Parse failures (wrong magic, bad version, truncation, metadata that
/// contradicts itself) surface as [`BundleError`]; a file that parses but
/// describes an invalid library surfaces as a validation error. Nothing is
/// returned in either case -- no partial libraries.
pub fn load_bundle(path: &Path) -> Result<AdapterLibrary<f32>> {
    let bytes = std::fs::read(path).map_err(BundleError::from)?;
    let (header, payload_start) = parse_header(&bytes)?;
    let payload = &bytes[payload_start..];

    let mut layers = Vec::with_capacity(header.layers.len());
    for lh in &header.layers {
        let mut experts = Vec::with_capacity(lh.experts.len());
        for eh in &lh.experts {
            let expert = decode_expert(header.mode, lh, eh, payload)?;
            experts.push(expert);
        }
        layers.push(LayerExperts {
            layer_id: lh.layer_id.clone(),
            experts,
        });
    }
    AdapterLibrary::new(header.mode, layers)
}

/// Reads and parses the prelude and JSON header only; the payload is never
/// touched, so this is cheap even for large bundles (and works on files
/// whose payload is damaged).
pub fn inspect_bundle(path: &Path) -> Result<BundleInfo> {
    let mut file = File::open(path).map_err(BundleError::from)?;
    let mut prelude = [0_u8; PRELUDE_LEN];
    file.read_exact(&mut prelude)
        .map_err(|_| BundleError::Truncated {
            context: "file ends inside the 16-byte prelude".to_string(),
        })?;
    check_prelude(&prelude)?;
    let header_len = u64::from_le_bytes(prelude[8..16].try_into().unwrap());
    let header_len: usize = header_len
        .try_into()
        .map_err(|_| BundleError::Metadata(format!("implausible header length {header_len}")))?;
    let mut header_bytes = vec![0_u8; header_len];
    file.read_exact(&mut header_bytes)
        .map_err(|_| BundleError::Truncated {
            context: format!("file ends inside the {header_len}-byte header"),
        })?;
    let header: BundleHeader = serde_json::from_slice(&header_bytes).map_err(BundleError::from)?;
    let file_len = file.metadata().map_err(BundleError::from)?.len();
    Ok(BundleInfo {
        tensor_count: header.tensor_count(),
        payload_bytes: file_len.saturating_sub((PRELUDE_LEN + header_len) as u64),
        header,
    })
}

/// What [`inspect_bundle`] learned without reading the payload.
#[derive(Debug, Clone)]
pub struct BundleInfo {
    pub header: BundleHeader,
    pub tensor_count: usize,
    pub payload_bytes: u64,
}

fn check_prelude(prelude: &[u8; PRELUDE_LEN]) -> Result<(), BundleError> {
    let magic: [u8; 4] = prelude[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(BundleError::BadMagic { found: magic });
    }
    let version = u32::from_le_bytes(prelude[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(BundleError::Version {
            found: version,
            expected: VERSION,
        });
    }
    Ok(())
}

fn parse_header(bytes: &[u8]) -> Result<(BundleHeader, usize), BundleError> {
    if bytes.len() < PRELUDE_LEN {
        return Err(BundleError::Truncated {
            context: "file ends inside the 16-byte prelude".to_string(),
        });
    }
    let prelude: [u8; PRELUDE_LEN] = bytes[..PRELUDE_LEN].try_into().unwrap();
    check_prelude(&prelude)?;
    let header_len = u64::from_le_bytes(prelude[8..16].try_into().unwrap());
    let header_end = (PRELUDE_LEN as u64)
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len() as u64)
        .ok_or_else(|| BundleError::Truncated {
            context: format!("header claims {header_len} bytes past the prelude"),
        })?;
    let header: BundleHeader = serde_json::from_slice(&bytes[PRELUDE_LEN..header_end as usize])?;
    Ok((header, header_end as usize))
}

fn tensor_slice<'p>(
    t: &TensorHeader,
    payload: &'p [u8],
    where_: &str,
) -> Result<&'p [u8], BundleError> {
    let expected = (t.rows as u64) * (t.cols as u64) * 4;
    if t.byte_len != expected {
        return Err(BundleError::Metadata(format!(
            "{where_}: tensor `{}` declares {}x{} ({expected} bytes) but byte_len {}",
            t.name, t.rows, t.cols, t.byte_len
        )));
    }
    let end = t
        .offset
        .checked_add(t.byte_len)
        .filter(|&end| end <= payload.len() as u64)
        .ok_or_else(|| BundleError::Truncated {
            context: format!(
                "{where_}: tensor `{}` spans bytes {}..{} of a {}-byte payload",
                t.name,
                t.offset,
                t.offset.saturating_add(t.byte_len),
                payload.len()
            ),
        })?;
    Ok(&payload[t.offset as usize..end as usize])
}

fn decode_f32s(raw: &[u8]) -> Vec<f32> {
    raw.chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

fn decode_matrix(
    t: &TensorHeader,
    payload: &[u8],
    where_: &str,
) -> Result<Matrix<f32>, BundleError> {
    let data = decode_f32s(tensor_slice(t, payload, where_)?);
    Matrix::from_vec(t.rows, t.cols, data)
        .map_err(|e| BundleError::Metadata(format!("{where_}: {e}")))
}

fn decode_expert(
    mode: LibraryMode,
    lh: &LayerHeader,
    eh: &ExpertHeader,
    payload: &[u8],
) -> Result<Expert<f32>> {
    let where_ = format!("layer `{}`, expert `{}`", lh.layer_id, eh.expert_id);
    let names: Vec<&str> = eh.tensors.iter().map(|t| t.name.as_str()).collect();
    let find = |name: &str| -> Result<&TensorHeader, BundleError> {
        eh.tensors.iter().find(|t| t.name == name).ok_or_else(|| {
            BundleError::Metadata(format!(
                "{where_}: missing tensor `{name}` (have {names:?})"
            ))
        })
    };
    let expect_shape = |t: &TensorHeader, rows: usize, cols: usize| -> Result<(), BundleError> {
        if t.rows != rows || t.cols != cols {
            return Err(BundleError::Metadata(format!(
                "{where_}: tensor `{}` is {}x{}, expected {rows}x{cols} from layer dims and rank",
                t.name, t.rows, t.cols
            )));
        }
        Ok(())
    };

    let expert = match mode {
        LibraryMode::Raw => {
            if eh.tensors.len() != 2 {
                return Err(BundleError::Metadata(format!(
                    "{where_}: raw expert must have exactly tensors [B, A], found {names:?}"
                ))
                .into());
            }
            let tb = find("B")?;
            let ta = find("A")?;
            expect_shape(tb, lh.d_out, eh.rank)?;
            expect_shape(ta, eh.rank, lh.d_in)?;
            Expert::Raw(LoraAdapter {
                expert_id: eh.expert_id.clone(),
                layer_id: lh.layer_id.clone(),
                b: decode_matrix(tb, payload, &where_)?,
                a: decode_matrix(ta, payload, &where_)?,
            })
        }
        LibraryMode::Aligned => {
            if eh.tensors.len() != 3 {
                return Err(BundleError::Metadata(format!(
                    "{where_}: aligned expert must have exactly tensors \
                     [B_star, A_star, singular_values], found {names:?}"
                ))
                .into());
            }
            let tb = find("B_star")?;
            let ta = find("A_star")?;
            let ts = find("singular_values")?;
            expect_shape(tb, lh.d_out, eh.rank)?;
            expect_shape(ta, eh.rank, lh.d_in)?;
            expect_shape(ts, 1, eh.rank)?;
            Expert::Aligned(AlignedAdapter {
                expert_id: eh.expert_id.clone(),
                layer_id: lh.layer_id.clone(),
                b_star: decode_matrix(tb, payload, &where_)?,
                a_star: decode_matrix(ta, payload, &where_)?,
                singular_values: decode_f32s(tensor_slice(ts, payload, &where_)?),
            })
        }
    };
    Ok(expert)
}
