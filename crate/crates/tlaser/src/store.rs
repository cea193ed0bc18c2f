//! Bit-exact persistence: the TNS binary tensor container plus the JSON
//! model manifest and compression configuration.
//!
//! TNS layout (all integers little-endian):
//!
//! ```text
//! offset 0   magic   4 bytes  "TNS1"
//! offset 4   dtype   1 byte   0 = f64, 1 = f32
//! offset 5   ndim    1 byte   2 or 3
//! offset 6   dims    ndim x u64
//! then       payload product(dims) elements, little-endian
//! ```
//!
//! Matrices (ndim = 2) are stored row-major; third-order tensors use the
//! canonical order of [`Tensor3`] (frontal-slice-major, row-major within a
//! slice). Write-then-read is a bitwise identity at matching dtype,
//! including negative zeros and subnormals; 32-bit payloads are widened to
//! 64-bit in memory on read.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::compress::CompareMode;
use crate::error::{Error, Result};
use crate::rank::RankPolicy;
use crate::tensor::Tensor3;
use crate::tensorize::WeightKind;

const MAGIC: &[u8; 4] = b"TNS1";

/// On-disk element precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TnsDtype {
    F64,
    F32,
}

impl TnsDtype {
    fn code(self) -> u8 {
        match self {
            TnsDtype::F64 => 0,
            TnsDtype::F32 => 1,
        }
    }

    fn width(self) -> usize {
        match self {
            TnsDtype::F64 => 8,
            TnsDtype::F32 => 4,
        }
    }
}

/// A decoded TNS payload, always widened to f64 in memory.
#[derive(Debug, Clone, PartialEq)]
pub enum TnsData {
    Matrix(DMatrix<f64>),
    Tensor(Tensor3),
}

impl TnsData {
    pub fn dims(&self) -> Vec<usize> {
        match self {
            TnsData::Matrix(m) => vec![m.nrows(), m.ncols()],
            TnsData::Tensor(t) => {
                let (m, n, p) = t.dims();
                vec![m, n, p]
            }
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        match self {
            TnsData::Matrix(m) => crate::tensor::matrix_frobenius_norm(m),
            TnsData::Tensor(t) => t.frobenius_norm(),
        }
    }

    pub fn as_matrix(&self) -> Result<&DMatrix<f64>> {
        match self {
            TnsData::Matrix(m) => Ok(m),
            TnsData::Tensor(_) => Err(Error::shape("expected a 2-D tensor file")),
        }
    }

    pub fn as_tensor(&self) -> Result<&Tensor3> {
        match self {
            TnsData::Tensor(t) => Ok(t),
            TnsData::Matrix(_) => Err(Error::shape("expected a 3-D tensor file")),
        }
    }

    /// Elements in on-disk order.
    fn canonical_elements(&self) -> Vec<f64> {
        match self {
            TnsData::Matrix(m) => {
                let mut out = Vec::with_capacity(m.len());
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        out.push(m[(i, j)]);
                    }
                }
                out
            }
            TnsData::Tensor(t) => t.data().to_vec(),
        }
    }
}

fn parse_err(path: &Path, offset: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        offset,
        message: message.into(),
    }
}

/// Decode a TNS header from raw bytes; returns `(dtype, dims, header_len)`.
fn decode_header(path: &Path, bytes: &[u8]) -> Result<(TnsDtype, Vec<usize>, usize)> {
    if bytes.len() < 6 {
        return Err(parse_err(path, bytes.len() as u64, "file truncated in header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(parse_err(path, 0, "bad magic, expected \"TNS1\""));
    }
    let dtype = match bytes[4] {
        0 => TnsDtype::F64,
        1 => TnsDtype::F32,
        other => return Err(parse_err(path, 4, format!("unknown dtype code {other}"))),
    };
    let ndim = bytes[5] as usize;
    if ndim != 2 && ndim != 3 {
        return Err(parse_err(path, 5, format!("ndim must be 2 or 3, got {ndim}")));
    }
    let header_len = 6 + 8 * ndim;
    if bytes.len() < header_len {
        return Err(parse_err(path, bytes.len() as u64, "file truncated in dims"));
    }
    let mut dims = Vec::with_capacity(ndim);
    for i in 0..ndim {
        let off = 6 + 8 * i;
        let v = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        if v == 0 {
            return Err(parse_err(path, off as u64, "zero extent"));
        }
        dims.push(usize::try_from(v).map_err(|_| {
            parse_err(path, off as u64, format!("extent {v} too large for this platform"))
        })?);
    }
    Ok((dtype, dims, header_len))
}

/// Read only the header of a TNS file.
pub fn read_tns_header(path: impl AsRef<Path>) -> Result<(TnsDtype, Vec<usize>)> {
    let path = path.as_ref();
    let mut buf = [0u8; 6 + 8 * 3];
    let bytes = {
        use std::io::Read;
        let mut f = fs::File::open(path)?;
        let n = f.read(&mut buf)?;
        &buf[..n]
    };
    let (dtype, dims, _) = decode_header(path, bytes)?;
    Ok((dtype, dims))
}

/// Read a TNS file, widening the payload to f64.
pub fn read_tns(path: impl AsRef<Path>) -> Result<(TnsData, TnsDtype)> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let (dtype, dims, header_len) = decode_header(path, &bytes)?;

    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| parse_err(path, 6, "dims product overflows"))?;
    let expected = header_len + count * dtype.width();
    if bytes.len() != expected {
        return Err(parse_err(
            path,
            bytes.len().min(expected) as u64,
            format!(
                "payload length mismatch: file has {} bytes, header implies {}",
                bytes.len(),
                expected
            ),
        ));
    }

    let mut values = Vec::with_capacity(count);
    for idx in 0..count {
        let off = header_len + idx * dtype.width();
        let v = match dtype {
            TnsDtype::F64 => f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()),
            TnsDtype::F32 => {
                f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64
            }
        };
        if !v.is_finite() {
            return Err(parse_err(path, off as u64, "non-finite element"));
        }
        values.push(v);
    }

    let data = match dims.len() {
        2 => TnsData::Matrix(DMatrix::from_row_slice(dims[0], dims[1], &values)),
        3 => TnsData::Tensor(
            Tensor3::from_vec(dims[0], dims[1], dims[2], values)
                .map_err(|e| parse_err(path, header_len as u64, e.to_string()))?,
        ),
        _ => unreachable!("ndim validated"),
    };
    Ok((data, dtype))
}

/// Write a TNS file atomically (temporary sibling file, then rename).
///
/// Writing finite f64 data at f32 precision fails if any value overflows the
/// narrower range.
pub fn write_tns(path: impl AsRef<Path>, data: &TnsData, dtype: TnsDtype) -> Result<()> {
    let path = path.as_ref();
    let dims = data.dims();
    let elements = data.canonical_elements();

    let mut bytes = Vec::with_capacity(6 + 8 * dims.len() + elements.len() * dtype.width());
    bytes.extend_from_slice(MAGIC);
    bytes.push(dtype.code());
    bytes.push(dims.len() as u8);
    for &d in &dims {
        bytes.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in &elements {
        match dtype {
            TnsDtype::F64 => bytes.extend_from_slice(&v.to_le_bytes()),
            TnsDtype::F32 => {
                let narrow = v as f32;
                if !narrow.is_finite() {
                    return Err(Error::invalid(format!(
                        "value {v} is not representable as finite f32"
                    )));
                }
                bytes.extend_from_slice(&narrow.to_le_bytes());
            }
        }
    }

    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Structural role of a stored tensor within a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Attention,
    FfnIn,
    FfnOut,
    /// Anything the pipeline does not know how to tensorize; such layers can
    /// only pass through.
    Other,
}

/// One named tensor in a model manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    /// Path of the TNS file, relative to the manifest location.
    pub file: String,
    pub shape: Vec<usize>,
    pub kind: LayerKind,
    /// Heads for attention, blocks for FFN kinds; meaningless for `other`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heads_or_blocks: Option<usize>,
}

impl ManifestEntry {
    /// The tensorization descriptor for compressible kinds.
    pub fn weight_kind(&self) -> Result<WeightKind> {
        let hb = self.heads_or_blocks.ok_or_else(|| {
            Error::Config(format!(
                "layer '{}': heads_or_blocks is required for kind {:?}",
                self.name, self.kind
            ))
        })?;
        let kind = match self.kind {
            LayerKind::Attention => WeightKind::Attention {
                d_m: *self.shape.first().unwrap_or(&0),
                n_h: hb,
            },
            LayerKind::FfnIn => WeightKind::FfnIn {
                d_m: *self.shape.get(1).unwrap_or(&0),
                blocks: hb,
            },
            LayerKind::FfnOut => WeightKind::FfnOut {
                d_m: *self.shape.first().unwrap_or(&0),
                blocks: hb,
            },
            LayerKind::Other => {
                return Err(Error::Config(format!(
                    "layer '{}' has kind 'other' and cannot be tensorized",
                    self.name
                )))
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// A validated collection of named tensors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelManifest {
    pub tensors: Vec<ManifestEntry>,
}

impl ModelManifest {
    pub fn entry(&self, name: &str) -> Option<&ManifestEntry> {
        self.tensors.iter().find(|e| e.name == name)
    }
}

/// Load and fully validate a manifest. Every problem found is reported, not
/// just the first.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<ModelManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let manifest: ModelManifest = serde_json::from_str(&text).map_err(|e| {
        Error::Config(format!("{}: {}", path.display(), e))
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));

    let mut problems = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for entry in &manifest.tensors {
        let loc = format!("entry '{}'", entry.name);
        if !seen.insert(entry.name.clone()) {
            problems.push(format!("{loc}: duplicate name"));
        }
        let file = base.join(&entry.file);
        if !file.is_file() {
            problems.push(format!("{loc}: file '{}' does not exist", entry.file));
            continue;
        }
        match read_tns_header(&file) {
            Err(e) => problems.push(format!("{loc}: {e}")),
            Ok((_, dims)) => {
                if dims != entry.shape {
                    problems.push(format!(
                        "{loc}: declared shape {:?} does not match file shape {:?}",
                        entry.shape, dims
                    ));
                    continue;
                }
                if entry.kind != LayerKind::Other {
                    if dims.len() != 2 {
                        problems.push(format!(
                            "{loc}: kind {:?} requires a 2-D weight, file is {}-D",
                            entry.kind,
                            dims.len()
                        ));
                        continue;
                    }
                    match entry.weight_kind() {
                        Err(e) => problems.push(format!("{loc}: {e}")),
                        Ok(kind) => {
                            let (rows, cols) = kind.matrix_shape();
                            if (dims[0], dims[1]) != (rows, cols) {
                                problems.push(format!(
                                    "{loc}: shape {:?} inconsistent with {:?}",
                                    dims, kind
                                ));
                            }
                        }
                    }
                }
            }
        }
    }
    if problems.is_empty() {
        Ok(manifest)
    } else {
        Err(Error::Validation(problems))
    }
}

pub fn save_manifest(path: impl AsRef<Path>, manifest: &ModelManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(path.as_ref(), text)?;
    Ok(())
}

/// Per-layer compression directive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigLayer {
    pub name: String,
    /// The selection flag: false means the layer passes through untouched.
    pub delta: bool,
    pub policy: RankPolicy,
}

/// The full compression configuration document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompressionConfig {
    /// Mode-3 transform applied by the pipeline; only "dct" is recognized
    /// (the transform size follows each layer's head/block count).
    #[serde(default = "default_transform")]
    pub transform: String,
    /// How method comparisons match the two sides.
    #[serde(default)]
    pub compare: CompareMode,
    pub layers: Vec<ConfigLayer>,
}

fn default_transform() -> String {
    "dct".to_string()
}

/// Load and validate a configuration, collecting every problem.
pub fn load_config(path: impl AsRef<Path>) -> Result<CompressionConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let config: CompressionConfig = serde_json::from_str(&text).map_err(|e| {
        Error::Config(format!("{}: {}", path.display(), e))
    })?;

    let mut problems = Vec::new();
    if config.transform != "dct" {
        problems.push(format!(
            "transform '{}' is not supported (only \"dct\")",
            config.transform
        ));
    }
    let mut seen = std::collections::BTreeSet::new();
    for layer in &config.layers {
        if !seen.insert(layer.name.clone()) {
            problems.push(format!("layer '{}': duplicate name", layer.name));
        }
        if let Err(e) = layer.policy.validate() {
            problems.push(format!("layer '{}': {}", layer.name, e));
        }
    }
    if problems.is_empty() {
        Ok(config)
    } else {
        Err(Error::Validation(problems))
    }
}
