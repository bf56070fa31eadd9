//! The `ALAS` tensor container.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "ALAS"
//! 4       4     u32 format version (1)
//! 8       4     u32 ndim (3)
//! 12      24    u64 dims: layers + 1, seq_len, hidden_dim
//! 36      4*n   f32 payload, row-major
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array3, ArrayView2, Axis};
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"ALAS";
pub const FORMAT_VERSION: u32 = 1;
pub const RANK: u32 = 3;
pub const HEADER_LEN: usize = 4 + 4 + 4 + 3 * 8;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes {0:?}, expected \"ALAS\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported rank {0}, expected 3")]
    BadRank(u32),
    #[error("truncated file: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("{extra} unexpected trailing bytes after payload")]
    TrailingBytes { extra: u64 },
    #[error("dimensions {0:?} overflow the addressable size")]
    DimsOverflow([u64; 3]),
    #[error("dimension of size zero in {0:?}")]
    ZeroDim([u64; 3]),
    #[error("NaN at flat index {0}")]
    NotANumber(usize),
    #[error("infinite value at flat index {0}")]
    Infinite(usize),
    #[error("shape {shape:?} does not match {len} values")]
    ShapeMismatch { shape: [usize; 3], len: usize },
}

impl TensorError {
    /// Stable machine-readable name of the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            TensorError::Io(_) => "io",
            TensorError::BadMagic(_) => "bad_magic",
            TensorError::UnsupportedVersion(_) => "unsupported_version",
            TensorError::BadRank(_) => "bad_rank",
            TensorError::Truncated { .. } => "truncated",
            TensorError::TrailingBytes { .. } => "trailing_bytes",
            TensorError::DimsOverflow(_) => "dims_overflow",
            TensorError::ZeroDim(_) => "zero_dim",
            TensorError::NotANumber(_) => "nan",
            TensorError::Infinite(_) => "infinite",
            TensorError::ShapeMismatch { .. } => "shape_mismatch",
        }
    }
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Layer-wise latents of one modality for one sample.
///
/// Shape is `(layers + 1, seq_len, hidden_dim)`; slice 0 holds the
/// representation right before the first transformer block.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentStack {
    data: Array3<f32>,
}

impl LatentStack {
    /// Wraps an array, rejecting empty dimensions and non-finite values.
    pub fn new(data: Array3<f32>) -> Result<Self> {
        let (l, s, k) = data.dim();
        if l == 0 || s == 0 || k == 0 {
            return Err(TensorError::ZeroDim([l as u64, s as u64, k as u64]));
        }
        check_finite(data.iter())?;
        Ok(Self { data: data.as_standard_layout().into_owned() })
    }

    pub fn from_shape_vec(shape: [usize; 3], values: Vec<f32>) -> Result<Self> {
        let len = values.len();
        let data = Array3::from_shape_vec((shape[0], shape[1], shape[2]), values)
            .map_err(|_| TensorError::ShapeMismatch { shape, len })?;
        Self::new(data)
    }

    /// Number of stored slices, transformer layers plus layer 0.
    pub fn num_layers_plus_one(&self) -> usize {
        self.data.dim().0
    }

    pub fn seq_len(&self) -> usize {
        self.data.dim().1
    }

    pub fn hidden_dim(&self) -> usize {
        self.data.dim().2
    }

    pub fn shape(&self) -> [usize; 3] {
        let (l, s, k) = self.data.dim();
        [l, s, k]
    }

    /// `(seq_len, hidden_dim)` view of one layer.
    pub fn layer(&self, layer: usize) -> ArrayView2<'_, f32> {
        self.data.index_axis(Axis(0), layer)
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }

    fn as_slice(&self) -> &[f32] {
        self.data.as_slice().expect("standard layout")
    }
}

fn check_finite<'a>(values: impl Iterator<Item = &'a f32>) -> Result<()> {
    for (i, v) in values.enumerate() {
        if v.is_nan() {
            return Err(TensorError::NotANumber(i));
        }
        if v.is_infinite() {
            return Err(TensorError::Infinite(i));
        }
    }
    Ok(())
}

/// Serializes a stack into the `ALAS` container.
pub fn encode_tensor(stack: &LatentStack) -> Vec<u8> {
    let values = stack.as_slice();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * values.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&RANK.to_le_bytes());
    for d in stack.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

fn u64_at(bytes: &[u8], offset: usize) -> u64 {
    u64::from_le_bytes(bytes[offset..offset + 8].try_into().expect("8 bytes"))
}

/// Parses an `ALAS` container.
pub fn decode_tensor(bytes: &[u8]) -> Result<LatentStack> {
    let found = bytes.len() as u64;
    if bytes.len() < 4 {
        return Err(TensorError::Truncated { expected: HEADER_LEN as u64, found });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(TensorError::BadMagic(magic));
    }
    if bytes.len() < 12 {
        return Err(TensorError::Truncated { expected: HEADER_LEN as u64, found });
    }
    let version = u32_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(TensorError::UnsupportedVersion(version));
    }
    let rank = u32_at(bytes, 8);
    if rank != RANK {
        return Err(TensorError::BadRank(rank));
    }
    if bytes.len() < HEADER_LEN {
        return Err(TensorError::Truncated { expected: HEADER_LEN as u64, found });
    }
    let dims = [u64_at(bytes, 12), u64_at(bytes, 20), u64_at(bytes, 28)];
    if dims.contains(&0) {
        return Err(TensorError::ZeroDim(dims));
    }
    let payload_len = dims
        .iter()
        .try_fold(4u64, |acc, &d| acc.checked_mul(d))
        .and_then(|n| n.checked_add(HEADER_LEN as u64))
        .filter(|&n| usize::try_from(n).is_ok())
        .ok_or(TensorError::DimsOverflow(dims))?;
    if found < payload_len {
        return Err(TensorError::Truncated { expected: payload_len, found });
    }
    if found > payload_len {
        return Err(TensorError::TrailingBytes { extra: found - payload_len });
    }
    let values: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    LatentStack::from_shape_vec([dims[0] as usize, dims[1] as usize, dims[2] as usize], values)
}

pub fn write_tensor(stack: &LatentStack, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_tensor(stack))?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<LatentStack> {
    decode_tensor(&fs::read(path)?)
}
