//! In-memory model description and the `SCNW` weight file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SCNW" | u16 version | u8 dtype | u32 class_count | f32 bn_epsilon
//! u32 layer_count, then per layer:
//!     u8 kind | u8 kernel_h | u8 kernel_w | u8 stride | u32 in | u32 out
//!     u8 tensor_count, then per tensor: u8 role | u64 offset | u64 byte_len
//! u32 label_count, then per label: u16 byte_len | utf-8 bytes
//! u64 payload_len | payload (tensors, f32 or f16)
//! u32 CRC-32 of everything above
//! ```

use std::fmt;
use std::path::Path;

use half::f16;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SCNW";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("bad magic bytes {0:?}; not a weight file")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {found} (this build reads {FORMAT_VERSION})")]
    Version { found: u16 },
    #[error("file truncated while reading {0}")]
    Truncated(&'static str),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed weight file: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F16,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F16 => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(DType::F32),
            1 => Some(DType::F16),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F16 => 2,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DType::F32 => "f32",
            DType::F16 => "f16",
        })
    }
}

impl std::str::FromStr for DType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(DType::F32),
            "f16" => Ok(DType::F16),
            _ => Err(Error::invalid("dtype", format!("`{s}` is neither f32 nor f16"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    DepthwiseConv,
    BatchNorm,
    Relu,
    GlobalAvgPool,
    Dense,
    Sigmoid,
}

impl LayerKind {
    const ALL: [LayerKind; 7] = [
        LayerKind::Conv,
        LayerKind::DepthwiseConv,
        LayerKind::BatchNorm,
        LayerKind::Relu,
        LayerKind::GlobalAvgPool,
        LayerKind::Dense,
        LayerKind::Sigmoid,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorRole {
    Kernel,
    Bias,
    Gamma,
    Beta,
    MovingMean,
    MovingVariance,
}

impl TensorRole {
    const ALL: [TensorRole; 6] = [
        TensorRole::Kernel,
        TensorRole::Bias,
        TensorRole::Gamma,
        TensorRole::Beta,
        TensorRole::MovingMean,
        TensorRole::MovingVariance,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F16(Vec<f16>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F16(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F16(_) => DType::F16,
        }
    }

    pub fn to_f32(&self) -> Vec<f32> {
        match self {
            TensorData::F32(v) => v.clone(),
            TensorData::F16(v) => v.iter().map(|x| x.to_f32()).collect(),
        }
    }

    /// f32 -> f16 rounds to nearest even.
    pub fn converted(&self, dtype: DType) -> TensorData {
        match (self, dtype) {
            (TensorData::F32(v), DType::F16) => TensorData::F16(v.iter().map(|&x| f16::from_f32(x)).collect()),
            (TensorData::F16(v), DType::F32) => TensorData::F32(v.iter().map(|x| x.to_f32()).collect()),
            _ => self.clone(),
        }
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        match self {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }

    fn read_le(bytes: &[u8], dtype: DType) -> TensorData {
        match dtype {
            DType::F32 => TensorData::F32(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
            DType::F16 => TensorData::F16(
                bytes
                    .chunks_exact(2)
                    .map(|c| f16::from_le_bytes([c[0], c[1]]))
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel: [u8; 2],
    pub stride: u8,
    pub in_channels: u32,
    pub out_channels: u32,
    /// Sorted by role.
    pub tensors: Vec<(TensorRole, TensorData)>,
}

impl LayerSpec {
    pub fn new(kind: LayerKind, kernel: [u8; 2], stride: u8, in_channels: usize, out_channels: usize) -> Self {
        Self {
            kind,
            kernel,
            stride,
            in_channels: in_channels as u32,
            out_channels: out_channels as u32,
            tensors: Vec::new(),
        }
    }

    pub fn with_tensor(mut self, role: TensorRole, data: Vec<f32>) -> Self {
        self.set_tensor(role, TensorData::F32(data));
        self
    }

    pub fn set_tensor(&mut self, role: TensorRole, data: TensorData) {
        match self.tensors.binary_search_by_key(&role, |(r, _)| *r) {
            Ok(i) => self.tensors[i].1 = data,
            Err(i) => self.tensors.insert(i, (role, data)),
        }
    }

    pub fn tensor(&self, role: TensorRole) -> Option<&TensorData> {
        self.tensors.iter().find(|(r, _)| *r == role).map(|(_, t)| t)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.len()).sum()
    }

    /// Element count each tensor role must have for this layer's shape;
    /// `None` means the role is not allowed.
    pub(crate) fn expected_len(&self, role: TensorRole) -> Option<usize> {
        let (kh, kw) = (self.kernel[0] as usize, self.kernel[1] as usize);
        let (cin, cout) = (self.in_channels as usize, self.out_channels as usize);
        match (self.kind, role) {
            (LayerKind::Conv, TensorRole::Kernel) => Some(kh * kw * cin * cout),
            (LayerKind::DepthwiseConv, TensorRole::Kernel) => Some(kh * kw * cin),
            (LayerKind::Dense, TensorRole::Kernel) => Some(cin * cout),
            (LayerKind::Conv | LayerKind::DepthwiseConv | LayerKind::Dense, TensorRole::Bias) => Some(cout),
            (
                LayerKind::BatchNorm,
                TensorRole::Gamma | TensorRole::Beta | TensorRole::MovingMean | TensorRole::MovingVariance,
            ) => Some(cout),
            _ => None,
        }
    }

    fn validate(&self, index: usize) -> std::result::Result<(), String> {
        let ctx = |m: String| format!("layer {index} ({:?}): {m}", self.kind);
        if !matches!(self.stride, 1 | 2) {
            return Err(ctx(format!("stride {} not in {{1, 2}}", self.stride)));
        }
        match self.kind {
            LayerKind::Conv => {
                if !matches!(self.kernel, [3, 3] | [1, 1]) {
                    return Err(ctx(format!("kernel {:?} must be 3x3 or 1x1", self.kernel)));
                }
            }
            LayerKind::DepthwiseConv => {
                if self.kernel != [3, 3] {
                    return Err(ctx("depthwise kernels are 3x3".into()));
                }
                if self.in_channels != self.out_channels {
                    return Err(ctx("depthwise convolution keeps the channel count".into()));
                }
            }
            _ => {
                if self.kind != LayerKind::Dense && self.in_channels != self.out_channels {
                    return Err(ctx("layer must keep the channel count".into()));
                }
            }
        }
        for (role, t) in &self.tensors {
            match self.expected_len(*role) {
                None => return Err(ctx(format!("unexpected tensor {role:?}"))),
                Some(n) if n != t.len() => {
                    return Err(ctx(format!("tensor {role:?} has {} elements, expected {n}", t.len())))
                }
                _ => {}
            }
        }
        let required: &[TensorRole] = match self.kind {
            LayerKind::Conv | LayerKind::DepthwiseConv => &[TensorRole::Kernel],
            LayerKind::Dense => &[TensorRole::Kernel, TensorRole::Bias],
            LayerKind::BatchNorm => &[TensorRole::Beta, TensorRole::MovingMean, TensorRole::MovingVariance],
            _ => &[],
        };
        for r in required {
            if self.tensor(*r).is_none() {
                return Err(ctx(format!("missing tensor {r:?}")));
            }
        }
        Ok(())
    }
}

/// A complete classifier: ordered layers, label names and storage precision.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub layers: Vec<LayerSpec>,
    pub class_count: usize,
    pub dtype: DType,
    pub bn_epsilon: f32,
    pub labels: Vec<String>,
}

impl ModelWeights {
    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::parameter_count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Error::Weights(WeightsError::Malformed(m));
        let mut channels: Option<u32> = None;
        for (i, l) in self.layers.iter().enumerate() {
            l.validate(i).map_err(bad)?;
            if let Some(c) = channels {
                if l.in_channels != c {
                    return Err(bad(format!(
                        "layer {i} expects {} input channels but receives {c}",
                        l.in_channels
                    )));
                }
            }
            if l.tensors.iter().any(|(_, t)| t.dtype() != self.dtype) {
                return Err(bad(format!("layer {i} holds tensors of another dtype than {}", self.dtype)));
            }
            channels = Some(l.out_channels);
        }
        let last_dense = self.layers.iter().rev().find(|l| l.kind == LayerKind::Dense);
        match last_dense {
            Some(d) if d.out_channels as usize == self.class_count => {}
            _ => return Err(bad(format!("final dense layer must have {} outputs", self.class_count))),
        }
        if !self.labels.is_empty() && self.labels.len() != self.class_count {
            return Err(bad(format!(
                "{} label names for {} classes",
                self.labels.len(),
                self.class_count
            )));
        }
        Ok(())
    }

    /// Copy with every tensor stored at `dtype`.
    pub fn to_dtype(&self, dtype: DType) -> ModelWeights {
        let mut out = self.clone();
        out.dtype = dtype;
        for l in &mut out.layers {
            for (_, t) in &mut l.tensors {
                *t = t.converted(dtype);
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.dtype.code());
        out.extend_from_slice(&(self.class_count as u32).to_le_bytes());
        out.extend_from_slice(&self.bn_epsilon.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        let mut offset = 0u64;
        for l in &self.layers {
            out.extend_from_slice(&[l.kind.code(), l.kernel[0], l.kernel[1], l.stride]);
            out.extend_from_slice(&l.in_channels.to_le_bytes());
            out.extend_from_slice(&l.out_channels.to_le_bytes());
            out.push(l.tensors.len() as u8);
            for (role, t) in &l.tensors {
                let len = (t.len() * self.dtype.size()) as u64;
                out.push(role.code());
                out.extend_from_slice(&offset.to_le_bytes());
                out.extend_from_slice(&len.to_le_bytes());
                offset += len;
            }
        }
        out.extend_from_slice(&(self.labels.len() as u32).to_le_bytes());
        for name in &self.labels {
            let b = name.as_bytes();
            let len = u16::try_from(b.len()).map_err(|_| Error::invalid("labels", "label name too long"))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(b);
        }
        out.extend_from_slice(&offset.to_le_bytes());
        for l in &self.layers {
            for (_, t) in &l.tensors {
                t.write_le(&mut out);
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ModelWeights> {
        Ok(parse(bytes)?)
    }

    /// Writes the model at `dtype` (converting if necessary).
    pub fn save(&self, path: impl AsRef<Path>, dtype: DType) -> Result<()> {
        let path = path.as_ref();
        let bytes = if dtype == self.dtype {
            self.to_bytes()?
        } else {
            self.to_dtype(dtype).to_bytes()?
        };
        std::fs::write(path, bytes).map_err(|e| Error::io(format!("write {}", path.display()), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ModelWeights> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        Self::from_bytes(&bytes)
    }
}

pub fn save_weights(m: &ModelWeights, path: impl AsRef<Path>, dtype: DType) -> Result<()> {
    m.save(path, dtype)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelWeights> {
    ModelWeights::load(path)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> std::result::Result<&'a [u8], WeightsError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(WeightsError::Truncated(what))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> std::result::Result<u8, WeightsError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> std::result::Result<u16, WeightsError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> std::result::Result<u32, WeightsError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> std::result::Result<u64, WeightsError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn parse(bytes: &[u8]) -> std::result::Result<ModelWeights, WeightsError> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = c.take(4, "magic")?.try_into().unwrap();
    if &magic != MAGIC {
        return Err(WeightsError::BadMagic(magic));
    }
    let version = c.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(WeightsError::Version { found: version });
    }
    let dtype_code = c.u8("dtype")?;
    let class_count = c.u32("class count")? as usize;
    let bn_epsilon = f32::from_le_bytes(c.take(4, "epsilon")?.try_into().unwrap());
    let layer_count = c.u32("layer count")? as usize;

    struct Entry {
        role: u8,
        offset: u64,
        len: u64,
    }
    let mut table = Vec::new();
    for _ in 0..layer_count {
        let head = c.take(4, "layer table")?;
        let (kind, kh, kw, stride) = (head[0], head[1], head[2], head[3]);
        let cin = c.u32("layer table")?;
        let cout = c.u32("layer table")?;
        let n = c.u8("layer table")?;
        let mut entries = Vec::with_capacity(n as usize);
        for _ in 0..n {
            entries.push(Entry {
                role: c.u8("tensor table")?,
                offset: c.u64("tensor table")?,
                len: c.u64("tensor table")?,
            });
        }
        table.push((kind, [kh, kw], stride, cin, cout, entries));
    }
    let label_count = c.u32("label table")? as usize;
    let mut labels = Vec::with_capacity(label_count.min(1 << 16));
    for _ in 0..label_count {
        let len = c.u16("label table")? as usize;
        let raw = c.take(len, "label table")?;
        labels.push(
            String::from_utf8(raw.to_vec())
                .map_err(|_| WeightsError::Malformed("label name is not utf-8".into()))?,
        );
    }
    let payload_len = c.u64("payload length")?;
    let payload_len = usize::try_from(payload_len).map_err(|_| WeightsError::Truncated("payload"))?;
    let payload = c.take(payload_len, "payload")?;
    let body_end = c.pos;
    let stored = c.u32("checksum")?;
    if c.pos != bytes.len() {
        return Err(WeightsError::Malformed(format!(
            "{} trailing bytes after the checksum",
            bytes.len() - c.pos
        )));
    }
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(WeightsError::Checksum { stored, computed });
    }

    let dtype = DType::from_code(dtype_code)
        .ok_or_else(|| WeightsError::Malformed(format!("unknown dtype code {dtype_code}")))?;
    let mut layers = Vec::with_capacity(layer_count);
    for (i, (kind, kernel, stride, cin, cout, entries)) in table.into_iter().enumerate() {
        let kind = LayerKind::from_code(kind)
            .ok_or_else(|| WeightsError::Malformed(format!("layer {i}: unknown kind code {kind}")))?;
        let mut layer = LayerSpec::new(kind, kernel, stride, cin as usize, cout as usize);
        for e in entries {
            let role = TensorRole::from_code(e.role)
                .ok_or_else(|| WeightsError::Malformed(format!("layer {i}: unknown tensor role {}", e.role)))?;
            let end = e.offset.checked_add(e.len).filter(|&x| x <= payload.len() as u64);
            let end = end.ok_or_else(|| WeightsError::Malformed(format!("layer {i}: tensor outside payload")))?;
            if e.len % dtype.size() as u64 != 0 {
                return Err(WeightsError::Malformed(format!("layer {i}: tensor length not a multiple of {dtype}")));
            }
            layer.set_tensor(role, TensorData::read_le(&payload[e.offset as usize..end as usize], dtype));
        }
        layers.push(layer);
    }
    let m = ModelWeights {
        layers,
        class_count,
        dtype,
        bn_epsilon,
        labels,
    };
    m.validate().map_err(|e| match e {
        Error::Weights(w) => w,
        other => WeightsError::Malformed(other.to_string()),
    })?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelWeights {
        let layers = vec![
            LayerSpec::new(LayerKind::Conv, [3, 3], 2, 1, 2).with_tensor(TensorRole::Kernel, (0..18).map(|i| i as f32 * 0.1).collect()),
            LayerSpec::new(LayerKind::BatchNorm, [1, 1], 1, 2, 2)
                .with_tensor(TensorRole::Beta, vec![0.1, -0.1])
                .with_tensor(TensorRole::MovingMean, vec![0.0, 0.5])
                .with_tensor(TensorRole::MovingVariance, vec![1.0, 2.0]),
            LayerSpec::new(LayerKind::Relu, [1, 1], 1, 2, 2),
            LayerSpec::new(LayerKind::GlobalAvgPool, [1, 1], 1, 2, 2),
            LayerSpec::new(LayerKind::Dense, [1, 1], 1, 2, 3)
                .with_tensor(TensorRole::Kernel, vec![1.0, -1.0, 0.5, 0.25, 1.0 / 3.0, 2.0])
                .with_tensor(TensorRole::Bias, vec![0.0, 0.1, 65504.0]),
            LayerSpec::new(LayerKind::Sigmoid, [1, 1], 1, 3, 3),
        ];
        ModelWeights {
            layers,
            class_count: 3,
            dtype: DType::F32,
            bn_epsilon: 1e-3,
            labels: vec!["a".into(), "b".into(), "ç".into()],
        }
    }

    fn err(bytes: &[u8]) -> WeightsError {
        match ModelWeights::from_bytes(bytes) {
            Err(Error::Weights(e)) => e,
            other => panic!("expected weights error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        for dtype in [DType::F32, DType::F16] {
            let m = tiny().to_dtype(dtype);
            let bytes = m.to_bytes().unwrap();
            let back = ModelWeights::from_bytes(&bytes).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.to_bytes().unwrap(), bytes);
        }
    }

    #[test]
    fn half_conversion_is_ieee_binary16() {
        let t = TensorData::F32(vec![1.0, -2.0, 65504.0, 1.0 + 1.0 / 2048.0]).converted(DType::F16);
        let TensorData::F16(v) = t else { unreachable!() };
        assert_eq!(v[0].to_bits(), 0x3C00);
        assert_eq!(v[1].to_bits(), 0xC000);
        assert_eq!(v[2].to_bits(), 0x7BFF);
        // exactly halfway between 1.0 and the next half: ties to even
        assert_eq!(v[3].to_bits(), 0x3C00);
    }

    #[test]
    fn distinct_errors() {
        let bytes = tiny().to_bytes().unwrap();

        let mut b = bytes.clone();
        b[0] = b'X';
        assert!(matches!(err(&b), WeightsError::BadMagic(_)));

        let mut b = bytes.clone();
        b[4] = 9;
        assert!(matches!(err(&b), WeightsError::Version { found: 9 }));

        assert!(matches!(err(&bytes[..bytes.len() - 7]), WeightsError::Truncated(_)));
        assert!(matches!(err(&bytes[..10]), WeightsError::Truncated(_)));

        let mut b = bytes.clone();
        let n = b.len();
        b[n - 10] ^= 0x40;
        assert!(matches!(err(&b), WeightsError::Checksum { .. }));
    }

    #[test]
    fn validation_rejects_inconsistent_models() {
        let mut m = tiny();
        m.class_count = 4;
        assert!(m.validate().is_err());
        let mut m = tiny();
        m.layers[1].in_channels = 3;
        m.layers[1].out_channels = 3;
        assert!(m.validate().is_err());
        let mut m = tiny();
        m.layers[0].stride = 3;
        assert!(m.validate().is_err());
        let mut m = tiny();
        m.layers[0].set_tensor(TensorRole::Kernel, TensorData::F32(vec![0.0; 5]));
        assert!(m.validate().is_err());
    }
}
