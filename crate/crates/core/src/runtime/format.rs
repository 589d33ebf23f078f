//! ETCW weight containers and ETRL trial containers.
//!
//! All multi-byte integers and reals are little-endian.
//!
//! ETCW:
//!
//! ```text
//! "ETCW" | version u32 = 1 | meta_len u32 | meta (UTF-8 JSON)
//! tensor_count u32
//! per tensor: name_len u16 | name | dtype u8 | ndim u8 | dims u32 * ndim | payload
//! ```
//!
//! dtype 0 is `f32` row-major; dtype 1 is `i8` codes row-major followed by
//! an `f32` scale and an `i32` zero-point. The metadata carries the
//! hyperparameters, the family tag, the ordered tensor manifest and, for
//! quantized containers, the activation calibration.
//!
//! ETRL:
//!
//! ```text
//! "ETRL" | version u32 = 1 | n_trials u32 | C u16 | T u32 | fs f32 | n_classes u8
//! labels u8 * n_trials | data f32 * n_trials * C * T (trial, channel, time)
//! ```

use serde::{Deserialize, Serialize};

use super::quant::{QScale, QTensor};
use super::trials::TrialSet;
use super::weights::WeightStore;
use crate::archspec::{ArchError, Family, HyperParams};
use crate::tensor::Tensor;

pub const ETCW_MAGIC: [u8; 4] = *b"ETCW";
pub const ETRL_MAGIC: [u8; 4] = *b"ETRL";
pub const FORMAT_VERSION: u32 = 1;

pub const DTYPE_F32: u8 = 0;
pub const DTYPE_I8: u8 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported version {found} (expected {FORMAT_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("truncated payload while reading {0}")]
    Truncated(String),
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("malformed metadata: {0}")]
    BadMeta(String),
    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),
    #[error("tensor records disagree with the manifest: {0}")]
    ManifestMismatch(String),
    #[error("missing parameter {0}")]
    MissingParameter(String),
    #[error("unknown tensor name {0}")]
    UnknownParameter(String),
    #[error("dims mismatch for {name}: expected {expected:?}, found {found:?}")]
    DimsMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("container holds quantized tensors; load it as a quantized model")]
    QuantizedContainer,
    #[error("container holds float tensors where quantized ones were expected")]
    FloatContainer,
    #[error("field {field} value {value} does not fit the on-disk type")]
    Overflow { field: &'static str, value: usize },
    #[error("invalid trial set: {0}")]
    InvalidTrials(String),
    #[error(transparent)]
    Arch(#[from] ArchError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub dtype: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtcwMeta {
    pub family: Family,
    pub hyperparams: HyperParams,
    pub tensors: Vec<ManifestEntry>,
    /// Per-layer activation quantization, indexed like the graph's layers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activations: Option<Vec<Option<QScale>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StoredTensor {
    F32(Tensor),
    I8(QTensor),
}

impl StoredTensor {
    pub fn dims(&self) -> &[usize] {
        match self {
            StoredTensor::F32(t) => t.dims(),
            StoredTensor::I8(q) => &q.dims,
        }
    }

    pub fn dtype(&self) -> u8 {
        match self {
            StoredTensor::F32(_) => DTYPE_F32,
            StoredTensor::I8(_) => DTYPE_I8,
        }
    }
}

/// Raw ETCW content before it is checked against a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct EtcwContainer {
    pub meta: EtcwMeta,
    pub tensors: Vec<(String, StoredTensor)>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], FormatError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| FormatError::Truncated(what.to_string()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N], FormatError> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn u8(&mut self, what: &str) -> Result<u8, FormatError> {
        Ok(self.array::<1>(what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.array(what)?))
    }

    fn u32(&mut self, what: &str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    fn i32(&mut self, what: &str) -> Result<i32, FormatError> {
        Ok(i32::from_le_bytes(self.array(what)?))
    }

    fn f32(&mut self, what: &str) -> Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.array(what)?))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>, FormatError> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| FormatError::Truncated(what.into()))?, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect())
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<(), FormatError> {
        // a short file that starts like the magic is truncated, anything else is foreign
        if self.buf.len() < 4 && expected.starts_with(self.buf) {
            return Err(FormatError::Truncated("magic".into()));
        }
        let found = self.take(4, "magic").map_err(|_| FormatError::BadMagic {
            expected: String::from_utf8_lossy(&expected).into_owned(),
            found: String::from_utf8_lossy(self.buf).into_owned(),
        })?;
        if found != expected {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(&expected).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        let version = self.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(FormatError::VersionMismatch { found: version });
        }
        Ok(())
    }

    fn finish(&self) -> Result<(), FormatError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(FormatError::TrailingBytes(n)),
        }
    }
}

fn fit<T: TryFrom<usize>>(field: &'static str, value: usize) -> Result<T, FormatError> {
    T::try_from(value).map_err(|_| FormatError::Overflow { field, value })
}

impl EtcwContainer {
    pub fn to_bytes(&self) -> Result<Vec<u8>, FormatError> {
        let meta = serde_json::to_vec(&self.meta).map_err(|e| FormatError::BadMeta(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(&ETCW_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&fit::<u32>("meta_len", meta.len())?.to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&fit::<u32>("tensor_count", self.tensors.len())?.to_le_bytes());
        for (name, tensor) in &self.tensors {
            out.extend_from_slice(&fit::<u16>("name_len", name.len())?.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(tensor.dtype());
            let dims = tensor.dims();
            out.push(fit::<u8>("ndim", dims.len())?);
            for &d in dims {
                out.extend_from_slice(&fit::<u32>("dim", d)?.to_le_bytes());
            }
            match tensor {
                StoredTensor::F32(t) => {
                    for v in t.data() {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
                StoredTensor::I8(q) => {
                    out.extend(q.codes.iter().map(|&c| c as u8));
                    out.extend_from_slice(&q.scale.to_le_bytes());
                    out.extend_from_slice(&q.zero_point.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::new(bytes);
        r.magic(ETCW_MAGIC)?;
        let meta_len = r.u32("meta_len")? as usize;
        let meta_bytes = r.take(meta_len, "metadata")?;
        let meta: EtcwMeta =
            serde_json::from_slice(meta_bytes).map_err(|e| FormatError::BadMeta(e.to_string()))?;
        let count = r.u32("tensor_count")? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for i in 0..count {
            let what = |field: &str| format!("tensor {i} {field}");
            let name_len = r.u16(&what("name length"))? as usize;
            let name = std::str::from_utf8(r.take(name_len, &what("name"))?)
                .map_err(|e| FormatError::BadMeta(format!("tensor {i} name is not UTF-8: {e}")))?
                .to_string();
            let dtype = r.u8(&what("dtype"))?;
            let ndim = r.u8(&what("ndim"))? as usize;
            let dims = (0..ndim)
                .map(|_| r.u32(&what("dims")).map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let numel = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| FormatError::Truncated(what("payload")))?;
            let tensor = match dtype {
                DTYPE_F32 => {
                    let data = r.f32s(numel, &what("payload"))?;
                    StoredTensor::F32(Tensor::new(dims, data).expect("length matches dims"))
                }
                DTYPE_I8 => {
                    let codes = r.take(numel, &what("payload"))?.iter().map(|&b| b as i8).collect();
                    let scale = r.f32(&what("scale"))?;
                    let zero_point = r.i32(&what("zero point"))?;
                    StoredTensor::I8(QTensor {
                        dims,
                        codes,
                        scale,
                        zero_point,
                    })
                }
                other => return Err(FormatError::UnknownDtype(other)),
            };
            tensors.push((name, tensor));
        }
        r.finish()?;

        if meta.tensors.len() != tensors.len() {
            return Err(FormatError::ManifestMismatch(format!(
                "manifest lists {} tensors, container holds {}",
                meta.tensors.len(),
                tensors.len()
            )));
        }
        for (entry, (name, t)) in meta.tensors.iter().zip(&tensors) {
            if entry.name != *name || entry.dims != t.dims() || entry.dtype != t.dtype() {
                return Err(FormatError::ManifestMismatch(format!(
                    "manifest entry {} {:?} dtype {} vs record {name} {:?} dtype {}",
                    entry.name,
                    entry.dims,
                    entry.dtype,
                    t.dims(),
                    t.dtype()
                )));
            }
        }
        Ok(Self { meta, tensors })
    }

    pub(crate) fn build(
        hp: &HyperParams,
        family: Family,
        tensors: Vec<(String, StoredTensor)>,
        activations: Option<Vec<Option<QScale>>>,
    ) -> Self {
        let manifest = tensors
            .iter()
            .map(|(name, t)| ManifestEntry {
                name: name.clone(),
                dims: t.dims().to_vec(),
                dtype: t.dtype(),
            })
            .collect();
        Self {
            meta: EtcwMeta {
                family,
                hyperparams: hp.clone(),
                tensors: manifest,
                activations,
            },
            tensors,
        }
    }

    pub fn is_quantized(&self) -> bool {
        self.tensors.iter().any(|(_, t)| matches!(t, StoredTensor::I8(_)))
    }
}

pub fn load_container(bytes: &[u8]) -> Result<EtcwContainer, FormatError> {
    EtcwContainer::from_bytes(bytes)
}

/// Serializes a float weight store; tensors are written in canonical graph
/// order.
pub fn save_weights(store: &WeightStore) -> Result<Vec<u8>, FormatError> {
    let graph = store.graph();
    let tensors = graph
        .param_specs()
        .into_iter()
        .map(|p| {
            let t = store.get(&p.name).expect("store matches graph").clone();
            (p.name, StoredTensor::F32(t))
        })
        .collect();
    EtcwContainer::build(store.hp(), store.family(), tensors, None).to_bytes()
}

pub fn load_weights(bytes: &[u8]) -> Result<WeightStore, FormatError> {
    let c = EtcwContainer::from_bytes(bytes)?;
    if c.is_quantized() {
        return Err(FormatError::QuantizedContainer);
    }
    let mut entries = std::collections::BTreeMap::new();
    for (name, t) in c.tensors {
        let StoredTensor::F32(t) = t else { unreachable!("checked above") };
        if entries.insert(name.clone(), t).is_some() {
            return Err(FormatError::ManifestMismatch(format!("duplicate tensor {name}")));
        }
    }
    WeightStore::new(c.meta.hyperparams, c.meta.family, entries)
}

pub fn save_trials(set: &TrialSet) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::with_capacity(23 + set.n_trials() + 4 * set.data().len());
    out.extend_from_slice(&ETRL_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&fit::<u32>("n_trials", set.n_trials())?.to_le_bytes());
    out.extend_from_slice(&fit::<u16>("C", set.channels())?.to_le_bytes());
    out.extend_from_slice(&fit::<u32>("T", set.samples())?.to_le_bytes());
    out.extend_from_slice(&set.fs().to_le_bytes());
    out.push(fit::<u8>("n_classes", set.n_classes())?);
    for &l in set.labels() {
        out.push(fit::<u8>("label", l)?);
    }
    for v in set.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn load_trials(bytes: &[u8]) -> Result<TrialSet, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(ETRL_MAGIC)?;
    let n = r.u32("n_trials")? as usize;
    let c = r.u16("C")? as usize;
    let t = r.u32("T")? as usize;
    let fs = r.f32("fs")?;
    let n_classes = r.u8("n_classes")? as usize;
    let labels = r.take(n, "labels")?.iter().map(|&l| l as usize).collect();
    let total = n
        .checked_mul(c)
        .and_then(|v| v.checked_mul(t))
        .ok_or_else(|| FormatError::Truncated("trial data".into()))?;
    let data = r.f32s(total, "trial data")?;
    r.finish()?;
    TrialSet::new(fs, n_classes, c, t, labels, data).map_err(|e| FormatError::InvalidTrials(e.to_string()))
}
