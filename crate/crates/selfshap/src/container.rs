//! Versioned binary model container.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic     8 bytes  "SELFSHAP"
//! version   u32
//! hlen      u64      length of the JSON header
//! header    hlen bytes
//! count     u32      number of named arrays
//! arrays    count x { u32 name length, name, u64 element count, f64 values }
//! crc32     u32      over every preceding byte
//! ```
//!
//! Layer arrays are named `layers.{i}.{name}` in row-major order; batch-norm
//! running statistics, the relaxed bias and the value function's reference
//! rows are stored the same way.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use selfshap_core::data::Preprocessor;
use selfshap_core::shapley::{ValueFunction, ValueFunctionKind};
use selfshap_core::train::{model_attributions, TrainConfig};
use selfshap_core::{NetworkSpec, ShapNetwork, Tensor};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SELFSHAP";
pub const FORMAT_VERSION: u32 = 1;

/// Everything needed to reuse a trained model.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub network: ShapNetwork,
    pub preprocessor: Option<Preprocessor>,
    pub value_function: ValueFunction,
    pub train_config: Option<TrainConfig>,
}

impl ModelBundle {
    /// Whether the model was trained on efficiency-normalized attributions.
    pub fn efficiency(&self) -> bool {
        self.train_config.as_ref().is_some_and(|c| c.efficiency_normalization)
    }

    /// The model's explanations for every row of `x`, as trained.
    pub fn attributions(&self, x: &Tensor) -> Result<Tensor> {
        Ok(model_attributions(&self.network, x, &self.value_function, self.efficiency())?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    spec: NetworkSpec,
    preprocessor: Option<Preprocessor>,
    value_function: ValueFunctionKind,
    train_config: Option<TrainConfig>,
}

const DELTA: &str = "delta";
const BASELINE: &str = "value_function.baseline";
const BACKGROUND: &str = "value_function.background";

fn arrays(bundle: &ModelBundle) -> Vec<(String, Vec<f64>)> {
    let net = &bundle.network;
    let mut out = Vec::new();
    for (i, layer) in net.layers().iter().enumerate() {
        for (name, range) in layer.param_arrays() {
            out.push((format!("layers.{i}.{name}"), layer.params()[range].to_vec()));
        }
        for (name, range) in layer.buffer_arrays() {
            out.push((format!("layers.{i}.{name}"), layer.buffers()[range].to_vec()));
        }
    }
    if net.spec().relaxed {
        out.push((DELTA.to_string(), vec![net.delta()]));
    }
    match &bundle.value_function {
        ValueFunction::Baseline { baseline } => out.push((BASELINE.to_string(), baseline.clone())),
        ValueFunction::Marginal { background, .. } => out.push((BACKGROUND.to_string(), background.clone())),
    }
    out
}

pub fn to_bytes(bundle: &ModelBundle) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        spec: bundle.network.spec().clone(),
        preprocessor: bundle.preprocessor.clone(),
        value_function: bundle.value_function.kind(),
        train_config: bundle.train_config.clone(),
    })?;
    let arrays = arrays(bundle);
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    buf.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for (name, values) in &arrays {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("record at byte {} runs past the end", self.at)))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("length does not fit in memory".into()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelBundle> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("missing SELFSHAP magic".into()));
    }
    if bytes.len() < MAGIC.len() + 4 {
        return Err(Error::Format("file ends inside the version field".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < 12 + 4 {
        return Err(Error::Checksum {
            stored: 0,
            computed: crc32fast::hash(bytes),
        });
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut cur = Cursor { bytes: body, at: 12 };
    let hlen = cur.len()?;
    let header: Header = serde_json::from_slice(cur.take(hlen)?)?;
    let count = cur.u32()? as usize;
    let mut named = std::collections::BTreeMap::new();
    for _ in 0..count {
        let name_len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| Error::Format("array name is not UTF-8".into()))?
            .to_string();
        let len = cur.len()?;
        let raw = cur.take(len.checked_mul(8).ok_or_else(|| Error::Format("array too large".into()))?)?;
        let values: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        if named.insert(name.clone(), values).is_some() {
            return Err(Error::Format(format!("array `{name}` appears twice")));
        }
    }
    if cur.at != body.len() {
        return Err(Error::Format(format!("{} trailing bytes after the arrays", body.len() - cur.at)));
    }

    let mut take = |name: &str, len: Option<usize>| -> Result<Vec<f64>> {
        let values = named.remove(name).ok_or_else(|| Error::Format(format!("array `{name}` is missing")))?;
        match len {
            Some(l) if l != values.len() => Err(Error::Format(format!(
                "array `{name}` has {} values, expected {l}",
                values.len()
            ))),
            _ => Ok(values),
        }
    };

    let mut network = ShapNetwork::new(header.spec, 0)?;
    for (i, layer) in network.layers_mut().iter_mut().enumerate() {
        for (name, range) in layer.param_arrays() {
            let values = take(&format!("layers.{i}.{name}"), Some(range.len()))?;
            layer.params_mut()[range].copy_from_slice(&values);
        }
        for (name, range) in layer.buffer_arrays() {
            let values = take(&format!("layers.{i}.{name}"), Some(range.len()))?;
            layer.buffers_mut()[range].copy_from_slice(&values);
        }
    }
    if network.spec().relaxed {
        network.set_delta(take(DELTA, Some(1))?[0])?;
    }
    let n = network.n_features();
    let value_function = match header.value_function {
        ValueFunctionKind::Baseline => ValueFunction::Baseline {
            baseline: take(BASELINE, Some(n))?,
        },
        ValueFunctionKind::Marginal => ValueFunction::marginal(take(BACKGROUND, None)?, n)?,
    };
    if let Some(extra) = named.keys().next() {
        return Err(Error::Format(format!("unexpected array `{extra}`")));
    }
    Ok(ModelBundle {
        network,
        preprocessor: header.preprocessor,
        value_function,
        train_config: header.train_config,
    })
}

pub fn save_model(path: &Path, bundle: &ModelBundle) -> Result<()> {
    fs::write(path, to_bytes(bundle)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelBundle> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
