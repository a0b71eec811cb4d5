//! JSON parameter document.
//!
//! ```json
//! {
//!   "format": "rnnfc-params",
//!   "version": 1,
//!   "cell_kind": "gru",
//!   "hidden_size": 2,
//!   "input_size": 1,
//!   "gate_bias": false,
//!   "init_seed": 42,
//!   "tensors": [ { "name": "w_z", "rows": 2, "cols": 1, "data": [0.1, -0.3] }, ... ]
//! }
//! ```
//!
//! Tensors appear in the fixed order of `Params::tensors`, data row-major.
//! `gate_bias` is only meaningful for GRU and is always `false` for LSTM.

use serde::{Deserialize, Serialize};

use super::{CellKind, GruParams, Params};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const FORMAT_TAG: &str = "rnnfc-params";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NamedTensor {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    format: String,
    version: u32,
    cell_kind: CellKind,
    hidden_size: usize,
    input_size: usize,
    gate_bias: bool,
    init_seed: Option<u64>,
    tensors: Vec<NamedTensor>,
}

/// Parameters together with the seed they were initialized from.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamsDocument {
    pub params: Params,
    pub init_seed: Option<u64>,
}

impl ParamsDocument {
    pub fn new(params: Params, init_seed: Option<u64>) -> Self {
        Self { params, init_seed }
    }

    fn to_raw(&self) -> RawDocument {
        let p = &self.params;
        RawDocument {
            format: FORMAT_TAG.into(),
            version: FORMAT_VERSION,
            cell_kind: p.kind(),
            hidden_size: p.hidden_size(),
            input_size: p.input_size(),
            gate_bias: matches!(p, Params::Gru(g) if g.has_bias()),
            init_seed: self.init_seed,
            tensors: p
                .tensors()
                .into_iter()
                .map(|(name, _, m)| NamedTensor {
                    name: name.into(),
                    rows: m.rows(),
                    cols: m.cols(),
                    data: m.data().to_vec(),
                })
                .collect(),
        }
    }

    fn from_raw(raw: RawDocument) -> Result<Self> {
        if raw.format != FORMAT_TAG {
            return Err(Error::Format(format!("expected format `{FORMAT_TAG}`, found `{}`", raw.format)));
        }
        if raw.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported params version {}", raw.version)));
        }
        if raw.hidden_size == 0 || raw.input_size == 0 {
            return Err(Error::Format("hidden_size and input_size must be positive".into()));
        }
        let mut params = Params::zeros(raw.cell_kind, raw.hidden_size, raw.input_size);
        if raw.gate_bias {
            match params {
                Params::Gru(g) => params = Params::Gru(GruParams::with_bias(g)),
                Params::Lstm(_) => return Err(Error::Format("gate_bias is only valid for gru".into())),
            }
        }
        {
            let mut slots = params.tensors_mut();
            if slots.len() != raw.tensors.len() {
                return Err(Error::Format(format!(
                    "{} params need {} tensors, document has {}",
                    raw.cell_kind,
                    slots.len(),
                    raw.tensors.len()
                )));
            }
            for ((name, _, slot), t) in slots.iter_mut().zip(raw.tensors) {
                if *name != t.name {
                    return Err(Error::Format(format!("expected tensor `{name}`, found `{}`", t.name)));
                }
                if slot.shape() != (t.rows, t.cols) {
                    return Err(Error::Format(format!(
                        "tensor `{name}` should be {}x{}, header says {}x{}",
                        slot.rows(),
                        slot.cols(),
                        t.rows,
                        t.cols
                    )));
                }
                **slot = Matrix::from_vec(t.rows, t.cols, t.data)
                    .map_err(|e| Error::Format(format!("tensor `{name}`: {e}")))?;
            }
        }
        if !params.is_finite() {
            return Err(Error::Format("parameters contain non-finite values".into()));
        }
        Ok(Self {
            params,
            init_seed: raw.init_seed,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_raw())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_raw(serde_json::from_str(text)?)
    }
}

impl Serialize for ParamsDocument {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_raw().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ParamsDocument {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = RawDocument::deserialize(deserializer)?;
        Self::from_raw(raw).map_err(serde::de::Error::custom)
    }
}
