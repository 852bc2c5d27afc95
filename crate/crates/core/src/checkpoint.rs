//! Versioned parameter files shared by the surrogate and the Q-networks.
//!
//! Layout (JSON, floats round-trip exactly):
//!
//! ```text
//! {
//!   "format": "dhlab-params",
//!   "version": 1,
//!   "kind": "lstm-surrogate" | "q-network",
//!   "dims": { ...kind specific... },
//!   "normalization": { "<name>": { "mean": [..], "std": [..] }, ... },
//!   "meta": { ...free-form... },
//!   "params": [ flat parameter vector ]
//! }
//! ```
//!
//! `lstm-surrogate` dims are `{input, hidden, layers, output}` with
//! normalisers `input` and `target`; parameters follow the `LstmNet` layout.
//! `q-network` dims are `{sizes: [in, 64, 64, 13]}` with no normalisers;
//! parameters follow the `Mlp` layout.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Normalizer;

pub const FORMAT: &str = "dhlab-params";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub dims: serde_json::Value,
    #[serde(default)]
    pub normalization: BTreeMap<String, Normalizer>,
    #[serde(default)]
    pub meta: serde_json::Value,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(kind: &str, dims: serde_json::Value, params: Vec<f64>) -> Self {
        Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            kind: kind.into(),
            dims,
            normalization: BTreeMap::new(),
            meta: serde_json::Value::Null,
            params,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint is serialisable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if c.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", c.format)));
        }
        if c.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", c.version)));
        }
        if c.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(c)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::Checkpoint(format!("expected a {kind} checkpoint, found {}", self.kind)))
        }
    }

    pub fn norm(&self, name: &str) -> Result<&Normalizer> {
        let n = self
            .normalization
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing normaliser {name:?}")))?;
        if !n.is_valid() {
            return Err(Error::Checkpoint(format!("normaliser {name:?} is invalid")));
        }
        Ok(n)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mut c = Checkpoint::new("q-network", serde_json::json!({"sizes": [2, 3]}), vec![0.1, -1e-300, 1.0 / 3.0]);
        c.normalization.insert(
            "input".into(),
            Normalizer {
                mean: vec![0.7],
                std: vec![2.0f64.sqrt()],
            },
        );
        let back = Checkpoint::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_foreign_files() {
        let mut c = Checkpoint::new("x", serde_json::Value::Null, vec![]);
        c.version = 99;
        assert!(Checkpoint::from_json(&c.to_json()).is_err());
        assert!(Checkpoint::from_json("{}").is_err());
    }
}
