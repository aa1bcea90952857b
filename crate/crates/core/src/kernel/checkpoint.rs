//! Versioned JSON checkpoint container.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::adam::AdamState;
use super::models::{ModelKind, ModelSpec};
use super::params::ParamVector;
use crate::error::{Error, Result};

pub const FORMAT: &str = "tgdin-checkpoint";
pub const VERSION: u32 = 1;

/// Where a checkpoint came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub epoch: usize,
    /// Selection metric (calibration RMSE for the demand model, validation
    /// loss for the direct models).
    pub metric: Option<f64>,
    /// Free-form extras, e.g. a fine-tuning spec or the source capacity.
    #[serde(default)]
    pub extra: serde_json::Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub format: String,
    pub version: u32,
    pub spec: ModelSpec,
    pub params: ParamVector,
    pub adam: Option<AdamState>,
    pub provenance: Provenance,
}

impl ModelCheckpoint {
    pub fn new(spec: ModelSpec, params: ParamVector, adam: Option<AdamState>, provenance: Provenance) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            spec,
            params,
            adam,
            provenance,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn expect_kind(&self, kinds: &[ModelKind]) -> Result<()> {
        if kinds.contains(&self.spec.kind) {
            return Ok(());
        }
        Err(Error::KindMismatch {
            expected: kinds.iter().map(|k| k.name()).collect::<Vec<_>>().join("|"),
            found: self.spec.kind.name().to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != FORMAT {
            return Err(Error::invalid(format!("not a checkpoint (format `{}`)", self.format)));
        }
        if self.version != VERSION {
            return Err(Error::Unsupported(format!("checkpoint version {}", self.version)));
        }
        self.spec.validate()?;
        self.params.validate()?;
        let expected = self.spec.zero_params();
        if expected.layout != self.params.layout {
            return Err(Error::invalid("parameter layout does not match the model spec"));
        }
        if self.params.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("checkpoint holds non-finite parameters"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(s)?;
        ck.validate()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}
