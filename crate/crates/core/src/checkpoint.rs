//! Policy checkpoints: shape header, logits, optimizer moments, and the seed
//! state needed to continue a run. Stored as JSON; floats round-trip exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::AdamState;
use crate::policy::PolicyParams;
use crate::rng::Seeds;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    /// Number of completed training steps.
    pub step: usize,
    pub rows: usize,
    pub cols: usize,
    pub policy: PolicyParams,
    pub adam: Option<AdamState>,
    pub seeds: Option<Seeds>,
}

impl Checkpoint {
    pub fn new(policy: &PolicyParams, step: usize, adam: Option<&AdamState>, seeds: Option<Seeds>) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            step,
            rows: policy.n_rows(),
            cols: policy.n_actions(),
            policy: policy.clone(),
            adam: adam.cloned(),
            seeds,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Input(format!(
                "checkpoint format {} not supported (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let p = &self.policy;
        if self.rows != p.n_rows()
            || self.cols != p.n_actions()
            || p.logits.len() != self.rows * self.cols
        {
            return Err(Error::Input(format!(
                "checkpoint shape header {}x{} does not match {} logits",
                self.rows,
                self.cols,
                p.logits.len()
            )));
        }
        if !p.is_finite() {
            return Err(Error::Input("checkpoint holds non-finite logits".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::json("checkpoint", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| Error::json("checkpoint", e))?;
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json { source, .. } => Error::json(path.display().to_string(), source),
            other => other,
        })
    }
}
