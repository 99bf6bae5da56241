//! Versioned JSON checkpoints holding everything needed to resume or evaluate.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Layer, Network, NetworkSpec, TrainRunConfig};

pub const CHECKPOINT_FORMAT: &str = "xbar-snn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub spec: NetworkSpec,
    pub train: TrainRunConfig,
    pub epochs_completed: usize,
    pub layers: Vec<Layer>,
}

impl Checkpoint {
    pub fn capture(net: &Network, train: &TrainRunConfig, epochs_completed: usize) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            spec: net.spec.clone(),
            train: train.clone(),
            epochs_completed,
            layers: net.layers.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("not valid JSON: {e}")))?;
        match value.get("format").and_then(|v| v.as_str()) {
            Some(CHECKPOINT_FORMAT) => {}
            Some(other) => return Err(Error::Checkpoint(format!("unexpected format tag {other:?}"))),
            None => return Err(Error::Checkpoint("missing format tag".into())),
        }
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(CHECKPOINT_VERSION) => {}
            Some(v) => {
                return Err(Error::Checkpoint(format!(
                    "version {v} is not supported (this build reads version {CHECKPOINT_VERSION})"
                )))
            }
            None => return Err(Error::Checkpoint("missing version".into())),
        }
        let ckpt: Checkpoint =
            serde_json::from_value(value).map_err(|e| Error::Checkpoint(format!("malformed contents: {e}")))?;
        ckpt.validate()?;
        Ok(ckpt)
    }

    fn validate(&self) -> Result<()> {
        self.spec.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        if self.layers.len() + 1 != self.spec.layer_sizes.len() {
            return Err(Error::Checkpoint(format!(
                "{} layers stored for {} layer sizes",
                self.layers.len(),
                self.spec.layer_sizes.len()
            )));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let (n_in, n_out) = (self.spec.layer_sizes[l], self.spec.layer_sizes[l + 1]);
            let wrap = |e: Error| Error::Checkpoint(format!("layer {l}: {e}"));
            layer.params.validate().map_err(wrap)?;
            layer.crossbar.validate().map_err(wrap)?;
            layer.head.validate().map_err(wrap)?;
            let shapes = [
                layer.params.n_in() == n_in,
                layer.params.n_out() == n_out,
                layer.crossbar.n_in() == n_in,
                layer.crossbar.n_out() == n_out,
                layer.head.n_out() == n_out,
                layer.head.n_classes() == self.spec.n_classes,
            ];
            if shapes.contains(&false) {
                return Err(Error::Checkpoint(format!("layer {l}: shapes disagree with {n_in}->{n_out}")));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, self.to_json() + "\n").map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn into_network(self) -> Network {
        Network {
            spec: self.spec,
            layers: self.layers,
        }
    }
}
