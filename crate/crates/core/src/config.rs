//! TOML run configuration. Every tunable constant lives here with a default;
//! unknown keys are rejected.
//!
//! ```toml
//! seed = 1
//!
//! [data]
//! dir = "data"
//! n_classes = 10
//!
//! [network]
//! hidden = [200]
//! update_rule = "error-triggered"
//! target_rate = 10.0
//!
//! [train]
//! epochs = 5
//!
//! [output]
//! dir = "runs/default"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::learning::{EventCoding, SurrogateWindow};
use crate::network::{ControllerConfig, CrossbarConfig, Mode, NetworkSpec, NeuronConfig, TrainRunConfig, UpdateRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Dataset directory: written by `gen-data`, read by `train` and `sweep`.
    pub dir: PathBuf,
    pub n_classes: usize,
    pub n_channels: usize,
    pub n_steps: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub anchors_per_class: usize,
    pub jitter: u32,
    pub noise_rate: f64,
    pub disjoint_channels: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        let s = SyntheticSpec::default();
        DataConfig {
            dir: PathBuf::from("data"),
            n_classes: s.n_classes,
            n_channels: s.n_channels,
            n_steps: s.n_steps,
            train_per_class: s.train_per_class,
            test_per_class: s.test_per_class,
            anchors_per_class: s.anchors_per_class,
            jitter: s.jitter,
            noise_rate: s.noise_rate,
            disjoint_channels: s.disjoint_channels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    /// Neurons per layer; the input size comes from the dataset.
    pub hidden: Vec<usize>,
    pub mode: Mode,
    pub update_rule: UpdateRule,
    pub target_rate: f64,
    pub eta: f64,
    pub error_gain: f64,
    pub event_coding: EventCoding,
    pub dt_ms: f64,
    pub u_minus: f64,
    pub u_plus: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let s = NetworkSpec::default();
        NetworkSection {
            hidden: s.layer_sizes[1..].to_vec(),
            mode: s.mode,
            update_rule: s.update_rule,
            target_rate: s.target_rate,
            eta: s.eta,
            error_gain: s.error_gain,
            event_coding: s.event_coding,
            dt_ms: s.dt_ms,
            u_minus: s.window.u_minus,
            u_plus: s.window.u_plus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("runs/default"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seeds weights, decays, heads, data generation and shuffling.
    pub seed: u64,
    pub data: DataConfig,
    pub network: NetworkSection,
    pub neuron: NeuronConfig,
    pub crossbar: CrossbarConfig,
    pub controller: ControllerConfig,
    pub train: TrainRunConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    /// Parses TOML text, then applies `key.path=value` overrides.
    pub fn from_toml(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for (key, value) in overrides {
            set_path(&mut table, key, value)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides).map_err(|e| match (e, path) {
            (Error::Config(msg), Some(p)) => Error::Config(format!("{}: {msg}", p.display())),
            (e, _) => e,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.synthetic_spec().validate().map_err(wrap)?;
        self.train.validate().map_err(wrap)?;
        self.network_spec(self.data.n_channels, self.data.n_classes).validate().map_err(wrap)?;
        if self.network.hidden.is_empty() {
            return Err(Error::Config("network.hidden needs at least one layer".into()));
        }
        if !(self.crossbar.g_min < self.crossbar.g_max) {
            return Err(Error::Config("crossbar.g_min must be below crossbar.g_max".into()));
        }
        Ok(())
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        let d = &self.data;
        SyntheticSpec {
            n_classes: d.n_classes,
            n_channels: d.n_channels,
            n_steps: d.n_steps,
            train_per_class: d.train_per_class,
            test_per_class: d.test_per_class,
            anchors_per_class: d.anchors_per_class,
            jitter: d.jitter,
            noise_rate: d.noise_rate,
            disjoint_channels: d.disjoint_channels,
            seed: self.seed,
        }
    }

    pub fn network_spec(&self, n_inputs: usize, n_classes: usize) -> NetworkSpec {
        let n = &self.network;
        let mut layer_sizes = vec![n_inputs];
        layer_sizes.extend(&n.hidden);
        NetworkSpec {
            layer_sizes,
            n_classes,
            seed: self.seed,
            mode: n.mode,
            window: SurrogateWindow {
                u_minus: n.u_minus,
                u_plus: n.u_plus,
            },
            update_rule: n.update_rule,
            target_rate: n.target_rate,
            eta: n.eta,
            error_gain: n.error_gain,
            event_coding: n.event_coding,
            dt_ms: n.dt_ms,
            neuron: self.neuron.clone(),
            crossbar: self.crossbar.clone(),
            controller: self.controller.clone(),
        }
    }

    pub fn network_spec_for(&self, dataset: &Dataset) -> NetworkSpec {
        self.network_spec(dataset.n_channels, dataset.n_classes)
    }
}

fn set_path(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let value = parse_value(raw);
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {part:?} is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Interprets an override value as a TOML literal, falling back to a string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
