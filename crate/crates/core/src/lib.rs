//! Spiking networks trained with error-triggered three-factor updates on
//! simulated memristive crossbars.
//!
//! - [`dynamics`]: per-layer trace, membrane and refractory recurrences
//! - [`learning`]: surrogate box, bipolar error events, update rules, threshold controller
//! - [`local_error`]: fixed random local classifiers with feedback alignment
//! - [`crossbar`]: unbalanced conductance mapping, VMM, bounded programming, write accounting
//! - [`network`]: layer composition, training and evaluation loops
//! - [`data`]: event streams, event files, synthetic datasets
//! - [`config`], [`checkpoint`]: run configuration and persisted state

pub mod checkpoint;
pub mod config;
pub mod crossbar;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod learning;
pub mod local_error;
pub mod matrix;
pub mod network;
pub mod rng;
pub mod runner;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use crossbar::{CrossbarArray, UpdateModel, WriteStats};
pub use data::{Dataset, EventStream, LabeledSample, SpikeEvent, SyntheticSpec};
pub use dynamics::{LayerParams, LayerState};
pub use error::{Error, Result};
pub use learning::{ErrorEvent, EventCoding, Sign, SparseUpdate, SurrogateWindow, ThetaController};
pub use local_error::LocalErrorHead;
pub use matrix::Matrix;
pub use network::{Mode, Network, NetworkSpec, RunReport, TrainRunConfig, UpdateRule};
