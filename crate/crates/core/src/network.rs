//! Multi-layer spiking network on crossbar weights, with per-layer local
//! classifiers and the training / evaluation loops.
//!
//! Each step, layer `l` reads its traces through its crossbar, fires, and
//! hands its spikes to layer `l + 1` within the same step. Learning then runs
//! independently per layer from that step's snapshots.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::crossbar::{CrossbarArray, ProgrammingOptions, UpdateModel};
use crate::data::{Dataset, LabeledSample};
use crate::dynamics::{LayerParams, LayerState};
use crate::error::{check_len, Error, Result};
use crate::learning::{
    continuous_update, encode_error, error_triggered_update_with, EventCoding, SparseUpdate, SurrogateWindow,
    ThetaController,
};
use crate::local_error::{one_hot, LocalErrorHead};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Spiking,
    BinaryEquivalence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateRule {
    Continuous,
    #[default]
    ErrorTriggered,
}

/// Nominal neuron constants; per-channel decays are jittered around them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeuronConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    /// Relative half-width of the uniform decay randomization.
    pub decay_spread: f64,
}

impl Default for NeuronConfig {
    fn default() -> Self {
        NeuronConfig {
            alpha: 0.8,
            beta: 0.6,
            gamma: 0.8,
            delta: 0.5,
            decay_spread: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossbarConfig {
    pub g_min: f64,
    pub g_max: f64,
    /// Initial conductances are uniform in `G_ref +- init_spread (G_max - G_min)`.
    pub init_spread: f64,
    pub update_model: UpdateModel,
    pub quantize_levels: Option<u32>,
    pub write_noise_sigma: Option<f64>,
}

impl Default for CrossbarConfig {
    fn default() -> Self {
        CrossbarConfig {
            g_min: 0.0,
            g_max: 1.0,
            init_spread: 0.25,
            update_model: UpdateModel::Linear,
            quantize_levels: None,
            write_noise_sigma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub theta_init: f64,
    /// Threshold change per Hz of rate error, per step.
    pub gain: f64,
    /// Rate-estimator time constant in seconds.
    pub rate_tau: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            theta_init: 0.0015,
            gain: 1e-8,
            rate_tau: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSpec {
    /// `[inputs, layer 1 neurons, layer 2 neurons, ...]`.
    pub layer_sizes: Vec<usize>,
    pub n_classes: usize,
    pub seed: u64,
    pub mode: Mode,
    pub window: SurrogateWindow,
    pub update_rule: UpdateRule,
    /// Per-neuron error-event rate the controllers aim for, in Hz.
    pub target_rate: f64,
    /// Learning rate of the continuous rule.
    pub eta: f64,
    /// Multiplies the feedback error before thresholding or the continuous rule.
    pub error_gain: f64,
    pub event_coding: EventCoding,
    /// Physical duration of one step, for rates.
    pub dt_ms: f64,
    pub neuron: NeuronConfig,
    pub crossbar: CrossbarConfig,
    pub controller: ControllerConfig,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            layer_sizes: vec![100, 200],
            n_classes: 10,
            seed: 1,
            mode: Mode::Spiking,
            window: SurrogateWindow::default(),
            update_rule: UpdateRule::ErrorTriggered,
            target_rate: 10.0,
            eta: 0.6,
            error_gain: 0.005,
            event_coding: EventCoding::Unit,
            dt_ms: 1.0,
            neuron: NeuronConfig::default(),
            crossbar: CrossbarConfig::default(),
            controller: ControllerConfig::default(),
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::InvalidParam("layer_sizes needs an input size and at least one layer".into()));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::InvalidParam("layer sizes must be positive".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::InvalidParam(format!("need at least 2 classes, got {}", self.n_classes)));
        }
        self.window.validate()?;
        if !(self.dt_ms > 0.0) {
            return Err(Error::InvalidParam("dt_ms must be positive".into()));
        }
        if !(self.target_rate >= 0.0) {
            return Err(Error::InvalidParam("target_rate must be >= 0".into()));
        }
        if !(self.eta > 0.0) {
            return Err(Error::InvalidParam("eta must be positive".into()));
        }
        if !(self.error_gain > 0.0) {
            return Err(Error::InvalidParam("error_gain must be positive".into()));
        }
        Ok(())
    }

    pub fn dt_seconds(&self) -> f64 {
        self.dt_ms * 1e-3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub params: LayerParams,
    pub crossbar: CrossbarArray,
    pub head: LocalErrorHead,
    pub controller: ThetaController,
    /// Cumulative error events emitted by this layer.
    pub events: u64,
}

impl Layer {
    pub fn n_in(&self) -> usize {
        self.params.n_in()
    }

    pub fn n_out(&self) -> usize {
        self.params.n_out()
    }
}

/// What the learning phase needs from one layer at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSnapshot {
    pub p: Vec<f64>,
    pub u: Vec<f64>,
    pub s: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LayerStepMetrics {
    pub loss: f64,
    pub events: u64,
    pub writes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub layers: Vec<Layer>,
}

impl Network {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::with_capacity(spec.layer_sizes.len() - 1);
        for (l, w) in spec.layer_sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let nc = &spec.neuron;
            let mut params = LayerParams::randomized(
                n_in,
                n_out,
                nc.alpha,
                nc.beta,
                nc.gamma,
                nc.delta,
                nc.decay_spread,
                &mut rng::rng(spec.seed, Stream::Params, l as u64),
            )?;
            if spec.mode == Mode::BinaryEquivalence {
                params = params.binary_network_mode();
            }
            let cc = &spec.crossbar;
            let mut crossbar = CrossbarArray::random(
                n_out,
                n_in,
                cc.g_min,
                cc.g_max,
                cc.init_spread,
                &mut rng::rng(spec.seed, Stream::Weights, l as u64),
            )?;
            crossbar.update_model = cc.update_model;
            crossbar.options = ProgrammingOptions {
                quantize_levels: cc.quantize_levels,
                write_noise_sigma: cc.write_noise_sigma,
                noise_seed: rng::derive(spec.seed, Stream::Noise, l as u64),
            };
            let head = LocalErrorHead::init(rng::derive(spec.seed, Stream::Heads, l as u64), spec.n_classes, n_out)?;
            let controller = ThetaController::new(
                spec.controller.theta_init,
                spec.target_rate,
                spec.controller.gain,
                spec.controller.rate_tau,
            )?;
            layers.push(Layer {
                params,
                crossbar,
                head,
                controller,
                events: 0,
            });
        }
        Ok(Network { spec, layers })
    }

    pub fn n_inputs(&self) -> usize {
        self.spec.layer_sizes[0]
    }

    pub fn fresh_states(&self) -> Vec<LayerState> {
        self.layers.iter().map(|l| LayerState::for_params(&l.params)).collect()
    }

    pub fn total_writes(&self) -> u64 {
        self.layers.iter().map(|l| l.crossbar.total_writes()).sum()
    }

    pub fn total_events(&self) -> u64 {
        self.layers.iter().map(|l| l.events).sum()
    }

    /// Advances every layer by one step. Returns per-layer snapshots of the
    /// traces, membrane and spikes used at this step.
    pub fn forward_step(&self, states: &mut [LayerState], input: &[bool]) -> Result<Vec<StepSnapshot>> {
        check_len("input spikes", self.n_inputs(), input.len())?;
        check_len("layer states", self.layers.len(), states.len())?;
        let mut snaps = Vec::with_capacity(self.layers.len());
        for (l, (layer, st)) in self.layers.iter().zip(states.iter_mut()).enumerate() {
            let drive = layer.crossbar.vmm(&st.p)?;
            st.fire(&drive, &layer.params)?;
            let snap = StepSnapshot {
                p: st.p.clone(),
                u: st.u.clone(),
                s: st.s.clone(),
            };
            let layer_input: &[bool] = if l == 0 { input } else { &snaps_last(&snaps).s };
            st.step_traces(layer_input, &layer.params)?;
            snaps.push(snap);
        }
        Ok(snaps)
    }

    /// One learning step over a batch: `snapshots[b][l]` is sample `b`'s
    /// snapshot of layer `l` and `labels[b]` its class. Updates of all samples
    /// are summed per device and programmed once per layer.
    pub fn learn_step(&mut self, snapshots: &[Vec<StepSnapshot>], labels: &[usize], step: u64) -> Result<Vec<LayerStepMetrics>> {
        check_len("batch labels", snapshots.len(), labels.len())?;
        let spec = &self.spec;
        let n_classes = spec.n_classes;
        let targets: Vec<Vec<f64>> = labels
            .iter()
            .map(|&y| {
                if y >= n_classes {
                    Err(Error::InvalidParam(format!("label {y} outside {n_classes} classes")))
                } else {
                    Ok(one_hot(y, n_classes))
                }
            })
            .collect::<Result<_>>()?;
        let dt = spec.dt_seconds();
        let mut metrics = Vec::with_capacity(self.layers.len());
        let mut updates: Vec<SparseUpdate> = Vec::new();
        for (l, layer) in self.layers.iter_mut().enumerate() {
            updates.clear();
            let mut m = LayerStepMetrics::default();
            let theta = layer.controller.theta;
            for (sample, y) in snapshots.iter().zip(&targets) {
                let snap = sample.get(l).ok_or(Error::Dimension {
                    what: "snapshot layers",
                    expected: l + 1,
                    actual: sample.len(),
                })?;
                let e = layer.head.output_error(&snap.s, y)?;
                m.loss += 0.5 * e.iter().map(|x| x * x).sum::<f64>();
                let mut err = layer.head.feedback_error(&e)?;
                for x in &mut err {
                    *x *= spec.error_gain;
                }
                match spec.update_rule {
                    UpdateRule::Continuous => {
                        updates.extend(continuous_update(&err, &snap.p, &snap.u, &spec.window, spec.eta)?);
                    }
                    UpdateRule::ErrorTriggered => {
                        let (_, events) = encode_error(&err, theta, step);
                        m.events += events.len() as u64;
                        updates.extend(error_triggered_update_with(
                            &events,
                            &snap.p,
                            &snap.u,
                            &spec.window,
                            theta,
                            spec.event_coding,
                        )?);
                    }
                }
            }
            m.writes = layer.crossbar.program(&updates)?.total_writes;
            if spec.update_rule == UpdateRule::ErrorTriggered {
                layer.events += m.events;
                layer.controller.step(m.events as usize, layer.n_out() * snapshots.len(), dt);
            }
            metrics.push(m);
        }
        Ok(metrics)
    }

    /// Time-summed class scores of the last layer's head over one sample.
    pub fn class_scores(&self, sample: &LabeledSample, steps: usize) -> Result<Vec<f64>> {
        let mut states = self.fresh_states();
        let last = self.layers.last().expect("validated: at least one layer");
        let mut acc = vec![0.0; self.spec.n_classes];
        for frame in sample.stream.frames(steps) {
            let snaps = self.forward_step(&mut states, &frame)?;
            let scores = last.head.scores(&snaps_last(&snaps).s)?;
            for (a, s) in acc.iter_mut().zip(scores) {
                *a += s;
            }
        }
        Ok(acc)
    }

    pub fn predict(&self, sample: &LabeledSample, steps: usize) -> Result<usize> {
        Ok(argmax(&self.class_scores(sample, steps)?))
    }

    /// Fraction of samples whose predicted class matches the label. Learning is off.
    pub fn evaluate(&self, samples: &[LabeledSample], steps: usize) -> Result<f64> {
        if samples.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0usize;
        for s in samples {
            if self.predict(s, steps)? == s.label {
                correct += 1;
            }
        }
        Ok(correct as f64 / samples.len() as f64)
    }
}

fn snaps_last(snaps: &[StepSnapshot]) -> &StepSnapshot {
    snaps.last().expect("non-empty")
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainRunConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub steps_per_sample: usize,
    /// Steps at the start of each sample during which learning is off.
    pub burn_in_steps: usize,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        TrainRunConfig {
            batch_size: 1,
            epochs: 5,
            steps_per_sample: 100,
            burn_in_steps: 0,
        }
    }
}

impl TrainRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParam("batch_size must be >= 1".into()));
        }
        if self.steps_per_sample == 0 {
            return Err(Error::InvalidParam("steps_per_sample must be >= 1".into()));
        }
        Ok(())
    }
}

/// One metrics line per layer per batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub epoch: usize,
    pub batch: usize,
    pub layer: usize,
    /// Mean local loss per sample-step.
    pub loss: f64,
    pub events: u64,
    pub writes: u64,
    pub theta: f64,
    pub rate_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: usize,
    pub total_writes: u64,
    pub total_events: u64,
    /// Mean error-event rate per neuron over the training steps of this run, Hz.
    pub mean_event_rate: f64,
    pub final_theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub accuracy: f64,
    pub mean_loss: f64,
    pub events: u64,
    pub writes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub update_rule: UpdateRule,
    pub target_rate: f64,
    pub initial_accuracy: f64,
    pub epochs: Vec<EpochReport>,
    pub final_accuracy: f64,
    /// Cumulative over the network's lifetime, including resumed runs.
    pub total_writes: u64,
    pub total_events: u64,
    pub layers: Vec<LayerReport>,
}

/// Receives metrics records as they are produced.
pub trait MetricsSink {
    fn batch(&mut self, record: &BatchRecord) -> Result<()>;
    fn epoch(&mut self, record: &EpochRecord) -> Result<()>;

    /// Called after each epoch's evaluation with the number of epochs completed.
    fn epoch_end(&mut self, _net: &Network, _epochs_completed: usize) -> Result<()> {
        Ok(())
    }
}

/// Discards all records.
pub struct NullSink;

impl MetricsSink for NullSink {
    fn batch(&mut self, _: &BatchRecord) -> Result<()> {
        Ok(())
    }
    fn epoch(&mut self, _: &EpochRecord) -> Result<()> {
        Ok(())
    }
}

/// Writes each record as one JSON line.
pub struct JsonLinesSink<W: Write> {
    out: W,
    path: std::path::PathBuf,
}

impl<W: Write> JsonLinesSink<W> {
    pub fn new(out: W, path: impl Into<std::path::PathBuf>) -> Self {
        JsonLinesSink { out, path: path.into() }
    }

    fn line<T: Serialize>(&mut self, record: &T) -> Result<()> {
        let mut s = serde_json::to_string(record).expect("records serialize");
        s.push('\n');
        self.out
            .write_all(s.as_bytes())
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> MetricsSink for JsonLinesSink<W> {
    fn batch(&mut self, record: &BatchRecord) -> Result<()> {
        self.line(record)
    }
    fn epoch(&mut self, record: &EpochRecord) -> Result<()> {
        self.line(record)
    }
}

/// Samples used for accuracy: the test split, or the training split if there is none.
pub fn eval_split(dataset: &Dataset) -> &[LabeledSample] {
    if dataset.test.is_empty() {
        &dataset.train
    } else {
        &dataset.test
    }
}

/// Trains epochs `start_epoch..config.epochs`. Sample order in epoch `e` is a
/// shuffle keyed by the network seed and `e`, so resuming from a checkpoint
/// reproduces an uninterrupted run.
pub fn train(
    net: &mut Network,
    dataset: &Dataset,
    config: &TrainRunConfig,
    start_epoch: usize,
    sink: &mut dyn MetricsSink,
) -> Result<RunReport> {
    config.validate()?;
    dataset.validate()?;
    if dataset.train.is_empty() {
        return Err(Error::InvalidParam("training set is empty".into()));
    }
    check_len("dataset channels", net.n_inputs(), dataset.n_channels)?;
    if dataset.n_classes != net.spec.n_classes {
        return Err(Error::InvalidParam(format!(
            "dataset has {} classes, network has {}",
            dataset.n_classes, net.spec.n_classes
        )));
    }
    let steps = config.steps_per_sample;
    let eval_set = eval_split(dataset);
    let initial_accuracy = net.evaluate(eval_set, steps)?;
    let events_before: Vec<u64> = net.layers.iter().map(|l| l.events).collect();
    let n_layers = net.layers.len();
    let mut sample_steps = 0u64;
    let mut epochs = Vec::new();

    for epoch in start_epoch..config.epochs {
        let mut order: Vec<usize> = (0..dataset.train.len()).collect();
        order.shuffle(&mut rng::rng(net.spec.seed, Stream::Shuffle, epoch as u64));
        let mut ep = EpochReport {
            epoch,
            accuracy: 0.0,
            mean_loss: 0.0,
            events: 0,
            writes: 0,
        };
        let mut loss_terms = 0u64;
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            let samples: Vec<&LabeledSample> = chunk.iter().map(|&i| &dataset.train[i]).collect();
            let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
            let frames: Vec<Vec<Vec<bool>>> = samples.iter().map(|s| s.stream.frames(steps)).collect();
            let mut states: Vec<Vec<LayerState>> = samples.iter().map(|_| net.fresh_states()).collect();
            let mut acc = vec![LayerStepMetrics::default(); n_layers];
            let mut batch_loss_terms = 0u64;
            for n in 0..steps {
                let snaps = states
                    .iter_mut()
                    .zip(&frames)
                    .map(|(st, f)| net.forward_step(st, &f[n]))
                    .collect::<Result<Vec<_>>>()?;
                if n < config.burn_in_steps {
                    continue;
                }
                let m = net.learn_step(&snaps, &labels, n as u64)?;
                batch_loss_terms += samples.len() as u64;
                for (a, x) in acc.iter_mut().zip(m) {
                    a.loss += x.loss;
                    a.events += x.events;
                    a.writes += x.writes;
                }
            }
            for (l, a) in acc.iter().enumerate() {
                let ctl = &net.layers[l].controller;
                sink.batch(&BatchRecord {
                    epoch,
                    batch,
                    layer: l,
                    loss: if batch_loss_terms > 0 { a.loss / batch_loss_terms as f64 } else { 0.0 },
                    events: a.events,
                    writes: a.writes,
                    theta: ctl.theta,
                    rate_estimate: ctl.rate_estimate,
                })?;
                ep.events += a.events;
                ep.writes += a.writes;
            }
            // Loss of the last layer drives the epoch summary.
            ep.mean_loss += acc[n_layers - 1].loss;
            loss_terms += batch_loss_terms;
            sample_steps += batch_loss_terms;
        }
        if loss_terms > 0 {
            ep.mean_loss /= loss_terms as f64;
        }
        ep.accuracy = net.evaluate(eval_set, steps)?;
        sink.epoch(&EpochRecord {
            epoch,
            accuracy: ep.accuracy,
        })?;
        epochs.push(ep);
        sink.epoch_end(net, epoch + 1)?;
    }

    let dt = net.spec.dt_seconds();
    let layers = net
        .layers
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            let run_events = layer.events - events_before[l];
            let neuron_seconds = sample_steps as f64 * layer.n_out() as f64 * dt;
            LayerReport {
                layer: l,
                total_writes: layer.crossbar.total_writes(),
                total_events: layer.events,
                mean_event_rate: if sample_steps > 0 { run_events as f64 / neuron_seconds } else { 0.0 },
                final_theta: layer.controller.theta,
            }
        })
        .collect();
    Ok(RunReport {
        update_rule: net.spec.update_rule,
        target_rate: net.spec.target_rate,
        initial_accuracy,
        final_accuracy: epochs.last().map_or(initial_accuracy, |e| e.accuracy),
        epochs,
        total_writes: net.total_writes(),
        total_events: net.total_events(),
        layers,
    })
}
