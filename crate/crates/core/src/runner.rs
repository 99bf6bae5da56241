//! The command implementations behind the CLI: dataset generation, training,
//! evaluation and paired write-count sweeps. Each writes only inside the
//! directory its configuration names.

use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::{
    self, BatchRecord, EpochRecord, JsonLinesSink, MetricsSink, Network, RunReport, UpdateRule,
};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSummary {
    pub manifest: PathBuf,
    pub n_classes: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub total_events: usize,
}

pub fn gen_data(cfg: &RunConfig) -> Result<GenSummary> {
    let ds = cfg.synthetic_spec().generate()?;
    let dir = &cfg.data.dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = ds.write_to_dir(dir)?;
    Ok(GenSummary {
        manifest,
        n_classes: ds.n_classes,
        train_samples: ds.train.len(),
        test_samples: ds.test.len(),
        total_events: ds.train.iter().chain(&ds.test).map(|s| s.stream.len()).sum(),
    })
}

pub struct TrainOutcome {
    pub report: RunReport,
    pub metrics: PathBuf,
    pub checkpoint: PathBuf,
}

/// Metrics sink that also checkpoints after every epoch.
struct RunSink<'a> {
    lines: JsonLinesSink<BufWriter<File>>,
    checkpoint: &'a Path,
    train: &'a network::TrainRunConfig,
}

impl MetricsSink for RunSink<'_> {
    fn batch(&mut self, record: &BatchRecord) -> Result<()> {
        self.lines.batch(record)
    }

    fn epoch(&mut self, record: &EpochRecord) -> Result<()> {
        self.lines.epoch(record)
    }

    fn epoch_end(&mut self, net: &Network, epochs_completed: usize) -> Result<()> {
        Checkpoint::capture(net, self.train, epochs_completed).save(self.checkpoint)
    }
}

/// Trains on the dataset in `cfg.data.dir`, writing metrics, checkpoint and
/// report into `out_dir`. With `resume`, training continues from the stored
/// network and epoch count and metrics are appended.
pub fn train(cfg: &RunConfig, dataset: &Dataset, out_dir: &Path, resume: Option<&Path>) -> Result<TrainOutcome> {
    let (mut net, start_epoch) = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let start = ck.epochs_completed;
            (ck.into_network(), start)
        }
        None => (Network::new(cfg.network_spec_for(dataset))?, 0),
    };
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let metrics = out_dir.join(METRICS_FILE);
    let checkpoint = out_dir.join(CHECKPOINT_FILE);
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(resume.is_some())
        .truncate(resume.is_none())
        .open(&metrics)
        .map_err(|e| Error::io(&metrics, e))?;
    let mut sink = RunSink {
        lines: JsonLinesSink::new(BufWriter::new(file), &metrics),
        checkpoint: &checkpoint,
        train: &cfg.train,
    };
    let report = network::train(&mut net, dataset, &cfg.train, start_epoch, &mut sink)?;
    if start_epoch >= cfg.train.epochs {
        Checkpoint::capture(&net, &cfg.train, start_epoch).save(&checkpoint)?;
    }
    let report_path = out_dir.join(REPORT_FILE);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&report_path, json + "\n").map_err(|e| Error::io(&report_path, e))?;
    Ok(TrainOutcome {
        report,
        metrics,
        checkpoint,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub eval: Split,
    pub samples: usize,
    pub accuracy: f64,
}

/// Evaluates a checkpoint; never modifies it. Appends one record to `metrics` if given.
pub fn eval(checkpoint: &Path, dataset: &Dataset, split: Split, metrics: Option<&Path>) -> Result<EvalRecord> {
    let ck = Checkpoint::load(checkpoint)?;
    let steps = ck.train.steps_per_sample;
    let net = ck.into_network();
    if net.n_inputs() != dataset.n_channels || net.spec.n_classes != dataset.n_classes {
        return Err(Error::InvalidParam(format!(
            "checkpoint expects {} channels / {} classes, dataset has {} / {}",
            net.n_inputs(),
            net.spec.n_classes,
            dataset.n_channels,
            dataset.n_classes
        )));
    }
    let samples = match split {
        Split::Train => &dataset.train,
        Split::Test => &dataset.test,
    };
    let record = EvalRecord {
        eval: split,
        samples: samples.len(),
        accuracy: net.evaluate(samples, steps)?,
    };
    if let Some(path) = metrics {
        use std::io::Write;
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let line = serde_json::to_string(&record).expect("record serializes") + "\n";
        f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    Ok(record)
}

/// One arm of a sweep: the continuous baseline or an error-triggered target rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SweepArm {
    Continuous,
    TargetRate(f64),
}

impl SweepArm {
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("continuous") || t.eq_ignore_ascii_case("cont") {
            return Ok(SweepArm::Continuous);
        }
        let num = t.trim_end_matches("Hz").trim_end_matches("hz").trim();
        match num.parse::<f64>() {
            Ok(r) if r >= 0.0 && r.is_finite() => Ok(SweepArm::TargetRate(r)),
            _ => Err(Error::Config(format!("sweep rate {s:?} is neither `continuous` nor a rate in Hz"))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SweepArm::Continuous => "continuous".into(),
            SweepArm::TargetRate(r) => format!("{r}Hz"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub arm: String,
    pub target_rate: Option<f64>,
    pub accuracy: f64,
    pub error: f64,
    pub writes: u64,
    pub events: u64,
    pub mean_event_rate: f64,
}

/// The continuous baseline first, then one error-triggered run per distinct
/// rate, in the given order, all on the same seed and data.
pub fn sweep_arms(rates: &[SweepArm]) -> Vec<SweepArm> {
    let mut arms = vec![SweepArm::Continuous];
    for &r in rates {
        if !arms.contains(&r) {
            arms.push(r);
        }
    }
    arms
}

pub fn sweep(cfg: &RunConfig, dataset: &Dataset, out_dir: &Path, rates: &[SweepArm]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for arm in sweep_arms(rates) {
        let mut run_cfg = cfg.clone();
        match arm {
            SweepArm::Continuous => run_cfg.network.update_rule = UpdateRule::Continuous,
            SweepArm::TargetRate(r) => {
                run_cfg.network.update_rule = UpdateRule::ErrorTriggered;
                run_cfg.network.target_rate = r;
            }
        }
        let outcome = train(&run_cfg, dataset, &out_dir.join(arm.label()), None)?;
        let r = &outcome.report;
        let n_layers = r.layers.len().max(1) as f64;
        rows.push(SweepRow {
            arm: arm.label(),
            target_rate: match arm {
                SweepArm::Continuous => None,
                SweepArm::TargetRate(x) => Some(x),
            },
            accuracy: r.final_accuracy,
            error: 1.0 - r.final_accuracy,
            writes: r.total_writes,
            events: r.total_events,
            mean_event_rate: r.layers.iter().map(|l| l.mean_event_rate).sum::<f64>() / n_layers,
        });
    }
    let csv = format_sweep_csv(&rows);
    let csv_path = out_dir.join("sweep.csv");
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    let json_path = out_dir.join("sweep.json");
    let json = serde_json::to_string_pretty(&rows).expect("rows serialize");
    fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;
    Ok(rows)
}

pub fn format_sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("rate,accuracy,error,writes,events,mean_event_rate\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.4},{:.4},{},{},{:.3}",
            r.arm, r.accuracy, r.error, r.writes, r.events, r.mean_event_rate
        );
    }
    out
}

/// Fixed-width rendering of a sweep for terminals.
pub fn format_sweep_table(rows: &[SweepRow]) -> String {
    let mut out = format!("{:<12} {:>8} {:>12} {:>10}\n", "<E>", "error", "writes", "rate(Hz)");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<12} {:>7.2}% {:>12} {:>10.2}",
            r.arm,
            100.0 * r.error,
            r.writes,
            r.mean_event_rate
        );
    }
    out
}
