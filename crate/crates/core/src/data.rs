//! Event streams, the text event-file format, dataset manifests and the
//! synthetic spatiotemporal dataset generator.
//!
//! Event file: one or more records. Each record is a block of `key=value`
//! header lines (`n_channels`, `n_steps`, `label`), a column line and then one
//! event per line:
//!
//! ```text
//! # comment
//! n_channels=4
//! n_steps=10
//! label=1
//! step,channel
//! 0,2
//! 3,1
//! ```
//!
//! A column line of `step,channel,polarity` (polarity `0`/`1`) maps each sensor
//! channel `c` onto two stream channels `2c + polarity`, doubling `n_channels`.
//! Events are sorted and duplicates on one `(step, channel)` collapse to one.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub step: u32,
    pub channel: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventStream {
    events: Vec<SpikeEvent>,
    n_channels: usize,
    n_steps: usize,
}

impl EventStream {
    /// Sorts and deduplicates `events`; rejects any outside the stream bounds.
    pub fn new(mut events: Vec<SpikeEvent>, n_channels: usize, n_steps: usize) -> Result<Self> {
        if let Some(bad) = events
            .iter()
            .find(|e| e.channel as usize >= n_channels || e.step as usize >= n_steps)
        {
            return Err(Error::InvalidParam(format!(
                "event (step {}, channel {}) outside {n_steps} steps x {n_channels} channels",
                bad.step, bad.channel
            )));
        }
        events.sort_unstable();
        events.dedup();
        Ok(EventStream {
            events,
            n_channels,
            n_steps,
        })
    }

    pub fn empty(n_channels: usize, n_steps: usize) -> Self {
        EventStream {
            events: Vec::new(),
            n_channels,
            n_steps,
        }
    }

    pub fn events(&self) -> &[SpikeEvent] {
        &self.events
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Binary input frames for `n_steps` steps; events past the end are dropped.
    pub fn frames(&self, n_steps: usize) -> Vec<Vec<bool>> {
        let mut frames = vec![vec![false; self.n_channels]; n_steps];
        for e in &self.events {
            if let Some(f) = frames.get_mut(e.step as usize) {
                f[e.channel as usize] = true;
            }
        }
        frames
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub stream: EventStream,
    pub label: usize,
}

/// Bernoulli spike trains: channel `j` fires at each step with probability `rates[j]`.
pub fn poisson_encode(rates: &[f64], n_steps: usize, seed: u64) -> Result<EventStream> {
    if let Some(r) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::InvalidParam(format!("rate {r} outside [0, 1]")));
    }
    let mut r = rng::from_seed(seed);
    let mut events = Vec::new();
    for step in 0..n_steps {
        for (channel, &p) in rates.iter().enumerate() {
            if r.random_bool(p) {
                events.push(SpikeEvent {
                    step: step as u32,
                    channel: channel as u32,
                });
            }
        }
    }
    EventStream::new(events, rates.len(), n_steps)
}

pub fn format_event_records(samples: &[LabeledSample]) -> String {
    let mut out = String::new();
    for s in samples {
        let _ = writeln!(out, "n_channels={}", s.stream.n_channels);
        let _ = writeln!(out, "n_steps={}", s.stream.n_steps);
        let _ = writeln!(out, "label={}", s.label);
        out.push_str("step,channel\n");
        for e in &s.stream.events {
            let _ = writeln!(out, "{},{}", e.step, e.channel);
        }
    }
    out
}

pub fn write_event_file(path: &Path, samples: &[LabeledSample]) -> Result<()> {
    fs::write(path, format_event_records(samples)).map_err(|e| Error::io(path, e))
}

pub fn parse_event_file(path: &Path) -> Result<Vec<LabeledSample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_event_records(&text, path)
}

#[derive(Default)]
struct Header {
    n_channels: Option<usize>,
    n_steps: Option<usize>,
    label: Option<usize>,
}

struct Record {
    header: Header,
    polarity: bool,
    events: Vec<SpikeEvent>,
    start_line: usize,
}

/// Parses event records from text; `origin` only labels diagnostics.
pub fn parse_event_records(text: &str, origin: &Path) -> Result<Vec<LabeledSample>> {
    let err = |line: usize, reason: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        reason,
    };
    let mut records: Vec<Record> = Vec::new();
    let mut header = Header::default();
    let mut header_line = 0;
    // Some(polarity) while inside an event section.
    let mut in_events: Option<bool> = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some((key, value)) = line.split_once('=') {
            if in_events.take().is_some() {
                header = Header::default();
            }
            if header.n_channels.is_none() && header.n_steps.is_none() && header.label.is_none() {
                header_line = lineno;
            }
            let v: usize = value
                .trim()
                .parse()
                .map_err(|_| err(lineno, format!("header value {:?} is not a non-negative integer", value.trim())))?;
            let slot = match key.trim() {
                "n_channels" => &mut header.n_channels,
                "n_steps" => &mut header.n_steps,
                "label" => &mut header.label,
                other => return Err(err(lineno, format!("unknown header key {other:?}"))),
            };
            if slot.replace(v).is_some() {
                return Err(err(lineno, format!("duplicate header key {:?}", key.trim())));
            }
            continue;
        }
        if in_events.is_none() {
            let polarity = match line.replace(' ', "").as_str() {
                "step,channel" => false,
                "step,channel,polarity" => true,
                _ => return Err(err(lineno, format!("expected column line `step,channel`, got {line:?}"))),
            };
            records.push(Record {
                header: std::mem::take(&mut header),
                polarity,
                events: Vec::new(),
                start_line: header_line.max(1),
            });
            header_line = 0;
            in_events = Some(polarity);
            let rec = records.last().expect("just pushed");
            check_header(&rec.header).map_err(|r| err(rec.start_line, r))?;
            continue;
        }
        let rec = records.last_mut().expect("inside an event section");
        let n_channels = rec.header.n_channels.expect("checked");
        let n_steps = rec.header.n_steps.expect("checked");
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let want = if rec.polarity { 3 } else { 2 };
        if fields.len() != want {
            return Err(err(lineno, format!("expected {want} comma-separated fields, got {}", fields.len())));
        }
        let num = |s: &str, what: &str| -> Result<u32> {
            s.parse::<u32>()
                .map_err(|_| err(lineno, format!("{what} {s:?} is not a non-negative integer")))
        };
        let step = num(fields[0], "step")?;
        let mut channel = num(fields[1], "channel")?;
        if step as usize >= n_steps {
            return Err(err(lineno, format!("step {step} >= n_steps {n_steps}")));
        }
        if channel as usize >= n_channels {
            return Err(err(lineno, format!("channel {channel} >= n_channels {n_channels}")));
        }
        if rec.polarity {
            let pol = match fields[2] {
                "0" => 0,
                "1" => 1,
                other => return Err(err(lineno, format!("polarity {other:?} must be 0 or 1"))),
            };
            channel = 2 * channel + pol;
        }
        rec.events.push(SpikeEvent { step, channel });
    }
    if header.n_channels.is_some() || header.n_steps.is_some() || header.label.is_some() {
        return Err(err(header_line, "header without an event section".into()));
    }

    records
        .into_iter()
        .map(|rec| {
            let n_channels = rec.header.n_channels.expect("checked") * if rec.polarity { 2 } else { 1 };
            let stream = EventStream::new(rec.events, n_channels, rec.header.n_steps.expect("checked"))
                .map_err(|e| err(rec.start_line, e.to_string()))?;
            Ok(LabeledSample {
                stream,
                label: rec.header.label.expect("checked"),
            })
        })
        .collect()
}

fn check_header(h: &Header) -> std::result::Result<(), String> {
    for (name, v) in [("n_channels", h.n_channels), ("n_steps", h.n_steps), ("label", h.label)] {
        if v.is_none() {
            return Err(format!("record header is missing `{name}`"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: PathBuf,
    pub label: usize,
}

/// Lists sample files (relative to the manifest's directory) and their labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub n_classes: usize,
    pub n_channels: usize,
    pub n_steps: usize,
    pub train: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
}

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub n_classes: usize,
    pub n_channels: usize,
    pub n_steps: usize,
    pub train: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        for s in self.train.iter().chain(&self.test) {
            if s.label >= self.n_classes {
                return Err(Error::InvalidParam(format!(
                    "label {} outside {} classes",
                    s.label, self.n_classes
                )));
            }
            if s.stream.n_channels() != self.n_channels {
                return Err(Error::InvalidParam(format!(
                    "sample has {} channels, dataset has {}",
                    s.stream.n_channels(),
                    self.n_channels
                )));
            }
        }
        Ok(())
    }

    /// Writes `dir/manifest.json` plus one event file per sample under
    /// `dir/train` and `dir/test`. Returns the manifest path.
    pub fn write_to_dir(&self, dir: &Path) -> Result<PathBuf> {
        let mut manifest = DatasetManifest {
            version: MANIFEST_VERSION,
            n_classes: self.n_classes,
            n_channels: self.n_channels,
            n_steps: self.n_steps,
            train: Vec::new(),
            test: Vec::new(),
        };
        for (split, samples, entries) in [
            ("train", &self.train, &mut manifest.train),
            ("test", &self.test, &mut manifest.test),
        ] {
            let sub = dir.join(split);
            fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
            for (i, s) in samples.iter().enumerate() {
                let rel = PathBuf::from(split).join(format!("{i:06}.evt"));
                write_event_file(&dir.join(&rel), std::slice::from_ref(s))?;
                entries.push(ManifestEntry { file: rel, label: s.label });
            }
        }
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Loads a dataset from a manifest file or a directory containing one.
    pub fn load(path: &Path) -> Result<Self> {
        let manifest_path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: manifest_path.clone(),
            line: e.line(),
            reason: e.to_string(),
        })?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::InvalidParam(format!(
                "{}: manifest version {} is not supported (expected {MANIFEST_VERSION})",
                manifest_path.display(),
                manifest.version
            )));
        }
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let load_split = |entries: &[ManifestEntry]| -> Result<Vec<LabeledSample>> {
            let mut out = Vec::with_capacity(entries.len());
            for entry in entries {
                let file = base.join(&entry.file);
                for s in parse_event_file(&file)? {
                    if s.label != entry.label {
                        return Err(Error::Parse {
                            path: file.clone(),
                            line: 1,
                            reason: format!("label {} disagrees with manifest label {}", s.label, entry.label),
                        });
                    }
                    out.push(s);
                }
            }
            Ok(out)
        };
        let ds = Dataset {
            n_classes: manifest.n_classes,
            n_channels: manifest.n_channels,
            n_steps: manifest.n_steps,
            train: load_split(&manifest.train)?,
            test: load_split(&manifest.test)?,
        };
        ds.validate()?;
        Ok(ds)
    }
}

/// Parameters of the synthetic spatiotemporal classification task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub n_channels: usize,
    pub n_steps: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Anchor events in each class template.
    pub anchors_per_class: usize,
    /// Each anchor is shifted uniformly within `+- jitter` steps per sample.
    pub jitter: u32,
    /// Per-(step, channel) background spike probability.
    pub noise_rate: f64,
    /// Draw each class's anchors from its own block of channels.
    pub disjoint_channels: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_classes: 10,
            n_channels: 100,
            n_steps: 100,
            train_per_class: 100,
            test_per_class: 20,
            anchors_per_class: 100,
            jitter: 4,
            noise_rate: 0.01,
            disjoint_channels: false,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::InvalidParam(format!(
                "synthetic dataset needs at least 2 classes, got {}",
                self.n_classes
            )));
        }
        if self.n_channels == 0 || self.n_steps == 0 {
            return Err(Error::InvalidParam("synthetic dataset needs channels and steps".into()));
        }
        if self.disjoint_channels && self.n_channels < self.n_classes {
            return Err(Error::InvalidParam("disjoint channels need n_channels >= n_classes".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(Error::InvalidParam(format!("noise_rate {} outside [0, 1]", self.noise_rate)));
        }
        Ok(())
    }

    fn channel_block(&self, class: usize) -> (usize, usize) {
        if self.disjoint_channels {
            let width = self.n_channels / self.n_classes;
            (class * width, (class + 1) * width)
        } else {
            (0, self.n_channels)
        }
    }

    /// The fixed anchor pattern of every class.
    pub fn templates(&self) -> Result<Vec<EventStream>> {
        self.validate()?;
        let mut r = rng::rng(self.seed, Stream::Data, 0);
        (0..self.n_classes)
            .map(|c| {
                let (lo, hi) = self.channel_block(c);
                let events = (0..self.anchors_per_class)
                    .map(|_| SpikeEvent {
                        step: r.random_range(0..self.n_steps as u32),
                        channel: r.random_range(lo as u32..hi as u32),
                    })
                    .collect();
                EventStream::new(events, self.n_channels, self.n_steps)
            })
            .collect()
    }

    fn sample<R: Rng>(&self, template: &EventStream, r: &mut R) -> Result<EventStream> {
        let last = self.n_steps as i64 - 1;
        let mut events: Vec<SpikeEvent> = template
            .events()
            .iter()
            .map(|a| {
                let shift = if self.jitter > 0 {
                    r.random_range(-(self.jitter as i64)..=self.jitter as i64)
                } else {
                    0
                };
                SpikeEvent {
                    step: (a.step as i64 + shift).clamp(0, last) as u32,
                    channel: a.channel,
                }
            })
            .collect();
        if self.noise_rate > 0.0 {
            for step in 0..self.n_steps as u32 {
                for channel in 0..self.n_channels as u32 {
                    if r.random_bool(self.noise_rate) {
                        events.push(SpikeEvent { step, channel });
                    }
                }
            }
        }
        EventStream::new(events, self.n_channels, self.n_steps)
    }

    /// Generates the dataset. Samples are interleaved by class.
    pub fn generate(&self) -> Result<Dataset> {
        let templates = self.templates()?;
        let split = |count: usize, stream_base: u64| -> Result<Vec<LabeledSample>> {
            let mut out = Vec::with_capacity(count * self.n_classes);
            for k in 0..count {
                for (label, t) in templates.iter().enumerate() {
                    let idx = (k * self.n_classes + label) as u64;
                    let mut r = rng::rng(self.seed, Stream::Data, stream_base + idx);
                    out.push(LabeledSample {
                        stream: self.sample(t, &mut r)?,
                        label,
                    });
                }
            }
            Ok(out)
        };
        let train = split(self.train_per_class, 1)?;
        let test = split(self.test_per_class, 1 << 40)?;
        Ok(Dataset {
            n_classes: self.n_classes,
            n_channels: self.n_channels,
            n_steps: self.n_steps,
            train,
            test,
        })
    }
}

pub fn make_synthetic_dataset(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.generate()
}
