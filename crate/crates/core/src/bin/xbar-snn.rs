//! Command-line entry point: `gen-data`, `train`, `eval`, `sweep`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use xbar_snn::runner::{self, Split, SweepArm};
use xbar_snn::{Dataset, Error, RunConfig, UpdateRule};

#[derive(Parser)]
#[command(name = "xbar-snn", version, about = "Error-triggered learning on simulated crossbar arrays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic event dataset into `data.dir`.
    GenData {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train a network and write metrics, checkpoint and report.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Continue from a checkpoint; metrics are appended.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory or manifest file.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Append the result to this metrics file.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Paired runs: continuous baseline plus one error-triggered run per rate.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Comma-separated target rates in Hz (`continuous` allowed).
        #[arg(long, value_delimiter = ',', default_value = "continuous,50,10")]
        rates: Vec<String>,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// TOML configuration file; defaults apply to anything it omits.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set network.eta=0.02`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset directory (`data.dir`).
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Output directory (`output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_enum)]
    update_rule: Option<RuleArg>,
    /// Target error-event rate in Hz; implies the error-triggered rule.
    #[arg(long)]
    target_rate: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Continuous,
    ErrorTriggered,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load_config(common: &CommonArgs, train: Option<&TrainArgs>) -> Result<RunConfig, Failure> {
    let mut overrides = Vec::new();
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    let quoted = |p: &PathBuf| toml::Value::String(p.display().to_string()).to_string();
    if let Some(seed) = common.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(dir) = &common.data_dir {
        overrides.push(("data.dir".into(), quoted(dir)));
    }
    if let Some(t) = train {
        if let Some(out) = &t.out {
            overrides.push(("output.dir".into(), quoted(out)));
        }
        if let Some(n) = t.epochs {
            overrides.push(("train.epochs".into(), n.to_string()));
        }
        if let Some(n) = t.batch_size {
            overrides.push(("train.batch_size".into(), n.to_string()));
        }
        if let Some(rule) = t.update_rule {
            let name = match rule {
                RuleArg::Continuous => "\"continuous\"",
                RuleArg::ErrorTriggered => "\"error-triggered\"",
            };
            overrides.push(("network.update_rule".into(), name.into()));
        }
        if let Some(rate) = t.target_rate {
            overrides.push(("network.update_rule".into(), "\"error-triggered\"".into()));
            overrides.push(("network.target_rate".into(), format!("{rate:?}")));
        }
    }
    RunConfig::load(common.config.as_deref(), &overrides).map_err(|e| Failure::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenData { common } => {
            let cfg = load_config(&common, None)?;
            let s = runner::gen_data(&cfg)?;
            println!(
                "generated {} classes: {} train / {} test samples, {} events -> {}",
                s.n_classes,
                s.train_samples,
                s.test_samples,
                s.total_events,
                s.manifest.display()
            );
        }
        Command::Train { common, train, resume } => {
            let cfg = load_config(&common, Some(&train))?;
            let dataset = Dataset::load(&cfg.data.dir)?;
            let out = runner::train(&cfg, &dataset, &cfg.output.dir, resume.as_deref())?;
            let r = &out.report;
            for e in &r.epochs {
                println!(
                    "epoch {}: accuracy {:.4}, loss {:.4}, events {}, writes {}",
                    e.epoch, e.accuracy, e.mean_loss, e.events, e.writes
                );
            }
            let rule = match r.update_rule {
                UpdateRule::Continuous => "continuous".to_string(),
                UpdateRule::ErrorTriggered => format!("error-triggered@{}Hz", r.target_rate),
            };
            let rates: Vec<String> = r
                .layers
                .iter()
                .map(|l| format!("layer{}={:.2}Hz", l.layer, l.mean_event_rate))
                .collect();
            println!(
                "final [{rule}] accuracy={:.4} total_writes={} mean_event_rate[{}]",
                r.final_accuracy,
                r.total_writes,
                rates.join(",")
            );
        }
        Command::Eval {
            checkpoint,
            data,
            split,
            metrics,
        } => {
            let dataset = Dataset::load(&data)?;
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            let r = runner::eval(&checkpoint, &dataset, split, metrics.as_deref())?;
            println!("accuracy={:.4} samples={}", r.accuracy, r.samples);
        }
        Command::Sweep { common, train, rates } => {
            let cfg = load_config(&common, Some(&train))?;
            let arms = rates
                .iter()
                .filter(|s| !s.trim().is_empty())
                .map(|s| SweepArm::parse(s))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Failure::Config(e.to_string()))?;
            let dataset = Dataset::load(&cfg.data.dir)?;
            let rows = runner::sweep(&cfg, &dataset, &cfg.output.dir, &arms)?;
            print!("{}", runner::format_sweep_table(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
