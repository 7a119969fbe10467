//! Command-line front end: dataset statistics, training, ratio sweeps and
//! ablations. Every command writes plain CSV tables with a header row and
//! `.`-separated decimals.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numeric failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use thiserror::Error;

use crate::graph::{degree_onehot_features, graph_stats, parse_tu_dataset, Dataset, GraphError, GraphStats};
use crate::train::{
    ratio_sweep, run_experiment, save_checkpoint, ModelConfig, PoolingKind, RunMetrics, SweepRow,
    TrainConfig, TrainError,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] GraphError),
    #[error("{0}")]
    Numeric(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => CliError::Config(m),
            TrainError::Graph(g) => CliError::Data(g),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cgipool", about = "Graph classification with coarsened-graph infomax pooling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print and write dataset statistics.
    Stats(CommonArgs),
    /// Repeated-split training and evaluation.
    Train(CommonArgs),
    /// Accuracy across pooling ratios for one or more pooling kinds.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated ratios in (0, 1].
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.4,0.6,0.8")]
        ratios: Vec<f64>,
        /// Comma-separated pooling kinds.
        #[arg(long, value_delimiter = ',', default_value = "cgipool,sagpool,topk")]
        kinds: Vec<String>,
    },
    /// CGIPool against its random-negative and no-infomax variants.
    Ablate(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML experiment spec; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// cgipool | cgipool-rs | cgipool-no-mi | topk | sagpool
    #[arg(long)]
    pub pool: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub ratio: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Cap for degree one-hot features; defaults to the largest observed degree.
    #[arg(long)]
    pub max_degree: Option<usize>,
}

/// Model section of the spec file. Absent fields fall back to defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    hidden_dim: Option<usize>,
    n_blocks: Option<usize>,
    pooling_ratio: Option<f64>,
    alpha: Option<f64>,
    pooling_kind: Option<String>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    dataset: Option<String>,
    data_dir: Option<PathBuf>,
    out: Option<PathBuf>,
    max_degree: Option<usize>,
    #[serde(default)]
    model: ModelSection,
    #[serde(default)]
    train: Option<TrainConfig>,
}

/// Fully resolved experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub dataset: String,
    pub data_dir: PathBuf,
    pub out: PathBuf,
    pub max_degree: Option<usize>,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

/// MI weight used when neither the spec nor a flag sets one: 1 for
/// PROTEINS, 0.001 otherwise.
pub fn default_alpha(dataset: &str) -> f64 {
    if dataset.eq_ignore_ascii_case("PROTEINS") {
        1.0
    } else {
        0.001
    }
}

impl ExperimentSpec {
    pub fn resolve(args: &CommonArgs) -> Result<Self, CliError> {
        let file: SpecFile = match &args.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|source| CliError::Io {
                    path: p.clone(),
                    source,
                })?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => SpecFile::default(),
        };
        let dataset = args
            .dataset
            .clone()
            .or(file.dataset)
            .ok_or_else(|| CliError::Config("no dataset given (--dataset)".into()))?;
        let data_dir = args
            .data_dir
            .clone()
            .or(file.data_dir)
            .unwrap_or_else(|| PathBuf::from("data"));
        let out = args
            .out
            .clone()
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from("runs").join(&dataset));

        let defaults = ModelConfig::default();
        let kind = match args.pool.as_deref().or(file.model.pooling_kind.as_deref()) {
            Some(s) => s.parse::<PoolingKind>()?,
            None => defaults.pooling_kind,
        };
        let model = ModelConfig {
            hidden_dim: args.hidden_dim.or(file.model.hidden_dim).unwrap_or(defaults.hidden_dim),
            n_blocks: file.model.n_blocks.unwrap_or(defaults.n_blocks),
            pooling_ratio: args
                .ratio
                .or(file.model.pooling_ratio)
                .unwrap_or(defaults.pooling_ratio),
            alpha: args
                .alpha
                .or(file.model.alpha)
                .unwrap_or_else(|| default_alpha(&dataset)),
            pooling_kind: kind,
            seed: args.seed.or(file.model.seed).unwrap_or(defaults.seed),
        };
        let mut train = file.train.unwrap_or_default();
        if let Some(n) = args.repeats {
            train.n_repeats = n;
        }
        if let Some(b) = args.batch_size {
            train.batch_size = b;
        }
        if let Some(p) = args.patience {
            train.patience_epochs = p;
        }
        if let Some(m) = args.max_epochs {
            train.max_epochs = m;
        }
        if let Some(s) = args.seed {
            train.split.seed = s;
        }
        model.validate()?;
        train.validate()?;
        Ok(Self {
            dataset,
            data_dir,
            out,
            max_degree: args.max_degree.or(file.max_degree),
            model,
            train,
        })
    }
}

/// Loads the dataset, falling back to degree one-hot features when the files
/// carry no node labels.
pub fn load_dataset(spec: &ExperimentSpec) -> Result<Dataset, CliError> {
    let dir = spec.data_dir.join(&spec.dataset);
    let dir = if dir.is_dir() { dir } else { spec.data_dir.clone() };
    let raw = parse_tu_dataset(&dir, &spec.dataset)?;
    Ok(if raw.feature_dim == 0 {
        let cap = spec.max_degree.unwrap_or_else(|| raw.max_degree()).max(1);
        degree_onehot_features(&raw, cap)
    } else {
        raw
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn stats_table(name: &str, s: &GraphStats) -> String {
    format!(
        "dataset,n_graphs,n_classes,avg_nodes,avg_edges\n{name},{},{},{:.2},{:.2}\n",
        s.n_graphs, s.n_classes, s.avg_nodes, s.avg_edges
    )
}

pub fn summary_table(dataset: &str, runs: &[&RunMetrics]) -> String {
    let mut s = String::from("kind,dataset,ratio,alpha,mean_acc,std_acc,n_repeats\n");
    for m in runs {
        let _ = writeln!(
            s,
            "{},{dataset},{},{},{:.6},{:.6},{}",
            m.kind,
            m.ratio,
            m.alpha,
            m.mean_test_acc,
            m.std_test_acc,
            m.repeats.len()
        );
    }
    s
}

pub fn repeat_table(m: &crate::train::RepeatMetrics) -> String {
    let mut s = String::from("epoch,train_loss,val_loss,val_acc\n");
    for e in &m.epochs {
        let _ = writeln!(s, "{},{:.8},{:.8},{:.6}", e.epoch, e.train_loss, e.val_loss, e.val_acc);
    }
    s
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut s = String::from("kind,ratio,mean_acc,std_acc,n\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{:.6},{:.6},{}", r.kind, r.ratio, r.mean_acc, r.std_acc, r.n);
    }
    s
}

pub fn cmd_stats(args: &CommonArgs) -> Result<GraphStats, CliError> {
    // Stats need no training configuration, so only dataset fields are read.
    let spec = ExperimentSpec::resolve(args)?;
    let ds = load_dataset(&spec)?;
    let stats = graph_stats(&ds);
    let table = stats_table(&ds.name, &stats);
    print!("{table}");
    write_file(&spec.out.join("stats.csv"), &table)?;
    Ok(stats)
}

fn write_run(out: &Path, m: &RunMetrics) -> Result<(), CliError> {
    for r in &m.repeats {
        write_file(&out.join(format!("repeat_{}.csv", r.repeat)), &repeat_table(r))?;
        if let Some(store) = &r.checkpoint {
            fs::create_dir_all(out).map_err(|source| CliError::Io {
                path: out.to_path_buf(),
                source,
            })?;
            save_checkpoint(&out.join(format!("checkpoint_{}.json", r.repeat)), store)?;
        }
    }
    Ok(())
}

pub fn cmd_train(args: &CommonArgs) -> Result<RunMetrics, CliError> {
    let spec = ExperimentSpec::resolve(args)?;
    let ds = load_dataset(&spec)?;
    let m = run_experiment(&ds, &spec.model, &spec.train)?;
    write_run(&spec.out, &m)?;
    let table = summary_table(&ds.name, &[&m]);
    print!("{table}");
    write_file(&spec.out.join("summary.csv"), &table)?;
    Ok(m)
}

pub fn cmd_sweep(
    args: &CommonArgs,
    ratios: &[f64],
    kinds: &[String],
) -> Result<Vec<SweepRow>, CliError> {
    if let Some(r) = ratios.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
        return Err(CliError::Config(format!("ratio {r} outside (0, 1]")));
    }
    let kinds = kinds
        .iter()
        .map(|k| k.parse::<PoolingKind>())
        .collect::<Result<Vec<_>, _>>()?;
    let spec = ExperimentSpec::resolve(args)?;
    let ds = load_dataset(&spec)?;
    let rows = ratio_sweep(&ds, ratios, &kinds, &spec.model, &spec.train)?;
    let table = sweep_table(&rows);
    print!("{table}");
    write_file(&spec.out.join("sweep.csv"), &table)?;
    Ok(rows)
}

pub fn cmd_ablate(args: &CommonArgs) -> Result<Vec<RunMetrics>, CliError> {
    let spec = ExperimentSpec::resolve(args)?;
    let ds = load_dataset(&spec)?;
    let mut runs = Vec::new();
    for kind in [PoolingKind::Cgipool, PoolingKind::CgipoolRs, PoolingKind::CgipoolNoMi] {
        let cfg = ModelConfig {
            pooling_kind: kind,
            ..spec.model.clone()
        };
        runs.push(run_experiment(&ds, &cfg, &spec.train)?);
    }
    let table = summary_table(&ds.name, &runs.iter().collect::<Vec<_>>());
    print!("{table}");
    write_file(&spec.out.join("ablation.csv"), &table)?;
    Ok(runs)
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Stats(a) => cmd_stats(a).map(drop),
        Command::Train(a) => cmd_train(a).map(drop),
        Command::Sweep {
            common,
            ratios,
            kinds,
        } => cmd_sweep(common, ratios, kinds).map(drop),
        Command::Ablate(a) => cmd_ablate(a).map(drop),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
