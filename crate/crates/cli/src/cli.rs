use std::ffi::OsString;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use log::info;
use marstag::archive::{
    query, read_index, read_query_log, serve_queries, usage_report, write_query_log, QueryFilter, QueryLog,
};
use marstag::datasets::Instrument;
use marstag::landmarking::{ga_optimize, write_params, GaConfig, LabeledImage, ParamBounds};
use marstag::models::{write_model, HybridClassifier, Model};
use marstag::Grid;

use crate::artifacts::{self as art, ensure_dir};
use crate::config::{Overrides, PipelineConfig};
use crate::error::{CliError, Result};
use crate::pipeline::{self as pl};
use crate::report::{cmd_report, ReportInputs};

/// Environment variable holding the log filter, e.g. `info` or `marstag_cli=debug`.
pub const LOG_ENV: &str = "MARSTAG_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "marstag",
    version,
    about = "Tag planetary image archives with calibrated classifiers"
)]
pub struct Cli {
    /// Worker threads; defaults to the number of cores. Never changes outputs.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Pipeline configuration file (TOML).
    #[arg(long, short)]
    pub config: PathBuf,
    /// Output directory; overrides `paths.output`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Sets the split, augmentation and training seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Calibration method: temperature, bcts, vector or matrix.
    #[arg(long)]
    pub method: Option<String>,
    /// Model kind: softmax, multilabel or chain.
    #[arg(long)]
    pub kind: Option<String>,
    /// Reliability bins.
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<PipelineConfig> {
        PipelineConfig::load(
            &self.config,
            &Overrides {
                output: self.output.clone(),
                seed: self.seed,
                tau: self.tau,
                method: self.method.clone(),
                kind: self.kind.clone(),
                bins: self.bins,
                epochs: self.epochs,
            },
        )
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Group-disjoint TRAIN/VAL/TEST assignment.
    Split(ConfigArgs),
    /// List (or write) the augmented training set.
    Augment {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Write every variant as a PNG under `augmented/`.
        #[arg(long)]
        materialize: bool,
    },
    /// Scan configured strips for landmarks, or tune salience parameters.
    Landmarks {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// CSV of `image,mask` pairs to tune against; writes `salience_params.txt`.
        #[arg(long)]
        tune: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        population: usize,
        #[arg(long, default_value_t = 40)]
        generations: usize,
        #[arg(long, default_value_t = 0)]
        ga_seed: u64,
    },
    /// Extract features and fit the configured head, or assemble a hybrid.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Coarse softmax model file; with `--hybrid-v1` and `--trigger` writes `model_hybrid.txt`.
        #[arg(long, requires_all = ["hybrid_v1", "trigger"])]
        hybrid_v2: Option<PathBuf>,
        #[arg(long, requires = "hybrid_v2")]
        hybrid_v1: Option<PathBuf>,
        /// v2 class whose inputs are handed to v1.
        #[arg(long, requires = "hybrid_v2")]
        trigger: Option<String>,
    },
    /// Fit the calibrator on VAL logits.
    Calibrate(ConfigArgs),
    /// Metrics, reliability bins and confusion on TEST.
    Evaluate(ConfigArgs),
    /// Tag archive items and landmark crops.
    Tag(ConfigArgs),
    /// Build the class index from tags.
    Index(ConfigArgs),
    /// Query the index; without `--class` reads protocol lines from stdin.
    Query {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        class: Option<String>,
        #[arg(long, default_value_t = 0.0)]
        min_conf: f64,
        #[arg(long)]
        instrument: Option<String>,
        /// Latitude range, inclusive.
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
        lat: Option<Vec<f64>>,
        /// Timestamp recorded in the query log (RFC 3339); defaults to now.
        #[arg(long)]
        at: Option<String>,
        /// Print monthly query counts per class instead of querying.
        #[arg(long)]
        usage: bool,
    },
    /// Render plots and tables from evaluation artifacts.
    Report {
        /// Directory holding the standard artifact names.
        #[arg(long)]
        dir: Option<PathBuf>,
        #[arg(long)]
        reliability: Option<PathBuf>,
        #[arg(long)]
        per_class: Option<PathBuf>,
        #[arg(long)]
        confusion: Option<PathBuf>,
        #[arg(long)]
        shift: Option<PathBuf>,
        /// Output directory; defaults to `<dir>/report`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every stage from split to index, then the report.
    Run(ConfigArgs),
    /// Write the synthetic demo dataset.
    Fixture {
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_time(s: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| CliError::config(format!("timestamp {s:?}: {e}")))
}

fn prepared(cfg: &ConfigArgs) -> Result<PipelineConfig> {
    let cfg = cfg.load()?;
    cfg.require()?;
    ensure_dir(&cfg.output)?;
    Ok(cfg)
}

fn print_metrics(metrics: &art::Metrics) {
    for (k, v) in metrics {
        println!("{k}\t{v}");
    }
}

fn tune(cfg: &PipelineConfig, pairs: &Path, ga: GaConfig) -> Result<()> {
    let base = pairs.parent().unwrap_or(Path::new("."));
    let rows = art::read_rows(pairs, &["image", "mask"])?;
    let labeled = rows
        .iter()
        .map(|r| {
            let image = Grid::load(base.join(&r[0]))?;
            let mask = Grid::load(base.join(&r[1]))?;
            if (mask.width(), mask.height()) != (image.width(), image.height()) {
                return Err(CliError::data(format!("mask {} does not match its image", r[1])));
            }
            Ok(LabeledImage::new(
                image,
                mask.data().iter().map(|&v| v > 127.0).collect(),
            )?)
        })
        .collect::<Result<Vec<_>>>()?;
    let bounds = ParamBounds {
        base: cfg.salience.clone(),
        ..ParamBounds::default()
    };
    ga.validate().map_err(|e| CliError::config(e.to_string()))?;
    let result = ga_optimize(&labeled, &bounds, &ga)?;
    let path = cfg.out("salience_params.txt");
    write_params(&path, &result.params)?;
    println!("fitness\t{:.6}", result.fitness);
    println!("params\t{}", path.display());
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Split(c) => {
            let cfg = prepared(&c)?;
            let records = pl::load_records(&cfg)?;
            pl::stage_split(&cfg, &records)?;
        }
        Command::Augment { cfg: c, materialize } => {
            let cfg = prepared(&c)?;
            let records = pl::load_records(&cfg)?;
            let split = pl::read_split(&cfg)?;
            let items = pl::stage_augment(&cfg, &records, &split, materialize)?;
            println!("images\t{}", items.len());
        }
        Command::Landmarks {
            cfg: c,
            tune: pairs,
            population,
            generations,
            ga_seed,
        } => {
            let cfg = prepared(&c)?;
            match pairs {
                Some(p) => tune(
                    &cfg,
                    &p,
                    GaConfig {
                        population,
                        generations,
                        seed: ga_seed,
                        ..GaConfig::default()
                    },
                )?,
                None => {
                    if cfg.strips.is_empty() {
                        return Err(CliError::config("no [[landmarks.strips]] configured"));
                    }
                    let found = pl::stage_landmarks(&cfg)?;
                    println!("landmarks\t{}", found.len());
                }
            }
        }
        Command::Train {
            cfg: c,
            hybrid_v2,
            hybrid_v1,
            trigger,
        } => {
            let cfg = prepared(&c)?;
            if let (Some(v2), Some(v1), Some(trigger)) = (hybrid_v2, hybrid_v1, trigger) {
                let head = |p: &Path| match marstag::models::read_model(p)? {
                    Model::Softmax(h) => Ok(h),
                    other => Err(CliError::config(format!(
                        "{}: expected a softmax model, got {}",
                        p.display(),
                        other.kind()
                    ))),
                };
                let trigger = cfg
                    .catalog
                    .id_of(&trigger)
                    .ok_or_else(|| CliError::config(format!("trigger class {trigger:?} is not in the catalog")))?;
                let hybrid = HybridClassifier::new(head(&v2)?, head(&v1)?, trigger)?;
                println!("reachable_classes\t{}", hybrid.reachable_classes().len());
                write_model(cfg.out("model_hybrid.txt"), &Model::Hybrid(hybrid))?;
                return Ok(());
            }
            let records = pl::load_records(&cfg)?;
            let split = pl::read_split(&cfg)?;
            let rows = pl::stage_features(&cfg, &records, &split)?;
            pl::stage_train(&cfg, &records, &rows)?;
        }
        Command::Calibrate(c) => {
            let cfg = prepared(&c)?;
            let records = pl::load_records(&cfg)?;
            let model = pl::read_trained_model(&cfg)?;
            let fit = pl::stage_calibrate(&cfg, &model, &records, &pl::read_features(&cfg)?)?;
            println!("nll\t{:.6}\nidentity_nll\t{:.6}", fit.nll, fit.identity_nll);
            if !fit.converged {
                return Err(CliError {
                    kind: crate::error::ErrorKind::NonConvergence,
                    message: format!("{} fit stopped after {} iterations", cfg.method, fit.iterations),
                });
            }
        }
        Command::Evaluate(c) => {
            let cfg = prepared(&c)?;
            let records = pl::load_records(&cfg)?;
            let model = pl::read_trained_model(&cfg)?;
            let cal = pl::read_trained_calibrator(&cfg)?;
            print_metrics(&pl::stage_evaluate(
                &cfg,
                &model,
                &cal,
                &records,
                &pl::read_features(&cfg)?,
            )?);
        }
        Command::Tag(c) => {
            let cfg = prepared(&c)?;
            let records = pl::load_records(&cfg)?;
            let model = pl::read_trained_model(&cfg)?;
            let cal = pl::read_trained_calibrator(&cfg)?;
            let tags = pl::stage_tag(&cfg, &model, &cal, &records)?;
            println!("tags\t{}", tags.len());
        }
        Command::Index(c) => {
            let cfg = prepared(&c)?;
            let index = pl::stage_index(&cfg)?;
            println!("postings\t{}", index.total_postings());
        }
        Command::Query {
            cfg: c,
            class,
            min_conf,
            instrument,
            lat,
            at,
            usage,
        } => {
            let cfg = c.load()?;
            let log_path = cfg.out(art::QUERY_LOG);
            if usage {
                for row in usage_report(&read_query_log(&log_path, &cfg.catalog)?) {
                    println!("{}\t{}\t{}", row.month, cfg.catalog.name(row.class), row.count);
                }
                return Ok(());
            }
            let index_path = cfg.out(art::INDEX);
            if !index_path.is_file() {
                return Err(CliError::missing(format!(
                    "{} not found; run `marstag index` first",
                    index_path.display()
                )));
            }
            let index = read_index(&index_path, &cfg.catalog)?;
            let fixed = at.as_deref().map(parse_time).transpose()?;
            let clock = || fixed.unwrap_or_else(Utc::now);
            let mut log = QueryLog::default();
            match class {
                Some(name) => {
                    let class = cfg
                        .catalog
                        .id_of(&name)
                        .ok_or_else(|| CliError::config(format!("unknown class {name:?}")))?;
                    if !(0.0..=1.0).contains(&min_conf) {
                        return Err(CliError::config(format!("min_conf {min_conf} outside [0, 1]")));
                    }
                    let filter = QueryFilter {
                        min_conf,
                        instrument: instrument
                            .map(|s| s.parse::<Instrument>())
                            .transpose()
                            .map_err(CliError::config)?,
                        lat_range: lat.map(|v| (v[0], v[1])),
                    };
                    if let Some((lo, hi)) = filter.lat_range {
                        if lo > hi {
                            return Err(CliError::config(format!("empty latitude range [{lo}, {hi}]")));
                        }
                    }
                    let ids = query(&index, &cfg.catalog, class, &filter, &mut log, clock())?;
                    let mut out = io::stdout().lock();
                    for id in ids {
                        writeln!(out, "{id}")?;
                    }
                }
                None => {
                    let n = serve_queries(
                        &index,
                        &cfg.catalog,
                        io::stdin().lock(),
                        io::stdout().lock(),
                        &mut log,
                        clock,
                    )?;
                    info!("query: answered {n} requests");
                }
            }
            write_query_log(&log_path, &log.entries, &cfg.catalog)?;
        }
        Command::Report {
            dir,
            reliability,
            per_class,
            confusion,
            shift,
            out,
        } => {
            let mut inputs = dir.as_deref().map(ReportInputs::from_dir).unwrap_or_default();
            if let Some(d) = &dir {
                // Optional inputs absent from the directory are skipped.
                if !d.join(art::SHIFT).exists() {
                    inputs.shift = None;
                }
            }
            inputs.reliability = reliability.or(inputs.reliability);
            inputs.per_class = per_class.or(inputs.per_class);
            inputs.confusion = confusion.or(inputs.confusion);
            inputs.shift = shift.or(inputs.shift);
            let out = out
                .or_else(|| dir.map(|d| d.join(art::REPORT_DIR)))
                .ok_or_else(|| CliError::config("report needs --out or --dir"))?;
            for p in cmd_report(&inputs, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Run(c) => {
            let cfg = c.load()?;
            let summary = pl::cmd_run(&cfg)?;
            print_metrics(&summary.metrics);
            println!("tags\t{}", summary.tags);
        }
        Command::Fixture { out } => crate::fixture::write_fixture(&out)?,
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Errors go to stderr as one line.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!(
                "{}",
                CliError::config(format!("cannot start {:?} workers: {e}", cli.workers))
            );
            return 2;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.kind.exit_code()
        }
    }
}
