//! Command-line front end. Every run writes into its own output directory:
//! the artifacts, `config.json` (resolved configuration including the seed)
//! and `manifest.json` (artifact hashes).

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::baselines::{finetune_direct, train_direct, FinetuneMode, FinetuneSpec};
use crate::config::{validate_config, Config, ParseMode};
use crate::error::{Error, Result};
use crate::eval::{emit_report, read_table_csv, run_cross_capacity, run_finetune_study, trace_capacity, EvalModel, MetricTable};
use crate::ingest::{self, CapacityInput};
use crate::kernel::{ModelCheckpoint, ModelKind};
use crate::regimegen::{build_calibration_set, build_random_corpus, build_single_capacity_corpus, build_test_grid, NamedTrace};
use crate::trace::Trace;
use crate::training::{infer_demand, train_tgdin, CorpusSource, TrainOptions};

#[derive(Parser, Debug)]
#[command(name = "tgdin", version, about = "Per-user demand inference for shared bottlenecks")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default `<paths.out_dir>/<command>`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    quiet: bool,
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Ignore unknown config keys and CSV columns instead of failing.
    #[arg(long, global = true)]
    lax: bool,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate synthetic traces.
    Generate {
        #[command(subcommand)]
        what: GenerateWhat,
    },
    /// Train the demand model on randomized (or given) traces.
    Train {
        /// Directory of trace CSVs used instead of randomized rounds.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Directory of trace CSVs for checkpoint selection.
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Train a direct throughput baseline at one capacity.
    TrainBaseline {
        #[arg(value_enum)]
        model: BaselineArg,
        #[arg(long)]
        capacity: f64,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Adapt a baseline with a slice of target-capacity windows.
    Finetune {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory of target trace CSVs.
        #[arg(long)]
        targets: PathBuf,
        #[arg(long)]
        target_capacity: f64,
        #[arg(long, default_value_t = 0.05)]
        budget: f64,
        #[arg(long, value_enum, default_value_t = ModeArg::Full)]
        mode: ModeArg,
    },
    Evaluate {
        #[command(subcommand)]
        what: EvaluateWhat,
    },
    /// Per-window demand estimates for one trace.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Turn a packet log or window CSV into a trace CSV.
    Ingest {
        #[arg(long, conflicts_with = "windows")]
        packets: Option<PathBuf>,
        #[arg(long)]
        windows: Option<PathBuf>,
        /// Bottleneck capacity in Mbps.
        #[arg(long)]
        capacity: Option<f64>,
        /// Window length, default from the config.
        #[arg(long)]
        dt: Option<f64>,
        /// Fixed duration in seconds; packets past it are counted as dropped.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Render metric CSVs into tables and charts.
    Report {
        /// `metrics_<study>.csv` files.
        #[arg(long = "metrics", required = true)]
        metrics: Vec<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum GenerateWhat {
    Grid,
    Calibration,
    Corpus {
        /// Number of traces, default `train.traces_per_round`.
        #[arg(long)]
        n: Option<usize>,
        /// Pin every trace to this base capacity.
        #[arg(long)]
        capacity: Option<f64>,
    },
}

#[derive(Subcommand, Debug)]
enum EvaluateWhat {
    CrossCapacity {
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
        /// Trace directory, default the generated test grid.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    FinetuneStudy {
        /// Baseline checkpoints trained at the source capacity.
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
        /// Demand-model checkpoint for the no-adapt reference row.
        #[arg(long)]
        tgdin: Option<PathBuf>,
        #[arg(long)]
        traces: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum BaselineArg {
    GruLstm,
    Attn,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Full,
    Last,
}

impl From<ModeArg> for FinetuneMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Full => FinetuneMode::Full,
            ModeArg::Last => FinetuneMode::LastLayer,
        }
    }
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::Generate { .. } => "generate",
            Cmd::Train { .. } => "train",
            Cmd::TrainBaseline { .. } => "train-baseline",
            Cmd::Finetune { .. } => "finetune",
            Cmd::Evaluate { .. } => "evaluate",
            Cmd::Infer { .. } => "infer",
            Cmd::Ingest { .. } => "ingest",
            Cmd::Report { .. } => "report",
        }
    }
}

/// Run the CLI. Returns the process exit status: 0 ok, 1 runtime error,
/// 2 usage error.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging(cli.global.quiet);
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli, args) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            1
        }
    }
}

fn init_logging(quiet: bool) {
    let level = if quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("TGDIN_LOG")
        .format(|buf, rec| {
            let line = serde_json::json!({
                "level": rec.level().as_str(),
                "target": rec.target(),
                "msg": rec.args().to_string(),
            });
            writeln!(buf, "{line}")
        })
        .try_init();
}

struct Run {
    out: PathBuf,
    artifacts: Vec<PathBuf>,
}

impl Run {
    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let p = self.out.join(rel);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        self.artifacts.push(p.clone());
        Ok(p)
    }

    fn write_json<S: Serialize>(&mut self, rel: &str, v: &S) -> Result<PathBuf> {
        self.write(rel, (serde_json::to_string_pretty(v)? + "\n").as_bytes())
    }

    fn write_trace(&mut self, rel: &str, trace: &Trace, dt_s: f64) -> Result<()> {
        let p = self.out.join(rel);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        ingest::write_trace_csv(trace, &p, dt_s)?;
        self.artifacts.push(ingest::meta_path(&p));
        self.artifacts.push(p);
        Ok(())
    }
}

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    args: Vec<String>,
    seed: u64,
    artifacts: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn load_config(g: &Global) -> Result<Config> {
    let mode = if g.lax { ParseMode::Lax } else { ParseMode::Strict };
    let cfg = match &g.config {
        Some(p) => {
            let raw = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            validate_config(&raw, mode)?
        }
        None => Config::default(),
    };
    let mut cfg = cfg.with_env_overrides()?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli, args: Vec<String>) -> Result<()> {
    let g = &cli.global;
    let mut cfg = load_config(g)?;
    let jobs = g.jobs.max(1);
    let parse_mode = if g.lax { ParseMode::Lax } else { ParseMode::Strict };
    // An explicit seed also selects which fixed benchmark set is generated.
    if let (Some(s), Cmd::Generate { what }) = (g.seed, &cli.cmd) {
        match what {
            GenerateWhat::Grid => cfg.regimes.grid_seed = s,
            GenerateWhat::Calibration => cfg.regimes.calibration_seed = s,
            GenerateWhat::Corpus { .. } => {}
        }
    }
    cfg.validate()?;
    let consts = cfg.consts();
    let out = g
        .out
        .clone()
        .unwrap_or_else(|| Path::new(&cfg.paths.out_dir).join(cli.cmd.name()));
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut run = Run {
        out,
        artifacts: Vec::new(),
    };
    log::info!("{} -> {}", cli.cmd.name(), run.out.display());

    match &cli.cmd {
        Cmd::Generate { what } => {
            let named: Vec<NamedTrace> = match what {
                GenerateWhat::Grid => build_test_grid(&cfg.regimes, &consts, jobs)?,
                GenerateWhat::Calibration => build_calibration_set(&cfg.regimes, &consts, jobs)?,
                GenerateWhat::Corpus { n, capacity } => {
                    let n = n.unwrap_or(cfg.train.traces_per_round);
                    let traces = match capacity {
                        Some(c) => build_single_capacity_corpus(*c, n, cfg.seed, &cfg.regimes, &consts, jobs)?,
                        None => build_random_corpus(&cfg.regimes, &consts, n, cfg.seed, jobs)?,
                    };
                    traces
                        .into_iter()
                        .enumerate()
                        .map(|(i, trace)| NamedTrace {
                            name: format!("corpus_{i:04}"),
                            trace,
                        })
                        .collect()
                }
            };
            for nt in &named {
                run.write_trace(&format!("traces/{}.csv", nt.name), &nt.trace, consts.dt_s)?;
            }
            log::info!("wrote {} traces", named.len());
        }
        Cmd::Train { corpus, calibration } => {
            let opts = TrainOptions {
                corpus: match corpus {
                    Some(d) => CorpusSource::Fixed(read_trace_dir(d, parse_mode)?),
                    None => CorpusSource::Randomized,
                },
                calibration: calibration.as_deref().map(|d| read_trace_dir(d, parse_mode)).transpose()?,
                jobs,
            };
            let outcome = train_tgdin(&cfg, &opts)?;
            run.write("checkpoint.json", outcome.checkpoint.to_json()?.as_bytes())?;
            run.write_json("train_log.json", &outcome.log)?;
        }
        Cmd::TrainBaseline { model, capacity, corpus } => {
            let kind = match model {
                BaselineArg::GruLstm => ModelKind::GruLstm,
                BaselineArg::Attn => ModelKind::AttnDirect,
            };
            let traces = match corpus {
                Some(d) => read_trace_dir(d, parse_mode)?,
                None => build_single_capacity_corpus(*capacity, cfg.baselines.corpus_traces, cfg.seed, &cfg.regimes, &consts, jobs)?,
            };
            let outcome = train_direct(kind, &traces, &cfg, cfg.seed)?;
            run.write("checkpoint.json", outcome.checkpoint.to_json()?.as_bytes())?;
            run.write_json("train_log.json", &outcome.log)?;
        }
        Cmd::Finetune {
            checkpoint,
            targets,
            target_capacity,
            budget,
            mode,
        } => {
            let ck = ModelCheckpoint::load(checkpoint)?;
            let at: Vec<Trace> = read_trace_dir(targets, parse_mode)?
                .into_iter()
                .filter(|t| trace_capacity(t) == *target_capacity)
                .collect();
            if at.is_empty() {
                return Err(Error::EmptyCorpus(format!(
                    "no traces at {target_capacity} Mbps in {}",
                    targets.display()
                )));
            }
            let ft = FinetuneSpec {
                budget_frac: *budget,
                mode: (*mode).into(),
                target_capacity_mbps: *target_capacity,
                source_id: model_id(&ck),
            };
            let adapted = finetune_direct(&ck, &ft, &at, &cfg)?;
            run.write("checkpoint.json", adapted.to_json()?.as_bytes())?;
        }
        Cmd::Evaluate { what } => {
            let (table, traces) = match what {
                EvaluateWhat::CrossCapacity { checkpoints, traces } => {
                    let models = load_models(checkpoints, "--checkpoint")?;
                    let traces = eval_traces(traces.as_deref(), &cfg, jobs, parse_mode)?;
                    (run_cross_capacity(&models, &traces, &consts)?, traces.len())
                }
                EvaluateWhat::FinetuneStudy { checkpoints, tgdin, traces } => {
                    let sources = load_models(checkpoints, "--checkpoint")?;
                    let reference = match tgdin {
                        Some(p) => Some(eval_model(ModelCheckpoint::load(p)?)),
                        None => None,
                    };
                    let traces = eval_traces(traces.as_deref(), &cfg, jobs, parse_mode)?;
                    let modes = [FinetuneMode::Full, FinetuneMode::LastLayer];
                    let t = run_finetune_study(
                        &sources,
                        reference.as_ref(),
                        &traces,
                        &cfg.eval.finetune_targets_mbps,
                        &cfg.eval.budgets,
                        &modes,
                        &cfg,
                    )?;
                    (t, traces.len())
                }
            };
            log::info!("{} records from {traces} traces", table.records.len());
            report_into(&mut run, &[table])?;
        }
        Cmd::Infer { checkpoint, trace } => {
            let ck = ModelCheckpoint::load(checkpoint)?;
            let tr = ingest::read_trace_csv(trace, parse_mode)?;
            let series = infer_demand(&ck, &tr)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["t_index".to_string()];
            header.extend((0..tr.n_users()).map(|u| format!("demand_u{u}_mbps")));
            w.write_record(&header)?;
            for (i, row) in series.rows.iter().enumerate() {
                let mut rec = vec![tr.windows[series.first_t + i].t_index.to_string()];
                rec.extend(row.iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv buffer: {e}")))?;
            run.write("demand.csv", &bytes)?;
        }
        Cmd::Ingest {
            packets,
            windows,
            capacity,
            dt,
            duration,
        } => {
            let dt_s = dt.unwrap_or(consts.dt_s);
            let (series, stem) = match (packets, windows) {
                (Some(p), _) => (ingest::aggregate_packets(p, dt_s, consts.n_users, *duration)?, stem(p)),
                (None, Some(w)) => (ingest::read_window_csv(w, dt_s, parse_mode)?, stem(w)),
                (None, None) => return Err(Error::invalid("one of --packets or --windows is required")),
            };
            if series.dropped_tail_bytes > 0 {
                log::warn!("{} bytes past the last window were dropped", series.dropped_tail_bytes);
            }
            let cap = capacity.map(CapacityInput::Constant);
            let ingest_consts = crate::config::SimConstants {
                dt_s,
                n_users: series.n_users,
                ..consts
            };
            let trace = ingest::reconstruct_features(&series, cap.as_ref(), &ingest_consts)?;
            let p = run.out.join(format!("windows_{stem}.csv"));
            ingest::write_window_csv(&series, &p)?;
            run.artifacts.push(p);
            run.write_trace(&format!("{stem}.csv"), &trace, dt_s)?;
        }
        Cmd::Report { metrics } => {
            let tables = metrics
                .iter()
                .map(|p| {
                    let s = stem(p);
                    read_table_csv(p, s.strip_prefix("metrics_").unwrap_or(&s))
                })
                .collect::<Result<Vec<_>>>()?;
            report_into(&mut run, &tables)?;
        }
    }

    run.write_json("config.json", &cfg)?;
    run.write("seed.txt", format!("{}\n", cfg.seed).as_bytes())?;
    write_manifest(&run, cli.cmd.name(), args, cfg.seed)
}

fn report_into(run: &mut Run, tables: &[MetricTable]) -> Result<()> {
    let written = emit_report(tables, &run.out)?;
    run.artifacts.extend(written);
    Ok(())
}

fn write_manifest(run: &Run, command: &str, args: Vec<String>, seed: u64) -> Result<()> {
    let mut entries = Vec::new();
    for p in &run.artifacts {
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        entries.push(ManifestEntry {
            path: p
                .strip_prefix(&run.out)
                .unwrap_or(p)
                .to_string_lossy()
                .replace('\\', "/"),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    entries.dedup_by(|a, b| a.path == b.path);
    let m = Manifest {
        command: command.into(),
        args,
        seed,
        artifacts: entries,
    };
    let p = run.out.join("manifest.json");
    std::fs::write(&p, serde_json::to_string_pretty(&m)? + "\n").map_err(|e| Error::io(&p, e))
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "trace".into())
}

/// Every `*.csv` trace in a directory, in file-name order.
pub fn read_trace_dir(dir: &Path, mode: ParseMode) -> Result<Vec<Trace>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|e| e == "csv") {
            paths.push(p);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyCorpus(format!("no trace CSVs in {}", dir.display())));
    }
    paths.iter().map(|p| ingest::read_trace_csv(p, mode)).collect()
}

fn eval_traces(dir: Option<&Path>, cfg: &Config, jobs: usize, mode: ParseMode) -> Result<Vec<Trace>> {
    match dir {
        Some(d) => read_trace_dir(d, mode),
        None => Ok(build_test_grid(&cfg.regimes, &cfg.consts(), jobs)?
            .into_iter()
            .map(|n| n.trace)
            .collect()),
    }
}

/// `tgdin`, or `<kind>(<source capacity>)` for baselines.
fn model_id(ck: &ModelCheckpoint) -> String {
    match ck.kind() {
        ModelKind::TgdinMlp => "tgdin".into(),
        k => match source_capacity(ck) {
            Some(c) => format!("{}({c})", k.name()),
            None => k.name().into(),
        },
    }
}

fn source_capacity(ck: &ModelCheckpoint) -> Option<f64> {
    ck.provenance.extra.get("source_capacity_mbps").and_then(|v| v.as_f64())
}

fn eval_model(ck: ModelCheckpoint) -> EvalModel {
    EvalModel {
        id: model_id(&ck),
        source: source_capacity(&ck).map_or_else(|| "randomized".into(), |c| c.to_string()),
        checkpoint: ck,
    }
}

fn load_models(paths: &[PathBuf], flag: &str) -> Result<Vec<EvalModel>> {
    if paths.is_empty() {
        return Err(Error::invalid(format!("missing artifact: no model checkpoint given ({flag} PATH)")));
    }
    paths.iter().map(|p| Ok(eval_model(ModelCheckpoint::load(p)?))).collect()
}
