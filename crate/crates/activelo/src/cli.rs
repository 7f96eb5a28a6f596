//! Command-line interface.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use activelo_core::efficiency::{BudgetParams, CostReport};
use activelo_core::predictor::PredictorSpec;
use clap::{Args, Parser, Subcommand};

use crate::artifacts::{read_features, ArtifactDir};
use crate::config::RunConfig;
use crate::pipeline::{self, render_report, CommandError, Status};

pub const WORKERS_ENV: &str = "ACTIVELO_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "activelo", version, about = "Training-set curation for LiDAR odometry")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-sequence trajectory and scene features as CSV.
    Analyze(Common),
    /// Initial set selection from a features table.
    Itss(ItssArgs),
    /// Active incremental selection from an initial set.
    Ais(AisArgs),
    /// analyze, itss, ais and the cost report in one go.
    Run(RunArgs),
    /// Training-cost comparison for a selection budget.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML or JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Sequence manifest; overrides the config.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "activelo-out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ItssArgs {
    #[command(flatten)]
    pub common: Common,
    /// Features table written by `analyze`; defaults to `<out>/features.csv`.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub u: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LoopArgs {
    #[arg(long)]
    pub h: Option<usize>,
    #[arg(long)]
    pub iter: Option<usize>,
    #[arg(long)]
    pub c: Option<usize>,
    #[arg(long)]
    pub aug_alpha: Option<f64>,
    #[arg(long)]
    pub srl_weight: Option<f64>,
    #[arg(long)]
    pub pil_weight: Option<f64>,
    /// icp, oracle or noisy:<sigma_rot>,<sigma_trans>
    #[arg(long)]
    pub predictor: Option<PredictorSpec>,
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AisArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub looping: LoopArgs,
    /// Comma-separated ids, or a file (one id per line, a CSV whose first
    /// column is the id, or a JSON list / `itss.json`).
    #[arg(long)]
    pub initial: Option<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub looping: LoopArgs,
    #[arg(long)]
    pub u: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, default_value_t = 69)]
    pub n_total: u64,
    #[arg(long, default_value_t = 6)]
    pub n_init: u64,
    #[arg(long, default_value_t = 5)]
    pub h: u64,
    #[arg(long, default_value_t = 7)]
    pub iter: u64,
    #[arg(long, default_value_t = 15)]
    pub e_init: u64,
    #[arg(long, default_value_t = 5)]
    pub e_round: u64,
    #[arg(long, default_value_t = 50)]
    pub e_full: u64,
    /// Defaults to `iter`.
    #[arg(long)]
    pub train_rounds: Option<u64>,
    /// Defaults to `iter - 1`.
    #[arg(long)]
    pub infer_rounds: Option<u64>,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
    /// Also write cost_report.json and cost_report.txt here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(status) => status.code(),
        Err(e) => {
            eprintln!("activelo: {e}");
            e.code()
        }
    }
}

fn dispatch(command: Command) -> Result<Status, CommandError> {
    match command {
        Command::Analyze(common) => {
            let cfg = load_config(&common)?;
            with_workers(&cfg, || {
                let mut out = artifact_dir(&common, &cfg)?;
                pipeline::cmd_analyze(&cfg, &mut out)
            })
        }
        Command::Itss(args) => cmd_itss(args),
        Command::Ais(args) => {
            let mut cfg = load_config(&args.common)?;
            apply_loop(&mut cfg, &args.looping);
            cfg.validate().map_err(config_err)?;
            let initial = match args.initial.as_deref() {
                Some(spec) => parse_initial(spec)?,
                None => cfg
                    .initial
                    .clone()
                    .ok_or_else(|| CommandError::Config("no initial set: pass --initial or set `initial` in the config".into()))?,
            };
            cfg.initial = Some(initial.clone());
            with_workers(&cfg, || {
                let mut out = artifact_dir(&args.common, &cfg)?;
                pipeline::cmd_ais(&cfg, &initial, &mut out)
            })
        }
        Command::Run(args) => {
            let mut cfg = load_config(&args.common)?;
            apply_loop(&mut cfg, &args.looping);
            if let Some(u) = args.u {
                cfg.itss.u = u;
            }
            cfg.validate().map_err(config_err)?;
            with_workers(&cfg, || {
                let mut out = artifact_dir(&args.common, &cfg)?;
                pipeline::cmd_run(&cfg, &mut out)
            })
        }
        Command::Report(args) => cmd_report(args),
    }
}

fn config_err(e: impl std::fmt::Display) -> CommandError {
    CommandError::Config(e.to_string())
}

/// Config file first, then flags; the seed must come from one of them.
pub fn load_config(common: &Common) -> Result<RunConfig, CommandError> {
    let mut cfg = match (&common.config, &common.manifest, common.seed) {
        (Some(path), _, _) => RunConfig::load(path).map_err(config_err)?,
        (None, Some(manifest), Some(seed)) => RunConfig::new(absolute(manifest), seed),
        (None, None, _) => return Err(CommandError::Config("pass --config or --manifest".into())),
        (None, Some(_), None) => return Err(CommandError::Config("a seed is required: pass --seed or use a config".into())),
    };
    if let Some(m) = &common.manifest {
        cfg.manifest = absolute(m);
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(w) = common.workers {
        cfg.workers = Some(w);
    }
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let w = v
            .trim()
            .parse()
            .map_err(|_| CommandError::Config(format!("{WORKERS_ENV}={v:?} is not a worker count")))?;
        cfg.workers = Some(w);
    }
    cfg.apply_seed();
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

fn apply_loop(cfg: &mut RunConfig, a: &LoopArgs) {
    if let Some(v) = a.h {
        cfg.ais.h = v;
    }
    if let Some(v) = a.iter {
        cfg.ais.iter = v;
    }
    let p = &mut cfg.ais.params;
    if let Some(v) = a.c {
        p.augmentation.c = v;
    }
    if let Some(v) = a.aug_alpha {
        p.augmentation.aug_alpha = v;
    }
    if let Some(v) = a.srl_weight {
        p.srl_weight = v;
    }
    if let Some(v) = a.pil_weight {
        p.pil_weight = v;
    }
    if let Some(v) = a.stride {
        p.stride = v;
    }
    if let Some(v) = a.predictor {
        cfg.predictor = v;
    }
}

fn artifact_dir(common: &Common, cfg: &RunConfig) -> Result<ArtifactDir, CommandError> {
    let dir = cfg
        .output_dir
        .clone()
        .filter(|_| common.out.as_os_str() == "activelo-out")
        .unwrap_or_else(|| common.out.clone());
    ArtifactDir::create(dir, cfg.snapshot()).map_err(config_err)
}

fn with_workers<T>(cfg: &RunConfig, f: impl FnOnce() -> Result<T, CommandError> + Send) -> Result<T, CommandError>
where
    T: Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(config_err)?;
    pool.install(f)
}

/// Reads an initial set from a comma list or a file.
pub fn parse_initial(spec: &str) -> Result<Vec<String>, CommandError> {
    let path = Path::new(spec);
    let ids: Vec<String> = if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| CommandError::Config(format!("{spec}: {e}")))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => ids_from_json(&text).map_err(|m| CommandError::Config(format!("{spec}: {m}")))?,
            Some("csv") => {
                let mut r = csv::ReaderBuilder::new()
                    .has_headers(false)
                    .flexible(true)
                    .from_reader(text.as_bytes());
                let mut ids = Vec::new();
                for (i, rec) in r.records().enumerate() {
                    let rec = rec.map_err(|e| CommandError::Config(format!("{spec}: {e}")))?;
                    let id = rec.get(0).unwrap_or("").trim();
                    if !(i == 0 && id == "id") && !id.is_empty() {
                        ids.push(id.to_string());
                    }
                }
                ids
            }
            _ => text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from)
                .collect(),
        }
    } else {
        spec.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
    };
    if ids.is_empty() {
        return Err(CommandError::Config(format!("initial set {spec:?} is empty")));
    }
    Ok(ids)
}

fn ids_from_json(text: &str) -> Result<Vec<String>, String> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let list = v.pointer("/data/selection/selected").or_else(|| v.get("selected")).unwrap_or(&v);
    serde_json::from_value(list.clone()).map_err(|_| "expected a list of ids or an itss report".to_string())
}

fn cmd_itss(args: ItssArgs) -> Result<Status, CommandError> {
    let common = &args.common;
    let (mut itss_cfg, snapshot, out_dir) = match &common.config {
        Some(_) => {
            let cfg = load_config(common)?;
            (cfg.itss, cfg.snapshot(), cfg.output_dir.clone())
        }
        None => {
            let d = activelo_core::diversity::ItssConfig::default();
            let snap = serde_json::json!({ "itss": d });
            (d, snap, None)
        }
    };
    if let Some(u) = args.u {
        itss_cfg.u = u;
    }
    itss_cfg.validate().map_err(config_err)?;
    let out = out_dir
        .filter(|_| common.out.as_os_str() == "activelo-out")
        .unwrap_or_else(|| common.out.clone());
    let features = args.features.clone().unwrap_or_else(|| out.join("features.csv"));
    let rows = read_features(&features).map_err(config_err)?;
    let mut snapshot = snapshot;
    snapshot["itss"] = serde_json::to_value(itss_cfg).expect("itss config serializes");
    let mut dir = ArtifactDir::create(out, snapshot).map_err(config_err)?;
    let outcome = pipeline::cmd_itss(&rows, &itss_cfg, &mut dir)?;
    println!("{}", outcome.selection.selected.join(","));
    Ok(Status::Ok)
}

fn cmd_report(a: ReportArgs) -> Result<Status, CommandError> {
    let p = BudgetParams {
        n_total: a.n_total,
        n_init: a.n_init,
        h: a.h,
        iter: a.iter,
        e_init: a.e_init,
        e_round: a.e_round,
        e_full: a.e_full,
    };
    let train = a.train_rounds.unwrap_or(a.iter);
    let infer = a.infer_rounds.unwrap_or(a.iter.saturating_sub(1));
    let report = CostReport::new(&p, train, infer).map_err(config_err)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        print!("{}", render_report(&report));
    }
    if let Some(dir) = a.out {
        let mut out = ArtifactDir::create(dir, serde_json::to_value(p).expect("params serialize")).map_err(config_err)?;
        pipeline::write_cost(&mut out, &Ok(report))?;
    }
    Ok(Status::Ok)
}
