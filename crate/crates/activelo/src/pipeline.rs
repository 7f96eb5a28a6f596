//! The stages behind each subcommand and the files they leave behind.

use std::fmt;
use std::sync::Arc;

use activelo_core::ais::{run_active_loop, Admission, AisError, RoundReport, SelectionState, TrainingFree};
use activelo_core::diversity::{score_pool, select_itss, DiversityError, ItssConfig, ItssSelection, ScoredSequence};
use activelo_core::efficiency::{BudgetError, BudgetParams, CostReport};
use activelo_core::predictor::{noisy_oracle, oracle_predictor, IcpPredictor, PosePredictor, PredictorSpec};
use activelo_core::trajgraph::sequence_features;
use activelo_core::{SequenceRecord, Weather};
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts::{ArtifactDir, ArtifactError, FeatureRow};
use crate::config::{Epochs, RunConfig};
use crate::manifest::LoadedManifest;

/// Exit status of a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Partial,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Partial => 1,
        }
    }
}

#[derive(Debug)]
pub enum CommandError {
    /// Bad flags, config or manifest. Exit code 2.
    Config(String),
    /// A stage could not finish. Exit code 1.
    Stage { stage: &'static str, message: String },
}

impl CommandError {
    pub fn code(&self) -> i32 {
        match self {
            CommandError::Config(_) => 2,
            CommandError::Stage { .. } => 1,
        }
    }

    fn stage(stage: &'static str, e: impl fmt::Display) -> Self {
        CommandError::Stage {
            stage,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommandError::Config(m) => write!(f, "config error: {m}"),
            CommandError::Stage { stage, message } => write!(f, "stage {stage}: {message}"),
        }
    }
}

impl From<ArtifactError> for CommandError {
    fn from(e: ArtifactError) -> Self {
        CommandError::stage("write", e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureRecord {
    pub stage: String,
    pub id: String,
    pub error: String,
}

/// Sequences that loaded and could be analyzed, with their feature rows.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub sequences: Vec<SequenceRecord>,
    pub rows: Vec<FeatureRow>,
    pub failures: Vec<FailureRecord>,
}

pub fn analyze(manifest: &LoadedManifest, cfg: &RunConfig) -> Analysis {
    let mut failures = Vec::new();
    let mut loaded = Vec::new();
    for entry in &manifest.manifest.sequences {
        match manifest.resolve_entry(entry, cfg.cache_frames) {
            Ok(s) => loaded.push(s),
            Err(e) => {
                log::warn!("{e}");
                failures.push(FailureRecord {
                    stage: "load".into(),
                    id: entry.id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    let results: Vec<_> = loaded
        .par_iter()
        .map(|s| sequence_features(s, &cfg.segment, cfg.outlier_epsilon))
        .collect();
    let mut sequences = Vec::new();
    let mut rows = Vec::new();
    for (seq, result) in loaded.into_iter().zip(results) {
        match result {
            Ok((_, f)) => {
                rows.push(FeatureRow::new(&f, seq.weather, seq.frame_count()));
                sequences.push(seq);
            }
            Err(e) => {
                log::warn!("sequence {}: {e}", seq.id);
                failures.push(FailureRecord {
                    stage: "analyze".into(),
                    id: seq.id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    Analysis { sequences, rows, failures }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItssOutcome {
    pub candidates: Vec<ScoredSequence>,
    /// Sequences left out of the candidate set because of their weather tag.
    pub excluded: Vec<String>,
    pub selection: ItssSelection,
}

/// Selects from the general-weather rows only.
pub fn itss(rows: &[FeatureRow], cfg: &ItssConfig) -> Result<ItssOutcome, DiversityError> {
    let (general, other): (Vec<&FeatureRow>, Vec<&FeatureRow>) = rows.iter().partition(|r| r.weather == Weather::General);
    let features: Vec<_> = general.iter().map(|r| r.features()).collect();
    let candidates = score_pool(&features, cfg)?;
    let selection = select_itss(&candidates, cfg)?;
    Ok(ItssOutcome {
        candidates,
        excluded: other.iter().map(|r| r.id.clone()).collect(),
        selection,
    })
}

pub fn predictor(spec: PredictorSpec, pool: &[SequenceRecord], seed: u64) -> Arc<dyn PosePredictor> {
    match spec {
        PredictorSpec::Icp => Arc::new(IcpPredictor {
            voxel_size: None,
            ..IcpPredictor::default()
        }),
        PredictorSpec::Oracle => Arc::new(oracle_predictor(pool)),
        PredictorSpec::Noisy { sigma_rot, sigma_trans } => Arc::new(noisy_oracle(pool, sigma_rot, sigma_trans, seed)),
    }
}

pub fn ais(pool: &[SequenceRecord], initial: &[String], cfg: &RunConfig) -> Result<Vec<SelectionState>, AisError> {
    let factory = TrainingFree(predictor(cfg.predictor, pool, cfg.seed));
    run_active_loop(pool, initial, &factory, &cfg.ais)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundArtifact<'a> {
    #[serde(flatten)]
    pub report: &'a RoundReport,
    pub selected: &'a [Admission],
    pub remaining: &'a [String],
}

/// `id,round` in admission order.
pub fn selection_csv(selected: &[Admission]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "round"])?;
    for a in selected {
        w.write_record([a.id.as_str(), &a.round.to_string()])?;
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

pub fn write_ais(out: &mut ArtifactDir, history: &[SelectionState]) -> Result<(), CommandError> {
    for state in &history[1..] {
        let report = state.rounds.last().expect("every later state has a round");
        let data = RoundArtifact {
            report,
            selected: &state.selected,
            remaining: &state.remaining,
        };
        out.write_json(&format!("ais_round_{:02}.json", report.round), "ais_round", &data)?;
    }
    let last = history.last().expect("history starts with the initial state");
    let bytes = selection_csv(&last.selected).map_err(|e| CommandError::stage("write", e))?;
    out.write_bytes("selection.csv", &bytes)?;
    Ok(())
}

/// Cost of a run that executed `rounds` increments: every round retrains,
/// and the last one needs no further inference.
pub fn run_cost(n_total: usize, n_init: usize, h: usize, rounds: usize, epochs: &Epochs) -> Result<CostReport, BudgetError> {
    let p = BudgetParams {
        n_total: n_total as u64,
        n_init: n_init as u64,
        h: h as u64,
        iter: rounds as u64,
        e_init: epochs.e_init,
        e_round: epochs.e_round,
        e_full: epochs.e_full,
    };
    let mut report = CostReport::default_profile(&p)?;
    report.selected = (p.n_init + p.h * p.iter).min(p.n_total);
    report.selected_percent = 100.0 * report.selected as f64 / p.n_total as f64;
    Ok(report)
}

pub fn render_report(r: &CostReport) -> String {
    let p = &r.params;
    let saving = 100.0 * (1.0 - r.l_active_total as f64 / r.l_full as f64);
    format!(
        "training cost in sequence-iterations\n\
         pool {} sequences, initial {}, {} per round, {} rounds; epochs {}/{}/{} (initial/round/full)\n\
         \n\
         L_full   = {}\n\
         L_train  = {}  ({} training rounds)\n\
         L_remain = {}  ({} inference rounds after the first)\n\
         total    = {}  ({saving:.1}% below full training)\n\
         selected = {} / {} ({:.1}%)\n",
        p.n_total,
        p.n_init,
        p.h,
        p.iter,
        p.e_init,
        p.e_round,
        p.e_full,
        r.l_full,
        r.l_train,
        r.train_rounds,
        r.l_remain,
        r.infer_rounds,
        r.l_active_total,
        r.selected,
        p.n_total,
        r.selected_percent,
    )
}

/// A cost report, or why none could be produced.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum CostOutcome {
    Report(CostReport),
    Unavailable { note: String },
}

pub fn write_cost(out: &mut ArtifactDir, cost: &Result<CostReport, BudgetError>) -> Result<(), CommandError> {
    let (outcome, text) = match cost {
        Ok(r) => (CostOutcome::Report(*r), render_report(r)),
        Err(e) => {
            let note = format!("no cost report: {e}");
            (CostOutcome::Unavailable { note: note.clone() }, format!("{note}\n"))
        }
    };
    out.write_json("cost_report.json", "cost_report", &outcome)?;
    out.write_bytes("cost_report.txt", text.as_bytes())?;
    Ok(())
}

fn write_failures(out: &mut ArtifactDir, failures: &[FailureRecord]) -> Result<(), CommandError> {
    out.write_json("failures.json", "failures", &failures)?;
    Ok(())
}

fn load_manifest(cfg: &RunConfig) -> Result<LoadedManifest, CommandError> {
    LoadedManifest::load(&cfg.manifest).map_err(|e| CommandError::Config(e.to_string()))
}

fn finish(out: &mut ArtifactDir, failures: &[FailureRecord]) -> Result<Status, CommandError> {
    write_failures(out, failures)?;
    out.write_checksums()?;
    Ok(if failures.is_empty() { Status::Ok } else { Status::Partial })
}

/// `analyze`: features.csv for every sequence that could be analyzed.
pub fn cmd_analyze(cfg: &RunConfig, out: &mut ArtifactDir) -> Result<Status, CommandError> {
    let manifest = load_manifest(cfg)?;
    out.write_config()?;
    let analysis = analyze(&manifest, cfg);
    out.write_features("features.csv", &analysis.rows)?;
    finish(out, &analysis.failures)
}

/// `ais`: the active loop from an explicit initial set.
pub fn cmd_ais(cfg: &RunConfig, initial: &[String], out: &mut ArtifactDir) -> Result<Status, CommandError> {
    let manifest = load_manifest(cfg)?;
    out.write_config()?;
    let (pool, load_failures) = manifest.resolve_all(cfg.cache_frames);
    let mut failures: Vec<FailureRecord> = load_failures
        .iter()
        .map(|e| FailureRecord {
            stage: "load".into(),
            id: failed_id(e),
            error: e.to_string(),
        })
        .collect();
    if let Some(id) = initial.iter().find(|id| !pool.iter().any(|s| &s.id == *id)) {
        write_failures(out, &failures)?;
        return Err(CommandError::Config(format!("initial sequence {id:?} is not in the pool")));
    }
    let history = match ais(&pool, initial, cfg) {
        Ok(h) => h,
        Err(e) => {
            write_failures(out, &failures)?;
            out.write_checksums()?;
            return Err(CommandError::stage("ais", e));
        }
    };
    write_ais(out, &history)?;
    failures.extend(ais_failures(&history));
    finish(out, &failures)
}

fn failed_id(e: &crate::manifest::ManifestError) -> String {
    match e {
        crate::manifest::ManifestError::Entry { id, .. } => id.clone(),
        _ => String::new(),
    }
}

fn ais_failures(history: &[SelectionState]) -> Vec<FailureRecord> {
    let last = history.last().expect("non-empty history");
    last.rounds
        .iter()
        .flat_map(|r| {
            r.failures.iter().map(move |f| FailureRecord {
                stage: format!("ais round {}", r.round),
                id: f.id.clone(),
                error: f.error.clone(),
            })
        })
        .collect()
}

/// `run`: analyze, then ITSS, then the active loop seeded with the ITSS
/// selection, then the cost report.
pub fn cmd_run(cfg: &RunConfig, out: &mut ArtifactDir) -> Result<Status, CommandError> {
    let manifest = load_manifest(cfg)?;
    out.write_config()?;
    let analysis = analyze(&manifest, cfg);
    out.write_features("features.csv", &analysis.rows)?;
    let mut failures = analysis.failures;
    let abort = |out: &mut ArtifactDir, failures: &[FailureRecord], e: CommandError| -> Result<Status, CommandError> {
        write_failures(out, failures)?;
        out.write_checksums()?;
        Err(e)
    };

    let selection = match itss(&analysis.rows, &cfg.itss) {
        Ok(o) => {
            out.write_json("itss.json", "itss", &o)?;
            o.selection
        }
        Err(e) => return abort(out, &failures, CommandError::stage("itss", e)),
    };

    let history = match ais(&analysis.sequences, &selection.selected, cfg) {
        Ok(h) => h,
        Err(e) => return abort(out, &failures, CommandError::stage("ais", e)),
    };
    write_ais(out, &history)?;
    failures.extend(ais_failures(&history));

    let rounds = history.len() - 1;
    let cost = run_cost(analysis.sequences.len(), selection.selected.len(), cfg.ais.h, rounds, &cfg.epochs);
    write_cost(out, &cost)?;
    finish(out, &failures)
}

/// `itss` on an existing features table.
pub fn cmd_itss(rows: &[FeatureRow], cfg: &ItssConfig, out: &mut ArtifactDir) -> Result<ItssOutcome, CommandError> {
    let outcome = itss(rows, cfg).map_err(|e| CommandError::stage("itss", e))?;
    out.write_json("itss.json", "itss", &outcome)?;
    let selected: Vec<Admission> = outcome
        .selection
        .selected
        .iter()
        .map(|id| Admission { id: id.clone(), round: 0 })
        .collect();
    let bytes = selection_csv(&selected).map_err(|e| CommandError::stage("write", e))?;
    out.write_bytes("selection.csv", &bytes)?;
    out.write_checksums()?;
    Ok(outcome)
}
