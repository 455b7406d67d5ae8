//! Experiment runner: sweeps, comparison schemes and machine-readable output.

pub mod experiments;
pub mod schemes;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ris_see::engine::AlgorithmOptions;
use ris_see::scenario::ScenarioConfig;

pub use experiments::{parse_override, parse_seeds, ExperimentId};
pub use schemes::{run_scheme, SchemeId, SchemeOutcome};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ris_see::Error),
    #[error("{0}")]
    Usage(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Everything that determines the rows of one experiment run.
#[derive(Debug, Clone)]
pub struct RunRequest {
    pub experiment: ExperimentId,
    /// Scenario JSON text, if a file was given.
    pub document: Option<String>,
    pub overrides: Vec<(String, String)>,
    pub seeds: Vec<u64>,
    pub schemes: Vec<SchemeId>,
    pub options: AlgorithmOptions,
    /// Write 0 in the timing column so repeated runs are byte-identical.
    pub deterministic: bool,
}

impl RunRequest {
    pub fn new(experiment: ExperimentId) -> RunRequest {
        RunRequest {
            experiment,
            document: None,
            overrides: Vec::new(),
            seeds: vec![0],
            schemes: experiment.default_schemes(),
            options: AlgorithmOptions::default(),
            deterministic: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub scheme: String,
    pub sweep_value: f64,
    pub seed: u64,
    pub min_see: f64,
    pub sum_see: f64,
    pub iters: usize,
    pub secs: f64,
    /// `converged`, `max_iters`, or `failed: <reason>`.
    pub status: String,
}

impl Row {
    pub fn ok(&self) -> bool {
        self.status == "converged"
    }
}

/// Per-iteration objective of one run (convergence experiment only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub scheme: String,
    pub seed: u64,
    pub iter: usize,
    pub z: f64,
    pub min_see_true: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub rows: Vec<Row>,
    pub traces: Vec<TraceRow>,
}

impl Report {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(Row::ok)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub schemes: Vec<String>,
    pub version: String,
    pub rows: usize,
    pub failed_rows: usize,
    pub deterministic: bool,
    pub files: Vec<String>,
}

/// SHA-256 over the resolved scenarios, schemes, seeds and algorithm options.
pub fn config_hash(request: &RunRequest, points: &[(f64, ScenarioConfig)]) -> Result<String, CliError> {
    #[derive(Serialize)]
    struct Hashed<'a> {
        experiment: &'a str,
        points: &'a [(f64, ScenarioConfig)],
        seeds: &'a [u64],
        schemes: Vec<&'static str>,
        options: &'a AlgorithmOptions,
    }
    let text = serde_json::to_string(&Hashed {
        experiment: request.experiment.name(),
        points,
        seeds: &request.seeds,
        schemes: request.schemes.iter().map(|s| s.name()).collect(),
        options: &request.options,
    })?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Runs every (sweep point, seed, scheme) job; failures become rows.
pub fn execute(request: &RunRequest) -> Result<Report, CliError> {
    let points = request.experiment.points(request.document.as_deref(), &request.overrides)?;
    execute_points(request, &points)
}

fn execute_points(request: &RunRequest, points: &[(f64, ScenarioConfig)]) -> Result<Report, CliError> {
    if request.seeds.is_empty() || request.schemes.is_empty() {
        return Err(CliError::Usage("need at least one seed and one scheme".into()));
    }
    request.options.validate()?;
    let jobs: Vec<(f64, &ScenarioConfig, u64, SchemeId)> = points
        .iter()
        .flat_map(|(v, cfg)| {
            request
                .seeds
                .iter()
                .flat_map(move |&s| request.schemes.iter().map(move |&id| (*v, cfg, s, id)))
        })
        .collect();
    let keep_trace = request.experiment == ExperimentId::Convergence;
    let results: Vec<(Row, Vec<TraceRow>)> = jobs
        .par_iter()
        .map(|&(value, cfg, seed, id)| {
            let cfg = cfg.with_seed(seed);
            match run_scheme(&cfg, id, &request.options) {
                Ok(out) => {
                    let traces = if keep_trace {
                        let trace = &out.output.trace;
                        std::iter::once((0, trace.initial_z, f64::NAN))
                            .chain(trace.records.iter().map(|r| (r.iter, r.z_p6, r.min_see_true)))
                            .map(|(iter, z, m)| TraceRow {
                                scheme: id.name().into(),
                                seed,
                                iter,
                                z,
                                min_see_true: m,
                            })
                            .collect()
                    } else {
                        vec![]
                    };
                    let row = Row {
                        scheme: id.name().into(),
                        sweep_value: value,
                        seed,
                        min_see: out.min_see,
                        sum_see: out.sum_see,
                        iters: out.iters,
                        secs: if request.deterministic { 0.0 } else { out.secs },
                        status: if out.converged { "converged".into() } else { "max_iters".into() },
                    };
                    (row, traces)
                }
                Err(e) => {
                    log::warn!("{} at {value} seed {seed}: {e}", id.name());
                    let row = Row {
                        scheme: id.name().into(),
                        sweep_value: value,
                        seed,
                        min_see: f64::NAN,
                        sum_see: f64::NAN,
                        iters: 0,
                        secs: 0.0,
                        status: format!("failed: {e}"),
                    };
                    (row, vec![])
                }
            }
        })
        .collect();
    let mut report = Report::default();
    for (row, traces) in results {
        report.rows.push(row);
        report.traces.extend(traces);
    }
    Ok(report)
}

/// Runs the request and writes `<experiment>.csv`, the trace file when
/// present, and `<experiment>_manifest.json` into `out_dir`.
pub fn run_experiment(request: &RunRequest, out_dir: &Path) -> Result<(Report, Manifest), CliError> {
    let points = request.experiment.points(request.document.as_deref(), &request.overrides)?;
    let hash = config_hash(request, &points)?;
    let report = execute_points(request, &points)?;
    std::fs::create_dir_all(out_dir)?;
    let name = request.experiment.name();
    let mut files = vec![];

    let rows_path = out_dir.join(format!("{name}.csv"));
    write_csv(&rows_path, &report.rows)?;
    files.push(file_name(&rows_path));
    if !report.traces.is_empty() {
        let trace_path = out_dir.join(format!("{name}_trace.csv"));
        write_csv(&trace_path, &report.traces)?;
        files.push(file_name(&trace_path));
    }
    let manifest = Manifest {
        experiment: name.into(),
        config_hash: hash,
        seeds: request.seeds.clone(),
        schemes: request.schemes.iter().map(|s| s.name().to_string()).collect(),
        version: env!("CARGO_PKG_VERSION").into(),
        rows: report.rows.len(),
        failed_rows: report.rows.iter().filter(|r| !r.ok()).count(),
        deterministic: request.deterministic,
        files,
    };
    let manifest_path = out_dir.join(format!("{name}_manifest.json"));
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok((report, manifest))
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<Row>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<Row>, _>>()?)
}

/// Seed-averaged statistics per (scheme, sweep value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: String,
    pub sweep_value: f64,
    /// Rows that converged and entered the averages.
    pub seeds: usize,
    /// Rows skipped because they failed or hit the iteration limit.
    pub excluded: usize,
    pub mean_min_see: f64,
    pub std_min_see: f64,
    pub mean_sum_see: f64,
    pub mean_iters: f64,
    pub mean_secs: f64,
}

pub fn summarize(rows: &[Row]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, u64), (f64, Vec<&Row>, usize)> = BTreeMap::new();
    for r in rows {
        let entry = groups
            .entry((r.scheme.clone(), r.sweep_value.to_bits()))
            .or_insert((r.sweep_value, vec![], 0));
        if r.ok() {
            entry.1.push(r);
        } else {
            entry.2 += 1;
        }
    }
    groups
        .into_iter()
        .map(|((scheme, _), (value, ok, excluded))| {
            let n = ok.len() as f64;
            let mean = |f: fn(&Row) -> f64| if ok.is_empty() { f64::NAN } else { ok.iter().map(|r| f(r)).sum::<f64>() / n };
            let m = mean(|r| r.min_see);
            let var = if ok.len() > 1 {
                ok.iter().map(|r| (r.min_see - m).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            SummaryRow {
                scheme,
                sweep_value: value,
                seeds: ok.len(),
                excluded,
                mean_min_see: m,
                std_min_see: var.sqrt(),
                mean_sum_see: mean(|r| r.sum_see),
                mean_iters: mean(|r| r.iters as f64),
                mean_secs: mean(|r| r.secs),
            }
        })
        .collect()
}

/// Reads a result CSV and writes `<stem>_summary.csv` next to it.
pub fn summarize_file(path: &Path) -> Result<PathBuf, CliError> {
    let rows = read_rows(path)?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| CliError::Usage(format!("bad path {}", path.display())))?;
    let out = path.with_file_name(format!("{stem}_summary.csv"));
    write_csv(&out, &summarize(&rows))?;
    Ok(out)
}
