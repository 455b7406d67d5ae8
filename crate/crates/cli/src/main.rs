use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use ris_see_cli::{parse_override, parse_seeds, run_experiment, summarize_file, CliError, ExperimentId, RunRequest, SchemeId};

/// Runs secrecy energy efficiency sweeps and writes CSV series.
#[derive(Debug, Parser)]
#[command(name = "ris-see", version)]
struct Args {
    /// convergence, power_sweep, ris_elements, num_eves, num_bs, error_level or fairness.
    #[arg(long, required_unless_present = "summarize")]
    experiment: Option<String>,
    /// Scenario JSON file; defaults apply to missing fields.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Scenario override `key=value`, dotted keys for nested fields.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Seeds as `a..b` (exclusive), `a..=b` or a single value.
    #[arg(long, default_value = "0..1")]
    seeds: String,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Comma-separated scheme names; defaults depend on the experiment.
    #[arg(long, value_delimiter = ',')]
    schemes: Vec<String>,
    /// Feasibility and gap tolerance of the conic solver.
    #[arg(long)]
    solver_tol: Option<f64>,
    /// Outer iteration limit.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Gaussian randomization draws.
    #[arg(long)]
    trials: Option<usize>,
    /// Average an existing result CSV over seeds instead of running.
    #[arg(long, value_name = "CSV")]
    summarize: Option<PathBuf>,
    /// Write zero timings so repeated runs give identical files.
    #[arg(long)]
    deterministic: bool,
}

fn run(args: Args) -> Result<bool, CliError> {
    if let Some(path) = &args.summarize {
        let out = summarize_file(path)?;
        println!("{}", out.display());
        return Ok(true);
    }
    let experiment: ExperimentId = args.experiment.as_deref().unwrap_or_default().parse()?;
    let mut req = RunRequest::new(experiment);
    if let Some(path) = &args.scenario {
        req.document = Some(std::fs::read_to_string(path)?);
    }
    req.overrides = args.set.iter().map(|s| parse_override(s)).collect::<Result<_, _>>()?;
    req.seeds = parse_seeds(&args.seeds)?;
    if !args.schemes.is_empty() {
        req.schemes = args.schemes.iter().map(|s| s.parse::<SchemeId>()).collect::<Result<_, _>>()?;
    }
    if let Some(tol) = args.solver_tol {
        req.options.solver.feas_tol = tol;
        req.options.solver.gap_tol = tol;
    }
    if let Some(n) = args.max_iters {
        req.options.max_iters = n;
    }
    if let Some(n) = args.trials {
        req.options.trials = n;
    }
    req.deterministic = args.deterministic;
    let (report, manifest) = run_experiment(&req, &args.out)?;
    for f in &manifest.files {
        println!("{}", args.out.join(f).display());
    }
    if !report.all_ok() {
        eprintln!("{} of {} rows did not converge", manifest.failed_rows, manifest.rows);
    }
    Ok(report.all_ok())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
