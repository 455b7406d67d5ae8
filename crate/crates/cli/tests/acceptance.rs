//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p ris-see-cli --release --test acceptance`.

#[path = "../../core/tests/checks/mod.rs"]
mod checks;

use std::collections::BTreeMap;
use std::process::ExitCode;

use rayon::prelude::*;

use ris_see::channel::{sample_channels, EveErrorModel};
use ris_see::engine::AlgorithmOptions;
use ris_see::rng::{stream, StreamKind};
use ris_see::scenario::ScenarioConfig;
use ris_see::validate::mc_outage;
use ris_see_cli::experiments::ExperimentId;
use ris_see_cli::schemes::{run_scheme, SchemeId, SchemeOutcome};

const SEEDS: u64 = 10;
const SWEEP_SEEDS: u64 = 5;
const BS_SEEDS: u64 = 3;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Verdict {
        Verdict { pass, detail: detail.into() }
    }

    fn from_check(r: Result<String, String>) -> Verdict {
        match r {
            Ok(d) => Verdict::new(true, d),
            Err(e) => Verdict::new(false, e),
        }
    }
}

type Runs = BTreeMap<(u64, SchemeId), Result<SchemeOutcome, String>>;

fn run_all(cfg: &ScenarioConfig, seeds: u64, schemes: &[SchemeId]) -> Runs {
    let opts = AlgorithmOptions::default();
    let jobs: Vec<(u64, SchemeId)> = (0..seeds).flat_map(|s| schemes.iter().map(move |&id| (s, id))).collect();
    jobs.par_iter()
        .map(|&(seed, id)| ((seed, id), run_scheme(&cfg.with_seed(seed), id, &opts).map_err(|e| e.to_string())))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Seed-by-sweep-value table of min-SEE for one scheme; `None` where the run failed.
fn sweep_table(points: &[(f64, ScenarioConfig)], seeds: u64, scheme: SchemeId) -> Vec<Vec<Option<f64>>> {
    let opts = AlgorithmOptions::default();
    let jobs: Vec<(usize, u64)> = (0..points.len()).flat_map(|p| (0..seeds).map(move |s| (p, s))).collect();
    let values: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|&(p, s)| run_scheme(&points[p].1.with_seed(s), scheme, &opts).ok().map(|o| o.min_see))
        .collect();
    (0..seeds as usize)
        .map(|s| (0..points.len()).map(|p| values[p * seeds as usize + s]).collect())
        .collect()
}

fn means(table: &[Vec<Option<f64>>]) -> Option<Vec<f64>> {
    let n = table.first()?.len();
    (0..n)
        .map(|p| {
            let col: Option<Vec<f64>> = table.iter().map(|row| row[p]).collect();
            col.map(|c| c.iter().sum::<f64>() / c.len() as f64)
        })
        .collect()
}

fn fmt(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" ")
}

fn convergence(runs: &Runs) -> Verdict {
    let mut bad = Vec::new();
    let mut slowest = 0;
    let mut longest: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut secs = 0.0;
        for id in [SchemeId::Perfect, SchemeId::Imperfect] {
            let out = match &runs[&(seed, id)] {
                Ok(o) => o,
                Err(e) => {
                    bad.push(format!("{id} seed {seed} failed: {e}"));
                    continue;
                }
            };
            secs += out.secs;
            let z = out.output.trace.z_sequence();
            if let Some(t) = z.windows(2).position(|w| w[1] < w[0] - 1e-5) {
                bad.push(format!("{id} seed {seed} decreases at iteration {}", t + 1));
            }
            match z.windows(2).position(|w| w[1] - w[0] < 1e-3) {
                Some(t) if t + 1 <= 10 => slowest = slowest.max(t + 1),
                Some(t) => bad.push(format!("{id} seed {seed} settles at iteration {}", t + 1)),
                None => bad.push(format!("{id} seed {seed} never settles in {} iterations", z.len() - 1)),
            }
        }
        longest = longest.max(secs);
        if secs >= 600.0 {
            bad.push(format!("seed {seed} took {secs:.0} s"));
        }
    }
    let detail = format!("slowest settling within limit {slowest}, longest seed {longest:.1} s");
    if bad.is_empty() {
        Verdict::new(true, detail)
    } else {
        Verdict::new(false, format!("{}; {detail}", bad.join("; ")))
    }
}

fn ordering(runs: &Runs) -> Verdict {
    let value = |seed, id| runs[&(seed, id)].as_ref().map(|o| o.min_see).ok();
    let mut good = 0;
    let mut misses = Vec::new();
    for seed in 0..SEEDS {
        let ok = match (
            value(seed, SchemeId::Perfect),
            value(seed, SchemeId::Imperfect),
            value(seed, SchemeId::PerfectNoRis),
            value(seed, SchemeId::ImperfectNoRis),
        ) {
            (Some(p), Some(i), Some(pn), Some(inr)) => p >= i && p > pn && i > inr,
            _ => false,
        };
        if ok {
            good += 1;
        } else {
            misses.push(seed.to_string());
        }
    }
    Verdict::new(good >= 9, format!("{good}/{SEEDS} seeds ordered, misses [{}]", misses.join(", ")))
}

fn outage(runs: &Runs) -> Verdict {
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    for seed in 0..SEEDS {
        let out = match &runs[&(seed, SchemeId::Imperfect)] {
            Ok(o) => o,
            Err(e) => {
                bad.push(format!("seed {seed} failed: {e}"));
                continue;
            }
        };
        let cfg = ScenarioConfig::default().with_seed(seed);
        let ch = sample_channels(&cfg).unwrap();
        let errors = EveErrorModel::from_sigma_bar(&ch, cfg.sigma_bar);
        let mut rng = stream(seed, StreamKind::MonteCarlo, 0xABCDE, 1);
        match mc_outage(&out.output.state, &ch, &errors, cfg.redundancy_rate, cfg.noise_eve_mw, 10_000, &mut rng) {
            Ok(rep) => {
                worst = worst.max(rep.max());
                if rep.max() > 0.12 {
                    bad.push(format!("seed {seed} outage {:.4}", rep.max()));
                }
            }
            Err(e) => bad.push(format!("seed {seed}: {e}")),
        }
    }
    let detail = format!("worst outage {worst:.4}");
    if bad.is_empty() {
        Verdict::new(true, detail)
    } else {
        Verdict::new(false, format!("{}; {detail}", bad.join("; ")))
    }
}

fn nondecreasing(v: &[f64], rel: f64) -> bool {
    v.windows(2).all(|w| w[1] >= w[0] - rel * w[0].abs().max(1e-12))
}

fn power_sweep() -> Verdict {
    let points = ExperimentId::PowerSweep.points(None, &[]).unwrap();
    let mut bad = Vec::new();
    let mut lines = Vec::new();
    for id in [SchemeId::Perfect, SchemeId::Imperfect, SchemeId::MaxminSse] {
        let Some(m) = means(&sweep_table(&points, SWEEP_SEEDS, id)) else {
            bad.push(format!("{id} has failed runs"));
            continue;
        };
        lines.push(format!("{id} [{}]", fmt(&m)));
        if id == SchemeId::MaxminSse {
            let peak = (0..m.len()).max_by(|&a, &b| m[a].total_cmp(&m[b])).unwrap();
            let falls = peak + 1 < m.len() && m[peak..].windows(2).all(|w| w[1] < w[0]);
            if !falls {
                bad.push(format!("{id} does not fall from its peak"));
            }
        } else {
            // Points up to 20 dBm rise; 25 and 30 dBm stay within 2% of 20 dBm.
            let knee = points.iter().position(|(v, _)| *v == 20.0).unwrap();
            if !nondecreasing(&m[..=knee], 1e-3) {
                bad.push(format!("{id} decreases below 20 dBm"));
            }
            for (p, (v, _)) in points.iter().enumerate().skip(knee + 1) {
                let rel = (m[p] - m[knee]) / m[knee];
                if rel.abs() > 0.02 {
                    bad.push(format!("{id} at {v} dBm is {:+.1}% from 20 dBm", 100.0 * rel));
                }
            }
        }
    }
    let detail = format!("{SWEEP_SEEDS}-seed means {}", lines.join(", "));
    if bad.is_empty() {
        Verdict::new(true, detail)
    } else {
        Verdict::new(false, format!("{}; {detail}", bad.join("; ")))
    }
}

fn eve_sweep() -> Verdict {
    let points = ExperimentId::NumEves.points(None, &[]).unwrap();
    let mut bad = Vec::new();
    for id in [SchemeId::Perfect, SchemeId::Imperfect] {
        for (seed, row) in sweep_table(&points, SWEEP_SEEDS, id).iter().enumerate() {
            let values: Option<Vec<f64>> = row.iter().copied().collect();
            match values {
                None => bad.push(format!("{id} seed {seed} has a failed run")),
                Some(v) => {
                    let rev: Vec<f64> = v.iter().rev().copied().collect();
                    if !nondecreasing(&rev, 1e-3) {
                        bad.push(format!("{id} seed {seed} [{}]", fmt(&v)));
                    }
                }
            }
        }
    }
    if bad.is_empty() {
        Verdict::new(true, format!("nonincreasing in J on all {SWEEP_SEEDS} seeds for perfect and imperfect"))
    } else {
        Verdict::new(false, format!("rises with J: {}", bad.join("; ")))
    }
}

fn unimodal(v: &[f64]) -> bool {
    let peak = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
    v[..=peak].windows(2).all(|w| w[1] >= w[0]) && v[peak..].windows(2).all(|w| w[1] <= w[0])
}

fn bs_sweep() -> Verdict {
    let points = ExperimentId::NumBs.points(None, &[]).unwrap();
    let mut bad = Vec::new();
    let mut lines = Vec::new();
    for id in [SchemeId::Perfect, SchemeId::Imperfect] {
        match means(&sweep_table(&points, BS_SEEDS, id)) {
            None => bad.push(format!("{id} has failed runs")),
            Some(m) => {
                if !unimodal(&m) {
                    bad.push(format!("{id} is not unimodal"));
                }
                let peak = (0..m.len()).max_by(|&a, &b| m[a].total_cmp(&m[b])).unwrap();
                lines.push(format!("{id} [{}] peak at B={}", fmt(&m), points[peak].0));
            }
        }
    }
    let detail = format!("{BS_SEEDS}-seed means over B=1..4 {}", lines.join(", "));
    if bad.is_empty() {
        Verdict::new(true, detail)
    } else {
        Verdict::new(false, format!("{}; {detail}", bad.join("; ")))
    }
}

fn surrogate_suite() -> Verdict {
    Verdict::from_check((|| {
        checks::surrogates_tight(1000)?;
        checks::surrogates_bound(1000)?;
        checks::rho_matches_numeric(1000)?;
        Ok("tight to 1e-12 and correctly sided over 1000 points each, rho within 1e-9".to_string())
    })())
}

fn robust_suite() -> Verdict {
    Verdict::from_check((|| {
        checks::bti_conservative(50, 100_000)?;
        checks::sprocedure_holds_on_ball(20, 10_000)?;
        checks::svd_exact(200)?;
        checks::sphere_radius_closed_form()?;
        let rel = checks::sphere_radius_mc(1_000_000)?;
        Ok(format!(
            "50 outage triples conservative, no ball violations in 10^4 samples, SVD exact to 1e-9, radius quantile gap {:.3}%",
            100.0 * rel
        ))
    })())
}

fn identity_suite() -> Verdict {
    Verdict::from_check((|| {
        checks::quadratic_trace_forms(1000)?;
        checks::effective_channel_assembly(5, 100)?;
        checks::schur_grid()?;
        let counts = checks::census_lmi_counts()?;
        if counts != [24, 28, 40, 44] {
            return Err(format!("LMI counts {counts:?}"));
        }
        Ok(format!("forms agree to 1e-10, channel assembly to 1e-10, Schur grid exact, LMI counts {counts:?}"))
    })())
}

fn sdr_suite() -> Verdict {
    Verdict::from_check(checks::sdr_quality(20).map(|w| format!("worst ratio to grid optimum {w:.4} over 20 seeds")))
}

fn main() -> ExitCode {
    let defaults = ScenarioConfig::default();
    let runs = run_all(
        &defaults,
        SEEDS,
        &[SchemeId::Perfect, SchemeId::Imperfect, SchemeId::PerfectNoRis, SchemeId::ImperfectNoRis],
    );
    let verdicts = [
        convergence(&runs),
        ordering(&runs),
        outage(&runs),
        power_sweep(),
        eve_sweep(),
        bs_sweep(),
        surrogate_suite(),
        robust_suite(),
        identity_suite(),
        sdr_suite(),
    ];
    let mut failed = 0;
    for (i, v) in verdicts.iter().enumerate() {
        println!("criterion {}: {}: {}", i + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("{} of {} criteria pass", verdicts.len() - failed, verdicts.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
