//! Comparison schemes: the proposed designs, their ablations and baselines.

use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use ris_see::alg_perfect::run_algorithm1;
use ris_see::alg_robust::run_algorithm2;
use ris_see::channel::{sample_channels, EveErrorModel};
use ris_see::engine::{AlgorithmOptions, RunOutput, Scheme};
use ris_see::scenario::ScenarioConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    /// Max-min SEE with every Eve channel known.
    Perfect,
    /// Max-min SEE robust to bounded Eve errors with the outage constraint.
    Imperfect,
    PerfectNoRis,
    ImperfectNoRis,
    /// Sum of per-user SEE, perfect CSI.
    Sseem,
    /// Sum of per-user SEE, robust design.
    SseemImperfect,
    /// Max-min secrecy rate, perfect CSI.
    MaxminSse,
    /// Robust design without the outage constraint.
    ImperfectNoOutage,
}

impl SchemeId {
    pub const ALL: [SchemeId; 8] = [
        SchemeId::Perfect,
        SchemeId::Imperfect,
        SchemeId::PerfectNoRis,
        SchemeId::ImperfectNoRis,
        SchemeId::Sseem,
        SchemeId::SseemImperfect,
        SchemeId::MaxminSse,
        SchemeId::ImperfectNoOutage,
    ];

    /// The six series compared across the sweeps.
    pub const STANDARD: [SchemeId; 6] = [
        SchemeId::Perfect,
        SchemeId::Imperfect,
        SchemeId::PerfectNoRis,
        SchemeId::ImperfectNoRis,
        SchemeId::Sseem,
        SchemeId::MaxminSse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeId::Perfect => "perfect",
            SchemeId::Imperfect => "imperfect",
            SchemeId::PerfectNoRis => "perfect_no_ris",
            SchemeId::ImperfectNoRis => "imperfect_no_ris",
            SchemeId::Sseem => "sseem",
            SchemeId::SseemImperfect => "sseem_imperfect",
            SchemeId::MaxminSse => "maxmin_sse",
            SchemeId::ImperfectNoOutage => "imperfect_no_outage",
        }
    }

    pub fn robust(self) -> bool {
        matches!(
            self,
            SchemeId::Imperfect | SchemeId::ImperfectNoRis | SchemeId::SseemImperfect | SchemeId::ImperfectNoOutage
        )
    }

    pub fn uses_ris(self) -> bool {
        !matches!(self, SchemeId::PerfectNoRis | SchemeId::ImperfectNoRis)
    }

    pub fn objective(self) -> Scheme {
        match self {
            SchemeId::Sseem | SchemeId::SseemImperfect => Scheme::SumSee,
            SchemeId::MaxminSse => Scheme::MaxMinSse,
            _ => Scheme::MaxMinSee,
        }
    }
}

impl FromStr for SchemeId {
    type Err = CliError;

    fn from_str(s: &str) -> Result<SchemeId, CliError> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| CliError::Usage(format!("unknown scheme `{s}`")))
    }
}

impl std::fmt::Display for SchemeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Outcome of one scheme on one channel realization.
#[derive(Debug, Clone)]
pub struct SchemeOutcome {
    /// Smallest per-user SEE; robust schemes report the worst case over the
    /// uncertainty ball.
    pub min_see: f64,
    pub sum_see: f64,
    pub iters: usize,
    pub secs: f64,
    pub converged: bool,
    pub output: RunOutput,
}

/// Runs `scheme` on the realization selected by `cfg.rng_seed`.
///
/// Every scheme draws the same channels for a given seed; the no-RIS variants
/// simply drop the reflected links.
pub fn run_scheme(cfg: &ScenarioConfig, scheme: SchemeId, base: &AlgorithmOptions) -> Result<SchemeOutcome, CliError> {
    let cfg = if scheme.uses_ris() { cfg.clone() } else { cfg.without_ris() };
    let mut opts = base.clone();
    opts.scheme = scheme.objective();
    opts.seed = cfg.rng_seed;
    if scheme == SchemeId::ImperfectNoOutage {
        opts.use_bti = false;
    }
    let started = Instant::now();
    let ch = sample_channels(&cfg)?;
    let output = if scheme.robust() {
        let errors = EveErrorModel::from_sigma_bar(&ch, cfg.sigma_bar);
        run_algorithm2(&ch, &errors, &cfg, &opts)?
    } else {
        run_algorithm1(&ch, &cfg, &opts)?
    };
    let secs = started.elapsed().as_secs_f64();
    let see = if scheme.robust() { &output.see_model } else { &output.see };
    let min_see = see.iter().copied().fold(f64::INFINITY, f64::min);
    let sum_see = see.iter().sum();
    Ok(SchemeOutcome {
        min_see,
        sum_see,
        iters: output.trace.records.len(),
        secs,
        converged: output.trace.converged,
        output,
    })
}
