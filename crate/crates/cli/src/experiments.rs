//! Sweep definitions for each experiment.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use ris_see::scenario::{build_scenario, ScenarioConfig};

use crate::schemes::SchemeId;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    Convergence,
    PowerSweep,
    RisElements,
    NumEves,
    NumBs,
    ErrorLevel,
    Fairness,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 7] = [
        ExperimentId::Convergence,
        ExperimentId::PowerSweep,
        ExperimentId::RisElements,
        ExperimentId::NumEves,
        ExperimentId::NumBs,
        ExperimentId::ErrorLevel,
        ExperimentId::Fairness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Convergence => "convergence",
            ExperimentId::PowerSweep => "power_sweep",
            ExperimentId::RisElements => "ris_elements",
            ExperimentId::NumEves => "num_eves",
            ExperimentId::NumBs => "num_bs",
            ExperimentId::ErrorLevel => "error_level",
            ExperimentId::Fairness => "fairness",
        }
    }

    /// Swept scenario key and its values; `None` for single-point experiments.
    pub fn sweep(self) -> Option<(&'static str, Vec<f64>)> {
        match self {
            ExperimentId::Convergence | ExperimentId::Fairness => None,
            ExperimentId::PowerSweep => Some(("pb_dbm", vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0])),
            ExperimentId::RisElements => Some(("elements_per_ris", vec![2.0, 4.0, 6.0, 8.0, 10.0])),
            ExperimentId::NumEves => Some(("num_eves", vec![1.0, 2.0, 3.0])),
            ExperimentId::NumBs => Some(("num_bs", vec![1.0, 2.0, 3.0, 4.0])),
            ExperimentId::ErrorLevel => Some(("sigma_bar", vec![0.0, 0.01, 0.05])),
        }
    }

    /// Scenario overrides implied by the experiment's own node layout.
    pub fn preset_overrides(self) -> Vec<(String, String)> {
        let pairs: &[(&str, &str)] = match self {
            ExperimentId::NumEves => &[("geometry", "eve_sweep")],
            ExperimentId::NumBs => &[("geometry", "bs_sweep")],
            ExperimentId::Fairness => &[("geometry", "fairness"), ("num_users", "3")],
            _ => &[],
        };
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    pub fn default_schemes(self) -> Vec<SchemeId> {
        use SchemeId::*;
        match self {
            ExperimentId::Convergence | ExperimentId::NumEves | ExperimentId::NumBs => {
                vec![Perfect, Imperfect, PerfectNoRis, ImperfectNoRis]
            }
            ExperimentId::PowerSweep | ExperimentId::RisElements => SchemeId::STANDARD.to_vec(),
            ExperimentId::ErrorLevel => vec![Perfect, Imperfect, ImperfectNoRis, ImperfectNoOutage],
            ExperimentId::Fairness => vec![Perfect, Imperfect, Sseem, SseemImperfect, MaxminSse],
        }
    }

    /// One scenario per sweep point, built from the document and overrides.
    ///
    /// Experiment presets come first, the swept key last, so user overrides can
    /// change the layout but not the swept quantity.
    pub fn points(self, document: Option<&str>, overrides: &[(String, String)]) -> Result<Vec<(f64, ScenarioConfig)>, CliError> {
        let mut base = self.preset_overrides();
        base.extend_from_slice(overrides);
        match self.sweep() {
            None => Ok(vec![(0.0, build_scenario(document, &base)?)]),
            Some((key, values)) => values
                .into_iter()
                .map(|v| {
                    let mut all = base.clone();
                    all.push((key.to_string(), format_value(v)));
                    Ok((v, build_scenario(document, &all)?))
                })
                .collect(),
        }
    }
}

fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

impl FromStr for ExperimentId {
    type Err = CliError;

    fn from_str(s: &str) -> Result<ExperimentId, CliError> {
        ExperimentId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| CliError::Usage(format!("unknown experiment `{s}`")))
    }
}

/// Parses `a..b` (exclusive), `a..=b` or a single seed.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Usage(format!("cannot parse seed range `{text}`"));
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
    if let Some((a, b)) = text.split_once("..=") {
        let (a, b) = (num(a)?, num(b)?);
        if a > b {
            return Err(bad());
        }
        Ok((a..=b).collect())
    } else if let Some((a, b)) = text.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        if a >= b {
            return Err(bad());
        }
        Ok((a..b).collect())
    } else {
        Ok(vec![num(text)?])
    }
}

/// Splits `key=value`.
pub fn parse_override(text: &str) -> Result<(String, String), CliError> {
    match text.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(CliError::Usage(format!("override `{text}` is not key=value"))),
    }
}
