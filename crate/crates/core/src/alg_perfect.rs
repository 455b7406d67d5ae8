//! Alternating optimization with perfect CSI of every link.

use crate::channel::ChannelSet;
use crate::engine::{self, AlgorithmOptions, Mode, Network, RunOutput};
use crate::error::Result;
use crate::scenario::ScenarioConfig;

pub use crate::engine::{build_beamforming_subproblem, build_phase_subproblem, BeamVars, PhaseVars};

/// Runs the alternating optimization with every channel known.
pub fn run_algorithm1(ch: &ChannelSet, cfg: &ScenarioConfig, opts: &AlgorithmOptions) -> Result<RunOutput> {
    let net = Network::perfect(ch, cfg)?;
    engine::run(&net, Mode::Perfect, opts)
}
