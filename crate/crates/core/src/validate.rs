//! Independent checks: Monte Carlo outage, the quadratic/trace identity and
//! interior-point complexity counts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, EveErrorModel};
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64};
use crate::rng::complex_normal;
use crate::metrics::BeamformingState;
use crate::scenario::ScenarioConfig;
use crate::surrogate::Grid;

/// Empirical outage per user-Eve pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageReport {
    pub probability: Grid,
    /// Binomial standard error of each estimate.
    pub std_error: Grid,
    pub samples: usize,
}

impl OutageReport {
    pub fn max(&self) -> f64 {
        self.probability.iter().flatten().copied().fold(0.0, f64::max)
    }
}

/// Fraction of Eve-error draws for which `log2(1 + SINR_kj) > r_re`.
///
/// Each draw perturbs the stacked direct and reflected Eve estimates by
/// `CN(0, sigma^2 I)`; the legitimate links stay at their estimates.
pub fn mc_outage<R: Rng + ?Sized>(
    state: &BeamformingState,
    estimates: &ChannelSet,
    errors: &EveErrorModel,
    r_re: f64,
    noise_eve: f64,
    samples: usize,
    rng: &mut R,
) -> Result<OutageReport> {
    if samples == 0 {
        return Err(Error::out_of_range("samples", "must be positive"));
    }
    let (kn, jn) = (state.num_users(), estimates.num_eves());
    if errors.sigma_d.len() != jn || errors.sigma_f.len() != jn {
        return Err(Error::Dimension("error model and channel set disagree on Eve count".into()));
    }
    let (mb, rn) = (estimates.tx_dim(), estimates.ris_dim());
    if state.theta.len() != rn || state.w.iter().any(|w| w.len() != mb) {
        return Err(Error::Dimension("state does not match the channel dimensions".into()));
    }
    // h_e = h_d + G^H diag(theta) f
    let mut gt = estimates.g.adjoint();
    for n in 0..rn {
        let t = state.theta[n];
        gt.column_mut(n).iter_mut().for_each(|x| *x *= t);
    }
    let streams: Vec<CVec> = (0..kn).flat_map(|k| state.an_streams(k)).collect();
    let threshold = 2f64.powf(r_re) - 1.0;
    let mut hits = vec![vec![0usize; jn]; kn];
    let mut h = CVec::zeros(mb);
    let mut f = CVec::zeros(rn);
    for j in 0..jn {
        let (sd, sf) = (errors.sigma_d[j], errors.sigma_f[j]);
        for _ in 0..samples {
            for i in 0..mb {
                h[i] = estimates.h_de[j][i] + complex_normal(rng) * sd;
            }
            for i in 0..rn {
                f[i] = estimates.f_e[j][i] + complex_normal(rng) * sf;
            }
            let he = &h + &gt * &f;
            let gains: Vec<f64> = state.w.iter().map(|w| he.dotc(w).norm_sqr()).collect();
            let an: f64 = streams.iter().map(|s| he.dotc(s).norm_sqr()).sum();
            let total: f64 = gains.iter().sum::<f64>() + an;
            for k in 0..kn {
                let sinr = gains[k] / (total - gains[k] + noise_eve);
                if sinr > threshold {
                    hits[k][j] += 1;
                }
            }
        }
    }
    let n = samples as f64;
    let probability: Grid = hits.iter().map(|r| r.iter().map(|&c| c as f64 / n).collect()).collect();
    let std_error = probability
        .iter()
        .map(|r| r.iter().map(|&p| (p * (1.0 - p) / n).sqrt()).collect())
        .collect();
    Ok(OutageReport {
        probability,
        std_error,
        samples,
    })
}

/// `(|theta_hat^H H w|^2, theta_hat^H H w w^H H^H theta_hat)` computed independently.
pub fn quadratic_form_oracle(theta_hat: &CVec, h: &CMat, w: &CVec) -> Result<(f64, f64)> {
    if h.nrows() != theta_hat.len() || h.ncols() != w.len() {
        return Err(Error::Dimension(format!(
            "H is {}x{} with theta_hat of {} and w of {}",
            h.nrows(),
            h.ncols(),
            theta_hat.len(),
            w.len()
        )));
    }
    let mut scalar = C64::new(0.0, 0.0);
    for r in 0..h.nrows() {
        for c in 0..h.ncols() {
            scalar += theta_hat[r].conj() * h[(r, c)] * w[c];
        }
    }
    let lifted = h * (w * w.adjoint()) * h.adjoint();
    let trace = (theta_hat.adjoint() * lifted * theta_hat)[(0, 0)].re;
    Ok((scalar.norm_sqr(), trace))
}

/// Subproblem families whose interior-point cost can be estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subproblem {
    P4,
    P6,
    RobustP4,
    RobustP6,
}

/// Predicted interior-point cost of one subproblem solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityEstimate {
    /// Barrier parameter.
    pub delta: f64,
    pub n0: f64,
    pub n1: f64,
    pub n2: f64,
    /// `sqrt(delta) ln(1/omega)`
    pub iterations: f64,
    /// `n0 n1 + n0^2 n2 + n0^3`
    pub per_iteration: f64,
    pub total: f64,
}

pub fn complexity_estimate(cfg: &ScenarioConfig, which: Subproblem, omega: f64) -> Result<ComplexityEstimate> {
    if !(omega > 0.0 && omega < 1.0) {
        return Err(Error::out_of_range("omega", format!("must lie in (0, 1), got {omega}")));
    }
    let (b, k, j) = (cfg.num_bs as f64, cfg.num_users as f64, cfg.num_eves as f64);
    let mb = cfg.tx_dim() as f64;
    let rn = cfg.ris_dim() as f64;
    let q = rn + 1.0;
    let s = mb + rn;
    let (delta, n0, n1, n2) = match which {
        Subproblem::P4 => (
            b + 2.0 * mb * k + 3.0 * k + 5.0 * j * k,
            2.0 * k * mb * mb,
            6.0 * k + 2.0 * mb.powi(3) * k + 11.0 * j * k,
            2.0 * k + 2.0 * mb * mb * k + 7.0 * j * k,
        ),
        Subproblem::P6 => (
            2.0 + 2.0 * rn + 3.0 * k + 5.0 * k * j,
            q * q,
            5.0 * k + 11.0 * k * j + q + q.powi(3),
            k + 7.0 * k * j + q + q * q,
        ),
        Subproblem::RobustP4 => (
            b + 3.0 * k + 2.0 * mb * k + (10.0 + 3.0 * mb + 3.0 * rn) * k * j,
            2.0 * k * mb * mb,
            6.0 * k
                + 2.0 * mb.powi(3) * k
                + 12.0 * k * j
                + s.powi(3) * k * j
                + 2.0 * (s + 1.0).powi(3) * k * j
                + (s * s + s).powi(2) * k * j,
            2.0 * k + 8.0 * k * j + 2.0 * k * mb * mb + s * s * k * j + 2.0 * (s + 1.0).powi(2) * k * j,
        ),
        Subproblem::RobustP6 => (
            2.0 + 2.0 * rn + 3.0 * k + (10.0 + 3.0 * mb + 3.0 * rn) * k * j,
            q * q,
            q + q.powi(3)
                + 5.0 * k
                + 12.0 * k * j
                + s.powi(3) * k * j
                + 2.0 * (s + 1.0).powi(3) * k * j
                + (s * s + s).powi(2) * k * j,
            q + q * q + k + 8.0 * k * j + 2.0 * (s + 1.0).powi(2) * k * j + s * s * k * j,
        ),
    };
    let iterations = delta.sqrt() * (1.0 / omega).ln();
    let per_iteration = n0 * n1 + n0 * n0 * n2 + n0.powi(3);
    Ok(ComplexityEstimate {
        delta,
        n0,
        n1,
        n2,
        iterations,
        per_iteration,
        total: iterations * per_iteration,
    })
}
