//! Ground-truth evaluation of SINRs, secrecy rates, power and SEE.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig_desc, outer, trace_re, CMat, CVec, C64};
use crate::scenario::ScenarioConfig;

/// Beamformers, artificial-noise covariances and RIS phases.
///
/// Artificial noise is stored as a covariance because the relaxed solutions
/// need not be rank one; [`BeamformingState::from_vectors`] covers the
/// vector case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformingState {
    pub w: Vec<CVec>,
    pub v: Vec<CMat>,
    pub theta: CVec,
}

impl BeamformingState {
    pub fn new(w: Vec<CVec>, v: Vec<CMat>, theta: CVec) -> Result<BeamformingState> {
        let dim = w.first().map(|x| x.len()).unwrap_or(0);
        if w.len() != v.len() {
            return Err(Error::Dimension(format!("{} beams but {} AN covariances", w.len(), v.len())));
        }
        if w.iter().any(|x| x.len() != dim) || v.iter().any(|m| m.shape() != (dim, dim)) {
            return Err(Error::Dimension("beam and AN dimensions disagree".into()));
        }
        if let Some(bad) = theta.iter().find(|t| (t.norm() - 1.0).abs() > 1e-8) {
            return Err(Error::out_of_range("theta", format!("entry with modulus {}", bad.norm())));
        }
        Ok(BeamformingState { w, v, theta })
    }

    pub fn from_vectors(w: Vec<CVec>, v: Vec<CVec>, theta: CVec) -> Result<BeamformingState> {
        BeamformingState::new(w, v.iter().map(outer).collect(), theta)
    }

    pub fn num_users(&self) -> usize {
        self.w.len()
    }

    /// `[theta; 1]`
    pub fn theta_hat(&self) -> CVec {
        theta_hat(&self.theta)
    }

    pub fn w_lifted(&self) -> Vec<CMat> {
        self.w.iter().map(outer).collect()
    }

    /// Vectors `v_{k,s}` with `sum_s v v^H = V_k`, dropping negligible directions.
    pub fn an_streams(&self, k: usize) -> Vec<CVec> {
        let (vals, vecs) = hermitian_eig_desc(&self.v[k]);
        let top = vals.first().copied().unwrap_or(0.0).max(0.0);
        vals.iter()
            .enumerate()
            .filter(|(_, &l)| l > 1e-12 * top.max(1e-300))
            .map(|(i, &l)| vecs.column(i) * C64::new(l.sqrt(), 0.0))
            .collect()
    }
}

pub fn theta_hat(theta: &CVec) -> CVec {
    let mut out = CVec::from_element(theta.len() + 1, C64::new(1.0, 0.0));
    out.rows_mut(0, theta.len()).copy_from(theta);
    out
}

/// `x^H M x` for Hermitian `M`.
pub fn quad_form(m: &CMat, x: &CVec) -> f64 {
    (x.adjoint() * m * x)[(0, 0)].re
}

/// `sum_{i != k} W_i + sum_i V_i`
pub fn interference_cov(w: &[CMat], v: &[CMat], k: usize) -> CMat {
    let n = w[0].nrows();
    let mut l = CMat::zeros(n, n);
    for (i, wi) in w.iter().enumerate() {
        if i != k {
            l += wi;
        }
    }
    for vi in v {
        l += vi;
    }
    l
}

/// SINR of stream `k` through effective channel `h` (received signal `h^H x`) with lifted beams.
pub fn sinr_lifted(h: &CVec, w: &[CMat], v: &[CMat], k: usize, noise: f64) -> f64 {
    let signal = quad_form(&w[k], h);
    let interf = quad_form(&interference_cov(w, v, k), h);
    (signal / (interf + noise)).max(0.0)
}

/// SINRs of user `k` and of every Eve eavesdropping on `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinrs {
    pub user: f64,
    pub eves: Vec<f64>,
}

fn check_user(ch: &ChannelSet, k: usize, state_users: usize) -> Result<()> {
    if k >= ch.num_users() || k >= state_users {
        return Err(Error::Index(format!("user {k} of {}", ch.num_users().min(state_users))));
    }
    Ok(())
}

/// SINRs in the vector form: powers of `theta_hat^H H w` terms.
pub fn compute_sinrs(ch: &ChannelSet, state: &BeamformingState, cfg: &ScenarioConfig, k: usize) -> Result<Sinrs> {
    check_user(ch, k, state.num_users())?;
    let th = state.theta_hat();
    let streams: Vec<Vec<CVec>> = (0..state.num_users()).map(|i| state.an_streams(i)).collect();
    let eval = |h: &CVec, noise: f64| -> f64 {
        let gain = |x: &CVec| h.dotc(x).norm_sqr();
        let signal = gain(&state.w[k]);
        let mut interf = 0.0;
        for (i, wi) in state.w.iter().enumerate() {
            if i != k {
                interf += gain(wi);
            }
        }
        for s in streams.iter().flatten() {
            interf += gain(s);
        }
        signal / (interf + noise)
    };
    let user = eval(&ch.user_effective(k, &th), cfg.noise_user_mw);
    let eves = (0..ch.num_eves())
        .map(|j| eval(&ch.eve_effective(j, &th), cfg.noise_eve_mw))
        .collect();
    Ok(Sinrs { user, eves })
}

/// SINRs in the lifted trace form.
pub fn compute_sinrs_lifted(
    ch: &ChannelSet,
    w: &[CMat],
    v: &[CMat],
    theta_hat: &CVec,
    cfg: &ScenarioConfig,
    k: usize,
) -> Result<Sinrs> {
    check_user(ch, k, w.len())?;
    let user = sinr_lifted(&ch.user_effective(k, theta_hat), w, v, k, cfg.noise_user_mw);
    let eves = (0..ch.num_eves())
        .map(|j| sinr_lifted(&ch.eve_effective(j, theta_hat), w, v, k, cfg.noise_eve_mw))
        .collect();
    Ok(Sinrs { user, eves })
}

/// `[log2(1+gamma_k) - max_j log2(1+gamma_kj)]^+`
pub fn secrecy_rate(user: f64, eves: &[f64]) -> f64 {
    let leak = eves.iter().map(|&g| (1.0 + g).log2()).fold(0.0, f64::max);
    ((1.0 + user).log2() - leak).max(0.0)
}

/// SEE from a secrecy rate and the user's transmit power in mW.
pub fn see_from_parts(rate: f64, tx_power_mw: f64, cfg: &ScenarioConfig) -> f64 {
    rate / ((tx_power_mw / cfg.zeta + cfg.circuit_power()) / 1000.0)
}

pub fn see_value(ch: &ChannelSet, state: &BeamformingState, cfg: &ScenarioConfig, k: usize) -> Result<f64> {
    let s = compute_sinrs(ch, state, cfg, k)?;
    let power = state.w[k].norm_squared() + trace_re(&state.v[k]);
    Ok(see_from_parts(secrecy_rate(s.user, &s.eves), power, cfg))
}

pub fn see_values(ch: &ChannelSet, state: &BeamformingState, cfg: &ScenarioConfig) -> Result<Vec<f64>> {
    (0..state.num_users()).map(|k| see_value(ch, state, cfg, k)).collect()
}

pub fn min_see(ch: &ChannelSet, state: &BeamformingState, cfg: &ScenarioConfig) -> Result<f64> {
    Ok(see_values(ch, state, cfg)?.into_iter().fold(f64::INFINITY, f64::min))
}

/// Per-user SEE for lifted beams.
pub fn see_values_lifted(
    ch: &ChannelSet,
    w: &[CMat],
    v: &[CMat],
    theta_hat: &CVec,
    cfg: &ScenarioConfig,
) -> Result<Vec<f64>> {
    (0..w.len())
        .map(|k| {
            let s = compute_sinrs_lifted(ch, w, v, theta_hat, cfg, k)?;
            let power = trace_re(&w[k]) + trace_re(&v[k]);
            Ok(see_from_parts(secrecy_rate(s.user, &s.eves), power, cfg))
        })
        .collect()
}

/// Power of BS `b` in mW: the squared norm of its antenna block summed over all beams.
pub fn per_bs_power(state: &BeamformingState, antennas: usize, b: usize) -> Result<f64> {
    let dim = state.w.first().map(|x| x.len()).unwrap_or(0);
    if antennas == 0 || (b + 1) * antennas > dim {
        return Err(Error::Index(format!("BS {b} with {antennas} antennas in a {dim}-dimensional beam")));
    }
    let lifted = state.w_lifted();
    Ok(block_power(&lifted, &state.v, antennas, b))
}

/// `sum_k Tr(B_b W_k) + Tr(B_b V_k)`
pub fn block_power(w: &[CMat], v: &[CMat], antennas: usize, b: usize) -> f64 {
    let range = b * antennas..(b + 1) * antennas;
    w.iter()
        .chain(v)
        .map(|m| range.clone().map(|i| m[(i, i)].re).sum::<f64>())
        .sum()
}
