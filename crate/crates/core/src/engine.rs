//! Alternating optimization shared by the perfect- and imperfect-CSI algorithms.
//!
//! All programs are posed on a unit-noise copy of the network: user links are
//! divided by the user noise standard deviation and Eve links by the Eve one,
//! so beamformers and AN covariances keep their physical units (mW).

use std::f64::consts::LN_2;
use std::time::Instant;

use log::{debug, info};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alg_robust::{
    ball_extreme, bti_constraints, bti_margin, bti_minimal_slacks, build_dk, lift_quadratic, outage_quadratic,
    sandwich, sphere_radius, sprocedure_lmi, stacked_estimate, theta_from_qhat, BallSide, SvdFactors,
};
use crate::channel::{ChannelSet, EveErrorModel};
use crate::conic::{
    project_phases, psd_factor, sample_cn, solve, ConicProgram, ConstraintClass, Env, MatrixId, RealAffine, ScalarId,
    SolverOptions, Var,
};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig_desc, hermitian_part, min_eigenvalue_herm, outer, trace_product_re, trace_re, CMat, CVec, C64};
use crate::metrics::{interference_cov, quad_form, see_values, theta_hat, BeamformingState};
use crate::rng::{stream, StreamKind};
use crate::scenario::ScenarioConfig;
use crate::surrogate::{grid, AuxiliaryState, Grid};
use crate::validate::mc_outage;

/// Objective of the alternating optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Maximize the minimum secrecy energy efficiency.
    MaxMinSee,
    /// Maximize the sum of per-user secrecy energy efficiencies.
    SumSee,
    /// Maximize the minimum secrecy rate, ignoring power.
    MaxMinSse,
}

/// Channel-knowledge model for the Eve links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Perfect,
    Robust,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmOptions {
    /// Stop once the objective gains no more than this in an outer iteration.
    pub tau: f64,
    pub max_iters: usize,
    /// Gaussian randomization draws per extraction.
    pub trials: usize,
    /// `l2 / l1` below which a relaxed matrix counts as rank one.
    pub rank_tol: f64,
    pub scheme: Scheme,
    pub solver: SolverOptions,
    /// Seed of the initialization and randomization streams.
    pub seed: u64,
    /// Max-min secrecy-rate iterations run first when some secrecy rate is zero.
    pub phase1_iters: usize,
    /// Monte Carlo draws for the per-iteration outage column (robust only, 0 disables).
    pub outage_samples: usize,
    /// Emit the Bernstein-type outage triples (robust only).
    pub use_bti: bool,
    /// Emit the sphere-bound S-procedure blocks (robust only); when off the
    /// Eve SINR chain is posed at the estimates.
    pub use_sprocedure: bool,
    /// Add a hard cap `log2(1+SINR_eve) <= R_re` to the perfect-CSI programs.
    pub rate_cap: bool,
    pub init_attempts: usize,
}

impl Default for AlgorithmOptions {
    fn default() -> Self {
        AlgorithmOptions {
            tau: 1e-3,
            max_iters: 30,
            trials: 100,
            rank_tol: 1e-4,
            scheme: Scheme::MaxMinSee,
            solver: SolverOptions::default(),
            seed: 0,
            phase1_iters: 10,
            outage_samples: 10_000,
            use_bti: true,
            use_sprocedure: true,
            rate_cap: false,
            init_attempts: 5,
        }
    }
}

impl AlgorithmOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::out_of_range("tau", "must be positive"));
        }
        if self.max_iters == 0 || self.trials == 0 || self.init_attempts == 0 {
            return Err(Error::out_of_range("max_iters/trials/init_attempts", "must be positive"));
        }
        if !(self.rank_tol > 0.0) {
            return Err(Error::out_of_range("rank_tol", "must be positive"));
        }
        Ok(())
    }
}

/// Unit-noise view of a network with its Eve uncertainty description.
#[derive(Debug, Clone)]
pub struct Network {
    pub cfg: ScenarioConfig,
    /// Channels in physical units (estimates for the Eve links).
    pub raw: ChannelSet,
    /// Channels divided by the noise standard deviations.
    pub ch: ChannelSet,
    pub raw_errors: EveErrorModel,
    /// Error standard deviations on the unit-noise scale, in the per-Eve frame.
    pub errors: EveErrorModel,
    /// `[h_de; f_e / t_j]` per Eve on the unit-noise scale.
    pub x_tilde: Vec<CVec>,
    /// Per-Eve factor `t_j` moved from the reflected estimate onto the cascade,
    /// chosen so both error families have the same per-entry variance.
    pub reflect_scale: Vec<f64>,
    pub psi: f64,
    /// Squared ball radius per Eve.
    pub radius_sq: Vec<f64>,
}

impl Network {
    pub fn perfect(ch: &ChannelSet, cfg: &ScenarioConfig) -> Result<Network> {
        Network::robust(ch, &EveErrorModel::zero(ch.num_eves()), cfg)
    }

    /// Expresses a lifted `(MB+RN)`-square quadratic in Eve `j`'s frame,
    /// where it acts on `x_tilde[j]`.
    pub fn frame(&self, j: usize, c: &CMat) -> CMat {
        let t = self.reflect_scale[j];
        let mb = self.tx_dim();
        let mut out = c.clone();
        for r in 0..out.nrows() {
            for col in 0..out.ncols() {
                let f = if r >= mb { t } else { 1.0 } * if col >= mb { t } else { 1.0 };
                out[(r, col)] *= f;
            }
        }
        out
    }

    pub fn robust(estimates: &ChannelSet, errors: &EveErrorModel, cfg: &ScenarioConfig) -> Result<Network> {
        cfg.validate()?;
        let ch = estimates;
        if ch.num_users() != cfg.num_users
            || ch.num_eves() != cfg.num_eves
            || ch.tx_dim() != cfg.tx_dim()
            || ch.ris_dim() != cfg.ris_dim()
        {
            return Err(Error::Dimension(format!(
                "channels have K={}, J={}, MB={}, RN={} but the scenario has K={}, J={}, MB={}, RN={}",
                ch.num_users(),
                ch.num_eves(),
                ch.tx_dim(),
                ch.ris_dim(),
                cfg.num_users,
                cfg.num_eves,
                cfg.tx_dim(),
                cfg.ris_dim()
            )));
        }
        if errors.sigma_d.len() != ch.num_eves() || errors.sigma_f.len() != ch.num_eves() {
            return Err(Error::Dimension("error model and channel set disagree on Eve count".into()));
        }
        let su = cfg.noise_user_mw.sqrt();
        let se = cfg.noise_eve_mw.sqrt();
        let scaled = ch.scaled(su, se);
        let mut norm_errors = errors.scaled(1.0 / se);
        let reflect_scale: Vec<f64> = (0..ch.num_eves())
            .map(|j| {
                let (sd, sf) = (norm_errors.sigma_d[j], norm_errors.sigma_f[j]);
                if sd > 0.0 && sf > 0.0 {
                    sf / sd
                } else {
                    1.0
                }
            })
            .collect();
        for (j, t) in reflect_scale.iter().enumerate() {
            norm_errors.sigma_f[j] /= t;
        }
        let x_tilde: Vec<CVec> = (0..ch.num_eves())
            .map(|j| stacked_estimate(&scaled.h_de[j], &scaled.f_e[j].unscale(reflect_scale[j])))
            .collect();
        let (mb, rn) = (ch.tx_dim(), ch.ris_dim());
        let psi = sphere_radius(cfg.phi_outage, mb + rn)?;
        let radius_sq = (0..ch.num_eves())
            .map(|j| {
                let energy = mb as f64 * norm_errors.sigma_d[j].powi(2) + rn as f64 * norm_errors.sigma_f[j].powi(2);
                psi * psi * energy / (mb + rn) as f64
            })
            .collect();
        Ok(Network {
            cfg: cfg.clone(),
            raw: ch.clone(),
            ch: scaled,
            raw_errors: errors.clone(),
            errors: norm_errors,
            x_tilde,
            reflect_scale,
            psi,
            radius_sq,
        })
    }

    pub fn num_users(&self) -> usize {
        self.ch.num_users()
    }

    pub fn num_eves(&self) -> usize {
        self.ch.num_eves()
    }

    pub fn tx_dim(&self) -> usize {
        self.ch.tx_dim()
    }

    pub fn ris_dim(&self) -> usize {
        self.ch.ris_dim()
    }

    /// Power consumption of a user in W given its beam and AN powers in mW.
    pub fn denom_watts(&self, trw: f64, trv: f64) -> f64 {
        ((trw + trv) / self.cfg.zeta + self.cfg.circuit_power()) / 1000.0
    }

    fn total_power(&self) -> f64 {
        self.cfg.num_bs as f64 * self.cfg.pb_mw
    }
}

/// Relaxed iterate: lifted beams, AN covariances and phases.
#[derive(Debug, Clone, PartialEq)]
pub struct Lifted {
    pub w: Vec<CMat>,
    pub v: Vec<CMat>,
    pub theta: CVec,
}

impl Lifted {
    pub fn from_state(state: &BeamformingState) -> Lifted {
        Lifted {
            w: state.w_lifted(),
            v: state.v.clone(),
            theta: state.theta.clone(),
        }
    }
}

/// Exact SINR bookkeeping at a lifted point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub gamma: Vec<f64>,
    /// `h^H L_k h` at each user.
    pub interf: Vec<f64>,
    /// Eve signal power (worst case over the ball in robust mode).
    pub eve_signal: Grid,
    /// Eve interference (best case over the ball in robust mode), without noise.
    pub eve_interf: Grid,
    pub beta: Grid,
    /// `log2(1+gamma_k) - log2(1+beta_kj)`
    pub f: Grid,
    /// Power consumption in W.
    pub denom: Vec<f64>,
    /// Smallest scaled margin of the outage triples; `+inf` when not applicable.
    pub bti_margin: f64,
}

impl Evaluation {
    /// `min_j f_kj`
    pub fn rate(&self, k: usize) -> f64 {
        self.f[k].iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Value ranked by the alternating loop; monotone in the reported objective.
    pub fn score(&self, scheme: Scheme) -> f64 {
        let k = self.gamma.len();
        match scheme {
            Scheme::MaxMinSee => (0..k).map(|k| self.rate(k) / self.denom[k]).fold(f64::INFINITY, f64::min),
            Scheme::SumSee => (0..k).map(|k| (self.rate(k) / self.denom[k]).max(0.0)).sum(),
            Scheme::MaxMinSse => (0..k).map(|k| self.rate(k)).fold(f64::INFINITY, f64::min),
        }
    }

    /// Objective with secrecy rates clipped at zero.
    pub fn objective(&self, scheme: Scheme) -> f64 {
        match scheme {
            Scheme::SumSee => self.score(scheme),
            _ => self.score(scheme).max(0.0),
        }
    }

    pub fn all_positive(&self) -> bool {
        self.f.iter().flatten().all(|&f| f > 1e-6)
    }
}

const BTI_TOL: f64 = 1e-6;

/// Exact objective ingredients at `(W, V, theta)`.
pub fn evaluate(net: &Network, mode: Mode, opts: &AlgorithmOptions, x: &Lifted) -> Evaluation {
    let ch = &net.ch;
    let (kn, jn) = (net.num_users(), net.num_eves());
    let th = theta_hat(&x.theta);
    let mut out = Evaluation {
        gamma: vec![0.0; kn],
        interf: vec![0.0; kn],
        eve_signal: grid(kn, jn, 0.0),
        eve_interf: grid(kn, jn, 0.0),
        beta: grid(kn, jn, 0.0),
        f: grid(kn, jn, 0.0),
        denom: vec![0.0; kn],
        bti_margin: f64::INFINITY,
    };
    let g = &ch.g;
    let lift = |m: &CMat| lift_quadratic(m, g, &x.theta, &sandwich(&(g * m * g.adjoint()), &x.theta));
    for k in 0..kn {
        let l = interference_cov(&x.w, &x.v, k);
        let h = ch.user_effective(k, &th);
        let s = quad_form(&x.w[k], &h).max(0.0);
        let i = quad_form(&l, &h).max(0.0);
        out.gamma[k] = s / (i + 1.0);
        out.interf[k] = i;
        out.denom[k] = net.denom_watts(trace_re(&x.w[k]), trace_re(&x.v[k]));
        let robust = mode == Mode::Robust && opts.use_sprocedure;
        let (cw, cl) = if robust { (lift(&x.w[k]), lift(&l)) } else { (CMat::zeros(0, 0), CMat::zeros(0, 0)) };
        let ld = if mode == Mode::Robust && opts.use_bti {
            Some(lift(&build_dk(&x.w, &x.v, k, net.cfg.redundancy_rate).expect("user index in range")))
        } else {
            None
        };
        for j in 0..jn {
            let (top, bottom) = if robust {
                let xt = &net.x_tilde[j];
                let r2 = net.radius_sq[j];
                (
                    ball_extreme(&net.frame(j, &cw), xt, r2, true).max(0.0),
                    ball_extreme(&net.frame(j, &cl), xt, r2, false).max(0.0) + 1.0,
                )
            } else {
                let he = ch.eve_effective(j, &th);
                (quad_form(&x.w[k], &he).max(0.0), quad_form(&l, &he).max(0.0) + 1.0)
            };
            out.eve_signal[k][j] = top;
            out.eve_interf[k][j] = bottom - 1.0;
            out.beta[k][j] = top / bottom;
            out.f[k][j] = (1.0 + out.gamma[k]).log2() - (1.0 + out.beta[k][j]).log2();
            if let Some(ld) = &ld {
                let (a, u, c) = outage_quadratic(
                    &net.frame(j, ld),
                    &net.x_tilde[j],
                    net.tx_dim(),
                    net.errors.sigma_d[j],
                    net.errors.sigma_f[j],
                    net.cfg.redundancy_rate,
                );
                let (lambda, _) = bti_minimal_slacks(&a, &u);
                let scale = 1.0 + c.abs() + trace_re(&a).abs() + lambda;
                out.bti_margin = out.bti_margin.min(bti_margin(&a, &u, c, net.cfg.phi_outage) / scale);
            }
        }
    }
    out
}

fn admissible(eval: &Evaluation) -> bool {
    eval.bti_margin >= -BTI_TOL
}

/// Expansion points refreshed at the current iterate; every surrogate is tight there.
pub fn refresh_auxiliary(net: &Network, mode: Mode, scheme: Scheme, eval: &Evaluation) -> AuxiliaryState {
    let (kn, jn) = (net.num_users(), net.num_eves());
    let mut aux = AuxiliaryState::zeros(kn, jn);
    for k in 0..kn {
        aux.alpha[k] = eval.gamma[k].max(1e-6);
        aux.delta[k] = eval.interf[k] + 1.0;
        for j in 0..jn {
            let beta = eval.beta[k][j];
            aux.beta[k][j] = beta;
            aux.beta_prev[k][j] = beta;
            match mode {
                Mode::Perfect => {
                    aux.varsigma[k][j] = (beta * eval.eve_interf[k][j]).sqrt();
                    aux.chi[k][j] = aux.varsigma[k][j].powi(2);
                }
                Mode::Robust => {
                    aux.varpi[k][j] = eval.eve_signal[k][j];
                    aux.chi[k][j] = eval.eve_interf[k][j] + 1.0;
                    aux.varsigma[k][j] = eval.eve_signal[k][j].sqrt();
                }
            }
            let f = eval.f[k][j];
            aux.rho[k][j] = if scheme != Scheme::MaxMinSse && f > 0.0 { f.sqrt() / eval.denom[k] } else { 0.0 };
        }
    }
    aux.z = eval.objective(scheme);
    aux
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Which {
    W,
    L,
    D,
}

/// Variable-dependent quantities of one subproblem.
trait Side {
    fn deps(&self, which: Which, k: usize) -> Vec<Var>;
    /// `h^H M h` at user `k` for `M = W_k` or `L_k`.
    fn user_quad(&self, e: &Env, which: Which, k: usize) -> f64;
    fn eve_quad(&self, e: &Env, which: Which, k: usize, j: usize) -> f64;
    /// `P^H M P` on the stacked Eve uncertainty.
    fn lifted(&self, e: &Env, which: Which, k: usize) -> CMat;
    fn denom_deps(&self, k: usize) -> Vec<Var>;
    fn denom(&self, e: &Env, k: usize) -> f64;
    fn denom_fixed(&self) -> bool;
}

struct BeamSide<'a> {
    net: &'a Network,
    theta: CVec,
    w: Vec<MatrixId>,
    v: Vec<MatrixId>,
    h_user: Vec<CVec>,
    h_eve: Vec<CVec>,
}

impl BeamSide<'_> {
    fn matrix(&self, e: &Env, which: Which, k: usize) -> CMat {
        let w: Vec<CMat> = self.w.iter().map(|&id| e.matrix(id)).collect();
        let v: Vec<CMat> = self.v.iter().map(|&id| e.matrix(id)).collect();
        match which {
            Which::W => w[k].clone(),
            Which::L => interference_cov(&w, &v, k),
            Which::D => build_dk(&w, &v, k, self.net.cfg.redundancy_rate).expect("user index in range"),
        }
    }
}

impl Side for BeamSide<'_> {
    fn deps(&self, which: Which, k: usize) -> Vec<Var> {
        let mut out: Vec<Var> = Vec::new();
        for (i, &id) in self.w.iter().enumerate() {
            let used = match which {
                Which::W => i == k,
                Which::L => i != k,
                Which::D => true,
            };
            if used {
                out.push(id.into());
            }
        }
        if which != Which::W {
            out.extend(self.v.iter().map(|&id| Var::from(id)));
        }
        out
    }

    fn user_quad(&self, e: &Env, which: Which, k: usize) -> f64 {
        quad_form(&self.matrix(e, which, k), &self.h_user[k])
    }

    fn eve_quad(&self, e: &Env, which: Which, k: usize, j: usize) -> f64 {
        quad_form(&self.matrix(e, which, k), &self.h_eve[j])
    }

    fn lifted(&self, e: &Env, which: Which, k: usize) -> CMat {
        let m = self.matrix(e, which, k);
        let g = &self.net.ch.g;
        lift_quadratic(&m, g, &self.theta, &sandwich(&(g * &m * g.adjoint()), &self.theta))
    }

    fn denom_deps(&self, k: usize) -> Vec<Var> {
        vec![self.w[k].into(), self.v[k].into()]
    }

    fn denom(&self, e: &Env, k: usize) -> f64 {
        self.net.denom_watts(trace_re(&e.matrix(self.w[k])), trace_re(&e.matrix(self.v[k])))
    }

    fn denom_fixed(&self) -> bool {
        false
    }
}

struct PhaseSide<'a> {
    net: &'a Network,
    q: MatrixId,
    /// `[k]` -> (W, L, D) on the transmit side.
    mats: Vec<[CMat; 3]>,
    svd: Vec<[SvdFactors; 3]>,
    /// `H_k M H_k^H` for M = W_k, L_k.
    user_bar: Vec<[CMat; 2]>,
    /// `[k][j]`
    eve_bar: Vec<Vec<[CMat; 2]>>,
    denom: Vec<f64>,
}

fn slot(which: Which) -> usize {
    match which {
        Which::W => 0,
        Which::L => 1,
        Which::D => 2,
    }
}

impl Side for PhaseSide<'_> {
    fn deps(&self, _: Which, _: usize) -> Vec<Var> {
        vec![self.q.into()]
    }

    fn user_quad(&self, e: &Env, which: Which, k: usize) -> f64 {
        trace_product_re(&self.user_bar[k][slot(which)], &e.matrix(self.q))
    }

    fn eve_quad(&self, e: &Env, which: Which, k: usize, j: usize) -> f64 {
        trace_product_re(&self.eve_bar[k][j][slot(which)], &e.matrix(self.q))
    }

    fn lifted(&self, e: &Env, which: Which, k: usize) -> CMat {
        let q = e.matrix(self.q);
        let s = self.svd[k][slot(which)].eval(&q);
        lift_quadratic(&self.mats[k][slot(which)], &self.net.ch.g, &theta_from_qhat(&q), &s)
    }

    fn denom_deps(&self, _: usize) -> Vec<Var> {
        vec![]
    }

    fn denom(&self, _: &Env, k: usize) -> f64 {
        self.denom[k]
    }

    fn denom_fixed(&self) -> bool {
        true
    }
}

/// Scalar variables shared by both subproblems.
#[derive(Debug, Clone)]
pub struct SecrecyVars {
    pub alpha: Vec<ScalarId>,
    pub delta: Vec<ScalarId>,
    pub u: Vec<ScalarId>,
    pub beta: Vec<Vec<ScalarId>>,
    pub varsigma: Vec<Vec<ScalarId>>,
    pub chi: Vec<Vec<ScalarId>>,
    /// Robust worst-case Eve signal; empty in perfect mode.
    pub varpi: Vec<Vec<ScalarId>>,
    /// One entry, or one per user for [`Scheme::SumSee`].
    pub z: Vec<ScalarId>,
}

#[derive(Debug, Clone)]
pub struct BeamVars {
    pub w: Vec<MatrixId>,
    pub v: Vec<MatrixId>,
    pub common: SecrecyVars,
}

#[derive(Debug, Clone)]
pub struct PhaseVars {
    pub q_hat: MatrixId,
    pub common: SecrecyVars,
}

fn check_aux(net: &Network, aux: &AuxiliaryState) -> Result<()> {
    if aux.num_users() != net.num_users() || aux.num_eves() != net.num_eves() {
        return Err(Error::Dimension(format!(
            "auxiliary state is {}x{} but the network has K={}, J={}",
            aux.num_users(),
            aux.num_eves(),
            net.num_users(),
            net.num_eves()
        )));
    }
    if let Some(a) = aux.alpha.iter().find(|a| !(**a > 0.0)) {
        return Err(Error::out_of_range("alpha", format!("expansion point must be positive, got {a}")));
    }
    if let Some(d) = aux.delta.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::out_of_range("delta", format!("expansion point must be positive, got {d}")));
    }
    if let Some(b) = aux.beta_prev.iter().flatten().find(|b| !(**b >= 0.0)) {
        return Err(Error::out_of_range("beta", format!("expansion point must be nonnegative, got {b}")));
    }
    Ok(())
}

fn check_psd(name: &str, mats: &[CMat], dim: usize) -> Result<()> {
    for m in mats {
        if m.shape() != (dim, dim) {
            return Err(Error::Dimension(format!("{name} is {}x{}, expected {dim}x{dim}", m.nrows(), m.ncols())));
        }
        if min_eigenvalue_herm(m) < -1e-7 * (1.0 + m.norm()) {
            return Err(Error::out_of_range(name, "must be positive semidefinite"));
        }
    }
    Ok(())
}

/// Generous bounds that keep otherwise idle auxiliaries from drifting.
struct Caps {
    multiplier: Vec<f64>,
    slack: f64,
}

fn caps(net: &Network) -> Caps {
    let p_tot = net.total_power();
    let g2 = net.ch.g.norm_squared();
    let mut slack: f64 = 0.0;
    let mut multiplier = vec![];
    for j in 0..net.num_eves() {
        let xn = net.x_tilde[j].norm();
        let r = net.radius_sq[j].sqrt();
        let lam = p_tot * (1.0 + g2);
        multiplier.push(10.0 * (1.0 + lam) * (1.0 + if r > 0.0 { xn / r } else { 0.0 }));
        let s = net.errors.sigma_d[j].max(net.errors.sigma_f[j]);
        slack = slack.max(10.0 * 2f64.powf(net.cfg.redundancy_rate) * (1.0 + lam) * (1.0 + s * s + s * xn));
    }
    Caps {
        multiplier,
        slack,
    }
}

fn with(mut v: Vec<Var>, extra: &[Var]) -> Vec<Var> {
    v.extend_from_slice(extra);
    v
}

/// Rate, power and Eve-side constraints common to both subproblems.
fn add_secrecy_block(
    p: &mut ConicProgram,
    side: &dyn Side,
    net: &Network,
    mode: Mode,
    aux: &AuxiliaryState,
    scheme: Scheme,
    opts: &AlgorithmOptions,
) -> Result<SecrecyVars> {
    let (kn, jn) = (net.num_users(), net.num_eves());
    let mb = net.tx_dim();
    let caps = caps(net);
    let r_re = net.cfg.redundancy_rate;
    let robust = mode == Mode::Robust;
    let sproc = robust && opts.use_sprocedure;

    let mut vars = SecrecyVars {
        alpha: vec![],
        delta: vec![],
        u: vec![],
        beta: vec![],
        varsigma: vec![],
        chi: vec![],
        varpi: vec![],
        z: vec![],
    };
    let zn = if scheme == Scheme::SumSee { kn } else { 1 };
    for i in 0..zn {
        vars.z.push(p.free_scalar(format!("z[{i}]")));
    }
    for k in 0..kn {
        vars.alpha.push(p.nonneg_scalar(format!("alpha[{k}]")));
        vars.delta.push(p.free_scalar(format!("delta[{k}]")));
        vars.u.push(p.add_scalar(format!("u[{k}]"), None, Some(1.0 + aux.alpha[k])));
        let mut b = vec![];
        let mut s = vec![];
        let mut c = vec![];
        let mut w = vec![];
        for j in 0..jn {
            b.push(p.nonneg_scalar(format!("beta[{k},{j}]")));
            s.push(p.free_scalar(format!("varsigma[{k},{j}]")));
            c.push(p.free_scalar(format!("chi[{k},{j}]")));
            if sproc {
                w.push(p.free_scalar(format!("varpi[{k},{j}]")));
            }
        }
        vars.beta.push(b);
        vars.varsigma.push(s);
        vars.chi.push(c);
        if sproc {
            vars.varpi.push(w);
        }
    }

    for k in 0..kn {
        let (alpha, delta, u) = (vars.alpha[k], vars.delta[k], vars.u[k]);
        let zk = vars.z[if scheme == Scheme::SumSee { k } else { 0 }];
        let (ah, dh) = (aux.alpha[k], aux.delta[k]);

        // alpha * delta <= signal via the convex upper bound of the product.
        let ca = (ah / (2.0 * dh)).sqrt() * 2.0;
        let cb = (dh / (2.0 * ah)).sqrt() * 2.0;
        let dw = side.deps(Which::W, k);
        let t = p.real_affine(&dw, |e| side.user_quad(e, Which::W, k) + 1.0);
        let x = p.vector_affine(&with(dw.clone(), &[delta.into(), alpha.into()]), |e| {
            vec![ca * e.scalar(delta), cb * e.scalar(alpha), side.user_quad(e, Which::W, k) - 1.0]
        });
        p.add_soc(format!("C8[{k}]"), ConstraintClass::Soc, t, x);

        let dl = side.deps(Which::L, k);
        let c9 = p.real_affine(&with(dl.clone(), &[delta.into()]), |e| {
            e.scalar(delta) - side.user_quad(e, Which::L, k) - 1.0
        });
        p.add_ge(format!("C9[{k}]"), ConstraintClass::Lmi, c9);

        let root = (1.0 + ah).sqrt();
        let log = p.herm_affine(2, &[u.into(), alpha.into()], |e| {
            CMat::from_row_slice(
                2,
                2,
                &[
                    C64::new(e.scalar(u), 0.0),
                    C64::new(root, 0.0),
                    C64::new(root, 0.0),
                    C64::new(1.0 + e.scalar(alpha), 0.0),
                ],
            )
        });
        p.add_lmi(format!("LOG[{k}]"), ConstraintClass::Auxiliary, log);

        for j in 0..jn {
            let tag = format!("[{k},{j}]");
            let (beta, varsigma, chi) = (vars.beta[k][j], vars.varsigma[k][j], vars.chi[k][j]);
            let sh = aux.varsigma[k][j];

            if robust && opts.use_bti {
                let dd = side.deps(Which::D, k);
                let (sd, sf) = (net.errors.sigma_d[j], net.errors.sigma_f[j]);
                let xt = net.x_tilde[j].clone();
                let slacks = bti_constraints(p, &tag, &dd, net.cfg.phi_outage, |e| {
                    outage_quadratic(&net.frame(j, &side.lifted(e, Which::D, k)), &xt, mb, sd, sf, r_re)
                })?;
                cap_scalar(p, slacks.lambda, caps.slack);
                cap_scalar(p, slacks.epsilon, caps.slack);
            }

            if sproc {
                let varpi = vars.varpi[k][j];
                let c17 = p.real_affine(&[varsigma.into(), varpi.into()], |e| {
                    2.0 * sh * e.scalar(varsigma) - sh * sh - e.scalar(varpi)
                });
                p.add_ge(format!("C17{tag}"), ConstraintClass::Lmi, c17);
                let c18 = p.herm_affine(2, &[beta.into(), varsigma.into(), chi.into()], |e| {
                    schur2(e.scalar(beta), e.scalar(varsigma), e.scalar(chi))
                });
                p.add_lmi(format!("C18{tag}"), ConstraintClass::Lmi, c18);

                let xt = net.x_tilde[j].clone();
                let r2 = net.radius_sq[j];
                let n = xt.len();
                let dw = side.deps(Which::W, k);
                let dl = side.deps(Which::L, k);
                if r2 > 0.0 {
                    let kappa = p.add_scalar(format!("kappa{tag}"), Some(0.0), Some(caps.multiplier[j]));
                    let omega = p.add_scalar(format!("omega{tag}"), Some(0.0), Some(caps.multiplier[j]));
                    let c19 = p.herm_affine(n + 1, &with(dw, &[kappa.into(), varpi.into()]), |e| {
                        sprocedure_lmi(BallSide::Upper, &net.frame(j, &side.lifted(e, Which::W, k)), &xt, r2, e.scalar(kappa), e.scalar(varpi))
                            .expect("radius is nonnegative")
                    });
                    p.add_lmi(format!("C19{tag}"), ConstraintClass::Lmi, c19);
                    let c20 = p.herm_affine(n + 1, &with(dl, &[omega.into(), chi.into()]), |e| {
                        sprocedure_lmi(BallSide::Lower, &net.frame(j, &side.lifted(e, Which::L, k)), &xt, r2, e.scalar(omega), 1.0 - e.scalar(chi))
                            .expect("radius is nonnegative")
                    });
                    p.add_lmi(format!("C20{tag}"), ConstraintClass::Lmi, c20);
                } else {
                    // A degenerate ball leaves the nominal constraints.
                    let c19 = p.real_affine(&with(dw, &[varpi.into()]), |e| {
                        e.scalar(varpi) - quad_form(&net.frame(j, &side.lifted(e, Which::W, k)), &xt)
                    });
                    p.add_ge(format!("C19{tag}"), ConstraintClass::Lmi, c19);
                    let c20 = p.real_affine(&with(dl, &[chi.into()]), |e| {
                        quad_form(&net.frame(j, &side.lifted(e, Which::L, k)), &xt) + 1.0 - e.scalar(chi)
                    });
                    p.add_ge(format!("C20{tag}"), ConstraintClass::Lmi, c20);
                }
            } else {
                let dl = side.deps(Which::L, k);
                let c10 = p.herm_affine(2, &with(dl.clone(), &[beta.into(), varsigma.into()]), |e| {
                    schur2(e.scalar(beta), e.scalar(varsigma), side.eve_quad(e, Which::L, k, j))
                });
                p.add_lmi(format!("C10{tag}"), ConstraintClass::Lmi, c10);
                let c11 = p.real_affine(&[varsigma.into(), chi.into()], |e| {
                    2.0 * sh * e.scalar(varsigma) - sh * sh - e.scalar(chi)
                });
                p.add_ge(format!("C11{tag}"), ConstraintClass::Lmi, c11);
                let dw = side.deps(Which::W, k);
                let c12 = p.real_affine(&with(dw, &[chi.into(), beta.into()]), |e| {
                    e.scalar(chi) - side.eve_quad(e, Which::W, k, j) + e.scalar(beta)
                });
                p.add_ge(format!("C12{tag}"), ConstraintClass::Lmi, c12);
                if opts.rate_cap && !robust {
                    let dd = side.deps(Which::D, k);
                    let cap = p.real_affine(&dd, |e| side.eve_quad(e, Which::D, k, j) + 2f64.powf(r_re) - 1.0);
                    p.add_ge(format!("CAP{tag}"), ConstraintClass::Auxiliary, cap);
                }
            }

            // Concave lower bound of the secrecy rate.
            let bh = aux.beta_prev[k][j];
            let constant = (1.0 + ah).log2() + 1.0 / LN_2 - (1.0 + bh).log2() + bh / ((1.0 + bh) * LN_2);
            let slope = 1.0 / ((1.0 + bh) * LN_2);
            let f_eval = move |e: &Env| constant - e.scalar(u) / LN_2 - slope * e.scalar(beta);
            match scheme {
                Scheme::MaxMinSse => {
                    let c7 = p.real_affine(&[u.into(), beta.into(), zk.into()], |e| f_eval(e) - e.scalar(zk));
                    p.add_ge(format!("C7{tag}"), ConstraintClass::Lmi, c7);
                }
                _ if side.denom_fixed() => {
                    let d = side.denom(&Env::new(&[]), k);
                    let c7 = p.real_affine(&[u.into(), beta.into(), zk.into()], |e| f_eval(e) - e.scalar(zk) * d);
                    p.add_ge(format!("C7{tag}"), ConstraintClass::Lmi, c7);
                }
                _ => {
                    let rho = aux.rho[k][j];
                    if rho > 0.0 {
                        let s = p.free_scalar(format!("s{tag}"));
                        let lmi = p.herm_affine(2, &[u.into(), beta.into(), s.into()], |e| {
                            schur2(1.0, e.scalar(s), f_eval(e))
                        });
                        p.add_lmi(format!("C7{tag}"), ConstraintClass::Lmi, lmi);
                        let dd = side.denom_deps(k);
                        let lin = p.real_affine(&with(dd, &[s.into(), zk.into()]), |e| {
                            2.0 * rho * e.scalar(s) - rho * rho * side.denom(e, k) - e.scalar(zk)
                        });
                        p.add_ge(format!("C7{tag}"), ConstraintClass::Lmi, lin);
                    } else {
                        p.add_ge(format!("C7{tag}"), ConstraintClass::Lmi, RealAffine::scalar(zk, -1.0));
                    }
                }
            }
        }
    }
    let objective = RealAffine::linear(0.0, &vars.z.iter().map(|&z| (z, 1.0)).collect::<Vec<_>>());
    p.set_objective(objective);
    Ok(vars)
}

fn cap_scalar(p: &mut ConicProgram, id: ScalarId, cap: f64) {
    let coord = id.0;
    for decl in p.variables.iter_mut() {
        if let crate::conic::VarDecl::Scalar { coord: c, upper, .. } = decl {
            if *c == coord {
                *upper = Some(cap);
            }
        }
    }
}

fn schur2(a: f64, b: f64, c: f64) -> CMat {
    CMat::from_row_slice(2, 2, &[C64::new(a, 0.0), C64::new(b, 0.0), C64::new(b, 0.0), C64::new(c, 0.0)])
}

fn check_theta_hat(net: &Network, theta_hat: &CVec) -> Result<()> {
    let rn = net.ris_dim();
    if theta_hat.len() != rn + 1 {
        return Err(Error::Dimension(format!("theta_hat has {} entries, expected {}", theta_hat.len(), rn + 1)));
    }
    if (theta_hat[rn] - C64::new(1.0, 0.0)).norm() > 1e-9 {
        return Err(Error::InvalidArgument("theta_hat must end with 1".into()));
    }
    if theta_hat.iter().any(|t| (t.norm() - 1.0).abs() > 1e-6) {
        return Err(Error::InvalidArgument("theta_hat must be unit modulus".into()));
    }
    Ok(())
}

pub(crate) fn build_p4(
    net: &Network,
    mode: Mode,
    theta_hat: &CVec,
    aux: &AuxiliaryState,
    scheme: Scheme,
    opts: &AlgorithmOptions,
) -> Result<(ConicProgram, BeamVars)> {
    check_theta_hat(net, theta_hat)?;
    check_aux(net, aux)?;
    let (kn, mb, m) = (net.num_users(), net.tx_dim(), net.cfg.antennas_per_bs);
    let mut p = ConicProgram::new();
    let w: Vec<MatrixId> = (0..kn).map(|k| p.add_matrix(format!("W[{k}]"), mb)).collect();
    let v: Vec<MatrixId> = (0..kn).map(|k| p.add_matrix(format!("V[{k}]"), mb)).collect();
    let all: Vec<Var> = w.iter().chain(&v).map(|&id| id.into()).collect();
    for b in 0..net.cfg.num_bs {
        let range = b * m..(b + 1) * m;
        let budget = net.cfg.pb_mw;
        let c1 = p.real_affine(&all, |e| {
            let used: f64 = w
                .iter()
                .chain(&v)
                .map(|&id| {
                    let x = e.matrix(id);
                    range.clone().map(|i| x[(i, i)].re).sum::<f64>()
                })
                .sum();
            budget - used
        });
        p.add_ge(format!("C1[{b}]"), ConstraintClass::Lmi, c1);
    }
    for k in 0..kn {
        p.add_psd(format!("C5[{k}]"), ConstraintClass::Lmi, w[k]);
        p.add_psd(format!("C6[{k}]"), ConstraintClass::Lmi, v[k]);
    }
    let side = BeamSide {
        net,
        theta: theta_hat.rows(0, net.ris_dim()).into_owned(),
        w: w.clone(),
        v: v.clone(),
        h_user: (0..kn).map(|k| net.ch.user_effective(k, theta_hat)).collect(),
        h_eve: (0..net.num_eves()).map(|j| net.ch.eve_effective(j, theta_hat)).collect(),
    };
    let common = add_secrecy_block(&mut p, &side, net, mode, aux, scheme, opts)?;
    Ok((p, BeamVars { w, v, common }))
}

pub(crate) fn build_p6(
    net: &Network,
    mode: Mode,
    w: &[CMat],
    v: &[CMat],
    aux: &AuxiliaryState,
    scheme: Scheme,
    opts: &AlgorithmOptions,
) -> Result<(ConicProgram, PhaseVars)> {
    check_aux(net, aux)?;
    let (kn, mb, rn) = (net.num_users(), net.tx_dim(), net.ris_dim());
    if w.len() != kn || v.len() != kn {
        return Err(Error::Dimension(format!("{} beams and {} AN covariances for {kn} users", w.len(), v.len())));
    }
    check_psd("W", w, mb)?;
    check_psd("V", v, mb)?;
    let ch = &net.ch;
    let mut p = ConicProgram::new();
    let q = p.add_matrix("Q_hat", rn + 1);
    p.add_psd("C13-psd", ConstraintClass::Lmi, q);
    for i in 0..=rn {
        let diag = p.real_affine(&[q.into()], |e| e.matrix(q)[(i, i)].re - 1.0);
        p.add_eq(format!("C13[{i}]"), ConstraintClass::Lmi, diag);
    }
    let robust = mode == Mode::Robust;
    let g = &ch.g;
    let mut mats = vec![];
    let mut svd = vec![];
    let mut user_bar = vec![];
    let mut eve_bar = vec![];
    let mut denom = vec![];
    for k in 0..kn {
        let l = interference_cov(w, v, k);
        let d = build_dk(w, v, k, net.cfg.redundancy_rate)?;
        if robust {
            svd.push([
                SvdFactors::new(&hermitian_part(&(g * &w[k] * g.adjoint())))?,
                SvdFactors::new(&hermitian_part(&(g * &l * g.adjoint())))?,
                SvdFactors::new(&hermitian_part(&(g * &d * g.adjoint())))?,
            ]);
        }
        let bar = |h: &CMat, m: &CMat| h * m * h.adjoint();
        user_bar.push([bar(&ch.h_eff[k], &w[k]), bar(&ch.h_eff[k], &l)]);
        eve_bar.push(
            (0..net.num_eves())
                .map(|j| [bar(&ch.h_eff_e[j], &w[k]), bar(&ch.h_eff_e[j], &l)])
                .collect::<Vec<_>>(),
        );
        denom.push(net.denom_watts(trace_re(&w[k]), trace_re(&v[k])));
        mats.push([w[k].clone(), l, d]);
    }
    let side = PhaseSide {
        net,
        q,
        mats,
        svd,
        user_bar,
        eve_bar,
        denom,
    };
    let mut opts = opts.clone();
    opts.rate_cap = false;
    let common = add_secrecy_block(&mut p, &side, net, mode, aux, scheme, &opts)?;
    Ok((p, PhaseVars { q_hat: q, common }))
}

/// Perfect-CSI beamforming subproblem at fixed phases.
pub fn build_beamforming_subproblem(
    net: &Network,
    theta_hat: &CVec,
    aux: &AuxiliaryState,
    opts: &AlgorithmOptions,
) -> Result<(ConicProgram, BeamVars)> {
    build_p4(net, Mode::Perfect, theta_hat, aux, opts.scheme, opts)
}

/// Perfect-CSI phase subproblem at fixed beams and AN.
pub fn build_phase_subproblem(
    net: &Network,
    w: &[CMat],
    v: &[CMat],
    aux: &AuxiliaryState,
    opts: &AlgorithmOptions,
) -> Result<(ConicProgram, PhaseVars)> {
    build_p6(net, Mode::Perfect, w, v, aux, opts.scheme, opts)
}

/// Robust beamforming subproblem at fixed phases.
pub fn build_robust_beamforming_subproblem(
    net: &Network,
    theta_hat: &CVec,
    aux: &AuxiliaryState,
    opts: &AlgorithmOptions,
) -> Result<(ConicProgram, BeamVars)> {
    build_p4(net, Mode::Robust, theta_hat, aux, opts.scheme, opts)
}

/// Robust phase subproblem at fixed beams and AN.
pub fn build_robust_phase_subproblem(
    net: &Network,
    w: &[CMat],
    v: &[CMat],
    aux: &AuxiliaryState,
    opts: &AlgorithmOptions,
) -> Result<(ConicProgram, PhaseVars)> {
    build_p6(net, Mode::Robust, w, v, aux, opts.scheme, opts)
}

/// Scales blocks so every BS meets its budget: AN first if it alone
/// overshoots, then the beams into what remains.
pub fn enforce_power_lifted(net: &Network, w: &mut [CMat], v: &mut [CMat]) {
    let m = net.cfg.antennas_per_bs;
    let budget = net.cfg.pb_mw;
    let block = |x: &CMat, b: usize| (b * m..(b + 1) * m).map(|i| x[(i, i)].re.max(0.0)).sum::<f64>();
    let scale_block = |x: &mut CMat, b: usize, c: f64| {
        let n = x.nrows();
        for i in 0..n {
            for j in 0..n {
                let ci = if i / m == b { c } else { 1.0 };
                let cj = if j / m == b { c } else { 1.0 };
                x[(i, j)] *= ci * cj;
            }
        }
    };
    for b in 0..net.cfg.num_bs {
        let pv: f64 = v.iter().map(|x| block(x, b)).sum();
        let mut room = budget;
        if pv > budget {
            let c = (budget / pv).sqrt();
            v.iter_mut().for_each(|x| scale_block(x, b, c));
            room = 0.0;
        } else {
            room -= pv;
        }
        let pw: f64 = w.iter().map(|x| block(x, b)).sum();
        if pw > room {
            let c = if pw > 0.0 { (room / pw).sqrt() } else { 0.0 };
            w.iter_mut().for_each(|x| scale_block(x, b, c));
        }
    }
}

fn enforce_power_vectors(net: &Network, w: &mut [CVec], v: &[CMat]) {
    let m = net.cfg.antennas_per_bs;
    for b in 0..net.cfg.num_bs {
        let range = b * m..(b + 1) * m;
        let pv: f64 = v.iter().map(|x| range.clone().map(|i| x[(i, i)].re.max(0.0)).sum::<f64>()).sum();
        let room = (net.cfg.pb_mw - pv).max(0.0);
        let pw: f64 = w.iter().map(|x| x.rows(b * m, m).norm_squared()).sum();
        if pw > room {
            let c = if pw > 0.0 { (room / pw).sqrt() } else { 0.0 };
            for x in w.iter_mut() {
                x.rows_mut(b * m, m).scale_mut(c);
            }
        }
    }
}

/// Beams toward each user's combined channel with 80% of every budget split evenly.
pub fn mrt_beams(net: &Network, theta: &CVec) -> Vec<CVec> {
    let (kn, m) = (net.num_users(), net.cfg.antennas_per_bs);
    let th = theta_hat(theta);
    let per = 0.8 * net.cfg.pb_mw / kn as f64;
    (0..kn)
        .map(|k| {
            let h = net.ch.user_effective(k, &th);
            let mut w = CVec::zeros(net.tx_dim());
            for b in 0..net.cfg.num_bs {
                let block = h.rows(b * m, m);
                let n = block.norm();
                let dir = if n > 0.0 {
                    block / C64::new(n, 0.0)
                } else {
                    CVec::from_element(m, C64::new(1.0 / (m as f64).sqrt(), 0.0))
                };
                w.rows_mut(b * m, m).copy_from(&(dir * C64::new(per.sqrt(), 0.0)));
            }
            w
        })
        .collect()
}

fn random_phases<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVec {
    CVec::from_fn(n, |_, _| C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
}

/// Feasibility program for the outage triples at fixed phases: maximize the
/// weakest user signal power subject to the budgets.
fn bti_feasibility(net: &Network, theta: &CVec, opts: &AlgorithmOptions) -> Result<Option<Lifted>> {
    let (kn, mb, m) = (net.num_users(), net.tx_dim(), net.cfg.antennas_per_bs);
    let th = theta_hat(theta);
    let mut p = ConicProgram::new();
    let w: Vec<MatrixId> = (0..kn).map(|k| p.add_matrix(format!("W[{k}]"), mb)).collect();
    let v: Vec<MatrixId> = (0..kn).map(|k| p.add_matrix(format!("V[{k}]"), mb)).collect();
    let all: Vec<Var> = w.iter().chain(&v).map(|&id| id.into()).collect();
    let t = p.free_scalar("t");
    for b in 0..net.cfg.num_bs {
        let range = b * m..(b + 1) * m;
        let c1 = p.real_affine(&all, |e| {
            net.cfg.pb_mw
                - w.iter()
                    .chain(&v)
                    .map(|&id| {
                        let x = e.matrix(id);
                        range.clone().map(|i| x[(i, i)].re).sum::<f64>()
                    })
                    .sum::<f64>()
        });
        p.add_ge(format!("C1[{b}]"), ConstraintClass::Lmi, c1);
    }
    let side = BeamSide {
        net,
        theta: theta.clone(),
        w: w.clone(),
        v: v.clone(),
        h_user: (0..kn).map(|k| net.ch.user_effective(k, &th)).collect(),
        h_eve: vec![],
    };
    let caps = caps(net);
    for k in 0..kn {
        p.add_psd(format!("C5[{k}]"), ConstraintClass::Lmi, w[k]);
        p.add_psd(format!("C6[{k}]"), ConstraintClass::Lmi, v[k]);
        let sig = p.real_affine(&[w[k].into(), t.into()], |e| side.user_quad(e, Which::W, k) - e.scalar(t));
        p.add_ge(format!("signal[{k}]"), ConstraintClass::Auxiliary, sig);
        for j in 0..net.num_eves() {
            let dd = side.deps(Which::D, k);
            let (sd, sf) = (net.errors.sigma_d[j], net.errors.sigma_f[j]);
            let xt = net.x_tilde[j].clone();
            let s = bti_constraints(&mut p, &format!("[{k},{j}]"), &dd, net.cfg.phi_outage, |e| {
                outage_quadratic(&net.frame(j, &side.lifted(e, Which::D, k)), &xt, mb, sd, sf, net.cfg.redundancy_rate)
            })?;
            cap_scalar(&mut p, s.lambda, caps.slack);
            cap_scalar(&mut p, s.epsilon, caps.slack);
        }
    }
    p.set_objective(RealAffine::scalar(t, 1.0));
    let sol = solve(&p, &opts.solver)?;
    if !sol.status.is_usable() {
        return Ok(None);
    }
    let mut x = Lifted {
        w: w.iter().map(|&id| hermitian_part(&sol.matrix(id))).collect(),
        v: v.iter().map(|&id| hermitian_part(&sol.matrix(id))).collect(),
        theta: theta.clone(),
    };
    enforce_power_lifted(net, &mut x.w, &mut x.v);
    Ok(Some(x))
}

fn initialize(net: &Network, mode: Mode, opts: &AlgorithmOptions) -> Result<Lifted> {
    let mut rng = stream(opts.seed, StreamKind::Init, 0, 0);
    let kn = net.num_users();
    for attempt in 0..opts.init_attempts {
        let theta = random_phases(net.ris_dim(), &mut rng);
        let beams = mrt_beams(net, &theta);
        let x = Lifted {
            w: beams.iter().map(outer).collect(),
            v: vec![CMat::zeros(net.tx_dim(), net.tx_dim()); kn],
            theta,
        };
        if mode == Mode::Perfect || !opts.use_bti {
            return Ok(x);
        }
        if admissible(&evaluate(net, mode, opts, &x)) {
            return Ok(x);
        }
        debug!("initial point violates the outage triples (attempt {attempt}); solving a feasibility program");
        if let Some(y) = bti_feasibility(net, &x.theta, opts)? {
            if admissible(&evaluate(net, mode, opts, &y)) {
                return Ok(y);
            }
        }
    }
    Err(Error::InitializationInfeasible(opts.init_attempts))
}

fn rank_ratio(m: &CMat) -> f64 {
    let (vals, _) = hermitian_eig_desc(m);
    let l1 = vals.first().copied().unwrap_or(0.0);
    if l1 <= 1e-12 {
        return 0.0;
    }
    vals.get(1).copied().unwrap_or(0.0).max(0.0) / l1
}

/// One iteration of the alternating optimization as recorded in the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Exact objective after the beamforming subproblem.
    pub z_p4: f64,
    /// Exact objective after the phase subproblem.
    pub z_p6: f64,
    /// Minimum SEE of the best extracted state so far, from the metrics module.
    pub min_see_true: f64,
    pub see_true: Vec<f64>,
    pub status_p4: String,
    pub status_p6: String,
    /// Largest `l2 / l1` over the relaxed `W_k`.
    pub rank_ratio_w: f64,
    pub rank_ratio_v: f64,
    pub rank_ratio_q: f64,
    pub secs: f64,
    pub empirical_outage_max: Option<f64>,
    pub psi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IterationTrace {
    /// Objective at the initial point, after any max-min-rate warm-up.
    pub initial_z: f64,
    pub phase1_iters: usize,
    pub converged: bool,
    pub records: Vec<IterationRecord>,
}

impl IterationTrace {
    /// CSV export; robust runs add the outage and radius columns.
    pub fn to_csv(&self, robust: bool) -> String {
        let mut out = String::from("iter,z_p4,z_p6,min_see_true,status_p4,status_p6,secs");
        if robust {
            out.push_str(",empirical_outage_max,psi");
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}",
                r.iter, r.z_p4, r.z_p6, r.min_see_true, r.status_p4, r.status_p6, r.secs
            ));
            if robust {
                let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
                out.push_str(&format!(",{},{}", opt(r.empirical_outage_max), opt(r.psi)));
            }
            out.push('\n');
        }
        out
    }

    pub fn z_sequence(&self) -> Vec<f64> {
        let mut z = vec![self.initial_z];
        z.extend(self.records.iter().map(|r| r.z_p6));
        z
    }
}

/// Result of one optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// Best extracted rank-one state.
    pub state: BeamformingState,
    pub trace: IterationTrace,
    /// Per-user SEE of `state` on the (estimated) channels.
    pub see: Vec<f64>,
    pub min_see: f64,
    /// Scheme objective of `state` under the algorithm's own Eve model.
    pub objective: f64,
    /// Per-user SEE of `state` under the algorithm's own Eve model (worst case
    /// over the uncertainty ball in robust mode), clipped at zero.
    pub see_model: Vec<f64>,
    /// Final relaxed iterate.
    pub lifted: Lifted,
}

struct Step {
    next: Lifted,
    z_p4: f64,
    z_p6: f64,
    status_p4: String,
    status_p6: String,
    rank_w: f64,
    rank_v: f64,
    rank_q: f64,
}

fn accept_slack(z: f64) -> f64 {
    1e-9 * (1.0 + z.abs())
}

fn outer_step(net: &Network, mode: Mode, scheme: Scheme, x: &Lifted, opts: &AlgorithmOptions, tag: usize) -> Result<Step> {
    let eval0 = evaluate(net, mode, opts, x);
    let z0 = eval0.score(scheme);
    let aux = refresh_auxiliary(net, mode, scheme, &eval0);
    let mut next = x.clone();
    let mut rank_w: f64 = 0.0;
    let mut rank_v: f64 = 0.0;
    let mut rank_q: f64 = 0.0;

    let (p4, vars) = build_p4(net, mode, &theta_hat(&x.theta), &aux, scheme, opts)?;
    let sol = solve(&p4, &opts.solver)?;
    let mut status_p4 = sol.status.as_str().to_string();
    let p4_failed = !sol.status.is_usable();
    if !p4_failed {
        let mut cand = Lifted {
            w: vars.w.iter().map(|&id| hermitian_part(&sol.matrix(id))).collect(),
            v: vars.v.iter().map(|&id| hermitian_part(&sol.matrix(id))).collect(),
            theta: x.theta.clone(),
        };
        enforce_power_lifted(net, &mut cand.w, &mut cand.v);
        rank_w = cand.w.iter().map(rank_ratio).fold(0.0, f64::max);
        rank_v = cand.v.iter().map(rank_ratio).fold(0.0, f64::max);
        let e = evaluate(net, mode, opts, &cand);
        if e.score(scheme) >= z0 - accept_slack(z0) && admissible(&e) {
            next = cand;
        } else {
            status_p4.push_str("-kept");
        }
    }
    let eval4 = evaluate(net, mode, opts, &next);
    let z_p4 = eval4.score(scheme);

    let mut status_p6 = String::from("skipped");
    let mut p6_failed = false;
    if net.ris_dim() > 0 {
        let aux = refresh_auxiliary(net, mode, scheme, &eval4);
        let (p6, pv) = build_p6(net, mode, &next.w, &next.v, &aux, scheme, opts)?;
        let sol = solve(&p6, &opts.solver)?;
        status_p6 = sol.status.as_str().to_string();
        p6_failed = !sol.status.is_usable();
        if !p6_failed {
            let q = hermitian_part(&sol.matrix(pv.q_hat));
            rank_q = rank_ratio(&q);
            let mut rng = stream(opts.seed, StreamKind::Randomization, tag, 1);
            let rn = net.ris_dim();
            let mut best = (next.theta.clone(), z_p4);
            let consider = |theta_hat: CVec, best: &mut (CVec, f64)| {
                let theta = theta_hat.rows(0, rn).into_owned();
                let y = Lifted { w: next.w.clone(), v: next.v.clone(), theta };
                let e = evaluate(net, mode, opts, &y);
                let s = e.score(scheme);
                if admissible(&e) && s > best.1 {
                    *best = (y.theta, s);
                }
            };
            let (_, vecs) = hermitian_eig_desc(&q);
            consider(project_phases(&vecs.column(0).into_owned()), &mut best);
            let factor = psd_factor(&q);
            for _ in 0..opts.trials {
                consider(project_phases(&sample_cn(&factor, &mut rng)), &mut best);
            }
            next.theta = best.0;
        }
    }
    if p4_failed && p6_failed {
        return Err(Error::SolverFailure(format!("both subproblems failed ({status_p4}, {status_p6})")).at_iteration(tag));
    }
    let z_p6 = evaluate(net, mode, opts, &next).score(scheme);
    Ok(Step {
        next,
        z_p4,
        z_p6,
        status_p4,
        status_p6,
        rank_w,
        rank_v,
        rank_q,
    })
}

/// Rank-one beams from the relaxed iterate: principal eigenvectors plus
/// Gaussian draws, each rescaled into the budgets.
fn extract(net: &Network, mode: Mode, scheme: Scheme, x: &Lifted, opts: &AlgorithmOptions, tag: usize) -> Option<(BeamformingState, f64)> {
    let kn = net.num_users();
    let mut best: Option<(Vec<CVec>, f64)> = None;
    let consider = |mut beams: Vec<CVec>, best: &mut Option<(Vec<CVec>, f64)>| {
        enforce_power_vectors(net, &mut beams, &x.v);
        let y = Lifted {
            w: beams.iter().map(outer).collect(),
            v: x.v.clone(),
            theta: x.theta.clone(),
        };
        let e = evaluate(net, mode, opts, &y);
        let s = e.score(scheme);
        if admissible(&e) && s.is_finite() && best.as_ref().map_or(true, |b| s > b.1) {
            *best = Some((beams, s));
        }
    };
    let principal: Vec<CVec> = x
        .w
        .iter()
        .map(|m| {
            let (vals, vecs) = hermitian_eig_desc(m);
            vecs.column(0) * C64::new(vals[0].max(0.0).sqrt(), 0.0)
        })
        .collect();
    consider(principal, &mut best);
    let rank_one = x.w.iter().all(|m| rank_ratio(m) <= opts.rank_tol);
    if !rank_one {
        let mut rng = stream(opts.seed, StreamKind::Randomization, tag, 2);
        let factors: Vec<CMat> = x.w.iter().map(psd_factor).collect();
        for _ in 0..opts.trials {
            let beams = (0..kn).map(|k| sample_cn(&factors[k], &mut rng)).collect();
            consider(beams, &mut best);
        }
    }
    let (beams, score) = best?;
    let state = BeamformingState::new(beams, x.v.clone(), x.theta.clone()).ok()?;
    Some((state, score))
}

fn true_see(net: &Network, state: &BeamformingState) -> Result<Vec<f64>> {
    see_values(&net.raw, state, &net.cfg)
}

/// Runs the alternating optimization in the given mode.
pub fn run(net: &Network, mode: Mode, opts: &AlgorithmOptions) -> Result<RunOutput> {
    opts.validate()?;
    let scheme = opts.scheme;
    let mut x = initialize(net, mode, opts)?;
    let mut trace = IterationTrace::default();

    if scheme != Scheme::MaxMinSse {
        let mut count = 0;
        while count < opts.phase1_iters && !evaluate(net, mode, opts, &x).all_positive() {
            let step = outer_step(net, mode, Scheme::MaxMinSse, &x, opts, 10_000 + count)?;
            debug!(
                "warm-up {count}: z_p4={:.4} z_p6={:.4} ({}, {})",
                step.z_p4, step.z_p6, step.status_p4, step.status_p6
            );
            x = step.next;
            count += 1;
        }
        trace.phase1_iters = count;
        if count > 0 {
            debug!("warm-up ran {count} max-min rate iterations");
        }
    }

    let mut z_prev = evaluate(net, mode, opts, &x).score(scheme);
    trace.initial_z = z_prev;
    let mut best = extract(net, mode, scheme, &x, opts, 0);
    for t in 1..=opts.max_iters {
        let started = Instant::now();
        let step = outer_step(net, mode, scheme, &x, opts, t)?;
        x = step.next;
        if let Some((state, score)) = extract(net, mode, scheme, &x, opts, t) {
            if best.as_ref().map_or(true, |b| score > b.1) {
                best = Some((state, score));
            }
        }
        let (see, outage) = match &best {
            Some((state, _)) => {
                let see = true_see(net, state)?;
                let outage = if mode == Mode::Robust && opts.outage_samples > 0 {
                    let mut rng = stream(opts.seed, StreamKind::MonteCarlo, t, 0);
                    let rep = mc_outage(
                        state,
                        &net.raw,
                        &net.raw_errors,
                        net.cfg.redundancy_rate,
                        net.cfg.noise_eve_mw,
                        opts.outage_samples,
                        &mut rng,
                    )?;
                    Some(rep.max())
                } else {
                    None
                };
                (see, outage)
            }
            None => (vec![0.0; net.num_users()], None),
        };
        let record = IterationRecord {
            iter: t,
            z_p4: step.z_p4,
            z_p6: step.z_p6,
            min_see_true: see.iter().copied().fold(f64::INFINITY, f64::min),
            see_true: see,
            status_p4: step.status_p4,
            status_p6: step.status_p6,
            rank_ratio_w: step.rank_w,
            rank_ratio_v: step.rank_v,
            rank_ratio_q: step.rank_q,
            secs: started.elapsed().as_secs_f64(),
            empirical_outage_max: outage,
            psi: (mode == Mode::Robust).then_some(net.psi),
        };
        info!(
            "iter {t}: z_p4={:.6} z_p6={:.6} min_see={:.6} ({}, {})",
            record.z_p4, record.z_p6, record.min_see_true, record.status_p4, record.status_p6
        );
        let gain = step.z_p6 - z_prev;
        trace.records.push(record);
        if gain <= opts.tau {
            trace.converged = true;
            break;
        }
        z_prev = step.z_p6;
    }

    let (state, objective) = match best {
        Some(b) => b,
        None => return Err(Error::RandomizationExhausted(opts.trials)),
    };
    let see = true_see(net, &state)?;
    let min_see = see.iter().copied().fold(f64::INFINITY, f64::min);
    let e = evaluate(net, mode, opts, &Lifted::from_state(&state));
    let see_model = (0..net.num_users()).map(|k| (e.rate(k) / e.denom[k]).max(0.0)).collect();
    Ok(RunOutput {
        state,
        trace,
        see,
        min_see,
        objective,
        see_model,
        lifted: x,
    })
}
