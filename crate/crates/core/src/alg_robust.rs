//! Robust alternating optimization under imperfect Eve CSI.
//!
//! The chance constraint on each Eve's rate is handled with a Bernstein-type
//! inequality, the worst-case Eve SINR with a sphere bound and the
//! S-procedure, and the phase-side quadratic forms are made linear in the
//! lifted phase matrix through an SVD of the middle factor.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use crate::channel::{ChannelSet, EveErrorModel};
use crate::conic::{ConicProgram, ConstraintClass, Env, ScalarId, Var};
use crate::engine::{self, AlgorithmOptions, Network, RunOutput};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_asymmetry, hermitian_eig_desc, hermitian_part, min_eigenvalue_herm, trace_re, CMat, CVec, C64};
use crate::metrics::interference_cov;
use crate::scenario::ScenarioConfig;

pub use crate::engine::{build_robust_beamforming_subproblem, build_robust_phase_subproblem};

fn check_hermitian(m: &CMat) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
    }
    let asym = hermitian_asymmetry(m);
    if asym > 1e-9 * (1.0 + m.norm()) {
        return Err(Error::NotHermitian(asym));
    }
    Ok(())
}

/// `sum_{i != k} (2^R - 1) W_i + sum_i (2^R - 1) V_i - W_k`
pub fn build_dk(w: &[CMat], v: &[CMat], k: usize, r_re: f64) -> Result<CMat> {
    if k >= w.len() {
        return Err(Error::Index(format!("user {k} of {}", w.len())));
    }
    if v.len() != w.len() {
        return Err(Error::Dimension(format!("{} beams but {} AN covariances", w.len(), v.len())));
    }
    let factor = C64::new(2f64.powf(r_re) - 1.0, 0.0);
    Ok(interference_cov(w, v, k) * factor - &w[k])
}

/// Regularized lower incomplete gamma inverted by bisection: the chi-square
/// quantile with `dof` degrees of freedom.
pub fn chi2_inverse_cdf(p: f64, dof: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) || dof <= 0.0 {
        return Err(Error::out_of_range("p", format!("need 0 <= p < 1 and dof > 0, got p={p}, dof={dof}")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let cdf = |x: f64| gamma_lr(dof / 2.0, x / 2.0);
    let mut hi = dof.max(1.0);
    while cdf(hi) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `sqrt(F^{-1}(1 - phi) / 2)` for a chi-square law with `2 dim` degrees of
/// freedom: radius covering a `CN(0, I_dim)` draw with probability `1 - phi`.
pub fn sphere_radius(phi: f64, dim: usize) -> Result<f64> {
    if !(phi > 0.0 && phi < 1.0) {
        return Err(Error::out_of_range("phi", format!("must lie in (0, 1), got {phi}")));
    }
    if dim == 0 {
        return Err(Error::out_of_range("dim", "must be at least 1"));
    }
    Ok((0.5 * chi2_inverse_cdf(1.0 - phi, 2.0 * dim as f64)?).sqrt())
}

/// Diagonal, then `sqrt(2) Re` and `sqrt(2) Im` of the strict upper triangle.
/// The Euclidean norm equals the Frobenius norm of a Hermitian `a`.
pub fn vec_herm(a: &CMat) -> Vec<f64> {
    let n = a.nrows();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        out.push(a[(i, i)].re);
    }
    for i in 0..n {
        for j in i + 1..n {
            out.push(SQRT_2 * a[(i, j)].re);
            out.push(SQRT_2 * a[(i, j)].im);
        }
    }
    out
}

/// Smallest slacks `(lambda, epsilon)` admitted by the SOC and LMI parts of the triple.
pub fn bti_minimal_slacks(a: &CMat, u: &CVec) -> (f64, f64) {
    let lambda = (a.norm_squared() + 2.0 * u.norm_squared()).sqrt();
    let epsilon = (-min_eigenvalue_herm(a)).max(0.0);
    (lambda, epsilon)
}

/// Left side of the linear part of the triple at the minimal slacks. The
/// triple is satisfiable iff this is nonnegative.
pub fn bti_margin(a: &CMat, u: &CVec, c: f64, phi: f64) -> f64 {
    let (lambda, epsilon) = bti_minimal_slacks(a, u);
    trace_re(a) - (-2.0 * phi.ln()).sqrt() * lambda + phi.ln() * epsilon + c
}

/// Slack variables of one emitted triple.
#[derive(Debug, Clone, Copy)]
pub struct BtiSlacks {
    pub lambda: ScalarId,
    pub epsilon: ScalarId,
}

/// Adds the triple `Tr(A) - sqrt(-2 ln phi) lambda + ln(phi) epsilon + c >= 0`,
/// `||[vec(A); sqrt(2) u]|| <= lambda`, `epsilon I + A >= 0`, `epsilon >= 0`.
///
/// `quad` maps the program variables to `(A, u, c)` and must be affine in
/// the variables listed in `deps`.
pub fn bti_constraints<F>(p: &mut ConicProgram, tag: &str, deps: &[Var], phi: f64, quad: F) -> Result<BtiSlacks>
where
    F: Fn(&Env) -> (CMat, CVec, f64),
{
    if !(phi > 0.0 && phi <= 1.0) {
        return Err(Error::out_of_range("phi", format!("must lie in (0, 1], got {phi}")));
    }
    let dim = quad(&Env::new(&vec![0.0; p.num_coords])).0.nrows();
    let lambda = p.free_scalar(format!("lambda{tag}"));
    let epsilon = p.free_scalar(format!("epsilon{tag}"));
    let ln_phi = phi.ln();
    let spread = (-2.0 * ln_phi).sqrt();

    let mut all = deps.to_vec();
    all.push(lambda.into());
    all.push(epsilon.into());
    let lin = p.real_affine(&all, |e| {
        let (a, _, c) = quad(e);
        trace_re(&a) - spread * e.scalar(lambda) + ln_phi * e.scalar(epsilon) + c
    });
    p.add_ge(format!("C15-lin{tag}"), ConstraintClass::Lmi, lin);

    let t = p.real_affine(&[lambda.into()], |e| e.scalar(lambda));
    let x = p.vector_affine(deps, |e| {
        let (a, u, _) = quad(e);
        let mut out = vec_herm(&a);
        out.extend(u.iter().map(|z| SQRT_2 * z.re));
        out.extend(u.iter().map(|z| SQRT_2 * z.im));
        out
    });
    p.add_soc(format!("C15-soc{tag}"), ConstraintClass::Soc, t, x);

    let mut with_eps = deps.to_vec();
    with_eps.push(epsilon.into());
    let lmi = p.herm_affine(dim, &with_eps, |e| {
        let (a, _, _) = quad(e);
        a + CMat::identity(dim, dim) * C64::new(e.scalar(epsilon), 0.0)
    });
    p.add_lmi(format!("C15-lmi{tag}"), ConstraintClass::Lmi, lmi);

    let eps = p.real_affine(&[epsilon.into()], |e| e.scalar(epsilon));
    p.add_ge(format!("C15-eps{tag}"), ConstraintClass::Lmi, eps);
    Ok(BtiSlacks { lambda, epsilon })
}

/// Which side of the ball constraint an S-procedure block certifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BallSide {
    /// `(x + d)^H C (x + d) <= rhs` on the ball, multiplier `kappa`.
    Upper,
    /// `(x + d)^H C (x + d) + rhs >= 0` on the ball, multiplier `omega`.
    Lower,
}

/// S-procedure block for a quadratic over `||d||^2 <= r2`.
///
/// Upper: `[[kI - C, -C x], [-x^H C, -k r2 - x^H C x + rhs]]`.
/// Lower: `[[wI + C, C x], [x^H C, -w r2 + x^H C x + rhs]]`.
/// Positive semidefiniteness certifies the quadratic bound for every point of the ball.
pub fn sprocedure_lmi(side: BallSide, c: &CMat, x: &CVec, r2: f64, multiplier: f64, rhs: f64) -> Result<CMat> {
    if r2 < 0.0 {
        return Err(Error::out_of_range("ball_radius_sq", format!("must be nonnegative, got {r2}")));
    }
    let n = c.nrows();
    if c.ncols() != n || x.len() != n {
        return Err(Error::Dimension(format!("{}x{} form with a {}-vector", c.nrows(), c.ncols(), x.len())));
    }
    let sign = match side {
        BallSide::Upper => -1.0,
        BallSide::Lower => 1.0,
    };
    let s = C64::new(sign, 0.0);
    let cx = c * x;
    let xcx = x.dotc(&cx).re;
    let mut out = CMat::zeros(n + 1, n + 1);
    let mut top = c * s;
    for i in 0..n {
        top[(i, i)] += multiplier;
    }
    out.view_mut((0, 0), (n, n)).copy_from(&top);
    for i in 0..n {
        out[(i, n)] = cx[i] * s;
        out[(n, i)] = cx[i].conj() * s;
    }
    out[(n, n)] = C64::new(-multiplier * r2 + sign * xcx + rhs, 0.0);
    Ok(out)
}

/// Extreme value of `(x + d)^H C (x + d)` over `||d||^2 <= r2`.
pub fn ball_extreme(c: &CMat, x: &CVec, r2: f64, maximize: bool) -> f64 {
    let sign = if maximize { -1.0 } else { 1.0 };
    let q = c * C64::new(sign, 0.0);
    let g = &q * x;
    let base = sign * x.dotc(&(c * x)).re;
    sign * trust_region_min(&q, &g, base, r2)
}

/// Global minimum of `d^H Q d + 2 Re(g^H d) + base` over `||d||^2 <= r2` for Hermitian `Q`.
fn trust_region_min(q: &CMat, g: &CVec, base: f64, r2: f64) -> f64 {
    if r2 <= 0.0 || q.nrows() == 0 {
        return base;
    }
    let (mut vals, mut vecs) = hermitian_eig_desc(q);
    vals.reverse();
    let n = vals.len();
    let cols: Vec<CVec> = (0..n).rev().map(|i| vecs.column(i).into_owned()).collect();
    vecs = CMat::from_columns(&cols);
    let b: Vec<C64> = (0..n).map(|i| vecs.column(i).dotc(g)).collect();
    let b2: Vec<f64> = b.iter().map(|z| z.norm_sqr()).collect();
    let scale = vals.iter().map(|l| l.abs()).fold(0.0, f64::max).max(1e-300);
    let lam_min = vals[0];
    let value = |y: &[C64]| -> f64 {
        let mut v = base;
        for i in 0..n {
            v += vals[i] * y[i].norm_sqr() + 2.0 * (b[i].conj() * y[i]).re;
        }
        v
    };
    let at = |mu: f64| -> Vec<C64> {
        (0..n)
            .map(|i| {
                let d = vals[i] + mu;
                if d.abs() <= 1e-14 * scale {
                    C64::new(0.0, 0.0)
                } else {
                    -b[i] / d
                }
            })
            .collect()
    };
    let norm2 = |mu: f64| -> f64 {
        (0..n)
            .map(|i| {
                let d = vals[i] + mu;
                if d.abs() <= 1e-14 * scale {
                    0.0
                } else {
                    b2[i] / (d * d)
                }
            })
            .sum()
    };
    if lam_min > 1e-14 * scale && norm2(0.0) <= r2 {
        return value(&at(0.0));
    }
    let mu_lo = (-lam_min).max(0.0);
    let gnorm = b2.iter().sum::<f64>().sqrt();
    let degenerate = (0..n).filter(|&i| (vals[i] + mu_lo).abs() <= 1e-12 * scale);
    let mass: f64 = degenerate.clone().map(|i| b2[i]).sum();
    let hard = mass <= 1e-24 * (1.0 + gnorm * gnorm) && norm2(mu_lo) <= r2;
    if hard {
        let mut y = at(mu_lo);
        let used: f64 = y.iter().map(|z| z.norm_sqr()).sum();
        let fill = (r2 - used).max(0.0).sqrt();
        if let Some(i) = degenerate.clone().next() {
            y[i] = C64::new(fill, 0.0);
        }
        return value(&y);
    }
    let mut lo = mu_lo;
    let mut hi = mu_lo + gnorm / r2.sqrt() + 1e-300;
    while norm2(hi) > r2 {
        hi = mu_lo + 2.0 * (hi - mu_lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if norm2(mid) > r2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    value(&at(hi))
}

/// `theta` recovered from the last column of a lifted phase matrix.
pub fn theta_from_qhat(q_hat: &CMat) -> CVec {
    let rn = q_hat.nrows().saturating_sub(1);
    q_hat.view((0, rn), (rn, 1)).column(0).into_owned()
}

/// `Theta^H M Theta` for `Theta = diag(theta)`.
pub fn sandwich(middle: &CMat, theta: &CVec) -> CMat {
    let mut out = middle.clone();
    for i in 0..out.nrows() {
        for j in 0..out.ncols() {
            out[(i, j)] *= theta[i].conj() * theta[j];
        }
    }
    out
}

/// Singular triplets `middle = sum_s x_s o_s v_s^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub x: Vec<f64>,
    pub o: Vec<CVec>,
    pub v: Vec<CVec>,
}

impl SvdFactors {
    pub fn new(middle: &CMat) -> Result<SvdFactors> {
        check_hermitian(middle)?;
        let n = middle.nrows();
        if n == 0 {
            return Ok(SvdFactors { x: vec![], o: vec![], v: vec![] });
        }
        let svd = middle.clone().svd(true, true);
        let u = svd.u.expect("requested U");
        let vt = svd.v_t.expect("requested V^H");
        let mut out = SvdFactors { x: vec![], o: vec![], v: vec![] };
        for s in 0..svd.singular_values.len() {
            out.x.push(svd.singular_values[s]);
            out.o.push(u.column(s).into_owned());
            out.v.push(vt.row(s).adjoint());
        }
        Ok(out)
    }

    pub fn reconstruct(&self) -> CMat {
        let n = self.o.first().map(|o| o.len()).unwrap_or(0);
        let mut m = CMat::zeros(n, n);
        for s in 0..self.x.len() {
            m += &self.o[s] * self.v[s].adjoint() * C64::new(self.x[s], 0.0);
        }
        m
    }

    /// `sum_s x_s diag(o_s) conj(Qt) diag(conj(v_s))` with `Qt` the leading
    /// `RN x RN` block of `q_hat`; equals `Theta^H M Theta` at `q_hat = theta_hat theta_hat^H`
    /// and is linear in the entries of `q_hat`.
    pub fn eval(&self, q_hat: &CMat) -> CMat {
        let n = self.o.first().map(|o| o.len()).unwrap_or(0);
        let mut out = CMat::zeros(n, n);
        for s in 0..self.x.len() {
            for i in 0..n {
                let left = self.o[s][i] * self.x[s];
                for j in 0..n {
                    out[(i, j)] += left * q_hat[(i, j)].conj() * self.v[s][j].conj();
                }
            }
        }
        out
    }
}

/// SVD form of `Theta^H M Theta` at the lifted phases `q_hat`.
pub fn svd_reformulate(middle: &CMat, q_hat: &CMat) -> Result<CMat> {
    if q_hat.nrows() != middle.nrows() + 1 || !q_hat.is_square() {
        return Err(Error::Dimension(format!(
            "{}x{} middle factor with a {}x{} phase matrix",
            middle.nrows(),
            middle.ncols(),
            q_hat.nrows(),
            q_hat.ncols()
        )));
    }
    Ok(SvdFactors::new(middle)?.eval(q_hat))
}

/// `P^H M P` with `P = [I, G^H Theta]`, given `M`, `theta` and `Theta^H G M G^H Theta`.
///
/// Affine in `(M, S)` for fixed `theta`, and in `(theta, S)` for fixed `M`.
pub fn lift_quadratic(m: &CMat, g: &CMat, theta: &CVec, s: &CMat) -> CMat {
    let mb = m.nrows();
    let rn = theta.len();
    let mut out = CMat::zeros(mb + rn, mb + rn);
    out.view_mut((0, 0), (mb, mb)).copy_from(m);
    if rn > 0 {
        let mut cross = m * g.adjoint();
        for n in 0..rn {
            let t = theta[n];
            for r in 0..mb {
                cross[(r, n)] *= t;
            }
        }
        out.view_mut((0, mb), (mb, rn)).copy_from(&cross);
        out.view_mut((mb, 0), (rn, mb)).copy_from(&cross.adjoint());
        out.view_mut((mb, mb), (rn, rn)).copy_from(s);
    }
    out
}

/// `diag(sigma_d I, sigma_f I) M diag(sigma_d I, sigma_f I)`
pub fn weight_quadratic(m: &CMat, mb: usize, sigma_d: f64, sigma_f: f64) -> CMat {
    let n = m.nrows();
    let w = |i: usize| if i < mb { sigma_d } else { sigma_f };
    CMat::from_fn(n, n, |i, j| m[(i, j)] * (w(i) * w(j)))
}

/// `(A, u, c)` of the rate-outage quadratic `(x + E d)^H M (x + E d) + (2^R - 1)`
/// with `M = P^H D P`, `E = diag(sigma_d I, sigma_f I)` and `d ~ CN(0, I)`.
pub fn outage_quadratic(lifted_d: &CMat, x: &CVec, mb: usize, sigma_d: f64, sigma_f: f64, r_re: f64) -> (CMat, CVec, f64) {
    let a = weight_quadratic(lifted_d, mb, sigma_d, sigma_f);
    let mx = lifted_d * x;
    let u = CVec::from_fn(x.len(), |i, _| mx[i] * if i < mb { sigma_d } else { sigma_f });
    let c = x.dotc(&mx).re + 2f64.powf(r_re) - 1.0;
    (a, u, c)
}

/// Concatenation `[h_d; f]` of an Eve's stacked direct and reflected estimates.
pub fn stacked_estimate(h_d: &CVec, f: &CVec) -> CVec {
    let mut x = CVec::zeros(h_d.len() + f.len());
    x.rows_mut(0, h_d.len()).copy_from(h_d);
    x.rows_mut(h_d.len(), f.len()).copy_from(f);
    x
}

/// Quantities of the robust reformulation at one iterate.
#[derive(Debug, Clone)]
pub struct RobustArtifacts {
    /// `[k]`
    pub d: Vec<CMat>,
    /// `[k][j]`
    pub a: Vec<Vec<CMat>>,
    pub u: Vec<Vec<CVec>>,
    pub c: Vec<Vec<f64>>,
    pub c_w: Vec<CMat>,
    pub c_l: Vec<CMat>,
    pub psi: f64,
    /// Squared ball radius per Eve.
    pub radius_sq: Vec<f64>,
    pub svd_d: Vec<SvdFactors>,
    pub svd_w: Vec<SvdFactors>,
    pub svd_l: Vec<SvdFactors>,
}

impl RobustArtifacts {
    /// Builds every artifact at `(W, V, theta)` on the unit-noise network.
    pub fn build(net: &Network, w: &[CMat], v: &[CMat], theta: &CVec) -> Result<RobustArtifacts> {
        let ch = &net.ch;
        let mb = ch.tx_dim();
        let k_users = w.len();
        let r_re = net.cfg.redundancy_rate;
        let g = &ch.g;
        let lift = |m: &CMat| -> Result<(CMat, SvdFactors)> {
            let middle = hermitian_part(&(g * m * g.adjoint()));
            let s = sandwich(&middle, theta);
            Ok((lift_quadratic(m, g, theta, &s), SvdFactors::new(&middle)?))
        };
        let mut out = RobustArtifacts {
            d: vec![],
            a: vec![],
            u: vec![],
            c: vec![],
            c_w: vec![],
            c_l: vec![],
            psi: net.psi,
            radius_sq: net.radius_sq.clone(),
            svd_d: vec![],
            svd_w: vec![],
            svd_l: vec![],
        };
        for k in 0..k_users {
            let dk = build_dk(w, v, k, r_re)?;
            let (ld, fd) = lift(&dk)?;
            let (lw, fw) = lift(&w[k])?;
            let (ll, fl) = lift(&interference_cov(w, v, k))?;
            let mut ar = vec![];
            let mut ur = vec![];
            let mut cr = vec![];
            for j in 0..ch.num_eves() {
                let (a, u, c) = outage_quadratic(&net.frame(j, &ld), &net.x_tilde[j], mb, net.errors.sigma_d[j], net.errors.sigma_f[j], r_re);
                ar.push(a);
                ur.push(u);
                cr.push(c);
            }
            out.d.push(dk);
            out.a.push(ar);
            out.u.push(ur);
            out.c.push(cr);
            out.c_w.push(lw);
            out.c_l.push(ll);
            out.svd_d.push(fd);
            out.svd_w.push(fw);
            out.svd_l.push(fl);
        }
        Ok(out)
    }
}

/// Worst-case Eve terms over the ball: `(max signal, min interference + 1)`.
pub fn worst_case_eve(net: &Network, c_w: &CMat, c_l: &CMat, j: usize) -> (f64, f64) {
    let x = &net.x_tilde[j];
    let r2 = net.radius_sq[j];
    let top = ball_extreme(&net.frame(j, c_w), x, r2, true).max(0.0);
    let bottom = ball_extreme(&net.frame(j, c_l), x, r2, false).max(0.0) + 1.0;
    (top, bottom)
}

/// Runs the robust alternating optimization on Eve channel estimates.
pub fn run_algorithm2(
    estimates: &ChannelSet,
    errors: &EveErrorModel,
    cfg: &ScenarioConfig,
    opts: &AlgorithmOptions,
) -> Result<RunOutput> {
    let net = Network::robust(estimates, errors, cfg)?;
    engine::run(&net, engine::Mode::Robust, opts)
}
