//! Dense primal-dual interior-point method with Nesterov-Todd scaling.
//!
//! Solves `min c'x  s.t.  Gx + s = h, Ax = b, s in K` where `K` is a product
//! of a nonnegative orthant, second-order cones and PSD cones in `svec`
//! form. Complex LMIs enter through their real symmetric embedding.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::model::{ConicProgram, ConstraintBody, MatrixId, ScalarId};
use crate::error::{Error, Result};
use crate::linalg::{real_embedding, real_part, smat, svec, svec_len, CMat, RMat, RVec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub feas_tol: f64,
    pub gap_tol: f64,
    /// Looser level accepted as `Inaccurate` when progress stalls.
    pub inaccurate_tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            feas_tol: 1e-7,
            gap_tol: 1e-7,
            inaccurate_tol: 1e-4,
            max_iters: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Inaccurate,
    SolverFailure,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Inaccurate => "inaccurate",
            SolveStatus::SolverFailure => "solver_failure",
        }
    }

    /// Whether the returned point may be used.
    pub fn is_usable(&self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Inaccurate)
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// Value of the maximized objective at `x`.
    pub objective: f64,
    pub iterations: usize,
    pub seconds: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

impl ConicSolution {
    pub fn scalar(&self, id: ScalarId) -> f64 {
        self.x[id.0]
    }

    pub fn matrix(&self, id: MatrixId) -> CMat {
        super::model::matrix_from_coords(&self.x[id.offset..id.offset + id.dim * id.dim], id.dim)
    }
}

/// A conic solver behind the common contract.
pub trait ConicBackend {
    fn name(&self) -> &str;
    fn solve(&self, program: &ConicProgram, options: &SolverOptions) -> Result<ConicSolution>;
}

/// The bundled interior-point backend.
#[derive(Debug, Clone, Copy, Default)]
pub struct InteriorPoint;

impl ConicBackend for InteriorPoint {
    fn name(&self) -> &str {
        "dense-ipm"
    }

    fn solve(&self, program: &ConicProgram, options: &SolverOptions) -> Result<ConicSolution> {
        program.validate()?;
        let start = Instant::now();
        let std_form = compile(program);
        let mut out = run(&std_form, options);
        out.objective = program.objective.eval(&out.x);
        out.seconds = start.elapsed().as_secs_f64();
        Ok(out)
    }
}

pub fn solve(program: &ConicProgram, options: &SolverOptions) -> Result<ConicSolution> {
    InteriorPoint.solve(program, options)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Cone {
    Orthant,
    Soc,
    /// Real symmetric block of the given order.
    Psd(usize),
}

#[derive(Debug, Clone)]
struct Block {
    cone: Cone,
    offset: usize,
    len: usize,
    cols: Vec<usize>,
    /// `len x cols.len()`
    g: RMat,
}

#[derive(Debug, Clone)]
struct StandardForm {
    n: usize,
    c: RVec,
    a: RMat,
    b: RVec,
    h: RVec,
    blocks: Vec<Block>,
    rows: usize,
    degree: usize,
}

/// Row of `s = constant + sum coef x`.
type Row = (BTreeMap<usize, f64>, f64);

fn row_of(terms: &[(usize, f64)], constant: f64) -> Row {
    let mut map = BTreeMap::new();
    for &(i, v) in terms {
        *map.entry(i).or_insert(0.0) += v;
    }
    (map, constant)
}

fn compile(p: &ConicProgram) -> StandardForm {
    let n = p.num_coords;
    let mut c = RVec::zeros(n);
    for &(i, v) in &p.objective.terms {
        c[i] -= v;
    }

    let mut eq_rows: Vec<Row> = Vec::new();
    let mut lin_rows: Vec<Row> = Vec::new();
    let mut socs: Vec<Vec<Row>> = Vec::new();
    let mut psds: Vec<(usize, Vec<Row>)> = Vec::new();

    for (coord, lo, hi) in p.bounds() {
        if let Some(l) = lo {
            lin_rows.push(row_of(&[(coord, 1.0)], -l));
        }
        if let Some(u) = hi {
            lin_rows.push(row_of(&[(coord, -1.0)], u));
        }
    }
    for con in &p.constraints {
        match &con.body {
            ConstraintBody::LinearEq { expr } => eq_rows.push(row_of(&expr.terms, expr.constant)),
            ConstraintBody::LinearGe { expr } => lin_rows.push(row_of(&expr.terms, expr.constant)),
            ConstraintBody::Soc { t, x } => {
                let mut rows = vec![row_of(&t.terms, t.constant)];
                for r in 0..x.len() {
                    let terms: Vec<(usize, f64)> = x.terms.iter().map(|(i, col)| (*i, col[r])).collect();
                    rows.push(row_of(&terms, x.constant[r]));
                }
                socs.push(rows);
            }
            ConstraintBody::Lmi { expr } => {
                let real = expr.is_real();
                let embed = |m: &CMat| if real { real_part(m) } else { real_embedding(m) };
                let order = if real { expr.dim } else { 2 * expr.dim };
                let len = svec_len(order);
                let mut buf = vec![0.0; len];
                svec(&embed(&expr.constant), &mut buf);
                let mut rows: Vec<Row> = buf.iter().map(|&v| (BTreeMap::new(), v)).collect();
                for (coord, m) in &expr.terms {
                    svec(&embed(m), &mut buf);
                    for (r, &v) in buf.iter().enumerate() {
                        if v != 0.0 {
                            *rows[r].0.entry(*coord).or_insert(0.0) += v;
                        }
                    }
                }
                psds.push((order, rows));
            }
        }
    }

    let m = eq_rows.len();
    let mut a = RMat::zeros(m, n);
    let mut b = RVec::zeros(m);
    for (r, (terms, constant)) in eq_rows.iter().enumerate() {
        for (&i, &v) in terms {
            a[(r, i)] = v;
        }
        b[r] = -constant;
    }

    let mut blocks = Vec::new();
    let mut h_all: Vec<f64> = Vec::new();
    let mut degree = 0;
    let mut push = |cone: Cone, rows: &[Row], blocks: &mut Vec<Block>| {
        let mut cols: Vec<usize> = rows.iter().flat_map(|r| r.0.keys().copied()).collect();
        cols.sort_unstable();
        cols.dedup();
        let index: BTreeMap<usize, usize> = cols.iter().enumerate().map(|(j, &c)| (c, j)).collect();
        let mut g = RMat::zeros(rows.len(), cols.len());
        for (r, (terms, constant)) in rows.iter().enumerate() {
            for (&i, &v) in terms {
                g[(r, index[&i])] = -v;
            }
            h_all.push(*constant);
        }
        let offset = h_all.len() - rows.len();
        blocks.push(Block {
            cone,
            offset,
            len: rows.len(),
            cols,
            g,
        });
    };
    if !lin_rows.is_empty() {
        degree += lin_rows.len();
        push(Cone::Orthant, &lin_rows, &mut blocks);
    }
    for rows in &socs {
        degree += 1;
        push(Cone::Soc, rows, &mut blocks);
    }
    for (order, rows) in &psds {
        degree += order;
        push(Cone::Psd(*order), rows, &mut blocks);
    }
    let rows = h_all.len();
    StandardForm {
        n,
        c,
        a,
        b,
        h: RVec::from_vec(h_all),
        blocks,
        rows,
        degree,
    }
}

impl StandardForm {
    fn g_mul(&self, x: &RVec) -> RVec {
        let mut out = RVec::zeros(self.rows);
        for blk in &self.blocks {
            let xs = RVec::from_iterator(blk.cols.len(), blk.cols.iter().map(|&c| x[c]));
            out.rows_mut(blk.offset, blk.len).copy_from(&(&blk.g * xs));
        }
        out
    }

    fn gt_mul(&self, z: &RVec) -> RVec {
        let mut out = RVec::zeros(self.n);
        for blk in &self.blocks {
            let v = blk.g.tr_mul(&z.rows(blk.offset, blk.len));
            for (j, &c) in blk.cols.iter().enumerate() {
                out[c] += v[j];
            }
        }
        out
    }
}

/// Nesterov-Todd scaling of one cone block.
#[derive(Debug, Clone)]
enum Scaling {
    Orthant { d: Vec<f64> },
    Soc { beta: f64, w: Vec<f64> },
    Psd { order: usize, r: RMat, rinv: RMat },
}

fn soc_jnorm(v: &[f64]) -> f64 {
    let tail: f64 = v[1..].iter().map(|a| a * a).sum();
    v[0] * v[0] - tail
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `W v` (or `W^{-1} v` when `inverse`) for the symmetric SOC scaling.
fn soc_apply(beta: f64, w: &[f64], v: &[f64], inverse: bool) -> Vec<f64> {
    let w1 = &w[1..];
    let v1 = &v[1..];
    let sign = if inverse { -1.0 } else { 1.0 };
    let w1v1 = dot(w1, v1);
    let scale = if inverse { 1.0 / beta } else { beta };
    let mut out = vec![0.0; v.len()];
    out[0] = scale * (w[0] * v[0] + sign * w1v1);
    let coef = sign * v[0] + w1v1 / (1.0 + w[0]);
    for i in 0..w1.len() {
        out[i + 1] = scale * (v1[i] + coef * w1[i]);
    }
    out
}

#[derive(Debug, Clone, Copy)]
enum Op {
    W,
    Wt,
    Winv,
    Wit,
}

impl Scaling {
    fn compute(cone: Cone, s: &[f64], z: &[f64]) -> Option<(Scaling, Vec<f64>)> {
        match cone {
            Cone::Orthant => {
                if s.iter().chain(z).any(|&v| !(v > 0.0)) {
                    return None;
                }
                let d = s.iter().zip(z).map(|(a, b)| (a / b).sqrt()).collect();
                let lam = s.iter().zip(z).map(|(a, b)| (a * b).sqrt()).collect();
                Some((Scaling::Orthant { d }, lam))
            }
            Cone::Soc => {
                let sn = soc_jnorm(s);
                let zn = soc_jnorm(z);
                if !(sn > 0.0 && zn > 0.0 && s[0] > 0.0 && z[0] > 0.0) {
                    return None;
                }
                let (sn, zn) = (sn.sqrt(), zn.sqrt());
                let sb: Vec<f64> = s.iter().map(|v| v / sn).collect();
                let zb: Vec<f64> = z.iter().map(|v| v / zn).collect();
                let gamma = ((1.0 + dot(&sb, &zb)) / 2.0).sqrt();
                let mut w: Vec<f64> = sb.iter().zip(&zb).map(|(a, b)| (a - b) / (2.0 * gamma)).collect();
                w[0] = (sb[0] + zb[0]) / (2.0 * gamma);
                let beta = (sn / zn).sqrt();
                let lam = soc_apply(beta, &w, z, false);
                Some((Scaling::Soc { beta, w }, lam))
            }
            Cone::Psd(order) => {
                let sm = smat(s, order);
                let zm = smat(z, order);
                let l1 = sm.cholesky()?.l();
                let l2 = zm.cholesky()?.l();
                let svd = (l2.transpose() * &l1).svd(true, true);
                let u = svd.u?;
                let vt = svd.v_t?;
                let sig = svd.singular_values;
                if sig.iter().any(|&v| !(v > 0.0)) {
                    return None;
                }
                let _ = u;
                let inv_sqrt = RMat::from_diagonal(&sig.map(|v| 1.0 / v.sqrt()));
                let sqrt = RMat::from_diagonal(&sig.map(|v| v.sqrt()));
                let r = &l1 * vt.transpose() * inv_sqrt;
                let l1inv = l1.clone().solve_lower_triangular(&RMat::identity(order, order))?;
                let rinv = sqrt * vt * l1inv;
                let mut lam = vec![0.0; svec_len(order)];
                svec(&RMat::from_diagonal(&sig), &mut lam);
                Some((Scaling::Psd { order, r, rinv }, lam))
            }
        }
    }

    fn apply(&self, op: Op, v: &[f64]) -> Vec<f64> {
        match self {
            Scaling::Orthant { d } => match op {
                Op::W | Op::Wt => v.iter().zip(d).map(|(a, b)| a * b).collect(),
                Op::Winv | Op::Wit => v.iter().zip(d).map(|(a, b)| a / b).collect(),
            },
            Scaling::Soc { beta, w } => match op {
                Op::W | Op::Wt => soc_apply(*beta, w, v, false),
                Op::Winv | Op::Wit => soc_apply(*beta, w, v, true),
            },
            Scaling::Psd { order, r, rinv } => {
                let x = smat(v, *order);
                let y = match op {
                    Op::W => r.transpose() * x * r,
                    Op::Wt => r * x * r.transpose(),
                    Op::Winv => rinv.transpose() * x * rinv,
                    Op::Wit => rinv * x * rinv.transpose(),
                };
                let mut out = vec![0.0; v.len()];
                svec(&y, &mut out);
                out
            }
        }
    }
}

/// Jordan product `u o v` within a cone.
fn jordan(cone: Cone, u: &[f64], v: &[f64]) -> Vec<f64> {
    match cone {
        Cone::Orthant => u.iter().zip(v).map(|(a, b)| a * b).collect(),
        Cone::Soc => {
            let mut out = vec![0.0; u.len()];
            out[0] = dot(u, v);
            for i in 1..u.len() {
                out[i] = u[0] * v[i] + v[0] * u[i];
            }
            out
        }
        Cone::Psd(order) => {
            let a = smat(u, order);
            let b = smat(v, order);
            let p = (&a * &b + &b * &a) * 0.5;
            let mut out = vec![0.0; u.len()];
            svec(&p, &mut out);
            out
        }
    }
}

/// Solves `lam o x = r` where `lam` is the scaled point (diagonal for PSD).
fn jordan_solve(cone: Cone, lam: &[f64], r: &[f64]) -> Vec<f64> {
    match cone {
        Cone::Orthant => r.iter().zip(lam).map(|(a, b)| a / b).collect(),
        Cone::Soc => {
            let det = soc_jnorm(lam);
            let l1r1 = dot(&lam[1..], &r[1..]);
            let u0 = (lam[0] * r[0] - l1r1) / det;
            let mut out = vec![0.0; r.len()];
            out[0] = u0;
            for i in 1..r.len() {
                out[i] = (r[i] - u0 * lam[i]) / lam[0];
            }
            out
        }
        Cone::Psd(order) => {
            let l = psd_diag(lam, order);
            let mut x = smat(r, order);
            for i in 0..order {
                for j in 0..order {
                    x[(i, j)] *= 2.0 / (l[i] + l[j]);
                }
            }
            let mut out = vec![0.0; r.len()];
            svec(&x, &mut out);
            out
        }
    }
}

fn psd_diag(v: &[f64], order: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(order);
    let mut idx = 0;
    for j in 0..order {
        out.push(v[idx]);
        idx += order - j;
    }
    out
}

fn identity(cone: Cone, len: usize) -> Vec<f64> {
    let mut e = vec![0.0; len];
    match cone {
        Cone::Orthant => e.iter_mut().for_each(|v| *v = 1.0),
        Cone::Soc => e[0] = 1.0,
        Cone::Psd(order) => {
            let mut idx = 0;
            for j in 0..order {
                e[idx] = 1.0;
                idx += order - j;
            }
        }
    }
    e
}

/// Smallest "eigenvalue" of `v` with respect to the cone.
fn min_eig(cone: Cone, v: &[f64]) -> f64 {
    match cone {
        Cone::Orthant => v.iter().copied().fold(f64::INFINITY, f64::min),
        Cone::Soc => v[0] - v[1..].iter().map(|a| a * a).sum::<f64>().sqrt(),
        Cone::Psd(order) => crate::linalg::min_eigenvalue_sym(&smat(v, order)),
    }
}

/// Largest `alpha` with `lam + alpha d` in the cone, for scaled `lam`.
fn max_step(cone: Cone, lam: &[f64], d: &[f64]) -> f64 {
    match cone {
        Cone::Orthant => lam
            .iter()
            .zip(d)
            .filter(|(_, &di)| di < 0.0)
            .map(|(l, di)| -l / di)
            .fold(f64::INFINITY, f64::min),
        Cone::Soc => {
            let nrm = soc_jnorm(lam).sqrt();
            let lb: Vec<f64> = lam.iter().map(|v| v / nrm).collect();
            // Lorentz boost sending lam / nrm to the identity element.
            let mut q = soc_apply(1.0, &lb, d, true);
            q.iter_mut().for_each(|v| *v /= nrm);
            let t = q[1..].iter().map(|a| a * a).sum::<f64>().sqrt() - q[0];
            if t > 0.0 {
                1.0 / t
            } else {
                f64::INFINITY
            }
        }
        Cone::Psd(order) => {
            let l = psd_diag(lam, order);
            let mut m = smat(d, order);
            for i in 0..order {
                for j in 0..order {
                    m[(i, j)] /= (l[i] * l[j]).sqrt();
                }
            }
            let e = crate::linalg::min_eigenvalue_sym(&m);
            if e < 0.0 {
                -1.0 / e
            } else {
                f64::INFINITY
            }
        }
    }
}

struct Kkt {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    exact: RMat,
    n: usize,
}

impl Kkt {
    fn new(h: &RMat, a: &RMat) -> Option<Kkt> {
        let n = h.nrows();
        let m = a.nrows();
        let mut exact = RMat::zeros(n + m, n + m);
        exact.view_mut((0, 0), (n, n)).copy_from(h);
        exact.view_mut((n, 0), (m, n)).copy_from(a);
        exact.view_mut((0, n), (n, m)).copy_from(&a.transpose());
        let scale = (0..n).map(|i| h[(i, i)].abs()).fold(1.0, f64::max);
        let reg = 1e-13 * scale;
        let mut k = exact.clone();
        for i in 0..n {
            k[(i, i)] += reg;
        }
        for i in n..n + m {
            k[(i, i)] -= reg;
        }
        let lu = k.lu();
        if !lu.is_invertible() {
            return None;
        }
        Some(Kkt { lu, exact, n })
    }

    fn solve(&self, rhs: &RVec) -> Option<RVec> {
        let mut x = self.lu.solve(rhs)?;
        for _ in 0..3 {
            let r = rhs - &self.exact * &x;
            if r.norm() <= 1e-15 * rhs.norm().max(1e-300) {
                break;
            }
            x += self.lu.solve(&r)?;
        }
        x.iter().all(|v| v.is_finite()).then_some(x)
    }

    fn split(&self, v: RVec) -> (RVec, RVec) {
        let n = self.n;
        (v.rows(0, n).into_owned(), v.rows(n, v.len() - n).into_owned())
    }
}

struct Residuals {
    pres: f64,
    dres: f64,
    gap: f64,
    relgap: f64,
    pinf: f64,
    dinf: f64,
}

fn residuals(sf: &StandardForm, x: &RVec, y: &RVec, s: &RVec, z: &RVec) -> (Residuals, RVec, RVec, RVec) {
    let gx = sf.g_mul(x);
    let gtz = sf.gt_mul(z);
    let aty = sf.a.tr_mul(y);
    let ax = &sf.a * x;
    let rx = &aty + &gtz + &sf.c;
    let ry = &ax - &sf.b;
    let rz = &gx + s - &sf.h;
    let nb = sf.b.norm().max(1.0);
    let nh = sf.h.norm().max(1.0);
    let nc = sf.c.norm().max(1.0);
    let pres = (ry.norm() / nb).max(rz.norm() / nh);
    let dres = rx.norm() / nc;
    let pcost = sf.c.dot(x);
    let dcost = -sf.h.dot(z) - sf.b.dot(y);
    let gap = s.dot(z);
    let relgap = if pcost < 0.0 {
        gap / -pcost
    } else if dcost > 0.0 {
        gap / dcost
    } else {
        f64::INFINITY
    };
    let hz_by = sf.h.dot(z) + sf.b.dot(y);
    let pinf = if hz_by < 0.0 {
        (&aty + &gtz).norm() / nc / -hz_by
    } else {
        f64::INFINITY
    };
    let dinf = if pcost < 0.0 {
        (ax.norm() / nb).max((&gx + s).norm() / nh) / -pcost
    } else {
        f64::INFINITY
    };
    (
        Residuals {
            pres,
            dres,
            gap,
            relgap,
            pinf,
            dinf,
        },
        rx,
        ry,
        rz,
    )
}

fn block_slice(v: &RVec, blk: &Block) -> Vec<f64> {
    v.rows(blk.offset, blk.len).iter().copied().collect()
}

fn run(sf: &StandardForm, opts: &SolverOptions) -> ConicSolution {
    let n = sf.n;
    let finish = |status: SolveStatus, x: &RVec, iterations: usize, r: Option<&Residuals>| {
        if let Some(r) = r {
            log::debug!(
                "ipm: {} after {iterations} iterations (pres {:.2e}, dres {:.2e}, gap {:.2e}, relgap {:.2e})",
                status.as_str(),
                r.pres,
                r.dres,
                r.gap,
                r.relgap
            );
        }
        ConicSolution {
        status,
        x: x.iter().copied().collect(),
        objective: 0.0,
        iterations,
        seconds: 0.0,
        primal_residual: r.map(|r| r.pres).unwrap_or(f64::NAN),
        dual_residual: r.map(|r| r.dres).unwrap_or(f64::NAN),
        gap: r.map(|r| r.gap).unwrap_or(f64::NAN),
    }
    };

    // Starting point from least-squares solves with identity scaling.
    let mut gtg = RMat::zeros(n, n);
    for blk in &sf.blocks {
        let local = blk.g.tr_mul(&blk.g);
        for (i, &ci) in blk.cols.iter().enumerate() {
            for (j, &cj) in blk.cols.iter().enumerate() {
                gtg[(ci, cj)] += local[(i, j)];
            }
        }
    }
    let Some(kkt0) = Kkt::new(&gtg, &sf.a) else {
        return finish(SolveStatus::SolverFailure, &RVec::zeros(n), 0, None);
    };
    let stack = |top: RVec, bottom: &RVec| {
        let mut v = RVec::zeros(top.len() + bottom.len());
        v.rows_mut(0, top.len()).copy_from(&top);
        v.rows_mut(top.len(), bottom.len()).copy_from(bottom);
        v
    };
    let Some(primal) = kkt0.solve(&stack(sf.gt_mul(&sf.h), &sf.b)) else {
        return finish(SolveStatus::SolverFailure, &RVec::zeros(n), 0, None);
    };
    let (mut x, _) = kkt0.split(primal);
    let mut s = &sf.h - sf.g_mul(&x);
    let Some(dual) = kkt0.solve(&stack(-sf.c.clone(), &RVec::zeros(sf.b.len()))) else {
        return finish(SolveStatus::SolverFailure, &x, 0, None);
    };
    let (xd, mut y) = kkt0.split(dual);
    let mut z = sf.g_mul(&xd);
    for v in [&mut s, &mut z] {
        let t = -sf
            .blocks
            .iter()
            .map(|blk| min_eig(blk.cone, &block_slice(v, blk)))
            .fold(f64::INFINITY, f64::min);
        if sf.blocks.is_empty() {
            break;
        }
        if t >= -1e-8 * v.norm().max(1.0) {
            for blk in &sf.blocks {
                let e = identity(blk.cone, blk.len);
                for (i, ei) in e.iter().enumerate() {
                    v[blk.offset + i] += (1.0 + t) * ei;
                }
            }
        }
    }

    // Homogeneous self-dual embedding: (x, y, s, z) are scaled by tau and
    // kappa carries the duality gap, so infeasible starts stay well centered.
    let (mut tau, mut kappa) = (1.0f64, 1.0f64);
    let degree = sf.degree as f64 + 1.0;
    let unscaled = |x: &RVec, y: &RVec, s: &RVec, z: &RVec, tau: f64| {
        residuals(sf, &(x / tau), &(y / tau), &(s / tau), &(z / tau))
    };
    let merit = |r: &Residuals| r.pres.max(r.dres).max(r.gap.min(r.relgap));
    // Late iterations can lose accuracy, so the best point seen is kept.
    let mut best: Option<(RVec, Residuals, usize)> = None;
    let mut iters = 0;
    for iter in 0..opts.max_iters {
        iters = iter;
        let (res, ..) = unscaled(&x, &y, &s, &z, tau);
        log::trace!(
            "ipm {iter}: pres {:.2e} dres {:.2e} gap {:.2e} tau {:.2e} kappa {:.2e}",
            res.pres,
            res.dres,
            res.gap,
            tau,
            kappa
        );
        if !(res.pres.is_finite() && res.dres.is_finite() && res.gap.is_finite()) {
            break;
        }
        if res.pres <= opts.feas_tol && res.dres <= opts.feas_tol && (res.gap <= opts.gap_tol || res.relgap <= opts.gap_tol)
        {
            return finish(SolveStatus::Optimal, &(&x / tau), iter, Some(&res));
        }
        let (cert, ..) = residuals(sf, &x, &y, &s, &z);
        if cert.pinf <= opts.feas_tol {
            return finish(SolveStatus::Infeasible, &(&x / tau), iter, Some(&res));
        }
        if cert.dinf <= opts.feas_tol {
            return finish(SolveStatus::SolverFailure, &(&x / tau), iter, Some(&res));
        }
        if sf.blocks.is_empty() {
            break;
        }
        if merit(&res).is_finite() && best.as_ref().is_none_or(|(_, b, _)| merit(&res) < merit(b)) {
            best = Some((&x / tau, res, iter));
        } else if best.as_ref().is_some_and(|(_, _, at)| iter >= at + 8) {
            break;
        }
        let rx = sf.a.tr_mul(&y) + sf.gt_mul(&z) + &sf.c * tau;
        let ry = &sf.a * &x - &sf.b * tau;
        let rz = &s + sf.g_mul(&x) - &sf.h * tau;
        let rt = kappa + sf.c.dot(&x) + sf.b.dot(&y) + sf.h.dot(&z);

        let mut scalings = Vec::with_capacity(sf.blocks.len());
        let mut lam = Vec::with_capacity(sf.blocks.len());
        let mut ok = true;
        for blk in &sf.blocks {
            match Scaling::compute(blk.cone, &block_slice(&s, blk), &block_slice(&z, blk)) {
                Some((w, l)) => {
                    scalings.push(w);
                    lam.push(l);
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }

        // Reduced Newton matrix sum (W^{-T} G)^T (W^{-T} G).
        let mut hmat = RMat::zeros(n, n);
        for (blk, w) in sf.blocks.iter().zip(&scalings) {
            let k = blk.cols.len();
            if k == 0 {
                continue;
            }
            let mut scaled = RMat::zeros(blk.len, k);
            for j in 0..k {
                let col: Vec<f64> = blk.g.column(j).iter().copied().collect();
                let sc = w.apply(Op::Wit, &col);
                scaled.set_column(j, &RVec::from_vec(sc));
            }
            let local = scaled.tr_mul(&scaled);
            for (i, &ci) in blk.cols.iter().enumerate() {
                for (j, &cj) in blk.cols.iter().enumerate() {
                    hmat[(ci, cj)] += local[(i, j)];
                }
            }
        }
        let Some(kkt) = Kkt::new(&hmat, &sf.a) else {
            break;
        };

        let apply_all = |op: Op, v: &RVec| -> RVec {
            let mut out = RVec::zeros(sf.rows);
            for (blk, w) in sf.blocks.iter().zip(&scalings) {
                let r = w.apply(op, &block_slice(v, blk));
                out.rows_mut(blk.offset, blk.len).copy_from_slice(&r);
            }
            out
        };
        // Solves [0 A' G'; A 0 0; G 0 -W'W] (dx, dy, dz) = (bx, by, bz).
        let newton = |bx: &RVec, by: &RVec, bz: &RVec| -> Option<(RVec, RVec, RVec)> {
            let wbz = apply_all(Op::Winv, &apply_all(Op::Wit, bz));
            let rhs = stack(bx + sf.gt_mul(&wbz), by);
            let (dx, dy) = kkt.split(kkt.solve(&rhs)?);
            let dz = apply_all(Op::Winv, &apply_all(Op::Wit, &(sf.g_mul(&dx) - bz)));
            Some((dx, dy, dz))
        };
        // Direction of the tau column, shared by predictor and corrector.
        let Some((x1, y1, z1)) = newton(&(-&sf.c), &sf.b, &sf.h) else {
            break;
        };
        let tau_coef = -kappa / tau + sf.c.dot(&x1) + sf.b.dot(&y1) + sf.h.dot(&z1);
        // Full direction for residual weight eta, scaled complementarity target t
        // and tau/kappa target rk.
        let direction = |eta: f64, t: &RVec, rk: f64| -> Option<(RVec, RVec, RVec, f64, f64)> {
            let bz = -(&rz * eta) - apply_all(Op::Wt, t);
            let (x0, y0, z0) = newton(&(-(&rx * eta)), &(-(&ry * eta)), &bz)?;
            let rhs = -eta * rt - rk / tau - (sf.c.dot(&x0) + sf.b.dot(&y0) + sf.h.dot(&z0));
            let dtau = rhs / tau_coef;
            if !dtau.is_finite() {
                return None;
            }
            let dkappa = (rk - kappa * dtau) / tau;
            Some((x0 + &x1 * dtau, y0 + &y1 * dtau, z0 + &z1 * dtau, dtau, dkappa))
        };
        let concat = |parts: &[Vec<f64>]| RVec::from_iterator(sf.rows, parts.iter().flatten().copied());
        let step_of = |ds_s: &RVec, dz_s: &RVec, dtau: f64, dkappa: f64| -> f64 {
            let mut a = f64::INFINITY;
            for (blk, l) in sf.blocks.iter().zip(&lam) {
                a = a.min(max_step(blk.cone, l, &block_slice(ds_s, blk)));
                a = a.min(max_step(blk.cone, l, &block_slice(dz_s, blk)));
            }
            for (v, dv) in [(tau, dtau), (kappa, dkappa)] {
                if dv < 0.0 {
                    a = a.min(-v / dv);
                }
            }
            a
        };

        let lam_v = concat(&lam);
        let mu = (lam_v.norm_squared() + tau * kappa) / degree;

        // Predictor.
        let t_aff = -lam_v.clone();
        let Some((_, _, dz_a, dtau_a, dkappa_a)) = direction(1.0, &t_aff, -tau * kappa) else {
            break;
        };
        let dz_s_a = apply_all(Op::W, &dz_a);
        let ds_s_a = &t_aff - &dz_s_a;
        let alpha_aff = step_of(&ds_s_a, &dz_s_a, dtau_a, dkappa_a).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3);

        // Corrector.
        let mut rc_parts = Vec::with_capacity(sf.blocks.len());
        for (bi, blk) in sf.blocks.iter().enumerate() {
            let l = &lam[bi];
            let ll = jordan(blk.cone, l, l);
            let cross = jordan(blk.cone, &block_slice(&ds_s_a, blk), &block_slice(&dz_s_a, blk));
            let e = identity(blk.cone, blk.len);
            let r: Vec<f64> = (0..blk.len).map(|i| -ll[i] - cross[i] + sigma * mu * e[i]).collect();
            rc_parts.push(jordan_solve(blk.cone, l, &r));
        }
        let t = concat(&rc_parts);
        let rk = -tau * kappa - dtau_a * dkappa_a + sigma * mu;
        let Some((dx, dy, dz, dtau, dkappa)) = direction(1.0 - sigma, &t, rk) else {
            break;
        };
        let dz_s = apply_all(Op::W, &dz);
        let ds_s = &t - &dz_s;
        let alpha = (0.99 * step_of(&ds_s, &dz_s, dtau, dkappa)).min(1.0);
        log::trace!("ipm {iter}: alpha_aff {alpha_aff:.2e} sigma {sigma:.2e} alpha {alpha:.2e}");
        if !(alpha > 1e-12) {
            break;
        }
        let ds = apply_all(Op::Wt, &ds_s);
        x += &dx * alpha;
        y += &dy * alpha;
        s += &ds * alpha;
        z += &dz * alpha;
        tau += dtau * alpha;
        kappa += dkappa * alpha;
        iters = iter + 1;
    }

    let (res, ..) = unscaled(&x, &y, &s, &z, tau);
    let mut x = &x / tau;
    let mut res = res;
    if let Some((bx, bres, _)) = best {
        if !(merit(&res) <= merit(&bres)) {
            x = bx;
            res = bres;
        }
    }
    let tol = opts.inaccurate_tol;
    let status = if res.pres <= tol && res.dres <= tol && (res.gap <= tol || res.relgap <= tol) {
        SolveStatus::Inaccurate
    } else {
        SolveStatus::SolverFailure
    };
    finish(status, &x, iters, Some(&res))
}

/// Helper kept for error reporting from callers that require a usable point.
pub fn require_usable(sol: &ConicSolution) -> Result<()> {
    match sol.status {
        SolveStatus::Optimal | SolveStatus::Inaccurate => Ok(()),
        SolveStatus::Infeasible => Err(Error::Infeasible),
        SolveStatus::SolverFailure => Err(Error::SolverFailure(format!(
            "residuals pres={:.2e} dres={:.2e} gap={:.2e}",
            sol.primal_residual, sol.dual_residual, sol.gap
        ))),
    }
}
