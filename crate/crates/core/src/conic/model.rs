//! Solver-agnostic conic programs over real scalars and Hermitian matrices.
//!
//! Every variable occupies a contiguous range of real coordinates. A scalar
//! takes one coordinate; an `n x n` Hermitian matrix takes `n^2`: the `n`
//! diagonal entries followed by `(Re, Im)` of each strictly upper entry in
//! row-major order. Expressions are affine maps of these coordinates and
//! are built by probing an affine closure at the basis points.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_asymmetry, hermitian_part, min_eigenvalue_herm, CMat, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScalarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatrixId {
    pub offset: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    Scalar(ScalarId),
    Matrix(MatrixId),
}

impl From<ScalarId> for Var {
    fn from(id: ScalarId) -> Var {
        Var::Scalar(id)
    }
}

impl From<MatrixId> for Var {
    fn from(id: MatrixId) -> Var {
        Var::Matrix(id)
    }
}

impl Var {
    fn coords(&self) -> std::ops::Range<usize> {
        match *self {
            Var::Scalar(id) => id.0..id.0 + 1,
            Var::Matrix(m) => m.offset..m.offset + m.dim * m.dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarDecl {
    Scalar {
        name: String,
        coord: usize,
        lower: Option<f64>,
        upper: Option<f64>,
    },
    Matrix {
        name: String,
        offset: usize,
        dim: usize,
    },
}

/// `constant + sum coef * x[coord]`
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RealAffine {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl RealAffine {
    pub fn constant(c: f64) -> RealAffine {
        RealAffine { constant: c, terms: Vec::new() }
    }

    pub fn scalar(id: ScalarId, coef: f64) -> RealAffine {
        RealAffine { constant: 0.0, terms: vec![(id.0, coef)] }
    }

    /// `constant + sum coef * scalar`
    pub fn linear(constant: f64, terms: &[(ScalarId, f64)]) -> RealAffine {
        RealAffine {
            constant,
            terms: terms.iter().map(|&(id, c)| (id.0, c)).collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }

    pub fn plus(mut self, other: &RealAffine) -> RealAffine {
        self.constant += other.constant;
        self.terms.extend_from_slice(&other.terms);
        self
    }

    pub fn scaled(mut self, factor: f64) -> RealAffine {
        self.constant *= factor;
        for t in self.terms.iter_mut() {
            t.1 *= factor;
        }
        self
    }
}

/// Vector-valued affine map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VecAffine {
    pub constant: Vec<f64>,
    pub terms: Vec<(usize, Vec<f64>)>,
}

impl VecAffine {
    pub fn len(&self) -> usize {
        self.constant.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constant.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.constant.clone();
        for (i, col) in &self.terms {
            for (o, c) in out.iter_mut().zip(col) {
                *o += c * x[*i];
            }
        }
        out
    }

    pub fn from_rows(rows: &[RealAffine]) -> VecAffine {
        let mut coords = BTreeSet::new();
        for r in rows {
            coords.extend(r.terms.iter().map(|t| t.0));
        }
        let terms = coords
            .into_iter()
            .map(|c| {
                let col = rows
                    .iter()
                    .map(|r| r.terms.iter().filter(|t| t.0 == c).map(|t| t.1).sum())
                    .collect();
                (c, col)
            })
            .collect();
        VecAffine {
            constant: rows.iter().map(|r| r.constant).collect(),
            terms,
        }
    }
}

/// Hermitian-matrix-valued affine map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermAffine {
    pub dim: usize,
    #[serde(with = "cmat_rows")]
    pub constant: CMat,
    #[serde(with = "cmat_terms")]
    pub terms: Vec<(usize, CMat)>,
}

impl HermAffine {
    pub fn eval(&self, x: &[f64]) -> CMat {
        let mut out = self.constant.clone();
        for (i, m) in &self.terms {
            if x[*i] != 0.0 {
                out += m * C64::new(x[*i], 0.0);
            }
        }
        out
    }

    /// True when every coefficient matrix is real.
    pub fn is_real(&self) -> bool {
        std::iter::once(&self.constant)
            .chain(self.terms.iter().map(|t| &t.1))
            .all(|m| m.iter().all(|v| v.im == 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintClass {
    /// Linear and matrix-inequality constraints of the optimization model.
    Lmi,
    /// Second-order cone constraints of the optimization model.
    Soc,
    /// Modeling devices that are not constraints of the model itself.
    Auxiliary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintBody {
    /// `expr >= 0`
    LinearGe { expr: RealAffine },
    /// `expr = 0`
    LinearEq { expr: RealAffine },
    /// `||x|| <= t`
    Soc { t: RealAffine, x: VecAffine },
    /// `expr` positive semidefinite.
    Lmi { expr: HermAffine },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub label: String,
    pub class: ConstraintClass,
    pub body: ConstraintBody,
}

impl Constraint {
    /// Amount by which `x` violates the constraint (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        match &self.body {
            ConstraintBody::LinearGe { expr } => (-expr.eval(x)).max(0.0),
            ConstraintBody::LinearEq { expr } => expr.eval(x).abs(),
            ConstraintBody::Soc { t, x: v } => {
                let norm = v.eval(x).iter().map(|a| a * a).sum::<f64>().sqrt();
                (norm - t.eval(x)).max(0.0)
            }
            ConstraintBody::Lmi { expr } => (-min_eigenvalue_herm(&expr.eval(x))).max(0.0),
        }
    }
}

/// Number of distinct constraint labels per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Census {
    pub lmi: usize,
    pub soc: usize,
    pub auxiliary: usize,
}

/// Read access to a point in coordinate space.
pub struct Env<'a> {
    x: &'a [f64],
}

impl<'a> Env<'a> {
    pub fn new(x: &'a [f64]) -> Env<'a> {
        Env { x }
    }

    pub fn scalar(&self, id: ScalarId) -> f64 {
        self.x[id.0]
    }

    pub fn matrix(&self, id: MatrixId) -> CMat {
        matrix_from_coords(&self.x[id.offset..id.offset + id.dim * id.dim], id.dim)
    }
}

pub fn matrix_from_coords(c: &[f64], n: usize) -> CMat {
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = C64::new(c[i], 0.0);
    }
    let mut at = n;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = C64::new(c[at], c[at + 1]);
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
            at += 2;
        }
    }
    m
}

pub fn matrix_to_coords(m: &CMat, out: &mut [f64]) {
    let n = m.nrows();
    for i in 0..n {
        out[i] = m[(i, i)].re;
    }
    let mut at = n;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            out[at] = v.re;
            out[at + 1] = v.im;
            at += 2;
        }
    }
}

/// A conic program with a maximized affine objective.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConicProgram {
    pub variables: Vec<VarDecl>,
    pub num_coords: usize,
    pub objective: RealAffine,
    pub constraints: Vec<Constraint>,
}

impl ConicProgram {
    pub fn new() -> ConicProgram {
        ConicProgram::default()
    }

    pub fn add_scalar(&mut self, name: impl Into<String>, lower: Option<f64>, upper: Option<f64>) -> ScalarId {
        let coord = self.num_coords;
        self.variables.push(VarDecl::Scalar {
            name: name.into(),
            coord,
            lower,
            upper,
        });
        self.num_coords += 1;
        ScalarId(coord)
    }

    pub fn free_scalar(&mut self, name: impl Into<String>) -> ScalarId {
        self.add_scalar(name, None, None)
    }

    pub fn nonneg_scalar(&mut self, name: impl Into<String>) -> ScalarId {
        self.add_scalar(name, Some(0.0), None)
    }

    /// Hermitian matrix variable. Positive semidefiniteness is a separate constraint.
    pub fn add_matrix(&mut self, name: impl Into<String>, dim: usize) -> MatrixId {
        let offset = self.num_coords;
        self.variables.push(VarDecl::Matrix {
            name: name.into(),
            offset,
            dim,
        });
        self.num_coords += dim * dim;
        MatrixId { offset, dim }
    }

    pub fn set_objective(&mut self, objective: RealAffine) {
        self.objective = objective;
    }

    pub fn add(&mut self, label: impl Into<String>, class: ConstraintClass, body: ConstraintBody) {
        self.constraints.push(Constraint {
            label: label.into(),
            class,
            body,
        });
    }

    pub fn add_ge(&mut self, label: impl Into<String>, class: ConstraintClass, expr: RealAffine) {
        self.add(label, class, ConstraintBody::LinearGe { expr });
    }

    pub fn add_eq(&mut self, label: impl Into<String>, class: ConstraintClass, expr: RealAffine) {
        self.add(label, class, ConstraintBody::LinearEq { expr });
    }

    pub fn add_soc(&mut self, label: impl Into<String>, class: ConstraintClass, t: RealAffine, x: VecAffine) {
        self.add(label, class, ConstraintBody::Soc { t, x });
    }

    pub fn add_lmi(&mut self, label: impl Into<String>, class: ConstraintClass, expr: HermAffine) {
        self.add(label, class, ConstraintBody::Lmi { expr });
    }

    /// `X` positive semidefinite.
    pub fn add_psd(&mut self, label: impl Into<String>, class: ConstraintClass, m: MatrixId) {
        let expr = self.herm_affine(m.dim, &[m.into()], |env| env.matrix(m));
        self.add_lmi(label, class, expr);
    }

    fn probe<T>(&self, deps: &[Var], f: impl Fn(&Env) -> T, mut diff: impl FnMut(usize, &T, &T)) -> T {
        let mut x = vec![0.0; self.num_coords];
        let base = f(&Env::new(&x));
        let mut seen = BTreeSet::new();
        for d in deps {
            for c in d.coords() {
                if !seen.insert(c) {
                    continue;
                }
                x[c] = 1.0;
                let val = f(&Env::new(&x));
                x[c] = 0.0;
                diff(c, &val, &base);
            }
        }
        base
    }

    /// Affine scalar expression from a closure that is affine in the variables `deps`.
    pub fn real_affine(&self, deps: &[Var], f: impl Fn(&Env) -> f64) -> RealAffine {
        let mut terms = Vec::new();
        let constant = self.probe(deps, f, |c, v, b| {
            let d = v - b;
            if d != 0.0 {
                terms.push((c, d));
            }
        });
        RealAffine { constant, terms }
    }

    pub fn vector_affine(&self, deps: &[Var], f: impl Fn(&Env) -> Vec<f64>) -> VecAffine {
        let mut terms = Vec::new();
        let constant = self.probe(deps, f, |c, v, b| {
            let d: Vec<f64> = v.iter().zip(b).map(|(a, b)| a - b).collect();
            if d.iter().any(|&a| a != 0.0) {
                terms.push((c, d));
            }
        });
        VecAffine { constant, terms }
    }

    pub fn herm_affine(&self, dim: usize, deps: &[Var], f: impl Fn(&Env) -> CMat) -> HermAffine {
        let mut terms = Vec::new();
        // Closures assembled from products and SVD factors are Hermitian only up
        // to rounding on the scale of the probes, which differencing can make
        // large relative to a coefficient. Small asymmetry is removed here;
        // anything larger is left for validation to reject.
        let clean = |d: CMat, scale: f64| {
            if hermitian_asymmetry(&d) <= 1e-6 * scale.max(1.0) {
                hermitian_part(&d)
            } else {
                d
            }
        };
        let constant = self.probe(deps, f, |c, v, b| {
            let d = v - b;
            if d.iter().any(|a| *a != C64::new(0.0, 0.0)) {
                terms.push((c, clean(d, v.norm().max(b.norm()))));
            }
        });
        let scale = constant.norm();
        HermAffine { dim, constant: clean(constant, scale), terms }
    }

    pub fn census(&self) -> Census {
        let count = |class: ConstraintClass| {
            self.constraints
                .iter()
                .filter(|c| c.class == class)
                .map(|c| c.label.as_str())
                .collect::<BTreeSet<_>>()
                .len()
        };
        Census {
            lmi: count(ConstraintClass::Lmi),
            soc: count(ConstraintClass::Soc),
            auxiliary: count(ConstraintClass::Auxiliary),
        }
    }

    pub fn bounds(&self) -> impl Iterator<Item = (usize, Option<f64>, Option<f64>)> + '_ {
        self.variables.iter().filter_map(|v| match v {
            VarDecl::Scalar { coord, lower, upper, .. } => Some((*coord, *lower, *upper)),
            VarDecl::Matrix { .. } => None,
        })
    }

    /// Checks references, shapes and Hermitian symmetry.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_coords;
        let check_coord = |c: usize, label: &str| -> Result<()> {
            if c >= n {
                Err(Error::Index(format!("constraint `{label}` references coordinate {c} of {n}")))
            } else {
                Ok(())
            }
        };
        for &(c, _) in &self.objective.terms {
            check_coord(c, "objective")?;
        }
        for con in &self.constraints {
            let label = con.label.as_str();
            match &con.body {
                ConstraintBody::LinearGe { expr } | ConstraintBody::LinearEq { expr } => {
                    for &(c, _) in &expr.terms {
                        check_coord(c, label)?;
                    }
                }
                ConstraintBody::Soc { t, x } => {
                    for &(c, _) in &t.terms {
                        check_coord(c, label)?;
                    }
                    for (c, col) in &x.terms {
                        check_coord(*c, label)?;
                        if col.len() != x.len() {
                            return Err(Error::Dimension(format!("`{label}` cone column length")));
                        }
                    }
                }
                ConstraintBody::Lmi { expr } => {
                    for m in std::iter::once(&expr.constant).chain(expr.terms.iter().map(|t| &t.1)) {
                        if m.shape() != (expr.dim, expr.dim) {
                            return Err(Error::Dimension(format!("`{label}` block is not {0}x{0}", expr.dim)));
                        }
                        let asym = hermitian_asymmetry(m);
                        if asym > 1e-9 * m.norm().max(1.0) {
                            log::debug!("`{label}` has a non-Hermitian block of norm {:e}", m.norm());
                            return Err(Error::NotHermitian(asym));
                        }
                    }
                    for &(c, _) in &expr.terms {
                        check_coord(c, label)?;
                    }
                }
            }
        }
        for (c, lo, hi) in self.bounds() {
            if let (Some(l), Some(h)) = (lo, hi) {
                if l > h {
                    return Err(Error::InvalidArgument(format!("coordinate {c} has bounds {l} > {h}")));
                }
            }
        }
        Ok(())
    }

    /// Largest constraint or bound violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let bound = self
            .bounds()
            .map(|(c, lo, hi)| {
                let below = lo.map(|l| l - x[c]).unwrap_or(0.0);
                let above = hi.map(|h| x[c] - h).unwrap_or(0.0);
                below.max(above).max(0.0)
            })
            .fold(0.0, f64::max);
        self.constraints.iter().map(|c| c.violation(x)).fold(bound, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("program serializes")
    }

    pub fn from_json(text: &str) -> Result<ConicProgram> {
        let p: ConicProgram = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }
}

mod cmat_rows {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn to_rows(m: &CMat) -> Vec<Vec<[f64; 2]>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
            .collect()
    }

    pub fn from_rows(rows: &[Vec<[f64; 2]>]) -> std::result::Result<CMat, String> {
        let n = rows.len();
        let c = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != c) {
            return Err("ragged matrix".into());
        }
        Ok(CMat::from_fn(n, c, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
    }

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> std::result::Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CMat, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

mod cmat_terms {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &[(usize, CMat)], s: S) -> std::result::Result<S::Ok, S::Error> {
        t.iter()
            .map(|(c, m)| (*c, cmat_rows::to_rows(m)))
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<(usize, CMat)>, D::Error> {
        let raw = Vec::<(usize, Vec<Vec<[f64; 2]>>)>::deserialize(d)?;
        raw.into_iter()
            .map(|(c, rows)| cmat_rows::from_rows(&rows).map(|m| (c, m)))
            .collect::<std::result::Result<_, _>>()
            .map_err(serde::de::Error::custom)
    }
}
