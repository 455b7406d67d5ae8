//! Small dense linear-algebra helpers shared by the modeling and solver layers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// `v v^H`
pub fn outer(v: &CVec) -> CMat {
    v * v.adjoint()
}

/// Largest absolute entry of `m - m^H`.
pub fn hermitian_asymmetry(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order. Columns of the returned matrix are the eigenvectors.
pub fn hermitian_eig_desc(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn min_eigenvalue_herm(m: &CMat) -> f64 {
    hermitian_part(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn min_eigenvalue_sym(m: &RMat) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Real symmetric embedding `[[Re H, -Im H], [Im H, Re H]]` of a complex matrix.
pub fn real_embedding(m: &CMat) -> RMat {
    let n = m.nrows();
    let c = m.ncols();
    let mut out = RMat::zeros(2 * n, 2 * c);
    for i in 0..n {
        for j in 0..c {
            let v = m[(i, j)];
            out[(i, j)] = v.re;
            out[(i, j + c)] = -v.im;
            out[(i + n, j)] = v.im;
            out[(i + n, j + c)] = v.re;
        }
    }
    out
}

pub fn is_real(m: &CMat, tol: f64) -> bool {
    m.iter().all(|v| v.im.abs() <= tol)
}

pub fn real_part(m: &CMat) -> RMat {
    m.map(|v| v.re)
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|v| C64::new(v, 0.0))
}

/// Number of entries in the packed lower triangle of an `n x n` matrix.
pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Lower-triangular column-major packing with `sqrt(2)` scaling off the diagonal,
/// so that `svec(A) . svec(B) = Tr(AB)` for symmetric `A`, `B`.
pub fn svec(m: &RMat, out: &mut [f64]) {
    let n = m.nrows();
    debug_assert_eq!(out.len(), svec_len(n));
    let mut idx = 0;
    for j in 0..n {
        out[idx] = m[(j, j)];
        idx += 1;
        for i in (j + 1)..n {
            out[idx] = std::f64::consts::SQRT_2 * 0.5 * (m[(i, j)] + m[(j, i)]);
            idx += 1;
        }
    }
}

pub fn smat(v: &[f64], n: usize) -> RMat {
    debug_assert_eq!(v.len(), svec_len(n));
    let mut m = RMat::zeros(n, n);
    let mut idx = 0;
    for j in 0..n {
        m[(j, j)] = v[idx];
        idx += 1;
        for i in (j + 1)..n {
            let x = v[idx] * std::f64::consts::FRAC_1_SQRT_2;
            m[(i, j)] = x;
            m[(j, i)] = x;
            idx += 1;
        }
    }
    m
}

pub fn trace_re(m: &CMat) -> f64 {
    m.diagonal().iter().map(|v| v.re).sum()
}

/// `Re Tr(A B)`
pub fn trace_product_re(a: &CMat, b: &CMat) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    acc
}

pub fn cvec_from_slice(values: &[C64]) -> CVec {
    CVec::from_column_slice(values)
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn unit_modulus(v: C64) -> C64 {
    let r = v.norm();
    if r > 0.0 && r.is_finite() {
        v / r
    } else {
        ONE
    }
}
