//! Rank-one recovery from relaxed solutions.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_asymmetry, hermitian_eig_desc, unit_modulus, CMat, CVec, C64};
use crate::rng::complex_normal;

fn check_hermitian(h: &CMat) -> Result<()> {
    let asym = hermitian_asymmetry(h);
    if asym > 1e-8 * h.norm().max(1.0) {
        return Err(Error::NotHermitian(asym));
    }
    Ok(())
}

/// Rotates `v` so its largest-modulus entry is real and nonnegative.
pub fn normalize_phase(v: &CVec) -> CVec {
    let Some((idx, _)) = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap_or(std::cmp::Ordering::Equal))
    else {
        return v.clone();
    };
    let rot = unit_modulus(v[idx]).conj();
    v * rot
}

/// `sqrt(l1) u1` when `l2 / l1 <= rank_tol`, otherwise `None`.
///
/// A zero matrix yields the zero vector.
pub fn extract_rank_one(h: &CMat, rank_tol: f64) -> Result<Option<CVec>> {
    check_hermitian(h)?;
    let (vals, vecs) = hermitian_eig_desc(h);
    let l1 = vals.first().copied().unwrap_or(0.0);
    if l1 <= 1e-300 {
        return Ok(Some(CVec::zeros(h.nrows())));
    }
    let l2 = vals.get(1).copied().unwrap_or(0.0).max(0.0);
    if l2 / l1 > rank_tol {
        return Ok(None);
    }
    Ok(Some(normalize_phase(&(vecs.column(0) * C64::new(l1.sqrt(), 0.0)))))
}

/// One draw from `CN(0, H)`.
pub fn sample_cn<R: Rng + ?Sized>(factor: &CMat, rng: &mut R) -> CVec {
    let r = CVec::from_fn(factor.ncols(), |_, _| complex_normal(rng));
    factor * r
}

/// `F` with `F F^H = H`, clipping negative eigenvalues.
pub fn psd_factor(h: &CMat) -> CMat {
    let (vals, vecs) = hermitian_eig_desc(h);
    let mut f = vecs;
    for (j, &l) in vals.iter().enumerate() {
        let s = C64::new(l.max(0.0).sqrt(), 0.0);
        for i in 0..f.nrows() {
            f[(i, j)] *= s;
        }
    }
    f
}

/// Entrywise unit modulus with the trailing entry rotated to exactly 1.
pub fn project_phases(x: &CVec) -> CVec {
    let n = x.len();
    if n == 0 {
        return x.clone();
    }
    let anchor = unit_modulus(x[n - 1]).conj();
    let mut out = x.map(|v| unit_modulus(v * anchor));
    out[n - 1] = C64::new(1.0, 0.0);
    out
}

/// Draws `trials` candidates from `CN(0, H)`, maps each through `project`,
/// and returns the feasible candidate with the largest objective.
pub fn gaussian_randomize<R: Rng + ?Sized>(
    h: &CMat,
    trials: usize,
    rng: &mut R,
    project: impl Fn(&CVec) -> CVec,
    feasible: impl Fn(&CVec) -> bool,
    objective: impl Fn(&CVec) -> f64,
) -> Result<(CVec, f64)> {
    if trials == 0 {
        return Err(Error::out_of_range("trials", "must be at least 1"));
    }
    check_hermitian(h)?;
    let factor = psd_factor(h);
    let mut best: Option<(CVec, f64)> = None;
    for _ in 0..trials {
        let cand = project(&sample_cn(&factor, rng));
        if !feasible(&cand) {
            continue;
        }
        let val = objective(&cand);
        if !val.is_finite() {
            continue;
        }
        if best.as_ref().map_or(true, |(_, b)| val > *b) {
            best = Some((cand, val));
        }
    }
    best.ok_or(Error::RandomizationExhausted(trials))
}
