//! Fractional-programming and first-order surrogates shared by both algorithms.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 {
        Ok(())
    } else {
        Err(Error::out_of_range(name, format!("must be nonnegative, got {v}")))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::out_of_range(name, format!("must be positive, got {v}")))
    }
}

/// `log2(1+alpha) - log2(1+beta_hat) - (beta - beta_hat) / ((1+beta_hat) ln 2)`.
///
/// Lower bound on `log2(1+alpha) - log2(1+beta)`, tight at `beta = beta_hat`.
pub fn secrecy_surrogate(alpha: f64, beta: f64, beta_hat: f64) -> Result<f64> {
    nonneg("alpha", alpha)?;
    nonneg("beta", beta)?;
    nonneg("beta_hat", beta_hat)?;
    Ok((1.0 + alpha).log2() - (1.0 + beta_hat).log2() - (beta - beta_hat) / ((1.0 + beta_hat) * LN_2))
}

/// Maximizer `sqrt(f) / denom` of [`fp_value`] in `rho`.
pub fn rho_update(f_value: f64, denom: f64) -> Result<f64> {
    positive("denom", denom)?;
    nonneg("f_value", f_value)?;
    Ok(f_value.sqrt() / denom)
}

/// `2 rho sqrt(f) - rho^2 denom`
pub fn fp_value(f_value: f64, denom: f64, rho: f64) -> f64 {
    2.0 * rho * f_value.max(0.0).sqrt() - rho * rho * denom
}

/// `(alpha_hat / (2 delta_hat)) delta^2 + (delta_hat / (2 alpha_hat)) alpha^2 >= alpha delta`.
pub fn bilinear_upper_bound(alpha: f64, delta: f64, alpha_hat: f64, delta_hat: f64) -> Result<f64> {
    positive("alpha_hat", alpha_hat)?;
    positive("delta_hat", delta_hat)?;
    Ok(alpha_hat / (2.0 * delta_hat) * delta * delta + delta_hat / (2.0 * alpha_hat) * alpha * alpha)
}

/// `2 s_hat s - s_hat^2 <= s^2`
pub fn square_lower_bound(varsigma: f64, varsigma_hat: f64) -> f64 {
    2.0 * varsigma_hat * varsigma - varsigma_hat * varsigma_hat
}

/// `log2(1+alpha_hat) + (1 - u) / ln 2` with `u = (1+alpha_hat)/(1+alpha)`.
///
/// Conic-representable lower bound on `log2(1+alpha)`, tight at `alpha = alpha_hat`.
/// In a program the ratio is relaxed to `u (1+alpha) >= 1 + alpha_hat`.
pub fn log_lower_bound(alpha: f64, alpha_hat: f64) -> f64 {
    let u = (1.0 + alpha_hat) / (1.0 + alpha);
    (1.0 + alpha_hat).log2() + (1.0 - u) / LN_2
}

/// `K x J` table.
pub type Grid = Vec<Vec<f64>>;

pub fn grid(k: usize, j: usize, value: f64) -> Grid {
    vec![vec![value; j]; k]
}

/// Auxiliary variables and expansion points carried between subproblems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryState {
    pub alpha: Vec<f64>,
    pub beta: Grid,
    pub beta_prev: Grid,
    pub rho: Grid,
    pub delta: Vec<f64>,
    pub varsigma: Grid,
    pub chi: Grid,
    pub varpi: Grid,
    pub z: f64,
    pub lambda: Grid,
    pub epsilon: Grid,
    pub kappa: Grid,
    pub omega: Grid,
}

impl AuxiliaryState {
    pub fn zeros(k: usize, j: usize) -> AuxiliaryState {
        AuxiliaryState {
            alpha: vec![0.0; k],
            beta: grid(k, j, 0.0),
            beta_prev: grid(k, j, 0.0),
            rho: grid(k, j, 0.0),
            delta: vec![1.0; k],
            varsigma: grid(k, j, 0.0),
            chi: grid(k, j, 0.0),
            varpi: grid(k, j, 0.0),
            z: 0.0,
            lambda: grid(k, j, 0.0),
            epsilon: grid(k, j, 0.0),
            kappa: grid(k, j, 0.0),
            omega: grid(k, j, 0.0),
        }
    }

    pub fn num_users(&self) -> usize {
        self.alpha.len()
    }

    pub fn num_eves(&self) -> usize {
        self.beta.first().map(|r| r.len()).unwrap_or(0)
    }

    /// Checks the sign invariants.
    pub fn validate(&self) -> Result<()> {
        let all = |g: &Grid| g.iter().flatten().copied().collect::<Vec<_>>();
        for (name, vals) in [
            ("alpha", self.alpha.clone()),
            ("beta", all(&self.beta)),
            ("rho", all(&self.rho)),
            ("kappa", all(&self.kappa)),
            ("omega", all(&self.omega)),
        ] {
            if let Some(v) = vals.iter().find(|v| !(**v >= 0.0)) {
                return Err(Error::out_of_range(name, format!("must be nonnegative, got {v}")));
            }
        }
        if let Some(d) = self.delta.iter().find(|d| !(**d > 0.0)) {
            return Err(Error::out_of_range("delta", format!("must be positive, got {d}")));
        }
        if !self.z.is_finite() {
            return Err(Error::out_of_range("z", "must be finite"));
        }
        Ok(())
    }
}
