//! Channel synthesis, cascaded effective channels and the Eve-side error model.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64};
use crate::rng::{complex_normal, stream, StreamKind};
use crate::scenario::{Position, ScenarioConfig};

/// `sqrt(L0 d^-upsilon)` with reference distance 1 m.
pub fn path_loss_amplitude(distance: f64, upsilon: f64, l0: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::out_of_range("distance", format!("must be positive, got {distance}")));
    }
    Ok((l0 * distance.powf(-upsilon)).sqrt())
}

/// Uniform linear array response `exp(j 2 pi (d/lambda) p sin(angle))`, `p = 0..count`.
pub fn steering_vector(angle: f64, count: usize, spacing_over_wavelength: f64) -> Result<CVec> {
    if count == 0 {
        return Err(Error::out_of_range("count", "steering vector needs at least one element"));
    }
    let phase = 2.0 * PI * spacing_over_wavelength * angle.sin();
    Ok(CVec::from_fn(count, |p, _| C64::from_polar(1.0, phase * p as f64)))
}

fn distance(a: &Position, b: &Position) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Azimuth of `to` seen from `from` in the horizontal plane.
fn azimuth(from: &Position, to: &Position) -> f64 {
    (to[1] - from[1]).atan2(to[0] - from[0])
}

/// LoS and NLoS mixing weights for Rician factor `k`; infinity means pure LoS.
fn rician_weights(k: f64) -> (f64, f64) {
    if k.is_infinite() {
        (1.0, 0.0)
    } else {
        ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt())
    }
}

/// Per-link channels and the aggregates built from them.
///
/// Links carrying a receive scalar use the convention that the received
/// signal is `h^H x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub num_bs: usize,
    pub num_ris: usize,
    pub antennas: usize,
    pub elements: usize,
    /// `[b][k]`, length M.
    pub h_bk: Vec<Vec<CVec>>,
    /// `[b][j]`, length M.
    pub h_bej: Vec<Vec<CVec>>,
    /// `[r][k]`, length N.
    pub f_rk: Vec<Vec<CVec>>,
    /// `[r][j]`, length N.
    pub f_rej: Vec<Vec<CVec>>,
    /// `[b][r]`, N x M.
    pub g_br: Vec<Vec<CMat>>,
    /// Stacked direct channels, length MB.
    pub h_d: Vec<CVec>,
    pub h_de: Vec<CVec>,
    /// Stacked reflected channels, length RN.
    pub f: Vec<CVec>,
    pub f_e: Vec<CVec>,
    /// RN x MB.
    pub g: CMat,
    /// `[diag(f_k^H) G ; h_dk^H]`, (RN+1) x MB.
    pub h_eff: Vec<CMat>,
    pub h_eff_e: Vec<CMat>,
}

fn stack(blocks: &[CVec]) -> CVec {
    let len = blocks.iter().map(|b| b.len()).sum();
    let mut out = CVec::zeros(len);
    let mut at = 0;
    for b in blocks {
        out.rows_mut(at, b.len()).copy_from(b);
        at += b.len();
    }
    out
}

/// `[diag(f^H) G ; h_d^H]`
pub fn assemble_effective(f: &CVec, g: &CMat, h_d: &CVec) -> Result<CMat> {
    if f.len() != g.nrows() || h_d.len() != g.ncols() {
        return Err(Error::Dimension(format!(
            "f has {} entries, G is {}x{}, h_d has {}",
            f.len(),
            g.nrows(),
            g.ncols(),
            h_d.len()
        )));
    }
    let rn = g.nrows();
    let mut h = CMat::zeros(rn + 1, g.ncols());
    for n in 0..rn {
        let scale = f[n].conj();
        for m in 0..g.ncols() {
            h[(n, m)] = scale * g[(n, m)];
        }
    }
    for m in 0..g.ncols() {
        h[(rn, m)] = h_d[m].conj();
    }
    Ok(h)
}

impl ChannelSet {
    /// Assembles aggregates from per-link blocks.
    pub fn from_links(
        h_bk: Vec<Vec<CVec>>,
        h_bej: Vec<Vec<CVec>>,
        f_rk: Vec<Vec<CVec>>,
        f_rej: Vec<Vec<CVec>>,
        g_br: Vec<Vec<CMat>>,
    ) -> Result<ChannelSet> {
        let num_bs = h_bk.len();
        let num_ris = f_rk.len();
        if num_bs == 0 || g_br.len() != num_bs || h_bej.len() != num_bs {
            return Err(Error::Dimension("per-BS link lists disagree".into()));
        }
        let antennas = h_bk[0].first().map(|v| v.len()).unwrap_or(0);
        let elements = f_rk.first().and_then(|r| r.first()).map(|v| v.len()).unwrap_or(0);
        let users = h_bk[0].len();
        let eves = h_bej[0].len();
        if f_rej.len() != num_ris || f_rk.iter().any(|r| r.len() != users) || f_rej.iter().any(|r| r.len() != eves)
        {
            return Err(Error::Dimension("per-RIS link lists disagree".into()));
        }
        for b in 0..num_bs {
            if h_bk[b].len() != users || h_bej[b].len() != eves || g_br[b].len() != num_ris {
                return Err(Error::Dimension(format!("BS {b} link lists disagree")));
            }
            if h_bk[b].iter().chain(&h_bej[b]).any(|v| v.len() != antennas) {
                return Err(Error::Dimension(format!("BS {b} direct link length")));
            }
            if g_br[b].iter().any(|g| g.shape() != (elements, antennas)) {
                return Err(Error::Dimension(format!("BS {b} RIS link shape")));
            }
        }
        if f_rk.iter().chain(&f_rej).flatten().any(|v| v.len() != elements) {
            return Err(Error::Dimension("reflected link length".into()));
        }

        let direct = |links: &Vec<Vec<CVec>>, idx: usize| -> CVec {
            stack(&links.iter().map(|per_bs| per_bs[idx].clone()).collect::<Vec<_>>())
        };
        let reflected = |links: &Vec<Vec<CVec>>, idx: usize| -> CVec {
            stack(&links.iter().map(|per_ris| per_ris[idx].clone()).collect::<Vec<_>>())
        };
        let h_d: Vec<CVec> = (0..users).map(|k| direct(&h_bk, k)).collect();
        let h_de: Vec<CVec> = (0..eves).map(|j| direct(&h_bej, j)).collect();
        let f: Vec<CVec> = (0..users).map(|k| reflected(&f_rk, k)).collect();
        let f_e: Vec<CVec> = (0..eves).map(|j| reflected(&f_rej, j)).collect();

        let mut g = CMat::zeros(num_ris * elements, num_bs * antennas);
        for (b, row) in g_br.iter().enumerate() {
            for (r, blk) in row.iter().enumerate() {
                g.view_mut((r * elements, b * antennas), (elements, antennas)).copy_from(blk);
            }
        }
        let h_eff = (0..users)
            .map(|k| assemble_effective(&f[k], &g, &h_d[k]))
            .collect::<Result<Vec<_>>>()?;
        let h_eff_e = (0..eves)
            .map(|j| assemble_effective(&f_e[j], &g, &h_de[j]))
            .collect::<Result<Vec<_>>>()?;
        Ok(ChannelSet {
            num_bs,
            num_ris,
            antennas,
            elements,
            h_bk,
            h_bej,
            f_rk,
            f_rej,
            g_br,
            h_d,
            h_de,
            f,
            f_e,
            g,
            h_eff,
            h_eff_e,
        })
    }

    pub fn num_users(&self) -> usize {
        self.h_d.len()
    }

    pub fn num_eves(&self) -> usize {
        self.h_de.len()
    }

    pub fn tx_dim(&self) -> usize {
        self.num_bs * self.antennas
    }

    pub fn ris_dim(&self) -> usize {
        self.num_ris * self.elements
    }

    /// Effective user channel `H_k^H theta_hat` (length MB).
    pub fn user_effective(&self, k: usize, theta_hat: &CVec) -> CVec {
        self.h_eff[k].adjoint() * theta_hat
    }

    pub fn eve_effective(&self, j: usize, theta_hat: &CVec) -> CVec {
        self.h_eff_e[j].adjoint() * theta_hat
    }

    /// User-side links divided by `user_scale`, Eve-side links by `eve_scale`.
    ///
    /// With the noise standard deviations as scales, the scaled network has unit noise.
    pub fn scaled(&self, user_scale: f64, eve_scale: f64) -> ChannelSet {
        let su = C64::new(1.0 / user_scale, 0.0);
        let se = C64::new(1.0 / eve_scale, 0.0);
        let scale_all = |links: &Vec<Vec<CVec>>, s: C64| -> Vec<Vec<CVec>> {
            links.iter().map(|row| row.iter().map(|v| v * s).collect()).collect()
        };
        ChannelSet::from_links(
            scale_all(&self.h_bk, su),
            scale_all(&self.h_bej, se),
            scale_all(&self.f_rk, su),
            scale_all(&self.f_rej, se),
            self.g_br.clone(),
        )
        .expect("scaling preserves dimensions")
    }

    /// Same links with the Eve-side blocks replaced.
    pub fn with_eve_links(&self, h_bej: Vec<Vec<CVec>>, f_rej: Vec<Vec<CVec>>) -> Result<ChannelSet> {
        ChannelSet::from_links(self.h_bk.clone(), h_bej, self.f_rk.clone(), f_rej, self.g_br.clone())
    }
}

/// Draws every link of the scenario from independent streams under `cfg.rng_seed`.
pub fn sample_channels(cfg: &ScenarioConfig) -> Result<ChannelSet> {
    let m = cfg.antennas_per_bs;
    let n = cfg.elements_per_ris;
    let pl = &cfg.pathloss_exponents;
    let kf = &cfg.rician;
    let spacing = cfg.spacing_over_wavelength;

    // Link from an M-antenna BS (or N-element RIS) to a single-antenna terminal.
    let to_terminal = |tx: &Position,
                       rx: &Position,
                       dim: usize,
                       upsilon: f64,
                       k_factor: f64,
                       kind: StreamKind,
                       a: usize,
                       b: usize|
     -> Result<CVec> {
        let amp = path_loss_amplitude(distance(tx, rx), upsilon, cfg.l0)?;
        let (w_los, w_nlos) = rician_weights(k_factor);
        let los = steering_vector(azimuth(tx, rx), dim, spacing)?;
        let mut rng = stream(cfg.rng_seed, kind, a, b);
        Ok(CVec::from_fn(dim, |i, _| {
            let nlos = if w_nlos > 0.0 { complex_normal(&mut rng) } else { C64::new(0.0, 0.0) };
            (los[i] * w_los + nlos * w_nlos) * amp
        }))
    };

    let h_bk = (0..cfg.num_bs)
        .map(|b| {
            (0..cfg.num_users)
                .map(|k| {
                    to_terminal(&cfg.bs_positions[b], &cfg.user_positions[k], m, pl.bu, kf.bu, StreamKind::BsUser, b, k)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let h_bej = (0..cfg.num_bs)
        .map(|b| {
            (0..cfg.num_eves)
                .map(|j| {
                    to_terminal(&cfg.bs_positions[b], &cfg.eve_positions[j], m, pl.be, kf.be, StreamKind::BsEve, b, j)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let f_rk = (0..cfg.num_ris)
        .map(|r| {
            (0..cfg.num_users)
                .map(|k| {
                    to_terminal(&cfg.ris_positions[r], &cfg.user_positions[k], n, pl.ru, kf.ru, StreamKind::RisUser, r, k)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let f_rej = (0..cfg.num_ris)
        .map(|r| {
            (0..cfg.num_eves)
                .map(|j| {
                    to_terminal(&cfg.ris_positions[r], &cfg.eve_positions[j], n, pl.re, kf.re, StreamKind::RisEve, r, j)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let g_br = (0..cfg.num_bs)
        .map(|b| {
            (0..cfg.num_ris)
                .map(|r| {
                    let bs = &cfg.bs_positions[b];
                    let ris = &cfg.ris_positions[r];
                    let amp = path_loss_amplitude(distance(bs, ris), pl.br, cfg.l0)?;
                    let (w_los, w_nlos) = rician_weights(kf.br);
                    let aoa = steering_vector(azimuth(ris, bs), n, spacing)?;
                    let aod = steering_vector(azimuth(bs, ris), m, spacing)?;
                    let los = &aoa * aod.adjoint();
                    let mut rng = stream(cfg.rng_seed, StreamKind::BsRis, b, r);
                    Ok(CMat::from_fn(n, m, |i, l| {
                        let nlos = if w_nlos > 0.0 { complex_normal(&mut rng) } else { C64::new(0.0, 0.0) };
                        (los[(i, l)] * w_los + nlos * w_nlos) * amp
                    }))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    ChannelSet::from_links(h_bk, h_bej, f_rk, f_rej, g_br)
}

/// Gaussian estimation errors on the Eve links: `CN(0, sigma_d^2 I)` on the
/// stacked direct channel and `CN(0, sigma_f^2 I)` on the stacked reflected one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EveErrorModel {
    pub sigma_d: Vec<f64>,
    pub sigma_f: Vec<f64>,
}

impl EveErrorModel {
    /// Error energy equal to `sigma_bar` times the estimate energy, per link family.
    pub fn from_sigma_bar(estimates: &ChannelSet, sigma_bar: f64) -> EveErrorModel {
        let per = |v: &CVec| {
            if v.is_empty() {
                0.0
            } else {
                (sigma_bar * v.norm_squared() / v.len() as f64).sqrt()
            }
        };
        EveErrorModel {
            sigma_d: estimates.h_de.iter().map(per).collect(),
            sigma_f: estimates.f_e.iter().map(per).collect(),
        }
    }

    pub fn zero(num_eves: usize) -> EveErrorModel {
        EveErrorModel {
            sigma_d: vec![0.0; num_eves],
            sigma_f: vec![0.0; num_eves],
        }
    }

    pub fn scaled(&self, factor: f64) -> EveErrorModel {
        EveErrorModel {
            sigma_d: self.sigma_d.iter().map(|s| s * factor).collect(),
            sigma_f: self.sigma_f.iter().map(|s| s * factor).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_d.iter().chain(&self.sigma_f).all(|&s| s == 0.0)
    }
}

/// Estimates plus one fresh draw of the Eve-side errors. User links are untouched.
pub fn perturb_eve_channels<R: Rng + ?Sized>(
    estimates: &ChannelSet,
    errors: &EveErrorModel,
    rng: &mut R,
) -> Result<ChannelSet> {
    if errors.sigma_d.len() != estimates.num_eves() || errors.sigma_f.len() != estimates.num_eves() {
        return Err(Error::Dimension("error model and channel set disagree on Eve count".into()));
    }
    if errors.is_zero() {
        return Ok(estimates.clone());
    }
    let mut h_bej = estimates.h_bej.clone();
    let mut f_rej = estimates.f_rej.clone();
    for j in 0..estimates.num_eves() {
        for per_bs in h_bej.iter_mut() {
            for x in per_bs[j].iter_mut() {
                *x += complex_normal(rng) * errors.sigma_d[j];
            }
        }
        for per_ris in f_rej.iter_mut() {
            for x in per_ris[j].iter_mut() {
                *x += complex_normal(rng) * errors.sigma_f[j];
            }
        }
    }
    estimates.with_eve_links(h_bej, f_rej)
}

/// Textual dump of the per-link channels as `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDump {
    pub h_bk: Vec<Vec<Vec<[f64; 2]>>>,
    pub h_bej: Vec<Vec<Vec<[f64; 2]>>>,
    pub f_rk: Vec<Vec<Vec<[f64; 2]>>>,
    pub f_rej: Vec<Vec<Vec<[f64; 2]>>>,
    /// Row-major N x M blocks.
    pub g_br: Vec<Vec<Vec<Vec<[f64; 2]>>>>,
}

fn pairs(v: &CVec) -> Vec<[f64; 2]> {
    v.iter().map(|c| [c.re, c.im]).collect()
}

fn from_pairs(p: &[[f64; 2]]) -> CVec {
    CVec::from_iterator(p.len(), p.iter().map(|&[re, im]| C64::new(re, im)))
}

impl ChannelSet {
    pub fn to_dump(&self) -> ChannelDump {
        let vecs = |links: &Vec<Vec<CVec>>| links.iter().map(|r| r.iter().map(pairs).collect()).collect();
        ChannelDump {
            h_bk: vecs(&self.h_bk),
            h_bej: vecs(&self.h_bej),
            f_rk: vecs(&self.f_rk),
            f_rej: vecs(&self.f_rej),
            g_br: self
                .g_br
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|g| (0..g.nrows()).map(|i| pairs(&g.row(i).transpose())).collect())
                        .collect()
                })
                .collect(),
        }
    }

    pub fn from_dump(dump: &ChannelDump) -> Result<ChannelSet> {
        let vecs = |links: &Vec<Vec<Vec<[f64; 2]>>>| -> Vec<Vec<CVec>> {
            links.iter().map(|r| r.iter().map(|p| from_pairs(p)).collect()).collect()
        };
        let g_br = dump
            .g_br
            .iter()
            .map(|row| {
                row.iter()
                    .map(|rows| {
                        let n = rows.len();
                        let m = rows.first().map(|r| r.len()).unwrap_or(0);
                        if rows.iter().any(|r| r.len() != m) {
                            return Err(Error::Dimension("ragged G block in dump".into()));
                        }
                        Ok(CMat::from_fn(n, m, |i, l| C64::new(rows[i][l][0], rows[i][l][1])))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        ChannelSet::from_links(vecs(&dump.h_bk), vecs(&dump.h_bej), vecs(&dump.f_rk), vecs(&dump.f_rej), g_br)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::complex_normal_vec;

    #[test]
    fn path_loss_examples() {
        assert!((path_loss_amplitude(1.0, 3.6, 1e-3).unwrap() - 1e-3f64.sqrt()).abs() < 1e-15);
        assert!((path_loss_amplitude(10.0, 2.0, 1e-3).unwrap() - 1e-5f64.sqrt()).abs() < 1e-15);
        let expect = (1e-3 * 10f64.powf(-7.2)).sqrt();
        assert!((path_loss_amplitude(100.0, 3.6, 1e-3).unwrap() - expect).abs() < 1e-15 * expect.max(1.0));
        assert!(path_loss_amplitude(0.0, 2.0, 1e-3).is_err());
    }

    #[test]
    fn steering_examples() {
        let a = steering_vector(0.0, 4, 0.5).unwrap();
        assert!(a.iter().all(|x| (x - C64::new(1.0, 0.0)).norm() < 1e-15));
        let b = steering_vector(PI / 2.0, 2, 0.5).unwrap();
        assert!((b[1] - C64::new(-1.0, 0.0)).norm() < 1e-12);
        assert_eq!(steering_vector(1.0, 1, 0.5).unwrap().len(), 1);
        assert!(steering_vector(1.0, 0, 0.5).is_err());
    }

    #[test]
    fn rician_weights_are_normalized() {
        for k in [0.0, 0.3, 1.0, 10.0, 1e6] {
            let (a, b) = rician_weights(k);
            assert!((a * a + b * b - 1.0).abs() < 1e-12);
        }
        assert_eq!(rician_weights(f64::INFINITY), (1.0, 0.0));
    }

    #[test]
    fn default_shapes_and_determinism() {
        let cfg = ScenarioConfig::default();
        let a = sample_channels(&cfg).unwrap();
        let b = sample_channels(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.h_eff[0].shape(), (9, 4));
        assert_eq!(a.g.shape(), (8, 4));
        let c = sample_channels(&cfg.with_seed(1)).unwrap();
        assert_ne!(a.h_d[0], c.h_d[0]);
    }

    #[test]
    fn line_of_sight_link_is_rank_one_steering_product() {
        let cfg = ScenarioConfig::default();
        let ch = sample_channels(&cfg).unwrap();
        let (bs, ris) = (&cfg.bs_positions[1], &cfg.ris_positions[0]);
        let amp = path_loss_amplitude(distance(bs, ris), 2.0, cfg.l0).unwrap();
        let expect = steering_vector(azimuth(ris, bs), 4, 0.5).unwrap()
            * steering_vector(azimuth(bs, ris), 2, 0.5).unwrap().adjoint()
            * C64::new(amp, 0.0);
        assert!((&ch.g_br[1][0] - expect).norm() < 1e-18);
    }

    #[test]
    fn direct_links_do_not_depend_on_ris_count() {
        let cfg = ScenarioConfig::default();
        let with = sample_channels(&cfg).unwrap();
        let without = sample_channels(&cfg.without_ris()).unwrap();
        assert_eq!(with.h_d, without.h_d);
        assert_eq!(without.h_eff[0].shape(), (1, 4));
    }

    #[test]
    fn effective_channel_expansion() {
        let cfg = ScenarioConfig::default();
        let ch = sample_channels(&cfg).unwrap();
        let mut rng = stream(3, StreamKind::MonteCarlo, 0, 0);
        for _ in 0..200 {
            let theta = CVec::from_fn(8, |_, _| C64::from_polar(1.0, rng.random::<f64>() * 2.0 * PI));
            let w = complex_normal_vec(&mut rng, 4);
            let mut theta_hat = CVec::from_element(9, C64::new(1.0, 0.0));
            theta_hat.rows_mut(0, 8).copy_from(&theta);
            for k in 0..2 {
                let lhs = (theta_hat.adjoint() * &ch.h_eff[k] * &w)[(0, 0)];
                let diag_f = CMat::from_diagonal(&ch.f[k].map(|x| x.conj()));
                let rhs = ((ch.h_d[k].adjoint() + theta.adjoint() * diag_f * &ch.g) * &w)[(0, 0)];
                assert!((lhs - rhs).norm() <= 1e-10 * rhs.norm().max(1e-30));
            }
        }
    }

    #[test]
    fn zero_error_perturbation_is_identity() {
        let ch = sample_channels(&ScenarioConfig::default()).unwrap();
        let mut rng = stream(0, StreamKind::EveError, 0, 0);
        let out = perturb_eve_channels(&ch, &EveErrorModel::zero(2), &mut rng).unwrap();
        assert_eq!(out, ch);
    }

    #[test]
    fn dump_round_trip() {
        let ch = sample_channels(&ScenarioConfig::default()).unwrap();
        let text = serde_json::to_string(&ch.to_dump()).unwrap();
        let back = ChannelSet::from_dump(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, ch);
    }
}
