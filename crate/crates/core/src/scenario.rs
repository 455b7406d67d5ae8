//! Network constants, node geometry and the JSON scenario document.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// RIS reflection amplitude, fixed to one for every element.
pub const ETA_RIS: f64 = 1.0;

pub type Position = [f64; 3];

const BS_HEIGHT: f64 = 12.0;
const RIS_HEIGHT: f64 = 8.0;
const TERMINAL_HEIGHT: f64 = 1.5;

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Path-loss exponents per link family (BS-user, BS-Eve, RIS-user, RIS-Eve, BS-RIS).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub bu: f64,
    pub be: f64,
    pub ru: f64,
    pub re: f64,
    pub br: f64,
}

/// Which published node layout to use when positions are not given explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryPreset {
    #[default]
    Default,
    /// Users at (60, 8(k-1)+30), Eves at (55, 4(j-1)+31).
    EveSweep,
    /// BSs at (0, 15(b-1)+20).
    BsSweep,
    /// Users at (60,70), (60,90), (60,120).
    Fairness,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub num_bs: usize,
    /// Zero selects the no-RIS ablation.
    pub num_ris: usize,
    pub num_users: usize,
    pub num_eves: usize,
    pub antennas_per_bs: usize,
    pub elements_per_ris: usize,
    /// Per-BS power budget, mW.
    pub pb_mw: f64,
    pub zeta: f64,
    pub p_bs_mw: f64,
    pub p_user_mw: f64,
    pub p_ris_mw: f64,
    pub noise_user_mw: f64,
    pub noise_eve_mw: f64,
    pub phi_outage: f64,
    pub redundancy_rate: f64,
    pub sigma_bar: f64,
    /// Reference path loss at 1 m, linear.
    pub l0: f64,
    pub pathloss_exponents: LinkParams,
    pub rician: LinkParams,
    pub spacing_over_wavelength: f64,
    pub geometry: GeometryPreset,
    pub bs_positions: Vec<Position>,
    pub ris_positions: Vec<Position>,
    pub user_positions: Vec<Position>,
    pub eve_positions: Vec<Position>,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let geometry = GeometryPreset::Default;
        ScenarioConfig {
            num_bs: 2,
            num_ris: 2,
            num_users: 2,
            num_eves: 2,
            antennas_per_bs: 2,
            elements_per_ris: 4,
            pb_mw: dbm_to_mw(15.0),
            zeta: 1.0 / 3.0,
            p_bs_mw: 100.0,
            p_user_mw: 20.0,
            p_ris_mw: 1.0,
            noise_user_mw: dbm_to_mw(-80.0),
            noise_eve_mw: dbm_to_mw(-80.0),
            phi_outage: 0.1,
            redundancy_rate: 0.5,
            sigma_bar: 0.01,
            l0: db_to_linear(-30.0),
            pathloss_exponents: LinkParams {
                bu: 3.6,
                be: 3.6,
                ru: 2.2,
                re: 2.2,
                br: 2.0,
            },
            rician: LinkParams {
                bu: 0.0,
                be: 0.0,
                ru: 0.0,
                re: 0.0,
                br: f64::INFINITY,
            },
            spacing_over_wavelength: 0.5,
            geometry,
            bs_positions: preset_positions(NodeKind::Bs, 2, geometry).unwrap(),
            ris_positions: preset_positions(NodeKind::Ris, 2, geometry).unwrap(),
            user_positions: preset_positions(NodeKind::User, 2, geometry).unwrap(),
            eve_positions: preset_positions(NodeKind::Eve, 2, geometry).unwrap(),
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Bs,
    Ris,
    User,
    Eve,
}

/// Positions of `count` nodes of the given kind under a layout preset.
pub fn preset_positions(kind: NodeKind, count: usize, preset: GeometryPreset) -> Result<Vec<Position>> {
    let idx = |i: usize| i as f64;
    let out = match (kind, preset) {
        (NodeKind::Bs, GeometryPreset::BsSweep) => (0..count)
            .map(|b| [0.0, 15.0 * idx(b) + 20.0, BS_HEIGHT])
            .collect(),
        (NodeKind::Bs, _) => (0..count)
            .map(|b| [0.0, 40.0 * idx(b) + 30.0, BS_HEIGHT])
            .collect(),
        (NodeKind::Ris, _) => (0..count)
            .map(|r| [65.0, 40.0 * idx(r) + 30.0, RIS_HEIGHT])
            .collect(),
        (NodeKind::User, GeometryPreset::EveSweep) => (0..count)
            .map(|k| [60.0, 8.0 * idx(k) + 30.0, TERMINAL_HEIGHT])
            .collect(),
        (NodeKind::User, GeometryPreset::Fairness) => {
            const YS: [f64; 3] = [70.0, 90.0, 120.0];
            if count > YS.len() {
                return Err(Error::out_of_range(
                    "num_users",
                    format!("fairness layout defines {} users, got {count}", YS.len()),
                ));
            }
            YS[..count].iter().map(|&y| [60.0, y, TERMINAL_HEIGHT]).collect()
        }
        (NodeKind::User, _) => (0..count)
            .map(|k| [60.0, 5.0 * idx(k) + 30.0, TERMINAL_HEIGHT])
            .collect(),
        (NodeKind::Eve, GeometryPreset::EveSweep) => (0..count)
            .map(|j| [55.0, 4.0 * idx(j) + 31.0, TERMINAL_HEIGHT])
            .collect(),
        (NodeKind::Eve, _) => (0..count)
            .map(|j| [55.0, 5.0 * idx(j) + 32.0, TERMINAL_HEIGHT])
            .collect(),
    };
    Ok(out)
}

/// Every field optional; absent fields take the defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDocument {
    num_bs: Option<usize>,
    num_ris: Option<usize>,
    num_users: Option<usize>,
    num_eves: Option<usize>,
    antennas_per_bs: Option<usize>,
    elements_per_ris: Option<usize>,
    pb_dbm: Option<f64>,
    zeta: Option<f64>,
    p_bs_mw: Option<f64>,
    p_user_mw: Option<f64>,
    p_ris_mw: Option<f64>,
    noise_user_dbm: Option<f64>,
    noise_eve_dbm: Option<f64>,
    phi_outage: Option<f64>,
    redundancy_rate: Option<f64>,
    sigma_bar: Option<f64>,
    l0_db: Option<f64>,
    pathloss_exponents: Option<PartialLinks>,
    rician: Option<PartialLinks>,
    spacing_over_wavelength: Option<f64>,
    geometry: Option<GeometryPreset>,
    bs_positions: Option<Vec<Vec<f64>>>,
    ris_positions: Option<Vec<Vec<f64>>>,
    user_positions: Option<Vec<Vec<f64>>>,
    eve_positions: Option<Vec<Vec<f64>>>,
    rng_seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialLinks {
    bu: Option<LinkValue>,
    be: Option<LinkValue>,
    ru: Option<LinkValue>,
    re: Option<LinkValue>,
    br: Option<LinkValue>,
}

/// A number, or the string `"inf"` for a pure line-of-sight link.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum LinkValue {
    Number(f64),
    Text(String),
}

impl LinkValue {
    fn resolve(&self, field: &str) -> Result<f64> {
        match self {
            LinkValue::Number(v) => Ok(*v),
            LinkValue::Text(s) if matches!(s.as_str(), "inf" | "infinity" | "Infinity") => {
                Ok(f64::INFINITY)
            }
            LinkValue::Text(s) => Err(Error::out_of_range(field, format!("not a number: {s:?}"))),
        }
    }
}

fn merge_links(base: LinkParams, partial: Option<PartialLinks>, group: &str) -> Result<LinkParams> {
    let Some(p) = partial else { return Ok(base) };
    let pick = |v: &Option<LinkValue>, name: &str, dflt: f64| -> Result<f64> {
        v.as_ref()
            .map(|v| v.resolve(&format!("{group}.{name}")))
            .transpose()
            .map(|o| o.unwrap_or(dflt))
    };
    Ok(LinkParams {
        bu: pick(&p.bu, "bu", base.bu)?,
        be: pick(&p.be, "be", base.be)?,
        ru: pick(&p.ru, "ru", base.ru)?,
        re: pick(&p.re, "re", base.re)?,
        br: pick(&p.br, "br", base.br)?,
    })
}

fn parse_positions(field: &str, raw: Vec<Vec<f64>>, default_height: f64) -> Result<Vec<Position>> {
    raw.into_iter()
        .enumerate()
        .map(|(i, p)| match p.as_slice() {
            [x, y] => Ok([*x, *y, default_height]),
            [x, y, z] => Ok([*x, *y, *z]),
            _ => Err(Error::out_of_range(
                field,
                format!("entry {i} must have 2 or 3 coordinates, got {}", p.len()),
            )),
        })
        .collect()
}

/// Parses an override value: JSON literal when possible, bare string otherwise.
fn parse_override_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn insert_dotted(root: &mut Map<String, Value>, key: &str, value: Value) -> Result<()> {
    match key.split_once('.') {
        None => {
            root.insert(key.to_string(), value);
            Ok(())
        }
        Some((head, tail)) => {
            let entry = root
                .entry(head.to_string())
                .or_insert_with(|| Value::Object(Map::new()));
            match entry {
                Value::Object(inner) => insert_dotted(inner, tail, value),
                _ => Err(Error::Parse(format!("override key `{key}`: `{head}` is not an object"))),
            }
        }
    }
}

/// Builds a scenario from an optional JSON document plus `key=value` overrides.
///
/// Overrides are applied on top of the document; dotted keys address nested
/// objects (`pathloss_exponents.bu=3.0`).
pub fn build_scenario(document: Option<&str>, overrides: &[(String, String)]) -> Result<ScenarioConfig> {
    let mut root = match document {
        Some(text) => match serde_json::from_str::<Value>(text) {
            Ok(Value::Object(map)) => map,
            Ok(_) => return Err(Error::Parse("scenario document must be a JSON object".into())),
            Err(e) => return Err(Error::Parse(e.to_string())),
        },
        None => Map::new(),
    };
    for (key, raw) in overrides {
        insert_dotted(&mut root, key, parse_override_value(raw))?;
    }
    let doc: ScenarioDocument =
        serde_json::from_value(Value::Object(root)).map_err(|e| Error::Parse(e.to_string()))?;
    from_document(doc)
}

fn from_document(doc: ScenarioDocument) -> Result<ScenarioConfig> {
    let base = ScenarioConfig::default();
    let geometry = doc.geometry.unwrap_or_default();
    let num_bs = doc.num_bs.unwrap_or(base.num_bs);
    let num_ris = doc.num_ris.unwrap_or(base.num_ris);
    let num_users = doc.num_users.unwrap_or(base.num_users);
    let num_eves = doc.num_eves.unwrap_or(base.num_eves);

    let positions = |field: &str,
                     raw: Option<Vec<Vec<f64>>>,
                     kind: NodeKind,
                     count: usize,
                     height: f64|
     -> Result<Vec<Position>> {
        match raw {
            Some(raw) => parse_positions(field, raw, height),
            None => preset_positions(kind, count, geometry),
        }
    };

    let cfg = ScenarioConfig {
        num_bs,
        num_ris,
        num_users,
        num_eves,
        antennas_per_bs: doc.antennas_per_bs.unwrap_or(base.antennas_per_bs),
        elements_per_ris: doc.elements_per_ris.unwrap_or(base.elements_per_ris),
        pb_mw: doc.pb_dbm.map(dbm_to_mw).unwrap_or(base.pb_mw),
        zeta: doc.zeta.unwrap_or(base.zeta),
        p_bs_mw: doc.p_bs_mw.unwrap_or(base.p_bs_mw),
        p_user_mw: doc.p_user_mw.unwrap_or(base.p_user_mw),
        p_ris_mw: doc.p_ris_mw.unwrap_or(base.p_ris_mw),
        noise_user_mw: doc.noise_user_dbm.map(dbm_to_mw).unwrap_or(base.noise_user_mw),
        noise_eve_mw: doc.noise_eve_dbm.map(dbm_to_mw).unwrap_or(base.noise_eve_mw),
        phi_outage: doc.phi_outage.unwrap_or(base.phi_outage),
        redundancy_rate: doc.redundancy_rate.unwrap_or(base.redundancy_rate),
        sigma_bar: doc.sigma_bar.unwrap_or(base.sigma_bar),
        l0: doc.l0_db.map(db_to_linear).unwrap_or(base.l0),
        pathloss_exponents: merge_links(base.pathloss_exponents, doc.pathloss_exponents, "pathloss_exponents")?,
        rician: merge_links(base.rician, doc.rician, "rician")?,
        spacing_over_wavelength: doc.spacing_over_wavelength.unwrap_or(base.spacing_over_wavelength),
        geometry,
        bs_positions: positions("bs_positions", doc.bs_positions, NodeKind::Bs, num_bs, BS_HEIGHT)?,
        ris_positions: positions("ris_positions", doc.ris_positions, NodeKind::Ris, num_ris, RIS_HEIGHT)?,
        user_positions: positions(
            "user_positions",
            doc.user_positions,
            NodeKind::User,
            num_users,
            TERMINAL_HEIGHT,
        )?,
        eve_positions: positions("eve_positions", doc.eve_positions, NodeKind::Eve, num_eves, TERMINAL_HEIGHT)?,
        rng_seed: doc.rng_seed.unwrap_or(base.rng_seed),
    };
    cfg.validate()?;
    Ok(cfg)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("num_bs", self.num_bs),
            ("num_users", self.num_users),
            ("num_eves", self.num_eves),
            ("antennas_per_bs", self.antennas_per_bs),
            ("elements_per_ris", self.elements_per_ris),
        ] {
            if value == 0 {
                return Err(Error::out_of_range(name, "must be at least 1"));
            }
        }
        for (name, value) in [
            ("pb_dbm", self.pb_mw),
            ("p_bs_mw", self.p_bs_mw),
            ("p_user_mw", self.p_user_mw),
            ("p_ris_mw", self.p_ris_mw),
            ("noise_user_dbm", self.noise_user_mw),
            ("noise_eve_dbm", self.noise_eve_mw),
            ("l0_db", self.l0),
            ("spacing_over_wavelength", self.spacing_over_wavelength),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::out_of_range(name, format!("must be positive and finite, got {value}")));
            }
        }
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return Err(Error::out_of_range("zeta", format!("must lie in (0, 1], got {}", self.zeta)));
        }
        if !(self.phi_outage > 0.0 && self.phi_outage < 1.0) {
            return Err(Error::out_of_range(
                "phi_outage",
                format!("must lie in (0, 1), got {}", self.phi_outage),
            ));
        }
        if !(self.redundancy_rate >= 0.0 && self.redundancy_rate.is_finite()) {
            return Err(Error::out_of_range("redundancy_rate", "must be nonnegative"));
        }
        if !(self.sigma_bar >= 0.0 && self.sigma_bar.is_finite()) {
            return Err(Error::out_of_range("sigma_bar", "must be nonnegative"));
        }
        let links = [
            ("bu", self.pathloss_exponents.bu, self.rician.bu),
            ("be", self.pathloss_exponents.be, self.rician.be),
            ("ru", self.pathloss_exponents.ru, self.rician.ru),
            ("re", self.pathloss_exponents.re, self.rician.re),
            ("br", self.pathloss_exponents.br, self.rician.br),
        ];
        for (name, exponent, k_factor) in links {
            if !(exponent >= 0.0 && exponent.is_finite()) {
                return Err(Error::out_of_range(format!("pathloss_exponents.{name}"), "must be nonnegative"));
            }
            if !(k_factor >= 0.0) {
                return Err(Error::out_of_range(format!("rician.{name}"), "must be nonnegative"));
            }
        }
        for (name, list, count) in [
            ("bs_positions", &self.bs_positions, self.num_bs),
            ("ris_positions", &self.ris_positions, self.num_ris),
            ("user_positions", &self.user_positions, self.num_users),
            ("eve_positions", &self.eve_positions, self.num_eves),
        ] {
            if list.len() != count {
                return Err(Error::out_of_range(
                    name,
                    format!("expected {count} positions, got {}", list.len()),
                ));
            }
            if list.iter().flatten().any(|c| !c.is_finite()) {
                return Err(Error::out_of_range(name, "coordinates must be finite"));
            }
        }
        self.warn_duplicate_positions();
        Ok(())
    }

    fn warn_duplicate_positions(&self) {
        let all: Vec<(&str, usize, &Position)> = [
            ("bs", &self.bs_positions),
            ("ris", &self.ris_positions),
            ("user", &self.user_positions),
            ("eve", &self.eve_positions),
        ]
        .into_iter()
        .flat_map(|(name, list)| list.iter().enumerate().map(move |(i, p)| (name, i, p)))
        .collect();
        for (a, (na, ia, pa)) in all.iter().enumerate() {
            for (nb, ib, pb) in &all[a + 1..] {
                if pa == pb {
                    log::warn!("{na}[{ia}] and {nb}[{ib}] share position {pa:?}");
                }
            }
        }
    }

    /// `B P_B + P_U + R N P_R`, mW.
    pub fn circuit_power(&self) -> f64 {
        self.num_bs as f64 * self.p_bs_mw
            + self.p_user_mw
            + (self.num_ris * self.elements_per_ris) as f64 * self.p_ris_mw
    }

    /// Total BS antennas `MB`.
    pub fn tx_dim(&self) -> usize {
        self.num_bs * self.antennas_per_bs
    }

    /// Total RIS elements `RN`.
    pub fn ris_dim(&self) -> usize {
        self.num_ris * self.elements_per_ris
    }

    pub fn has_ris(&self) -> bool {
        self.ris_dim() > 0
    }

    /// The same network with every RIS removed.
    pub fn without_ris(&self) -> ScenarioConfig {
        ScenarioConfig {
            num_ris: 0,
            ris_positions: Vec::new(),
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            rng_seed: seed,
            ..self.clone()
        }
    }

    /// Outage threshold `2^R_re - 1` on the Eve SINR.
    pub fn sinr_cap(&self) -> f64 {
        2f64.powf(self.redundancy_rate) - 1.0
    }
}
