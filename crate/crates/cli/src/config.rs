//! Run configuration: a `key = value` file merged with command-line flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use divfolio::backtest::TurnoverConvention;
use divfolio::{ProblemFamily, RiskKind, RiskSpec, StrategyId};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const KEYS: [&str; 15] = [
    "data",
    "measure",
    "epsilon",
    "alpha",
    "in_len",
    "hold_len",
    "strategies",
    "eta_mode",
    "eta",
    "grid",
    "out",
    "index_col",
    "family",
    "turnover",
    "seed",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtaMode {
    None,
    Frac,
    Abs,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: PathBuf,
    pub measure: RiskKind,
    pub epsilon: f64,
    pub alpha: f64,
    pub in_len: usize,
    pub hold_len: usize,
    /// `None` when no list was given; each command picks its own default.
    pub strategies: Option<Vec<StrategyId>>,
    pub eta_mode: EtaMode,
    pub eta: Option<f64>,
    pub grid: usize,
    pub out: PathBuf,
    pub index_col: Option<String>,
    pub family: ProblemFamily,
    pub turnover: TurnoverConvention,
    pub seed: u64,
}

/// Reads a config file body. Blank lines and `#` comments are skipped.
pub fn parse_file(text: &str, origin: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| CliError::Input(format!("{origin}:{}: expected key = value", i + 1)))?;
        let key = k.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Input(format!("{origin}:{}: unknown key {:?}", i + 1, k.trim())));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

fn num<T: std::str::FromStr>(raw: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, CliError> {
    raw.get(key).map(|v| v.parse::<T>().map_err(|_| CliError::Input(format!("{key}: cannot parse {v:?}")))).transpose()
}

impl RunConfig {
    /// Validates merged settings; `overrides` wins over `file`.
    pub fn resolve(file: BTreeMap<String, String>, overrides: BTreeMap<String, String>) -> Result<Self, CliError> {
        let mut raw = file;
        raw.extend(overrides);
        for k in raw.keys() {
            if !KEYS.contains(&k.as_str()) {
                return Err(CliError::Input(format!("unknown key {k:?}")));
            }
        }

        let data =
            raw.get("data").map(PathBuf::from).ok_or_else(|| CliError::Input("no data file given (--data)".into()))?;
        let measure: RiskKind = raw
            .get("measure")
            .map_or(Ok(RiskKind::Volatility), |v| v.parse())
            .map_err(|e| CliError::Input(format!("measure: {e}")))?;
        let epsilon = num(&raw, "epsilon")?.unwrap_or(0.05);
        let alpha = num(&raw, "alpha")?.unwrap_or(0.9);
        RiskSpec::cvar(epsilon).map_err(|e| CliError::Input(format!("epsilon: {e}")))?;
        RiskSpec::expectile(alpha).map_err(|e| CliError::Input(format!("alpha: {e}")))?;

        let in_len = num(&raw, "in_len")?.unwrap_or(500);
        let hold_len = num(&raw, "hold_len")?.unwrap_or(20);
        if in_len < 2 {
            return Err(CliError::Input(format!("in_len must be at least 2, got {in_len}")));
        }
        if hold_len < 1 {
            return Err(CliError::Input("hold_len must be at least 1".into()));
        }
        let strategies = raw
            .get("strategies")
            .map(|v| StrategyId::parse_list(v))
            .transpose()
            .map_err(|e| CliError::Input(format!("strategies: {e}")))?;

        let eta: Option<f64> = num(&raw, "eta")?;
        let eta_mode = match raw.get("eta_mode").map(String::as_str) {
            None if eta.is_some() => EtaMode::Abs,
            None | Some("none") => EtaMode::None,
            Some("frac") => EtaMode::Frac,
            Some("abs") => EtaMode::Abs,
            Some(other) => return Err(CliError::Input(format!("eta_mode: expected none, frac or abs, got {other:?}"))),
        };
        match (eta_mode, eta) {
            (EtaMode::None, Some(_)) => return Err(CliError::Input("eta given with eta_mode none".into())),
            (EtaMode::Frac | EtaMode::Abs, None) => {
                return Err(CliError::Input("eta_mode needs a value for eta".into()))
            }
            (EtaMode::Frac, Some(f)) if !(0.0..=1.0).contains(&f) => {
                return Err(CliError::Input(format!("eta fraction must lie in [0, 1], got {f}")))
            }
            (_, Some(e)) if !e.is_finite() => return Err(CliError::Input("eta must be finite".into())),
            _ => {}
        }

        let grid = num(&raw, "grid")?.unwrap_or(10);
        if grid < 2 {
            return Err(CliError::Input(format!("grid must be at least 2, got {grid}")));
        }
        let family = match raw.get("family").map(String::as_str) {
            None | Some("dr") => ProblemFamily::MaxDiversification,
            Some("minrisk") => ProblemFamily::MinRisk,
            Some(other) => return Err(CliError::Input(format!("family: expected dr or minrisk, got {other:?}"))),
        };
        let turnover = match raw.get("turnover").map(String::as_str) {
            None | Some("inception-free") => TurnoverConvention::InceptionFree,
            Some("from-cash") => TurnoverConvention::FromCash,
            Some(other) => {
                return Err(CliError::Input(format!("turnover: expected inception-free or from-cash, got {other:?}")))
            }
        };

        Ok(Self {
            data,
            measure,
            epsilon,
            alpha,
            in_len,
            hold_len,
            strategies,
            eta_mode,
            eta,
            grid,
            out: raw.get("out").map_or_else(|| PathBuf::from("out"), PathBuf::from),
            index_col: raw.get("index_col").cloned(),
            family,
            turnover,
            seed: num(&raw, "seed")?.unwrap_or(0),
        })
    }

    pub fn spec(&self, kind: RiskKind) -> RiskSpec<f64> {
        RiskSpec::from_kind(kind, self.epsilon, self.alpha).expect("validated in resolve")
    }

    /// SHA-256 over the command, the normalized settings and the data bytes.
    /// File paths are left out so a moved data file keeps its hash.
    pub fn hash(&self, command: &str, data: &[u8]) -> String {
        let mut text = format!("command={command}\n");
        let normalized = [
            ("alpha", self.alpha.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("eta", self.eta.map_or("none".into(), |v| v.to_string())),
            ("eta_mode", format!("{:?}", self.eta_mode)),
            ("family", format!("{:?}", self.family)),
            ("grid", self.grid.to_string()),
            ("hold_len", self.hold_len.to_string()),
            ("in_len", self.in_len.to_string()),
            ("index_col", self.index_col.clone().unwrap_or_default()),
            ("measure", self.measure.to_string()),
            ("seed", self.seed.to_string()),
            (
                "strategies",
                self.strategies
                    .as_ref()
                    .map_or("default".into(), |l| l.iter().map(|s| s.name()).collect::<Vec<_>>().join(",")),
            ),
            ("turnover", format!("{:?}", self.turnover)),
        ];
        for (k, v) in normalized {
            let _ = writeln!(text, "{k}={v}");
        }
        let mut h = Sha256::new();
        h.update(text.as_bytes());
        h.update(Sha256::digest(data));
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
