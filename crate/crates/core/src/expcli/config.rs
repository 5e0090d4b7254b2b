//! Scenario configuration files.
//!
//! A configuration is a TOML file with optional sections; each subcommand
//! requires the sections it reads. Every present section is validated on
//! parse and all problems are reported together.
//!
//! ```toml
//! seed = 7                      # default 0
//!
//! [link]
//! name = "comp_exponential"     # or "scaled_sigmoid"
//!
//! [bounds]                      # reachable-range bounds for the tail extension
//! u = 2.0                       # U ≥ 0
//! l = 0.0                       # L ≤ 0
//! d = 2                         # d ≥ 1
//!
//! [mle]
//! grad_tol = 1e-8
//! max_iter = 200
//! ridge_floor = 1e-10
//! divergence_norm_cap = 1e8
//! corrected = true              # fit with the tail-extended link
//!
//! [data]
//! path = "rows.csv"             # header x_1,…,x_d,y[,weight]; relative to this file
//!
//! [grid]                        # evaluation grid for correct-link
//! min = -10.0                   # default L − d − 10
//! max = 12.0                    # default U + d + 10
//! points = 401
//!
//! [counterexample]
//! which = "binary"              # or "continuous"
//! d = 3                         # default 3 (binary) / 2 (continuous)
//! t = 5                         # default 5 (binary) / 4 (continuous)
//! y = 0.75                      # continuous response, default 0.75
//! flip_row = false              # set the last response to 0
//!
//! [bandit]
//! arms = [[1.0, 0.0], [0.0, 1.0]]
//! theta_star = [0.8, 0.2]
//! reward = "bernoulli"          # or "clipped_gaussian"
//! sigma = 0.1
//! tau = 30
//! horizon = 3000
//! alpha = 1.0
//! replicates = 20               # run seeds 0..replicates
//! compare = true                # also run the uncorrected estimator
//!
//! [output]
//! dir = "out"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::emit::to_canonical_json;
use super::CliError;
use crate::bandit::RewardModel;
use crate::linkfn::{LinkFunction, BUILTIN_LINKS};
use crate::mle::MleOptions;
use crate::tailfix::InputRangeBounds;

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    link: Option<RawLink>,
    bounds: Option<RawBounds>,
    mle: Option<RawMle>,
    data: Option<RawData>,
    grid: Option<RawGrid>,
    counterexample: Option<RawCounterexample>,
    bandit: Option<RawBandit>,
    output: Option<RawOutput>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    name: Option<String>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    u: Option<f64>,
    l: Option<f64>,
    d: Option<i64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawMle {
    grad_tol: Option<f64>,
    max_iter: Option<i64>,
    ridge_floor: Option<f64>,
    divergence_norm_cap: Option<f64>,
    corrected: Option<bool>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    path: Option<String>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    min: Option<f64>,
    max: Option<f64>,
    points: Option<i64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawCounterexample {
    which: Option<String>,
    d: Option<i64>,
    t: Option<i64>,
    y: Option<f64>,
    flip_row: Option<bool>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawBandit {
    arms: Option<Vec<Vec<f64>>>,
    theta_star: Option<Vec<f64>>,
    reward: Option<String>,
    sigma: Option<f64>,
    tau: Option<i64>,
    horizon: Option<i64>,
    alpha: Option<f64>,
    replicates: Option<i64>,
    compare: Option<bool>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CounterexampleKind {
    /// Equal-coordinate features, response above the scaled sigmoid's supremum.
    Continuous,
    /// All-ones features, every response 1, under `1 − e^{−x}`.
    Binary,
}

impl CounterexampleKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "continuous" => Some(Self::Continuous),
            "binary" => Some(Self::Binary),
            _ => None,
        }
    }

    pub fn link_name(&self) -> &'static str {
        match self {
            Self::Continuous => "scaled_sigmoid",
            Self::Binary => "comp_exponential",
        }
    }

    pub fn default_d(&self) -> usize {
        match self {
            Self::Continuous => 2,
            Self::Binary => 3,
        }
    }

    pub fn default_t(&self) -> usize {
        match self {
            Self::Continuous => 4,
            Self::Binary => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleSpec {
    pub which: CounterexampleKind,
    pub d: usize,
    pub t: usize,
    /// Response of the continuous rows; binary rows use 1.
    pub y: f64,
    pub flip_row: bool,
}

impl CounterexampleSpec {
    pub fn new(which: CounterexampleKind) -> Self {
        Self { which, d: which.default_d(), t: which.default_t(), y: DEFAULT_CONTINUOUS_Y, flip_row: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BanditSpec {
    pub arms: Vec<Vec<f64>>,
    pub theta_star: Vec<f64>,
    pub reward: RewardModel,
    pub tau: usize,
    pub horizon: usize,
    pub alpha: f64,
    pub replicates: usize,
    pub compare: bool,
}

/// A validated configuration with defaults filled in.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub link: Option<String>,
    pub bounds: Option<InputRangeBounds>,
    pub mle: MleOptions,
    pub corrected: bool,
    pub data_path: Option<PathBuf>,
    pub grid: GridSpec,
    pub counterexample: Option<CounterexampleSpec>,
    pub bandit: Option<BanditSpec>,
    pub output_dir: PathBuf,
    /// SHA-256 of the canonical JSON form of the file's contents.
    pub config_hash: String,
}

pub const DEFAULT_GRID_POINTS: usize = 401;
pub const DEFAULT_CONTINUOUS_Y: f64 = 0.75;
pub const DEFAULT_SIGMA: f64 = 0.1;
pub const DEFAULT_TAU: usize = 30;
pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_OUTPUT_DIR: &str = "out";

impl ScenarioConfig {
    /// The configuration of an empty file.
    pub fn empty() -> Self {
        parse_config_str("", None).expect("the empty configuration is valid")
    }

    pub fn link_function(&self) -> Option<LinkFunction> {
        self.link.as_deref().map(|n| LinkFunction::by_name(n).expect("validated on parse"))
    }
}

/// Reads and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(vec![format!("cannot read {}: {e}", path.display())]))?;
    parse_config_str(&text, path.parent())
}

/// Parses configuration text; relative data paths resolve against `base`.
pub fn parse_config_str(text: &str, base: Option<&Path>) -> Result<ScenarioConfig, CliError> {
    let value: toml::Table = toml::from_str(text).map_err(|e| CliError::Validation(vec![e.to_string()]))?;
    let config_hash = hash_value(&value);
    let raw: RawConfig =
        toml::Value::Table(value).try_into().map_err(|e: toml::de::Error| CliError::Validation(vec![e.to_string()]))?;
    let mut errs = Vec::new();
    let cfg = validate(raw, base, config_hash, &mut errs);
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Validation(errs))
    }
}

/// SHA-256 over the sorted-key JSON rendering, so key order and formatting
/// do not matter.
fn hash_value(value: &toml::Table) -> String {
    let json = serde_json::to_value(value).expect("TOML values are representable in JSON");
    let canonical = to_canonical_json(&sort_keys(json));
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

fn sort_keys(v: serde_json::Value) -> serde_json::Value {
    match v {
        serde_json::Value::Object(map) => {
            let sorted: BTreeMap<String, serde_json::Value> = map.into_iter().map(|(k, v)| (k, sort_keys(v))).collect();
            serde_json::Value::Object(sorted.into_iter().collect())
        }
        serde_json::Value::Array(items) => serde_json::Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

fn count(errs: &mut Vec<String>, field: &str, v: Option<i64>, min: i64, default: usize) -> usize {
    match v {
        None => default,
        Some(n) if n >= min => n as usize,
        Some(n) => {
            errs.push(format!("{field}: must be at least {min} (got {n})"));
            default
        }
    }
}

fn finite(errs: &mut Vec<String>, field: &str, v: Option<f64>) -> Option<f64> {
    match v {
        Some(x) if !x.is_finite() => {
            errs.push(format!("{field}: must be finite (got {x})"));
            None
        }
        other => other,
    }
}

fn validate(raw: RawConfig, base: Option<&Path>, config_hash: String, errs: &mut Vec<String>) -> ScenarioConfig {
    let link = raw.link.and_then(|l| match l.name {
        None => {
            errs.push("link.name: missing".into());
            None
        }
        Some(name) if LinkFunction::by_name(&name).is_err() => {
            errs.push(format!("link.name: unknown link `{name}` (available: {})", BUILTIN_LINKS.join(", ")));
            None
        }
        Some(name) => Some(name),
    });

    let bounds = raw.bounds.and_then(|b| {
        let u = finite(errs, "bounds.u", b.u);
        let l = finite(errs, "bounds.l", b.l);
        let mut ok = true;
        for (field, v) in [("bounds.u", &b.u), ("bounds.l", &b.l)] {
            if v.is_none() {
                errs.push(format!("{field}: missing"));
                ok = false;
            }
        }
        if let Some(u) = u.filter(|u| *u < 0.0) {
            errs.push(format!("bounds.u: must satisfy U ≥ 0 (got {u})"));
            ok = false;
        }
        if let Some(l) = l.filter(|l| *l > 0.0) {
            errs.push(format!("bounds.l: must satisfy L ≤ 0 (got {l})"));
            ok = false;
        }
        let d = match b.d {
            None => {
                errs.push("bounds.d: missing".into());
                ok = false;
                1
            }
            Some(d) if d < 1 => {
                errs.push(format!("bounds.d: must be at least 1 (got {d})"));
                ok = false;
                1
            }
            Some(d) => d as usize,
        };
        match (ok, u, l) {
            (true, Some(u), Some(l)) => InputRangeBounds::new(u, l, d).ok(),
            _ => None,
        }
    });

    let mut mle = MleOptions::default();
    let mut corrected = true;
    if let Some(m) = raw.mle {
        if let Some(v) = finite(errs, "mle.grad_tol", m.grad_tol) {
            if v > 0.0 {
                mle.grad_tol = v;
            } else {
                errs.push(format!("mle.grad_tol: must be positive (got {v})"));
            }
        }
        mle.max_iter = count(errs, "mle.max_iter", m.max_iter, 1, mle.max_iter);
        if let Some(v) = finite(errs, "mle.ridge_floor", m.ridge_floor) {
            if v >= 0.0 {
                mle.ridge_floor = v;
            } else {
                errs.push(format!("mle.ridge_floor: must be nonnegative (got {v})"));
            }
        }
        if let Some(v) = finite(errs, "mle.divergence_norm_cap", m.divergence_norm_cap) {
            if v > 0.0 {
                mle.divergence_norm_cap = v;
            } else {
                errs.push(format!("mle.divergence_norm_cap: must be positive (got {v})"));
            }
        }
        corrected = m.corrected.unwrap_or(true);
    }

    let data_path = raw.data.and_then(|d| match d.path {
        None => {
            errs.push("data.path: missing".into());
            None
        }
        Some(p) => {
            let p = PathBuf::from(p);
            let p = match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            };
            if !p.is_file() {
                errs.push(format!("data.path: file {} does not exist", p.display()));
            }
            Some(p)
        }
    });

    let mut grid = GridSpec { min: None, max: None, points: DEFAULT_GRID_POINTS };
    if let Some(g) = raw.grid {
        grid.min = finite(errs, "grid.min", g.min);
        grid.max = finite(errs, "grid.max", g.max);
        grid.points = count(errs, "grid.points", g.points, 2, DEFAULT_GRID_POINTS);
        if let (Some(lo), Some(hi)) = (grid.min, grid.max) {
            if lo >= hi {
                errs.push(format!("grid.min: must be below grid.max ({lo} ≥ {hi})"));
            }
        }
    }

    let counterexample = raw.counterexample.and_then(|c| {
        let which = match c.which.as_deref() {
            None => {
                errs.push("counterexample.which: missing".into());
                return None;
            }
            Some(w) => match CounterexampleKind::parse(w) {
                Some(k) => k,
                None => {
                    errs.push(format!("counterexample.which: unknown scenario `{w}` (available: continuous, binary)"));
                    return None;
                }
            },
        };
        let mut spec = CounterexampleSpec::new(which);
        spec.d = count(errs, "counterexample.d", c.d, 1, spec.d);
        spec.t = count(errs, "counterexample.t", c.t, 1, spec.t);
        spec.flip_row = c.flip_row.unwrap_or(false);
        if let Some(y) = finite(errs, "counterexample.y", c.y) {
            if which == CounterexampleKind::Binary {
                errs.push("counterexample.y: only the continuous scenario takes a response".into());
            } else if !(0.5 < y && y <= 1.0) {
                errs.push(format!("counterexample.y: must lie in (0.5, 1] (got {y})"));
            } else {
                spec.y = y;
            }
        }
        Some(spec)
    });

    let bandit = raw.bandit.and_then(|b| validate_bandit(b, errs));

    let output_dir =
        raw.output.and_then(|o| o.dir).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));

    ScenarioConfig {
        seed: raw.seed.unwrap_or(0),
        link,
        bounds,
        mle,
        corrected,
        data_path,
        grid,
        counterexample,
        bandit,
        output_dir,
        config_hash,
    }
}

fn validate_bandit(b: RawBandit, errs: &mut Vec<String>) -> Option<BanditSpec> {
    let n_before = errs.len();
    let theta_star = b.theta_star.unwrap_or_else(|| {
        errs.push("bandit.theta_star: missing".into());
        Vec::new()
    });
    if theta_star.iter().any(|t| !t.is_finite()) {
        errs.push("bandit.theta_star: entries must be finite".into());
    }
    let arms = b.arms.unwrap_or_else(|| {
        errs.push("bandit.arms: missing".into());
        Vec::new()
    });
    if arms.is_empty() && errs.len() == n_before {
        errs.push("bandit.arms: need at least one arm".into());
    }
    for (k, a) in arms.iter().enumerate() {
        if !theta_star.is_empty() && a.len() != theta_star.len() {
            errs.push(format!(
                "bandit.arms[{k}]: dimension {} differs from theta_star ({})",
                a.len(),
                theta_star.len()
            ));
        }
        if a.iter().any(|v| !(0.0..=1.0).contains(v)) {
            errs.push(format!("bandit.arms[{k}]: features must lie in [0, 1]"));
        }
    }
    let reward = match b.reward.as_deref().unwrap_or("bernoulli") {
        "bernoulli" => {
            if b.sigma.is_some() {
                errs.push("bandit.sigma: only clipped_gaussian rewards take sigma".into());
            }
            RewardModel::Bernoulli
        }
        "clipped_gaussian" => {
            let sigma = finite(errs, "bandit.sigma", b.sigma).unwrap_or(DEFAULT_SIGMA);
            if sigma < 0.0 {
                errs.push(format!("bandit.sigma: must be nonnegative (got {sigma})"));
            }
            RewardModel::ClippedGaussian { sigma }
        }
        other => {
            errs.push(format!(
                "bandit.reward: unknown reward model `{other}` (available: bernoulli, clipped_gaussian)"
            ));
            RewardModel::Bernoulli
        }
    };
    let horizon = match b.horizon {
        None => {
            errs.push("bandit.horizon: missing".into());
            1
        }
        h => count(errs, "bandit.horizon", h, 1, 1),
    };
    let tau = count(errs, "bandit.tau", b.tau, 0, DEFAULT_TAU.min(horizon));
    if tau > horizon {
        errs.push(format!("bandit.tau: must not exceed bandit.horizon ({tau} > {horizon})"));
    }
    let alpha = finite(errs, "bandit.alpha", b.alpha).unwrap_or(DEFAULT_ALPHA);
    if alpha < 0.0 {
        errs.push(format!("bandit.alpha: must be nonnegative (got {alpha})"));
    }
    let replicates = count(errs, "bandit.replicates", b.replicates, 1, 1);
    (errs.len() == n_before).then_some(BanditSpec {
        arms,
        theta_star,
        reward,
        tau,
        horizon,
        alpha,
        replicates,
        compare: b.compare.unwrap_or(true),
    })
}
