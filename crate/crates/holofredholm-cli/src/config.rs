//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Keys are dotted, unknown keys
//! and repeated keys are errors. Model parameters live under `model.` and are
//! checked against the registry when the model is built.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },

    #[error("unknown key '{0}'")]
    UnknownKey(String),

    #[error("key '{0}' given twice")]
    Duplicate(String),

    #[error("missing required key '{0}'")]
    Missing(&'static str),

    #[error("key '{key}': {reason}")]
    Value { key: String, reason: String },

    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Solve,
    Tcompat,
    Converge,
    Stability,
    Pollution,
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "solve" => Self::Solve,
            "tcompat" => Self::Tcompat,
            "converge" => Self::Converge,
            "stability" => Self::Stability,
            "pollution" => Self::Pollution,
            _ => return Err(format!("expected one of solve, tcompat, converge, stability, pollution, got '{s}'")),
        })
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Solve => "solve",
            Self::Tcompat => "tcompat",
            Self::Converge => "converge",
            Self::Stability => "stability",
            Self::Pollution => "pollution",
        })
    }
}

/// Explicit contour; unset fields fall back to the model's suggested contour.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContourSpec {
    pub index: Option<usize>,
    pub center_re: Option<f64>,
    pub center_im: Option<f64>,
    pub rx: Option<f64>,
    pub ry: Option<f64>,
    pub nodes: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StabilitySpec {
    pub center_re: Option<f64>,
    pub center_im: Option<f64>,
    pub radius: Option<f64>,
    pub points: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tolerances {
    pub rank_tol: f64,
    pub cluster_tol: f64,
    pub cond_limit: f64,
    /// Relative residual bound for returned eigenpairs.
    pub residual: f64,
    /// Relative distance for matching computed and reference eigenvalues.
    pub matching: f64,
    /// Finest-level discrete norm accepted as compatible.
    pub tcompat: f64,
    pub order_slack: f64,
    pub ratio_variation: f64,
    pub eigvec_variation: f64,
    pub stability_variation: f64,
    /// Relative increase of `δ_n` tolerated between consecutive levels.
    pub monotone_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_tol: 1e-8,
            cluster_tol: 1e-8,
            cond_limit: 1e14,
            residual: 1e-8,
            matching: 1e-5,
            tcompat: 1e-10,
            order_slack: 0.2,
            ratio_variation: 10.0,
            eigvec_variation: 10.0,
            stability_variation: 2.0,
            monotone_slack: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverSpec {
    pub probe_rank: Option<usize>,
    pub p_init: Option<usize>,
    pub p_max: Option<usize>,
    pub max_chain: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub model: String,
    pub params: BTreeMap<String, f64>,
    pub levels: Option<Vec<usize>>,
    pub contour: ContourSpec,
    pub experiment: Experiment,
    pub tolerances: Tolerances,
    pub solver: SolverSpec,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub probe: (Option<f64>, Option<f64>),
    pub stability: StabilitySpec,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::Value {
        key: key.into(),
        reason: format!("cannot parse '{value}': {e}"),
    })
}

fn finite(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = parse(key, value)?;
    if !v.is_finite() {
        return Err(ConfigError::Value {
            key: key.into(),
            reason: "must be finite".into(),
        });
    }
    Ok(v)
}

fn positive(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v = finite(key, value)?;
    if v <= 0.0 {
        return Err(ConfigError::Value {
            key: key.into(),
            reason: format!("must be positive, got {v}"),
        });
    }
    Ok(v)
}

fn count(key: &str, value: &str) -> Result<usize, ConfigError> {
    let v: usize = parse(key, value)?;
    if v == 0 {
        return Err(ConfigError::Value {
            key: key.into(),
            reason: "must be at least 1".into(),
        });
    }
    Ok(v)
}

/// Comma-separated list of positive integers.
pub fn parse_levels(value: &str) -> Result<Vec<usize>, ConfigError> {
    let levels = value
        .split(',')
        .map(|t| count("levels", t.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    if levels.is_empty() {
        return Err(ConfigError::Value {
            key: "levels".into(),
            reason: "empty list".into(),
        });
    }
    Ok(levels)
}

impl ExperimentConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                reason: format!("expected 'key = value', got '{line}'"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    reason: "empty key or value".into(),
                });
            }
            if pairs.iter().any(|(p, _)| p == k) {
                return Err(ConfigError::Duplicate(k.into()));
            }
            pairs.push((k.into(), v.into()));
        }

        let mut model = None;
        let mut experiment = None;
        let mut cfg = ExperimentConfig {
            model: String::new(),
            params: BTreeMap::new(),
            levels: None,
            contour: ContourSpec::default(),
            experiment: Experiment::Solve,
            tolerances: Tolerances::default(),
            solver: SolverSpec::default(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            probe: (None, None),
            stability: StabilitySpec::default(),
        };
        for (k, v) in &pairs {
            let (k, v) = (k.as_str(), v.as_str());
            let t = &mut cfg.tolerances;
            match k {
                "model.name" => model = Some(v.to_string()),
                "experiment" => {
                    experiment = Some(v.parse::<Experiment>().map_err(|reason| ConfigError::Value {
                        key: k.into(),
                        reason,
                    })?)
                }
                "levels" => cfg.levels = Some(parse_levels(v)?),
                "output_dir" => cfg.output_dir = PathBuf::from(v),
                "seed" => cfg.seed = parse(k, v)?,
                "contour.index" => cfg.contour.index = Some(parse(k, v)?),
                "contour.center_re" => cfg.contour.center_re = Some(finite(k, v)?),
                "contour.center_im" => cfg.contour.center_im = Some(finite(k, v)?),
                "contour.rx" => cfg.contour.rx = Some(positive(k, v)?),
                "contour.ry" => cfg.contour.ry = Some(positive(k, v)?),
                "contour.nodes" => cfg.contour.nodes = Some(count(k, v)?),
                "probe.lambda_re" => cfg.probe.0 = Some(finite(k, v)?),
                "probe.lambda_im" => cfg.probe.1 = Some(finite(k, v)?),
                "stability.center_re" => cfg.stability.center_re = Some(finite(k, v)?),
                "stability.center_im" => cfg.stability.center_im = Some(finite(k, v)?),
                "stability.radius" => cfg.stability.radius = Some(positive(k, v)?),
                "stability.points" => cfg.stability.points = Some(count(k, v)?),
                "solver.probe_rank" => cfg.solver.probe_rank = Some(count(k, v)?),
                "solver.p_init" => cfg.solver.p_init = Some(count(k, v)?),
                "solver.p_max" => cfg.solver.p_max = Some(count(k, v)?),
                "solver.max_chain" => cfg.solver.max_chain = Some(count(k, v)?),
                "tolerances.rank_tol" => t.rank_tol = positive(k, v)?,
                "tolerances.cluster_tol" => t.cluster_tol = positive(k, v)?,
                "tolerances.cond_limit" => t.cond_limit = positive(k, v)?,
                "tolerances.residual" => t.residual = positive(k, v)?,
                "tolerances.matching" => t.matching = positive(k, v)?,
                "tolerances.tcompat" => t.tcompat = positive(k, v)?,
                "tolerances.order_slack" => t.order_slack = positive(k, v)?,
                "tolerances.ratio_variation" => t.ratio_variation = positive(k, v)?,
                "tolerances.eigvec_variation" => t.eigvec_variation = positive(k, v)?,
                "tolerances.stability_variation" => t.stability_variation = positive(k, v)?,
                "tolerances.monotone_slack" => t.monotone_slack = positive(k, v)?,
                _ => match k.strip_prefix("model.") {
                    Some(p) if !p.is_empty() && !p.contains('.') => {
                        cfg.params.insert(p.to_string(), finite(k, v)?);
                    }
                    _ => return Err(ConfigError::UnknownKey(k.into())),
                },
            }
        }
        cfg.model = model.ok_or(ConfigError::Missing("model.name"))?;
        cfg.experiment = experiment.ok_or(ConfigError::Missing("experiment"))?;
        if cfg.contour.index.is_some() && cfg.contour.center_re.is_some() {
            return Err(ConfigError::Value {
                key: "contour.index".into(),
                reason: "cannot be combined with an explicit contour".into(),
            });
        }
        if cfg.contour.center_re.is_some() != cfg.contour.rx.is_some()
            || (cfg.contour.center_re.is_none()
                && (cfg.contour.center_im.is_some() || cfg.contour.ry.is_some()))
        {
            return Err(ConfigError::Value {
                key: "contour".into(),
                reason: "an explicit contour needs at least contour.center_re and contour.rx".into(),
            });
        }
        Ok(cfg)
    }
}
