//! `key = value` experiment config files.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::sim::{ExperimentConfig, SimError, Topology, TopologyError, TopologySource};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value `{value}` for `{key}`")]
    Value {
        line: usize,
        key: String,
        value: String,
    },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("topology file {path}: {source}")]
    Topology {
        path: PathBuf,
        source: TopologyError,
    },
    #[error(transparent)]
    Invalid(#[from] SimError),
}

/// Values present in a config file. Absent keys keep their defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub nodes: Option<usize>,
    /// `Some(None)` means `tau = inf`.
    pub tau: Option<Option<f64>>,
    pub sessions: Option<usize>,
    pub packets: Option<u32>,
    pub concurrency: Option<usize>,
    pub seed: Option<u64>,
    pub loss_baseline_max: Option<f64>,
    pub loss_spike_max: Option<f64>,
    pub loss_spike_prob: Option<f64>,
    pub topology_file: Option<PathBuf>,
}

pub const KEYS: [&str; 10] = [
    "nodes",
    "tau",
    "sessions",
    "packets",
    "concurrency",
    "seed",
    "loss_baseline_max",
    "loss_spike_max",
    "loss_spike_prob",
    "topology_file",
];

/// Parses `tau`, accepting `inf`/`infinity` for a change-free network.
pub fn parse_tau(s: &str) -> Option<Option<f64>> {
    match s.to_ascii_lowercase().as_str() {
        "inf" | "infinity" | "none" => Some(None),
        _ => s
            .parse::<f64>()
            .ok()
            .filter(|t| *t > 0.0)
            .map(|t| t.is_finite().then_some(t)),
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ConfigFile::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.split('#').next().unwrap_or("").trim();
            if l.is_empty() {
                continue;
            }
            let (key, value) = l.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                msg: format!("expected `key = value`, got `{l}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let Some(&known) = KEYS.iter().find(|k| **k == key) else {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            };
            if seen.contains(&known) {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
            seen.push(known);
            let bad = || ConfigError::Value {
                line,
                key: key.to_string(),
                value: value.to_string(),
            };
            match known {
                "nodes" => cfg.nodes = Some(value.parse().map_err(|_| bad())?),
                "tau" => cfg.tau = Some(parse_tau(value).ok_or_else(bad)?),
                "sessions" => cfg.sessions = Some(value.parse().map_err(|_| bad())?),
                "packets" => cfg.packets = Some(value.parse().map_err(|_| bad())?),
                "concurrency" => cfg.concurrency = Some(value.parse().map_err(|_| bad())?),
                "seed" => cfg.seed = Some(value.parse().map_err(|_| bad())?),
                "loss_baseline_max" => {
                    cfg.loss_baseline_max = Some(value.parse().map_err(|_| bad())?)
                }
                "loss_spike_max" => cfg.loss_spike_max = Some(value.parse().map_err(|_| bad())?),
                "loss_spike_prob" => cfg.loss_spike_prob = Some(value.parse().map_err(|_| bad())?),
                "topology_file" => {
                    if value.is_empty() {
                        return Err(bad());
                    }
                    cfg.topology_file = Some(PathBuf::from(value));
                }
                _ => unreachable!("key list and match arms agree"),
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        // topology paths are relative to the config file
        if let (Some(t), Some(dir)) = (&cfg.topology_file, path.parent()) {
            if t.is_relative() {
                cfg.topology_file = Some(dir.join(t));
            }
        }
        Ok(cfg)
    }

    /// Applies the present values on top of `base` and validates the result.
    pub fn apply(&self, base: ExperimentConfig) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = base;
        if let Some(v) = self.nodes {
            cfg.nodes = v;
        }
        if let Some(v) = self.tau {
            cfg.change.tau = v;
        }
        if let Some(v) = self.sessions {
            cfg.sessions = v;
        }
        if let Some(v) = self.packets {
            cfg.packets = v;
        }
        if let Some(v) = self.concurrency {
            cfg.concurrency = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.loss_baseline_max {
            cfg.loss.baseline_max = v;
        }
        if let Some(v) = self.loss_spike_max {
            cfg.loss.spike_max = v;
        }
        if let Some(v) = self.loss_spike_prob {
            cfg.loss.spike_prob = v;
        }
        if let Some(path) = &self.topology_file {
            cfg.topology = TopologySource::Fixed(load_topology(path)?);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn load_topology(path: &Path) -> Result<Topology, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Topology::parse(&text).map_err(|source| ConfigError::Topology {
        path: path.to_path_buf(),
        source,
    })
}
