//! Run configuration shared by every command.
//!
//! Values are resolved from, in decreasing priority, command-line flags, a
//! flat `key = value` file, the `ADL_CORPUS` environment variable (corpus
//! root only) and built-in defaults.

use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::fusion::{Granularity, SpaceMask};
use crate::hhmm::{HhmmConfig, InitMode};
use crate::pipeline::{ExperimentConfig, Topology};
use crate::segmentation::DEFAULT_OVERLAP;

pub const CORPUS_ENV: &str = "ADL_CORPUS";

pub const DEFAULT_MASK: &str = "htpe+hc+rm+audio+cld+loc";
pub const DEFAULT_GRANULARITY: &str = "segment";
pub const DEFAULT_M: &str = "3";
pub const DEFAULT_M_NONE: &str = "3";
pub const DEFAULT_GAUSSIANS: &str = "5";
pub const DEFAULT_LOOP: f64 = 0.6;
pub const DEFAULT_BEAM: f64 = 200.0;
pub const DEFAULT_PRUNE: f64 = 1e-3;
pub const DEFAULT_INIT: &str = "flat";
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_OUT: &str = "out";
pub const DEFAULT_ITERATIONS: usize = 20;

/// Allowed bottom-level state counts.
pub const ACTIVITY_STATES: [usize; 3] = [3, 5, 7];
pub const REJECT_STATES: [usize; 5] = [1, 3, 5, 7, 9];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("invalid value for {key}: {message}")]
    Invalid { key: String, message: String },
    #[error("no corpus given (use --corpus, the config file or {CORPUS_ENV})")]
    NoCorpus,
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub mask: SpaceMask,
    pub granularity: Granularity,
    pub m: Vec<usize>,
    pub m_none: Vec<usize>,
    pub gaussians: Vec<usize>,
    pub loop_prob: f64,
    pub beam: f64,
    pub prune: f64,
    pub init: InitMode,
    pub seed: u64,
    pub out: PathBuf,
    pub overlap: f64,
    pub iterations: usize,
    pub f1_conventional: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = Self {
            corpus: None,
            mask: SpaceMask::FULL,
            granularity: Granularity::Segment,
            m: Vec::new(),
            m_none: Vec::new(),
            gaussians: Vec::new(),
            loop_prob: DEFAULT_LOOP,
            beam: DEFAULT_BEAM,
            prune: DEFAULT_PRUNE,
            init: InitMode::Flat,
            seed: DEFAULT_SEED,
            out: PathBuf::from(DEFAULT_OUT),
            overlap: DEFAULT_OVERLAP,
            iterations: DEFAULT_ITERATIONS,
            f1_conventional: false,
        };
        for (k, v) in [
            ("m", DEFAULT_M),
            ("m_none", DEFAULT_M_NONE),
            ("gaussians", DEFAULT_GAUSSIANS),
        ] {
            c.set(k, v).expect("defaults parse");
        }
        c
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| invalid(key, e.to_string()))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>, ConfigError> {
    let list = value
        .split(',')
        .map(|v| parse::<usize>(key, v.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    if list.is_empty() {
        return Err(invalid(key, "empty list"));
    }
    Ok(list)
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(invalid(key, format!("expected a boolean, got '{other}'"))),
    }
}

impl RunConfig {
    /// Keys accepted by [`RunConfig::set`] and the config file.
    pub const KEYS: [&'static str; 15] = [
        "corpus",
        "mask",
        "granularity",
        "m",
        "m_none",
        "gaussians",
        "loop",
        "beam",
        "prune",
        "init",
        "seed",
        "out",
        "s",
        "iterations",
        "f1_conventional",
    ];

    /// Sets one field from its textual form. Dashes in keys are accepted.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "corpus" => self.corpus = Some(PathBuf::from(value)),
            "mask" => {
                self.mask = value
                    .parse()
                    .map_err(|e: crate::fusion::FusionError| invalid("mask", e.to_string()))?
            }
            "granularity" => {
                self.granularity = value.parse().map_err(|e: crate::fusion::FusionError| {
                    invalid("granularity", e.to_string())
                })?
            }
            "m" => self.m = parse_list("m", value)?,
            "m_none" => self.m_none = parse_list("m_none", value)?,
            "gaussians" => self.gaussians = parse_list("gaussians", value)?,
            "loop" => self.loop_prob = parse("loop", value)?,
            "beam" => self.beam = parse("beam", value)?,
            "prune" => self.prune = parse("prune", value)?,
            "init" => self.init = parse("init", value)?,
            "seed" => self.seed = parse("seed", value)?,
            "out" => self.out = PathBuf::from(value),
            "s" => self.overlap = parse("s", value)?,
            "iterations" => self.iterations = parse("iterations", value)?,
            "f1_conventional" => self.f1_conventional = parse_bool("f1_conventional", value)?,
            _ => return Err(ConfigError::UnknownKey(key)),
        }
        Ok(())
    }

    /// Applies a `key = value` file. Blank lines and `#` comments are ignored.
    pub fn apply_file(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                message: format!("expected key = value, got '{line}'"),
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    /// Checks ranges and the allowed state counts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(&m) = self.m.iter().find(|m| !ACTIVITY_STATES.contains(m)) {
            return Err(invalid("m", format!("{m} not in {ACTIVITY_STATES:?}")));
        }
        if let Some(&m) = self.m_none.iter().find(|m| !REJECT_STATES.contains(m)) {
            return Err(invalid("m_none", format!("{m} not in {REJECT_STATES:?}")));
        }
        if self.gaussians.contains(&0) {
            return Err(invalid("gaussians", "must be at least 1"));
        }
        if !(self.loop_prob > 0.0 && self.loop_prob < 1.0) {
            return Err(invalid("loop", "must lie in (0, 1)"));
        }
        if !(self.beam > 0.0) {
            return Err(invalid("beam", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.prune) {
            return Err(invalid("prune", "must lie in [0, 1)"));
        }
        if !(self.overlap > 0.0 && self.overlap < 1.0) {
            return Err(invalid("s", "must lie in (0, 1)"));
        }
        if self.iterations == 0 {
            return Err(invalid("iterations", "must be at least 1"));
        }
        Ok(())
    }

    pub fn corpus_root(&self) -> Result<PathBuf, ConfigError> {
        self.corpus.clone().ok_or(ConfigError::NoCorpus)
    }

    /// Every (m, m_none, K) combination, in list order.
    pub fn topologies(&self) -> Vec<Topology> {
        let mut out = Vec::new();
        for &states in &self.m {
            for &states_none in &self.m_none {
                for &mixtures in &self.gaussians {
                    out.push(Topology {
                        states,
                        states_none,
                        mixtures,
                    });
                }
            }
        }
        out
    }

    /// The single topology of a non-sweep command.
    pub fn single_topology(&self) -> Result<Topology, ConfigError> {
        for (key, list) in [
            ("m", &self.m),
            ("m_none", &self.m_none),
            ("gaussians", &self.gaussians),
        ] {
            if list.len() != 1 {
                return Err(invalid(key, "only sweep accepts a list"));
            }
        }
        Ok(self.topologies()[0])
    }

    pub fn hhmm(&self, topology: Topology) -> HhmmConfig {
        HhmmConfig {
            states: topology.states,
            states_none: topology.states_none,
            mixtures: topology.mixtures,
            loop_prob: self.loop_prob,
            init: self.init,
            prune_threshold: self.prune,
            max_iters: self.iterations,
            ..HhmmConfig::default()
        }
    }

    pub fn experiment(&self, topology: Topology) -> ExperimentConfig {
        ExperimentConfig {
            mask: self.mask,
            granularity: self.granularity,
            hhmm: self.hhmm(topology),
            beam: self.beam,
        }
    }
}
