//! Flat `key = value` experiment configuration.

use std::path::PathBuf;

use phdyn_core::gate::SpecDraft;
use phdyn_core::maps::{Family, Mode, PerturbationSpec};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("`{key} = {value}`: expected {expected}")]
    Value { key: String, value: String, expected: &'static str },
    #[error("cannot read config: {0}")]
    Io(String),
}

/// Everything a run needs. `None` for `k` and `flow` means "auto".
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub family: Family,
    pub n_power: u32,
    pub k: Option<u64>,
    pub delta0: Option<f64>,
    pub mode: Mode,
    pub flow: Option<f64>,
    pub ensemble: usize,
    pub steps: usize,
    pub transient: Option<usize>,
    pub max_transient: Option<usize>,
    pub seed: u64,
    pub output: PathBuf,
    pub perturbation: f64,
    pub perturbation_seed: u64,
    pub samples: Option<usize>,
    pub orbits: usize,
    pub eta: Option<f64>,
    pub r_variant: RVariant,
}

/// Which of the two admissible second bump functions to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RVariant {
    Phi,
    PhiPrime,
}

pub const KEYS: [&str; 18] = [
    "family",
    "N",
    "k",
    "delta0",
    "mode",
    "flow",
    "ensemble",
    "steps",
    "transient",
    "max_transient",
    "seed",
    "output",
    "perturbation",
    "perturbation_seed",
    "samples",
    "orbits",
    "eta",
    "r_variant",
];

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            family: Family::Fk,
            n_power: 4,
            k: None,
            delta0: None,
            mode: Mode::Strict,
            flow: None,
            ensemble: 100,
            steps: 10_000,
            transient: None,
            max_transient: None,
            seed: 1,
            output: PathBuf::from("out"),
            perturbation: 0.0,
            perturbation_seed: 0,
            samples: None,
            orbits: 1000,
            eta: None,
            r_variant: RVariant::Phi,
        }
    }
}

fn parse_family(v: &str) -> Option<Family> {
    Family::ALL.into_iter().find(|f| f.name().eq_ignore_ascii_case(v))
}

fn bad(key: &str, value: &str, expected: &'static str) -> ConfigError {
    ConfigError::Value { key: key.into(), value: value.into(), expected }
}

fn num<T: std::str::FromStr>(key: &str, v: &str, expected: &'static str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| bad(key, v, expected))
}

fn auto_or<T: std::str::FromStr>(key: &str, v: &str, expected: &'static str) -> Result<Option<T>, ConfigError> {
    if v.eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        num(key, v, expected).map(Some)
    }
}

pub fn parse_mode(v: &str) -> Result<Mode, ConfigError> {
    match v.to_ascii_lowercase().as_str() {
        "strict" => Ok(Mode::Strict),
        "relaxed" => Ok(Mode::Relaxed),
        _ => Err(bad("mode", v, "strict or relaxed")),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax { line: i + 1, text: raw.into() });
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey { line: i + 1, key: key.into() });
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Duplicate { line: i + 1, key: key.into() });
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "family" => self.family = parse_family(v).ok_or_else(|| bad(key, v, "a family name such as F_k"))?,
            "N" => self.n_power = num(key, v, "a positive integer")?,
            "k" => self.k = auto_or(key, v, "a positive integer or auto")?,
            "delta0" => self.delta0 = auto_or(key, v, "a real number or auto")?,
            "mode" => self.mode = parse_mode(v)?,
            "flow" => self.flow = auto_or(key, v, "a non-negative real or auto")?,
            "ensemble" => self.ensemble = num(key, v, "a positive integer")?,
            "steps" => self.steps = num(key, v, "a positive integer")?,
            "transient" => self.transient = auto_or(key, v, "an integer or auto")?,
            "max_transient" => self.max_transient = auto_or(key, v, "an integer or auto")?,
            "seed" => self.seed = num(key, v, "an unsigned integer")?,
            "output" => self.output = PathBuf::from(v),
            "perturbation" => self.perturbation = num(key, v, "a real number")?,
            "perturbation_seed" => self.perturbation_seed = num(key, v, "an unsigned integer")?,
            "samples" => self.samples = auto_or(key, v, "a positive integer or auto")?,
            "orbits" => self.orbits = num(key, v, "a positive integer")?,
            "eta" => self.eta = auto_or(key, v, "a real number or auto")?,
            "r_variant" => {
                self.r_variant = match v {
                    "phi" => RVariant::Phi,
                    "phi_prime" => RVariant::PhiPrime,
                    _ => return Err(bad(key, v, "phi or phi_prime")),
                }
            }
            _ => unreachable!("key list and match arms agree"),
        }
        Ok(())
    }

    /// Range checks that do not need the map itself.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_power == 0 {
            return Err(bad("N", "0", "a positive integer"));
        }
        if self.k == Some(0) {
            return Err(bad("k", "0", "a positive integer or auto"));
        }
        if self.ensemble == 0 {
            return Err(bad("ensemble", "0", "a positive integer"));
        }
        if self.steps < 2 {
            return Err(bad("steps", &self.steps.to_string(), "at least 2"));
        }
        if self.samples == Some(0) {
            return Err(bad("samples", "0", "a positive integer or auto"));
        }
        if let Some(d) = self.delta0 {
            if !(d > 0.0 && d < 0.25) {
                return Err(bad("delta0", &d.to_string(), "a real in (0, 1/4)"));
            }
        }
        if let Some(f) = self.flow {
            if !(f.is_finite() && f >= 0.0) {
                return Err(bad("flow", &f.to_string(), "a non-negative real or auto"));
            }
        }
        if !(self.perturbation.is_finite() && self.perturbation >= 0.0) {
            return Err(bad("perturbation", &self.perturbation.to_string(), "a non-negative real"));
        }
        Ok(())
    }

    /// The gate's input, with `k` and the circle strength still open when the
    /// configuration says `auto`.
    pub fn draft(&self) -> SpecDraft {
        let base = match self.mode {
            Mode::Strict => SpecDraft::strict(self.family),
            Mode::Relaxed => SpecDraft::relaxed(self.family),
        };
        SpecDraft {
            n_power: self.n_power,
            k: self.k,
            delta0: self.delta0.unwrap_or(base.delta0),
            flow_strength: self.flow,
            perturbation: PerturbationSpec { size: self.perturbation, seed: self.perturbation_seed },
            r_uses_phi_prime: self.r_variant == RVariant::PhiPrime,
            ..base
        }
    }
}
