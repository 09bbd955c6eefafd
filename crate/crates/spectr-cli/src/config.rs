//! Experiment configuration: a flat `key = value` text file plus flag
//! overrides, flags winning. The same `set` path handles both, so a bad
//! value is rejected identically no matter where it came from.

use std::fmt;
use std::path::Path;

use spectr_core::merge::MergeKind;
use spectr_core::router::RouterKind;
use spectr_core::synth::{SweepConfig, SynthConfig};
use spectr_core::Error;

/// Problems reading or understanding configuration input. These are input
/// errors (exit 2), distinct from well-formed but semantically invalid
/// settings (exit 3, reported as [`spectr_core::Error`]).
#[derive(Debug)]
pub enum ConfigError {
    Io {
        path: String,
        source: std::io::Error,
    },
    /// A line without a `key = value` shape.
    BadLine {
        line: usize,
        text: String,
    },
    UnknownKey {
        key: String,
    },
    BadValue {
        key: &'static str,
        value: String,
        expected: &'static str,
    },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, source } => write!(f, "cannot read config `{path}`: {source}"),
            ConfigError::BadLine { line, text } => {
                write!(f, "config line {line}: `{text}` is not a key = value pair")
            }
            ConfigError::UnknownKey { key } => write!(f, "unknown config key `{key}`"),
            ConfigError::BadValue {
                key,
                value,
                expected,
            } => {
                write!(
                    f,
                    "config key `{key}`: cannot parse `{value}` (expected {expected})"
                )
            }
        }
    }
}

impl std::error::Error for ConfigError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            ConfigError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

/// Which weighting rule the router hands to the merge step. The softmax
/// temperature lives in [`RunConfig::temperature`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightingKind {
    Uniform,
    Softmax,
}

impl fmt::Display for WeightingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightingKind::Uniform => "uniform",
            WeightingKind::Softmax => "softmax",
        })
    }
}

/// Everything one experiment or routing run needs. Defaults mirror the
/// library's synthetic defaults: 9 tasks in dimension 64, rank 8, k = 4.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub router: RouterKind,
    pub k: usize,
    pub merge: MergeKind,
    pub weighting: WeightingKind,
    pub temperature: f64,
    pub seed: u64,
    pub t_count: usize,
    pub d: usize,
    pub m: usize,
    pub rank: usize,
    pub n_per_task: usize,
    pub num_layers: usize,
    /// Task-similarity knob in radians; `pi/2` = orthogonal tasks.
    pub overlap_angle: f64,
    pub noise_sigma: f64,
    /// Ranks visited by the sweep.
    pub ranks: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        let sweep = SweepConfig::default();
        RunConfig {
            router: RouterKind::Spectr,
            k: synth.k,
            merge: MergeKind::TwoStep,
            weighting: WeightingKind::Uniform,
            temperature: 1.0,
            seed: synth.seed,
            t_count: synth.t_count,
            d: synth.d,
            m: synth.m,
            rank: synth.rank,
            n_per_task: synth.n_per_task,
            num_layers: synth.num_layers,
            overlap_angle: synth.overlap_angle,
            noise_sigma: synth.noise_sigma,
            ranks: sweep.ranks,
        }
    }
}

fn parse<T: std::str::FromStr>(
    key: &'static str,
    value: &str,
    expected: &'static str,
) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::BadValue {
        key,
        value: value.trim().to_string(),
        expected,
    })
}

/// Parses a comma-separated rank list such as `1,2,4,8,16`.
pub fn parse_ranks(value: &str) -> Result<Vec<usize>, ConfigError> {
    value
        .split(',')
        .map(|part| parse("ranks", part, "comma-separated positive integers"))
        .collect()
}

impl RunConfig {
    /// Applies one `key = value` pair. Unknown keys and unparseable values
    /// are rejected; semantic checks happen later in [`validate`](Self::validate).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "router" => self.router = parse("router", value, "mu | arrow | spectr")?,
            "k" => self.k = parse("k", value, "a positive integer")?,
            "merge" => self.merge = parse("merge", value, "two_step | fused")?,
            "weighting" => {
                self.weighting = match value.trim() {
                    "uniform" => WeightingKind::Uniform,
                    "softmax" => WeightingKind::Softmax,
                    other => {
                        return Err(ConfigError::BadValue {
                            key: "weighting",
                            value: other.to_string(),
                            expected: "uniform | softmax",
                        })
                    }
                }
            }
            "temperature" => self.temperature = parse("temperature", value, "a real number")?,
            "seed" => self.seed = parse("seed", value, "an unsigned integer")?,
            "t_count" => self.t_count = parse("t_count", value, "a positive integer")?,
            "d" => self.d = parse("d", value, "a positive integer")?,
            "m" => self.m = parse("m", value, "a positive integer")?,
            "rank" => self.rank = parse("rank", value, "a positive integer")?,
            "n_per_task" => self.n_per_task = parse("n_per_task", value, "a positive integer")?,
            "num_layers" => self.num_layers = parse("num_layers", value, "a positive integer")?,
            "overlap_angle" => {
                self.overlap_angle = parse("overlap_angle", value, "an angle in radians")?
            }
            "noise_sigma" => self.noise_sigma = parse("noise_sigma", value, "a non-negative real")?,
            "ranks" => self.ranks = parse_ranks(value)?,
            other => {
                return Err(ConfigError::UnknownKey {
                    key: other.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Applies a whole config text: `key = value` per line, `#` comments,
    /// blank lines ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::BadLine {
                line: idx + 1,
                text: line.to_string(),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Loads defaults overridden by the given file.
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Semantic invariants (well-formed values in impossible combinations).
    pub fn validate(&self) -> Result<(), Error> {
        fn positive(name: &'static str, v: usize) -> Result<(), Error> {
            if v == 0 {
                return Err(Error::Parameter {
                    name,
                    detail: "must be at least 1".into(),
                });
            }
            Ok(())
        }
        positive("k", self.k)?;
        positive("t_count", self.t_count)?;
        positive("d", self.d)?;
        positive("m", self.m)?;
        positive("rank", self.rank)?;
        positive("n_per_task", self.n_per_task)?;
        positive("num_layers", self.num_layers)?;
        if self.k > self.t_count {
            return Err(Error::Parameter {
                name: "k",
                detail: format!("k = {} exceeds the {} experts", self.k, self.t_count),
            });
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Parameter {
                name: "temperature",
                detail: format!("{} must be positive and finite", self.temperature),
            });
        }
        if self.ranks.is_empty() {
            return Err(Error::Parameter {
                name: "ranks",
                detail: "rank list is empty".into(),
            });
        }
        for &r in &self.ranks {
            positive("ranks", r)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_synthetic_defaults() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.t_count, 9);
        assert_eq!(cfg.k, 4);
        assert_eq!(cfg.rank, 8);
        assert_eq!(cfg.ranks, vec![1, 2, 4, 8, 16]);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn text_round_trip_with_comments() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\n\nrouter = arrow\nk=2\nranks = 1, 2 ,4\ntemperature = 0.5\n")
            .unwrap();
        assert_eq!(cfg.router, RouterKind::Arrow);
        assert_eq!(cfg.k, 2);
        assert_eq!(cfg.ranks, vec![1, 2, 4]);
        assert_eq!(cfg.temperature, 0.5);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::default().set("routerz", "mu").unwrap_err();
        assert!(err.to_string().contains("routerz"), "{err}");
    }

    #[test]
    fn bad_values_are_input_errors() {
        let mut cfg = RunConfig::default();
        assert!(matches!(
            cfg.set("k", "four"),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(matches!(
            cfg.set("router", "best"),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(matches!(
            cfg.set("ranks", "1,x"),
            Err(ConfigError::BadValue { .. })
        ));
    }

    #[test]
    fn bad_line_reports_line_number() {
        let err = RunConfig::default()
            .apply_text("router = mu\nnonsense\n")
            .unwrap_err();
        match err {
            ConfigError::BadLine { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn semantic_violations_are_core_errors() {
        let cfg = RunConfig { k: 100, ..RunConfig::default() };
        assert!(matches!(
            cfg.validate(),
            Err(Error::Parameter { name: "k", .. })
        ));
        let cfg = RunConfig { temperature: 0.0, ..RunConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = RunConfig { ranks: Vec::new(), ..RunConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
