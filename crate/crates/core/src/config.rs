//! Run configuration: flat TOML documents, per-dataset presets, validation.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{DatasetFormat, TimeEncoder};
use crate::model::Dims;
use crate::numerics::AdamConfig;
use crate::pe_init::PeInitMethod;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("invalid configuration:\n{}", .0.iter().map(|p| format!("  - {p}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<FieldProblem>),
}

/// One validation failure, naming the offending field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldProblem {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for FieldProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Dataset-specific window settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub l: usize,
    pub t_gap: f64,
    pub k: usize,
    pub batch_size: usize,
    pub d_p: Option<usize>,
}

const fn preset(name: &'static str, l: usize, t_gap: f64, k: usize, batch_size: usize) -> Preset {
    Preset {
        name,
        l,
        t_gap,
        k,
        batch_size,
        d_p: None,
    }
}

pub const PRESETS: &[Preset] = &[
    preset("wikipedia", 100, 1000.0, 15, 128),
    preset("reddit", 100, 1000.0, 20, 200),
    preset("mooc", 100, 2000.0, 30, 128),
    preset("lastfm", 100, 1000.0, 30, 128),
    preset("enron", 100, 1000.0, 20, 64),
    Preset {
        d_p: Some(72),
        ..preset("social-evo", 100, 1000.0, 20, 128)
    },
    preset("uci", 200, 500.0, 30, 100),
    preset("flights", 100, 1000.0, 30, 128),
    preset("can-parl", 20, 2.0, 10, 64),
    preset("us-legis", 50, 2.0, 10, 200),
    preset("un-trade", 200, 6.0, 30, 200),
    preset("un-vote", 100, 10.0, 20, 128),
    preset("contact", 200, 10.0, 20, 128),
    // Settings for the generated periodic streams.
    preset("synthetic", 10, 50.0, 10, 64),
];

pub fn find_preset(name: &str) -> Option<&'static Preset> {
    let key = name.to_ascii_lowercase().replace(['_', ' ', '.'], "-");
    PRESETS.iter().find(|p| p.name == key.trim_matches('-'))
}

/// Fully resolved run settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: String,
    pub format: String,
    pub d_t: usize,
    pub d_n: usize,
    pub d_e: usize,
    pub d_p: usize,
    pub alpha: f64,
    pub beta: f64,
    pub alpha_neg: f64,
    pub alpha_pe: f64,
    pub l: usize,
    pub t_gap: f64,
    pub k: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub pe_init: PeInitMethod,
    pub share_pe_mlp: bool,
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub test_ratio: f64,
}

/// A config document as written; any field may be absent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<String>,
    pub dataset: Option<String>,
    pub format: Option<String>,
    pub d_t: Option<usize>,
    pub d_n: Option<usize>,
    pub d_e: Option<usize>,
    pub d_p: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub alpha_neg: Option<f64>,
    pub alpha_pe: Option<f64>,
    pub l: Option<usize>,
    pub t_gap: Option<f64>,
    pub k: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub seed: Option<u64>,
    pub pe_init: Option<PeInitMethod>,
    pub share_pe_mlp: Option<bool>,
    pub train_ratio: Option<f64>,
    pub val_ratio: Option<f64>,
    pub test_ratio: Option<f64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse(&text)
    }

    /// Fills defaults and preset values, then validates. `preset` overrides
    /// the file's own preset key; explicit fields override both.
    pub fn resolve(&self, preset: Option<&str>) -> Result<RunConfig, ConfigError> {
        let mut problems = Vec::new();
        let preset_name = preset.map(str::to_string).or_else(|| self.preset.clone());
        let preset = match preset_name.as_deref() {
            Some(name) => match find_preset(name) {
                Some(p) => Some(p),
                None => {
                    problems.push(FieldProblem {
                        field: "preset",
                        message: format!(
                            "unknown preset `{name}` (known: {})",
                            PRESETS.iter().map(|p| p.name).collect::<Vec<_>>().join(", ")
                        ),
                    });
                    None
                }
            },
            None => None,
        };
        let mut need = |field: &'static str, v: Option<f64>| -> f64 {
            v.unwrap_or_else(|| {
                problems.push(FieldProblem {
                    field,
                    message: "missing (set it or choose a preset)".into(),
                });
                f64::NAN
            })
        };
        let l = need("l", self.l.or(preset.map(|p| p.l)).map(|x| x as f64));
        let t_gap = need("t_gap", self.t_gap.or(preset.map(|p| p.t_gap)));
        let k = need("k", self.k.or(preset.map(|p| p.k)).map(|x| x as f64));
        let batch_size = need("batch_size", self.batch_size.or(preset.map(|p| p.batch_size)).map(|x| x as f64));
        let as_count = |x: f64| if x.is_finite() { x as usize } else { 0 };
        let cfg = RunConfig {
            dataset: self.dataset.clone().unwrap_or_default(),
            format: self.format.clone().unwrap_or_else(|| "generic".into()),
            d_t: self.d_t.unwrap_or(100),
            d_n: self.d_n.unwrap_or(172),
            d_e: self.d_e.unwrap_or(172),
            d_p: self.d_p.or(preset.and_then(|p| p.d_p)).unwrap_or(172),
            alpha: self.alpha.unwrap_or(10.0),
            beta: self.beta.unwrap_or(10.0),
            alpha_neg: self.alpha_neg.unwrap_or(0.3),
            alpha_pe: self.alpha_pe.unwrap_or(0.5),
            l: as_count(l),
            t_gap,
            k: as_count(k),
            batch_size: as_count(batch_size),
            lr: self.lr.unwrap_or(1e-4),
            max_epochs: self.max_epochs.unwrap_or(200),
            patience: self.patience.unwrap_or(10),
            seed: self.seed.unwrap_or(0),
            pe_init: self.pe_init.unwrap_or_default(),
            share_pe_mlp: self.share_pe_mlp.unwrap_or(true),
            train_ratio: self.train_ratio.unwrap_or(0.70),
            val_ratio: self.val_ratio.unwrap_or(0.15),
            test_ratio: self.test_ratio.unwrap_or(0.15),
        };
        let missing: Vec<&str> = problems.iter().map(|p| p.field).collect();
        for p in cfg.problems() {
            if !missing.contains(&p.field) {
                problems.push(p);
            }
        }
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }
}

impl RunConfig {
    /// Preset values with all other fields at their defaults.
    pub fn from_preset(name: &str) -> Result<Self, ConfigError> {
        ConfigFile::default().resolve(Some(name))
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        ConfigFile::parse(text)?.resolve(None)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    /// Every violated constraint.
    pub fn problems(&self) -> Vec<FieldProblem> {
        let mut out = Vec::new();
        let mut check = |ok: bool, field: &'static str, message: String| {
            if !ok {
                out.push(FieldProblem { field, message });
            }
        };
        for (field, v) in [
            ("d_t", self.d_t),
            ("d_n", self.d_n),
            ("d_e", self.d_e),
            ("d_p", self.d_p),
            ("l", self.l),
            ("k", self.k),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
        ] {
            check(v >= 1, field, format!("must be at least 1, got {v}"));
        }
        check(
            self.alpha.is_finite() && self.alpha > 1.0,
            "alpha",
            format!("must be greater than 1, got {}", self.alpha),
        );
        check(
            self.beta.is_finite() && self.beta > 0.0,
            "beta",
            format!("must be positive, got {}", self.beta),
        );
        for (field, v) in [("alpha_neg", self.alpha_neg), ("alpha_pe", self.alpha_pe)] {
            check(v > 0.0 && v < 1.0, field, format!("must lie strictly inside (0, 1), got {v}"));
        }
        check(
            self.t_gap.is_finite() && self.t_gap > 0.0,
            "t_gap",
            format!("must be positive, got {}", self.t_gap),
        );
        check(
            self.lr.is_finite() && self.lr > 0.0,
            "lr",
            format!("must be positive, got {}", self.lr),
        );
        let ratios = [self.train_ratio, self.val_ratio, self.test_ratio];
        check(
            ratios.iter().all(|&r| r > 0.0) && (ratios.iter().sum::<f64>() - 1.0).abs() <= 1e-9,
            "train_ratio",
            format!("split ratios must be positive and sum to 1, got {ratios:?}"),
        );
        check(
            self.format.parse::<DatasetFormat>().is_ok(),
            "format",
            format!("unknown dataset format `{}`", self.format),
        );
        out
    }

    pub fn dims(&self) -> Dims {
        Dims {
            d_n: self.d_n,
            d_e: self.d_e,
            d_t: self.d_t,
            d_p: self.d_p,
            l: self.l,
            k: self.k,
        }
    }

    pub fn time_encoder(&self) -> TimeEncoder {
        TimeEncoder::new(self.d_t, self.alpha, self.beta)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    pub fn ratios(&self) -> (f64, f64, f64) {
        (self.train_ratio, self.val_ratio, self.test_ratio)
    }

    /// Digest of the canonical serialized form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_preset() {
        let c = RunConfig::from_preset("wikipedia").unwrap();
        assert_eq!((c.l, c.t_gap, c.k, c.batch_size), (100, 1000.0, 15, 128));
        assert_eq!((c.d_t, c.d_n, c.d_e, c.d_p), (100, 172, 172, 172));
        assert_eq!((c.alpha_neg, c.alpha_pe, c.lr), (0.3, 0.5, 1e-4));
        assert_eq!((c.max_epochs, c.patience), (200, 10));
        assert_eq!(RunConfig::from_preset("Social Evo.").unwrap().d_p, 72);
        let uci = RunConfig::from_preset("uci").unwrap();
        assert_eq!((uci.l, uci.t_gap, uci.k, uci.batch_size), (200, 500.0, 30, 100));
    }

    #[test]
    fn roundtrips_through_text() {
        let mut c = RunConfig::from_preset("reddit").unwrap();
        c.alpha_neg = 0.1 + 0.2;
        c.lr = 3.3e-5;
        c.dataset = "data/x.csv".into();
        let back = RunConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn missing_field_is_named() {
        let err = RunConfig::parse("l = 10\nk = 3\nbatch_size = 8\n").unwrap_err();
        let ConfigError::Invalid(problems) = err else { panic!() };
        assert_eq!(problems.len(), 1);
        assert_eq!(problems[0].field, "t_gap");
    }

    #[test]
    fn all_problems_are_listed() {
        let text = "preset = \"mooc\"\nalpha_neg = 1.5\nalpha_pe = 0.0\nd_t = 0\nlr = -1.0\n";
        let ConfigError::Invalid(problems) = RunConfig::parse(text).unwrap_err() else { panic!() };
        let fields: Vec<_> = problems.iter().map(|p| p.field).collect();
        assert_eq!(fields, vec!["d_t", "alpha_neg", "alpha_pe", "lr"]);
        assert!(matches!(RunConfig::parse("nonsense = 1"), Err(ConfigError::Syntax(_))));
        assert!(RunConfig::from_preset("nope").is_err());
    }

    #[test]
    fn seed_changes_hash() {
        let a = RunConfig::from_preset("enron").unwrap();
        let b = RunConfig { seed: 1, ..a.clone() };
        assert_ne!(a.hash(), b.hash());
    }
}
