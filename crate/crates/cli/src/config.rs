//! Declarative training configuration.
//!
//! ```toml
//! [train]
//! lr = 1e-4
//! epochs = 10
//! seed = 0
//!
//! [model]
//! d1 = 64
//! upsampler = "inf3"
//!
//! [fusion]
//! rel_coord = true
//! weight_mode = "cosine"
//! ```
//!
//! Every key is optional. Keys set both here and by a command-line flag must
//! agree; a disagreement is reported with both values rather than silently
//! resolved.

use std::path::Path;

use hsifuse::fusion::{FusionConfig, WeightMode};
use hsifuse::network::Upsampler;
use hsifuse::tensor::ops::{LogitMode, Reduction};
use hsifuse::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub fusion: FusionSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// `"mean"` or `"sum"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduction: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Must match the data when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d1: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d2: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mlp_hidden: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectral_depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spatial_depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decoder_relu: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upsampler: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_injection: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hr_injection: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_coord: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logit_mode: Option<String>,
}

/// Values given on the command line.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?)
    }

    /// Folds command-line values in, rejecting disagreements.
    pub fn merge(mut self, flags: Overrides) -> CliResult<Self> {
        fn take<T: PartialEq + std::fmt::Display + Copy>(key: &str, file: &mut Option<T>, flag: Option<T>) -> CliResult<()> {
            match (*file, flag) {
                (Some(a), Some(b)) if a != b => Err(CliError::Validation(format!(
                    "conflicting values for {key}: config file says {a}, --{} says {b}",
                    key.replace('_', "-")
                ))),
                (_, Some(b)) => {
                    *file = Some(b);
                    Ok(())
                }
                _ => Ok(()),
            }
        }
        take("seed", &mut self.train.seed, flags.seed)?;
        take("epochs", &mut self.train.epochs, flags.epochs)?;
        take("lr", &mut self.train.lr, flags.lr)?;
        Ok(self)
    }

    /// The full training configuration for data of scale `r`.
    pub fn resolve(&self, r: usize) -> CliResult<TrainConfig> {
        let bad = |key: &str, v: &str| CliError::Validation(format!("config: unknown {key} {v:?}"));
        if let Some(s) = self.model.scale {
            if s != r {
                return Err(CliError::Validation(format!("config: scale is {s} but the data has scale {r}")));
            }
        }
        let d = TrainConfig::default();
        let (t, m, f) = (&self.train, &self.model, &self.fusion);
        let fd = d.fusion;
        let fusion = FusionConfig {
            d1: m.d1.unwrap_or(fd.d1),
            d2: m.d2.unwrap_or(fd.d2),
            c: m.c.unwrap_or(fd.c),
            r,
            use_lr_injection: f.lr_injection.unwrap_or(fd.use_lr_injection),
            use_hr_injection: f.hr_injection.unwrap_or(fd.use_hr_injection),
            use_rel_coord: f.rel_coord.unwrap_or(fd.use_rel_coord),
            weight_mode: match &f.weight_mode {
                Some(s) => WeightMode::parse(s).ok_or_else(|| bad("weight_mode", s))?,
                None => fd.weight_mode,
            },
            logit_mode: match &f.logit_mode {
                Some(s) => LogitMode::parse(s).ok_or_else(|| bad("logit_mode", s))?,
                None => fd.logit_mode,
            },
            mlp_hidden: m.mlp_hidden.or(fd.mlp_hidden),
        };
        let cfg = TrainConfig {
            lr: t.lr.unwrap_or(d.lr),
            epochs: t.epochs.unwrap_or(d.epochs),
            batch_size: t.batch_size.unwrap_or(d.batch_size),
            seed: t.seed.unwrap_or(d.seed),
            reduction: match t.reduction.as_deref() {
                None => d.reduction,
                Some("mean") => Reduction::Mean,
                Some("sum") => Reduction::Sum,
                Some(s) => return Err(bad("reduction", s)),
            },
            fusion,
            upsampler: match &m.upsampler {
                Some(s) => Upsampler::parse(s).ok_or_else(|| bad("upsampler", s))?,
                None => d.upsampler,
            },
            spectral_depth: m.spectral_depth.unwrap_or(d.spectral_depth),
            spatial_depth: m.spatial_depth.unwrap_or(d.spatial_depth),
            decoder_relu: m.decoder_relu.unwrap_or(d.decoder_relu),
            checkpoint_every: t.checkpoint_every.unwrap_or(d.checkpoint_every),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every key of a resolved configuration, for manifests.
    pub fn snapshot(cfg: &TrainConfig) -> Self {
        let f = &cfg.fusion;
        ConfigFile {
            train: TrainSection {
                lr: Some(cfg.lr),
                epochs: Some(cfg.epochs),
                batch_size: Some(cfg.batch_size),
                seed: Some(cfg.seed),
                reduction: Some(match cfg.reduction {
                    Reduction::Mean => "mean".into(),
                    Reduction::Sum => "sum".into(),
                }),
                checkpoint_every: Some(cfg.checkpoint_every),
            },
            model: ModelSection {
                scale: Some(f.r),
                d1: Some(f.d1),
                d2: Some(f.d2),
                c: Some(f.c),
                mlp_hidden: f.mlp_hidden,
                spectral_depth: Some(cfg.spectral_depth),
                spatial_depth: Some(cfg.spatial_depth),
                decoder_relu: Some(cfg.decoder_relu),
                upsampler: Some(cfg.upsampler.name().into()),
            },
            fusion: FusionSection {
                lr_injection: Some(f.use_lr_injection),
                hr_injection: Some(f.use_hr_injection),
                rel_coord: Some(f.use_rel_coord),
                weight_mode: Some(f.weight_mode.name().into()),
                logit_mode: Some(f.logit_mode.name().into()),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config sections serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_resolves_to_defaults() {
        let cfg = ConfigFile::parse("").unwrap().resolve(4).unwrap();
        assert_eq!(cfg, TrainConfig::default());
    }

    #[test]
    fn snapshot_round_trips() {
        let text = "[train]\nlr = 0.001\nepochs = 3\n[model]\nd1 = 8\nmlp_hidden = 16\nupsampler = \"bicubic\"\n[fusion]\nweight_mode = \"area\"\n";
        let cfg = ConfigFile::parse(text).unwrap().resolve(2).unwrap();
        assert_eq!(cfg.fusion.d1, 8);
        assert_eq!(cfg.fusion.mlp_hidden, Some(16));
        assert_eq!(cfg.upsampler, Upsampler::Bicubic);
        let again = ConfigFile::parse(&ConfigFile::snapshot(&cfg).to_toml()).unwrap().resolve(2).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn conflicts_name_both_values() {
        let file = ConfigFile::parse("[train]\nepochs = 5\n").unwrap();
        let err = file.clone().merge(Overrides { epochs: Some(3), ..Default::default() }).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('5') && msg.contains('3') && msg.contains("epochs"), "{msg}");
        assert_eq!(err.exit_code(), 3);
        let same = file.merge(Overrides { epochs: Some(5), seed: Some(9), ..Default::default() }).unwrap();
        assert_eq!((same.train.epochs, same.train.seed), (Some(5), Some(9)));
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(ConfigFile::parse("[train]\nfoo = 1\n").is_err());
        assert!(ConfigFile::parse("[fusion]\nweight_mode = \"net\"\n").unwrap().resolve(4).is_err());
        assert!(ConfigFile::parse("[model]\nscale = 2\n").unwrap().resolve(4).is_err());
        assert!(ConfigFile::parse("[train]\nlr = -1.0\n").unwrap().resolve(4).is_err());
    }
}
