use std::fmt;
use std::str::FromStr;

use crate::attention::FusionMode;
use crate::error::{BianError, Result};
use crate::temporal::FreqInit;

/// What the edge branch sees on each line-graph vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EdgeMode {
    /// Temporal attention; time enters only through span-dependent scores
    /// and the relative encoding of values.
    Timestamp,
    /// Plain attention over edge-type one-hots and the direction bit.
    EdgeAttr,
    /// Plain attention over `[φ(t) | one-hot | direction]` under a causal mask.
    #[default]
    TimeConditioned,
}

impl fmt::Display for EdgeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeMode::Timestamp => "timestamp",
            EdgeMode::EdgeAttr => "edge_attr",
            EdgeMode::TimeConditioned => "time_conditioned",
        })
    }
}

impl FromStr for EdgeMode {
    type Err = BianError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "timestamp" => Ok(EdgeMode::Timestamp),
            "edge_attr" => Ok(EdgeMode::EdgeAttr),
            "time_conditioned" => Ok(EdgeMode::TimeConditioned),
            other => Err(BianError::Config(format!("unknown edge_mode {other:?}"))),
        }
    }
}

/// Which branches feed the classifier head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Variant {
    #[default]
    Full,
    NodeOnly,
    EdgeOnly,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::NodeOnly => "node_only",
            Variant::EdgeOnly => "edge_only",
        })
    }
}

impl FromStr for Variant {
    type Err = BianError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "node_only" => Ok(Variant::NodeOnly),
            "edge_only" => Ok(Variant::EdgeOnly),
            other => Err(BianError::Config(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub hidden: usize,
    pub edge_mode: EdgeMode,
    pub fusion: FusionMode,
    pub variant: Variant,
    /// Attention layers in the node branch.
    pub layers: usize,
    /// Attention layers in the edge branch.
    pub edge_layers: usize,
    pub fanout: usize,
    pub hops: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub rng_seed: u64,
    /// `None` picks `min(50, 1 / fraud rate)` from the training split.
    pub pos_class_weight: Option<f64>,
    pub freeze_frequencies: bool,
    /// Number of frequencies `d`; encodings are `2d` wide.
    pub time_freqs: usize,
    pub freq_init: FreqInit,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 32,
            edge_mode: EdgeMode::default(),
            fusion: FusionMode::default(),
            variant: Variant::default(),
            layers: 2,
            edge_layers: 2,
            fanout: 10,
            hops: 2,
            lr: 1e-3,
            weight_decay: 0.0,
            epochs: 20,
            batch_size: 64,
            rng_seed: 0,
            pos_class_weight: None,
            freeze_frequencies: false,
            time_freqs: 8,
            freq_init: FreqInit::default(),
        }
    }
}

pub const MAX_AUTO_POS_WEIGHT: f64 = 50.0;

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(BianError::Config(m));
        if self.hidden == 0 {
            return fail("hidden must be positive".into());
        }
        if self.layers == 0 || self.edge_layers == 0 {
            return fail("layers and edge_layers must be at least 1".into());
        }
        if self.fanout == 0 || self.hops == 0 {
            return fail("fanout and hops must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.time_freqs == 0 {
            return fail("time_freqs must be at least 1".into());
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return fail(format!("lr = {}", self.lr));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return fail(format!("weight_decay = {}", self.weight_decay));
        }
        if let Some(w) = self.pos_class_weight {
            if !(w.is_finite() && w >= 1.0) {
                return fail(format!("pos_class_weight = {w} (must be >= 1)"));
            }
        }
        Ok(())
    }

    pub const KEYS: [&'static str; 17] = [
        "hidden",
        "edge_mode",
        "fusion",
        "variant",
        "layers",
        "edge_layers",
        "fanout",
        "hops",
        "lr",
        "weight_decay",
        "epochs",
        "batch_size",
        "rng_seed",
        "pos_class_weight",
        "freeze_frequencies",
        "time_freqs",
        "freq_init",
    ];

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| BianError::Config(format!("bad value {v:?} for {key}")))
        }
        match key {
            "hidden" => self.hidden = parse(key, value)?,
            "edge_mode" => self.edge_mode = value.parse()?,
            "fusion" => self.fusion = value.parse()?,
            "variant" => self.variant = value.parse()?,
            "layers" => self.layers = parse(key, value)?,
            "edge_layers" => self.edge_layers = parse(key, value)?,
            "fanout" => self.fanout = parse(key, value)?,
            "hops" => self.hops = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "rng_seed" | "seed" => self.rng_seed = parse(key, value)?,
            "pos_class_weight" => {
                self.pos_class_weight = match value {
                    "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "freeze_frequencies" => self.freeze_frequencies = parse(key, value)?,
            "time_freqs" => self.time_freqs = parse(key, value)?,
            "freq_init" => self.freq_init = value.parse()?,
            other => return Err(BianError::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "hidden" => self.hidden.to_string(),
            "edge_mode" => self.edge_mode.to_string(),
            "fusion" => self.fusion.to_string(),
            "variant" => self.variant.to_string(),
            "layers" => self.layers.to_string(),
            "edge_layers" => self.edge_layers.to_string(),
            "fanout" => self.fanout.to_string(),
            "hops" => self.hops.to_string(),
            "lr" => self.lr.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "rng_seed" => self.rng_seed.to_string(),
            "pos_class_weight" => match self.pos_class_weight {
                None => "auto".into(),
                Some(w) => w.to_string(),
            },
            "freeze_frequencies" => self.freeze_frequencies.to_string(),
            "time_freqs" => self.time_freqs.to_string(),
            "freq_init" => self.freq_init.to_string(),
            _ => return None,
        })
    }

    /// One `key=value` line per field, in [`Self::KEYS`] order. Floats use
    /// the shortest exact representation, so the text round-trips.
    pub fn to_kv(&self) -> String {
        Self::KEYS.iter().map(|k| format!("{k}={}\n", self.get(k).expect("known key"))).collect()
    }

    /// Applies a flat `key=value` text on top of `self`. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| BianError::Config(format!("line {}: expected key=value, got {line:?}", no + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        Self::layered(Some(text), &[])
    }

    /// Defaults, then the config file text, then explicit overrides.
    pub fn layered(file: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        if let Some(text) = file {
            cfg.apply_kv(text)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let cfg = ModelConfig {
            hidden: 16,
            edge_mode: EdgeMode::Timestamp,
            fusion: FusionMode::Concat,
            lr: 0.1 + 0.2,
            pos_class_weight: Some(7.25),
            freq_init: FreqInit::Random,
            ..ModelConfig::default()
        };
        assert_eq!(ModelConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
        let d = ModelConfig::default();
        assert_eq!(ModelConfig::from_kv(&d.to_kv()).unwrap(), d);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(ModelConfig::from_kv("hidden=0").is_err());
        assert!(ModelConfig::from_kv("pos_class_weight=0.5").is_err());
        assert!(ModelConfig::from_kv("nope=1").is_err());
        assert!(ModelConfig::from_kv("hidden").is_err());
        assert!(ModelConfig::from_kv("edge_mode=sideways").is_err());
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file = "hidden=64\nlr=0.01\n";
        let flags = vec![("hidden".to_string(), "16".to_string())];
        let c = ModelConfig::layered(Some(file), &flags).unwrap();
        assert_eq!(c.hidden, 16);
        assert_eq!(c.lr, 0.01);
        assert_eq!(c.epochs, ModelConfig::default().epochs);
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = ModelConfig::from_kv("# tuned\n\nhidden = 64\n").unwrap();
        assert_eq!(c.hidden, 64);
    }
}
