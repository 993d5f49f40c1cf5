//! `key = value` configuration files. `#` starts a comment; later keys
//! override earlier ones.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use crate::channel_model::{ChannelConfig, DatasetConfig};
use crate::denoiser::{Architecture, TrainConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
    read: RefCell<BTreeSet<String>>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", ln + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", ln + 1)));
            }
            entries.insert(k.to_string(), v.trim().to_string());
        }
        Ok(Self {
            entries,
            read: RefCell::default(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.read.borrow_mut().insert(key.to_string());
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.str(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::Config(format!("{key} = '{v}': {e}")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.str(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<T>()
                            .map_err(|e| Error::Config(format!("{key}: '{s}': {e}")))
                    })
                    .collect()
            })
            .transpose()
    }

    /// `true/false`, `on/off`, `yes/no`, `1/0`.
    pub fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.str(key) {
            None => Ok(default),
            Some("true" | "on" | "yes" | "1") => Ok(true),
            Some("false" | "off" | "no" | "0") => Ok(false),
            Some(v) => Err(Error::Config(format!("{key} = '{v}' is not a flag"))),
        }
    }

    /// Keys present in the file that no accessor has asked for.
    pub fn unused(&self) -> Vec<String> {
        let read = self.read.borrow();
        self.entries
            .keys()
            .filter(|k| !read.contains(*k))
            .cloned()
            .collect()
    }

    /// Fails on keys nobody read, which are almost always typos.
    pub fn reject_unused(&self) -> Result<()> {
        match self.unused().as_slice() {
            [] => Ok(()),
            keys => Err(Error::Config(format!("unknown keys: {}", keys.join(", ")))),
        }
    }
}

pub fn channel_config(kv: &KeyValues) -> Result<ChannelConfig> {
    let d = ChannelConfig::default();
    let cfg = ChannelConfig {
        n_s: kv.get_or("n_s", d.n_s)?,
        n_t: kv.get_or("n_t", d.n_t)?,
        crop_rows: kv.get_or("crop_rows", d.crop_rows)?,
        n_paths: kv.get_or("paths", d.n_paths)?,
        carrier_hz: kv.get_or("carrier_hz", d.carrier_hz)?,
        subcarrier_spacing_hz: kv.get_or("subcarrier_spacing_hz", d.subcarrier_spacing_hz)?,
        path_decay_db: kv.get_or("path_decay_db", d.path_decay_db)?,
        delay_min_bins: kv.get_or("delay_min_bins", d.delay_min_bins)?,
        delay_max_frac: kv.get_or("delay_max_frac", d.delay_max_frac)?,
        angle_max: kv
            .get::<f64>("angle_max_deg")?
            .map_or(d.angle_max, f64::to_radians),
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn dataset_config(kv: &KeyValues) -> Result<DatasetConfig> {
    let d = DatasetConfig::default();
    Ok(DatasetConfig {
        channel: channel_config(kv)?,
        n_train: kv.get_or("n_train", d.n_train)?,
        n_val: kv.get_or("n_val", d.n_val)?,
        n_test: kv.get_or("n_test", d.n_test)?,
        snr_min_db: kv.get_or("snr_min_db", d.snr_min_db)?,
        snr_max_db: kv.get_or("snr_max_db", d.snr_max_db)?,
    })
}

/// `arch = full | desk`, with optional `width` / `mid_layers` overrides.
pub fn architecture(kv: &KeyValues) -> Result<Architecture> {
    let base = match kv.str("arch").unwrap_or("desk") {
        "full" => Architecture::FULL,
        "desk" => Architecture::DESK,
        other => {
            return Err(Error::Unknown {
                kind: "architecture",
                name: other.to_string(),
            })
        }
    };
    let arch = Architecture {
        width: kv.get_or("width", base.width)?,
        mid_layers: kv.get_or("mid_layers", base.mid_layers)?,
        ..base
    };
    arch.validate()?;
    Ok(arch)
}

pub fn train_config(kv: &KeyValues) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        batch_size: kv.get_or("batch_size", d.batch_size)?,
        epochs: kv.get_or("epochs", d.epochs)?,
        initial_lr: kv.get_or("lr", d.initial_lr)?,
        lr_floor: kv.get_or("lr_floor", d.lr_floor)?,
        patience_epochs: kv.get_or("patience", d.patience_epochs)?,
        halving_factor: kv.get_or("halving_factor", d.halving_factor)?,
        seed: kv.get_or("seed", d.seed)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let kv = KeyValues::parse("# header\na = 1\nb=two # trailing\n\na = 3\n").unwrap();
        assert_eq!(kv.get::<i32>("a").unwrap(), Some(3));
        assert_eq!(kv.str("b"), Some("two"));
        assert_eq!(kv.get::<i32>("missing").unwrap(), None);
        assert!(kv.get::<i32>("b").is_err());
    }

    #[test]
    fn lists_and_flags() {
        let kv = KeyValues::parse("snr = 0, 10,20\nt = on\nf = no\nx = maybe").unwrap();
        assert_eq!(kv.list::<f64>("snr").unwrap(), Some(vec![0.0, 10.0, 20.0]));
        assert!(kv.flag("t", false).unwrap());
        assert!(!kv.flag("f", true).unwrap());
        assert!(kv.flag("x", true).is_err());
        assert!(kv.flag("absent", true).unwrap());
    }

    #[test]
    fn malformed_lines_and_unknown_keys() {
        assert!(KeyValues::parse("novalue\n").is_err());
        assert!(KeyValues::parse(" = 3\n").is_err());
        let kv = KeyValues::parse("n_s = 32\ntypo_key = 1\n").unwrap();
        let cfg = dataset_config(&kv).unwrap();
        assert_eq!(cfg.channel.n_s, 32);
        assert_eq!(kv.unused(), vec!["typo_key".to_string()]);
        assert!(kv.reject_unused().is_err());
    }

    #[test]
    fn architecture_presets() {
        let kv = KeyValues::parse("arch = full\n").unwrap();
        assert_eq!(architecture(&kv).unwrap(), Architecture::FULL);
        let kv = KeyValues::parse("width = 16\n").unwrap();
        assert_eq!(architecture(&kv).unwrap().width, 16);
        assert!(architecture(&KeyValues::parse("arch = huge").unwrap()).is_err());
    }
}
