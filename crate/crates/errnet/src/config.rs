//! Flat `key = value` configuration.
//!
//! Layers apply in order: built-in defaults, then the `--config` file, then
//! command-line flags. Flags go through the same key setter as file lines.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use errnet_core::encoder::EncoderConfig;
use errnet_core::synth::{scaled_size, SynthConfig, DEFAULT_SCALES};
use errnet_core::ErrNetConfig;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub input_size: usize,
    pub channels: [usize; 5],
    pub aspp_mid_channels: usize,
    pub scales: Vec<f64>,
    pub count: usize,
    pub contrast: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 7,
            lr: 1e-4,
            epochs: 50,
            batch: 4,
            input_size: 64,
            channels: EncoderConfig::DESK.channels,
            aspp_mid_channels: 64,
            scales: DEFAULT_SCALES.to_vec(),
            count: 8,
            contrast: 0.15,
        }
    }
}

/// Every accepted key, in echo order.
pub const KEYS: [&str; 14] = [
    "seed",
    "lr",
    "epochs",
    "batch",
    "input_size",
    "encoder.c1",
    "encoder.c2",
    "encoder.c3",
    "encoder.c4",
    "encoder.c5",
    "aspp.mid_channels",
    "scales",
    "synth.count",
    "synth.contrast",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("`{key}`: cannot parse `{value}`"))
}

impl Config {
    /// Preset matching the 352 px, batch 36, 30 epoch regimen. Untested at that scale.
    pub fn full_scale() -> Self {
        Config {
            epochs: 30,
            batch: 36,
            input_size: 352,
            channels: EncoderConfig::RESNET50.channels,
            aspp_mid_channels: 256,
            ..Config::default()
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "input_size" => self.input_size = parse(key, value)?,
            "aspp.mid_channels" => self.aspp_mid_channels = parse(key, value)?,
            "synth.count" => self.count = parse(key, value)?,
            "synth.contrast" => self.contrast = parse(key, value)?,
            "scales" => {
                self.scales = value
                    .split(',')
                    .map(|s| parse::<f64>(key, s.trim()))
                    .collect::<std::result::Result<_, _>>()?
            }
            _ => {
                let slot = key
                    .strip_prefix("encoder.c")
                    .and_then(|d| d.parse::<usize>().ok())
                    .filter(|d| (1..=5).contains(d))
                    .ok_or_else(|| format!("unknown key `{key}`"))?;
                self.channels[slot - 1] = parse(key, value)?;
            }
        }
        Ok(())
    }

    /// Applies a config file's lines. Errors carry the 1-based line number.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| CliError::Config { path: path.into(), line: n + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
            self.set(key.trim(), value.trim()).map_err(err)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        self.apply_text(&text, path)
    }

    /// Applies flag overrides; `None` values are skipped.
    pub fn apply_flags(&mut self, flags: &[(&str, Option<String>)]) -> Result<()> {
        for (key, value) in flags {
            if let Some(v) = value {
                self.set(key, v).map_err(|m| CliError::Config { path: PathBuf::from("<command line>"), line: 0, message: m })?;
            }
        }
        Ok(())
    }

    /// Defaults, then the optional file, then flags; validated.
    pub fn resolve(file: Option<&Path>, flags: &[(&str, Option<String>)]) -> Result<Self> {
        let mut cfg = Config::default();
        if let Some(p) = file {
            cfg.apply_file(p)?;
        }
        cfg.apply_flags(flags)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Validation(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch == 0 {
            return bad("batch must be at least 1".into());
        }
        if self.input_size == 0 || self.input_size % 32 != 0 {
            return bad(format!("input_size must be a positive multiple of 32, got {}", self.input_size));
        }
        if self.scales.is_empty() {
            return bad("scales must list at least one value".into());
        }
        for &s in &self.scales {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("scales must be positive, got {s}"));
            }
        }
        self.model_config().encoder.validate()?;
        if self.aspp_mid_channels == 0 {
            return bad("aspp.mid_channels must be at least 1".into());
        }
        Ok(())
    }

    /// Training sizes for every scale; fails if one drops below 32.
    pub fn training_sizes(&self) -> Result<Vec<usize>> {
        Ok(self.scales.iter().map(|&s| scaled_size(self.input_size, s)).collect::<errnet_core::Result<_>>()?)
    }

    pub fn model_config(&self) -> ErrNetConfig {
        ErrNetConfig { encoder: EncoderConfig { channels: self.channels }, aspp_mid_channels: self.aspp_mid_channels }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig { seed: self.seed, count: self.count, size: self.input_size, contrast: self.contrast }
    }

    /// The effective configuration, one `key = value` per line, parseable by [`Config::apply_text`].
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "batch = {}", self.batch);
        let _ = writeln!(s, "input_size = {}", self.input_size);
        for (i, c) in self.channels.iter().enumerate() {
            let _ = writeln!(s, "encoder.c{} = {c}", i + 1);
        }
        let _ = writeln!(s, "aspp.mid_channels = {}", self.aspp_mid_channels);
        let scales: Vec<String> = self.scales.iter().map(f64::to_string).collect();
        let _ = writeln!(s, "scales = {}", scales.join(","));
        let _ = writeln!(s, "synth.count = {}", self.count);
        let _ = writeln!(s, "synth.contrast = {}", self.contrast);
        s
    }
}
