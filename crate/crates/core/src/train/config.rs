//! Flat key-value run configuration.
//!
//! Format: UTF-8 text, one `key = value` pair per line, `#` starts a
//! comment, blank lines ignored. Keys are dotted field paths (`model.*`,
//! `train.*`). List values are comma-separated. The same keys are accepted
//! as command-line overrides.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{parse_pool_mode, pool_mode_name, FapdVariant, ModelConfig};

/// Optimization and loop settings. `batch_size` is kept as a field so the
/// contract is visible in config files, but only 1 is accepted: the loop is
/// strictly sequential.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Weight on the adversarial term. 0 disables the discriminator
    /// entirely (no D forward, no D step).
    pub adv_weight: f64,
    pub steps: u64,
    pub seed: u64,
    /// Checkpoint cadence in steps; 0 means only the final checkpoint.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 2e-4,
            batch_size: 1,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            adv_weight: 0.003,
            steps: 200,
            seed: 7,
            checkpoint_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::ConfigError(format!("train.lr must be positive, got {}", self.lr)));
        }
        if self.batch_size != 1 {
            return Err(Error::ConfigError(format!(
                "train.batch_size must be 1 (the loop is sequential), got {}",
                self.batch_size
            )));
        }
        for (name, b) in [("train.adam_beta1", self.adam_beta1), ("train.adam_beta2", self.adam_beta2)] {
            if !(b.is_finite() && (0.0..1.0).contains(&b)) {
                return Err(Error::ConfigError(format!("{name} must lie in [0,1), got {b}")));
            }
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return Err(Error::ConfigError(format!(
                "train.adam_eps must be positive, got {}",
                self.adam_eps
            )));
        }
        if !(self.adv_weight.is_finite() && self.adv_weight >= 0.0) {
            return Err(Error::ConfigError(format!(
                "train.adv_weight must be non-negative, got {}",
                self.adv_weight
            )));
        }
        if self.steps == 0 {
            return Err(Error::ConfigError("train.steps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }

    /// The file representation of this config; parsing it back yields an
    /// equal value.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let mut s = String::new();
        let _ = writeln!(s, "model.input_channels = {}", m.input_channels);
        let _ = writeln!(s, "model.fce_channels = {}", join(&m.fce_channels));
        let _ = writeln!(s, "model.branch_grids = {}", join(&m.branch_grids));
        let _ = writeln!(s, "model.capm_out_channels = {}", m.capm_out_channels);
        let _ = writeln!(s, "model.spp_bins = {}", m.spp_bins);
        let _ = writeln!(s, "model.gen_fc1 = {}", m.gen_fc1);
        let _ = writeln!(s, "model.gen_fc2 = {}", m.gen_fc2);
        let g = m.gen_groups;
        let _ = writeln!(s, "model.gen_groups = {},{},{}", g.0, g.1, g.2);
        let _ = writeln!(s, "model.fapd_variant = {}", m.fapd_variant);
        let _ = writeln!(s, "model.pooling = {}", pool_mode_name(m.pooling));
        let _ = writeln!(s, "model.disc_base = {}", m.disc_base);
        let _ = writeln!(s, "train.lr = {}", t.lr);
        let _ = writeln!(s, "train.batch_size = {}", t.batch_size);
        let _ = writeln!(s, "train.adam_beta1 = {}", t.adam_beta1);
        let _ = writeln!(s, "train.adam_beta2 = {}", t.adam_beta2);
        let _ = writeln!(s, "train.adam_eps = {}", t.adam_eps);
        let _ = writeln!(s, "train.adv_weight = {}", t.adv_weight);
        let _ = writeln!(s, "train.steps = {}", t.steps);
        let _ = writeln!(s, "train.seed = {}", t.seed);
        let _ = writeln!(s, "train.checkpoint_every = {}", t.checkpoint_every);
        s
    }
}

fn join(xs: &[usize]) -> String {
    if xs.is_empty() {
        return "none".to_string();
    }
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Parse a full config file on top of the defaults. Does not validate;
/// callers validate after any further overrides.
pub fn parse_config_text(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::ConfigError(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
        })?;
        apply_override(&mut cfg, key.trim(), value.trim())
            .map_err(|e| Error::ConfigError(format!("line {}: {e}", lineno + 1)))?;
    }
    Ok(cfg)
}

/// Set a single dotted key. Unknown keys and malformed values are errors.
pub fn apply_override(cfg: &mut RunConfig, key: &str, value: &str) -> Result<()> {
    let m = &mut cfg.model;
    let t = &mut cfg.train;
    match key {
        "model.input_channels" => m.input_channels = int(key, value)?,
        "model.fce_channels" => {
            let v = int_list(key, value)?;
            m.fce_channels = v.try_into().map_err(|v: Vec<usize>| {
                Error::ConfigError(format!("{key} needs exactly 8 entries, got {}", v.len()))
            })?;
        }
        "model.branch_grids" => m.branch_grids = int_list(key, value)?,
        "model.capm_out_channels" => m.capm_out_channels = int(key, value)?,
        "model.spp_bins" => m.spp_bins = int(key, value)?,
        "model.gen_fc1" => m.gen_fc1 = int(key, value)?,
        "model.gen_fc2" => m.gen_fc2 = int(key, value)?,
        "model.gen_groups" => {
            let v = int_list(key, value)?;
            if v.len() != 3 {
                return Err(Error::ConfigError(format!(
                    "{key} needs exactly 3 entries, got {}",
                    v.len()
                )));
            }
            m.gen_groups = (v[0], v[1], v[2]);
        }
        "model.fapd_variant" => m.fapd_variant = value.parse::<FapdVariant>()?,
        "model.pooling" => m.pooling = parse_pool_mode(value)?,
        "model.disc_base" => m.disc_base = int(key, value)?,
        "train.lr" => t.lr = real(key, value)?,
        "train.batch_size" => t.batch_size = int(key, value)?,
        "train.adam_beta1" => t.adam_beta1 = real(key, value)?,
        "train.adam_beta2" => t.adam_beta2 = real(key, value)?,
        "train.adam_eps" => t.adam_eps = real(key, value)?,
        "train.adv_weight" => t.adv_weight = real(key, value)?,
        "train.steps" => t.steps = int(key, value)?,
        "train.seed" => t.seed = int(key, value)?,
        "train.checkpoint_every" => t.checkpoint_every = int(key, value)?,
        _ => return Err(Error::ConfigError(format!("unknown config key `{key}`"))),
    }
    Ok(())
}

fn int<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::ConfigError(format!("{key}: `{value}` is not a valid integer")))
}

fn real(key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::ConfigError(format!("{key}: `{value}` is not a number")))
}

/// Comma-separated integer list; empty string or `none` is the empty list.
fn int_list(key: &str, value: &str) -> Result<Vec<usize>> {
    if value.is_empty() || value.eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    value.split(',').map(|part| int(key, part.trim())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_the_default() {
        let cfg = parse_config_text("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn round_trips_through_text() {
        let mut cfg = RunConfig::default();
        cfg.model = ModelConfig::tiny();
        cfg.model.fapd_variant = FapdVariant::Standard;
        cfg.train.adv_weight = 0.0;
        cfg.train.seed = 123;
        let reparsed = parse_config_text(&cfg.to_text()).unwrap();
        assert_eq!(reparsed, cfg);
    }

    #[test]
    fn parses_comments_lists_and_overrides() {
        let text = "\
# training setup
train.lr = 1e-3   # override
model.branch_grids = 3, 4
model.fce_channels = 8,8,16,16,24,24,32,32

train.steps = 10
";
        let cfg = parse_config_text(text).unwrap();
        assert_eq!(cfg.train.lr, 1e-3);
        assert_eq!(cfg.model.branch_grids, vec![3, 4]);
        assert_eq!(cfg.model.fce_channels, [8, 8, 16, 16, 24, 24, 32, 32]);
        assert_eq!(cfg.train.steps, 10);
        // Untouched keys keep defaults.
        assert_eq!(cfg.train.adam_beta1, 0.5);
    }

    #[test]
    fn empty_grid_list_disables_region_branches() {
        for v in ["none", "NONE", ""] {
            let mut cfg = RunConfig::default();
            apply_override(&mut cfg, "model.branch_grids", v).unwrap();
            assert!(cfg.model.branch_grids.is_empty(), "value `{v}`");
        }
    }

    #[test]
    fn unknown_key_is_named_in_the_error() {
        let mut cfg = RunConfig::default();
        let err = apply_override(&mut cfg, "model.depth", "9").unwrap_err();
        match err {
            Error::ConfigError(msg) => assert!(msg.contains("model.depth"), "{msg}"),
            other => panic!("expected ConfigError, got {other:?}"),
        }
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let err = parse_config_text("train.lr = 1e-4\nbogus line\n").unwrap_err();
        match err {
            Error::ConfigError(msg) => assert!(msg.contains("line 2"), "{msg}"),
            other => panic!("expected ConfigError, got {other:?}"),
        }
    }

    #[test]
    fn variant_and_pooling_values_parse() {
        let mut cfg = RunConfig::default();
        apply_override(&mut cfg, "model.fapd_variant", "standard").unwrap();
        assert_eq!(cfg.model.fapd_variant, FapdVariant::Standard);
        apply_override(&mut cfg, "model.pooling", "mean").unwrap();
        assert!(apply_override(&mut cfg, "model.pooling", "median").is_err());
    }

    #[test]
    fn invariants_are_enforced_by_validate() {
        let mut cfg = RunConfig::default();
        apply_override(&mut cfg, "train.lr", "0").unwrap();
        assert!(cfg.validate().is_err());
        cfg.train.lr = 2e-4;
        cfg.train.batch_size = 2;
        assert!(cfg.validate().is_err());
        cfg.train.batch_size = 1;
        cfg.train.steps = 0;
        assert!(cfg.validate().is_err());
        cfg.train.steps = 1;
        cfg.train.adv_weight = -0.1;
        assert!(cfg.validate().is_err());
    }
}
