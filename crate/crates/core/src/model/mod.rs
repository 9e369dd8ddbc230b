//! Model assembly: configuration, parameter registry, the three generator
//! stages (encoder, decoder, region perception), the patch discriminator,
//! checkpointing and the sampling-location inspector.

pub mod checkpoint;
pub mod discriminator;
pub mod fapd;
pub mod fce;
pub mod inspect;
pub mod panet;
pub mod params;

use crate::adaptive::capm::CapmSpec;
use crate::adaptive::wgen::GenSpec;
use crate::error::{Error, Result};
use crate::nn::pool::PoolMode;

/// Decoder flavor: deformable convolutions with learned offsets, or plain
/// shape-preserving convolutions (ablation baseline).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FapdVariant {
    #[default]
    Deformable,
    Standard,
}

impl std::fmt::Display for FapdVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FapdVariant::Deformable => write!(f, "deformable"),
            FapdVariant::Standard => write!(f, "standard"),
        }
    }
}

impl std::str::FromStr for FapdVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deformable" => Ok(FapdVariant::Deformable),
            "standard" => Ok(FapdVariant::Standard),
            other => Err(Error::ConfigError(format!(
                "unknown decoder variant '{other}' (expected deformable|standard)"
            ))),
        }
    }
}

pub fn pool_mode_name(mode: PoolMode) -> &'static str {
    match mode {
        PoolMode::Max => "max",
        PoolMode::Mean => "mean",
    }
}

pub fn parse_pool_mode(s: &str) -> Result<PoolMode> {
    match s {
        "max" => Ok(PoolMode::Max),
        "mean" => Ok(PoolMode::Mean),
        other => Err(Error::ConfigError(format!(
            "unknown pooling mode '{other}' (expected max|mean)"
        ))),
    }
}

/// Everything that determines parameter shapes and forward topology.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Photo channels (RGB = 3).
    pub input_channels: usize,
    /// Output channels of the eight encoder convolutions.
    pub fce_channels: [usize; 8],
    /// Region grids, one branch each; empty disables region perception.
    pub branch_grids: Vec<usize>,
    /// Output channels of each generated region filter.
    pub capm_out_channels: usize,
    /// Pyramid pooling grid inside the filter generators.
    pub spp_bins: usize,
    pub gen_fc1: usize,
    pub gen_fc2: usize,
    pub gen_groups: (usize, usize, usize),
    pub fapd_variant: FapdVariant,
    /// Reduction for both the encoder downsampling and the generator SPP.
    pub pooling: PoolMode,
    /// First-layer width of the discriminator (doubles per downsampling).
    pub disc_base: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_channels: 3,
            fce_channels: [64, 64, 128, 128, 192, 192, 256, 256],
            branch_grids: vec![3, 4, 5],
            capm_out_channels: 32,
            spp_bins: 32,
            gen_fc1: 256,
            gen_fc2: 512,
            gen_groups: (32, 16, 16),
            fapd_variant: FapdVariant::Deformable,
            pooling: PoolMode::Max,
            disc_base: 64,
        }
    }
}

impl ModelConfig {
    /// Channels divided by 8 throughout: same topology, gradcheck-sized.
    pub fn tiny() -> Self {
        ModelConfig {
            input_channels: 3,
            fce_channels: [8, 8, 16, 16, 24, 24, 32, 32],
            branch_grids: vec![3],
            capm_out_channels: 4,
            spp_bins: 4,
            gen_fc1: 32,
            gen_fc2: 64,
            gen_groups: (32, 16, 16),
            fapd_variant: FapdVariant::Deformable,
            pooling: PoolMode::Max,
            disc_base: 8,
        }
    }

    /// Full-resolution encoder feature (tap after the second conv).
    pub fn f_full(&self) -> usize {
        self.fce_channels[1]
    }

    /// Half-resolution tap (after the fourth conv).
    pub fn f_half(&self) -> usize {
        self.fce_channels[3]
    }

    /// Quarter-resolution tap (after the sixth conv).
    pub fn f_quarter(&self) -> usize {
        self.fce_channels[5]
    }

    /// Eighth-resolution tap (after the eighth conv).
    pub fn f_eighth(&self) -> usize {
        self.fce_channels[7]
    }

    pub fn gen_spec(&self) -> GenSpec {
        GenSpec {
            in_channels: self.f_full(),
            out_channels: self.capm_out_channels,
            kernel: (3, 3),
            spp_bins: self.spp_bins,
            fc1_out: self.gen_fc1,
            fc2_out: self.gen_fc2,
            groups: self.gen_groups,
            pool: self.pooling,
        }
    }

    pub fn capm_spec(&self) -> Option<CapmSpec> {
        if self.branch_grids.is_empty() {
            None
        } else {
            Some(CapmSpec { grids: self.branch_grids.clone(), gen: self.gen_spec() })
        }
    }

    /// Channels entering the final 1x1 projection.
    pub fn head_in_channels(&self) -> usize {
        if self.branch_grids.is_empty() {
            self.f_full()
        } else {
            self.branch_grids.len() * self.capm_out_channels
        }
    }

    /// Inputs must be at least this on each side (and divisible by 8).
    pub fn min_side(&self) -> usize {
        self.branch_grids.iter().copied().max().unwrap_or(0).max(8)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 {
            return Err(Error::InvalidParam("input_channels must be positive".into()));
        }
        if self.fce_channels.iter().any(|&c| c == 0) {
            return Err(Error::InvalidParam("encoder channels must be positive".into()));
        }
        if self.disc_base == 0 {
            return Err(Error::InvalidParam("disc_base must be positive".into()));
        }
        if let Some(spec) = self.capm_spec() {
            spec.validate()?;
        }
        Ok(())
    }

    /// Stable text form; the checkpoint digest hashes this.
    pub fn canonical_string(&self) -> String {
        let grids: Vec<String> = self.branch_grids.iter().map(|g| g.to_string()).collect();
        let fce: Vec<String> = self.fce_channels.iter().map(|c| c.to_string()).collect();
        format!(
            "v1;in={};fce={};grids={};capm_out={};spp={};fc1={};fc2={};groups={},{},{};variant={};pool={};disc={}",
            self.input_channels,
            fce.join(","),
            grids.join(","),
            self.capm_out_channels,
            self.spp_bins,
            self.gen_fc1,
            self.gen_fc2,
            self.gen_groups.0,
            self.gen_groups.1,
            self.gen_groups.2,
            self.fapd_variant,
            pool_mode_name(self.pooling),
            self.disc_base
        )
    }

    /// FNV-1a over the canonical string: changes whenever any shape-relevant
    /// setting changes.
    pub fn digest(&self) -> u64 {
        fnv1a(self.canonical_string().as_bytes())
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_sized_right() {
        let cfg = ModelConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.f_full(), 64);
        assert_eq!(cfg.f_eighth(), 256);
        assert_eq!(cfg.head_in_channels(), 96);
        assert_eq!(cfg.min_side(), 8);
        let gen = cfg.gen_spec();
        assert_eq!(gen.spp_features(), 65_536);
        assert_eq!(gen.filter_len(), 18_432);
    }

    #[test]
    fn tiny_config_keeps_group_divisibility() {
        let cfg = ModelConfig::tiny();
        cfg.validate().unwrap();
        assert_eq!(cfg.head_in_channels(), 4);
    }

    #[test]
    fn no_grids_routes_decoder_straight_to_head() {
        let mut cfg = ModelConfig::default();
        cfg.branch_grids.clear();
        cfg.validate().unwrap();
        assert_eq!(cfg.head_in_channels(), 64);
        assert!(cfg.capm_spec().is_none());
    }

    #[test]
    fn digest_tracks_topology_changes() {
        let a = ModelConfig::default();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.branch_grids = vec![3, 4];
        assert_ne!(a.digest(), b.digest());
        let mut c = a.clone();
        c.fapd_variant = FapdVariant::Standard;
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn variant_and_pool_parse_round_trip() {
        for v in [FapdVariant::Deformable, FapdVariant::Standard] {
            assert_eq!(v.to_string().parse::<FapdVariant>().unwrap(), v);
        }
        assert!(matches!(parse_pool_mode("max").unwrap(), PoolMode::Max));
        assert!(matches!(parse_pool_mode("mean").unwrap(), PoolMode::Mean));
        assert!(parse_pool_mode("median").is_err());
        assert!("weird".parse::<FapdVariant>().is_err());
    }
}
