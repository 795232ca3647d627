use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pvlt::fbsc::{DEFAULT_PRECISION, MIN_PRECISION};
use pvlt::prng::PrngConfig;
use pvlt::protocol::{SimConfig, DEFAULT_RSA_BITS};
use pvlt::secretshare::{is_prime, DEFAULT_PRIME};
use serde::Deserialize;

pub const DEFAULT_SEED: u64 = 20230423;
pub const RSA_SIZES: [u64; 3] = [512, 1024, 2048];
pub const MAX_PRECISION: u32 = 1000;

/// Contents of a `--config` TOML file. Every key is optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub prime: Option<u64>,
    pub rsa_bits: Option<u64>,
    pub precision: Option<u32>,
    pub out: Option<PathBuf>,
    pub prng: Option<PrngConfig>,
}

/// Flag values, which take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub prime: Option<u64>,
    pub rsa_bits: Option<u64>,
    pub precision: Option<u32>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CliConfig {
    pub config_path: Option<PathBuf>,
    pub prng: PrngConfig,
    pub seed: u64,
    pub prime: u64,
    pub rsa_bits: u64,
    pub precision: u32,
    pub out: PathBuf,
}

impl CliConfig {
    pub fn resolve(path: Option<&Path>, flags: Overrides) -> Result<Self> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("config: reading {}", p.display()))?;
                toml::from_str::<FileConfig>(&text).with_context(|| format!("config: parsing {}", p.display()))?
            }
            None => FileConfig::default(),
        };
        let cfg = CliConfig {
            config_path: path.map(Path::to_path_buf),
            prng: file.prng.unwrap_or_default(),
            seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            prime: flags.prime.or(file.prime).unwrap_or(DEFAULT_PRIME),
            rsa_bits: flags.rsa_bits.or(file.rsa_bits).unwrap_or(DEFAULT_RSA_BITS),
            precision: flags.precision.or(file.precision).unwrap_or(DEFAULT_PRECISION),
            out: flags.out.or(file.out).unwrap_or_else(|| PathBuf::from("out")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.prng.validate().context("prng")?;
        if !is_prime(self.prime) || self.prime < 257 {
            bail!("secretshare: field prime {} must be a prime of at least 257", self.prime);
        }
        if !RSA_SIZES.contains(&self.rsa_bits) {
            bail!("rsacrt: --rsa-bits {} not one of 512, 1024, 2048", self.rsa_bits);
        }
        if !(MIN_PRECISION..=MAX_PRECISION).contains(&self.precision) {
            bail!("fbsc: precision F = {} outside [{MIN_PRECISION}, {MAX_PRECISION}]", self.precision);
        }
        Ok(())
    }

    /// The generator configuration with `--seed` mixed in.
    pub fn seeded_prng(&self, salt: u64) -> PrngConfig {
        self.prng.reseeded(self.seed ^ salt)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            seed: self.seed,
            prng: self.prng.clone(),
            prime: self.prime,
            rsa_bits: self.rsa_bits,
            precision: self.precision,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "seed = 5\nprecision = 40\n[prng]\nseed = 7\nm = 25214903917\ni_num = 13493037705\ni_den = 4294967296\nn = 2305843009213693951\n").unwrap();
        let cfg = CliConfig::resolve(
            Some(&path),
            Overrides {
                seed: Some(9),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_eq!((cfg.seed, cfg.precision, cfg.prng.seed), (9, 40, 7));
    }

    #[test]
    fn invalid_values_rejected() {
        let bad = |o: Overrides| CliConfig::resolve(None, o).unwrap_err().to_string();
        assert!(bad(Overrides { prime: Some(100), ..Default::default() }).starts_with("secretshare"));
        assert!(bad(Overrides { rsa_bits: Some(768), ..Default::default() }).starts_with("rsacrt"));
        assert!(bad(Overrides { precision: Some(10), ..Default::default() }).starts_with("fbsc"));
    }
}
