//! Configuration: a single TOML document merged over the versioned defaults
//! file, with unknown keys rejected and the threshold orderings revalidated
//! at load time.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use nlkg::{Grid, ModelParams, Thresholds};

pub const DEFAULTS_TOML: &str = include_str!("../config/defaults.toml");

/// Configuration failure; mapped to exit code 2 by the driver.
#[derive(Debug)]
pub struct ConfigError(pub String);

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub p: f64,
    pub half_length: f64,
    pub n_points: usize,
    pub dt_factor: f64,
    pub t_max: f64,
    pub blowup_cap_factor: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    pub delta_e: f64,
    pub delta_x: f64,
    pub c_star: f64,
    pub delta_star: f64,
    pub r_star: f64,
    pub eps_star: f64,
    pub nu: f64,
    pub delta_trap: f64,
    pub tau_res: f64,
    pub lambda_max: f64,
    pub mu_scatter: f64,
    pub m_star: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SpectralConfig {
    pub s_step: f64,
    pub diag_per_decade: usize,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub support_radius: f64,
    pub record_every: f64,
    pub dynamics_n_points: usize,
    pub scan_refine_width: f64,
    pub shoot_width: f64,
    pub shoot_bracket: [f64; 2],
    pub manifold_horizon: f64,
    pub manifold_dt: f64,
    pub manifold_tol: f64,
    pub decay_horizons: Vec<f64>,
    pub ensemble_size: usize,
    pub evolve_family: String,
    pub evolve_a: f64,
    pub evolve_b: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    pub constants: ConstantsConfig,
    pub spectral: SpectralConfig,
    pub experiment: ExperimentConfig,
}

impl Config {
    pub fn defaults() -> Result<Config> {
        let cfg: Config = toml::from_str(DEFAULTS_TOML).context("parsing built-in defaults")?;
        Ok(cfg)
    }

    /// Load the defaults, overlay the user document (if any), reject keys
    /// that do not exist in the defaults, then validate.
    pub fn load(path: Option<&Path>) -> Result<Config> {
        let mut base: toml::Value =
            toml::from_str(DEFAULTS_TOML).context("parsing built-in defaults")?;
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            let user: toml::Value = toml::from_str(&text).context("parsing config document")?;
            merge_into(&mut base, &user, "")?;
        }
        let cfg: Config = base.try_into().context("interpreting merged config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.thresholds()
            .validate()
            .map_err(|e| anyhow::Error::new(ConfigError(e.to_string())))?;
        if !(self.model.p > 3.0) {
            bail!(ConfigError(format!("p = {} must exceed 3", self.model.p)));
        }
        if self.model.dt_factor > 0.5 {
            bail!(ConfigError("dt_factor must be <= 0.5".into()));
        }
        Ok(())
    }

    pub fn thresholds(&self) -> Thresholds {
        let c = &self.constants;
        Thresholds {
            delta_e: c.delta_e,
            delta_x: c.delta_x,
            c_star: c.c_star,
            delta_star: c.delta_star,
            r_star: c.r_star,
            eps_star: c.eps_star,
            nu: c.nu,
            delta_trap: c.delta_trap,
            tau_res: c.tau_res,
            lambda_max: c.lambda_max,
            mu_scatter: c.mu_scatter,
            m_star: c.m_star,
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.model.p, self.thresholds())
            .map_err(|e| anyhow::Error::new(ConfigError(e.to_string())))
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.model.half_length, self.model.n_points)
            .map_err(|e| anyhow::Error::new(ConfigError(e.to_string())))
    }

    pub fn dynamics_grid(&self) -> Result<Grid> {
        Grid::new(self.model.half_length, self.experiment.dynamics_n_points)
            .map_err(|e| anyhow::Error::new(ConfigError(e.to_string())))
    }

    /// Short hash of the canonical serialized config; embedded in every
    /// output header.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(text.as_bytes());
        let digest = h.finalize();
        let mut out = String::new();
        for b in digest.iter().take(6) {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}

/// Recursive merge: every user key must already exist in the defaults.
fn merge_into(base: &mut toml::Value, user: &toml::Value, path: &str) -> Result<()> {
    match (base, user) {
        (toml::Value::Table(b), toml::Value::Table(u)) => {
            for (k, v) in u {
                let sub = if path.is_empty() {
                    k.clone()
                } else {
                    format!("{path}.{k}")
                };
                match b.get_mut(k) {
                    Some(slot) => merge_into(slot, v, &sub)?,
                    None => bail!(ConfigError(format!("unknown config key `{sub}`"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v.clone();
            Ok(())
        }
    }
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}
impl std::error::Error for ConfigError {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_validate() {
        let cfg = Config::defaults().unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.model.n_points, 4096);
        assert!(!cfg.hash().is_empty());
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = std::env::temp_dir().join("nlkg-cfg-test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("bad.toml");
        std::fs::write(&p, "[model]\nnot_a_key = 3\n").unwrap();
        assert!(Config::load(Some(&p)).is_err());
        let p2 = dir.join("good.toml");
        std::fs::write(&p2, "[model]\nn_points = 2048\n").unwrap();
        let cfg = Config::load(Some(&p2)).unwrap();
        assert_eq!(cfg.model.n_points, 2048);
        assert_ne!(cfg.hash(), Config::defaults().unwrap().hash());
    }

    #[test]
    fn ordering_violation_rejected() {
        let dir = std::env::temp_dir().join("nlkg-cfg-test2");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("bad-order.toml");
        std::fs::write(&p, "[constants]\neps_star = 0.1\n").unwrap();
        assert!(Config::load(Some(&p)).is_err());
    }
}
