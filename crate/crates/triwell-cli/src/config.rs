//! Serializable description of one run.
//!
//! Every command writes its effective configuration as `config.json`;
//! feeding that file back through `--config` repeats the run and, for the
//! same build, reproduces the data files byte for byte. Output location and
//! worker count are deliberately not part of the config: they do not affect
//! the emitted bytes.

use serde::{Deserialize, Serialize};
use triwell::equilibria::GridSpec;
use triwell::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub omega: f64,
    pub n: u32,
    pub chi: f64,
    pub mu: f64,
    pub rel_tol: f64,
    pub options: CommandOptions,
}

/// Resolved command-specific options. Presets are expanded before the
/// config is written, except for `poincare`, whose plan is keyed by the
/// bundled preset id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CommandOptions {
    Params {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kappa: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trap_config: Option<String>,
    },
    FixedPoints {},
    StabilityMap {
        chi_grid: GridCfg,
        mu_grid: GridCfg,
    },
    Evolve {
        mode: String,
        w1: [f64; 2],
        w2: [f64; 2],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fock: Option<[u32; 3]>,
        t_end: f64,
        sample_dt: f64,
    },
    SpherePortrait {
        thetas: Vec<f64>,
        phis: Vec<f64>,
        t_end: f64,
        sample_dt: f64,
    },
    Poincare {
        t_max: f64,
    },
}

impl CommandOptions {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Params { .. } => "params",
            Self::FixedPoints {} => "fixed-points",
            Self::StabilityMap { .. } => "stability-map",
            Self::Evolve { .. } => "evolve",
            Self::SpherePortrait { .. } => "sphere-portrait",
            Self::Poincare { .. } => "poincare",
        }
    }
}

/// On-disk form of a uniform grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCfg {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl GridCfg {
    pub fn to_spec(self) -> Result<GridSpec> {
        GridSpec::new(self.start, self.stop, self.count)
    }

    pub fn from_spec(spec: GridSpec) -> Self {
        Self {
            start: spec.start,
            stop: spec.stop,
            count: spec.count,
        }
    }
}

/// Parses `lo:hi:count`.
pub fn parse_grid(text: &str) -> Result<GridCfg> {
    let parts: Vec<&str> = text.split(':').collect();
    let err = || Error::Config(format!("grid must be lo:hi:count, got {text:?}"));
    if parts.len() != 3 {
        return Err(err());
    }
    let start: f64 = parts[0].parse().map_err(|_| err())?;
    let stop: f64 = parts[1].parse().map_err(|_| err())?;
    let count: usize = parts[2].parse().map_err(|_| err())?;
    let cfg = GridCfg { start, stop, count };
    cfg.to_spec()?;
    Ok(cfg)
}

/// Parses `re,im`.
pub fn parse_pair(text: &str) -> Result<[f64; 2]> {
    let err = || Error::Config(format!("complex value must be re,im, got {text:?}"));
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(err());
    }
    let re: f64 = parts[0].trim().parse().map_err(|_| err())?;
    let im: f64 = parts[1].trim().parse().map_err(|_| err())?;
    if !re.is_finite() || !im.is_finite() {
        return Err(err());
    }
    Ok([re, im])
}

/// Parses `n1,n2,n3`.
pub fn parse_fock(text: &str) -> Result<[u32; 3]> {
    let err = || Error::Config(format!("occupations must be n1,n2,n3, got {text:?}"));
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(err());
    }
    let mut out = [0u32; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part.trim().parse().map_err(|_| err())?;
    }
    Ok(out)
}

pub fn load(path: &std::path::Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
