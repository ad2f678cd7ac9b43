//! `RunConfig` TOML files.
//!
//! ```toml
//! sampler = "sa"
//! endpoint = "http://localhost:8080"
//! out = "results"
//! initial_alpha = 0.35
//!
//! [optimizer]
//! max_outer = 200
//!
//! [optimizer.sampler]
//! num_reads = 20
//! sa_sweeps = 200
//! seed = 7
//!
//! [optimizer.equilibrium_qasp]
//! bits_per_var = 2
//! ```

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use trussqa_core::OptConfig;

use crate::Failure;

pub const ENDPOINT_ENV: &str = "TRUSSQA_ENDPOINT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Exhaustive,
    Sa,
    Remote,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Exhaustive => "exhaustive",
            SamplerKind::Sa => "sa",
            SamplerKind::Remote => "remote",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sampler: Option<SamplerKind>,
    pub endpoint: Option<String>,
    pub out: Option<PathBuf>,
    /// Uniform starting design; ignored when `initial_design` is set.
    pub initial_alpha: Option<f64>,
    /// A `design_final.json` from an earlier run.
    pub initial_design: Option<PathBuf>,
    pub optimizer: OptConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, Failure> {
        toml::from_str(text).map_err(|e| Failure::Input(format!("{origin}: {e}")))
    }
}

/// Flags take precedence over the config file, which takes precedence over
/// the environment.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub sampler: Option<SamplerKind>,
    pub endpoint: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub sampler: SamplerKind,
    pub endpoint: Option<String>,
    pub out: PathBuf,
    pub initial_alpha: Option<f64>,
    pub initial_design: Option<PathBuf>,
    pub optimizer: OptConfig,
}

pub fn resolve(
    config: RunConfig,
    flags: Overrides,
    env_endpoint: Option<String>,
) -> Result<Resolved, Failure> {
    let mut optimizer = config.optimizer;
    if let Some(seed) = flags.seed {
        optimizer.sampler.seed = seed;
    }
    optimizer
        .validate()
        .map_err(|e| Failure::Input(e.to_string()))?;
    let sampler = flags.sampler.or(config.sampler).unwrap_or(SamplerKind::Sa);
    let endpoint = flags.endpoint.or(config.endpoint).or(env_endpoint);
    if sampler == SamplerKind::Remote && endpoint.is_none() {
        return Err(Failure::Input(format!(
            "remote sampler needs an endpoint (--endpoint, config `endpoint` or {ENDPOINT_ENV})"
        )));
    }
    Ok(Resolved {
        sampler,
        endpoint,
        out: flags
            .out
            .or(config.out)
            .unwrap_or_else(|| PathBuf::from("trussqa-out")),
        initial_alpha: config.initial_alpha,
        initial_design: config.initial_design,
        optimizer,
    })
}
