//! TOML run configuration, merged with command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bstable::harness::{experiment_names, ExperimentParams};
use bstable::measure::{LambdaSpec, ModelFile};
use bstable::sim::Caps;
use bstable::Alpha;
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub output: Option<PathBuf>,
    pub model: Option<ModelFile>,
    pub window: Option<WindowSection>,
    pub caps: Option<CapsSection>,
    pub experiment: Option<ExperimentSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    pub t_max: Option<f64>,
    pub x_max: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapsSection {
    pub max_atoms: Option<usize>,
    pub max_generation: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: Option<String>,
    #[serde(default)]
    pub params: ExperimentParams,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        if let Some(name) = cfg.experiment.as_ref().and_then(|e| e.name.as_deref()) {
            check_experiment_name(name)?;
        }
        Ok(cfg)
    }

    pub fn load_opt(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
    }

    pub fn caps(&self, max_atoms: Option<usize>, max_generation: Option<u32>) -> Caps {
        let file = self.caps.clone().unwrap_or_default();
        Caps {
            max_atoms: max_atoms.or(file.max_atoms).unwrap_or(Caps::default().max_atoms),
            max_generation: max_generation.or(file.max_generation),
        }
    }

    /// Seed from the flag, else from the file; there is no implicit default.
    pub fn seed(&self, flag: Option<u64>) -> Result<u64> {
        match flag.or(self.seed) {
            Some(s) => Ok(s),
            None => bail!("a seed is mandatory: pass --seed or set `seed` in the config file"),
        }
    }
}

pub fn check_experiment_name(name: &str) -> Result<()> {
    if experiment_names().any(|n| n == name) {
        Ok(())
    } else {
        bail!(
            "unknown experiment `{name}`; available: {}",
            experiment_names().collect::<Vec<_>>().join(", ")
        )
    }
}

/// Model precedence: `--model` file, then the config's `[model]`, then the
/// single-atom model `{(1)}`; `--alpha` overrides the exponent.
pub fn resolve_model(cfg: &RunConfig, model_path: Option<&Path>, alpha: Option<f64>) -> Result<ModelFile> {
    let base = match model_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ModelFile::from_toml_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?
        }
        None => match &cfg.model {
            Some(m) => m.clone(),
            None => ModelFile {
                alpha: Alpha::new(1.0)?,
                entries: LambdaSpec::single(vec![1.0])?,
            },
        },
    };
    Ok(match alpha {
        Some(a) => ModelFile {
            alpha: Alpha::new(a)?,
            entries: base.entries,
        },
        None => base,
    })
}
