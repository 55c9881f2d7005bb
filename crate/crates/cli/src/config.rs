//! Run configuration: a JSON file whose fields can each be overridden by a
//! command-line flag.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use etongue_core::chemometrics::DEFAULT_VARIANCE_TARGET;
use etongue_core::classifiers::{ModelKind, DEFAULT_K, DEFAULT_N_TREES};
use etongue_core::evaluation::FoldScheme;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Required by every command that draws random numbers.
    pub seed: Option<u64>,
    pub variance_target: f64,
    pub k_for_knn: usize,
    pub n_trees: usize,
    /// `random<k>` (e.g. `random10`) or `loo`.
    pub scheme: SchemeSpec,
    pub manifest: Option<PathBuf>,
    pub bundle: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            variance_target: DEFAULT_VARIANCE_TARGET,
            k_for_knn: DEFAULT_K,
            n_trees: DEFAULT_N_TREES,
            scheme: SchemeSpec::Random(10),
            manifest: None,
            bundle: None,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.variance_target > 0.0 && self.variance_target <= 1.0) {
            bail!("variance_target must be in (0, 1], got {}", self.variance_target);
        }
        if self.k_for_knn == 0 {
            bail!("k_for_knn must be >= 1");
        }
        if self.n_trees == 0 {
            bail!("n_trees must be >= 1");
        }
        if let SchemeSpec::Random(k) = self.scheme {
            if k < 2 {
                bail!("random fold count must be >= 2, got {k}");
            }
        }
        Ok(())
    }

    /// The classifiers in table order, with this config's hyper-parameters.
    pub fn models(&self) -> [ModelKind; 4] {
        ModelKind::table_set(self.k_for_knn, self.n_trees)
    }

    /// Applies this config's hyper-parameters to a model named on the command line.
    pub fn model(&self, name: &str) -> anyhow::Result<ModelKind> {
        Ok(match ModelKind::from_str(name)? {
            ModelKind::Knn { .. } => ModelKind::Knn { k: self.k_for_knn },
            ModelKind::BaggedTrees { .. } => ModelKind::BaggedTrees { n_trees: self.n_trees },
            other => other,
        })
    }

    pub fn fold_scheme(&self, seed: u64) -> FoldScheme {
        match self.scheme {
            SchemeSpec::Random(k) => FoldScheme::RandomKFold { k, seed },
            SchemeSpec::LeaveOneLiquidOut => FoldScheme::LeaveOneLiquidOut,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeSpec {
    Random(usize),
    LeaveOneLiquidOut,
}

impl FromStr for SchemeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "loo" | "lolo" | "leave_one_liquid_out" => Ok(SchemeSpec::LeaveOneLiquidOut),
            _ => s
                .strip_prefix("random")
                .and_then(|k| k.parse().ok())
                .map(SchemeSpec::Random)
                .ok_or_else(|| format!("unknown fold scheme '{s}' (use random<k> or loo)")),
        }
    }
}

impl std::fmt::Display for SchemeSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        match self {
            SchemeSpec::Random(k) => write!(f, "random{k}"),
            SchemeSpec::LeaveOneLiquidOut => f.write_str("loo"),
        }
    }
}

impl Serialize for SchemeSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SchemeSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
