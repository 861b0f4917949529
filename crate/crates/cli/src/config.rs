//! Run configuration files.

use std::path::Path;

use hitscan_core::campaign::{CampaignConfig, SweepConfig};
use hitscan_core::complexity::ComplexityParams;
use hitscan_core::surrogate::{default_grid, KernelSpec};
use hitscan_core::theory::AuditConfig;
use hitscan_core::{build_pool, OracleSpec, Strategy, ThompsonMode, Threshold};
use serde::{Deserialize, Serialize};

use crate::CliError;

fn default_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_threshold() -> Threshold {
    Threshold::Quantile(0.1)
}

fn default_cycles() -> usize {
    10
}

fn default_batch() -> usize {
    5
}

/// Contents of a `--config` file. Every field except `oracle` has a default;
/// [`RunConfig::resolve`] writes them all out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub oracle: OracleSpec,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_threshold")]
    pub threshold: Threshold,
    #[serde(default = "default_cycles")]
    pub cycles: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warm_start: Option<usize>,
    #[serde(default)]
    pub thompson_mode: ThompsonMode,
    #[serde(default)]
    pub count_warm_start_hits: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_grid: Option<Vec<KernelSpec>>,
    #[serde(default)]
    pub complexity: ComplexityParams,
    #[serde(default)]
    pub audit: AuditConfig,
}

#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seeds: Vec<u64>,
    pub strategies: Vec<Strategy>,
    pub cycles: Option<usize>,
    pub batch_size: Option<usize>,
    pub threshold: Option<Threshold>,
}

impl RunConfig {
    pub fn new(oracle: OracleSpec) -> Self {
        Self {
            oracle,
            strategies: default_strategies(),
            seeds: default_seeds(),
            threshold: default_threshold(),
            cycles: default_cycles(),
            batch_size: default_batch(),
            warm_start: None,
            thompson_mode: ThompsonMode::default(),
            count_warm_start_hits: false,
            kernel_grid: None,
            complexity: ComplexityParams::default(),
            audit: AuditConfig::default(),
        }
    }

    /// Reads a TOML config, or the `config` object of a JSON run manifest.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str::<serde_json::Value>(&text)
                .and_then(|mut v| serde_json::from_value(v.get_mut("config").map(serde_json::Value::take).unwrap_or(v)))
                .map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if !o.seeds.is_empty() {
            self.seeds = o.seeds.clone();
        }
        if !o.strategies.is_empty() {
            self.strategies = o.strategies.clone();
        }
        if let Some(c) = o.cycles {
            self.cycles = c;
        }
        if let Some(b) = o.batch_size {
            self.batch_size = b;
        }
        if let Some(t) = o.threshold {
            self.threshold = t;
        }
    }

    pub fn campaign(&self) -> CampaignConfig {
        CampaignConfig {
            thompson_mode: self.thompson_mode,
            warm_start: self.warm_start,
            kernel_grid: self.kernel_grid.clone(),
            count_warm_start_hits: self.count_warm_start_hits,
            ..CampaignConfig::new(
                self.oracle.clone(),
                self.strategies.first().copied().unwrap_or(Strategy::ProbabilityOfHit),
                self.threshold,
                self.cycles,
                self.batch_size,
            )
        }
    }

    pub fn sweep(&self) -> SweepConfig {
        SweepConfig {
            campaign: self.campaign(),
            strategies: self.strategies.clone(),
            seeds: self.seeds.clone(),
        }
    }

    /// Validates and returns a copy with every default materialized.
    pub fn resolve(&self) -> Result<Self, CliError> {
        let cfg = |e: hitscan_core::Error| CliError::Config(e.to_string());
        self.sweep().validate().map_err(cfg)?;
        let first = *self.seeds.first().expect("validated");
        let oracle = build_pool(&self.oracle, first).map_err(cfg)?;
        let mut out = self.clone();
        out.oracle = self.oracle.resolved();
        if out.oracle.pool_size.is_none() {
            out.oracle.pool_size = Some(oracle.len());
        }
        out.warm_start = Some(self.warm_start.unwrap_or(self.batch_size));
        out.kernel_grid
            .get_or_insert_with(|| default_grid(oracle.pool.dimension()));
        out.complexity.eps = Some(self.complexity.eps_for(oracle.pool.dimension()));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hitscan_core::Family;

    #[test]
    fn minimal_toml() {
        let c: RunConfig = toml::from_str("[oracle]\nfamily = \"sine1d\"\n").unwrap();
        assert_eq!(c.oracle.family, Family::Sine1d);
        assert_eq!(c.cycles, 10);
        assert_eq!(c.strategies.len(), 5);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = toml::from_str::<RunConfig>("cycels = 3\n[oracle]\nfamily = \"sine1d\"\n").unwrap_err();
        assert!(err.to_string().contains("cycels"), "{err}");
    }

    #[test]
    fn resolve_materializes_defaults() {
        let r = RunConfig::new(OracleSpec::new(Family::Sine2d)).resolve().unwrap();
        assert_eq!(r.oracle.pool_size, Some(500));
        assert_eq!(r.warm_start, Some(5));
        assert_eq!(r.kernel_grid.as_ref().unwrap().len(), 15);
        assert_eq!(r.resolve().unwrap(), r);
    }

    #[test]
    fn overrides() {
        let mut c = RunConfig::new(OracleSpec::new(Family::Sine1d));
        c.apply(&Overrides {
            seeds: vec![4, 5],
            strategies: vec![Strategy::Random],
            cycles: Some(2),
            batch_size: None,
            threshold: Some(Threshold::Absolute(0.5)),
        });
        assert_eq!((c.seeds.clone(), c.strategies.clone(), c.cycles, c.batch_size), (vec![4, 5], vec![Strategy::Random], 2, 5));
        assert_eq!(c.threshold, Threshold::Absolute(0.5));
    }
}
