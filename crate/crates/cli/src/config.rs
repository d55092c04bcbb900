//! TOML config files of the subcommands. Every field has a default, so an
//! empty file runs the desk-scale version of each experiment.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use sparse_pce::experiments::{CoherenceTableConfig, ExternalRecoveryConfig, PhaseDiagramConfig, SurfaceStudyConfig};
use sparse_pce::l1_solver::SolverOptions;
use sparse_pce::model_problems::{ExternalSampleSet, SurfaceReactionConfig};
use sparse_pce::{BasisSpec, Family, McmcConfig, SamplingStrategy, StrategyKind};

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Paths in a config file are relative to the file's directory.
pub fn resolve(config: &Path, path: &Path) -> PathBuf {
    match config.parent() {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

const ALL_STRATEGIES: [StrategyKind; 3] = [
    StrategyKind::Standard,
    StrategyKind::Asymptotic,
    StrategyKind::CoherenceOptimal,
];

/// Strategy of the given kind; coherence-optimal sampling takes the `[mcmc]` table.
fn with_chain(kind: StrategyKind, mcmc: McmcConfig) -> SamplingStrategy {
    match kind {
        StrategyKind::CoherenceOptimal => SamplingStrategy::coherence_optimal(mcmc),
        other => SamplingStrategy::from_kind(other),
    }
}

fn with_chains(kinds: &[StrategyKind], mcmc: McmcConfig) -> Vec<SamplingStrategy> {
    kinds.iter().map(|&k| with_chain(k, mcmc)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoherenceFile {
    pub family: Family,
    pub dims: Vec<usize>,
    pub orders: Vec<u32>,
    pub strategies: Vec<StrategyKind>,
    pub draws: usize,
    pub seed: u64,
    pub mcmc: McmcConfig,
}

impl Default for CoherenceFile {
    fn default() -> Self {
        CoherenceFile {
            family: Family::Hermite,
            dims: vec![2],
            orders: vec![4, 8, 16],
            strategies: ALL_STRATEGIES.to_vec(),
            draws: 100_000,
            seed: 0,
            mcmc: McmcConfig::default(),
        }
    }
}

impl CoherenceFile {
    pub fn to_config(&self) -> CoherenceTableConfig {
        CoherenceTableConfig {
            family: self.family,
            dims: self.dims.clone(),
            orders: self.orders.clone(),
            strategies: with_chains(&self.strategies, self.mcmc),
            draws: self.draws,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseFile {
    pub family: Family,
    pub dim: usize,
    pub order: u32,
    pub strategies: Vec<StrategyKind>,
    pub n_steps: usize,
    pub s_steps: usize,
    pub replications: usize,
    pub success_threshold: f64,
    pub seed: u64,
    pub mcmc: McmcConfig,
    pub solver: SolverOptions,
}

impl Default for PhaseFile {
    fn default() -> Self {
        let d = PhaseDiagramConfig::default();
        PhaseFile {
            family: d.family,
            dim: d.dim,
            order: d.order,
            strategies: ALL_STRATEGIES.to_vec(),
            n_steps: d.n_steps,
            s_steps: d.s_steps,
            replications: d.replications,
            success_threshold: d.success_threshold,
            seed: d.seed,
            mcmc: McmcConfig::default(),
            solver: d.solver,
        }
    }
}

impl PhaseFile {
    pub fn to_config(&self) -> PhaseDiagramConfig {
        PhaseDiagramConfig {
            family: self.family,
            dim: self.dim,
            order: self.order,
            strategies: with_chains(&self.strategies, self.mcmc),
            n_steps: self.n_steps,
            s_steps: self.s_steps,
            replications: self.replications,
            success_threshold: self.success_threshold,
            seed: self.seed,
            solver: self.solver,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceFile {
    pub order: u32,
    pub sample_counts: Vec<usize>,
    pub strategies: Vec<StrategyKind>,
    pub replications: usize,
    pub seed: u64,
    pub bootstrap_resamples: usize,
    pub quadrature_ladder: Vec<usize>,
    pub quadrature_tol: f64,
    /// Precomputed reference coefficients; skips the quadrature ladder.
    pub reference: Option<PathBuf>,
    pub mcmc: McmcConfig,
    pub solver: SolverOptions,
    pub reaction: SurfaceReactionConfig,
}

impl Default for SurfaceFile {
    fn default() -> Self {
        let d = SurfaceStudyConfig::default();
        SurfaceFile {
            order: d.order,
            sample_counts: d.sample_counts,
            strategies: ALL_STRATEGIES.to_vec(),
            replications: d.replications,
            seed: d.seed,
            bootstrap_resamples: d.bootstrap_resamples,
            quadrature_ladder: d.quadrature_ladder,
            quadrature_tol: d.quadrature_tol,
            reference: None,
            mcmc: McmcConfig::default(),
            solver: d.solver,
            reaction: d.reaction,
        }
    }
}

impl SurfaceFile {
    pub fn to_config(&self) -> SurfaceStudyConfig {
        SurfaceStudyConfig {
            order: self.order,
            sample_counts: self.sample_counts.clone(),
            strategies: with_chains(&self.strategies, self.mcmc),
            replications: self.replications,
            seed: self.seed,
            bootstrap_resamples: self.bootstrap_resamples,
            solver: self.solver,
            reaction: self.reaction,
            quadrature_ladder: self.quadrature_ladder.clone(),
            quadrature_tol: self.quadrature_tol,
        }
    }
}

/// Family, order and strategy may be omitted when the sample file's
/// metadata lines carry them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExternalFile {
    pub samples: PathBuf,
    /// Known coefficients, as written by `sample-export`.
    pub truth: Option<PathBuf>,
    pub family: Option<Family>,
    pub order: Option<u32>,
    pub strategy: Option<StrategyKind>,
    pub sample_counts: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub bootstrap_resamples: usize,
    pub mcmc: McmcConfig,
    pub solver: SolverOptions,
}

impl Default for ExternalFile {
    fn default() -> Self {
        let d = ExternalRecoveryConfig::default();
        ExternalFile {
            samples: PathBuf::from("samples.csv"),
            truth: None,
            family: None,
            order: None,
            strategy: None,
            sample_counts: d.sample_counts,
            replications: d.replications,
            seed: d.seed,
            bootstrap_resamples: d.bootstrap_resamples,
            mcmc: McmcConfig::default(),
            solver: d.solver,
        }
    }
}

fn missing(what: &str) -> anyhow::Error {
    anyhow::anyhow!("`{what}` is neither in the config nor in the sample file metadata")
}

impl ExternalFile {
    pub fn to_config(&self, pool: &ExternalSampleSet) -> Result<ExternalRecoveryConfig> {
        let meta = &pool.metadata;
        let kind = self.strategy.or(meta.strategy).ok_or_else(|| missing("strategy"))?;
        Ok(ExternalRecoveryConfig {
            family: self.family.or(meta.family).ok_or_else(|| missing("family"))?,
            dim: pool.dim,
            order: self.order.or(meta.order).ok_or_else(|| missing("order"))?,
            strategy: with_chain(kind, self.mcmc),
            sample_counts: self.sample_counts.clone(),
            replications: self.replications,
            seed: self.seed,
            bootstrap_resamples: self.bootstrap_resamples,
            solver: self.solver,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Qoi {
    None,
    SurfaceReaction,
    /// Random sparse expansion with `sparsity` terms.
    Manufactured,
}

/// Either a sample file (`samples`) or a fresh batch of `n` points with
/// values from `qoi`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossvalFile {
    pub samples: Option<PathBuf>,
    pub family: Option<Family>,
    pub dim: usize,
    pub order: Option<u32>,
    pub strategy: Option<StrategyKind>,
    pub n: usize,
    pub qoi: Qoi,
    pub sparsity: usize,
    pub seed: u64,
    pub mcmc: McmcConfig,
    pub solver: SolverOptions,
    pub reaction: SurfaceReactionConfig,
}

impl Default for CrossvalFile {
    fn default() -> Self {
        CrossvalFile {
            samples: None,
            family: None,
            dim: 2,
            order: None,
            strategy: None,
            n: 250,
            qoi: Qoi::SurfaceReaction,
            sparsity: 10,
            seed: 0,
            mcmc: McmcConfig::default(),
            solver: SolverOptions::default(),
            reaction: SurfaceReactionConfig::default(),
        }
    }
}

impl CrossvalFile {
    pub fn spec(&self) -> Result<BasisSpec> {
        Ok(BasisSpec::new(
            self.family.unwrap_or(Family::Hermite),
            self.dim,
            self.order.unwrap_or(32),
        )?)
    }

    pub fn strategy(&self) -> SamplingStrategy {
        with_chain(self.strategy.unwrap_or(StrategyKind::Standard), self.mcmc)
    }

    pub fn spec_for(&self, pool: &ExternalSampleSet) -> Result<BasisSpec> {
        let family = self.family.or(pool.metadata.family).ok_or_else(|| missing("family"))?;
        let order = self.order.or(pool.metadata.order).ok_or_else(|| missing("order"))?;
        Ok(BasisSpec::new(family, pool.dim, order)?)
    }

    pub fn strategy_for(&self, pool: &ExternalSampleSet) -> Result<SamplingStrategy> {
        let kind = self
            .strategy
            .or(pool.metadata.strategy)
            .ok_or_else(|| missing("strategy"))?;
        Ok(with_chain(kind, self.mcmc))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleExportFile {
    pub family: Family,
    pub dim: usize,
    pub order: u32,
    pub strategy: StrategyKind,
    pub n: usize,
    pub qoi: Qoi,
    pub sparsity: usize,
    pub seed: u64,
    pub mcmc: McmcConfig,
    pub reaction: SurfaceReactionConfig,
}

impl Default for SampleExportFile {
    fn default() -> Self {
        SampleExportFile {
            family: Family::Hermite,
            dim: 2,
            order: 4,
            strategy: StrategyKind::Standard,
            n: 100,
            qoi: Qoi::None,
            sparsity: 3,
            seed: 0,
            mcmc: McmcConfig::default(),
            reaction: SurfaceReactionConfig::default(),
        }
    }
}

impl SampleExportFile {
    pub fn spec(&self) -> Result<BasisSpec> {
        Ok(BasisSpec::new(self.family, self.dim, self.order)?)
    }

    pub fn strategy(&self) -> SamplingStrategy {
        with_chain(self.strategy, self.mcmc)
    }
}
