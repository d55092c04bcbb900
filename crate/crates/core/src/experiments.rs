//! Experiment drivers: recovery phase diagrams, coherence tables, the
//! surface-reaction study and recovery from external sample pools.
//!
//! Every random draw comes from a sub-seed derived from the master seed and
//! the task's indices, and results are gathered in task order, so the output
//! does not depend on the thread count.

use std::io::Write;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coherence::{estimate_mu, theoretical_mu_bound, CoherenceEstimate, MuBound};
use crate::crossval::{cross_validate_delta, final_recovery};
use crate::error::{invalid, PceError, Result};
use crate::l1_solver::{assemble, design_matrix, solve_bpdn_matrix, SolverOptions};
use crate::model_problems::{
    manufacture_signal, reference_coefficients_converged, reference_ladder, surface_reaction_qoi,
    surface_reaction_values, ExternalSampleSet, ReferenceExpansion, SurfaceReactionConfig,
};
use crate::poly_basis::{BasisSpec, Family};
use crate::rng::{derive_seed, sub_rng};
use crate::sampler::{sample, SamplingStrategy, StrategyKind};

// Stream tags keep the seeds of different kinds of draws apart.
const TAG_BATCH: u64 = 1;
const TAG_SIGNAL: u64 = 2;
const TAG_FOLDS: u64 = 3;
const TAG_BOOTSTRAP: u64 = 4;
const TAG_POOL: u64 = 5;

fn default_strategies() -> Vec<SamplingStrategy> {
    vec![
        SamplingStrategy::standard(),
        SamplingStrategy::asymptotic(),
        SamplingStrategy::from_kind(StrategyKind::CoherenceOptimal),
    ]
}

fn rel_l2(x: &[f64], truth: &[f64]) -> f64 {
    let num: f64 = x.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = truth.iter().map(|b| b * b).sum();
    (num / den).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhaseDiagramConfig {
    pub family: Family,
    pub dim: usize,
    pub order: u32,
    pub strategies: Vec<SamplingStrategy>,
    /// Number of `N/P` columns, evenly spaced on `[0.1, 1]`.
    pub n_steps: usize,
    /// Number of `s/N` rows, evenly spaced on `[0.1, 1]`.
    pub s_steps: usize,
    pub replications: usize,
    /// Success means `‖ĉ − c‖₂/‖c‖₂ ≤ success_threshold`.
    pub success_threshold: f64,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for PhaseDiagramConfig {
    fn default() -> Self {
        PhaseDiagramConfig {
            family: Family::Hermite,
            dim: 2,
            order: 16,
            strategies: default_strategies(),
            n_steps: 30,
            s_steps: 30,
            replications: 50,
            success_threshold: 0.01,
            seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

impl PhaseDiagramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 2 || self.s_steps < 2 {
            return invalid("phase diagrams need at least two steps on each axis");
        }
        if self.replications == 0 {
            return invalid("phase diagrams need at least one replication");
        }
        if !(self.success_threshold > 0.0) {
            return invalid("success threshold must be positive");
        }
        if self.strategies.is_empty() {
            return invalid("no sampling strategies given");
        }
        self.strategies.iter().try_for_each(SamplingStrategy::validate)
    }
}

/// `steps` evenly spaced values from 0.1 to 1.
pub fn grid_axis(steps: usize) -> Vec<f64> {
    (0..steps).map(|i| 0.1 + 0.9 * i as f64 / (steps - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub config: PhaseDiagramConfig,
    pub n_over_p: Vec<f64>,
    pub s_over_n: Vec<f64>,
    /// `N` of each column.
    pub sample_counts: Vec<usize>,
    /// `s` of each cell, row-major (`s/N` rows, `N/P` columns); `None` where
    /// `round(s/N · N) < 1`.
    pub sparsity: Vec<Option<usize>>,
    /// Per strategy, success fraction of each cell in the same layout.
    pub success: Vec<Vec<Option<f64>>>,
    /// Replications lost to sampling or solver errors, per strategy.
    pub failed_replications: Vec<usize>,
    /// Solves that hit the iteration budget, per strategy.
    pub unconverged: Vec<usize>,
    pub errors: Vec<String>,
}

impl PhaseDiagram {
    pub fn rows(&self) -> usize {
        self.s_over_n.len()
    }

    pub fn cols(&self) -> usize {
        self.n_over_p.len()
    }

    pub fn cell(&self, strategy: usize, row: usize, col: usize) -> Option<f64> {
        self.success[strategy][row * self.cols() + col]
    }

    pub fn complete(&self) -> bool {
        self.failed_replications.iter().all(|&f| f == 0)
    }

    /// Mean success over all defined cells.
    pub fn area_under_success(&self, strategy: usize) -> f64 {
        let vals: Vec<f64> = self.success[strategy].iter().flatten().copied().collect();
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    }

    /// Defined cells where the strategies are neither all at 0 nor all at 1.
    pub fn transition_band(&self) -> Vec<usize> {
        (0..self.sparsity.len())
            .filter(|&c| {
                let vals: Vec<f64> = self.success.iter().filter_map(|s| s[c]).collect();
                vals.len() == self.success.len() && !vals.iter().all(|&v| v == 0.0) && !vals.iter().all(|&v| v == 1.0)
            })
            .collect()
    }

    /// Mean success of one strategy over a set of cells.
    pub fn mean_over(&self, strategy: usize, cells: &[usize]) -> f64 {
        let vals: Vec<f64> = cells.iter().filter_map(|&c| self.success[strategy][c]).collect();
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    }

    /// Success matrix of one strategy: `#` lines with the run description and
    /// `preamble`, then a header of `N/P` values and one row per `s/N`.
    /// Undefined cells are left empty.
    pub fn write_csv<W: Write>(&self, strategy: usize, mut out: W, preamble: &[String]) -> Result<()> {
        let cfg = &self.config;
        writeln!(out, "# family: {}", cfg.family)?;
        writeln!(out, "# d: {}", cfg.dim)?;
        writeln!(out, "# p: {}", cfg.order)?;
        writeln!(out, "# strategy: {}", cfg.strategies[strategy])?;
        writeln!(out, "# replications: {}", cfg.replications)?;
        writeln!(out, "# success_threshold: {}", cfg.success_threshold)?;
        writeln!(out, "# seed: {}", cfg.seed)?;
        writeln!(out, "# rows: s/N, columns: N/P")?;
        for line in preamble {
            writeln!(out, "# {line}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["s_over_n".to_string()];
        header.extend(self.n_over_p.iter().map(|v| v.to_string()));
        w.write_record(&header)?;
        for (row, sr) in self.s_over_n.iter().enumerate() {
            let mut rec = vec![sr.to_string()];
            rec.extend(
                (0..self.cols()).map(|col| self.cell(strategy, row, col).map(|v| v.to_string()).unwrap_or_default()),
            );
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Outcome of one (column, replication) task for one strategy: per row,
/// `Some(success)` or `None` where the cell is undefined.
type ColumnOutcome = std::result::Result<(Vec<Option<bool>>, usize), String>;

/// Success probabilities of δ = 0 recovery over the `(N/P, s/N)` grid.
///
/// All rows of a column share one point set per (strategy, replication);
/// each cell draws its own signal, the same for every strategy.
pub fn run_phase_diagram(config: &PhaseDiagramConfig) -> Result<PhaseDiagram> {
    config.validate()?;
    let spec = BasisSpec::new(config.family, config.dim, config.order)?;
    let p = spec.len();
    let n_over_p = grid_axis(config.n_steps);
    let s_over_n = grid_axis(config.s_steps);
    let sample_counts: Vec<usize> = n_over_p
        .iter()
        .map(|r| ((r * p as f64).round() as usize).max(1))
        .collect();
    let (rows, cols) = (s_over_n.len(), n_over_p.len());
    let mut sparsity = vec![None; rows * cols];
    for row in 0..rows {
        for col in 0..cols {
            let s = (s_over_n[row] * sample_counts[col] as f64).round() as usize;
            sparsity[row * cols + col] = (s >= 1 && s <= p).then_some(s);
        }
    }

    let tasks: Vec<(usize, usize)> = (0..cols)
        .flat_map(|c| (0..config.replications).map(move |r| (c, r)))
        .collect();
    let outcomes: Vec<Vec<ColumnOutcome>> = tasks
        .par_iter()
        .map(|&(col, rep)| {
            config
                .strategies
                .iter()
                .enumerate()
                .map(|(k, strategy)| phase_column(config, &spec, strategy, k, col, rep, sample_counts[col], &sparsity))
                .collect()
        })
        .collect();

    let nk = config.strategies.len();
    let mut hits = vec![vec![0usize; rows * cols]; nk];
    let mut trials = vec![vec![0usize; rows * cols]; nk];
    let mut failed_replications = vec![0; nk];
    let mut unconverged = vec![0; nk];
    let mut errors = Vec::new();
    for (&(col, rep), per_strategy) in tasks.iter().zip(&outcomes) {
        for (k, outcome) in per_strategy.iter().enumerate() {
            match outcome {
                Ok((cells, nc)) => {
                    unconverged[k] += nc;
                    for (row, cell) in cells.iter().enumerate() {
                        if let Some(ok) = cell {
                            trials[k][row * cols + col] += 1;
                            hits[k][row * cols + col] += *ok as usize;
                        }
                    }
                }
                Err(e) => {
                    failed_replications[k] += 1;
                    errors.push(format!("{} column {col} replication {rep}: {e}", config.strategies[k]));
                }
            }
        }
    }
    let success = (0..nk)
        .map(|k| {
            (0..rows * cols)
                .map(|c| match (sparsity[c], trials[k][c]) {
                    (Some(_), t) if t > 0 => Some(hits[k][c] as f64 / t as f64),
                    _ => None,
                })
                .collect()
        })
        .collect();
    Ok(PhaseDiagram {
        config: config.clone(),
        n_over_p,
        s_over_n,
        sample_counts,
        sparsity,
        success,
        failed_replications,
        unconverged,
        errors,
    })
}

#[allow(clippy::too_many_arguments)]
fn phase_column(
    config: &PhaseDiagramConfig,
    spec: &BasisSpec,
    strategy: &SamplingStrategy,
    k: usize,
    col: usize,
    rep: usize,
    n: usize,
    sparsity: &[Option<usize>],
) -> ColumnOutcome {
    let cols = config.n_steps;
    let seed = config.seed;
    let batch = sample(
        strategy,
        spec,
        n,
        derive_seed(seed, &[TAG_BATCH, k as u64, col as u64, rep as u64]),
    )
    .map_err(|e| e.to_string())?;
    // Rows are c·w(ξ)ψ(ξ), so the weighted data of a signal c is simply A c.
    let system = assemble(&batch, &vec![0.0; n]).map_err(|e| e.to_string())?;
    let mut b = vec![0.0; n];
    let mut unconverged = 0;
    let mut cells = Vec::with_capacity(config.s_steps);
    for row in 0..config.s_steps {
        let Some(s) = sparsity[row * cols + col] else {
            cells.push(None);
            continue;
        };
        let signal = manufacture_signal(
            spec,
            s,
            derive_seed(seed, &[TAG_SIGNAL, col as u64, row as u64, rep as u64]),
        )
        .map_err(|e| e.to_string())?;
        system.matrix.matvec(&signal.coefficients, &mut b);
        let res = solve_bpdn_matrix(&system.matrix, &b, 0.0, &config.solver, None).map_err(|e| e.to_string())?;
        unconverged += !res.converged as usize;
        cells.push(Some(
            rel_l2(&res.coefficients, &signal.coefficients) <= config.success_threshold,
        ));
    }
    Ok((cells, unconverged))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoherenceTableConfig {
    pub family: Family,
    pub dims: Vec<usize>,
    pub orders: Vec<u32>,
    pub strategies: Vec<SamplingStrategy>,
    pub draws: usize,
    pub seed: u64,
}

impl Default for CoherenceTableConfig {
    fn default() -> Self {
        CoherenceTableConfig {
            family: Family::Hermite,
            dims: vec![2],
            orders: vec![4, 8, 16],
            strategies: default_strategies(),
            draws: 100_000,
            seed: 0,
        }
    }
}

/// Empirical coherence and the matching closed-form bound for every
/// (d, p, strategy) combination, in that nesting order.
pub fn run_coherence_table(config: &CoherenceTableConfig) -> Result<Vec<(CoherenceEstimate, Option<MuBound>)>> {
    let mut tasks = Vec::new();
    for &d in &config.dims {
        for &p in &config.orders {
            for (k, s) in config.strategies.iter().enumerate() {
                tasks.push((d, p, k, *s));
            }
        }
    }
    tasks
        .par_iter()
        .map(|&(d, p, k, strategy)| {
            let spec = BasisSpec::new(config.family, d, p)?;
            let seed = derive_seed(config.seed, &[d as u64, p as u64, k as u64]);
            let est = estimate_mu(&spec, &strategy, config.draws, seed)?;
            Ok((est, theoretical_mu_bound(&spec, &strategy)))
        })
        .collect()
}

/// Mean, sample standard deviation and bootstrap standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub mean_std: f64,
}

/// Summary of `values`; the standard error comes from `resamples` bootstrap
/// means. A single value gives zero spreads.
pub fn bootstrap_summary(values: &[f64], resamples: usize, seed: u64) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary {
            mean: f64::NAN,
            std: f64::NAN,
            mean_std: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Summary {
            mean,
            std: 0.0,
            mean_std: 0.0,
        };
    }
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut rng = crate::rng::rng_from_seed(seed);
    let means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    let mm = means.iter().sum::<f64>() / resamples.max(1) as f64;
    let mean_std = if resamples > 1 {
        (means.iter().map(|v| (v - mm).powi(2)).sum::<f64>() / (resamples - 1) as f64).sqrt()
    } else {
        0.0
    };
    Summary { mean, std, mean_std }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEntry {
    pub strategy: StrategyKind,
    pub n: usize,
    pub replications: usize,
    pub completed: usize,
    /// Relative coefficient error (surface study) or relative held-out
    /// validation error (external pools).
    pub error: Summary,
    pub delta_star: Summary,
    /// Relative coefficient error against known coefficients, when given.
    pub coefficient_error: Option<Summary>,
    /// Set when the spreads are degenerate (one replication).
    pub warning: Option<String>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub resamples: usize,
    pub entries: Vec<BootstrapEntry>,
}

impl BootstrapReport {
    pub fn complete(&self) -> bool {
        self.entries.iter().all(|e| e.completed == e.replications)
    }

    pub fn entry(&self, strategy: StrategyKind, n: usize) -> Option<&BootstrapEntry> {
        self.entries.iter().find(|e| e.strategy == strategy && e.n == n)
    }

    pub fn write_csv<W: Write>(&self, mut out: W, preamble: &[String]) -> Result<()> {
        writeln!(out, "# bootstrap_resamples: {}", self.resamples)?;
        for line in preamble {
            writeln!(out, "# {line}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "strategy",
            "n",
            "replications",
            "completed",
            "error_mean",
            "error_std",
            "error_mean_std",
            "delta_star_mean",
            "delta_star_std",
            "delta_star_mean_std",
            "coef_error_mean",
            "coef_error_std",
            "warning",
        ])?;
        for e in &self.entries {
            let (cm, cs) = e
                .coefficient_error
                .map(|s| (s.mean.to_string(), s.std.to_string()))
                .unwrap_or_default();
            w.write_record([
                e.strategy.to_string(),
                e.n.to_string(),
                e.replications.to_string(),
                e.completed.to_string(),
                e.error.mean.to_string(),
                e.error.std.to_string(),
                e.error.mean_std.to_string(),
                e.delta_star.mean.to_string(),
                e.delta_star.std.to_string(),
                e.delta_star.mean_std.to_string(),
                cm,
                cs,
                e.warning.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-replication outcome: (error, δ⋆, coefficient error).
type Replication = std::result::Result<(f64, f64, Option<f64>), String>;

fn summarize(strategy: StrategyKind, n: usize, results: &[Replication], resamples: usize, seed: u64) -> BootstrapEntry {
    let ok: Vec<&(f64, f64, Option<f64>)> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let errors: Vec<f64> = ok.iter().map(|r| r.0).collect();
    let deltas: Vec<f64> = ok.iter().map(|r| r.1).collect();
    let coef: Vec<f64> = ok.iter().filter_map(|r| r.2).collect();
    BootstrapEntry {
        strategy,
        n,
        replications: results.len(),
        completed: ok.len(),
        error: bootstrap_summary(&errors, resamples, derive_seed(seed, &[0])),
        delta_star: bootstrap_summary(&deltas, resamples, derive_seed(seed, &[1])),
        coefficient_error: (!coef.is_empty()).then(|| bootstrap_summary(&coef, resamples, derive_seed(seed, &[2]))),
        warning: (results.len() == 1).then(|| "single replication: spreads are reported as 0".to_string()),
        failures: results.iter().filter_map(|r| r.as_ref().err().cloned()).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurfaceStudyConfig {
    pub order: u32,
    pub sample_counts: Vec<usize>,
    pub strategies: Vec<SamplingStrategy>,
    pub replications: usize,
    pub seed: u64,
    pub bootstrap_resamples: usize,
    pub solver: SolverOptions,
    pub reaction: SurfaceReactionConfig,
    /// Nodes per dimension of the reference quadrature rules.
    pub quadrature_ladder: Vec<usize>,
    pub quadrature_tol: f64,
}

impl Default for SurfaceStudyConfig {
    fn default() -> Self {
        SurfaceStudyConfig {
            order: 32,
            sample_counts: vec![150, 250, 400],
            strategies: default_strategies(),
            replications: 20,
            seed: 0,
            bootstrap_resamples: 1000,
            solver: SolverOptions::default(),
            reaction: SurfaceReactionConfig::default(),
            quadrature_ladder: reference_ladder(),
            quadrature_tol: 1e-8,
        }
    }
}

impl SurfaceStudyConfig {
    pub fn spec(&self) -> Result<BasisSpec> {
        BasisSpec::new(Family::Hermite, 2, self.order)
    }
}

/// Reference coefficients of the surface-reaction QoI from the quadrature ladder.
pub fn surface_reference(config: &SurfaceStudyConfig) -> Result<ReferenceExpansion> {
    let spec = config.spec()?;
    let reaction = config.reaction;
    reference_coefficients_converged(
        &spec,
        move |xi: &[f64]| surface_reaction_qoi(xi, &reaction),
        &config.quadrature_ladder,
        config.quadrature_tol,
    )
}

/// Cross-validated recovery of the surface-reaction expansion, compared with
/// `reference` in relative ℓ2 norm.
pub fn run_surface_reaction_study(config: &SurfaceStudyConfig, reference: &[f64]) -> Result<BootstrapReport> {
    let spec = config.spec()?;
    if reference.len() != spec.len() {
        return Err(PceError::DimensionMismatch {
            expected: spec.len(),
            got: reference.len(),
        });
    }
    if config.replications == 0 {
        return invalid("the study needs at least one replication");
    }
    let mut tasks = Vec::new();
    for k in 0..config.strategies.len() {
        for ni in 0..config.sample_counts.len() {
            for rep in 0..config.replications {
                tasks.push((k, ni, rep));
            }
        }
    }
    let results: Vec<Replication> = tasks
        .par_iter()
        .map(|&(k, ni, rep)| {
            let path = [k as u64, ni as u64, rep as u64];
            let run = || -> Result<(f64, f64, Option<f64>)> {
                let n = config.sample_counts[ni];
                let batch = sample(
                    &config.strategies[k],
                    &spec,
                    n,
                    derive_seed(config.seed, &[&[TAG_BATCH][..], &path].concat()),
                )?;
                let u = surface_reaction_values(&batch, &config.reaction)?;
                let cv = cross_validate_delta(
                    &batch,
                    &u,
                    &config.solver,
                    derive_seed(config.seed, &[&[TAG_FOLDS][..], &path].concat()),
                )?;
                let rec = final_recovery(&batch, &u, cv.delta_star, &config.solver)?;
                Ok((rel_l2(&rec.coefficients, reference), cv.delta_star, None))
            };
            run().map_err(|e| e.to_string())
        })
        .collect();
    let mut entries = Vec::new();
    for (k, strategy) in config.strategies.iter().enumerate() {
        for (ni, &n) in config.sample_counts.iter().enumerate() {
            let start = (k * config.sample_counts.len() + ni) * config.replications;
            let seed = derive_seed(config.seed, &[TAG_BOOTSTRAP, k as u64, ni as u64]);
            entries.push(summarize(
                strategy.kind,
                n,
                &results[start..start + config.replications],
                config.bootstrap_resamples,
                seed,
            ));
        }
    }
    Ok(BootstrapReport {
        resamples: config.bootstrap_resamples,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExternalRecoveryConfig {
    pub family: Family,
    pub dim: usize,
    pub order: u32,
    pub strategy: SamplingStrategy,
    pub sample_counts: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub bootstrap_resamples: usize,
    pub solver: SolverOptions,
}

impl Default for ExternalRecoveryConfig {
    fn default() -> Self {
        ExternalRecoveryConfig {
            family: Family::Hermite,
            dim: 2,
            order: 4,
            strategy: SamplingStrategy::standard(),
            sample_counts: vec![20],
            replications: 10,
            seed: 0,
            bootstrap_resamples: 1000,
            solver: SolverOptions::default(),
        }
    }
}

/// Subsample the pool without replacement, cross-validate and recover; the
/// error is the relative residual on the pool rows left out, and when
/// `truth` is given also the relative coefficient error.
pub fn run_external_recovery(
    pool: &ExternalSampleSet,
    config: &ExternalRecoveryConfig,
    truth: Option<&[f64]>,
) -> Result<BootstrapReport> {
    let spec = BasisSpec::new(config.family, config.dim, config.order)?;
    if config.replications == 0 {
        return invalid("external recovery needs at least one replication");
    }
    if let Some(&n) = config.sample_counts.iter().max() {
        if n > pool.len() {
            return Err(PceError::PoolExhausted {
                available: pool.len(),
                requested: n,
            });
        }
    }
    if let Some(t) = truth {
        if t.len() != spec.len() {
            return Err(PceError::DimensionMismatch {
                expected: spec.len(),
                got: t.len(),
            });
        }
    }
    let full = pool.to_batch(&spec, &config.strategy)?;
    let psi_pool = design_matrix(&spec, &pool.points)?;
    let tasks: Vec<(usize, usize)> = (0..config.sample_counts.len())
        .flat_map(|ni| (0..config.replications).map(move |r| (ni, r)))
        .collect();
    let results: Vec<Replication> = tasks
        .par_iter()
        .map(|&(ni, rep)| {
            let run = || -> Result<(f64, f64, Option<f64>)> {
                let n = config.sample_counts[ni];
                let mut rng = sub_rng(config.seed, &[TAG_POOL, ni as u64, rep as u64]);
                let picked = index::sample(&mut rng, pool.len(), n).into_vec();
                let mut in_sample = vec![false; pool.len()];
                for &i in &picked {
                    in_sample[i] = true;
                }
                let batch = full.subset(&picked);
                let u: Vec<f64> = picked.iter().map(|&i| pool.values[i]).collect();
                let cv = cross_validate_delta(
                    &batch,
                    &u,
                    &config.solver,
                    derive_seed(config.seed, &[TAG_FOLDS, ni as u64, rep as u64]),
                )?;
                let rec = final_recovery(&batch, &u, cv.delta_star, &config.solver)?;
                let (mut num, mut den) = (0.0, 0.0);
                let mut pred = vec![0.0; pool.len()];
                psi_pool.matvec(&rec.coefficients, &mut pred);
                for i in (0..pool.len()).filter(|&i| !in_sample[i]) {
                    num += (pred[i] - pool.values[i]).powi(2);
                    den += pool.values[i].powi(2);
                }
                let holdout = if den > 0.0 { (num / den).sqrt() } else { f64::NAN };
                Ok((holdout, cv.delta_star, truth.map(|t| rel_l2(&rec.coefficients, t))))
            };
            run().map_err(|e| e.to_string())
        })
        .collect();
    let entries = config
        .sample_counts
        .iter()
        .enumerate()
        .map(|(ni, &n)| {
            let start = ni * config.replications;
            let seed = derive_seed(config.seed, &[TAG_BOOTSTRAP, ni as u64]);
            summarize(
                config.strategy.kind,
                n,
                &results[start..start + config.replications],
                config.bootstrap_resamples,
                seed,
            )
        })
        .collect();
    Ok(BootstrapReport {
        resamples: config.bootstrap_resamples,
        entries,
    })
}
